//! Nelder-Mead simplex minimization with dimension-adaptive coefficients.
//!
//! Expansion, contraction and shrink factors follow the Gao-Han adaptive
//! scheme, which keeps the simplex from collapsing prematurely in the
//! moderately high-dimensional coefficient spaces this crate optimizes
//! over. Objectives may return non-finite values; they are treated as
//! worse than any finite value.

#[derive(Debug, Clone)]
pub struct NmOptions {
    pub max_evals: usize,
    /// Convergence threshold: stop once two consecutive cycles of d+1
    /// evaluations each improve the best value by less than this.
    pub ftol: f64,
    /// Relative step for the initial simplex.
    pub step_rel: f64,
    /// Absolute step where a coordinate is (near) zero.
    pub step_abs: f64,
    /// Optional signed per-coordinate steps overriding the relative rule,
    /// for callers that know which directions matter from the start.
    pub steps: Option<Vec<f64>>,
}

impl Default for NmOptions {
    fn default() -> Self {
        NmOptions { max_evals: 20_000, ftol: 1e-8, step_rel: 0.05, step_abs: 0.02, steps: None }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub iterations: usize,
    pub converged: bool,
}

fn lift(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::MAX
    }
}

pub fn nelder_mead(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    opts: &NmOptions,
) -> OptimResult {
    let d = x0.len();
    assert!(d >= 1, "cannot optimize over zero variables");
    let df = d as f64;
    // Gao-Han adaptive coefficients.
    let alpha = 1.0;
    let beta = 1.0 + 2.0 / df;
    let gamma = 0.75 - 1.0 / (2.0 * df);
    let delta = if d == 1 { 0.5 } else { 1.0 - 1.0 / df };

    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        lift(f(x))
    };

    if let Some(steps) = &opts.steps {
        assert_eq!(steps.len(), d, "per-coordinate steps must match the dimension");
    }
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    simplex.push(x0.to_vec());
    for i in 0..d {
        let mut v = x0.to_vec();
        let h = match &opts.steps {
            Some(steps) => steps[i],
            None if v[i].abs() > 1e-8 => opts.step_rel * v[i].abs(),
            None => opts.step_abs,
        };
        v[i] += h;
        simplex.push(v);
    }
    let mut fv: Vec<f64> = simplex.iter().map(|x| eval(x, &mut evals)).collect();

    let mut iterations = 0usize;
    let mut converged = false;
    // Improvement-based stopping: the best value is sampled every d+1
    // evaluations (one simplex's worth), and three consecutive near-flat
    // cycles end the run. A single flat cycle is not enough: the simplex
    // stalls while reshaping against a constraint wall.
    let mut cycle_mark = evals;
    let mut cycle_best = f64::MAX;
    let mut slow_cycles = 0usize;
    while evals < opts.max_evals {
        iterations += 1;
        // Order the simplex: best first.
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| fv[a].total_cmp(&fv[b]));
        let reordered: Vec<Vec<f64>> = order.iter().map(|&i| simplex[i].clone()).collect();
        let refv: Vec<f64> = order.iter().map(|&i| fv[i]).collect();
        simplex = reordered;
        fv = refv;

        if evals - cycle_mark >= d + 1 {
            if cycle_best - fv[0] < opts.ftol {
                slow_cycles += 1;
                if slow_cycles >= 3 {
                    converged = true;
                    break;
                }
            } else {
                slow_cycles = 0;
            }
            cycle_mark = evals;
            cycle_best = fv[0];
        }

        // Centroid of all but the worst vertex.
        let mut cen = vec![0.0; d];
        for v in simplex.iter().take(d) {
            for (c, vi) in cen.iter_mut().zip(v) {
                *c += vi;
            }
        }
        for c in cen.iter_mut() {
            *c /= df;
        }

        let point = |t: f64| -> Vec<f64> {
            cen.iter().zip(&simplex[d]).map(|(c, w)| c + t * (c - w)).collect()
        };

        let xr = point(alpha);
        let fr = eval(&xr, &mut evals);
        if fr < fv[0] {
            let xe = point(beta);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                simplex[d] = xe;
                fv[d] = fe;
            } else {
                simplex[d] = xr;
                fv[d] = fr;
            }
        } else if fr < fv[d - 1] {
            simplex[d] = xr;
            fv[d] = fr;
        } else {
            // Contract, outside or inside depending on the reflection.
            let (xc, fc) = if fr < fv[d] {
                let xc = point(gamma);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = point(-gamma);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < fv[d].min(fr) {
                simplex[d] = xc;
                fv[d] = fc;
            } else {
                // Shrink toward the best vertex.
                for i in 1..=d {
                    let best = simplex[0].clone();
                    for (v, b) in simplex[i].iter_mut().zip(&best) {
                        *v = b + delta * (*v - b);
                    }
                    fv[i] = eval(&simplex[i].clone(), &mut evals);
                }
            }
        }
    }

    let mut besti = 0;
    for i in 1..=d {
        if fv[i] < fv[besti] {
            besti = i;
        }
    }
    OptimResult {
        x: simplex[besti].clone(),
        f: fv[besti],
        evals,
        iterations,
        converged,
    }
}
