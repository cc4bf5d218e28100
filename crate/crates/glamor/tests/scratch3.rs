use std::collections::HashMap;
use std::time::Instant;

use glamor::data::SampleSet;
use glamor::glam::{fit, FitConfig, GlamModel, LambdaSurface, Link, Predictor};
use glamor::input::{InputModel, Marginal};
use glamor::pce::{enumerate_basis, MultiIndex};
use glamor::rng::{substream, uniform_open01, Stream};
use glamor::simulators::lhs;

fn known_model() -> GlamModel {
    let im = InputModel::new(vec![
        Marginal::Uniform { a: 0.0, b: 1.0 },
        Marginal::Uniform { a: 0.0, b: 1.0 },
    ])
    .unwrap();
    let lin = enumerate_basis(2, 1, 1.0);
    let cst = enumerate_basis(2, 0, 1.0);
    GlamModel {
        input_model: im,
        lambda: [
            LambdaSurface { link: Link::Identity, basis: lin, coefficients: vec![1.0, 0.7, -0.4] },
            LambdaSurface { link: Link::Log, basis: cst.clone(), coefficients: vec![2.0f64.ln()] },
            LambdaSurface { link: Link::Identity, basis: cst.clone(), coefficients: vec![0.1] },
            LambdaSurface { link: Link::Identity, basis: cst, coefficients: vec![0.1] },
        ],
    }
}

fn coefficient_rmse(truth: &GlamModel, fitted: &GlamModel) -> f64 {
    let mut sq = 0.0;
    let mut count = 0usize;
    for l in 0..4 {
        let mut map: HashMap<&MultiIndex, [f64; 2]> = HashMap::new();
        for (a, &c) in truth.lambda[l].basis.indices.iter().zip(&truth.lambda[l].coefficients) {
            map.entry(a).or_default()[0] = c;
        }
        for (a, &c) in fitted.lambda[l].basis.indices.iter().zip(&fitted.lambda[l].coefficients)
        {
            map.entry(a).or_default()[1] = c;
        }
        for v in map.values() {
            sq += (v[0] - v[1]) * (v[0] - v[1]);
            count += 1;
        }
    }
    (sq / count as f64).sqrt()
}

#[test]
#[ignore]
fn consistency_dry_run() {
    let truth = known_model();
    let im = truth.input_model.clone();
    let mut pred = Predictor::new(&truth).unwrap();
    let t0 = Instant::now();
    for n in [500usize, 2000, 8000] {
        let mut rmses = Vec::new();
        for seed in 0..8u64 {
            let mut r = substream(seed, Stream::Design);
            let xs = lhs(n, &im, &mut r);
            let mut ru = substream(seed, Stream::Simulate(0));
            let y: Vec<f64> =
                xs.iter().map(|x| pred.quantile(uniform_open01(&mut ru), x)).collect();
            let s = SampleSet::new(xs, y).unwrap();
            let (fitted, _) = fit(&s, &im, &FitConfig::default(), seed).unwrap();
            rmses.push(coefficient_rmse(&truth, &fitted));
        }
        rmses.sort_by(|a, b| a.total_cmp(b));
        let med = 0.5 * (rmses[3] + rmses[4]);
        println!(
            "n {n}: median rmse {med:.4} range [{:.4}, {:.4}] elapsed {:.0}s",
            rmses[0],
            rmses[7],
            t0.elapsed().as_secs_f64()
        );
    }
}
