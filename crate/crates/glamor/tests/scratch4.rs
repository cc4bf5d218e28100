//! Throwaway: Heston superquantile-totals rank agreement dry run.

use glamor::glam::{fit, FitConfig};
use glamor::data::SampleSet;
use glamor::pce::{aols, sobol_from_pce, AolsOptions};
use glamor::report::IndexKind;
use glamor::rng::{child_seed, substream, Stream};
use glamor::sensitivity::{qoi_sobol_pce, PceIndexOptions, QoiSpec};
use glamor::simulators::{empirical_superquantile, heston_eval, lhs, Heston, HestonConfig, Simulator};

fn ranks(v: &[f64]) -> Vec<usize> {
    // rank[i] = position of variable i when sorted descending
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].partial_cmp(&v[a]).unwrap());
    let mut r = vec![0; v.len()];
    for (pos, &i) in idx.iter().enumerate() {
        r[i] = pos;
    }
    r
}

#[test]
#[ignore]
fn heston_sq_dry_run() {
    let cfg = HestonConfig::desk();
    let sim = Heston::new(cfg.clone());
    let im = sim.input_model().clone();
    let oseed = 990u64;

    let t0 = std::time::Instant::now();
    let mut r = substream(oseed, Stream::Design);
    let oxs = lhs(1000, &im, &mut r);
    let mut oy = Vec::with_capacity(1000);
    for (i, x) in oxs.iter().enumerate() {
        let mut nr = substream(child_seed(oseed, 0), Stream::Simulate(i as u64));
        let mut reps: Vec<f64> = (0..1000).map(|_| heston_eval(x, &cfg, &mut nr)).collect();
        reps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        oy.push(empirical_superquantile(&reps, 0.95));
    }
    let ofit = aols(&im, &oxs, &oy, &AolsOptions::default()).unwrap();
    let orep = sobol_from_pce(&ofit.model(&im), &[]).unwrap();
    let ot: Vec<f64> = (0..6).map(|v| orep.raw(&[v], IndexKind::Total).unwrap()).collect();
    println!(
        "oracle ({:.0}s, loo {:.2e}): totals {:?} ranks {:?}",
        t0.elapsed().as_secs_f64(),
        ofit.loo,
        ot.iter().map(|v| (v * 1e3).round() / 1e3).collect::<Vec<_>>(),
        ranks(&ot)
    );

    let mut per_var: Vec<Vec<f64>> = vec![Vec::new(); 6];
    for seed in 201u64..=210 {
        let t1 = std::time::Instant::now();
        let mut r = substream(seed, Stream::Design);
        let xs = lhs(2000, &im, &mut r);
        let y: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| heston_eval(x, &cfg, &mut substream(child_seed(seed, 0), Stream::Simulate(i as u64))))
            .collect();
        let s = SampleSet::new(xs, y).unwrap();
        let (model, _) = fit(&s, &im, &FitConfig::default(), seed).unwrap();
        let opts = PceIndexOptions { n_pc: 4000, ..Default::default() };
        match qoi_sobol_pce(&model, QoiSpec::Superquantile { alpha: 0.95 }, &[], &opts, seed) {
            Ok(rep) => {
                let t: Vec<f64> = (0..6).map(|v| rep.raw(&[v], IndexKind::Total).unwrap()).collect();
                let agree = ranks(&t).iter().zip(ranks(&ot)).filter(|(a, b)| **a == *b).count();
                println!(
                    "seed {seed}: sqT {:?} ranks {:?} agree {agree} ({:.0}s)",
                    t.iter().map(|v| (v * 1e3).round() / 1e3).collect::<Vec<_>>(),
                    ranks(&t),
                    t1.elapsed().as_secs_f64()
                );
                for v in 0..6 {
                    per_var[v].push(t[v]);
                }
            }
            Err(e) => println!("seed {seed}: FAILED {e}"),
        }
    }
    let med: Vec<f64> = per_var
        .iter()
        .map(|vs| {
            let mut s = vs.clone();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if s.is_empty() { f64::NAN } else { 0.5 * (s[(s.len() - 1) / 2] + s[s.len() / 2]) }
        })
        .collect();
    let agree = ranks(&med).iter().zip(ranks(&ot)).filter(|(a, b)| **a == *b).count();
    println!(
        "median totals {:?} ranks {:?} rank agreement {agree}/6",
        med.iter().map(|v| (v * 1e3).round() / 1e3).collect::<Vec<_>>(),
        ranks(&med)
    );
}
