use std::time::Instant;

use glamor::data::SampleSet;
use glamor::glam::{fit, FitConfig, Predictor};
use glamor::rng::{child_seed, substream, Stream};
use glamor::sensitivity::{classical_sobol_pce, snr, PceIndexOptions};
use glamor::simulators::{heston_eval, lhs, sir_eval, Heston, HestonConfig, Simulator, Sir, SirConfig};

#[test]
#[ignore]
fn heston_dry_run() {
    let sim = Heston::new(HestonConfig::desk());
    let im = sim.input_model().clone();
    for seed in 201u64..=210 {
        let t0 = Instant::now();
        let mut r = substream(seed, Stream::Design);
        let xs = lhs(2000, &im, &mut r);
        let y: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                heston_eval(
                    x,
                    &sim.cfg,
                    &mut substream(child_seed(seed, 0), Stream::Simulate(i as u64)),
                )
            })
            .collect();
        let t_sim = t0.elapsed().as_secs_f64();
        let s = SampleSet::new(xs, y).unwrap();
        let (model, rep) = fit(&s, &im, &FitConfig::default(), seed).unwrap();
        let t_fit = t0.elapsed().as_secs_f64() - t_sim;

        // R^2 of the fitted mean surface against the analytic mean exp(mu).
        let mut pred = Predictor::new(&model).unwrap();
        let mut r2s = substream(seed, Stream::Estimate(7));
        let xs2 = im.sample(&mut r2s, 2000);
        let mut num = 0.0;
        let mut mhat = Vec::new();
        let mut mref = Vec::new();
        let mut failures = 0usize;
        for x in &xs2 {
            let p = pred.lambda_at(x);
            match p.mean() {
                Ok(m) => {
                    mhat.push(m);
                    mref.push(x[0].exp());
                }
                Err(_) => failures += 1,
            }
        }
        let mu_ref = mref.iter().sum::<f64>() / mref.len() as f64;
        let mut den = 0.0;
        for (mh, mr) in mhat.iter().zip(&mref) {
            num += (mh - mr) * (mh - mr);
            den += (mr - mu_ref) * (mr - mu_ref);
        }
        let r2 = 1.0 - num / den;

        let opts = PceIndexOptions::default();
        let full: Vec<usize> = (0..6).collect();
        let report = classical_sobol_pce(&model, &[full.clone()], &opts, seed).unwrap();
        let closed = report.raw(&full, glamor::report::IndexKind::Closed).unwrap();
        let snr_hat = snr(&model, 10_000, seed);
        let t_all = t0.elapsed().as_secs_f64();
        println!(
            "seed {seed}: nll {:.1} bases {:?} R2 {:.3} (fail {failures}) closed {:.4} snr {:?} times sim {:.1}s fit {:.1}s total {:.1}s",
            rep.nll_final, rep.basis_sizes, r2, closed, snr_hat.map(|v| (v * 1e4).round() / 1e4), t_sim, t_fit, t_all
        );
    }
}

#[test]
#[ignore]
fn sir_dry_run() {
    let sim = Sir::new(SirConfig::default());
    let im = sim.input_model().clone();
    for seed in 301u64..=310 {
        let t0 = Instant::now();
        let mut r = substream(seed, Stream::Design);
        let xs = lhs(250, &im, &mut r);
        let y: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                sir_eval(
                    x,
                    &sim.cfg,
                    &mut substream(child_seed(seed, 0), Stream::Simulate(i as u64)),
                )
            })
            .collect();
        let s = SampleSet::new(xs, y).unwrap();
        let (model, rep) = fit(&s, &im, &FitConfig::default(), seed).unwrap();

        let opts = PceIndexOptions::default();
        let report = classical_sobol_pce(&model, &[], &opts, seed).unwrap();
        let firsts: Vec<f64> = (0..4)
            .map(|v| report.raw(&[v], glamor::report::IndexKind::First).unwrap())
            .collect();
        let snr_hat = snr(&model, 10_000, seed);
        let t_all = t0.elapsed().as_secs_f64();
        println!(
            "seed {seed}: nll {:.1} bases {:?} S1..4 {:?} snr {:?} total {:.1}s",
            rep.nll_final,
            rep.basis_sizes,
            firsts.iter().map(|v| (v * 1e3).round() / 1e3).collect::<Vec<_>>(),
            snr_hat.map(|v| (v * 1e3).round() / 1e3),
            t_all
        );
    }
}

#[test]
#[ignore]
fn sir_true_snr() {
    let sim = Sir::new(SirConfig::default());
    let im = sim.input_model().clone();
    let mut r = substream(77, Stream::Design);
    let n = 400;
    let reps = 300;
    let xs = im.sample(&mut r, n);
    let mut means = Vec::with_capacity(n);
    let mut vars = Vec::with_capacity(n);
    for (i, x) in xs.iter().enumerate() {
        let mut rr = substream(child_seed(77, 1), Stream::Simulate(i as u64));
        let draws: Vec<f64> = (0..reps).map(|_| sir_eval(x, &sim.cfg, &mut rr)).collect();
        let m = draws.iter().sum::<f64>() / reps as f64;
        let v = draws.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / (reps - 1) as f64;
        means.push(m);
        vars.push(v);
    }
    let mbar = means.iter().sum::<f64>() / n as f64;
    let var_m_raw = means.iter().map(|m| (m - mbar) * (m - mbar)).sum::<f64>() / (n - 1) as f64;
    let ev = vars.iter().sum::<f64>() / n as f64;
    // rep-mean noise inflates Var[m] by E[v]/reps
    let var_m = var_m_raw - ev / reps as f64;
    println!("Var[m] {var_m:.1} E[v] {ev:.1} snr {:.3} Var[Y] {:.1}", var_m / ev, var_m + ev);
}

#[test]
#[ignore]
fn toy_rankings_dry_run() {
    use glamor::sensitivity::{qoi_sobol_pce, QoiSpec};
    use glamor::simulators::{toy_eval, Toy};
    let sim = Toy::new();
    let im = sim.input_model().clone();
    for seed in 401u64..=405 {
        let t0 = std::time::Instant::now();
        let mut r = substream(seed, Stream::Design);
        let xs = lhs(1000, &im, &mut r);
        let y: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                toy_eval(x, &mut substream(child_seed(seed, 0), Stream::Simulate(i as u64)))
            })
            .collect();
        let s = SampleSet::new(xs, y).unwrap();
        let (model, _) = fit(&s, &im, &FitConfig::default(), seed).unwrap();

        let opts = PceIndexOptions::default();
        let classical = classical_sobol_pce(&model, &[], &opts, seed).unwrap();
        let s1 = classical.raw(&[0], glamor::report::IndexKind::First).unwrap();
        let s2 = classical.raw(&[1], glamor::report::IndexKind::First).unwrap();
        let s3 = classical.raw(&[2], glamor::report::IndexKind::First).unwrap();

        let eopts = PceIndexOptions { n_pc: 2000, ..Default::default() };
        let ent =
            qoi_sobol_pce(&model, QoiSpec::Entropy { n_mc: 2048 }, &[], &eopts, seed).unwrap();
        let t: Vec<f64> = (0..3)
            .map(|v| ent.raw(&[v], glamor::report::IndexKind::Total).unwrap())
            .collect();
        println!(
            "seed {seed}: S1 {s1:.3} S2 {s2:.3} S3 {s3:.4} | hT {:?} ({:.1}s)",
            t.iter().map(|v| (v * 1e3).round() / 1e3).collect::<Vec<_>>(),
            t0.elapsed().as_secs_f64()
        );
    }
}

#[test]
#[ignore]
fn sir_std_totals_dry_run() {
    use glamor::sensitivity::{qoi_sobol_pce, QoiSpec};
    let sim = Sir::new(SirConfig::default());
    let im = sim.input_model().clone();
    for seed in 301u64..=305 {
        let mut r = substream(seed, Stream::Design);
        let xs = lhs(250, &im, &mut r);
        let y: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                sir_eval(
                    x,
                    &sim.cfg,
                    &mut substream(child_seed(seed, 0), Stream::Simulate(i as u64)),
                )
            })
            .collect();
        let s = SampleSet::new(xs, y).unwrap();
        let (model, _) = fit(&s, &im, &FitConfig::default(), seed).unwrap();
        let opts = PceIndexOptions { n_pc: 4000, ..Default::default() };
        match qoi_sobol_pce(&model, QoiSpec::Std, &[], &opts, seed) {
            Ok(rep) => {
                let t: Vec<f64> = (0..4)
                    .map(|v| rep.raw(&[v], glamor::report::IndexKind::Total).unwrap())
                    .collect();
                println!(
                    "seed {seed}: stdT {:?} loo {:?}",
                    t.iter().map(|v| (v * 1e3).round() / 1e3).collect::<Vec<_>>(),
                    rep.loo_error
                );
            }
            Err(e) => println!("seed {seed}: std totals FAILED: {e}"),
        }
    }
}
