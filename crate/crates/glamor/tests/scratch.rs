use glamor::data::SampleSet;
use glamor::glam::{fit, FitConfig};
use glamor::rng::{child_seed, substream, Stream};
use glamor::sensitivity::{error_q_metric, snr};
use glamor::simulators::{lhs, toy_eval, toy_quantile, Simulator, Toy};

#[test]
#[ignore]
fn criterion5_dry_run() {
    let sim = Toy::new();
    let im = sim.input_model().clone();
    for seed in 101u64..=112 {
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
        let cfg = FitConfig::default();
        let (model, rep) = fit(&s, &im, &cfg, seed).unwrap();

        let snr_hat = snr(&model, 10_000, seed).unwrap();
        let mut reference = |u: f64, x: &[f64]| toy_quantile(u, x).unwrap();
        let eps_q = error_q_metric(&model, &mut reference, 10_000, seed).unwrap();

        let mut pred = glamor::glam::Predictor::new(&model).unwrap();
        let mut r3 = substream(seed, Stream::Estimate(99));
        let xs3 = im.sample(&mut r3, 2000);
        let (mut l3min, mut l3max) = (f64::MAX, f64::MIN);
        let (mut l4min, mut l4max) = (f64::MAX, f64::MIN);
        let mut l2min = f64::MAX;
        for x in &xs3 {
            let p = pred.lambda_at(x);
            l3min = l3min.min(p.lambda3);
            l3max = l3max.max(p.lambda3);
            l4min = l4min.min(p.lambda4);
            l4max = l4max.max(p.lambda4);
            l2min = l2min.min(p.lambda2);
        }
        println!(
            "seed {seed}: nll {:.1} eps_q {:.4} snr {:.3} bases {:?} l3 [{:.3},{:.3}] l4 [{:.3},{:.3}] l2min {:.4}",
            rep.nll_final, eps_q, snr_hat, rep.basis_sizes, l3min, l3max, l4min, l4max, l2min
        );
    }
}
