//! Config-driven pipeline behind the `glamor` binary: design generation,
//! simulator runs, fitting, sensitivity reports, convergence studies, and
//! brute-force references.
//!
//! Every output embeds the config hash and seed, all writes are atomic, and
//! rerunning a command with identical inputs reproduces identical bytes.
//! Studies keep a manifest of completed repetitions so an interrupted run
//! resumes instead of recomputing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{LoadedConfig, ReferenceConfig, RunConfig, StudyConfig};
use crate::data::{format_f64, write_atomic, write_json_atomic, SampleSet};
use crate::error::{Error, Result};
use crate::glam::{fit, FitReport, GlamModel};
use crate::input::InputModel;
use crate::pce::regression::sample_variance;
use crate::report::SobolReport;
use crate::rng::{child_seed, mix_seq, substream, Stream};
use crate::sensitivity::{
    classical_sobol_pce, classical_sobol_pickfreeze, classical_sobol_pickfreeze_simulator,
    error_q_metric, error_qoi_metric, qoi_sobol_pce, snr, PickFreezeOptions, QoiSpec,
};
use crate::simulators::{
    empirical_entropy, empirical_quantile, empirical_superquantile, lhs, replicate, toy_entropy,
    toy_expected_payoff, toy_mean, toy_quantile, toy_superquantile, toy_variance, Simulator,
};

#[derive(Debug, Parser)]
#[command(
    name = "glamor",
    version,
    about = "Emulate stochastic simulators with generalized lambda models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config value.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config value.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate or load samples and fit a model
    Fit,
    /// Sensitivity indices and QoI reports from a fitted model
    Sens {
        /// Fitted model file (default: <out>/model.json)
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Convergence study over design sizes with repetitions
    Study,
    /// Brute-force reference QoI surfaces and indices from the raw simulator
    Reference,
    /// Generate a design and one simulator draw per point
    Simulate,
}

pub fn main_entry(cli: Cli) -> ExitCode {
    if let Some(t) = cli.threads {
        // Rebuilding the global pool in-process fails harmlessly.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let payload =
                serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{payload}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let path =
        cli.config.as_ref().ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    let LoadedConfig { run, hash } = RunConfig::load(path)?;
    let (seed, out) = run.resolve(cli.seed, cli.out.clone())?;
    std::fs::create_dir_all(&out).map_err(|e| Error::io(out.clone(), e))?;
    let ctx = Ctx { run, hash, seed, out };
    match &cli.command {
        Command::Fit => cmd_fit(&ctx).map(|_| ()),
        Command::Sens { model } => cmd_sens(&ctx, model.as_deref()),
        Command::Study => cmd_study(&ctx),
        Command::Reference => cmd_reference(&ctx),
        Command::Simulate => cmd_simulate(&ctx).map(|_| ()),
    }
}

struct Ctx {
    run: RunConfig,
    hash: String,
    seed: u64,
    out: PathBuf,
}

impl Ctx {
    fn meta(&self) -> Vec<(String, String)> {
        vec![("config_hash".into(), self.hash.clone()), ("seed".into(), self.seed.to_string())]
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

/// Fitted-model artifact; `sens` consumes this file.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub config_hash: String,
    pub seed: u64,
    pub model: GlamModel,
    pub fit_report: FitReport,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReportFile {
    pub config_hash: String,
    pub seed: u64,
    pub report: SobolReport,
}

/// LHS design plus one simulator draw per point; the noise substream is
/// derived from (seed, noise_tag, row), so rows parallelize without any
/// scheduling sensitivity.
fn simulate_design(
    sim: &dyn Simulator,
    n: usize,
    seed: u64,
    design_stream: Stream,
    noise_tag: u64,
) -> Result<SampleSet> {
    let mut r = substream(seed, design_stream);
    let xs = lhs(n, sim.input_model(), &mut r);
    let noise_seed = child_seed(seed, noise_tag);
    let y: Vec<f64> = xs
        .par_iter()
        .enumerate()
        .map(|(i, x)| sim.eval(x, &mut substream(noise_seed, Stream::Simulate(i as u64))))
        .collect();
    SampleSet::new(xs, y)
}

fn cmd_simulate(ctx: &Ctx) -> Result<SampleSet> {
    let sim = ctx.run.build_simulator()?;
    let n = ctx.run.design_n()?;
    let s = simulate_design(sim.as_ref(), n, ctx.seed, Stream::Design, 0)?;
    s.write_csv(&ctx.path("samples.csv"), &ctx.meta())?;
    Ok(s)
}

fn cmd_fit(ctx: &Ctx) -> Result<ModelFile> {
    let (s, im) = if ctx.run.simulator.is_some() {
        let sim = ctx.run.build_simulator()?;
        let n = ctx.run.design_n()?;
        let s = simulate_design(sim.as_ref(), n, ctx.seed, Stream::Design, 0)?;
        s.write_csv(&ctx.path("samples.csv"), &ctx.meta())?;
        let im = sim.input_model().clone();
        (s, im)
    } else {
        let d = ctx.run.data.as_ref().expect("config validation guarantees a source");
        let s = SampleSet::read_csv(&d.path)?;
        let im = InputModel::new(d.marginals.clone())?;
        if im.dim() != s.dim() {
            return Err(Error::Config(format!(
                "config lists {} marginals but the data has {} input columns",
                im.dim(),
                s.dim()
            )));
        }
        for (i, x) in s.xs.iter().enumerate() {
            im.check_point(x).map_err(|e| Error::Data(format!("row {}: {e}", i + 1)))?;
        }
        (s, im)
    };

    let (model, fit_report) = fit(&s, &im, &ctx.run.fit.to_fit_config(), ctx.seed)?;
    let mf = ModelFile { config_hash: ctx.hash.clone(), seed: ctx.seed, model, fit_report };
    write_json_atomic(&ctx.path("model.json"), &mf)?;
    write_json_atomic(
        &ctx.path("fit_report.json"),
        &serde_json::json!({
            "config_hash": ctx.hash,
            "seed": ctx.seed,
            "fit_report": mf.fit_report,
        }),
    )?;
    Ok(mf)
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
    let mf: ModelFile = serde_json::from_slice(&bytes)?;
    mf.model.validate()?;
    Ok(mf)
}

fn sanitize_label(label: &str) -> String {
    let s: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect();
    s.trim_matches('_').to_string()
}

fn sobol_csv(report: &SobolReport, meta: &[(String, String)]) -> String {
    let mut s = String::new();
    for (k, v) in meta {
        s.push_str(&format!("# {k}: {v}\n"));
    }
    s.push_str("qoi,estimator,n_samples,loo_error,subset,kind,estimate,raw,ci_lo,ci_hi\n");
    for e in &report.entries {
        let subset: Vec<String> = e.subset.iter().map(|v| v.to_string()).collect();
        let loo = report.loo_error.map(format_f64).unwrap_or_default();
        let (lo, hi) = match e.ci {
            Some(ci) => (format_f64(ci[0]), format_f64(ci[1])),
            None => (String::new(), String::new()),
        };
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            report.qoi,
            report.estimator,
            report.n_samples,
            loo,
            subset.join(";"),
            e.kind.label(),
            format_f64(e.estimate),
            format_f64(e.raw),
            lo,
            hi
        ));
    }
    s
}

fn write_report(ctx: &Ctx, stem: &str, report: &SobolReport) -> Result<()> {
    let file =
        ReportFile { config_hash: ctx.hash.clone(), seed: ctx.seed, report: report.clone() };
    write_json_atomic(&ctx.path(&format!("{stem}.json")), &file)?;
    write_atomic(&ctx.path(&format!("{stem}.csv")), sobol_csv(report, &ctx.meta()).as_bytes())
}

/// An error that invalidates one QoI but not the rest of the report set.
fn is_per_qoi_error(e: &Error) -> bool {
    matches!(
        e,
        Error::MomentUndefined(_)
            | Error::UndefinedIndex(_)
            | Error::Domain(_)
            | Error::InvalidParams(_)
            | Error::Fit(_)
            | Error::SingularDesign(_)
    )
}

fn cmd_sens(ctx: &Ctx, model_path: Option<&Path>) -> Result<()> {
    let default_path = ctx.path("model.json");
    let mf = load_model(model_path.unwrap_or(&default_path))?;
    let sens = &ctx.run.sens;
    let mut targets: Vec<serde_json::Value> = Vec::new();

    let rep = classical_sobol_pce(&mf.model, &sens.subsets, &sens.pce_options(), ctx.seed)?;
    write_report(ctx, "sens_classical_pce", &rep)?;
    targets.push(serde_json::json!({"target": "classical_pce", "status": "ok"}));

    if sens.pickfreeze {
        let rep =
            classical_sobol_pickfreeze(&mf.model, &sens.subsets, &sens.pickfreeze_options(), ctx.seed)?;
        write_report(ctx, "sens_classical_pickfreeze", &rep)?;
        targets.push(serde_json::json!({"target": "classical_pickfreeze", "status": "ok"}));
    }

    for q in &ctx.run.qoi {
        let label = q.label();
        match qoi_sobol_pce(&mf.model, q.clone(), &sens.subsets, &sens.pce_options(), ctx.seed) {
            Ok(rep) => {
                write_report(ctx, &format!("sens_qoi_{}", sanitize_label(&label)), &rep)?;
                targets.push(serde_json::json!({"target": label, "status": "ok"}));
            }
            Err(e) if is_per_qoi_error(&e) => {
                targets.push(serde_json::json!({
                    "target": label,
                    "status": "error",
                    "kind": e.kind(),
                    "message": e.to_string(),
                }));
            }
            Err(e) => return Err(e),
        }
    }

    write_json_atomic(
        &ctx.path("sens_summary.json"),
        &serde_json::json!({
            "config_hash": ctx.hash,
            "seed": ctx.seed,
            "targets": targets,
        }),
    )
}

const MIN_REF_POINTS: usize = 50;
const MIN_REF_REPS: usize = 100;
const MIN_REF_MC: usize = 1000;

fn cmd_reference(ctx: &Ctx) -> Result<()> {
    let sim = ctx.run.build_simulator()?;
    let rc: ReferenceConfig = ctx.run.reference.clone().unwrap_or_default();
    if rc.points < MIN_REF_POINTS || rc.replications < MIN_REF_REPS || rc.n_mc < MIN_REF_MC {
        return Err(Error::Config(format!(
            "reference budget too small: need points ≥ {MIN_REF_POINTS}, replications ≥ {MIN_REF_REPS}, n_mc ≥ {MIN_REF_MC}; got {}, {}, {}",
            rc.points, rc.replications, rc.n_mc
        )));
    }

    let im = sim.input_model();
    let mut r = substream(ctx.seed, Stream::Design);
    let xs = lhs(rc.points, im, &mut r);
    let qois = &ctx.run.qoi;
    let noise_seed = child_seed(ctx.seed, 2);
    let rows: Vec<Vec<f64>> = xs
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut nr = substream(noise_seed, Stream::Simulate(i as u64));
            let mut ys = replicate(sim.as_ref(), x, rc.replications, &mut nr);
            ys.sort_by(f64::total_cmp);
            let n = ys.len() as f64;
            let mean = ys.iter().sum::<f64>() / n;
            let var = sample_variance(&ys);
            let mut row = vec![mean, var.sqrt(), var];
            for q in qois {
                row.push(match q {
                    QoiSpec::Mean => mean,
                    QoiSpec::Variance => var,
                    QoiSpec::Std => var.sqrt(),
                    QoiSpec::Quantile { alpha } => empirical_quantile(&ys, *alpha),
                    QoiSpec::Superquantile { alpha } => empirical_superquantile(&ys, *alpha),
                    QoiSpec::ExpectedPayoff { strike } => {
                        ys.iter().map(|y| (y - strike).max(0.0)).sum::<f64>() / n
                    }
                    QoiSpec::Entropy { .. } => empirical_entropy(&ys),
                });
            }
            row
        })
        .collect();

    let mut csv = String::new();
    for (k, v) in ctx.meta() {
        csv.push_str(&format!("# {k}: {v}\n"));
    }
    let mut header: Vec<String> = (1..=im.dim()).map(|j| format!("x{j}")).collect();
    header.extend(["mean".into(), "std".into(), "variance".into()]);
    header.extend(qois.iter().map(|q| q.label()));
    csv.push_str(&header.join(","));
    csv.push('\n');
    for (x, row) in xs.iter().zip(&rows) {
        let fields: Vec<String> = x.iter().chain(row.iter()).map(|v| format_f64(*v)).collect();
        csv.push_str(&fields.join(","));
        csv.push('\n');
    }
    write_atomic(&ctx.path("reference_qoi.csv"), csv.as_bytes())?;

    let pf_opts = PickFreezeOptions {
        n_mc: rc.n_mc,
        n_boot: ctx.run.sens.n_boot,
        level: ctx.run.sens.level,
    };
    let rep = classical_sobol_pickfreeze_simulator(
        sim.as_ref(),
        &ctx.run.sens.subsets,
        &pf_opts,
        child_seed(ctx.seed, 3),
    )?;
    write_report(ctx, "reference_indices", &rep)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MetricRow {
    metric: String,
    value: f64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct StudyManifest {
    config_hash: String,
    seed: u64,
    /// Key "NNNNNNNN:RRRR" so lexical order is (N, rep) order.
    rows: BTreeMap<String, Vec<MetricRow>>,
    failures: BTreeMap<String, String>,
}

fn study_key(n: usize, rep: usize) -> String {
    format!("{n:08}:{rep:04}")
}

fn parse_study_key(key: &str) -> (usize, usize) {
    let (n, rep) = key.split_once(':').expect("manifest keys are well-formed");
    (n.parse().expect("numeric size"), rep.parse().expect("numeric rep"))
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let t = p * (n - 1) as f64;
    let i = t.floor() as usize;
    let frac = t - i as f64;
    if i + 1 < n {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[n - 1]
    }
}

/// Analytic toy QoI surface for study error rows.
fn toy_qoi_reference(q: &QoiSpec) -> Box<dyn FnMut(&[f64]) -> f64> {
    match q.clone() {
        QoiSpec::Mean => Box::new(toy_mean),
        QoiSpec::Variance => Box::new(toy_variance),
        QoiSpec::Std => Box::new(|x| toy_variance(x).sqrt()),
        QoiSpec::Quantile { alpha } => {
            Box::new(move |x| toy_quantile(alpha, x).expect("design point in toy domain"))
        }
        QoiSpec::Superquantile { alpha } => Box::new(move |x| toy_superquantile(alpha, x)),
        QoiSpec::ExpectedPayoff { strike } => Box::new(move |x| toy_expected_payoff(strike, x)),
        QoiSpec::Entropy { .. } => Box::new(|x| toy_entropy(x).expect("design point in toy domain")),
    }
}

fn study_rep(ctx: &Ctx, sim: &dyn Simulator, sc: &StudyConfig, n: usize, rep: usize) -> Result<Vec<MetricRow>> {
    let tag = mix_seq(&[n as u64, rep as u64]);
    let s = simulate_design(sim, n, ctx.seed, Stream::Repetition(tag), tag)?;
    let (model, report) = fit(&s, sim.input_model(), &ctx.run.fit.to_fit_config(), child_seed(ctx.seed, tag))?;

    let mut rows = vec![
        MetricRow { metric: "nll_final".into(), value: report.nll_final },
        MetricRow { metric: "mean_loo".into(), value: report.mean_loo },
    ];
    if sc.snr {
        let v = snr(&model, sc.n_snr, child_seed(ctx.seed, mix_seq(&[tag, 1])))?;
        rows.push(MetricRow { metric: "snr".into(), value: v });
    }
    if sc.reference == "analytic" {
        let mut refq = |u: f64, x: &[f64]| toy_quantile(u, x).expect("design point in toy domain");
        let v = error_q_metric(&model, &mut refq, sc.n_test, child_seed(ctx.seed, mix_seq(&[tag, 2])))?;
        rows.push(MetricRow { metric: "eps_q".into(), value: v });
        for q in &ctx.run.qoi {
            let mut reference = toy_qoi_reference(q);
            let v = error_qoi_metric(
                &model,
                q.clone(),
                &mut *reference,
                sc.n_test,
                child_seed(ctx.seed, mix_seq(&[tag, 3])),
            )?;
            rows.push(MetricRow { metric: format!("eps_{}", q.label()), value: v });
        }
    }
    if sc.indices {
        let idx = classical_sobol_pce(
            &model,
            &[],
            &ctx.run.sens.pce_options(),
            child_seed(ctx.seed, mix_seq(&[tag, 4])),
        )?;
        for v in 0..sim.dim() {
            rows.push(MetricRow {
                metric: format!("classical_s{}", v + 1),
                value: idx.first_order(v).unwrap_or(f64::NAN),
            });
            rows.push(MetricRow {
                metric: format!("classical_st{}", v + 1),
                value: idx.total(v).unwrap_or(f64::NAN),
            });
        }
    }
    Ok(rows)
}

fn cmd_study(ctx: &Ctx) -> Result<()> {
    let sim = ctx.run.build_simulator()?;
    let sc = ctx.run.study.clone().unwrap_or_default();
    if sc.reference == "analytic" && sim.name() != "toy" {
        return Err(Error::Config(
            "analytic study references are only available for the toy simulator".into(),
        ));
    }
    let sizes = ctx.run.design_sizes()?;
    let reps = ctx.run.design.repetitions.max(1);

    let manifest_path = ctx.path("study_manifest.json");
    let manifest = if manifest_path.exists() {
        let bytes =
            std::fs::read(&manifest_path).map_err(|e| Error::io(manifest_path.clone(), e))?;
        let m: StudyManifest = serde_json::from_slice(&bytes)?;
        if m.config_hash != ctx.hash || m.seed != ctx.seed {
            return Err(Error::Config(
                "existing study manifest was produced by a different config or seed; \
                 remove it or change the output directory"
                    .into(),
            ));
        }
        m
    } else {
        StudyManifest { config_hash: ctx.hash.clone(), seed: ctx.seed, ..Default::default() }
    };

    let mut tasks = Vec::new();
    for &n in &sizes {
        for rep in 0..reps {
            let key = study_key(n, rep);
            if !manifest.rows.contains_key(&key) && !manifest.failures.contains_key(&key) {
                tasks.push((n, rep));
            }
        }
    }

    let manifest = Mutex::new(manifest);
    let write_failure: Mutex<Option<Error>> = Mutex::new(None);
    tasks.par_iter().for_each(|&(n, rep)| {
        let outcome = study_rep(ctx, sim.as_ref(), &sc, n, rep);
        let mut m = manifest.lock().unwrap();
        match outcome {
            Ok(rows) => {
                m.rows.insert(study_key(n, rep), rows);
            }
            Err(e) => {
                m.failures.insert(study_key(n, rep), e.to_string());
            }
        }
        // Checkpoint after every repetition so interruptions lose one rep at
        // most; a write failure aborts the study once the pool drains.
        if let Err(e) = write_json_atomic(&manifest_path, &*m) {
            *write_failure.lock().unwrap() = Some(e);
        }
    });
    if let Some(e) = write_failure.into_inner().unwrap() {
        return Err(e);
    }
    let manifest = manifest.into_inner().unwrap();
    write_json_atomic(&manifest_path, &manifest)?;

    let mut csv = String::new();
    for (k, v) in ctx.meta() {
        csv.push_str(&format!("# {k}: {v}\n"));
    }
    csv.push_str("n,rep,metric,value\n");
    let mut agg: BTreeMap<(usize, String), Vec<f64>> = BTreeMap::new();
    for (key, rows) in &manifest.rows {
        let (n, rep) = parse_study_key(key);
        for row in rows {
            csv.push_str(&format!("{n},{rep},{},{}\n", row.metric, format_f64(row.value)));
            agg.entry((n, row.metric.clone())).or_default().push(row.value);
        }
    }
    write_atomic(&ctx.path("study.csv"), csv.as_bytes())?;

    let mut summary_rows = Vec::new();
    for ((n, metric), mut values) in agg {
        values.sort_by(f64::total_cmp);
        summary_rows.push(serde_json::json!({
            "n": n,
            "metric": metric,
            "count": values.len(),
            "median": percentile(&values, 0.5),
            "q25": percentile(&values, 0.25),
            "q75": percentile(&values, 0.75),
        }));
    }
    write_json_atomic(
        &ctx.path("study_summary.json"),
        &serde_json::json!({
            "config_hash": ctx.hash,
            "seed": ctx.seed,
            "rows": summary_rows,
            "failures": manifest.failures,
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_sanitize_to_file_stems() {
        assert_eq!(sanitize_label("quantile(0.95)"), "quantile_0.95");
        assert_eq!(sanitize_label("expected_payoff(1)"), "expected_payoff_1");
        assert_eq!(sanitize_label("mean"), "mean");
    }

    #[test]
    fn study_keys_sort_and_parse() {
        let a = study_key(250, 3);
        let b = study_key(1000, 0);
        assert!(a < b);
        assert_eq!(parse_study_key(&a), (250, 3));
        assert_eq!(parse_study_key(&b), (1000, 0));
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.5), 2.5);
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 1.0), 4.0);
        assert_eq!(percentile(&[7.0], 0.25), 7.0);
    }
}
