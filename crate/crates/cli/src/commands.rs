//! Subcommand implementations. Each one builds typed records, writes the
//! report files and returns the process outcome.

use std::path::PathBuf;

use robcert::bounds::{self, BoundReport};
use robcert::harness::{self, ExperimentConfig, ExperimentReport, QuantileReport, VerifyReport};
use robcert::{Provenance, RobustnessCertificate, Sample};
use serde::Serialize;

use crate::args::CommonArgs;
use crate::config::{self, LoadedSuite};
use crate::report::{self, num, opt, Manifest, PlotTable};
use crate::{exit, CliError};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub command: &'static str,
    pub config: PathBuf,
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub validate: bool,
    pub experiment: Option<String>,
}

impl RunOptions {
    pub fn from_args(command: &'static str, a: &CommonArgs) -> Self {
        RunOptions {
            command,
            config: a.config.clone(),
            data: a.data.clone(),
            out: a.out.clone(),
            seed: a.seed,
            validate: a.validate,
            experiment: a.experiment.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub json_path: PathBuf,
    pub passed: bool,
    pub exit_code: u8,
    /// One human-readable line per experiment.
    pub lines: Vec<String>,
    pub warnings: Vec<String>,
}

struct Outcome<T> {
    records: Vec<T>,
    plot: PlotTable,
    /// Statistical assertions held.
    passed: bool,
    /// Some trial or experiment failed at runtime.
    errored: bool,
    lines: Vec<String>,
    warnings: Vec<String>,
}

impl<T> Outcome<T> {
    fn new(header: &[&'static str]) -> Self {
        Outcome {
            records: Vec::new(),
            plot: PlotTable::new(header),
            passed: true,
            errored: false,
            lines: Vec::new(),
            warnings: Vec::new(),
        }
    }
}

const TRUNCATED_MEAN_NOTE: &str =
    "truncated mean uses the atom correction (beta - Pr[X < Q]) Q, matching the partial-sum optimum; the printed definition divides this term by Pr[X = Q]";

pub fn execute(opts: &RunOptions) -> Result<RunSummary, CliError> {
    let started = report::now_ms();
    let LoadedSuite { suite, digest } = config::load(&opts.config)?;
    let mut experiments = suite.select(opts.experiment.as_deref())?;
    if let Some(seed) = opts.seed {
        for e in &mut experiments {
            e.seed = seed;
        }
    }
    if opts.data.is_some() {
        if !matches!(opts.command, "certify" | "bound") {
            return Err(CliError::Config(
                "--data applies to certify and bound only".into(),
            ));
        }
        if experiments.len() != 1 {
            return Err(CliError::Config(
                "--data needs a single experiment; pick one with --experiment".into(),
            ));
        }
    }
    let mut manifest = Manifest {
        tool: "robcert",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: opts.command,
        config_path: opts.config.display().to_string(),
        config_digest: digest,
        data_path: opts.data.as_ref().map(|p| p.display().to_string()),
        seed_override: opts.seed,
        validate: opts.validate,
        started_unix_ms: started,
        finished_unix_ms: started,
        outputs: Vec::new(),
        warnings: Vec::new(),
    };
    match opts.command {
        "certify" => finish(opts, &mut manifest, certify(&experiments, opts)?, false),
        "bound" => finish(opts, &mut manifest, bound(&experiments, opts)?, false),
        "verify" => finish(opts, &mut manifest, verify(&experiments)?, true),
        "quantile" => finish(opts, &mut manifest, quantile(&experiments)?, opts.validate),
        "markov" => finish(opts, &mut manifest, markov(&experiments)?, opts.validate),
        other => Err(CliError::Config(format!("unknown subcommand `{other}`"))),
    }
}

fn finish<T: Serialize>(
    opts: &RunOptions,
    manifest: &mut Manifest,
    mut o: Outcome<T>,
    asserting: bool,
) -> Result<RunSummary, CliError> {
    o.warnings.sort();
    o.warnings.dedup();
    manifest.warnings = o.warnings.clone();
    let passed = o.passed && !o.errored;
    let json_path = report::write(&opts.out, manifest, passed, &o.records, &o.plot)?;
    let exit_code = if o.errored {
        exit::RUNTIME_ERROR
    } else if asserting && !o.passed {
        exit::ASSERTION_FAILED
    } else {
        exit::SUCCESS
    };
    Ok(RunSummary {
        json_path,
        passed,
        exit_code,
        lines: o.lines,
        warnings: o.warnings,
    })
}

/// Training data: the CSV file when given, otherwise a generated sample.
fn training_data(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
) -> Result<(Vec<Sample>, String), CliError> {
    match &opts.data {
        Some(path) => {
            let (input, output) = cfg.spaces()?;
            let samples = crate::data::read_samples(path, &input, output)?;
            Ok((samples, format!("csv:{}", path.display())))
        }
        None => Ok((
            harness::generate_samples(cfg, cfg.seed)?,
            "generated".into(),
        )),
    }
}

#[derive(Debug, Serialize)]
pub struct CertifyRecord {
    pub experiment: String,
    pub learner: &'static str,
    pub source: String,
    pub n: usize,
    pub certificate: RobustnessCertificate,
}

fn certified(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
) -> Result<(Vec<RobustnessCertificate>, usize, String), CliError> {
    let (samples, source) = training_data(cfg, opts)?;
    let (_, certs) = harness::certify_grid(cfg, &samples, cfg.seed)?;
    Ok((certs, samples.len(), source))
}

fn certify(
    experiments: &[ExperimentConfig],
    opts: &RunOptions,
) -> Result<Outcome<CertifyRecord>, CliError> {
    let mut o = Outcome::new(&["experiment", "gamma", "k", "epsilon", "n_hat"]);
    for cfg in experiments {
        let (certs, n, source) = certified(cfg, opts)?;
        o.lines.push(format!(
            "{}: {} certificates from {n} samples",
            cfg.name,
            certs.len()
        ));
        for c in certs {
            o.warnings.extend(c.notes.iter().cloned());
            o.plot.push(vec![
                cfg.name.clone(),
                num(c.gamma),
                c.k.to_string(),
                num(c.epsilon),
                opt(c.n_hat),
            ]);
            o.records.push(CertifyRecord {
                experiment: cfg.name.clone(),
                learner: cfg.learner.family(),
                source: source.clone(),
                n,
                certificate: c,
            });
        }
    }
    Ok(o)
}

#[derive(Debug, Serialize)]
pub struct BoundRecord {
    pub experiment: String,
    pub learner: &'static str,
    pub report: BoundReport,
}

/// Every bound that applies to `certs`: each certificate on its own, then the
/// infima over the whole list, then the chain bound when a chain is set.
pub fn applicable_bounds(
    cfg: &ExperimentConfig,
    certs: &[RobustnessCertificate],
    n: usize,
) -> Result<Vec<BoundReport>, CliError> {
    let (delta, m) = (cfg.delta, cfg.loss_bound);
    let pseudo = certs.iter().any(|c| c.provenance == Provenance::Margin);
    let mut out = Vec::new();
    for c in certs {
        out.push(if pseudo {
            bounds::pseudo_gap_bound(c, n, delta, m)?
        } else {
            bounds::iid_gap_bound(c, n, delta, m)?
        });
    }
    if certs.len() > 1 {
        if pseudo {
            out.push(bounds::adaptive_pseudo_gap_bound(certs, n, delta, m)?);
        } else {
            out.push(bounds::adaptive_gap_bound(certs, n, delta, m)?);
            if certs.iter().all(|c| c.sample_independent) {
                out.push(bounds::sharp_adaptive_gap_bound(certs, n, delta, m)?);
            }
        }
    }
    if cfg.chain.is_some() {
        let (_, params, _) = harness::chain_diagnostics(&ExperimentConfig { n, ..cfg.clone() })?;
        for c in certs {
            out.push(bounds::markov_gap_bound(
                c,
                n,
                delta,
                m,
                params.alpha,
                params.t,
            )?);
        }
    }
    Ok(out)
}

fn bound(
    experiments: &[ExperimentConfig],
    opts: &RunOptions,
) -> Result<Outcome<BoundRecord>, CliError> {
    let mut o = Outcome::new(&[
        "experiment",
        "theorem",
        "gamma",
        "k",
        "epsilon",
        "n_hat",
        "bound",
        "clipped",
        "alt_bound",
    ]);
    for cfg in experiments {
        let (certs, n, _) = certified(cfg, opts)?;
        o.warnings
            .extend(certs.iter().flat_map(|c| c.notes.iter().cloned()));
        let reports = applicable_bounds(cfg, &certs, n)?;
        if let Some(best) = reports.iter().min_by(|a, b| a.value.total_cmp(&b.value)) {
            o.lines.push(format!(
                "{}: tightest bound {:.6} ({:?}, gamma {})",
                cfg.name, best.value, best.theorem, best.inputs.gamma
            ));
        }
        for r in reports {
            let i = &r.inputs;
            o.plot.push(vec![
                cfg.name.clone(),
                serde_json::to_value(r.theorem)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_owned))
                    .unwrap_or_default(),
                num(i.gamma),
                i.k.to_string(),
                num(i.epsilon),
                i.n_hat.to_string(),
                num(r.value),
                num(r.clipped),
                opt(r.alt_value),
            ]);
            o.records.push(BoundRecord {
                experiment: cfg.name.clone(),
                learner: cfg.learner.family(),
                report: r,
            });
        }
    }
    Ok(o)
}

#[derive(Debug, Serialize)]
pub struct VerifyRecord {
    pub experiment: String,
    pub learner: &'static str,
    pub gap: ExperimentReport,
    pub soundness: VerifyReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quantile: Option<QuantileReport>,
    pub passed: bool,
}

const GAP_HEADER: &[&str] = &[
    "experiment",
    "trial",
    "seed",
    "theorem",
    "gamma",
    "k",
    "epsilon",
    "n_hat",
    "empirical_risk",
    "true_risk",
    "true_risk_se",
    "gap",
    "bound_clipped",
    "alt_bound",
    "violated",
];

fn gap_rows(plot: &mut PlotTable, r: &ExperimentReport) {
    for t in &r.trials {
        let Some(o) = &t.outcome else { continue };
        plot.push(vec![
            r.name.clone(),
            t.trial.to_string(),
            t.seed.to_string(),
            serde_json::to_value(o.theorem)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default(),
            num(o.gamma),
            o.k.to_string(),
            num(o.epsilon),
            o.n_hat.to_string(),
            num(o.empirical_risk),
            num(o.true_risk),
            num(o.true_risk_se),
            num(o.gap),
            num(o.bound_clipped),
            opt(o.alt_bound),
            o.violated.to_string(),
        ]);
    }
}

fn gap_report(cfg: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    Ok(if cfg.chain.is_some() {
        harness::run_markov_experiment(cfg)?
    } else {
        harness::run_iid_experiment(cfg)?
    })
}

fn verify(experiments: &[ExperimentConfig]) -> Result<Outcome<VerifyRecord>, CliError> {
    let mut o = Outcome::new(GAP_HEADER);
    for cfg in experiments {
        let gap = gap_report(cfg)?;
        let soundness = harness::verify_certificates(cfg, false)?;
        let quantile = cfg
            .beta
            .map(|b| harness::run_quantile_experiment(cfg, b))
            .transpose()?;
        if cfg.learner.family() == "network" {
            o.warnings.push(
                "network certificates use the loss Lipschitz constant 1 + (alpha beta)^d".into(),
            );
        }
        if quantile.is_some() {
            o.warnings.push(TRUNCATED_MEAN_NOTE.into());
        }
        let errors = gap.errors + soundness.errors + quantile.as_ref().map_or(0, |q| q.errors);
        let passed = gap.passed && soundness.passed && quantile.as_ref().is_none_or(|q| q.passed);
        o.errored |= errors > 0;
        o.passed &= passed;
        let mut line = format!(
            "{} {}: gap violations {}/{} (allowed {}), soundness failures {}/{}",
            if passed { "PASS" } else { "FAIL" },
            cfg.name,
            gap.violations,
            gap.completed,
            gap.allowed_violations,
            soundness.failures,
            soundness.trials.len()
        );
        if let Some(q) = &quantile {
            line.push_str(&format!(
                ", sandwich misses {}/{} (allowed {})",
                q.misses, q.completed, q.allowed_misses
            ));
        }
        if errors > 0 {
            line.push_str(&format!(", {errors} trial errors"));
        }
        o.lines.push(line);
        gap_rows(&mut o.plot, &gap);
        o.records.push(VerifyRecord {
            experiment: cfg.name.clone(),
            learner: cfg.learner.family(),
            gap,
            soundness,
            quantile,
            passed,
        });
    }
    Ok(o)
}

fn quantile(experiments: &[ExperimentConfig]) -> Result<Outcome<QuantileReport>, CliError> {
    let mut o = Outcome::new(&[
        "experiment",
        "trial",
        "beta",
        "k",
        "epsilon",
        "quantile_lower",
        "population_quantile",
        "quantile_upper",
        "truncated_lower",
        "population_truncated",
        "truncated_upper",
    ]);
    let chosen: Vec<_> = experiments.iter().filter(|e| e.beta.is_some()).collect();
    if chosen.is_empty() {
        return Err(CliError::Config("no experiment sets `beta`".into()));
    }
    o.warnings.push(TRUNCATED_MEAN_NOTE.into());
    for cfg in chosen {
        let r = harness::run_quantile_experiment(cfg, cfg.beta.expect("filtered"))?;
        o.errored |= r.errors > 0;
        o.passed &= r.passed;
        o.lines.push(format!(
            "{} {}: coverage {:.3} (quantile {:.3}, truncated mean {:.3}), misses {}/{} (allowed {})",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.coverage,
            r.coverage_quantile,
            r.coverage_truncated,
            r.misses,
            r.completed,
            r.allowed_misses
        ));
        for t in &r.trials {
            let Some(q) = &t.outcome else { continue };
            let s = &q.sandwich;
            o.plot.push(vec![
                r.name.clone(),
                t.trial.to_string(),
                num(r.beta),
                q.k.to_string(),
                num(q.epsilon),
                num(s.quantile_lower),
                num(q.population_quantile),
                num(s.quantile_upper),
                num(s.truncated_lower),
                num(q.population_truncated),
                num(s.truncated_upper),
            ]);
        }
        o.records.push(r);
    }
    Ok(o)
}

fn markov(experiments: &[ExperimentConfig]) -> Result<Outcome<ExperimentReport>, CliError> {
    let mut o = Outcome::new(GAP_HEADER);
    let chosen: Vec<_> = experiments.iter().filter(|e| e.chain.is_some()).collect();
    if chosen.is_empty() {
        return Err(CliError::Config(
            "no experiment configures a `chain`".into(),
        ));
    }
    for cfg in chosen {
        let r = harness::run_markov_experiment(cfg)?;
        o.errored |= r.errors > 0;
        o.passed &= r.passed;
        let diag = r.chain.as_ref().expect("markov report");
        o.lines.push(format!(
            "{} {}: alpha {} T {} pi {:?}, violations {}/{} (allowed {})",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            diag.alpha,
            diag.t,
            diag.stationary,
            r.violations,
            r.completed,
            r.allowed_violations
        ));
        gap_rows(&mut o.plot, &r);
        o.records.push(r);
    }
    Ok(o)
}
