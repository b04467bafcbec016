//! The `run`, `verify` and `sweep` subcommands.
//!
//! Every command writes its human-readable report to the `out` writer it is
//! given and its artifacts under the configured output directory. Files are
//! a pure function of the config (and overrides) except for the
//! `generated_at` field of `bounds.json`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use compete::environments::{ranges, Affine};
use compete::error::Error as CoreError;
use compete::harness::oracle::path_count;
use compete::harness::verify::{affine_comparison, oracle_agreement};
use compete::harness::{
    mean_std, run_jobs, seed_jobs, BoundId, BoundInputs, BoundReport, Comparator, ComparatorSpec, EpisodeConfig,
    RegretLedger, ORACLE_PATH_CAP,
};
use compete::numerics::fmt_g12;
use compete::schedules::Mode;
use serde::Serialize;
use thiserror::Error;

use crate::config::{resolve, with_axis, ConfigErrors, RunConfig, SweepAxis, SweepSpec};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigErrors),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Core(#[from] CoreError),
    #[error("{0} check(s) failed")]
    Verification(usize),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => EXIT_CONFIG,
            CliError::Core(CoreError::Config(_)) => EXIT_CONFIG,
            CliError::Core(_) | CliError::Verification(_) | CliError::Io { .. } => EXIT_RUNTIME,
        }
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub strict: bool,
}

impl Overrides {
    fn out_dir(&self, config: &RunConfig) -> PathBuf {
        self.out.clone().unwrap_or_else(|| config.out.clone())
    }

    fn seeds(&self, config: &RunConfig) -> Vec<u64> {
        self.seed.map_or_else(|| config.seeds.clone(), |s| vec![s])
    }

    fn episode(&self, config: &RunConfig) -> EpisodeConfig {
        let cfg = EpisodeConfig::new(config.mode, config.w_budget, 0);
        if self.strict {
            cfg.strict()
        } else {
            cfg
        }
    }
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn run_seeds(config: &RunConfig, overrides: &Overrides) -> Result<Vec<RegretLedger>, CliError> {
    let seeds = overrides.seeds(config);
    let jobs = seed_jobs(&config.kernel, &config.environment, &config.comparators, overrides.episode(config), &seeds);
    run_jobs(&jobs, overrides.threads)
        .into_iter()
        .map(|r| r.map_err(CliError::from))
        .collect()
}

fn bound_reports(config: &RunConfig, ledger: &RegretLedger) -> Vec<BoundReport> {
    let env = config.environment.clone().with_seed(ledger.seed);
    let inputs = BoundInputs::new(config.w_budget, env.arms(), &ranges(&env));
    let mut reports = Vec::new();
    for (j, c) in config.comparators.iter().enumerate() {
        for &id in BoundId::for_mode(config.mode) {
            reports.push(BoundReport::new(id, c.id.clone(), ledger.regret(j), &inputs));
        }
    }
    reports
}

#[derive(Serialize)]
struct ComparatorInfo<'a> {
    id: &'a str,
    complexity: f64,
}

#[derive(Serialize)]
struct EpisodeReport {
    seed: u64,
    bounds: Vec<BoundReport>,
    audit_violations: BTreeMap<String, usize>,
}

#[derive(Serialize)]
struct BoundFile<'a> {
    /// Seconds since the Unix epoch; the only field that differs between
    /// repeated runs.
    generated_at: u64,
    kernel: String,
    mode: Mode,
    w_budget: f64,
    horizon: usize,
    comparators: Vec<ComparatorInfo<'a>>,
    warnings: &'a [String],
    episodes: Vec<EpisodeReport>,
}

fn now_secs() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

pub fn ledger_file_name(seed: u64) -> String {
    format!("ledger_seed{seed}.csv")
}

/// Runs every seed, writes `ledger_seed<k>.csv` and `bounds.json`, and
/// prints a summary table.
pub fn cmd_run(config: &RunConfig, overrides: &Overrides, out: &mut dyn Write) -> Result<(), CliError> {
    let dir = overrides.out_dir(config);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let ledgers = run_seeds(config, overrides)?;

    let mut episodes = Vec::with_capacity(ledgers.len());
    for ledger in &ledgers {
        let path = dir.join(ledger_file_name(ledger.seed));
        let mut file = create(&path)?;
        ledger.write_csv(&mut file).and_then(|_| file.flush()).map_err(io_err(&path))?;
        episodes.push(EpisodeReport {
            seed: ledger.seed,
            bounds: bound_reports(config, ledger),
            audit_violations: ledger.violation_counts().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        });
    }

    let report = BoundFile {
        generated_at: now_secs(),
        kernel: config.kernel.family().to_string(),
        mode: config.mode,
        w_budget: config.w_budget,
        horizon: config.horizon(),
        comparators: config
            .comparators
            .iter()
            .map(|c| ComparatorInfo { id: &c.id, complexity: c.complexity })
            .collect(),
        warnings: &config.warnings,
        episodes,
    };
    let path = dir.join("bounds.json");
    let mut file = create(&path)?;
    serde_json::to_writer_pretty(&mut file, &report)
        .map_err(io::Error::from)
        .and_then(|_| writeln!(file))
        .and_then(|_| file.flush())
        .map_err(io_err(&path))?;

    write_summary(out, config, &report.episodes).map_err(io_err(Path::new("<stdout>")))
}

fn write_summary(out: &mut dyn Write, config: &RunConfig, episodes: &[EpisodeReport]) -> io::Result<()> {
    writeln!(
        out,
        "kernel={} mode={} T={} W={}",
        config.kernel.family(),
        config.mode,
        config.horizon(),
        fmt_g12(config.w_budget)
    )?;
    writeln!(
        out,
        "{:>8}  {:<12} {:<10} {:>14} {:>14} {:>14} {:>6}",
        "seed", "comparator", "bound", "regret", "rhs", "slack", "audits"
    )?;
    for ep in episodes {
        let audits: usize = ep.audit_violations.values().sum();
        for b in &ep.bounds {
            writeln!(
                out,
                "{:>8}  {:<12} {:<10} {:>14.4} {:>14.4} {:>14.4} {:>6}",
                ep.seed,
                b.comparator,
                b.bound_id.name(),
                b.regret,
                b.rhs,
                b.slack,
                audits
            )?;
        }
    }
    Ok(())
}

/// Largest horizon up to `limit` the oracle can enumerate for `config`.
fn oracle_horizon(config: &RunConfig, limit: usize) -> usize {
    (1..=limit)
        .rev()
        .find(|&t| path_count(&config.kernel, t) <= ORACLE_PATH_CAP)
        .unwrap_or(1)
}

fn simplex_ok(ledger: &RegretLedger, tol: f64) -> bool {
    (1..=ledger.horizon()).all(|t| {
        [ledger.p_at(t), ledger.q_at(t)]
            .iter()
            .all(|v| (v.iter().sum::<f64>() - 1.0).abs() <= tol && v.iter().all(|x| *x >= 0.0))
    })
}

fn report_suite(out: &mut dyn Write, name: &str, pass: bool, detail: &str) -> io::Result<()> {
    writeln!(out, "{name:<20} {}  {detail}", if pass { "PASS" } else { "FAIL" })
}

/// Oracle equivalence, affine invariance, simplex and monotone-rate checks
/// on the configured kernel and mode, at desk scale.
pub fn cmd_verify(config: &RunConfig, overrides: &Overrides, out: &mut dyn Write) -> Result<(), CliError> {
    let stdout_err = io_err(Path::new("<stdout>"));
    let mut failures = 0;
    let seeds: Vec<u64> = overrides.seeds(config).into_iter().take(3).collect();
    let w = if config.w_budget > 0.0 { config.w_budget } else { 1.0 };

    let t_oracle = oracle_horizon(config, config.horizon().min(8));
    let mut worst: f64 = 0.0;
    for &seed in &seeds {
        worst = worst.max(oracle_agreement(&config.kernel, config.mode, w, t_oracle, seed)?.max_abs_diff);
    }
    let pass = worst < 1e-9;
    failures += usize::from(!pass);
    report_suite(out, "oracle-equivalence", pass, &format!("T={t_oracle} max|diff|={worst:.3e}")).map_err(&stdout_err)?;

    let t_affine = config.horizon().min(300);
    let env = config.environment.clone().with_horizon(t_affine);
    let comps = vec![Comparator::build("best", ComparatorSpec::EnvironmentBest, &config.kernel, &env)?];
    let mut pass = true;
    let mut worst_q: f64 = 0.0;
    for &seed in &seeds {
        for affine in [Affine { scale: 0.1, shift: -1.0 }, Affine { scale: 7.0, shift: 3.0 }] {
            let cfg = EpisodeConfig::new(config.mode, w, seed);
            let cmp = affine_comparison(&config.kernel, &env.clone().with_seed(seed), &comps, &cfg, affine)?;
            pass &= cmp.within(1e-9, 1e-8);
            worst_q = worst_q.max(cmp.max_q_diff);
        }
    }
    failures += usize::from(!pass);
    report_suite(out, "affine-invariance", pass, &format!("T={t_affine} max|dq|={worst_q:.3e}")).map_err(&stdout_err)?;

    let ledgers = run_seeds(config, &Overrides { strict: false, ..overrides.clone() })?;
    let pass = ledgers.iter().all(|l| simplex_ok(l, 1e-9));
    failures += usize::from(!pass);
    report_suite(out, "simplex", pass, &format!("{} episode(s), T={}", ledgers.len(), config.horizon()))
        .map_err(&stdout_err)?;

    let pass = ledgers.iter().all(|l| l.etas().windows(2).all(|e| e[1] <= e[0]));
    failures += usize::from(!pass);
    report_suite(out, "monotone-eta", pass, "").map_err(&stdout_err)?;

    if failures == 0 {
        Ok(())
    } else {
        Err(CliError::Verification(failures))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub mean_regret: f64,
    pub std_regret: f64,
    pub bound_rhs: f64,
    pub slack: f64,
}

/// One grid point per axis value, every seed at each point. Regret and
/// bound refer to the first comparator and the first bound of the mode.
pub fn sweep_rows(config: &RunConfig, spec: &SweepSpec, overrides: &Overrides) -> Result<Vec<SweepRow>, CliError> {
    let points: Vec<RunConfig> = spec
        .values
        .iter()
        .map(|&v| with_axis(&config.raw, spec.axis, v).and_then(resolve))
        .collect::<Result<_, _>>()?;
    let bound = BoundId::for_mode(config.mode)[0];

    let mut jobs = Vec::new();
    for p in &points {
        jobs.extend(seed_jobs(&p.kernel, &p.environment, &p.comparators, overrides.episode(p), &overrides.seeds(p)));
    }
    let mut results = run_jobs(&jobs, overrides.threads).into_iter();

    let mut rows = Vec::with_capacity(points.len());
    for (p, &value) in points.iter().zip(&spec.values) {
        let seeds = overrides.seeds(p);
        let mut regrets = Vec::with_capacity(seeds.len());
        let mut rhs = Vec::with_capacity(seeds.len());
        for &seed in &seeds {
            let ledger = results.next().expect("one result per job")?;
            regrets.push(ledger.regret(0));
            let env = p.environment.clone().with_seed(seed);
            rhs.push(compete::harness::bound_rhs(bound, &BoundInputs::new(p.w_budget, env.arms(), &ranges(&env))).rhs);
        }
        let (mean_regret, std_regret) = mean_std(&regrets);
        let bound_rhs = mean_std(&rhs).0;
        rows.push(SweepRow { value, mean_regret, std_regret, bound_rhs, slack: bound_rhs - mean_regret });
    }
    Ok(rows)
}

/// Writes `sweep_<axis>.csv` with one row per axis value.
pub fn cmd_sweep(
    config: &RunConfig,
    axis: Option<SweepAxis>,
    overrides: &Overrides,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let spec = match (axis, &config.sweep) {
        (Some(a), Some(s)) => SweepSpec { axis: a, values: s.values.clone() },
        (None, Some(s)) => s.clone(),
        (_, None) => return Err(CliError::Usage("sweep needs a [sweep] section with `axis` and `values`".into())),
    };
    let rows = sweep_rows(config, &spec, overrides)?;
    let dir = overrides.out_dir(config);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let path = dir.join(format!("sweep_{}.csv", spec.axis.name()));
    let mut file = create(&path)?;
    let write = |file: &mut BufWriter<File>| -> io::Result<()> {
        writeln!(file, "{},mean_regret,std_regret,bound_rhs,slack", spec.axis.name())?;
        for r in &rows {
            writeln!(
                file,
                "{},{},{},{},{}",
                fmt_g12(r.value),
                fmt_g12(r.mean_regret),
                fmt_g12(r.std_regret),
                fmt_g12(r.bound_rhs),
                fmt_g12(r.slack)
            )?;
        }
        file.flush()
    };
    write(&mut file).map_err(io_err(&path))?;

    let stdout_err = io_err(Path::new("<stdout>"));
    writeln!(out, "{:>10} {:>14} {:>14} {:>14}", spec.axis.name(), "mean_regret", "bound_rhs", "slack").map_err(&stdout_err)?;
    for r in &rows {
        writeln!(out, "{:>10} {:>14.4} {:>14.4} {:>14.4}", fmt_g12(r.value), r.mean_regret, r.bound_rhs, r.slack)
            .map_err(&stdout_err)?;
    }
    Ok(())
}
