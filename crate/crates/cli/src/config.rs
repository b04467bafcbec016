//! Run-config files.
//!
//! The grammar is TOML. Arms, contexts and rounds are 1-based everywhere in
//! the file; they are converted to the library's 0-based arms here.
//!
//! ```toml
//! mode = "bandit"            # full-centered (default) | full-minshift | bandit
//! horizon = 2000
//! seeds = [1, 2, 3]          # default [0]
//! w_budget = "auto"          # or a number of nats
//! out = "results"            # default "out"
//!
//! [kernel]
//! family = "switching"       # fixed | switching | contextual | periodic
//! arms = 3
//! # contexts = 2             # contextual
//! # max_period = 2           # periodic
//!
//! [environment]
//! family = "switching"       # fixed-gap | switching | contextual | periodic | drifting-scale
//! gap = 1.0
//! switches = 3
//! noise = 0.1
//!
//! [[comparators]]
//! id = "best"
//! kind = "environment-best"  # fixed | sequence | schedule | mapping | periodic
//!
//! [sweep]
//! axis = "T"                 # T | M | W | gap
//! values = [500, 1000, 2000]
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use compete::environments::{evenly_spaced_switches, Affine, LossFamily, LossModel};
use compete::harness::{auto_budget, Comparator, ComparatorSpec};
use compete::kernels::{ComparatorKernel, KernelFamily, KernelHandle};
use compete::schedules::Mode;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default)]
    pub mode: Option<String>,
    pub horizon: usize,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub w_budget: Option<Budget>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub kernel: RawKernel,
    pub environment: RawEnvironment,
    #[serde(default)]
    pub comparators: Vec<RawComparator>,
    #[serde(default)]
    pub sweep: Option<RawSweep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Budget {
    Value(f64),
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawKernel {
    pub family: String,
    pub arms: usize,
    #[serde(default)]
    pub contexts: Option<usize>,
    #[serde(default)]
    pub max_period: Option<usize>,
    #[serde(default)]
    pub renormalize_rows: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawEnvironment {
    pub family: String,
    /// Defaults to the kernel's arm count.
    #[serde(default)]
    pub arms: Option<usize>,
    #[serde(default = "default_gap")]
    pub gap: f64,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub best: Option<usize>,
    #[serde(default)]
    pub switches: Option<usize>,
    #[serde(default)]
    pub switch_rounds: Option<Vec<usize>>,
    #[serde(default)]
    pub contexts: Option<usize>,
    #[serde(default)]
    pub mapping: Option<Vec<usize>>,
    #[serde(default)]
    pub pattern: Option<Vec<usize>>,
    #[serde(default)]
    pub ramp: Option<f64>,
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default)]
    pub shift: f64,
}

fn default_gap() -> f64 {
    1.0
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawComparator {
    pub id: String,
    pub kind: String,
    #[serde(default)]
    pub arm: Option<usize>,
    #[serde(default)]
    pub arms: Option<Vec<usize>>,
    /// `[start_round, arm]` pairs.
    #[serde(default)]
    pub segments: Option<Vec<(usize, usize)>>,
    #[serde(default)]
    pub mapping: Option<Vec<usize>>,
    #[serde(default)]
    pub pattern: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSweep {
    pub axis: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepAxis {
    T,
    M,
    W,
    Gap,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::T => "T",
            SweepAxis::M => "M",
            SweepAxis::W => "W",
            SweepAxis::Gap => "gap",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "T" | "t" => Ok(SweepAxis::T),
            "M" | "m" => Ok(SweepAxis::M),
            "W" | "w" => Ok(SweepAxis::W),
            "gap" => Ok(SweepAxis::Gap),
            other => Err(format!("unknown sweep axis `{other}` (expected T, M, W or gap)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

/// A fully validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub kernel: KernelHandle,
    pub mode: Mode,
    pub w_budget: f64,
    pub environment: LossModel,
    pub seeds: Vec<u64>,
    pub comparators: Vec<Comparator>,
    pub out: PathBuf,
    pub sweep: Option<SweepSpec>,
    /// Non-fatal findings, e.g. a numeric budget below some comparator's
    /// complexity.
    pub warnings: Vec<String>,
}

impl RunConfig {
    pub fn horizon(&self) -> usize {
        self.environment.horizon()
    }
}

/// Every problem found in a config file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration ({} error(s)):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigErrors> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigErrors(vec![format!("cannot read {}: {e}", path.display())]))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigErrors> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigErrors(vec![e.to_string()]))?;
    resolve(raw)
}

fn to_zero_based(values: &[usize], what: &str, errors: &mut Vec<String>) -> Vec<usize> {
    values
        .iter()
        .map(|&v| {
            if v == 0 {
                errors.push(format!("{what}: indices are 1-based, got 0"));
                0
            } else {
                v - 1
            }
        })
        .collect()
}

fn build_kernel(raw: &RawKernel, errors: &mut Vec<String>) -> Option<KernelHandle> {
    let family: KernelFamily = match raw.family.parse() {
        Ok(f) => f,
        Err(e) => {
            errors.push(format!("kernel: {e}"));
            return None;
        }
    };
    let contexts = raw.contexts.unwrap_or(0);
    let max_period = raw.max_period.unwrap_or(0);
    match family {
        KernelFamily::Contextual if raw.contexts.is_none() => errors.push("kernel: contextual family needs `contexts`".into()),
        KernelFamily::Periodic if max_period == 0 => {
            errors.push("kernel: periodic family needs `max_period` of at least 1".into());
            return None;
        }
        _ => {}
    }
    match KernelHandle::build(family, raw.arms, contexts, max_period) {
        Ok(k) => Some(k.with_row_renormalization(raw.renormalize_rows)),
        Err(e) => {
            errors.push(format!("kernel: {e}"));
            None
        }
    }
}

fn build_environment(raw: &RawEnvironment, kernel_arms: usize, horizon: usize, errors: &mut Vec<String>) -> Option<LossModel> {
    let arms = raw.arms.unwrap_or(kernel_arms);
    if arms != kernel_arms {
        errors.push(format!("environment has {arms} arms but the kernel has {kernel_arms}"));
        return None;
    }
    let mut local = Vec::new();
    let best = raw.best.map_or(0, |b| to_zero_based(&[b], "environment.best", &mut local)[0]);
    let gap = raw.gap;
    let family = match raw.family.as_str() {
        "fixed-gap" => Some(LossFamily::FixedGap { gap, best }),
        "switching" => {
            let switch_rounds = match (&raw.switch_rounds, raw.switches) {
                (Some(r), _) => r.clone(),
                (None, Some(s)) => evenly_spaced_switches(horizon, s),
                (None, None) => {
                    local.push("environment: switching family needs `switches` or `switch_rounds`".into());
                    Vec::new()
                }
            };
            Some(LossFamily::Switching { gap, first_best: best, switch_rounds })
        }
        "contextual" => {
            let mapping = match (&raw.mapping, raw.contexts) {
                (Some(m), _) => to_zero_based(m, "environment.mapping", &mut local),
                (None, Some(n)) => (0..n).map(|c| c % arms.max(1)).collect(),
                (None, None) => {
                    local.push("environment: contextual family needs `contexts` or `mapping`".into());
                    Vec::new()
                }
            };
            Some(LossFamily::Contextual { gap, mapping })
        }
        "periodic" => match &raw.pattern {
            Some(p) => Some(LossFamily::Periodic { gap, pattern: to_zero_based(p, "environment.pattern", &mut local) }),
            None => {
                local.push("environment: periodic family needs `pattern`".into());
                None
            }
        },
        "drifting-scale" => Some(LossFamily::DriftingScale { gap, best, ramp: raw.ramp.unwrap_or(1.0) }),
        other => {
            local.push(format!("environment: unknown family `{other}`"));
            None
        }
    };
    if !(raw.noise >= 0.0 && raw.noise.is_finite()) {
        local.push(format!("environment: noise must be finite and nonnegative, got {}", raw.noise));
    }
    if !(raw.scale > 0.0 && raw.scale.is_finite() && raw.shift.is_finite()) {
        local.push("environment: affine map needs a positive finite `scale` and a finite `shift`".into());
    }
    if !local.is_empty() {
        errors.extend(local);
        return None;
    }
    match LossModel::new(family?, arms, horizon) {
        Ok(m) => Some(m.with_noise(raw.noise).with_affine(Affine { scale: raw.scale, shift: raw.shift })),
        Err(e) => {
            errors.push(format!("environment: {e}"));
            None
        }
    }
}

fn comparator_spec(raw: &RawComparator, errors: &mut Vec<String>) -> Option<ComparatorSpec> {
    let what = format!("comparator `{}`", raw.id);
    let missing = |field: &str, errors: &mut Vec<String>| {
        errors.push(format!("{what}: kind `{}` needs `{field}`", raw.kind));
        None
    };
    match raw.kind.as_str() {
        "environment-best" => Some(ComparatorSpec::EnvironmentBest),
        "fixed" => match raw.arm {
            Some(a) => Some(ComparatorSpec::Fixed { arm: to_zero_based(&[a], &what, errors)[0] }),
            None => missing("arm", errors),
        },
        "sequence" => match &raw.arms {
            Some(a) => Some(ComparatorSpec::Sequence { arms: to_zero_based(a, &what, errors) }),
            None => missing("arms", errors),
        },
        "schedule" => match &raw.segments {
            Some(s) => {
                let arms: Vec<usize> = s.iter().map(|seg| seg.1).collect();
                let arms = to_zero_based(&arms, &what, errors);
                Some(ComparatorSpec::Schedule { segments: s.iter().map(|seg| seg.0).zip(arms).collect() })
            }
            None => missing("segments", errors),
        },
        "mapping" => match &raw.mapping {
            Some(m) => Some(ComparatorSpec::Mapping { mapping: to_zero_based(m, &what, errors) }),
            None => missing("mapping", errors),
        },
        "periodic" => match &raw.pattern {
            Some(p) => Some(ComparatorSpec::Periodic { pattern: to_zero_based(p, &what, errors) }),
            None => missing("pattern", errors),
        },
        other => {
            errors.push(format!("{what}: unknown kind `{other}`"));
            None
        }
    }
}

/// Validates a parsed file. All problems are collected before returning.
pub fn resolve(raw: RawConfig) -> Result<RunConfig, ConfigErrors> {
    let mut errors = Vec::new();
    let mut warnings = Vec::new();

    let mode = match raw.mode.as_deref().unwrap_or("full-centered").parse::<Mode>() {
        Ok(m) => Some(m),
        Err(e) => {
            errors.push(e.to_string());
            None
        }
    };
    if raw.horizon == 0 {
        errors.push("horizon must be at least 1".into());
    }
    let seeds = raw.seeds.clone().unwrap_or_else(|| vec![0]);
    if seeds.is_empty() {
        errors.push("seeds must not be empty".into());
    }

    let kernel = build_kernel(&raw.kernel, &mut errors);
    let environment = match &kernel {
        Some(k) if raw.horizon > 0 => build_environment(&raw.environment, k.arms(), raw.horizon, &mut errors),
        _ => None,
    };

    let mut comparators = Vec::new();
    let default_best = [RawComparator {
        id: "best".into(),
        kind: "environment-best".into(),
        arm: None,
        arms: None,
        segments: None,
        mapping: None,
        pattern: None,
    }];
    let raw_comparators: &[RawComparator] = if raw.comparators.is_empty() { &default_best } else { &raw.comparators };
    for (i, rc) in raw_comparators.iter().enumerate() {
        if raw_comparators[..i].iter().any(|o| o.id == rc.id) {
            errors.push(format!("comparator id `{}` is used twice", rc.id));
        }
        let Some(spec) = comparator_spec(rc, &mut errors) else { continue };
        if let (Some(k), Some(env)) = (&kernel, &environment) {
            match Comparator::build(rc.id.clone(), spec, k, env) {
                Ok(c) if !c.is_representable() => errors.push(format!(
                    "comparator `{}` not representable under the {} kernel (infinite complexity)",
                    rc.id,
                    k.family()
                )),
                Ok(c) => comparators.push(c),
                Err(e) => errors.push(format!("comparator `{}`: {e}", rc.id)),
            }
        }
    }

    let w_budget = match &raw.w_budget {
        None => Some(auto_budget(&comparators)),
        Some(Budget::Keyword(k)) if k == "auto" => Some(auto_budget(&comparators)),
        Some(Budget::Keyword(k)) => {
            errors.push(format!("w_budget must be \"auto\" or a number, got `{k}`"));
            None
        }
        Some(Budget::Value(w)) if !w.is_finite() || *w < 0.0 => {
            errors.push(format!("w_budget must be finite and nonnegative, got {w}"));
            None
        }
        Some(Budget::Value(w)) => {
            for c in comparators.iter().filter(|c| c.complexity > *w) {
                warnings.push(format!(
                    "w_budget {w} is below the complexity {:.6} of comparator `{}`; its bound is not covered",
                    c.complexity, c.id
                ));
            }
            Some(*w)
        }
    };

    let sweep = raw.sweep.as_ref().and_then(|s| match s.axis.parse::<SweepAxis>() {
        Ok(axis) if !s.values.is_empty() => Some(SweepSpec { axis, values: s.values.clone() }),
        Ok(_) => {
            errors.push("sweep: values must not be empty".into());
            None
        }
        Err(e) => {
            errors.push(format!("sweep: {e}"));
            None
        }
    });

    if !errors.is_empty() {
        return Err(ConfigErrors(errors));
    }
    Ok(RunConfig {
        kernel: kernel.expect("validated"),
        mode: mode.expect("validated"),
        w_budget: w_budget.expect("validated"),
        environment: environment.expect("validated"),
        seeds,
        comparators,
        out: raw.out.clone().unwrap_or_else(|| PathBuf::from("out")),
        sweep,
        warnings,
        raw,
    })
}

/// The raw config with one sweep axis set to `value`.
pub fn with_axis(raw: &RawConfig, axis: SweepAxis, value: f64) -> Result<RawConfig, ConfigErrors> {
    let mut out = raw.clone();
    let count = |v: f64| {
        if v >= 1.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(ConfigErrors(vec![format!("sweep axis {} needs positive integers, got {v}", axis.name())]))
        }
    };
    match axis {
        SweepAxis::T => out.horizon = count(value)?,
        SweepAxis::M => {
            let m = count(value)?;
            out.kernel.arms = m;
            out.environment.arms = Some(m);
        }
        SweepAxis::W => out.w_budget = Some(Budget::Value(value)),
        SweepAxis::Gap => out.environment.gap = value,
    }
    Ok(out)
}
