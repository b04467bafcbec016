//! Declared comparator sequences and their class paths under a kernel.

use serde::{Deserialize, Serialize};

use crate::environments::LossModel;
use crate::error::{Error, Result};
use crate::kernels::{complexity, ClassState, ComparatorPath, KernelFamily, KernelHandle};

/// Arm-level description of a comparator. Arms are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ComparatorSpec {
    Fixed { arm: usize },
    Sequence { arms: Vec<usize> },
    /// `(start_round, arm)` pairs; the first must start at round 1.
    Schedule { segments: Vec<(usize, usize)> },
    Mapping { mapping: Vec<usize> },
    Periodic { pattern: Vec<usize> },
    /// The environment's designated best sequence.
    EnvironmentBest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparator {
    pub id: String,
    pub spec: ComparatorSpec,
    pub path: ComparatorPath,
    /// Complexity under the learner's kernel; `+inf` when not representable.
    pub complexity: f64,
}

impl Comparator {
    pub fn arms(&self) -> &[usize] {
        &self.path.arms
    }

    pub fn is_representable(&self) -> bool {
        self.complexity.is_finite()
    }

    pub fn build(id: impl Into<String>, spec: ComparatorSpec, kernel: &KernelHandle, model: &LossModel) -> Result<Self> {
        let states = lift(&spec, kernel, model)?;
        let path = ComparatorPath::resolve(kernel, states, &model.context_stream())?;
        let complexity = complexity(kernel, &path);
        Ok(Comparator { id: id.into(), spec, path, complexity })
    }
}

fn arm_sequence(spec: &ComparatorSpec, model: &LossModel) -> Result<Vec<usize>> {
    let horizon = model.horizon();
    let m = model.arms();
    let arms: Vec<usize> = match spec {
        ComparatorSpec::Fixed { arm } => vec![*arm; horizon],
        ComparatorSpec::Sequence { arms } => {
            if arms.len() != horizon {
                return Err(Error::Config(format!(
                    "arm sequence has {} entries for horizon {horizon}",
                    arms.len()
                )));
            }
            arms.clone()
        }
        ComparatorSpec::Schedule { segments } => {
            if segments.first().map(|s| s.0) != Some(1) || segments.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(Error::Config("schedule must start at round 1 with increasing starts".into()));
            }
            (1..=horizon)
                .map(|t| segments[segments.partition_point(|s| s.0 <= t) - 1].1)
                .collect()
        }
        ComparatorSpec::Mapping { mapping } => {
            let stream = model.context_stream();
            stream
                .iter()
                .map(|c| match c {
                    Some(c) if *c < mapping.len() => Ok(mapping[*c]),
                    _ => Err(Error::Config("mapping comparator needs a contextual environment with matching contexts".into())),
                })
                .collect::<Result<_>>()?
        }
        ComparatorSpec::Periodic { pattern } => {
            if pattern.is_empty() {
                return Err(Error::Config("periodic comparator needs a nonempty pattern".into()));
            }
            (1..=horizon).map(|t| pattern[(t - 1) % pattern.len()]).collect()
        }
        ComparatorSpec::EnvironmentBest => (1..=horizon).map(|t| model.best_arm(t)).collect(),
    };
    if let Some(bad) = arms.iter().find(|a| **a >= m) {
        return Err(Error::Config(format!("comparator arm {} outside 1..={m}", bad + 1)));
    }
    Ok(arms)
}

fn native_spec(spec: &ComparatorSpec, model: &LossModel) -> ComparatorSpec {
    if *spec != ComparatorSpec::EnvironmentBest {
        return spec.clone();
    }
    use crate::environments::LossFamily;
    match model.family() {
        LossFamily::Contextual { mapping, .. } => ComparatorSpec::Mapping { mapping: mapping.clone() },
        LossFamily::Periodic { pattern, .. } => ComparatorSpec::Periodic { pattern: pattern.clone() },
        LossFamily::FixedGap { best, .. } | LossFamily::DriftingScale { best, .. } => ComparatorSpec::Fixed { arm: *best },
        LossFamily::Switching { .. } => spec.clone(),
    }
}

/// Class path of a comparator under `kernel`. Native descriptions (a
/// mapping for the contextual family, a pattern for the periodic one) map to
/// a constant class; everything else is lifted from its arm sequence.
fn lift(spec: &ComparatorSpec, kernel: &KernelHandle, model: &LossModel) -> Result<Vec<ClassState>> {
    let spec = native_spec(spec, model);
    let arms = arm_sequence(&spec, model)?;
    let horizon = arms.len();
    let contexts = model.context_stream();
    Ok(match kernel.family() {
        KernelFamily::Fixed => arms.iter().map(|&arm| ClassState::Fixed { arm }).collect(),
        KernelFamily::Switching => {
            let mut age = 0;
            arms.iter()
                .enumerate()
                .map(|(i, &arm)| {
                    age = if i > 0 && arms[i - 1] == arm { age + 1 } else { 1 };
                    ClassState::Switching { arm, age }
                })
                .collect()
        }
        KernelFamily::Contextual => {
            let n = kernel.contexts_len();
            match &spec {
                ComparatorSpec::Mapping { mapping } if mapping.len() == n => {
                    vec![ClassState::Contextual { mapping: mapping.clone() }; horizon]
                }
                ComparatorSpec::Fixed { arm } => vec![ClassState::Contextual { mapping: vec![*arm; n] }; horizon],
                _ => {
                    let mut mapping = vec![arms[0]; n];
                    arms.iter()
                        .zip(&contexts)
                        .map(|(&arm, c)| {
                            let c = c.ok_or_else(|| {
                                Error::Config("contextual kernel needs a contextual environment".into())
                            })?;
                            if c >= n {
                                return Err(Error::Config("environment context outside the kernel's alphabet".into()));
                            }
                            mapping[c] = arm;
                            Ok(ClassState::Contextual { mapping: mapping.clone() })
                        })
                        .collect::<Result<_>>()?
                }
            }
        }
        KernelFamily::Periodic => match &spec {
            ComparatorSpec::Periodic { pattern } if pattern.len() <= kernel.max_period() => {
                vec![ClassState::Periodic { pattern: pattern.clone() }; horizon]
            }
            _ => arms.iter().map(|&arm| ClassState::Periodic { pattern: vec![arm] }).collect(),
        },
    })
}
