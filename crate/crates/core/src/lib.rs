//! Exponential-weights selection against structured comparator classes.
//!
//! The learner keeps one log-domain weight per equivalence class of
//! comparator sequences (see [`kernels`]), turns them into arm
//! probabilities, updates with full-information or bandit feedback and
//! moves the mass along the class kernel with a learning-rate power
//! (see [`engine`] and [`schedules`]). [`harness`] runs whole episodes
//! against the loss generators in [`environments`] and evaluates the
//! matching regret bounds.
//!
//! ```
//! use compete::environments::LossModel;
//! use compete::harness::{run_episode, Comparator, ComparatorSpec, EpisodeConfig};
//! use compete::kernels::KernelHandle;
//! use compete::schedules::Mode;
//!
//! let kernel = KernelHandle::fixed(3)?;
//! let env = LossModel::fixed_gap(3, 1.0, 200)?;
//! let best = Comparator::build("best", ComparatorSpec::EnvironmentBest, &kernel, &env)?;
//! let cfg = EpisodeConfig::new(Mode::FullMinShift, best.complexity, 7);
//! let ledger = run_episode(&kernel, &env, std::slice::from_ref(&best), &cfg)?;
//! assert!(ledger.regret(0) < 200.0 * 2.0 / 3.0);
//! # Ok::<(), compete::Error>(())
//! ```

pub mod engine;
pub mod environments;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod numerics;
pub mod schedules;

pub use error::{AuditCheck, Error, Result};
pub use kernels::{ComparatorKernel, KernelFamily, KernelHandle};
pub use schedules::Mode;
