//! End-to-end episodes, regret accounting, bound evaluation and the
//! brute-force reference.

pub mod batch;
pub mod bounds;
pub mod comparators;
pub mod episode;
pub mod ledger;
pub mod oracle;
pub mod verify;

pub use batch::{mean_std, run_jobs, run_jobs_sequential, seed_jobs, EpisodeJob};
pub use bounds::{bound_rhs, BoundId, BoundInputs, BoundReport, BoundValue};
pub use comparators::{Comparator, ComparatorSpec};
pub use episode::{auto_budget, run_episode, AuditPolicy, EpisodeConfig};
pub use ledger::{expected_regret, AuditViolation, RegretLedger, RoundRecord};
pub use oracle::{brute_force_oracle, ORACLE_PATH_CAP};
