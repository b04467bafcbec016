use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("round {round}: kernel needs a context in 1..={contexts}, got {got:?}")]
    Context {
        round: usize,
        contexts: usize,
        got: Option<usize>,
    },

    #[error("round {round}: all arm weights collapsed to zero")]
    NumericalCollapse { round: usize },

    #[error("round {round}: assumption audit failed ({check}): {detail}")]
    Assumption {
        round: usize,
        check: AuditCheck,
        detail: String,
    },

    #[error("round {round} is outside 1..={horizon}")]
    RoundOutOfRange { round: usize, horizon: usize },

    #[error("selection probability of arm {arm} is zero")]
    ZeroProbability { arm: usize },

    #[error("oracle refused: {paths} class paths exceed the cap of {cap}")]
    OracleTooLarge { paths: u128, cap: u128 },

    #[error("internal error: {0}")]
    Internal(String),
}

/// Which runtime assumption an audit checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
pub enum AuditCheck {
    /// `-eta_{t-1} * phi_{t,m} <= 1`: the exponent the update applies.
    ExponentBound,
    /// `-eta_t * phi_{t,m} <= 1`: the same product with the rate fixed
    /// after round `t`'s statistics.
    CurrentExponentBound,
    /// `eta_t <= eta_{t-1}`.
    EtaMonotone,
    /// `eta_t * d_t <= W` (full) or `<= 1` (bandit).
    EtaRange,
    /// `q_m >= eps_t / M`.
    ExplorationFloor,
}

impl std::fmt::Display for AuditCheck {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AuditCheck::ExponentBound => "exponent-bound",
            AuditCheck::CurrentExponentBound => "current-exponent-bound",
            AuditCheck::EtaMonotone => "eta-monotone",
            AuditCheck::EtaRange => "eta-range",
            AuditCheck::ExplorationFloor => "exploration-floor",
        };
        f.write_str(s)
    }
}
