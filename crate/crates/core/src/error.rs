use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("heralding detector is degenerate (trigger probability reached 1 at n = {n})")]
    DegenerateDetector { n: usize },

    #[error("series did not converge within {cap} terms")]
    NoConvergence { cap: usize },

    #[error("sqrt(delta_k p_k) series diverges: term ratio {ratio} >= 1")]
    DivergentSeries { ratio: f64 },

    #[error("nontriggered gain is zero")]
    ZeroGain,

    #[error("bound is vacuous: {0}")]
    VacuousBound(&'static str),

    #[error("no omega in [0, {max}] satisfies the tail condition")]
    NoSolution { max: f64 },

    #[error("every grid point yields a zero key length")]
    AllVacuous,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check(cond: bool, name: &'static str, value: f64, reason: &'static str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason,
        })
    }
}
