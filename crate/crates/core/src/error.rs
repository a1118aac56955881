use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Bad call arguments: dimension mismatches, empty grids, nonpositive data.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A constructor precondition was violated.
    #[error("invalid construction: {0}")]
    Construction(String),

    /// Time outside the domain `[t0, +inf)` of a schedule.
    #[error("time {t} lies before the initial time {t0}")]
    Domain { t: f64, t0: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The integrator ran out of its step budget before reaching `t_end`.
    #[error("integration stopped at t = {t} after {steps} steps without reaching t_end")]
    Divergence { t: f64, steps: usize, state: Vec<f64> },

    /// A state component became non-finite.
    #[error("state blew up (non-finite value) at t = {t}")]
    BlowUp { t: f64 },
}

pub(crate) fn check_dim(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::Argument(format!(
            "{what} has dimension {got}, expected {expected}"
        )));
    }
    Ok(())
}
