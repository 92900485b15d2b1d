use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The damping denominator `|e1| + mu` vanished with a non-zero rate.
    #[error("singular input: e1 = {e1}, e2 = {e2} with mu = 0")]
    SingularInput { e1: f64, e2: f64 },

    #[error("time {t} is outside the reference profile domain [0, {t_end}]")]
    OutOfDomain { t: f64, t_end: f64 },

    #[error("invalid reference profile: {0}")]
    InvalidProfile(String),

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
