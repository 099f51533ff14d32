use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Longitudinal speed too low for slip-angle or linearization math.
    #[error("degenerate speed: vx = {vx} m/s is below the {min} m/s threshold")]
    DegenerateSpeed { vx: f64, min: f64 },

    /// A vertical load went non-positive (vehicle leaving the road surface).
    #[error("rollover regime: wheel {wheel} vertical load {fz} N is non-positive (ax={ax}, ay={ay})")]
    RolloverRegime {
        wheel: &'static str,
        fz: f64,
        ax: f64,
        ay: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Riccati solve failed: {reason} (residual {residual:.3e})")]
    RiccatiSolve { reason: String, residual: f64 },

    #[error("QP solve failed: {0}")]
    QpSolve(String),

    #[error("scenario aborted at t = {t:.3} s: {source}")]
    ScenarioAborted {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
