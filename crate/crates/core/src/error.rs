use thiserror::Error;

/// Errors raised by the planning library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate range for {name}: lower {lower} > upper {upper}")]
    DegenerateRange { name: &'static str, lower: f64, upper: f64 },

    #[error("zero range between agent and radar")]
    ZeroRange,

    #[error("probability {0} outside (0, 1)")]
    ProbabilityOutOfRange(f64),

    #[error("parameter {param} = {t} outside the domain [{lo}, {hi}]")]
    OutOfDomain { param: &'static str, t: f64, lo: f64, hi: f64 },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("rank-deficient measurement geometry")]
    RankDeficient,

    #[error("stationary trajectory point (zero velocity)")]
    Stationary,

    #[error("underdetermined fit: {points} points for {controls} control points")]
    Underdetermined { points: usize, controls: usize },

    #[error("coincident generators")]
    CoincidentGenerators,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("no path between start and goal")]
    Disconnected,

    #[error("no feasible solution: {0}")]
    Infeasible(&'static str),

    #[error("config parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
