use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("invalid lattice description: {0}")]
    InvalidLattice(String),
    #[error("path count {count} exceeds the configured cap {cap}")]
    PathCap { count: usize, cap: usize },
    #[error("date index {date} out of range (terminal index {terminal})")]
    DateOutOfRange { date: usize, terminal: usize },
    #[error("measure does not match the lattice: {0}")]
    IndexMismatch(String),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("epsilon must lie in (0, 1), got {0}")]
    EpsilonOutOfRange(f64),
    #[error("measure is not calibrated: |E[g_{option}]| = {value:e}")]
    Uncalibrated { option: usize, value: f64 },
    #[error("no martingale Y path reaches g on X-path {x_path}")]
    InfeasiblePin { x_path: usize },
    #[error("survival process hits zero at date {date} (vertex {vertex}); apply epsilon-modification first")]
    SurvivalExhausted { date: usize, vertex: usize },
    #[error("process is not adapted at date {date}, vertex {vertex}")]
    NotAdapted { date: usize, vertex: usize },
    #[error("stopping rule count {count} exceeds the cap {cap}")]
    RuleCap { count: u128, cap: u128 },
    #[error("model class is empty: {0}")]
    InfeasibleClass(String),
    #[error("invalid linear program: {0}")]
    InvalidLp(String),
    #[error("linear program solver failed: {0}")]
    Solver(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("resolution level {requested} exceeds available level {available}")]
    Resolution { requested: u32, available: u32 },
    #[error("time {t} is too small for the difference-quotient window")]
    WindowTooLarge { t: f64 },
    #[error("value chain aborted at {stage}")]
    ChainAborted {
        stage: String,
        partial: Box<crate::solvers::ValueReport>,
        source: Box<Error>,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
