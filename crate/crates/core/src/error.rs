use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("query ({x}, {y}) lies outside the grid rectangle")]
    OutOfGrid { x: f64, y: f64 },
    #[error("stencil at node ({i}, {j}) with offset {k} leaves the grid")]
    StencilOutOfRange { i: usize, j: usize, k: i64 },
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("non-finite {what} at {location}")]
    NonFinite { what: &'static str, location: f64 },
    #[error("non-finite value at node ({i}, {j}) during sweep {sweep}")]
    SolverBlowup { i: usize, j: usize, sweep: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("payoff is not finite on path {path}")]
    PathNotFinite { path: usize },
    #[error("oracle failure: {0}")]
    Oracle(String),
    #[error("{0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
