use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("green kernel evaluated at coincident points")]
    CoincidentPoints,
    #[error("region exceeds the grid: {0}")]
    OutsideGrid(String),
    #[error("every cell is masked")]
    AllMasked,
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("time step {dt:e} exceeds the stable bound {bound:e}")]
    Cfl { dt: f64, bound: f64 },
    #[error("negative density {0:e} after update")]
    Negativity(f64),
    #[error("iteration stagnated after {iterations} iterations at relative residual {residual:e}")]
    Stagnation { iterations: usize, residual: f64 },
    #[error("coercivity probe ratio {0} below 0.9; grid too coarse")]
    Coercivity(f64),
    #[error("malformed input: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Cfl { .. } | Error::Negativity(_) | Error::Stagnation { .. } | Error::Coercivity(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
