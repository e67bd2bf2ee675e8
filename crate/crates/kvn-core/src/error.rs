use thiserror::Error;

/// Unified error type for grid construction, field algebra, solvers, and charts.
#[derive(Error, Debug)]
pub enum KvnError {
    #[error("axis configuration: {0}")]
    AxisConfig(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value at flat index {index} in {context}")]
    NonFinite { index: usize, context: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("state norm {norm:.3e} below degeneracy threshold")]
    DegenerateState { norm: f64 },

    #[error("operation undefined on an (effectively) zero state, norm {norm:.3e}")]
    ZeroState { norm: f64 },

    #[error("operator failed self-adjointness check: residual {residual:.3e} exceeds {tolerance:.1e}")]
    NotSelfAdjoint { residual: f64, tolerance: f64 },

    #[error("eigensolver did not converge: {0}")]
    Convergence(String),

    #[error("dense materialization refused: {points} grid points exceeds cap {cap}")]
    DenseTooLarge { points: usize, cap: usize },

    #[error(
        "no joint eigenstate found: best residuals lambda {lambda_residual:.3e}, energy {energy_residual:.3e}; try a smaller width or finer grid"
    )]
    NoJointEigenstate {
        lambda_residual: f64,
        energy_residual: f64,
    },

    #[error("bipartition invalid: {0}")]
    Bipartition(String),

    #[error("energy {energy} too close to a separatrix of the system")]
    SeparatrixCrossing { energy: f64 },

    #[error("action is not monotone over the requested energy range: {0}")]
    NonMonotoneAction(String),

    #[error("chart domain violation: {0}")]
    ChartDomain(String),

    #[error("state support escapes the target grid: escaped mass fraction {escaped_mass:.3e}")]
    SupportEscape { escaped_mass: f64 },

    #[error(
        "eigenspace is not a pure winding sector: best sector fraction {best_fraction:.3} (winding {best_winding})"
    )]
    MixedEigenspace {
        best_winding: i64,
        best_fraction: f64,
    },

    #[error("table i/o: {0}")]
    TableIo(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, KvnError>;
