use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("{what} index {index} out of range (limit {limit})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("length mismatch for {what}: expected {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("singular stiffness matrix: pivot {pivot:e} at reduced dof {dof} (diagonal {diagonal:e}); check supports")]
    SingularStiffness {
        dof: usize,
        pivot: f64,
        diagonal: f64,
    },

    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("eigensolver did not converge after {iterations} iterations (worst residual {residual:e})")]
    EigenNotConverged { iterations: usize, residual: f64 },

    #[error("no positive buckling load factor found")]
    NoPositiveEigenvalue,

    #[error("optimality-criteria bisection failed: {0}")]
    OcBracket(String),

    #[error("MMA subproblem failed: {0}")]
    MmaSubproblem(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("mismatched problems in comparison: {0} vs {1}")]
    MismatchedProblems(String, String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
