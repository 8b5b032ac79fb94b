use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate element geometry (jacobian determinant {det:e})")]
    SingularGeometry { det: f64 },
    #[error("non-positive deformation jacobian J = {j:e}")]
    NonPositiveJacobian { j: f64 },
    #[error("element {element}: {source}")]
    Element {
        element: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("singular matrix: pivot at row {pivot} has magnitude {value:e}")]
    SingularMatrix { pivot: usize, value: f64 },
    #[error("newton's method did not converge after {iterations} iterations (‖r‖∞ = {residual:e})")]
    NewtonNonConvergence { iterations: usize, residual: f64 },
    #[error("line search failed after {backtracks} backtracks")]
    LineSearch { backtracks: usize },
    #[error("infeasible subproblem: {0}")]
    Infeasible(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn in_element(self, element: usize) -> Self {
        Error::Element {
            element,
            source: Box::new(self),
        }
    }

    /// True when the error (possibly wrapped in an element error) signals an
    /// inverted element, which the line search treats as a rejected step.
    pub fn is_nonpositive_jacobian(&self) -> bool {
        match self {
            Error::NonPositiveJacobian { .. } => true,
            Error::Element { source, .. } => source.is_nonpositive_jacobian(),
            _ => false,
        }
    }
}
