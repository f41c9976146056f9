use thiserror::Error;

pub type Result<T> = std::result::Result<T, QcError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QcError {
    #[error("Jacobian determinant {0} is not positive")]
    NonPositiveDeterminant(f64),
    #[error("matrix is singular")]
    Singular,
    #[error("dimension {0} is outside the supported range 2..=4")]
    UnsupportedDimension(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("determinant fell to {min_det:e}, below the floor {floor:e}")]
    DeterminantCollapse { min_det: f64, floor: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),
    #[error("point lies at the excluded origin")]
    OriginExcluded,
    #[error("point lies on the excluded axis r = 0")]
    AxisExcluded,
    #[error("point lies within the excluded seam band")]
    SeamExcluded,
    #[error("point {0:?} is outside the map's domain: {1}")]
    GuardViolation(Vec<f64>, String),
    #[error("all rows of the flow field are degenerate (|field| = {0:e})")]
    AllRowsDegenerate(f64),
    #[error("integration stage left the map's domain: {0}")]
    StepFailure(String),
    #[error("trajectory switched rows; recovery identity needs a single row")]
    RowSwitched,
    #[error("tangent image is degenerate at this point")]
    DegenerateTangentImage,
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown map id `{0}`")]
    UnknownMap(String),
    #[error("unknown verification suite `{0}`")]
    UnknownSuite(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for QcError {
    fn from(e: std::io::Error) -> Self {
        QcError::Io(e.to_string())
    }
}

impl From<csv::Error> for QcError {
    fn from(e: csv::Error) -> Self {
        QcError::Io(e.to_string())
    }
}
