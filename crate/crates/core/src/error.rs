use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is singular to working precision (pivot column {column})")]
    Singular { column: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("Jacobian factorization failed: {0}")]
    Singular(LinalgError),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("probe column {column}: {source}")]
    Probe {
        column: usize,
        #[source]
        source: Box<SolverError>,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CircuitError {
    #[error("ground node `{0}` is not declared")]
    MissingGround(String),
    #[error("component `{component}` references undeclared node `{node}`")]
    DanglingNode { component: String, node: String },
    #[error("duplicate component id `{0}`")]
    DuplicateId(String),
    #[error("duplicate node name `{0}`")]
    DuplicateNode(String),
    #[error("node `{0}` has no components attached")]
    IsolatedNode(String),
    #[error("component `{component}`: {reason}")]
    InvalidComponent { component: String, reason: String },
    #[error("fault references unknown component `{0}`")]
    UnknownFaultTarget(String),
    #[error("beta has length {got}, expected {expected}")]
    BetaLength { got: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LocalizeError {
    #[error("probe direction must have unit 2-norm, got {0}")]
    NotUnit(f64),
    #[error("direction has length {got}, expected {expected}")]
    Shape { got: usize, expected: usize },
    #[error("perturbation step must be > 0, got {0}")]
    Step(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

#[derive(Debug, Error)]
pub enum NetlistFormatError {
    #[error("netlist syntax: {0}")]
    Syntax(String),
    #[error("component `{component}`: {reason}")]
    Schema { component: String, reason: String },
    #[error("netlist serialization: {0}")]
    Serialize(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RangeError {
    #[error("value range `{0}` must look like START:STOP:log|lin[:COUNT]")]
    Shape(String),
    #[error("value range `{text}`: {reason}")]
    Invalid { text: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepperError {
    #[error("invalid stepper configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error("BDF history: {0}")]
    History(String),
}
