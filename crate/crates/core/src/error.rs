use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroupError {
    #[error("closure under products exceeds the order cap of {cap}")]
    ClosureExceeded { cap: usize },
    #[error("generator {index} is not invertible")]
    NotInvertible { index: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not square")]
    NotSquare,
    #[error("no generators or matrices supplied")]
    Empty,
    #[error("the first matrix of a representation must be the identity")]
    IdentityNotFirst,
    #[error("expected {expected} generator images, got {got}")]
    GeneratorCount { expected: usize, got: usize },
    #[error("representations cover groups of different order")]
    GroupOrderMismatch,
    #[error("homomorphism property fails for elements ({a}, {b})")]
    NotHomomorphism { a: usize, b: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetworkError {
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error("hidden layer {layer} representation is not a permutation action")]
    NonPermutationHiddenAction { layer: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("expected {expected} parameters, got {got}")]
    ParameterCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AutodiffError {
    #[error("gradient requested through unsupported primitive `{0}`")]
    UnsupportedPrimitive(&'static str),
    #[error("loss must be a 1x1 scalar, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvError {
    #[error("environment `{0}` cannot expose its noise stream")]
    NoiseNotInjectable(String),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error("unknown environment `{0}`")]
    UnknownEnv(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PpoError {
    #[error("non-finite loss at iteration {iteration}, epoch {epoch}: surrogate={surrogate}, value={value}, entropy={entropy}")]
    NonFiniteLoss {
        iteration: usize,
        epoch: usize,
        surrogate: f64,
        value: f64,
        entropy: f64,
    },
    #[error("unknown algorithm `{0}` (expected ppo, ppoaug or ppoeqic)")]
    UnknownAlgo(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("advantages have not been computed for this buffer")]
    AdvantagesMissing,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("symmetry index undefined: both metrics are zero")]
    BothZero,
    #[error("symmetry index requires non-negative finite metrics")]
    InvalidInput,
    #[error("cost of transport undefined: accumulated base speed is zero")]
    ZeroDisplacement,
    #[error("no records match the filter")]
    EmptyFilter,
    #[error("signal lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
}
