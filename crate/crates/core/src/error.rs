use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("dimension mismatch in layer {layer}: {detail}")]
    DimensionMismatch { layer: usize, detail: String },

    #[error("invalid interval [{lo}, {hi}] for {what}")]
    Interval { what: String, lo: f64, hi: f64 },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("input has length {got}, expected {expected}")]
    InputLength { expected: usize, got: usize },

    #[error("unknown variable id {0}")]
    UnknownVariable(usize),

    #[error("inverted bounds for variable '{name}': [{lo}, {hi}]")]
    InvertedBounds { name: String, lo: f64, hi: f64 },

    #[error("duplicate name '{0}'")]
    DuplicateName(String),

    #[error("invalid variable '{name}': {detail}")]
    InvalidVariable { name: String, detail: String },

    #[error("infinite bound where a finite big-M is required (layer {layer}, neuron {neuron})")]
    InfiniteBound { layer: usize, neuron: usize },

    #[error("invalid formulation: {0}")]
    InvalidFormulation(String),

    #[error("partition count {k} exceeds fan-in {fan_in} (layer {layer}, neuron {neuron})")]
    PartitionCount {
        layer: usize,
        neuron: usize,
        k: usize,
        fan_in: usize,
    },

    #[error("MPS error at line {line}: {detail}")]
    Mps { line: usize, detail: String },

    #[error("solver error: {0}")]
    Solver(String),

    #[error("activation pattern budget exceeded: {patterns} patterns > {budget}")]
    PatternBudget { patterns: u128, budget: u128 },

    #[error("invalid attack: {0}")]
    InvalidAttack(String),

    #[error("invalid training problem: {0}")]
    InvalidTraining(String),

    #[error("unsupported loss '{0}': only linear losses (l1, hinge) can be encoded")]
    UnsupportedLoss(String),

    #[error("result has no incumbent")]
    NoIncumbent,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
