use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("genome length {actual} does not match problem size {expected}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("individual {index} has no fitness assigned")]
    UnsetFitness { index: usize },

    #[error("fitness already assigned for this generation")]
    FitnessAlreadyAssigned,

    #[error("partitions do not form a disjoint cover of {len} loci: {reason}")]
    InvalidCover { len: usize, reason: String },

    #[error("partition of {size} loci exceeds the enumeration cap of {cap}")]
    PartitionTooLarge { size: usize, cap: usize },

    #[error("population size {0} is too small for MDL scoring (need at least 2)")]
    PopulationTooSmall(usize),

    #[error("no evaluated individuals available for schema fitness estimation")]
    NoEvaluatedIndividuals,

    #[error("tournament size {s} exceeds population size {n}")]
    TournamentTooLarge { s: usize, n: usize },

    #[error("cannot parse problem `{0}` (expected onemax:<l> or trap:<m>x<k>[:d])")]
    ProblemSpec(String),

    #[error("bisection bracket expansion hit the cap of {cap} individuals")]
    BracketCap { cap: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
