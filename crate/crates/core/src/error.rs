use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid speaker parameters: {0}")]
    InvalidParams(String),
    #[error("invalid history state: {0}")]
    InvalidHistory(String),
    #[error("invalid meeting: {0}")]
    InvalidMeeting(String),
    #[error("every present member has zero speaking likelihood at turn {turn}")]
    AllZeroLikelihood { turn: usize },
    #[error("member {speaker} spoke at turn {turn} but the model gives that event zero probability")]
    ZeroProbabilityEvent { turn: usize, speaker: usize },

    #[error("trait `{0}` is constant over the training split")]
    DegenerateTrait(String),
    #[error("trait schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("cannot crop to {requested} turns, meeting has only {available}")]
    LengthExceeded { requested: usize, available: usize },
    #[error("pool of {pool} members cannot be split into teams of {team_size}")]
    IndivisiblePool { pool: usize, team_size: usize },

    #[error("regression design matrix is singular")]
    SingularDesign,
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("all paired differences are zero")]
    AllZeroDiffs,

    #[error("need at least {needed} teams, found {found}")]
    InsufficientTeams { needed: usize, found: usize },
    #[error("expected exactly {expected} teams, found {found}")]
    WrongTeamCount { expected: usize, found: usize },

    #[error("schema error: {0}")]
    Schema(String),
    #[error("referential error: {0}")]
    Referential(String),
    #[error("turn index gap: {0}")]
    Gap(String),
    #[error("absent speaker: {0}")]
    AbsentSpeaker(String),
    #[error("member never present: {0}")]
    NeverPresent(String),
    #[error("repeated speaker: {0}")]
    RepeatedSpeaker(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
