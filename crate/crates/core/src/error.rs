use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Ingest { line: usize, msg: String },
    #[error("unknown entity id {0}")]
    UnknownEntity(u32),
    #[error("unknown relation id {0}")]
    UnknownRelation(u32),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("negative sampling exhausted after {0} rejections")]
    SamplingExhausted(usize),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("empty graph")]
    EmptyGraph,
    #[error("empty test set")]
    EmptyTestSet,
    #[error("empty evaluation input")]
    EmptyEvaluation,
    #[error("no entity linked in question")]
    NoEntityLinked,
    #[error("model distribution not normalized (sum = {0})")]
    UnnormalizedDistribution(f64),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("generator returned status {0}")]
    HttpStatus(u16),
    #[error("malformed generator response: {0}")]
    Decode(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("pipeline stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
