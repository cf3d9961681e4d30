use thiserror::Error;

/// Errors raised by the plant models, the controller and the loaders.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("drive cycle needs at least 2 samples, got {0}")]
    EmptyCycle(usize),

    #[error("line {line}: time {time} does not increase past previous sample {previous}")]
    Ordering { line: usize, time: f64, previous: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("battery pack depleted: effective source voltage {v_eff:.3} V")]
    DepletedPack { v_eff: f64 },

    #[error("supercapacitor bank unavailable: {0}")]
    SupercapUnavailable(String),

    #[error("polynomial order {order} needs more than {needed} samples, window has {window}")]
    OrderTooHigh { order: usize, needed: usize, window: usize },

    #[error("least-squares system is rank deficient")]
    SingularFit,

    #[error("no admissible window: history of {history} samples is too short")]
    InsufficientHistory { history: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("series too short: need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("rule base does not cover input (preq={preq}, socbat={socbat}, socsc={socsc})")]
    Coverage { preq: f64, socbat: f64, socsc: f64 },

    #[error("per-cycle capacity loss must be positive, got {0}")]
    UndefinedLife(f64),

    #[error("simulation aborted at step {step}: {source}\nstate: {state}")]
    Aborted {
        step: usize,
        #[source]
        source: Box<Error>,
        state: String,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config: {0}")]
    Config(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
