use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error class, used by front ends to pick exit codes and HTTP statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Input did not satisfy a documented schema or precondition.
    Validation,
    /// A numerical routine could not produce a result.
    Engine,
    /// Reading or writing a file failed.
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema violation at {location}: {message}")]
    Schema { location: String, message: String },

    #[error("duplicate patient id {0:?}")]
    DuplicatePatient(String),

    #[error("rating out of range [0,10] for patient {patient:?} field {field}: {value}")]
    RatingOutOfRange {
        patient: String,
        field: String,
        value: i64,
    },

    #[error("negative dose for patient {patient:?} field {field}: {value}")]
    NegativeDose {
        patient: String,
        field: String,
        value: f64,
    },

    #[error("cumulative DVH not monotone for patient {patient:?} organ {organ}: {detail}")]
    Monotonicity {
        patient: String,
        organ: String,
        detail: String,
    },

    #[error("patient {patient:?} has no dose data for organ {organ}")]
    MissingOrgan { patient: String, organ: String },

    #[error("invalid value for {field}: {message}")]
    Invalid { field: String, message: String },

    #[error("unknown {what} {name:?}")]
    Unknown { what: &'static str, name: String },

    #[error("input contains non-finite values")]
    NonFinite,

    #[error("need more rows than clusters (rows = {rows}, k = {k})")]
    TooFewRows { rows: usize, k: usize },

    #[error("EM failed to produce {k} non-empty components after {attempts} restarts")]
    EmFailure { k: usize, attempts: usize },

    #[error("outcome has a single class ({0} observations)")]
    SingleClass(usize),

    #[error("design matrix is rank deficient; column {column} ({name}) is linearly dependent")]
    RankDeficient { column: usize, name: String },

    #[error("need more observations than parameters (n = {n}, p = {p})")]
    Underdetermined { n: usize, p: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NonFinite
            | Error::EmFailure { .. }
            | Error::SingleClass(_)
            | Error::RankDeficient { .. }
            | Error::Underdetermined { .. }
            | Error::TooFewRows { .. } => ErrorKind::Engine,
            Error::Io { .. } => ErrorKind::Io,
            _ => ErrorKind::Validation,
        }
    }

    /// Name of the offending field, when the error can be pinned to one.
    pub fn field(&self) -> Option<String> {
        match self {
            Error::Schema { location, .. } => Some(location.clone()),
            Error::RatingOutOfRange { field, .. } | Error::NegativeDose { field, .. } => {
                Some(field.clone())
            }
            Error::Monotonicity { organ, .. } | Error::MissingOrgan { organ, .. } => {
                Some(organ.clone())
            }
            Error::Invalid { field, .. } => Some(field.clone()),
            Error::Unknown { what, .. } => Some((*what).to_string()),
            Error::DuplicatePatient(_) => Some("id".to_string()),
            _ => None,
        }
    }

    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn unknown(what: &'static str, name: impl Into<String>) -> Self {
        Error::Unknown {
            what,
            name: name.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
