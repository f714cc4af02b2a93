use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: u64,
        message: String,
    },

    #[error("{source_name}{}: schema violation in field `{field}`: {message}", line_suffix(*line))]
    Schema {
        source_name: String,
        line: Option<u64>,
        field: String,
        message: String,
    },

    #[error("{source_name}:{line}: duplicate row for run `{run_id}`, benchmark `{benchmark}`, k {}", k.map_or("-".to_string(), |k| k.to_string()))]
    Duplicate {
        source_name: String,
        line: u64,
        run_id: String,
        benchmark: String,
        k: Option<u32>,
    },

    #[error("{form} fit on `{benchmark}`: {source}")]
    Fit {
        form: String,
        benchmark: String,
        #[source]
        source: scalelaw_core::Error,
    },

    #[error(transparent)]
    Core(#[from] scalelaw_core::Error),

    #[error("{0}")]
    Usage(String),
}

fn line_suffix(line: Option<u64>) -> String {
    line.map_or_else(String::new, |l| format!(":{l}"))
}

impl Error {
    /// Process exit status: 1 for usage errors, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
