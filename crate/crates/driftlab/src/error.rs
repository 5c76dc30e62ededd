//! Error type shared by all modules.

use std::fmt;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the numerical pipeline and file formats.
#[derive(Debug)]
pub enum Error {
    /// Two operands have incompatible shapes.
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    /// An operation produced or received a non-finite value.
    NonFinite { op: &'static str },
    /// An input that must be nonempty was empty.
    EmptyInput(&'static str),
    /// A vector with zero norm was passed where a direction is required.
    ZeroVector { index: Option<usize> },
    /// A parameter is outside its valid range.
    InvalidParameter { name: &'static str, message: String },
    /// A statistical series is degenerate (zero variance, all ranks tied).
    DegenerateSeries(&'static str),
    /// Fewer data points than the operation requires.
    InsufficientData {
        what: &'static str,
        needed: usize,
        got: usize,
    },
    /// No sign change of the residual over the requested bracket.
    NoSignChange { g_lo: f64, g_hi: f64 },
    /// A dump file did not start with the expected magic bytes.
    DumpBadMagic { found: [u8; 4] },
    /// A dump file carries an unsupported format version.
    DumpBadVersion { found: u32 },
    /// A dump file is shorter or longer than its header declares.
    DumpLengthMismatch { expected: u64, actual: u64 },
    /// Underlying I/O failure.
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, left, right } => write!(
                f,
                "{op}: shape mismatch {}x{} vs {}x{}",
                left.0, left.1, right.0, right.1
            ),
            Error::NonFinite { op } => write!(f, "{op}: non-finite value"),
            Error::EmptyInput(what) => write!(f, "empty input: {what}"),
            Error::ZeroVector { index: Some(i) } => {
                write!(f, "zero vector at index {i}: direction undefined")
            }
            Error::ZeroVector { index: None } => write!(f, "zero vector: direction undefined"),
            Error::InvalidParameter { name, message } => write!(f, "invalid {name}: {message}"),
            Error::DegenerateSeries(what) => write!(f, "degenerate series: {what}"),
            Error::InsufficientData { what, needed, got } => {
                write!(f, "{what}: need at least {needed}, got {got}")
            }
            Error::NoSignChange { g_lo, g_hi } => write!(
                f,
                "no sign change over bracket: g(lo)={g_lo}, g(hi)={g_hi}"
            ),
            Error::DumpBadMagic { found } => {
                write!(f, "bad dump magic {:?}, expected \"HSD1\"", found)
            }
            Error::DumpBadVersion { found } => {
                write!(f, "unsupported dump version {found}, expected 1")
            }
            Error::DumpLengthMismatch { expected, actual } => write!(
                f,
                "dump length mismatch: header implies {expected} bytes, file has {actual}"
            ),
            Error::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl Error {
    /// Process exit code convention: 1 for precondition violations, 2 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 2,
            _ => 1,
        }
    }
}
