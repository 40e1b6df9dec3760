use std::fmt;
use std::path::Path;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_IO: u8 = 2;
pub const EXIT_SHAPE: u8 = 3;
pub const EXIT_ALIGNMENT: u8 = 4;
/// An evaluation ran but missed `--min-p10`.
pub const EXIT_THRESHOLD: u8 = 5;

/// A failure carrying the process exit code it maps to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: u8,
    pub msg: String,
}

impl CliError {
    pub fn new(code: u8, msg: impl Into<String>) -> Self {
        CliError { code, msg: msg.into() }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Self::new(EXIT_CONFIG, msg)
    }

    /// Prefixes the message with the file it concerns.
    pub fn in_file(mut self, path: &Path) -> Self {
        self.msg = format!("{}: {}", path.display(), self.msg);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl std::error::Error for CliError {}

impl From<evgaze::Error> for CliError {
    fn from(e: evgaze::Error) -> Self {
        use evgaze::Error as E;
        let code = match &e {
            E::InvalidParameter(_) => EXIT_CONFIG,
            E::DimMismatch { .. } => EXIT_SHAPE,
            E::LengthMismatch(..) => EXIT_ALIGNMENT,
            E::Parse { .. } | E::NonMonotonic { .. } | E::OutOfBounds { .. } | E::Format(_) | E::Io(_) | E::Json(_) => {
                EXIT_IO
            }
        };
        CliError::new(code, e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::new(EXIT_IO, e.to_string()).in_file(path))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::new(EXIT_IO, e.to_string()).in_file(path))
}

/// Writes `contents`, creating missing parent directories.
pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    let io = |e: std::io::Error| CliError::new(EXIT_IO, e.to_string()).in_file(path);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, contents).map_err(io)
}
