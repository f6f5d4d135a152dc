//! Crate-wide error type.
//!
//! One enum covers every failure the library can report. The CLI maps
//! configuration problems to exit code 1 and everything else to exit code 2
//! via [`Error::exit_code`].

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes (or dimensions derived from them) do not line up.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A public operation produced a NaN or infinity.
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    /// An operation that needs data received none.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// A label does not fit the network's output dimension.
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    /// Margin-style losses need at least two classes to compare.
    #[error("margin loss requires at least two classes, got {num_classes}")]
    SingleClass { num_classes: usize },

    /// Fewer reference points than the requested neighborhood size.
    #[error("need at least {needed} reference points, have {have}")]
    TooFewReferences { needed: usize, have: usize },

    /// All k neighbor distances are equal; the MLE denominator vanishes.
    #[error("degenerate neighborhood: all {k} neighbor distances equal")]
    DegenerateNeighborhood { k: usize },

    /// A query coincides with a reference point (zero distance).
    #[error("duplicate point: zero distance within the neighborhood")]
    DuplicatePoint,

    /// Detector training needs at least one example of each class.
    #[error("detector training requires a non-empty {0} class")]
    EmptyClass(&'static str),

    /// A dataset or candidate pool cannot satisfy a selection request.
    #[error("requested {requested} attack targets but only {available} correctly classified samples available")]
    InsufficientTargets { requested: usize, available: usize },

    /// An IDX or weight file did not start with the expected magic number.
    #[error("bad magic number in {path}: got {got:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: String,
        got: u32,
        expected: u32,
    },

    /// A binary file was malformed beyond its magic number.
    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: String, reason: String },

    /// Anything wrong with a config file, a config value, or a CLI override.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code the CLI should use for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_errors_map_to_exit_code_1() {
        assert_eq!(Error::Config("bad key".into()).exit_code(), 1);
    }

    #[test]
    fn runtime_errors_map_to_exit_code_2() {
        assert_eq!(Error::DuplicatePoint.exit_code(), 2);
        let io = Error::from(std::io::Error::new(std::io::ErrorKind::NotFound, "gone"));
        assert_eq!(io.exit_code(), 2);
    }

    #[test]
    fn messages_carry_context() {
        let e = Error::TooFewReferences { needed: 21, have: 5 };
        assert_eq!(e.to_string(), "need at least 21 reference points, have 5");
        let e = Error::BadMagic {
            path: "images.idx".into(),
            got: 0xdeadbeef,
            expected: 0x0000_0803,
        };
        assert!(e.to_string().contains("0xdeadbeef"));
        assert!(e.to_string().contains("0x00000803"));
    }
}
