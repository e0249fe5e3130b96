//! Error type shared by every module in this crate.
//!
//! Variants are grouped by how a caller should react: shape/index/contract
//! errors indicate a broken invariant inside the library or its inputs,
//! parse/schema/io errors indicate bad data files, and config errors indicate
//! a bad run configuration.

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Operand shapes are incompatible for an operation. Names both shapes.
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// An id or position is outside its valid range.
    #[error("{what} index {index} out of range (bound {bound})")]
    Index {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    /// A documented precondition was violated by the caller or by corrupt state.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Malformed compact text such as an MR string. `pos` is a 0-based char offset.
    #[error("parse error at position {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    /// A placeholder token has no matching slot in the MR it is being
    /// relexicalized against.
    #[error("unresolved placeholder {token}")]
    UnresolvedPlaceholder { token: String },

    /// A data file line does not match the expected record schema.
    #[error("schema error at line {line}: {msg}")]
    Schema { line: usize, msg: String },

    /// Bad run configuration (unknown key, invalid value, conflicting options).
    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Error {
        Error::Contract(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Error {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
