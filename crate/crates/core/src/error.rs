use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Configuration failed validation. Every violated invariant is listed;
    /// there is no partial acceptance.
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    InvalidConfig(Vec<String>),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("workload set is empty")]
    EmptyWorkloadSet,

    #[error("CRI ranking requires at least 2 candidates, got {0}")]
    TooFewCandidates(usize),

    #[error("matrix shape mismatch: expected {expected}, found {found}")]
    MatrixShape { expected: String, found: String },

    #[error("element {value} does not fit in {bits}-bit two's complement")]
    ElementOutOfRange { value: i32, bits: u8 },

    #[error("precision mode {mode} requires {expected} weight tiles, got {found}")]
    TileCountMismatch {
        mode: String,
        expected: usize,
        found: usize,
    },

    #[error("zero-tile book shape mismatch: expected (kt_raw={ekt}, nt={ent}, c={ec}), found (kt_raw={fkt}, nt={fnt}, c={fc})")]
    ZtbShapeMismatch {
        ekt: u64,
        ent: u64,
        ec: u64,
        fkt: u64,
        fnt: u64,
        fc: u64,
    },

    #[error("zero-tile book file is malformed: {0}")]
    ZtbFormat(String),

    #[error("psum bank overflow in legion {legion}: tile strip needs {needed} bytes per bank, bank size is {bank_bytes}")]
    PsumBankOverflow {
        legion: usize,
        needed: u64,
        bank_bytes: u64,
    },

    #[error("functional check failed: {mismatches} mismatching elements in {context}")]
    FunctionalMismatch { mismatches: u64, context: String },

    #[error("unsupported report format `{0}`")]
    UnsupportedFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
