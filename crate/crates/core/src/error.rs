use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure carries a stable code (`E_...`) that the CLI surfaces verbatim.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("E_BAD_LINE: line {line}: {reason}")]
    BadLine { line: usize, reason: String },
    #[error("E_EMPTY: no valid embedding entries")]
    Empty,
    #[error("E_NONFINITE: line {line}: non-finite value `{value}`")]
    NonFinite { line: usize, value: String },
    #[error("E_UNKNOWN_TOKEN: token `{token}` (from name `{name}`) not in embedding table")]
    UnknownToken { token: String, name: String },
    #[error("E_EMPTY_NAME: name `{0}` has no tokens")]
    EmptyName(String),
    #[error("E_DUP_NAME: duplicate name `{0}`")]
    DupName(String),

    #[error("E_RAGGED_ROW: row {row}: expected {expected} cells, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("E_NONBINARY: row {row}, column `{column}`: value `{value}` is not 0 or 1")]
    NonBinary { row: usize, column: String, value: String },
    #[error("E_BAD_CELL: row {row}, column `{column}`: cannot parse `{value}`")]
    BadCell { row: usize, column: String, value: String },
    #[error("E_BAD_HEADER: {0}")]
    BadHeader(String),
    #[error("E_DUP_CLASS: duplicate class `{0}`")]
    DupClass(String),
    #[error("E_DUP_ATTR: duplicate attribute `{0}`")]
    DupAttr(String),
    #[error("E_TOO_FEW_CLASSES: need at least {needed} classes, found {found}")]
    TooFewClasses { needed: usize, found: usize },
    #[error("E_TOO_FEW_ATTRS: need at least one attribute")]
    TooFewAttrs,
    #[error("E_LENGTH_MISMATCH: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("E_ATTR_MISMATCH: attribute lists differ")]
    AttrMismatch,
    #[error("E_CLASS_COLLISION: class `{0}` present in both matrices")]
    ClassCollision(String),

    #[error("E_BAD_DIM: dimensions must be positive")]
    BadDim,
    #[error("E_DIM_MISMATCH: expected length {expected}, got {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("E_NONFINITE_INPUT: input vector contains a non-finite value")]
    NonFiniteInput,
    #[error("E_SHAPE_MISMATCH: parameter shapes disagree")]
    ShapeMismatch,
    #[error("E_VERSION: unsupported model format version {0}")]
    Version(u32),
    #[error("E_CORRUPT: {0}")]
    Corrupt(String),

    #[error("E_DEGENERATE_PROFILE: image `{0}` has all-zero posteriors")]
    DegenerateProfile(String),
    #[error("E_EMPTY_INDICATOR: indicator vector has no active attribute")]
    EmptyIndicator,
    #[error("E_ZERO_NORM: cosine of a zero-norm vector")]
    ZeroNorm,
    #[error("E_NO_CANDIDATES: candidate list is empty")]
    NoCandidates,
    #[error("E_MISSING_CLASS: candidate class `{0}` has no test images")]
    MissingClass(String),
    #[error("E_UNKNOWN_TRUE_CLASS: class `{0}` is not among the candidates")]
    UnknownTrueClass(String),
    #[error("E_K_TOO_LARGE: k={k} but only {available} pool members")]
    KTooLarge { k: usize, available: usize },

    #[error("E_MISSING_PROFILES: image-based training requires attribute profiles")]
    MissingProfiles,
    #[error("E_MISSING_PREDICATES: predicate-based training requires a predicate matrix")]
    MissingPredicates,
    #[error("E_UNKNOWN_MODE: no training objective named `{0}`")]
    UnknownMode(String),
    #[error("E_BAD_CONFIG: {0}")]
    BadConfig(String),

    #[error("E_ATTR_ORDER_MISMATCH: attribute columns {found:?} do not match expected {expected:?}")]
    AttrOrderMismatch { expected: Vec<String>, found: Vec<String> },
    #[error("E_OUT_OF_RANGE: row {row}, column `{column}`: posterior {value} outside [0,1]")]
    OutOfRange { row: usize, column: String, value: f64 },
    #[error("E_IO: {0}")]
    Io(String),
}

impl Error {
    /// The stable error code, e.g. `E_BAD_LINE`.
    pub fn code(&self) -> &'static str {
        use Error::*;
        match self {
            BadLine { .. } => "E_BAD_LINE",
            Empty => "E_EMPTY",
            NonFinite { .. } => "E_NONFINITE",
            UnknownToken { .. } => "E_UNKNOWN_TOKEN",
            EmptyName(_) => "E_EMPTY_NAME",
            DupName(_) => "E_DUP_NAME",
            RaggedRow { .. } => "E_RAGGED_ROW",
            NonBinary { .. } => "E_NONBINARY",
            BadCell { .. } => "E_BAD_CELL",
            BadHeader(_) => "E_BAD_HEADER",
            DupClass(_) => "E_DUP_CLASS",
            DupAttr(_) => "E_DUP_ATTR",
            TooFewClasses { .. } => "E_TOO_FEW_CLASSES",
            TooFewAttrs => "E_TOO_FEW_ATTRS",
            LengthMismatch(..) => "E_LENGTH_MISMATCH",
            AttrMismatch => "E_ATTR_MISMATCH",
            ClassCollision(_) => "E_CLASS_COLLISION",
            BadDim => "E_BAD_DIM",
            DimMismatch { .. } => "E_DIM_MISMATCH",
            NonFiniteInput => "E_NONFINITE_INPUT",
            ShapeMismatch => "E_SHAPE_MISMATCH",
            Version(_) => "E_VERSION",
            Corrupt(_) => "E_CORRUPT",
            DegenerateProfile(_) => "E_DEGENERATE_PROFILE",
            EmptyIndicator => "E_EMPTY_INDICATOR",
            ZeroNorm => "E_ZERO_NORM",
            NoCandidates => "E_NO_CANDIDATES",
            MissingClass(_) => "E_MISSING_CLASS",
            UnknownTrueClass(_) => "E_UNKNOWN_TRUE_CLASS",
            KTooLarge { .. } => "E_K_TOO_LARGE",
            MissingProfiles => "E_MISSING_PROFILES",
            MissingPredicates => "E_MISSING_PREDICATES",
            UnknownMode(_) => "E_UNKNOWN_MODE",
            BadConfig(_) => "E_BAD_CONFIG",
            AttrOrderMismatch { .. } => "E_ATTR_ORDER_MISMATCH",
            OutOfRange { .. } => "E_OUT_OF_RANGE",
            Io(_) => "E_IO",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
