use thiserror::Error;

/// Construction and argument errors for the coding layer. Decode failures are
/// not errors; see [`crate::bcc::DecodeFailure`].
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("value space must contain at least one value")]
    EmptyValueSpace,
    #[error("decoding bound must be at least 1")]
    ZeroBound,
    #[error("field degree {0} is not supported")]
    FieldDegree(u32),
    #[error("codeword of {bits} bits exceeds the cap of {cap} bits")]
    CodewordTooLarge { bits: usize, cap: usize },
    #[error("value {value} is outside the value space of size {size}")]
    ValueOutOfRange { value: u64, size: u64 },
    #[error("expected a {expected}-bit word, got {got} bits")]
    WidthMismatch { expected: usize, got: usize },
    #[error("exhaustive search over {count} subsets exceeds the cap of {cap}")]
    SearchTooLarge { count: u128, cap: u128 },
    #[error("message layout needs {needed} bits but the frame has {width}")]
    LayoutOverflow { needed: usize, width: usize },
    #[error("layout has no field named {0:?}")]
    UnknownField(String),
}

/// Errors raised by the round engine. Running out of rounds is not one of
/// these; it is reported through [`crate::sim::RunStatus`].
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("round {round}: node {node} used a {got}-bit frame, expected {expected}")]
    WidthMismatch {
        round: u64,
        node: usize,
        expected: usize,
        got: usize,
    },
    #[error("round {round}: node {node} tried to transmit and listen on a half-duplex radio")]
    IllegalAction { round: u64, node: usize },
    #[error("topology error: {0}")]
    Topology(String),
    #[error("protocol precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
}
