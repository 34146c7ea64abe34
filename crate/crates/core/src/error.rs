//! Error type shared across the crate.
//!
//! Every fallible operation returns [`Error`]. Contract violations that a
//! caller can trigger through public APIs (mixed coefficient rings,
//! mismatched chart dimensions, malformed input text) are reported as typed
//! variants rather than panics, so the CLI can map them to exit codes.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Two operands live over different coefficient rings (polynomial jets
    /// vs. torus Fourier sums). There is no canonical mixed product.
    #[error("mixed coefficient rings: {0} vs {1}")]
    MixedCoefficientRings(&'static str, &'static str),

    /// Two operands disagree on the chart dimension 2n.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Two operands carry different truncation policies.
    #[error("truncation policy mismatch: {0}")]
    PolicyMismatch(String),

    /// A generator index lies outside 1..=2n.
    #[error("index {index} out of range 1..={dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    /// Text input failed to parse; `pos` is a byte offset into the input.
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    /// A parsed monomial exceeds the coefficient-degree cap.
    #[error("x-degree {degree} exceeds cap {max}")]
    DegreeOverflow { degree: u32, max: u32 },

    /// Division by a power of hbar would create a negative exponent in a
    /// context that requires formal power series (not Laurent) behaviour.
    #[error("hbar exponent would drop below zero: term has hbar^{have}, dividing by hbar^{divide}")]
    HbarUnderflow { have: i64, divide: i64 },

    /// An iteration failed to reach its fixed point within the expected
    /// number of steps (each step must raise the known weight by one).
    #[error("iteration failed to stabilize after {0} steps")]
    NonConvergence(usize),

    /// Chart data violates its invariants; each entry is one diagnostic.
    #[error("invalid chart: {}", .0.join("; "))]
    ChartInvalid(Vec<String>),

    /// A connection form was expected to be flat but its residual is nonzero.
    #[error("connection is not flat: residual has {terms} nonzero terms, first at weight {weight}")]
    NotFlat { terms: usize, weight: i64 },

    /// The exponential e^{Gamma/hbar} requires every term of Gamma to carry
    /// at least one dx factor so that the series is nilpotent.
    #[error("exponent is not nilpotent: a term has dx-degree zero")]
    NotNilpotent,

    /// The trace pairing integrates over the torus and therefore requires
    /// Fourier coefficients; polynomial jets admit no invariant integral.
    #[error("operation requires a Fourier-coefficient chart")]
    FourierRingRequired,

    /// An operand contains generators the operation does not accept
    /// (e.g. Moyal product on a form with theta factors).
    #[error("unexpected generator for this operation: {0}")]
    UnexpectedGenerator(&'static str),

    /// A configuration-space edge starts and ends on the same vertex.
    #[error("edge ({0}, {0}) is a tadpole; the propagator is not defined on the diagonal")]
    TadpoleEdge(usize),

    /// A graph/edge index refers to a vertex that does not exist.
    #[error("vertex index {index} out of range for {vertices} vertices")]
    VertexOutOfRange { index: usize, vertices: usize },

    /// The flow engine contracts with `(1/2) P^{ij} d_i d_j`, in which only
    /// the symmetric part of `P` acts; an asymmetric matrix is a caller
    /// mistake rather than data to be silently symmetrized.
    #[error("propagator matrix is not symmetric at entry ({0}, {1})")]
    AsymmetricPropagator(usize, usize),

    /// The flow series terminates only when every interaction term has
    /// weight at least three, so that each additional vertex raises the
    /// weight of its graph's contribution.
    #[error("interaction term of weight {0}; the flow series requires weight >= 3 to terminate")]
    FlowDivergence(i64),

    /// Identical flow vertices must commute, so interaction terms must
    /// have even parity.
    #[error("interaction term of odd parity; flow vertex labels must be even")]
    OddInteraction,

    /// The propagator is evaluated at an integer argument (the diagonal of
    /// the configuration space), where it has no value.
    #[error("propagator evaluated at integer argument")]
    PropagatorAtInteger,

    /// Numerical input outside the supported range.
    #[error("numeric argument out of range: {0}")]
    NumericRange(String),

    /// A value expected to be a plain rational (no tau, no imaginary part)
    /// was not.
    #[error("value is not a plain rational: {0}")]
    NotRational(String),

    /// A grading query on a section that mixes distinct homogeneous pieces.
    #[error("section is not homogeneous: grade {first} vs {second}")]
    NotHomogeneous { first: String, second: String },
}
