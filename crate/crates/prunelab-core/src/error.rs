use alloc::string::String;
use core::fmt;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

/// Errors produced by the core numerics.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two operands had incompatible shapes. Carries both shapes and the
    /// operation that rejected them.
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    /// A buffer length did not match `rows * cols`.
    BadLength {
        rows: usize,
        cols: usize,
        len: usize,
    },
    /// An operation produced or received a NaN/Inf entry.
    NonFinite { op: &'static str },
    /// An argument was outside its documented range.
    InvalidArgument {
        what: &'static str,
        detail: String,
    },
    /// `backward` was asked to differentiate a non-scalar node.
    NotScalar { rows: usize, cols: usize },
    /// `backward` was called on an empty tape.
    EmptyTape,
    /// Training produced a non-finite loss at the given optimizer step.
    Diverged { step: usize },
    /// A pruning ratio was outside `[0, 1)`.
    InvalidRatio(f64),
    /// Pruning was requested on a network with no weights.
    EmptyNetwork,
    /// Rewinding was requested but the network carries no initial-weight
    /// snapshot.
    MissingInitialSnapshot,
    /// A sample count was not a power of two.
    NonPowerOfTwo(usize),
    /// A spectral probe needs a scalar-input scalar-output network.
    NotScalarFunction { input_dim: usize, output_dim: usize },
    /// A frequency band index is outside the spectrum.
    BandOutOfRange { band: usize, max: usize },
    /// Two generator bands share the same frequency.
    DuplicateBand(usize),
    /// The computed norm chain violated its inequality beyond numeric slack;
    /// indicates a numeric bug.
    NormChainViolation {
        flow_norm: f64,
        norm_product: f64,
        max_norm_bound: f64,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ShapeMismatch { op, lhs, rhs } => write!(
                f,
                "{op}: shape mismatch between {}x{} and {}x{}",
                lhs.0, lhs.1, rhs.0, rhs.1
            ),
            Self::BadLength { rows, cols, len } => write!(
                f,
                "buffer of length {len} cannot fill a {rows}x{cols} matrix"
            ),
            Self::NonFinite { op } => write!(f, "{op}: non-finite entry"),
            Self::InvalidArgument { what, detail } => write!(f, "invalid {what}: {detail}"),
            Self::NotScalar { rows, cols } => {
                write!(f, "loss node must be 1x1, got {rows}x{cols}")
            }
            Self::EmptyTape => write!(f, "tape has no recorded operations"),
            Self::Diverged { step } => write!(f, "non-finite loss at step {step}"),
            Self::InvalidRatio(r) => write!(f, "pruning ratio {r} outside [0, 1)"),
            Self::EmptyNetwork => write!(f, "network has zero weights"),
            Self::MissingInitialSnapshot => {
                write!(f, "network carries no initial-weight snapshot")
            }
            Self::NonPowerOfTwo(n) => write!(f, "sample count {n} is not a power of two"),
            Self::NotScalarFunction {
                input_dim,
                output_dim,
            } => write!(
                f,
                "spectral probe needs a 1->1 network, got {input_dim}->{output_dim}"
            ),
            Self::BandOutOfRange { band, max } => {
                write!(f, "band {band} outside spectrum range 0..={max}")
            }
            Self::DuplicateBand(k) => write!(f, "duplicate frequency band {k}"),
            Self::NormChainViolation {
                flow_norm,
                norm_product,
                max_norm_bound,
            } => write!(
                f,
                "norm chain violated: flow {flow_norm} / product {norm_product} / bound {max_norm_bound}"
            ),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
