//! Configuration parsing and the command implementations behind the `bas`
//! binary.

pub mod commands;
pub mod config;

pub use config::RunConfig;

/// Process exit code for an error: 2 for configuration and input
/// problems, 3 for numerical failures.
pub fn exit_code(err: &bas::Error) -> i32 {
    use bas::Error::*;
    match err {
        NotPositiveDefinite | DegenerateExtension(_) | NonPositiveRange { .. } | TooFewSamples { .. } | Sampler(_) => 3,
        DimensionMismatch { .. } | OutOfBounds(_) | LengthMismatch(..) | Config(_) | EmptyData | Io(_) => 2,
    }
}
