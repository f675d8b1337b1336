pub mod analysis;
pub mod channel;
pub mod error;
pub mod pgf;
pub mod optimizer;
pub mod poly;
pub mod precision;
pub mod scalar;
pub mod simulator;

pub use error::{Error, Result};
pub use scalar::{Mp, Scalar};

/// Rational PGF over `f64`.
pub type Pgf = pgf::RationalPgf<f64>;
/// Dense polynomial over `f64`.
pub type Poly = poly::Polynomial<f64>;
/// Rational PGF over a 256-bit significand.
pub type PgfExtended = pgf::RationalPgf<Mp<256>>;
