//! Exact higher-order moments of mean-zero Gaussian and isotropic random
//! vectors.
//!
//! Every even moment of a mean-zero Gaussian vector is a sum over the pair
//! partitions (perfect matchings) of its factors, each term a product of
//! covariances. This crate enumerates those partitions lazily
//! ([`pairings`]), evaluates the sums with compensated accumulation
//! ([`gaussian`]), extends them to rotation-invariant laws through the
//! normalised moment ratio `c_k` ([`isotropic`]), and computes expectations
//! of arbitrary dense multilinear forms of a Gaussian vector along two
//! independent algebraic routes ([`tensor`]). Seeded Monte Carlo estimators
//! ([`montecarlo`]) back every analytic quantity with an independent check.
//!
//! ```
//! use isserlis::gaussian::{isserlis_moment, CovarianceMatrix};
//!
//! let sigma = CovarianceMatrix::from_rows(&[[1.0, 0.3], [0.3, 1.0]])?;
//! // E(Y1^2 Y2^2) = S11 S22 + 2 S12^2
//! let m = isserlis_moment(&sigma, &[0, 0, 1, 1])?;
//! assert!((m.value - 1.18).abs() < 1e-15);
//! # Ok::<(), isserlis::Error>(())
//! ```

pub mod error;
pub mod gaussian;
pub mod isotropic;
pub mod montecarlo;
pub mod pairings;
pub mod sum;
pub mod tensor;

pub use error::{Error, Result};
pub use gaussian::{MomentResult, Provenance};

// The guide in book/src is compiled as doctests so its snippets stay in
// sync with the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/pairings.md")]
    mod pairings {}
    #[doc = include_str!("../../../book/src/gaussian.md")]
    mod gaussian {}
    #[doc = include_str!("../../../book/src/isotropic.md")]
    mod isotropic {}
    #[doc = include_str!("../../../book/src/tensor.md")]
    mod tensor {}
    #[doc = include_str!("../../../book/src/montecarlo.md")]
    mod montecarlo {}
}
