//! Parametric estimation of ergodic scalar diffusions
//!
//! ```text
//! dX_t = b(X_t; alpha) dt + sigma(X_t; beta) dW_t
//! ```
//!
//! observed at equidistant times `i * delta`, `i = 0..=n`, in the regime
//! `n -> inf`, `delta -> 0`, `n * delta -> inf`.
//!
//! The crate is organized around approximate martingale estimating
//! functions `G_n(theta) = sum_i g(delta, X_i, X_{i-1}; theta)`:
//!
//! - [`model`]: diffusion models, the generator `L = b d/dx + v/2 d^2/dx^2`,
//!   and the stationary law computed by quadrature.
//! - [`simulate`]: equidistant sample paths and sampling schedules.
//! - [`estfun`]: the estimating-function catalog, including optimal weight
//!   builders for rate optimality and efficiency.
//! - [`conditions`]: numerical checks of the rate-optimality and efficiency
//!   conditions and of the approximate-martingale order.
//! - [`solve`]: damped Newton with multistart for `G_n(theta) = 0`.
//! - [`inference`]: limit quantities (`S`, `V`, `W1`, `W2`, the efficient
//!   bound) and empirical sandwich covariances.
//! - [`harness`]: reproducible Monte Carlo experiments and rate scans.

pub mod conditions;
pub mod error;
pub mod estfun;
pub mod harness;
pub mod inference;
pub mod jet;
pub mod model;
pub mod moments;
pub mod quad;
pub mod simulate;
pub mod stats;
pub mod solve;

pub use error::{Error, Result};
pub use model::{builtin_model, Diffusion, ParamPoint, StateInterval, StationaryLaw};
pub use simulate::{SamplePath, SamplingRule, Scheme};
