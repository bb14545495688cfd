//! Markov switching component GARCH (MS-CGARCH) volatility modeling.
//!
//! A hidden Markov chain selects the active regime each period, and every
//! regime's conditional variance is a convex combination of a high- and a
//! low-volatility GARCH(1,1) component with a weight that grows with the
//! size of the previous observation. The crate covers:
//!
//! - [`model`]: types, the weight function, the variance recursion, and
//!   simulation (plus the constant-weight MS-GARCH projection used as the
//!   comparison baseline),
//! - [`filter`]: exact forward filtering, one-step volatility forecasts,
//!   and the log likelihood,
//! - [`stability`]: the second-moment stability matrix, its spectral
//!   radius, and the limiting variance bound,
//! - [`bayes`]: Gibbs estimation (state sampling, conjugate transition
//!   updates, Griddy Gibbs parameter updates),
//! - [`eval`]: RMSE/MAE forecast scoring against squared observations and
//!   the model comparison,
//! - [`data`]: CSV ingestion, percentage log returns, descriptive
//!   statistics, and report writers.

pub mod bayes;
pub mod data;
pub mod error;
pub mod eval;
pub mod filter;
pub mod model;
pub mod rng;
pub mod stability;

pub use error::{Error, Result};
