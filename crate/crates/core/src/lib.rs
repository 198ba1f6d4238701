//! Softmax-gated Gaussian mixture of experts.
//!
//! The conditional density of a response `y` given covariates `x` is
//!
//! ```text
//! p(y | x) = sum_k softmax_k(omega1_k . x + omega0_k) * N(y | a_k . x + b_k, sigma_k)
//! ```
//!
//! where **`sigma_k` is a variance**, not a standard deviation. A model is stored as a
//! [`MixingMeasure`]: a list of [`ExpertAtom`]s with unnormalised weights
//! `exp(omega0_k)`.
//!
//! The crate provides EM fitting ([`estimation`]), Voronoi-type losses against a
//! reference model ([`metrics`]), the merge dendrogram of a fitted model
//! ([`dendrogram`]), order selection ([`selection`]), synthetic data ([`datagen`]),
//! the simulation studies ([`experiments`]) and file formats ([`io`]).
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root fix `f64`, which the studies and the command line use.

pub mod datagen;
pub mod dendrogram;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod io;
mod linalg;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod seeding;
pub mod selection;

pub use error::{Error, Result};
pub use model::{Dataset, ExpertAtom, LogLikelihood, MixingMeasure};
pub use scalar::Scalar;

pub type Atom = ExpertAtom<f64>;
pub type Model = MixingMeasure<f64>;
pub type Data = Dataset<f64>;
pub type Fit = estimation::FitResult<f64>;
pub type Tree = dendrogram::Dendrogram<f64>;

pub type Atom32 = ExpertAtom<f32>;
pub type Model32 = MixingMeasure<f32>;
pub type Data32 = Dataset<f32>;
