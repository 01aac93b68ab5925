//! Bayesian selection of covariates and penalised-spline transformations in
//! additive and generalised additive models under hyper-g and hyper-g/n priors.
//!
//! The numerical core is generic over the scalar type ([`scalar::Real`], implemented for
//! `f32` and `f64`). The aliases at the crate root fix `f64`, which is what the command
//! line front end uses.

pub mod additive;
pub mod backend;
pub mod cli;
pub mod data;
pub mod design;
pub mod dof;
pub mod error;
pub mod gaussian;
pub mod glm;
pub mod model_space;
pub mod postprocess;
pub mod quadrature;
pub mod sampler;
pub mod scalar;
pub mod search;
pub mod simulate;
pub mod specfun;

pub use error::{Error, Result};
pub use gaussian::GPrior;
pub use model_space::ModelIndex;
pub use scalar::Real;

pub type RawCovariate = design::RawCovariate<f64>;
pub type RawBasis = design::RawBasis<f64>;
pub type DesignBlock = design::DesignBlock<f64>;
pub type GridBlock = design::GridBlock<f64>;
pub type CalibrationSpectrum = dof::CalibrationSpectrum<f64>;
pub type DofGrid = dof::DofGrid<f64>;
pub type AdditiveDesign = additive::AdditiveDesign<f64>;
pub type AssembledModel = gaussian::AssembledModel<f64>;
pub type GaussianBackend = gaussian::GaussianBackend<f64>;
pub type GlmBackend = glm::GlmBackend<f64>;

pub type ModelScore = model_space::ModelScore<f64>;
pub type PosteriorDraws = sampler::PosteriorDraws<f64>;
pub type CurveSamples = sampler::CurveSamples<f64>;
pub type MetaModel = postprocess::MetaModel<f64>;
pub type SpecialValue = specfun::SpecialValue<f64>;
