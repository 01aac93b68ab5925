//! Scoring interface shared by the Gaussian and GLM marginal likelihoods, and the score memo table.

use dashmap::DashMap;

use crate::additive::AdditiveDesign;
use crate::error::Result;
use crate::model_space::ModelIndex;
use crate::scalar::Real;

/// Log marginal likelihood of models over a fixed design.
pub trait MarginalLikelihood<T: Real>: Sync {
    fn log_marglik(&self, m: &ModelIndex) -> Result<T>;

    /// Same with continuous degrees of freedom per covariate (0, 1 or a value in `(1, K+1)`).
    fn log_marglik_dofs(&self, dofs: &[T]) -> Result<T>;

    fn design(&self) -> &AdditiveDesign<T>;
}

/// Concurrent memo table of log marginal likelihoods.
///
/// Values are written once; failed models are stored as `-inf` with a diagnostic.
#[derive(Debug, Default)]
pub struct ScoreCache<T: Real> {
    scores: DashMap<ModelIndex, T>,
    failures: DashMap<ModelIndex, String>,
}

impl<T: Real> ScoreCache<T> {
    pub fn new() -> Self {
        Self { scores: DashMap::new(), failures: DashMap::new() }
    }

    pub fn get(&self, m: &ModelIndex) -> Option<T> {
        self.scores.get(m).map(|v| *v)
    }

    /// Cached value, or the backend's value inserted if absent.
    pub fn score<B: MarginalLikelihood<T> + ?Sized>(&self, backend: &B, m: &ModelIndex) -> T {
        if let Some(v) = self.get(m) {
            return v;
        }
        let v = match backend.log_marglik(m) {
            Ok(v) if !v.is_nan() => v,
            Ok(_) => {
                self.failures.insert(m.clone(), "NaN marginal likelihood".into());
                T::NEG_INFINITY
            }
            Err(e) => {
                self.failures.insert(m.clone(), e.to_string());
                T::NEG_INFINITY
            }
        };
        *self.scores.entry(m.clone()).or_insert(v)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn failure_count(&self) -> usize {
        self.failures.len()
    }

    pub fn failures(&self) -> Vec<(ModelIndex, String)> {
        let mut v: Vec<_> = self.failures.iter().map(|e| (e.key().clone(), e.value().clone())).collect();
        v.sort();
        v
    }

    /// All cached entries in model order.
    pub fn entries(&self) -> Vec<(ModelIndex, T)> {
        let mut v: Vec<_> = self.scores.iter().map(|e| (e.key().clone(), *e.value())).collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }
}
