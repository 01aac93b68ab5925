//! Model identifiers, the multiplicity-corrected model prior, enumeration and inclusion summaries.

use std::fmt;

use num_rational::Ratio;

use crate::dof::DofGrid;
use crate::error::{Error, Result};
use crate::scalar::{compensated_sum, Real};
use crate::specfun::ln_gamma;

/// Default cap on exhaustive enumeration.
pub const ENUMERATION_CAP: usize = 1_000_000;

/// A model: one grid index per covariate (0 excluded, 1 linear, larger values smooth).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModelIndex(pub Box<[u8]>);

impl ModelIndex {
    pub fn new(indices: Vec<u8>) -> Self {
        Self(indices.into_boxed_slice())
    }

    pub fn null(p: usize) -> Self {
        Self::new(vec![0; p])
    }

    pub fn full<T: Real>(p: usize, grid: &DofGrid<T>) -> Self {
        Self::new(vec![grid.max_index(); p])
    }

    /// Grid indices from dof values, which must lie on the grid.
    pub fn from_dofs<T: Real>(dofs: &[T], grid: &DofGrid<T>) -> Result<Self> {
        let mut idx = Vec::with_capacity(dofs.len());
        for &d in dofs {
            let pos = grid
                .values()
                .iter()
                .position(|&v| (v - d).abs() < T::c(1e-9))
                .ok_or_else(|| Error::InvalidInput(format!("degrees of freedom {d} are not on the grid")))?;
            idx.push(pos as u8);
        }
        Ok(Self::new(idx))
    }

    pub fn p(&self) -> usize {
        self.0.len()
    }

    pub fn indices(&self) -> &[u8] {
        &self.0
    }

    pub fn dofs<T: Real>(&self, grid: &DofGrid<T>) -> Vec<T> {
        self.0.iter().map(|&i| grid.value(i)).collect()
    }

    /// Number of included covariates, `#{j: d_j ≥ 1}`.
    pub fn included(&self) -> usize {
        self.0.iter().filter(|&&i| i >= 1).count()
    }

    /// Number of smooth terms, `#{j: d_j > 1}`.
    pub fn smooth(&self) -> usize {
        self.0.iter().filter(|&&i| i >= 2).count()
    }

    /// Label with the dof values, e.g. `(0,1,0,0,3,2,4)`.
    pub fn label<T: Real>(&self, grid: &DofGrid<T>) -> String {
        let parts: Vec<String> = self.dofs(grid).iter().map(|d| format!("{d}")).collect();
        format!("({})", parts.join(","))
    }
}

impl fmt::Display for ModelIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u8::to_string).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// Scores of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelScore<T: Real> {
    pub model: ModelIndex,
    pub log_marglik: T,
    pub log_prior: T,
    /// Renormalised over the evaluated set.
    pub post_prob: T,
    /// Search visit count; for enumeration, zero.
    pub visit_count: u64,
    /// Visit frequency among all iterations.
    pub freq_prob: T,
}

fn ln_choose<T: Real>(p: usize, i: usize) -> T {
    let f = |k: usize| ln_gamma(T::from_usize_lossy(k + 1));
    f(p) - f(i) - f(p - i)
}

/// `-ln[(p+1)·C(p, I)·K^I]` with `K = |D| - 1`.
pub fn log_model_prior<T: Real>(m: &ModelIndex, grid: &DofGrid<T>) -> T {
    let p = m.p();
    let i = m.included();
    let k = T::from_usize_lossy(grid.nonzero_count());
    -(T::from_usize_lossy(p + 1).ln() + ln_choose::<T>(p, i) + T::from_usize_lossy(i) * k.ln())
}

/// Exact prior probability of any single model with `included` covariates.
pub fn prior_probability_exact(p: usize, included: usize, nonzero_grid: usize) -> Ratio<u128> {
    let mut choose: u128 = 1;
    for k in 0..included {
        choose = choose * (p - k) as u128 / (k + 1) as u128;
    }
    let denom = (p as u128 + 1) * choose * (nonzero_grid as u128).pow(included as u32);
    Ratio::new(1, denom)
}

/// Every model over `p` covariates, each exactly once, in lexicographic order.
pub fn enumerate_models<T: Real>(p: usize, grid: &DofGrid<T>, cap: usize) -> Result<ModelIter> {
    let size = (grid.len() as f64).powi(p as i32);
    if size > cap as f64 {
        return Err(Error::SpaceTooLarge { size, cap });
    }
    Ok(ModelIter { current: Some(vec![0; p]), base: grid.len() as u8 })
}

pub struct ModelIter {
    current: Option<Vec<u8>>,
    base: u8,
}

impl Iterator for ModelIter {
    type Item = ModelIndex;

    fn next(&mut self) -> Option<ModelIndex> {
        let cur = self.current.take()?;
        let out = ModelIndex::new(cur.clone());
        let mut next = cur;
        let mut pos = next.len();
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            next[pos] += 1;
            if next[pos] < self.base {
                self.current = Some(next);
                break;
            }
            next[pos] = 0;
        }
        Some(out)
    }
}

/// Posterior probabilities `(P(d_j = 0), P(d_j = 1), P(d_j > 1))` per covariate.
pub fn inclusion_summary<T: Real>(scores: &[ModelScore<T>], use_freq: bool) -> Vec<[T; 3]> {
    let Some(first) = scores.first() else { return Vec::new() };
    let p = first.model.p();
    let mut acc: Vec<[Vec<T>; 3]> = (0..p).map(|_| [Vec::new(), Vec::new(), Vec::new()]).collect();
    for s in scores {
        let w = if use_freq { s.freq_prob } else { s.post_prob };
        for (j, &idx) in s.model.indices().iter().enumerate() {
            acc[j][(idx as usize).min(2)].push(w);
        }
    }
    acc.into_iter()
        .map(|cols| {
            // sort before summing so the result does not depend on input order
            let sum = |mut v: Vec<T>| {
                v.sort_by(|a, b| a.partial_cmp(b).expect("finite probabilities"));
                compensated_sum(v)
            };
            let [a, b, c] = cols;
            [sum(a), sum(b), sum(c)]
        })
        .collect()
}

/// Normalises `log_marglik + log_prior` over the set into `post_prob`.
pub fn normalize_posterior<T: Real>(scores: &mut [ModelScore<T>]) {
    let kernels: Vec<T> = scores.iter().map(|s| s.log_marglik + s.log_prior).collect();
    let lse = crate::scalar::log_sum_exp(&kernels);
    for (s, k) in scores.iter_mut().zip(kernels) {
        s.post_prob = if k.finite() { (k - lse).exp() } else { T::zero() };
    }
}
