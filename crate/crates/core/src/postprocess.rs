//! Meta-models over inclusion patterns, the median-probability pattern and continuous
//! optimisation of the degrees of freedom.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backend::MarginalLikelihood;
use crate::error::{Error, Result};
use crate::model_space::{ModelIndex, ModelScore};
use crate::sampler::{CovariateCurves, CurveSamples};
use crate::scalar::{compensated_sum, Real};

/// How models are grouped into meta-models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetaKey {
    /// Excluded or included.
    Inclusion,
    /// Excluded, linear or smooth.
    Shape,
}

impl MetaKey {
    pub fn pattern(self, m: &ModelIndex) -> Vec<u8> {
        m.indices()
            .iter()
            .map(|&i| match self {
                MetaKey::Inclusion => u8::from(i > 0),
                MetaKey::Shape => i.min(2),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaModel<T: Real> {
    /// One entry per covariate: 0 excluded, 1 included (or linear), 2 smooth.
    pub pattern: Vec<u8>,
    pub post_prob: T,
    /// Members and their weights within the meta-model, heaviest first.
    pub member_weights: Vec<(ModelIndex, T)>,
}

impl<T: Real> MetaModel<T> {
    pub fn label(&self, names: &[String]) -> String {
        let inc: Vec<&str> = self
            .pattern
            .iter()
            .zip(names)
            .filter(|(&k, _)| k > 0)
            .map(|(_, n)| n.as_str())
            .collect();
        if inc.is_empty() {
            "(none)".into()
        } else {
            inc.join("+")
        }
    }
}

/// Sums posterior probabilities of models sharing a pattern; ranked by probability.
pub fn aggregate_meta<T: Real>(scores: &[ModelScore<T>], key: MetaKey) -> Vec<MetaModel<T>> {
    let mut groups: HashMap<Vec<u8>, Vec<(ModelIndex, T)>> = HashMap::new();
    for s in scores {
        groups.entry(key.pattern(&s.model)).or_default().push((s.model.clone(), s.post_prob));
    }
    let mut metas: Vec<MetaModel<T>> = groups
        .into_iter()
        .map(|(pattern, mut members)| {
            members.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite probabilities").then_with(|| a.0.cmp(&b.0)));
            let mut probs: Vec<T> = members.iter().map(|m| m.1).collect();
            probs.sort_by(|a, b| a.partial_cmp(b).expect("finite probabilities"));
            let total = compensated_sum(probs);
            let n = T::from_usize_lossy(members.len());
            for m in members.iter_mut() {
                m.1 = if total > T::zero() { m.1 / total } else { T::one() / n };
            }
            MetaModel { pattern, post_prob: total, member_weights: members }
        })
        .collect();
    metas.sort_by(|a, b| {
        b.post_prob
            .partial_cmp(&a.post_prob)
            .expect("finite probabilities")
            .then_with(|| a.pattern.cmp(&b.pattern))
    });
    metas
}

/// Includes covariate `j` iff `P(d_j > 0) > 1/2`, from rows `(P(d_j=0), P(d_j=1), P(d_j>1))`.
pub fn median_probability_meta<T: Real>(inclusion: &[[T; 3]]) -> Vec<bool> {
    inclusion.iter().map(|r| r[1] + r[2] > T::c(0.5)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DofOptimum<T: Real> {
    pub dofs: Vec<T>,
    pub log_marglik: T,
    pub start_log_marglik: T,
    pub cycles: usize,
    pub evaluations: usize,
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Cyclic coordinate search with golden-section line searches over `d_j ∈ [1, K_j + 1)`
/// for the covariates included in `start`; only improvements are accepted.
pub fn optimize_dof<T: Real, B: MarginalLikelihood<T> + ?Sized>(backend: &B, start: &ModelIndex) -> Result<DofOptimum<T>> {
    optimize_dof_from(backend, start.dofs(&backend.design().grid))
}

/// Like [`optimize_dof`] from arbitrary degrees of freedom (0, 1 or inside `(1, K_j + 1)`).
pub fn optimize_dof_from<T: Real, B: MarginalLikelihood<T> + ?Sized>(backend: &B, start: Vec<T>) -> Result<DofOptimum<T>> {
    let design = backend.design();
    let mut dofs = start;
    let coords: Vec<usize> = (0..dofs.len()).filter(|&j| dofs[j] > T::zero()).collect();
    if coords.is_empty() {
        return Err(Error::InvalidInput("the null model has no degrees of freedom to optimise".into()));
    }
    let mut evaluations = 0;
    let mut eval = |d: &[T]| -> Result<T> {
        evaluations += 1;
        backend.log_marglik_dofs(d)
    };
    let start_value = eval(&dofs)?;
    let mut best = start_value;
    let edge = T::c(1e-6);
    let mut cycles = 0;
    for _ in 0..3 {
        cycles += 1;
        let before = best;
        for &j in &coords {
            let upper = T::from_usize_lossy(design.spectra[j].k() + 1) - edge;
            let mut at = |x: T, dofs: &[T]| -> Result<T> {
                let mut d = dofs.to_vec();
                d[j] = x;
                eval(&d)
            };
            let (mut a, mut b) = (T::one() + edge, upper);
            let r = T::c(GOLDEN);
            let mut x1 = b - r * (b - a);
            let mut x2 = a + r * (b - a);
            let mut f1 = at(x1, &dofs)?;
            let mut f2 = at(x2, &dofs)?;
            while b - a > T::c(1e-4) {
                if f1 < f2 {
                    a = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = a + r * (b - a);
                    f2 = at(x2, &dofs)?;
                } else {
                    b = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = b - r * (b - a);
                    f1 = at(x1, &dofs)?;
                }
            }
            let (xs, fs) = if f1 > f2 { (x1, f1) } else { (x2, f2) };
            let f_lin = at(T::one(), &dofs)?;
            let (cand_x, cand_f) = if f_lin >= fs { (T::one(), f_lin) } else { (xs, fs) };
            if cand_f > best {
                best = cand_f;
                dofs[j] = cand_x;
            }
        }
        if (best - before).abs() <= T::c(1e-6) * best.abs() {
            break;
        }
    }
    Ok(DofOptimum { dofs, log_marglik: best, start_log_marglik: start_value, cycles, evaluations })
}

/// Curves of a meta-model: each sample picks a member with probability equal to its weight,
/// then takes a parameter draw from that member. `draw(model, count, seed)` must return
/// `count` curve samples for all covariates.
pub fn model_averaged_curves<T: Real, F>(meta: &MetaModel<T>, samples: usize, seed: u64, mut draw: F) -> Result<CurveSamples<T>>
where
    F: FnMut(&ModelIndex, usize, u64) -> Result<CurveSamples<T>>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0usize; meta.member_weights.len()];
    for _ in 0..samples {
        let u = T::c(rng.random::<f64>());
        let mut acc = T::zero();
        let mut pick = meta.member_weights.len() - 1;
        for (k, (_, w)) in meta.member_weights.iter().enumerate() {
            acc += *w;
            if u < acc {
                pick = k;
                break;
            }
        }
        counts[pick] += 1;
    }
    let mut parts: Vec<CurveSamples<T>> = Vec::new();
    for ((m, _), &c) in meta.member_weights.iter().zip(&counts) {
        if c > 0 {
            parts.push(draw(m, c, crate::sampler::model_seed(seed, m))?);
        }
    }
    let first = parts.first().ok_or_else(|| Error::InvalidInput("meta-model has no members".into()))?;
    let mut curves = Vec::with_capacity(first.curves.len());
    for (j, proto) in first.curves.iter().enumerate() {
        let cols = proto.grid.len();
        let rows: Vec<_> = parts.iter().flat_map(|p| p.curves[j].samples.row_iter().map(|r| r.into_owned()).collect::<Vec<_>>()).collect();
        let mut mat = nalgebra::DMatrix::zeros(rows.len(), cols);
        for (r, row) in rows.iter().enumerate() {
            mat.row_mut(r).copy_from(row);
        }
        curves.push(CovariateCurves { covariate: proto.covariate, grid: proto.grid.clone(), samples: mat });
    }
    Ok(CurveSamples { curves })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(m: &[u8], p: f64) -> ModelScore<f64> {
        ModelScore {
            model: ModelIndex::new(m.to_vec()),
            log_marglik: 0.0,
            log_prior: 0.0,
            post_prob: p,
            visit_count: 0,
            freq_prob: 0.0,
        }
    }

    #[test]
    fn single_model_meta() {
        let metas = aggregate_meta(&[score(&[0, 3], 1.0)], MetaKey::Inclusion);
        assert_eq!(metas.len(), 1);
        assert_eq!(metas[0].post_prob, 1.0);
        assert_eq!(metas[0].pattern, vec![0, 1]);
    }

    #[test]
    fn members_differing_in_dof_merge() {
        let metas = aggregate_meta(&[score(&[1, 2], 0.4), score(&[1, 3], 0.6)], MetaKey::Inclusion);
        assert_eq!(metas.len(), 1);
        assert!((metas[0].post_prob - 1.0).abs() < 1e-15);
        assert_eq!(metas[0].member_weights[0], (ModelIndex::new(vec![1, 3]), 0.6));
        assert!((metas[0].member_weights[1].1 - 0.4).abs() < 1e-15);
    }

    #[test]
    fn shape_key_separates_linear_from_smooth() {
        let s = [score(&[1, 2], 0.3), score(&[1, 3], 0.2), score(&[1, 1], 0.5)];
        let metas = aggregate_meta(&s, MetaKey::Shape);
        assert_eq!(metas.len(), 2);
        assert_eq!(metas[0].pattern, vec![1, 1]);
        assert!((metas[1].post_prob - 0.5).abs() < 1e-15);
    }

    #[test]
    fn median_probability_is_strict() {
        let t = [[0.5, 0.25, 0.25], [0.4, 0.1, 0.5], [0.9, 0.05, 0.05]];
        assert_eq!(median_probability_meta(&t), vec![false, true, false]);
    }
}
