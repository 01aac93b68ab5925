//! Metropolis–Hastings search over degrees-of-freedom vectors and exhaustive enumeration.

use std::collections::HashMap;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::backend::{MarginalLikelihood, ScoreCache};
use crate::dof::DofGrid;
use crate::error::{Error, Result};
use crate::model_space::{enumerate_models, log_model_prior, normalize_posterior, ModelIndex, ModelScore};
use crate::scalar::Real;

pub const DEFAULT_P_MOVE: f64 = 0.75;

/// `q(d'|d) / q(d|d')` of one proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QRatio {
    Half,
    One,
    Two,
}

impl QRatio {
    pub fn ln<T: Real>(self) -> T {
        match self {
            QRatio::Half => -T::ln_2(),
            QRatio::One => T::zero(),
            QRatio::Two => T::ln_2(),
        }
    }

    pub fn exact(self) -> Ratio<u64> {
        match self {
            QRatio::Half => Ratio::new(1, 2),
            QRatio::One => Ratio::from_integer(1),
            QRatio::Two => Ratio::from_integer(2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProposalKind {
    Move,
    Swap,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Proposal {
    pub model: ModelIndex,
    pub kind: ProposalKind,
    pub ratio: QRatio,
}

fn is_boundary(idx: u8, max: u8) -> bool {
    idx == 0 || idx == max
}

/// Draws `d'` from the Move/Swap mixture; `levels = |D|`.
pub fn propose<R: Rng + ?Sized>(d: &ModelIndex, levels: usize, p_move: f64, rng: &mut R) -> Proposal {
    let p = d.p();
    let max = (levels - 1) as u8;
    let mut next = d.indices().to_vec();
    if rng.random::<f64>() < p_move {
        let j = rng.random_range(0..p);
        let old = next[j];
        let new = if old == 0 {
            1
        } else if old == max {
            max - 1
        } else if rng.random::<bool>() {
            old + 1
        } else {
            old - 1
        };
        next[j] = new;
        let ratio = match (is_boundary(old, max), is_boundary(new, max)) {
            (true, false) => QRatio::Two,
            (false, true) => QRatio::Half,
            _ => QRatio::One,
        };
        Proposal { model: ModelIndex::new(next), kind: ProposalKind::Move, ratio }
    } else {
        // uniform over the p(p+1)/2 pairs i <= j
        let pairs = p * (p + 1) / 2;
        let mut k = rng.random_range(0..pairs);
        let mut i = 0;
        while k >= p - i {
            k -= p - i;
            i += 1;
        }
        let j = i + k;
        next.swap(i, j);
        Proposal { model: ModelIndex::new(next), kind: ProposalKind::Swap, ratio: QRatio::One }
    }
}

/// Exact `q(to | from)` for the Move/Swap mixture.
pub fn transition_probability(from: &ModelIndex, to: &ModelIndex, levels: usize, p_move: Ratio<u64>) -> Ratio<u64> {
    let p = from.p();
    let max = (levels - 1) as u8;
    let a = from.indices();
    let b = to.indices();
    let one = Ratio::from_integer(1u64);
    let diff: Vec<usize> = (0..p).filter(|&j| a[j] != b[j]).collect();
    let mut q = Ratio::from_integer(0u64);
    if diff.len() == 1 {
        let j = diff[0];
        let step = (a[j] as i16 - b[j] as i16).abs();
        if step == 1 {
            let dir = if is_boundary(a[j], max) { one } else { Ratio::new(1, 2) };
            q += p_move * Ratio::new(1, p as u64) * dir;
        }
    }
    let pairs = (p * (p + 1) / 2) as u64;
    let mut hits = 0u64;
    for i in 0..p {
        for j in i..p {
            let mut s = a.to_vec();
            s.swap(i, j);
            if s == b {
                hits += 1;
            }
        }
    }
    q + (one - p_move) * Ratio::new(hits, pairs)
}

/// State of one Metropolis–Hastings chain over models.
#[derive(Debug, Clone)]
pub struct SearchState {
    pub current: ModelIndex,
    /// Visit counts of every model proposed or visited by this chain (rejected proposals hold 0).
    pub visit_counts: HashMap<ModelIndex, u64>,
    pub iterations: u64,
    pub p_move: f64,
    pub proposals: [u64; 2],
    pub accepted: [u64; 2],
    /// Proposals rejected because their score failed.
    pub failed: u64,
    rng: ChaCha8Rng,
}

impl SearchState {
    pub fn new(start: ModelIndex, p_move: f64, seed: u64) -> Self {
        let mut visit_counts = HashMap::new();
        visit_counts.insert(start.clone(), 0);
        Self {
            current: start,
            visit_counts,
            iterations: 0,
            p_move,
            proposals: [0; 2],
            accepted: [0; 2],
            failed: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Runs `iters` more iterations, scoring through the shared cache.
    pub fn run<T: Real, B: MarginalLikelihood<T> + ?Sized>(&mut self, backend: &B, cache: &ScoreCache<T>, iters: u64) {
        let grid = &backend.design().grid;
        let levels = grid.len();
        let post = |m: &ModelIndex| cache.score(backend, m) + log_model_prior(m, grid);
        let mut cur_post = post(&self.current);
        for _ in 0..iters {
            let prop = propose(&self.current, levels, self.p_move, &mut self.rng);
            let kind = prop.kind as usize;
            self.proposals[kind] += 1;
            if prop.model != self.current {
                let new_post = post(&prop.model);
                if !new_post.finite() {
                    self.failed += 1;
                }
                self.visit_counts.entry(prop.model.clone()).or_insert(0);
                let log_alpha = (new_post - cur_post - prop.ratio.ln::<T>()).f64();
                let u: f64 = self.rng.random();
                if new_post.finite() && (log_alpha >= 0.0 || u.ln() < log_alpha) {
                    self.current = prop.model;
                    cur_post = new_post;
                    self.accepted[kind] += 1;
                }
            } else {
                self.accepted[kind] += 1;
            }
            *self.visit_counts.get_mut(&self.current).expect("current model is tracked") += 1;
            self.iterations += 1;
        }
    }
}

pub fn mh_search<T: Real, B: MarginalLikelihood<T> + ?Sized>(
    backend: &B,
    cache: &ScoreCache<T>,
    start: ModelIndex,
    iters: u64,
    p_move: f64,
    seed: u64,
) -> Result<SearchState> {
    if !(p_move > 0.0 && p_move < 1.0) {
        return Err(Error::Config(format!("p_move must lie in (0, 1), got {p_move}")));
    }
    let design = backend.design();
    if start.p() != design.p() || start.indices().iter().any(|&i| i as usize >= design.grid.len()) {
        return Err(Error::InvalidInput(format!("start model {start} does not fit the design")));
    }
    let mut state = SearchState::new(start, p_move, seed);
    state.run(backend, cache, iters);
    Ok(state)
}

fn rank<T: Real>(scores: &mut [ModelScore<T>]) {
    scores.sort_by(|a, b| {
        b.post_prob
            .partial_cmp(&a.post_prob)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.model.cmp(&b.model))
    });
}

/// Ranked scores of every model the chain touched, with renormalised and frequency probabilities.
pub fn posterior_tables<T: Real>(state: &SearchState, cache: &ScoreCache<T>, grid: &DofGrid<T>) -> Result<Vec<ModelScore<T>>> {
    if state.iterations == 0 {
        return Err(Error::InvalidInput("posterior tables need at least one iteration".into()));
    }
    let total = T::c(state.iterations as f64);
    let mut scores = Vec::with_capacity(state.visit_counts.len());
    for (m, &count) in &state.visit_counts {
        let lm = cache
            .get(m)
            .ok_or_else(|| Error::InvalidInput(format!("model {m} missing from the score cache")))?;
        scores.push(ModelScore {
            model: m.clone(),
            log_marglik: lm,
            log_prior: log_model_prior(m, grid),
            post_prob: T::zero(),
            visit_count: count,
            freq_prob: T::c(count as f64) / total,
        });
    }
    normalize_posterior(&mut scores);
    rank(&mut scores);
    Ok(scores)
}

/// Scores all `|D|^p` models in parallel and returns them ranked.
pub fn exhaustive<T: Real, B: MarginalLikelihood<T> + ?Sized>(backend: &B, cache: &ScoreCache<T>, cap: usize) -> Result<Vec<ModelScore<T>>> {
    let grid = &backend.design().grid;
    let models: Vec<ModelIndex> = enumerate_models(backend.design().p(), grid, cap)?.collect();
    let mut scores: Vec<ModelScore<T>> = models
        .into_par_iter()
        .map(|m| {
            let lm = cache.score(backend, &m);
            let lp = log_model_prior(&m, grid);
            ModelScore { model: m, log_marglik: lm, log_prior: lp, post_prob: T::zero(), visit_count: 0, freq_prob: T::zero() }
        })
        .collect();
    normalize_posterior(&mut scores);
    rank(&mut scores);
    Ok(scores)
}

/// Thread pool capped by `HYPERGAM_THREADS` when set.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("HYPERGAM_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("HYPERGAM_THREADS must be a positive integer, got `{v}`")))?;
        b = b.num_threads(n.max(1));
    }
    b.build().map_err(|e| Error::Config(e.to_string()))
}
