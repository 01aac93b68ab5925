//! Synthetic additive-model data: a null truth, a small truth with six effects and
//! correlated nuisance covariates, and the small truth padded with 80 independent covariates.
//!
//! Covariates are uniform on `[-1, 1]`, tied through a Gaussian copula whose latent
//! correlation `2 sin(πr/6)` gives rank (and, for uniform margins, Pearson) correlation `r`.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Null,
    Small,
    Large,
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioKind::Null => "null",
            ScenarioKind::Small => "small",
            ScenarioKind::Large => "large",
        })
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "null" => Ok(ScenarioKind::Null),
            "small" => Ok(ScenarioKind::Small),
            "large" => Ok(ScenarioKind::Large),
            _ => Err(Error::Config(format!("unknown scenario `{s}` (expected null, small or large)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub n: usize,
    pub seed: u64,
    pub sigma: f64,
    /// Number of covariates of the null scenario.
    pub null_covariates: usize,
}

impl Scenario {
    pub fn new(kind: ScenarioKind, n: usize, seed: u64) -> Self {
        Self { kind, n, seed, sigma: 0.2, null_covariates: 20 }
    }

    pub fn p(&self) -> usize {
        match self.kind {
            ScenarioKind::Null => self.null_covariates,
            ScenarioKind::Small => 20,
            ScenarioKind::Large => 100,
        }
    }
}

/// Role of a covariate in the generating model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truth {
    Nuisance,
    Linear,
    Quadratic,
    Sine,
    SkewNormal,
    /// Correlated with the quadratic covariate, no effect of its own.
    Surrogate,
    /// Correlated 0.8 with the linear covariates `x16` and `x17`, no effect of its own.
    CorrelatedNuisance,
}

impl Truth {
    pub fn is_effective(self) -> bool {
        matches!(self, Truth::Linear | Truth::Quadratic | Truth::Sine | Truth::SkewNormal)
    }

    pub fn label(self) -> &'static str {
        match self {
            Truth::Nuisance => "nuisance",
            Truth::Linear => "linear",
            Truth::Quadratic => "quadratic",
            Truth::Sine => "sine",
            Truth::SkewNormal => "skew-normal",
            Truth::Surrogate => "surrogate",
            Truth::CorrelatedNuisance => "correlated-nuisance",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Simulated {
    /// Columns `x1, …, xp, y`.
    pub data: Dataset,
    pub truth: Vec<Truth>,
    /// `Σ_j m_j(x_ij)` per observation.
    pub signal: Vec<f64>,
}

const LINEAR_SLOPE: f64 = 0.5;
const SKEW_SCALE: f64 = 0.5;
const SKEW_SHAPE: f64 = 4.0;
const SURROGATE_CORRELATION: f64 = 0.7;
const BLOCK_CORRELATION: f64 = 0.8;

fn skew_normal_density(x: f64) -> f64 {
    let std = Normal::standard();
    let z = x / SKEW_SCALE;
    2.0 / SKEW_SCALE * std.pdf(z) * std.cdf(SKEW_SHAPE * z)
}

/// Mean of the skew-normal curve under the uniform distribution on `[-1, 1]` (Simpson, 2000 panels).
fn skew_normal_mean() -> f64 {
    static MEAN: OnceLock<f64> = OnceLock::new();
    *MEAN.get_or_init(skew_normal_mean_uncached)
}

fn skew_normal_mean_uncached() -> f64 {
    let m = 2000;
    let h = 2.0 / m as f64;
    let mut s = skew_normal_density(-1.0) + skew_normal_density(1.0);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * skew_normal_density(-1.0 + i as f64 * h);
    }
    s * h / 3.0 / 2.0
}

/// The centred true function of a covariate on `[-1, 1]`.
pub fn true_function(t: Truth, x: f64) -> f64 {
    match t {
        Truth::Linear => LINEAR_SLOPE * x,
        Truth::Quadratic => x * x - 1.0 / 3.0,
        Truth::Sine => (std::f64::consts::PI * x).sin(),
        Truth::SkewNormal => skew_normal_density(x) - skew_normal_mean(),
        _ => 0.0,
    }
}

fn truth_layout(sc: &Scenario) -> Vec<Truth> {
    let p = sc.p();
    if sc.kind == ScenarioKind::Null {
        return vec![Truth::Nuisance; p];
    }
    let mut t = vec![Truth::Nuisance; p];
    t[0] = Truth::Quadratic;
    t[1] = Truth::Surrogate;
    t[2] = Truth::Sine;
    t[3] = Truth::SkewNormal;
    t[4] = Truth::Linear;
    t[15] = Truth::Linear;
    t[16] = Truth::Linear;
    for v in t.iter_mut().take(20).skip(17) {
        *v = Truth::CorrelatedNuisance;
    }
    t
}

fn latent_correlation(r: f64) -> f64 {
    2.0 * (std::f64::consts::PI * r / 6.0).sin()
}

fn latent_matrix(sc: &Scenario) -> DMatrix<f64> {
    let p = sc.p();
    let mut r = DMatrix::identity(p, p);
    if sc.kind != ScenarioKind::Null {
        let s = latent_correlation(SURROGATE_CORRELATION);
        r[(0, 1)] = s;
        r[(1, 0)] = s;
        // x16..x20 equicorrelated
        let b = latent_correlation(BLOCK_CORRELATION);
        for i in 15..20 {
            for j in 15..20 {
                if i != j {
                    r[(i, j)] = b;
                }
            }
        }
    }
    r
}

pub fn generate(sc: &Scenario) -> Result<Simulated> {
    if sc.n < 30 {
        return Err(Error::Config(format!("simulation needs n >= 30, got {}", sc.n)));
    }
    if !(sc.sigma > 0.0) || sc.p() == 0 {
        return Err(Error::Config("simulation needs sigma > 0 and at least one covariate".into()));
    }
    let p = sc.p();
    let truth = truth_layout(sc);
    let chol = Cholesky::new(latent_matrix(sc)).ok_or_else(|| Error::NumericalFailure("latent correlation is not positive definite".into()))?;
    let l = chol.l();
    let std = Normal::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let mut columns = vec![Vec::with_capacity(sc.n); p + 1];
    let mut signal = Vec::with_capacity(sc.n);
    for _ in 0..sc.n {
        let e = DVector::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
        let z = &l * e;
        let mut mean = 0.0;
        for j in 0..p {
            let x = 2.0 * std.cdf(z[j]) - 1.0;
            mean += true_function(truth[j], x);
            columns[j].push(x);
        }
        let noise: f64 = StandardNormal.sample(&mut rng);
        columns[p].push(mean + sc.sigma * noise);
        signal.push(mean);
    }
    let mut names: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
    names.push("y".into());
    Ok(Simulated { data: Dataset::new(names, columns)?, truth, signal })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_has_six_effects() {
        let s = generate(&Scenario::new(ScenarioKind::Small, 50, 1)).unwrap();
        assert_eq!(s.truth.iter().filter(|t| t.is_effective()).count(), 6);
        assert_eq!(s.data.names.len(), 21);
        let l = generate(&Scenario::new(ScenarioKind::Large, 50, 1)).unwrap();
        assert_eq!(l.truth.iter().filter(|t| t.is_effective()).count(), 6);
        assert_eq!(l.data.names.len(), 101);
    }

    #[test]
    fn null_response_is_pure_noise() {
        let s = generate(&Scenario::new(ScenarioKind::Null, 100, 5)).unwrap();
        assert!(s.signal.iter().all(|&m| m == 0.0));
        let y = s.data.column("y").unwrap();
        let var = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
        assert!((var - 0.04).abs() < 0.02, "{var}");
    }

    #[test]
    fn seeded_generation_repeats() {
        let sc = Scenario::new(ScenarioKind::Small, 40, 9);
        assert_eq!(generate(&sc).unwrap().data, generate(&sc).unwrap().data);
    }

    #[test]
    fn true_functions_are_centred() {
        for t in [Truth::Quadratic, Truth::Sine, Truth::SkewNormal, Truth::Linear] {
            let m = 20_000;
            let mean: f64 = (0..m).map(|i| true_function(t, -1.0 + (i as f64 + 0.5) * 2.0 / m as f64)).sum::<f64>() / m as f64;
            assert!(mean.abs() < 1e-6, "{t:?} {mean}");
        }
    }
}
