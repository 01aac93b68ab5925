#![allow(dead_code)]

use std::path::Path;

use hypergam::additive::AdditiveDesign;
use hypergam::data::Dataset;
use hypergam::design::RawCovariate;
use hypergam::dof::DofGrid;
use hypergam::gaussian::GaussianBackend;
use hypergam::glm::{Family, GlmBackend};
use hypergam::GPrior;
use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn pima() -> (Vec<f64>, Vec<RawCovariate<f64>>) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/pima.csv");
    let d = Dataset::read_csv(&path).unwrap();
    let y = d.column("diabetes").unwrap().to_vec();
    let covs = d.names[..7]
        .iter()
        .map(|n| RawCovariate::new(n.clone(), d.column(n).unwrap().to_vec()).unwrap())
        .collect();
    (y, covs)
}

pub fn pima_backend() -> GlmBackend<f64> {
    let (y, covs) = pima();
    GlmBackend::build(y, covs, 4, None, Family::Bernoulli, GPrior::HyperGN).unwrap()
}

/// `y = sin(2x₁) + 0.5x₂ + noise` with extra pure-noise covariates.
pub fn gaussian_toy(n: usize, p: usize, seed: u64, knots: usize, grid: Option<Vec<f64>>, prior: GPrior) -> GaussianBackend<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let mut v = (2.0 * xs[0][i]).sin() + rng.random_range(-0.6..0.6);
            if p > 1 {
                v += 0.5 * xs[1][i];
            }
            v
        })
        .collect();
    let covs = xs
        .into_iter()
        .enumerate()
        .map(|(j, v)| RawCovariate::new(format!("x{}", j + 1), v).unwrap())
        .collect();
    let grid = grid.map(|g| DofGrid::new(g).unwrap());
    let design = AdditiveDesign::build(covs, knots, grid, None).unwrap();
    GaussianBackend::new(y, design, prior).unwrap()
}

fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Log marginal likelihood from the dense `n × n` matrix `V = I + Z D Zᵀ` and a direct
/// Simpson quadrature over `ln g`.
pub fn dense_log_marglik(y: &[f64], x: &DMatrix<f64>, z: &DMatrix<f64>, d: &[f64], prior: GPrior) -> f64 {
    let n = y.len();
    let nf = n as f64;
    let i = x.ncols();
    let v = DMatrix::identity(n, n) + z * DMatrix::from_diagonal(&DVector::from_column_slice(d)) * z.transpose();
    let vinv = v.clone().try_inverse().unwrap();
    let log_det_v = v.lu().determinant().ln();
    let ybar = y.iter().sum::<f64>() / nf;
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - ybar));
    let sst = (yc.transpose() * &vinv * &yc)[(0, 0)];
    let r2 = if i > 0 {
        let a = x.transpose() * &vinv * x;
        let b = x.transpose() * &vinv * &yc;
        (b.transpose() * a.try_inverse().unwrap() * &b)[(0, 0)] / sst
    } else {
        0.0
    };
    let a = (nf - 1.0) / 2.0;
    let log_prior_g = |g: f64| match prior {
        GPrior::HyperG => -2.0 * (1.0 + g).ln(),
        GPrior::HyperGN => -nf.ln() - 2.0 * (1.0 + g / nf).ln(),
    };
    let h = |t: f64| {
        let g = t.exp();
        (nf - 1.0 - i as f64) / 2.0 * g.ln_1p() - a * (g * (1.0 - r2)).ln_1p() + log_prior_g(g) + t
    };
    let (lo, hi, m) = (-60.0, 60.0, 40_000);
    let step = (hi - lo) / m as f64;
    let vals: Vec<f64> = (0..=m).map(|k| h(lo + k as f64 * step)).collect();
    let top = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (k, v) in vals.iter().enumerate() {
        let w = if k == 0 || k == m { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * (v - top).exp();
    }
    let log_int = top + (s * step / 3.0).ln();
    ln_gamma(a) - a * std::f64::consts::PI.ln() - 0.5 * nf.ln() - 0.5 * log_det_v - a * sst.ln() + log_int
}

/// Total-variation distance between two probability assignments over the same keys.
pub fn total_variation(a: &[(Vec<u8>, f64)], b: &[(Vec<u8>, f64)]) -> f64 {
    use std::collections::HashMap;
    let mut m: HashMap<&Vec<u8>, (f64, f64)> = HashMap::new();
    for (k, v) in a {
        m.entry(k).or_default().0 += v;
    }
    for (k, v) in b {
        m.entry(k).or_default().1 += v;
    }
    0.5 * m.values().map(|(x, y)| (x - y).abs()).sum::<f64>()
}

pub fn q(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Exact partial sums of the ₂F₁ series until the next term is below 1e-22 of the sum.
pub fn exact_2f1(a: &BigRational, b: &BigRational, c: &BigRational, x: &BigRational) -> f64 {
    let mut term = BigRational::one();
    let mut sum = BigRational::one();
    for k in 0..5000 {
        let kq = BigRational::from_integer(BigInt::from(k));
        term = term * (a + &kq) * (b + &kq) / ((c + &kq) * (&kq + BigRational::one())) * x;
        sum += &term;
        let t = term.to_f64().unwrap().abs();
        let s = sum.to_f64().unwrap().abs();
        if t < 1e-22 * s && k > 5 {
            break;
        }
        if k % 64 == 63 {
            // keep the rationals small: round to 60 decimal digits of the running sum
            let scale = BigInt::from(10).pow(60);
            term = BigRational::new((&term * BigRational::from_integer(scale.clone())).round().to_integer(), scale.clone());
            sum = BigRational::new((&sum * BigRational::from_integer(scale.clone())).round().to_integer(), scale);
        }
    }
    sum.to_f64().unwrap()
}

/// Double series `Σ (a)_{m+n}(b1)_m(b2)_n / ((c)_{m+n} m! n!) xᵐ yⁿ` with positive terms.
pub fn appell_series(a: f64, b1: f64, b2: f64, c: f64, x: f64, y: f64) -> f64 {
    let nmax = 400;
    let mut row = 1.0; // term at (m, 0)
    let mut total = 0.0;
    for m in 0..nmax {
        let mut t = row;
        let mut row_sum = 0.0;
        for n in 0..nmax {
            row_sum += t;
            let s = (m + n) as f64;
            t *= (a + s) * (b2 + n as f64) / ((c + s) * (n as f64 + 1.0)) * y;
            if t.abs() < 1e-20 * row_sum.abs() {
                break;
            }
        }
        total += row_sum;
        let s = m as f64;
        row *= (a + s) * (b1 + s) / ((c + s) * (s + 1.0)) * x;
        if row.abs() < 1e-20 * total.abs() {
            break;
        }
    }
    total
}
