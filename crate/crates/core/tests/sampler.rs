mod common;

use hypergam::design::{GridBlock, RawCovariate};
use hypergam::gaussian::{assemble, low_rank_precision};
use hypergam::glm::{Family, GlmBackend};
use hypergam::sampler::{curves, sample_gaussian, sample_glm, sample_u_conditional, GlmSamplerOptions, PosteriorDraws};
use hypergam::{GPrior, ModelIndex};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Standard error of the mean of a correlated series from 50 batch means.
fn batch_se(v: &[f64]) -> f64 {
    let b = v.len() / 50;
    let means: Vec<f64> = v.chunks(b).take(50).map(mean).collect();
    sd(&means) / (means.len() as f64).sqrt()
}

fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, m: usize) -> f64 {
    let h = (hi - lo) / m as f64;
    let mut s = f(lo) + f(hi);
    for k in 1..m {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(lo + k as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn null_model_intercept_centres_on_sample_mean() {
    let be = common::gaussian_toy(50, 2, 3, 3, None, GPrior::HyperGN);
    let draws = sample_gaussian(&be, &ModelIndex::null(2), 20_000, 1).unwrap();
    assert_eq!((draws.beta.ncols(), draws.u.ncols()), (0, 0));
    let ybar = mean(&be.y);
    let se = sd(&draws.beta0) / (draws.len() as f64).sqrt();
    assert!((mean(&draws.beta0) - ybar).abs() < 3.0 * se);
}

#[test]
fn linear_model_mean_is_shrunken_least_squares() {
    let be = common::gaussian_toy(40, 2, 21, 3, None, GPrior::HyperG);
    let m = ModelIndex::new(vec![1, 1]);
    let am = assemble(&m, &be.design).unwrap();
    let n = be.y.len();
    let ybar = mean(&be.y);
    let yc = DVector::from_iterator(n, be.y.iter().map(|v| v - ybar));
    let xtx = am.x.transpose() * &am.x;
    let bhat = xtx.clone().try_inverse().unwrap() * am.x.transpose() * &yc;
    let r2 = (bhat.transpose() * &xtx * &bhat)[(0, 0)] / yc.norm_squared();
    let (nf, i) = (n as f64, 2.0);
    let log_h = |t: f64| {
        let g: f64 = t.exp();
        (nf - 1.0 - i) / 2.0 * g.ln_1p() - (nf - 1.0) / 2.0 * (g * (1.0 - r2)).ln_1p() - 2.0 * g.ln_1p() + t
    };
    let top = (-400..=400).map(|k| log_h(k as f64 * 0.1)).fold(f64::NEG_INFINITY, f64::max);
    let z = simpson(|t| (log_h(t) - top).exp(), -40.0, 40.0, 40_000);
    let shrink = simpson(|t| (log_h(t) - top).exp() * t.exp() / (1.0 + t.exp()), -40.0, 40.0, 40_000) / z;

    let draws = sample_gaussian(&be, &m, 40_000, 2).unwrap();
    assert_eq!(draws.u.ncols(), 0);
    for c in 0..2 {
        let col: Vec<f64> = draws.beta.column(c).iter().copied().collect();
        let se = sd(&col) / (col.len() as f64).sqrt();
        assert!((mean(&col) - shrink * bhat[c]).abs() < 3.0 * se, "{c}: {} vs {}", mean(&col), shrink * bhat[c]);
    }
}

#[test]
fn spline_conditional_mean() {
    let be = common::gaussian_toy(40, 1, 5, 4, None, GPrior::HyperGN);
    let am = assemble(&ModelIndex::new(vec![3]), &be.design).unwrap();
    let lrp = low_rank_precision(&am.z, &am.d_diag).unwrap();
    let mc = lrp.m_chol.as_ref().unwrap();
    let ybar = mean(&be.y);
    let r = DVector::from_iterator(be.y.len(), be.y.iter().map(|v| v - ybar));
    let mut m = am.z.transpose() * &am.z;
    for (k, d) in am.d_diag.iter().enumerate() {
        m[(k, k)] += 1.0 / d;
    }
    let sigma = m.try_inverse().unwrap();
    let expect = &sigma * am.z.transpose() * &r;
    let s = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut sum = DVector::zeros(expect.len());
    for _ in 0..s {
        sum += sample_u_conditional(&am.z, mc, &r, 1.0, &mut rng);
    }
    let got = sum / s as f64;
    for k in 0..expect.len() {
        let se = (sigma[(k, k)] / s as f64).sqrt();
        assert!((got[k] - expect[k]).abs() < 3.0 * se, "{k}: {} vs {}", got[k], expect[k]);
    }
}

#[test]
fn gaussian_draws_are_independent() {
    let be = common::gaussian_toy(60, 2, 8, 3, None, GPrior::HyperGN);
    let draws = sample_gaussian(&be, &ModelIndex::new(vec![3, 1]), 10_000, 4).unwrap();
    let g: Vec<f64> = draws.g.iter().map(|v| v.ln()).collect();
    let m = mean(&g);
    let num: f64 = g.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    let den: f64 = g.iter().map(|v| (v - m).powi(2)).sum();
    let ac = num / den;
    assert!(ac.abs() < 3.0 / (g.len() as f64).sqrt(), "{ac}");
    assert!(draws.sigma2.unwrap().iter().all(|&v| v > 0.0));
}

#[test]
fn linear_curves_share_a_pivot() {
    let be = common::gaussian_toy(50, 2, 9, 3, None, GPrior::HyperGN);
    let draws = sample_gaussian(&be, &ModelIndex::new(vec![1, 0]), 200, 3).unwrap();
    let values: Vec<f64> = (0..20).map(|k| -1.5 + 0.15 * k as f64).collect();
    let grids: Vec<_> = (0..2).map(|j| be.design.grid_block(j, &values).unwrap()).collect();
    let cs = curves(&draws, &grids).unwrap();
    assert!(cs.curves[1].samples.iter().all(|&v| v == 0.0));
    let pivot = mean(&be.design.covariates[0].values);
    let (a, b) = (values[0], values[19]);
    for s in 0..200 {
        let (fa, fb) = (cs.curves[0].samples[(s, 0)], cs.curves[0].samples[(s, 19)]);
        let x0 = a - fa * (b - a) / (fb - fa);
        assert!((x0 - pivot).abs() < 1e-8, "{x0} vs {pivot}");
    }
}

#[test]
fn curves_by_hand() {
    let draws = PosteriorDraws::<f64> {
        model: ModelIndex::new(vec![1, 2]),
        beta0: vec![0.0, 0.0],
        beta: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -1.0, 0.5]),
        u: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]),
        sigma2: None,
        g: vec![1.0, 1.0],
        acceptance_rate: None,
        g_acceptance_rate: None,
        failed_proposals: 0,
        linear: vec![0, 1],
        smooth: vec![1],
        smooth_offsets: vec![0],
        smooth_sizes: vec![2],
    };
    let grids = vec![
        GridBlock { values: vec![0.0, 1.0], x_star: DVector::from_vec(vec![-1.0, 1.0]), z_star: DMatrix::zeros(2, 0) },
        GridBlock {
            values: vec![0.0, 1.0],
            x_star: DVector::from_vec(vec![2.0, 4.0]),
            z_star: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
        },
    ];
    let cs = curves(&draws, &grids).unwrap();
    // sample 0: β = (1, 2), u = (1, 0); sample 1: β = (-1, 0.5), u = (0, 3)
    assert_eq!(cs.curves[0].samples, DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]));
    assert_eq!(cs.curves[1].samples, DMatrix::from_row_slice(2, 2, &[5.0, 11.0, 7.0, 14.0]));
}

#[test]
fn exact_gaussian_proposals_are_always_accepted() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 60;
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| 0.3 + v.sin() + rng.random_range(-1.0..1.0)).collect();
    let be = GlmBackend::build(y, vec![RawCovariate::new("x", x).unwrap()], 4, None, Family::Gaussian, GPrior::HyperGN).unwrap();
    let opts = GlmSamplerOptions { samples: 2_000, thin: 1, burnin: 200, iwls_steps: 1 };
    let draws = sample_glm(&be, &ModelIndex::new(vec![4]), opts, 3).unwrap();
    assert!(draws.acceptance_rate.unwrap() > 0.999);
    assert_eq!(draws.failed_proposals, 0);
}

#[test]
fn bernoulli_slope_matches_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let n = 20;
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| if rng.random::<f64>() < 1.0 / (1.0 + (-1.2 * v).exp()) { 1.0 } else { 0.0 }).collect();
    let be = GlmBackend::build(y.clone(), vec![RawCovariate::new("x", x).unwrap()], 3, None, Family::Bernoulli, GPrior::HyperGN).unwrap();
    let m = ModelIndex::new(vec![1]);
    let opts = GlmSamplerOptions { samples: 20_000, thin: 2, burnin: 1_000, iwls_steps: 2 };
    let draws = sample_glm(&be, &m, opts, 5).unwrap();
    let b1: Vec<f64> = draws.beta.column(0).iter().copied().collect();
    let (mc_mean, mc_se) = (mean(&b1), batch_se(&b1));

    let am = assemble(&m, &be.design).unwrap();
    let xs: Vec<f64> = am.x.column(0).iter().copied().collect();
    let j0 = 0.25 * xs.iter().map(|v| v * v).sum::<f64>();
    let nf = n as f64;
    // marginal prior of β₁ after integrating g = e^τ
    let prior_b1 = |b: f64| {
        simpson(
            |t| {
                let v = t.exp() / j0;
                let log_g_prior = t - nf.ln() - 2.0 * (t.exp() / nf).ln_1p();
                (-0.5 * b * b / v - 0.5 * (2.0 * std::f64::consts::PI * v).ln() + log_g_prior).exp()
            },
            -25.0,
            25.0,
            5_000,
        )
    };
    let loglik = |b0: f64, b1: f64| -> f64 {
        y.iter().zip(&xs).map(|(&yi, &xi)| {
            let eta = b0 + b1 * xi;
            yi * eta - eta.exp().ln_1p()
        }).sum()
    };
    let (lo0, hi0) = (mean(&draws.beta0) - 10.0 * sd(&draws.beta0), mean(&draws.beta0) + 10.0 * sd(&draws.beta0));
    let (lo1, hi1) = (mc_mean - 10.0 * sd(&b1), mc_mean + 10.0 * sd(&b1));
    let k = 300;
    let (h0, h1) = ((hi0 - lo0) / k as f64, (hi1 - lo1) / k as f64);
    let pri: Vec<f64> = (0..=k).map(|j| prior_b1(lo1 + j as f64 * h1)).collect();
    let mut ll = vec![vec![0.0; k + 1]; k + 1];
    let mut top = f64::NEG_INFINITY;
    for a in 0..=k {
        for (b, p) in pri.iter().enumerate() {
            let v = loglik(lo0 + a as f64 * h0, lo1 + b as f64 * h1) + p.ln();
            ll[a][b] = v;
            top = top.max(v);
        }
    }
    let (mut z, mut first) = (0.0, 0.0);
    for (a, row) in ll.iter().enumerate() {
        let wa = if a == 0 || a == k { 0.5 } else { 1.0 };
        for (b, &v) in row.iter().enumerate() {
            let w = wa * if b == 0 || b == k { 0.5 } else { 1.0 } * (v - top).exp();
            z += w;
            first += w * (lo1 + b as f64 * h1);
        }
    }
    let oracle = first / z;
    assert!((mc_mean - oracle).abs() < 3.0 * mc_se, "{mc_mean} ± {mc_se} vs {oracle}");
}
