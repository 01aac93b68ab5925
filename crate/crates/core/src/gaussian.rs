//! Gaussian additive models: model assembly, low-rank precision, sufficient
//! statistics and the log marginal likelihood under hyper-g and hyper-g/n priors.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::additive::AdditiveDesign;
use crate::backend::MarginalLikelihood;
use crate::error::{Error, Result};
use crate::model_space::ModelIndex;
use crate::scalar::{compensated_sum, Real};
use crate::specfun::{appell_f1, gauss_2f1, ln_gamma};

/// Sample size above which the Laplace approximation replaces the closed forms.
pub const EXACT_MAX_N: usize = 100;

/// Hyper-prior on `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum GPrior {
    #[serde(rename = "hyper-g")]
    HyperG,
    #[default]
    #[serde(rename = "hyper-g/n")]
    HyperGN,
}

impl fmt::Display for GPrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GPrior::HyperG => "hyper-g",
            GPrior::HyperGN => "hyper-g/n",
        })
    }
}

impl FromStr for GPrior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "hyper-g" | "hyperg" => Ok(GPrior::HyperG),
            "hyper-g/n" | "hyper-g-n" | "hypergn" => Ok(GPrior::HyperGN),
            other => Err(Error::Config(format!("unknown prior `{other}` (expected hyper-g or hyper-g/n)"))),
        }
    }
}

impl GPrior {
    /// `ln f(g) + ln g` at `τ = ln g`: the prior density of `τ`.
    pub fn log_density_tau<T: Real>(&self, n: usize, tau: T) -> T {
        match self {
            GPrior::HyperG => tau - T::c(2.0) * softplus(tau),
            GPrior::HyperGN => {
                let ln_n = T::from_usize_lossy(n).ln();
                tau - ln_n - T::c(2.0) * softplus(tau - ln_n)
            }
        }
    }
}

/// `ln(1 + e^t)`.
pub fn softplus<T: Real>(t: T) -> T {
    if t > T::zero() {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// `1 / (1 + e^{-t})`.
pub fn sigmoid<T: Real>(t: T) -> T {
    if t >= T::zero() {
        T::one() / (T::one() + (-t).exp())
    } else {
        let e = t.exp();
        e / (T::one() + e)
    }
}

/// Design columns of one model, linear block first, then spline blocks.
#[derive(Debug, Clone)]
pub struct AssembledModel<T: Real> {
    /// `n × I` linear columns.
    pub x: DMatrix<T>,
    /// `n × JK` spline columns.
    pub z: DMatrix<T>,
    /// Prior variances `ρ_j`, repeated `K` times per smooth term.
    pub d_diag: Vec<T>,
    /// Covariates entering linearly or smoothly, ascending.
    pub linear: Vec<usize>,
    /// Covariates with a spline part, ascending.
    pub smooth: Vec<usize>,
    /// Column offset of each smooth term inside `z`.
    pub smooth_offsets: Vec<usize>,
}

impl<T: Real> AssembledModel<T> {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn i(&self) -> usize {
        self.x.ncols()
    }

    pub fn j(&self) -> usize {
        self.smooth.len()
    }

    pub fn jk(&self) -> usize {
        self.z.ncols()
    }
}

fn assemble_entries<T: Real>(design: &AdditiveDesign<T>, entries: &[(usize, Option<T>)]) -> AssembledModel<T> {
    let n = design.n();
    let linear: Vec<usize> = entries.iter().map(|e| e.0).collect();
    let smooth: Vec<(usize, T)> = entries.iter().filter_map(|&(j, r)| r.map(|r| (j, r))).collect();
    let jk: usize = smooth.iter().map(|&(j, _)| design.blocks[j].k()).sum();
    let mut x = DMatrix::zeros(n, linear.len());
    for (c, &j) in linear.iter().enumerate() {
        x.set_column(c, &design.blocks[j].x);
    }
    let mut z = DMatrix::zeros(n, jk);
    let mut d_diag = Vec::with_capacity(jk);
    let mut offsets = Vec::with_capacity(smooth.len());
    let mut col = 0;
    for &(j, rho) in &smooth {
        let b = &design.blocks[j].z;
        offsets.push(col);
        z.view_mut((0, col), (n, b.ncols())).copy_from(b);
        d_diag.extend(std::iter::repeat(rho).take(b.ncols()));
        col += b.ncols();
    }
    AssembledModel {
        x,
        z,
        d_diag,
        linear,
        smooth: smooth.iter().map(|s| s.0).collect(),
        smooth_offsets: offsets,
    }
}

/// Collects the columns of model `m` in ascending covariate order.
pub fn assemble<T: Real>(m: &ModelIndex, design: &AdditiveDesign<T>) -> Result<AssembledModel<T>> {
    if m.p() != design.p() {
        return Err(Error::InvalidInput(format!("model has {} entries, design has {} covariates", m.p(), design.p())));
    }
    let mut entries = Vec::new();
    for (j, &idx) in m.indices().iter().enumerate() {
        if idx as usize >= design.grid.len() {
            return Err(Error::InvalidInput(format!("grid index {idx} out of range")));
        }
        match idx {
            0 => {}
            1 => entries.push((j, None)),
            _ => {
                let rho = design.rho.get(j, idx).ok_or_else(|| Error::NumericalFailure("missing ρ".into()))?;
                entries.push((j, Some(rho)));
            }
        }
    }
    Ok(assemble_entries(design, &entries))
}

/// Like [`assemble`] with arbitrary degrees of freedom: 0, 1 or a value in `(1, K+1)`.
pub fn assemble_dofs<T: Real>(dofs: &[T], design: &AdditiveDesign<T>) -> Result<AssembledModel<T>> {
    if dofs.len() != design.p() {
        return Err(Error::InvalidInput("dof vector length differs from the number of covariates".into()));
    }
    let mut entries = Vec::new();
    for (j, &d) in dofs.iter().enumerate() {
        if d == T::zero() {
            continue;
        }
        if d == T::one() {
            entries.push((j, None));
        } else {
            entries.push((j, Some(design.spectra[j].rho_from_dof(d)?)));
        }
    }
    Ok(assemble_entries(design, &entries))
}

/// `V⁻¹ = I - W Wᵀ` for `V = I + Z D Zᵀ`, plus `ln|V|^{-1/2}`.
#[derive(Debug, Clone)]
pub struct LowRankPrecision<T: Real> {
    pub w: DMatrix<T>,
    pub log_det_half: T,
    /// Cholesky factor of `M = ZᵀZ + D⁻¹` (absent when there are no spline columns).
    pub m_chol: Option<Cholesky<T, Dyn>>,
}

/// Factorises only the `JK × JK` matrix `M = ZᵀZ + D⁻¹`; `W = Z L⁻ᵀ`.
pub fn low_rank_precision<T: Real>(z: &DMatrix<T>, d_diag: &[T]) -> Result<LowRankPrecision<T>> {
    let n = z.nrows();
    if d_diag.is_empty() {
        return Ok(LowRankPrecision { w: DMatrix::zeros(n, 0), log_det_half: T::zero(), m_chol: None });
    }
    let mut m = z.transpose() * z;
    for (i, &d) in d_diag.iter().enumerate() {
        if !(d > T::zero()) {
            return Err(Error::NumericalFailure("prior variances must be positive".into()));
        }
        m[(i, i)] += T::one() / d;
    }
    let chol = Cholesky::new(m).ok_or_else(|| Error::NumericalFailure("ZᵀZ + D⁻¹ is not positive definite".into()))?;
    let l = chol.l();
    let wt = l
        .solve_lower_triangular(&z.transpose())
        .ok_or_else(|| Error::NumericalFailure("singular Cholesky factor".into()))?;
    let log_det_m = T::c(2.0) * compensated_sum(l.diagonal().iter().map(|v| v.ln()));
    let log_det_d = compensated_sum(d_diag.iter().map(|v| v.ln()));
    Ok(LowRankPrecision { w: wt.transpose(), log_det_half: -T::c(0.5) * (log_det_m + log_det_d), m_chol: Some(chol) })
}

/// Generalised least squares quantities of the decorrelated model.
#[derive(Debug, Clone)]
pub struct GlsFit<T: Real> {
    pub y_mean: T,
    pub sst: T,
    pub ssm: T,
    pub r2: T,
    pub n: usize,
    pub i: usize,
    /// `β̂ = (XᵀV⁻¹X)⁻¹ XᵀV⁻¹(y - ȳ)`.
    pub beta_hat: DVector<T>,
    /// Cholesky factor of `XᵀV⁻¹X`.
    pub xtvx_chol: Option<Cholesky<T, Dyn>>,
}

/// `SST`, `SSM` and `R²` of the decorrelated model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SufficientStats<T: Real> {
    pub sst: T,
    pub ssm: T,
    pub r2: T,
    pub n: usize,
    pub i: usize,
}

impl<T: Real> GlsFit<T> {
    pub fn stats(&self) -> SufficientStats<T> {
        SufficientStats { sst: self.sst, ssm: self.ssm, r2: self.r2, n: self.n, i: self.i }
    }
}

/// Generalised least squares with `V⁻¹ = I - WWᵀ`, never forming an `n × n` matrix.
pub fn gls<T: Real>(y: &[T], am: &AssembledModel<T>, lrp: &LowRankPrecision<T>) -> Result<GlsFit<T>> {
    let n = y.len();
    let y_mean = compensated_sum(y.iter().copied()) / T::from_usize_lossy(n);
    let yc = DVector::from_iterator(n, y.iter().map(|&v| v - y_mean));
    let wty = lrp.w.tr_mul(&yc);
    let sst = compensated_sum(yc.iter().map(|v| *v * *v)) - compensated_sum(wty.iter().map(|v| *v * *v));
    let i = am.i();
    if i == 0 {
        return Ok(GlsFit { y_mean, sst, ssm: T::zero(), r2: T::zero(), n, i, beta_hat: DVector::zeros(0), xtvx_chol: None });
    }
    let wtx = lrp.w.transpose() * &am.x;
    let a = am.x.transpose() * &am.x - wtx.transpose() * &wtx;
    let b = am.x.tr_mul(&yc) - wtx.tr_mul(&wty);
    let chol = Cholesky::new(a).ok_or(Error::CollinearDesign)?;
    let half = chol.l().solve_lower_triangular(&b).ok_or(Error::CollinearDesign)?;
    let ssm = compensated_sum(half.iter().map(|v| *v * *v));
    let beta_hat = chol.solve(&b);
    let mut r2 = ssm / sst;
    if r2 >= T::one() {
        r2 = T::one() - T::EPSILON;
    }
    Ok(GlsFit { y_mean, sst, ssm, r2, n, i, beta_hat, xtvx_chol: Some(chol) })
}

pub fn sufficient_stats<T: Real>(y: &[T], am: &AssembledModel<T>, lrp: &LowRankPrecision<T>) -> Result<SufficientStats<T>> {
    gls(y, am, lrp).map(|f| f.stats())
}

/// Log of the `g`-integrand over `τ = ln g`, relative to the null model:
/// `(1+g)^{(n-1-I)/2} (1+g(1-R²))^{-(n-1)/2} f(g) g`.
pub fn log_g_integrand<T: Real>(prior: GPrior, n: usize, i: usize, r2: T, tau: T) -> T {
    log_g_integrand_derivs(prior, n, i, r2, tau).0
}

/// Value, first and second derivative in `τ` of [`log_g_integrand`].
pub fn log_g_integrand_derivs<T: Real>(prior: GPrior, n: usize, i: usize, r2: T, tau: T) -> (T, T, T) {
    let a = T::from_usize_lossy(n - 1 - i.min(n - 1)) * T::c(0.5);
    let b = T::from_usize_lossy(n - 1) * T::c(0.5);
    let shift = (T::one() - r2).ln();
    let s1 = sigmoid(tau);
    let s2 = sigmoid(tau + shift);
    let mut h = a * softplus(tau) - b * softplus(tau + shift) + tau;
    let mut d1 = a * s1 - b * s2 + T::one();
    let mut d2 = a * s1 * (T::one() - s1) - b * s2 * (T::one() - s2);
    match prior {
        GPrior::HyperG => {
            h -= T::c(2.0) * softplus(tau);
            d1 -= T::c(2.0) * s1;
            d2 -= T::c(2.0) * s1 * (T::one() - s1);
        }
        GPrior::HyperGN => {
            let ln_n = T::from_usize_lossy(n).ln();
            let s3 = sigmoid(tau - ln_n);
            h -= ln_n + T::c(2.0) * softplus(tau - ln_n);
            d1 -= T::c(2.0) * s3;
            d2 -= T::c(2.0) * s3 * (T::one() - s3);
        }
    }
    (h, d1, d2)
}

/// Mode of [`log_g_integrand`] in `τ` by safeguarded Newton on the derivative.
pub fn g_integrand_mode<T: Real>(prior: GPrior, n: usize, i: usize, r2: T) -> T {
    let (mut lo, mut hi) = (T::c(-60.0), T::c(200.0));
    let mut t = T::zero();
    for _ in 0..300 {
        let (_, d1, d2) = log_g_integrand_derivs(prior, n, i, r2, t);
        if d1 > T::zero() {
            lo = t;
        } else {
            hi = t;
        }
        if d1.abs() < T::c(1e-12) || hi - lo < T::c(1e-12) {
            break;
        }
        let step = t - d1 / d2;
        t = if d2 < T::zero() && step > lo && step < hi { step } else { (lo + hi) * T::c(0.5) };
    }
    t
}

/// Laplace approximation of `ln ∫ exp(h(τ)) dτ`.
pub fn laplace_log_factor<T: Real>(prior: GPrior, n: usize, i: usize, r2: T) -> T {
    if i == 0 {
        return T::zero();
    }
    let t = g_integrand_mode(prior, n, i, r2);
    let (h, _, d2) = log_g_integrand_derivs(prior, n, i, r2, t);
    h + T::c(0.5) * T::two_pi().ln() - T::c(0.5) * (-d2).ln()
}

/// Closed-form `ln` of the hyper-g or hyper-g/n Bayes-factor integral; `None` on special-function failure.
pub fn exact_log_factor<T: Real>(prior: GPrior, n: usize, i: usize, r2: T) -> Option<T> {
    if i == 0 {
        return Some(T::zero());
    }
    let nf = T::from_usize_lossy(n);
    let fi = T::from_usize_lossy(i);
    let half = T::c(0.5);
    let lead = (T::c(2.0) / (fi + T::c(2.0))).ln();
    match prior {
        GPrior::HyperG => {
            let v = gauss_2f1((nf - T::one()) * half, T::one(), (fi + T::c(4.0)) * half, r2);
            (v.is_ok() && v.sign > 0).then(|| lead + v.log_abs)
        }
        GPrior::HyperGN => {
            let one_m = T::one() - r2;
            let x = (nf - T::one()) / nf;
            let y = (nf - T::one() / one_m) / nf;
            let v = appell_f1(
                fi * half + T::one(),
                (fi + T::one() - nf) * half,
                (nf - T::one()) * half,
                fi * half + T::c(2.0),
                x,
                y,
            );
            (v.is_ok() && v.sign > 0)
                .then(|| -fi * half * nf.ln() - (nf - T::one()) * half * one_m.ln() + lead + v.log_abs)
        }
    }
}

/// `ln Γ((n-1)/2) - (n-1)/2 ln π - ½ ln n`, shared by every model of a data set.
pub fn log_const<T: Real>(n: usize) -> T {
    let a = T::from_usize_lossy(n - 1) * T::c(0.5);
    ln_gamma(a) - a * T::pi().ln() - T::c(0.5) * T::from_usize_lossy(n).ln()
}

/// Which route produced the `g`-integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorRoute {
    Exact,
    Laplace,
}

/// `ln C_prior(n, I, R²)`, exact for `n ≤ 100` unless the special functions fail.
pub fn log_prior_factor<T: Real>(prior: GPrior, n: usize, i: usize, r2: T) -> (T, FactorRoute) {
    if n <= EXACT_MAX_N {
        if let Some(v) = exact_log_factor(prior, n, i, r2) {
            return (v, FactorRoute::Exact);
        }
    }
    (laplace_log_factor(prior, n, i, r2), FactorRoute::Laplace)
}

/// Log marginal likelihood from the sufficient statistics and `ln|V|^{-1/2}`.
pub fn log_marglik_from_stats<T: Real>(prior: GPrior, stats: &SufficientStats<T>, log_det_half: T) -> Result<T> {
    if stats.n < stats.i + 2 {
        return Err(Error::InvalidInput(format!("n = {} is too small for {} linear terms", stats.n, stats.i)));
    }
    if !(stats.sst > T::zero()) {
        return Err(Error::NumericalFailure("non-positive residual sum of squares".into()));
    }
    let (factor, _) = log_prior_factor(prior, stats.n, stats.i, stats.r2);
    let half_nm1 = T::from_usize_lossy(stats.n - 1) * T::c(0.5);
    Ok(log_const::<T>(stats.n) - half_nm1 * stats.sst.ln() + factor + log_det_half)
}

/// Scores Gaussian models over a fixed design.
#[derive(Debug, Clone)]
pub struct GaussianBackend<T: Real> {
    pub y: Vec<T>,
    pub design: AdditiveDesign<T>,
    pub prior: GPrior,
}

impl<T: Real> GaussianBackend<T> {
    pub fn new(y: Vec<T>, design: AdditiveDesign<T>, prior: GPrior) -> Result<Self> {
        if y.len() != design.n() {
            return Err(Error::InvalidInput("response length differs from the covariates".into()));
        }
        if y.iter().any(|v| !v.finite()) {
            return Err(Error::Data("response contains non-finite values".into()));
        }
        if y.iter().all(|&v| v == y[0]) {
            return Err(Error::SeparationOrDegenerate("constant response".into()));
        }
        Ok(Self { y, design, prior })
    }

    pub fn evaluate(&self, am: &AssembledModel<T>) -> Result<T> {
        let lrp = low_rank_precision(&am.z, &am.d_diag)?;
        let stats = sufficient_stats(&self.y, am, &lrp)?;
        log_marglik_from_stats(self.prior, &stats, lrp.log_det_half)
    }
}

impl<T: Real> MarginalLikelihood<T> for GaussianBackend<T> {
    fn log_marglik(&self, m: &ModelIndex) -> Result<T> {
        self.evaluate(&assemble(m, &self.design)?)
    }

    fn log_marglik_dofs(&self, dofs: &[T]) -> Result<T> {
        self.evaluate(&assemble_dofs(dofs, &self.design)?)
    }

    fn design(&self) -> &AdditiveDesign<T> {
        &self.design
    }
}
