//! Generalised additive models: generalised g-prior, Bayesian IWLS and the
//! integrated Laplace approximation of the marginal likelihood.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::additive::AdditiveDesign;
use crate::backend::MarginalLikelihood;
use crate::design::RawCovariate;
use crate::dof::DofGrid;
use crate::error::{Error, Result};
use crate::gaussian::{assemble, assemble_dofs, low_rank_precision, sigmoid, softplus, AssembledModel, GPrior};
use crate::model_space::ModelIndex;
use crate::scalar::{compensated_sum, CompensatedSum, Real};
use crate::specfun::ln_gamma;

/// Response distribution with its canonical link; the dispersion is fixed at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Family {
    /// Normal with unit variance, identity link.
    #[serde(rename = "gaussian")]
    Gaussian,
    #[serde(rename = "bernoulli")]
    Bernoulli,
    #[serde(rename = "poisson")]
    Poisson,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Gaussian => "gaussian",
            Family::Bernoulli => "bernoulli",
            Family::Poisson => "poisson",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gaussian" | "normal" => Ok(Family::Gaussian),
            "bernoulli" | "binomial" | "logit" => Ok(Family::Bernoulli),
            "poisson" => Ok(Family::Poisson),
            other => Err(Error::Config(format!("unknown family `{other}`"))),
        }
    }
}

impl Family {
    pub fn mean<T: Real>(&self, eta: T) -> T {
        match self {
            Family::Gaussian => eta,
            Family::Bernoulli => sigmoid(eta),
            Family::Poisson => eta.exp(),
        }
    }

    /// Canonical-link IWLS weight, the variance function at the mean.
    pub fn weight<T: Real>(&self, eta: T) -> T {
        match self {
            Family::Gaussian => T::one(),
            Family::Bernoulli => {
                let m = sigmoid(eta);
                m * (T::one() - m)
            }
            Family::Poisson => eta.exp(),
        }
    }

    /// Link function at a mean value.
    pub fn link<T: Real>(&self, mu: T) -> T {
        match self {
            Family::Gaussian => mu,
            Family::Bernoulli => (mu / (T::one() - mu)).ln(),
            Family::Poisson => mu.ln(),
        }
    }

    pub fn log_density<T: Real>(&self, y: T, eta: T) -> T {
        match self {
            Family::Gaussian => -T::c(0.5) * ((y - eta) * (y - eta) + T::two_pi().ln()),
            Family::Bernoulli => y * eta - softplus(eta),
            Family::Poisson => y * eta - eta.exp() - ln_gamma(y + T::one()),
        }
    }

    pub fn validate<T: Real>(&self, y: &[T]) -> Result<()> {
        if y.iter().any(|v| !v.finite()) {
            return Err(Error::Data("response contains non-finite values".into()));
        }
        match self {
            Family::Gaussian => Ok(()),
            Family::Bernoulli => {
                if y.iter().any(|&v| v != T::zero() && v != T::one()) {
                    return Err(Error::Data("Bernoulli response must be 0 or 1".into()));
                }
                Ok(())
            }
            Family::Poisson => {
                if y.iter().any(|&v| v < T::zero() || v != v.round()) {
                    return Err(Error::Data("Poisson response must be a non-negative integer".into()));
                }
                Ok(())
            }
        }
    }
}

/// Intercept-only fit.
#[derive(Debug, Clone)]
pub struct NullFit<T: Real> {
    pub beta0: T,
    /// IWLS weights at `η = 1β̂₀`.
    pub w_hat: Vec<T>,
}

/// Newton iterations for the intercept-only model.
pub fn fit_null<T: Real>(y: &[T], family: Family) -> Result<NullFit<T>> {
    family.validate(y)?;
    let n = T::from_usize_lossy(y.len());
    let sum = compensated_sum(y.iter().copied());
    match family {
        Family::Bernoulli if sum == T::zero() || sum == n => {
            return Err(Error::SeparationOrDegenerate("all responses are equal".into()));
        }
        Family::Poisson if sum == T::zero() => {
            return Err(Error::SeparationOrDegenerate("all counts are zero".into()));
        }
        _ => {}
    }
    let mut b = T::zero();
    for _ in 0..100 {
        let score = sum - n * family.mean(b);
        let info = n * family.weight(b);
        let step = score / info;
        b += step;
        if step.abs() < T::c(1e-14) * (T::one() + b.abs()) {
            break;
        }
    }
    Ok(NullFit { beta0: b, w_hat: vec![family.weight(b); y.len()] })
}

/// `J₀ = X̃ᵀ(I + Z̃DZ̃ᵀ)⁻¹X̃` with `X̃ = W₀^{1/2}X`, `Z̃ = W₀^{1/2}Z`.
#[derive(Debug, Clone)]
pub struct GeneralizedGPrior<T: Real> {
    pub j0: DMatrix<T>,
    pub log_det: T,
}

pub fn generalized_g_prior<T: Real>(am: &AssembledModel<T>, w0: &[T]) -> Result<GeneralizedGPrior<T>> {
    let sqrt_w: Vec<T> = w0.iter().map(|w| w.sqrt()).collect();
    let scale_rows = |m: &DMatrix<T>| {
        let mut s = m.clone();
        for (i, mut row) in s.row_iter_mut().enumerate() {
            row *= sqrt_w[i];
        }
        s
    };
    let xt = scale_rows(&am.x);
    let zt = scale_rows(&am.z);
    let lrp = low_rank_precision(&zt, &am.d_diag)?;
    let wtx = lrp.w.transpose() * &xt;
    let j0 = xt.transpose() * &xt - wtx.transpose() * &wtx;
    let j0 = (&j0 + j0.transpose()) * T::c(0.5);
    let log_det = if j0.nrows() == 0 {
        T::zero()
    } else {
        let ch = Cholesky::new(j0.clone()).ok_or(Error::CollinearDesign)?;
        T::c(2.0) * compensated_sum(ch.l().diagonal().iter().map(|v| v.ln()))
    };
    Ok(GeneralizedGPrior { j0, log_det })
}

/// Numerical settings of the GLM marginal likelihood.
#[derive(Debug, Clone, Copy)]
pub struct GlmOptions {
    pub max_iter: usize,
    /// Stop when the Newton decrement falls below this value.
    pub decrement_tol: f64,
    /// Tails of the `ln g` integrand are followed until this far below the peak.
    pub tail_drop: f64,
    /// Trapezoid step halving stops when the log integral changes by less than this.
    pub halving_tol: f64,
}

impl Default for GlmOptions {
    fn default() -> Self {
        Self { max_iter: 50, decrement_tol: 1e-13, tail_drop: 12.0, halving_tol: 1e-6 }
    }
}

/// Mode and curvature of the conditional posterior of `β_a = (β₀, β_d, u_d)` at fixed `g`.
#[derive(Debug, Clone)]
pub struct IwlsFit<T: Real> {
    pub beta: DVector<T>,
    pub chol: Cholesky<T, Dyn>,
    /// `ℓ(β) - ½βᵀPβ` at the mode.
    pub objective: T,
    pub loglik: T,
    pub iterations: usize,
}

/// One model prepared for repeated evaluation at different `g`.
#[derive(Debug, Clone)]
pub struct GlmModel<'a, T: Real> {
    pub y: &'a [T],
    pub family: Family,
    /// `[1, X_d, Z_d]`.
    pub xa: DMatrix<T>,
    pub i: usize,
    pub d_diag: Vec<T>,
    pub prior: GeneralizedGPrior<T>,
    pub options: GlmOptions,
}

impl<'a, T: Real> GlmModel<'a, T> {
    pub fn new(y: &'a [T], family: Family, am: &AssembledModel<T>, w0: &[T], options: GlmOptions) -> Result<Self> {
        let n = y.len();
        let q = 1 + am.i() + am.jk();
        let mut xa = DMatrix::zeros(n, q);
        xa.column_mut(0).fill(T::one());
        xa.view_mut((0, 1), (n, am.i())).copy_from(&am.x);
        xa.view_mut((0, 1 + am.i()), (n, am.jk())).copy_from(&am.z);
        let prior = generalized_g_prior(am, w0)?;
        Ok(Self { y, family, xa, i: am.i(), d_diag: am.d_diag.clone(), prior, options })
    }

    pub fn q(&self) -> usize {
        self.xa.ncols()
    }

    /// Adds the prior precision `diag(0, J₀/g, D⁻¹)` to `h`.
    pub fn add_prior_precision(&self, h: &mut DMatrix<T>, g: T) {
        let i = self.i;
        for r in 0..i {
            for c in 0..i {
                h[(1 + r, 1 + c)] += self.prior.j0[(r, c)] / g;
            }
        }
        for (k, &d) in self.d_diag.iter().enumerate() {
            h[(1 + i + k, 1 + i + k)] += T::one() / d;
        }
    }

    /// `½βᵀPβ`.
    pub fn prior_quadratic(&self, beta: &DVector<T>, g: T) -> T {
        let i = self.i;
        let mut acc = T::zero();
        if i > 0 {
            let bd = beta.rows(1, i);
            acc += (bd.transpose() * &self.prior.j0 * bd)[(0, 0)] / g;
        }
        for (k, &d) in self.d_diag.iter().enumerate() {
            let u = beta[1 + i + k];
            acc += u * u / d;
        }
        acc * T::c(0.5)
    }

    pub fn loglik_eta(&self, eta: &DVector<T>) -> T {
        compensated_sum(self.y.iter().zip(eta.iter()).map(|(&y, &e)| self.family.log_density(y, e)))
    }

    /// `ℓ(β) - ½βᵀPβ`.
    pub fn log_posterior(&self, beta: &DVector<T>, g: T) -> T {
        let eta = &self.xa * beta;
        self.loglik_eta(&eta) - self.prior_quadratic(beta, g)
    }

    /// Gradient and Cholesky factor of the negative Hessian of the log posterior at `β`.
    pub fn newton_system(&self, beta: &DVector<T>, eta: &DVector<T>, g: T) -> Result<(DVector<T>, Cholesky<T, Dyn>)> {
        let n = self.y.len();
        let mut xw = self.xa.clone();
        let mut resid = DVector::zeros(n);
        for i in 0..n {
            let w = self.family.weight(eta[i]);
            resid[i] = self.y[i] - self.family.mean(eta[i]);
            xw.row_mut(i).scale_mut(w.sqrt());
        }
        let mut h = xw.transpose() * &xw;
        self.add_prior_precision(&mut h, g);
        let mut grad = self.xa.tr_mul(&resid);
        // subtract Pβ
        let i = self.i;
        if i > 0 {
            let pb = &self.prior.j0 * beta.rows(1, i) / g;
            for r in 0..i {
                grad[1 + r] -= pb[r];
            }
        }
        for (k, &d) in self.d_diag.iter().enumerate() {
            grad[1 + i + k] -= beta[1 + i + k] / d;
        }
        let chol = Cholesky::new(h).ok_or_else(|| Error::NumericalFailure("penalised information is not positive definite".into()))?;
        Ok((grad, chol))
    }

    /// Gaussian proposal `N(m, H⁻¹)` from `steps` plain IWLS iterations started at `β`.
    pub fn iwls_proposal(&self, beta: &DVector<T>, g: T, steps: usize) -> Result<(DVector<T>, Cholesky<T, Dyn>)> {
        let mut cur = beta.clone();
        let mut last = None;
        for _ in 0..steps.max(1) {
            let eta = &self.xa * &cur;
            let (grad, chol) = self.newton_system(&cur, &eta, g)?;
            let next = &cur + chol.solve(&grad);
            if next.iter().any(|v| !v.finite()) {
                return Err(Error::IwlsDiverged { iterations: steps });
            }
            last = Some((next.clone(), chol));
            cur = next;
        }
        Ok(last.expect("at least one step"))
    }

    /// Bayesian IWLS (Newton with step halving) for the posterior mode at fixed `g`.
    pub fn iwls(&self, g: T, start: Option<&DVector<T>>) -> Result<IwlsFit<T>> {
        let mut beta = match start {
            Some(b) => b.clone(),
            None => {
                let mut b = DVector::zeros(self.q());
                let mean = compensated_sum(self.y.iter().copied()) / T::from_usize_lossy(self.y.len());
                b[0] = self.family.link(mean);
                b
            }
        };
        let mut eta = &self.xa * &beta;
        let mut obj = self.loglik_eta(&eta) - self.prior_quadratic(&beta, g);
        let tol = T::c(self.options.decrement_tol);
        for it in 0..self.options.max_iter {
            let (grad, chol) = self.newton_system(&beta, &eta, g)?;
            let step = chol.solve(&grad);
            let decrement = grad.dot(&step);
            if decrement < tol * (T::one() + obj.abs()) {
                let loglik = self.loglik_eta(&eta);
                return Ok(IwlsFit { beta, chol, objective: obj, loglik, iterations: it });
            }
            let mut t = T::one();
            loop {
                let cand = &beta + &step * t;
                let cand_eta = &self.xa * &cand;
                let cand_obj = self.loglik_eta(&cand_eta) - self.prior_quadratic(&cand, g);
                if cand_obj.finite() && cand_obj >= obj - T::c(1e-12) * (T::one() + obj.abs()) {
                    beta = cand;
                    eta = cand_eta;
                    obj = cand_obj;
                    break;
                }
                t *= T::c(0.5);
                if t < T::c(1e-10) {
                    return Err(Error::IwlsDiverged { iterations: it + 1 });
                }
            }
        }
        Err(Error::IwlsDiverged { iterations: self.options.max_iter })
    }

    /// Laplace approximation of `ln f(y | g, d)`.
    pub fn laplace(&self, g: T, start: Option<&DVector<T>>) -> Result<(T, IwlsFit<T>)> {
        let fit = self.iwls(g, start)?;
        let i = T::from_usize_lossy(self.i);
        let half = T::c(0.5);
        let log_det_h = T::c(2.0) * compensated_sum(fit.chol.l().diagonal().iter().map(|v| v.ln()));
        let log_det_d = compensated_sum(self.d_diag.iter().map(|v| v.ln()));
        let mut v = fit.objective + half * T::two_pi().ln() - half * log_det_h - half * log_det_d;
        if self.i > 0 {
            v += half * self.prior.log_det - half * i * g.ln();
        }
        Ok((v, fit))
    }

    /// `ln ∫ f̃(y | g, d) f(g) dg` by trapezoid sums over `z = ln g`.
    pub fn integrated_laplace(&self, prior: GPrior) -> Result<T> {
        let n = self.y.len();
        if self.i == 0 {
            return self.laplace(T::one(), None).map(|(v, _)| v);
        }
        // modes found so far; new nodes start from a linear fit through the two nearest
        let mut solved: Vec<(T, DVector<T>)> = Vec::new();
        let mut eval = |z: T| -> Result<T> {
            let start = match solved.len() {
                0 => None,
                1 => Some(solved[0].1.clone()),
                _ => {
                    let (mut a, mut b) = (0, 1);
                    if (solved[b].0 - z).abs() < (solved[a].0 - z).abs() {
                        std::mem::swap(&mut a, &mut b);
                    }
                    for k in 2..solved.len() {
                        let dk = (solved[k].0 - z).abs();
                        if dk < (solved[a].0 - z).abs() {
                            b = a;
                            a = k;
                        } else if dk < (solved[b].0 - z).abs() {
                            b = k;
                        }
                    }
                    let (za, zb) = (solved[a].0, solved[b].0);
                    let t = (z - za) / (zb - za);
                    Some(&solved[a].1 + (&solved[b].1 - &solved[a].1) * t)
                }
            };
            let (v, fit) = self.laplace(z.exp(), start.as_ref())?;
            solved.push((z, fit.beta));
            Ok(v + prior.log_density_tau(n, z))
        };

        // bracket the mode with unit steps, then a parabolic vertex
        let mut z = T::from_usize_lossy(n).ln();
        let mut f0 = eval(z)?;
        let mut fp = eval(z + T::one())?;
        let mut fm = eval(z - T::one())?;
        for _ in 0..60 {
            if fp > f0 {
                fm = f0;
                f0 = fp;
                z += T::one();
                fp = eval(z + T::one())?;
            } else if fm > f0 {
                fp = f0;
                f0 = fm;
                z -= T::one();
                fm = eval(z - T::one())?;
            } else {
                break;
            }
        }
        let curv = fp - T::c(2.0) * f0 + fm;
        let (mode, sd) = if curv < T::zero() {
            let shift = ((fm - fp) / (T::c(2.0) * curv)).max(-T::one()).min(T::one());
            (z + shift, (-T::one() / curv).sqrt())
        } else {
            (z, T::one())
        };
        let h0 = sd.min(T::one()).max(T::c(0.05));
        let drop = T::c(self.options.tail_drop);

        // node values keyed by integer position on the finest lattice used so far
        let mut nodes: Vec<(T, T)> = Vec::new();
        let mut eval_node = |zz: T, nodes: &mut Vec<(T, T)>| -> Result<T> {
            let v = eval(zz)?;
            nodes.push((zz, v));
            Ok(v)
        };
        let peak_guess = eval_node(mode, &mut nodes)?;
        let mut peak = peak_guess.max(f0);

        // outward sweeps at the coarse step
        let mut extent = [0usize; 2];
        for (side, dir) in [(0usize, T::one()), (1, -T::one())] {
            let mut k = 1;
            loop {
                let v = eval_node(mode + dir * h0 * T::from_usize_lossy(k), &mut nodes)?;
                peak = peak.max(v);
                if v < peak - drop || k > 400 {
                    break;
                }
                k += 1;
            }
            extent[side] = k;
        }

        let trapezoid = |h: T, nodes: &[(T, T)], peak: T| -> T {
            let mut s = CompensatedSum::default();
            for &(_, v) in nodes {
                s.add((v - peak).exp());
            }
            s.value() * h
        };
        let tail = |h: T, nodes: &[(T, T)], peak: T| -> T {
            // geometric continuation beyond the outermost node on each side
            let mut sorted: Vec<(T, T)> = nodes.to_vec();
            sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let mut t = T::zero();
            let m = sorted.len();
            if m >= 2 {
                for (last, prev) in [(sorted[m - 1], sorted[m - 2]), (sorted[0], sorted[1])] {
                    let rate = prev.1 - last.1;
                    if rate > T::zero() {
                        let r = (-rate).exp();
                        t += h * (last.1 - peak).exp() * r / (T::one() - r);
                    }
                }
            }
            t
        };

        let mut h = h0;
        let mut current = peak + (trapezoid(h, &nodes, peak) + tail(h, &nodes, peak)).ln();
        for _ in 0..8 {
            let half = h * T::c(0.5);
            let (lo_k, hi_k) = (extent[1] as i64, extent[0] as i64);
            let count = (lo_k + hi_k) as usize;
            let mut new_nodes = Vec::with_capacity(count);
            for k in -lo_k..hi_k {
                let zz = mode + h * T::c(k as f64) + half;
                let v = eval(zz)?;
                new_nodes.push((zz, v));
            }
            nodes.extend(new_nodes);
            for &(_, v) in &nodes {
                peak = peak.max(v);
            }
            h = half;
            extent = [extent[0] * 2, extent[1] * 2];
            let next = peak + (trapezoid(h, &nodes, peak) + tail(h, &nodes, peak)).ln();
            let change = (next - current).abs();
            current = next;
            if change < T::c(self.options.halving_tol) {
                return Ok(current);
            }
        }
        Err(Error::NumericalFailure("g-integration did not stabilise".into()))
    }
}


/// Scores non-Gaussian models with the integrated Laplace approximation.
#[derive(Debug, Clone)]
pub struct GlmBackend<T: Real> {
    pub y: Vec<T>,
    pub family: Family,
    pub prior: GPrior,
    pub design: AdditiveDesign<T>,
    pub null_fit: NullFit<T>,
    /// IWLS weights at `η₀ = 0`, used by the generalised g-prior.
    pub w0: Vec<T>,
    pub options: GlmOptions,
}

impl<T: Real> GlmBackend<T> {
    /// Fits the null model, then builds and calibrates the design with its weights.
    pub fn build(
        y: Vec<T>,
        covariates: Vec<RawCovariate<T>>,
        n_inner_knots: usize,
        grid: Option<DofGrid<T>>,
        family: Family,
        prior: GPrior,
    ) -> Result<Self> {
        let null_fit = fit_null(&y, family)?;
        let design = AdditiveDesign::build(covariates, n_inner_knots, grid, Some(&null_fit.w_hat))?;
        if design.n() != y.len() {
            return Err(Error::InvalidInput("response length differs from the covariates".into()));
        }
        let w0 = vec![family.weight(T::zero()); y.len()];
        Ok(Self { y, family, prior, design, null_fit, w0, options: GlmOptions::default() })
    }

    pub fn model(&self, am: &AssembledModel<T>) -> Result<GlmModel<'_, T>> {
        GlmModel::new(&self.y, self.family, am, &self.w0, self.options)
    }

    pub fn evaluate(&self, am: &AssembledModel<T>) -> Result<T> {
        self.model(am)?.integrated_laplace(self.prior)
    }
}

impl<T: Real> MarginalLikelihood<T> for GlmBackend<T> {
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
