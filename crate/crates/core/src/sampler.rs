//! Posterior sampling within a fixed model, curve reconstruction and credible bands.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::design::GridBlock;
use crate::error::{Error, Result};
use crate::gaussian::{assemble, g_integrand_mode, gls, log_g_integrand, low_rank_precision, GPrior, GaussianBackend};
use crate::glm::{GlmBackend, GlmModel};
use crate::model_space::ModelIndex;
use crate::scalar::{compensated_sum, Real};

/// Nodes of the `ln g` grid used for inverse-CDF draws.
pub const G_GRID_NODES: usize = 2048;

/// Parameter draws of one model. Rows are samples.
#[derive(Debug, Clone)]
pub struct PosteriorDraws<T: Real> {
    pub model: ModelIndex,
    pub beta0: Vec<T>,
    /// `S × I`, columns in the order of `linear`.
    pub beta: DMatrix<T>,
    /// `S × JK`, blocks at `smooth_offsets`.
    pub u: DMatrix<T>,
    /// Gaussian responses only.
    pub sigma2: Option<Vec<T>>,
    pub g: Vec<T>,
    /// Coefficient acceptance rate after burn-in (GLM only).
    pub acceptance_rate: Option<f64>,
    pub g_acceptance_rate: Option<f64>,
    /// Proposals rejected because IWLS failed.
    pub failed_proposals: u64,
    pub linear: Vec<usize>,
    pub smooth: Vec<usize>,
    pub smooth_offsets: Vec<usize>,
    pub smooth_sizes: Vec<usize>,
}

impl<T: Real> PosteriorDraws<T> {
    pub fn len(&self) -> usize {
        self.beta0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta0.is_empty()
    }
}

/// Per-model seed: `seed` XOR the FNV-1a hash of the grid indices.
pub fn model_seed(seed: u64, m: &ModelIndex) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in m.indices() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    seed ^ h
}

fn normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::c(StandardNormal.sample(rng))
}

fn normal_vec<T: Real, R: Rng + ?Sized>(k: usize, rng: &mut R) -> DVector<T> {
    DVector::from_fn(k, |_, _| normal(rng))
}

/// `L⁻ᵀ ε` for the Cholesky factor `L` of a precision matrix: a draw with that precision.
fn precision_draw<T: Real, R: Rng + ?Sized>(chol: &Cholesky<T, Dyn>, rng: &mut R) -> DVector<T> {
    let e = normal_vec(chol.l_dirty().nrows(), rng);
    chol.l().tr_solve_lower_triangular(&e).expect("Cholesky factor has a non-zero diagonal")
}

/// Inverse-CDF sampler for `ln g` from a gridded unnormalised log density.
#[derive(Debug, Clone)]
pub struct GridSampler<T: Real> {
    nodes: Vec<T>,
    cdf: Vec<T>,
}

impl<T: Real> GridSampler<T> {
    /// Grids `log_f` on `nodes` points around `mode`, out to 40 log-units below the peak.
    pub fn new<F: Fn(T) -> T>(log_f: F, mode: T, nodes: usize) -> Result<Self> {
        let peak = log_f(mode);
        if !peak.finite() {
            return Err(Error::NumericalFailure("g density is not finite at its mode".into()));
        }
        let step = T::c(0.5);
        let reach = |dir: T| {
            let mut t = mode;
            for _ in 0..800 {
                t += dir * step;
                let v = log_f(t);
                if !(v > peak - T::c(40.0)) {
                    break;
                }
            }
            t
        };
        let lo = reach(-T::one());
        let hi = reach(T::one());
        let h = (hi - lo) / T::from_usize_lossy(nodes - 1);
        let grid: Vec<T> = (0..nodes).map(|i| lo + h * T::from_usize_lossy(i)).collect();
        let logs: Vec<T> = grid.iter().map(|&t| log_f(t)).collect();
        let top = logs.iter().copied().fold(T::NEG_INFINITY, |a, b| if b > a { b } else { a });
        let dens: Vec<T> = logs.iter().map(|&v| if v.finite() { (v - top).exp() } else { T::zero() }).collect();
        let mut cdf = Vec::with_capacity(nodes);
        cdf.push(T::zero());
        for i in 1..nodes {
            cdf.push(cdf[i - 1] + (dens[i - 1] + dens[i]) * h * T::c(0.5));
        }
        let total = cdf[nodes - 1];
        if !(total > T::zero()) {
            return Err(Error::NumericalFailure("g density integrates to zero".into()));
        }
        for c in cdf.iter_mut() {
            *c /= total;
        }
        Ok(Self { nodes: grid, cdf })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let u = T::c(rng.random::<f64>());
        let k = self.cdf.partition_point(|&c| c < u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { T::c(0.5) };
        self.nodes[k - 1] + (self.nodes[k] - self.nodes[k - 1]) * frac
    }
}

/// One draw of `u ~ N(M⁻¹Zᵀr, σ²M⁻¹)` with `M = ZᵀZ + D⁻¹` given by its Cholesky factor.
pub fn sample_u_conditional<T: Real, R: Rng + ?Sized>(
    z: &DMatrix<T>,
    m_chol: &Cholesky<T, Dyn>,
    resid: &DVector<T>,
    sigma2: T,
    rng: &mut R,
) -> DVector<T> {
    let mean = m_chol.solve(&z.tr_mul(resid));
    mean + precision_draw(m_chol, rng) * sigma2.sqrt()
}

/// Independent Monte Carlo draws from the posterior of a Gaussian additive model.
pub fn sample_gaussian<T: Real>(backend: &GaussianBackend<T>, m: &ModelIndex, samples: usize, seed: u64) -> Result<PosteriorDraws<T>> {
    if samples == 0 {
        return Err(Error::InvalidInput("number of samples must be positive".into()));
    }
    let am = assemble(m, &backend.design)?;
    let lrp = low_rank_precision(&am.z, &am.d_diag)?;
    let fit = gls(&backend.y, &am, &lrp)?;
    let (n, i) = (fit.n, fit.i);
    let prior = backend.prior;
    let gs = GridSampler::new(
        |t| log_g_integrand(prior, n, i, fit.r2, t),
        g_integrand_mode(prior, n, i, fit.r2),
        G_GRID_NODES,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = DVector::from_column_slice(&backend.y);
    let shape = T::from_usize_lossy(n - 1).f64() * 0.5;
    let jk = am.jk();
    let mut out = empty_draws(m, &am, samples, true);
    for s in 0..samples {
        let tau = gs.sample(&mut rng);
        let g = tau.exp();
        let shrink = g / (T::one() + g);
        let rate = (fit.sst * (T::one() - shrink * fit.r2) * T::c(0.5)).f64();
        let gamma = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::NumericalFailure(e.to_string()))?;
        let sigma2 = T::c(1.0 / gamma.sample(&mut rng));
        let beta0 = fit.y_mean + normal::<T, _>(&mut rng) * (sigma2 / T::from_usize_lossy(n)).sqrt();
        let beta = match &fit.xtvx_chol {
            Some(chol) => &fit.beta_hat * shrink + precision_draw(chol, &mut rng) * (shrink * sigma2).sqrt(),
            None => DVector::zeros(0),
        };
        if let Some(mc) = &lrp.m_chol {
            let resid = y.add_scalar(-beta0) - &am.x * &beta;
            let u = sample_u_conditional(&am.z, mc, &resid, sigma2, &mut rng);
            out.u.row_mut(s).copy_from(&u.transpose());
        }
        debug_assert_eq!(out.u.ncols(), jk);
        out.beta0[s] = beta0;
        out.beta.row_mut(s).copy_from(&beta.transpose());
        out.g[s] = g;
        if let Some(v) = out.sigma2.as_mut() {
            v[s] = sigma2;
        }
    }
    Ok(out)
}

fn empty_draws<T: Real>(m: &ModelIndex, am: &crate::gaussian::AssembledModel<T>, samples: usize, gaussian: bool) -> PosteriorDraws<T> {
    PosteriorDraws {
        model: m.clone(),
        beta0: vec![T::zero(); samples],
        beta: DMatrix::zeros(samples, am.i()),
        u: DMatrix::zeros(samples, am.jk()),
        sigma2: gaussian.then(|| vec![T::zero(); samples]),
        g: vec![T::zero(); samples],
        acceptance_rate: None,
        g_acceptance_rate: None,
        failed_proposals: 0,
        linear: am.linear.clone(),
        smooth: am.smooth.clone(),
        smooth_offsets: am.smooth_offsets.clone(),
        smooth_sizes: am
            .smooth_offsets
            .iter()
            .enumerate()
            .map(|(k, &o)| am.smooth_offsets.get(k + 1).copied().unwrap_or(am.jk()) - o)
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlmSamplerOptions {
    /// Kept samples.
    pub samples: usize,
    pub thin: usize,
    pub burnin: usize,
    pub iwls_steps: usize,
}

impl Default for GlmSamplerOptions {
    fn default() -> Self {
        Self { samples: 10_000, thin: 2, burnin: 1_000, iwls_steps: 2 }
    }
}

/// `ln N(x; m, H⁻¹)` up to the constant shared by all proposals of equal dimension.
fn log_proposal<T: Real>(x: &DVector<T>, mean: &DVector<T>, chol: &Cholesky<T, Dyn>) -> T {
    let lt = chol.l().transpose() * (x - mean);
    let log_det_half = compensated_sum(chol.l().diagonal().iter().map(|v| v.ln()));
    log_det_half - lt.norm_squared() * T::c(0.5)
}

/// Log full conditional of `τ = ln g` given the coefficients.
fn log_tau_conditional<T: Real>(prior: GPrior, n: usize, i: usize, quad: T, tau: T) -> T {
    -T::c(0.5) * T::from_usize_lossy(i) * tau - quad * T::c(0.5) * (-tau).exp() + prior.log_density_tau(n, tau)
}

/// Metropolis–Hastings with IWLS proposals for the coefficients and a log-scale random walk for `g`.
pub fn sample_glm<T: Real>(backend: &GlmBackend<T>, m: &ModelIndex, opts: GlmSamplerOptions, seed: u64) -> Result<PosteriorDraws<T>> {
    if opts.samples == 0 || opts.thin == 0 {
        return Err(Error::InvalidInput("samples and thinning must be positive".into()));
    }
    let am = assemble(m, &backend.design)?;
    let model = backend.model(&am)?;
    let n = backend.y.len();
    let i = model.i;
    let prior = backend.prior;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut tau = T::from_usize_lossy(n).ln();
    let mut beta = model.iwls(tau.exp(), None)?.beta;
    let mut lp = model.log_posterior(&beta, tau.exp());
    let quad = |b: &DVector<T>, model: &GlmModel<'_, T>| -> T {
        if i == 0 {
            return T::zero();
        }
        let bd = b.rows(1, i);
        (bd.transpose() * &model.prior.j0 * bd)[(0, 0)]
    };
    let mut rw_scale = T::one();
    let (mut acc, mut tried, mut g_acc, mut g_tried, mut failed) = (0u64, 0u64, 0u64, 0u64, 0u64);
    let (mut win_acc, mut win_tried) = (0u64, 0u64);
    let mut out = empty_draws(m, &am, opts.samples, false);
    let total = opts.burnin + opts.samples * opts.thin;
    let mut kept = 0;
    for it in 0..total {
        let post_burnin = it >= opts.burnin;
        let g = tau.exp();
        // coefficient update
        let step = match model.iwls_proposal(&beta, g, opts.iwls_steps) {
            Ok((mean, chol)) => {
                let cand = &mean + precision_draw(&chol, &mut rng);
                match model.iwls_proposal(&cand, g, opts.iwls_steps) {
                    Ok((back_mean, back_chol)) => {
                        let cand_lp = model.log_posterior(&cand, g);
                        let log_alpha = cand_lp - lp + log_proposal(&beta, &back_mean, &back_chol)
                            - log_proposal(&cand, &mean, &chol);
                        Some((cand, cand_lp, log_alpha))
                    }
                    Err(_) => None,
                }
            }
            Err(_) => None,
        };
        if post_burnin {
            tried += 1;
        }
        match step {
            Some((cand, cand_lp, log_alpha)) => {
                let u: f64 = rng.random();
                if cand_lp.finite() && (log_alpha >= T::zero() || T::c(u.ln()) < log_alpha) {
                    beta = cand;
                    lp = cand_lp;
                    if post_burnin {
                        acc += 1;
                    }
                }
            }
            None => failed += 1,
        }

        // g update on the log scale
        let q = quad(&beta, &model);
        let cand_tau = tau + rw_scale * normal::<T, _>(&mut rng);
        let log_alpha = log_tau_conditional(prior, n, i, q, cand_tau) - log_tau_conditional(prior, n, i, q, tau);
        let u: f64 = rng.random();
        let accepted = log_alpha.finite() && (log_alpha >= T::zero() || T::c(u.ln()) < log_alpha);
        if accepted {
            tau = cand_tau;
            lp = model.log_posterior(&beta, tau.exp());
        }
        if post_burnin {
            g_tried += 1;
            if accepted {
                g_acc += 1;
            }
        } else {
            win_tried += 1;
            if accepted {
                win_acc += 1;
            }
            if win_tried == 50 {
                let rate = win_acc as f64 / 50.0;
                rw_scale *= T::c((rate - 0.44).exp());
                win_acc = 0;
                win_tried = 0;
            }
        }

        if post_burnin && (it - opts.burnin + 1) % opts.thin == 0 {
            out.beta0[kept] = beta[0];
            for c in 0..i {
                out.beta[(kept, c)] = beta[1 + c];
            }
            for c in 0..am.jk() {
                out.u[(kept, c)] = beta[1 + i + c];
            }
            out.g[kept] = tau.exp();
            kept += 1;
        }
    }
    out.acceptance_rate = Some(acc as f64 / tried.max(1) as f64);
    out.g_acceptance_rate = Some(g_acc as f64 / g_tried.max(1) as f64);
    out.failed_proposals = failed;
    Ok(out)
}

/// Sampled function values of one covariate on its grid.
#[derive(Debug, Clone)]
pub struct CovariateCurves<T: Real> {
    pub covariate: usize,
    pub grid: Vec<T>,
    /// `S × n*`.
    pub samples: DMatrix<T>,
}

#[derive(Debug, Clone)]
pub struct CurveSamples<T: Real> {
    pub curves: Vec<CovariateCurves<T>>,
}

/// `m_j = x* β_j + Z* u_j` for every covariate; excluded covariates give the zero function.
pub fn curves<T: Real>(draws: &PosteriorDraws<T>, grids: &[GridBlock<T>]) -> Result<CurveSamples<T>> {
    let p = draws.model.p();
    if grids.len() != p {
        return Err(Error::InvalidInput(format!("expected {p} grid blocks, got {}", grids.len())));
    }
    let s = draws.len();
    let mut curves = Vec::with_capacity(p);
    for (j, gb) in grids.iter().enumerate() {
        let mut mat = DMatrix::zeros(s, gb.values.len());
        if let Some(c) = draws.linear.iter().position(|&l| l == j) {
            mat += draws.beta.column(c) * gb.x_star.transpose();
        }
        if let Some(k) = draws.smooth.iter().position(|&l| l == j) {
            let (off, size) = (draws.smooth_offsets[k], draws.smooth_sizes[k]);
            if gb.z_star.ncols() != size {
                return Err(Error::BasisMismatch);
            }
            mat += draws.u.columns(off, size) * gb.z_star.transpose();
        }
        curves.push(CovariateCurves { covariate: j, grid: gb.values.clone(), samples: mat });
    }
    Ok(CurveSamples { curves })
}

/// Posterior mean with pointwise and simultaneous credible bands on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Bands<T: Real> {
    pub mean: Vec<T>,
    pub pointwise_lo: Vec<T>,
    pub pointwise_hi: Vec<T>,
    pub simultaneous_lo: Vec<T>,
    pub simultaneous_hi: Vec<T>,
}

fn sorted_column<T: Real>(samples: &DMatrix<T>, c: usize) -> Vec<T> {
    let mut v: Vec<T> = samples.column(c).iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    v
}

/// Pointwise order-statistic intervals and the symmetric rank envelope holding `⌈level·S⌉` whole curves.
pub fn credible_bands<T: Real>(samples: &DMatrix<T>, level: f64) -> Result<Bands<T>> {
    let (s, cols) = samples.shape();
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!("credible level must lie in (0, 1), got {level}")));
    }
    if s < 100 {
        return Err(Error::InvalidInput(format!("credible bands need at least 100 samples, got {s}")));
    }
    let m = (level * s as f64).ceil() as usize;
    let sorted: Vec<Vec<T>> = (0..cols).map(|c| sorted_column(samples, c)).collect();
    let band = |k: usize| -> (Vec<T>, Vec<T>) {
        (sorted.iter().map(|v| v[k - 1]).collect(), sorted.iter().map(|v| v[s - k]).collect())
    };
    let k_pt = ((s + 2 - m) / 2).max(1);
    let (pointwise_lo, pointwise_hi) = band(k_pt);

    // depth of a curve: the largest k whose envelope [k-th smallest, k-th largest] still contains it
    let mut depth = vec![usize::MAX; s];
    for (c, col) in sorted.iter().enumerate() {
        for (r, d) in depth.iter_mut().enumerate() {
            let v = samples[(r, c)];
            let below = col.partition_point(|&x| x < v);
            let upto = col.partition_point(|&x| x <= v);
            *d = (*d).min(upto.min(s - below));
        }
    }
    depth.sort_unstable_by(|a, b| b.cmp(a));
    // depth[m-1] is the largest k with at least m curves of depth >= k
    let k_sim = depth[m - 1].clamp(1, k_pt);
    let (simultaneous_lo, simultaneous_hi) = band(k_sim);
    let mean = (0..cols)
        .map(|c| compensated_sum(samples.column(c).iter().copied()) / T::from_usize_lossy(s))
        .collect();
    Ok(Bands { mean, pointwise_lo, pointwise_hi, simultaneous_lo, simultaneous_hi })
}
