//! Spline bases and orthogonalised per-covariate design blocks.
//!
//! Each covariate contributes a centred linear column `x` and a spline block
//! `Z`. The raw spline block is a cubic O'Sullivan basis: a clamped cubic
//! B-spline basis post-multiplied by the spectral transform of its
//! integrated-squared-second-derivative penalty, so that an i.i.d. ridge
//! prior on the coefficients reproduces the roughness penalty. The two
//! penalty null-space directions (constant and linear) are dropped because
//! the intercept and the linear column already span them.
//!
//! Orthogonalisation is a weighted Gram–Schmidt step against `1` and `x`.
//! The projection coefficients are kept so that grids are transformed with
//! the training statistics, never with their own.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::{compensated_sum, CompensatedSum, Real};

/// Cubic splines throughout.
pub const SPLINE_DEGREE: usize = 3;

/// A covariate on its original scale.
#[derive(Debug, Clone)]
pub struct RawCovariate<T: Real> {
    pub name: String,
    pub values: Vec<T>,
}

impl<T: Real> RawCovariate<T> {
    pub fn new(name: impl Into<String>, values: Vec<T>) -> Result<Self> {
        let name = name.into();
        if values.len() < 3 {
            return Err(Error::DegenerateCovariate {
                name,
                reason: format!("needs at least 3 observations, got {}", values.len()),
            });
        }
        if values.iter().any(|v| !v.finite()) {
            return Err(Error::DegenerateCovariate { name, reason: "non-finite value".into() });
        }
        let first = values[0];
        if values.iter().all(|&v| v == first) {
            return Err(Error::DegenerateCovariate { name, reason: "constant covariate".into() });
        }
        Ok(Self { name, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sorted distinct values.
    pub fn distinct_values(&self) -> Vec<T> {
        let mut v = self.values.clone();
        v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
        v.dedup();
        v
    }

    pub fn range(&self) -> (T, T) {
        let lo = self.values.iter().copied().fold(T::INFINITY, |m, v| if v < m { v } else { m });
        let hi = self.values.iter().copied().fold(T::NEG_INFINITY, |m, v| if v > m { v } else { m });
        (lo, hi)
    }
}

/// Which sample the knot quantiles are taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KnotPlacement {
    /// Quantiles of the distinct observed values.
    #[default]
    DistinctValues,
    /// Quantiles of all observations, ties included.
    AllValues,
}

/// Type-7 sample quantile of sorted data (linear interpolation of order statistics).
pub fn quantile_type7<T: Real>(sorted: &[T], prob: T) -> T {
    assert!(!sorted.is_empty());
    let m = sorted.len();
    if m == 1 {
        return sorted[0];
    }
    let h = T::from_usize_lossy(m - 1) * prob;
    let lo = h.floor().f64().max(0.0) as usize;
    if lo >= m - 1 {
        return sorted[m - 1];
    }
    let frac = h - T::from_usize_lossy(lo);
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Spline basis evaluated at the training covariate, plus everything needed
/// to evaluate it at new points.
#[derive(Debug, Clone)]
pub struct RawBasis<T: Real> {
    /// `n × K` matrix of basis values.
    pub matrix: DMatrix<T>,
    /// Inner knots in covariate units.
    pub knots: Vec<T>,
    /// Boundary knots (data range).
    pub boundary: (T, T),
    pub degree: usize,
    /// Maps B-spline coefficients to the penalised O'Sullivan directions.
    pub transform: DMatrix<T>,
    /// Non-fatal notes, e.g. collapsed duplicate knots.
    pub warnings: Vec<String>,
}

impl<T: Real> RawBasis<T> {
    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Evaluates the same basis (same knots and transform) at new points.
    /// Points outside the boundary knots are clamped to the boundary.
    pub fn evaluate(&self, points: &[T]) -> RawBasis<T> {
        let full = full_knot_vector(&self.knots, self.boundary, self.degree);
        let b = bspline_design(&full, self.degree, self.boundary, points);
        RawBasis {
            matrix: b * &self.transform,
            knots: self.knots.clone(),
            boundary: self.boundary,
            degree: self.degree,
            transform: self.transform.clone(),
            warnings: Vec::new(),
        }
    }

    fn same_construction(&self, block: &DesignBlock<T>) -> bool {
        self.degree == block.degree
            && self.boundary == block.boundary
            && self.knots == block.knots
            && self.ncols() == block.z.ncols()
    }
}

fn full_knot_vector<T: Real>(inner: &[T], boundary: (T, T), degree: usize) -> Vec<T> {
    let mut t = Vec::with_capacity(inner.len() + 2 * (degree + 1));
    t.extend(std::iter::repeat(boundary.0).take(degree + 1));
    t.extend_from_slice(inner);
    t.extend(std::iter::repeat(boundary.1).take(degree + 1));
    t
}

/// Values of all B-splines of `degree` on knot vector `t` at `x`, with the
/// derivative order `deriv` applied. `x` must lie in `[t[0], t[last]]`.
pub fn bspline_values<T: Real>(t: &[T], degree: usize, x: T, deriv: usize) -> Vec<T> {
    let n_basis = t.len() - degree - 1;
    if deriv > degree {
        return vec![T::zero(); n_basis];
    }
    let base_degree = degree - deriv;

    // Degree-zero indicators; the right end belongs to the last non-empty span.
    let n0 = t.len() - 1;
    let mut v = vec![T::zero(); n0];
    let last = *t.last().unwrap();
    let span = if x >= last {
        (0..n0).rev().find(|&i| t[i] < t[i + 1])
    } else {
        (0..n0).find(|&i| t[i] <= x && x < t[i + 1])
    };
    if let Some(i) = span {
        v[i] = T::one();
    }

    for q in 1..=base_degree {
        let len = t.len() - q - 1;
        let mut next = vec![T::zero(); len];
        for i in 0..len {
            let mut acc = T::zero();
            let d1 = t[i + q] - t[i];
            if d1 > T::zero() {
                acc += (x - t[i]) / d1 * v[i];
            }
            let d2 = t[i + q + 1] - t[i + 1];
            if d2 > T::zero() {
                acc += (t[i + q + 1] - x) / d2 * v[i + 1];
            }
            next[i] = acc;
        }
        v = next;
    }

    for s in (base_degree + 1)..=degree {
        let len = t.len() - s - 1;
        let sf = T::from_usize_lossy(s);
        let mut next = vec![T::zero(); len];
        for i in 0..len {
            let mut acc = T::zero();
            let d1 = t[i + s] - t[i];
            if d1 > T::zero() {
                acc += v[i] / d1;
            }
            let d2 = t[i + s + 1] - t[i + 1];
            if d2 > T::zero() {
                acc -= v[i + 1] / d2;
            }
            next[i] = sf * acc;
        }
        v = next;
    }
    debug_assert_eq!(v.len(), n_basis);
    v
}

fn bspline_design<T: Real>(t: &[T], degree: usize, boundary: (T, T), points: &[T]) -> DMatrix<T> {
    let n_basis = t.len() - degree - 1;
    let mut b = DMatrix::zeros(points.len(), n_basis);
    for (r, &x) in points.iter().enumerate() {
        let xc = if x < boundary.0 {
            boundary.0
        } else if x > boundary.1 {
            boundary.1
        } else {
            x
        };
        for (c, val) in bspline_values(t, degree, xc, 0).into_iter().enumerate() {
            b[(r, c)] = val;
        }
    }
    b
}

/// Integrated squared second-derivative penalty `∫ B''(x) B''(x)ᵀ dx` over the boundary range.
pub fn roughness_penalty<T: Real>(t: &[T], degree: usize) -> DMatrix<T> {
    let n_basis = t.len() - degree - 1;
    let mut omega = DMatrix::zeros(n_basis, n_basis);
    // Three-point Gauss–Legendre is exact for the piecewise-quadratic integrand.
    let nodes = [-(0.6_f64).sqrt(), 0.0, (0.6_f64).sqrt()];
    let weights = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
    for w in t.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo {
            continue;
        }
        let half = (hi - lo) * T::c(0.5);
        let mid = (hi + lo) * T::c(0.5);
        for (&node, &weight) in nodes.iter().zip(&weights) {
            let x = mid + half * T::c(node);
            let d2 = bspline_values(t, degree, x, 2);
            let wt = half * T::c(weight);
            for i in 0..n_basis {
                if d2[i] == T::zero() {
                    continue;
                }
                for j in 0..n_basis {
                    omega[(i, j)] += wt * d2[i] * d2[j];
                }
            }
        }
    }
    omega
}

/// Places inner knots at equally spaced quantiles (type 7).
///
/// Returns the knots and a list of warnings; duplicate knots are collapsed.
pub fn quantile_knots<T: Real>(
    cov: &RawCovariate<T>,
    n_inner_knots: usize,
    placement: KnotPlacement,
) -> Result<(Vec<T>, Vec<String>)> {
    let sample = match placement {
        KnotPlacement::DistinctValues => cov.distinct_values(),
        KnotPlacement::AllValues => {
            let mut v = cov.values.clone();
            v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
            v
        }
    };
    let (lo, hi) = cov.range();
    let denom = T::from_usize_lossy(n_inner_knots + 1);
    let mut knots = Vec::with_capacity(n_inner_knots);
    let mut warnings = Vec::new();
    for k in 1..=n_inner_knots {
        let q = quantile_type7(&sample, T::from_usize_lossy(k) / denom);
        if q <= lo || q >= hi {
            warnings.push(format!("{}: knot {} at {} falls on the data boundary and was dropped", cov.name, k, q));
            continue;
        }
        if knots.last().is_some_and(|&prev| q <= prev) {
            warnings.push(format!("{}: duplicate quantile knot {} collapsed", cov.name, q));
            continue;
        }
        knots.push(q);
    }
    if knots.is_empty() {
        return Err(Error::KnotCollision { name: cov.name.clone() });
    }
    Ok((knots, warnings))
}

/// Cubic O'Sullivan basis with `n_inner_knots` quantile knots, `K = n_inner_knots + 2` columns.
pub fn build_osullivan_basis<T: Real>(cov: &RawCovariate<T>, n_inner_knots: usize) -> Result<RawBasis<T>> {
    build_osullivan_basis_with(cov, n_inner_knots, KnotPlacement::default())
}

pub fn build_osullivan_basis_with<T: Real>(
    cov: &RawCovariate<T>,
    n_inner_knots: usize,
    placement: KnotPlacement,
) -> Result<RawBasis<T>> {
    if n_inner_knots == 0 {
        return Err(Error::InvalidInput("at least one inner knot is required".into()));
    }
    let distinct = cov.distinct_values().len();
    if distinct <= n_inner_knots {
        return Err(Error::DegenerateCovariate {
            name: cov.name.clone(),
            reason: format!("{distinct} distinct values cannot support {n_inner_knots} inner knots"),
        });
    }
    let (knots, warnings) = quantile_knots(cov, n_inner_knots, placement)?;
    let boundary = cov.range();
    let degree = SPLINE_DEGREE;
    let t = full_knot_vector(&knots, boundary, degree);
    let omega = roughness_penalty(&t, degree);
    let n_basis = omega.nrows();
    let k = n_basis - 2;

    let eig = SymmetricEigen::new(omega);
    let mut order: Vec<usize> = (0..n_basis).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).expect("finite eigenvalues"));
    let mut transform = DMatrix::zeros(n_basis, k);
    for (col, &idx) in order.iter().take(k).enumerate() {
        let ev = eig.eigenvalues[idx];
        if ev <= T::zero() {
            return Err(Error::NumericalFailure(format!(
                "{}: penalty has fewer than {k} positive eigenvalues",
                cov.name
            )));
        }
        let scale = T::one() / ev.sqrt();
        // Fix the eigenvector sign so the construction is reproducible.
        let v = eig.eigenvectors.column(idx);
        let pivot = v.iter().copied().fold(T::zero(), |m, x| if x.abs() > m.abs() { x } else { m });
        let sign = if pivot < T::zero() { -T::one() } else { T::one() };
        for r in 0..n_basis {
            transform[(r, col)] = v[r] * scale * sign;
        }
    }
    let b = bspline_design(&t, degree, boundary, &cov.values);
    Ok(RawBasis { matrix: b * &transform, knots, boundary, degree, transform, warnings })
}

/// Projection coefficients of the Gram–Schmidt step, reused for grids.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteringStats<T: Real> {
    /// Weighted mean `1ᵀW x̃ / 1ᵀW1`.
    pub x_mean: T,
    /// Weighted column means `1ᵀW Z̃ / 1ᵀW1`.
    pub z_mean: Vec<T>,
    /// Coefficients `xᵀW Z̃ / xᵀW x`.
    pub z_on_x: Vec<T>,
}

/// Orthogonalised linear column and spline block of one covariate.
#[derive(Debug, Clone)]
pub struct DesignBlock<T: Real> {
    pub name: String,
    pub x: DVector<T>,
    pub z: DMatrix<T>,
    pub stats: CenteringStats<T>,
    /// IWLS weights `diag(Ŵ)` when built for a non-Gaussian family.
    pub weights: Option<Vec<T>>,
    pub knots: Vec<T>,
    pub boundary: (T, T),
    pub degree: usize,
}

impl<T: Real> DesignBlock<T> {
    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn k(&self) -> usize {
        self.z.ncols()
    }

    pub fn is_weighted(&self) -> bool {
        self.weights.is_some()
    }

    /// Largest absolute weighted inner products `(1ᵀWx, max|1ᵀWZ|, max|xᵀWZ|)`.
    pub fn orthogonality_residuals(&self) -> (T, T, T) {
        let n = self.n();
        let w = |i: usize| self.weights.as_ref().map_or(T::one(), |w| w[i]);
        let one_x = compensated_sum((0..n).map(|i| w(i) * self.x[i])).abs();
        let mut one_z = T::zero();
        let mut x_z = T::zero();
        for c in 0..self.k() {
            let col = self.z.column(c);
            let a = compensated_sum((0..n).map(|i| w(i) * col[i])).abs();
            let b = compensated_sum((0..n).map(|i| w(i) * self.x[i] * col[i])).abs();
            one_z = one_z.max(a);
            x_z = x_z.max(b);
        }
        (one_x, one_z, x_z)
    }
}

/// Orthogonalised grid columns for curve evaluation.
#[derive(Debug, Clone)]
pub struct GridBlock<T: Real> {
    pub values: Vec<T>,
    pub x_star: DVector<T>,
    pub z_star: DMatrix<T>,
}

/// Weighted Gram–Schmidt of `x̃` and `Z̃` against `1` and `x`.
pub fn orthogonalize_block<T: Real>(
    cov: &RawCovariate<T>,
    basis: &RawBasis<T>,
    weights: Option<&[T]>,
) -> Result<DesignBlock<T>> {
    let n = cov.len();
    if basis.matrix.nrows() != n {
        return Err(Error::InvalidInput(format!(
            "basis has {} rows but covariate `{}` has {n} values",
            basis.matrix.nrows(),
            cov.name
        )));
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::InvalidInput("weight vector length mismatch".into()));
        }
        if w.iter().any(|&v| !(v > T::zero()) || !v.finite()) {
            return Err(Error::InvalidInput("weights must be strictly positive".into()));
        }
    }
    let wt = |i: usize| weights.map_or(T::one(), |w| w[i]);
    let sum_w = compensated_sum((0..n).map(wt));

    let x_mean = compensated_sum((0..n).map(|i| wt(i) * cov.values[i])) / sum_w;
    let x = DVector::from_iterator(n, cov.values.iter().map(|&v| v - x_mean));
    let xwx = compensated_sum((0..n).map(|i| wt(i) * x[i] * x[i]));
    if !(xwx > T::zero()) {
        return Err(Error::DegenerateCovariate { name: cov.name.clone(), reason: "zero variance".into() });
    }

    let k = basis.ncols();
    let mut z = basis.matrix.clone();
    let mut z_mean = Vec::with_capacity(k);
    let mut z_on_x = Vec::with_capacity(k);
    for c in 0..k {
        let raw = basis.matrix.column(c);
        let mut s1 = CompensatedSum::default();
        let mut sx = CompensatedSum::default();
        for i in 0..n {
            s1.add(wt(i) * raw[i]);
            sx.add(wt(i) * x[i] * raw[i]);
        }
        let mean = s1.value() / sum_w;
        let coef = sx.value() / xwx;
        for i in 0..n {
            z[(i, c)] = raw[i] - mean - x[i] * coef;
        }
        z_mean.push(mean);
        z_on_x.push(coef);
    }

    Ok(DesignBlock {
        name: cov.name.clone(),
        x,
        z,
        stats: CenteringStats { x_mean, z_mean, z_on_x },
        weights: weights.map(<[T]>::to_vec),
        knots: basis.knots.clone(),
        boundary: basis.boundary,
        degree: basis.degree,
    })
}

/// Applies the training transformation of `block` to a grid basis.
pub fn orthogonalize_grid<T: Real>(
    grid_values: &[T],
    grid_basis: &RawBasis<T>,
    block: &DesignBlock<T>,
) -> Result<GridBlock<T>> {
    if !grid_basis.same_construction(block) {
        return Err(Error::BasisMismatch);
    }
    if grid_basis.matrix.nrows() != grid_values.len() {
        return Err(Error::InvalidInput("grid basis rows differ from grid length".into()));
    }
    let m = grid_values.len();
    let x_star = DVector::from_iterator(m, grid_values.iter().map(|&v| v - block.stats.x_mean));
    let mut z_star = grid_basis.matrix.clone();
    for c in 0..block.k() {
        let mean = block.stats.z_mean[c];
        let coef = block.stats.z_on_x[c];
        for i in 0..m {
            z_star[(i, c)] -= mean + x_star[i] * coef;
        }
    }
    Ok(GridBlock { values: grid_values.to_vec(), x_star, z_star })
}

/// Equally spaced grid over the observed range.
pub fn equispaced_grid<T: Real>(cov: &RawCovariate<T>, size: usize) -> Vec<T> {
    let (lo, hi) = cov.range();
    if size <= 1 {
        return vec![lo];
    }
    let step = (hi - lo) / T::from_usize_lossy(size - 1);
    (0..size).map(|i| if i + 1 == size { hi } else { lo + step * T::from_usize_lossy(i) }).collect()
}
