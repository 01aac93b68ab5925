//! Calibration between the penalty variance factor ρ and effective degrees of freedom.

use nalgebra::SymmetricEigen;

use crate::design::DesignBlock;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Eigenvalues of `ZᵀŴZ` for one covariate.
#[derive(Debug, Clone)]
pub struct CalibrationSpectrum<T: Real> {
    pub eigenvalues: Vec<T>,
    pub covariate: String,
}

/// Finite set of admissible degrees of freedom; contains 0 and 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DofGrid<T: Real> {
    values: Vec<T>,
}

impl<T: Real> DofGrid<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidGrid("grid needs at least the values 0 and 1".into()));
        }
        if values[0] != T::zero() || values[1] != T::one() {
            return Err(Error::InvalidGrid("grid must start with 0 and 1".into()));
        }
        if values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid("grid values must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.finite()) {
            return Err(Error::InvalidGrid("grid values must be finite".into()));
        }
        if values.len() > u8::MAX as usize {
            return Err(Error::InvalidGrid("grid is too large".into()));
        }
        Ok(Self { values })
    }

    /// `{0, 1, …, K}`.
    pub fn integers(k: usize) -> Self {
        Self { values: (0..=k).map(T::from_usize_lossy).collect() }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_index(&self) -> u8 {
        (self.values.len() - 1) as u8
    }

    pub fn value(&self, index: u8) -> T {
        self.values[index as usize]
    }

    /// Number of nonzero grid values, `|D| - 1`.
    pub fn nonzero_count(&self) -> usize {
        self.values.len() - 1
    }

    /// Checks `max(D) < K + 1`.
    pub fn validate_for(&self, k: usize) -> Result<()> {
        let upper = T::from_usize_lossy(k + 1);
        let max = *self.values.last().expect("non-empty grid");
        if max >= upper {
            return Err(Error::InvalidGrid(format!("largest value {max} must stay below K+1 = {upper}")));
        }
        Ok(())
    }
}

/// Eigenvalues of `ZᵀWZ` of an orthogonalised block.
pub fn spectrum<T: Real>(block: &DesignBlock<T>) -> Result<CalibrationSpectrum<T>> {
    let z = &block.z;
    let gram = match &block.weights {
        None => z.transpose() * z,
        Some(w) => {
            let mut wz = z.clone();
            for (i, mut row) in wz.row_iter_mut().enumerate() {
                row *= w[i];
            }
            z.transpose() * wz
        }
    };
    let mut eigenvalues: Vec<T> = SymmetricEigen::new(gram).eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
    let max = eigenvalues.first().copied().unwrap_or(T::zero());
    let min = eigenvalues.last().copied().unwrap_or(T::zero());
    if !(max > T::zero()) || min <= T::c(1e-12) * max {
        return Err(Error::RankDeficientBasis { name: block.name.clone(), min_eigenvalue: min.f64() });
    }
    Ok(CalibrationSpectrum { eigenvalues, covariate: block.name.clone() })
}

impl<T: Real> CalibrationSpectrum<T> {
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `1 + Σ λ/(λ + 1/ρ)`.
    pub fn dof_from_rho(&self, rho: T) -> T {
        T::one() + self.eigenvalues.iter().map(|&l| l * rho / (l * rho + T::one())).fold(T::zero(), |a, b| a + b)
    }

    /// `d/dρ` of [`Self::dof_from_rho`].
    pub fn dof_derivative(&self, rho: T) -> T {
        self.eigenvalues
            .iter()
            .map(|&l| {
                let den = rho * l + T::one();
                l / (den * den)
            })
            .fold(T::zero(), |a, b| a + b)
    }

    /// Inverts [`Self::dof_from_rho`] for `1 < d < K + 1`.
    pub fn rho_from_dof(&self, d: T) -> Result<T> {
        let upper = T::from_usize_lossy(self.k() + 1);
        if !(d > T::one() && d < upper) {
            return Err(Error::OutOfRangeDof { dof: d.f64(), upper: upper.f64() });
        }
        let target = d - T::one();
        let lmax = self.eigenvalues[0];
        let lmin = *self.eigenvalues.last().unwrap();
        let kf = T::from_usize_lossy(self.k());
        // f(ρ) lies between K·h(λmin ρ) and K·h(λmax ρ) with h(t) = t/(1+t).
        let frac = target / kf;
        let inv = frac / (T::one() - frac);
        let mut lo = (inv / lmax).ln();
        let mut hi = (inv / lmin).ln();
        let f = |t: T| self.dof_from_rho(t.exp()) - d;
        lo -= T::one();
        hi += T::one();
        let tol = T::c(1e-10).max(T::EPSILON * T::c(64.0) * upper);
        let mut t = (lo + hi) * T::c(0.5);
        for _ in 0..200 {
            let val = f(t);
            if val.abs() < tol {
                return Ok(t.exp());
            }
            if val > T::zero() {
                hi = t;
            } else {
                lo = t;
            }
            let rho = t.exp();
            let slope = self.dof_derivative(rho) * rho;
            let newton = t - val / slope;
            t = if slope > T::zero() && newton > lo && newton < hi { newton } else { (lo + hi) * T::c(0.5) };
            if hi - lo < T::EPSILON * T::c(4.0) * (T::one() + t.abs()) {
                return Ok(t.exp());
            }
        }
        Err(Error::NumericalFailure(format!("dof inversion did not converge for d = {d}")))
    }
}

/// ρ for every covariate and grid value, computed once per run.
#[derive(Debug, Clone)]
pub struct RhoCache<T: Real> {
    /// `rho[j][index]`, `None` for the grid values 0 and 1.
    rho: Vec<Vec<Option<T>>>,
}

impl<T: Real> RhoCache<T> {
    pub fn build(spectra: &[CalibrationSpectrum<T>], grid: &DofGrid<T>) -> Result<Self> {
        let mut rho = Vec::with_capacity(spectra.len());
        for s in spectra {
            grid.validate_for(s.k())?;
            let row = grid
                .values()
                .iter()
                .map(|&d| if d > T::one() { s.rho_from_dof(d).map(Some) } else { Ok(None) })
                .collect::<Result<Vec<_>>>()?;
            rho.push(row);
        }
        Ok(Self { rho })
    }

    pub fn get(&self, covariate: usize, index: u8) -> Option<T> {
        self.rho[covariate][index as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::design::CenteringStats;

    fn spec(eigs: Vec<f64>) -> CalibrationSpectrum<f64> {
        CalibrationSpectrum { eigenvalues: eigs, covariate: "t".into() }
    }

    fn block_with(z: DMatrix<f64>) -> DesignBlock<f64> {
        let n = z.nrows();
        let k = z.ncols();
        DesignBlock {
            name: "b".into(),
            x: DVector::zeros(n),
            z,
            stats: CenteringStats { x_mean: 0.0, z_mean: vec![0.0; k], z_on_x: vec![0.0; k] },
            weights: None,
            knots: vec![],
            boundary: (0.0, 1.0),
            degree: 3,
        }
    }

    #[test]
    fn single_eigenvalue_example() {
        let s = spec(vec![1.0]);
        assert_eq!(s.dof_from_rho(1.0), 1.5);
        assert!((s.rho_from_dof(1.5).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn limits() {
        let s = spec(vec![3.0, 2.0, 0.5]);
        assert!((s.dof_from_rho(1e-14) - 1.0).abs() < 1e-12);
        assert!((s.dof_from_rho(1e14) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_dof() {
        let s = spec(vec![1.0, 2.0]);
        assert!(matches!(s.rho_from_dof(1.0), Err(Error::OutOfRangeDof { .. })));
        assert!(matches!(s.rho_from_dof(3.0), Err(Error::OutOfRangeDof { .. })));
    }

    #[test]
    fn orthonormal_columns_give_unit_spectrum() {
        let q = DMatrix::<f64>::from_fn(10, 3, |i, j| if i == j { 1.0 } else { 0.0 });
        let s = spectrum(&block_with(q)).unwrap();
        for l in s.eigenvalues {
            assert!((l - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn random_spectrum_matches_dense_eigensolver_and_bisection() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = DMatrix::<f64>::from_fn(40, 5, |_, _| rng.random_range(-1.0..1.0));
        let s = spectrum(&block_with(z.clone())).unwrap();
        // oracle: power-free route via characteristic values of the Gram matrix computed with Schur
        let gram = z.transpose() * &z;
        let mut oracle: Vec<f64> = gram.schur().eigenvalues().unwrap().iter().copied().collect();
        oracle.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (a, b) in s.eigenvalues.iter().zip(&oracle) {
            assert!(((a - b) / b).abs() < 1e-10);
        }
        // plain bisection on ρ in log space
        let d = 2.7;
        let (mut lo, mut hi) = (-60.0_f64, 60.0_f64);
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if s.dof_from_rho(mid.exp()) > d {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let oracle_rho = (0.5 * (lo + hi)).exp();
        let rho = s.rho_from_dof(d).unwrap();
        assert!((s.dof_from_rho(rho) - d).abs() < 1e-8);
        assert!(((rho - oracle_rho) / oracle_rho).abs() < 1e-7);
    }

    #[test]
    fn rank_deficient_block_is_flagged() {
        let mut z = DMatrix::<f64>::from_fn(10, 3, |i, j| (i * (j + 1)) as f64);
        let c0 = z.column(0).clone_owned();
        z.set_column(2, &c0);
        assert!(matches!(spectrum(&block_with(z)), Err(Error::RankDeficientBasis { .. })));
    }

    #[test]
    fn grid_validation() {
        assert!(DofGrid::new(vec![0.0, 1.0, 2.5]).is_ok());
        assert!(DofGrid::new(vec![0.0, 2.0]).is_err());
        assert!(DofGrid::new(vec![0.0, 1.0, 1.0]).is_err());
        let g = DofGrid::<f64>::integers(6);
        assert!(g.validate_for(6).is_ok());
        assert!(g.validate_for(5).is_err());
    }
}
