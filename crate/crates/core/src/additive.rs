//! All per-covariate design blocks of one data set together with their dof calibration.

use crate::design::{
    build_osullivan_basis, orthogonalize_block, orthogonalize_grid, DesignBlock, GridBlock, RawBasis, RawCovariate,
};
use crate::dof::{spectrum, CalibrationSpectrum, DofGrid, RhoCache};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct AdditiveDesign<T: Real> {
    pub covariates: Vec<RawCovariate<T>>,
    pub bases: Vec<RawBasis<T>>,
    pub blocks: Vec<DesignBlock<T>>,
    pub spectra: Vec<CalibrationSpectrum<T>>,
    pub grid: DofGrid<T>,
    pub rho: RhoCache<T>,
    pub warnings: Vec<String>,
}

impl<T: Real> AdditiveDesign<T> {
    /// Builds bases, orthogonalises (optionally with IWLS weights) and calibrates.
    /// Without an explicit grid, `{0, 1, …, K}` is used.
    pub fn build(
        covariates: Vec<RawCovariate<T>>,
        n_inner_knots: usize,
        grid: Option<DofGrid<T>>,
        weights: Option<&[T]>,
    ) -> Result<Self> {
        let Some(first) = covariates.first() else {
            return Err(Error::InvalidInput("at least one covariate is required".into()));
        };
        let n = first.len();
        if covariates.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidInput("covariates differ in length".into()));
        }
        let mut bases = Vec::with_capacity(covariates.len());
        let mut blocks = Vec::with_capacity(covariates.len());
        let mut spectra = Vec::with_capacity(covariates.len());
        let mut warnings = Vec::new();
        for cov in &covariates {
            let basis = build_osullivan_basis(cov, n_inner_knots)?;
            warnings.extend(basis.warnings.iter().cloned());
            let block = orthogonalize_block(cov, &basis, weights)?;
            spectra.push(spectrum(&block)?);
            bases.push(basis);
            blocks.push(block);
        }
        let k_min = spectra.iter().map(CalibrationSpectrum::k).min().expect("non-empty");
        let grid = grid.unwrap_or_else(|| DofGrid::integers(k_min));
        let rho = RhoCache::build(&spectra, &grid)?;
        Ok(Self { covariates, bases, blocks, spectra, grid, rho, warnings })
    }

    pub fn n(&self) -> usize {
        self.blocks[0].n()
    }

    pub fn p(&self) -> usize {
        self.blocks.len()
    }

    /// Smallest basis dimension over covariates.
    pub fn k(&self) -> usize {
        self.spectra.iter().map(CalibrationSpectrum::k).min().unwrap_or(0)
    }

    pub fn names(&self) -> Vec<String> {
        self.covariates.iter().map(|c| c.name.clone()).collect()
    }

    /// Orthogonalised grid columns for covariate `j` at `values`.
    pub fn grid_block(&self, j: usize, values: &[T]) -> Result<GridBlock<T>> {
        let basis = self.bases[j].evaluate(values);
        orthogonalize_grid(values, &basis, &self.blocks[j])
    }
}
