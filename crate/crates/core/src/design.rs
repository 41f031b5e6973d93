//! Column-centered basis matrix built from per-feature B-spline bases.

use std::ops::Range;

use nalgebra::{DMatrix, DMatrixView, SymmetricEigen};

use crate::error::{GamError, Result};
use crate::spline::BasisSpec;

/// The `n x (p * m)` basis matrix with its block layout.
#[derive(Debug, Clone)]
pub struct ExpandedDesign {
    pub matrix: DMatrix<f64>,
    /// Column range of each feature's block.
    pub blocks: Vec<Range<usize>>,
    /// Mean removed from each column.
    pub col_center: Vec<f64>,
    pub n: usize,
    pub p: usize,
    /// Nominal basis count per feature. Individual blocks may be smaller when
    /// tied quantiles collapsed knots.
    pub m: usize,
    /// Largest eigenvalue of `Phi_j^T Phi_j / n` per block.
    pub block_eigmax: Vec<f64>,
}

/// Fit one [`BasisSpec`] per column of `x`.
pub fn fit_basis_specs(x: &DMatrix<f64>, order: usize, num_basis: usize) -> Result<Vec<BasisSpec>> {
    (0..x.ncols())
        .map(|j| {
            let col: Vec<f64> = x.column(j).iter().copied().collect();
            BasisSpec::from_sample_for_feature(&col, order, num_basis, j)
        })
        .collect()
}

fn raw_basis(x: &DMatrix<f64>, specs: &[BasisSpec]) -> Result<(DMatrix<f64>, Vec<Range<usize>>)> {
    if x.ncols() != specs.len() {
        return Err(GamError::config(format!(
            "design has {} columns but {} basis specs were given",
            x.ncols(),
            specs.len()
        )));
    }
    let mut blocks = Vec::with_capacity(specs.len());
    let mut start = 0;
    for spec in specs {
        blocks.push(start..start + spec.num_basis);
        start += spec.num_basis;
    }
    let n = x.nrows();
    let mut matrix = DMatrix::zeros(n, start);
    let mut phi = Vec::new();
    for (j, (spec, range)) in specs.iter().zip(&blocks).enumerate() {
        phi.resize(spec.num_basis, 0.0);
        for i in 0..n {
            let v = x[(i, j)];
            if !v.is_finite() {
                return Err(GamError::Data {
                    row: i,
                    column: format!("x{j}"),
                    message: "non-finite value".into(),
                });
            }
            spec.evaluate_into(v, &mut phi);
            for (k, c) in range.clone().enumerate() {
                matrix[(i, c)] = phi[k];
            }
        }
    }
    Ok((matrix, blocks))
}

impl ExpandedDesign {
    /// Expand `x` with `specs` and center every column at its sample mean.
    pub fn expand(x: &DMatrix<f64>, specs: &[BasisSpec]) -> Result<Self> {
        let (mut matrix, blocks) = raw_basis(x, specs)?;
        let n = matrix.nrows();
        let col_center: Vec<f64> = matrix
            .column_iter()
            .map(|c| c.iter().sum::<f64>() / n as f64)
            .collect();
        subtract_centers(&mut matrix, &col_center);
        let m = specs.iter().map(|s| s.num_basis).max().unwrap_or(0);
        Ok(Self::assemble(matrix, blocks, col_center, m))
    }

    /// Expand new observations with the training specs and training centers.
    pub fn expand_with_centers(
        x: &DMatrix<f64>,
        specs: &[BasisSpec],
        col_center: &[f64],
    ) -> Result<Self> {
        let (mut matrix, blocks) = raw_basis(x, specs)?;
        if col_center.len() != matrix.ncols() {
            return Err(GamError::config(format!(
                "expected {} column centers, got {}",
                matrix.ncols(),
                col_center.len()
            )));
        }
        subtract_centers(&mut matrix, col_center);
        let m = specs.iter().map(|s| s.num_basis).max().unwrap_or(0);
        Ok(Self::assemble(matrix, blocks, col_center.to_vec(), m))
    }

    /// Wrap an arbitrary matrix with equal blocks of `block_size` columns and
    /// no centering.
    pub fn from_blocks(matrix: DMatrix<f64>, block_size: usize) -> Result<Self> {
        if block_size == 0 || !matrix.ncols().is_multiple_of(block_size) {
            return Err(GamError::config(format!(
                "{} columns do not split into blocks of {block_size}",
                matrix.ncols()
            )));
        }
        let blocks = (0..matrix.ncols() / block_size)
            .map(|j| j * block_size..(j + 1) * block_size)
            .collect();
        let centers = vec![0.0; matrix.ncols()];
        Ok(Self::assemble(matrix, blocks, centers, block_size))
    }

    fn assemble(
        matrix: DMatrix<f64>,
        blocks: Vec<Range<usize>>,
        col_center: Vec<f64>,
        m: usize,
    ) -> Self {
        let n = matrix.nrows();
        let p = blocks.len();
        let block_eigmax = blocks
            .iter()
            .map(|r| {
                let b = matrix.columns(r.start, r.len());
                let gram = b.tr_mul(&b) / n.max(1) as f64;
                SymmetricEigen::new(gram)
                    .eigenvalues
                    .iter()
                    .copied()
                    .fold(0.0, f64::max)
            })
            .collect();
        ExpandedDesign {
            matrix,
            blocks,
            col_center,
            n,
            p,
            m,
            block_eigmax,
        }
    }

    pub fn block(&self, j: usize) -> DMatrixView<'_, f64> {
        let r = &self.blocks[j];
        self.matrix.columns(r.start, r.len())
    }

    pub fn block_len(&self, j: usize) -> usize {
        self.blocks[j].len()
    }

    /// Centers belonging to block `j`.
    pub fn block_center(&self, j: usize) -> &[f64] {
        &self.col_center[self.blocks[j].clone()]
    }
}

fn subtract_centers(matrix: &mut DMatrix<f64>, centers: &[f64]) {
    for (mut col, &c) in matrix.column_iter_mut().zip(centers) {
        col.add_scalar_mut(-c);
    }
}
