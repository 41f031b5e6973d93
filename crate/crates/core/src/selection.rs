//! Generalized information criterion over a regularization path.

use serde::{Deserialize, Serialize};

use crate::solver::CoefBlocks;

/// GIC complexity weight `m * log(log n) * log p`.
pub fn a_n(n: usize, p: usize, m: usize) -> f64 {
    m as f64 * (n as f64).ln().ln() * (p as f64).ln()
}

/// `(deviance + a_n * support_size) / n`.
pub fn gic(deviance: f64, support_size: usize, a_n_val: f64, n: usize) -> f64 {
    (deviance + a_n_val * support_size as f64) / n as f64
}

/// One solved point on a regularization path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathEntry {
    pub lambda: f64,
    pub coef: CoefBlocks,
    pub deviance: f64,
    pub support_size: usize,
    pub gic: f64,
    pub kkt: f64,
    pub cycles: usize,
    pub converged: bool,
    pub max_ascent: f64,
}

/// Path entries in strictly decreasing `lambda` order.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FitPath {
    pub entries: Vec<PathEntry>,
    /// Weight used for every entry's GIC.
    pub a_n: f64,
    pub n: usize,
}

impl FitPath {
    pub fn new(a_n: f64, n: usize) -> Self {
        FitPath {
            entries: Vec::new(),
            a_n,
            n,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Index of the minimum-GIC entry, or `None` for an empty path.
    pub fn select(&self) -> Option<usize> {
        select(&self.entries)
    }
}

/// Minimum GIC; ties go to the earlier entry (larger `lambda`, sparser model).
pub fn select(entries: &[PathEntry]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, e) in entries.iter().enumerate() {
        match best {
            Some(b) if !(e.gic < entries[b].gic) => {}
            _ => best = Some(i),
        }
    }
    best
}
