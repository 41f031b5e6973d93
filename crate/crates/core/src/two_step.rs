//! Two-step estimator: group-lasso screening capped at `n_g = floor(n / m)`
//! groups, then an adaptive group lasso on the screened groups with weights
//! `1 / ||beta_j||`, tuned by GIC.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::design::{fit_basis_specs, ExpandedDesign};
use crate::error::{GamError, Result};
use crate::family::Family;
use crate::selection::{a_n, gic, FitPath, PathEntry};
use crate::solver::{
    fit_penalized, lambda_max, CoefBlocks, FitResult, PenaltyConfig, SolverConfig,
};
use crate::spline::BasisSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub path_len: usize,
    /// Smallest screening lambda as a fraction of lambda_max.
    pub screen_ratio: f64,
    /// Smallest adaptive lambda as a fraction of its lambda_max.
    pub adaptive_ratio: f64,
    pub smooth_lambda: f64,
    pub solver: SolverConfig,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            path_len: 50,
            screen_ratio: 0.01,
            adaptive_ratio: 0.001,
            smooth_lambda: 0.0,
            solver: SolverConfig::default(),
        }
    }
}

/// `path_len` log-spaced values from `lambda_max` down to `ratio * lambda_max`.
pub fn lambda_grid(lambda_max: f64, ratio: f64, path_len: usize) -> Vec<f64> {
    if path_len == 1 {
        return vec![lambda_max];
    }
    (0..path_len)
        .map(|k| {
            if k == 0 {
                lambda_max
            } else {
                lambda_max * ratio.powf(k as f64 / (path_len - 1) as f64)
            }
        })
        .collect()
}

/// Largest number of groups whose parameters fit in `n` observations.
pub fn group_cap(n: usize, m: usize) -> usize {
    n / m
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScreeningResult {
    pub coef: CoefBlocks,
    pub lambda: f64,
    /// Every fit solved on the screening path, including the one that
    /// overshot the cap (if any).
    pub path: Vec<PathEntry>,
    pub cap: usize,
}

fn entry_from_fit(
    design: &ExpandedDesign,
    y: &[f64],
    fam: Family,
    lambda: f64,
    fit: &FitResult,
    a_n_val: f64,
) -> PathEntry {
    let eta = fit.coef.linear_predictor(design);
    let mu: Vec<f64> = eta.iter().map(|&e| fam.mean(e)).collect();
    let deviance = fam.deviance(&mu, y);
    let support_size = fit.coef.support_size();
    PathEntry {
        lambda,
        coef: fit.coef.clone(),
        deviance,
        support_size,
        gic: gic(deviance, support_size, a_n_val, design.n),
        kkt: fit.kkt,
        cycles: fit.cycles,
        converged: fit.converged,
        max_ascent: fit.max_ascent,
    }
}

fn check_cfg(cfg: &PathConfig) -> Result<()> {
    if cfg.path_len == 0 {
        return Err(GamError::config("lambda path is empty"));
    }
    for r in [cfg.screen_ratio, cfg.adaptive_ratio] {
        if !(r > 0.0 && r < 1.0) {
            return Err(GamError::config(format!(
                "path ratio {r} must lie in (0, 1)"
            )));
        }
    }
    Ok(())
}

/// Group-lasso screening along a decreasing path with warm starts; keeps the
/// fit at the smallest lambda whose support has at most `n_g` groups.
pub fn screen(
    design: &ExpandedDesign,
    y: &[f64],
    fam: Family,
    cfg: &PathConfig,
) -> Result<ScreeningResult> {
    check_cfg(cfg)?;
    if design.n < 2 * design.m {
        return Err(GamError::config(format!(
            "need n >= 2m for screening (n = {}, m = {})",
            design.n, design.m
        )));
    }
    let cap = group_cap(design.n, design.m);
    let weights = vec![1.0; design.p];
    let lmax = lambda_max(design, y, fam, &weights);
    let a = a_n(design.n, design.p.max(2), design.m);

    let null = CoefBlocks::zeros(design, fam.null_eta(y));
    if lmax <= 0.0 {
        return Ok(ScreeningResult {
            coef: null,
            lambda: 0.0,
            path: Vec::new(),
            cap,
        });
    }

    let mut path = Vec::new();
    let mut chosen: Option<(CoefBlocks, f64)> = None;
    let mut warm: Option<CoefBlocks> = None;
    for lambda in lambda_grid(lmax, cfg.screen_ratio, cfg.path_len) {
        let pen = PenaltyConfig {
            lambda,
            weights: weights.clone(),
            smooth_lambda: cfg.smooth_lambda,
        };
        let fit = fit_penalized(design, y, fam, &pen, &cfg.solver, warm.as_ref())?;
        let entry = entry_from_fit(design, y, fam, lambda, &fit, a);
        let over = entry.support_size > cap;
        path.push(entry);
        if over {
            break;
        }
        chosen = Some((fit.coef.clone(), lambda));
        warm = Some(fit.coef);
    }

    let (coef, lambda) = chosen.unwrap_or((null, lmax));
    if coef.support_size() == 0 {
        log::warn!("screening kept no groups under the cap of {cap}");
    }
    Ok(ScreeningResult {
        coef,
        lambda,
        path,
        cap,
    })
}

/// `1 / ||beta_j||` on the screening support, infinity elsewhere.
pub fn adaptive_weights(screening: &CoefBlocks) -> Vec<f64> {
    (0..screening.blocks.len())
        .map(|j| {
            let nb = screening.block_norm(j);
            if nb > 0.0 {
                1.0 / nb
            } else {
                f64::INFINITY
            }
        })
        .collect()
}

/// Adaptive group lasso path with weights from the screening fit.
pub fn adaptive_fit(
    design: &ExpandedDesign,
    y: &[f64],
    fam: Family,
    screening: &CoefBlocks,
    cfg: &PathConfig,
) -> Result<FitPath> {
    adaptive_fit_with_weights(design, y, fam, &adaptive_weights(screening), cfg)
}

/// Adaptive group lasso path for arbitrary initial-estimator weights.
pub fn adaptive_fit_with_weights(
    design: &ExpandedDesign,
    y: &[f64],
    fam: Family,
    weights: &[f64],
    cfg: &PathConfig,
) -> Result<FitPath> {
    check_cfg(cfg)?;
    if weights.len() != design.p {
        return Err(GamError::config("one weight per group is required"));
    }
    let a = a_n(design.n, design.p.max(2), design.m);
    let mut path = FitPath::new(a, design.n);
    let lmax = lambda_max(design, y, fam, weights);

    if weights.iter().all(|w| !w.is_finite()) || lmax <= 0.0 {
        let pen = PenaltyConfig {
            lambda: 0.0,
            weights: weights.to_vec(),
            smooth_lambda: cfg.smooth_lambda,
        };
        let fit = fit_penalized(design, y, fam, &pen, &cfg.solver, None)?;
        path.entries
            .push(entry_from_fit(design, y, fam, lmax, &fit, a));
        return Ok(path);
    }

    let mut warm: Option<CoefBlocks> = None;
    for lambda in lambda_grid(lmax, cfg.adaptive_ratio, cfg.path_len) {
        let pen = PenaltyConfig {
            lambda,
            weights: weights.to_vec(),
            smooth_lambda: cfg.smooth_lambda,
        };
        let fit = fit_penalized(design, y, fam, &pen, &cfg.solver, warm.as_ref())?;
        path.entries
            .push(entry_from_fit(design, y, fam, lambda, &fit, a));
        warm = Some(fit.coef);
    }
    Ok(path)
}

/// Diagnostics gathered across both stages.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoStepDiagnostics {
    pub screening_cycles: usize,
    pub adaptive_cycles: usize,
    /// Largest KKT residual over every fit on both paths.
    pub max_kkt: f64,
    /// Largest objective increase between accepted solver cycles.
    pub max_ascent: f64,
    pub nonconverged_fits: usize,
    pub total_fits: usize,
    /// Estimated L2 norm of each fitted component (zero off the support).
    pub component_norms: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoStepResult {
    pub screening: ScreeningResult,
    pub weights: Vec<f64>,
    pub adaptive_path: FitPath,
    pub selected_index: usize,
    pub selected: CoefBlocks,
    pub adaptive_lambda: f64,
    pub gic: f64,
    pub diagnostics: TwoStepDiagnostics,
}

/// Run screening, the adaptive path and GIC selection on an expanded design.
/// `specs` are only used for the component-norm diagnostics.
pub fn fit_two_step(
    design: &ExpandedDesign,
    specs: &[BasisSpec],
    y: &[f64],
    fam: Family,
    cfg: &PathConfig,
) -> Result<TwoStepResult> {
    fam.validate_response(y)?;
    let screening = screen(design, y, fam, cfg)?;
    let weights = adaptive_weights(&screening.coef);
    let adaptive_path = adaptive_fit_with_weights(design, y, fam, &weights, cfg)?;
    let selected_index = adaptive_path
        .select()
        .ok_or_else(|| GamError::config("adaptive path is empty"))?;
    let winner = &adaptive_path.entries[selected_index];

    let all = screening.path.iter().chain(&adaptive_path.entries);
    let diagnostics = TwoStepDiagnostics {
        screening_cycles: screening.path.iter().map(|e| e.cycles).sum(),
        adaptive_cycles: adaptive_path.entries.iter().map(|e| e.cycles).sum(),
        max_kkt: all.clone().map(|e| e.kkt).fold(0.0, f64::max),
        max_ascent: all.clone().map(|e| e.max_ascent).fold(0.0, f64::max),
        nonconverged_fits: all.clone().filter(|e| !e.converged).count(),
        total_fits: all.count(),
        component_norms: (0..design.p)
            .map(|j| {
                let beta = &winner.coef.blocks[j];
                if beta.iter().all(|&b| b == 0.0) || j >= specs.len() {
                    0.0
                } else {
                    specs[j].component_norm(beta, Some(design.block_center(j)), 1000)
                }
            })
            .collect(),
    };

    Ok(TwoStepResult {
        selected: winner.coef.clone(),
        adaptive_lambda: winner.lambda,
        gic: winner.gic,
        screening,
        weights,
        selected_index,
        adaptive_path,
        diagnostics,
    })
}

/// Regularization rate from the screening consistency theory. Diagnostic
/// only; the operating lambda always comes from the path.
pub fn theoretical_lambda(
    n: usize,
    p: usize,
    m: usize,
    bounded: bool,
    gamma_n: f64,
    c: f64,
) -> f64 {
    let (n, pm, m) = (n as f64, (p * m) as f64, m as f64);
    if bounded {
        c * m.sqrt() * ((gamma_n + pm.ln()) / n).sqrt()
    } else {
        m.sqrt() * gamma_n * (pm.ln() / n).sqrt()
    }
}

/// Basis layout and coefficients needed to predict on new data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GamModel {
    pub family: Family,
    pub specs: Vec<BasisSpec>,
    pub col_center: Vec<f64>,
    pub coef: CoefBlocks,
}

impl GamModel {
    /// Linear predictor and mean for new rows, expanded with the training
    /// bases and centers.
    pub fn predict(&self, x_new: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
        if x_new.ncols() != self.specs.len() {
            return Err(GamError::config(format!(
                "model has {} features but data has {} columns",
                self.specs.len(),
                x_new.ncols()
            )));
        }
        let design = ExpandedDesign::expand_with_centers(x_new, &self.specs, &self.col_center)?;
        let eta = self.coef.linear_predictor(&design);
        let mean = eta.iter().map(|&e| self.family.mean(e)).collect();
        Ok((eta, mean))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub order: usize,
    pub num_basis: usize,
    pub path: PathConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            order: 4,
            num_basis: 9,
            path: PathConfig::default(),
        }
    }
}

/// Build bases from `x`, run the two-step estimator and package the winner.
pub fn fit_model(
    x: &DMatrix<f64>,
    y: &[f64],
    fam: Family,
    cfg: &ModelConfig,
) -> Result<(GamModel, TwoStepResult)> {
    if x.nrows() != y.len() {
        return Err(GamError::config(format!(
            "{} rows of features but {} responses",
            x.nrows(),
            y.len()
        )));
    }
    fam.validate_response(y)?;
    let specs = fit_basis_specs(x, cfg.order, cfg.num_basis)?;
    let design = ExpandedDesign::expand(x, &specs)?;
    let result = fit_two_step(&design, &specs, y, fam, &cfg.path)?;
    let model = GamModel {
        family: fam,
        col_center: design.col_center.clone(),
        specs,
        coef: result.selected.clone(),
    };
    Ok((model, result))
}
