//! Groupwise-majorization-descent (GMD) block coordinate solver for
//!
//! ```text
//! L(alpha, beta) + lambda * sum_j w_j ||beta_j||_2 + lambda_s * sum_j beta_j^T D beta_j
//! ```
//!
//! where `L` is the mean negative log-likelihood and the intercept `alpha`
//! is unpenalized. Each block step minimizes a quadratic majorizer of `L`
//! plus the block penalty in closed form (or by a scalar root-find when the
//! smoothness penalty is active).

use std::collections::HashMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::design::ExpandedDesign;
use crate::error::{GamError, Result};
use crate::family::Family;
use crate::spline::DiffPenaltyMatrix;

/// Intercept plus one coefficient block per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefBlocks {
    pub intercept: f64,
    pub blocks: Vec<Vec<f64>>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl CoefBlocks {
    pub fn zeros(design: &ExpandedDesign, intercept: f64) -> Self {
        CoefBlocks {
            intercept,
            blocks: (0..design.p)
                .map(|j| vec![0.0; design.block_len(j)])
                .collect(),
        }
    }

    pub fn block_norm(&self, j: usize) -> f64 {
        norm(&self.blocks[j])
    }

    /// Groups with a nonzero block.
    pub fn support(&self) -> Vec<usize> {
        (0..self.blocks.len())
            .filter(|&j| self.blocks[j].iter().any(|&v| v != 0.0))
            .collect()
    }

    pub fn support_size(&self) -> usize {
        self.blocks
            .iter()
            .filter(|b| b.iter().any(|&v| v != 0.0))
            .count()
    }

    /// `alpha + sum_j Phi_j beta_j`, accumulated in fixed block order.
    pub fn linear_predictor(&self, design: &ExpandedDesign) -> Vec<f64> {
        let mut eta = vec![self.intercept; design.n];
        for (j, beta) in self.blocks.iter().enumerate() {
            let start = design.blocks[j].start;
            for (k, &b) in beta.iter().enumerate() {
                if b != 0.0 {
                    let col = design.matrix.column(start + k);
                    for (e, &x) in eta.iter_mut().zip(col.iter()) {
                        *e += b * x;
                    }
                }
            }
        }
        eta
    }

    pub fn is_finite(&self) -> bool {
        self.intercept.is_finite() && self.blocks.iter().flatten().all(|v| v.is_finite())
    }
}

/// Penalty levels and group weights. A weight of `f64::INFINITY` removes the
/// group from the problem.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyConfig {
    pub lambda: f64,
    pub weights: Vec<f64>,
    pub smooth_lambda: f64,
}

impl PenaltyConfig {
    pub fn unweighted(lambda: f64, p: usize) -> Self {
        PenaltyConfig {
            lambda,
            weights: vec![1.0; p],
            smooth_lambda: 0.0,
        }
    }

    fn validate(&self, p: usize) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(GamError::config(format!("invalid lambda {}", self.lambda)));
        }
        if !(self.smooth_lambda >= 0.0 && self.smooth_lambda.is_finite()) {
            return Err(GamError::config(format!(
                "invalid smoothing lambda {}",
                self.smooth_lambda
            )));
        }
        if self.weights.len() != p {
            return Err(GamError::config(format!(
                "{} weights for {p} groups",
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|w| !(*w > 0.0)) {
            return Err(GamError::config("group weights must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_cycles: usize,
    /// Relative change in the objective between cycles.
    pub tol: f64,
    /// Required KKT residual at convergence.
    pub kkt_tol: f64,
    pub majorization_backoff: f64,
    pub active_set: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_cycles: 20_000,
            tol: 1e-8,
            kkt_tol: 1e-6,
            majorization_backoff: 2.0,
            active_set: true,
        }
    }
}

/// Outcome of [`fit_penalized`].
#[derive(Debug, Clone)]
pub struct FitResult {
    pub coef: CoefBlocks,
    pub converged: bool,
    pub cycles: usize,
    pub objective: f64,
    pub kkt: f64,
    /// Objective after every accepted cycle, starting with the initial value.
    pub objective_trace: Vec<f64>,
    /// Largest increase of the objective between consecutive cycles.
    pub max_ascent: f64,
    /// Number of times a block's majorization constant had to be enlarged.
    pub backoffs: usize,
    /// Observations whose linear predictor hit the exponentiation clamp.
    pub clamped: usize,
}

/// Minimize `(gamma/2) ||b - z/gamma||^2 + lambda_w ||b|| + smooth_lambda b^T D b`.
///
/// `b = 0` exactly when `||z|| <= lambda_w`. Without smoothing this is the
/// group soft-threshold; with smoothing the problem is diagonalized by the
/// eigenvectors of `D` and the block norm `t` solves a monotone scalar
/// equation.
pub fn group_update(
    z: &[f64],
    gamma: f64,
    lambda_w: f64,
    smooth_lambda: f64,
    diff: Option<&DiffPenaltyMatrix>,
) -> Vec<f64> {
    let nz = norm(z);
    if nz <= lambda_w * (1.0 + 1e-12) || nz == 0.0 {
        return vec![0.0; z.len()];
    }
    if smooth_lambda == 0.0 {
        let scale = (1.0 - lambda_w / nz) / gamma;
        return z.iter().map(|v| v * scale).collect();
    }

    let owned;
    let diff = match diff {
        Some(d) => d,
        None => {
            owned = DiffPenaltyMatrix::new(z.len());
            &owned
        }
    };
    assert_eq!(diff.dim(), z.len());
    let q = &diff.eigenvectors;
    let zt = q.tr_mul(&DVector::from_column_slice(z));
    let a: Vec<f64> = diff
        .eigenvalues
        .iter()
        .map(|l| gamma + 2.0 * smooth_lambda * l)
        .collect();

    let t = if lambda_w == 0.0 {
        f64::NAN
    } else {
        solve_block_norm(zt.as_slice(), &a, lambda_w, nz / gamma)
    };
    let bt = DVector::from_iterator(
        z.len(),
        zt.iter().zip(&a).map(|(zk, ak)| {
            if lambda_w == 0.0 {
                zk / ak
            } else {
                zk * t / (ak * t + lambda_w)
            }
        }),
    );
    (q * bt).iter().copied().collect()
}

/// Root of `g(t) = sum_k zt_k^2 / (a_k t + lw)^2 - 1` on `(0, upper]`.
///
/// `g` is convex and decreasing with `g(0) > 0 >= g(upper)`, so Newton from
/// the left converges monotonically; bisection takes over if it misbehaves.
fn solve_block_norm(zt: &[f64], a: &[f64], lw: f64, upper: f64) -> f64 {
    let g = |t: f64| -> (f64, f64) {
        let mut val = -1.0;
        let mut der = 0.0;
        for (z, ak) in zt.iter().zip(a) {
            let d = ak * t + lw;
            let z2 = z * z;
            val += z2 / (d * d);
            der -= 2.0 * z2 * ak / (d * d * d);
        }
        (val, der)
    };

    let mut t = 0.0;
    for _ in 0..100 {
        let (val, der) = g(t);
        if val <= 0.0 {
            break;
        }
        let next = t - val / der;
        if !next.is_finite() || next <= t || next > upper * (1.0 + 1e-12) {
            return bisect(&g, upper);
        }
        if (next - t) <= 1e-15 * next {
            return next;
        }
        t = next;
    }
    if t > 0.0 && g(t).0.abs() < 1e-12 {
        t
    } else {
        bisect(&g, upper)
    }
}

fn bisect(g: &impl Fn(f64) -> (f64, f64), upper: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, upper);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if g(mid).0 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Smallest `lambda` at which the all-zero block solution satisfies KKT.
pub fn lambda_max(design: &ExpandedDesign, y: &[f64], fam: Family, weights: &[f64]) -> f64 {
    let eta = vec![fam.null_eta(y); design.n];
    let (residual, _) = fam.gradient_and_curvature(&eta, y);
    let r = DVector::from_column_slice(&residual);
    (0..design.p)
        .filter(|&j| weights[j].is_finite())
        .map(|j| block_gradient_norm(design, j, &r) / weights[j])
        .fold(0.0, f64::max)
}

fn block_gradient(design: &ExpandedDesign, j: usize, r: &DVector<f64>) -> Vec<f64> {
    let u = design.block(j).tr_mul(r) / design.n as f64;
    u.iter().copied().collect()
}

fn block_gradient_norm(design: &ExpandedDesign, j: usize, r: &DVector<f64>) -> f64 {
    norm(&block_gradient(design, j, r))
}

/// Penalized objective at `coef`.
pub fn objective(
    design: &ExpandedDesign,
    y: &[f64],
    fam: Family,
    pen: &PenaltyConfig,
    coef: &CoefBlocks,
) -> f64 {
    let eta = coef.linear_predictor(design);
    fam.neg_loglik(&eta, y) + penalty_value(pen, coef)
}

fn penalty_value(pen: &PenaltyConfig, coef: &CoefBlocks) -> f64 {
    let mut total = 0.0;
    for (j, beta) in coef.blocks.iter().enumerate() {
        if !pen.weights[j].is_finite() {
            continue;
        }
        let nb = norm(beta);
        if nb > 0.0 {
            total += pen.lambda * pen.weights[j] * nb;
            if pen.smooth_lambda > 0.0 {
                total += pen.smooth_lambda * quad_diff(beta);
            }
        }
    }
    total
}

fn quad_diff(beta: &[f64]) -> f64 {
    beta.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum()
}

fn diff_apply(beta: &[f64]) -> Vec<f64> {
    let m = beta.len();
    (0..m)
        .map(|k| {
            let mut v = 0.0;
            if k > 0 {
                v += beta[k] - beta[k - 1];
            }
            if k + 1 < m {
                v += beta[k] - beta[k + 1];
            }
            v
        })
        .collect()
}

fn group_kkt(u: &[f64], beta: &[f64], lambda_w: f64, smooth_lambda: f64) -> f64 {
    let nb = norm(beta);
    if nb == 0.0 {
        (norm(u) - lambda_w).max(0.0)
    } else {
        let d = diff_apply(beta);
        let v: Vec<f64> = (0..u.len())
            .map(|k| u[k] - lambda_w * beta[k] / nb - 2.0 * smooth_lambda * d[k])
            .collect();
        norm(&v)
    }
}

/// Largest KKT violation over the groups at `coef`.
pub fn kkt_residual(
    design: &ExpandedDesign,
    y: &[f64],
    fam: Family,
    pen: &PenaltyConfig,
    coef: &CoefBlocks,
) -> f64 {
    let eta = coef.linear_predictor(design);
    let (residual, _) = fam.gradient_and_curvature(&eta, y);
    let r = DVector::from_column_slice(&residual);
    (0..design.p)
        .filter(|&j| pen.weights[j].is_finite())
        .map(|j| {
            let u = block_gradient(design, j, &r);
            group_kkt(
                &u,
                &coef.blocks[j],
                pen.lambda * pen.weights[j],
                pen.smooth_lambda,
            )
        })
        .fold(0.0, f64::max)
}

struct State<'a> {
    design: &'a ExpandedDesign,
    y: &'a [f64],
    fam: Family,
    eta: Vec<f64>,
    residual: DVector<f64>,
    loss: f64,
    // candidate buffers, swapped in when a block move is accepted
    eta_try: Vec<f64>,
    residual_try: DVector<f64>,
    loss_try: f64,
}

impl<'a> State<'a> {
    fn new(design: &'a ExpandedDesign, y: &'a [f64], fam: Family, coef: &CoefBlocks) -> Self {
        let eta = coef.linear_predictor(design);
        let mut s = State {
            design,
            y,
            fam,
            residual: DVector::zeros(design.n),
            loss: 0.0,
            eta_try: eta.clone(),
            residual_try: DVector::zeros(design.n),
            loss_try: 0.0,
            eta,
        };
        s.refresh();
        s
    }

    fn refresh(&mut self) {
        let mut total = 0.0;
        for i in 0..self.y.len() {
            let (l, r) = self.fam.loss_and_residual(self.eta[i], self.y[i]);
            total += l;
            self.residual[i] = r;
        }
        self.loss = total / self.y.len() as f64;
    }

    fn curvature_bound(&self) -> f64 {
        self.fam.gradient_and_curvature(&self.eta, self.y).1
    }

    /// Fill the candidate buffers for `eta + Phi_j delta` and return its
    /// loss. With `need_loss` false only the residual is computed and the
    /// loss is left stale until the next `current_loss`.
    fn try_shift(&mut self, j: usize, delta: &[f64], need_loss: bool) -> f64 {
        self.eta_try.copy_from_slice(&self.eta);
        let start = self.design.blocks[j].start;
        for (k, &d) in delta.iter().enumerate() {
            if d != 0.0 {
                let col = self.design.matrix.column(start + k);
                for (e, &x) in self.eta_try.iter_mut().zip(col.iter()) {
                    *e += d * x;
                }
            }
        }
        if !need_loss {
            for i in 0..self.y.len() {
                self.residual_try[i] = self.fam.residual(self.eta_try[i], self.y[i]);
            }
            self.loss_try = f64::NAN;
            return self.loss_try;
        }
        let mut total = 0.0;
        for i in 0..self.y.len() {
            let (l, r) = self.fam.loss_and_residual(self.eta_try[i], self.y[i]);
            total += l;
            self.residual_try[i] = r;
        }
        self.loss_try = total / self.y.len() as f64;
        self.loss_try
    }

    /// Loss at the current iterate, recomputed if a residual-only move left
    /// it stale.
    fn current_loss(&mut self) -> f64 {
        if self.loss.is_nan() {
            self.loss = self.fam.neg_loglik(&self.eta, self.y);
        }
        self.loss
    }

    fn accept(&mut self) {
        std::mem::swap(&mut self.eta, &mut self.eta_try);
        std::mem::swap(&mut self.residual, &mut self.residual_try);
        self.loss = self.loss_try;
    }

    /// One guarded Newton step on the intercept.
    fn intercept_step(&mut self, coef: &mut CoefBlocks) {
        let (mut grad, mut hess) = (0.0, 0.0);
        for i in 0..self.y.len() {
            let (r, w) = self.fam.working(self.eta[i], self.y[i]);
            grad += r;
            hess += w;
        }
        if grad == 0.0 || hess <= 0.0 {
            return;
        }
        let full = grad / hess;
        let mut step = full;
        for _ in 0..40 {
            let mut total = 0.0;
            for i in 0..self.y.len() {
                let e = self.eta[i] + step;
                let (l, r) = self.fam.loss_and_residual(e, self.y[i]);
                self.eta_try[i] = e;
                self.residual_try[i] = r;
                total += l;
            }
            self.loss_try = total / self.y.len() as f64;
            if self.loss_try <= self.loss {
                coef.intercept += step;
                self.accept();
                return;
            }
            step *= 0.5;
        }
    }
}

/// Fit the penalized model by GMD block coordinate descent.
///
/// Non-convergence is reported through [`FitResult::converged`]; a
/// non-finite objective is an error.
pub fn fit_penalized(
    design: &ExpandedDesign,
    y: &[f64],
    fam: Family,
    pen: &PenaltyConfig,
    cfg: &SolverConfig,
    warm: Option<&CoefBlocks>,
) -> Result<FitResult> {
    if y.len() != design.n {
        return Err(GamError::config(format!(
            "response has {} rows, design has {}",
            y.len(),
            design.n
        )));
    }
    pen.validate(design.p)?;
    if cfg.max_cycles == 0 || !(cfg.tol > 0.0) || !(cfg.majorization_backoff > 1.0) {
        return Err(GamError::config("invalid solver configuration"));
    }

    let mut coef = match warm {
        Some(w) => {
            if w.blocks.len() != design.p
                || (0..design.p).any(|j| w.blocks[j].len() != design.block_len(j))
            {
                return Err(GamError::config("warm start does not match the design"));
            }
            w.clone()
        }
        None => CoefBlocks::zeros(design, fam.null_eta(y)),
    };
    for (j, w) in pen.weights.iter().enumerate() {
        if !w.is_finite() {
            coef.blocks[j].fill(0.0);
        }
    }

    let mut diffs: HashMap<usize, DiffPenaltyMatrix> = HashMap::new();
    if pen.smooth_lambda > 0.0 {
        for j in 0..design.p {
            let m = design.block_len(j);
            diffs.entry(m).or_insert_with(|| DiffPenaltyMatrix::new(m));
        }
    }

    let mut state = State::new(design, y, fam, &coef);
    let mut obj = state.loss + penalty_value(pen, &coef);
    if !obj.is_finite() {
        return Err(GamError::SolverDiverged(
            "initial objective is not finite".into(),
        ));
    }
    let mut trace = vec![obj];
    let mut max_ascent = f64::NEG_INFINITY;
    let mut backoffs = 0;
    let mut active: Vec<bool> = (0..design.p).map(|j| pen.weights[j].is_finite()).collect();
    let mut force_full = false;
    let mut converged = false;
    let mut kkt = f64::INFINITY;
    let mut cycles = 0;
    let global_bound = fam.has_global_curvature_bound();
    let curvature = state.curvature_bound();
    // Per-block majorization constants. For families with a global curvature
    // bound, `cap` is a valid majorizer everywhere and moves made at the cap
    // skip the check. Below the cap, and for all other families, a move is
    // accepted only if the quadratic bound holds at the new point.
    let cap: Vec<f64> = (0..design.p)
        .map(|j| {
            if global_bound {
                curvature * design.block_eigmax[j]
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let mut gammas: Vec<f64> = (0..design.p)
        .map(|j| curvature * design.block_eigmax[j])
        .collect();
    let mut streak = vec![0u32; design.p];

    for cycle in 1..=cfg.max_cycles {
        cycles = cycle;
        let full = !cfg.active_set || cycle <= 2 || cycle % 5 == 0 || force_full;
        force_full = false;

        for j in 0..design.p {
            let w = pen.weights[j];
            if !w.is_finite() || !(full || active[j]) {
                continue;
            }
            let lambda_w = pen.lambda * w;
            let u = block_gradient(design, j, &state.residual);
            let old = coef.blocks[j].clone();
            let mut gamma = gammas[j];
            if !(gamma > 0.0) {
                continue;
            }
            let mut moved = false;
            let mut first_try = true;
            for _ in 0..200 {
                let z: Vec<f64> = old.iter().zip(&u).map(|(b, g)| gamma * b + g).collect();
                let new = group_update(
                    &z,
                    gamma,
                    lambda_w,
                    pen.smooth_lambda,
                    diffs.get(&old.len()),
                );
                let delta: Vec<f64> = new.iter().zip(&old).map(|(a, b)| a - b).collect();
                if delta.iter().all(|&d| d == 0.0) {
                    break;
                }
                let exact = gamma >= cap[j];
                let loss = state.try_shift(j, &delta, !exact);
                if !exact {
                    let lin: f64 = u.iter().zip(&delta).map(|(g, d)| g * d).sum();
                    let quad: f64 = delta.iter().map(|d| d * d).sum();
                    let base = state.current_loss();
                    let bound = base - lin + 0.5 * gamma * quad;
                    if loss > bound + 4.0 * f64::EPSILON * base.abs().max(1.0) {
                        gamma = (gamma * cfg.majorization_backoff).min(cap[j]);
                        backoffs += 1;
                        first_try = false;
                        continue;
                    }
                }
                coef.blocks[j] = new;
                state.accept();
                moved = true;
                break;
            }
            if moved && first_try {
                streak[j] += 1;
                if streak[j] >= 3 {
                    gamma *= 0.5;
                    streak[j] = 0;
                }
            } else if !first_try {
                streak[j] = 0;
            }
            gammas[j] = gamma;
        }
        state.current_loss();
        state.intercept_step(&mut coef);

        let new_obj = state.loss + penalty_value(pen, &coef);
        if !new_obj.is_finite() {
            return Err(GamError::SolverDiverged(format!(
                "objective became non-finite in cycle {cycle}"
            )));
        }
        max_ascent = max_ascent.max(new_obj - obj);
        trace.push(new_obj);
        let small_change = (obj - new_obj).abs() <= cfg.tol * new_obj.abs().max(1.0);
        obj = new_obj;

        if full {
            let mut worst: f64 = 0.0;
            for (j, on) in active.iter_mut().enumerate() {
                let w = pen.weights[j];
                if !w.is_finite() {
                    continue;
                }
                let u = block_gradient(design, j, &state.residual);
                let v = group_kkt(&u, &coef.blocks[j], pen.lambda * w, pen.smooth_lambda);
                worst = worst.max(v);
                *on = coef.blocks[j].iter().any(|&b| b != 0.0) || v > 0.0;
            }
            kkt = worst;
            let intercept_grad = state.residual.sum().abs() / design.n as f64;
            if small_change && kkt <= cfg.kkt_tol && intercept_grad <= cfg.kkt_tol {
                converged = true;
                break;
            }
        } else if small_change {
            force_full = true;
        }
    }

    if !converged {
        kkt = kkt_residual(design, y, fam, pen, &coef);
        log::debug!(
            "solver stopped after {cycles} cycles at lambda {} with KKT residual {kkt:.3e}",
            pen.lambda
        );
    }
    let clamped = state.eta.iter().filter(|&&e| fam.is_clamped(e)).count();
    Ok(FitResult {
        coef,
        converged,
        cycles,
        objective: obj,
        kkt,
        objective_trace: trace,
        max_ascent: max_ascent.max(0.0),
        backoffs,
        clamped,
    })
}
