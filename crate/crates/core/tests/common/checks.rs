//! Measurements shared by the oracle tests and the acceptance harness.

use hdgam::sim::TableResult;
use hdgam::two_step::fit_two_step;
use hdgam::{
    fit_basis_specs, fit_penalized, group_update, lambda_max, DMatrix, DiffPenaltyMatrix, Family,
    PathConfig, PenaltyConfig, SolverConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    block_brute_force, oracle_objective, proximal_gradient, random_instance, random_problem,
};

#[derive(Debug, Clone)]
pub struct Check {
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(pass: bool, detail: String) -> Self {
        Check { pass, detail }
    }
}

fn flatten(intercept: f64, blocks: &[Vec<f64>]) -> Vec<f64> {
    std::iter::once(intercept)
        .chain(blocks.iter().flatten().copied())
        .collect()
}

/// Solver against the proximal-gradient oracle on 10 small instances.
/// Returns `(max objective gap, max coefficient gap)`.
pub fn oracle_equivalence(cfg: &SolverConfig) -> (f64, f64) {
    let mut worst_obj: f64 = 0.0;
    let mut worst_coef: f64 = 0.0;
    for k in 0..10u64 {
        let fam = if k % 2 == 0 {
            Family::Bernoulli
        } else {
            Family::Gaussian
        };
        let (design, y) = random_instance(fam, 40, 5, 4, 100 + k);
        let weights = vec![1.0; design.p];
        let lambda = (0.2 + 0.05 * k as f64) * lambda_max(&design, &y, fam, &weights);
        let pen = PenaltyConfig {
            lambda,
            weights: weights.clone(),
            smooth_lambda: 0.0,
        };
        let fit = fit_penalized(&design, &y, fam, &pen, cfg, None).unwrap();
        assert!(fit.converged, "instance {k} did not converge");
        let ours = flatten(fit.coef.intercept, &fit.coef.blocks);
        let oracle = proximal_gradient(
            fam,
            &design.matrix,
            &y,
            &design.blocks,
            lambda,
            &weights,
            1e-12,
        );
        let f_ours = oracle_objective(
            fam,
            &design.matrix,
            &y,
            &design.blocks,
            lambda,
            &weights,
            &ours,
        );
        let f_oracle = oracle_objective(
            fam,
            &design.matrix,
            &y,
            &design.blocks,
            lambda,
            &weights,
            &oracle,
        );
        worst_obj = worst_obj.max((f_ours - f_oracle).abs());
        let gap = ours
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst_coef = worst_coef.max(gap);
    }
    (worst_obj, worst_coef)
}

/// Smoothed block update against brute-force minimization on 20 blocks of
/// size 3. Returns the largest sup-norm difference.
pub fn block_oracle() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let d = DiffPenaltyMatrix::new(3);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let z: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let gamma = rng.random_range(0.2..2.0);
        let znorm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let lw = rng.random_range(0.0..1.1) * znorm;
        let ls = rng.random_range(0.01..1.0);
        let ours = group_update(&z, gamma, lw, ls, Some(&d));
        let oracle = block_brute_force(&z, gamma, lw, ls);
        let gap = ours
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(gap);
    }
    worst
}

/// Analytic gradient of the mean negative log-likelihood against central
/// differences, 20 random (design, coefficients, response) triples per
/// family. Returns the worst relative error per family.
pub fn gradient_check() -> Vec<(Family, f64)> {
    Family::ALL
        .iter()
        .map(|&fam| {
            let mut worst: f64 = 0.0;
            for t in 0..20u64 {
                let (design, y) = random_instance(fam, 30, 3, 5, 500 + t);
                let mut rng = ChaCha8Rng::seed_from_u64(900 + t);
                let k = design.matrix.ncols();
                let theta: Vec<f64> = (0..=k).map(|_| rng.random_range(-0.5..0.5)).collect();
                let eta_of = |th: &[f64]| -> Vec<f64> {
                    let b = nalgebra::DVector::from_column_slice(&th[1..]);
                    (&design.matrix * b).iter().map(|v| v + th[0]).collect()
                };
                let eta = eta_of(&theta);
                let (residual, _) = fam.gradient_and_curvature(&eta, &y);
                let n = y.len() as f64;
                let mut analytic = vec![-residual.iter().sum::<f64>() / n];
                for c in 0..k {
                    let col = design.matrix.column(c);
                    analytic.push(-col.iter().zip(&residual).map(|(a, r)| a * r).sum::<f64>() / n);
                }
                let h = 1e-6;
                let numeric: Vec<f64> = (0..=k)
                    .map(|c| {
                        let mut up = theta.clone();
                        let mut dn = theta.clone();
                        up[c] += h;
                        dn[c] -= h;
                        (fam.neg_loglik(&eta_of(&up), &y) - fam.neg_loglik(&eta_of(&dn), &y))
                            / (2.0 * h)
                    })
                    .collect();
                let diff = analytic
                    .iter()
                    .zip(&numeric)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-8);
                worst = worst.max(diff / scale);
            }
            (fam, worst)
        })
        .collect()
}

/// Largest `|sum_k phi_k(x) - 1|` over 1000 random points per feature.
pub fn partition_of_unity() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let x = DMatrix::from_fn(200, 10, |_, _| rng.random_range(-1.0..1.0));
    let specs = fit_basis_specs(&x, 4, 9).unwrap();
    let mut worst: f64 = 0.0;
    for spec in &specs {
        for _ in 0..1000 {
            let t = rng.random_range(spec.lo..=spec.hi);
            let s: f64 = spec.evaluate(t).iter().sum();
            worst = worst.max((s - 1.0).abs());
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SuiteStats {
    pub fits: usize,
    pub nonconverged: usize,
    pub max_kkt: f64,
    pub max_ascent: f64,
}

impl SuiteStats {
    pub fn merge(&mut self, other: SuiteStats) {
        self.fits += other.fits;
        self.nonconverged += other.nonconverged;
        self.max_kkt = self.max_kkt.max(other.max_kkt);
        self.max_ascent = self.max_ascent.max(other.max_ascent);
    }

    pub fn from_table(table: &TableResult) -> Self {
        let mut s = SuiteStats::default();
        for r in &table.reps {
            s.merge(SuiteStats {
                fits: r.total_fits,
                nonconverged: r.nonconverged_fits,
                max_kkt: r.max_kkt,
                max_ascent: r.max_ascent,
            });
        }
        s
    }
}

/// Full two-step paths on 10 instances covering every family, with and
/// without the smoothness penalty.
pub fn path_suite() -> SuiteStats {
    let mut stats = SuiteStats::default();
    for k in 0..10u64 {
        let fam = Family::ALL[k as usize % 4];
        let (specs, design, y) = random_problem(fam, 120, 12, 6, 3000 + k);
        let cfg = PathConfig {
            path_len: 20,
            smooth_lambda: if k >= 6 { 0.01 } else { 0.0 },
            ..PathConfig::default()
        };
        let res = fit_two_step(&design, &specs, &y, fam, &cfg).unwrap();
        for e in res.screening.path.iter().chain(&res.adaptive_path.entries) {
            stats.merge(SuiteStats {
                fits: 1,
                nonconverged: usize::from(!e.converged),
                max_kkt: e.kkt,
                max_ascent: e.max_ascent,
            });
        }
    }
    stats
}
