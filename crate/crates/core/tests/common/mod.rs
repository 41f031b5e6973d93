//! Independent reference implementations used by the oracle and acceptance
//! tests. Nothing here calls into the solver; losses, gradients and the
//! difference penalty are written out from their definitions.

#![allow(dead_code)]

pub mod checks;

use hdgam::{fit_basis_specs, BasisSpec, DMatrix, ExpandedDesign, Family};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random Unif(-1, 1) features expanded in a cubic basis, with a response
/// drawn from a sparse additive truth.
pub fn random_instance(
    fam: Family,
    n: usize,
    p: usize,
    m: usize,
    seed: u64,
) -> (ExpandedDesign, Vec<f64>) {
    let (_, design, y) = random_problem(fam, n, p, m, seed);
    (design, y)
}

pub fn random_problem(
    fam: Family,
    n: usize,
    p: usize,
    m: usize,
    seed: u64,
) -> (Vec<BasisSpec>, ExpandedDesign, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
    let order = 4.min(m - 1);
    let specs = fit_basis_specs(&x, order, m).unwrap();
    let design = ExpandedDesign::expand(&x, &specs).unwrap();
    let y = (0..n)
        .map(|i| {
            let eta = 1.5 * (2.0 * x[(i, 0)]).sin() + x[(i, 1)] * x[(i, 1)] - 0.3;
            match fam {
                Family::Bernoulli => {
                    let pr = 1.0 / (1.0 + (-eta).exp());
                    f64::from(rng.random::<f64>() < pr)
                }
                Family::Gaussian => eta + 0.5 * (rng.random::<f64>() - 0.5),
                Family::Poisson => {
                    // inversion sampling keeps this free of rand_distr
                    let mu = eta.exp();
                    let u: f64 = rng.random();
                    let (mut k, mut pk) = (0.0, (-mu).exp());
                    let mut cdf = pk;
                    while u > cdf && k < 200.0 {
                        k += 1.0;
                        pk *= mu / k;
                        cdf += pk;
                    }
                    k
                }
                Family::Gamma => {
                    let u: f64 = rng.random();
                    -eta.exp() * (1.0 - u).ln()
                }
            }
        })
        .collect();
    (specs, design, y)
}

/// Mean negative log-likelihood and its derivative in `eta`, per unit.
fn unit(fam: Family, eta: f64, y: f64) -> (f64, f64) {
    match fam {
        Family::Bernoulli => {
            let sp = if eta > 0.0 {
                eta + (-eta).exp().ln_1p()
            } else {
                eta.exp().ln_1p()
            };
            let mu = 1.0 / (1.0 + (-eta).exp());
            (sp - y * eta, mu - y)
        }
        Family::Gaussian => (0.5 * (y - eta) * (y - eta) - 0.5 * y * y, eta - y),
        Family::Poisson => (eta.exp() - y * eta, eta.exp() - y),
        Family::Gamma => (y * (-eta).exp() + eta, 1.0 - y * (-eta).exp()),
    }
}

/// `(loss, d loss / d intercept, d loss / d beta)` at `theta = [alpha, beta]`.
pub fn loss_and_grad(fam: Family, x: &DMatrix<f64>, y: &[f64], theta: &[f64]) -> (f64, Vec<f64>) {
    let (n, k) = x.shape();
    let mut grad = vec![0.0; k + 1];
    let mut loss = 0.0;
    for i in 0..n {
        let mut eta = theta[0];
        for c in 0..k {
            eta += x[(i, c)] * theta[c + 1];
        }
        let (l, d) = unit(fam, eta, y[i]);
        loss += l;
        grad[0] += d;
        for c in 0..k {
            grad[c + 1] += d * x[(i, c)];
        }
    }
    let nf = n as f64;
    (loss / nf, grad.into_iter().map(|g| g / nf).collect())
}

pub fn oracle_objective(
    fam: Family,
    x: &DMatrix<f64>,
    y: &[f64],
    blocks: &[std::ops::Range<usize>],
    lambda: f64,
    weights: &[f64],
    theta: &[f64],
) -> f64 {
    let pen: f64 = blocks
        .iter()
        .zip(weights)
        .map(|(b, w)| {
            let s: f64 = theta[b.start + 1..b.end + 1].iter().map(|v| v * v).sum();
            w * s.sqrt()
        })
        .sum();
    loss_and_grad(fam, x, y, theta).0 + lambda * pen
}

fn prox(v: &[f64], blocks: &[std::ops::Range<usize>], thresh: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    for (b, &t) in blocks.iter().zip(thresh) {
        let seg = &mut out[b.start + 1..b.end + 1];
        let nrm = seg.iter().map(|a| a * a).sum::<f64>().sqrt();
        let scale = if nrm <= t { 0.0 } else { 1.0 - t / nrm };
        seg.iter_mut().for_each(|a| *a *= scale);
    }
    out
}

/// Accelerated proximal gradient with backtracking and adaptive restart.
/// Returns `[alpha, beta...]` once successive iterates differ by at most
/// `tol` in sup norm.
pub fn proximal_gradient(
    fam: Family,
    x: &DMatrix<f64>,
    y: &[f64],
    blocks: &[std::ops::Range<usize>],
    lambda: f64,
    weights: &[f64],
    tol: f64,
) -> Vec<f64> {
    let k = x.ncols();
    let ybar = y.iter().sum::<f64>() / y.len() as f64;
    let mut theta = vec![0.0; k + 1];
    theta[0] = match fam {
        Family::Bernoulli => (ybar / (1.0 - ybar)).ln(),
        Family::Poisson | Family::Gamma => ybar.ln(),
        Family::Gaussian => ybar,
    };
    let mut prev = theta.clone();
    let mut t_mom: f64 = 1.0;
    let mut step = 1.0;
    let objective = |th: &[f64]| oracle_objective(fam, x, y, blocks, lambda, weights, th);
    let mut f_prev = objective(&theta);

    for _ in 0..2_000_000 {
        let t_next = (1.0 + (1.0 + 4.0 * t_mom * t_mom).sqrt()) / 2.0;
        let mom = (t_mom - 1.0) / t_next;
        let yk: Vec<f64> = theta
            .iter()
            .zip(&prev)
            .map(|(a, b)| a + mom * (a - b))
            .collect();
        let (ly, gy) = loss_and_grad(fam, x, y, &yk);
        let mut cand;
        loop {
            let v: Vec<f64> = yk.iter().zip(&gy).map(|(a, g)| a - step * g).collect();
            let thresh: Vec<f64> = weights.iter().map(|w| step * lambda * w).collect();
            cand = prox(&v, blocks, &thresh);
            let d: Vec<f64> = cand.iter().zip(&yk).map(|(a, b)| a - b).collect();
            let lin: f64 = gy.iter().zip(&d).map(|(g, e)| g * e).sum();
            let quad: f64 = d.iter().map(|e| e * e).sum::<f64>() / (2.0 * step);
            if loss_and_grad(fam, x, y, &cand).0 <= ly + lin + quad + 1e-15 {
                break;
            }
            step *= 0.5;
        }
        let f_new = objective(&cand);
        let diff = cand
            .iter()
            .zip(&theta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if f_new > f_prev && mom > 0.0 {
            // restart the momentum instead of accepting an uphill move
            t_mom = 1.0;
            prev = theta.clone();
            continue;
        }
        prev = std::mem::replace(&mut theta, cand);
        f_prev = f_new;
        t_mom = t_next;
        step *= 1.1;
        if diff <= tol {
            break;
        }
    }
    theta
}

/// First-difference penalty matrix built from its definition.
pub fn first_difference_gram(m: usize) -> DMatrix<f64> {
    let r = DMatrix::from_fn(m - 1, m, |i, j| {
        if j == i {
            -1.0
        } else if j == i + 1 {
            1.0
        } else {
            0.0
        }
    });
    r.transpose() * r
}

pub fn block_objective(
    b: &[f64],
    z: &[f64],
    gamma: f64,
    lw: f64,
    ls: f64,
    d: &DMatrix<f64>,
) -> f64 {
    let m = b.len();
    let mut fit = 0.0;
    for k in 0..m {
        let r = b[k] - z[k] / gamma;
        fit += r * r;
    }
    let nrm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut quad = 0.0;
    for i in 0..m {
        for j in 0..m {
            quad += b[i] * d[(i, j)] * b[j];
        }
    }
    0.5 * gamma * fit + lw * nrm + ls * quad
}

/// Minimize the smoothed block objective by a dense grid, a compass search
/// and finally Newton steps on the smooth branch.
pub fn block_brute_force(z: &[f64], gamma: f64, lw: f64, ls: f64) -> Vec<f64> {
    let m = z.len();
    let d = first_difference_gram(m);
    let f = |b: &[f64]| block_objective(b, z, gamma, lw, ls, &d);
    let radius = z.iter().map(|v| v * v).sum::<f64>().sqrt() / gamma;
    if radius == 0.0 {
        return vec![0.0; m];
    }

    let steps = 60usize;
    let mut best = vec![0.0; m];
    let mut best_f = f(&best);
    let mut idx = vec![0usize; m];
    loop {
        let b: Vec<f64> = idx
            .iter()
            .map(|&i| -radius + 2.0 * radius * i as f64 / steps as f64)
            .collect();
        let v = f(&b);
        if v < best_f {
            best_f = v;
            best = b;
        }
        let mut c = 0;
        while c < m {
            idx[c] += 1;
            if idx[c] <= steps {
                break;
            }
            idx[c] = 0;
            c += 1;
        }
        if c == m {
            break;
        }
    }

    // coordinate, diagonal and z directions; at the cone point b = 0 only
    // directions near z descend
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for c in 0..m {
        let mut e = vec![0.0; m];
        e[c] = 1.0;
        dirs.push(e);
    }
    for mask in 1..(1usize << m) {
        dirs.push(
            (0..m)
                .map(|c| if mask >> c & 1 == 1 { 1.0 } else { -1.0 })
                .collect(),
        );
    }
    dirs.push(z.iter().map(|v| v / (gamma * radius)).collect());
    let mut h = 2.0 * radius / steps as f64;
    while h > 1e-14 {
        let mut improved = false;
        for dir in &dirs {
            for s in [-1.0, 1.0] {
                let b: Vec<f64> = best.iter().zip(dir).map(|(a, e)| a + s * h * e).collect();
                let v = f(&b);
                if v < best_f {
                    best_f = v;
                    best = b;
                    improved = true;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }

    if best.iter().all(|&v| v == 0.0) {
        return best;
    }
    // the compass search leaves us well inside Newton's basin; steps are kept
    // while they shrink the gradient, which stays meaningful after the
    // objective has stopped resolving differences
    let grad_at = |b: &[f64]| -> Vec<f64> {
        let nrm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let db = &d * nalgebra::DVector::from_column_slice(b);
        (0..m)
            .map(|k| gamma * b[k] - z[k] + lw * b[k] / nrm + 2.0 * ls * db[k])
            .collect()
    };
    let gnorm = |g: &[f64]| g.iter().map(|v| v * v).sum::<f64>().sqrt();
    for _ in 0..100 {
        let nrm = best.iter().map(|v| v * v).sum::<f64>().sqrt();
        let grad = grad_at(&best);
        let hess = DMatrix::from_fn(m, m, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            gamma * id + 2.0 * ls * d[(i, j)] + lw * (id / nrm - best[i] * best[j] / nrm.powi(3))
        });
        let step = hess
            .lu()
            .solve(&nalgebra::DVector::from_column_slice(&grad))
            .expect("block Hessian is positive definite");
        let cand: Vec<f64> = (0..m).map(|k| best[k] - step[k]).collect();
        if gnorm(&grad_at(&cand)) >= gnorm(&grad) {
            break;
        }
        best = cand;
    }
    best
}
