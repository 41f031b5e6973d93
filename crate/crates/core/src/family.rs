//! Exponential-family likelihoods with dispersion fixed at one.
//!
//! Bernoulli, Poisson and Gaussian use their canonical links. Gamma uses the
//! log link, so its working residual and curvature include the chain-rule
//! factor and the solver never needs to know which link is in play.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GamError, Result};

/// Linear predictors are clamped to this range before exponentiation.
pub const ETA_CLAMP: f64 = 30.0;
/// Means are kept this far from the boundary of the mean space.
pub const MU_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Bernoulli,
    Poisson,
    Gamma,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Logit,
    Log,
    Identity,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Bernoulli => "bernoulli",
            Family::Poisson => "poisson",
            Family::Gamma => "gamma",
            Family::Gaussian => "gaussian",
        })
    }
}

impl FromStr for Family {
    type Err = GamError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bernoulli" | "binomial" | "logistic" => Ok(Family::Bernoulli),
            "poisson" => Ok(Family::Poisson),
            "gamma" => Ok(Family::Gamma),
            "gaussian" | "normal" => Ok(Family::Gaussian),
            other => Err(GamError::config(format!("unknown family '{other}'"))),
        }
    }
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Bernoulli,
        Family::Poisson,
        Family::Gamma,
        Family::Gaussian,
    ];

    pub fn link(self) -> Link {
        match self {
            Family::Bernoulli => Link::Logit,
            Family::Poisson | Family::Gamma => Link::Log,
            Family::Gaussian => Link::Identity,
        }
    }

    pub fn dispersion(self) -> f64 {
        1.0
    }

    /// Cumulant `b(theta)` in the natural parameter. For gamma the natural
    /// parameter is `-1/mu` and must be negative.
    pub fn cumulant(self, theta: f64) -> f64 {
        match self {
            Family::Bernoulli => softplus(theta),
            Family::Poisson => theta.exp(),
            Family::Gamma => -(-theta).ln(),
            Family::Gaussian => 0.5 * theta * theta,
        }
    }

    /// `b'(theta)`, the mean.
    pub fn cumulant_d1(self, theta: f64) -> f64 {
        match self {
            Family::Bernoulli => sigmoid(theta),
            Family::Poisson => theta.exp(),
            Family::Gamma => -1.0 / theta,
            Family::Gaussian => theta,
        }
    }

    /// `b''(theta)`, the variance function.
    pub fn cumulant_d2(self, theta: f64) -> f64 {
        match self {
            Family::Bernoulli => {
                let p = sigmoid(theta);
                p * (1.0 - p)
            }
            Family::Poisson => theta.exp(),
            Family::Gamma => 1.0 / (theta * theta),
            Family::Gaussian => 1.0,
        }
    }

    fn clamp(self, eta: f64) -> f64 {
        match self.link() {
            Link::Log => eta.clamp(-ETA_CLAMP, ETA_CLAMP),
            _ => eta,
        }
    }

    /// Inverse link.
    pub fn mean(self, eta: f64) -> f64 {
        match self.link() {
            Link::Logit => sigmoid(eta),
            Link::Log => self.clamp(eta).exp(),
            Link::Identity => eta,
        }
    }

    pub fn link_fn(self, mu: f64) -> f64 {
        match self.link() {
            Link::Logit => {
                let mu = mu.clamp(MU_EPS, 1.0 - MU_EPS);
                (mu / (1.0 - mu)).ln()
            }
            Link::Log => mu.max(MU_EPS).ln(),
            Link::Identity => mu,
        }
    }

    /// Intercept of the intercept-only maximum likelihood fit.
    pub fn null_eta(self, y: &[f64]) -> f64 {
        let ybar = y.iter().sum::<f64>() / y.len() as f64;
        self.link_fn(ybar)
    }

    /// Whether the linear predictor hit the exponentiation clamp.
    pub fn is_clamped(self, eta: f64) -> bool {
        self.link() == Link::Log && eta.abs() > ETA_CLAMP
    }

    /// Check that every response lies in the family's support.
    pub fn validate_response(self, y: &[f64]) -> Result<()> {
        for (row, &v) in y.iter().enumerate() {
            let ok = v.is_finite()
                && match self {
                    Family::Bernoulli => v == 0.0 || v == 1.0,
                    Family::Poisson => v >= 0.0 && v.fract() == 0.0,
                    Family::Gamma => v > 0.0,
                    Family::Gaussian => true,
                };
            if !ok {
                return Err(GamError::Data {
                    row,
                    column: "response".into(),
                    message: format!("{v} is outside the {self} support"),
                });
            }
        }
        Ok(())
    }

    /// Per-observation negative log-likelihood, dropping `c(y)`.
    #[inline]
    pub fn unit_loss(self, eta: f64, y: f64) -> f64 {
        match self {
            Family::Bernoulli => softplus(eta) - y * eta,
            Family::Poisson => {
                let e = self.clamp(eta);
                e.exp() - y * e
            }
            Family::Gamma => {
                let e = self.clamp(eta);
                y * (-e).exp() + e
            }
            Family::Gaussian => 0.5 * eta * eta - y * eta,
        }
    }

    /// `-(1/n) sum_i l_i(eta_i; y_i)`.
    pub fn neg_loglik(self, eta: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(eta.len(), y.len());
        let s: f64 = eta.iter().zip(y).map(|(&e, &v)| self.unit_loss(e, v)).sum();
        s / y.len() as f64
    }

    /// Working residual (minus the derivative of the unit loss in `eta`) and
    /// working weight (its second derivative).
    #[inline]
    pub fn working(self, eta: f64, y: f64) -> (f64, f64) {
        match self {
            Family::Bernoulli => {
                let mu = sigmoid(eta);
                (y - mu, mu * (1.0 - mu))
            }
            Family::Poisson => {
                let mu = self.mean(eta);
                (y - mu, mu)
            }
            Family::Gamma => {
                let ratio = y * (-self.clamp(eta)).exp();
                (ratio - 1.0, ratio)
            }
            Family::Gaussian => (y - eta, 1.0),
        }
    }

    /// Working residual alone.
    #[inline]
    pub fn residual(self, eta: f64, y: f64) -> f64 {
        match self {
            Family::Bernoulli => y - sigmoid(eta),
            Family::Poisson => y - self.clamp(eta).exp(),
            Family::Gamma => y * (-self.clamp(eta)).exp() - 1.0,
            Family::Gaussian => y - eta,
        }
    }

    /// `(unit_loss, working residual)` sharing one exponential.
    #[inline]
    pub fn loss_and_residual(self, eta: f64, y: f64) -> (f64, f64) {
        match self {
            Family::Bernoulli => {
                let e = (-eta.abs()).exp();
                let mu = if eta >= 0.0 {
                    1.0 / (1.0 + e)
                } else {
                    e / (1.0 + e)
                };
                (eta.max(0.0) + e.ln_1p() - y * eta, y - mu)
            }
            Family::Poisson => {
                let c = self.clamp(eta);
                let mu = c.exp();
                (mu - y * c, y - mu)
            }
            Family::Gamma => {
                let c = self.clamp(eta);
                let ratio = y * (-c).exp();
                (ratio + c, ratio - 1.0)
            }
            Family::Gaussian => (0.5 * eta * eta - y * eta, y - eta),
        }
    }

    /// Residual vector whose block gradient is `-Phi_j^T r / n`, and an upper
    /// bound on the working curvature at `eta`.
    pub fn gradient_and_curvature(self, eta: &[f64], y: &[f64]) -> (Vec<f64>, f64) {
        let mut residual = Vec::with_capacity(y.len());
        let mut max_w: f64 = 0.0;
        for (&e, &v) in eta.iter().zip(y) {
            let (r, w) = self.working(e, v);
            residual.push(r);
            max_w = max_w.max(w);
        }
        let bound = match self {
            Family::Bernoulli => 0.25,
            Family::Gaussian => 1.0,
            Family::Poisson | Family::Gamma => max_w.max(1e-8),
        };
        (residual, bound)
    }

    /// Whether `gradient_and_curvature`'s bound holds globally, not just at
    /// the current iterate.
    pub fn has_global_curvature_bound(self) -> bool {
        matches!(self, Family::Bernoulli | Family::Gaussian)
    }

    /// `2 {l(y; y) - l(mu; y)}`.
    pub fn deviance(self, mu_hat: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(mu_hat.len(), y.len());
        let terms = mu_hat.iter().zip(y).map(|(&m, &v)| match self {
            Family::Bernoulli => {
                let m = m.clamp(MU_EPS, 1.0 - MU_EPS);
                -2.0 * (xlogy(v, m) + xlogy(1.0 - v, 1.0 - m))
            }
            Family::Poisson => {
                let m = m.max(MU_EPS);
                2.0 * (xlogy(v, v / m) - (v - m))
            }
            Family::Gamma => {
                let m = m.max(MU_EPS);
                2.0 * (-(v / m).ln() + (v - m) / m)
            }
            Family::Gaussian => (v - m).powi(2),
        });
        terms.sum::<f64>().max(0.0)
    }
}
