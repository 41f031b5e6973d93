//! Simulation harness: additive data-generating processes, selection and
//! prediction metrics, replicated runs, and a restricted-eigenvalue probe.

use std::collections::BTreeSet;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Gamma, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::ExpandedDesign;
use crate::error::{GamError, Result};
use crate::family::Family;
use crate::two_step::{fit_model, ModelConfig};

/// Reading of the quartic's printed coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuarticCoefs {
    /// 9.33 and 8.33 as printed.
    Printed,
    /// 28/3 and 25/3.
    Thirds,
}

/// Reading of the fifth function, whose printed parentheses are unbalanced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SineLogReading {
    /// `4 sin(-5 log(sqrt(x + 3)))`
    SqrtOfShifted,
    /// `4 sin(-5 log(sqrt(x) + 3))`
    ShiftedSqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueFunctions {
    pub scale: f64,
    pub quartic: QuarticCoefs,
    pub sine_log: SineLogReading,
}

impl TrueFunctions {
    pub fn new(scale: f64) -> Self {
        TrueFunctions {
            scale,
            quartic: QuarticCoefs::Printed,
            sine_log: SineLogReading::SqrtOfShifted,
        }
    }

    /// Value of the `j`-th (0-based) true function at `x`.
    pub fn eval(&self, j: usize, x: f64) -> f64 {
        let (c3, c1) = match self.quartic {
            QuarticCoefs::Printed => (9.33, 8.33),
            QuarticCoefs::Thirds => (28.0 / 3.0, 25.0 / 3.0),
        };
        let f = match j {
            0 => 5.0 * (3.0 * x).sin(),
            1 => -4.0 * x.powi(4) + c3 * x.powi(3) + 5.0 * x * x - c1 * x,
            2 => x * (1.0 - x * x) * (3.0 * x).exp() - 4.0,
            3 => 4.0 * x,
            4 => match self.sine_log {
                SineLogReading::SqrtOfShifted => 4.0 * (-5.0 * (x + 3.0).sqrt().ln()).sin(),
                // sqrt is undefined below zero; the reading is only sensible on x >= 0
                SineLogReading::ShiftedSqrt => 4.0 * (-5.0 * (x.max(0.0).sqrt() + 3.0).ln()).sin(),
            },
            _ => 0.0,
        };
        self.scale * f
    }
}

/// The five scaled true functions as callables.
pub fn true_functions(signal_scale: f64) -> Vec<Box<dyn Fn(f64) -> f64 + Send + Sync>> {
    let tf = TrueFunctions::new(signal_scale);
    (0..5)
        .map(|j| Box::new(move |x| tf.eval(j, x)) as Box<dyn Fn(f64) -> f64 + Send + Sync>)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub name: String,
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub family: Family,
    pub correlation_t: f64,
    pub functions: TrueFunctions,
    pub intercept: f64,
    pub n_test: usize,
    pub seed: u64,
    pub model: ModelConfig,
}

impl SimScenario {
    pub fn new(
        name: &str,
        n: usize,
        p: usize,
        s: usize,
        family: Family,
        t: f64,
        scale: f64,
    ) -> Self {
        SimScenario {
            name: name.to_string(),
            n,
            p,
            s,
            family,
            correlation_t: t,
            functions: TrueFunctions::new(scale),
            intercept: 0.0,
            n_test: 1000,
            seed: 0,
            model: ModelConfig::default(),
        }
    }

    pub const NAMES: [&'static str; 9] = [
        "ex1-case1",
        "ex1-case2",
        "ex1-case3",
        "ex2-cor03",
        "ex2-cor07",
        "ex3",
        "ex4-poisson",
        "ex4-gamma",
        "easy",
    ];

    /// Scenarios of the logistic, correlated, low-signal and log-link
    /// benchmarks, plus an easy large-n regime.
    pub fn named(name: &str) -> Result<Self> {
        use Family::*;
        let s = match name {
            "ex1-case1" => Self::new(name, 100, 200, 3, Bernoulli, 0.0, 1.0),
            "ex1-case2" => Self::new(name, 200, 500, 4, Bernoulli, 0.0, 1.0),
            "ex1-case3" => Self::new(name, 300, 3000, 5, Bernoulli, 0.0, 1.0),
            "ex2-cor03" => Self::new(name, 100, 200, 3, Bernoulli, (3.0f64 / 7.0).sqrt(), 1.0),
            "ex2-cor07" => Self::new(name, 100, 200, 3, Bernoulli, (7.0f64 / 3.0).sqrt(), 1.0),
            "ex3" => Self::new(name, 100, 200, 3, Bernoulli, 0.0, 0.5),
            "ex4-poisson" => Self::new(name, 100, 200, 3, Poisson, 0.0, 0.25),
            "ex4-gamma" => Self::new(name, 100, 200, 3, Gamma, 0.0, 0.25),
            "easy" => Self::new(name, 400, 20, 3, Bernoulli, 0.0, 2.0),
            other => {
                return Err(GamError::config(format!(
                    "unknown scenario '{other}' (known: {})",
                    Self::NAMES.join(", ")
                )))
            }
        };
        Ok(s)
    }

    /// Parse `n,p,s,family,t,scale`.
    pub fn custom(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
        if parts.len() != 6 {
            return Err(GamError::config(format!(
                "custom scenario needs n,p,s,family,t,scale; got '{spec}'"
            )));
        }
        fn num<T: FromStr>(v: &str, what: &str) -> Result<T> {
            v.parse()
                .map_err(|_| GamError::config(format!("invalid {what} '{v}'")))
        }
        let scn = Self::new(
            "custom",
            num(parts[0], "n")?,
            num(parts[1], "p")?,
            num(parts[2], "s")?,
            parts[3].parse()?,
            num(parts[4], "t")?,
            num(parts[5], "scale")?,
        );
        scn.validate()?;
        Ok(scn)
    }

    pub fn validate(&self) -> Result<()> {
        if self.s > 5 || self.s > self.p {
            return Err(GamError::config(format!(
                "s = {} must be at most 5 and at most p = {}",
                self.s, self.p
            )));
        }
        if !(self.correlation_t >= 0.0) || !(self.functions.scale > 0.0) {
            return Err(GamError::config("t must be >= 0 and the signal scale > 0"));
        }
        if self.n < 2 || self.p < 2 {
            return Err(GamError::config("need n >= 2 and p >= 2"));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone)]
pub struct SimData {
    pub x_train: DMatrix<f64>,
    pub y_train: Vec<f64>,
    pub x_test: DMatrix<f64>,
    pub y_test: Vec<f64>,
    pub true_support: BTreeSet<usize>,
}

fn draw_design(rng: &mut ChaCha8Rng, n: usize, p: usize, t: f64) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            x[(i, j)] = rng.random_range(-1.0..1.0);
        }
    }
    if t > 0.0 {
        let scale = (1.0 + t * t).sqrt();
        for i in 0..n {
            let u: f64 = rng.random_range(-1.0..1.0);
            for j in 0..p {
                x[(i, j)] = (x[(i, j)] + t * u) / scale;
            }
        }
    }
    x
}

fn draw_response(rng: &mut ChaCha8Rng, scn: &SimScenario, x: &DMatrix<f64>) -> Vec<f64> {
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    (0..x.nrows())
        .map(|i| {
            let eta = scn.intercept
                + (0..scn.s)
                    .map(|j| scn.functions.eval(j, x[(i, j)]))
                    .sum::<f64>();
            let mu = scn.family.mean(eta);
            match scn.family {
                Family::Bernoulli => {
                    let d = Bernoulli::new(mu).expect("probability in [0, 1]");
                    if d.sample(rng) {
                        1.0
                    } else {
                        0.0
                    }
                }
                Family::Poisson => Poisson::new(mu).expect("positive rate").sample(rng),
                Family::Gamma => Gamma::new(1.0, mu).expect("positive scale").sample(rng),
                Family::Gaussian => mu + noise.sample(rng),
            }
        })
        .collect()
}

/// Draw training and test sets; identical seeds give identical data.
pub fn generate(scn: &SimScenario) -> Result<SimData> {
    scn.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scn.seed);
    let x_train = draw_design(&mut rng, scn.n, scn.p, scn.correlation_t);
    let y_train = draw_response(&mut rng, scn, &x_train);
    let x_test = draw_design(&mut rng, scn.n_test, scn.p, scn.correlation_t);
    let y_test = draw_response(&mut rng, scn, &x_test);
    Ok(SimData {
        x_train,
        y_train,
        x_test,
        y_test,
        true_support: (0..scn.s).collect(),
    })
}

/// Metrics of a single replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepMetrics {
    pub nv: f64,
    pub tpr: f64,
    pub fpr: f64,
    /// Misclassification rate (bernoulli) or mean squared error.
    pub pe: f64,
    /// Test deviance per observation.
    pub deviance: f64,
}

pub fn metrics(
    selected: &BTreeSet<usize>,
    true_support: &BTreeSet<usize>,
    p: usize,
    y_test: &[f64],
    mean_hat: &[f64],
    fam: Family,
) -> RepMetrics {
    let hits = selected.intersection(true_support).count() as f64;
    let false_hits = selected.difference(true_support).count() as f64;
    let n_true = true_support.len();
    let n_null = p.saturating_sub(n_true);
    let ratio = |a: f64, b: usize| if b == 0 { 0.0 } else { a / b as f64 };
    let n = y_test.len().max(1) as f64;
    let pe = match fam {
        Family::Bernoulli => {
            y_test
                .iter()
                .zip(mean_hat)
                .filter(|(&y, &m)| (m > 0.5) != (y == 1.0))
                .count() as f64
                / n
        }
        _ => {
            y_test
                .iter()
                .zip(mean_hat)
                .map(|(y, m)| (y - m).powi(2))
                .sum::<f64>()
                / n
        }
    };
    RepMetrics {
        nv: selected.len() as f64,
        tpr: ratio(hits, n_true),
        fpr: ratio(false_hits, n_null),
        pe,
        deviance: fam.deviance(mean_hat, y_test) / n,
    }
}

/// Mean, unbiased standard deviation and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let k = values.len();
        if k == 0 {
            return Summary {
                mean: f64::NAN,
                sd: f64::NAN,
                se: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / k as f64;
        let sd = if k > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt()
        } else {
            0.0
        };
        Summary {
            mean,
            sd,
            se: sd / (k as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub nv: Summary,
    pub tpr: Summary,
    pub fpr: Summary,
    pub pe: Summary,
    pub deviance: Summary,
}

impl MetricRow {
    pub fn aggregate(reps: &[RepMetrics]) -> MetricRow {
        let col = |f: fn(&RepMetrics) -> f64| Summary::of(&reps.iter().map(f).collect::<Vec<_>>());
        MetricRow {
            nv: col(|r| r.nv),
            tpr: col(|r| r.tpr),
            fpr: col(|r| r.fpr),
            pe: col(|r| r.pe),
            deviance: col(|r| r.deviance),
        }
    }
}

/// Everything recorded about one replication.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepOutcome {
    pub seed: u64,
    pub metrics: RepMetrics,
    pub selected: BTreeSet<usize>,
    pub screened: BTreeSet<usize>,
    pub max_kkt: f64,
    pub max_ascent: f64,
    pub nonconverged_fits: usize,
    pub total_fits: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableResult {
    pub scenario: SimScenario,
    pub reps: Vec<RepOutcome>,
    pub row: MetricRow,
}

/// Run one replication of the full pipeline with the scenario's seed.
pub fn run_replication(scn: &SimScenario) -> Result<RepOutcome> {
    let data = generate(scn)?;
    let (model, result) = fit_model(&data.x_train, &data.y_train, scn.family, &scn.model)?;
    let (_, mean_hat) = model.predict(&data.x_test)?;
    let selected: BTreeSet<usize> = model.coef.support().into_iter().collect();
    let metrics = metrics(
        &selected,
        &data.true_support,
        scn.p,
        &data.y_test,
        &mean_hat,
        scn.family,
    );
    Ok(RepOutcome {
        seed: scn.seed,
        metrics,
        selected,
        screened: result.screening.coef.support().into_iter().collect(),
        max_kkt: result.diagnostics.max_kkt,
        max_ascent: result.diagnostics.max_ascent,
        nonconverged_fits: result.diagnostics.nonconverged_fits,
        total_fits: result.diagnostics.total_fits,
    })
}

/// Replicate the scenario with seeds `seed, seed + 1, ...`. Replications run
/// in parallel on the current rayon pool; results keep replication order.
pub fn run_table(scn: &SimScenario, reps: usize) -> Result<TableResult> {
    if reps < 2 {
        return Err(GamError::config("at least two replications are required"));
    }
    scn.validate()?;
    let outcomes: Vec<RepOutcome> = (0..reps as u64)
        .into_par_iter()
        .map(|r| run_replication(&scn.clone().with_seed(scn.seed.wrapping_add(r))))
        .collect::<Result<_>>()?;
    let row = MetricRow::aggregate(&outcomes.iter().map(|o| o.metrics).collect::<Vec<_>>());
    Ok(TableResult {
        scenario: scn.clone(),
        reps: outcomes,
        row,
    })
}

/// Extreme eigenvalues of `Phi_A^T Phi_A / n` over random supports `A` of
/// `max_support` blocks.
pub fn re_probe(
    design: &ExpandedDesign,
    max_support: usize,
    trials: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if max_support == 0 || max_support > design.p || trials == 0 {
        return Err(GamError::config(
            "need 1 <= max_support <= p and trials >= 1",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..trials {
        let mut groups = sample(&mut rng, design.p, max_support).into_vec();
        groups.sort_unstable();
        let cols: Vec<usize> = groups
            .iter()
            .flat_map(|&j| design.blocks[j].clone())
            .collect();
        if cols.len() > design.n {
            return Err(GamError::config("support exceeds the sample size"));
        }
        let sub = design.matrix.select_columns(&cols);
        let gram = sub.tr_mul(&sub) / design.n as f64;
        for &ev in SymmetricEigen::new(gram).eigenvalues.iter() {
            lo = lo.min(ev);
            hi = hi.max(ev);
        }
    }
    Ok((lo, hi))
}
