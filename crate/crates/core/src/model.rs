//! Baseline propensity to cycle: a grouped-binomial logistic model of cycling
//! share against route distance and hilliness.
//!
//! The linear predictor uses seven terms, in this order:
//!
//! | term            | feature    |
//! |-----------------|------------|
//! | `alpha`         | 1          |
//! | `beta_d`        | d          |
//! | `beta_sqrt_d`   | √d         |
//! | `beta_d2`       | d²         |
//! | `gamma_h`       | h          |
//! | `gamma_dh`      | d·h        |
//! | `gamma_sqrtdh`  | √d·h       |
//!
//! with `d` the fast-route distance in km and `h` the mean gradient in percent.
//! Fitting is maximum likelihood by iteratively reweighted least squares on
//! grouped (trials, successes) observations, which has the same likelihood as
//! one Bernoulli row per commuter.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const N_TERMS: usize = 7;

pub const TERM_NAMES: [&str; N_TERMS] = [
    "alpha",
    "beta_d",
    "beta_sqrt_d",
    "beta_d2",
    "gamma_h",
    "gamma_dh",
    "gamma_sqrtdh",
];

/// Trips at or beyond this distance are left out of fitting.
pub const MAX_TRAINING_DISTANCE_KM: f64 = 30.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("distance must be positive and finite, got {0} km")]
    NonPositiveDistance(f64),
    #[error("hilliness must be non-negative and finite, got {0}%")]
    NegativeHilliness(f64),
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("perfect separation: {0}")]
    PerfectSeparation(String),
    #[error("singular system: term `{0}` is not identifiable from the data")]
    Singular(&'static str),
    #[error("no convergence after {iterations} iterations (last max coefficient change {last_change:e})")]
    NonConvergence { iterations: usize, last_change: f64 },
    #[error("unknown model term `{0}`")]
    UnknownTerm(String),
    #[error("coefficient file: {0}")]
    File(String),
}

/// Logit-scale coefficients of the baseline model. Missing keys in a
/// coefficient file read as zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelCoefficients {
    pub alpha: f64,
    pub beta_d: f64,
    pub beta_sqrt_d: f64,
    pub beta_d2: f64,
    pub gamma_h: f64,
    pub gamma_dh: f64,
    pub gamma_sqrtdh: f64,
}

impl ModelCoefficients {
    pub fn to_array(&self) -> [f64; N_TERMS] {
        [
            self.alpha,
            self.beta_d,
            self.beta_sqrt_d,
            self.beta_d2,
            self.gamma_h,
            self.gamma_dh,
            self.gamma_sqrtdh,
        ]
    }

    pub fn from_array(v: [f64; N_TERMS]) -> Self {
        Self {
            alpha: v[0],
            beta_d: v[1],
            beta_sqrt_d: v[2],
            beta_d2: v[3],
            gamma_h: v[4],
            gamma_dh: v[5],
            gamma_sqrtdh: v[6],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }

    pub fn linear_predictor(&self, d_km: f64, h_pct: f64) -> Result<f64, ModelError> {
        let x = design_row(d_km, h_pct)?;
        Ok(dot(&self.to_array(), &x))
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ModelError> {
        let c: Self = toml::from_str(text).map_err(|e| ModelError::File(e.to_string()))?;
        if !c.is_finite() {
            return Err(ModelError::File("non-finite coefficient".into()));
        }
        Ok(c)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("plain struct of floats serializes")
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::File(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}

fn dot(a: &[f64; N_TERMS], b: &[f64; N_TERMS]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Feature vector `(1, d, √d, d², h, d·h, √d·h)`.
pub fn design_row(d_km: f64, h_pct: f64) -> Result<[f64; N_TERMS], ModelError> {
    if !(d_km > 0.0) || !d_km.is_finite() {
        return Err(ModelError::NonPositiveDistance(d_km));
    }
    if !(h_pct >= 0.0) || !h_pct.is_finite() {
        return Err(ModelError::NegativeHilliness(h_pct));
    }
    let sqrt_d = d_km.sqrt();
    Ok([
        1.0,
        d_km,
        sqrt_d,
        d_km * d_km,
        h_pct,
        d_km * h_pct,
        sqrt_d * h_pct,
    ])
}

/// Largest f64 strictly below one.
const ONE_BELOW: f64 = 1.0 - f64::EPSILON / 2.0;

/// Numerically stable logistic function, kept inside the open interval (0, 1).
pub fn logistic(x: f64) -> f64 {
    let p = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, ONE_BELOW)
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// log(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn predict_pcycle(coeffs: &ModelCoefficients, d_km: f64, h_pct: f64) -> Result<f64, ModelError> {
    Ok(logistic(coeffs.linear_predictor(d_km, h_pct)?))
}

/// Model predictions tabulated over an ascending distance grid at fixed hilliness.
pub fn decay_curve(
    coeffs: &ModelCoefficients,
    h_pct: f64,
    d_grid: &[f64],
) -> Result<Vec<(f64, f64)>, ModelError> {
    if let Some(w) = d_grid.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(ModelError::InvalidObservation(format!(
            "distance grid not strictly ascending at {} -> {}",
            w[0], w[1]
        )));
    }
    d_grid
        .iter()
        .map(|&d| Ok((d, predict_pcycle(coeffs, d, h_pct)?)))
        .collect()
}

/// One OD flow as a binomial observation: `n_cycle` of `n_all` commuters cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingObservation {
    pub d_km: f64,
    pub h_pct: f64,
    pub n_all: u64,
    pub n_cycle: u64,
}

impl TrainingObservation {
    pub fn new(d_km: f64, h_pct: f64, n_all: u64, n_cycle: u64) -> Result<Self, ModelError> {
        design_row(d_km, h_pct)?;
        if n_cycle > n_all {
            return Err(ModelError::InvalidObservation(format!(
                "{n_cycle} cyclists out of {n_all} commuters"
            )));
        }
        Ok(Self {
            d_km,
            h_pct,
            n_all,
            n_cycle,
        })
    }
}

/// Grouped-binomial log-likelihood, omitting the constant binomial coefficient.
pub fn log_likelihood(coeffs: &ModelCoefficients, obs: &[TrainingObservation]) -> Result<f64, ModelError> {
    let beta = coeffs.to_array();
    let mut ll = 0.0;
    for o in obs {
        let eta = dot(&beta, &design_row(o.d_km, o.h_pct)?);
        ll += o.n_cycle as f64 * eta - o.n_all as f64 * softplus(eta);
    }
    Ok(ll)
}

/// Analytic gradient of [`log_likelihood`]: Σ x·(y − n·p).
pub fn score(coeffs: &ModelCoefficients, obs: &[TrainingObservation]) -> Result<[f64; N_TERMS], ModelError> {
    let beta = coeffs.to_array();
    let mut g = [0.0; N_TERMS];
    for o in obs {
        let x = design_row(o.d_km, o.h_pct)?;
        let resid = o.n_cycle as f64 - o.n_all as f64 * logistic(dot(&beta, &x));
        for (gj, xj) in g.iter_mut().zip(x) {
            *gj += xj * resid;
        }
    }
    Ok(g)
}

/// Which terms take part in a fit. Excluded terms are held at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TermMask(pub [bool; N_TERMS]);

impl Default for TermMask {
    fn default() -> Self {
        Self([true; N_TERMS])
    }
}

impl TermMask {
    pub fn excluding<S: AsRef<str>>(names: &[S]) -> Result<Self, ModelError> {
        let mut mask = Self::default();
        for name in names {
            let i = TERM_NAMES
                .iter()
                .position(|t| *t == name.as_ref())
                .ok_or_else(|| ModelError::UnknownTerm(name.as_ref().to_string()))?;
            mask.0[i] = false;
        }
        Ok(mask)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Stop once the largest absolute coefficient change falls below this.
    pub tolerance: f64,
    pub mask: TermMask,
    pub max_distance_km: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-8,
            mask: TermMask::default(),
            max_distance_km: MAX_TRAINING_DISTANCE_KM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub coefficients: ModelCoefficients,
    pub iterations: usize,
    pub log_likelihood: f64,
    pub n_observations: usize,
    pub n_trials: u64,
    pub n_cyclists: u64,
    /// Terms whose feature column was identically zero and so were fixed at 0.
    pub dropped_terms: Vec<String>,
}

/// Maximum-likelihood fit by IRLS with step halving.
pub fn fit_logistic(obs: &[TrainingObservation], options: &FitOptions) -> Result<FitReport, ModelError> {
    let used: Vec<&TrainingObservation> = obs
        .iter()
        .filter(|o| o.d_km < options.max_distance_km && o.n_all > 0)
        .collect();
    if used.len() < 2 {
        return Err(ModelError::InsufficientData(format!(
            "{} usable observations (need at least 2)",
            used.len()
        )));
    }
    if used.iter().all(|o| o.d_km == used[0].d_km) {
        return Err(ModelError::InsufficientData("no variation in distance".into()));
    }
    let n_trials: u64 = used.iter().map(|o| o.n_all).sum();
    let n_cyclists: u64 = used.iter().map(|o| o.n_cycle).sum();
    if n_cyclists == 0 || n_cyclists == n_trials {
        return Err(ModelError::PerfectSeparation(format!(
            "{n_cyclists} of {n_trials} commuters cycle; the intercept diverges"
        )));
    }

    let rows: Vec<[f64; N_TERMS]> = used
        .iter()
        .map(|o| design_row(o.d_km, o.h_pct))
        .collect::<Result<_, _>>()?;

    // Active columns: masked in and not identically zero. Each is scaled by its
    // largest magnitude to keep the least-squares problem well conditioned.
    let mut active = Vec::new();
    let mut scale = Vec::new();
    let mut dropped_terms = Vec::new();
    for j in 0..N_TERMS {
        if !options.mask.0[j] {
            continue;
        }
        let m = rows.iter().map(|r| r[j].abs()).fold(0.0, f64::max);
        if m == 0.0 {
            dropped_terms.push(TERM_NAMES[j].to_string());
        } else {
            active.push(j);
            scale.push(m);
        }
    }
    if active.is_empty() {
        return Err(ModelError::InsufficientData("no active model terms".into()));
    }
    let n = rows.len();
    let k = active.len();
    let x = DMatrix::from_fn(n, k, |i, c| rows[i][active[c]] / scale[c]);
    let trials = DVector::from_iterator(n, used.iter().map(|o| o.n_all as f64));
    let successes = DVector::from_iterator(n, used.iter().map(|o| o.n_cycle as f64));

    let loglik = |beta: &DVector<f64>| -> f64 {
        let eta = &x * beta;
        (0..n)
            .map(|i| successes[i] * eta[i] - trials[i] * softplus(eta[i]))
            .sum()
    };

    let mut beta = DVector::zeros(k);
    if let Some(c) = active.iter().position(|&j| j == 0) {
        let ybar = n_cyclists as f64 / n_trials as f64;
        beta[c] = logit(ybar) * scale[c];
    }
    let mut ll = loglik(&beta);
    let mut last_change = f64::INFINITY;

    for iteration in 1..=options.max_iterations {
        let eta = &x * &beta;
        let mut a = x.clone();
        let mut b = DVector::zeros(n);
        for i in 0..n {
            let p = logistic(eta[i]);
            let w = trials[i] * p * (1.0 - p);
            let sw = w.sqrt();
            a.row_mut(i).scale_mut(sw);
            b[i] = (successes[i] - trials[i] * p) / sw;
        }
        let step = solve_least_squares(a, b).map_err(|c| ModelError::Singular(TERM_NAMES[active[c]]))?;

        // Step halving guards against overshoot far from the optimum.
        let mut t = 1.0;
        let mut candidate = &beta + &step;
        let mut ll_new = loglik(&candidate);
        let mut halvings = 0;
        while !(ll_new >= ll - 1e-12 * ll.abs()) && halvings < 40 {
            t *= 0.5;
            candidate = &beta + &step * t;
            ll_new = loglik(&candidate);
            halvings += 1;
        }
        last_change = (0..k)
            .map(|c| (candidate[c] - beta[c]).abs() / scale[c])
            .fold(0.0, f64::max);
        beta = candidate;
        ll = ll_new;
        if !last_change.is_finite() {
            break;
        }
        if last_change < options.tolerance {
            let mut coef = [0.0; N_TERMS];
            for (c, &j) in active.iter().enumerate() {
                coef[j] = beta[c] / scale[c];
            }
            return Ok(FitReport {
                coefficients: ModelCoefficients::from_array(coef),
                iterations: iteration,
                log_likelihood: ll,
                n_observations: n,
                n_trials,
                n_cyclists,
                dropped_terms,
            });
        }
    }

    let eta = &x * &beta;
    let max_eta = eta.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    if max_eta > 30.0 {
        return Err(ModelError::PerfectSeparation(format!(
            "linear predictor reached |{max_eta:.1}|; fitted probabilities are driven to 0 or 1"
        )));
    }
    Err(ModelError::NonConvergence {
        iterations: options.max_iterations,
        last_change,
    })
}

/// Solves min ||A·x − b|| by Householder QR. On rank deficiency returns the
/// index of the first column found dependent on the others.
fn solve_least_squares(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>, usize> {
    let k = a.ncols();
    if a.nrows() < k {
        return Err(a.nrows());
    }
    let qr = a.qr();
    let r = qr.r();
    let max_diag = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if let Some(c) = (0..k).find(|&i| !(r[(i, i)].abs() > 1e-11 * max_diag)) {
        return Err(c);
    }
    let qtb = qr.q().transpose() * b;
    r.solve_upper_triangular(&qtb).ok_or(0)
}
