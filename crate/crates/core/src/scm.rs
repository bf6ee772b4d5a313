//! Linear structural causal models for anticausal tasks.
//!
//! Regression model (all variables zero-mean, no intercepts):
//!
//! ```text
//! C   = U_C
//! Y   = beta_yc' C + U_Y
//! X_j = beta_xy[j] Y + beta_xc[j, .] C + U_Xj
//! ```
//!
//! with `(U_C, U_Y)` jointly Gaussian and `U_X ~ N(0, sigma2_x * R(rho))`,
//! `R(rho)[i, j] = rho^|i - j|`. The `(U_C, U_Y)` covariance is solved from
//! target second moments of `(C, Y)`, which is how an environment (a selection
//! regime over `P(C, Y)`) is expressed while `P(X | C, Y)` stays fixed.
//!
//! Classification model: each `C_i ~ Bernoulli(1/2)`,
//! `Y ~ Bernoulli(sigmoid(beta_yc' C))`, and `X` as above with 0/1 inputs.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Task};
use crate::error::{Error, Result};
use crate::linalg::pivoted_cholesky;
use crate::selection::CellProbs;

/// Maximum number of parameter draws before giving up on feasibility.
pub const MAX_DRAW_ATTEMPTS: usize = 10_000;

/// Path coefficients and feature-noise structure of a linear anticausal SCM.
///
/// The same structure serves regression (linear `beta_yc`) and
/// classification (`beta_yc` inside the logistic link).
#[derive(Debug, Clone, PartialEq)]
pub struct ScmParams {
    /// Effects Y -> X_j, length p.
    pub beta_xy: Array1<f64>,
    /// Effects C_i -> X_j, shape p x m.
    pub beta_xc: Array2<f64>,
    /// Effects C_i -> Y, length m.
    pub beta_yc: Array1<f64>,
    /// AR(1) correlation of the feature noise.
    pub rho: f64,
    /// Per-feature noise variance.
    pub sigma2_x: f64,
}

pub type RegressionScmParams = ScmParams;
pub type ClassificationScmParams = ScmParams;

impl ScmParams {
    pub fn p(&self) -> usize {
        self.beta_xy.len()
    }

    pub fn m(&self) -> usize {
        self.beta_yc.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (p, m) = (self.p(), self.m());
        if p == 0 || m == 0 {
            return Err(Error::InvalidParameter("need p >= 1 and m >= 1".into()));
        }
        if self.beta_xc.dim() != (p, m) {
            return Err(Error::DimensionMismatch(format!(
                "beta_xc is {:?}, expected ({p}, {m})",
                self.beta_xc.dim()
            )));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!("|rho| must be < 1, got {}", self.rho)));
        }
        if !(self.sigma2_x > 0.0) || !self.sigma2_x.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sigma2_x must be positive, got {}",
                self.sigma2_x
            )));
        }
        let finite = self
            .beta_xy
            .iter()
            .chain(self.beta_xc.iter())
            .chain(self.beta_yc.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("non-finite coefficient".into()));
        }
        Ok(())
    }

    /// Covariance of the feature noise, `sigma2_x * R(rho)`.
    pub fn noise_covariance(&self) -> Result<Array2<f64>> {
        Ok(ar1_covariance(self.rho, self.p())? * self.sigma2_x)
    }
}

/// Flat, serializable form of [`ScmParams`]; `beta_xc` is a list of rows.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScmParamsFile {
    pub beta_xy: Vec<f64>,
    pub beta_xc: Vec<Vec<f64>>,
    pub beta_yc: Vec<f64>,
    pub rho: f64,
    #[serde(default = "default_sigma2")]
    pub sigma2_x: f64,
}

fn default_sigma2() -> f64 {
    1.0
}

impl TryFrom<ScmParamsFile> for ScmParams {
    type Error = Error;

    fn try_from(f: ScmParamsFile) -> Result<Self> {
        let p = f.beta_xy.len();
        let m = f.beta_yc.len();
        if f.beta_xc.len() != p || f.beta_xc.iter().any(|r| r.len() != m) {
            return Err(Error::DimensionMismatch(format!(
                "beta_xc must have {p} rows of {m} entries"
            )));
        }
        let flat: Vec<f64> = f.beta_xc.into_iter().flatten().collect();
        let params = ScmParams {
            beta_xy: Array1::from(f.beta_xy),
            beta_xc: Array2::from_shape_vec((p, m), flat)
                .map_err(|e| Error::DimensionMismatch(e.to_string()))?,
            beta_yc: Array1::from(f.beta_yc),
            rho: f.rho,
            sigma2_x: f.sigma2_x,
        };
        params.validate()?;
        Ok(params)
    }
}

impl From<&ScmParams> for ScmParamsFile {
    fn from(p: &ScmParams) -> Self {
        ScmParamsFile {
            beta_xy: p.beta_xy.to_vec(),
            beta_xc: p.beta_xc.outer_iter().map(|r| r.to_vec()).collect(),
            beta_yc: p.beta_yc.to_vec(),
            rho: p.rho,
            sigma2_x: p.sigma2_x,
        }
    }
}

/// Target joint law of (C, Y) for one environment.
///
/// Regression environments give second moments; with several confounders
/// they are read as `Cov(C) = var_c * I` and `Cov(Y, C_i) = cov_cy` for all i.
/// Classification environments give selection cell probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnvironmentMoments {
    Regression { var_c: f64, cov_cy: f64, var_y: f64 },
    Classification(CellProbs),
}

impl EnvironmentMoments {
    pub fn regression(var_c: f64, cov_cy: f64, var_y: f64) -> Self {
        EnvironmentMoments::Regression { var_c, cov_cy, var_y }
    }

    pub fn task(&self) -> Task {
        match self {
            EnvironmentMoments::Regression { .. } => Task::Regression,
            EnvironmentMoments::Classification(_) => Task::Classification,
        }
    }

    /// Checks that the target (C, Y) covariance is a valid covariance for `m` confounders.
    pub fn validate(&self, m: usize) -> Result<()> {
        match *self {
            EnvironmentMoments::Regression { var_c, cov_cy, var_y } => {
                if !(var_c > 0.0) || !(var_y > 0.0) || !cov_cy.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "need var_c > 0, var_y > 0 and finite cov_cy; got ({var_c}, {cov_cy}, {var_y})"
                    )));
                }
                if (m as f64) * cov_cy * cov_cy > var_c * var_y {
                    return Err(Error::InvalidParameter(format!(
                        "target moments (var_c {var_c}, cov_cy {cov_cy}, var_y {var_y}) \
                         are not a valid covariance for {m} confounder(s)"
                    )));
                }
                Ok(())
            }
            EnvironmentMoments::Classification(probs) => probs.validate(),
        }
    }
}

/// Covariance of the structural errors `(U_C, U_Y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorMoments {
    pub phi_cc: f64,
    pub phi_cy: f64,
    pub phi_yy: f64,
}

impl ErrorMoments {
    pub fn matrix(&self) -> Array2<f64> {
        ndarray::array![[self.phi_cc, self.phi_cy], [self.phi_cy, self.phi_yy]]
    }
}

/// AR(1) correlation matrix, entry `(i, j) = rho^|i - j|`.
pub fn ar1_covariance(rho: f64, p: usize) -> Result<Array2<f64>> {
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!("|rho| must be < 1, got {rho}")));
    }
    if p == 0 {
        return Err(Error::InvalidParameter("p must be at least 1".into()));
    }
    Ok(Array2::from_shape_fn((p, p), |(i, j)| {
        rho.powi((i as i32 - j as i32).abs())
    }))
}

/// Error covariance that makes a single-confounder regression SCM hit the
/// target `Var(C)`, `Cov(Y, C)`, `Var(Y)`.
///
/// Inverts `Var(C) = phi_cc`, `Cov(Y, C) = b phi_cc + phi_cy`,
/// `Var(Y) = b^2 phi_cc + phi_yy + 2 b phi_cy`, i.e. `U_Y = Y - b C`.
pub fn solve_error_moments(var_c: f64, cov_cy: f64, var_y: f64, beta_yc: f64) -> Result<ErrorMoments> {
    if !(var_c > 0.0) || !(var_y > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need var_c > 0 and var_y > 0, got {var_c} and {var_y}"
        )));
    }
    let phi_cc = var_c;
    let phi_cy = cov_cy - beta_yc * var_c;
    let phi_yy = var_y + beta_yc * beta_yc * var_c - 2.0 * beta_yc * cov_cy;
    if !(phi_yy > 0.0) || phi_cc * phi_yy < phi_cy * phi_cy {
        return Err(Error::InfeasibleMoments { phi_cc, phi_cy, phi_yy });
    }
    Ok(ErrorMoments { phi_cc, phi_cy, phi_yy })
}

/// Joint covariance of `(U_C1..U_Cm, U_Y)` for a regression environment.
pub fn error_covariance(env: &EnvironmentMoments, beta_yc: ArrayView1<f64>) -> Result<Array2<f64>> {
    let EnvironmentMoments::Regression { var_c, cov_cy, var_y } = *env else {
        return Err(Error::InvalidParameter(
            "regression simulation needs a moment environment".into(),
        ));
    };
    let m = beta_yc.len();
    if m == 1 {
        return Ok(solve_error_moments(var_c, cov_cy, var_y, beta_yc[0])?.matrix());
    }
    if !(var_c > 0.0) || !(var_y > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need var_c > 0 and var_y > 0, got {var_c} and {var_y}"
        )));
    }
    let sum_b: f64 = beta_yc.sum();
    let sum_b2: f64 = beta_yc.dot(&beta_yc);
    let phi_yy = var_y - 2.0 * cov_cy * sum_b + var_c * sum_b2;
    let mut cov = Array2::zeros((m + 1, m + 1));
    for i in 0..m {
        cov[[i, i]] = var_c;
        let phi_cy = cov_cy - var_c * beta_yc[i];
        cov[[i, m]] = phi_cy;
        cov[[m, i]] = phi_cy;
    }
    cov[[m, m]] = phi_yy;
    if !(phi_yy > 0.0) || pivoted_cholesky(cov.view()).is_err() {
        return Err(Error::InfeasibleMoments {
            phi_cc: var_c,
            phi_cy: cov[[0, m]],
            phi_yy,
        });
    }
    Ok(cov)
}

/// `n` zero-mean Gaussian rows with covariance `cov`.
///
/// Uses a pivoted Cholesky factor so rank-deficient covariances are allowed;
/// components with zero variance come out as exact zeros.
pub fn sample_mvn<R: Rng + ?Sized>(cov: ArrayView2<f64>, n: usize, rng: &mut R) -> Result<Array2<f64>> {
    let f = pivoted_cholesky(cov)?;
    let k = cov.nrows();
    let mut out = Array2::zeros((n, k));
    let mut z = vec![0.0; f.rank];
    for mut row in out.outer_iter_mut() {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for a in 0..k {
            let upto = (a + 1).min(f.rank);
            if upto == 0 {
                continue;
            }
            row[f.perm[a]] = z[..upto].iter().enumerate().fold(0.0, |acc, (b, zb)| acc + f.factor[[a, b]] * zb);
        }
    }
    Ok(out)
}

fn assemble_features<R: Rng + ?Sized>(
    params: &ScmParams,
    c: &Array2<f64>,
    y: &Array1<f64>,
    rng: &mut R,
) -> Result<Array2<f64>> {
    let n = y.len();
    let noise = sample_mvn(params.noise_covariance()?.view(), n, rng)?;
    let signal = y
        .view()
        .insert_axis(Axis(1))
        .dot(&params.beta_xy.view().insert_axis(Axis(0)));
    Ok(signal + c.dot(&params.beta_xc.t()) + noise)
}

/// Draw `n` rows from the regression SCM under one environment.
pub fn simulate_regression<R: Rng + ?Sized>(
    params: &ScmParams,
    env: &EnvironmentMoments,
    n: usize,
    rng: &mut R,
) -> Result<Dataset> {
    params.validate()?;
    let m = params.m();
    let errors = sample_mvn(error_covariance(env, params.beta_yc.view())?.view(), n, rng)?;
    let c = errors.slice(ndarray::s![.., ..m]).to_owned();
    let y = c.dot(&params.beta_yc) + errors.column(m);
    let x = assemble_features(params, &c, &y, rng)?;
    Dataset::new(x, c, y, Task::Regression)
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Draw a large unselected population from the classification SCM.
pub fn simulate_classification_population<R: Rng + ?Sized>(
    params: &ScmParams,
    n: usize,
    rng: &mut R,
) -> Result<Dataset> {
    params.validate()?;
    if n == 0 {
        return Err(Error::InvalidParameter("population size must be at least 1".into()));
    }
    let m = params.m();
    let c = Array2::from_shape_simple_fn((n, m), || if rng.random_bool(0.5) { 1.0 } else { 0.0 });
    let logits = c.dot(&params.beta_yc);
    let y = logits.mapv(|t| if rng.random::<f64>() < sigmoid(t) { 1.0 } else { 0.0 });
    let x = assemble_features(params, &c, &y, rng)?;
    Dataset::new(x, c, y, Task::Classification)
}

/// Draw SCM parameters: every coefficient from U(-1, 1), `rho` from U(-0.5, 0.5).
///
/// Draw order per attempt: `beta_xy` (p), `beta_xc` (row-major p x m),
/// `beta_yc` (m), `rho`. For regression, attempts are rejected until the
/// error covariance is feasible for every regression environment in
/// `env_targets`, so one draw serves the training set and all test sets.
pub fn draw_params<R: Rng + ?Sized>(
    task: Task,
    p: usize,
    m: usize,
    env_targets: &[EnvironmentMoments],
    rng: &mut R,
) -> Result<ScmParams> {
    if p == 0 || m == 0 {
        return Err(Error::InvalidParameter("need p >= 1 and m >= 1".into()));
    }
    // Targets that are not a covariance can never be met; fail before sampling.
    for env in env_targets {
        env.validate(m)?;
    }
    for _ in 0..MAX_DRAW_ATTEMPTS {
        let beta_xy = Array1::from_shape_simple_fn(p, || rng.random_range(-1.0..1.0));
        let beta_xc = Array2::from_shape_simple_fn((p, m), || rng.random_range(-1.0..1.0));
        let beta_yc = Array1::from_shape_simple_fn(m, || rng.random_range(-1.0..1.0));
        let rho = rng.random_range(-0.5..0.5);
        let params = ScmParams { beta_xy, beta_xc, beta_yc, rho, sigma2_x: 1.0 };
        let feasible = task == Task::Classification
            || env_targets
                .iter()
                .filter(|e| e.task() == Task::Regression)
                .all(|e| error_covariance(e, params.beta_yc.view()).is_ok());
        if feasible {
            return Ok(params);
        }
    }
    Err(Error::InfeasibleConfiguration { attempts: MAX_DRAW_ATTEMPTS })
}
