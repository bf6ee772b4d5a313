//! Performance metrics, stability summaries and the closed-form expected MSE
//! of a fixed linear predictor under shifted test moments.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::models::LinearWeights;
use crate::scm::{EnvironmentMoments, ScmParams};

pub fn mse(y_true: ArrayView1<f64>, y_pred: ArrayView1<f64>) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} targets vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::UndefinedMetric("mse of an empty sample".into()));
    }
    let sse: f64 = y_true.iter().zip(y_pred).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sse / y_true.len() as f64)
}

/// Area under the ROC curve as the Mann-Whitney statistic, ties counted 1/2.
pub fn auroc(labels: ArrayView1<f64>, scores: ArrayView1<f64>) -> Result<f64> {
    let n = labels.len();
    if scores.len() != n {
        return Err(Error::DimensionMismatch(format!("{n} labels vs {} scores", scores.len())));
    }
    if !labels.iter().all(|&v| v == 0.0 || v == 1.0) {
        return Err(Error::NotBinary("label"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::UndefinedMetric("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&v| v == 1.0).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("auroc needs both classes".into()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j share their average
        let avg = (i + 1 + j) as f64 / 2.0;
        rank_sum_pos += avg * order[i..j].iter().filter(|&&k| labels[k] == 1.0).count() as f64;
        i = j;
    }
    let n_pos_f = n_pos as f64;
    let u = rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0;
    Ok(u / (n_pos_f * n_neg as f64))
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
///
/// Values are summed in sorted order so the result does not depend on the
/// input order.
pub fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let mut dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    dev.sort_by(f64::total_cmp);
    (dev.iter().sum::<f64>() / (n - 1.0)).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub per_env_mean: Array1<f64>,
    pub per_env_sd: Array1<f64>,
    /// Standard deviation across environments, one per replication.
    pub per_rep_sd: Array1<f64>,
    /// Mean of `per_rep_sd`.
    pub stability_error: f64,
}

/// Summarize a `replications x environments` table of metric values.
pub fn stability_error(metric_values: ArrayView2<f64>) -> Result<StabilityReport> {
    let (reps, envs) = metric_values.dim();
    if envs < 2 {
        return Err(Error::InvalidParameter(format!(
            "stability needs at least 2 environments, got {envs}"
        )));
    }
    if reps == 0 {
        return Err(Error::InvalidParameter("no replications".into()));
    }
    let per_rep_sd: Array1<f64> = metric_values
        .axis_iter(Axis(0))
        .map(|row| sample_sd(&row.to_vec()))
        .collect();
    let per_env_mean = metric_values.mean_axis(Axis(0)).expect("reps > 0");
    let per_env_sd = metric_values
        .axis_iter(Axis(1))
        .map(|col| sample_sd(&col.to_vec()))
        .collect();
    let stability_error = per_rep_sd.mean().expect("reps > 0");
    Ok(StabilityReport { per_env_mean, per_env_sd, per_rep_sd, stability_error })
}

/// Second moments of (C, Y) in a test environment.
#[derive(Debug, Clone, PartialEq)]
pub struct TestMoments {
    pub var_y: f64,
    pub var_c: Array1<f64>,
    pub cov_cc: Array2<f64>,
    pub cov_yc: Array1<f64>,
}

impl TestMoments {
    /// Moments of a regression environment with `m` confounders.
    pub fn from_env(env: &EnvironmentMoments, m: usize) -> Result<Self> {
        match *env {
            EnvironmentMoments::Regression { var_c, cov_cy, var_y } => Ok(TestMoments {
                var_y,
                var_c: Array1::from_elem(m, var_c),
                cov_cc: Array2::eye(m) * var_c,
                cov_yc: Array1::from_elem(m, cov_cy),
            }),
            EnvironmentMoments::Classification(_) => Err(Error::InvalidParameter(
                "analytic moments are defined for regression environments".into(),
            )),
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.var_c.len() != m || self.cov_cc.dim() != (m, m) || self.cov_yc.len() != m {
            return Err(Error::DimensionMismatch(format!("test moments do not match {m} confounders")));
        }
        if !(self.var_y > 0.0) {
            return Err(Error::InvalidParameter(format!("var_y must be > 0, got {}", self.var_y)));
        }
        for i in 0..m {
            if self.cov_cc[[i, i]] != self.var_c[i] {
                return Err(Error::InvalidParameter("cov_cc diagonal must equal var_c".into()));
            }
            for k in 0..i {
                if self.cov_cc[[i, k]] != self.cov_cc[[k, i]] {
                    return Err(Error::InvalidParameter("cov_cc must be symmetric".into()));
                }
            }
        }
        let mut joint = Array2::zeros((m + 1, m + 1));
        joint.slice_mut(ndarray::s![..m, ..m]).assign(&self.cov_cc);
        joint.slice_mut(ndarray::s![..m, m]).assign(&self.cov_yc);
        joint.slice_mut(ndarray::s![m, ..m]).assign(&self.cov_yc);
        joint[[m, m]] = self.var_y;
        crate::linalg::pivoted_cholesky(joint.view())
            .map(|_| ())
            .map_err(|_| Error::InvalidParameter("joint (C, Y) covariance is not PSD".into()))
    }
}

fn outer(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    a.insert_axis(Axis(1)).dot(&b.insert_axis(Axis(0)))
}

/// Population `Cov(X)` (p x p) and `Cov(X, Y)` (p) in a test environment.
///
/// `adjusted` gives the moments of the oracle-adjusted features
/// `X* = X - beta_xc C = beta_xy Y + U_X`, which involve only `var_y` and the
/// feature-noise covariance.
pub fn analytic_feature_moments(
    params: &ScmParams,
    env: &TestMoments,
    adjusted: bool,
) -> Result<(Array2<f64>, Array1<f64>)> {
    params.validate()?;
    env.validate(params.m())?;
    let b_xy = params.beta_xy.view();
    let noise = params.noise_covariance()?;
    let signal = outer(b_xy, b_xy) * env.var_y;
    let c_signal = &b_xy * env.var_y;
    if adjusted {
        return Ok((signal + noise, c_signal));
    }
    let conf_y = params.beta_xc.dot(&env.cov_yc);
    let cross = outer(b_xy, conf_y.view());
    let conf = params.beta_xc.dot(&env.cov_cc).dot(&params.beta_xc.t());
    let v = signal + &cross + cross.t() + conf + noise;
    Ok((v, c_signal + conf_y))
}

/// `E[(Y - X w)^2] = Var(Y) + w' Cov(X) w - 2 w' Cov(X, Y)` with `w` held fixed.
pub fn analytic_expected_mse(
    params: &ScmParams,
    env: &TestMoments,
    weights: &LinearWeights,
    adjusted: bool,
) -> Result<f64> {
    if weights.beta_hat.len() != params.p() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} features",
            weights.beta_hat.len(),
            params.p()
        )));
    }
    let (v, c) = analytic_feature_moments(params, env, adjusted)?;
    let w = &weights.beta_hat;
    Ok(env.var_y + w.dot(&v.dot(w)) - 2.0 * w.dot(&c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Exhaustive pair count, the definition of AUROC.
    fn auroc_pairs(labels: &[f64], scores: &[f64]) -> f64 {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li == 1.0 && lj == 0.0 {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn mse_examples() {
        let y = array![0.3, -1.0, 2.0];
        assert_eq!(mse(y.view(), y.view()).unwrap(), 0.0);
        assert_eq!(mse(array![0.0, 0.0].view(), array![1.0, -1.0].view()).unwrap(), 1.0);
        let zero = Array1::zeros(3);
        let second = y.mapv(|v| v * v).sum() / 3.0;
        assert_eq!(mse(y.view(), zero.view()).unwrap(), second);
        assert!(mse(y.view(), array![1.0].view()).is_err());
        assert!(mse(Array1::zeros(0).view(), Array1::zeros(0).view()).is_err());
    }

    #[test]
    fn auroc_examples() {
        let labels = array![0.0, 0.0, 1.0, 1.0];
        assert_eq!(auroc(labels.view(), array![0.1, 0.2, 0.3, 0.4].view()).unwrap(), 1.0);
        assert_eq!(auroc(labels.view(), array![0.7, 0.7, 0.7, 0.7].view()).unwrap(), 0.5);
        let s = array![0.1, 0.4, 0.35, 0.8];
        assert_eq!(auroc(labels.view(), s.view()).unwrap(), 0.75);
        assert_eq!(auroc_pairs(&labels.to_vec(), &s.to_vec()), 0.75);
        assert!(matches!(
            auroc(array![1.0, 1.0].view(), array![0.1, 0.2].view()),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn auroc_matches_pair_count_with_ties() {
        let labels = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0];
        let scores = [0.5, 0.5, 0.2, 0.9, 0.1, 0.9, 0.5, 0.3];
        let fast = auroc(Array1::from(labels.to_vec()).view(), Array1::from(scores.to_vec()).view());
        assert!((fast.unwrap() - auroc_pairs(&labels, &scores)).abs() < 1e-15);
    }

    #[test]
    fn stability_examples() {
        let flat = Array2::from_elem((3, 4), 0.7);
        assert_eq!(stability_error(flat.view()).unwrap().stability_error, 0.0);
        let one = array![[1.0, 2.0, 3.0]];
        assert_eq!(stability_error(one.view()).unwrap().stability_error, 1.0);
        let a = array![[0.3, 1.7, 0.2, 5.1], [0.9, 0.1, 0.4, 0.8]];
        let b = array![[5.1, 0.2, 0.3, 1.7], [0.8, 0.4, 0.9, 0.1]];
        assert_eq!(
            stability_error(a.view()).unwrap().stability_error,
            stability_error(b.view()).unwrap().stability_error
        );
        assert!(stability_error(array![[1.0], [2.0]].view()).is_err());
    }

    fn toy(beta_xc: f64) -> ScmParams {
        ScmParams {
            beta_xy: array![1.0],
            beta_xc: array![[beta_xc]],
            beta_yc: array![0.0],
            rho: 0.0,
            sigma2_x: 1.0,
        }
    }

    fn moments(var_y: f64, var_c: f64, cov_yc: f64) -> TestMoments {
        TestMoments {
            var_y,
            var_c: array![var_c],
            cov_cc: array![[var_c]],
            cov_yc: array![cov_yc],
        }
    }

    #[test]
    fn adjusted_single_feature_moments() {
        let (v, c) = analytic_feature_moments(&toy(0.6), &moments(2.0, 1.0, 0.5), true).unwrap();
        assert_eq!(v, array![[3.0]]);
        assert_eq!(c, array![2.0]);
    }

    #[test]
    fn unadjusted_equals_adjusted_without_confounder_path() {
        let p = ScmParams {
            beta_xy: array![0.3, -0.9],
            beta_xc: Array2::zeros((2, 1)),
            beta_yc: array![0.4],
            rho: 0.35,
            sigma2_x: 1.0,
        };
        let env = moments(1.5, 2.0, -0.7);
        assert_eq!(
            analytic_feature_moments(&p, &env, false).unwrap(),
            analytic_feature_moments(&p, &env, true).unwrap()
        );
    }

    #[test]
    fn adjusted_moments_ignore_confounder_moments() {
        let p = toy(0.8);
        let base = analytic_feature_moments(&p, &moments(1.0, 1.0, 0.8), true).unwrap();
        for env in [moments(1.0, 3.0, 0.8), moments(1.0, 1.0, -0.8), moments(1.0, 2.5, 0.0)] {
            assert_eq!(analytic_feature_moments(&p, &env, true).unwrap(), base);
        }
        let raw = analytic_feature_moments(&p, &moments(1.0, 1.0, 0.8), false).unwrap();
        assert_ne!(raw, analytic_feature_moments(&p, &moments(1.0, 1.0, -0.8), false).unwrap());
    }

    #[test]
    fn expected_mse_examples() {
        let w = LinearWeights { beta_hat: array![0.5] };
        let e = analytic_expected_mse(&toy(0.3), &moments(1.0, 1.0, 0.2), &w, true).unwrap();
        assert!((e - 0.5).abs() < 1e-15);
        let zero = LinearWeights { beta_hat: array![0.0] };
        let e = analytic_expected_mse(&toy(0.3), &moments(1.7, 1.0, 0.2), &zero, false).unwrap();
        assert_eq!(e, 1.7);
    }

    #[test]
    fn test_moments_validation() {
        assert!(moments(1.0, 1.0, 1.5).validate(1).is_err());
        assert!(moments(0.0, 1.0, 0.0).validate(1).is_err());
        assert!(moments(1.0, 1.0, 0.5).validate(2).is_err());
        let env = EnvironmentMoments::regression(2.0, 0.3, 1.0);
        let t = TestMoments::from_env(&env, 2).unwrap();
        assert_eq!(t.cov_cc, array![[2.0, 0.0], [0.0, 2.0]]);
        t.validate(2).unwrap();
    }
}
