//! Predictive models: least squares without intercept (centered data) and
//! logistic regression with intercept fitted by IRLS.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::linalg::{lstsq, spd_solve};
use crate::scm::sigmoid;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearWeights {
    pub beta_hat: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticWeights {
    pub intercept: f64,
    pub beta_hat: Array1<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Set when the coefficient norm hit [`LogisticOptions::weight_cap`]
    /// before the score vanished, i.e. the data look (quasi-)separable.
    pub separated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticOptions {
    pub max_iter: usize,
    /// Convergence threshold on the max-norm of the log-likelihood gradient.
    pub tol: f64,
    /// Euclidean norm cap on (intercept, beta) used to detect separation.
    pub weight_cap: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        LogisticOptions { max_iter: 100, tol: 1e-8, weight_cap: 30.0 }
    }
}

/// Least squares via Householder QR, no intercept.
pub fn fit_ols(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<LinearWeights> {
    let (n, p) = x.dim();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!("x has {n} rows, y has {}", y.len())));
    }
    if n <= p {
        return Err(Error::SingularDesign);
    }
    Ok(LinearWeights { beta_hat: lstsq(x, y)? })
}

pub fn predict_linear(x: ArrayView2<f64>, w: &LinearWeights) -> Result<Array1<f64>> {
    if x.ncols() != w.beta_hat.len() {
        return Err(Error::DimensionMismatch(format!(
            "x has {} columns, model has {} weights",
            x.ncols(),
            w.beta_hat.len()
        )));
    }
    Ok(x.dot(&w.beta_hat))
}

fn with_intercept(x: ArrayView2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let mut d = Array2::ones((n, x.ncols() + 1));
    d.slice_mut(ndarray::s![.., 1..]).assign(&x);
    d
}

/// Numerically stable `log(1 + exp(t))`.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

pub fn log_likelihood(design: ArrayView2<f64>, y: ArrayView1<f64>, coef: ArrayView1<f64>) -> f64 {
    design
        .dot(&coef)
        .iter()
        .zip(y)
        .map(|(&eta, &yi)| yi * eta - softplus(eta))
        .sum()
}

/// Gradient of the Bernoulli log-likelihood, `X' (y - mu)`.
pub fn score(design: ArrayView2<f64>, y: ArrayView1<f64>, coef: ArrayView1<f64>) -> Array1<f64> {
    let resid = &y - &design.dot(&coef).mapv(sigmoid);
    design.t().dot(&resid)
}

pub fn fit_logistic(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    max_iter: usize,
    tol: f64,
) -> Result<LogisticWeights> {
    fit_logistic_with(x, y, &LogisticOptions { max_iter, tol, ..Default::default() })
}

/// Newton-Raphson / IRLS on the log-likelihood with step halving.
pub fn fit_logistic_with(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    opts: &LogisticOptions,
) -> Result<LogisticWeights> {
    let (n, p) = x.dim();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!("x has {n} rows, y has {}", y.len())));
    }
    if !y.iter().all(|&v| v == 0.0 || v == 1.0) {
        return Err(Error::NotBinary("label"));
    }
    let positives = y.sum();
    if positives == 0.0 || positives == n as f64 {
        return Err(Error::DegenerateLabels);
    }
    if n <= p + 1 {
        return Err(Error::SingularDesign);
    }

    let design = with_intercept(x);
    let mut coef = Array1::<f64>::zeros(p + 1);
    let mut ll = log_likelihood(design.view(), y, coef.view());
    let mut converged = false;
    let mut separated = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        let mu = design.dot(&coef).mapv(sigmoid);
        let grad = design.t().dot(&(&y - &mu));
        if grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) <= opts.tol {
            converged = true;
            break;
        }
        let w = mu.mapv(|m| m * (1.0 - m));
        let weighted = &design * &w.view().insert_axis(Axis(1));
        let hessian = design.t().dot(&weighted);
        let step = spd_solve(hessian.view(), grad.view()).ok_or(Error::SingularDesign)?;

        // Near the optimum the log-likelihood is flat to rounding; allow for it.
        let slack = 1e-12 * (1.0 + ll.abs());
        let mut t = 1.0;
        let mut next = &coef + &step;
        let mut next_ll = log_likelihood(design.view(), y, next.view());
        while next_ll < ll - slack && t > 1e-10 {
            t *= 0.5;
            next = &coef + &(&step * t);
            next_ll = log_likelihood(design.view(), y, next.view());
        }
        iterations += 1;
        if next_ll < ll - slack {
            // No ascent along the Newton direction at machine precision.
            break;
        }
        coef = next;
        ll = next_ll;

        let norm = coef.dot(&coef).sqrt();
        if norm > opts.weight_cap {
            coef *= opts.weight_cap / norm;
            separated = true;
            break;
        }
    }
    if !converged && !separated {
        let grad = score(design.view(), y, coef.view());
        converged = grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) <= opts.tol;
    }

    Ok(LogisticWeights {
        intercept: coef[0],
        beta_hat: coef.slice(ndarray::s![1..]).to_owned(),
        converged,
        iterations,
        separated,
    })
}

pub fn predict_proba(x: ArrayView2<f64>, w: &LogisticWeights) -> Result<Array1<f64>> {
    if x.ncols() != w.beta_hat.len() {
        return Err(Error::DimensionMismatch(format!(
            "x has {} columns, model has {} weights",
            x.ncols(),
            w.beta_hat.len()
        )));
    }
    Ok(x.dot(&w.beta_hat).mapv(|t| sigmoid(t + w.intercept)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use ndarray::array;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn ols_exact_and_null_fits() {
        let x = array![[1.0], [2.0], [-3.0], [0.5]];
        let w = fit_ols(x.view(), (&x.column(0) * 2.0).view()).unwrap();
        assert!((w.beta_hat[0] - 2.0).abs() < 1e-10);

        let x = array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]];
        let y = array![0.0, 0.0, 1.0, -1.0];
        let w = fit_ols(x.view(), y.view()).unwrap();
        assert!(w.beta_hat.iter().all(|b| b.abs() < 1e-10));
    }

    #[test]
    fn ols_matches_normal_equations() {
        let mut rng = stream(31);
        let x = Array2::from_shape_simple_fn((200, 4), || rng.sample::<f64, _>(StandardNormal));
        let y = Array1::from_shape_simple_fn(200, || rng.sample::<f64, _>(StandardNormal));
        let w = fit_ols(x.view(), y.view()).unwrap();
        let g = nalgebra::DMatrix::from_fn(4, 4, |i, j| x.column(i).dot(&x.column(j)));
        let r = nalgebra::DVector::from_fn(4, |i, _| x.column(i).dot(&y));
        let oracle = g.lu().solve(&r).unwrap();
        for j in 0..4 {
            assert!((w.beta_hat[j] - oracle[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn ols_rejects_rank_deficiency() {
        let x = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        assert_eq!(fit_ols(x.view(), array![1.0, 2.0, 3.0].view()).unwrap_err(), Error::SingularDesign);
        assert!(fit_ols(array![[1.0]].view(), array![1.0, 2.0].view()).is_err());
    }

    #[test]
    fn linear_prediction() {
        let x = array![[1.0, 2.0], [3.0, -1.0]];
        let zero = LinearWeights { beta_hat: array![0.0, 0.0] };
        assert_eq!(predict_linear(x.view(), &zero).unwrap(), array![0.0, 0.0]);
        let one = LinearWeights { beta_hat: array![1.0] };
        let col = array![[0.3], [-2.0]];
        assert_eq!(predict_linear(col.view(), &one).unwrap(), array![0.3, -2.0]);
        let w = LinearWeights { beta_hat: array![0.5, -1.5] };
        let scaled = predict_linear((&x * 3.0).view(), &w).unwrap();
        assert_eq!(scaled, predict_linear(x.view(), &w).unwrap() * 3.0);
        assert!(predict_linear(x.view(), &one).is_err());
    }

    #[test]
    fn logistic_symmetric_data_has_zero_slope() {
        let x = array![[1.0], [1.0], [-1.0], [-1.0]];
        let y = array![0.0, 1.0, 0.0, 1.0];
        let w = fit_logistic(x.view(), y.view(), 100, 1e-8).unwrap();
        assert!(w.converged);
        assert!(w.beta_hat[0].abs() < 1e-8 && w.intercept.abs() < 1e-8);
    }

    #[test]
    fn logistic_gradient_vanishes_at_fit() {
        for seed in 0..5 {
            let mut rng = stream(100 + seed);
            let n = 500;
            let x = Array2::from_shape_simple_fn((n, 3), || rng.sample::<f64, _>(StandardNormal));
            let y = Array1::from_shape_fn(n, |i| {
                let t = 0.3 + x[[i, 0]] - 0.5 * x[[i, 2]];
                if rng.random::<f64>() < sigmoid(t) { 1.0 } else { 0.0 }
            });
            let w = fit_logistic(x.view(), y.view(), 100, 1e-8).unwrap();
            assert!(w.converged && !w.separated);
            let mut coef = vec![w.intercept];
            coef.extend(w.beta_hat.iter());
            let g = score(with_intercept(x.view()).view(), y.view(), Array1::from(coef).view());
            assert!(g.iter().all(|v| v.abs() <= 1e-8));
        }
    }

    #[test]
    fn logistic_flags_separation() {
        let x = array![[-2.0], [-1.0], [-0.5], [0.5], [1.0], [2.0]];
        let y = array![0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let w = fit_logistic(x.view(), y.view(), 100, 1e-8).unwrap();
        assert!(w.separated);
        assert!(!w.converged);
        let norm = (w.intercept.powi(2) + w.beta_hat.dot(&w.beta_hat)).sqrt();
        assert!(norm <= 30.0 + 1e-9);
    }

    #[test]
    fn logistic_rejects_one_class() {
        let x = array![[1.0], [2.0], [3.0]];
        assert_eq!(
            fit_logistic(x.view(), array![1.0, 1.0, 1.0].view(), 100, 1e-8).unwrap_err(),
            Error::DegenerateLabels
        );
    }

    #[test]
    fn proba_behaviour() {
        let zero = LogisticWeights {
            intercept: 0.0,
            beta_hat: array![0.0],
            converged: true,
            iterations: 0,
            separated: false,
        };
        let x = array![[-5.0], [0.0], [7.0]];
        assert!(predict_proba(x.view(), &zero).unwrap().iter().all(|&p| p == 0.5));
        let steep = LogisticWeights { beta_hat: array![2.0], ..zero.clone() };
        let p = predict_proba(x.view(), &steep).unwrap();
        assert!(p[2] > 0.999);
        assert!(p[0] < p[1] && p[1] < p[2]);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
