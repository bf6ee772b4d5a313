//! Causality-aware feature adjustment.
//!
//! In an anticausal task the features satisfy
//! `X_j = beta_xy[j] Y + beta_xc[j, .] C + U_Xj`. Regressing each feature on
//! `(Y, C)` in the training set estimates `beta_xc`; subtracting `beta_xc_hat C`
//! then removes the confounder channel. The subtraction needs no labels, so
//! the same fitted model also deconfounds unlabeled test features.

use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Qr;
use crate::selection::{ipw_oversample, match_undersample};

/// Fitted confounder coefficients, reusable on any later batch.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustmentModel {
    /// p x m.
    pub b_xc_hat: Array2<f64>,
    /// Length p; kept for diagnostics.
    pub b_xy_hat: Array1<f64>,
    /// Per-feature intercepts when fitted with [`AdjustOptions::intercept`].
    pub intercept: Option<Array1<f64>>,
    pub fitted_on: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AdjustOptions {
    /// Add an intercept column for non-centered data. Only the confounder
    /// contribution is subtracted either way.
    pub intercept: bool,
}

/// The five ways of handling confounding on a train/test pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Adjust training and test features.
    #[serde(alias = "counterfactual_normalization")]
    CausalityAware,
    /// Adjust training features only.
    PoorMans,
    /// Undersample the training set to a balanced (C, Y) table.
    Matching,
    /// Oversample the training set with inverse-propensity weights.
    ApproxIpw,
    NoAdjustment,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::CausalityAware,
        Strategy::PoorMans,
        Strategy::Matching,
        Strategy::ApproxIpw,
        Strategy::NoAdjustment,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::CausalityAware => "causality_aware",
            Strategy::PoorMans => "poor_mans",
            Strategy::Matching => "matching",
            Strategy::ApproxIpw => "approx_ipw",
            Strategy::NoAdjustment => "no_adjustment",
        }
    }

    /// Stable numeric id used in random-stream paths.
    pub fn id(self) -> u64 {
        Strategy::ALL.iter().position(|&s| s == self).expect("listed") as u64
    }

    /// Whether the strategy resamples and therefore needs binary C and Y.
    pub fn needs_binary_cells(self) -> bool {
        matches!(self, Strategy::Matching | Strategy::ApproxIpw)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            // Counterfactual normalization of train and test coincides with
            // causality-aware adjustment for linear anticausal models.
            .or((s == "counterfactual_normalization").then_some(Strategy::CausalityAware))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown strategy `{s}`")))
    }
}

pub fn fit_adjustment(train: &Dataset) -> Result<AdjustmentModel> {
    fit_adjustment_with(train, &AdjustOptions::default())
}

/// Least squares of every feature on `(Y, C_1..C_m)` (plus an optional intercept).
///
/// All features share one design, so it is factored once.
pub fn fit_adjustment_with(train: &Dataset, opts: &AdjustOptions) -> Result<AdjustmentModel> {
    let (n, m) = (train.n(), train.m());
    let mut parts = vec![train.y.view().insert_axis(Axis(1)), train.c.view()];
    let ones = Array2::ones((n, 1));
    if opts.intercept {
        parts.push(ones.view());
    }
    let design = concatenate(Axis(1), &parts).map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    if n <= design.ncols() {
        return Err(Error::SingularDesign);
    }
    let qr = Qr::new(design.view())?;

    let p = train.p();
    let mut b_xy_hat = Array1::zeros(p);
    let mut b_xc_hat = Array2::zeros((p, m));
    let mut intercept = opts.intercept.then(|| Array1::zeros(p));
    for j in 0..p {
        let coef = qr.solve(train.x.column(j))?;
        b_xy_hat[j] = coef[0];
        b_xc_hat.row_mut(j).assign(&coef.slice(ndarray::s![1..=m]));
        if let Some(b0) = intercept.as_mut() {
            b0[j] = coef[m + 1];
        }
    }
    Ok(AdjustmentModel { b_xc_hat, b_xy_hat, intercept, fitted_on: n })
}

/// `features - confounders * b_xc_hat'`. Never touches labels.
pub fn transform(
    features: ArrayView2<f64>,
    confounders: ArrayView2<f64>,
    model: &AdjustmentModel,
) -> Result<Array2<f64>> {
    let (p, m) = model.b_xc_hat.dim();
    if features.ncols() != p || confounders.ncols() != m || features.nrows() != confounders.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "features {:?} and confounders {:?} do not fit a {p}x{m} model",
            features.dim(),
            confounders.dim()
        )));
    }
    Ok(&features - &confounders.dot(&model.b_xc_hat.t()))
}

fn adjusted(data: &Dataset, model: &AdjustmentModel) -> Result<Dataset> {
    Ok(Dataset { x: transform(data.x.view(), data.c.view(), model)?, ..data.clone() })
}

/// Apply a strategy to a training set and its test sets.
pub fn prepare<R: Rng + ?Sized>(
    train: &Dataset,
    tests: &[Dataset],
    strategy: Strategy,
    rng: &mut R,
) -> Result<(Dataset, Vec<Dataset>)> {
    match strategy {
        Strategy::CausalityAware => {
            let model = fit_adjustment(train)?;
            let tests = tests.iter().map(|t| adjusted(t, &model)).collect::<Result<_>>()?;
            Ok((adjusted(train, &model)?, tests))
        }
        Strategy::PoorMans => {
            let model = fit_adjustment(train)?;
            Ok((adjusted(train, &model)?, tests.to_vec()))
        }
        Strategy::Matching => Ok((match_undersample(train, rng)?, tests.to_vec())),
        Strategy::ApproxIpw => Ok((ipw_oversample(train, rng)?, tests.to_vec())),
        Strategy::NoAdjustment => Ok((train.clone(), tests.to_vec())),
    }
}

/// On-disk form of an [`AdjustmentModel`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AdjustmentModelFile {
    pub features: usize,
    pub confounders: usize,
    pub fitted_on: usize,
    /// One row per feature, one entry per confounder.
    pub b_xc: Vec<Vec<f64>>,
    pub b_xy: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intercept: Option<Vec<f64>>,
}

impl AdjustmentModel {
    pub fn to_toml(&self) -> String {
        let file = AdjustmentModelFile {
            features: self.b_xc_hat.nrows(),
            confounders: self.b_xc_hat.ncols(),
            fitted_on: self.fitted_on,
            b_xc: self.b_xc_hat.outer_iter().map(|r| r.to_vec()).collect(),
            b_xy: self.b_xy_hat.to_vec(),
            intercept: self.intercept.as_ref().map(|v| v.to_vec()),
        };
        toml::to_string(&file).expect("model serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let f: AdjustmentModelFile =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let (p, m) = (f.features, f.confounders);
        if f.b_xc.len() != p || f.b_xc.iter().any(|r| r.len() != m) || f.b_xy.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "model file declares {p} features x {m} confounders but coefficients disagree"
            )));
        }
        if f.intercept.as_ref().is_some_and(|v| v.len() != p) {
            return Err(Error::DimensionMismatch("intercept length".into()));
        }
        let flat: Vec<f64> = f.b_xc.into_iter().flatten().collect();
        if flat.iter().chain(&f.b_xy).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite coefficient in model file".into()));
        }
        Ok(AdjustmentModel {
            b_xc_hat: Array2::from_shape_vec((p, m), flat)
                .map_err(|e| Error::DimensionMismatch(e.to_string()))?,
            b_xy_hat: Array1::from(f.b_xy),
            intercept: f.intercept.map(Array1::from),
            fitted_on: f.fitted_on,
        })
    }
}
