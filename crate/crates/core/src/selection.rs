//! Selection mechanisms over the joint (C, Y) table and the resampling
//! adjustments that undo them on a training set.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Cell, Error, Result};
use crate::models::{fit_logistic, predict_proba};

/// Probability of selecting each (C, Y) cell; first index is C, second is Y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellProbs {
    pub p00: f64,
    pub p01: f64,
    pub p10: f64,
    pub p11: f64,
}

const SIMPLEX_TOL: f64 = 1e-12;

impl CellProbs {
    pub fn new(p00: f64, p01: f64, p10: f64, p11: f64) -> Result<Self> {
        let probs = CellProbs { p00, p01, p10, p11 };
        probs.validate()?;
        Ok(probs)
    }

    pub fn uniform() -> Self {
        CellProbs { p00: 0.25, p01: 0.25, p10: 0.25, p11: 0.25 }
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.as_array();
        if v.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParameter(format!(
                "cell probabilities must lie in [0, 1], got {v:?}"
            )));
        }
        let sum: f64 = v.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidParameter(format!(
                "cell probabilities must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }

    /// In `Cell::ALL` order.
    pub fn as_array(&self) -> [f64; 4] {
        [self.p00, self.p01, self.p10, self.p11]
    }

    pub fn get(&self, cell: Cell) -> f64 {
        self.as_array()[cell.index()]
    }
}

/// Moments of the bivariate Bernoulli law defined by a [`CellProbs`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernoulliMoments {
    pub var_c: f64,
    pub var_y: f64,
    pub cov_cy: f64,
    /// `None` when either marginal variance is zero.
    pub cor_cy: Option<f64>,
}

pub fn bernoulli_moments(probs: &CellProbs) -> Result<BernoulliMoments> {
    probs.validate()?;
    let pc = probs.p10 + probs.p11;
    let py = probs.p01 + probs.p11;
    let var_c = pc * (1.0 - pc);
    let var_y = py * (1.0 - py);
    let cov_cy = probs.p11 * probs.p00 - probs.p01 * probs.p10;
    let cor_cy = if var_c > 0.0 && var_y > 0.0 {
        Some(cov_cy / (var_c * var_y).sqrt())
    } else {
        None
    };
    Ok(BernoulliMoments { var_c, var_y, cov_cy, cor_cy })
}

/// Draw `n` rows without replacement, choosing each row's cell i.i.d. from `probs`.
pub fn biased_subsample<R: Rng + ?Sized>(
    population: &Dataset,
    probs: &CellProbs,
    n: usize,
    rng: &mut R,
) -> Result<Dataset> {
    probs.validate()?;
    if n > population.n() {
        return Err(Error::SampleSize { requested: n, available: population.n() });
    }
    let mut cells = population.cells()?;
    for cell in cells.iter_mut() {
        cell.shuffle(rng);
    }
    let weights = probs.as_array();
    let last_positive = (0..4).rev().find(|&i| weights[i] > 0.0).expect("probabilities sum to 1");
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = last_positive;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = i;
                break;
            }
        }
        match cells[pick].pop() {
            Some(row) => rows.push(row),
            None => return Err(Error::CellExhausted(Cell::ALL[pick])),
        }
    }
    Ok(population.select_rows(&rows))
}

fn take_without_replacement<R: Rng + ?Sized>(
    cell: &[usize],
    k: usize,
    rng: &mut R,
) -> Vec<usize> {
    let mut idx = cell.to_vec();
    let (chosen, _) = idx.partial_shuffle(rng, k);
    chosen.to_vec()
}

fn take_with_replacement<R: Rng + ?Sized>(cell: &[usize], k: usize, rng: &mut R) -> Vec<usize> {
    (0..k).map(|_| cell[rng.random_range(0..cell.len())]).collect()
}

/// Balance the (C, Y) table by keeping `min cell count` random rows per cell.
pub fn match_undersample<R: Rng + ?Sized>(data: &Dataset, rng: &mut R) -> Result<Dataset> {
    let cells = data.cells()?;
    if let Some(i) = cells.iter().position(Vec::is_empty) {
        return Err(Error::Unmatchable(Cell::ALL[i]));
    }
    let k = cells.iter().map(Vec::len).min().expect("four cells");
    let mut rows: Vec<usize> = cells
        .iter()
        .flat_map(|cell| take_without_replacement(cell, k, rng))
        .collect();
    rows.sort_unstable();
    Ok(data.select_rows(&rows))
}

/// Balance by oversampling with inverse-propensity weights.
///
/// With one binary confounder the propensity model is saturated, so the
/// weights are inverse cell frequencies: each cell is resampled with
/// replacement to the largest cell count. Otherwise see
/// [`ipw_oversample_with`].
pub fn ipw_oversample<R: Rng + ?Sized>(data: &Dataset, rng: &mut R) -> Result<Dataset> {
    ipw_oversample_with(data, None, rng)
}

/// Like [`ipw_oversample`] with an explicit per-cell size for the saturated case.
///
/// For several (or non-binary) confounders, a logistic propensity
/// `e(C) = P(Y = 1 | C)` is fitted and `n` rows are drawn with replacement
/// with probability proportional to `1 / P(Y = y_i | C_i)`; `per_cell`, when
/// given, sets the output size to `4 * per_cell`.
pub fn ipw_oversample_with<R: Rng + ?Sized>(
    data: &Dataset,
    per_cell: Option<usize>,
    rng: &mut R,
) -> Result<Dataset> {
    if data.has_binary_cells() {
        let cells = data.cells()?;
        if let Some(i) = cells.iter().position(Vec::is_empty) {
            return Err(Error::Unweightable(Cell::ALL[i]));
        }
        let k = per_cell.unwrap_or_else(|| cells.iter().map(Vec::len).max().expect("four cells"));
        let rows: Vec<usize> = cells
            .iter()
            .flat_map(|cell| take_with_replacement(cell, k, rng))
            .collect();
        return Ok(data.select_rows(&rows));
    }

    if !data.y.iter().all(|&v| v == 0.0 || v == 1.0) {
        return Err(Error::NotBinary("label"));
    }
    let fit = fit_logistic(data.c.view(), data.y.view(), 100, 1e-8)?;
    let e = predict_proba(data.c.view(), &fit)?;
    let weights: Vec<f64> = e
        .iter()
        .zip(&data.y)
        .map(|(&e, &y)| if y == 1.0 { 1.0 / e } else { 1.0 / (1.0 - e) })
        .collect();
    let dist = WeightedIndex::new(&weights)
        .map_err(|err| Error::InvalidParameter(format!("propensity weights: {err}")))?;
    let size = per_cell.map_or(data.n(), |k| 4 * k);
    let rows: Vec<usize> = (0..size).map(|_| dist.sample(rng)).collect();
    Ok(data.select_rows(&rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RebalanceMode {
    Undersample,
    Oversample,
}

/// Largest-remainder apportionment of `total` rows to the four cells; ties go
/// to the earlier cell in `Cell::ALL` order.
pub fn apportion(total: usize, target: &CellProbs) -> [usize; 4] {
    let quotas = target.as_array().map(|t| {
        let q = t * total as f64;
        let r = q.round();
        if (q - r).abs() < 1e-9 { r } else { q }
    });
    let mut counts = quotas.map(|q| q.floor() as usize);
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Resample so the (C, Y) proportions match `target`.
///
/// Undersampling keeps the largest output that fits inside the available
/// rows of every cell; oversampling keeps the input size and draws with
/// replacement.
pub fn rebalance_to_target<R: Rng + ?Sized>(
    data: &Dataset,
    target: &CellProbs,
    mode: RebalanceMode,
    rng: &mut R,
) -> Result<Dataset> {
    target.validate()?;
    let cells = data.cells()?;
    let t = target.as_array();
    for (i, cell) in cells.iter().enumerate() {
        if t[i] > 0.0 && cell.is_empty() {
            return Err(Error::UnreachableTarget(Cell::ALL[i]));
        }
    }

    let counts = match mode {
        RebalanceMode::Oversample => apportion(data.n(), target),
        RebalanceMode::Undersample => {
            let mut total = (0..4)
                .filter(|&i| t[i] > 0.0)
                .map(|i| (cells[i].len() as f64 / t[i] + 1e-9).floor() as usize)
                .min()
                .unwrap_or(0)
                .min(data.n());
            loop {
                let counts = apportion(total, target);
                if (0..4).all(|i| counts[i] <= cells[i].len()) {
                    break counts;
                }
                total -= 1;
            }
        }
    };

    let mut rows = Vec::with_capacity(counts.iter().sum());
    for (cell, &k) in cells.iter().zip(&counts) {
        match mode {
            RebalanceMode::Undersample => rows.extend(take_without_replacement(cell, k, rng)),
            RebalanceMode::Oversample => rows.extend(take_with_replacement(cell, k, rng)),
        }
    }
    if mode == RebalanceMode::Undersample {
        rows.sort_unstable();
    }
    Ok(data.select_rows(&rows))
}
