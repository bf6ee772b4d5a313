//! Replicated stability experiments: generate one training set and a family
//! of shifted test sets from the same structural parameters, apply each
//! adjustment strategy, fit one model per strategy and score it on every
//! test environment.
//!
//! Randomness is addressed by path (see [`crate::rng`]):
//!
//! | draw                    | path                                  |
//! |-------------------------|---------------------------------------|
//! | parameters              | `[rep, PARAMS]`                       |
//! | training set            | `[rep, TRAIN]`                        |
//! | test environment `k`    | `[rep, TEST, k]`                      |
//! | strategy resampling     | `[rep, STRATEGY, strategy.id()]`      |
//!
//! so every result row can be regenerated from `(master_seed, rep)` and the
//! output does not depend on thread count or scheduling.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjust::{prepare, Strategy};
use crate::dataset::{Dataset, Task};
use crate::error::{Error, Result};
use crate::metrics::{auroc, mse, sample_sd, stability_error, StabilityReport};
use crate::models::{fit_logistic_with, fit_ols, predict_linear, predict_proba, LogisticOptions};
use crate::rng::{stage, substream};
use crate::scm::{
    draw_params, simulate_classification_population, simulate_regression, EnvironmentMoments,
    ScmParams,
};
use crate::selection::{biased_subsample, CellProbs};

/// Declarative description of one experiment sweep.
///
/// `environments[0]` generates the training set; the remaining entries are
/// the test environments, numbered from 1 in the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub n_train: usize,
    pub n_test: usize,
    /// Size of each unselected population (classification only).
    #[serde(default)]
    pub n_population: usize,
    pub replications: usize,
    pub master_seed: u64,
    pub strategies: Vec<Strategy>,
    pub environments: Vec<EnvironmentMoments>,
    pub feature_count: usize,
    pub confounder_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuiltinName {
    RegrExp1,
    RegrExp2,
    ClassExp1,
    ClassExp2,
}

impl BuiltinName {
    pub const ALL: [BuiltinName; 4] =
        [BuiltinName::RegrExp1, BuiltinName::RegrExp2, BuiltinName::ClassExp1, BuiltinName::ClassExp2];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinName::RegrExp1 => "regr_exp1",
            BuiltinName::RegrExp2 => "regr_exp2",
            BuiltinName::ClassExp1 => "class_exp1",
            BuiltinName::ClassExp2 => "class_exp2",
        }
    }
}

impl FromStr for BuiltinName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BuiltinName::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown builtin experiment `{s}`")))
    }
}

impl fmt::Display for BuiltinName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const DEFAULT_SEED: u64 = 2021;

const SHIFTED_COV: [f64; 9] = [0.8, 0.6, 0.4, 0.2, 0.0, -0.2, -0.4, -0.6, -0.8];
const SHIFTED_VAR: [f64; 9] = [1.00, 1.25, 1.50, 1.75, 2.00, 2.25, 2.50, 2.75, 3.00];

// (p11, p10, p01, p00) for the training set and the nine test sets.
const FIXED_VAR_Y_CELLS: [[f64; 4]; 10] = [
    [0.45, 0.05, 0.05, 0.45],
    [0.45, 0.05, 0.05, 0.45],
    [0.40, 0.10, 0.10, 0.40],
    [0.35, 0.15, 0.15, 0.35],
    [0.30, 0.20, 0.20, 0.30],
    [0.25, 0.25, 0.25, 0.25],
    [0.20, 0.30, 0.30, 0.20],
    [0.15, 0.35, 0.35, 0.15],
    [0.10, 0.40, 0.40, 0.10],
    [0.05, 0.45, 0.45, 0.05],
];
const VARYING_VAR_Y_CELLS: [[f64; 4]; 10] = [
    [0.45, 0.05, 0.05, 0.45],
    [0.45, 0.05, 0.05, 0.45],
    [0.40, 0.15, 0.05, 0.40],
    [0.35, 0.25, 0.05, 0.35],
    [0.30, 0.35, 0.05, 0.30],
    [0.25, 0.45, 0.05, 0.25],
    [0.20, 0.55, 0.05, 0.20],
    [0.15, 0.65, 0.05, 0.15],
    [0.10, 0.75, 0.05, 0.10],
    [0.05, 0.85, 0.05, 0.05],
];

fn cells(table: &[[f64; 4]; 10]) -> Vec<EnvironmentMoments> {
    table
        .iter()
        .map(|&[p11, p10, p01, p00]| EnvironmentMoments::Classification(CellProbs { p00, p01, p10, p11 }))
        .collect()
}

/// The four synthetic experiments, at the original 1000 replications.
pub fn builtin_config(name: BuiltinName) -> ExperimentConfig {
    let train = EnvironmentMoments::regression(1.0, 0.8, 1.0);
    let (task, environments, strategies) = match name {
        BuiltinName::RegrExp1 => (
            Task::Regression,
            std::iter::once(train)
                .chain((0..9).map(|k| EnvironmentMoments::regression(SHIFTED_VAR[k], SHIFTED_COV[k], 1.0)))
                .collect(),
            vec![Strategy::CausalityAware, Strategy::PoorMans, Strategy::NoAdjustment],
        ),
        BuiltinName::RegrExp2 => (
            Task::Regression,
            std::iter::once(train)
                .chain((0..9).map(|k| EnvironmentMoments::regression(1.0, SHIFTED_COV[k], SHIFTED_VAR[k])))
                .collect(),
            vec![Strategy::CausalityAware, Strategy::PoorMans, Strategy::NoAdjustment],
        ),
        BuiltinName::ClassExp1 | BuiltinName::ClassExp2 => (
            Task::Classification,
            cells(if name == BuiltinName::ClassExp1 { &FIXED_VAR_Y_CELLS } else { &VARYING_VAR_Y_CELLS }),
            vec![
                Strategy::CausalityAware,
                Strategy::PoorMans,
                Strategy::Matching,
                Strategy::NoAdjustment,
            ],
        ),
    };
    ExperimentConfig {
        task,
        n_train: 1000,
        n_test: 1000,
        n_population: if task == Task::Classification { 10_000 } else { 0 },
        replications: 1000,
        master_seed: DEFAULT_SEED,
        strategies,
        environments,
        feature_count: 5,
        confounder_count: 1,
    }
}

impl ExperimentConfig {
    pub fn test_count(&self) -> usize {
        self.environments.len().saturating_sub(1)
    }

    pub fn metric(&self) -> Metric {
        match self.task {
            Task::Regression => Metric::Mse,
            Task::Classification => Metric::Auroc,
        }
    }

    /// Rejects every invariant violation before any simulation starts.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.environments.len() < 3 {
            return bad("need a training environment and at least 2 test environments".into());
        }
        if self.feature_count == 0 || self.confounder_count == 0 {
            return bad("feature_count and confounder_count must be at least 1".into());
        }
        if self.n_test == 0 {
            return bad("n_test must be at least 1".into());
        }
        if self.n_train <= self.feature_count + self.confounder_count + 1 {
            return bad(format!(
                "n_train = {} is too small for {} features and {} confounders",
                self.n_train, self.feature_count, self.confounder_count
            ));
        }
        if self.strategies.is_empty() {
            return bad("no strategies".into());
        }
        for (i, s) in self.strategies.iter().enumerate() {
            if self.strategies[..i].contains(s) {
                return bad(format!("strategy `{s}` listed twice"));
            }
            if s.needs_binary_cells() && self.task != Task::Classification {
                return bad(format!("strategy `{s}` needs a classification task"));
            }
        }
        for (k, env) in self.environments.iter().enumerate() {
            if env.task() != self.task {
                return bad(format!("environment {k} does not match task {:?}", self.task));
            }
            env.validate(self.confounder_count)
                .map_err(|e| Error::InvalidConfig(format!("environment {k}: {e}")))?;
        }
        if self.task == Task::Classification {
            if self.confounder_count != 1 {
                return bad("classification experiments use a single binary confounder".into());
            }
            if self.n_population < self.n_train.max(self.n_test) {
                return bad(format!(
                    "n_population = {} must be at least n_train and n_test",
                    self.n_population
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Mse,
    Auroc,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::Auroc => "auroc",
        }
    }
}

/// One metric value for one (replication, strategy, test environment).
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub replication: usize,
    pub strategy: Strategy,
    /// Test environment, numbered from 1.
    pub env: usize,
    pub metric: Metric,
    pub value: Option<f64>,
    pub error: Option<String>,
}

impl ResultRow {
    fn ok(replication: usize, strategy: Strategy, env: usize, metric: Metric, value: f64) -> Self {
        ResultRow { replication, strategy, env, metric, value: Some(value), error: None }
    }

    fn failed(replication: usize, strategy: Strategy, env: usize, metric: Metric, err: &Error) -> Self {
        ResultRow { replication, strategy, env, metric, value: None, error: Some(err.to_string()) }
    }
}

fn failed_rows(config: &ExperimentConfig, rep: usize, strategies: &[Strategy], err: &Error) -> Vec<ResultRow> {
    strategies
        .iter()
        .flat_map(|&s| {
            (1..=config.test_count()).map(move |env| ResultRow::failed(rep, s, env, config.metric(), err))
        })
        .collect()
}

/// Training set and test sets for one replication, all from `params`.
pub fn generate_datasets(
    config: &ExperimentConfig,
    params: &ScmParams,
    rep: usize,
) -> Result<(Dataset, Vec<Dataset>)> {
    let seed = config.master_seed;
    let rep = rep as u64;
    let make = |env: &EnvironmentMoments, n: usize, path: &[u64]| -> Result<Dataset> {
        let mut rng = substream(seed, path);
        match env {
            EnvironmentMoments::Regression { .. } => simulate_regression(params, env, n, &mut rng),
            EnvironmentMoments::Classification(probs) => {
                let population = simulate_classification_population(params, config.n_population, &mut rng)?;
                biased_subsample(&population, probs, n, &mut rng)
            }
        }
    };
    let train = make(&config.environments[0], config.n_train, &[rep, stage::TRAIN])?;
    let tests = config.environments[1..]
        .iter()
        .enumerate()
        .map(|(k, env)| make(env, config.n_test, &[rep, stage::TEST, k as u64 + 1]))
        .collect::<Result<Vec<_>>>()?;
    Ok((train, tests))
}

fn score_strategy(
    config: &ExperimentConfig,
    train: &Dataset,
    tests: &[Dataset],
    strategy: Strategy,
    rep: usize,
) -> Result<Vec<Result<f64>>> {
    let mut rng = substream(config.master_seed, &[rep as u64, stage::STRATEGY, strategy.id()]);
    let (train, tests) = prepare(train, tests, strategy, &mut rng)?;
    match config.task {
        Task::Regression => {
            let w = fit_ols(train.x.view(), train.y.view())?;
            Ok(tests
                .iter()
                .map(|t| mse(t.y.view(), predict_linear(t.x.view(), &w)?.view()))
                .collect())
        }
        Task::Classification => {
            let w = fit_logistic_with(train.x.view(), train.y.view(), &LogisticOptions::default())?;
            Ok(tests
                .iter()
                .map(|t| auroc(t.y.view(), predict_proba(t.x.view(), &w)?.view()))
                .collect())
        }
    }
}

/// All rows of one replication; failures become error rows.
pub fn run_replication(config: &ExperimentConfig, params: &ScmParams, rep: usize) -> Vec<ResultRow> {
    let metric = config.metric();
    let (train, tests) = match generate_datasets(config, params, rep) {
        Ok(d) => d,
        Err(e) => return failed_rows(config, rep, &config.strategies, &e),
    };
    let mut rows = Vec::with_capacity(config.strategies.len() * tests.len());
    for &strategy in &config.strategies {
        match score_strategy(config, &train, &tests, strategy, rep) {
            Ok(values) => rows.extend(values.into_iter().enumerate().map(|(k, v)| match v {
                Ok(v) => ResultRow::ok(rep, strategy, k + 1, metric, v),
                Err(e) => ResultRow::failed(rep, strategy, k + 1, metric, &e),
            })),
            Err(e) => rows.extend(failed_rows(config, rep, &[strategy], &e)),
        }
    }
    rows
}

/// Parameters for replication `rep`.
pub fn replication_params(config: &ExperimentConfig, rep: usize) -> Result<ScmParams> {
    let mut rng = substream(config.master_seed, &[rep as u64, stage::PARAMS]);
    draw_params(
        config.task,
        config.feature_count,
        config.confounder_count,
        &config.environments,
        &mut rng,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryCell {
    pub strategy: Strategy,
    pub env: usize,
    pub mean: f64,
    pub sd: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyStability {
    pub strategy: Strategy,
    /// Replications with a value in every environment.
    pub complete_replications: usize,
    pub report: Option<StabilityReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub cells: Vec<SummaryCell>,
    pub stability: Vec<StrategyStability>,
    /// Distinct failure messages and how many rows carried them.
    pub failures: BTreeMap<String, usize>,
}

impl Summary {
    /// Aggregate rows; the result does not depend on row order.
    pub fn from_rows(rows: &[ResultRow]) -> Summary {
        let mut by_cell: BTreeMap<(Strategy, usize), BTreeMap<usize, Option<f64>>> = BTreeMap::new();
        let mut failures = BTreeMap::new();
        for row in rows {
            by_cell.entry((row.strategy, row.env)).or_default().insert(row.replication, row.value);
            if let Some(e) = &row.error {
                *failures.entry(e.clone()).or_insert(0) += 1;
            }
        }

        let cells = by_cell
            .iter()
            .map(|(&(strategy, env), reps)| {
                let ok: Vec<f64> = reps.values().flatten().copied().collect();
                let mean = if ok.is_empty() { f64::NAN } else { ok.iter().sum::<f64>() / ok.len() as f64 };
                SummaryCell {
                    strategy,
                    env,
                    mean,
                    sd: sample_sd(&ok),
                    n_ok: ok.len(),
                    n_failed: reps.len() - ok.len(),
                }
            })
            .collect();

        let mut per_strategy: BTreeMap<Strategy, BTreeMap<usize, BTreeMap<usize, Option<f64>>>> =
            BTreeMap::new();
        for (&(strategy, env), reps) in &by_cell {
            per_strategy.entry(strategy).or_default().insert(env, reps.clone());
        }
        let stability = per_strategy
            .into_iter()
            .map(|(strategy, envs)| {
                let env_ids: Vec<usize> = envs.keys().copied().collect();
                let all_reps: std::collections::BTreeSet<usize> =
                    envs.values().flat_map(|r| r.keys().copied()).collect();
                let complete: Vec<Vec<f64>> = all_reps
                    .iter()
                    .filter_map(|rep| {
                        env_ids.iter().map(|e| envs[e].get(rep).copied().flatten()).collect()
                    })
                    .collect();
                let report = if complete.is_empty() {
                    None
                } else {
                    let table = Array2::from_shape_fn((complete.len(), env_ids.len()), |(r, e)| complete[r][e]);
                    stability_error(table.view()).ok()
                };
                StrategyStability { strategy, complete_replications: complete.len(), report }
            })
            .collect();
        Summary { cells, stability, failures }
    }

    pub fn stability_of(&self, strategy: Strategy) -> Option<&StabilityReport> {
        self.stability
            .iter()
            .find(|s| s.strategy == strategy)
            .and_then(|s| s.report.as_ref())
    }

    pub fn cells_of(&self, strategy: Strategy) -> impl Iterator<Item = &SummaryCell> {
        self.cells.iter().filter(move |c| c.strategy == strategy)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub summary: Summary,
}

/// Run every replication (in parallel on the current rayon pool).
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let rows: Vec<ResultRow> = (0..config.replications)
        .into_par_iter()
        .flat_map_iter(|rep| match replication_params(config, rep) {
            Ok(params) => run_replication(config, &params, rep),
            Err(e) => failed_rows(config, rep, &config.strategies, &e),
        })
        .collect();
    let summary = Summary::from_rows(&rows);
    Ok(ExperimentOutput { rows, summary })
}
