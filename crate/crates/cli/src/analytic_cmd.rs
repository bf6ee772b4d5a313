use std::path::PathBuf;

use clap::Args;
use deconfound::metrics::{analytic_expected_mse, TestMoments};
use deconfound::models::LinearWeights;
use deconfound::scm::ScmParamsFile;
use deconfound::ScmParams;
use ndarray::{Array1, Array2};

use crate::{fmt_sig, CliError};

#[derive(Debug, Args)]
pub struct AnalyticArgs {
    /// Structural parameters as TOML (`beta_xy`, `beta_xc` rows, `beta_yc`, `rho`, `sigma2_x`).
    #[arg(long, conflicts_with_all = ["beta_xy", "beta_xc", "beta_yc", "rho", "sigma2_x"])]
    params: Option<PathBuf>,
    /// Feature loadings on Y, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    beta_xy: Option<Vec<f64>>,
    /// Feature loadings on C, row-major p x m (default: zeros).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    beta_xc: Option<Vec<f64>>,
    /// Outcome loadings on C (default: a single 0).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    beta_yc: Option<Vec<f64>>,
    #[arg(long, allow_negative_numbers = true)]
    rho: Option<f64>,
    #[arg(long)]
    sigma2_x: Option<f64>,

    /// Var(Y) in the test environment.
    #[arg(long)]
    var_y: f64,
    /// Var(C_i), one per confounder, or one value for all (default 1).
    #[arg(long, value_delimiter = ',')]
    var_c: Option<Vec<f64>>,
    /// Cov(Y, C_i), one per confounder, or one value for all (default 0).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    cov_yc: Option<Vec<f64>>,
    /// Full Cov(C), row-major m x m (default: diagonal with var_c).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    cov_cc: Option<Vec<f64>>,

    /// Fixed predictor weights, one per feature.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    weights: Vec<f64>,
    /// Score the predictor on oracle-adjusted features.
    #[arg(long)]
    adjusted: bool,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn params_of(args: &AnalyticArgs) -> Result<ScmParams, CliError> {
    if let Some(path) = &args.params {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        let file: ScmParamsFile =
            toml::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        return Ok(ScmParams::try_from(file)?);
    }
    let beta_xy = args.beta_xy.clone().ok_or_else(|| invalid("need --params or --beta-xy"))?;
    let beta_yc = args.beta_yc.clone().unwrap_or_else(|| vec![0.0]);
    let (p, m) = (beta_xy.len(), beta_yc.len());
    let flat = args.beta_xc.clone().unwrap_or_else(|| vec![0.0; p * m]);
    if flat.len() != p * m {
        return Err(invalid(format!("--beta-xc needs {} values ({p} x {m}), got {}", p * m, flat.len())));
    }
    let params = ScmParams {
        beta_xy: Array1::from(beta_xy),
        beta_xc: Array2::from_shape_vec((p, m), flat).expect("length checked"),
        beta_yc: Array1::from(beta_yc),
        rho: args.rho.unwrap_or(0.0),
        sigma2_x: args.sigma2_x.unwrap_or(1.0),
    };
    params.validate()?;
    Ok(params)
}

/// Expand a per-confounder option: absent, one value for all, or exactly `m` values.
fn per_confounder(name: &str, values: &Option<Vec<f64>>, m: usize, default: f64) -> Result<Array1<f64>, CliError> {
    match values.as_deref() {
        None => Ok(Array1::from_elem(m, default)),
        Some([v]) => Ok(Array1::from_elem(m, *v)),
        Some(v) if v.len() == m => Ok(Array1::from(v.to_vec())),
        Some(v) => Err(invalid(format!("--{name} needs 1 or {m} values, got {}", v.len()))),
    }
}

fn moments_of(args: &AnalyticArgs, m: usize) -> Result<TestMoments, CliError> {
    let var_c = per_confounder("var-c", &args.var_c, m, 1.0)?;
    let cov_yc = per_confounder("cov-yc", &args.cov_yc, m, 0.0)?;
    let cov_cc = match &args.cov_cc {
        None => Array2::from_diag(&var_c),
        Some(flat) if flat.len() == m * m => {
            Array2::from_shape_vec((m, m), flat.clone()).expect("length checked")
        }
        Some(flat) => return Err(invalid(format!("--cov-cc needs {} values, got {}", m * m, flat.len()))),
    };
    let moments = TestMoments { var_y: args.var_y, var_c, cov_cc, cov_yc };
    moments.validate(m)?;
    Ok(moments)
}

pub fn run(args: AnalyticArgs) -> Result<(), CliError> {
    let params = params_of(&args)?;
    let env = moments_of(&args, params.m())?;
    let weights = LinearWeights { beta_hat: Array1::from(args.weights.clone()) };
    let value = analytic_expected_mse(&params, &env, &weights, args.adjusted)?;
    println!("{}", fmt_sig(value, 12));
    Ok(())
}
