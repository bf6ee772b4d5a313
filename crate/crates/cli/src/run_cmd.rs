use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use deconfound::report::{write_plotdata, write_results_csv, write_stability_csv, write_summary_csv};
use deconfound::{builtin_config, run_experiment, BuiltinName, ExperimentConfig};
use sha2::{Digest, Sha256};

use crate::config::{load_config, RunManifest};
use crate::{CliError, RunArgs};

/// Write through a temporary sibling and rename, so readers never see a partial file.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<String, CliError> {
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, dir.join(name))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn resolve(args: &RunArgs) -> Result<(ExperimentConfig, String), CliError> {
    let (mut config, source) = match (&args.builtin, &args.config) {
        (Some(name), _) => (builtin_config(name.parse::<BuiltinName>()?), name.clone()),
        (None, Some(path)) => (load_config(path)?, path.display().to_string()),
        (None, None) => return Err(CliError::Validation("need --builtin or --config".into())),
    };
    if let Some(reps) = args.reps {
        config.replications = reps;
    }
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    config.validate()?;
    Ok((config, source))
}

pub fn run(args: RunArgs) -> Result<(), CliError> {
    let (config, source) = resolve(&args)?;
    let started = chrono::Utc::now().to_rfc3339();

    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(t) = args.threads {
            if t == 0 {
                return Err(CliError::Validation("--threads must be at least 1".into()));
            }
            b = b.num_threads(t);
        }
        b.build().map_err(|e| CliError::Runtime(e.to_string()))?
    };
    let output = pool.install(|| run_experiment(&config))?;

    fs::create_dir_all(&args.out)?;
    let mut outputs = BTreeMap::new();
    let mut emit = |name: String, bytes: Vec<u8>| -> Result<(), CliError> {
        let digest = write_atomic(&args.out, &name, &bytes)?;
        outputs.insert(name, digest);
        Ok(())
    };

    let mut buf = Vec::new();
    write_results_csv(&output.rows, &mut buf)?;
    emit("results.csv".into(), buf)?;
    let mut buf = Vec::new();
    write_summary_csv(&output.summary, &mut buf)?;
    emit("summary.csv".into(), buf)?;
    let mut buf = Vec::new();
    write_stability_csv(&output.summary, &mut buf)?;
    emit("stability.csv".into(), buf)?;
    for &strategy in &config.strategies {
        let mut buf = Vec::new();
        write_plotdata(&output.summary, strategy, &mut buf)?;
        emit(format!("plotdata-{strategy}.tsv"), buf)?;
    }

    let failed: usize = output.summary.failures.values().sum();
    let manifest = RunManifest {
        tool: "deconfound".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        source,
        master_seed: config.master_seed,
        started,
        finished: chrono::Utc::now().to_rfc3339(),
        outputs,
        failures: output.summary.failures.clone(),
        config: config.clone(),
    };
    let text = toml::to_string(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_atomic(&args.out, "manifest.toml", text.as_bytes())?;

    eprintln!(
        "{} rows ({} failed) from {} replications written to {}",
        output.rows.len(),
        failed,
        config.replications,
        args.out.display()
    );
    for s in &output.summary.stability {
        if let Some(r) = &s.report {
            eprintln!("  {:<16} stability error {:.6}", s.strategy.name(), r.stability_error);
        }
    }
    Ok(())
}
