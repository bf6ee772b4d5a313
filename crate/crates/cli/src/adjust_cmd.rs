use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use deconfound::adjust::{fit_adjustment_with, transform, AdjustOptions};
use deconfound::{AdjustmentModel, Dataset, Task};
use ndarray::{Array2, ArrayView2};

use crate::CliError;

#[derive(Debug, Args)]
pub struct AdjustArgs {
    /// Training CSV with features, confounders and the label.
    #[arg(long, required_unless_present = "model")]
    train: Option<PathBuf>,
    /// Test CSV with features and confounders; a label column, if present, is ignored.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Confounder column names.
    #[arg(long, value_delimiter = ',', required = true)]
    confounders: Vec<String>,
    /// Label column name.
    #[arg(long, required_unless_present = "model")]
    label: Option<String>,
    #[arg(long, default_value = "adjusted")]
    out: PathBuf,
    /// Fit a per-feature intercept as well.
    #[arg(long)]
    intercept: bool,
    /// Apply a previously written model.toml instead of fitting one.
    #[arg(long, conflicts_with = "intercept")]
    model: Option<PathBuf>,
}

struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
    path: PathBuf,
}

impl Table {
    fn read(path: &Path) -> Result<Table, CliError> {
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let headers = reader
            .headers()
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let rows = reader
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        Ok(Table { headers, rows, path: path.to_path_buf() })
    }

    fn index(&self, name: &str) -> Result<usize, CliError> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::Validation(format!("{}: no column `{name}`", self.path.display()))
        })
    }

    /// Numeric matrix of the named columns, in the given order.
    fn numeric(&self, names: &[String]) -> Result<Array2<f64>, CliError> {
        let cols = names.iter().map(|n| self.index(n)).collect::<Result<Vec<_>, _>>()?;
        let mut out = Array2::zeros((self.rows.len(), cols.len()));
        for (i, row) in self.rows.iter().enumerate() {
            for (k, &j) in cols.iter().enumerate() {
                let cell = row[j].trim();
                out[[i, k]] = cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    CliError::Validation(format!(
                        "{}: row {}, column `{}`: `{cell}` is not a finite number",
                        self.path.display(),
                        i + 2,
                        names[k]
                    ))
                })?;
            }
        }
        Ok(out)
    }
}

fn write_csv(path: &Path, blocks: &[(&[String], ArrayView2<f64>)]) -> Result<(), CliError> {
    let runtime = |e: csv::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    let tmp = path.with_extension("csv.tmp");
    let mut w = csv::Writer::from_path(&tmp).map_err(runtime)?;
    let header: Vec<&str> = blocks.iter().flat_map(|(n, _)| n.iter().map(String::as_str)).collect();
    w.write_record(&header).map_err(runtime)?;
    let n = blocks.first().map_or(0, |(_, a)| a.nrows());
    for i in 0..n {
        let record: Vec<String> =
            blocks.iter().flat_map(|(_, a)| a.row(i).iter().map(|v| v.to_string()).collect::<Vec<_>>()).collect();
        w.write_record(&record).map_err(runtime)?;
    }
    w.flush()?;
    drop(w);
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn run(args: AdjustArgs) -> Result<(), CliError> {
    let train = args.train.as_deref().map(Table::read).transpose()?;
    let test = args.test.as_deref().map(Table::read).transpose()?;

    // Features are every column that is neither a confounder nor the label.
    let reference = train.as_ref().or(test.as_ref()).ok_or_else(|| {
        CliError::Validation("nothing to adjust: give --train and/or --test".into())
    })?;
    let features: Vec<String> = reference
        .headers
        .iter()
        .filter(|h| !args.confounders.contains(h) && Some(*h) != args.label.as_ref())
        .cloned()
        .collect();
    if features.is_empty() {
        return Err(CliError::Validation("no feature columns left after removing confounders and label".into()));
    }

    let model = match &args.model {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
            AdjustmentModel::from_toml(&text)?
        }
        None => {
            let t = train.as_ref().expect("clap requires --train without --model");
            let label = args.label.as_ref().expect("clap requires --label without --model");
            let y = t.numeric(std::slice::from_ref(label))?.column(0).to_owned();
            let data = Dataset::new(t.numeric(&features)?, t.numeric(&args.confounders)?, y, Task::Regression)?;
            fit_adjustment_with(&data, &AdjustOptions { intercept: args.intercept })?
        }
    };

    fs::create_dir_all(&args.out)?;
    if args.model.is_none() {
        let path = args.out.join("model.toml");
        fs::write(path.with_extension("toml.tmp"), model.to_toml())?;
        fs::rename(path.with_extension("toml.tmp"), &path)?;
    }

    if let Some(t) = &train {
        let c = t.numeric(&args.confounders)?;
        let adjusted = transform(t.numeric(&features)?.view(), c.view(), &model)?;
        let mut blocks = vec![(features.as_slice(), adjusted.view()), (args.confounders.as_slice(), c.view())];
        let label_names;
        let y: Array2<f64>;
        if let Some(label) = &args.label {
            label_names = vec![label.clone()];
            y = t.numeric(&label_names)?;
            blocks.push((label_names.as_slice(), y.view()));
        }
        write_csv(&args.out.join("train_adjusted.csv"), &blocks)?;
    }
    if let Some(t) = &test {
        // Only feature and confounder columns are parsed; test labels are never read.
        let c = t.numeric(&args.confounders)?;
        let adjusted = transform(t.numeric(&features)?.view(), c.view(), &model)?;
        write_csv(
            &args.out.join("test_adjusted.csv"),
            &[(features.as_slice(), adjusted.view()), (args.confounders.as_slice(), c.view())],
        )?;
    }
    eprintln!("adjusted {} features against {} confounders into {}", features.len(), args.confounders.len(), args.out.display());
    Ok(())
}
