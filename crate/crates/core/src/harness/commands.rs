//! Artifact-producing entry points. Each command-line subcommand is a thin
//! wrapper over one function here.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::analysis::{
    characterize_weights, edges_to_text, evaluate_bound, extract_edges, BoundInputs, BoundReport,
    BoundVariant,
};
use crate::dataset::{ColumnEdge, Dataset};
use crate::error::{Error, Result};
use crate::loss::{adjacency_summary, AdjacencySummary};
use crate::network::{save_checkpoint, NetworkParams};
use crate::regularizers::RegularizerSpec;
use crate::tensor::{Matrix, Rng};

use super::config::ExperimentConfig;
use super::experiment::{
    run_experiment, sweep, sweep_to_csv, synth_datasets, write_artifacts, ExperimentData,
    ExperimentResult, SweepParam, SweepPoint,
};
use super::split::{holdout_split, Standardizer};
use super::train::{history_to_csv, train_model, TrainConfig, Trained};

/// Writes `<name>.csv`, `<name>_test.csv` and `<name>.edges` for every
/// synthetic dataset in `cfg`. Returns the written paths.
pub fn write_synth(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)?;
    let mut paths = Vec::new();
    for d in synth_datasets(cfg)? {
        let pool = out.join(format!("{}.csv", d.name));
        d.pool.write_csv(&pool)?;
        let edges = out.join(format!("{}.edges", d.name));
        d.pool.write_edges(&edges)?;
        paths.push(pool);
        paths.push(edges);
        if let Some(t) = &d.test {
            let p = out.join(format!("{}_test.csv", d.name));
            t.write_csv(&p)?;
            paths.push(p);
        }
    }
    Ok(paths)
}

/// Trains one model on `data`, holding out `cfg.validation_fraction` of the
/// rows for early stopping; features are standardized on the training
/// rows. Writes `model.ckpt`, `history.csv`, `scaler.csv` and `summary.txt`.
pub fn train_to_dir(
    cfg: &ExperimentConfig,
    data: &Dataset,
    reg: &RegularizerSpec,
    out: &Path,
) -> Result<Trained> {
    cfg.validate()?;
    if data.task != cfg.train.task {
        return Err(Error::Argument(format!(
            "dataset task {} but config task {}",
            data.task, cfg.train.task
        )));
    }
    std::fs::create_dir_all(out)?;
    let mut rng = Rng::derive(cfg.seed, "train-split", 0);
    let (train_idx, val_idx) = holdout_split(data.n(), cfg.validation_fraction, &mut rng)?;
    let raw_train = data.xt.select_rows(&train_idx);
    let scaler = Standardizer::fit(&raw_train, cfg.train.task)?;
    let train = scaler.apply(&raw_train)?;
    let val = scaler.apply(&data.xt.select_rows(&val_idx))?;
    let train_cfg = TrainConfig {
        subsample: cfg.subsample.resolve(data.d()),
        ..cfg.train.clone()
    };
    let seed = Rng::derive(cfg.seed, "train", 0).next_u64();
    let t = train_model(&train, &val, reg, &train_cfg, cfg.terms, seed)?;
    save_checkpoint(&t.params, &out.join("model.ckpt"))?;
    std::fs::write(out.join("history.csv"), history_to_csv(&t.history))?;
    std::fs::write(out.join("scaler.csv"), scaler_to_csv(&scaler, &data.names))?;
    let summary = format!(
        "regularizer = {}\ntrain_rows = {}\nvalidation_rows = {}\nbest_epoch = {}\nbest_validation_loss = {:?}\nepochs_run = {}\n",
        reg.label(),
        train_idx.len(),
        val_idx.len(),
        t.best_epoch,
        t.best_val,
        t.history.len()
    );
    std::fs::write(out.join("summary.txt"), summary)?;
    Ok(t)
}

fn scaler_to_csv(s: &Standardizer, names: &[String]) -> String {
    let mut out = String::from("column,mean,std\n");
    for ((n, m), sd) in names.iter().zip(&s.mean).zip(&s.std) {
        let _ = writeln!(out, "{},{:?},{:?}", super::metrics::csv_field(n), m, sd);
    }
    out
}

/// Runs the full grid and writes its artifacts (see [`write_artifacts`]).
pub fn benchmark_to_dir(
    cfg: &ExperimentConfig,
    data: &[ExperimentData],
    out: &Path,
) -> Result<ExperimentResult> {
    let result = run_experiment(cfg, data)?;
    write_artifacts(cfg, data, &result, out)?;
    Ok(result)
}

/// Runs a λ or β sweep and writes `sweep.csv`.
pub fn sweep_to_dir(
    cfg: &ExperimentConfig,
    data: &[ExperimentData],
    param: SweepParam,
    values: &[f64],
    out: &Path,
) -> Result<Vec<SweepPoint>> {
    let points = sweep(cfg, data, param, values)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("sweep.csv"), sweep_to_csv(&points))?;
    Ok(points)
}

/// `M` as CSV with a header of column names and one row per input variable.
pub fn adjacency_to_csv(msum: &AdjacencySummary, names: &[String]) -> String {
    let mut out = String::from("from");
    for n in names {
        out.push(',');
        out.push_str(&super::metrics::csv_field(n));
    }
    out.push('\n');
    for (k, n) in names.iter().enumerate() {
        out.push_str(&super::metrics::csv_field(n));
        for j in 0..names.len() {
            let _ = write!(out, ",{:?}", msum.m[(k, j)]);
        }
        out.push('\n');
    }
    out
}

/// Ground truth for [`analyze_to_dir`].
#[derive(Debug, Clone, Copy)]
pub struct Truth<'a> {
    pub edges: &'a [ColumnEdge],
    pub noise: &'a [bool],
}

/// Writes `adjacency.csv` and `edges.txt` for a trained model, plus
/// `roles.csv` when the ground truth is known. Column 0 is the target.
pub fn analyze_to_dir(
    params: &NetworkParams,
    names: &[String],
    truth: Option<Truth<'_>>,
    threshold: f64,
    out: &Path,
) -> Result<AdjacencySummary> {
    let msum = adjacency_summary(params);
    if names.len() != msum.vars() {
        return Err(Error::Data(format!(
            "{} column names for a model over {} variables",
            names.len(),
            msum.vars()
        )));
    }
    let edges = extract_edges(&msum, threshold)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("adjacency.csv"), adjacency_to_csv(&msum, names))?;
    std::fs::write(out.join("edges.txt"), edges_to_text(&edges, names))?;
    if let Some(t) = truth {
        let roles = characterize_weights(&msum, t.edges, t.noise, 0)?;
        std::fs::write(out.join("roles.csv"), roles.to_csv())?;
    }
    Ok(msum)
}

/// Evaluates the bound on `xt` and writes `bound.txt`.
pub fn bound_to_dir(
    params: &NetworkParams,
    xt: &Matrix,
    inputs: &BoundInputs,
    variant: BoundVariant,
    out: &Path,
) -> Result<BoundReport> {
    let report = evaluate_bound(params, xt, inputs, variant)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("bound.txt"), report.to_text())?;
    Ok(report)
}

/// Default column names `y, x1, ..., xd`.
pub fn default_names(vars: usize) -> Vec<String> {
    (0..vars)
        .map(|k| {
            if k == 0 {
                "y".to_string()
            } else {
                format!("x{k}")
            }
        })
        .collect()
}
