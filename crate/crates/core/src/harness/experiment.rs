use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::analysis::{edges_to_text, extract_edges};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::loss::{adjacency_summary, linear_castle_fit, AdjacencySummary, LinearFitOptions, Task};
use crate::regularizers::{RegKind, RegularizerSpec};
use crate::synth::{
    add_noise_vars, choose_target, gen_dag, gen_data, standard_names, toy_dag, SemSpec, Sigma,
};
use crate::tensor::{Matrix, Rng};

use super::config::{ExperimentConfig, MetricScale, ModelKind, ValidationMode};
use super::metrics::{
    auroc, average_rank, csv_field, mse, ranks_to_csv, MetricKind, MetricRow, MetricsTable,
    RankSummary,
};
use super::split::{complement, holdout_split, kfold_split, Standardizer};
use super::train::{history_to_csv, predict, train_model, EpochRecord, TrainConfig};

/// One dataset of an experiment: a pool for cross-validation and an
/// optional separate test set (otherwise `test_fraction` of the pool).
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub name: String,
    pub pool: Dataset,
    pub test: Option<Dataset>,
}

/// Synthetic datasets described by `cfg.synth`, each with its own test set.
pub fn synth_datasets(cfg: &ExperimentConfig) -> Result<Vec<ExperimentData>> {
    let s = &cfg.synth;
    (0..s.datasets)
        .map(|i| {
            let mut rng = Rng::derive(cfg.seed, "synth", i as u64);
            let dag = if s.graph == "toy" {
                toy_dag()
            } else {
                let bf = 1 + rng.below(s.max_branching.max(1));
                let mut dag = gen_dag(s.nodes, bf, &mut rng)?;
                choose_target(&mut dag, s.target_mode, &mut rng)?;
                dag
            };
            let mut spec = SemSpec {
                link: s.link,
                ..SemSpec::default()
            };
            if let Some(sigma) = s.sigma {
                spec.sigma = Sigma::Fixed(sigma);
            }
            spec.sigma = Sigma::Fixed(spec.resolve_sigma(&mut rng));
            let mut pool = gen_data(&dag, &spec, s.samples, &mut rng)?;
            let mut test = gen_data(&dag, &spec, s.test_samples, &mut rng)?;
            if s.graph != "toy" {
                standard_names(&mut pool);
                standard_names(&mut test);
            }
            let mut noise_rng = rng.fork(rng.stream() ^ 0x004E_015E);
            let mut pool = add_noise_vars(&pool, s.noise_vars, &mut noise_rng);
            let mut test = add_noise_vars(&test, s.noise_vars, &mut noise_rng);
            let name = format!("synth{i}");
            pool.provenance = format!("{name} seed={} sigma={:?}", cfg.seed, spec.sigma);
            test.provenance = pool.provenance.clone();
            Ok(ExperimentData {
                name,
                pool,
                test: Some(test),
            })
        })
        .collect()
}

/// Outcome of one `(dataset, fold, regulariser)` cell.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub dataset: usize,
    pub fold: usize,
    pub kind: RegKind,
    /// The grid point chosen on validation loss.
    pub chosen: RegularizerSpec,
    pub best_val: f64,
    pub score: f64,
    pub seconds: f64,
    pub epochs: usize,
    pub history: Vec<EpochRecord>,
    /// Adjacency summary of the chosen model (`|W|` for the linear model).
    pub msum: AdjacencySummary,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub table: MetricsTable,
    pub ranks: Vec<RankSummary>,
    pub cells: Vec<CellResult>,
}

impl ExperimentResult {
    pub fn cell(&self, dataset: usize, fold: usize, kind: RegKind) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.dataset == dataset && c.fold == fold && c.kind == kind)
    }
}

/// Grid of candidate settings for one regulariser.
pub fn candidates(cfg: &ExperimentConfig, kind: RegKind) -> Vec<RegularizerSpec> {
    let mk = |strength: f64| RegularizerSpec {
        kind,
        strength,
        beta: 0.0,
    };
    match kind {
        RegKind::Baseline => vec![RegularizerSpec::baseline()],
        RegKind::L1 => cfg.l1_grid.iter().map(|&s| mk(s)).collect(),
        RegKind::L2 => cfg.l2_grid.iter().map(|&s| mk(s)).collect(),
        RegKind::Dropout => cfg.dropout_grid.iter().map(|&s| mk(s)).collect(),
        RegKind::InputNoise => cfg.noise_grid.iter().map(|&s| mk(s)).collect(),
        RegKind::Mixup => vec![mk(cfg.mixup_alpha)],
        RegKind::Sae => vec![mk(cfg.sae_weight)],
        RegKind::Castle => cfg
            .beta_grid
            .iter()
            .map(|&beta| RegularizerSpec {
                kind,
                strength: cfg.lambda,
                beta,
            })
            .collect(),
    }
}

/// Standardized splits of one cross-validation round.
struct Prepared {
    train: Matrix,
    val: Matrix,
    test: Matrix,
    /// Test targets on the scale the metric is reported on.
    test_y: Vec<f64>,
    scaler: Standardizer,
}

fn prepare(cfg: &ExperimentConfig, data: &ExperimentData, di: usize) -> Result<Vec<Prepared>> {
    let (pool, test) = match &data.test {
        Some(t) => (data.pool.clone(), t.clone()),
        None => {
            let mut rng = Rng::derive(cfg.seed, "test-split", di as u64);
            let (rest, held) = holdout_split(data.pool.n(), cfg.test_fraction, &mut rng)?;
            (data.pool.subset(&rest), data.pool.subset(&held))
        }
    };
    if pool.xt.cols() != test.xt.cols() {
        return Err(Error::Data(format!(
            "{}: test set width differs from the pool",
            data.name
        )));
    }
    let task = cfg.train.task;
    let folds = kfold_split(
        pool.n(),
        cfg.folds,
        Rng::derive(cfg.seed, "folds", di as u64).next_u64(),
    )?;
    (0..cfg.folds)
        .map(|f| {
            let rest = complement(&folds, f);
            let (train_idx, val_idx) = match cfg.validation {
                ValidationMode::Fold => (rest, folds[f].clone()),
                ValidationMode::Inner => {
                    let mut rng = Rng::derive(cfg.seed, "inner", ((di as u64) << 32) | f as u64);
                    let (a, b) = holdout_split(rest.len(), cfg.validation_fraction, &mut rng)?;
                    (
                        a.iter().map(|&i| rest[i]).collect(),
                        b.iter().map(|&i| rest[i]).collect(),
                    )
                }
            };
            let raw_train = pool.xt.select_rows(&train_idx);
            let scaler = Standardizer::fit(&raw_train, task)?;
            let train = scaler.apply(&raw_train)?;
            let val = scaler.apply(&pool.xt.select_rows(&val_idx))?;
            let test_std = scaler.apply(&test.xt)?;
            let test_y = if task == Task::Regression && cfg.metric_scale == MetricScale::Raw {
                test.xt.column(0)
            } else {
                test_std.column(0)
            };
            Ok(Prepared {
                train,
                val,
                test: test_std,
                test_y,
                scaler,
            })
        })
        .collect()
}

fn score(cfg: &ExperimentConfig, prep: &Prepared, pred: Vec<f64>) -> Result<f64> {
    match cfg.train.task {
        Task::Regression => {
            let p = if cfg.metric_scale == MetricScale::Raw {
                prep.scaler.target_to_raw(&pred)
            } else {
                pred
            };
            mse(&p, &prep.test_y)
        }
        Task::Binary => auroc(&pred, &prep.test_y),
    }
}

fn run_cell(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    di: usize,
    fold: usize,
    kind: RegKind,
) -> Result<CellResult> {
    let start = Instant::now();
    let seed = Rng::derive(cfg.seed, "cell", ((di as u64) << 32) | fold as u64).next_u64();
    let d = prep.train.cols() - 1;
    let mut best: Option<(
        RegularizerSpec,
        f64,
        Vec<f64>,
        Vec<EpochRecord>,
        AdjacencySummary,
    )> = None;
    for cand in candidates(cfg, kind) {
        let (val, pred, history, msum) = match cfg.model {
            ModelKind::Network => {
                let train_cfg = TrainConfig {
                    subsample: cfg.subsample.resolve(d),
                    ..cfg.train.clone()
                };
                let t = train_model(&prep.train, &prep.val, &cand, &train_cfg, cfg.terms, seed)?;
                let pred = predict(&t.params, &prep.test)?;
                (t.best_val, pred, t.history, adjacency_summary(&t.params))
            }
            ModelKind::Linear => {
                let lambda = if kind == RegKind::Castle {
                    cand.strength
                } else {
                    0.0
                };
                let opts = LinearFitOptions {
                    validation: Some(&prep.val),
                    terms: cfg.terms,
                    ..LinearFitOptions::default()
                };
                let fit = linear_castle_fit(&prep.train, lambda, cand.beta, &opts)?;
                let mut x = prep.test.clone();
                x.set_column(0, &vec![0.0; x.rows()]);
                let pred = x
                    .matmul(&Matrix::column_vector(&fit.w.column(0)))?
                    .into_vec();
                let m = fit.w.map(f64::abs);
                (
                    fit.best_validation.unwrap_or(f64::INFINITY),
                    pred,
                    Vec::new(),
                    AdjacencySummary { m },
                )
            }
        };
        if best.as_ref().is_none_or(|b| val < b.1) {
            best = Some((cand, val, pred, history, msum));
        }
    }
    let (chosen, best_val, pred, history, msum) = best.expect("at least one candidate");
    let score = score(cfg, prep, pred)?;
    Ok(CellResult {
        dataset: di,
        fold,
        kind,
        chosen,
        best_val,
        score,
        seconds: start.elapsed().as_secs_f64(),
        epochs: history.len(),
        history,
        msum,
    })
}

fn metric_kind(task: Task) -> MetricKind {
    match task {
        Task::Regression => MetricKind::Mse,
        Task::Binary => MetricKind::Auroc,
    }
}

/// Runs every `(dataset, fold, regulariser)` cell, in parallel over
/// `cfg.jobs` threads. Results are ordered by dataset, fold and the
/// configured regulariser order, independent of scheduling.
pub fn run_experiment(cfg: &ExperimentConfig, data: &[ExperimentData]) -> Result<ExperimentResult> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Argument("no datasets".into()));
    }
    for d in data {
        if d.pool.task != cfg.train.task {
            return Err(Error::Argument(format!(
                "{}: dataset task {} but config task {}",
                d.name, d.pool.task, cfg.train.task
            )));
        }
    }
    let prepared: Vec<Vec<Prepared>> = data
        .iter()
        .enumerate()
        .map(|(i, d)| prepare(cfg, d, i))
        .collect::<Result<_>>()?;
    let mut jobs = Vec::new();
    for (di, folds) in prepared.iter().enumerate() {
        for fold in 0..folds.len() {
            for &kind in &cfg.regularizers {
                jobs.push((di, fold, kind));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Argument(format!("thread pool: {e}")))?;
    let cells: Vec<CellResult> = pool.install(|| {
        jobs.par_iter()
            .map(|&(di, fold, kind)| run_cell(cfg, &prepared[di][fold], di, fold, kind))
            .collect::<Result<_>>()
    })?;
    let metric = metric_kind(cfg.train.task);
    let mut table = MetricsTable::default();
    for c in &cells {
        table.push(MetricRow {
            dataset: data[c.dataset].name.clone(),
            regularizer: c.kind.name().to_string(),
            fold: c.fold,
            metric,
            score: c.score,
            seconds: c.seconds,
        });
    }
    let ranks = average_rank(&table)?;
    Ok(ExperimentResult {
        table,
        ranks,
        cells,
    })
}

fn cell_name(data: &[ExperimentData], c: &CellResult) -> String {
    let raw = format!("{}_fold{}_{}", data[c.dataset].name, c.fold, c.kind.name());
    raw.chars()
        .map(|ch| {
            if ch.is_ascii_alphanumeric() || "-_.".contains(ch) {
                ch
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes `metrics.csv`, `timing.csv`, `ranks.csv`, `selected.csv`,
/// `history/<cell>.csv` and `edges/<cell>.txt` under `out`.
pub fn write_artifacts(
    cfg: &ExperimentConfig,
    data: &[ExperimentData],
    result: &ExperimentResult,
    out: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out.join("history"))?;
    std::fs::create_dir_all(out.join("edges"))?;
    std::fs::write(out.join("metrics.csv"), result.table.to_csv())?;
    std::fs::write(out.join("timing.csv"), result.table.timing_to_csv())?;
    std::fs::write(out.join("ranks.csv"), ranks_to_csv(&result.ranks))?;
    let mut chosen = String::from("dataset,fold,regularizer,setting,best_val,epochs\n");
    for c in &result.cells {
        let name = cell_name(data, c);
        std::fs::write(
            out.join("history").join(format!("{name}.csv")),
            history_to_csv(&c.history),
        )?;
        let edges = extract_edges(&c.msum, cfg.edge_threshold)?;
        std::fs::write(
            out.join("edges").join(format!("{name}.txt")),
            edges_to_text(&edges, &data[c.dataset].pool.names),
        )?;
        chosen.push_str(&format!(
            "{},{},{},{},{:?},{}\n",
            csv_field(&data[c.dataset].name),
            c.fold,
            c.kind.name(),
            csv_field(&c.chosen.label()),
            c.best_val,
            c.epochs
        ));
    }
    std::fs::write(out.join("selected.csv"), chosen)?;
    Ok(())
}

/// Hyper-parameter swept by [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Lambda,
    Beta,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(SweepParam::Lambda),
            "beta" => Ok(SweepParam::Beta),
            _ => Err(Error::Argument(format!(
                "cannot sweep '{s}' (lambda or beta)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub result: ExperimentResult,
}

/// One experiment per value of `param` (a β sweep fixes the β grid to the
/// single value), each yielding its own rank table.
pub fn sweep(
    cfg: &ExperimentConfig,
    data: &[ExperimentData],
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::Argument("empty sweep".into()));
    }
    values
        .iter()
        .map(|&value| {
            let mut c = cfg.clone();
            match param {
                SweepParam::Lambda => c.lambda = value,
                SweepParam::Beta => c.beta_grid = vec![value],
            }
            Ok(SweepPoint {
                value,
                result: run_experiment(&c, data)?,
            })
        })
        .collect()
}

/// `value,regularizer,mean_rank,std_rank,cells` rows for a sweep.
pub fn sweep_to_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("value,regularizer,mean_rank,std_rank,cells\n");
    for p in points {
        for r in &p.result.ranks {
            out.push_str(&format!(
                "{:?},{},{:.6},{:.6},{}\n",
                p.value,
                csv_field(&r.regularizer),
                r.mean,
                r.std,
                r.cells
            ));
        }
    }
    out
}
