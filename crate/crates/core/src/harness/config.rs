use std::path::Path;

use crate::error::{arg_err, Error, Result};
use crate::loss::{Task, Terms};
use crate::regularizers::RegKind;
use crate::synth::{Link, TargetMode};

use super::train::TrainConfig;

/// Where the early-stopping set comes from within a cross-validation round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationMode {
    /// The held-out fold.
    Fold,
    /// A random `validation_fraction` of the training folds.
    Inner,
}

/// Scale on which regression MSE is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricScale {
    Standardized,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Network,
    /// The linear model fitted on sufficient statistics.
    Linear,
}

/// How many features are reconstructed per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsample {
    Off,
    /// `min(d, 32)` when `d > 64`, otherwise off.
    Auto,
    Count(usize),
}

impl Subsample {
    pub fn resolve(self, d: usize) -> Option<usize> {
        match self {
            Subsample::Off => None,
            Subsample::Auto => (d > 64).then_some(d.min(32)),
            Subsample::Count(c) => Some(c.min(d)),
        }
    }
}

/// Synthetic data settings used when no CSV is given.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// `toy` for the fixed example graph, otherwise `random`.
    pub graph: String,
    pub nodes: usize,
    /// Upper end of the branching factor, drawn uniformly from `1..=max`
    /// per graph.
    pub max_branching: usize,
    pub samples: usize,
    pub test_samples: usize,
    pub datasets: usize,
    pub link: Link,
    /// Fixed noise standard deviation; `None` draws from `U[0.3, 1]`.
    pub sigma: Option<f64>,
    pub noise_vars: usize,
    pub target_mode: TargetMode,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            graph: "random".into(),
            nodes: 10,
            max_branching: 4,
            samples: 500,
            test_samples: 1000,
            datasets: 1,
            link: Link::Sigmoid,
            sigma: None,
            noise_vars: 0,
            target_mode: TargetMode::WithParents,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub regularizers: Vec<RegKind>,
    pub l1_grid: Vec<f64>,
    pub l2_grid: Vec<f64>,
    pub dropout_grid: Vec<f64>,
    pub noise_grid: Vec<f64>,
    pub mixup_alpha: f64,
    pub sae_weight: f64,
    pub lambda: f64,
    pub beta_grid: Vec<f64>,
    pub folds: usize,
    /// Fraction reserved for testing when a dataset has no separate test set.
    pub test_fraction: f64,
    pub validation: ValidationMode,
    pub validation_fraction: f64,
    pub train: TrainConfig,
    pub subsample: Subsample,
    pub terms: Terms,
    pub seed: u64,
    pub metric_scale: MetricScale,
    pub model: ModelKind,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
    pub edge_threshold: f64,
    pub synth: SynthConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            regularizers: RegKind::ALL.to_vec(),
            l1_grid: vec![0.1, 0.01, 0.001],
            l2_grid: vec![0.1, 0.01, 0.001],
            dropout_grid: vec![0.2, 0.5],
            noise_grid: vec![0.1, 0.01],
            mixup_alpha: 1.0,
            sae_weight: 1.0,
            lambda: 1.0,
            beta_grid: vec![0.001, 0.01, 0.1, 1.0],
            folds: 10,
            test_fraction: 0.2,
            validation: ValidationMode::Fold,
            validation_fraction: 0.2,
            train: TrainConfig::default(),
            subsample: Subsample::Auto,
            terms: Terms::default(),
            seed: 0,
            metric_scale: MetricScale::Standardized,
            model: ModelKind::Network,
            jobs: 0,
            edge_threshold: 0.3,
            synth: SynthConfig::default(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    let out: Vec<f64> = v
        .split(',')
        .map(|s| parse_num(key, s.trim()))
        .collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(Error::Config(format!("{key}: empty list")));
    }
    Ok(out)
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected on/off, got '{v}'"))),
    }
}

fn config_err<T>(key: &str, e: Error) -> Result<T> {
    Err(Error::Config(format!("{key}: {e}")))
}

impl ExperimentConfig {
    /// Sets one `key = value` pair. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "regularizers" => {
                self.regularizers = v
                    .split(',')
                    .map(|s| s.trim().parse::<RegKind>())
                    .collect::<Result<_>>()
                    .or_else(|e| config_err(key, e))?;
            }
            "l1_grid" => self.l1_grid = parse_list(key, v)?,
            "l2_grid" => self.l2_grid = parse_list(key, v)?,
            "dropout_grid" => self.dropout_grid = parse_list(key, v)?,
            "noise_grid" => self.noise_grid = parse_list(key, v)?,
            "mixup_alpha" => self.mixup_alpha = parse_num(key, v)?,
            "sae_weight" => self.sae_weight = parse_num(key, v)?,
            "lambda" => self.lambda = parse_num(key, v)?,
            "beta_grid" => self.beta_grid = parse_list(key, v)?,
            "folds" => self.folds = parse_num(key, v)?,
            "test_fraction" => self.test_fraction = parse_num(key, v)?,
            "validation" => {
                self.validation = match v {
                    "fold" => ValidationMode::Fold,
                    "inner" => ValidationMode::Inner,
                    _ => {
                        return Err(Error::Config(format!(
                            "{key}: expected fold or inner, got '{v}'"
                        )))
                    }
                }
            }
            "validation_fraction" => self.validation_fraction = parse_num(key, v)?,
            "epochs" => self.train.epochs = parse_num(key, v)?,
            "patience" => self.train.patience = parse_num(key, v)?,
            "learning_rate" => self.train.learning_rate = parse_num(key, v)?,
            "batch_size" => self.train.batch_size = parse_num(key, v)?,
            "depth" => self.train.depth = parse_num(key, v)?,
            "hidden" => {
                self.train.hidden = if v == "auto" {
                    None
                } else {
                    Some(parse_num(key, v)?)
                }
            }
            "task" => self.train.task = v.parse::<Task>().or_else(|e| config_err(key, e))?,
            "subsample" => {
                self.subsample = match v {
                    "off" => Subsample::Off,
                    "auto" => Subsample::Auto,
                    n => Subsample::Count(parse_num(key, n)?),
                }
            }
            "reconstruction" => self.terms.reconstruction = parse_bool(key, v)?,
            "acyclicity" => self.terms.acyclicity = parse_bool(key, v)?,
            "l1_inputs" => self.terms.l1 = parse_bool(key, v)?,
            "reconstruct_target" => self.terms.reconstruct_target = parse_bool(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "metric_scale" => {
                self.metric_scale = match v {
                    "standardized" => MetricScale::Standardized,
                    "raw" => MetricScale::Raw,
                    _ => {
                        return Err(Error::Config(format!(
                            "{key}: expected standardized or raw, got '{v}'"
                        )))
                    }
                }
            }
            "model" => {
                self.model = match v {
                    "network" => ModelKind::Network,
                    "linear" => ModelKind::Linear,
                    _ => {
                        return Err(Error::Config(format!(
                            "{key}: expected network or linear, got '{v}'"
                        )))
                    }
                }
            }
            "jobs" => self.jobs = parse_num(key, v)?,
            "edge_threshold" => self.edge_threshold = parse_num(key, v)?,
            "synth_graph" => {
                if v != "toy" && v != "random" {
                    return Err(Error::Config(format!(
                        "{key}: expected toy or random, got '{v}'"
                    )));
                }
                self.synth.graph = v.to_string();
            }
            "synth_nodes" => self.synth.nodes = parse_num(key, v)?,
            "synth_max_branching" => self.synth.max_branching = parse_num(key, v)?,
            "synth_samples" => self.synth.samples = parse_num(key, v)?,
            "synth_test_samples" => self.synth.test_samples = parse_num(key, v)?,
            "synth_datasets" => self.synth.datasets = parse_num(key, v)?,
            "synth_link" => self.synth.link = v.parse::<Link>().or_else(|e| config_err(key, e))?,
            "synth_sigma" => {
                self.synth.sigma = if v == "uniform" {
                    None
                } else {
                    Some(parse_num(key, v)?)
                }
            }
            "synth_noise_vars" => self.synth.noise_vars = parse_num(key, v)?,
            "synth_target" => {
                self.synth.target_mode = v.parse::<TargetMode>().or_else(|e| config_err(key, e))?
            }
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines on top of the defaults. `#` starts a
    /// comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected 'key = value'",
                    i + 1
                )));
            };
            cfg.set(k.trim(), v).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", i + 1)),
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return arg_err(format!("folds must be >= 2, got {}", self.folds));
        }
        self.train.validate()?;
        if self.regularizers.is_empty() {
            return arg_err("no regularizers selected");
        }
        let mut seen = self.regularizers.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.regularizers.len() {
            return arg_err("regularizer listed twice");
        }
        if !(0.0..1.0).contains(&self.test_fraction)
            || !(0.0..1.0).contains(&self.validation_fraction)
        {
            return arg_err("test and validation fractions must be in [0, 1)");
        }
        if !(self.lambda >= 0.0) || self.beta_grid.iter().any(|b| !(*b >= 0.0)) {
            return arg_err("lambda and beta must be >= 0");
        }
        if self.dropout_grid.iter().any(|r| !(0.0..1.0).contains(r)) {
            return arg_err("drop rates must be in [0, 1)");
        }
        let grids = [&self.l1_grid, &self.l2_grid, &self.noise_grid];
        if grids.iter().any(|g| g.iter().any(|v| !(*v >= 0.0)))
            || !(self.mixup_alpha >= 0.0)
            || !(self.sae_weight >= 0.0)
        {
            return arg_err("regularizer strengths must be >= 0");
        }
        if self.model == ModelKind::Linear {
            if let Some(k) = self
                .regularizers
                .iter()
                .find(|k| !matches!(k, RegKind::Baseline | RegKind::Castle))
            {
                return arg_err(format!(
                    "the linear model supports baseline and castle only, not {k}"
                ));
            }
            if self.train.task != Task::Regression {
                return arg_err("the linear model supports regression only");
            }
        }
        if !(self.edge_threshold >= 0.0) {
            return arg_err("edge threshold must be >= 0");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects() {
        let c = ExperimentConfig::parse(
            "folds = 5\n# x\nregularizers = baseline, castle\nbeta_grid = 0.1\n",
        )
        .unwrap();
        assert_eq!(c.folds, 5);
        assert_eq!(c.regularizers, vec![RegKind::Baseline, RegKind::Castle]);
        assert_eq!(c.beta_grid, vec![0.1]);
        assert!(matches!(
            ExperimentConfig::parse("nope = 1"),
            Err(Error::Config(_))
        ));
        assert!(ExperimentConfig::parse("folds = 1").is_err());
        assert!(ExperimentConfig::parse("patience = 300").is_err());
        assert!(ExperimentConfig::parse("folds").is_err());
    }

    #[test]
    fn defaults_follow_protocol() {
        let c = ExperimentConfig::default();
        assert_eq!((c.train.epochs, c.train.patience, c.folds), (200, 30, 10));
        assert_eq!(c.beta_grid, vec![0.001, 0.01, 0.1, 1.0]);
        assert_eq!(c.lambda, 1.0);
        assert_eq!(c.train.learning_rate, 0.001);
    }
}
