use crate::error::{arg_err, dim_err, Error, Result};
use crate::loss::{
    objective_with_gradient, prediction_loss, subsample_columns, LossSpec, Task, Terms,
};
use crate::network::{
    adam_step, forward_column, init_params_masked, AdamState, Dropout, MaskKind, NetworkParams,
    NetworkShape,
};
use crate::regularizers::{
    input_noise_apply, mixup_batch, weight_decay_gradient_on, weight_decay_penalty_on, RegKind,
    RegularizerSpec,
};
use crate::tensor::{Matrix, Rng};

/// Optimisation settings shared by every regulariser.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub depth: usize,
    /// Hidden width; `d + 1` when `None`.
    pub hidden: Option<usize>,
    pub epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    /// Mini-batch size; the whole training set is one batch below 64 rows.
    pub batch_size: usize,
    /// Features reconstructed per step when sub-sampling (castle only).
    pub subsample: Option<usize>,
    pub task: Task,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            depth: 3,
            hidden: None,
            epochs: 200,
            patience: 30,
            learning_rate: 0.001,
            batch_size: 32,
            subsample: None,
            task: Task::Regression,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return arg_err("epochs and batch size must be positive");
        }
        if self.patience > self.epochs {
            return arg_err(format!(
                "patience {} exceeds epochs {}",
                self.patience, self.epochs
            ));
        }
        if !(self.learning_rate > 0.0) {
            return arg_err("learning rate must be positive");
        }
        if self.subsample == Some(0) {
            return arg_err("subsample count must be positive");
        }
        Ok(())
    }

    pub fn shape(&self, d: usize) -> Result<NetworkShape> {
        NetworkShape::new(d, self.depth, self.hidden.unwrap_or(d + 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean composite objective over the epoch's batches.
    pub train_loss: f64,
    /// Validation prediction loss after the epoch.
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct Trained {
    /// Parameters at the epoch with the lowest validation loss.
    pub params: NetworkParams,
    pub best_epoch: usize,
    pub best_val: f64,
    pub history: Vec<EpochRecord>,
}

pub fn history_to_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for h in history {
        out.push_str(&format!(
            "{},{:?},{:?}\n",
            h.epoch, h.train_loss, h.val_loss
        ));
    }
    out
}

/// Target-column predictions. The target column is zeroed first so that no
/// value of `Y` can reach the prediction.
pub fn predict(params: &NetworkParams, xt: &Matrix) -> Result<Vec<f64>> {
    let mut x = xt.clone();
    x.set_column(0, &vec![0.0; x.rows()]);
    forward_column(params, &x, 0)
}

/// Validation prediction loss.
pub fn validation_loss(params: &NetworkParams, val: &Matrix, task: Task) -> Result<f64> {
    prediction_loss(&predict(params, val)?, &val.column(0), task)
}

fn loss_spec(reg: &RegularizerSpec, task: Task, terms: Terms) -> LossSpec {
    match reg.kind {
        RegKind::Castle => {
            let mut s = LossSpec::new(reg.strength, reg.beta, task);
            s.terms = terms;
            s
        }
        RegKind::Sae => {
            let mut s = LossSpec::new(reg.strength, 0.0, task);
            s.terms = Terms {
                reconstruction: true,
                acyclicity: false,
                l1: false,
                reconstruct_target: true,
            };
            s
        }
        _ => LossSpec::prediction_only(task),
    }
}

/// Mini-batch Adam on `train` with early stopping on the validation
/// prediction loss. Both matrices hold standardized `[Y, X]` rows.
///
/// Random streams are derived from `seed`: `init` for the weights, `shuffle`
/// for batch order, `regularizer` for dropout/noise/MixUp and `subsample` for
/// the reconstruction columns. The first two do not depend on the
/// regulariser, so every benchmark starts from the same weights and sees the
/// same batches.
pub fn train_model(
    train: &Matrix,
    val: &Matrix,
    reg: &RegularizerSpec,
    cfg: &TrainConfig,
    terms: Terms,
    seed: u64,
) -> Result<Trained> {
    cfg.validate()?;
    reg.validate()?;
    if train.cols() != val.cols() {
        return dim_err("training and validation widths differ");
    }
    if train.rows() == 0 || val.rows() == 0 {
        return dim_err("empty training or validation split");
    }
    let d = train.cols() - 1;
    let shape = cfg.shape(d)?;
    let mask = if reg.kind == RegKind::Sae {
        MaskKind::SelfInclusive
    } else {
        MaskKind::Castle
    };
    let mut params = init_params_masked(shape, mask, &mut Rng::derive(seed, "init", 0))?;
    params.seed = seed;
    let mut shuffle_rng = Rng::derive(seed, "shuffle", 0);
    let mut reg_rng = Rng::derive(seed, "regularizer", 0);
    let mut sub_rng = Rng::derive(seed, "subsample", 0);
    let mut adam = AdamState::new(shape, cfg.learning_rate);

    let mut spec = loss_spec(reg, cfg.task, terms);
    spec.soft_labels = reg.kind == RegKind::Mixup;
    let subsample = match (reg.kind, cfg.subsample) {
        (RegKind::Castle, Some(c)) if c < d => Some(c),
        _ => None,
    };
    let n = train.rows();
    let batch = if n < 64 { n } else { cfg.batch_size.min(n) };

    let mut best = params.clone();
    let mut best_val = validation_loss(&params, val, cfg.task)?;
    let mut best_epoch = 0;
    let mut history = Vec::new();

    for epoch in 1..=cfg.epochs {
        let order = shuffle_rng.permutation(n);
        let mut total = 0.0;
        for idx in order.chunks(batch) {
            let mut xb = train.select_rows(idx);
            match reg.kind {
                RegKind::InputNoise if reg.strength > 0.0 => {
                    let y = xb.column(0);
                    xb = input_noise_apply(&xb, reg.strength, &mut reg_rng)?;
                    xb.set_column(0, &y);
                }
                RegKind::Mixup if reg.strength > 0.0 && xb.rows() >= 2 => {
                    let y = xb.column(0);
                    let mixed = mixup_batch(&xb, &y, reg.strength, &mut reg_rng)?;
                    xb = mixed.x;
                    xb.set_column(0, &mixed.y);
                }
                _ => {}
            }
            if let Some(c) = subsample {
                let mut cols = vec![0];
                cols.extend(subsample_columns(d, c, &mut sub_rng)?);
                spec.subsample = Some(cols);
            }
            let dropout = (reg.kind == RegKind::Dropout && reg.strength > 0.0).then(|| Dropout {
                rate: reg.strength,
                rng: &mut reg_rng,
            });
            let (t, mut g) = objective_with_gradient(&params, &xb, &spec, dropout)
                .map_err(|e| annotate(e, epoch))?;
            let mut loss = t.total;
            if matches!(reg.kind, RegKind::L1 | RegKind::L2) && reg.strength > 0.0 {
                let p = if reg.kind == RegKind::L1 { 1 } else { 2 };
                // only the prediction sub-network is trained without reconstruction
                loss += weight_decay_penalty_on(&params, p, reg.strength, &[0])?;
                weight_decay_gradient_on(&params, p, reg.strength, &[0], &mut g)?;
            }
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "epoch {epoch}: training loss is not finite"
                )));
            }
            total += loss * idx.len() as f64;
            adam_step(&mut adam, &mut params, &g).map_err(|e| annotate(e, epoch))?;
        }
        let val_loss = validation_loss(&params, val, cfg.task)?;
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "epoch {epoch}: validation loss is not finite"
            )));
        }
        history.push(EpochRecord {
            epoch,
            train_loss: total / n as f64,
            val_loss,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best = params.clone();
        } else if epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    Ok(Trained {
        params: best,
        best_epoch,
        best_val,
        history,
    })
}

fn annotate(e: Error, epoch: usize) -> Error {
    match e {
        Error::Numeric(m) => Error::Numeric(format!("epoch {epoch}: {m}")),
        other => other,
    }
}
