//! Benchmark regularisers sharing one interface.
//!
//! All of them act on the same parallel network. Weight decay, dropout,
//! input noise and MixUp train only the target branch, so at strength zero
//! they reduce exactly to the early-stopping baseline. The auto-encoder
//! benchmark reconstructs every column with a network whose inputs include
//! the column itself.

use rand_distr::{Beta, Distribution};

use crate::error::{arg_err, dim_err, Error, Result};
use crate::network::{forward, Gradients, NetworkParams};
use crate::tensor::{Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegKind {
    Baseline,
    L1,
    L2,
    Dropout,
    InputNoise,
    Mixup,
    Sae,
    Castle,
}

impl RegKind {
    pub const ALL: [RegKind; 8] = [
        RegKind::Baseline,
        RegKind::L1,
        RegKind::L2,
        RegKind::Dropout,
        RegKind::InputNoise,
        RegKind::Mixup,
        RegKind::Sae,
        RegKind::Castle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RegKind::Baseline => "baseline",
            RegKind::L1 => "l1",
            RegKind::L2 => "l2",
            RegKind::Dropout => "dropout",
            RegKind::InputNoise => "input-noise",
            RegKind::Mixup => "mixup",
            RegKind::Sae => "sae",
            RegKind::Castle => "castle",
        }
    }
}

impl std::fmt::Display for RegKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for RegKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RegKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown regularizer '{s}'")))
    }
}

/// One regulariser and its strength.
///
/// `strength` is the decay coefficient for `l1`/`l2`, the drop rate for
/// `dropout`, the noise standard deviation for `input-noise`, the Beta
/// concentration for `mixup` (0 disables mixing), the reconstruction weight
/// for `sae` and λ for `castle`. `beta` is only read by `castle`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizerSpec {
    pub kind: RegKind,
    pub strength: f64,
    pub beta: f64,
}

impl RegularizerSpec {
    pub fn baseline() -> Self {
        Self {
            kind: RegKind::Baseline,
            strength: 0.0,
            beta: 0.0,
        }
    }

    pub fn new(kind: RegKind, strength: f64) -> Result<Self> {
        let s = Self {
            kind,
            strength,
            beta: 0.0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn castle(lambda: f64, beta: f64) -> Result<Self> {
        let s = Self {
            kind: RegKind::Castle,
            strength: lambda,
            beta,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.strength.is_finite() || self.strength < 0.0 {
            return arg_err(format!(
                "{} strength must be finite and >= 0, got {}",
                self.kind, self.strength
            ));
        }
        if self.kind == RegKind::Dropout && self.strength >= 1.0 {
            return arg_err(format!(
                "drop rate must be in [0, 1), got {}",
                self.strength
            ));
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return arg_err(format!("beta must be finite and >= 0, got {}", self.beta));
        }
        Ok(())
    }

    /// Short label such as `l2=0.01` or `castle=1,beta=0.1`.
    pub fn label(&self) -> String {
        match self.kind {
            RegKind::Baseline => "baseline".to_string(),
            RegKind::Castle => format!("castle={},beta={}", self.strength, self.beta),
            k => format!("{k}={}", self.strength),
        }
    }
}

/// `strength · Σ ‖W‖_p^p` over every dense layer (inputs, shared, outputs).
pub fn weight_decay_penalty(params: &NetworkParams, p: u32, strength: f64) -> Result<f64> {
    let all: Vec<usize> = (0..params.shape.vars()).collect();
    weight_decay_penalty_on(params, p, strength, &all)
}

/// Like [`weight_decay_penalty`] but only over the shared layers and the
/// input/output blocks of the listed sub-networks.
pub fn weight_decay_penalty_on(
    params: &NetworkParams,
    p: u32,
    strength: f64,
    branches: &[usize],
) -> Result<f64> {
    let per: fn(&Matrix) -> f64 = match p {
        1 => Matrix::sum_abs,
        2 => Matrix::sum_sq,
        _ => return arg_err(format!("weight decay power must be 1 or 2, got {p}")),
    };
    check_branches(params, branches)?;
    let mut total: f64 = params.shared.iter().map(per).sum();
    for &k in branches {
        total += per(&params.input[k]) + per(&params.output[k]);
    }
    Ok(strength * total)
}

/// Adds the weight-decay gradient to `grads` (sign for p = 1, with 0 at 0).
pub fn weight_decay_gradient(
    params: &NetworkParams,
    p: u32,
    strength: f64,
    grads: &mut Gradients,
) -> Result<()> {
    let all: Vec<usize> = (0..params.shape.vars()).collect();
    weight_decay_gradient_on(params, p, strength, &all, grads)
}

/// Gradient of [`weight_decay_penalty_on`]; other blocks are left alone.
pub fn weight_decay_gradient_on(
    params: &NetworkParams,
    p: u32,
    strength: f64,
    branches: &[usize],
    grads: &mut Gradients,
) -> Result<()> {
    if p != 1 && p != 2 {
        return arg_err(format!("weight decay power must be 1 or 2, got {p}"));
    }
    check_branches(params, branches)?;
    if strength == 0.0 {
        return Ok(());
    }
    let add = |g: &mut Matrix, w: &Matrix| {
        for (gx, &wx) in g.as_mut_slice().iter_mut().zip(w.as_slice()) {
            *gx += if p == 2 {
                2.0 * strength * wx
            } else if wx > 0.0 {
                strength
            } else if wx < 0.0 {
                -strength
            } else {
                0.0
            };
        }
    };
    let shape = params.shape;
    for &k in branches {
        add(grads.input_mut(k, shape), &params.input[k]);
        add(grads.output_mut(k, shape), &params.output[k]);
        // masked entries must stay untouched
        let g = grads.input_mut(k, shape);
        for (gx, &m) in g.as_mut_slice().iter_mut().zip(params.masks[k].as_slice()) {
            *gx *= m;
        }
    }
    for (g, w) in grads.shared.iter_mut().zip(&params.shared) {
        add(g, w);
    }
    Ok(())
}

fn check_branches(params: &NetworkParams, branches: &[usize]) -> Result<()> {
    match branches.iter().find(|&&k| k >= params.shape.vars()) {
        Some(k) => arg_err(format!(
            "branch {k} out of range for {} sub-networks",
            params.shape.vars()
        )),
        None => Ok(()),
    }
}

/// Inverted dropout: in training each unit is kept with probability
/// `1 − rate` and scaled by `1/(1 − rate)`; identity otherwise.
pub fn dropout_apply(
    activations: &Matrix,
    rate: f64,
    rng: &mut Rng,
    training: bool,
) -> Result<Matrix> {
    if !(0.0..1.0).contains(&rate) {
        return arg_err(format!("drop rate must be in [0, 1), got {rate}"));
    }
    if !training || rate == 0.0 {
        return Ok(activations.clone());
    }
    let keep = 1.0 / (1.0 - rate);
    let mut out = activations.clone();
    for v in out.as_mut_slice() {
        *v = if rng.uniform() < rate { 0.0 } else { *v * keep };
    }
    Ok(out)
}

/// `x + N(0, σ²)` elementwise.
pub fn input_noise_apply(x: &Matrix, sigma: f64, rng: &mut Rng) -> Result<Matrix> {
    if !(sigma >= 0.0) {
        return arg_err(format!("noise sigma must be >= 0, got {sigma}"));
    }
    let mut out = x.clone();
    if sigma > 0.0 {
        for v in out.as_mut_slice() {
            *v += rng.normal(0.0, sigma);
        }
    }
    Ok(out)
}

/// Result of one MixUp draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixed {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub lambda: f64,
    pub partner: Vec<usize>,
}

/// `x'_i = λ x_i + (1 − λ) x_{π(i)}` and likewise for `y`, with
/// `λ ~ Beta(α, α)` and `π` a random permutation.
pub fn mixup_batch(x: &Matrix, y: &[f64], alpha: f64, rng: &mut Rng) -> Result<Mixed> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return arg_err(format!("mixup alpha must be positive, got {alpha}"));
    }
    if x.rows() < 2 {
        return arg_err("mixup needs a batch of at least 2 rows");
    }
    let beta = Beta::new(alpha, alpha).map_err(|e| Error::Argument(format!("mixup alpha: {e}")))?;
    let lambda = beta.sample(rng);
    let partner = rng.permutation(x.rows());
    mixup_with(x, y, lambda, &partner)
}

/// MixUp with an explicit coefficient and pairing.
pub fn mixup_with(x: &Matrix, y: &[f64], lambda: f64, partner: &[usize]) -> Result<Mixed> {
    let n = x.rows();
    if y.len() != n || partner.len() != n {
        return dim_err(format!(
            "mixup: {n} rows, {} targets, {} partners",
            y.len(),
            partner.len()
        ));
    }
    if n < 2 {
        return arg_err("mixup needs a batch of at least 2 rows");
    }
    if !(0.0..=1.0).contains(&lambda) {
        return arg_err(format!("mixup coefficient {lambda} outside [0, 1]"));
    }
    if let Some(&bad) = partner.iter().find(|&&p| p >= n) {
        return arg_err(format!("mixup partner {bad} out of range"));
    }
    let mu = 1.0 - lambda;
    let mut xm = Matrix::zeros(n, x.cols());
    for (i, &j) in partner.iter().enumerate() {
        for ((o, a), b) in xm.row_mut(i).iter_mut().zip(x.row(i)).zip(x.row(j)) {
            *o = lambda * a + mu * b;
        }
    }
    let ym = partner
        .iter()
        .enumerate()
        .map(|(i, &j)| lambda * y[i] + mu * y[j])
        .collect();
    Ok(Mixed {
        x: xm,
        y: ym,
        lambda,
        partner: partner.to_vec(),
    })
}

/// `(1/N) ‖X̃ − f(X̃)‖²_F` over all columns of the network's outputs.
pub fn sae_loss(params: &NetworkParams, xt: &Matrix) -> Result<f64> {
    let pred = forward(params, xt)?;
    crate::loss::reconstruction_loss(&pred, xt, None)
}
