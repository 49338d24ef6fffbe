//! The joint network: one sub-network per variable of `X̃ = [Y, X]`, each
//! with its own masked input layer, sharing the hidden layers and owning a
//! single output column.
//!
//! Sub-network `k` computes
//!
//! ```text
//! f_k(X̃) = relu(... relu(relu(X̃ W_in[k]) W_shared[0]) ... W_shared[M-3]) w_out[k]
//! ```
//!
//! with `W_in[k]` of shape `(d+1) × h`, whose row `k` is held at zero so that
//! `f_k` never reads variable `k`. With depth 2 there are no hidden layers
//! and no activation, which reduces the network to the linear model
//! `X̃ W`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{dim_err, Error, Result};
use crate::regularizers::dropout_apply;
use crate::tensor::{gemm, Matrix, Rng};

/// Architecture of the joint network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkShape {
    /// Number of features (the network has `d + 1` variables).
    pub d: usize,
    /// Total number of weight layers, at least 2.
    pub depth: usize,
    /// Width of every hidden layer.
    pub hidden: usize,
}

impl NetworkShape {
    pub fn new(d: usize, depth: usize, hidden: usize) -> Result<Self> {
        let s = Self { d, depth, hidden };
        s.validate()?;
        Ok(s)
    }

    /// Two hidden layers of `d + 1` units.
    pub fn standard(d: usize) -> Self {
        Self {
            d,
            depth: 3,
            hidden: d + 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 1 || self.depth < 2 || self.hidden < 1 {
            return Err(Error::Argument(format!(
                "invalid network shape d={} depth={} hidden={}",
                self.d, self.depth, self.hidden
            )));
        }
        Ok(())
    }

    /// Number of variables, `d + 1`.
    #[inline]
    pub fn vars(&self) -> usize {
        self.d + 1
    }

    #[inline]
    pub fn n_shared(&self) -> usize {
        self.depth - 2
    }

    #[inline]
    pub fn activated(&self) -> bool {
        self.depth >= 3
    }

    /// Total number of weight blocks: inputs, shared layers, output columns.
    pub fn n_blocks(&self) -> usize {
        2 * self.vars() + self.n_shared()
    }
}

/// Which inputs each sub-network is denied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    /// Sub-network `k` never sees variable `k`.
    Castle,
    /// Only the target is hidden from its own sub-network; feature
    /// sub-networks may read themselves (auto-encoder style).
    SelfInclusive,
}

impl MaskKind {
    fn code(self) -> u8 {
        match self {
            MaskKind::Castle => 0,
            MaskKind::SelfInclusive => 1,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(MaskKind::Castle),
            1 => Ok(MaskKind::SelfInclusive),
            _ => Err(Error::Data(format!("unknown mask kind {c}"))),
        }
    }

    /// Rows of `W_in[k]` held at zero.
    pub fn masked_rows(self, k: usize) -> Option<usize> {
        match self {
            MaskKind::Castle => Some(k),
            MaskKind::SelfInclusive if k == 0 => Some(0),
            MaskKind::SelfInclusive => None,
        }
    }
}

/// Weights of the joint network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub shape: NetworkShape,
    pub mask_kind: MaskKind,
    /// `W_in[k]`, each `(d+1) × h`.
    pub input: Vec<Matrix>,
    /// Shared hidden layers, each `h × h`.
    pub shared: Vec<Matrix>,
    /// `w_out[k]`, each `h × 1`.
    pub output: Vec<Matrix>,
    /// Binary masks multiplied into `input` after every update.
    pub masks: Vec<Matrix>,
    /// Seed the parameters were initialised from.
    pub seed: u64,
}

/// Identifies one weight block, for error messages and block iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Input(usize),
    Shared(usize),
    Output(usize),
}

impl std::fmt::Display for Block {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Block::Input(k) => write!(f, "input[{k}]"),
            Block::Shared(m) => write!(f, "shared[{m}]"),
            Block::Output(k) => write!(f, "output[{k}]"),
        }
    }
}

/// Glorot-uniform bound for a block with the given fan-in and fan-out.
pub fn init_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Initialise with the CASTLE mask.
pub fn init_params(shape: NetworkShape, rng: &mut Rng) -> Result<NetworkParams> {
    init_params_masked(shape, MaskKind::Castle, rng)
}

/// Uniform bound for the input layers: each input row starts with expected
/// squared norm `1/(d+1)`, so `M ∘ M` starts with spectral radius near 1
/// and the acyclicity penalty near its linear regime for every `d`.
pub fn input_init_bound(vars: usize, hidden: usize) -> f64 {
    (3.0 / (vars * hidden) as f64).sqrt()
}

/// Uniform initialisation of every block (inputs first, then the shared
/// layers, then the output columns), followed by masking. Shared and output
/// layers use the Glorot bound, input layers [`input_init_bound`]. The draw
/// order does not depend on the mask, so two mask kinds initialised from the
/// same seed agree on every unmasked weight.
pub fn init_params_masked(
    shape: NetworkShape,
    mask_kind: MaskKind,
    rng: &mut Rng,
) -> Result<NetworkParams> {
    shape.validate()?;
    let v = shape.vars();
    let h = shape.hidden;
    let mut draw = |rows: usize, cols: usize, b: f64| {
        Matrix::from_fn(rows, cols, |_, _| rng.uniform_range(-b, b))
    };
    let b_in = input_init_bound(v, h);
    let input: Vec<Matrix> = (0..v).map(|_| draw(v, h, b_in)).collect();
    let shared: Vec<Matrix> = (0..shape.n_shared())
        .map(|_| draw(h, h, init_bound(h, h)))
        .collect();
    let output: Vec<Matrix> = (0..v).map(|_| draw(h, 1, init_bound(h, 1))).collect();
    let masks = build_masks(shape, mask_kind);
    let mut params = NetworkParams {
        shape,
        mask_kind,
        input,
        shared,
        output,
        masks,
        seed: rng.seed(),
    };
    params.apply_masks();
    Ok(params)
}

fn build_masks(shape: NetworkShape, kind: MaskKind) -> Vec<Matrix> {
    let v = shape.vars();
    (0..v)
        .map(|k| {
            let mut m = Matrix::filled(v, shape.hidden, 1.0);
            if let Some(r) = kind.masked_rows(k) {
                m.row_mut(r).fill(0.0);
            }
            m
        })
        .collect()
}

impl NetworkParams {
    /// All-zero weights with masks in place.
    pub fn zeros(shape: NetworkShape, mask_kind: MaskKind) -> Result<Self> {
        shape.validate()?;
        let v = shape.vars();
        let h = shape.hidden;
        Ok(Self {
            shape,
            mask_kind,
            input: (0..v).map(|_| Matrix::zeros(v, h)).collect(),
            shared: (0..shape.n_shared()).map(|_| Matrix::zeros(h, h)).collect(),
            output: (0..v).map(|_| Matrix::zeros(h, 1)).collect(),
            masks: build_masks(shape, mask_kind),
            seed: 0,
        })
    }

    pub fn apply_masks(&mut self) {
        for (w, m) in self.input.iter_mut().zip(&self.masks) {
            for (x, keep) in w.as_mut_slice().iter_mut().zip(m.as_slice()) {
                *x *= keep;
            }
        }
    }

    /// Same weights under a different mask kind (masks re-applied).
    pub fn with_mask_kind(&self, kind: MaskKind) -> NetworkParams {
        let mut p = self.clone();
        p.mask_kind = kind;
        p.masks = build_masks(self.shape, kind);
        p.apply_masks();
        p
    }

    pub fn blocks(&self) -> Vec<Block> {
        let v = self.shape.vars();
        (0..v)
            .map(Block::Input)
            .chain((0..self.shape.n_shared()).map(Block::Shared))
            .chain((0..v).map(Block::Output))
            .collect()
    }

    pub fn block_index(&self, b: Block) -> usize {
        let v = self.shape.vars();
        match b {
            Block::Input(k) => k,
            Block::Shared(m) => v + m,
            Block::Output(k) => v + self.shape.n_shared() + k,
        }
    }

    pub fn block(&self, b: Block) -> &Matrix {
        match b {
            Block::Input(k) => &self.input[k],
            Block::Shared(m) => &self.shared[m],
            Block::Output(k) => &self.output[k],
        }
    }

    pub fn block_mut(&mut self, b: Block) -> &mut Matrix {
        match b {
            Block::Input(k) => &mut self.input[k],
            Block::Shared(m) => &mut self.shared[m],
            Block::Output(k) => &mut self.output[k],
        }
    }

    pub fn all_finite(&self) -> bool {
        self.input
            .iter()
            .chain(&self.shared)
            .chain(&self.output)
            .all(Matrix::all_finite)
    }

    /// Weight matrix of the linear model induced by a depth-2 network:
    /// column `k` is `W_in[k] · w_out[k]`.
    pub fn induced_linear_weights(&self) -> Result<Matrix> {
        if self.shape.depth != 2 {
            return dim_err("induced linear weights need a depth-2 network");
        }
        let v = self.shape.vars();
        let mut w = Matrix::zeros(v, v);
        for k in 0..v {
            let col = self.input[k].matmul(&self.output[k])?;
            w.set_column(k, col.as_slice());
        }
        Ok(w)
    }
}

/// Gradient blocks mirroring [`NetworkParams`]; `None` marks a block the
/// objective did not touch (an exact zero gradient).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub input: Vec<Option<Matrix>>,
    pub shared: Vec<Matrix>,
    pub output: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn empty(shape: NetworkShape) -> Self {
        let v = shape.vars();
        let h = shape.hidden;
        Self {
            input: vec![None; v],
            shared: (0..shape.n_shared()).map(|_| Matrix::zeros(h, h)).collect(),
            output: vec![None; v],
        }
    }

    pub fn input_mut(&mut self, k: usize, shape: NetworkShape) -> &mut Matrix {
        self.input[k].get_or_insert_with(|| Matrix::zeros(shape.vars(), shape.hidden))
    }

    pub fn output_mut(&mut self, k: usize, shape: NetworkShape) -> &mut Matrix {
        self.output[k].get_or_insert_with(|| Matrix::zeros(shape.hidden, 1))
    }

    pub fn block(&self, b: Block) -> Option<&Matrix> {
        match b {
            Block::Input(k) => self.input[k].as_ref(),
            Block::Shared(m) => Some(&self.shared[m]),
            Block::Output(k) => self.output[k].as_ref(),
        }
    }

    /// Dense copy with zeros for untouched blocks.
    pub fn densify(&self, shape: NetworkShape) -> Gradients {
        let mut g = self.clone();
        for k in 0..shape.vars() {
            g.input_mut(k, shape);
            g.output_mut(k, shape);
        }
        g
    }
}

/// Dropout configuration for a training forward pass.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut Rng,
}

/// Per-branch activations recorded by [`forward_train`].
#[derive(Debug, Clone)]
pub struct BranchTrace {
    pub branch: usize,
    /// Post-activation output of the input layer and of every shared layer.
    acts: Vec<Matrix>,
    /// Derivative scale of kept units (1 / (1 - rate) under dropout).
    scale: f64,
    pub output: Vec<f64>,
}

/// Record of a forward pass over a subset of sub-networks.
#[derive(Debug, Clone)]
pub struct Tape<'a> {
    xt: &'a Matrix,
    pub traces: Vec<BranchTrace>,
}

impl Tape<'_> {
    pub fn output(&self, branch: usize) -> Option<&[f64]> {
        self.traces
            .iter()
            .find(|t| t.branch == branch)
            .map(|t| t.output.as_slice())
    }
}

fn check_input(params: &NetworkParams, xt: &Matrix) -> Result<()> {
    if xt.cols() != params.shape.vars() {
        return dim_err(format!(
            "input has {} columns, network expects d + 1 = {}",
            xt.cols(),
            params.shape.vars()
        ));
    }
    Ok(())
}

fn relu_in_place(m: &mut Matrix) {
    m.as_mut_slice().iter_mut().for_each(|x| {
        if *x < 0.0 {
            *x = 0.0
        }
    });
}

/// Forward pass of the listed sub-networks, keeping what the backward pass
/// needs. Dropout, when given, follows every hidden activation.
pub fn forward_train<'a>(
    params: &NetworkParams,
    xt: &'a Matrix,
    branches: &[usize],
    mut dropout: Option<Dropout<'_>>,
) -> Result<Tape<'a>> {
    check_input(params, xt)?;
    let shape = params.shape;
    let scale = match &dropout {
        Some(d) if shape.activated() && d.rate > 0.0 => 1.0 / (1.0 - d.rate),
        _ => 1.0,
    };
    let mut traces = Vec::with_capacity(branches.len());
    for &k in branches {
        if k >= shape.vars() {
            return dim_err(format!("branch {k} out of range"));
        }
        let mut acts = Vec::with_capacity(shape.depth - 1);
        let mut a = xt.matmul(&params.input[k])?;
        for m in 0..=shape.n_shared() {
            if m > 0 {
                a = a.matmul(&params.shared[m - 1])?;
            }
            if shape.activated() {
                relu_in_place(&mut a);
                if let Some(d) = dropout.as_mut() {
                    a = dropout_apply(&a, d.rate, d.rng, true)?;
                }
            }
            acts.push(a.clone());
        }
        let output = a.matmul(&params.output[k])?.into_vec();
        traces.push(BranchTrace {
            branch: k,
            acts,
            scale,
            output,
        });
    }
    Ok(Tape { xt, traces })
}

/// Back-propagates `d objective / d output` of each traced branch into
/// parameter gradients, accumulating into `grads`. `output_grads[i]` belongs
/// to `tape.traces[i]`; `None` skips the branch.
pub fn backprop(
    params: &NetworkParams,
    tape: &Tape<'_>,
    output_grads: &[Option<Vec<f64>>],
    grads: &mut Gradients,
) -> Result<()> {
    let shape = params.shape;
    if output_grads.len() != tape.traces.len() {
        return dim_err("one output gradient per traced branch required");
    }
    let n = tape.xt.rows();
    for (trace, g) in tape.traces.iter().zip(output_grads) {
        let Some(g) = g else { continue };
        if g.len() != n {
            return dim_err(format!(
                "output gradient of length {} for {n} rows",
                g.len()
            ));
        }
        let k = trace.branch;
        let gcol = Matrix::from_vec(n, 1, g.clone())?;
        let last = trace.acts.last().expect("at least one layer");
        gemm(
            1.0,
            last,
            true,
            &gcol,
            false,
            1.0,
            grads.output_mut(k, shape),
        )?;

        // delta = g ⊗ w_out[k]ᵀ
        let w_out = params.output[k].as_slice();
        let mut delta = Matrix::from_fn(n, shape.hidden, |i, j| g[i] * w_out[j]);
        for layer in (0..trace.acts.len()).rev() {
            if shape.activated() {
                let act = trace.acts[layer].as_slice();
                for (dv, &av) in delta.as_mut_slice().iter_mut().zip(act) {
                    *dv = if av > 0.0 { *dv * trace.scale } else { 0.0 };
                }
            }
            if layer == 0 {
                let gin = grads.input_mut(k, shape);
                gemm(1.0, tape.xt, true, &delta, false, 1.0, gin)?;
                for (x, keep) in gin
                    .as_mut_slice()
                    .iter_mut()
                    .zip(params.masks[k].as_slice())
                {
                    *x *= keep;
                }
            } else {
                let w = &params.shared[layer - 1];
                gemm(
                    1.0,
                    &trace.acts[layer - 1],
                    true,
                    &delta,
                    false,
                    1.0,
                    &mut grads.shared[layer - 1],
                )?;
                delta = delta.matmul_t(w)?;
            }
        }
    }
    Ok(())
}

/// Evaluation-mode output of every sub-network: column `k` is `f_k(X̃)`.
pub fn forward(params: &NetworkParams, xt: &Matrix) -> Result<Matrix> {
    let all: Vec<usize> = (0..params.shape.vars()).collect();
    let tape = forward_train(params, xt, &all, None)?;
    let mut out = Matrix::zeros(xt.rows(), params.shape.vars());
    for t in &tape.traces {
        out.set_column(t.branch, &t.output);
    }
    Ok(out)
}

/// Evaluation-mode output of a single sub-network.
pub fn forward_column(params: &NetworkParams, xt: &Matrix, k: usize) -> Result<Vec<f64>> {
    let mut tape = forward_train(params, xt, &[k], None)?;
    Ok(tape.traces.pop().expect("one branch").output)
}

/// Adam optimiser state. Moments are allocated per block on first use, so
/// blocks that never receive a gradient cost nothing and stay untouched.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Option<Matrix>>,
    v: Vec<Option<Matrix>>,
}

impl AdamState {
    pub fn new(shape: NetworkShape, lr: f64) -> Self {
        let nb = shape.n_blocks();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![None; nb],
            v: vec![None; nb],
        }
    }

    pub fn first_moment(&self, idx: usize) -> Option<&Matrix> {
        self.m[idx].as_ref()
    }

    pub fn second_moment(&self, idx: usize) -> Option<&Matrix> {
        self.v[idx].as_ref()
    }
}

/// One Adam update with bias correction; masks are re-applied afterwards.
/// A block with no gradient is treated as a zero gradient, which leaves it
/// unchanged until it has been touched once.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut NetworkParams,
    grads: &Gradients,
) -> Result<()> {
    for b in params.blocks() {
        if let Some(g) = grads.block(b) {
            if !g.all_finite() {
                return Err(Error::Numeric(format!("non-finite gradient in block {b}")));
            }
            if g.shape() != params.block(b).shape() {
                return dim_err(format!("gradient shape mismatch in block {b}"));
            }
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.lr, state.eps);
    for b in params.blocks() {
        let idx = params.block_index(b);
        let g = grads.block(b);
        if g.is_none() && state.m[idx].is_none() {
            continue;
        }
        let w = params.block_mut(b);
        let (rows, cols) = w.shape();
        let m = state.m[idx].get_or_insert_with(|| Matrix::zeros(rows, cols));
        let v = state.v[idx].get_or_insert_with(|| Matrix::zeros(rows, cols));
        let ws = w.as_mut_slice();
        let ms = m.as_mut_slice();
        let vs = v.as_mut_slice();
        match g {
            Some(g) => {
                for (((wi, mi), vi), &gi) in ws.iter_mut().zip(ms).zip(vs).zip(g.as_slice()) {
                    *mi = b1 * *mi + (1.0 - b1) * gi;
                    *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                    *wi -= lr * (*mi / bc1) / ((*vi / bc2).sqrt() + eps);
                }
            }
            None => {
                for ((wi, mi), vi) in ws.iter_mut().zip(ms).zip(vs) {
                    *mi *= b1;
                    *vi *= b2;
                    *wi -= lr * (*mi / bc1) / ((*vi / bc2).sqrt() + eps);
                }
            }
        }
    }
    params.apply_masks();
    Ok(())
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"CASTLECK";
/// Version written into checkpoint headers.
pub const CHECKPOINT_VERSION: u32 = 1;

/// Writes a checkpoint. Layout (all integers little-endian):
///
/// ```text
/// magic    8 bytes  "CASTLECK"
/// version  u32      1
/// d        u64
/// depth    u64
/// hidden   u64
/// mask     u8       0 = castle, 1 = self-inclusive
/// seed     u64
/// blocks   inputs (d+1 of (d+1)×h), shared (depth-2 of h×h), outputs (d+1 of h×1),
///          each as rows u64, cols u64, then rows·cols f64 in row-major order
/// ```
pub fn write_checkpoint(params: &NetworkParams, w: &mut impl Write) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for x in [params.shape.d, params.shape.depth, params.shape.hidden] {
        w.write_all(&(x as u64).to_le_bytes())?;
    }
    w.write_all(&[params.mask_kind.code()])?;
    w.write_all(&params.seed.to_le_bytes())?;
    for b in params.blocks() {
        let m = params.block(b);
        w.write_all(&(m.rows() as u64).to_le_bytes())?;
        w.write_all(&(m.cols() as u64).to_le_bytes())?;
        for x in m.as_slice() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<NetworkParams> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Data("not a checkpoint file (bad magic)".into()));
    }
    let mut vb = [0u8; 4];
    r.read_exact(&mut vb)?;
    let version = u32::from_le_bytes(vb);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Data(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let d = read_u64(r)? as usize;
    let depth = read_u64(r)? as usize;
    let hidden = read_u64(r)? as usize;
    let shape = NetworkShape::new(d, depth, hidden)?;
    let mut mk = [0u8; 1];
    r.read_exact(&mut mk)?;
    let mask_kind = MaskKind::from_code(mk[0])?;
    let seed = read_u64(r)?;
    let mut params = NetworkParams::zeros(shape, mask_kind)?;
    params.seed = seed;
    for b in params.blocks() {
        let rows = read_u64(r)? as usize;
        let cols = read_u64(r)? as usize;
        if (rows, cols) != params.block(b).shape() {
            return Err(Error::Data(format!(
                "block {b} has unexpected shape {rows}x{cols}"
            )));
        }
        let dst = params.block_mut(b).as_mut_slice();
        for x in dst.iter_mut() {
            *x = f64::from_le_bytes(read_u64(r)?.to_le_bytes());
        }
    }
    if !params.all_finite() {
        return Err(Error::Data("checkpoint contains non-finite weights".into()));
    }
    Ok(params)
}

pub fn save_checkpoint(params: &NetworkParams, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(params, &mut f)?;
    f.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<NetworkParams> {
    let file =
        std::fs::File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut f = std::io::BufReader::new(file);
    read_checkpoint(&mut f)
}
