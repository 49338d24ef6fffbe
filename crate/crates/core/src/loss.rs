//! The composite training objective
//!
//! ```text
//! prediction(Y, f_0(X̃)) + λ · ( L_N + R + β · V )
//! ```
//!
//! where `L_N` is the masked reconstruction loss over a set of columns,
//! `R = (tr(exp(M ∘ M)) − d − 1)²` the acyclicity penalty on the
//! adjacency summary `M[k][j] = ‖row k of W_in[j]‖₂`, and `V` the ℓ1 norm
//! of all input layers. Also holds the closed-form linear variant fitted
//! on sufficient statistics.

use crate::error::{arg_err, dim_err, Error, Result};
use crate::network::{backprop, forward_train, Dropout, Gradients, NetworkParams};
use crate::tensor::{mat_exp, Matrix, Rng};

/// Kind of supervised target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Task {
    #[default]
    Regression,
    Binary,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(Task::Regression),
            "binary" | "classification" | "binary-classification" => Ok(Task::Binary),
            other => Err(Error::Argument(format!("unknown task '{other}'"))),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Regression => "regression",
            Task::Binary => "binary",
        })
    }
}

/// Switches for the regulariser terms (all on by default).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Terms {
    pub reconstruction: bool,
    pub acyclicity: bool,
    pub l1: bool,
    /// Whether the target column is part of the reconstruction term, on top
    /// of the prediction loss.
    pub reconstruct_target: bool,
}

impl Default for Terms {
    fn default() -> Self {
        Self {
            reconstruction: true,
            acyclicity: true,
            l1: true,
            reconstruct_target: true,
        }
    }
}

/// Specification of the scalar objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSpec {
    pub lambda: f64,
    pub beta: f64,
    /// Columns entering the reconstruction term; all when `None`.
    pub subsample: Option<Vec<usize>>,
    pub task: Task,
    pub terms: Terms,
    /// Accept binary targets anywhere in `[0, 1]` (mixed labels).
    pub soft_labels: bool,
}

impl LossSpec {
    pub fn new(lambda: f64, beta: f64, task: Task) -> Self {
        Self {
            lambda,
            beta,
            subsample: None,
            task,
            terms: Terms::default(),
            soft_labels: false,
        }
    }

    /// Prediction loss only.
    pub fn prediction_only(task: Task) -> Self {
        Self::new(0.0, 0.0, task)
    }

    pub fn validate(&self, vars: usize) -> Result<()> {
        if !(self.lambda >= 0.0) || !(self.beta >= 0.0) {
            return arg_err(format!(
                "lambda and beta must be >= 0 (got {}, {})",
                self.lambda, self.beta
            ));
        }
        if let Some(s) = &self.subsample {
            if s.is_empty() {
                return arg_err("empty reconstruction subsample");
            }
            if let Some(&bad) = s.iter().find(|&&c| c >= vars) {
                return arg_err(format!("subsample column {bad} out of range"));
            }
        }
        Ok(())
    }

    fn reg_active(&self) -> bool {
        self.lambda > 0.0
    }

    /// Columns reconstructed under this spec (empty if the term is off).
    pub fn reconstruction_columns(&self, vars: usize) -> Vec<usize> {
        if !self.reg_active() || !self.terms.reconstruction {
            return Vec::new();
        }
        let mut c = match &self.subsample {
            Some(s) => {
                let mut c = s.clone();
                c.sort_unstable();
                c.dedup();
                c
            }
            None => (0..vars).collect(),
        };
        if !self.terms.reconstruct_target {
            c.retain(|&k| k != 0);
        }
        c
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_labels(y: &[f64]) -> Result<()> {
    if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::Data(format!("binary label {bad} is not 0 or 1")));
    }
    Ok(())
}

/// Mean squared error for regression; mean binary cross-entropy of
/// `sigmoid(pred)` for classification (`pred` are logits).
pub fn prediction_loss(pred: &[f64], y: &[f64], task: Task) -> Result<f64> {
    prediction_loss_grad(pred, y, task).map(|(l, _)| l)
}

/// Loss and its derivative with respect to `pred`.
pub fn prediction_loss_grad(pred: &[f64], y: &[f64], task: Task) -> Result<(f64, Vec<f64>)> {
    if task == Task::Binary {
        check_labels(y)?;
    }
    loss_grad(pred, y, task)
}

fn loss_grad(pred: &[f64], y: &[f64], task: Task) -> Result<(f64, Vec<f64>)> {
    if pred.len() != y.len() || pred.is_empty() {
        return dim_err(format!(
            "prediction of length {} vs {} targets",
            pred.len(),
            y.len()
        ));
    }
    let n = pred.len() as f64;
    match task {
        Task::Regression => {
            let mut loss = 0.0;
            let grad = pred
                .iter()
                .zip(y)
                .map(|(&p, &t)| {
                    let r = p - t;
                    loss += r * r;
                    2.0 * r / n
                })
                .collect();
            Ok((loss / n, grad))
        }
        Task::Binary => {
            if let Some(bad) = y.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::Data(format!("binary label {bad} outside [0, 1]")));
            }
            let mut loss = 0.0;
            let grad = pred
                .iter()
                .zip(y)
                .map(|(&z, &t)| {
                    loss += z.max(0.0) - t * z + (-z.abs()).exp().ln_1p();
                    (sigmoid(z) - t) / n
                })
                .collect();
            Ok((loss / n, grad))
        }
    }
}

/// `(1/N) Σ_{k ∈ columns} Σ_i (xt[i,k] − pred[i,k])²`; all columns when
/// `subsample` is `None`.
pub fn reconstruction_loss(pred: &Matrix, xt: &Matrix, subsample: Option<&[usize]>) -> Result<f64> {
    if pred.shape() != xt.shape() {
        return dim_err(format!(
            "prediction {:?} vs data {:?}",
            pred.shape(),
            xt.shape()
        ));
    }
    let all: Vec<usize>;
    let cols = match subsample {
        Some([]) => return arg_err("empty reconstruction subsample"),
        Some(s) => s,
        None => {
            all = (0..xt.cols()).collect();
            &all
        }
    };
    if let Some(&bad) = cols.iter().find(|&&c| c >= xt.cols()) {
        return arg_err(format!("column {bad} out of range"));
    }
    let mut total = 0.0;
    for r in 0..xt.rows() {
        let (p, x) = (pred.row(r), xt.row(r));
        for &c in cols {
            let e = x[c] - p[c];
            total += e * e;
        }
    }
    Ok(total / xt.rows() as f64)
}

/// The `(d+1) × (d+1)` matrix of input-row norms.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencySummary {
    pub m: Matrix,
}

impl AdjacencySummary {
    pub fn vars(&self) -> usize {
        self.m.rows()
    }
}

/// `M[k][j] = ‖row k of W_in[j]‖₂`: how strongly variable `k` feeds the
/// sub-network reconstructing variable `j`.
pub fn adjacency_summary(params: &NetworkParams) -> AdjacencySummary {
    let v = params.shape.vars();
    let mut m = Matrix::zeros(v, v);
    for (j, w) in params.input.iter().enumerate() {
        for k in 0..v {
            m[(k, j)] = w.row(k).iter().map(|x| x * x).sum::<f64>().sqrt();
        }
    }
    AdjacencySummary { m }
}

/// `(tr(exp(M ∘ M)) − n)²` for an `n × n` non-negative matrix.
pub fn acyclicity_penalty(msum: &AdjacencySummary) -> Result<f64> {
    acyclicity_value(&msum.m).map(|(h, _)| h * h)
}

fn acyclicity_value(m: &Matrix) -> Result<(f64, Matrix)> {
    if !m.is_square() {
        return dim_err(format!("adjacency summary is {}x{}", m.rows(), m.cols()));
    }
    let sq = m.hadamard(m)?;
    let e = mat_exp(&sq)?;
    let h = e.trace() - m.rows() as f64;
    if !h.is_finite() {
        return Err(Error::Numeric("acyclicity penalty is not finite".into()));
    }
    Ok((h, e))
}

/// Penalty and its gradient with respect to `M`:
/// `dR/dM = 2 (tr(E) − n) · Eᵀ ∘ 2M` with `E = exp(M ∘ M)`.
pub fn acyclicity_with_gradient(m: &Matrix) -> Result<(f64, Matrix)> {
    let (h, e) = acyclicity_value(m)?;
    let n = m.rows();
    let grad = Matrix::from_fn(n, n, |k, j| 2.0 * h * e[(j, k)] * 2.0 * m[(k, j)]);
    if !grad.all_finite() {
        return Err(Error::Numeric("acyclicity gradient is not finite".into()));
    }
    Ok((h * h, grad))
}

/// Sum of absolute values of all input-layer weights.
pub fn input_l1(params: &NetworkParams) -> f64 {
    params.input.iter().map(Matrix::sum_abs).sum()
}

/// Value of every term of the objective.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ObjectiveTerms {
    pub prediction: f64,
    pub reconstruction: f64,
    pub acyclicity: f64,
    pub l1: f64,
    pub total: f64,
}

/// Evaluates the objective. For regression this is exactly
/// `prediction_loss + λ (reconstruction_loss + acyclicity_penalty + β input_l1)`;
/// for classification the target column of the reconstruction term compares
/// `sigmoid(f_0)` with the label.
pub fn castle_objective(params: &NetworkParams, xt: &Matrix, spec: &LossSpec) -> Result<f64> {
    objective_terms(params, xt, spec, None, false).map(|(t, _)| t.total)
}

/// Objective terms and exact gradient. `dropout` applies to the forward pass.
pub fn objective_with_gradient(
    params: &NetworkParams,
    xt: &Matrix,
    spec: &LossSpec,
    dropout: Option<Dropout<'_>>,
) -> Result<(ObjectiveTerms, Gradients)> {
    let (t, g) = objective_terms(params, xt, spec, dropout, true)?;
    Ok((t, g.expect("gradient requested")))
}

fn objective_terms(
    params: &NetworkParams,
    xt: &Matrix,
    spec: &LossSpec,
    dropout: Option<Dropout<'_>>,
    want_grad: bool,
) -> Result<(ObjectiveTerms, Option<Gradients>)> {
    let shape = params.shape;
    let v = shape.vars();
    spec.validate(v)?;
    if xt.cols() != v {
        return dim_err(format!(
            "data has {} columns, network expects {v}",
            xt.cols()
        ));
    }
    let n = xt.rows();
    if n == 0 {
        return dim_err("empty batch");
    }
    let recon_cols = spec.reconstruction_columns(v);
    let mut branches = vec![0usize];
    branches.extend(recon_cols.iter().copied().filter(|&c| c != 0));

    let tape = forward_train(params, xt, &branches, dropout)?;
    let y = xt.column(0);
    let mut terms = ObjectiveTerms::default();
    let mut out_grads: Vec<Option<Vec<f64>>> = vec![None; tape.traces.len()];

    let (pl, mut g0) = if spec.soft_labels {
        loss_grad(&tape.traces[0].output, &y, spec.task)?
    } else {
        prediction_loss_grad(&tape.traces[0].output, &y, spec.task)?
    };
    terms.prediction = pl;

    let lam = spec.lambda;
    let nf = n as f64;
    for (ti, trace) in tape.traces.iter().enumerate() {
        let k = trace.branch;
        if !recon_cols.contains(&k) {
            continue;
        }
        let mut loss = 0.0;
        let mut g = vec![0.0; n];
        for (i, gi) in g.iter_mut().enumerate() {
            let f = trace.output[i];
            let x = xt[(i, k)];
            if k == 0 && spec.task == Task::Binary {
                let p = sigmoid(f);
                let r = p - x;
                loss += r * r;
                *gi = lam * 2.0 * r * p * (1.0 - p) / nf;
            } else {
                let r = f - x;
                loss += r * r;
                *gi = lam * 2.0 * r / nf;
            }
        }
        terms.reconstruction += loss / nf;
        if ti == 0 {
            for (a, b) in g0.iter_mut().zip(&g) {
                *a += b;
            }
        } else {
            out_grads[ti] = Some(g);
        }
    }
    out_grads[0] = Some(g0);

    let mut grads = if want_grad {
        let mut g = Gradients::empty(shape);
        backprop(params, &tape, &out_grads, &mut g)?;
        Some(g)
    } else {
        None
    };

    let acyclic = spec.reg_active() && spec.terms.acyclicity;
    let sparse = spec.reg_active() && spec.terms.l1;
    let dm = if acyclic {
        let msum = adjacency_summary(params);
        let (r, dm) = acyclicity_with_gradient(&msum.m)?;
        terms.acyclicity = r;
        Some((msum.m, dm))
    } else {
        None
    };
    if sparse {
        terms.l1 = input_l1(params);
    }
    let l1_coef = if sparse { lam * spec.beta } else { 0.0 };
    if let Some(g) = grads.as_mut().filter(|_| dm.is_some() || l1_coef != 0.0) {
        // one pass over the input blocks for both terms
        for j in 0..v {
            let gin = g.input_mut(j, shape);
            let w = &params.input[j];
            for k in 0..v {
                let coef = match &dm {
                    Some((m, dm)) if m[(k, j)] != 0.0 => lam * dm[(k, j)] / m[(k, j)],
                    _ => 0.0,
                };
                for (gx, &wx) in gin.row_mut(k).iter_mut().zip(w.row(k)) {
                    *gx += coef * wx;
                    if wx > 0.0 {
                        *gx += l1_coef;
                    } else if wx < 0.0 {
                        *gx -= l1_coef;
                    }
                }
            }
        }
    }

    terms.total =
        terms.prediction + lam * (terms.reconstruction + terms.acyclicity + spec.beta * terms.l1);
    if !terms.total.is_finite() {
        return Err(Error::Numeric(format!(
            "objective is not finite ({terms:?})"
        )));
    }
    Ok((terms, grads))
}

/// `count` distinct feature columns (indices `1..=d`), sorted.
pub fn subsample_columns(d: usize, count: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if count < 1 || count > d {
        return arg_err(format!("subsample count {count} outside 1..={d}"));
    }
    let mut cols: Vec<usize> = rng
        .sample_distinct(d, count)
        .into_iter()
        .map(|c| c + 1)
        .collect();
    cols.sort_unstable();
    Ok(cols)
}

/// Options for [`linear_castle_fit`].
#[derive(Debug, Clone)]
pub struct LinearFitOptions<'a> {
    pub learning_rate: f64,
    pub max_iter: usize,
    /// Stop when the objective changes by less than `tol · max(1, |obj|)`
    /// over 50 iterations.
    pub tol: f64,
    /// Optional held-out data; when given, the returned weights are the
    /// iterate with the lowest validation prediction loss and training stops
    /// `patience` iterations after it.
    pub validation: Option<&'a Matrix>,
    pub patience: usize,
    pub terms: Terms,
}

impl Default for LinearFitOptions<'_> {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            max_iter: 5000,
            tol: 1e-10,
            validation: None,
            patience: 500,
            terms: Terms::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearFit {
    /// `(d+1) × (d+1)` weights with zero diagonal; column 0 predicts Y.
    pub w: Matrix,
    pub objective: f64,
    pub iterations: usize,
    pub best_validation: Option<f64>,
}

/// Second-moment matrix `X̃ᵀX̃ / N`.
fn gram(xt: &Matrix) -> Result<Matrix> {
    let mut s = xt.t_matmul(xt)?;
    s.scale_in_place(1.0 / xt.rows() as f64);
    Ok(s)
}

/// Linear objective
/// `(1/N)‖Y − X̃w₀‖² + λ((1/N)‖X̃ − X̃W‖²_F + (tr(exp(W∘W)) − d − 1)² + β‖W‖₁)`.
pub fn linear_objective(xt: &Matrix, w: &Matrix, lambda: f64, beta: f64) -> Result<f64> {
    let s = gram(xt)?;
    linear_objective_gram(&s, w, lambda, beta, Terms::default()).map(|(o, _)| o)
}

/// [`linear_objective`] and its gradient with the diagonal zeroed.
pub fn linear_objective_with_gradient(
    xt: &Matrix,
    w: &Matrix,
    lambda: f64,
    beta: f64,
) -> Result<(f64, Matrix)> {
    let s = gram(xt)?;
    linear_objective_gram(&s, w, lambda, beta, Terms::default())
}

fn linear_prediction_loss(s: &Matrix, w: &Matrix) -> f64 {
    // (e0 - w0)ᵀ S (e0 - w0)
    let v = s.rows();
    let r: Vec<f64> = (0..v)
        .map(|i| if i == 0 { 1.0 } else { 0.0 } - w[(i, 0)])
        .collect();
    let mut acc = 0.0;
    for i in 0..v {
        for j in 0..v {
            acc += r[i] * s[(i, j)] * r[j];
        }
    }
    acc
}

fn linear_objective_gram(
    s: &Matrix,
    w: &Matrix,
    lambda: f64,
    beta: f64,
    terms: Terms,
) -> Result<(f64, Matrix)> {
    let v = s.rows();
    if w.shape() != (v, v) {
        return dim_err(format!("weights {:?} for {v} variables", w.shape()));
    }
    let i_minus_w = Matrix::identity(v).sub(w)?;
    let s_imw = s.matmul(&i_minus_w)?;
    let pred = linear_prediction_loss(s, w);
    let mut grad = Matrix::zeros(v, v);
    for i in 0..v {
        grad[(i, 0)] = -2.0 * s_imw[(i, 0)];
    }
    let mut total = pred;
    if lambda > 0.0 {
        // column c of tr((I-W)ᵀ S (I-W))
        let first = if terms.reconstruct_target { 0 } else { 1 };
        let recon_cols = if terms.reconstruction { first..v } else { 0..0 };
        let recon: f64 = recon_cols
            .clone()
            .map(|c| {
                (0..v)
                    .map(|r| i_minus_w[(r, c)] * s_imw[(r, c)])
                    .sum::<f64>()
            })
            .sum();
        let (r, dr) = if terms.acyclicity {
            acyclicity_with_gradient(w)?
        } else {
            (0.0, Matrix::zeros(v, v))
        };
        let l1 = if terms.l1 { w.sum_abs() } else { 0.0 };
        let b = if terms.l1 { beta } else { 0.0 };
        total += lambda * (recon + r + b * l1);
        for i in 0..v {
            for j in 0..v {
                let sign = if w[(i, j)] > 0.0 {
                    1.0
                } else if w[(i, j)] < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                let rec = if recon_cols.contains(&j) {
                    -2.0 * s_imw[(i, j)]
                } else {
                    0.0
                };
                grad[(i, j)] += lambda * (rec + dr[(i, j)] + b * sign);
            }
        }
    }
    for i in 0..v {
        grad[(i, i)] = 0.0;
    }
    Ok((total, grad))
}

/// Fits the linear model by full-batch Adam on sufficient statistics. The
/// diagonal of `W` is held at zero at every iterate.
pub fn linear_castle_fit(
    xt: &Matrix,
    lambda: f64,
    beta: f64,
    opts: &LinearFitOptions<'_>,
) -> Result<LinearFit> {
    if !(lambda >= 0.0) || !(beta >= 0.0) {
        return arg_err("lambda and beta must be >= 0");
    }
    if xt.rows() == 0 {
        return dim_err("empty data");
    }
    let v = xt.cols();
    let s = gram(xt)?;
    let s_val = match opts.validation {
        Some(val) if val.cols() != v => return dim_err("validation width differs from training"),
        Some(val) => Some(gram(val)?),
        None => None,
    };

    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut w = Matrix::zeros(v, v);
    let mut m = Matrix::zeros(v, v);
    let mut vv = Matrix::zeros(v, v);
    let mut best_w = w.clone();
    let mut best_val = s_val.as_ref().map(|sv| linear_prediction_loss(sv, &w));
    let mut best_iter = 0;
    let mut checkpoint_obj = f64::INFINITY;
    let mut iterations = 0;

    for it in 1..=opts.max_iter {
        let (o, g) = linear_objective_gram(&s, &w, lambda, beta, opts.terms)?;
        if !o.is_finite() || !g.all_finite() {
            return Err(Error::Numeric(format!(
                "linear fit diverged at iteration {it}"
            )));
        }
        let bc1 = 1.0 - b1.powi(it as i32);
        let bc2 = 1.0 - b2.powi(it as i32);
        for ((wi, mi), (vi, &gi)) in w
            .as_mut_slice()
            .iter_mut()
            .zip(m.as_mut_slice())
            .zip(vv.as_mut_slice().iter_mut().zip(g.as_slice()))
        {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            *wi -= opts.learning_rate * (*mi / bc1) / ((*vi / bc2).sqrt() + eps);
        }
        for i in 0..v {
            w[(i, i)] = 0.0;
        }
        iterations = it;

        if let Some(sv) = &s_val {
            let l = linear_prediction_loss(sv, &w);
            if l < best_val.unwrap_or(f64::INFINITY) {
                best_val = Some(l);
                best_w = w.clone();
                best_iter = it;
            } else if it - best_iter >= opts.patience {
                break;
            }
        }
        if it % 50 == 0 {
            if (checkpoint_obj - o).abs() < opts.tol * o.abs().max(1.0) {
                break;
            }
            checkpoint_obj = o;
        }
    }
    let w_out = if s_val.is_some() { best_w } else { w };
    let objective = linear_objective_gram(&s, &w_out, lambda, beta, opts.terms)?.0;
    Ok(LinearFit {
        w: w_out,
        objective,
        iterations,
        best_validation: best_val,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_params, NetworkShape};

    #[test]
    fn prediction_loss_examples() {
        assert_eq!(
            prediction_loss(&[1.0, 2.0], &[1.0, 2.0], Task::Regression).unwrap(),
            0.0
        );
        assert_eq!(
            prediction_loss(&[0.0, 0.0], &[0.0, 2.0], Task::Regression).unwrap(),
            2.0
        );
        let bce = prediction_loss(&[0.0, 0.0], &[1.0, 0.0], Task::Binary).unwrap();
        assert!((bce - 2f64.ln()).abs() < 1e-15);
        assert!((bce - 0.6931).abs() < 1e-4);
        assert!(matches!(
            prediction_loss(&[0.0], &[0.5], Task::Binary),
            Err(Error::Data(_))
        ));
        assert!(prediction_loss(&[0.0], &[0.0, 1.0], Task::Regression).is_err());
    }

    #[test]
    fn reconstruction_loss_examples() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]);
        let p = Matrix::zeros(1, 3);
        assert_eq!(reconstruction_loss(&x, &x, None).unwrap(), 0.0);
        assert_eq!(reconstruction_loss(&p, &x, None).unwrap(), 14.0);
        assert_eq!(reconstruction_loss(&p, &x, Some(&[0, 2])).unwrap(), 10.0);
        assert!(matches!(
            reconstruction_loss(&p, &x, Some(&[])),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn adjacency_of_hand_set_weights() {
        let shape = NetworkShape::new(1, 3, 2).unwrap();
        let mut p =
            crate::network::NetworkParams::zeros(shape, crate::network::MaskKind::Castle).unwrap();
        assert_eq!(adjacency_summary(&p).m, Matrix::zeros(2, 2));
        // W_in[0] row 1 = (3, 4); W_in[1] row 0 = (0, 1)
        p.input[0].row_mut(1).copy_from_slice(&[3.0, 4.0]);
        p.input[1].row_mut(0).copy_from_slice(&[0.0, 1.0]);
        let m = adjacency_summary(&p).m;
        assert_eq!(m, Matrix::from_rows(&[vec![0.0, 1.0], vec![5.0, 0.0]]));
    }

    #[test]
    fn acyclicity_examples() {
        let zero = AdjacencySummary {
            m: Matrix::zeros(3, 3),
        };
        assert_eq!(acyclicity_penalty(&zero).unwrap(), 0.0);
        let upper = AdjacencySummary {
            m: Matrix::from_rows(&[
                vec![0.0, 2.0, 0.7],
                vec![0.0, 0.0, 5.0],
                vec![0.0, 0.0, 0.0],
            ]),
        };
        assert!(acyclicity_penalty(&upper).unwrap() < 1e-10);
        let two_cycle = AdjacencySummary {
            m: Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]),
        };
        let want = (2.0 * 1f64.cosh() - 2.0).powi(2);
        let got = acyclicity_penalty(&two_cycle).unwrap();
        assert!((got - want).abs() < 1e-12);
        assert!((got - 1.17975).abs() < 1e-5);
    }

    #[test]
    fn lambda_zero_is_prediction_loss() {
        let shape = NetworkShape::new(3, 3, 4).unwrap();
        let p = init_params(shape, &mut Rng::new(2)).unwrap();
        let x = Matrix::from_fn(6, 4, |i, j| (i as f64 - j as f64) * 0.2);
        let spec = LossSpec::new(0.0, 0.5, Task::Regression);
        let obj = castle_objective(&p, &x, &spec).unwrap();
        let pred = crate::network::forward_column(&p, &x, 0).unwrap();
        assert_eq!(
            obj,
            prediction_loss(&pred, &x.column(0), Task::Regression).unwrap()
        );
    }

    #[test]
    fn perfect_reconstruction_with_zero_weights_is_zero() {
        let shape = NetworkShape::new(2, 3, 2).unwrap();
        let p =
            crate::network::NetworkParams::zeros(shape, crate::network::MaskKind::Castle).unwrap();
        let x = Matrix::zeros(4, 3);
        let spec = LossSpec::new(1.0, 0.1, Task::Regression);
        assert_eq!(castle_objective(&p, &x, &spec).unwrap(), 0.0);
    }

    #[test]
    fn subsample_examples() {
        let mut rng = Rng::new(4);
        assert_eq!(
            subsample_columns(5, 5, &mut rng).unwrap(),
            vec![1, 2, 3, 4, 5]
        );
        let a = subsample_columns(5, 1, &mut Rng::new(8)).unwrap();
        let b = subsample_columns(5, 1, &mut Rng::new(8)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 1);
        assert!(subsample_columns(5, 0, &mut rng).is_err());
        assert!(subsample_columns(5, 6, &mut rng).is_err());
    }

    #[test]
    fn spec_validation() {
        let mut s = LossSpec::new(1.0, 0.1, Task::Regression);
        s.subsample = Some(vec![]);
        assert!(s.validate(3).is_err());
        s.subsample = Some(vec![3]);
        assert!(s.validate(3).is_err());
        let neg = LossSpec::new(-1.0, 0.0, Task::Regression);
        assert!(neg.validate(3).is_err());
    }
}
