//! Post-hoc analysis of trained networks: learned edge lists, role-based
//! weight summaries against a known graph, and the generalization bound.

use std::fmt::Write as _;

use crate::dataset::ColumnEdge;
use crate::error::{arg_err, dim_err, Error, Result};
use crate::loss::{
    acyclicity_penalty, adjacency_summary, input_l1, reconstruction_loss, AdjacencySummary,
};
use crate::network::{forward, NetworkParams};
use crate::synth::{roles, Role};
use crate::tensor::{spectral_norm, Matrix};

/// Default reporting threshold on `M` entries.
pub const DEFAULT_EDGE_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnedEdge {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

/// Edges `k → j` with `M[k][j] > threshold`, in row-major order.
pub fn extract_edges(msum: &AdjacencySummary, threshold: f64) -> Result<Vec<LearnedEdge>> {
    if !(threshold >= 0.0) {
        return arg_err(format!("edge threshold must be >= 0, got {threshold}"));
    }
    let m = &msum.m;
    let mut out = Vec::new();
    for k in 0..m.rows() {
        for j in 0..m.cols() {
            if m[(k, j)] > threshold {
                out.push(LearnedEdge {
                    from: k,
                    to: j,
                    weight: m[(k, j)],
                });
            }
        }
    }
    Ok(out)
}

/// `k -> j  weight` lines with column names.
pub fn edges_to_text(edges: &[LearnedEdge], names: &[String]) -> String {
    let mut out = String::new();
    for e in edges {
        let _ = writeln!(out, "{} -> {}  {:.6}", names[e.from], names[e.to], e.weight);
    }
    out
}

/// Mean absolute adjacency weight per role, into the target's sub-network
/// (`M[k][target]`) and out of the target (`M[target][k]`).
#[derive(Debug, Clone, PartialEq)]
pub struct RoleWeights {
    pub rows: Vec<RoleRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoleRow {
    pub role: Role,
    pub count: usize,
    pub incoming: f64,
    pub outgoing: f64,
}

impl RoleWeights {
    pub fn get(&self, role: Role) -> Option<&RoleRow> {
        self.rows.iter().find(|r| r.role == role)
    }

    /// Mean incoming weight, `None` when no node has the role.
    pub fn incoming(&self, role: Role) -> Option<f64> {
        self.get(role).filter(|r| r.count > 0).map(|r| r.incoming)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("role,count,mean_incoming,mean_outgoing\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:?},{:?}",
                r.role.name(),
                r.count,
                r.incoming,
                r.outgoing
            );
        }
        out
    }
}

const ROLE_ORDER: [Role; 6] = [
    Role::Parent,
    Role::Child,
    Role::Spouse,
    Role::Sibling,
    Role::Noise,
    Role::Other,
];

/// Summarises `M` by the role of each column relative to `target` in the
/// ground-truth edges. Columns flagged in `noise` form their own role.
/// Roles with no members report 0.
pub fn characterize_weights(
    msum: &AdjacencySummary,
    truth: &[ColumnEdge],
    noise: &[bool],
    target: usize,
) -> Result<RoleWeights> {
    let v = msum.vars();
    if noise.len() != v {
        return Err(Error::Data(format!(
            "{} noise flags for {v} columns",
            noise.len()
        )));
    }
    if target >= v {
        return arg_err(format!("target {target} out of range"));
    }
    if let Some(e) = truth.iter().find(|e| e.from >= v || e.to >= v) {
        return Err(Error::Data(format!(
            "truth edge {} -> {} outside the {v} columns",
            e.from, e.to
        )));
    }
    if let Some(e) = truth.iter().find(|e| noise[e.from] || noise[e.to]) {
        return Err(Error::Data(format!(
            "noise column in truth edge {} -> {}",
            e.from, e.to
        )));
    }
    let pairs: Vec<(usize, usize)> = truth.iter().map(|e| (e.from, e.to)).collect();
    let labels = roles(v, &pairs, target, noise);
    let rows = ROLE_ORDER
        .iter()
        .map(|&role| {
            let members: Vec<usize> = (0..v).filter(|&k| labels[k] == role).collect();
            let mean = |f: &dyn Fn(usize) -> f64| {
                if members.is_empty() {
                    0.0
                } else {
                    members.iter().map(|&k| f(k)).sum::<f64>() / members.len() as f64
                }
            };
            RoleRow {
                role,
                count: members.len(),
                incoming: mean(&|k| msum.m[(k, target)].abs()),
                outgoing: mean(&|k| msum.m[(target, k)].abs()),
            }
        })
        .collect();
    Ok(RoleWeights { rows })
}

/// Which form of the bound to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundVariant {
    /// `1/N` on the bracketed complexity terms.
    #[default]
    Main,
    /// `2/N` on the bracket, as in the final step of the proof.
    Proof,
}

/// Constants of the bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    /// Sub-Gaussian variance factor.
    pub s: f64,
    /// Sharpness bound.
    pub gamma: f64,
    /// Confidence level.
    pub delta: f64,
    /// Largest sample ℓ2 norm.
    pub b: f64,
    /// Largest spectral norm over the weight matrices.
    pub kappa: f64,
    pub depth: usize,
    pub width: usize,
    pub d: usize,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return arg_err(format!("delta must be in (0, 1), got {}", self.delta));
        }
        if !(self.gamma > 0.0) || !(self.s > 0.0) || !(self.b > 0.0) || !(self.kappa > 0.0) {
            return arg_err("s, gamma, B and kappa must be positive");
        }
        if self.depth < 1 || self.width < 1 || self.d < 1 {
            return arg_err("depth, width and d must be positive");
        }
        Ok(())
    }

    /// `ζ = M · B · e · sqrt(2 ln(2 e h))`.
    pub fn zeta(&self) -> f64 {
        let e = std::f64::consts::E;
        self.depth as f64 * self.b * e * (2.0 * (2.0 * e * self.width as f64).ln()).sqrt()
    }

    /// `C₁ = (ζ (d+1) κ^(M−1) / γ)²`.
    pub fn c1(&self) -> f64 {
        (self.zeta() * (self.d + 1) as f64 * self.kappa.powi(self.depth as i32 - 1) / self.gamma)
            .powi(2)
    }

    /// `C₂ = s² + 6γ`.
    pub fn c2(&self) -> f64 {
        self.s * self.s + 6.0 * self.gamma
    }
}

/// Measured `B` (largest row norm of `xt`).
pub fn max_row_norm(xt: &Matrix) -> f64 {
    (0..xt.rows())
        .map(|r| xt.row(r).iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Measured `κ` (largest spectral norm over every weight matrix).
pub fn max_spectral_norm(params: &NetworkParams) -> Result<f64> {
    let mut k: f64 = 0.0;
    for w in params
        .input
        .iter()
        .chain(&params.shared)
        .chain(&params.output)
    {
        k = k.max(spectral_norm(w, 1e-10)?);
    }
    Ok(k)
}

/// Builds [`BoundInputs`] from a model and its training data; `b` and
/// `kappa` are measured unless overridden.
pub fn measure_bound_inputs(
    params: &NetworkParams,
    xt: &Matrix,
    s: f64,
    gamma: f64,
    delta: f64,
    b: Option<f64>,
    kappa: Option<f64>,
) -> Result<BoundInputs> {
    let b = b.unwrap_or_else(|| max_row_norm(xt));
    let kappa = match kappa {
        Some(k) => k,
        None => max_spectral_norm(params)?,
    };
    let shape = params.shape;
    let inputs = BoundInputs {
        s,
        gamma,
        delta,
        b,
        kappa,
        depth: shape.depth,
        width: shape.hidden,
        d: shape.d,
    };
    inputs.validate()?;
    Ok(inputs)
}

/// Value of the bound and each of its terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub n: usize,
    pub empirical_loss: f64,
    pub acyclicity: f64,
    pub v1: f64,
    pub v2: f64,
    pub zeta: f64,
    pub c1: f64,
    pub c2: f64,
    pub log_term: f64,
    pub bracket: f64,
    pub bracket_coefficient: f64,
    pub value: f64,
}

impl BoundReport {
    pub fn to_text(&self) -> String {
        format!(
            "n = {}\nempirical_loss = {:?}\nacyclicity = {:?}\nv1 = {:?}\nv2 = {:?}\nzeta = {:?}\nc1 = {:?}\nc2 = {:?}\n\
             log_term = {:?}\nbracket = {:?}\nbracket_coefficient = {:?}\nbound = {:?}\n",
            self.n,
            self.empirical_loss,
            self.acyclicity,
            self.v1,
            self.v2,
            self.zeta,
            self.c1,
            self.c2,
            self.log_term,
            self.bracket,
            self.bracket_coefficient,
            self.value
        )
    }
}

/// `4 L_N + (c/N)[R + C₁ (V₁ + V₂) + ln(8/δ)] + C₂` from its terms, with
/// `c = 1` (main) or `2` (proof).
pub fn bound_from_terms(
    n: usize,
    empirical_loss: f64,
    acyclicity: f64,
    v1: f64,
    v2: f64,
    inputs: &BoundInputs,
    variant: BoundVariant,
) -> Result<BoundReport> {
    inputs.validate()?;
    if n == 0 {
        return dim_err("bound needs N >= 1");
    }
    let c1 = inputs.c1();
    let c2 = inputs.c2();
    let log_term = (8.0 / inputs.delta).ln();
    let bracket = acyclicity + c1 * (v1 + v2) + log_term;
    let coef = match variant {
        BoundVariant::Main => 1.0,
        BoundVariant::Proof => 2.0,
    };
    let value = 4.0 * empirical_loss + coef * bracket / n as f64 + c2;
    if !value.is_finite() {
        return Err(Error::Numeric("bound is not finite".into()));
    }
    Ok(BoundReport {
        n,
        empirical_loss,
        acyclicity,
        v1,
        v2,
        zeta: inputs.zeta(),
        c1,
        c2,
        log_term,
        bracket,
        bracket_coefficient: coef,
        value,
    })
}

/// Evaluates the bound for a trained model on its `N` training rows.
/// `L_N` is the full reconstruction loss, `V₁` the ℓ1 norm of the input
/// layers and `V₂` the ℓ2 (Frobenius) norm of the shared and output layers.
pub fn evaluate_bound(
    params: &NetworkParams,
    xt: &Matrix,
    inputs: &BoundInputs,
    variant: BoundVariant,
) -> Result<BoundReport> {
    inputs.validate()?;
    let pred = forward(params, xt)?;
    let ln = reconstruction_loss(&pred, xt, None)?;
    let r = acyclicity_penalty(&adjacency_summary(params))?;
    let v1 = input_l1(params);
    let v2 = params
        .shared
        .iter()
        .chain(&params.output)
        .map(Matrix::sum_sq)
        .sum::<f64>()
        .sqrt();
    bound_from_terms(xt.rows(), ln, r, v1, v2, inputs, variant)
}
