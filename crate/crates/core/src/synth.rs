//! Random DAGs and the additive-noise structural equation sampler.
//!
//! Each node takes `Σ_{parents} w · link(parent) + N(μ, σ²)`, evaluated in
//! topological order, with `link` the identity (linear) or the logistic
//! sigmoid (nonlinear).

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::dataset::{ColumnEdge, Dataset};
use crate::error::{arg_err, Error, Result};
use crate::loss::{sigmoid, Task};
use crate::tensor::{Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

/// Directed acyclic graph over `0..n` with a designated target node.
#[derive(Debug, Clone, PartialEq)]
pub struct Dag {
    n: usize,
    edges: Vec<Edge>,
    order: Vec<usize>,
    target: usize,
    names: Vec<String>,
}

/// Topological order by Kahn's algorithm (smallest ready index first), or
/// `None` if there is a cycle.
pub fn topological_sort(n: usize, edges: &[(usize, usize)]) -> Option<Vec<usize>> {
    let mut indeg = vec![0usize; n];
    let mut out = vec![Vec::new(); n];
    for &(u, v) in edges {
        out[u].push(v);
        indeg[v] += 1;
    }
    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..n).filter(|&v| indeg[v] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(u)) = ready.pop() {
        order.push(u);
        for &v in &out[u] {
            indeg[v] -= 1;
            if indeg[v] == 0 {
                ready.push(Reverse(v));
            }
        }
    }
    (order.len() == n).then_some(order)
}

impl Dag {
    /// Validates the edge list (range, self-loops, duplicates, cycles).
    pub fn new(n: usize, edges: Vec<Edge>, target: usize) -> Result<Self> {
        if n == 0 {
            return arg_err("a DAG needs at least one node");
        }
        if target >= n {
            return arg_err(format!("target {target} out of range for {n} nodes"));
        }
        let mut seen = std::collections::HashSet::new();
        for e in &edges {
            if e.from >= n || e.to >= n {
                return arg_err(format!("edge {} -> {} out of range", e.from, e.to));
            }
            if e.from == e.to {
                return arg_err(format!("self-loop on node {}", e.from));
            }
            if !seen.insert((e.from, e.to)) {
                return arg_err(format!("duplicate edge {} -> {}", e.from, e.to));
            }
        }
        let pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e.from, e.to)).collect();
        let order = topological_sort(n, &pairs)
            .ok_or_else(|| Error::Argument("edge list has a directed cycle".into()))?;
        let names = (0..n).map(|i| format!("n{i}")).collect();
        Ok(Self {
            n,
            edges,
            order,
            target,
            names,
        })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n {
            return arg_err(format!("{} names for {} nodes", names.len(), self.n));
        }
        self.names = names;
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn set_target(&mut self, target: usize) -> Result<()> {
        if target >= self.n {
            return arg_err(format!("target {target} out of range"));
        }
        self.target = target;
        Ok(())
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    pub fn parents(&self, v: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|e| e.to == v)
            .map(|e| e.from)
            .collect()
    }

    pub fn children(&self, v: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|e| e.from == v)
            .map(|e| e.to)
            .collect()
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|e| e.from == v).count()
    }
}

/// Role of a node relative to the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Target,
    Parent,
    Child,
    Spouse,
    Sibling,
    Noise,
    Other,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Target => "target",
            Role::Parent => "parent",
            Role::Child => "child",
            Role::Spouse => "spouse",
            Role::Sibling => "sibling",
            Role::Noise => "noise",
            Role::Other => "other",
        }
    }
}

/// Roles of `n` nodes relative to `target`. Precedence when a node fits
/// several roles: parent, child, spouse, sibling. Nodes flagged in `noise`
/// are labelled noise.
pub fn roles(n: usize, edges: &[(usize, usize)], target: usize, noise: &[bool]) -> Vec<Role> {
    let parents: Vec<usize> = edges
        .iter()
        .filter(|e| e.1 == target)
        .map(|e| e.0)
        .collect();
    let children: Vec<usize> = edges
        .iter()
        .filter(|e| e.0 == target)
        .map(|e| e.1)
        .collect();
    (0..n)
        .map(|v| {
            if v == target {
                Role::Target
            } else if noise.get(v).copied().unwrap_or(false) {
                Role::Noise
            } else if parents.contains(&v) {
                Role::Parent
            } else if children.contains(&v) {
                Role::Child
            } else if edges.iter().any(|&(u, c)| u == v && children.contains(&c)) {
                Role::Spouse
            } else if edges.iter().any(|&(p, c)| c == v && parents.contains(&p)) {
                Role::Sibling
            } else {
                Role::Other
            }
        })
        .collect()
}

/// Random DAG: nodes are enumerated in random order and the candidate edges
/// `u → v` (u before v) are shuffled and added greedily while the source's
/// out-degree is below `branching_factor`. Every edge has weight 1 and the
/// target is node 0 until [`choose_target`] is applied.
pub fn gen_dag(num_nodes: usize, branching_factor: usize, rng: &mut Rng) -> Result<Dag> {
    if num_nodes == 0 {
        return arg_err("num_nodes must be >= 1");
    }
    let enumeration = rng.permutation(num_nodes);
    let mut candidates = Vec::new();
    for i in 0..num_nodes {
        for j in i + 1..num_nodes {
            candidates.push((enumeration[i], enumeration[j]));
        }
    }
    rng.shuffle(&mut candidates);
    let mut out_deg = vec![0usize; num_nodes];
    let mut edges = Vec::new();
    for (u, v) in candidates {
        if out_deg[u] < branching_factor {
            out_deg[u] += 1;
            edges.push(Edge {
                from: u,
                to: v,
                weight: 1.0,
            });
        }
    }
    Dag::new(num_nodes, edges, 0)
}

/// Which nodes may serve as the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetMode {
    /// Uniform over nodes with at least one parent.
    #[default]
    WithParents,
    /// Uniform over nodes without parents.
    Orphan,
}

impl std::str::FromStr for TargetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "with-parents" | "parents" => Ok(TargetMode::WithParents),
            "orphan" | "no-parents" => Ok(TargetMode::Orphan),
            _ => arg_err(format!("unknown target mode '{s}'")),
        }
    }
}

pub fn choose_target(dag: &mut Dag, mode: TargetMode, rng: &mut Rng) -> Result<()> {
    let eligible: Vec<usize> = (0..dag.n)
        .filter(|&v| dag.parents(v).is_empty() == (mode == TargetMode::Orphan))
        .collect();
    if eligible.is_empty() {
        return Err(Error::Data(format!(
            "no node qualifies as a target under {mode:?}"
        )));
    }
    dag.target = eligible[rng.below(eligible.len())];
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Link {
    Identity,
    #[default]
    Sigmoid,
}

impl Link {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Link::Identity => x,
            Link::Sigmoid => sigmoid(x),
        }
    }
}

impl std::str::FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "linear" => Ok(Link::Identity),
            "sigmoid" | "nonlinear" => Ok(Link::Sigmoid),
            _ => arg_err(format!("unknown link '{s}'")),
        }
    }
}

/// Noise scale: fixed, or drawn once per DAG from `U[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sigma {
    Fixed(f64),
    Uniform(f64, f64),
}

/// Structural equation parameters. Each edge contributes
/// `w · edge.weight · link(parent)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemSpec {
    pub mu: f64,
    pub sigma: Sigma,
    pub w: f64,
    pub link: Link,
}

impl Default for SemSpec {
    fn default() -> Self {
        Self {
            mu: 0.0,
            sigma: Sigma::Uniform(0.3, 1.0),
            w: 1.0,
            link: Link::Sigmoid,
        }
    }
}

impl SemSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match self.sigma {
            Sigma::Fixed(s) => s > 0.0 && s.is_finite(),
            Sigma::Uniform(lo, hi) => lo > 0.0 && hi >= lo && hi.is_finite(),
        };
        if !ok {
            return arg_err(format!("noise sigma must be positive: {:?}", self.sigma));
        }
        if !self.mu.is_finite() || !self.w.is_finite() {
            return arg_err("mu and w must be finite");
        }
        Ok(())
    }

    /// The noise scale for one graph.
    pub fn resolve_sigma(&self, rng: &mut Rng) -> f64 {
        match self.sigma {
            Sigma::Fixed(s) => s,
            Sigma::Uniform(lo, hi) => rng.uniform_range(lo, hi),
        }
    }
}

/// Samples `n` rows. Column 0 is the target node; the remaining nodes follow
/// in topological order. The DAG's edges are stored as the dataset truth.
pub fn gen_data(dag: &Dag, spec: &SemSpec, n: usize, rng: &mut Rng) -> Result<Dataset> {
    spec.validate()?;
    if n == 0 {
        return arg_err("n must be >= 1");
    }
    let sigma = spec.resolve_sigma(rng);
    let nodes = dag.num_nodes();
    let parents: Vec<Vec<(usize, f64)>> = (0..nodes)
        .map(|v| {
            dag.edges
                .iter()
                .filter(|e| e.to == v)
                .map(|e| (e.from, e.weight))
                .collect()
        })
        .collect();

    let mut values = Matrix::zeros(n, nodes);
    for i in 0..n {
        let row = values.row_mut(i);
        for &v in &dag.order {
            let mut x = spec.mu + sigma * rng.standard_normal();
            for &(p, w) in &parents[v] {
                x += spec.w * w * spec.link.apply(row[p]);
            }
            row[v] = x;
        }
    }

    let mut columns = vec![dag.target];
    columns.extend(dag.order.iter().copied().filter(|&v| v != dag.target));
    let mut col_of = vec![0usize; nodes];
    for (c, &v) in columns.iter().enumerate() {
        col_of[v] = c;
    }
    let xt = values.select_columns(&columns);
    let names: Vec<String> = columns.iter().map(|&v| dag.names[v].clone()).collect();
    let provenance = format!(
        "synthetic seed={} stream={} sigma={sigma}",
        rng.seed(),
        rng.stream()
    );
    let mut ds = Dataset::new(xt, names, Task::Regression, provenance)?;
    ds.truth = Some(
        dag.edges
            .iter()
            .map(|e| ColumnEdge {
                from: col_of[e.from],
                to: col_of[e.to],
                weight: spec.w * e.weight,
            })
            .collect(),
    );
    Ok(ds)
}

/// Renames columns to `y, x1, …, xd` (noise columns keep their names).
pub fn standard_names(ds: &mut Dataset) {
    let mut k = 0;
    for (c, name) in ds.names.iter_mut().enumerate() {
        if c == 0 {
            *name = "y".into();
        } else if !ds.noise[c] {
            k += 1;
            *name = format!("x{k}");
        }
    }
}

/// Appends `v` independent `N(0, 1)` columns flagged as noise.
pub fn add_noise_vars(dataset: &Dataset, v: usize, rng: &mut Rng) -> Dataset {
    if v == 0 {
        return dataset.clone();
    }
    let n = dataset.n();
    let extra = Matrix::from_fn(n, v, |_, _| rng.standard_normal());
    let mut out = dataset.clone();
    out.xt = dataset.xt.hstack(&extra).expect("row counts match");
    let existing = dataset.noise.iter().filter(|&&f| f).count();
    for j in 0..v {
        out.names.push(format!("noise{}", existing + j + 1));
        out.noise.push(true);
    }
    out
}

/// Node labels of the example graph, in node order.
pub const TOY_NAMES: [&str; 10] = ["y", "x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8", "x9"];

/// The fixed ten-node example graph. `Y` (node 0) has parents `X2, X3` and
/// child `X8`; `X5` is a child of `X2`, `X6` and `X7` are children of `X3`,
/// `X4` is a co-parent of `X8`, `X1` is a parent of `X2` and `X9` is
/// disconnected.
pub fn toy_dag() -> Dag {
    let edges = [
        (1, 2),
        (2, 0),
        (3, 0),
        (2, 5),
        (3, 6),
        (3, 7),
        (0, 8),
        (4, 8),
    ]
    .into_iter()
    .map(|(from, to)| Edge {
        from,
        to,
        weight: 1.0,
    })
    .collect();
    Dag::new(10, edges, 0)
        .and_then(|d| d.with_names(TOY_NAMES.iter().map(|s| s.to_string()).collect()))
        .expect("toy graph is valid")
}
