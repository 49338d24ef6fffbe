//! Synthetic graphs and data against independent oracles.

use castle::dataset::{load_csv, Dataset};
use castle::loss::Task;
use castle::synth::{
    add_noise_vars, gen_dag, gen_data, roles, toy_dag, Dag, Edge, Link, SemSpec, Sigma,
};
use castle::tensor::{Matrix, Rng};
use proptest::prelude::*;

fn dfs_acyclic(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in edges {
        adj[u].push(v);
    }
    let mut state = vec![0u8; n];
    fn visit(u: usize, adj: &[Vec<usize>], state: &mut [u8]) -> bool {
        state[u] = 1;
        for &v in &adj[u] {
            if state[v] == 1 || (state[v] == 0 && !visit(v, adj, state)) {
                return false;
            }
        }
        state[u] = 2;
        true
    }
    (0..n).all(|u| state[u] != 0 || visit(u, &adj, &mut state))
}

fn pairs(dag: &Dag) -> Vec<(usize, usize)> {
    dag.edges().iter().map(|e| (e.from, e.to)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn generated_graphs_are_acyclic(n in 1usize..40, bf in 0usize..6, seed in any::<u64>()) {
        let dag = gen_dag(n, bf, &mut Rng::new(seed)).unwrap();
        prop_assert!(dfs_acyclic(n, &pairs(&dag)));
        for v in 0..n {
            prop_assert!(dag.out_degree(v) <= bf);
        }
        let pos: Vec<usize> = {
            let mut p = vec![0; n];
            for (i, &v) in dag.topological_order().iter().enumerate() {
                p[v] = i;
            }
            p
        };
        for e in dag.edges() {
            prop_assert!(pos[e.from] < pos[e.to]);
        }
    }

    #[test]
    fn feature_columns_follow_a_topological_order(n in 2usize..15, bf in 1usize..4, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let dag = gen_dag(n, bf, &mut rng).unwrap();
        let ds = gen_data(&dag, &SemSpec::default(), 3, &mut rng).unwrap();
        for e in ds.truth.as_ref().unwrap() {
            if e.from != 0 && e.to != 0 {
                prop_assert!(e.from < e.to, "edge {} -> {} goes backwards", e.from, e.to);
            }
        }
    }
}

#[test]
fn two_nodes_branching_one() {
    let mut seen = [false; 2];
    for seed in 0..200 {
        let dag = gen_dag(2, 1, &mut Rng::new(seed)).unwrap();
        assert_eq!(dag.edges().len(), 1);
        let e = dag.edges()[0];
        seen[e.from] = true;
        assert_eq!(e.from + e.to, 1);
    }
    assert_eq!(seen, [true, true], "both directions are reachable");
}

fn column_stats(x: &Matrix, a: usize, b: usize) -> (f64, f64, f64) {
    let n = x.rows() as f64;
    let ma = x.column(a).iter().sum::<f64>() / n;
    let mb = x.column(b).iter().sum::<f64>() / n;
    let cov = (0..x.rows())
        .map(|i| (x[(i, a)] - ma) * (x[(i, b)] - mb))
        .sum::<f64>()
        / (n - 1.0);
    (ma, mb, cov)
}

fn linear(sigma: f64) -> SemSpec {
    SemSpec {
        mu: 0.0,
        sigma: Sigma::Fixed(sigma),
        w: 1.0,
        link: Link::Identity,
    }
}

#[test]
fn edgeless_columns_are_iid_normal() {
    let dag = Dag::new(3, Vec::new(), 0).unwrap();
    let spec = SemSpec {
        mu: 1.5,
        sigma: Sigma::Fixed(0.7),
        w: 1.0,
        link: Link::Sigmoid,
    };
    let ds = gen_data(&dag, &spec, 100_000, &mut Rng::new(3)).unwrap();
    for c in 0..3 {
        let (m, _, var) = column_stats(&ds.xt, c, c);
        assert!((m - 1.5).abs() < 0.01, "mean {m}");
        assert!((var / 0.49 - 1.0).abs() < 0.03, "variance {var}");
    }
}

#[test]
fn chain_moments() {
    let dag = Dag::new(
        2,
        vec![Edge {
            from: 0,
            to: 1,
            weight: 1.0,
        }],
        0,
    )
    .unwrap();
    let ds = gen_data(&dag, &linear(1.0), 100_000, &mut Rng::new(4)).unwrap();
    let (_, _, v2) = column_stats(&ds.xt, 1, 1);
    let (_, _, c12) = column_stats(&ds.xt, 0, 1);
    assert!((v2 - 2.0).abs() < 0.06, "{v2}");
    assert!((c12 - 1.0).abs() < 0.05, "{c12}");
}

/// `σ² (I − W)⁻ᵀ (I − W)⁻¹` for nilpotent `W` (row = parent, column = child).
fn closed_form_cov(w: &Matrix, sigma: f64) -> Matrix {
    let n = w.rows();
    let mut inv = Matrix::identity(n);
    let mut p = Matrix::identity(n);
    for _ in 1..n {
        p = p.matmul(w).unwrap();
        inv = inv.add(&p).unwrap();
    }
    inv.t_matmul(&inv).unwrap().scale(sigma * sigma)
}

#[test]
fn linear_sem_covariances_match_closed_form() {
    let graphs: Vec<(usize, Vec<(usize, usize)>)> = vec![
        (3, vec![(0, 1), (1, 2)]),
        (3, vec![(0, 1), (0, 2)]),
        (4, vec![(0, 1), (1, 2), (2, 3)]),
        (4, vec![(3, 0), (3, 1), (3, 2)]),
        (4, vec![(0, 2), (1, 2), (2, 3)]),
    ];
    let mut rng = Rng::new(5);
    for (n, e) in graphs {
        let edges: Vec<Edge> = e
            .iter()
            .map(|&(from, to)| Edge {
                from,
                to,
                weight: rng.uniform_range(0.5, 1.5),
            })
            .collect();
        let target = e[0].1;
        let dag = Dag::new(n, edges, target).unwrap();
        let ds = gen_data(&dag, &linear(0.8), 100_000, &mut rng).unwrap();
        let mut w = Matrix::zeros(n, n);
        for t in ds.truth.as_ref().unwrap() {
            w[(t.from, t.to)] = t.weight;
        }
        let want = closed_form_cov(&w, 0.8);
        for a in 0..n {
            for b in 0..n {
                let (_, _, got) = column_stats(&ds.xt, a, b);
                let scale = (want[(a, a)] * want[(b, b)]).sqrt();
                let tol = if want[(a, b)].abs() > 0.1 * scale {
                    0.05 * want[(a, b)].abs()
                } else {
                    0.02 * scale
                };
                assert!(
                    (got - want[(a, b)]).abs() < tol,
                    "{e:?} ({a},{b}): {got} vs {}",
                    want[(a, b)]
                );
            }
        }
    }
}

#[test]
fn noise_columns_are_uncorrelated_with_the_target() {
    let mut rng = Rng::new(6);
    let ds = gen_data(&toy_dag(), &SemSpec::default(), 10_000, &mut rng).unwrap();
    let padded = add_noise_vars(&ds, 5, &mut rng);
    assert_eq!(padded.d(), ds.d() + 5);
    assert_eq!(padded.noise.iter().filter(|&&f| f).count(), 5);
    for c in ds.xt.cols()..padded.xt.cols() {
        let (_, _, cov) = column_stats(&padded.xt, 0, c);
        let (_, _, vy) = column_stats(&padded.xt, 0, 0);
        let (_, _, vc) = column_stats(&padded.xt, c, c);
        let corr = cov / (vy * vc).sqrt();
        assert!(corr.abs() < 0.05, "column {c}: {corr}");
    }
    assert_eq!(add_noise_vars(&ds, 0, &mut rng), ds);
}

#[test]
fn generation_is_deterministic() {
    let run = |seed| {
        let mut rng = Rng::new(seed);
        let dag = gen_dag(12, 3, &mut rng).unwrap();
        gen_data(&dag, &SemSpec::default(), 50, &mut rng).unwrap()
    };
    assert_eq!(run(9), run(9));
    assert_ne!(run(9).xt, run(10).xt);
}

#[test]
fn toy_roles_match_fixture() {
    let dag = toy_dag();
    let labels = roles(10, &pairs(&dag), dag.target(), &[false; 10]);
    let fixture = include_str!("fixtures/toy_roles.csv");
    let mut checked = 0;
    for line in fixture
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
    {
        let (name, role) = line.split_once(',').unwrap();
        let node = dag.names().iter().position(|n| n == name).unwrap();
        assert_eq!(labels[node].name(), role, "{name}");
        checked += 1;
    }
    assert_eq!(checked, 10);
    assert!(dfs_acyclic(10, &pairs(&dag)));
    let mut pa = dag.parents(0);
    pa.sort_unstable();
    assert_eq!(pa, vec![2, 3]);
}

#[test]
fn csv_round_trip_is_bit_identical() {
    let mut rng = Rng::new(7);
    let dag = gen_dag(8, 2, &mut rng).unwrap();
    let mut ds = gen_data(&dag, &SemSpec::default(), 200, &mut rng).unwrap();
    castle::synth::standard_names(&mut ds);
    let ds = add_noise_vars(&ds, 2, &mut rng);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.csv");
    ds.write_csv(&p).unwrap();
    let back: Dataset = load_csv(&p, "y", Task::Regression).unwrap().dataset;
    assert_eq!(back.xt, ds.xt);
    assert_eq!(back.names, ds.names);
    assert_eq!(back.noise, ds.noise);
    let e = dir.path().join("d.edges");
    ds.write_edges(&e).unwrap();
    let mut back = back;
    back.read_edges(&e).unwrap();
    assert_eq!(back.truth, ds.truth);
}
