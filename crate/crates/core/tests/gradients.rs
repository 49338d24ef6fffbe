//! Analytic gradients against central finite differences.

use castle::loss::{
    castle_objective, linear_objective, linear_objective_with_gradient, objective_with_gradient,
    LossSpec, Task,
};
use castle::network::{init_params_masked, Block, MaskKind, NetworkParams, NetworkShape};
use castle::regularizers::{
    weight_decay_gradient, weight_decay_gradient_on, weight_decay_penalty, weight_decay_penalty_on,
};
use castle::tensor::{Matrix, Rng};

fn data(n: usize, v: usize, seed: u64, binary: bool) -> Matrix {
    let mut rng = Rng::new(seed);
    Matrix::from_fn(n, v, |_, j| {
        if j == 0 && binary {
            if rng.uniform() < 0.5 {
                0.0
            } else {
                1.0
            }
        } else {
            rng.normal(0.0, 1.0)
        }
    })
}

fn check_blocks(
    params: &NetworkParams,
    analytic: impl Fn(Block) -> Matrix,
    f: impl Fn(&NetworkParams) -> f64,
) {
    let h = 1e-6;
    for b in params.blocks() {
        let g = analytic(b);
        let w = params.block(b);
        for r in 0..w.rows() {
            for c in 0..w.cols() {
                if let Block::Input(k) = b {
                    if params.masks[k][(r, c)] == 0.0 {
                        assert_eq!(g[(r, c)], 0.0, "masked gradient at {b} ({r},{c})");
                        continue;
                    }
                }
                let mut plus = params.clone();
                plus.block_mut(b)[(r, c)] += h;
                let mut minus = params.clone();
                minus.block_mut(b)[(r, c)] -= h;
                let fd = (f(&plus) - f(&minus)) / (2.0 * h);
                let err = (fd - g[(r, c)]).abs();
                assert!(
                    err < 1e-5 * fd.abs().max(1.0),
                    "{b} ({r},{c}): fd {fd} analytic {}",
                    g[(r, c)]
                );
            }
        }
    }
}

fn check_objective(
    depth: usize,
    task: Task,
    subsample: Option<Vec<usize>>,
    kind: MaskKind,
    seed: u64,
) {
    let shape = NetworkShape::new(3, depth, 4).unwrap();
    let params = init_params_masked(shape, kind, &mut Rng::new(seed)).unwrap();
    let xt = data(9, 4, seed + 100, task == Task::Binary);
    let mut spec = LossSpec::new(0.7, 0.3, task);
    spec.subsample = subsample;
    let (terms, grads) = objective_with_gradient(&params, &xt, &spec, None).unwrap();
    let f = |p: &NetworkParams| castle_objective(p, &xt, &spec).unwrap();
    assert!((terms.total - f(&params)).abs() < 1e-12);
    let dense = grads.densify(shape);
    check_blocks(&params, |b| dense.block(b).unwrap().clone(), f);
}

#[test]
fn castle_gradient_regression_depth3() {
    check_objective(3, Task::Regression, None, MaskKind::Castle, 1);
}

#[test]
fn castle_gradient_regression_depth4_subsampled() {
    check_objective(4, Task::Regression, Some(vec![0, 2]), MaskKind::Castle, 2);
}

#[test]
fn castle_gradient_binary() {
    check_objective(3, Task::Binary, None, MaskKind::Castle, 3);
}

#[test]
fn castle_gradient_linear_network() {
    check_objective(
        2,
        Task::Regression,
        Some(vec![0, 1, 3]),
        MaskKind::Castle,
        4,
    );
}

#[test]
fn self_inclusive_gradient() {
    check_objective(3, Task::Regression, None, MaskKind::SelfInclusive, 5);
}

#[test]
fn weight_decay_gradients() {
    let shape = NetworkShape::new(2, 3, 3).unwrap();
    let params = init_params_masked(shape, MaskKind::Castle, &mut Rng::new(6)).unwrap();
    for p in [1u32, 2] {
        let mut g = castle::network::Gradients::empty(shape);
        weight_decay_gradient(&params, p, 0.05, &mut g).unwrap();
        let dense = g.densify(shape);
        check_blocks(
            &params,
            |b| dense.block(b).unwrap().clone(),
            |q| weight_decay_penalty(q, p, 0.05).unwrap(),
        );
    }
}

#[test]
fn branch_scoped_weight_decay_gradients() {
    let shape = NetworkShape::new(3, 3, 2).unwrap();
    let params = init_params_masked(shape, MaskKind::Castle, &mut Rng::new(9)).unwrap();
    for p in [1u32, 2] {
        let mut g = castle::network::Gradients::empty(shape);
        weight_decay_gradient_on(&params, p, 0.2, &[0, 2], &mut g).unwrap();
        assert!(g.block(Block::Input(1)).is_none());
        let dense = g.densify(shape);
        check_blocks(
            &params,
            |b| dense.block(b).unwrap().clone(),
            |q| weight_decay_penalty_on(q, p, 0.2, &[0, 2]).unwrap(),
        );
    }
    assert!(weight_decay_penalty_on(&params, 2, 0.2, &[4]).is_err());
}

#[test]
fn linear_objective_gradient() {
    let xt = data(20, 4, 7, false);
    let mut rng = Rng::new(8);
    let mut w = Matrix::from_fn(4, 4, |_, _| rng.normal(0.0, 0.4));
    for i in 0..4 {
        w[(i, i)] = 0.0;
    }
    let (val, g) = linear_objective_with_gradient(&xt, &w, 0.8, 0.2).unwrap();
    assert!((val - linear_objective(&xt, &w, 0.8, 0.2).unwrap()).abs() < 1e-12);
    let h = 1e-6;
    for r in 0..4 {
        for c in 0..4 {
            if r == c {
                assert_eq!(g[(r, c)], 0.0);
                continue;
            }
            let mut plus = w.clone();
            plus[(r, c)] += h;
            let mut minus = w.clone();
            minus[(r, c)] -= h;
            let fd = (linear_objective(&xt, &plus, 0.8, 0.2).unwrap()
                - linear_objective(&xt, &minus, 0.8, 0.2).unwrap())
                / (2.0 * h);
            assert!(
                (fd - g[(r, c)]).abs() < 1e-5 * fd.abs().max(1.0),
                "({r},{c}) fd {fd} vs {}",
                g[(r, c)]
            );
        }
    }
}
