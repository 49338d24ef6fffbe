use crate::error::{arg_err, dim_err, Result};
use crate::loss::Task;
use crate::tensor::{Matrix, Rng};

/// Per-column affine transform fitted on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Column means and (population) standard deviations of `train`. A
    /// constant column gets std 1; a binary target column is left as is.
    pub fn fit(train: &Matrix, task: Task) -> Result<Self> {
        if train.rows() == 0 {
            return dim_err("cannot standardize an empty training set");
        }
        let n = train.rows() as f64;
        let mut mean = vec![0.0; train.cols()];
        let mut std = vec![1.0; train.cols()];
        for c in 0..train.cols() {
            if c == 0 && task == Task::Binary {
                continue;
            }
            let col = train.column(c);
            let m = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean[c] = m;
            std[c] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return dim_err(format!(
                "standardizer fitted on {} columns, got {}",
                self.mean.len(),
                x.cols()
            ));
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    /// Maps standardized target values back to the original scale.
    pub fn target_to_raw(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| v * self.std[0] + self.mean[0]).collect()
    }
}

/// Fits on `train` and transforms every view with the training statistics.
pub fn standardize(
    train: &Matrix,
    others: &[&Matrix],
    task: Task,
) -> Result<(Standardizer, Matrix, Vec<Matrix>)> {
    let s = Standardizer::fit(train, task)?;
    let t = s.apply(train)?;
    let o = others
        .iter()
        .map(|m| s.apply(m))
        .collect::<Result<Vec<_>>>()?;
    Ok((s, t, o))
}

/// `k` disjoint, exhaustive folds of sizes differing by at most one. Each
/// fold is sorted.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return arg_err(format!("need at least 2 folds, got {k}"));
    }
    if n < k {
        return arg_err(format!("{n} rows cannot fill {k} folds"));
    }
    let perm = Rng::derive(seed, "kfold", n as u64).permutation(n);
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        let mut f = perm[start..start + len].to_vec();
        f.sort_unstable();
        folds.push(f);
        start += len;
    }
    Ok(folds)
}

/// Splits `0..n` into `(train, held_out)` with `round(fraction · n)` held out.
pub fn holdout_split(n: usize, fraction: f64, rng: &mut Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&fraction) {
        return arg_err(format!(
            "holdout fraction must be in [0, 1), got {fraction}"
        ));
    }
    let k = ((n as f64) * fraction).round() as usize;
    if k == 0 || k >= n {
        return arg_err(format!("holdout of {k} rows from {n} leaves an empty side"));
    }
    let perm = rng.permutation(n);
    let mut held = perm[..k].to_vec();
    let mut rest = perm[k..].to_vec();
    held.sort_unstable();
    rest.sort_unstable();
    Ok((rest, held))
}

/// Indices of all folds except `fold`, sorted.
pub fn complement(folds: &[Vec<usize>], fold: usize) -> Vec<usize> {
    let mut v: Vec<usize> = folds
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != fold)
        .flat_map(|(_, f)| f.iter().copied())
        .collect();
    v.sort_unstable();
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardized_training_view() {
        let x = Matrix::from_fn(50, 3, |i, j| (i * (j + 1)) as f64 * 0.37 + j as f64);
        let (_, t, _) = standardize(&x, &[], Task::Regression).unwrap();
        for c in 0..3 {
            let col = t.column(c);
            let m = col.iter().sum::<f64>() / 50.0;
            let v = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 50.0;
            assert!(m.abs() < 1e-10);
            assert!((v - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_column_shifted() {
        let x = Matrix::from_fn(4, 2, |i, j| if j == 1 { 7.0 } else { i as f64 });
        let (s, t, _) = standardize(&x, &[], Task::Regression).unwrap();
        assert_eq!(s.std[1], 1.0);
        assert!(t.column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn binary_target_exempt() {
        let x = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 3.0]]);
        let (_, t, _) = standardize(&x, &[], Task::Binary).unwrap();
        assert_eq!(t.column(0), vec![0.0, 1.0]);
    }

    #[test]
    fn folds() {
        let f = kfold_split(10, 10, 1).unwrap();
        assert!(f.iter().all(|x| x.len() == 1));
        let f = kfold_split(1000, 10, 3).unwrap();
        assert!(f.iter().all(|x| x.len() == 100));
        let mut all: Vec<usize> = f.concat();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
        assert_eq!(f, kfold_split(1000, 10, 3).unwrap());
        assert!(kfold_split(5, 10, 0).is_err());
        let f = kfold_split(13, 4, 3).unwrap();
        let sizes: Vec<usize> = f.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 3, 3, 3]);
    }
}
