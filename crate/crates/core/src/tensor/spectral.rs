use crate::error::{arg_err, Error, Result};
use crate::tensor::{Matrix, Rng};

pub const MAX_POWER_ITERATIONS: usize = 20_000;

/// Largest singular value by power iteration on `aᵀa`, stopped when the
/// relative change of the Rayleigh quotient drops below `tol`.
pub fn spectral_norm(a: &Matrix, tol: f64) -> Result<f64> {
    if a.is_empty() {
        return arg_err("spectral norm of an empty matrix");
    }
    if !(tol > 0.0) {
        return arg_err(format!("tolerance must be positive, got {tol}"));
    }
    if a.max_abs() == 0.0 {
        return Ok(0.0);
    }
    let n = a.cols();
    // Fixed pseudo-random start so that no singular direction is missed.
    let mut rng = Rng::with_stream(0x05EC_72A1, 0);
    let mut v: Vec<f64> = (0..n).map(|_| 0.5 + rng.uniform()).collect();
    normalize(&mut v);

    let mut prev = 0.0;
    for _ in 0..MAX_POWER_ITERATIONS {
        let av = mat_vec(a, &v);
        let mut w = mat_t_vec(a, &av);
        // Rayleigh quotient of aᵀa at unit v
        let lambda: f64 = av.iter().map(|x| x * x).sum();
        let wn = normalize(&mut w);
        if wn == 0.0 {
            return Ok(0.0);
        }
        v = w;
        if (lambda - prev).abs() <= tol * lambda {
            let sigma = lambda.sqrt();
            if !sigma.is_finite() {
                return Err(Error::Numeric("spectral norm is not finite".into()));
            }
            return Ok(sigma);
        }
        prev = lambda;
    }
    Err(Error::Numeric(format!(
        "power iteration did not converge after {MAX_POWER_ITERATIONS} iterations"
    )))
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn mat_vec(a: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..a.rows())
        .map(|r| a.row(r).iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

fn mat_t_vec(a: &Matrix, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.cols()];
    for (r, &ur) in u.iter().enumerate() {
        for (o, x) in out.iter_mut().zip(a.row(r)) {
            *o += x * ur;
        }
    }
    out
}
