//! Matrix exponential by scaling and squaring around a fixed degree-18
//! Taylor polynomial.
//!
//! The input is scaled by `2^-s` so that its 1-norm is at most one, the
//! truncated series is evaluated with the Paterson–Stockmeyer scheme
//! (seven products instead of seventeen) and the result is squared `s`
//! times.

use crate::error::{dim_err, Error, Result};
use crate::tensor::Matrix;

/// Degree of the Taylor polynomial.
pub const TAYLOR_ORDER: usize = 18;

const BLOCK: usize = 4;

fn taylor_coefficients() -> [f64; TAYLOR_ORDER + 1] {
    let mut c = [0.0; TAYLOR_ORDER + 1];
    c[0] = 1.0;
    for i in 1..=TAYLOR_ORDER {
        c[i] = c[i - 1] / i as f64;
    }
    c
}

/// `e^a` for a square matrix with finite entries.
pub fn mat_exp(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return dim_err(format!(
            "matrix exponential of a {}x{} matrix",
            a.rows(),
            a.cols()
        ));
    }
    if !a.all_finite() {
        return Err(Error::Numeric(
            "matrix exponential of non-finite input".into(),
        ));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }

    let norm = a.norm1();
    let squarings = if norm > 1.0 {
        norm.log2().ceil() as i32
    } else {
        0
    };
    let x = if squarings > 0 {
        a.scale(0.5f64.powi(squarings))
    } else {
        a.clone()
    };

    let mut result = taylor_poly(&x)?;
    for _ in 0..squarings {
        result = result.matmul(&result)?;
    }
    if !result.all_finite() {
        return Err(Error::Numeric(format!(
            "matrix exponential overflowed (input 1-norm {norm:.3e})"
        )));
    }
    Ok(result)
}

/// Degree-18 Taylor polynomial of `x` by Paterson–Stockmeyer.
fn taylor_poly(x: &Matrix) -> Result<Matrix> {
    let n = x.rows();
    let c = taylor_coefficients();

    // powers[i] = x^i for i in 0..=BLOCK
    let mut powers = Vec::with_capacity(BLOCK + 1);
    powers.push(Matrix::identity(n));
    powers.push(x.clone());
    for i in 2..=BLOCK {
        let next = powers[i - 1].matmul(x)?;
        powers.push(next);
    }

    let chunk = |j: usize| -> Matrix {
        let mut acc = Matrix::zeros(n, n);
        for i in 0..BLOCK {
            let k = j * BLOCK + i;
            if k <= TAYLOR_ORDER {
                // same shapes, cannot fail
                acc.axpy(c[k], &powers[i]).expect("shape");
            }
        }
        acc
    };

    let top = TAYLOR_ORDER / BLOCK;
    let mut acc = chunk(top);
    for j in (0..top).rev() {
        acc = acc.matmul(&powers[BLOCK])?;
        acc.axpy(1.0, &chunk(j))?;
    }
    Ok(acc)
}
