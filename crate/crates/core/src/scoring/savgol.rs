//! Savitzky-Golay smoothing: per-window least-squares polynomial fits.
//!
//! Interior samples use the symmetric center weights. The first and last
//! half-windows are smoothed by fitting a polynomial to the first/last full
//! window and evaluating it at their positions, so affine series are fixed
//! points everywhere.

use crate::error::{Error, Result};

/// Least-squares weights for predicting the sample at `eval` (0-based
/// position inside a window of `window` samples) from all window samples,
/// using a degree-`polyorder` fit.
pub fn coefficients(window: usize, polyorder: usize, eval: usize) -> Vec<f64> {
    assert!(window > polyorder && eval < window);
    let terms = polyorder + 1;
    // Positions relative to the evaluation point.
    let xs: Vec<f64> = (0..window).map(|j| j as f64 - eval as f64).collect();

    // Gram matrix G = V^T V for the Vandermonde V[j][k] = xs[j]^k.
    let mut gram = vec![vec![0.0f64; terms]; terms];
    for x in &xs {
        let mut powers = vec![1.0f64; terms];
        for k in 1..terms {
            powers[k] = powers[k - 1] * x;
        }
        for a in 0..terms {
            for b in 0..terms {
                gram[a][b] += powers[a] * powers[b];
            }
        }
    }

    // Solve G y = e_0; the weights are then w_j = sum_k y_k xs[j]^k.
    let y = solve(gram, unit_vector(terms));
    xs.iter()
        .map(|x| {
            let mut acc = 0.0;
            let mut pow = 1.0;
            for &yk in &y {
                acc += yk * pow;
                pow *= x;
            }
            acc
        })
        .collect()
}

fn unit_vector(n: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[0] = 1.0;
    e
}

/// Gaussian elimination with partial pivoting; the systems here are tiny
/// (polyorder + 1 square).
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let diag = a[col][col];
        for row in col + 1..n {
            let factor = a[row][col] / diag;
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    x
}

/// Smooth a series. `window` must be odd and greater than `polyorder`;
/// series shorter than `window` fall back to the largest odd window that
/// fits (and, if necessary, a correspondingly reduced polynomial order).
pub fn smooth(values: &[f64], window: usize, polyorder: usize) -> Result<Vec<f64>> {
    if window % 2 == 0 {
        return Err(Error::InvalidParam(format!(
            "smoothing window must be odd, got {window}"
        )));
    }
    if polyorder >= window {
        return Err(Error::InvalidParam(format!(
            "polyorder {polyorder} must be smaller than window {window}"
        )));
    }
    let n = values.len();
    if n == 0 {
        return Ok(Vec::new());
    }

    let mut window = window;
    if n < window {
        window = if n % 2 == 1 { n } else { n - 1 };
    }
    let polyorder = polyorder.min(window.saturating_sub(1));
    if window <= 1 {
        return Ok(values.to_vec());
    }
    let half = window / 2;

    let mut out = vec![0.0f64; n];
    let center = coefficients(window, polyorder, half);
    for i in half..n - half {
        let w = &values[i - half..i + half + 1];
        out[i] = dot(&center, w);
    }
    // Boundary fits against the first and last full windows.
    let head = &values[..window];
    let tail = &values[n - window..];
    for i in 0..half {
        out[i] = dot(&coefficients(window, polyorder, i), head);
        let j = window - 1 - i;
        out[n - 1 - i] = dot(&coefficients(window, polyorder, j), tail);
    }
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
