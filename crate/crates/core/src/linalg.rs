//! Minimal dense symmetric linear algebra for the model fitters.
//!
//! Dimensions here are small (number of regression terms), so plain
//! row-major `Vec<f64>` matrices with Cholesky factorization are enough.

/// Row-major square matrix view helpers operate on `a[i * p + j]`.
///
/// Cholesky factorization of a symmetric positive-definite matrix.
/// Returns the lower factor, or `None` when a pivot falls below `tol`
/// (rank deficiency / non-PD).
pub fn cholesky(a: &[f64], p: usize, tol: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0_f64; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut sum = a[i * p + j];
            for k in 0..j {
                sum -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if sum <= tol {
                    return None;
                }
                l[i * p + i] = sum.sqrt();
            } else {
                l[i * p + j] = sum / l[j * p + j];
            }
        }
    }
    Some(l)
}

/// Solve `A x = b` given the lower Cholesky factor of `A`.
pub fn cholesky_solve(l: &[f64], b: &[f64], p: usize) -> Vec<f64> {
    // forward: L y = b
    let mut y = vec![0.0_f64; p];
    for i in 0..p {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * p + k] * y[k];
        }
        y[i] = sum / l[i * p + i];
    }
    // backward: L' x = y
    let mut x = vec![0.0_f64; p];
    for i in (0..p).rev() {
        let mut sum = y[i];
        for k in (i + 1)..p {
            sum -= l[k * p + i] * x[k];
        }
        x[i] = sum / l[i * p + i];
    }
    x
}

/// Inverse of a symmetric positive-definite matrix via its Cholesky factor.
pub fn cholesky_inverse(l: &[f64], p: usize) -> Vec<f64> {
    let mut inv = vec![0.0_f64; p * p];
    let mut unit = vec![0.0_f64; p];
    for j in 0..p {
        unit.fill(0.0);
        unit[j] = 1.0;
        let col = cholesky_solve(l, &unit, p);
        for i in 0..p {
            inv[i * p + j] = col[i];
        }
    }
    // symmetrize against round-off
    for i in 0..p {
        for j in 0..i {
            let v = 0.5 * (inv[i * p + j] + inv[j * p + i]);
            inv[i * p + j] = v;
            inv[j * p + i] = v;
        }
    }
    inv
}

/// `a' b` for equal-length slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Column rank check of an n x p design via the normalized Gram matrix:
/// columns are scaled to unit diagonal first, so the pivot tolerance is
/// independent of the columns' raw magnitudes.
pub fn has_full_column_rank(x: &[f64], n: usize, p: usize) -> bool {
    if p == 0 {
        return true;
    }
    if n < p {
        return false;
    }
    let mut gram = vec![0.0_f64; p * p];
    for row in 0..n {
        let r = &x[row * p..(row + 1) * p];
        for i in 0..p {
            for j in 0..=i {
                gram[i * p + j] += r[i] * r[j];
            }
        }
    }
    let mut scale = vec![0.0_f64; p];
    for i in 0..p {
        let d = gram[i * p + i];
        if d <= 0.0 {
            return false;
        }
        scale[i] = d.sqrt();
    }
    for i in 0..p {
        for j in 0..=i {
            let v = gram[i * p + j] / (scale[i] * scale[j]);
            gram[i * p + j] = v;
            gram[j * p + i] = v;
        }
    }
    cholesky(&gram, p, 1e-8).is_some()
}
