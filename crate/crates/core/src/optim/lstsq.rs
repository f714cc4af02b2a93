//! Dense least squares by Householder QR.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::sqrt;

/// Relative pivot size below which a column is treated as dependent.
const RANK_TOL: f64 = 1e-10;

/// Minimizes `||X b - y||²` for a full-column-rank `X` given as rows.
///
/// Uses Householder QR on the design, never the normal equations. A design
/// that loses rank yields [`Error::RankDeficient`] with a unit vector `v`
/// such that `X v ≈ 0`.
pub fn linear_least_squares<R: AsRef<[f64]>>(design: &[R], targets: &[f64]) -> Result<Vec<f64>> {
    let m = design.len();
    if m != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "design has {m} rows but there are {} targets",
            targets.len()
        )));
    }
    let n = design.first().map_or(0, |r| r.as_ref().len());
    if n == 0 || m < n {
        return Err(Error::TooFewPoints {
            needed: n.max(1),
            got: m,
        });
    }
    // Column-major copy.
    let mut a = vec![0.0; m * n];
    for (i, row) in design.iter().enumerate() {
        let row = row.as_ref();
        if row.len() != n {
            return Err(Error::InvalidArgument(format!(
                "row {i} has {} columns, expected {n}",
                row.len()
            )));
        }
        for (j, &v) in row.iter().enumerate() {
            a[j * m + i] = v;
        }
    }
    let mut b = targets.to_vec();
    let scale = (0..n)
        .map(|j| sqrt(a[j * m..(j + 1) * m].iter().map(|v| v * v).sum()))
        .fold(0.0_f64, f64::max);
    if !scale.is_finite() {
        return Err(Error::InvalidArgument(
            "design contains non-finite entries".into(),
        ));
    }

    for j in 0..n {
        let (head, tail) = a.split_at_mut(j * m);
        let col = &mut tail[..m];
        let norm = sqrt(col[j..].iter().map(|v| v * v).sum());
        if norm <= RANK_TOL * scale {
            return Err(rank_deficient(head, col, m, j, n));
        }
        let alpha = if col[j] > 0.0 { -norm } else { norm };
        // v = x - alpha e1, stored in place below the diagonal.
        col[j] -= alpha;
        let vnorm2: f64 = col[j..].iter().map(|v| v * v).sum();
        let v: Vec<f64> = col[j..].to_vec();
        col[j] = alpha;
        for x in &mut col[j + 1..] {
            *x = 0.0;
        }
        for k in j + 1..n {
            let other = &mut tail[(k - j) * m..(k - j + 1) * m];
            let dot: f64 = v.iter().zip(&other[j..]).map(|(a, b)| a * b).sum();
            let f = 2.0 * dot / vnorm2;
            for (o, vi) in other[j..].iter_mut().zip(&v) {
                *o -= f * vi;
            }
        }
        let dot: f64 = v.iter().zip(&b[j..]).map(|(a, b)| a * b).sum();
        let f = 2.0 * dot / vnorm2;
        for (o, vi) in b[j..].iter_mut().zip(&v) {
            *o -= f * vi;
        }
    }

    let mut coef = vec![0.0; n];
    for j in (0..n).rev() {
        let mut s = b[j];
        for (k, c) in coef.iter().enumerate().skip(j + 1) {
            s -= a[k * m + j] * c;
        }
        coef[j] = s / a[j * m + j];
    }
    Ok(coef)
}

/// Null direction when column `col` is (numerically) a combination of the
/// earlier ones: `v[col] = 1`, `v[..col] = -R⁻¹ r` with `r` the reduced
/// entries of the dependent column above the diagonal.
fn rank_deficient(head: &[f64], dependent: &[f64], m: usize, col: usize, n: usize) -> Error {
    let mut v = vec![0.0; n];
    v[col] = 1.0;
    for i in (0..col).rev() {
        let mut s = -dependent[i];
        for k in i + 1..col {
            s -= head[k * m + i] * v[k];
        }
        v[i] = s / head[i * m + i];
    }
    let norm = sqrt(v.iter().map(|x| x * x).sum());
    for x in &mut v {
        *x /= norm;
    }
    Error::RankDeficient {
        column: col,
        null_direction: v,
    }
}
