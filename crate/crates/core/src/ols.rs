//! Small dense least squares through the normal equations.

use crate::error::{Error, Result};

/// Relative pivot threshold below which a column counts as dependent.
const PIVOT_TOL: f64 = 1e-10;

/// Solves `min ‖Xθ - y‖²` for row-major `x`, naming columns for error
/// reporting. `XᵀX` is factorized by Cholesky with diagonal pivoting, so a
/// rank-deficient design is detected and its dependent columns listed.
pub fn ols(x: &[Vec<f64>], y: &[f64], names: &[&str]) -> Result<Vec<f64>> {
    let p = names.len();
    if x.len() != y.len() {
        return Err(Error::Argument(format!("{} design rows but {} responses", x.len(), y.len())));
    }
    if p == 0 || x.iter().any(|r| r.len() != p) {
        return Err(Error::Argument(format!("every design row needs {p} columns")));
    }
    let mut a = vec![vec![0.0; p]; p];
    let mut b = vec![0.0; p];
    for (row, &yi) in x.iter().zip(y) {
        for i in 0..p {
            b[i] += row[i] * yi;
            for j in 0..=i {
                a[i][j] += row[i] * row[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            a[j][i] = a[i][j];
        }
    }
    solve_spd_pivoted(a, b).map_err(|cols| Error::RankDeficient {
        dependent: cols.into_iter().map(|c| names[c].to_string()).collect(),
    })
}

/// Pivoted Cholesky solve of `A θ = b`. On failure returns the indices of
/// the columns left outside the pivoted basis.
fn solve_spd_pivoted(mut a: Vec<Vec<f64>>, b: Vec<f64>) -> std::result::Result<Vec<f64>, Vec<usize>> {
    let n = b.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let scale = (0..n).map(|i| a[i][i]).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(perm);
    }
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&i, &j| a[i][i].total_cmp(&a[j][j]))
            .expect("nonempty range");
        if !(a[piv][piv] > PIVOT_TOL * scale) {
            let mut dep = perm[k..].to_vec();
            dep.sort_unstable();
            return Err(dep);
        }
        a.swap(k, piv);
        for row in a.iter_mut() {
            row.swap(k, piv);
        }
        perm.swap(k, piv);

        let d = a[k][k].sqrt();
        a[k][k] = d;
        for i in k + 1..n {
            a[i][k] /= d;
        }
        for i in k + 1..n {
            let lik = a[i][k];
            for j in k + 1..n {
                let ljk = a[j][k];
                a[i][j] -= lik * ljk;
            }
        }
    }
    // L Lᵀ u = P b, θ[perm] = u
    let mut u: Vec<f64> = perm.iter().map(|&i| b[i]).collect();
    for i in 0..n {
        let s: f64 = (0..i).map(|k| a[i][k] * u[k]).sum();
        u[i] = (u[i] - s) / a[i][i];
    }
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[k][i] * u[k]).sum();
        u[i] = (u[i] - s) / a[i][i];
    }
    let mut theta = vec![0.0; n];
    for (k, &i) in perm.iter().enumerate() {
        theta[i] = u[k];
    }
    Ok(theta)
}
