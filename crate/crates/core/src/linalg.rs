//! Small dense linear algebra helpers (row-major `Vec<f64>` matrices).

use crate::error::{Error, Result};

/// Lower-triangular factor `L` with `L L' = cov` for a symmetric positive
/// semidefinite matrix. Columns with a zero pivot are left at zero.
pub fn psd_cholesky(cov: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let d = cov.len();
    for row in cov {
        if row.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
    }
    let scale = (0..d).map(|i| cov[i][i].abs()).fold(0.0, f64::max).max(1.0);
    let tol = 1e-12 * scale;
    for i in 0..d {
        for j in 0..i {
            if (cov[i][j] - cov[j][i]).abs() > 1e-10 * scale {
                return Err(Error::InvalidArgument {
                    name: "covariance",
                    reason: format!("not symmetric at ({i}, {j})"),
                });
            }
        }
    }
    let mut l = vec![vec![0.0; d]; d];
    for j in 0..d {
        let pivot = cov[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if pivot < -tol {
            return Err(Error::NotPsd { index: j, pivot });
        }
        if pivot <= tol {
            for i in j + 1..d {
                let off = cov[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
                if off.abs() > 1e-8 * scale {
                    return Err(Error::NotPsd { index: j, pivot });
                }
            }
            continue;
        }
        let root = pivot.sqrt();
        l[j][j] = root;
        for i in j + 1..d {
            let off = cov[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            l[i][j] = off / root;
        }
    }
    Ok(l)
}

/// `L z` for a lower-triangular `L`.
pub fn lower_times(l: &[Vec<f64>], z: &[f64]) -> Vec<f64> {
    l.iter()
        .enumerate()
        .map(|(i, row)| row[..=i].iter().zip(z).map(|(a, b)| a * b).sum())
        .collect()
}

/// Solves `A x = b` for a square `p x p` matrix stored row-major, by LU
/// with partial pivoting. Returns `None` when `A` is numerically singular.
pub fn solve_square(a: &[f64], b: &[f64], p: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    let scale = m.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    for col in 0..p {
        let (piv, val) = (col..p)
            .map(|r| (r, m[r * p + col].abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))?;
        if val <= 1e-12 * scale {
            return None;
        }
        if piv != col {
            for k in 0..p {
                m.swap(col * p + k, piv * p + k);
            }
            x.swap(col, piv);
        }
        let d = m[col * p + col];
        for r in col + 1..p {
            let f = m[r * p + col] / d;
            if f != 0.0 {
                for k in col..p {
                    m[r * p + k] -= f * m[col * p + k];
                }
                x[r] -= f * x[col];
            }
        }
    }
    for col in (0..p).rev() {
        let s: f64 = (col + 1..p).map(|k| m[col * p + k] * x[k]).sum();
        x[col] = (x[col] - s) / m[col * p + col];
    }
    Some(x)
}

/// Numerical rank of the `n x p` row-major matrix `x` via Gaussian
/// elimination with full pivoting on `X'X`.
pub fn column_rank(x: &[f64], n: usize, p: usize) -> usize {
    let mut g = vec![0.0; p * p];
    for i in 0..n {
        let row = &x[i * p..(i + 1) * p];
        for a in 0..p {
            for b in 0..p {
                g[a * p + b] += row[a] * row[b];
            }
        }
    }
    let scale = (0..p).map(|i| g[i * p + i]).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0;
    }
    let mut rank = 0;
    let mut used = vec![false; p];
    for _ in 0..p {
        let Some((r, c, v)) = (0..p)
            .filter(|&r| !used[r])
            .flat_map(|r| (0..p).map(move |c| (r, c)))
            .map(|(r, c)| (r, c, g[r * p + c].abs()))
            .max_by(|a, b| a.2.total_cmp(&b.2))
        else {
            break;
        };
        if v <= 1e-10 * scale {
            break;
        }
        used[r] = true;
        rank += 1;
        let pv = g[r * p + c];
        for rr in 0..p {
            if rr != r && !used[rr] {
                let f = g[rr * p + c] / pv;
                for cc in 0..p {
                    g[rr * p + cc] -= f * g[r * p + cc];
                }
            }
        }
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_of_semidefinite_matrix() {
        let cov = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let l = psd_cholesky(&cov).unwrap();
        assert_eq!(lower_times(&l, &[2.0, 5.0]), vec![2.0, 2.0]);
        assert!(psd_cholesky(&[vec![1.0, 2.0], vec![2.0, 1.0]]).is_err());
        assert!(psd_cholesky(&[vec![-1.0]]).is_err());
    }

    #[test]
    fn solves_and_detects_singularity() {
        let x = solve_square(&[0.0, 1.0, 2.0, 0.0], &[3.0, 4.0], 2).unwrap();
        assert_eq!(x, vec![2.0, 3.0]);
        assert!(solve_square(&[1.0, 2.0, 2.0, 4.0], &[1.0, 1.0], 2).is_none());
    }

    #[test]
    fn rank_of_collinear_design() {
        let x = [1.0, 2.0, 2.0, 4.0, 3.0, 6.0];
        assert_eq!(column_rank(&x, 3, 2), 1);
        let x = [1.0, 0.0, 1.0, 1.0, 1.0, 2.0];
        assert_eq!(column_rank(&x, 3, 2), 2);
    }
}
