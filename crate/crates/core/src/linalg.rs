use nalgebra::{DMatrix, DVector};

/// Solves a symmetric block-tridiagonal system by block Cholesky elimination.
///
/// `diag[k]` is block `(k, k)` and `off[k]` is block `(k, k + 1)`. Returns
/// `None` when a pivot block is not positive definite.
pub(crate) fn solve_block_tridiagonal(
    diag: &[DMatrix<f64>],
    off: &[DMatrix<f64>],
    rhs: &[DVector<f64>],
) -> Option<Vec<DVector<f64>>> {
    let m = diag.len();
    debug_assert_eq!(off.len() + 1, m.max(1));
    let mut chol = Vec::with_capacity(m);
    let mut z = Vec::with_capacity(m);
    for k in 0..m {
        let (s, r) = if k == 0 {
            (diag[0].clone(), rhs[0].clone())
        } else {
            let prev: &nalgebra::Cholesky<f64, nalgebra::Dyn> = &chol[k - 1];
            let b = &off[k - 1];
            let sinv_b = prev.solve(b);
            let sinv_z = prev.solve(&z[k - 1]);
            (
                &diag[k] - b.transpose() * sinv_b,
                &rhs[k] - b.transpose() * sinv_z,
            )
        };
        chol.push(s.cholesky()?);
        z.push(r);
    }
    let mut x = vec![DVector::zeros(0); m];
    for k in (0..m).rev() {
        let r = if k + 1 < m {
            &z[k] - &off[k] * &x[k + 1]
        } else {
            z[k].clone()
        };
        x[k] = chol[k].solve(&r);
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_dense_solve() {
        let n = 3;
        let m = 5;
        let mut diag = Vec::new();
        let mut off = Vec::new();
        for k in 0..m {
            let mut d = DMatrix::<f64>::identity(n, n) * (6.0 + k as f64);
            d[(0, 1)] = 0.5;
            d[(1, 0)] = 0.5;
            diag.push(d);
            if k + 1 < m {
                off.push(DMatrix::from_fn(n, n, |i, j| 0.3 * (i as f64 - j as f64 + 1.0)));
            }
        }
        let rhs: Vec<DVector<f64>> = (0..m)
            .map(|k| DVector::from_fn(n, |i, _| (k * n + i) as f64 - 4.0))
            .collect();
        let x = solve_block_tridiagonal(&diag, &off, &rhs).unwrap();
        let mut dense = DMatrix::zeros(n * m, n * m);
        for k in 0..m {
            dense.view_mut((k * n, k * n), (n, n)).copy_from(&diag[k]);
            if k + 1 < m {
                dense.view_mut((k * n, (k + 1) * n), (n, n)).copy_from(&off[k]);
                dense
                    .view_mut(((k + 1) * n, k * n), (n, n))
                    .copy_from(&off[k].transpose());
            }
        }
        let b = DVector::from_iterator(n * m, rhs.iter().flat_map(|r| r.iter().copied()));
        let xd = dense.lu().solve(&b).unwrap();
        for k in 0..m {
            for i in 0..n {
                assert!((x[k][i] - xd[k * n + i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_indefinite_pivot() {
        let diag = vec![DMatrix::from_row_slice(1, 1, &[-1.0])];
        assert!(solve_block_tridiagonal(&diag, &[], &[DVector::from_element(1, 1.0)]).is_none());
    }
}
