//! Dense least-squares helpers shared by the estimators.

use nalgebra::{linalg::ColPivQR, DMatrix, SVD};

pub(crate) struct LstsqSolution {
    pub x: DMatrix<f64>,
    /// True when the pseudo-inverse fallback was used.
    pub rank_deficient: bool,
}

/// Minimizes `||a x - b||_F` column by column.
///
/// Tall full-rank systems go through a column-pivoted QR. Wide systems, or
/// systems whose pivoted R has a diagonal entry at or below
/// `max(n, p) * eps * |r_00|`, fall back to the minimum-norm SVD solution with
/// singular-value cutoff `max(n, p) * eps * sigma_max`.
pub(crate) fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> LstsqSolution {
    let (n, p) = a.shape();
    debug_assert_eq!(n, b.nrows());
    if p == 0 {
        return LstsqSolution {
            x: DMatrix::zeros(0, b.ncols()),
            rank_deficient: false,
        };
    }
    let scale = n.max(p) as f64 * f64::EPSILON;
    if n >= p {
        let qr = ColPivQR::new(a.clone());
        let r = qr.r();
        let r00 = r[(0, 0)].abs();
        let full_rank = r00 > 0.0 && (0..p).all(|i| r[(i, i)].abs() > scale * r00);
        if full_rank {
            let mut rhs = b.clone();
            qr.q_tr_mul(&mut rhs);
            let top = rhs.rows(0, p).into_owned();
            if let Some(mut x) = r.solve_upper_triangular(&top) {
                qr.p().inv_permute_rows(&mut x);
                return LstsqSolution {
                    x,
                    rank_deficient: false,
                };
            }
        }
    }
    LstsqSolution {
        x: pinv_solve(a, b),
        rank_deficient: true,
    }
}

/// Minimum-norm least-squares solution through the SVD.
pub(crate) fn pinv_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = a.shape();
    let svd = SVD::new(a.clone(), true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return DMatrix::zeros(p, b.ncols());
    }
    let cutoff = n.max(p) as f64 * f64::EPSILON * smax;
    svd.solve(b, cutoff)
        .expect("singular vectors were requested")
}

/// Sample variance with the `n - 1` denominator.
pub(crate) fn sample_variance(xs: impl ExactSizeIterator<Item = f64> + Clone) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.clone().sum::<f64>() / n as f64;
    xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tall_full_rank_matches_exact_solution() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let x0 = DMatrix::from_row_slice(2, 1, &[2.0, -3.0]);
        let b = &a * &x0;
        let sol = lstsq(&a, &b);
        assert!(!sol.rank_deficient);
        assert!((sol.x - x0).norm() < 1e-12);
    }

    #[test]
    fn collinear_columns_use_minimum_norm() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let b = DMatrix::from_row_slice(3, 1, &[2.0, 4.0, 6.0]);
        let sol = lstsq(&a, &b);
        assert!(sol.rank_deficient);
        assert!((sol.x[0] - 1.0).abs() < 1e-10);
        assert!((sol.x[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn wide_system_is_min_norm() {
        let a = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        let b = DMatrix::from_row_slice(1, 1, &[5.0]);
        let sol = lstsq(&a, &b);
        assert!((sol.x[0] - 0.6).abs() < 1e-12);
        assert!((sol.x[1] - 0.8).abs() < 1e-12);
    }
}
