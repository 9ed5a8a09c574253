//! Small dense helpers on top of nalgebra: least squares, sample moments,
//! symmetric pseudoinverse and Schur complements.

use nalgebra::{DMatrix, DVector};

/// Columns whose QR pivot falls below this fraction of the column norm are
/// treated as linearly dependent on the preceding ones.
const RANK_TOLERANCE: f64 = 1e-10;

/// Condition numbers above this get a warning attached.
pub const CONDITION_WARNING: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub beta: DVector<f64>,
    pub rss: f64,
    /// Diagonal of `(X'X + ridge I)^-1`.
    pub inverse_gram_diag: DVector<f64>,
}

/// Solves `min |y - X b|^2 + ridge |b|^2` through a QR factorisation of the
/// (ridge-augmented) design. Returns `None` when the unregularised design is
/// rank deficient.
pub fn least_squares(design: &DMatrix<f64>, y: &DVector<f64>, ridge: f64) -> Option<LeastSquares> {
    let (n, k) = design.shape();
    let (x, rhs) = if ridge > 0.0 {
        let mut x = DMatrix::zeros(n + k, k);
        x.rows_mut(0, n).copy_from(design);
        x.rows_mut(n, k).fill_diagonal(ridge.sqrt());
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(y);
        (x, rhs)
    } else {
        if n < k {
            return None;
        }
        (design.clone(), y.clone())
    };

    let col_norms: Vec<f64> = (0..k).map(|j| x.column(j).norm()).collect();
    let qr = x.qr();
    let r = qr.r();
    for j in 0..k {
        let scale = col_norms[j];
        if scale == 0.0 || r[(j, j)].abs() <= RANK_TOLERANCE * scale {
            return None;
        }
    }
    let qty = qr.q().transpose() * &rhs;
    let beta = r.solve_upper_triangular(&qty)?;
    let resid = y - design * &beta;
    let r_inv = r.solve_upper_triangular(&DMatrix::identity(k, k))?;
    let inverse_gram_diag = DVector::from_fn(k, |i, _| r_inv.row(i).norm_squared());
    Some(LeastSquares {
        beta,
        rss: resid.norm_squared(),
        inverse_gram_diag,
    })
}

/// Column means and the unbiased (`n - 1`) covariance of the rows of `obs`.
pub fn sample_moments(obs: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = obs.nrows();
    let mean = obs.row_mean().transpose();
    let mut centered = obs.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let mut cov = centered.transpose() * &centered / (n as f64 - 1.0);
    symmetrize(&mut cov);
    (mean, cov)
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Moore-Penrose pseudoinverse of a symmetric PSD matrix, with its
/// condition number (infinite when singular).
pub fn pinv_symmetric(m: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let n = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
    let cutoff = max * n as f64 * f64::EPSILON;
    let mut inv_vals = DVector::zeros(n);
    let mut min_kept = f64::INFINITY;
    let mut singular = max == 0.0;
    for (i, &v) in eig.eigenvalues.iter().enumerate() {
        if v > cutoff {
            inv_vals[i] = 1.0 / v;
            min_kept = min_kept.min(v);
        } else {
            singular = true;
        }
    }
    let cond = if singular { f64::INFINITY } else { max / min_kept };
    let v = &eig.eigenvectors;
    (v * DMatrix::from_diagonal(&inv_vals) * v.transpose(), cond)
}

/// Conditional covariance of the `target` coordinates given the `given`
/// ones: `S_tt - S_tg S_gg^+ S_gt`. Also returns the condition number of
/// `S_gg`.
pub fn schur_complement(cov: &DMatrix<f64>, given: &[usize], target: &[usize]) -> (DMatrix<f64>, f64) {
    let s11 = cov.select_rows(given).select_columns(given);
    let s12 = cov.select_rows(given).select_columns(target);
    let s22 = cov.select_rows(target).select_columns(target);
    let (inv, cond) = pinv_symmetric(&s11);
    let mut out = s22 - s12.transpose() * inv * &s12;
    symmetrize(&mut out);
    (out, cond)
}

/// `b' M b`, clamped at zero for PSD `m` whose roundoff makes it dip below.
pub fn psd_quadratic_form(b: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
    (b.transpose() * m * b)[(0, 0)].max(0.0)
}

/// Symmetric square root factor `L` with `L L' = m` for PSD `m`; negative
/// roundoff eigenvalues are treated as zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_fit_recovers_coefficients() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0, 7.0]);
        let fit = least_squares(&x, &y, 0.0).unwrap();
        assert_relative_eq!(fit.beta[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(fit.beta[1], 2.0, epsilon = 1e-12);
        assert!(fit.rss < 1e-20);
    }

    #[test]
    fn collinear_design_is_rejected() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(least_squares(&x, &y, 0.0).is_none());
        assert!(least_squares(&x, &y, 1e-3).is_some());
    }

    #[test]
    fn ridge_matches_normal_equations() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.3, 1.0, -1.0, 1.0, 2.0, 1.0, 0.5]);
        let y = DVector::from_vec(vec![0.2, 1.0, -0.7, 0.4]);
        let ridge = 0.5;
        let fit = least_squares(&x, &y, ridge).unwrap();
        let gram = x.transpose() * &x + DMatrix::identity(2, 2) * ridge;
        let direct = gram.clone().try_inverse().unwrap() * x.transpose() * &y;
        assert_relative_eq!(fit.beta, direct, epsilon = 1e-12);
        let inv = gram.try_inverse().unwrap();
        assert_relative_eq!(fit.inverse_gram_diag[1], inv[(1, 1)], epsilon = 1e-12);
    }

    #[test]
    fn schur_of_two_by_two() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let (s, cond) = schur_complement(&cov, &[0], &[1]);
        assert_relative_eq!(s[(0, 0)], 0.75, epsilon = 1e-15);
        assert_relative_eq!(cond, 1.0);
    }

    #[test]
    fn pseudoinverse_of_singular_block() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (p, cond) = pinv_symmetric(&m);
        assert!(cond.is_infinite());
        assert_relative_eq!(&m * &p * &m, m, epsilon = 1e-12);
    }
}
