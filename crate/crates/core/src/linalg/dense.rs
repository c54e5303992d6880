use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::{Error, Result, C64};

/// Default relative deflation tolerance for [`orthonormal_extend`].
pub const DEFLATION_TOL: f64 = 1e-12;

/// Orthogonalizes `w` against the orthonormal columns in `basis`.
///
/// Uses modified Gram-Schmidt followed by one reorthogonalization pass.
/// Returns the normalized vector together with its norm after
/// orthogonalization, or `None` when that norm falls below `tol * ‖w‖`
/// (deflation).
pub fn orthonormal_extend(basis: &[DVector<C64>], w: &DVector<C64>, tol: f64) -> Option<(DVector<C64>, f64)> {
    let w_norm = w.norm();
    if w_norm == 0.0 || !w_norm.is_finite() {
        return None;
    }
    let mut v = w.clone();
    for _pass in 0..2 {
        for b in basis {
            let proj = b.dotc(&v);
            v.axpy(-proj, b, C64::new(1.0, 0.0));
        }
    }
    let norm = v.norm();
    if norm < tol * w_norm {
        return None;
    }
    v.unscale_mut(norm);
    Some((v, norm))
}

/// Eigenpairs of a real symmetric matrix, sorted by descending eigenvalue.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    /// Orthonormal eigenvectors stored column-wise in the order of `values`.
    pub vectors: DMatrix<f64>,
}

/// Largest off-diagonal entry of `VᵀCV` tolerated after refinement,
/// relative to `‖C‖_F`.
const EIG_OFFDIAG_TOL: f64 = 1e-15;

/// Cyclic Jacobi sweeps on `B = VᵀCV`, accumulating the rotations into `V`.
///
/// The implicit QR iteration occasionally leaves eigenvectors that are
/// orthonormal but not invariant to working precision; `B` is then nearly
/// diagonal and only the few offending pairs need rotating.
fn jacobi_refine(c: &DMatrix<f64>, vectors: &mut DMatrix<f64>) -> DVector<f64> {
    let n = c.nrows();
    let tol = EIG_OFFDIAG_TOL * c.norm();
    let mut b = vectors.transpose() * c * &*vectors;
    for _sweep in 0..8 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let bpq = b[(p, q)];
                if bpq.abs() <= tol {
                    continue;
                }
                rotated = true;
                let theta = (b[(q, q)] - b[(p, p)]) / (2.0 * bpq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                for k in 0..n {
                    let (bkp, bkq) = (b[(k, p)], b[(k, q)]);
                    b[(k, p)] = cs * bkp - sn * bkq;
                    b[(k, q)] = sn * bkp + cs * bkq;
                }
                for k in 0..n {
                    let (bpk, bqk) = (b[(p, k)], b[(q, k)]);
                    b[(p, k)] = cs * bpk - sn * bqk;
                    b[(q, k)] = sn * bpk + cs * bqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (vectors[(k, p)], vectors[(k, q)]);
                    vectors[(k, p)] = cs * vkp - sn * vkq;
                    vectors[(k, q)] = sn * vkp + cs * vkq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    b.diagonal()
}

/// Symmetric eigendecomposition via Householder tridiagonalization and
/// implicit QR, polished by Jacobi rotations.
pub fn sym_eig(c: &DMatrix<f64>) -> Result<SymEigen> {
    if !c.is_square() {
        return Err(Error::DimensionMismatch {
            expected: c.nrows(),
            got: c.ncols(),
        });
    }
    let asym = max_asymmetry(c);
    let scale = c.amax().max(1.0);
    if asym > 1e-12 * scale {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let sym = (c + c.transpose()) * 0.5;
    let mut raw = SymmetricEigen::new(sym.clone()).eigenvectors;
    let eigenvalues = jacobi_refine(&sym, &mut raw);
    let n = c.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigenvalues[b].total_cmp(&eigenvalues[a]).then(a.cmp(&b)));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eigenvalues[k]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = raw.column(src).into_owned();
        // Sign convention: largest-magnitude component positive.
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    Ok(SymEigen { values, vectors })
}

fn max_asymmetry(c: &DMatrix<f64>) -> f64 {
    let mut asym = 0.0f64;
    for i in 0..c.nrows() {
        for j in i + 1..c.ncols() {
            asym = asym.max((c[(i, j)] - c[(j, i)]).abs());
        }
    }
    asym
}

/// Cholesky factorization that retries with a diagonal shift of
/// `rel_jitter * trace / n`, growing by 100x up to three times, when the plain
/// factorization fails.
pub fn cholesky_jittered(a: &DMatrix<f64>, rel_jitter: f64) -> Result<Cholesky<f64, Dyn>> {
    if let Some(ch) = Cholesky::new(a.clone()) {
        return Ok(ch);
    }
    let n = a.nrows().max(1) as f64;
    let base = (a.trace().abs() / n).max(f64::MIN_POSITIVE);
    let mut shift = rel_jitter * base;
    for _ in 0..4 {
        let mut shifted = a.clone();
        for i in 0..a.nrows() {
            shifted[(i, i)] += shift;
        }
        if let Some(ch) = Cholesky::new(shifted) {
            return Ok(ch);
        }
        shift *= 100.0;
    }
    Err(Error::NotPositiveDefinite(format!(
        "Cholesky failed for {}x{} matrix even with diagonal shift {shift:e}",
        a.nrows(),
        a.ncols()
    )))
}

/// Solves a small dense complex system by LU with partial pivoting.
pub fn dense_solve(a: &DMatrix<C64>, b: &DVector<C64>) -> Result<DVector<C64>> {
    if !a.is_square() || a.nrows() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: b.len(),
        });
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let umax = (0..u.nrows()).map(|i| u[(i, i)].norm()).fold(0.0, f64::max);
    if let Some(k) = (0..u.nrows()).find(|&i| u[(i, i)].norm() <= 1e-14 * umax || umax == 0.0) {
        return Err(Error::SingularPivot { pivot: k });
    }
    lu.solve(b).ok_or(Error::SingularPivot { pivot: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn extend_normalizes_only() {
        let (v, n) = orthonormal_extend(&[], &DVector::from_vec(vec![c(3.0, 0.0), c(0.0, 0.0)]), DEFLATION_TOL).unwrap();
        assert_eq!(n, 3.0);
        assert_eq!(v, DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]));
    }

    #[test]
    fn extend_deflates_dependent_vector() {
        let e1 = DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        assert!(orthonormal_extend(&[e1.clone()], &e1, DEFLATION_TOL).is_none());
    }

    #[test]
    fn extend_by_hand() {
        let e1 = DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let s = 1.0 / 2f64.sqrt();
        let (v, n) = orthonormal_extend(&[e1], &DVector::from_vec(vec![c(s, 0.0), c(s, 0.0)]), DEFLATION_TOL).unwrap();
        assert!((n - s).abs() < 1e-15);
        assert!((v[0]).norm() < 1e-15 && (v[1] - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn eig_two_by_two() {
        let e = sym_eig(&DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0])).unwrap();
        assert!((e.values[0] - 1.5).abs() < 1e-14 && (e.values[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn eig_vectors_are_invariant() {
        // A matrix on which the QR iteration alone leaves VᵀCV off-diagonal
        // entries of order 1e-10.
        use rand::{Rng, SeedableRng};
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(164204344714768679);
        let a = DMatrix::from_fn(34, 34, |_, _| r.gen_range(-1.0..1.0));
        let c = &a + a.transpose();
        let eig = sym_eig(&c).unwrap();
        let rebuilt = &eig.vectors * DMatrix::from_diagonal(&eig.values) * eig.vectors.transpose();
        assert!((rebuilt - &c).norm() <= 1e-13 * c.norm());
    }

    #[test]
    fn eig_diagonal_sorted() {
        let e = sym_eig(&DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0]))).unwrap();
        assert_eq!(e.values.as_slice(), &[3.0, 2.0, 1.0]);
        let e = sym_eig(&DMatrix::identity(4, 4)).unwrap();
        assert!(e.values.iter().all(|&l| (l - 1.0).abs() < 1e-15));
    }

    #[test]
    fn eig_rejects_asymmetric() {
        assert!(matches!(
            sym_eig(&DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0])),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn jitter_rescues_semidefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(cholesky_jittered(&a, 1e-10).is_ok());
        let neg = DMatrix::from_row_slice(1, 1, &[-1.0]);
        assert!(cholesky_jittered(&neg, 1e-10).is_err());
    }

    #[test]
    fn dense_solve_flags_singular() {
        let a = DMatrix::from_element(2, 2, c(1.0, 0.0));
        assert!(dense_solve(&a, &DVector::from_element(2, c(1.0, 0.0))).is_err());
    }
}
