//! Second-order Krylov reduced-order model with a single expansion point.
//!
//! The basis spans `s_0 = A₀⁻¹ f`, `s_1 = L s_0`, `s_l = L s_{l−1} + B s_{l−2}`
//! with `L = −A₀⁻¹ A'(ω̄)`. The vectors are generated by Arnoldi on the
//! linearized recurrence `[s_l; s_{l−1}] = [[L, B], [I, 0]] [s_{l−1}; s_{l−2}]`,
//! whose Krylov space projects onto exactly `span{s_0, …, s_{m−1}}` but stays
//! well conditioned where the raw power-like sequence would not.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::assembly::HelmholtzSystem;
use crate::linalg::{dense_solve, orthonormal_extend, LuFactors, SolveMode, DEFLATION_TOL};
use crate::{Error, Result, C64};

/// Second-order coupling `B` of the recurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KrylovCoupling {
    /// `B = −A₀⁻¹ A₂` with `A₂ = −M/c²` the second Taylor coefficient of `A(ω)`.
    #[default]
    Taylor,
    /// `B = −A₀⁻¹ i M`.
    Literal,
}

/// Whether a basis approximates the primal or the adjoint problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisMode {
    Primal,
    Adjoint,
}

/// Orthonormal projection basis together with the factorization it came from.
#[derive(Debug, Clone)]
pub struct RomBasis {
    pub v: DMatrix<C64>,
    pub omega_bar: f64,
    pub m: usize,
    pub mode: BasisMode,
    pub lu: Arc<LuFactors>,
}

impl RomBasis {
    /// Number of basis vectors (`< m` only after deflation).
    pub fn r(&self) -> usize {
        self.v.ncols()
    }

    /// `V* x`.
    pub fn project(&self, x: &DVector<C64>) -> DVector<C64> {
        self.v.ad_mul(x)
    }
}

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

fn real(v: f64) -> C64 {
    C64::new(v, 0.0)
}

/// Builds the moment-matching basis of order `m` at `omega_bar`.
///
/// In adjoint mode the recurrence uses `A*` and its derivatives, and `start`
/// plays the role of the extraction vector `p_ℓ`.
pub fn build_basis(
    sys: &HelmholtzSystem,
    start: &DVector<C64>,
    omega_bar: f64,
    m: usize,
    lu_reuse: Option<Arc<LuFactors>>,
    mode: BasisMode,
    coupling: KrylovCoupling,
) -> Result<RomBasis> {
    if m == 0 {
        return Err(Error::InvalidArgument("ROM order m must be at least 1".into()));
    }
    let n = sys.dim();
    if start.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: start.len() });
    }
    let lu = match lu_reuse {
        Some(lu) => lu,
        None => Arc::new(sys.factor(omega_bar)?),
    };
    let solve_mode = match mode {
        BasisMode::Primal => SolveMode::Direct,
        BasisMode::Adjoint => SolveMode::Adjoint,
    };
    let conj = |z: C64| if mode == BasisMode::Adjoint { z.conj() } else { z };

    // Shift variable scaled by ω̄ so that L and B are dimensionless.
    let alpha = if omega_bar > 0.0 { omega_bar } else { sys.c };
    let c2 = sys.c * sys.c;
    let a1 = (real(-2.0 * omega_bar / c2 * alpha), C64::new(0.0, -sys.beta / sys.c * alpha));
    let a2 = match coupling {
        KrylovCoupling::Taylor => real(-alpha * alpha / c2),
        KrylovCoupling::Literal => C64::new(0.0, alpha * alpha),
    };
    let apply_l = |x: &DVector<C64>| -> Result<DVector<C64>> {
        let y = sys.apply_combination(zero(), conj(a1.0), conj(a1.1), zero(), x);
        Ok(-lu.solve(&y, solve_mode)?)
    };
    let apply_b = |x: &DVector<C64>| -> Result<DVector<C64>> {
        let y = sys.apply_combination(zero(), conj(a2), zero(), zero(), x);
        Ok(-lu.solve(&y, solve_mode)?)
    };

    let rhs = match mode {
        BasisMode::Primal => sys.constrain_rhs(start),
        BasisMode::Adjoint => start.clone(),
    };
    let s0 = lu.solve(&rhs, solve_mode)?;
    if s0.norm() == 0.0 {
        return Err(Error::InvalidArgument("Krylov start vector is zero".into()));
    }

    let stack = |top: &DVector<C64>, bottom: &DVector<C64>| -> DVector<C64> {
        let mut out = DVector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(top);
        out.rows_mut(n, n).copy_from(bottom);
        out
    };

    let mut arnoldi: Vec<DVector<C64>> = Vec::with_capacity(m);
    let mut columns: Vec<DVector<C64>> = Vec::with_capacity(m);
    let first = orthonormal_extend(&[], &stack(&s0, &DVector::zeros(n)), DEFLATION_TOL)
        .expect("nonzero start vector")
        .0;
    arnoldi.push(first);
    for j in 0..m {
        let q = &arnoldi[j];
        let top = q.rows(0, n).into_owned();
        if let Some((col, _)) = orthonormal_extend(&columns, &top, DEFLATION_TOL) {
            columns.push(col);
        }
        if j + 1 == m {
            break;
        }
        let bottom = q.rows(n, n).into_owned();
        let next = stack(&(apply_l(&top)? + apply_b(&bottom)?), &top);
        match orthonormal_extend(&arnoldi, &next, DEFLATION_TOL) {
            Some((v, _)) => arnoldi.push(v),
            None => break,
        }
    }

    let mut v = DMatrix::zeros(n, columns.len());
    for (k, col) in columns.iter().enumerate() {
        v.set_column(k, col);
    }
    Ok(RomBasis {
        v,
        omega_bar,
        m,
        mode,
        lu,
    })
}

/// Galerkin-projected matrices `V*SV`, `V*MV`, `V*DV`, the projected
/// Dirichlet identity and projected right-hand sides.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub s_r: DMatrix<C64>,
    pub m_r: DMatrix<C64>,
    pub d_r: DMatrix<C64>,
    pub e_r: DMatrix<C64>,
    pub f_r: Vec<DVector<C64>>,
    pub c: f64,
    pub beta: f64,
}

/// Projects the system and each right-hand side onto `basis`.
pub fn reduce(sys: &HelmholtzSystem, rhs_list: &[DVector<C64>], basis: &RomBasis) -> Result<ReducedSystem> {
    let n = sys.dim();
    if basis.v.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: basis.v.nrows(),
        });
    }
    let v = &basis.v;
    let s_r = v.ad_mul(&sys.s.mul_dense(v));
    let m_r = v.ad_mul(&sys.m.mul_dense(v));
    let d_r = v.ad_mul(&sys.d.mul_dense(v));
    let r = basis.r();
    let mut e_r = DMatrix::zeros(r, r);
    for &node in sys.dirichlet_nodes() {
        let row = v.row(node);
        e_r += row.adjoint() * row;
    }
    let f_r = rhs_list
        .iter()
        .map(|f| {
            if f.len() != n {
                Err(Error::DimensionMismatch { expected: n, got: f.len() })
            } else {
                Ok(basis.project(&sys.constrain_rhs(f)))
            }
        })
        .collect::<Result<_>>()?;
    Ok(ReducedSystem {
        s_r,
        m_r,
        d_r,
        e_r,
        f_r,
        c: sys.c,
        beta: sys.beta,
    })
}

impl ReducedSystem {
    pub fn r(&self) -> usize {
        self.s_r.nrows()
    }

    /// `A_r(ω) = V* A(ω) V`.
    pub fn matrix(&self, omega: f64) -> DMatrix<C64> {
        let k = omega / self.c;
        &self.s_r + &self.e_r - &self.m_r * real(k * k) - &self.d_r * C64::new(0.0, k * self.beta)
    }

    /// Solves `A_r(ω) u_r = f_r` for a given reduced right-hand side.
    pub fn solve_with_rhs(&self, omega: f64, f_r: &DVector<C64>) -> Result<DVector<C64>> {
        dense_solve(&self.matrix(omega), f_r).map_err(|e| match e {
            Error::SingularPivot { .. } => Error::Resonance { omega },
            other => other,
        })
    }
}

/// Reduced solutions for every stored right-hand side.
pub fn solve_rom(red: &ReducedSystem, omega: f64) -> Result<Vec<DVector<C64>>> {
    red.f_r.iter().map(|f| red.solve_with_rhs(omega, f)).collect()
}

/// `ũ = V u_r`.
pub fn lift(basis: &RomBasis, u_r: &DVector<C64>) -> Result<DVector<C64>> {
    if u_r.len() != basis.r() {
        return Err(Error::DimensionMismatch {
            expected: basis.r(),
            got: u_r.len(),
        });
    }
    Ok(&basis.v * u_r)
}
