//! Adjoint-based pointwise ROM error indicator and its Gaussian-process
//! extension to the whole mesh.
//!
//! For an extraction vector `p` and adjoint solution `A* q = p`, the pointwise
//! error `p*(u − ũ)` equals `q*(f − A ũ)`, so it can be read off the residual
//! of the ROM solution once `q` is approximated by its own reduced model.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::assembly::HelmholtzSystem;
use crate::linalg::{cholesky_jittered, dense_solve, LuFactors};
use crate::mesh::{interpolation_matrix, Mesh, Point};
use crate::rom::{build_basis, reduce, BasisMode, KrylovCoupling, ReducedSystem, RomBasis};
use crate::stochastic::{kernel_cross, kernel_matrix, Channel, ComplexGaussian, KernelSpec, MultivariateGaussian};
use crate::{Error, Result, C64};

/// Reduced adjoint model for one training point.
#[derive(Debug, Clone)]
pub struct AdjointProbe {
    pub point: Point,
    /// Interpolation row at `point`.
    pub extraction: DVector<C64>,
    pub basis: RomBasis,
    reduced: ReducedSystem,
    extraction_r: DVector<C64>,
}

impl AdjointProbe {
    /// Lifted reduced adjoint solution `q ≈ A(ω)⁻* p`.
    pub fn adjoint_solution(&self, omega: f64) -> Result<DVector<C64>> {
        let a_h = self.reduced.matrix(omega).adjoint();
        let q_r = dense_solve(&a_h, &self.extraction_r).map_err(|e| match e {
            Error::SingularPivot { .. } => Error::Resonance { omega },
            other => other,
        })?;
        Ok(&self.basis.v * q_r)
    }
}

/// Adjoint probes for every training point of one system.
#[derive(Debug, Clone, Default)]
pub struct AdjointSet {
    pub probes: Vec<AdjointProbe>,
}

impl AdjointSet {
    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }

    pub fn points(&self) -> Vec<Point> {
        self.probes.iter().map(|p| p.point).collect()
    }
}

/// Builds one adjoint basis per training point, reusing the primal
/// factorization of `A(ω̄)` for the conjugate-transpose solves.
pub fn build_adjoint_set(
    sys: &HelmholtzSystem,
    mesh: &Mesh,
    points: &[Point],
    omega_bar: f64,
    m: usize,
    primal_lu: Option<Arc<LuFactors>>,
    coupling: KrylovCoupling,
) -> Result<AdjointSet> {
    if points.is_empty() {
        return Ok(AdjointSet::default());
    }
    let interp = interpolation_matrix(mesh, points)?;
    let lu = match primal_lu {
        Some(lu) => lu,
        None => Arc::new(sys.factor(omega_bar)?),
    };
    let n = sys.dim();
    let probes = points
        .iter()
        .enumerate()
        .map(|(l, &point)| {
            let mut p = DVector::zeros(n);
            for (j, w) in interp.row(l) {
                p[j] = C64::new(w, 0.0);
            }
            let basis = build_basis(sys, &p, omega_bar, m, Some(lu.clone()), BasisMode::Adjoint, coupling)?;
            let reduced = reduce(sys, &[], &basis)?;
            let extraction_r = basis.project(&p);
            Ok(AdjointProbe {
                point,
                extraction: p,
                basis,
                reduced,
                extraction_r,
            })
        })
        .collect::<Result<_>>()?;
    Ok(AdjointSet { probes })
}

/// Adjoint-weighted residual `q*(f − A(ω) ũ)` estimating `p*(u − ũ)`.
pub fn pointwise_error(
    sys: &HelmholtzSystem,
    omega: f64,
    probe: &AdjointProbe,
    rhs: &DVector<C64>,
    u_lifted: &DVector<C64>,
) -> Result<C64> {
    let q = probe.adjoint_solution(omega)?;
    weighted_residual(sys, omega, &q, rhs, u_lifted)
}

/// `q*(f − A(ω) ũ)` for a precomputed adjoint solution.
pub fn weighted_residual(
    sys: &HelmholtzSystem,
    omega: f64,
    q: &DVector<C64>,
    rhs: &DVector<C64>,
    u_lifted: &DVector<C64>,
) -> Result<C64> {
    let n = sys.dim();
    for len in [q.len(), rhs.len(), u_lifted.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, got: len });
        }
    }
    let residual = sys.constrain_rhs(rhs) - sys.apply(omega, u_lifted);
    Ok(q.dotc(&residual))
}

/// Nodal Gaussian-process model of the ROM error.
#[derive(Debug, Clone)]
pub struct ErrorField {
    pub gp: ComplexGaussian,
    pub training_points: Vec<Point>,
    pub training_values: Vec<C64>,
    /// Observation-noise variances of the real and imaginary training values.
    pub training_variances: [Vec<f64>; 2],
    pub kernel: KernelSpec,
}

impl ErrorField {
    pub fn mean(&self) -> DVector<C64> {
        self.gp.mean()
    }

    pub fn channel(&self, ch: Channel) -> &MultivariateGaussian {
        self.gp.channel(ch)
    }

    /// An identically zero error model on `n` nodes.
    pub fn zero(n: usize) -> Self {
        let zero = MultivariateGaussian::point_mass(DVector::zeros(n));
        ErrorField {
            gp: ComplexGaussian {
                re: zero.clone(),
                im: zero,
            },
            training_points: Vec::new(),
            training_values: Vec::new(),
            training_variances: [Vec::new(), Vec::new()],
            kernel: KernelSpec::new(2.5, 1e-12, 1.0).expect("valid kernel"),
        }
    }
}

/// Regression settings for [`estimate_error_field`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorGpOptions {
    /// Diagonal jitter relative to the kernel variance.
    pub jitter: f64,
    /// Length scale as a multiple of `2πc/ω`.
    pub length_factor: f64,
}

impl Default for ErrorGpOptions {
    fn default() -> Self {
        ErrorGpOptions {
            jitter: 1e-10,
            length_factor: 1.0,
        }
    }
}

/// Scale used when all training values vanish.
pub const DEGENERATE_SCALE: f64 = 1e-12;

/// Regresses pointwise error estimates onto every mesh node.
///
/// Real and imaginary parts share the Matérn 5/2 kernel but carry their own
/// noise variances. Dirichlet nodes enter as noise-free zero observations and
/// the result is pinned to exactly zero there.
#[allow(clippy::too_many_arguments)]
pub fn estimate_error_field(
    mesh: &Mesh,
    points: &[Point],
    values: &[C64],
    variances: [&[f64]; 2],
    omega: f64,
    c: f64,
    opts: ErrorGpOptions,
) -> Result<ErrorField> {
    let n_x = points.len();
    if n_x == 0 {
        return Err(Error::InvalidArgument("error field needs at least one training point".into()));
    }
    for len in [values.len(), variances[0].len(), variances[1].len()] {
        if len != n_x {
            return Err(Error::DimensionMismatch { expected: n_x, got: len });
        }
    }
    if variances.iter().flat_map(|v| v.iter()).any(|&s| !(s >= 0.0)) {
        return Err(Error::InvalidArgument("training variances must be non-negative".into()));
    }
    if !(omega > 0.0) {
        return Err(Error::InvalidArgument(format!("error field needs ω > 0, got {omega}")));
    }
    let scale = 2.0 * values.iter().map(|d| d.norm()).fold(0.0, f64::max);
    let sigma = if scale > 0.0 { scale } else { DEGENERATE_SCALE };
    let kernel = KernelSpec::new(2.5, sigma, opts.length_factor * 2.0 * PI * c / omega)?;

    let dirichlet = mesh.dirichlet_nodes();
    let mut train: Vec<Point> = points.to_vec();
    train.extend(dirichlet.iter().map(|&i| mesh.nodes()[i]));
    let n_t = train.len();
    let k_tt = kernel_matrix(&train, &kernel);
    let k_st = kernel_cross(mesh.nodes(), &train, &kernel);
    let k_ss = kernel_matrix(mesh.nodes(), &kernel);

    let mut channels = Vec::with_capacity(2);
    for (ci, ch) in Channel::BOTH.into_iter().enumerate() {
        let mut k = k_tt.clone();
        for i in 0..n_t {
            let noise = if i < n_x { variances[ci][i] } else { 0.0 };
            k[(i, i)] += noise + opts.jitter * sigma * sigma;
        }
        let chol = cholesky_jittered(&k, 1e-12)?;
        let mut y = DVector::zeros(n_t);
        for (i, d) in values.iter().enumerate() {
            y[i] = ch.part(*d);
        }
        let mut mean = &k_st * chol.solve(&y);
        let w = chol.l().solve_lower_triangular(&k_st.transpose()).expect("triangular factor");
        let mut cov = &k_ss - w.transpose() * w;
        cov = (&cov + cov.transpose()) * 0.5;
        for &i in &dirichlet {
            mean[i] = 0.0;
            cov.row_mut(i).fill(0.0);
            cov.column_mut(i).fill(0.0);
        }
        channels.push(MultivariateGaussian { mean, cov });
    }
    let im = channels.pop().expect("two channels");
    let re = channels.pop().expect("two channels");
    Ok(ErrorField {
        gp: ComplexGaussian { re, im },
        training_points: points.to_vec(),
        training_values: values.to_vec(),
        training_variances: [variances[0].to_vec(), variances[1].to_vec()],
        kernel,
    })
}

/// Scalar Gaussian returned by [`closed_form_error_prior`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarGaussian {
    pub mean: C64,
    pub variance: f64,
}

/// Closed-form prior of `d = q*(f − A V u_r)` when only the forcing is random.
///
/// Uses `B = A V A_r⁻¹`, mean `q*(V − B) μ_{f_r}` and variance
/// `q* C_f q + (q*B) V* C_f V (q*B)*`; the cross-covariance between the two
/// terms is not included.
pub fn closed_form_error_prior(
    sys: &HelmholtzSystem,
    omega: f64,
    basis: &RomBasis,
    q: &DVector<C64>,
    forcing: &MultivariateGaussian<C64>,
) -> Result<ScalarGaussian> {
    let n = sys.dim();
    for len in [q.len(), forcing.dim(), basis.v.nrows()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, got: len });
        }
    }
    let red = reduce(sys, &[], basis)?;
    let a_r = red.matrix(omega);
    let av = sys.system_matrix(omega).mul_dense(&basis.v);
    // q*B = ((A_r)⁻* (AV)* q)*.
    let qb_h = dense_solve(&a_r.adjoint(), &av.ad_mul(q)).map_err(|e| match e {
        Error::SingularPivot { .. } => Error::Resonance { omega },
        other => other,
    })?;
    let mu_fr = basis.project(&sys.constrain_rhs(&forcing.mean));
    let mean = q.dotc(&(&basis.v * &mu_fr)) - qb_h.dotc(&mu_fr);
    let cov = forcing.cov.map(|v| C64::new(v, 0.0));
    let vcv = basis.v.ad_mul(&(&cov * &basis.v));
    let variance = q.dotc(&(&cov * q)).re + qb_h.dotc(&(vcv * &qb_h)).re;
    Ok(ScalarGaussian {
        mean,
        variance: variance.max(0.0),
    })
}

/// Closed-form error prior for an extraction vector, using the adjoint probe's
/// reduced solution as `q`.
pub fn closed_form_error_prior_at(
    sys: &HelmholtzSystem,
    omega: f64,
    basis: &RomBasis,
    probe: &AdjointProbe,
    forcing: &MultivariateGaussian<C64>,
) -> Result<ScalarGaussian> {
    let q = probe.adjoint_solution(omega)?;
    closed_form_error_prior(sys, omega, basis, &q, forcing)
}

/// Empirical per-channel variance of the mean of `samples` (divided by the
/// sample count unless `raw`).
pub fn mean_variance(samples: &[C64], raw: bool) -> [f64; 2] {
    let n = samples.len();
    if n < 2 {
        return [0.0, 0.0];
    }
    let mean = samples.iter().sum::<C64>() / n as f64;
    let mut out = [0.0; 2];
    for (ci, ch) in Channel::BOTH.into_iter().enumerate() {
        let mu = ch.part(mean);
        let ss: f64 = samples.iter().map(|&z| (ch.part(z) - mu).powi(2)).sum();
        let var = ss / (n - 1) as f64;
        out[ci] = if raw { var } else { var / n as f64 };
    }
    out
}

/// Dense matrix with the adjoint of every probe's extraction row.
pub fn extraction_matrix(set: &AdjointSet, n: usize) -> DMatrix<C64> {
    let mut p = DMatrix::zeros(set.len(), n);
    for (l, probe) in set.probes.iter().enumerate() {
        p.set_row(l, &probe.extraction.transpose());
    }
    p
}
