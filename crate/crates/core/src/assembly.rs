//! P1 finite-element assembly of the Helmholtz system
//! `A(ω) = S − k² M − i k β D`, forcing vectors, full-order solves and the
//! wavenumber-weighted energy norm.

use nalgebra::DVector;

use crate::linalg::{lu_factor, CsrMatrix, LuFactors, SolveMode};
use crate::mesh::{interpolation_matrix_nearest, BoundaryTag, Mesh, Point};
use crate::{Error, Result, C64};

/// Assembled Helmholtz operator pieces.
///
/// `s`, `m` and `d` are stored with Dirichlet rows and columns zeroed; the
/// unit diagonal of the eliminated rows is added by [`HelmholtzSystem::system_matrix`].
#[derive(Debug, Clone)]
pub struct HelmholtzSystem {
    pub s: CsrMatrix<f64>,
    pub m: CsrMatrix<f64>,
    pub d: CsrMatrix<f64>,
    pub c: f64,
    pub beta: f64,
    dirichlet: Vec<usize>,
    is_dirichlet: Vec<bool>,
}

/// Domain and Neumann contributions to the load vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingVector {
    pub f_domain: DVector<C64>,
    pub f_neumann: DVector<C64>,
}

impl ForcingVector {
    pub fn zeros(n: usize) -> Self {
        Self {
            f_domain: DVector::zeros(n),
            f_neumann: DVector::zeros(n),
        }
    }

    /// Sum of both parts.
    pub fn total(&self) -> DVector<C64> {
        &self.f_domain + &self.f_neumann
    }
}

/// Exact `∫ λ_a λ_b λ_c` over a simplex of measure `meas`, for the three
/// (not necessarily distinct) barycentric indices.
fn triple_product(meas: f64, dim: usize, a: usize, b: usize, c: usize) -> f64 {
    let mut counts = [0usize; 3];
    counts[a] += 1;
    counts[b] += 1;
    counts[c] += 1;
    let fact = |k: usize| -> f64 { (1..=k).map(|v| v as f64).product() };
    let num: f64 = counts.iter().map(|&k| fact(k)).product();
    // ∫_T λ^α = |T| d! α! / (|α| + d)!
    meas * fact(dim) * num / fact(3 + dim)
}

/// Local P1 gradients (constant per element).
fn gradients(mesh: &Mesh, e: usize) -> Vec<[f64; 2]> {
    let el = &mesh.elements()[e];
    let p = |k: usize| mesh.nodes()[el[k]];
    if mesh.dim() == 1 {
        let h = p(1)[0] - p(0)[0];
        vec![[-1.0 / h, 0.0], [1.0 / h, 0.0]]
    } else {
        let (a, b, c) = (p(0), p(1), p(2));
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        vec![
            [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
            [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
            [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
        ]
    }
}

fn edge_length(mesh: &Mesh, nodes: &[usize]) -> f64 {
    let (a, b) = (mesh.nodes()[nodes[0]], mesh.nodes()[nodes[1]]);
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Stiffness and κ-weighted mass matrices without boundary conditions.
pub fn stiffness_and_mass(mesh: &Mesh, kappa_nodal: &[f64]) -> (CsrMatrix<f64>, CsrMatrix<f64>) {
    let n = mesh.n_nodes();
    let mut st = Vec::new();
    let mut mt = Vec::new();
    for (e, el) in mesh.elements().iter().enumerate() {
        let meas = mesh.element_measure(e);
        let g = gradients(mesh, e);
        let npe = el.len();
        for a in 0..npe {
            for b in 0..npe {
                let sab = meas * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                st.push((el[a], el[b], sab));
                let mab: f64 = (0..npe).map(|c| kappa_nodal[el[c]] * triple_product(meas, mesh.dim(), a, b, c)).sum();
                mt.push((el[a], el[b], mab));
            }
        }
    }
    (CsrMatrix::from_triplets(n, n, st), CsrMatrix::from_triplets(n, n, mt))
}

/// Boundary mass `∫_Γ φ_i φ_j` over entities carrying `tag`.
pub fn boundary_mass(mesh: &Mesh, tag: BoundaryTag) -> CsrMatrix<f64> {
    let n = mesh.n_nodes();
    let mut t = Vec::new();
    for b in mesh.boundary().iter().filter(|b| b.tag == tag) {
        if mesh.dim() == 1 {
            t.push((b.nodes[0], b.nodes[0], 1.0));
        } else {
            let l = edge_length(mesh, &b.nodes);
            for (i, &p) in b.nodes.iter().enumerate() {
                for (j, &q) in b.nodes.iter().enumerate() {
                    t.push((p, q, if i == j { l / 3.0 } else { l / 6.0 }));
                }
            }
        }
    }
    CsrMatrix::from_triplets(n, n, t)
}

fn eliminate(a: &CsrMatrix<f64>, is_dirichlet: &[bool]) -> CsrMatrix<f64> {
    CsrMatrix::from_triplets(
        a.nrows(),
        a.ncols(),
        a.triplets().filter(|&(i, j, _)| !is_dirichlet[i] && !is_dirichlet[j]),
    )
}

/// Assembles `S`, `M` (κ-weighted with P1 nodal κ) and `D`.
pub fn assemble(mesh: &Mesh, kappa_nodal: &[f64], c: f64, beta: f64) -> Result<HelmholtzSystem> {
    if kappa_nodal.len() != mesh.n_nodes() {
        return Err(Error::DimensionMismatch {
            expected: mesh.n_nodes(),
            got: kappa_nodal.len(),
        });
    }
    if let Some((node, &value)) = kappa_nodal.iter().enumerate().find(|(_, &k)| !(k > 0.0)) {
        return Err(Error::NonPositiveKappa { node, value });
    }
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("sound speed must be positive, got {c}")));
    }
    let (s, m) = stiffness_and_mass(mesh, kappa_nodal);
    let d = boundary_mass(mesh, BoundaryTag::Impedance);
    let dirichlet = mesh.dirichlet_nodes();
    let mut is_dirichlet = vec![false; mesh.n_nodes()];
    for &v in &dirichlet {
        is_dirichlet[v] = true;
    }
    Ok(HelmholtzSystem {
        s: eliminate(&s, &is_dirichlet),
        m: eliminate(&m, &is_dirichlet),
        d: eliminate(&d, &is_dirichlet),
        c,
        beta,
        dirichlet,
        is_dirichlet,
    })
}

impl HelmholtzSystem {
    /// Builds a system directly from matrices (no Dirichlet nodes).
    pub fn from_matrices(s: CsrMatrix<f64>, m: CsrMatrix<f64>, d: CsrMatrix<f64>, c: f64, beta: f64) -> Self {
        let n = s.nrows();
        Self {
            s,
            m,
            d,
            c,
            beta,
            dirichlet: Vec::new(),
            is_dirichlet: vec![false; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    pub fn dirichlet_nodes(&self) -> &[usize] {
        &self.dirichlet
    }

    pub fn is_dirichlet(&self, node: usize) -> bool {
        self.is_dirichlet[node]
    }

    pub fn wavenumber(&self, omega: f64) -> f64 {
        omega / self.c
    }

    /// `A(ω)` with Dirichlet rows/columns replaced by the identity.
    pub fn system_matrix(&self, omega: f64) -> CsrMatrix<C64> {
        let k = self.wavenumber(omega);
        self.combine(C64::new(1.0, 0.0), C64::new(-k * k, 0.0), C64::new(0.0, -k * self.beta), C64::new(1.0, 0.0))
    }

    /// `dA/dω = −(2ω/c²) M − i (β/c) D`, zero on Dirichlet rows/columns.
    pub fn system_derivative(&self, omega: f64) -> CsrMatrix<C64> {
        let c = self.c;
        self.combine(
            C64::new(0.0, 0.0),
            C64::new(-2.0 * omega / (c * c), 0.0),
            C64::new(0.0, -self.beta / c),
            C64::new(0.0, 0.0),
        )
    }

    /// `α S + μ M + δ D + ι I_Dirichlet` as a complex sparse matrix.
    pub fn combine(&self, alpha: C64, mu: C64, delta: C64, iota: C64) -> CsrMatrix<C64> {
        let n = self.dim();
        let zero = C64::new(0.0, 0.0);
        let mut t: Vec<(usize, usize, C64)> = Vec::new();
        if alpha != zero {
            t.extend(self.s.triplets().map(|(i, j, v)| (i, j, alpha * v)));
        }
        if mu != zero {
            t.extend(self.m.triplets().map(|(i, j, v)| (i, j, mu * v)));
        }
        if delta != zero {
            t.extend(self.d.triplets().map(|(i, j, v)| (i, j, delta * v)));
        }
        if iota != zero {
            t.extend(self.dirichlet.iter().map(|&v| (v, v, iota)));
        }
        CsrMatrix::from_triplets(n, n, t)
    }

    /// `(α S + μ M + δ D + ι I_Dirichlet) x` without assembling the sum.
    pub fn apply_combination(&self, alpha: C64, mu: C64, delta: C64, iota: C64, x: &DVector<C64>) -> DVector<C64> {
        let zero = C64::new(0.0, 0.0);
        let mut y = DVector::zeros(self.dim());
        for (coef, mat) in [(alpha, &self.s), (mu, &self.m), (delta, &self.d)] {
            if coef != zero {
                let v = mat.mul_vec(x.as_slice());
                for (yi, vi) in y.iter_mut().zip(v) {
                    *yi += coef * vi;
                }
            }
        }
        if iota != zero {
            for &v in &self.dirichlet {
                y[v] += iota * x[v];
            }
        }
        y
    }

    /// `A(ω) x`.
    pub fn apply(&self, omega: f64, x: &DVector<C64>) -> DVector<C64> {
        let k = self.wavenumber(omega);
        self.apply_combination(C64::new(1.0, 0.0), C64::new(-k * k, 0.0), C64::new(0.0, -k * self.beta), C64::new(1.0, 0.0), x)
    }

    /// Copy of `rhs` with Dirichlet entries zeroed.
    pub fn constrain_rhs(&self, rhs: &DVector<C64>) -> DVector<C64> {
        let mut out = rhs.clone();
        for &v in &self.dirichlet {
            out[v] = C64::new(0.0, 0.0);
        }
        out
    }

    /// Factors `A(ω)`, mapping singular pivots to a resonance error.
    pub fn factor(&self, omega: f64) -> Result<LuFactors> {
        lu_factor(&self.system_matrix(omega)).map_err(|e| match e {
            Error::SingularPivot { .. } => Error::Resonance { omega },
            other => other,
        })
    }
}

/// Nodal samples of an analytic field.
pub fn nodal_field<F: Fn(&Point) -> C64>(mesh: &Mesh, f: F) -> DVector<C64> {
    DVector::from_iterator(mesh.n_nodes(), mesh.nodes().iter().map(f))
}

/// Consistent load vectors for a P1-interpolated domain forcing `f_nodal` and
/// Neumann datum `g_nodal` (read only on `neumann_g` entities).
pub fn assemble_forcing(mesh: &Mesh, f_nodal: &DVector<C64>, g_nodal: &DVector<C64>) -> Result<ForcingVector> {
    let n = mesh.n_nodes();
    for v in [f_nodal, g_nodal] {
        if v.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: v.len() });
        }
    }
    let (_, m1) = stiffness_and_mass(mesh, &vec![1.0; n]);
    let f_domain = DVector::from_vec(m1.mul_vec(f_nodal.as_slice()));
    let bm = boundary_mass(mesh, BoundaryTag::NeumannG);
    let f_neumann = DVector::from_vec(bm.mul_vec(g_nodal.as_slice()));
    Ok(ForcingVector { f_domain, f_neumann })
}

/// Solves the full-order system `A(ω) u = f` with Dirichlet entries zeroed.
pub fn solve_fom(sys: &HelmholtzSystem, omega: f64, rhs: &ForcingVector) -> Result<DVector<C64>> {
    let lu = sys.factor(omega)?;
    solve_with(sys, &lu, omega, &rhs.total())
}

/// Solves with an existing factorization of `A(ω)` and checks the residual.
pub fn solve_with(sys: &HelmholtzSystem, lu: &LuFactors, omega: f64, rhs: &DVector<C64>) -> Result<DVector<C64>> {
    let b = sys.constrain_rhs(rhs);
    let u = lu.solve(&b, SolveMode::Direct)?;
    let res = (sys.apply(omega, &u) - &b).norm();
    if !res.is_finite() || res > 1e-8 * b.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::Resonance { omega });
    }
    Ok(u)
}

/// The `H¹_k` energy norm `sqrt(k⁻² e*Se + e*Me)` on a fixed mesh (κ ≡ 1).
#[derive(Debug, Clone)]
pub struct EnergyNorm {
    s: CsrMatrix<f64>,
    m: CsrMatrix<f64>,
}

impl EnergyNorm {
    pub fn new(mesh: &Mesh) -> Self {
        let (s, m) = stiffness_and_mass(mesh, &vec![1.0; mesh.n_nodes()]);
        Self { s, m }
    }

    pub fn norm(&self, e: &DVector<C64>, k: f64) -> Result<f64> {
        if !(k > 0.0) {
            return Err(Error::InvalidArgument(format!("energy norm needs k > 0, got {k}")));
        }
        let se = self.s.mul_vec(e.as_slice());
        let me = self.m.mul_vec(e.as_slice());
        let mut grad = 0.0;
        let mut mass = 0.0;
        for i in 0..e.len() {
            grad += (e[i].conj() * se[i]).re;
            mass += (e[i].conj() * me[i]).re;
        }
        Ok((grad / (k * k) + mass).max(0.0).sqrt())
    }

    /// Norm of the real or imaginary part only.
    pub fn norm_real(&self, e: &DVector<f64>, k: f64) -> Result<f64> {
        self.norm(&e.map(|v| C64::new(v, 0.0)), k)
    }
}

/// Absolute `H¹_k` error of `u` (on `mesh`) against `u_ref` (on `ref_mesh`).
pub fn hk1_error(ref_mesh: &Mesh, u_ref: &DVector<C64>, mesh: &Mesh, u: &DVector<C64>, k: f64) -> Result<f64> {
    let e = transfer_difference(ref_mesh, u_ref, mesh, u)?;
    EnergyNorm::new(ref_mesh).norm(&e, k)
}

/// `u_ref − Πu` with `Π` the P1 interpolation onto `ref_mesh` nodes.
pub fn transfer_difference(ref_mesh: &Mesh, u_ref: &DVector<C64>, mesh: &Mesh, u: &DVector<C64>) -> Result<DVector<C64>> {
    if u_ref.len() != ref_mesh.n_nodes() {
        return Err(Error::DimensionMismatch {
            expected: ref_mesh.n_nodes(),
            got: u_ref.len(),
        });
    }
    if u.len() != mesh.n_nodes() {
        return Err(Error::DimensionMismatch {
            expected: mesh.n_nodes(),
            got: u.len(),
        });
    }
    let p = interpolation_matrix_nearest(mesh, ref_mesh.nodes());
    let pu = p.mul_vec(u.as_slice());
    Ok(DVector::from_iterator(u_ref.len(), u_ref.iter().zip(pu).map(|(a, b)| a - b)))
}
