//! Matérn covariance kernels, discrete Gaussian forcings, Karhunen–Loève
//! expansion of the log-material field, Sobol QMC sampling and sample moments.

use nalgebra::{DMatrix, DVector, Scalar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sobol::params::JoeKuoD6;
use sobol::Sobol;
use statrs::function::erf::erfc_inv;
use statrs::function::gamma::ln_gamma;

use crate::assembly::{boundary_mass, stiffness_and_mass};
use crate::linalg::sym_eig;
use crate::mesh::{dist, BoundaryTag, Mesh, Point};
use crate::{Error, Result, C64};

/// Matérn kernel parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub nu: f64,
    pub sigma: f64,
    pub ell: f64,
}

impl KernelSpec {
    pub fn new(nu: f64, sigma: f64, ell: f64) -> Result<Self> {
        for (name, v) in [("nu", nu), ("sigma", sigma), ("ell", ell)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("kernel {name} must be positive and finite, got {v}")));
            }
        }
        Ok(Self { nu, sigma, ell })
    }

    /// Kernel value at distance `r >= 0`.
    pub fn eval(&self, r: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        if r == 0.0 {
            return s2;
        }
        let half = |k: f64| (self.nu - k).abs() < 1e-14;
        if half(0.5) {
            s2 * (-r / self.ell).exp()
        } else if half(1.5) {
            let z = 3f64.sqrt() * r / self.ell;
            s2 * (1.0 + z) * (-z).exp()
        } else if half(2.5) {
            let z = 5f64.sqrt() * r / self.ell;
            s2 * (1.0 + z + z * z / 3.0) * (-z).exp()
        } else {
            s2 * matern_general(r, self.nu, self.ell)
        }
    }
}

/// Correlation `2^{1−ν}/Γ(ν) z^ν K_ν(z)` with `z = √(2ν) r/ℓ`, evaluated in
/// log space.
fn matern_general(r: f64, nu: f64, ell: f64) -> f64 {
    let z = (2.0 * nu).sqrt() * r / ell;
    let log_val = (1.0 - nu) * std::f64::consts::LN_2 - ln_gamma(nu) + nu * z.ln() + ln_bessel_k(nu, z);
    log_val.exp().min(1.0)
}

fn ln_cosh(y: f64) -> f64 {
    let a = y.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `ln K_ν(x)` for `x > 0` from `K_ν(x) = ∫_0^∞ exp(−x cosh t) cosh(ν t) dt`.
///
/// The integrand is analytic in the strip `|Im t| < π/2`, so the trapezoidal
/// rule converges like `exp(−π²/h)`; `h = 0.05` leaves errors far below
/// double precision.
fn ln_bessel_k(nu: f64, x: f64) -> f64 {
    const H: f64 = 0.05;
    let term = |t: f64| -x * t.cosh() + ln_cosh(nu * t);
    // Locate the peak of the log-integrand, then sum until terms are negligible.
    let mut terms = Vec::with_capacity(512);
    let mut peak = f64::NEG_INFINITY;
    let mut j = 0usize;
    loop {
        let t = j as f64 * H;
        let v = term(t) + if j == 0 { (0.5f64).ln() } else { 0.0 };
        peak = peak.max(v);
        terms.push(v);
        if v < peak - 60.0 && t > 1.0 {
            break;
        }
        j += 1;
        if j > 200_000 {
            break;
        }
    }
    let sum: f64 = terms.iter().map(|&v| (v - peak).exp()).sum();
    peak + sum.ln() + H.ln()
}

/// Matérn kernel at distance `r`, rejecting negative distances.
pub fn matern(r: f64, spec: &KernelSpec) -> Result<f64> {
    if r < 0.0 || r.is_nan() {
        return Err(Error::InvalidArgument(format!("kernel distance must be non-negative, got {r}")));
    }
    Ok(spec.eval(r))
}

/// Exactly symmetric kernel matrix over `points`.
pub fn kernel_matrix(points: &[Point], spec: &KernelSpec) -> DMatrix<f64> {
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = spec.eval(0.0);
        for j in i + 1..n {
            let v = spec.eval(dist(&points[i], &points[j]));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Kernel cross-covariance between two point sets.
pub fn kernel_cross(a: &[Point], b: &[Point], spec: &KernelSpec) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| spec.eval(dist(&a[i], &b[j])))
}

/// Gaussian with a real covariance; the mean may be real or complex
/// (circular convention: real and imaginary parts share `cov`).
#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateGaussian<T: Scalar = f64> {
    pub mean: DVector<T>,
    pub cov: DMatrix<f64>,
}

impl<T: Scalar + num_traits::Zero> MultivariateGaussian<T> {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Degenerate Gaussian concentrated at `mean`.
    pub fn point_mass(mean: DVector<T>) -> Self {
        let n = mean.len();
        Self {
            mean,
            cov: DMatrix::zeros(n, n),
        }
    }
}

/// Real and imaginary channels of a complex field, each with its own Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGaussian {
    pub re: MultivariateGaussian,
    pub im: MultivariateGaussian,
}

impl ComplexGaussian {
    pub fn mean(&self) -> DVector<C64> {
        self.re.mean.zip_map(&self.im.mean, C64::new)
    }

    pub fn channel(&self, ch: Channel) -> &MultivariateGaussian {
        match ch {
            Channel::Re => &self.re,
            Channel::Im => &self.im,
        }
    }
}

/// Real or imaginary part of a complex quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Re,
    Im,
}

impl Channel {
    pub const BOTH: [Channel; 2] = [Channel::Re, Channel::Im];

    pub fn part(self, z: C64) -> f64 {
        match self {
            Channel::Re => z.re,
            Channel::Im => z.im,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Re => "re",
            Channel::Im => "im",
        }
    }
}

/// Where a random forcing acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForcingRegion {
    Domain,
    NeumannG,
}

/// Shape-function integrals `∫ φ_i` over the region, plus the consistent
/// mass operator that maps nodal values to load vectors.
pub fn region_weights(mesh: &Mesh, region: ForcingRegion) -> (DVector<f64>, crate::linalg::CsrMatrix<f64>) {
    let op = match region {
        ForcingRegion::Domain => stiffness_and_mass(mesh, &vec![1.0; mesh.n_nodes()]).1,
        ForcingRegion::NeumannG => boundary_mass(mesh, BoundaryTag::NeumannG),
    };
    let w = DVector::from_vec(op.mul_vec(&vec![1.0; mesh.n_nodes()]));
    (w, op)
}

/// Discrete Gaussian load vector for a GP forcing with nodal mean `mu_nodal`.
///
/// Covariance is `diag(w) K diag(w)` with `w_i = ∫_region φ_i`.
pub fn discrete_forcing(mesh: &Mesh, region: ForcingRegion, mu_nodal: &DVector<C64>, spec: &KernelSpec) -> Result<MultivariateGaussian<C64>> {
    if mu_nodal.len() != mesh.n_nodes() {
        return Err(Error::DimensionMismatch {
            expected: mesh.n_nodes(),
            got: mu_nodal.len(),
        });
    }
    let (w, op) = region_weights(mesh, region);
    if w.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidArgument(format!("forcing region {region:?} is empty")));
    }
    let mean = DVector::from_vec(op.mul_vec(mu_nodal.as_slice()));
    let support: Vec<usize> = (0..w.len()).filter(|&i| w[i] != 0.0).collect();
    let pts: Vec<Point> = support.iter().map(|&i| mesh.nodes()[i]).collect();
    let k = kernel_matrix(&pts, spec);
    let n = mesh.n_nodes();
    let mut cov = DMatrix::zeros(n, n);
    for (a, &i) in support.iter().enumerate() {
        for (b, &j) in support.iter().enumerate() {
            cov[(i, j)] = w[i] * k[(a, b)] * w[j];
        }
    }
    Ok(MultivariateGaussian { mean, cov })
}

/// Eigenvalues below this fraction of the largest are treated as zero.
pub const NULL_EIGENVALUE: f64 = 1e-13;

/// Smallest count `M` with `Σ_{i<M} λ_i ≥ τ Σ λ_i` for descending, clamped
/// eigenvalues. `τ ≥ 1` keeps every mode above rounding level.
pub fn retained_modes(values: &DVector<f64>, tau: f64) -> usize {
    if tau >= 1.0 {
        let top = values.iter().copied().fold(0.0, f64::max);
        return values.iter().filter(|&&l| l > NULL_EIGENVALUE * top).count();
    }
    let total: f64 = values.iter().map(|&l| l.max(0.0)).sum();
    if total <= 0.0 {
        return 0;
    }
    let mut acc = 0.0;
    for (i, &l) in values.iter().enumerate() {
        acc += l.max(0.0);
        if acc >= tau * total {
            return i + 1;
        }
    }
    values.len()
}

/// Truncated spectral square root of a covariance: samples are
/// `modes · diag(scales) · η` with `η ~ N(0, I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFactor {
    pub modes: DMatrix<f64>,
    pub scales: DVector<f64>,
}

impl SpectralFactor {
    pub fn new(cov: &DMatrix<f64>, tau: f64) -> Result<Self> {
        let eig = sym_eig(cov)?;
        let m = retained_modes(&eig.values, tau);
        Ok(Self {
            modes: eig.vectors.columns(0, m).into_owned(),
            scales: eig.values.rows(0, m).map(|l| l.max(0.0).sqrt()),
        })
    }

    pub fn n_modes(&self) -> usize {
        self.scales.len()
    }

    pub fn sample(&self, eta: &[f64]) -> DVector<f64> {
        assert_eq!(eta.len(), self.n_modes(), "wrong number of standard normals");
        let coef = DVector::from_iterator(eta.len(), eta.iter().zip(self.scales.iter()).map(|(e, s)| e * s));
        &self.modes * coef
    }
}

/// Truncated KL expansion of `ln κ` at the mesh nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct KLExpansion {
    pub mu_log: DVector<f64>,
    pub lambdas: DVector<f64>,
    pub modes: DMatrix<f64>,
}

impl KLExpansion {
    pub fn n_modes(&self) -> usize {
        self.lambdas.len()
    }
}

/// Eigendecomposes the nodal covariance of `ln κ` and keeps the smallest
/// number of modes explaining a fraction `tau` of the variance.
pub fn kl_build(mesh: &Mesh, mu_log: &DVector<f64>, spec: &KernelSpec, tau: f64) -> Result<KLExpansion> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidArgument(format!("KL truncation tau must lie in (0, 1], got {tau}")));
    }
    if mu_log.len() != mesh.n_nodes() {
        return Err(Error::DimensionMismatch {
            expected: mesh.n_nodes(),
            got: mu_log.len(),
        });
    }
    let c = kernel_matrix(mesh.nodes(), spec);
    let eig = sym_eig(&c)?;
    let m = retained_modes(&eig.values, tau);
    Ok(KLExpansion {
        mu_log: mu_log.clone(),
        lambdas: eig.values.rows(0, m).map(|l| l.max(0.0)),
        modes: eig.vectors.columns(0, m).into_owned(),
    })
}

/// `κ = exp(μ + Σ √λ_i Ψ_i ξ_i)`.
pub fn sample_kappa(kl: &KLExpansion, xi: &[f64]) -> Result<DVector<f64>> {
    if xi.len() != kl.n_modes() {
        return Err(Error::DimensionMismatch {
            expected: kl.n_modes(),
            got: xi.len(),
        });
    }
    let coef = DVector::from_iterator(xi.len(), xi.iter().zip(kl.lambdas.iter()).map(|(x, l)| x * l.sqrt()));
    let log_k = &kl.mu_log + &kl.modes * coef;
    Ok(log_k.map(f64::exp))
}

/// Standard normal quantile with `p` clamped to `[1e-12, 1 − 1e-12]`.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

fn sobol_params() -> &'static JoeKuoD6 {
    use std::sync::OnceLock;
    static PARAMS: OnceLock<JoeKuoD6> = OnceLock::new();
    PARAMS.get_or_init(JoeKuoD6::standard)
}

/// `n × dim` Sobol points in `[0, 1)`, optionally with a seeded digital shift.
pub fn sobol_uniform(dim: usize, n: usize, shift_seed: Option<u64>) -> Result<DMatrix<f64>> {
    if dim == 0 || n == 0 {
        return Err(Error::InvalidArgument(format!("Sobol sampling needs dim >= 1 and n >= 1 (got {dim}, {n})")));
    }
    let params = sobol_params();
    let max = sobol::SobolParams::<u32>::max_dims(params);
    if dim > max {
        return Err(Error::SobolDimension { dim, max });
    }
    let shift: Vec<u32> = match shift_seed {
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..dim).map(|_| rng.gen::<u32>()).collect()
        }
        None => vec![0; dim],
    };
    let seq = Sobol::<u32>::new(dim, params);
    let scale = 1.0 / 4294967296.0;
    let mut out = DMatrix::zeros(n, dim);
    for (i, point) in seq.take(n).enumerate() {
        for (d, &x) in point.iter().enumerate() {
            out[(i, d)] = f64::from(x ^ shift[d]) * scale;
        }
    }
    Ok(out)
}

/// `n × dim` shifted Sobol points mapped to standard normals.
pub fn sobol_gaussian(dim: usize, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    Ok(sobol_uniform(dim, n, Some(seed))?.map(inverse_normal_cdf))
}

/// Sample mean and unbiased sample covariance.
pub fn sample_moments(samples: &[DVector<f64>]) -> Result<MultivariateGaussian> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let n = samples[0].len();
    if let Some(bad) = samples.iter().find(|s| s.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, got: bad.len() });
    }
    let count = samples.len() as f64;
    let mut mean = DVector::zeros(n);
    for s in samples {
        mean += s;
    }
    mean /= count;
    let mut centered = DMatrix::zeros(n, samples.len());
    for (j, s) in samples.iter().enumerate() {
        centered.set_column(j, &(s - &mean));
    }
    let mut cov = &centered * centered.transpose() / (count - 1.0);
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(MultivariateGaussian { mean, cov })
}

/// Moments of real and imaginary parts, each with its own covariance.
pub fn sample_moments_complex(samples: &[DVector<C64>]) -> Result<ComplexGaussian> {
    let re: Vec<DVector<f64>> = samples.iter().map(|s| s.map(|z| z.re)).collect();
    let im: Vec<DVector<f64>> = samples.iter().map(|s| s.map(|z| z.im)).collect();
    Ok(ComplexGaussian {
        re: sample_moments(&re)?,
        im: sample_moments(&im)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_interval_mesh;

    #[test]
    fn kernel_reference_values() {
        let k = KernelSpec::new(0.5, 1.0, 1.0).unwrap();
        assert!((matern(1.0, &k).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        let k = KernelSpec::new(1.5, 0.8, 0.6).unwrap();
        let expect = 0.64 * (1.0 + 3f64.sqrt()) * (-(3f64.sqrt())).exp();
        assert!((matern(0.6, &k).unwrap() - expect).abs() < 1e-15);
        assert!((expect - 0.309349).abs() < 1e-6);
        assert_eq!(matern(0.0, &k).unwrap(), 0.8 * 0.8);
        assert!(matern(-1.0, &k).is_err());
    }

    #[test]
    fn general_bessel_path_matches_closed_forms() {
        for &nu in &[0.5, 1.5, 2.5] {
            for &r in &[1e-3, 0.05, 0.3, 1.0, 4.0, 12.0] {
                let closed = KernelSpec::new(nu, 1.0, 0.7).unwrap().eval(r);
                let general = matern_general(r, nu, 0.7);
                assert!((general - closed).abs() <= 1e-10 * closed.max(1e-300), "nu {nu} r {r}: {general} vs {closed}");
            }
        }
    }

    #[test]
    fn large_nu_approaches_squared_exponential() {
        let k = KernelSpec::new(50.0, 1.3, 0.4).unwrap();
        for r in [0.05f64, 0.2, 0.4, 0.6] {
            let se = 1.69 * (-r * r / (2.0 * 0.16)).exp();
            assert!((k.eval(r) - se).abs() <= 0.02 * se, "r {r}");
        }
    }

    #[test]
    fn kernel_matrix_examples() {
        let k = KernelSpec::new(0.5, 1.0, 2.0).unwrap();
        let c = kernel_matrix(&[[0.0, 0.0], [2.0, 0.0], [4.0, 0.0]], &k);
        assert!((c[(0, 1)] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((c[(0, 2)] - (-2.0f64).exp()).abs() < 1e-15);
        let d = kernel_matrix(&[[0.3, 0.1], [0.3, 0.1]], &k);
        assert_eq!(d, DMatrix::from_element(2, 2, 1.0));
    }

    #[test]
    fn point_boundary_forcing() {
        let mesh = build_interval_mesh(10, 1.0).unwrap();
        let mu = DVector::from_element(11, C64::new(0.2, 0.0));
        let g = discrete_forcing(&mesh, ForcingRegion::NeumannG, &mu, &KernelSpec::new(0.5, 0.02, 1.0).unwrap()).unwrap();
        assert!((g.cov[(0, 0)] - 4e-4).abs() < 1e-18);
        assert_eq!(g.cov.iter().filter(|&&v| v != 0.0).count(), 1);
        assert_eq!(g.mean[0], C64::new(0.2, 0.0));
        assert!(g.mean.iter().skip(1).all(|z| z.norm() == 0.0));
    }

    #[test]
    fn domain_forcing_weights() {
        let mesh = build_interval_mesh(4, 1.0).unwrap();
        let spec = KernelSpec::new(0.5, 1.0, 0.5).unwrap();
        let g = discrete_forcing(&mesh, ForcingRegion::Domain, &DVector::zeros(5), &spec).unwrap();
        let w = [0.125, 0.25, 0.25, 0.25, 0.125];
        for i in 0..5 {
            for j in 0..5 {
                let x = (i as f64 - j as f64).abs() * 0.25;
                let expect = w[i] * (-x / 0.5f64).exp() * w[j];
                assert!((g.cov[(i, j)] - expect).abs() < 1e-15);
            }
        }
        let tiny = discrete_forcing(&mesh, ForcingRegion::Domain, &DVector::zeros(5), &KernelSpec::new(0.5, 1e-200, 0.5).unwrap()).unwrap();
        assert!(tiny.cov.amax() == 0.0);
    }

    #[test]
    fn kl_truncation_rules() {
        let mesh = build_interval_mesh(20, 1.0).unwrap();
        let mu = DVector::zeros(21);
        // Near-zero lengthscale makes the covariance the identity.
        let iso = KernelSpec::new(0.5, 2.0, 1e-6).unwrap();
        let kl = kl_build(&mesh, &mu, &iso, 0.5).unwrap();
        assert_eq!(kl.n_modes(), 11);
        assert!(kl.lambdas.iter().all(|&l| (l - 4.0).abs() < 1e-12));
        let spec = KernelSpec::new(0.5, 0.05f64.sqrt(), 0.3).unwrap();
        assert_eq!(kl_build(&mesh, &mu, &spec, 1.0).unwrap().n_modes(), 21);
    }

    #[test]
    fn default_field_mode_count() {
        let mesh = build_interval_mesh(100, 1.0).unwrap();
        let spec = KernelSpec::new(0.5, 0.05f64.sqrt(), 0.3).unwrap();
        let kl = kl_build(&mesh, &DVector::zeros(101), &spec, 0.95).unwrap();
        assert_eq!(kl.n_modes(), KL_REGRESSION_MODES);
    }

    /// Mode count of the 1D exponential field at 95% explained variance.
    const KL_REGRESSION_MODES: usize = 14;

    #[test]
    fn kappa_samples() {
        let mesh = build_interval_mesh(10, 1.0).unwrap();
        let mu = DVector::from_fn(11, |i, _| 0.1 * i as f64);
        let spec = KernelSpec::new(0.5, 0.3, 0.3).unwrap();
        let kl = kl_build(&mesh, &mu, &spec, 0.9).unwrap();
        let zero = sample_kappa(&kl, &vec![0.0; kl.n_modes()]).unwrap();
        assert!((zero - mu.map(f64::exp)).amax() < 1e-15);
        let xi: Vec<f64> = (0..kl.n_modes()).map(|i| (i as f64 * 0.7).sin()).collect();
        let k = sample_kappa(&kl, &xi).unwrap();
        assert!(k.iter().all(|&v| v > 0.0));
        let dev = k.map(f64::ln) - &mu;
        let proj = &kl.modes * (kl.modes.transpose() * &dev);
        assert!((proj - dev).amax() < 1e-12);
        assert!(sample_kappa(&kl, &[0.0]).is_err() || kl.n_modes() == 1);
    }

    #[test]
    fn sobol_base_sequence() {
        let u = sobol_uniform(1, 4, None).unwrap();
        assert_eq!(u.column(0).as_slice(), &[0.0, 0.5, 0.75, 0.25]);
        assert!(matches!(sobol_uniform(5000, 2, None), Err(Error::SobolDimension { dim: 5000, .. })));
        let a = sobol_gaussian(3, 16, 9).unwrap();
        let b = sobol_gaussian(3, 16, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sobol_gaussian(3, 16, 10).unwrap());
    }

    #[test]
    fn quantiles() {
        assert_eq!(inverse_normal_cdf(0.5), 0.0);
        assert!((inverse_normal_cdf(0.975) - 1.959963984540054).abs() < 1e-9);
        assert!((inverse_normal_cdf(0.0) + 7.034483825).abs() < 1e-6);
    }

    #[test]
    fn moments() {
        let m = sample_moments(&[DVector::from_vec(vec![0.0]), DVector::from_vec(vec![2.0])]).unwrap();
        assert_eq!(m.mean[0], 1.0);
        assert_eq!(m.cov[(0, 0)], 2.0);
        let same = sample_moments(&vec![DVector::from_vec(vec![1.0, 2.0]); 3]).unwrap();
        assert_eq!(same.cov.amax(), 0.0);
        assert!(sample_moments(&[DVector::from_vec(vec![1.0])]).is_err());
    }
}
