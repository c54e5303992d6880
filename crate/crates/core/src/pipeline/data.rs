//! Synthetic measurements from a fine-mesh reference solution.

use std::f64::consts::PI;
use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{ProblemConfig, ProblemKind, StochasticModel};
use crate::assembly::{solve_with, EnergyNorm};
use crate::inference::ComplexSensorData;
use crate::linalg::{cholesky_jittered, CsrMatrix};
use crate::mesh::{interpolation_matrix, interpolation_matrix_nearest, locate, Mesh, Point};
use crate::stochastic::{kernel_matrix, region_weights, sample_moments_complex, Channel};
use crate::{Error, Result, C64};

const SENSOR_SHIFT: u64 = 0x5e45;
const TRAINING_SHIFT: u64 = 0x7a11;
const TRUTH_STREAM: u64 = 0x7275_7468;
/// Minimum mesh nodes per wavelength before warning.
const NODES_PER_WAVELENGTH: f64 = 10.0;

/// Fine-mesh solution the posterior is measured against.
#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub mesh: Arc<Mesh>,
    pub values: DVector<C64>,
    pub omega: f64,
    norm: Arc<EnergyNorm>,
}

/// A reference solution paired with the transfer from a coarser mesh.
#[derive(Debug, Clone)]
pub struct ProjectedReference<'a> {
    reference: &'a ReferenceSolution,
    transfer: CsrMatrix<f64>,
}

impl ReferenceSolution {
    pub fn new(mesh: Arc<Mesh>, values: DVector<C64>, omega: f64) -> Result<Self> {
        if values.len() != mesh.n_nodes() {
            return Err(Error::DimensionMismatch {
                expected: mesh.n_nodes(),
                got: values.len(),
            });
        }
        let norm = Arc::new(EnergyNorm::new(&mesh));
        Ok(ReferenceSolution { mesh, values, omega, norm })
    }

    pub fn with_source_mesh(&self, source: &Mesh) -> ProjectedReference<'_> {
        ProjectedReference {
            reference: self,
            transfer: interpolation_matrix_nearest(source, self.mesh.nodes()),
        }
    }

    pub fn channel(&self, ch: Channel) -> DVector<f64> {
        self.values.map(|z| ch.part(z))
    }
}

impl ProjectedReference<'_> {
    /// Relative `H¹_k` error of one channel of a field on the source mesh.
    pub fn relative_error(&self, field: &DVector<f64>, ch: Channel, k: f64) -> Result<f64> {
        if field.len() != self.transfer.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.transfer.ncols(),
                got: field.len(),
            });
        }
        let reference = self.reference.channel(ch);
        let moved = DVector::from_vec(self.transfer.mul_vec(field.as_slice()));
        let norm = &self.reference.norm;
        let denom = norm.norm_real(&reference, k)?;
        let num = norm.norm_real(&(&reference - moved), k)?;
        Ok(if denom > 0.0 { num / denom } else { num })
    }
}

/// Noisy sensor readings with the reference they were drawn from.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    /// Interpolation rows refer to the prior mesh.
    pub data: ComplexSensorData,
    pub reference: ReferenceSolution,
}

fn uniform_points(n: usize, length: f64, offset: f64) -> Vec<Point> {
    if n == 1 {
        return vec![[0.5 * length, 0.0]];
    }
    (0..n).map(|i| [length * (i as f64 + offset) / (n as f64 - 1.0 + 2.0 * offset), 0.0]).collect()
}

/// Quasi-random points in the square, outside the scatterer plus `margin`,
/// that lie inside every mesh in `meshes`.
fn scattered_points(config: &ProblemConfig, n: usize, shift: u64, meshes: &[&Mesh]) -> Result<Vec<Point>> {
    let margin = 2.0 * config.h.max(config.data_h);
    let mut out = Vec::with_capacity(n);
    let mut batch = 4 * n.max(16);
    while out.len() < n {
        let u = crate::stochastic::sobol_uniform(2, batch, Some(shift))?;
        out.clear();
        for i in 0..batch {
            let p = [u[(i, 0)] * config.side, u[(i, 1)] * config.side];
            let r = ((p[0] - config.center[0]).powi(2) + (p[1] - config.center[1]).powi(2)).sqrt();
            if r >= config.radius + margin && meshes.iter().all(|m| locate(m, &p).is_some()) {
                out.push(p);
                if out.len() == n {
                    break;
                }
            }
        }
        if out.len() < n {
            if batch > 1 << 20 {
                return Err(Error::Config(format!("could not place {n} points outside the scatterer")));
            }
            batch *= 2;
        }
    }
    Ok(out)
}

/// Sensor coordinates; in 2D they must also lie in the data mesh.
pub fn sensor_points(config: &ProblemConfig, prior: &Mesh, data: &Mesh) -> Result<Vec<Point>> {
    match config.kind {
        ProblemKind::Helmholtz1d => Ok(uniform_points(config.n_sensors, config.length, 0.0)),
        ProblemKind::Scatter2d => scattered_points(config, config.n_sensors, SENSOR_SHIFT, &[prior, data]),
    }
}

/// Points where the adjoint error estimate is evaluated.
pub fn training_points(config: &ProblemConfig, mesh: &Mesh) -> Result<Vec<Point>> {
    if config.training_points == 0 {
        return Ok(Vec::new());
    }
    match config.kind {
        ProblemKind::Helmholtz1d => {
            let n = config.training_points as f64;
            Ok((0..config.training_points).map(|l| [config.length * (l as f64 + 0.5) / n, 0.0]).collect())
        }
        ProblemKind::Scatter2d => scattered_points(config, config.training_points, TRAINING_SHIFT, &[mesh]),
    }
}

fn check_resolution(mesh: &Mesh, omega: f64, c: f64) {
    let wavelength = 2.0 * PI * c / omega;
    let per_wavelength = wavelength / mesh.h_max();
    if per_wavelength < NODES_PER_WAVELENGTH {
        warn!("reference mesh has only {per_wavelength:.1} nodes per wavelength at omega = {omega}");
    }
}

/// Solution on the reference mesh at `omega`.
///
/// 1D: QMC mean of the full-order model, driven by the prior-mesh material
/// realizations so that the two differ only by discretization. 2D: one
/// deterministic solve with a forcing drawn once and modulated transversally
/// when the truth is misspecified.
pub fn reference_solution(config: &ProblemConfig, omega: f64) -> Result<ReferenceSolution> {
    config.validate()?;
    let mesh = Arc::new(config.reference_mesh()?);
    check_resolution(&mesh, omega, config.c);
    let values = match config.kind {
        ProblemKind::Helmholtz1d => {
            let coarse = StochasticModel::new(config, Arc::new(config.prior_mesh()?))?;
            let fine_config = ProblemConfig {
                kappa_sigma2: 0.0,
                ..config.clone()
            };
            let fine = StochasticModel::new(&fine_config, mesh.clone())?;
            qmc_mean(config, &coarse, &fine, omega)?
        }
        ProblemKind::Scatter2d => truth_solve(config, &StochasticModel::new(config, mesh.clone())?, omega)?,
    };
    ReferenceSolution::new(mesh, values, omega)
}

fn qmc_mean(config: &ProblemConfig, coarse: &StochasticModel, fine: &StochasticModel, omega: f64) -> Result<DVector<C64>> {
    if coarse.forcing_factor.n_modes() != fine.forcing_factor.n_modes() {
        return Err(Error::InvalidArgument(format!(
            "forcing rank differs between meshes ({} vs {})",
            coarse.forcing_factor.n_modes(),
            fine.forcing_factor.n_modes()
        )));
    }
    let transfer = interpolation_matrix(&coarse.mesh, fine.mesh.nodes())?;
    let eta = coarse.qmc_inputs(config.samples, config.seed)?;
    let mean = fine.mean_load(omega);
    let n_kl = coarse.kl_modes();
    let solutions = (0..config.samples)
        .into_par_iter()
        .map(|i| {
            let row = eta.row(i).transpose();
            let real = coarse.realize(row.as_slice())?;
            let kappa = real.kappa.map(|k| {
                let log = transfer.mul_vec(k.map(f64::ln).as_slice());
                DVector::from_iterator(log.len(), log.into_iter().map(f64::exp))
            });
            let f = &mean + fine.forcing_load(&row.as_slice()[n_kl..]);
            let sys = fine.assemble(kappa.as_ref())?;
            let lu = sys.factor(omega)?;
            solve_with(&sys, &lu, omega, &f)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(sample_moments_complex(&solutions)?.mean())
}

fn truth_solve(config: &ProblemConfig, model: &StochasticModel, omega: f64) -> Result<DVector<C64>> {
    let mesh = &model.mesh;
    let n = mesh.n_nodes();
    let spec = config.forcing_kernel()?;
    let chol = cholesky_jittered(&kernel_matrix(mesh.nodes(), &spec), 1e-10)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ TRUTH_STREAM);
    let mut draw = || {
        let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        chol.l() * z
    };
    let xi_re: DVector<f64> = draw();
    let xi_im: DVector<f64> = if config.forcing_complex { draw() } else { DVector::zeros(n) };
    let mean = model.mean_nodal(omega);
    let nodal = DVector::from_fn(n, |i, _| {
        let y = mesh.nodes()[i][1];
        let (mod_re, mod_im) = if config.misspecified_truth {
            (0.8 * (4.5 * PI * y).cos() + 1.0, 0.8 * (4.5 * PI * y).sin() + 1.0)
        } else {
            (1.0, 1.0)
        };
        mean[i] + C64::new(xi_re[i] * mod_re, xi_im[i] * mod_im)
    });
    let (_, op) = region_weights(mesh, config.forcing_region());
    let load = DVector::from_vec(op.mul_vec(nodal.as_slice()));
    let sys = model.assemble(None)?;
    let lu = sys.factor(omega)?;
    solve_with(&sys, &lu, omega, &load)
}

/// Draws `config.n_obs` noisy readings at `coords` from `reference` and builds
/// the interpolation rows for `prior`.
pub fn observe(config: &ProblemConfig, reference: ReferenceSolution, prior: &Mesh, coords: Vec<Point>) -> Result<SyntheticData> {
    if config.n_obs == 0 {
        return Err(Error::Config("n_obs must be at least 1".into()));
    }
    let p_ref = interpolation_matrix(&reference.mesh, &coords)?;
    let p = interpolation_matrix(prior, &coords)?.to_dense();
    let exact = p_ref.mul_vec(reference.values.as_slice());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut readings = DMatrix::zeros(coords.len(), config.n_obs);
    for j in 0..config.n_obs {
        for (i, &z) in exact.iter().enumerate() {
            let e_re: f64 = StandardNormal.sample(&mut rng);
            let e_im: f64 = StandardNormal.sample(&mut rng);
            readings[(i, j)] = z + C64::new(e_re, e_im) * config.sigma_e;
        }
    }
    Ok(SyntheticData {
        data: ComplexSensorData {
            p,
            coords,
            readings,
            sigma_e: config.sigma_e,
        },
        reference,
    })
}

/// Reference solution plus noisy readings at the configured sensors.
pub fn generate_data(config: &ProblemConfig, omega: f64) -> Result<SyntheticData> {
    let reference = reference_solution(config, omega)?;
    let prior = config.prior_mesh()?;
    let coords = sensor_points(config, &prior, &reference.mesh)?;
    observe(config, reference, &prior, coords)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_single_observation_is_exact() {
        let cfg = ProblemConfig {
            n_elements: 20,
            ref_elements: 60,
            samples: 8,
            sigma_e: 0.0,
            n_obs: 1,
            ..ProblemConfig::helmholtz1d()
        };
        let data = generate_data(&cfg, 2.0 * PI * 200.0).unwrap();
        let p_ref = interpolation_matrix(&data.reference.mesh, &data.data.coords).unwrap();
        let exact = p_ref.mul_vec(data.reference.values.as_slice());
        for (i, z) in exact.iter().enumerate() {
            assert_eq!(data.data.readings[(i, 0)], *z);
        }
        assert_eq!(data.data.p.nrows(), 11);
        assert_eq!(data.data.p.ncols(), 21);
    }

    #[test]
    fn readings_are_seeded() {
        let cfg = ProblemConfig {
            n_elements: 20,
            ref_elements: 60,
            samples: 8,
            ..ProblemConfig::helmholtz1d()
        };
        let a = generate_data(&cfg, 2.0 * PI * 200.0).unwrap();
        let b = generate_data(&cfg, 2.0 * PI * 200.0).unwrap();
        assert_eq!(a.data.readings, b.data.readings);
        let c = generate_data(&ProblemConfig { seed: 9, ..cfg }, 2.0 * PI * 200.0).unwrap();
        assert_ne!(a.data.readings, c.data.readings);
    }

    #[test]
    fn scattered_points_avoid_the_disc() {
        let cfg = ProblemConfig {
            h: 0.1,
            data_h: 0.08,
            n_sensors: 30,
            ..ProblemConfig::scatter2d()
        };
        let prior = cfg.prior_mesh().unwrap();
        let data = cfg.reference_mesh().unwrap();
        let pts = sensor_points(&cfg, &prior, &data).unwrap();
        assert_eq!(pts.len(), 30);
        for p in &pts {
            let r = ((p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2)).sqrt();
            assert!(r >= 0.2 + 0.2 - 1e-12);
        }
        let fewer = sensor_points(&ProblemConfig { n_sensors: 5, ..cfg.clone() }, &prior, &data).unwrap();
        assert_eq!(&pts[..5], &fewer[..]);
    }

    #[test]
    fn relative_error_of_reference_is_zero() {
        let mesh = Arc::new(crate::mesh::build_interval_mesh(10, 1.0).unwrap());
        let values = DVector::from_fn(11, |i, _| C64::new((i as f64).sin(), 0.0));
        let reference = ReferenceSolution::new(mesh.clone(), values.clone(), 1.0).unwrap();
        let proj = reference.with_source_mesh(&mesh);
        assert!(proj.relative_error(&values.map(|z| z.re), Channel::Re, 3.0).unwrap() < 1e-15);
        assert!((proj.relative_error(&DVector::zeros(11), Channel::Re, 3.0).unwrap() - 1.0).abs() < 1e-15);
    }
}
