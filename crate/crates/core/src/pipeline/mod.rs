//! Offline basis construction and online inference over QMC samples.
//!
//! Offline: per sample, assemble the system, factor `A(ω̄)`, build the primal
//! Krylov basis and (per distinct system) the adjoint probes. Online, per
//! frequency: reduced solves give the ROM prior, adjoint residuals give the
//! error field, and both feed hyperparameter learning and conditioning.

mod data;

pub use data::{generate_data, observe, reference_solution, sensor_points, training_points, ProjectedReference, ReferenceSolution, SyntheticData};

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::{Duration, Instant};

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::adjoint_error::{build_adjoint_set, estimate_error_field, mean_variance, AdjointSet, ErrorField, ErrorGpOptions};
use crate::assembly::{assemble, solve_with, EnergyNorm, HelmholtzSystem};
use crate::inference::{
    condition_statrom, learn_hyperparameters, model_error_cov, predictive_true_process, ComplexSensorData, HyperBounds, Hyperparameters, LearnOutcome, LearnSettings,
    LikelihoodModel, PosteriorState,
};
use crate::linalg::{CsrMatrix, LuFactors};
use crate::mesh::{build_interval_mesh, build_scatterer_mesh, Mesh, Point};
use crate::rom::{build_basis, reduce, BasisMode, KrylovCoupling, ReducedSystem, RomBasis};
use crate::stochastic::{
    discrete_forcing, kl_build, region_weights, sample_kappa, sample_moments_complex, sobol_gaussian, Channel, ComplexGaussian, ForcingRegion,
    KLExpansion, KernelSpec, MultivariateGaussian, SpectralFactor,
};
use crate::{Error, Result, C64};

/// Fraction of QMC samples allowed to fail before a run aborts.
pub const MAX_FAILED_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Helmholtz1d,
    Scatter2d,
}

impl ProblemKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "helmholtz1d" => Some(Self::Helmholtz1d),
            "scatter2d" => Some(Self::Scatter2d),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Helmholtz1d => "helmholtz1d",
            Self::Scatter2d => "scatter2d",
        }
    }
}

/// Nodal mean of the forcing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeanForcing {
    Constant(f64),
    /// Incident plane wave `exp(i k x)`.
    PlaneWave,
}

/// Every setting of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    pub length: f64,
    pub n_elements: usize,
    pub ref_elements: usize,
    pub side: f64,
    pub center: Point,
    pub radius: f64,
    pub h: f64,
    pub data_h: f64,
    pub c: f64,
    pub beta: f64,
    /// Variance of `ln κ`; zero makes the material deterministic.
    pub kappa_sigma2: f64,
    pub kappa_ell: f64,
    pub kappa_tau: f64,
    pub forcing_mean: MeanForcing,
    pub forcing_nu: f64,
    pub forcing_sigma: f64,
    pub forcing_ell: f64,
    pub forcing_tau: f64,
    pub forcing_complex: bool,
    /// Modulate the data-generating forcing with a transverse sine.
    pub misspecified_truth: bool,
    pub omega_bar_hz: f64,
    pub m: usize,
    pub samples: usize,
    pub coupling: KrylovCoupling,
    pub training_points: usize,
    pub gp: ErrorGpOptions,
    pub raw_adjoint_variance: bool,
    pub n_sensors: usize,
    pub n_obs: usize,
    pub sigma_e: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl ProblemConfig {
    pub fn helmholtz1d() -> Self {
        ProblemConfig {
            kind: ProblemKind::Helmholtz1d,
            length: 1.0,
            n_elements: 100,
            ref_elements: 1000,
            side: 1.0,
            center: [0.5, 0.5],
            radius: 0.2,
            h: 1.0 / 30.0,
            data_h: 1.0 / 35.0,
            c: 343.0,
            beta: 0.0,
            kappa_sigma2: 0.05,
            kappa_ell: 0.3,
            kappa_tau: 0.95,
            forcing_mean: MeanForcing::Constant(PI * PI / 50.0),
            forcing_nu: 2.5,
            forcing_sigma: 0.02,
            forcing_ell: 1.0,
            forcing_tau: 1.0,
            forcing_complex: false,
            misspecified_truth: false,
            omega_bar_hz: 100.0,
            m: 5,
            samples: 256,
            coupling: KrylovCoupling::Taylor,
            training_points: 12,
            gp: ErrorGpOptions::default(),
            raw_adjoint_variance: false,
            n_sensors: 11,
            n_obs: 20,
            sigma_e: 1e-3,
            restarts: 3,
            seed: 0,
        }
    }

    pub fn scatter2d() -> Self {
        ProblemConfig {
            kind: ProblemKind::Scatter2d,
            beta: 1.0,
            kappa_sigma2: 0.0,
            forcing_mean: MeanForcing::PlaneWave,
            forcing_nu: 1.5,
            forcing_sigma: 0.8,
            forcing_ell: 0.6,
            forcing_tau: 0.99,
            forcing_complex: true,
            misspecified_truth: true,
            omega_bar_hz: 250.0,
            m: 12,
            training_points: 200,
            n_sensors: 5,
            ..Self::helmholtz1d()
        }
    }

    pub fn defaults(kind: ProblemKind) -> Self {
        match kind {
            ProblemKind::Helmholtz1d => Self::helmholtz1d(),
            ProblemKind::Scatter2d => Self::scatter2d(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("length", self.length),
            ("side", self.side),
            ("h", self.h),
            ("data_h", self.data_h),
            ("c", self.c),
            ("kappa_ell", self.kappa_ell),
            ("kappa_tau", self.kappa_tau),
            ("forcing_nu", self.forcing_nu),
            ("forcing_sigma", self.forcing_sigma),
            ("forcing_ell", self.forcing_ell),
            ("forcing_tau", self.forcing_tau),
            ("omega_bar", self.omega_bar_hz),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("beta", self.beta), ("kappa_sigma2", self.kappa_sigma2), ("sigma_e", self.sigma_e), ("radius", self.radius)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.kappa_tau > 1.0 || self.forcing_tau > 1.0 {
            return Err(Error::Config("truncation fractions must not exceed 1".into()));
        }
        for (name, v) in [("n_elements", self.n_elements), ("ref_elements", self.ref_elements), ("m", self.m), ("n_obs", self.n_obs), ("n_sensors", self.n_sensors)] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.samples < 2 {
            return Err(Error::Config(format!("samples must be at least 2, got {}", self.samples)));
        }
        Ok(())
    }

    /// Channels carrying signal: a real problem only has a real part.
    pub fn channels(&self) -> Vec<Channel> {
        if self.beta == 0.0 && !self.forcing_complex && self.forcing_mean != MeanForcing::PlaneWave {
            vec![Channel::Re]
        } else {
            Channel::BOTH.to_vec()
        }
    }

    pub fn omega_bar(&self) -> f64 {
        2.0 * PI * self.omega_bar_hz
    }

    pub fn prior_mesh(&self) -> Result<Mesh> {
        match self.kind {
            ProblemKind::Helmholtz1d => build_interval_mesh(self.n_elements, self.length),
            ProblemKind::Scatter2d => build_scatterer_mesh(self.side, self.center, self.radius, self.h),
        }
    }

    /// Finer mesh on which data are generated and errors measured.
    pub fn reference_mesh(&self) -> Result<Mesh> {
        match self.kind {
            ProblemKind::Helmholtz1d => build_interval_mesh(self.ref_elements, self.length),
            ProblemKind::Scatter2d => build_scatterer_mesh(self.side, self.center, self.radius, self.data_h),
        }
    }

    pub(crate) fn forcing_region(&self) -> ForcingRegion {
        match self.kind {
            ProblemKind::Helmholtz1d => ForcingRegion::NeumannG,
            ProblemKind::Scatter2d => ForcingRegion::Domain,
        }
    }

    pub fn forcing_kernel(&self) -> Result<KernelSpec> {
        KernelSpec::new(self.forcing_nu, self.forcing_sigma, self.forcing_ell)
    }
}

/// Random inputs discretized on one mesh.
#[derive(Debug, Clone)]
pub struct StochasticModel {
    pub mesh: Arc<Mesh>,
    pub kl: Option<KLExpansion>,
    forcing_op: CsrMatrix<f64>,
    forcing_mean: MeanForcing,
    pub forcing_factor: SpectralFactor,
    forcing_complex: bool,
    c: f64,
    beta: f64,
}

/// One draw of the random inputs.
#[derive(Debug, Clone)]
pub struct Realization {
    pub kappa: Option<DVector<f64>>,
    /// Zero-mean random part of the load vector.
    pub load: DVector<C64>,
}

impl StochasticModel {
    pub fn new(config: &ProblemConfig, mesh: Arc<Mesh>) -> Result<Self> {
        let region = config.forcing_region();
        let (_, op) = region_weights(&mesh, region);
        let n = mesh.n_nodes();
        let forcing = discrete_forcing(&mesh, region, &DVector::zeros(n), &config.forcing_kernel()?)?;
        let forcing_factor = SpectralFactor::new(&forcing.cov, config.forcing_tau)?;
        let kl = if config.kappa_sigma2 > 0.0 {
            let spec = KernelSpec::new(0.5, config.kappa_sigma2.sqrt(), config.kappa_ell)?;
            Some(kl_build(&mesh, &DVector::zeros(n), &spec, config.kappa_tau)?)
        } else {
            None
        };
        Ok(StochasticModel {
            mesh,
            kl,
            forcing_op: op,
            forcing_mean: config.forcing_mean,
            forcing_factor,
            forcing_complex: config.forcing_complex,
            c: config.c,
            beta: config.beta,
        })
    }

    fn forcing_dims(&self) -> usize {
        self.forcing_factor.n_modes() * if self.forcing_complex { 2 } else { 1 }
    }

    /// Number of standard normals per sample.
    pub fn dim(&self) -> usize {
        self.kl.as_ref().map_or(0, |kl| kl.n_modes()) + self.forcing_dims()
    }

    pub fn shared_system(&self) -> bool {
        self.kl.is_none()
    }

    /// Mean forcing at the mesh nodes.
    pub fn mean_nodal(&self, omega: f64) -> DVector<C64> {
        let k = omega / self.c;
        let nodes = self.mesh.nodes();
        match self.forcing_mean {
            MeanForcing::Constant(v) => DVector::from_element(nodes.len(), C64::new(v, 0.0)),
            MeanForcing::PlaneWave => DVector::from_iterator(nodes.len(), nodes.iter().map(|p| C64::new(0.0, k * p[0]).exp())),
        }
    }

    pub fn mean_load(&self, omega: f64) -> DVector<C64> {
        DVector::from_vec(self.forcing_op.mul_vec(self.mean_nodal(omega).as_slice()))
    }

    pub fn realize(&self, eta: &[f64]) -> Result<Realization> {
        if eta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: eta.len(),
            });
        }
        let n_kl = self.kl.as_ref().map_or(0, |kl| kl.n_modes());
        let kappa = match &self.kl {
            Some(kl) => Some(sample_kappa(kl, &eta[..n_kl])?),
            None => None,
        };
        let load = self.forcing_load(&eta[n_kl..]);
        Ok(Realization { kappa, load })
    }

    /// Random load from the forcing part of the standard normals.
    pub fn forcing_load(&self, eta: &[f64]) -> DVector<C64> {
        let nf = self.forcing_factor.n_modes();
        let re = self.forcing_factor.sample(&eta[..nf]);
        if self.forcing_complex {
            let im = self.forcing_factor.sample(&eta[nf..2 * nf]);
            re.zip_map(&im, C64::new)
        } else {
            re.map(|v| C64::new(v, 0.0))
        }
    }

    pub fn kl_modes(&self) -> usize {
        self.kl.as_ref().map_or(0, |kl| kl.n_modes())
    }

    pub fn assemble(&self, kappa: Option<&DVector<f64>>) -> Result<HelmholtzSystem> {
        let n = self.mesh.n_nodes();
        match kappa {
            Some(k) => assemble(&self.mesh, k.as_slice(), self.c, self.beta),
            None => assemble(&self.mesh, &vec![1.0; n], self.c, self.beta),
        }
    }

    /// Gaussian inputs for all QMC samples, one row per sample.
    pub fn qmc_inputs(&self, samples: usize, seed: u64) -> Result<DMatrix<f64>> {
        if self.dim() == 0 {
            return Ok(DMatrix::zeros(samples, 0));
        }
        sobol_gaussian(self.dim(), samples, seed)
    }
}

/// A distinct system matrix with its factorization at `ω̄` and adjoint probes.
#[derive(Debug, Clone)]
pub struct SystemArtifacts {
    pub sys: Arc<HelmholtzSystem>,
    pub lu: Arc<LuFactors>,
    pub adjoint: AdjointSet,
}

#[derive(Debug, Clone)]
pub struct SampleArtifacts {
    pub system: usize,
    pub load: DVector<C64>,
    pub basis: RomBasis,
    pub reduced: ReducedSystem,
}

/// Everything the online phase needs, reproducible from `(config, seed)`.
#[derive(Debug, Clone)]
pub struct OfflineArtifacts {
    pub config: ProblemConfig,
    pub model: StochasticModel,
    pub training_points: Vec<Point>,
    pub systems: Vec<SystemArtifacts>,
    pub samples: Vec<SampleArtifacts>,
}

impl OfflineArtifacts {
    pub fn mesh(&self) -> &Mesh {
        &self.model.mesh
    }
}

/// Builds the stochastic model on the prior mesh and runs the offline phase.
pub fn offline(config: &ProblemConfig) -> Result<OfflineArtifacts> {
    config.validate()?;
    let mesh = Arc::new(config.prior_mesh()?);
    let model = StochasticModel::new(config, mesh)?;
    offline_with_model(config, model)
}

/// Offline phase on an existing stochastic model, e.g. to vary `m` without
/// repeating the eigendecompositions.
pub fn offline_with_model(config: &ProblemConfig, model: StochasticModel) -> Result<OfflineArtifacts> {
    config.validate()?;
    let omega_bar = config.omega_bar();
    let eta = model.qmc_inputs(config.samples, config.seed)?;
    let realizations: Vec<Realization> = (0..config.samples)
        .map(|i| model.realize(eta.row(i).transpose().as_slice()))
        .collect::<Result<_>>()?;
    let points = training_points(config, &model.mesh)?;

    let system_count = if model.shared_system() { 1 } else { config.samples };
    let systems: Vec<SystemArtifacts> = (0..system_count)
        .into_par_iter()
        .map(|s| {
            let sys = model.assemble(realizations[s].kappa.as_ref())?;
            let lu = Arc::new(sys.factor(omega_bar)?);
            let adjoint = build_adjoint_set(&sys, &model.mesh, &points, omega_bar, config.m, Some(lu.clone()), config.coupling)?;
            Ok(SystemArtifacts {
                sys: Arc::new(sys),
                lu,
                adjoint,
            })
        })
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| sample_error(i, e)))
        .collect::<Result<_>>()?;

    let mean_bar = model.mean_load(omega_bar);
    let samples: Vec<SampleArtifacts> = realizations
        .par_iter()
        .enumerate()
        .map(|(i, real)| {
            let system = if model.shared_system() { 0 } else { i };
            let art = &systems[system];
            let f = &mean_bar + &real.load;
            let basis = build_basis(&art.sys, &f, omega_bar, config.m, Some(art.lu.clone()), BasisMode::Primal, config.coupling)?;
            let reduced = reduce(&art.sys, &[], &basis)?;
            Ok(SampleArtifacts {
                system,
                load: real.load.clone(),
                basis,
                reduced,
            })
        })
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| sample_error(i, e)))
        .collect::<Result<_>>()?;

    Ok(OfflineArtifacts {
        config: config.clone(),
        model,
        training_points: points,
        systems,
        samples,
    })
}

fn sample_error(index: usize, source: Error) -> Error {
    Error::SampleFailed {
        index,
        source: Box::new(source),
    }
}

/// QMC solutions of one frequency and their moments.
#[derive(Debug, Clone)]
pub struct PriorRun {
    pub omega: f64,
    pub gaussian: ComplexGaussian,
    /// Indices of the samples that solved successfully.
    pub used: Vec<usize>,
    pub solutions: Vec<DVector<C64>>,
    pub rhs: Vec<DVector<C64>>,
}

impl PriorRun {
    pub fn mean(&self) -> DVector<C64> {
        self.gaussian.mean()
    }
}

fn collect_samples(results: Vec<Result<(DVector<C64>, DVector<C64>)>>, omega: f64) -> Result<PriorRun> {
    let total = results.len();
    let mut used = Vec::with_capacity(total);
    let mut solutions = Vec::with_capacity(total);
    let mut rhs = Vec::with_capacity(total);
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((u, f)) => {
                used.push(i);
                solutions.push(u);
                rhs.push(f);
            }
            Err(e) => failures.push((i, e)),
        }
    }
    if !failures.is_empty() {
        if failures.len() as f64 > MAX_FAILED_FRACTION * total as f64 {
            let (i, e) = failures.swap_remove(0);
            return Err(sample_error(i, e));
        }
        for (i, e) in &failures {
            warn!("skipping sample {i} at omega = {omega}: {e}");
        }
    }
    let gaussian = sample_moments_complex(&solutions)?;
    Ok(PriorRun {
        omega,
        gaussian,
        used,
        solutions,
        rhs,
    })
}

/// ROM prior at `omega`: reduce, solve and lift every sample.
pub fn forward_prior(art: &OfflineArtifacts, omega: f64) -> Result<PriorRun> {
    let mean = art.model.mean_load(omega);
    let results = art
        .samples
        .par_iter()
        .map(|s| {
            let sys = &art.systems[s.system].sys;
            let f = &mean + &s.load;
            let f_r = s.basis.project(&sys.constrain_rhs(&f));
            let u_r = s.reduced.solve_with_rhs(omega, &f_r)?;
            Ok((&s.basis.v * u_r, f))
        })
        .collect();
    collect_samples(results, omega)
}

/// Full-order QMC prior at `omega` on the same samples.
pub fn fom_prior(art: &OfflineArtifacts, omega: f64) -> Result<PriorRun> {
    let mean = art.model.mean_load(omega);
    let factors: Vec<Option<LuFactors>> = art.systems.par_iter().map(|s| s.sys.factor(omega).ok()).collect();
    let results = art
        .samples
        .par_iter()
        .map(|s| {
            let sys = &art.systems[s.system].sys;
            let lu = factors[s.system].as_ref().ok_or(Error::Resonance { omega })?;
            let f = &mean + &s.load;
            Ok((solve_with(sys, lu, omega, &f)?, f))
        })
        .collect();
    collect_samples(results, omega)
}

/// Pointwise adjoint estimates averaged over samples, regressed onto the mesh.
pub fn estimate_errors(art: &OfflineArtifacts, prior: &PriorRun) -> Result<ErrorField> {
    let n = art.mesh().n_nodes();
    if art.training_points.is_empty() {
        return Ok(ErrorField::zero(n));
    }
    let omega = prior.omega;
    // Adjoint solutions depend only on the system, not on the load.
    let adjoints: Vec<Vec<DVector<C64>>> = art
        .systems
        .par_iter()
        .map(|s| s.adjoint.probes.iter().map(|p| p.adjoint_solution(omega)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let per_sample: Vec<Vec<C64>> = prior
        .used
        .par_iter()
        .enumerate()
        .map(|(k, &i)| {
            let s = &art.samples[i];
            let sys = &art.systems[s.system].sys;
            let residual = sys.constrain_rhs(&prior.rhs[k]) - sys.apply(omega, &prior.solutions[k]);
            adjoints[s.system].iter().map(|q| q.dotc(&residual)).collect::<Vec<_>>()
        })
        .collect();
    let n_points = art.training_points.len();
    let mut values = Vec::with_capacity(n_points);
    let mut var_re = Vec::with_capacity(n_points);
    let mut var_im = Vec::with_capacity(n_points);
    for l in 0..n_points {
        let column: Vec<C64> = per_sample.iter().map(|d| d[l]).collect();
        values.push(column.iter().sum::<C64>() / column.len() as f64);
        let [vr, vi] = mean_variance(&column, art.config.raw_adjoint_variance);
        var_re.push(vr);
        var_im.push(vi);
    }
    estimate_error_field(art.mesh(), &art.training_points, &values, [&var_re, &var_im], omega, art.config.c, art.config.gp)
}

/// Prior variant conditioned in [`online`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Full-order prior, classical update.
    FullOrder,
    /// ROM prior, classical update.
    Classical,
    /// ROM prior with the estimated ROM error.
    StatRom,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::FullOrder, Method::Classical, Method::StatRom];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::FullOrder => "fom",
            Method::Classical => "without_estimator",
            Method::StatRom => "with_estimator",
        }
    }
}

/// Conditioning result of one channel.
#[derive(Debug, Clone)]
pub struct ChannelResult {
    pub channel: Channel,
    pub hp: Hyperparameters,
    pub log_likelihood: f64,
    pub learn_warning: bool,
    pub posterior: PosteriorState,
    /// Predictive density of the true process at the sensors.
    pub predictive: MultivariateGaussian,
    /// Predictive field on the prior mesh.
    pub field: DVector<f64>,
    pub relative_error: f64,
}

#[derive(Debug, Clone)]
pub struct MethodResult {
    pub method: Method,
    pub channels: Vec<ChannelResult>,
}

impl MethodResult {
    pub fn channel(&self, ch: Channel) -> Option<&ChannelResult> {
        self.channels.iter().find(|c| c.channel == ch)
    }

    /// Relative error per channel, NaN for channels without signal.
    pub fn errors(&self) -> [f64; 2] {
        Channel::BOTH.map(|ch| self.channel(ch).map_or(f64::NAN, |c| c.relative_error))
    }

    pub fn sigma_d(&self) -> [f64; 2] {
        Channel::BOTH.map(|ch| self.channel(ch).map_or(f64::NAN, |c| c.hp.sigma_d))
    }
}

#[derive(Debug, Clone, Default)]
pub struct Timings {
    pub prior: Duration,
    pub error_estimation: Duration,
    pub inference: Duration,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub omega: f64,
    pub prior: PriorRun,
    pub fom: Option<PriorRun>,
    pub error_field: ErrorField,
    pub methods: Vec<MethodResult>,
    pub timings: Timings,
}

impl RunResult {
    pub fn method(&self, m: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|r| r.method == m)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OnlineOptions {
    pub full_order: bool,
}

impl Default for OnlineOptions {
    fn default() -> Self {
        OnlineOptions { full_order: true }
    }
}

/// Output of [`condition_channel`].
#[derive(Debug, Clone)]
pub struct ConditionedChannel {
    pub posterior: PosteriorState,
    pub learned: LearnOutcome,
    pub predictive: MultivariateGaussian,
    pub field: DVector<f64>,
}

/// Learns hyperparameters and conditions one channel of one prior.
pub fn condition_channel(
    config: &ProblemConfig,
    mesh: &Mesh,
    prior: &MultivariateGaussian,
    error: Option<&MultivariateGaussian>,
    data: &ComplexSensorData,
    ch: Channel,
    seed: u64,
) -> Result<ConditionedChannel> {
    let sensor = data.channel(ch)?;
    let model = LikelihoodModel::new(prior, error, &sensor)?;
    let settings = LearnSettings {
        restarts: config.restarts,
        seed,
        ..Default::default()
    };
    let learned = learn_hyperparameters(&model, &HyperBounds::for_domain(mesh.diameter()), &settings)?;
    if learned.warning {
        warn!("hyperparameter search did not converge for the {} channel", ch.name());
    }
    let c_d = model_error_cov(&sensor.coords, &learned.hp);
    let post = condition_statrom(prior, error, &sensor, &learned.hp, &c_d)?;
    let predictive = predictive_true_process(&post, error, &learned.hp, &c_d, &sensor.p);
    let mut field = &post.mean * learned.hp.rho;
    if let Some(err) = error {
        field += &err.mean * learned.hp.rho;
    }
    Ok(ConditionedChannel {
        posterior: post,
        learned,
        predictive,
        field,
    })
}

/// Algorithm of the online phase at one frequency.
pub fn online(art: &OfflineArtifacts, omega: f64, data: &SyntheticData, opts: OnlineOptions) -> Result<RunResult> {
    let mut timings = Timings::default();
    let t = Instant::now();
    let prior = forward_prior(art, omega)?;
    let fom = if opts.full_order { Some(fom_prior(art, omega)?) } else { None };
    timings.prior = t.elapsed();

    let t = Instant::now();
    let error_field = estimate_errors(art, &prior)?;
    timings.error_estimation = t.elapsed();

    let t = Instant::now();
    let k = omega / art.config.c;
    let mesh = art.mesh();
    let reference = data.reference.with_source_mesh(mesh);
    let channels = art.config.channels();
    let mut jobs: Vec<(Method, Channel)> = Vec::new();
    for method in Method::ALL {
        if method == Method::FullOrder && fom.is_none() {
            continue;
        }
        for &ch in &channels {
            jobs.push((method, ch));
        }
    }
    let results: Vec<Result<ChannelResult>> = jobs
        .par_iter()
        .map(|&(method, ch)| {
            let (prior_ch, error) = match method {
                Method::FullOrder => (fom.as_ref().expect("full-order prior").gaussian.channel(ch), None),
                Method::Classical => (prior.gaussian.channel(ch), None),
                Method::StatRom => (prior.gaussian.channel(ch), Some(error_field.channel(ch))),
            };
            let seed = art.config.seed ^ (0x9e37_79b9 + ch as u64);
            let out = condition_channel(&art.config, mesh, prior_ch, error, &data.data, ch, seed)?;
            let relative_error = reference.relative_error(&out.field, ch, k)?;
            Ok(ChannelResult {
                channel: ch,
                hp: out.learned.hp,
                log_likelihood: out.learned.log_likelihood,
                learn_warning: out.learned.warning,
                posterior: out.posterior,
                predictive: out.predictive,
                field: out.field,
                relative_error,
            })
        })
        .collect();
    let mut methods: Vec<MethodResult> = Vec::new();
    for ((method, _), r) in jobs.iter().zip(results) {
        let r = r?;
        match methods.iter_mut().find(|m| m.method == *method) {
            Some(m) => m.channels.push(r),
            None => methods.push(MethodResult {
                method: *method,
                channels: vec![r],
            }),
        }
    }
    timings.inference = t.elapsed();
    Ok(RunResult {
        omega,
        prior,
        fom,
        error_field,
        methods,
        timings,
    })
}

/// Relative `H¹_k` distance between two complex fields on the same mesh.
pub fn relative_hk1(norm: &EnergyNorm, reference: &DVector<C64>, approx: &DVector<C64>, k: f64) -> Result<f64> {
    let denom = norm.norm(reference, k)?;
    let num = norm.norm(&(reference - approx), k)?;
    Ok(if denom > 0.0 { num / denom } else { num })
}
