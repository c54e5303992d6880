//! Bayesian conditioning of a Gaussian state prior on noisy sensor readings.
//!
//! Readings follow `y_i = ρ P u + ρ P d_r + d + e` with model error
//! `d ~ N(0, C_d)`, sensor noise `e ~ N(0, σ_e² I)` and, for the reduced
//! prior, a ROM error `d_r` described by an [`ErrorField`](crate::adjoint_error::ErrorField)
//! channel. Every function works on one real channel.

pub mod optim;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::cholesky_jittered;
use crate::mesh::Point;
use crate::stochastic::{kernel_matrix, Channel, KernelSpec, MultivariateGaussian};
use crate::{Error, Result, C64};

use optim::{minimize, OptOptions};

/// Relative jitter used when a covariance fails to factor.
pub const COV_JITTER: f64 = 1e-10;

/// Readings of one channel.
#[derive(Debug, Clone)]
pub struct SensorData {
    /// `n_y × N` interpolation matrix.
    pub p: DMatrix<f64>,
    pub coords: Vec<Point>,
    /// `n_y × n_o`, one column per observation.
    pub readings: DMatrix<f64>,
    pub sigma_e: f64,
}

impl SensorData {
    pub fn new(p: DMatrix<f64>, coords: Vec<Point>, readings: DMatrix<f64>, sigma_e: f64) -> Result<Self> {
        let n_y = p.nrows();
        if coords.len() != n_y {
            return Err(Error::DimensionMismatch { expected: n_y, got: coords.len() });
        }
        if readings.nrows() != n_y {
            return Err(Error::DimensionMismatch { expected: n_y, got: readings.nrows() });
        }
        if readings.ncols() == 0 {
            return Err(Error::InvalidArgument("at least one observation is required".into()));
        }
        if !(sigma_e >= 0.0) {
            return Err(Error::InvalidArgument(format!("sensor noise must be non-negative, got {sigma_e}")));
        }
        for (i, row) in p.row_iter().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidArgument(format!("interpolation row {i} sums to {s}")));
            }
        }
        Ok(SensorData { p, coords, readings, sigma_e })
    }

    pub fn n_y(&self) -> usize {
        self.p.nrows()
    }

    pub fn n_o(&self) -> usize {
        self.readings.ncols()
    }

    /// `Σ_i y_i`.
    pub fn sum(&self) -> DVector<f64> {
        self.readings.column_sum()
    }

    pub fn noise_cov(&self) -> DMatrix<f64> {
        DMatrix::identity(self.n_y(), self.n_y()) * (self.sigma_e * self.sigma_e)
    }
}

/// Complex readings; each channel is conditioned separately.
#[derive(Debug, Clone)]
pub struct ComplexSensorData {
    pub p: DMatrix<f64>,
    pub coords: Vec<Point>,
    pub readings: DMatrix<C64>,
    pub sigma_e: f64,
}

impl ComplexSensorData {
    pub fn channel(&self, ch: Channel) -> Result<SensorData> {
        SensorData::new(self.p.clone(), self.coords.clone(), self.readings.map(|z| ch.part(z)), self.sigma_e)
    }
}

/// Data-model hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparameters {
    pub rho: f64,
    pub sigma_d: f64,
    pub ell_d: f64,
}

impl Hyperparameters {
    pub fn new(rho: f64, sigma_d: f64, ell_d: f64) -> Result<Self> {
        if !(rho > 0.0 && sigma_d >= 0.0 && ell_d > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "invalid hyperparameters rho = {rho}, sigma_d = {sigma_d}, ell_d = {ell_d}"
            )));
        }
        Ok(Hyperparameters { rho, sigma_d, ell_d })
    }
}

/// Matérn 5/2 model-error covariance at the sensor coordinates.
pub fn model_error_cov(coords: &[Point], hp: &Hyperparameters) -> DMatrix<f64> {
    if hp.sigma_d == 0.0 {
        return DMatrix::zeros(coords.len(), coords.len());
    }
    let spec = KernelSpec {
        nu: 2.5,
        sigma: hp.sigma_d,
        ell: hp.ell_d,
    };
    kernel_matrix(coords, &spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    StatFem,
    StatRom,
}

#[derive(Debug, Clone)]
pub struct PosteriorState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub hp: Hyperparameters,
    pub variant: Variant,
}

impl PosteriorState {
    pub fn gaussian(&self) -> MultivariateGaussian {
        MultivariateGaussian {
            mean: self.mean.clone(),
            cov: self.cov.clone(),
        }
    }
}

fn symmetrize(a: DMatrix<f64>) -> DMatrix<f64> {
    (&a + a.transpose()) * 0.5
}

fn factor(a: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    cholesky_jittered(a, COV_JITTER).map_err(|_| Error::NotPositiveDefinite(format!("{what} is not positive definite")))
}

fn check_dims(prior: &MultivariateGaussian, data: &SensorData, c_d: &DMatrix<f64>) -> Result<()> {
    let n = prior.dim();
    if prior.cov.nrows() != n || prior.cov.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: prior.cov.nrows() });
    }
    if data.p.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: data.p.ncols() });
    }
    if c_d.nrows() != data.n_y() || c_d.ncols() != data.n_y() {
        return Err(Error::DimensionMismatch {
            expected: data.n_y(),
            got: c_d.nrows(),
        });
    }
    Ok(())
}

/// statFEM posterior in information form.
///
/// Components with exactly zero prior variance are deterministic and stay at
/// their prior value; the precision update acts on the remaining ones.
pub fn condition_statfem(prior: &MultivariateGaussian, data: &SensorData, hp: &Hyperparameters, c_d: &DMatrix<f64>) -> Result<PosteriorState> {
    check_dims(prior, data, c_d)?;
    let n = prior.dim();
    let n_o = data.n_o() as f64;
    let rho = hp.rho;
    let free: Vec<usize> = (0..n).filter(|&i| prior.cov[(i, i)] != 0.0).collect();
    let fixed: Vec<usize> = (0..n).filter(|&i| prior.cov[(i, i)] == 0.0).collect();

    let noise = factor(&(c_d + data.noise_cov()), "C_d + C_e")?;
    let mut shifted = data.sum();
    for &j in &fixed {
        shifted -= data.p.column(j) * (rho * n_o * prior.mean[j]);
    }
    let p_f = data.p.select_columns(&free);
    let c_ff = prior.cov.select_rows(&free).select_columns(&free);
    let mu_f = prior.mean.select_rows(&free);

    let mut mean = prior.mean.clone();
    let mut cov = DMatrix::zeros(n, n);
    if !free.is_empty() {
        let prior_chol = factor(&c_ff, "prior covariance")?;
        let prior_prec = prior_chol.inverse();
        let w_p = noise.solve(&p_f);
        let precision = symmetrize(p_f.transpose() * &w_p * (rho * rho * n_o) + &prior_prec);
        let post_chol = factor(&precision, "posterior precision")?;
        let cov_f = symmetrize(post_chol.inverse());
        let info = w_p.transpose() * &shifted * rho + &prior_prec * &mu_f;
        let mean_f = &cov_f * info;
        for (a, &i) in free.iter().enumerate() {
            mean[i] = mean_f[a];
            for (b, &j) in free.iter().enumerate() {
                cov[(i, j)] = cov_f[(a, b)];
            }
        }
    }
    Ok(PosteriorState {
        mean,
        cov,
        hp: *hp,
        variant: Variant::StatFem,
    })
}

/// Gain-form posterior including the ROM error `d_r` when `error` is given.
///
/// With `error = None` this is the classical statFEM update on the same prior.
pub fn condition_statrom(
    prior: &MultivariateGaussian,
    error: Option<&MultivariateGaussian>,
    data: &SensorData,
    hp: &Hyperparameters,
    c_d: &DMatrix<f64>,
) -> Result<PosteriorState> {
    check_dims(prior, data, c_d)?;
    let n_o = data.n_o() as f64;
    let rho = hp.rho;
    let p = &data.p;
    let cpt = &prior.cov * p.transpose();
    let mut k_yr = c_d + data.noise_cov();
    let mut predicted = p * &prior.mean;
    if let Some(err) = error {
        if err.dim() != prior.dim() {
            return Err(Error::DimensionMismatch {
                expected: prior.dim(),
                got: err.dim(),
            });
        }
        k_yr += p * &err.cov * p.transpose() * (rho * rho);
        predicted += p * &err.mean;
    }
    let gain_mat = symmetrize(p * &cpt * (rho * rho * n_o) + k_yr);
    let chol = factor(&gain_mat, "innovation covariance")?;
    let innovation = data.sum() - predicted * (rho * n_o);
    let mean = &prior.mean + &cpt * chol.solve(&innovation) * rho;
    let cov = symmetrize(&prior.cov - &cpt * chol.solve(&cpt.transpose()) * (rho * rho * n_o));
    Ok(PosteriorState {
        mean,
        cov,
        hp: *hp,
        variant: if error.is_some() { Variant::StatRom } else { Variant::StatFem },
    })
}

/// Quantities of the marginal likelihood that do not depend on the
/// hyperparameters.
#[derive(Debug, Clone)]
pub struct LikelihoodModel {
    pcp: DMatrix<f64>,
    pcdp: DMatrix<f64>,
    /// `Pμ + Pμ_{d_r}`.
    predicted: DVector<f64>,
    mean_reading: DVector<f64>,
    /// `Σ (y_i − ȳ)(y_i − ȳ)ᵀ`.
    scatter: DMatrix<f64>,
    coords: Vec<Point>,
    n_o: usize,
    sigma_e: f64,
}

impl LikelihoodModel {
    pub fn new(prior: &MultivariateGaussian, error: Option<&MultivariateGaussian>, data: &SensorData) -> Result<Self> {
        let n = prior.dim();
        if data.p.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: data.p.ncols() });
        }
        let p = &data.p;
        let pcp = symmetrize(p * &prior.cov * p.transpose());
        let mut predicted = p * &prior.mean;
        let mut pcdp = DMatrix::zeros(data.n_y(), data.n_y());
        if let Some(err) = error {
            if err.dim() != n {
                return Err(Error::DimensionMismatch { expected: n, got: err.dim() });
            }
            pcdp = symmetrize(p * &err.cov * p.transpose());
            predicted += p * &err.mean;
        }
        let n_o = data.n_o();
        let mean_reading = data.sum() / n_o as f64;
        let mut centered = data.readings.clone();
        for mut col in centered.column_iter_mut() {
            col -= &mean_reading;
        }
        let scatter = &centered * centered.transpose();
        Ok(LikelihoodModel {
            pcp,
            pcdp,
            predicted,
            mean_reading,
            scatter,
            coords: data.coords.clone(),
            n_o,
            sigma_e: data.sigma_e,
        })
    }

    /// `K = ρ² P C Pᵀ + ρ² P C_{d_r} Pᵀ + C_d + C_e`.
    pub fn reading_cov(&self, hp: &Hyperparameters) -> DMatrix<f64> {
        let n_y = self.pcp.nrows();
        (&self.pcp + &self.pcdp) * (hp.rho * hp.rho)
            + model_error_cov(&self.coords, hp)
            + DMatrix::identity(n_y, n_y) * (self.sigma_e * self.sigma_e)
    }

    /// `Σ_i log N(y_i; ρ(Pμ + Pμ_{d_r}), K)`.
    pub fn log_likelihood(&self, hp: &Hyperparameters) -> Result<f64> {
        let k = self.reading_cov(hp);
        let n_y = k.nrows() as f64;
        let n_o = self.n_o as f64;
        let chol = Cholesky::new(k).ok_or_else(|| {
            Error::NotPositiveDefinite(format!(
                "likelihood covariance at rho = {}, sigma_d = {}, ell_d = {}",
                hp.rho, hp.sigma_d, hp.ell_d
            ))
        })?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let offset = &self.mean_reading - &self.predicted * hp.rho;
        let quad = chol.solve(&self.scatter).trace() + n_o * offset.dot(&chol.solve(&offset));
        Ok(-0.5 * n_o * n_y * (2.0 * std::f64::consts::PI).ln() - 0.5 * n_o * log_det - 0.5 * quad)
    }
}

/// Log marginal likelihood summed over all readings.
pub fn log_marginal_likelihood(
    prior: &MultivariateGaussian,
    error: Option<&MultivariateGaussian>,
    data: &SensorData,
    hp: &Hyperparameters,
) -> Result<f64> {
    LikelihoodModel::new(prior, error, data)?.log_likelihood(hp)
}

/// Box constraints for hyperparameter learning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperBounds {
    pub rho: (f64, f64),
    pub sigma_d: (f64, f64),
    pub ell_d: (f64, f64),
}

impl HyperBounds {
    /// Default box for a domain of the given diameter.
    pub fn for_domain(diameter: f64) -> Self {
        HyperBounds {
            rho: (1e-2, 1e2),
            sigma_d: (1e-8, 1e2),
            ell_d: (1e-3 * diameter, 10.0 * diameter),
        }
    }

    fn log_box(&self) -> Result<([f64; 3], [f64; 3])> {
        let pairs = [self.rho, self.sigma_d, self.ell_d];
        for (lo, hi) in pairs {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::InvalidArgument(format!("invalid hyperparameter bounds [{lo}, {hi}]")));
            }
        }
        Ok((pairs.map(|(lo, _)| lo.ln()), pairs.map(|(_, hi)| hi.ln())))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LearnSettings {
    pub restarts: usize,
    pub seed: u64,
    pub opt: OptOptions,
}

impl Default for LearnSettings {
    fn default() -> Self {
        LearnSettings {
            restarts: 3,
            seed: 0,
            opt: OptOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LearnOutcome {
    pub hp: Hyperparameters,
    pub log_likelihood: f64,
    /// Set when no restart ended in a converged line search.
    pub warning: bool,
}

fn from_log(x: &[f64]) -> Hyperparameters {
    Hyperparameters {
        rho: x[0].exp(),
        sigma_d: x[1].exp(),
        ell_d: x[2].exp(),
    }
}

/// Maximizes the marginal likelihood over `(log ρ, log σ_d, log ℓ_d)`.
///
/// The first start is a data-driven guess, the others are drawn uniformly in
/// the log box from a seeded generator. The best point seen, start points
/// included, is returned.
pub fn learn_hyperparameters(model: &LikelihoodModel, bounds: &HyperBounds, settings: &LearnSettings) -> Result<LearnOutcome> {
    let (lo, hi) = bounds.log_box()?;
    let objective = |x: &[f64]| match model.log_likelihood(&from_log(x)) {
        Ok(v) if v.is_finite() => -v,
        _ => f64::INFINITY,
    };

    let offset = &model.mean_reading - &model.predicted;
    let rms = (offset.norm_squared() / offset.len().max(1) as f64).sqrt();
    let guess = [0.0, rms.max(1e-6).ln(), 0.5 * (lo[2] + hi[2])];
    let mut starts = vec![guess];
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    for _ in 1..settings.restarts.max(1) {
        starts.push(std::array::from_fn(|i| rng.gen_range(lo[i]..=hi[i])));
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut any_converged = false;
    let mut consider = |x: Vec<f64>, fx: f64| {
        if fx.is_finite() && best.as_ref().map_or(true, |(_, b)| fx < *b) {
            best = Some((x, fx));
        }
    };
    for start in &starts {
        let mut x0 = start.to_vec();
        for i in 0..3 {
            x0[i] = x0[i].clamp(lo[i], hi[i]);
        }
        consider(x0.clone(), objective(&x0));
        let out = minimize(objective, &x0, &lo, &hi, settings.opt);
        any_converged |= !out.line_search_failed;
        consider(out.x, out.fx);
    }
    let (x, fx) = best.ok_or_else(|| Error::NotPositiveDefinite("likelihood undefined at every start point".into()))?;
    Ok(LearnOutcome {
        hp: from_log(&x),
        log_likelihood: -fx,
        warning: !any_converged,
    })
}

/// Predictive density of the true process at the sensors,
/// `ρP(u + d_r) + d`, for a fresh reading.
pub fn predictive_true_process(
    post: &PosteriorState,
    error: Option<&MultivariateGaussian>,
    hp: &Hyperparameters,
    c_d: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> MultivariateGaussian {
    let rho = hp.rho;
    let mut mean = p * &post.mean * rho;
    let mut cov = p * &post.cov * p.transpose() * (rho * rho) + c_d;
    if let Some(err) = error {
        mean += p * &err.mean * rho;
        cov += p * &err.cov * p.transpose() * (rho * rho);
    }
    MultivariateGaussian { mean, cov: symmetrize(cov) }
}

/// Predictive density of new observations at the points behind `p_hat`.
pub fn predictive_observations(
    post: &PosteriorState,
    error: Option<&MultivariateGaussian>,
    hp: &Hyperparameters,
    c_d_hat: &DMatrix<f64>,
    c_e_hat: &DMatrix<f64>,
    p_hat: &DMatrix<f64>,
) -> MultivariateGaussian {
    let mut out = predictive_true_process(post, error, hp, c_d_hat, p_hat);
    out.cov += c_e_hat;
    out
}
