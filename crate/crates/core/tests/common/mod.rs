//! Shared oracles: conditioning of explicitly assembled joint Gaussians.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use statrom::inference::{Hyperparameters, SensorData};
use statrom::mesh::Point;
use statrom::stochastic::MultivariateGaussian;

pub fn random_spd(n: usize, scale: f64, r: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| r.gen_range(-1.0..1.0));
    (&a * a.transpose() + DMatrix::identity(n, n) * 0.1) * scale
}

pub fn random_vector(n: usize, half_width: f64, r: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| r.gen_range(-half_width..half_width))
}

/// Nonnegative rows summing to one, like barycentric interpolation weights.
pub fn random_interpolation(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut p = DMatrix::from_fn(rows, cols, |_, _| r.gen_range(0.0..1.0));
    for mut row in p.row_iter_mut() {
        let total: f64 = row.sum();
        row /= total;
    }
    p
}

/// A conditioning problem with a fresh set of prediction points.
pub struct Instance {
    pub prior: MultivariateGaussian,
    pub error: Option<MultivariateGaussian>,
    pub data: SensorData,
    pub hp: Hyperparameters,
    pub c_d: DMatrix<f64>,
    pub p_hat: DMatrix<f64>,
    pub c_d_hat: DMatrix<f64>,
    pub c_e_hat: DMatrix<f64>,
}

pub fn random_instance(r: &mut ChaCha8Rng, with_error: bool) -> Instance {
    let n = r.gen_range(1..=6);
    let n_y = r.gen_range(1..=4);
    let n_o = r.gen_range(1..=3);
    let n_hat = r.gen_range(1..=4);
    let prior = MultivariateGaussian {
        mean: random_vector(n, 1.0, r),
        cov: random_spd(n, 1.0, r),
    };
    let error = with_error.then(|| MultivariateGaussian {
        mean: random_vector(n, 0.3, r),
        cov: random_spd(n, 0.05, r),
    });
    let p = random_interpolation(n_y, n, r);
    let coords: Vec<Point> = (0..n_y).map(|i| [i as f64, 0.0]).collect();
    let readings = DMatrix::from_fn(n_y, n_o, |_, _| r.gen_range(-2.0..2.0));
    let sigma_e = r.gen_range(0.05..0.5);
    let data = SensorData::new(p, coords, readings, sigma_e).expect("valid sensor data");
    let hp = Hyperparameters::new(r.gen_range(0.5..2.0), 0.1, 0.3).expect("valid hyperparameters");
    Instance {
        prior,
        error,
        data,
        hp,
        c_d: random_spd(n_y, 0.1, r),
        p_hat: random_interpolation(n_hat, n, r),
        c_d_hat: random_spd(n_hat, 0.1, r),
        c_e_hat: DMatrix::identity(n_hat, n_hat) * r.gen_range(0.01..0.2),
    }
}

/// `a | b = observed` for jointly Gaussian `(a, b)`.
pub fn condition(
    mu_a: &DVector<f64>,
    mu_b: &DVector<f64>,
    c_aa: &DMatrix<f64>,
    c_ab: &DMatrix<f64>,
    c_bb: &DMatrix<f64>,
    observed: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let lu = c_bb.clone().lu();
    let mean = mu_a + c_ab * lu.solve(&(observed - mu_b)).expect("invertible");
    let cov = c_aa - c_ab * lu.solve(&c_ab.transpose()).expect("invertible");
    (mean, cov)
}

/// Joint moments of the stacked readings `y_j = ρP(u + d_r,j) + d_j + e_j`,
/// `j = 1..n_o`, with `u` shared and the other terms independent per reading.
struct Readings {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    stacked: DVector<f64>,
}

fn readings(inst: &Instance) -> Readings {
    let p = &inst.data.p;
    let rho = inst.hp.rho;
    let n_y = inst.data.n_y();
    let n_o = inst.data.n_o();
    let (err_mean, err_cov) = match &inst.error {
        Some(e) => (e.mean.clone(), e.cov.clone()),
        None => (DVector::zeros(inst.prior.dim()), DMatrix::zeros(inst.prior.dim(), inst.prior.dim())),
    };
    let shared = p * &inst.prior.cov * p.transpose() * (rho * rho);
    let own = p * &err_cov * p.transpose() * (rho * rho) + &inst.c_d + inst.data.noise_cov();
    let per = p * (&inst.prior.mean + &err_mean) * rho;
    let mut mean = DVector::zeros(n_y * n_o);
    let mut cov = DMatrix::zeros(n_y * n_o, n_y * n_o);
    for j in 0..n_o {
        mean.rows_mut(j * n_y, n_y).copy_from(&per);
        for k in 0..n_o {
            let mut block = shared.clone();
            if j == k {
                block += &own;
            }
            cov.view_mut((j * n_y, k * n_y), (n_y, n_y)).copy_from(&block);
        }
    }
    let stacked = DVector::from_iterator(n_y * n_o, inst.data.readings.iter().copied());
    Readings { mean, cov, stacked }
}

/// Posterior of `u` given all readings.
pub fn posterior(inst: &Instance) -> (DVector<f64>, DMatrix<f64>) {
    let y = readings(inst);
    let cross_one = &inst.prior.cov * inst.data.p.transpose() * inst.hp.rho;
    let n_y = inst.data.n_y();
    let mut cross = DMatrix::zeros(inst.prior.dim(), n_y * inst.data.n_o());
    for j in 0..inst.data.n_o() {
        cross.columns_mut(j * n_y, n_y).copy_from(&cross_one);
    }
    condition(&inst.prior.mean, &y.mean, &inst.prior.cov, &cross, &y.cov, &y.stacked)
}

/// Conditional law of `z = ρP̂(u + d_r) + d̂ (+ ê)` with fresh `d_r`, `d̂`, `ê`.
pub fn predictive(inst: &Instance, p_hat: &DMatrix<f64>, c_d_hat: &DMatrix<f64>, c_e_hat: Option<&DMatrix<f64>>) -> (DVector<f64>, DMatrix<f64>) {
    let y = readings(inst);
    let rho = inst.hp.rho;
    let n = inst.prior.dim();
    let (err_mean, err_cov) = match &inst.error {
        Some(e) => (e.mean.clone(), e.cov.clone()),
        None => (DVector::zeros(n), DMatrix::zeros(n, n)),
    };
    let mu_z = p_hat * (&inst.prior.mean + &err_mean) * rho;
    let mut c_zz = p_hat * (&inst.prior.cov + &err_cov) * p_hat.transpose() * (rho * rho) + c_d_hat;
    if let Some(ce) = c_e_hat {
        c_zz += ce;
    }
    let n_y = inst.data.n_y();
    let one = p_hat * &inst.prior.cov * inst.data.p.transpose() * (rho * rho);
    let mut cross = DMatrix::zeros(p_hat.nrows(), n_y * inst.data.n_o());
    for j in 0..inst.data.n_o() {
        cross.columns_mut(j * n_y, n_y).copy_from(&one);
    }
    condition(&mu_z, &y.mean, &c_zz, &cross, &y.cov, &y.stacked)
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

pub fn max_abs_diff_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax()
}
