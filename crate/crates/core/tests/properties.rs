//! Property tests over randomly generated inputs.

mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrom::cli::csv::{format_real, Table};
use statrom::cli::ExperimentConfig;
use statrom::inference::condition_statrom;
use statrom::linalg::{lu_factor, orthonormal_extend, sym_eig, CsrMatrix, SolveMode, DEFLATION_TOL};
use statrom::mesh::{build_interval_mesh, build_scatterer_mesh, interpolation_matrix, locate, Point};
use statrom::stochastic::{kernel_matrix, kl_build, sobol_gaussian, KernelSpec};
use statrom::C64;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn complex_vector(n: usize, r: &mut ChaCha8Rng) -> DVector<C64> {
    DVector::from_fn(n, |_, _| C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)))
}

/// Banded complex matrix with a dominant diagonal of random sign.
fn banded(n: usize, r: &mut ChaCha8Rng) -> CsrMatrix<C64> {
    let mut t = Vec::new();
    for i in 0..n {
        for j in i.saturating_sub(2)..(i + 3).min(n) {
            let v = C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
            let v = if i == j { v + C64::new(if r.gen_bool(0.5) { 6.0 } else { -6.0 }, 0.0) } else { v };
            t.push((i, j, v));
        }
    }
    CsrMatrix::from_triplets(n, n, t)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lu_residual_is_small(seed in any::<u64>(), n in 1usize..40) {
        let mut r = rng(seed);
        let a = banded(n, &mut r);
        let b = complex_vector(n, &mut r);
        let lu = lu_factor(&a).unwrap();
        let dense = a.to_dense();
        let x = lu.solve(&b, SolveMode::Direct).unwrap();
        prop_assert!((&dense * &x - &b).norm() <= 1e-10 * b.norm());
        let y = lu.solve(&b, SolveMode::Adjoint).unwrap();
        prop_assert!((dense.adjoint() * &y - &b).norm() <= 1e-10 * b.norm());
    }

    #[test]
    fn extended_basis_stays_orthonormal(seed in any::<u64>(), n in 2usize..30) {
        let mut r = rng(seed);
        let mut basis: Vec<DVector<C64>> = Vec::new();
        for _ in 0..n + 3 {
            // Every third candidate lies in the current span.
            let w = if basis.len() > 1 && r.gen_bool(0.3) {
                &basis[0] * C64::new(0.3, -1.0) + &basis[basis.len() - 1] * C64::new(2.0, 0.5)
            } else {
                complex_vector(n, &mut r)
            };
            if let Some((v, _)) = orthonormal_extend(&basis, &w, DEFLATION_TOL) {
                prop_assert!((v.norm() - 1.0).abs() <= 1e-12);
                for b in &basis {
                    prop_assert!(b.dotc(&v).norm() <= 1e-12);
                }
                basis.push(v);
            }
        }
        prop_assert!(basis.len() <= n);
    }

    #[test]
    fn eigendecomposition_reconstructs(seed in any::<u64>(), n in 1usize..80) {
        let mut r = rng(seed);
        let a = DMatrix::from_fn(n, n, |_, _| r.gen_range(-1.0..1.0));
        let c = &a + a.transpose();
        let eig = sym_eig(&c).unwrap();
        let rebuilt = &eig.vectors * DMatrix::from_diagonal(&eig.values) * eig.vectors.transpose();
        prop_assert!((rebuilt - &c).norm() <= 1e-10 * c.norm().max(f64::MIN_POSITIVE));
        prop_assert!(eig.values.as_slice().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn large_eigendecomposition_reconstructs(seed in any::<u64>(), n in 80usize..=200) {
        let mut r = rng(seed);
        let a = DMatrix::from_fn(n, n, |_, _| r.gen_range(-1.0..1.0));
        let c = &a * a.transpose();
        let eig = sym_eig(&c).unwrap();
        let rebuilt = &eig.vectors * DMatrix::from_diagonal(&eig.values) * eig.vectors.transpose();
        prop_assert!((rebuilt - &c).norm() <= 1e-10 * c.norm());
    }

    #[test]
    fn interval_mesh_is_uniform(n in 1usize..2000, length in 1e-3f64..1e3) {
        let mesh = build_interval_mesh(n, length).unwrap();
        let xs: Vec<f64> = mesh.nodes().iter().map(|p| p[0]).collect();
        let gaps: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let (lo, hi) = gaps.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &g| (a.min(g), b.max(g)));
        prop_assert!(hi - lo <= 1e-14 * length);
        prop_assert_eq!(xs[n], length);
    }

    #[test]
    fn interpolation_rows_sum_to_one(seed in any::<u64>()) {
        let mesh = build_scatterer_mesh(1.0, [0.5, 0.5], 0.2, 0.1).unwrap();
        let mut r = rng(seed);
        let mut points: Vec<Point> = Vec::new();
        while points.len() < 20 {
            let p = [r.gen_range(0.0..1.0), r.gen_range(0.0..1.0)];
            if locate(&mesh, &p).is_some() {
                points.push(p);
            }
        }
        let p = interpolation_matrix(&mesh, &points).unwrap().to_dense();
        for row in p.row_iter() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn matern_is_monotone(nu in prop::sample::select(vec![0.5, 1.5, 2.5, 0.8, 3.7]), ell in 0.05f64..2.0, r0 in 0.0f64..3.0, dr in 0.0f64..1.0) {
        let spec = KernelSpec::new(nu, 1.3, ell).unwrap();
        prop_assert!(spec.eval(r0 + dr) <= spec.eval(r0) * (1.0 + 1e-12));
    }

    #[test]
    fn full_kl_reproduces_covariance(n in 4usize..60, ell in 0.05f64..1.0) {
        let mesh = build_interval_mesh(n, 1.0).unwrap();
        let spec = KernelSpec::new(0.5, 0.7, ell).unwrap();
        let kl = kl_build(&mesh, &DVector::zeros(n + 1), &spec, 1.0).unwrap();
        let rebuilt = &kl.modes * DMatrix::from_diagonal(&kl.lambdas) * kl.modes.transpose();
        let c = kernel_matrix(mesh.nodes(), &spec);
        prop_assert!((rebuilt - &c).norm() <= 1e-8 * c.norm());
    }

    #[test]
    fn qmc_inputs_are_reproducible(dim in 1usize..40, n in 1usize..300, seed in any::<u64>()) {
        prop_assert_eq!(sobol_gaussian(dim, n, seed).unwrap(), sobol_gaussian(dim, n, seed).unwrap());
    }

    #[test]
    fn conditioning_matches_oracle(seed in any::<u64>(), with_error in any::<bool>()) {
        let inst = common::random_instance(&mut rng(seed), with_error);
        let (mean, cov) = common::posterior(&inst);
        let post = condition_statrom(&inst.prior, inst.error.as_ref(), &inst.data, &inst.hp, &inst.c_d).unwrap();
        prop_assert!(common::max_abs_diff_vec(&post.mean, &mean) <= 1e-10);
        prop_assert!(common::max_abs_diff(&post.cov, &cov) <= 1e-10);
        for i in 0..cov.nrows() {
            prop_assert!(post.cov[(i, i)] <= inst.prior.cov[(i, i)] + 1e-10);
        }
    }

    #[test]
    fn real_cells_round_trip(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        let text = format!("x\n{}\n", format_real(v));
        prop_assert_eq!(Table::parse(&text).unwrap().rows[0][0], v);
    }

    #[test]
    fn overrides_replace_file_values(m in 1usize..40, seed in any::<u64>(), sigma_e in 0.0f64..1.0) {
        let args: Vec<String> = vec!["--m".into(), m.to_string(), "--seed".into(), seed.to_string(), format!("--sigma_e={sigma_e:e}")];
        let cfg = ExperimentConfig::parse("[rom]\nm = 3\n[data]\nseed = 1\nsigma_e = 0.5\n", &args).unwrap();
        prop_assert_eq!(cfg.problem.m, m);
        prop_assert_eq!(cfg.problem.seed, seed);
        prop_assert_eq!(cfg.problem.sigma_e, sigma_e);
    }
}
