//! Box-constrained quasi-Newton minimization with finite-difference gradients.
//!
//! Projected BFGS: the search direction is the inverse-Hessian step with
//! bound-active components frozen, followed by an Armijo backtracking search
//! along the projected path. Infeasible objective evaluations are reported as
//! `+∞` and simply rejected by the line search.

/// Tuning knobs for [`minimize`].
#[derive(Debug, Clone, Copy)]
pub struct OptOptions {
    pub max_iter: usize,
    /// Tolerance on the projected-gradient step `‖P(x − g) − x‖∞`.
    pub gtol: f64,
    /// Relative objective-change tolerance.
    pub ftol: f64,
    /// Relative finite-difference step.
    pub fd_step: f64,
}

impl Default for OptOptions {
    fn default() -> Self {
        OptOptions {
            max_iter: 200,
            gtol: 1e-6,
            ftol: 1e-12,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptOutcome {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
    pub line_search_failed: bool,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, &l), &h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(l, h);
    }
}

/// Central differences where both neighbours are inside the box, one-sided
/// otherwise.
fn gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], fx: f64, lo: &[f64], hi: &[f64], rel: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = rel * x[i].abs().max(1.0);
        let up = x[i] + h <= hi[i];
        let down = x[i] - h >= lo[i];
        let mut eval = |v: f64| {
            probe[i] = v;
            let out = f(&probe);
            probe[i] = x[i];
            out
        };
        let fp = if up { eval(x[i] + h) } else { f64::INFINITY };
        let fm = if down { eval(x[i] - h) } else { f64::INFINITY };
        g[i] = match (fp.is_finite(), fm.is_finite()) {
            (true, true) => (fp - fm) / (2.0 * h),
            (true, false) => (fp - fx) / h,
            (false, true) => (fx - fm) / h,
            (false, false) => 0.0,
        };
    }
    g
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` over the box `[lo, hi]` starting from `x0`.
pub fn minimize<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], lo: &[f64], hi: &[f64], opts: OptOptions) -> OptOutcome {
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let mut fx = f(&x);
    let identity = |h: &mut Vec<f64>| {
        h.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            h[i * n + i] = 1.0;
        }
    };
    let mut hinv = vec![0.0; n * n];
    identity(&mut hinv);
    let mut out = OptOutcome {
        x: x.clone(),
        fx,
        iterations: 0,
        converged: false,
        line_search_failed: false,
    };
    if !fx.is_finite() {
        out.line_search_failed = true;
        return out;
    }
    let mut g = gradient(&f, &x, fx, lo, hi, opts.fd_step);
    let mut fresh_h = true;
    for iter in 0..opts.max_iter {
        out.iterations = iter + 1;
        let mut step = x.clone();
        for i in 0..n {
            step[i] -= g[i];
        }
        project(&mut step, lo, hi);
        let pg = step.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if pg < opts.gtol {
            out.converged = true;
            break;
        }
        let active: Vec<bool> = (0..n).map(|i| (x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)).collect();
        let mut d: Vec<f64> = (0..n)
            .map(|i| if active[i] { 0.0 } else { -(0..n).map(|j| hinv[i * n + j] * g[j]).sum::<f64>() })
            .collect();
        if dot(&g, &d) >= 0.0 {
            identity(&mut hinv);
            fresh_h = true;
            d = (0..n).map(|i| if active[i] { 0.0 } else { -g[i] }).collect();
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            project(&mut xn, lo, hi);
            let fn_ = f(&xn);
            let decrease: f64 = g.iter().zip(xn.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
            if fn_.is_finite() && fn_ <= fx + 1e-4 * decrease {
                accepted = Some((xn, fn_));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fn_)) = accepted else {
            if fresh_h {
                out.line_search_failed = true;
                break;
            }
            identity(&mut hinv);
            fresh_h = true;
            continue;
        };

        let gn = gradient(&f, &xn, fn_, lo, hi, opts.fd_step);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| hinv[i * n + j] * y[j]).sum()).collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    hinv[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
            fresh_h = false;
        }
        let small_change = (fx - fn_).abs() <= opts.ftol * fx.abs().max(1.0);
        x = xn;
        fx = fn_;
        g = gn;
        if small_change {
            out.converged = true;
            break;
        }
    }
    out.x = x;
    out.fx = fx;
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_quadratic() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2) + x[0] * x[1];
        let r = minimize(f, &[0.0, 0.0], &[-10.0, -10.0], &[10.0, 10.0], OptOptions::default());
        assert!(r.converged);
        let gx = 2.0 * (r.x[0] - 1.0) + r.x[1];
        let gy = 20.0 * (r.x[1] + 2.0) + r.x[0];
        assert!(gx.abs() < 1e-5 && gy.abs() < 1e-5, "{:?}", r.x);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = minimize(f, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], OptOptions::default());
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r);
    }

    #[test]
    fn active_bound() {
        let f = |x: &[f64]| (x[0] + 3.0).powi(2) + (x[1] - 0.5).powi(2);
        let r = minimize(f, &[0.5, 0.0], &[-1.0, -1.0], &[1.0, 1.0], OptOptions::default());
        assert_eq!(r.x[0], -1.0);
        assert!((r.x[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn infeasible_region_avoided() {
        let f = |x: &[f64]| if x[0] > 0.8 { f64::INFINITY } else { (x[0] - 2.0).powi(2) };
        let r = minimize(f, &[0.0], &[-5.0], &[5.0], OptOptions::default());
        assert!(r.fx.is_finite());
        assert!(r.x[0] <= 0.8 && r.x[0] > 0.5);
    }

    #[test]
    fn infeasible_start_flagged() {
        let r = minimize(|_: &[f64]| f64::INFINITY, &[0.0], &[-1.0], &[1.0], OptOptions::default());
        assert!(r.line_search_failed);
    }
}
