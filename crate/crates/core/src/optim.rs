//! Quasi-Newton minimisation with finite-difference derivatives.

use nalgebra::{DMatrix, DVector};

/// Central-difference step for coordinate value `v`.
#[inline]
pub fn fd_step(v: f64) -> f64 {
    1e-6 * v.abs().max(1.0)
}

/// Finite-difference step rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FdStep {
    /// `h * max(1, |v|)`.
    Relative(f64),
    /// The same `h` for every coordinate; for problems already scaled to
    /// unit curvature.
    Absolute(f64),
}

impl FdStep {
    #[inline]
    pub fn at(self, v: f64) -> f64 {
        match self {
            FdStep::Relative(h) => h * v.abs().max(1.0),
            FdStep::Absolute(h) => h,
        }
    }
}

/// Central-difference gradient. Non-finite function values propagate as
/// non-finite gradient entries.
pub fn gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Vec<f64> {
    gradient_with(f, x, FdStep::Relative(1e-6))
}

pub fn gradient_with<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], step: FdStep) -> Vec<f64> {
    let mut xp = x.to_vec();
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        let h = step.at(x[i]);
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Hessian by central differences of the numerical gradient, symmetrised.
pub fn hessian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let s = fd_step(x[j]);
        xp[j] = x[j] + s;
        let gp = gradient(f, &xp);
        xp[j] = x[j] - s;
        let gm = gradient(f, &xp);
        xp[j] = x[j];
        for i in 0..n {
            h[(i, j)] = (gp[i] - gm[i]) / (2.0 * s);
        }
    }
    (&h + h.transpose()) * 0.5
}

/// Hessian from function values with per-coordinate steps `h`
/// (four-point cross differences, three-point on the diagonal).
pub fn hessian_steps<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], h: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let f0 = f(x);
    let mut m = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for i in 0..n {
        xp[i] = x[i] + h[i];
        let fp = f(&xp);
        xp[i] = x[i] - h[i];
        let fm = f(&xp);
        xp[i] = x[i];
        m[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| {
                xp[i] = x[i] + si * h[i];
                xp[j] = x[j] + sj * h[j];
                let v = f(&xp);
                xp[i] = x[i];
                xp[j] = x[j];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                / (4.0 * h[i] * h[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Coordinate scales `1 / sqrt(f_ii)` from a few rounds of diagonal second
/// differences, each round re-using the previous scale to size its step.
/// Coordinates with no usable curvature keep `max(1, |x_i|)`.
pub fn curvature_scales<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Vec<f64> {
    let f0 = f(x);
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let mut scale = x[i].abs().max(1.0);
            let mut h = 1e-4 * scale;
            for _ in 0..3 {
                xp[i] = x[i] + h;
                let fp = f(&xp);
                xp[i] = x[i] - h;
                let fm = f(&xp);
                xp[i] = x[i];
                let d2 = (fp - 2.0 * f0 + fm) / (h * h);
                if !(d2.is_finite() && d2 > 0.0) {
                    break;
                }
                scale = 1.0 / d2.sqrt();
                h = 1e-2 * scale;
            }
            scale
        })
        .collect()
}

/// Inverse of a symmetric matrix when it is positive definite.
/// Golden-section minimisation of a unimodal `f` on `[a, b]`; returns the
/// midpoint of the final bracket.
pub fn golden_section<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if b - a < tol {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    m.clone().cholesky().map(|c| c.inverse())
}

#[derive(Debug, Clone)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when half the Newton decrement `g' H g / 2` falls below this.
    pub decrement_tol: f64,
    /// Stop after two successive iterations improving `f` by less than
    /// `f_tol * (1 + |f|)`.
    pub f_tol: f64,
    /// Seed the inverse-Hessian approximation from a numerical Hessian.
    pub hessian_init: bool,
    pub step: FdStep,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            decrement_tol: 1e-8,
            f_tol: 1e-13,
            hessian_init: true,
            step: FdStep::Relative(1e-6),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
    pub message: String,
}

/// Minimises `f` from `x0` with BFGS and a backtracking Armijo line search.
/// `f` may return a non-finite value to mark an infeasible point.
pub fn minimize<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], opts: &BfgsOptions) -> OptimResult {
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f(x.as_slice());
    if !fx.is_finite() {
        return OptimResult {
            x: x0.to_vec(),
            f: fx,
            iterations: 0,
            converged: false,
            grad_norm: f64::NAN,
            message: "non-finite objective at the starting point".into(),
        };
    }
    let grad = |x: &[f64]| DVector::from_vec(gradient_with(f, x, opts.step));
    let mut g = grad(x.as_slice());
    let mut hinv = initial_inverse(f, x.as_slice(), &g, opts);
    let mut small_steps = 0;
    let mut message = String::from("maximum iterations reached");
    let mut converged = false;
    let mut iterations = 0;
    for iter in 0..opts.max_iter {
        iterations = iter + 1;
        if g.iter().any(|v| !v.is_finite()) {
            message = "non-finite gradient".into();
            break;
        }
        let mut p = -(&hinv * &g);
        let mut slope = g.dot(&p);
        if slope >= 0.0 || !slope.is_finite() {
            // lost descent: restart from a scaled identity
            hinv = DMatrix::identity(n, n) * (1.0 / g.norm().max(1e-300));
            p = -(&hinv * &g);
            slope = g.dot(&p);
        }
        let decrement = -0.5 * slope;
        if decrement < opts.decrement_tol {
            converged = true;
            message = "Newton decrement below tolerance".into();
            break;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn = &x + &p * t;
            let fxn = f(xn.as_slice());
            if fxn.is_finite() && fxn <= fx + 1e-4 * t * slope {
                accepted = Some((xn, fxn));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fxn)) = accepted else {
            // the quadratic model is no longer informative at this precision
            converged = decrement < 1e3 * opts.decrement_tol;
            message = "line search failed to decrease the objective".into();
            break;
        };
        let gn = grad(xn.as_slice());
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() && sy.is_finite() {
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            // H+ = H - rho (s hy' + hy s') + (rho^2 y'Hy + rho) s s'
            hinv -= (&s * hy.transpose() + &hy * s.transpose()) * rho;
            hinv += (&s * s.transpose()) * (rho * rho * yhy + rho);
        }
        let improvement = fx - fxn;
        x = xn;
        fx = fxn;
        g = gn;
        if improvement < opts.f_tol * (1.0 + fx.abs()) {
            small_steps += 1;
            if small_steps >= 2 {
                converged = true;
                message = "relative improvement below tolerance".into();
                break;
            }
        } else {
            small_steps = 0;
        }
    }
    OptimResult {
        x: x.as_slice().to_vec(),
        f: fx,
        iterations,
        converged,
        grad_norm: g.norm(),
        message,
    }
}

fn initial_inverse<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], g: &DVector<f64>, opts: &BfgsOptions) -> DMatrix<f64> {
    let n = x.len();
    if opts.hessian_init {
        let h = match opts.step {
            FdStep::Relative(_) => hessian(f, x),
            FdStep::Absolute(a) => hessian_steps(f, x, &vec![100.0 * a; n]),
        };
        if let Some(inv) = spd_inverse(&h) {
            return inv;
        }
        // fall back to the diagonal where it is usable
        let diag: Vec<f64> = (0..n)
            .map(|i| {
                let d = h[(i, i)];
                if d.is_finite() && d > 0.0 {
                    1.0 / d
                } else {
                    1e-4
                }
            })
            .collect();
        return DMatrix::from_diagonal(&DVector::from_vec(diag));
    }
    DMatrix::identity(n, n) * (1.0 / g.norm().max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_of_quadratic() {
        let f = |x: &[f64]| 3.0 * x[0] * x[0] + x[0] * x[1] - 2.0 * x[1];
        let g = gradient(&f, &[1.0, 2.0]);
        assert!((g[0] - 8.0).abs() < 1e-6);
        assert!((g[1] - -1.0).abs() < 1e-6);
        let h = hessian(&f, &[1.0, 2.0]);
        assert!((h[(0, 0)] - 6.0).abs() < 1e-3);
        assert!((h[(0, 1)] - 1.0).abs() < 1e-3);
        assert!(h[(1, 1)].abs() < 1e-3);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = minimize(&f, &[-1.2, 1.0], &BfgsOptions::default());
        assert!(r.converged, "{}", r.message);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn badly_scaled_quadratic() {
        // curvatures 1e12 and 1: the Hessian seed removes the scaling
        let f = |x: &[f64]| 0.5e12 * (x[0] - 1e-6).powi(2) + 0.5 * (x[1] + 3.0).powi(2);
        let r = minimize(&f, &[0.0, 0.0], &BfgsOptions::default());
        assert!(r.converged);
        assert!((r.x[0] - 1e-6).abs() < 1e-10 && (r.x[1] + 3.0).abs() < 1e-5);
    }

    #[test]
    fn scaled_hessian_of_stiff_quadratic() {
        // curvatures differ by 1e14; relative steps cannot resolve the small one
        let f = |x: &[f64]| 1e4 + 0.5e10 * x[0] * x[0] + 0.5e-4 * x[1] * x[1] + 1e3 * x[0] * x[1] * 1e-3;
        let x = [1e-3, 20.0];
        let s = curvature_scales(&f, &x);
        assert!((s[0] - 1e-5).abs() < 1e-9 && (s[1] - 100.0).abs() < 1e-2, "{s:?}");
        let h: Vec<f64> = s.iter().map(|v| 1e-2 * v).collect();
        let m = hessian_steps(&f, &x, &h);
        assert!((m[(0, 0)] / 1e10 - 1.0).abs() < 1e-6);
        assert!((m[(1, 1)] / 1e-4 - 1.0).abs() < 1e-4, "{}", m[(1, 1)]);
        assert!((m[(0, 1)] - 1.0).abs() < 1e-4, "{}", m[(0, 1)]);
    }

    #[test]
    fn infeasible_region_is_avoided() {
        let f = |x: &[f64]| if x[0] <= 0.0 { f64::INFINITY } else { x[0] - x[0].ln() };
        let r = minimize(&f, &[5.0], &BfgsOptions::default());
        assert!((r.x[0] - 1.0).abs() < 1e-3);
        let bad = minimize(&f, &[-1.0], &BfgsOptions::default());
        assert!(!bad.converged && bad.iterations == 0);
    }
}
