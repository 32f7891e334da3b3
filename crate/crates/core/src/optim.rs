//! Small dense quasi-Newton minimizer used by the constrained fits.
//!
//! All shape-constrained estimation in this crate reparameterizes the
//! constraints away (ordered sequences become a base value plus positive
//! increments), so an unconstrained BFGS with a backtracking line search is
//! all that is needed. Gradients may be supplied analytically; otherwise
//! central differences are used.

/// Convergence and iteration controls for [`minimize`].
#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iters: usize,
    /// Stop when the sup-norm of the gradient falls below this.
    pub grad_tol: f64,
    /// Stop when the relative objective decrease over an iteration falls
    /// below this.
    pub f_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-9,
            f_tol: 1e-14,
        }
    }
}

/// Outcome of a [`minimize`] run. `converged` is false only when the
/// iteration budget was exhausted while the gradient was still large.
#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Central-difference gradient with per-coordinate step scaled to the
/// coordinate magnitude.
pub fn central_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = 6e-6 * x[i].abs().max(1.0);
        let xi = x[i];
        xp[i] = xi + h;
        let fp = f(&xp);
        xp[i] = xi - h;
        let fm = f(&xp);
        xp[i] = xi;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Minimize `f` starting from `x0` with BFGS and an Armijo backtracking
/// line search. `grad` falls back to central differences when `None`.
pub fn minimize<F: Fn(&[f64]) -> f64>(
    f: F,
    grad: Option<&dyn Fn(&[f64]) -> Vec<f64>>,
    x0: &[f64],
    opts: &BfgsOptions,
) -> BfgsResult {
    let n = x0.len();
    let eval_grad = |x: &[f64]| -> Vec<f64> {
        match grad {
            Some(g) => g(x),
            None => central_gradient(&f, x),
        }
    };

    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut g = eval_grad(&x);
    // Inverse Hessian approximation, row-major, starts at identity.
    let mut h_inv = identity(n);
    let mut iterations = 0;

    for iter in 0..opts.max_iters {
        iterations = iter + 1;
        let g_norm = sup_norm(&g);
        if g_norm < opts.grad_tol {
            return BfgsResult {
                x,
                value: fx,
                grad_norm: g_norm,
                iterations,
                converged: true,
            };
        }

        // Search direction d = -H g.
        let mut d = vec![0.0; n];
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += h_inv[i * n + j] * g[j];
            }
            d[i] = -s;
        }
        let mut dir_deriv: f64 = d.iter().zip(&g).map(|(di, gi)| di * gi).sum();
        if !dir_deriv.is_finite() || dir_deriv >= 0.0 {
            // Lost curvature information; restart from steepest descent.
            h_inv = identity(n);
            for i in 0..n {
                d[i] = -g[i];
            }
            dir_deriv = -g.iter().map(|gi| gi * gi).sum::<f64>();
            if dir_deriv == 0.0 {
                break;
            }
        }

        // Backtracking Armijo search.
        let mut t = 1.0;
        let c1 = 1e-4;
        let mut x_new = vec![0.0; n];
        let mut f_new = fx;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + t * d[i];
            }
            f_new = f(&x_new);
            if f_new.is_finite() && f_new <= fx + c1 * t * dir_deriv {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No further progress possible along this direction.
            return BfgsResult {
                x,
                value: fx,
                grad_norm: g_norm,
                iterations,
                converged: true,
            };
        }

        let g_new = eval_grad(&x_new);
        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
        let sy: f64 = s.iter().zip(&y).map(|(si, yi)| si * yi).sum();
        let s_norm = sup_norm(&s);
        let y_norm = sup_norm(&y);
        if sy > 1e-12 * s_norm.max(1e-300) * y_norm.max(1e-300) && sy.is_finite() {
            bfgs_update(&mut h_inv, &s, &y, sy);
        }

        let f_drop = fx - f_new;
        x = x_new;
        g = g_new;
        let f_prev = fx;
        fx = f_new;
        if f_drop.abs() <= opts.f_tol * f_prev.abs().max(1.0) && sup_norm(&g) < 1e-5 {
            return BfgsResult {
                x,
                value: fx,
                grad_norm: sup_norm(&g),
                iterations,
                converged: true,
            };
        }
    }

    let grad_norm = sup_norm(&g);
    BfgsResult {
        converged: grad_norm < 1e-4,
        x,
        value: fx,
        grad_norm,
        iterations,
    }
}

/// Run [`minimize`] from several starts and keep the best finite result
/// (ties broken by start order).
pub fn minimize_multistart<F: Fn(&[f64]) -> f64>(
    f: F,
    grad: Option<&dyn Fn(&[f64]) -> Vec<f64>>,
    starts: &[Vec<f64>],
    opts: &BfgsOptions,
) -> Option<BfgsResult> {
    let mut best: Option<BfgsResult> = None;
    for start in starts {
        let res = minimize(&f, grad, start, opts);
        if !res.value.is_finite() {
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => res.value < b.value,
        };
        if better {
            best = Some(res);
        }
    }
    best
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// BFGS inverse-Hessian update:
/// H <- (I - s y'/sy) H (I - y s'/sy) + s s'/sy.
fn bfgs_update(h_inv: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    // hy = H y
    let mut hy = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            acc += h_inv[i * n + j] * y[j];
        }
        hy[i] = acc;
    }
    let yhy: f64 = y.iter().zip(&hy).map(|(yi, hyi)| yi * hyi).sum();
    for i in 0..n {
        for j in 0..n {
            h_inv[i * n + j] += -rho * (s[i] * hy[j] + hy[i] * s[j])
                + rho * rho * yhy * s[i] * s[j]
                + rho * s[i] * s[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quadratic_bowl() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + 10.0 * (x[1] + 1.0).powi(2);
        let res = minimize(f, None, &[0.0, 0.0], &BfgsOptions::default());
        assert!(res.converged);
        assert_abs_diff_eq!(res.x[0], 3.0, epsilon = 1e-7);
        assert_abs_diff_eq!(res.x[1], -1.0, epsilon = 1e-7);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| {
            let a = 1.0 - x[0];
            let b = x[1] - x[0] * x[0];
            a * a + 100.0 * b * b
        };
        let res = minimize(
            f,
            None,
            &[-1.2, 1.0],
            &BfgsOptions {
                max_iters: 2000,
                ..Default::default()
            },
        );
        assert_abs_diff_eq!(res.x[0], 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(res.x[1], 1.0, epsilon = 1e-5);
    }

    #[test]
    fn analytic_gradient_matches_fd() {
        let f = |x: &[f64]| x[0].powi(4) + x[0] * x[1] + (x[1] - 2.0).powi(2);
        let g = |x: &[f64]| vec![4.0 * x[0].powi(3) + x[1], x[0] + 2.0 * (x[1] - 2.0)];
        let fd = central_gradient(&f, &[0.7, -0.3]);
        let an = g(&[0.7, -0.3]);
        assert_abs_diff_eq!(fd[0], an[0], epsilon = 1e-8);
        assert_abs_diff_eq!(fd[1], an[1], epsilon = 1e-8);

        let with_grad = minimize(f, Some(&g), &[5.0, 5.0], &BfgsOptions::default());
        let without = minimize(f, None, &[5.0, 5.0], &BfgsOptions::default());
        assert_abs_diff_eq!(with_grad.value, without.value, epsilon = 1e-9);
    }

    #[test]
    fn multistart_picks_lower_basin() {
        // Double well along x: minima near x = ±1 with different depths.
        let f = |x: &[f64]| (x[0] * x[0] - 1.0).powi(2) + 0.3 * x[0] + x[1] * x[1];
        let starts = vec![vec![1.0, 0.5], vec![-1.0, 0.5]];
        let best = minimize_multistart(f, None, &starts, &BfgsOptions::default()).unwrap();
        assert!(best.x[0] < 0.0, "deeper well is at negative x");
    }
}
