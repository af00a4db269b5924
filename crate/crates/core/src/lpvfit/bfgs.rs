//! Quasi-Newton (BFGS) minimization with Armijo backtracking.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Convergence threshold on the infinity norm of the gradient.
    pub grad_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsResult {
    pub x: DVector<f64>,
    pub f: f64,
    pub iterations: usize,
    /// Objective at the start and after every accepted step.
    pub history: Vec<f64>,
    pub converged: bool,
    /// Final inverse-Hessian approximation.
    pub h: DMatrix<f64>,
    pub evaluations: usize,
}

/// Minimizes `objective`, which returns the value and gradient at a point.
/// `h0` is the initial inverse-Hessian approximation.
pub fn minimize<F>(objective: F, x0: DVector<f64>, h0: DMatrix<f64>, opts: &BfgsOptions) -> BfgsResult
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>),
{
    let reset = h0.clone();
    minimize_from(objective, x0, h0, reset, opts)
}

/// [`minimize`] starting from the metric `h`; `reset` replaces it whenever
/// it stops producing descent directions.
pub fn minimize_from<F>(
    objective: F,
    x0: DVector<f64>,
    h: DMatrix<f64>,
    reset: DMatrix<f64>,
    opts: &BfgsOptions,
) -> BfgsResult
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>),
{
    const ARMIJO: f64 = 1e-4;
    let mut x = x0;
    let (mut f, mut g) = objective(&x);
    let mut evaluations = 1;
    let mut h = h;
    let mut history = vec![f];
    let mut converged = g.amax() <= opts.grad_tol;
    let mut iterations = 0;
    let mut flat_steps = 0;
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let mut p = -(&h * &g);
        let mut slope = g.dot(&p);
        if !(slope < 0.0) {
            h = reset.clone();
            p = -(&h * &g);
            slope = g.dot(&p);
            if !(slope < 0.0) {
                break;
            }
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + &p * step;
            let (ft, gt) = objective(&trial);
            evaluations += 1;
            if ft.is_finite() && ft <= f + ARMIJO * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            // minimizer of the quadratic through f, slope and ft, safeguarded
            let curvature = ft - f - slope * step;
            step = if ft.is_finite() && curvature > 0.0 {
                (-slope * step * step / (2.0 * curvature)).clamp(0.1 * step, 0.5 * step)
            } else {
                0.5 * step
            };
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            break;
        };
        let s = &x_new - &x;
        let yv = &g_new - &g;
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.norm() * yv.norm() {
            let rho = 1.0 / sy;
            let hy = &h * &yv;
            let yhy = yv.dot(&hy);
            // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ, expanded
            h += (&s * s.transpose()) * (rho * rho * yhy + rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        if f - f_new <= 1e-14 * f.abs() {
            flat_steps += 1;
        } else {
            flat_steps = 0;
        }
        x = x_new;
        f = f_new;
        g = g_new;
        history.push(f);
        converged = g.amax() <= opts.grad_tol;
        if flat_steps >= 5 {
            break;
        }
    }
    BfgsResult {
        x,
        f,
        iterations,
        history,
        converged,
        h,
        evaluations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &DVector<f64>| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = DVector::from_vec(vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ]);
            (v, g)
        };
        let r = minimize(
            f,
            DVector::from_vec(vec![-1.2, 1.0]),
            DMatrix::identity(2, 2),
            &BfgsOptions {
                max_iter: 500,
                grad_tol: 1e-8,
            },
        );
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn quadratic_with_exact_metric_converges_in_one_step() {
        let q = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let f = |x: &DVector<f64>| {
            (0.5 * x.dot(&(&q * x)) - b.dot(x), &q * x - &b)
        };
        let h0 = q.clone().try_inverse().unwrap();
        let r = minimize(f, DVector::zeros(2), h0, &BfgsOptions { max_iter: 50, grad_tol: 1e-12 });
        assert!(r.iterations <= 2);
    }
}
