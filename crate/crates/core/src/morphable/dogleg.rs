//! Trust-region dogleg for nonlinear least squares `min ½‖r(x)‖²`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoglegConfig {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
    pub initial_radius: f64,
    /// Central-difference step for the numeric Jacobian.
    pub jacobian_step: f64,
}

impl Default for DoglegConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-8,
            step_tolerance: 1e-10,
            initial_radius: 1.0,
            jacobian_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Gradient,
    Step,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoglegReport {
    pub x: Vec<f64>,
    /// `‖r‖` at the returned point.
    pub residual_norm: f64,
    /// `‖r‖` at the start and after every accepted step.
    pub accepted: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
}

/// Central-difference Jacobian.
pub fn numeric_jacobian<F: Fn(&[f64]) -> Vec<f64>>(f: &F, x: &[f64], h: f64) -> DMatrix<f64> {
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, x.len());
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        let step = h * x[j].abs().max(1.0);
        xp[j] = x[j] + step;
        let fp = f(&xp);
        xp[j] = x[j] - step;
        let fm = f(&xp);
        xp[j] = x[j];
        for i in 0..m {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    jac
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Minimizes `½‖f(x)‖²`. Steps are accepted only when they reduce the
/// residual, so the accepted residual sequence never increases.
pub fn dogleg<F: Fn(&[f64]) -> Vec<f64>>(f: F, x0: &[f64], config: DoglegConfig) -> DoglegReport {
    let mut x = x0.to_vec();
    let mut r = DVector::from_vec(f(&x));
    let mut accepted = vec![r.norm()];
    let mut radius = config.initial_radius;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    let mut jac = numeric_jacobian(&f, &x, config.jacobian_step);
    while iterations < config.max_iterations {
        let g = jac.transpose() * &r;
        if g.amax() < config.gradient_tolerance {
            termination = Termination::Gradient;
            break;
        }
        iterations += 1;
        let svd = jac.clone().svd(true, true);
        let p_gn = -svd.solve(&r, 1e-12).unwrap_or_else(|_| DVector::zeros(x.len()));
        let jg = &jac * &g;
        let p_sd = -&g * (g.norm_squared() / jg.norm_squared().max(f64::MIN_POSITIVE));
        let step = if p_gn.norm() <= radius {
            p_gn.clone()
        } else if p_sd.norm() >= radius {
            -&g * (radius / g.norm())
        } else {
            let d = &p_gn - &p_sd;
            let (a, b, c) = (
                d.norm_squared(),
                2.0 * p_sd.dot(&d),
                p_sd.norm_squared() - radius * radius,
            );
            let tau = (-b + (b * b - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a);
            &p_sd + d * tau
        };
        let step_norm = step.norm();
        let x_norm = norm(&x);
        if step_norm < config.step_tolerance * (x_norm + config.step_tolerance) {
            termination = Termination::Step;
            break;
        }
        let predicted = 0.5 * r.norm_squared() - 0.5 * (&r + &jac * &step).norm_squared();
        let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        let r_trial = DVector::from_vec(f(&trial));
        let actual = 0.5 * r.norm_squared() - 0.5 * r_trial.norm_squared();
        let rho = if predicted > 0.0 { actual / predicted } else { -1.0 };
        if rho < 0.25 {
            radius *= 0.25;
        } else if rho > 0.75 {
            radius = radius.max(2.0 * step_norm);
        }
        if actual > 0.0 && rho > 0.0 {
            x = trial;
            r = r_trial;
            accepted.push(r.norm());
            jac = numeric_jacobian(&f, &x, config.jacobian_step);
        } else if radius < config.step_tolerance * (x_norm + config.step_tolerance) {
            termination = Termination::Step;
            break;
        }
    }
    DoglegReport {
        residual_norm: r.norm(),
        x,
        accepted,
        iterations,
        termination,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]];
        let rep = dogleg(f, &[-1.2, 1.0], DoglegConfig::default());
        assert!(
            (rep.x[0] - 1.0).abs() < 1e-8 && (rep.x[1] - 1.0).abs() < 1e-8,
            "{rep:?}"
        );
        for w in rep.accepted.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn linear_problem_in_one_step() {
        let f = |x: &[f64]| vec![2.0 * x[0] - 1.0, x[0] + x[1] - 3.0, x[1] - 2.5];
        let cfg = DoglegConfig {
            initial_radius: 100.0,
            ..DoglegConfig::default()
        };
        let rep = dogleg(f, &[0.0, 0.0], cfg);
        assert_eq!(rep.accepted.len(), 2);
    }

    #[test]
    fn fixed_point_takes_no_steps() {
        let f = |x: &[f64]| vec![x[0] - 2.0, x[1] + 1.0];
        let rep = dogleg(f, &[2.0, -1.0], DoglegConfig::default());
        assert_eq!(rep.iterations, 0);
        assert!(rep.residual_norm < 1e-10);
    }
}
