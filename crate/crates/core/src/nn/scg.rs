//! Scaled conjugate gradient (Møller) over a flat parameter vector.
//!
//! No line search: a Levenberg-Marquardt style scale `lambda` regulates the
//! curvature estimate taken from a finite difference of gradients along the
//! search direction. Only steps that do not increase the loss are accepted.

use crate::error::{Error, Result};
use crate::scalar::{all_finite, dot, Scalar};

/// A differentiable scalar loss over a parameter vector.
pub trait Objective<T: Scalar> {
    fn loss(&self, params: &[T]) -> T;
    fn loss_grad(&self, params: &[T]) -> (T, Vec<T>);
}

/// Adapts a closure returning `(loss, gradient)` into an [`Objective`].
pub struct FnObjective<F>(pub F);

impl<T: Scalar, F: Fn(&[T]) -> (T, Vec<T>)> Objective<T> for FnObjective<F> {
    fn loss(&self, params: &[T]) -> T {
        (self.0)(params).0
    }

    fn loss_grad(&self, params: &[T]) -> (T, Vec<T>) {
        (self.0)(params)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ScgConfig<T> {
    /// Base step for the curvature finite difference.
    pub sigma: T,
    pub lambda_init: T,
    pub lambda_min: T,
    pub lambda_max: T,
}

impl<T: Scalar> Default for ScgConfig<T> {
    fn default() -> Self {
        Self {
            sigma: T::lit(1e-4),
            lambda_init: T::lit(1e-6),
            lambda_min: T::lit(1e-15),
            lambda_max: T::lit(1e15),
        }
    }
}

/// Optimizer state that persists across calls (online training).
///
/// Every call restarts the search direction from steepest descent at the
/// current parameters, because the objective (a replay batch) usually
/// changes between calls; the scale `lambda` carries over.
#[derive(Debug, Clone)]
pub struct TrainState<T> {
    pub config: ScgConfig<T>,
    pub lambda: T,
    pub lambda_bar: T,
    pub success: bool,
    pub direction: Vec<T>,
    pub gradient: Vec<T>,
    pub iterations: usize,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(n_params: usize) -> Self {
        Self::with_config(n_params, ScgConfig::default())
    }

    pub fn with_config(n_params: usize, config: ScgConfig<T>) -> Self {
        Self {
            config,
            lambda: config.lambda_init,
            lambda_bar: T::zero(),
            success: true,
            direction: vec![T::zero(); n_params],
            gradient: vec![T::zero(); n_params],
            iterations: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScgReport<T> {
    pub initial_loss: T,
    pub final_loss: T,
    pub iterations: usize,
    pub accepted: usize,
    /// Gradient vanished before `max_iters` was reached.
    pub converged: bool,
}

/// Runs up to `max_iters` SCG iterations on `params`.
///
/// On a non-finite loss or gradient the parameters are left at the last
/// accepted point and [`Error::Diverged`] is returned.
pub fn scg_minimize<T: Scalar, O: Objective<T> + ?Sized>(
    params: &mut [T],
    objective: &O,
    state: &mut TrainState<T>,
    max_iters: usize,
) -> Result<ScgReport<T>> {
    let n = params.len();
    if state.direction.len() != n {
        *state = TrainState::with_config(n, state.config);
    }
    let two = T::lit(2.0);
    let cfg = state.config;

    let (mut loss, grad) = objective.loss_grad(params);
    if !loss.is_finite() || !all_finite(&grad) {
        return Err(Error::Diverged("non-finite loss at start".into()));
    }
    let mut r: Vec<T> = grad.iter().map(|&g| -g).collect();
    let mut p = r.clone();
    state.success = true;
    state.lambda_bar = T::zero();
    let mut lambda = state.lambda;
    let mut lambda_bar = T::zero();
    let mut success = true;
    let mut delta = T::zero();
    let initial_loss = loss;
    let mut accepted = 0usize;
    let mut iterations = 0usize;
    let mut converged = false;
    let mut trial = vec![T::zero(); n];

    while iterations < max_iters {
        let p_norm2 = dot(&p, &p);
        if p_norm2 == T::zero() || dot(&r, &r) == T::zero() {
            converged = true;
            break;
        }
        iterations += 1;
        if success {
            let sigma_k = cfg.sigma / p_norm2.sqrt();
            for i in 0..n {
                trial[i] = params[i] + sigma_k * p[i];
            }
            let (_, g_plus) = objective.loss_grad(&trial);
            if !all_finite(&g_plus) {
                state.lambda = lambda;
                return Err(Error::Diverged("non-finite gradient in curvature probe".into()));
            }
            // s = (E'(w + sigma p) - E'(w)) / sigma with E'(w) = -r
            delta = (0..n)
                .map(|i| p[i] * (g_plus[i] + r[i]))
                .sum::<T>()
                / sigma_k;
        }
        delta = delta + (lambda - lambda_bar) * p_norm2;
        if delta <= T::zero() {
            lambda_bar = two * (lambda - delta / p_norm2);
            delta = -delta + lambda * p_norm2;
            lambda = lambda_bar;
        }
        let mu = dot(&p, &r);
        if mu <= T::zero() {
            // Not a descent direction any more; restart.
            p.clone_from(&r);
            success = true;
            lambda_bar = T::zero();
            continue;
        }
        let alpha = mu / delta;
        for i in 0..n {
            trial[i] = params[i] + alpha * p[i];
        }
        let (new_loss, new_grad) = objective.loss_grad(&trial);
        if !new_loss.is_finite() || !all_finite(&new_grad) {
            state.lambda = lambda;
            return Err(Error::Diverged("non-finite loss after step".into()));
        }
        let comparison = two * delta * (loss - new_loss) / (mu * mu);
        if comparison >= T::zero() {
            params.copy_from_slice(&trial);
            loss = new_loss;
            let r_new: Vec<T> = new_grad.iter().map(|&g| -g).collect();
            lambda_bar = T::zero();
            success = true;
            accepted += 1;
            if accepted.is_multiple_of(n) {
                p.clone_from(&r_new);
            } else {
                let beta = (dot(&r_new, &r_new) - dot(&r_new, &r)) / mu;
                for i in 0..n {
                    p[i] = r_new[i] + beta * p[i];
                }
            }
            r = r_new;
            if comparison >= T::lit(0.75) {
                lambda = (lambda / two).max(cfg.lambda_min);
            }
        } else {
            lambda_bar = lambda;
            success = false;
        }
        if comparison < T::lit(0.25) {
            lambda = (lambda + delta * (T::one() - comparison) / p_norm2).min(cfg.lambda_max);
        }
    }

    state.lambda = lambda;
    state.lambda_bar = lambda_bar;
    state.success = success;
    state.direction = p;
    state.gradient = r.iter().map(|&v| -v).collect();
    state.iterations += iterations;
    Ok(ScgReport {
        initial_loss,
        final_loss: loss,
        iterations,
        accepted,
        converged,
    })
}
