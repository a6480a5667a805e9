//! Deterministic comparison controller: an MLP forward model fitted by
//! squared error and an MLP controller trained through it by indirect
//! adaptive control, minimizing `(y_hat - y_d)^2 + Q u^2`.

use rand::Rng;

use crate::control_law::ControlBounds;
use crate::dual::{layer_sizes, ForwardSample, StateVector};
use crate::error::{check_dim, Result};
use crate::nn::{scg_minimize, FnObjective, Network, TrainState};
use crate::scalar::Scalar;

/// A `(z, y_d)` pair the controller should serve.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingSample<T> {
    pub state: Vec<T>,
    pub y_d: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselinePair<T> {
    pub forward: Network<T>,
    pub controller: Network<T>,
    pub q: T,
    lags: (usize, usize),
}

impl<T: Scalar> BaselinePair<T> {
    pub fn new(forward: Network<T>, controller: Network<T>, q: T, lags: (usize, usize)) -> Result<Self> {
        let d = lags.0 + lags.1 + 1;
        check_dim("baseline forward input", d, forward.input_dim())?;
        check_dim("baseline forward output", 1, forward.output_dim())?;
        check_dim("baseline controller input", d, controller.input_dim())?;
        check_dim("baseline controller output", 1, controller.output_dim())?;
        Ok(Self {
            forward,
            controller,
            q,
            lags,
        })
    }

    pub fn init<R: Rng + ?Sized>(
        lags: (usize, usize),
        hidden: &[usize],
        q: T,
        rng: &mut R,
    ) -> Result<Self> {
        let sizes = layer_sizes(lags.0 + lags.1 + 1, hidden, 1);
        let forward = Network::init(&sizes, rng)?;
        let controller = Network::init(&sizes, rng)?;
        Self::new(forward, controller, q, lags)
    }

    pub fn lags(&self) -> (usize, usize) {
        self.lags
    }

    pub fn predict(&self, z: &StateVector<T>, u: T) -> Result<T> {
        Ok(self.forward.forward(&z.with(u))?[0])
    }

    /// Controller output saturated to `bounds`.
    pub fn control(&self, z: &StateVector<T>, y_d: T, bounds: ControlBounds<T>) -> Result<T> {
        Ok(bounds.clamp(self.controller.forward(&z.with(y_d))?[0]))
    }

    pub fn forward_loss_grad(&self, params: &[T], batch: &[ForwardSample<T>]) -> (T, Vec<T>) {
        self.forward.view_with(params).batch_loss_grad(
            batch.iter().map(|s| s.input.as_slice()),
            |i, out| {
                let r = out[0] - batch[i].target;
                Some((r * r, vec![r + r]))
            },
        )
    }

    /// SCG on the mean squared prediction error.
    pub fn train_forward(
        &mut self,
        batch: &[ForwardSample<T>],
        state: &mut TrainState<T>,
        iters: usize,
    ) -> Result<T> {
        let mut params = self.forward.params().to_vec();
        let objective = FnObjective(|p: &[T]| self.forward_loss_grad(p, batch));
        let report = scg_minimize(&mut params, &objective, state, iters)?;
        self.forward.set_params(&params)?;
        Ok(report.final_loss)
    }

    /// Tracking cost of one sample and its gradient at the controller output,
    /// chained through the frozen forward network.
    fn tracking_term(&self, sample: &TrackingSample<T>, u: T) -> Option<(T, T)> {
        let mut x = sample.state.clone();
        x.push(u);
        let y_hat = self.forward.forward(&x).ok()?[0];
        let r = y_hat - sample.y_d;
        let dy_du = *self.forward.grad_input(&x, &[r + r]).ok()?.last()?;
        Some((r * r + self.q * u * u, dy_du + T::lit(2.0) * self.q * u))
    }

    pub fn controller_loss_grad(&self, params: &[T], batch: &[TrackingSample<T>]) -> (T, Vec<T>) {
        let inputs: Vec<Vec<T>> = batch
            .iter()
            .map(|s| {
                let mut x = s.state.clone();
                x.push(s.y_d);
                x
            })
            .collect();
        self.controller.view_with(params).batch_loss_grad(
            inputs.iter().map(Vec::as_slice),
            |i, out| {
                let (loss, de_du) = self.tracking_term(&batch[i], out[0])?;
                Some((loss, vec![de_du]))
            },
        )
    }

    /// SCG on the mean tracking cost; the forward network is not modified.
    pub fn train_controller(
        &mut self,
        batch: &[TrackingSample<T>],
        state: &mut TrainState<T>,
        iters: usize,
    ) -> Result<T> {
        let mut params = self.controller.params().to_vec();
        let objective = FnObjective(|p: &[T]| self.controller_loss_grad(p, batch));
        let report = scg_minimize(&mut params, &objective, state, iters)?;
        self.controller.set_params(&params)?;
        Ok(report.final_loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_controller_outputs_zero_and_saturates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut bp = BaselinePair::<f64>::init((1, 0), &[4], 0.01, &mut rng).unwrap();
        let z = StateVector::new(vec![0.3], vec![]).unwrap();
        let bounds = ControlBounds::new(-5.0, 5.0).unwrap();
        bp.controller = Network::zeros(&[2, 4, 1]).unwrap();
        assert_eq!(bp.control(&z, 1.0, bounds).unwrap(), 0.0);
        let n = bp.controller.params().len();
        bp.controller.params_mut()[n - 1] = 9.0;
        assert_eq!(bp.control(&z, 1.0, bounds).unwrap(), 5.0);
        bp.controller.params_mut()[n - 1] = -9.0;
        assert_eq!(bp.control(&z, 1.0, bounds).unwrap(), -5.0);
    }

    #[test]
    fn perfect_prediction_has_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let bp = BaselinePair::<f64>::init((1, 0), &[3], 0.01, &mut rng).unwrap();
        let x = vec![0.2, -0.4];
        let y = bp.forward.forward(&x).unwrap()[0];
        let (loss, g) = bp.forward_loss_grad(bp.forward.params(), &[ForwardSample { input: x, target: y }]);
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stationary_tracking_point_has_zero_controller_gradient() {
        // zero controller (u = 0) and a forward model whose prediction equals y_d
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut bp = BaselinePair::<f64>::init((1, 0), &[3], 0.01, &mut rng).unwrap();
        bp.controller = Network::zeros(&[2, 3, 1]).unwrap();
        let z = vec![0.5];
        let y_hat = bp.forward.forward(&[0.5, 0.0]).unwrap()[0];
        let (_, g) = bp.controller_loss_grad(
            bp.controller.params(),
            &[TrackingSample { state: z, y_d: y_hat }],
        );
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn controller_training_keeps_forward_fixed_and_reduces_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut bp = BaselinePair::<f64>::init((1, 0), &[5], 0.01, &mut rng).unwrap();
        let fwd = bp.forward.clone();
        let batch: Vec<_> = (0..20)
            .map(|i| TrackingSample { state: vec![0.1 * i as f64 - 1.0], y_d: 0.05 * i as f64 })
            .collect();
        let mut state = TrainState::new(bp.controller.params().len());
        let before = bp.controller_loss_grad(bp.controller.params(), &batch).0;
        let after = bp.train_controller(&batch, &mut state, 20).unwrap();
        assert!(after <= before);
        assert_eq!(bp.forward, fwd);
    }
}
