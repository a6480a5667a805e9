//! The coupled forward model / inverse controller pair.
//!
//! The forward model maps `(z, u)` to a mixture over the next plant output.
//! The inverse controller maps `(z, y_d)` to kernel centres and variances
//! over the control input; its priors are not learned but supplied by the
//! forward model, so that inverse kernel `i` is paired with output kernel `i`.

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::mdn::{MdnHead, MixtureParams};
use crate::nn::{scg_minimize, FnObjective, Network, TrainState};
use crate::scalar::{all_finite, Scalar};

/// Regressor of lagged outputs and controls, newest first.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector<T> {
    outputs: Vec<T>,
    controls: Vec<T>,
}

impl<T: Scalar> StateVector<T> {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            outputs: vec![T::zero(); n],
            controls: vec![T::zero(); m],
        }
    }

    /// `outputs = [y_{k-1}, .., y_{k-n}]`, `controls = [u_{k-1}, .., u_{k-m}]`.
    pub fn new(outputs: Vec<T>, controls: Vec<T>) -> Result<Self> {
        if !all_finite(&outputs) || !all_finite(&controls) {
            return Err(Error::NonFinite("state vector"));
        }
        Ok(Self { outputs, controls })
    }

    pub fn lags(&self) -> (usize, usize) {
        (self.outputs.len(), self.controls.len())
    }

    pub fn len(&self) -> usize {
        self.outputs.len() + self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn outputs(&self) -> &[T] {
        &self.outputs
    }

    pub fn controls(&self) -> &[T] {
        &self.controls
    }

    pub fn to_vec(&self) -> Vec<T> {
        let mut v = self.outputs.clone();
        v.extend_from_slice(&self.controls);
        v
    }

    pub fn from_slice(values: &[T], n: usize, m: usize) -> Result<Self> {
        check_dim("state vector", n + m, values.len())?;
        Self::new(values[..n].to_vec(), values[n..].to_vec())
    }

    /// Shifts in the newest output and control.
    pub fn push(&mut self, y: T, u: T) {
        if !self.outputs.is_empty() {
            self.outputs.rotate_right(1);
            self.outputs[0] = y;
        }
        if !self.controls.is_empty() {
            self.controls.rotate_right(1);
            self.controls[0] = u;
        }
    }

    /// `(z, extra)` as a network input.
    pub fn with(&self, extra: T) -> Vec<T> {
        let mut v = self.to_vec();
        v.push(extra);
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardSample<T> {
    /// `(z, u)`
    pub input: Vec<T>,
    pub target: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerSample<T> {
    /// `(z, y_d)`
    pub input: Vec<T>,
    /// Forward-model priors the sample is paired with.
    pub priors: Vec<T>,
    pub target: T,
}

fn check_lags<T: Scalar>(z: &StateVector<T>, lags: (usize, usize)) -> Result<()> {
    if z.lags() != lags {
        return Err(Error::Shape {
            context: "state vector lags",
            expected: lags.0 + lags.1,
            got: z.len(),
        });
    }
    Ok(())
}

/// Mixture density network over the next plant output.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardModel<T> {
    pub net: Network<T>,
    pub head: MdnHead<T>,
    lags: (usize, usize),
}

impl<T: Scalar> ForwardModel<T> {
    pub fn new(net: Network<T>, head: MdnHead<T>, lags: (usize, usize)) -> Result<Self> {
        check_dim("forward model input", lags.0 + lags.1 + 1, net.input_dim())?;
        check_dim("forward model output", head.raw_dim(), net.output_dim())?;
        Ok(Self { net, head, lags })
    }

    pub fn init<R: Rng + ?Sized>(
        lags: (usize, usize),
        hidden: &[usize],
        head: MdnHead<T>,
        rng: &mut R,
    ) -> Result<Self> {
        let sizes = layer_sizes(lags.0 + lags.1 + 1, hidden, head.raw_dim());
        Self::new(Network::init(&sizes, rng)?, head, lags)
    }

    pub fn lags(&self) -> (usize, usize) {
        self.lags
    }

    pub fn pdf_at(&self, input: &[T]) -> Result<MixtureParams<T>> {
        self.head.to_params(&self.net.forward(input)?)
    }

    pub fn output_pdf(&self, z: &StateVector<T>, u: T) -> Result<MixtureParams<T>> {
        check_lags(z, self.lags)?;
        self.pdf_at(&z.with(u))
    }

    pub fn priors(&self, z: &StateVector<T>, u: T) -> Result<Vec<T>> {
        Ok(self.output_pdf(z, u)?.priors().to_vec())
    }

    pub fn mean_nll(&self, batch: &[ForwardSample<T>]) -> Result<T> {
        let mut total = T::zero();
        for s in batch {
            total = total + self.pdf_at(&s.input)?.nll(s.target).value;
        }
        Ok(total / T::lit(batch.len().max(1) as f64))
    }

    /// Objective value and gradient of the mean NLL at arbitrary parameters.
    pub fn loss_grad(&self, params: &[T], batch: &[ForwardSample<T>]) -> (T, Vec<T>) {
        self.net.view_with(params).batch_loss_grad(
            batch.iter().map(|s| s.input.as_slice()),
            |i, raw| self.head.nll_and_grad(raw, batch[i].target).ok(),
        )
    }

    /// Runs `iters` SCG iterations on the mean NLL of `batch` and returns
    /// the post-step loss. On divergence the parameters are left untouched.
    pub fn train(
        &mut self,
        batch: &[ForwardSample<T>],
        state: &mut TrainState<T>,
        iters: usize,
    ) -> Result<T> {
        let mut params = self.net.params().to_vec();
        let objective = FnObjective(|p: &[T]| self.loss_grad(p, batch));
        let report = scg_minimize(&mut params, &objective, state, iters)?;
        self.net.set_params(&params)?;
        Ok(report.final_loss)
    }
}

/// Tracking-error mixture: output mixture with centres shifted by `-y_d`.
pub fn error_pdf<T: Scalar>(output: &MixtureParams<T>, y_d: T) -> MixtureParams<T> {
    output.shift_means(y_d)
}

/// Mixture density network over the control input with externally tied priors.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseController<T> {
    pub net: Network<T>,
    pub head: MdnHead<T>,
    lags: (usize, usize),
}

impl<T: Scalar> InverseController<T> {
    pub fn new(net: Network<T>, head: MdnHead<T>, lags: (usize, usize)) -> Result<Self> {
        check_dim("controller input", lags.0 + lags.1 + 1, net.input_dim())?;
        check_dim("controller output", head.tied_raw_dim(), net.output_dim())?;
        Ok(Self { net, head, lags })
    }

    pub fn init<R: Rng + ?Sized>(
        lags: (usize, usize),
        hidden: &[usize],
        head: MdnHead<T>,
        rng: &mut R,
    ) -> Result<Self> {
        let sizes = layer_sizes(lags.0 + lags.1 + 1, hidden, head.tied_raw_dim());
        Self::new(Network::init(&sizes, rng)?, head, lags)
    }

    pub fn lags(&self) -> (usize, usize) {
        self.lags
    }

    pub fn pdf_at(&self, input: &[T], tied_priors: &[T]) -> Result<MixtureParams<T>> {
        self.head.to_params_tied(&self.net.forward(input)?, tied_priors)
    }

    pub fn control_pdf(
        &self,
        z: &StateVector<T>,
        y_d: T,
        tied_priors: &[T],
    ) -> Result<MixtureParams<T>> {
        check_lags(z, self.lags)?;
        self.pdf_at(&z.with(y_d), tied_priors)
    }

    pub fn loss_grad(&self, params: &[T], batch: &[ControllerSample<T>]) -> (T, Vec<T>) {
        self.net.view_with(params).batch_loss_grad(
            batch.iter().map(|s| s.input.as_slice()),
            |i, raw| {
                let s = &batch[i];
                self.head.nll_and_grad_tied(raw, &s.priors, s.target).ok()
            },
        )
    }

    pub fn mean_nll(&self, batch: &[ControllerSample<T>]) -> Result<T> {
        let mut total = T::zero();
        for s in batch {
            total = total + self.pdf_at(&s.input, &s.priors)?.nll(s.target).value;
        }
        Ok(total / T::lit(batch.len().max(1) as f64))
    }

    /// SCG on the NLL of the control targets under fixed tied priors.
    pub fn train(
        &mut self,
        batch: &[ControllerSample<T>],
        state: &mut TrainState<T>,
        iters: usize,
    ) -> Result<T> {
        let mut params = self.net.params().to_vec();
        let objective = FnObjective(|p: &[T]| self.loss_grad(p, batch));
        let report = scg_minimize(&mut params, &objective, state, iters)?;
        self.net.set_params(&params)?;
        Ok(report.final_loss)
    }
}

pub(crate) fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(input);
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    sizes
}
