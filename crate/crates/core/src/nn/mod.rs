//! Layered feedforward networks with hand-written backpropagation.
//!
//! Parameters live in one flat vector. For each layer `l` mapping `a` inputs
//! to `b` outputs the block is `b * a` weights (row-major, one row per
//! output unit) followed by `b` biases. Hidden layers use `tanh`; the final
//! layer is linear so that mixture heads can apply their own link functions.

mod scg;
mod snapshot;

pub use scg::{scg_minimize, FnObjective, Objective, ScgConfig, ScgReport, TrainState};
pub use snapshot::{read_snapshot, write_snapshot, Snapshot};

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

/// Activation applied after every hidden layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Tanh => T::one() - y * y,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    layer_sizes: Vec<usize>,
    params: Vec<T>,
    hidden: Activation,
}

/// Number of parameters of a network with the given layer sizes.
pub fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn validate_layout(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::Layout(format!(
            "need at least input and output sizes, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::Layout(format!("zero-width layer in {layer_sizes:?}")));
    }
    Ok(())
}

impl<T: Scalar> Network<T> {
    /// Network with every weight and bias set to zero.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        validate_layout(layer_sizes)?;
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            params: vec![T::zero(); param_count(layer_sizes)],
            hidden: Activation::Tanh,
        })
    }

    /// Zero biases, weights uniform in `[-0.5, 0.5] / sqrt(fan_in)`.
    pub fn init<R: Rng + ?Sized>(layer_sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        let mut offset = 0;
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = 1.0 / (fan_in as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_in * fan_out] {
                *p = T::lit((rng.random::<f64>() - 0.5) * scale);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn from_params(layer_sizes: &[usize], params: Vec<T>) -> Result<Self> {
        validate_layout(layer_sizes)?;
        check_dim("network parameters", param_count(layer_sizes), params.len())?;
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            params,
            hidden: Activation::Tanh,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated layout")
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[T]) -> Result<()> {
        check_dim("network parameters", self.params.len(), params.len())?;
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn view(&self) -> NetView<'_, T> {
        NetView {
            layer_sizes: &self.layer_sizes,
            params: &self.params,
            hidden: self.hidden,
        }
    }

    /// Borrowed view of this architecture evaluated at foreign parameters.
    pub fn view_with<'a>(&'a self, params: &'a [T]) -> NetView<'a, T> {
        debug_assert_eq!(params.len(), self.params.len());
        NetView {
            layer_sizes: &self.layer_sizes,
            params,
            hidden: self.hidden,
        }
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        self.view().forward(x)
    }

    /// Gradient of a scalar loss with respect to the flat parameter vector,
    /// given the loss gradient at the network output.
    pub fn grad_params(&self, x: &[T], dl_dout: &[T]) -> Result<Vec<T>> {
        Ok(self.view().backward(x, dl_dout)?.0)
    }

    /// Gradient of a scalar loss with respect to the network input.
    pub fn grad_input(&self, x: &[T], dl_dout: &[T]) -> Result<Vec<T>> {
        Ok(self.view().backward(x, dl_dout)?.1)
    }

    /// Full input Jacobian, one row per output unit.
    pub fn input_jacobian(&self, x: &[T]) -> Result<Vec<Vec<T>>> {
        let view = self.view();
        let acts = view.activations(x)?;
        let mut seed = vec![T::zero(); self.output_dim()];
        let mut rows = Vec::with_capacity(seed.len());
        for o in 0..seed.len() {
            seed[o] = T::one();
            let mut gin = vec![T::zero(); self.input_dim()];
            view.backward_from(&acts, &seed, None, Some(&mut gin));
            rows.push(gin);
            seed[o] = T::zero();
        }
        Ok(rows)
    }
}

/// A network architecture paired with a parameter slice.
#[derive(Debug, Clone, Copy)]
pub struct NetView<'a, T> {
    layer_sizes: &'a [usize],
    params: &'a [T],
    hidden: Activation,
}

impl<'a, T: Scalar> NetView<'a, T> {
    fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        let mut acts = self.activations(x)?;
        Ok(acts.pop().expect("at least one layer"))
    }

    /// Activations of every layer; element 0 is the input itself.
    pub fn activations(&self, x: &[T]) -> Result<Vec<Vec<T>>> {
        check_dim("network input", self.layer_sizes[0], x.len())?;
        let mut acts = Vec::with_capacity(self.layer_sizes.len());
        acts.push(x.to_vec());
        let mut offset = 0;
        for l in 0..self.n_layers() {
            let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let biases = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            let input = &acts[l];
            let last = l + 1 == self.n_layers();
            let out: Vec<T> = (0..fan_out)
                .map(|j| {
                    let row = &weights[j * fan_in..(j + 1) * fan_in];
                    let z = crate::scalar::dot(row, input) + biases[j];
                    if last {
                        z
                    } else {
                        self.hidden.apply(z)
                    }
                })
                .collect();
            acts.push(out);
            offset += fan_in * fan_out + fan_out;
        }
        Ok(acts)
    }

    /// Mean of a per-sample loss over a batch, with its parameter gradient.
    ///
    /// `per_sample(i, output)` returns the loss of sample `i` and its
    /// gradient at the network output; `None` poisons the result with NaN
    /// so that optimizers treat it as divergence.
    pub fn batch_loss_grad<'x, I, F>(&self, inputs: I, per_sample: F) -> (T, Vec<T>)
    where
        I: IntoIterator<Item = &'x [T]>,
        F: Fn(usize, &[T]) -> Option<(T, Vec<T>)>,
    {
        let mut total = T::zero();
        let mut grad = vec![T::zero(); self.params.len()];
        let mut count = 0usize;
        for (i, x) in inputs.into_iter().enumerate() {
            count += 1;
            let Ok(acts) = self.activations(x) else {
                return (T::nan(), grad);
            };
            let Some((loss, dl_dout)) = per_sample(i, acts.last().expect("output layer")) else {
                return (T::nan(), grad);
            };
            total = total + loss;
            self.backward_from(&acts, &dl_dout, Some(&mut grad), None);
        }
        if count == 0 {
            return (T::zero(), grad);
        }
        let scale = T::one() / T::lit(count as f64);
        grad.iter_mut().for_each(|g| *g = *g * scale);
        (total * scale, grad)
    }

    /// Returns (parameter gradient, input gradient).
    pub fn backward(&self, x: &[T], dl_dout: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let acts = self.activations(x)?;
        check_dim("output gradient", *self.layer_sizes.last().unwrap(), dl_dout.len())?;
        let mut gp = vec![T::zero(); self.params.len()];
        let mut gi = vec![T::zero(); self.layer_sizes[0]];
        self.backward_from(&acts, dl_dout, Some(&mut gp), Some(&mut gi));
        Ok((gp, gi))
    }

    /// Backpropagates `dl_dout` through cached activations, accumulating
    /// (adding) into the parameter and/or input gradient buffers.
    pub fn backward_from(
        &self,
        acts: &[Vec<T>],
        dl_dout: &[T],
        mut grad_params: Option<&mut [T]>,
        grad_input: Option<&mut [T]>,
    ) {
        let mut delta = dl_dout.to_vec();
        let mut offset = self.params.len();
        for l in (0..self.n_layers()).rev() {
            let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            offset -= fan_in * fan_out + fan_out;
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let input = &acts[l];
            if let Some(gp) = grad_params.as_deref_mut() {
                for j in 0..fan_out {
                    let d = delta[j];
                    let row = &mut gp[offset + j * fan_in..offset + (j + 1) * fan_in];
                    for (g, &a) in row.iter_mut().zip(input) {
                        *g = *g + d * a;
                    }
                    let b = offset + fan_in * fan_out + j;
                    gp[b] = gp[b] + d;
                }
            }
            if l == 0 && grad_input.is_none() {
                break;
            }
            let mut prev = vec![T::zero(); fan_in];
            for j in 0..fan_out {
                let d = delta[j];
                if d == T::zero() {
                    continue;
                }
                for (p, &w) in prev.iter_mut().zip(&weights[j * fan_in..(j + 1) * fan_in]) {
                    *p = *p + w * d;
                }
            }
            if l > 0 {
                for (p, &a) in prev.iter_mut().zip(input) {
                    *p = *p * self.hidden.derivative_from_output(a);
                }
            }
            delta = prev;
        }
        if let Some(gi) = grad_input {
            for (g, &d) in gi.iter_mut().zip(&delta) {
                *g = *g + d;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn param_count_matches_layout() {
        assert_eq!(param_count(&[3, 5, 2]), 3 * 5 + 5 + 5 * 2 + 2);
        let net = Network::<f64>::zeros(&[3, 5, 2]).unwrap();
        assert_eq!(net.params().len(), 32);
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let net = Network::<f64>::zeros(&[2, 4, 3]).unwrap();
        assert_eq!(net.forward(&[1.5, -7.0]).unwrap(), vec![0.0; 3]);
        assert_eq!(net.grad_params(&[1.5, -7.0], &[0.0; 3]).unwrap(), vec![0.0; net.params().len()]);
        assert_eq!(net.grad_input(&[1.5, -7.0], &[1.0, 2.0, 3.0]).unwrap(), vec![0.0; 2]);
    }

    #[test]
    fn single_linear_layer() {
        let net = Network::from_params(&[1, 1], vec![1.0, 0.0]).unwrap();
        assert_eq!(net.forward(&[2.0]).unwrap(), vec![2.0]);
        // dL/dout = 1 at x = 3: weight gradient 3, bias gradient 1
        assert_eq!(net.grad_params(&[3.0], &[1.0]).unwrap(), vec![3.0, 1.0]);

        let net = Network::from_params(&[2, 2], vec![1.0, 2.0, 3.0, 4.0, 0.0, 0.0]).unwrap();
        // W^T g with W = [[1,2],[3,4]], g = [1, -1]
        assert_eq!(net.grad_input(&[0.3, 0.1], &[1.0, -1.0]).unwrap(), vec![-2.0, -2.0]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let net = Network::<f64>::zeros(&[2, 3]).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape { .. })));
        assert!(matches!(net.grad_params(&[1.0, 2.0], &[1.0]), Err(Error::Shape { .. })));
        assert!(Network::<f64>::zeros(&[2]).is_err());
        assert!(Network::<f64>::zeros(&[2, 0, 1]).is_err());
        assert!(Network::<f64>::from_params(&[1, 1], vec![0.0]).is_err());
    }

    #[test]
    fn forward_matches_hand_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Network::<f64>::init(&[2, 3, 1], &mut rng).unwrap();
        let p = net.params();
        let x = [0.7, -1.1];
        let mut h = [0.0; 3];
        for j in 0..3 {
            h[j] = (p[2 * j] * x[0] + p[2 * j + 1] * x[1] + p[6 + j]).tanh();
        }
        let y = p[9] * h[0] + p[10] * h[1] + p[11] * h[2] + p[12];
        assert!((net.forward(&x).unwrap()[0] - y).abs() < 1e-15);
    }

    #[test]
    fn init_biases_zero_and_weights_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = Network::<f64>::init(&[4, 6, 2], &mut rng).unwrap();
        let p = net.params();
        assert!(p[24..30].iter().all(|&b| b == 0.0));
        assert!(p[..24].iter().all(|w| w.abs() <= 0.25));
        assert!(p[30..42].iter().all(|w| w.abs() <= 0.5 / 6f64.sqrt()));
        assert!(p[42..].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn works_in_single_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network::<f32>::init(&[2, 3, 2], &mut rng).unwrap();
        let out = net.forward(&[0.5, 0.25]).unwrap();
        assert!(out.iter().all(|v| v.is_finite()));
    }
}
