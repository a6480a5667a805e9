//! One-dimensional Gaussian mixtures and the mixture-density network head.
//!
//! A head turns raw network outputs into mixture parameters. The layout of
//! a full head is `[prior logits (N) | means (N) | log-variances (N)]`; a
//! tied head (the inverse controller) emits only `[means | log-variances]`
//! and receives its priors from elsewhere.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::scalar::{all_finite, Scalar};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Returned by [`MixtureParams::nll`] when even the log-domain evaluation
/// is not finite.
pub const NLL_PENALTY: f64 = 1e10;

fn sum_tolerance<T: Scalar>() -> T {
    T::lit(1e-12).max(T::epsilon() * T::lit(64.0))
}

fn check_simplex<T: Scalar>(priors: &[T], tol: T) -> std::result::Result<(), String> {
    if priors.iter().any(|&a| !(a >= T::zero()) || !a.is_finite()) {
        return Err(format!("negative or non-finite prior in {priors:?}"));
    }
    let s: T = priors.iter().copied().sum();
    if (s - T::one()).abs() > tol {
        return Err(format!("priors sum to {s}, not 1"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams<T> {
    priors: Vec<T>,
    means: Vec<T>,
    variances: Vec<T>,
}

/// Negative log-likelihood of one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nll<T> {
    pub value: T,
    /// The linear-domain density underflowed (or the value had to be
    /// replaced by [`NLL_PENALTY`]).
    pub underflow: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments<T> {
    pub mean: T,
    pub variance: T,
}

impl<T: Scalar> MixtureParams<T> {
    pub fn new(priors: Vec<T>, means: Vec<T>, variances: Vec<T>) -> Result<Self> {
        let n = priors.len();
        if n == 0 {
            return Err(Error::InvalidMixture("no kernels".into()));
        }
        check_dim("mixture means", n, means.len())?;
        check_dim("mixture variances", n, variances.len())?;
        check_simplex(&priors, sum_tolerance()).map_err(Error::InvalidMixture)?;
        if !all_finite(&means) {
            return Err(Error::InvalidMixture("non-finite mean".into()));
        }
        if variances.iter().any(|&v| !(v > T::zero()) || !v.is_finite()) {
            return Err(Error::InvalidMixture(format!(
                "variances must be positive and finite: {variances:?}"
            )));
        }
        Ok(Self {
            priors,
            means,
            variances,
        })
    }

    pub fn kernels(&self) -> usize {
        self.priors.len()
    }

    pub fn priors(&self) -> &[T] {
        &self.priors
    }

    pub fn means(&self) -> &[T] {
        &self.means
    }

    pub fn variances(&self) -> &[T] {
        &self.variances
    }

    /// Same priors and variances with every mean moved by `-offset`.
    pub fn shift_means(&self, offset: T) -> Self {
        Self {
            priors: self.priors.clone(),
            means: self.means.iter().map(|&m| m - offset).collect(),
            variances: self.variances.clone(),
        }
    }

    fn log_terms(&self, t: T) -> Vec<T> {
        let half = T::lit(0.5);
        (0..self.kernels())
            .map(|i| {
                let v = self.variances[i];
                let d = t - self.means[i];
                self.priors[i].ln() - half * (T::lit(LN_2PI) + v.ln()) - d * d / (v + v)
            })
            .collect()
    }

    pub fn density(&self, t: T) -> T {
        let two_pi = T::lit(std::f64::consts::TAU);
        (0..self.kernels())
            .map(|i| {
                let v = self.variances[i];
                let d = t - self.means[i];
                self.priors[i] * (-(d * d) / (v + v)).exp() / (two_pi * v).sqrt()
            })
            .sum()
    }

    /// `ln density(t)` via log-sum-exp.
    pub fn log_density(&self, t: T) -> T {
        log_sum_exp(&self.log_terms(t))
    }

    pub fn nll(&self, t: T) -> Nll<T> {
        let value = -self.log_density(t);
        if value.is_finite() {
            Nll {
                value,
                underflow: self.density(t) == T::zero(),
            }
        } else {
            Nll {
                value: T::lit(NLL_PENALTY),
                underflow: true,
            }
        }
    }

    /// Posterior probability of each kernel having generated `t`.
    pub fn responsibilities(&self, t: T) -> Vec<T> {
        let logs = self.log_terms(t);
        let lse = log_sum_exp(&logs);
        logs.iter().map(|&l| (l - lse).exp()).collect()
    }

    pub fn moments(&self) -> Moments<T> {
        let mean: T = self.priors.iter().zip(&self.means).map(|(&a, &m)| a * m).sum();
        let variance = (0..self.kernels())
            .map(|i| {
                let d = self.means[i] - mean;
                self.priors[i] * (self.variances[i] + d * d)
            })
            .sum();
        Moments { mean, variance }
    }

    /// Index of the kernel with the largest prior; ties go to the lowest index.
    pub fn most_probable_kernel(&self) -> usize {
        let mut best = 0;
        for i in 1..self.kernels() {
            if self.priors[i] > self.priors[best] {
                best = i;
            }
        }
        best
    }

    /// Centre of the most probable kernel.
    pub fn most_probable(&self) -> T {
        self.means[self.most_probable_kernel()]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = self.kernels() - 1;
        for (i, a) in self.priors.iter().enumerate() {
            acc += a.as_f64();
            if u < acc {
                pick = i;
                break;
            }
        }
        let z: f64 = StandardNormal.sample(rng);
        self.means[pick] + T::lit(z) * self.variances[pick].sqrt()
    }
}

pub(crate) fn log_sum_exp<T: Scalar>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<T>().ln()
}

fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Derivatives of the mixture parameters along one direction in raw space.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureTangent<T> {
    pub priors: Vec<T>,
    pub means: Vec<T>,
    pub variances: Vec<T>,
}

/// Link functions between raw network outputs and mixture parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MdnHead<T> {
    kernels: usize,
    variance_floor: T,
}

impl<T: Scalar> MdnHead<T> {
    pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-6;

    pub fn new(kernels: usize, variance_floor: T) -> Result<Self> {
        if kernels == 0 {
            return Err(Error::InvalidMixture("kernel count must be positive".into()));
        }
        if !(variance_floor > T::zero()) {
            return Err(Error::InvalidMixture("variance floor must be positive".into()));
        }
        Ok(Self {
            kernels,
            variance_floor,
        })
    }

    pub fn with_default_floor(kernels: usize) -> Result<Self> {
        Self::new(kernels, T::lit(Self::DEFAULT_VARIANCE_FLOOR))
    }

    pub fn kernels(&self) -> usize {
        self.kernels
    }

    pub fn variance_floor(&self) -> T {
        self.variance_floor
    }

    /// Raw outputs of a full head.
    pub fn raw_dim(&self) -> usize {
        3 * self.kernels
    }

    /// Raw outputs of a tied-prior head.
    pub fn tied_raw_dim(&self) -> usize {
        2 * self.kernels
    }

    fn variance(&self, log_var: T) -> T {
        log_var.exp().max(self.variance_floor)
    }

    /// d variance / d log-variance; zero where the floor is active.
    fn variance_slope(&self, log_var: T) -> T {
        let v = log_var.exp();
        if v > self.variance_floor {
            v
        } else {
            T::zero()
        }
    }

    pub fn to_params(&self, raw: &[T]) -> Result<MixtureParams<T>> {
        check_dim("mixture head raw output", self.raw_dim(), raw.len())?;
        if !all_finite(raw) {
            return Err(Error::NonFinite("mixture head raw output"));
        }
        let n = self.kernels;
        let priors = softmax(&raw[..n]);
        let means = raw[n..2 * n].to_vec();
        let variances = raw[2 * n..].iter().map(|&s| self.variance(s)).collect();
        MixtureParams::new(priors, means, variances)
    }

    pub fn to_params_tied(&self, raw: &[T], priors: &[T]) -> Result<MixtureParams<T>> {
        check_dim("tied head raw output", self.tied_raw_dim(), raw.len())?;
        check_dim("tied priors", self.kernels, priors.len())?;
        if !all_finite(raw) {
            return Err(Error::NonFinite("tied head raw output"));
        }
        check_simplex(priors, T::lit(1e-9).max(T::epsilon() * T::lit(64.0)))
            .map_err(Error::InvalidPriors)?;
        let n = self.kernels;
        let means = raw[..n].to_vec();
        let variances = raw[n..].iter().map(|&s| self.variance(s)).collect();
        Ok(MixtureParams {
            priors: priors.to_vec(),
            means,
            variances,
        })
    }

    /// NLL of `t` and its gradient with respect to the full raw output.
    pub fn nll_and_grad(&self, raw: &[T], t: T) -> Result<(T, Vec<T>)> {
        let p = self.to_params(raw)?;
        let n = self.kernels;
        let post = p.responsibilities(t);
        let mut g = vec![T::zero(); 3 * n];
        for i in 0..n {
            g[i] = p.priors[i] - post[i];
        }
        self.fill_kernel_grads(&p, &post, &raw[2 * n..], t, &mut g[n..]);
        finish(p.nll(t).value, g)
    }

    pub fn nll_grad_raw(&self, raw: &[T], t: T) -> Result<Vec<T>> {
        Ok(self.nll_and_grad(raw, t)?.1)
    }

    /// NLL and gradient for a tied head; priors are constants.
    pub fn nll_and_grad_tied(&self, raw: &[T], priors: &[T], t: T) -> Result<(T, Vec<T>)> {
        let p = self.to_params_tied(raw, priors)?;
        let post = p.responsibilities(t);
        let mut g = vec![T::zero(); 2 * self.kernels];
        self.fill_kernel_grads(&p, &post, &raw[self.kernels..], t, &mut g);
        finish(p.nll(t).value, g)
    }

    pub fn nll_grad_raw_tied(&self, raw: &[T], priors: &[T], t: T) -> Result<Vec<T>> {
        Ok(self.nll_and_grad_tied(raw, priors, t)?.1)
    }

    /// Writes `[d/d means | d/d log-variances]` into `out` (length 2N).
    fn fill_kernel_grads(
        &self,
        p: &MixtureParams<T>,
        post: &[T],
        log_vars: &[T],
        t: T,
        out: &mut [T],
    ) {
        let n = self.kernels;
        let half = T::lit(0.5);
        for i in 0..n {
            let v = p.variances[i];
            let d = p.means[i] - t;
            out[i] = post[i] * d / v;
            // dE/dv = post * (1/(2v) - d^2/(2v^2)), chained through the link
            let de_dv = post[i] * half * (T::one() / v - d * d / (v * v));
            out[n + i] = de_dv * self.variance_slope(log_vars[i]);
        }
    }

    /// Pushes a raw-space direction `draw` through the full-head links.
    pub fn tangent(&self, raw: &[T], draw: &[T]) -> Result<MixtureTangent<T>> {
        check_dim("mixture head raw output", self.raw_dim(), raw.len())?;
        check_dim("mixture head tangent", self.raw_dim(), draw.len())?;
        let n = self.kernels;
        let priors = softmax(&raw[..n]);
        let mean_logit_rate: T = priors.iter().zip(&draw[..n]).map(|(&a, &d)| a * d).sum();
        Ok(MixtureTangent {
            priors: (0..n).map(|i| priors[i] * (draw[i] - mean_logit_rate)).collect(),
            means: draw[n..2 * n].to_vec(),
            variances: (0..n)
                .map(|i| self.variance_slope(raw[2 * n + i]) * draw[2 * n + i])
                .collect(),
        })
    }
}

fn finish<T: Scalar>(loss: T, g: Vec<T>) -> Result<(T, Vec<T>)> {
    if all_finite(&g) && loss.is_finite() {
        Ok((loss, g))
    } else {
        Err(Error::NonFinite("mixture NLL gradient"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mix(a: &[f64], m: &[f64], v: &[f64]) -> MixtureParams<f64> {
        MixtureParams::new(a.to_vec(), m.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn head_links() {
        let head = MdnHead::<f64>::with_default_floor(2).unwrap();
        let p = head.to_params(&[0.3, 0.3, 1.0, 2.0, 0.0, -60.0]).unwrap();
        assert_eq!(p.priors(), &[0.5, 0.5]);
        assert_eq!(p.means(), &[1.0, 2.0]);
        assert_eq!(p.variances()[0], 1.0);
        assert_eq!(p.variances()[1], 1e-6);
        assert!(head.to_params(&[0.0; 5]).is_err());
        assert!(matches!(
            head.to_params(&[f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn density_reference_values() {
        let p = mix(&[1.0], &[0.0], &[1.0]);
        assert!((p.density(0.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
        let p = mix(&[0.5, 0.5], &[-1.0, 1.0], &[1.0, 1.0]);
        assert!((p.density(0.0) - 0.241_970_724_519_143_37).abs() < 1e-15);
    }

    #[test]
    fn nll_reference_and_far_tail() {
        let p = mix(&[1.0], &[2.5], &[1.0]);
        assert!((p.nll(2.5).value - 0.918_938_533_204_672_7).abs() < 1e-15);
        let p = mix(&[0.5, 0.5], &[0.0, 1.0], &[1e-6, 1e-6]);
        let far = p.nll(1.0 + 20.0 * 1e-3 * 1e3);
        assert!(far.value.is_finite());
        assert!(far.underflow);
    }

    #[test]
    fn single_kernel_mean_gradient() {
        let head = MdnHead::<f64>::with_default_floor(1).unwrap();
        let raw = [0.0, 1.5, (0.5f64).ln()];
        let g = head.nll_grad_raw(&raw, 0.5).unwrap();
        assert_eq!(g[0], 0.0);
        assert!((g[1] - (1.5 - 0.5) / 0.5).abs() < 1e-12);
        // stationary fit: mean on target, variance matched to residual 0
        let g = head.nll_grad_raw(&[0.0, 0.5, 0.0], 0.5).unwrap();
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn tied_zero_prior_kernel_gets_no_signal() {
        let head = MdnHead::<f64>::with_default_floor(2).unwrap();
        let g = head
            .nll_grad_raw_tied(&[0.3, -0.4, 0.1, 0.2], &[1.0, 0.0], 1.0)
            .unwrap();
        assert_eq!(g[1], 0.0);
        assert_eq!(g[3], 0.0);
        assert!(head.to_params_tied(&[0.0; 4], &[0.7, 0.7]).is_err());
    }

    #[test]
    fn moments_and_branch_selection() {
        let p = mix(&[0.5, 0.5], &[-1.0, 1.0], &[1.0, 1.0]);
        assert_eq!(p.moments(), Moments { mean: 0.0, variance: 2.0 });
        let p = mix(&[1.0], &[0.7], &[0.3]);
        assert_eq!(p.moments(), Moments { mean: 0.7, variance: 0.3 });
        assert_eq!(mix(&[0.9, 0.1], &[3.0, -3.0], &[1.0, 1.0]).most_probable(), 3.0);
        assert_eq!(mix(&[0.5, 0.5], &[1.0, 2.0], &[1.0, 1.0]).most_probable(), 1.0);
    }

    #[test]
    fn shift_preserves_priors_and_variances() {
        let p = mix(&[0.25, 0.75], &[1.0, 2.0], &[0.5, 0.1]);
        let e = p.shift_means(1.0);
        assert_eq!(e.means(), &[0.0, 1.0]);
        assert_eq!(e.priors(), p.priors());
        assert_eq!(e.variances(), p.variances());
    }

    #[test]
    fn degenerate_and_seeded_sampling() {
        let p = mix(&[1.0], &[5.0], &[1e-6]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            assert!((p.sample(&mut rng) - 5.0).abs() < 5e-3);
        }
        let q = mix(&[0.3, 0.7], &[-1.0, 2.0], &[0.2, 0.4]);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| q.sample(&mut rng)).collect::<Vec<f64>>()
        };
        assert_eq!(draw(42), draw(42));
        assert_ne!(draw(42), draw(43));
    }

    #[test]
    fn invalid_mixtures_rejected() {
        assert!(MixtureParams::new(vec![0.6, 0.6], vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(MixtureParams::new(vec![1.0], vec![0.0], vec![0.0]).is_err());
        assert!(MixtureParams::<f64>::new(vec![], vec![], vec![]).is_err());
        assert!(MdnHead::<f64>::new(0, 1e-6).is_err());
    }
}
