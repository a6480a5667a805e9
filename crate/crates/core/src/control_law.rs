//! Performance index, its control derivative `phi`, and the control updates.
//!
//! The index is `J(u) = R Var[e] + M E[e]^2 + Q u^2` for the tracking-error
//! mixture `e`. Setting `dJ/du = 0` gives `phi(chi, u) + 2 Q u = 0`, where
//! `phi` is the derivative of the variance and squared-mean terms and
//! `chi = (z, y_d)`.

use crate::dual::{error_pdf, ForwardModel, StateVector};
use crate::error::{check_dim, Error, Result};
use crate::mdn::MixtureParams;
use crate::scalar::{dot, Scalar};

/// Absolute finite-difference step for the `phi` Jacobians.
pub const PHI_FD_STEP: f64 = 1e-5;
/// Below this, `2Q + dphi/du` is treated as zero.
pub const GUARD_EPS: f64 = 1e-8;
pub const GRID_POINTS: usize = 41;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights<T> {
    /// Variance weight.
    pub r: T,
    /// Squared-mean weight.
    pub m: T,
    /// Control-energy weight.
    pub q: T,
}

impl<T: Scalar> CostWeights<T> {
    pub fn new(r: T, m: T, q: T) -> Result<Self> {
        for (name, w) in [("R", r), ("M", m), ("Q", q)] {
            if !(w >= T::zero()) || !w.is_finite() {
                return Err(Error::Config(format!("weight {name} must be finite and >= 0, got {w}")));
            }
        }
        Ok(Self { r, m, q })
    }
}

/// `chi = (z, y_d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiVector<T>(Vec<T>);

impl<T: Scalar> ChiVector<T> {
    pub fn new(z: &StateVector<T>, y_d: T) -> Self {
        Self(z.with(y_d))
    }

    pub fn from_vec(values: Vec<T>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("chi vector"));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `R Var + M Mean^2 + Q u^2` of a tracking-error mixture.
pub fn cost<T: Scalar>(error_p: &MixtureParams<T>, u: T, w: &CostWeights<T>) -> T {
    let mo = error_p.moments();
    w.r * mo.variance + w.m * mo.mean * mo.mean + w.q * u * u
}

/// The index evaluated through the forward model at control `u`.
pub fn model_cost<T: Scalar>(
    fm: &ForwardModel<T>,
    z: &StateVector<T>,
    u: T,
    y_d: T,
    w: &CostWeights<T>,
) -> Result<T> {
    Ok(cost(&error_pdf(&fm.output_pdf(z, u)?, y_d), u, w))
}

/// `phi` from mixture parameters and their derivatives with respect to `u`.
///
/// `d_priors`, `d_centres`, `d_variances` are `d alpha_i/du`,
/// `d l_i/du` and `d sigma_i^2/du`; `error_p` holds the tracking-error
/// centres `l_i = mu_i - y_d`.
pub fn phi_from_derivatives<T: Scalar>(
    error_p: &MixtureParams<T>,
    d_priors: &[T],
    d_centres: &[T],
    d_variances: &[T],
    w: &CostWeights<T>,
) -> T {
    let a = error_p.priors();
    let l = error_p.means();
    let v = error_p.variances();
    let two = T::lit(2.0);
    let l_bar = dot(a, l);
    let d_l_bar: T = (0..a.len()).map(|i| d_priors[i] * l[i] + a[i] * d_centres[i]).sum();
    let mut variance_rate = T::zero();
    for i in 0..a.len() {
        let dev = l[i] - l_bar;
        variance_rate = variance_rate + d_priors[i] * (v[i] + dev * dev);
        variance_rate = variance_rate + a[i] * (d_variances[i] + two * dev * (d_centres[i] - d_l_bar));
    }
    let mean_rate = two * l_bar * d_l_bar;
    w.r * variance_rate + w.m * mean_rate
}

/// `phi(chi, u)` for the forward model, with the parameter derivatives taken
/// from the network input Jacobian chained through the head links.
pub fn phi<T: Scalar>(
    fm: &ForwardModel<T>,
    z: &StateVector<T>,
    u: T,
    y_d: T,
    w: &CostWeights<T>,
) -> Result<T> {
    let input = z.with(u);
    let raw = fm.net.forward(&input)?;
    let jac = fm.net.input_jacobian(&input)?;
    let u_col = input.len() - 1;
    let draw: Vec<T> = jac.iter().map(|row| row[u_col]).collect();
    let tangent = fm.head.tangent(&raw, &draw)?;
    let error_p = error_pdf(&fm.head.to_params(&raw)?, y_d);
    let value = phi_from_derivatives(
        &error_p,
        &tangent.priors,
        &tangent.means,
        &tangent.variances,
        w,
    );
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite("phi"))
    }
}

/// Anything that can evaluate `phi(chi, u)`.
pub trait PhiSource<T: Scalar> {
    fn chi_dim(&self) -> usize;
    fn phi(&self, chi: &[T], u: T) -> Result<T>;
}

/// `phi` of a frozen forward model; `chi = (z, y_d)`.
pub struct ModelPhi<'a, T> {
    pub model: &'a ForwardModel<T>,
    pub weights: CostWeights<T>,
}

impl<T: Scalar> PhiSource<T> for ModelPhi<'_, T> {
    fn chi_dim(&self) -> usize {
        let (n, m) = self.model.lags();
        n + m + 1
    }

    fn phi(&self, chi: &[T], u: T) -> Result<T> {
        check_dim("chi vector", self.chi_dim(), chi.len())?;
        let (n, m) = self.model.lags();
        let z = StateVector::from_slice(&chi[..n + m], n, m)?;
        phi(self.model, &z, u, chi[n + m], &self.weights)
    }
}

/// Central-difference Jacobians of `phi` at `(chi, u)`.
pub fn phi_jacobians<T: Scalar, P: PhiSource<T> + ?Sized>(
    source: &P,
    chi: &[T],
    u: T,
) -> Result<(Vec<T>, T)> {
    let h = T::lit(PHI_FD_STEP);
    let two_h = h + h;
    let mut probe = chi.to_vec();
    let mut d_chi = Vec::with_capacity(chi.len());
    for j in 0..chi.len() {
        probe[j] = chi[j] + h;
        let hi = source.phi(&probe, u)?;
        probe[j] = chi[j] - h;
        let lo = source.phi(&probe, u)?;
        probe[j] = chi[j];
        d_chi.push((hi - lo) / two_h);
    }
    let d_u = (source.phi(chi, u + h)? - source.phi(chi, u - h)?) / two_h;
    Ok((d_chi, d_u))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecursiveStep<T> {
    pub u: T,
    pub dphi_dchi: Vec<T>,
    pub dphi_du: T,
    /// `2Q + dphi/du` was too close to zero; `u` holds the previous value.
    pub guard_violated: bool,
}

/// First-order recursive update of the optimal control,
/// `u_k = u_{k-1} - dphi/dchi (chi_k - chi_{k-1}) / (2Q + dphi/du)`, with the
/// Jacobians taken at the previous operating point.
pub fn recursive_u<T: Scalar, P: PhiSource<T> + ?Sized>(
    u_prev: T,
    chi_prev: &ChiVector<T>,
    chi_now: &ChiVector<T>,
    source: &P,
    q: T,
) -> Result<RecursiveStep<T>> {
    check_dim("chi vector", source.chi_dim(), chi_prev.len())?;
    check_dim("chi vector", source.chi_dim(), chi_now.len())?;
    let (dphi_dchi, dphi_du) = phi_jacobians(source, chi_prev.as_slice(), u_prev)?;
    let denom = q + q + dphi_du;
    if !(denom.abs() > T::lit(GUARD_EPS)) {
        return Ok(RecursiveStep {
            u: u_prev,
            dphi_dchi,
            dphi_du,
            guard_violated: true,
        });
    }
    let increment: T = dphi_dchi
        .iter()
        .zip(chi_now.as_slice().iter().zip(chi_prev.as_slice()))
        .map(|(&g, (&a, &b))| g * (a - b))
        .sum();
    let u = u_prev - increment / denom;
    if !u.is_finite() {
        return Err(Error::NonFinite("recursive control update"));
    }
    Ok(RecursiveStep {
        u,
        dphi_dchi,
        dphi_du,
        guard_violated: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlBounds<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> ControlBounds<T> {
    pub fn new(lo: T, hi: T) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidBounds {
                lo: lo.as_f64(),
                hi: hi.as_f64(),
            });
        }
        Ok(Self { lo, hi })
    }

    pub fn clamp(&self, u: T) -> T {
        u.max(self.lo).min(self.hi)
    }
}

/// Minimizes a scalar function over `bounds`: a 41-point grid locates the
/// best cell, golden-section search refines it, and the better of the grid
/// point and the refined point is returned.
pub fn minimize_on_grid<T: Scalar, F>(f: F, bounds: ControlBounds<T>) -> Result<T>
where
    F: Fn(T) -> Result<T>,
{
    let n = GRID_POINTS;
    let span = bounds.hi - bounds.lo;
    let grid: Vec<T> = (0..n)
        .map(|i| bounds.lo + span * T::lit(i as f64 / (n - 1) as f64))
        .collect();
    let mut best = 0;
    let mut best_val = T::infinity();
    for (i, &u) in grid.iter().enumerate() {
        let v = f(u)?;
        if v < best_val {
            best = i;
            best_val = v;
        }
    }
    if !best_val.is_finite() {
        return Err(Error::NonFinite("cost on control grid"));
    }
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(n - 1)];
    let inv_phi = T::lit(0.618_033_988_749_894_9);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let tol = T::lit(1e-11);
    for _ in 0..200 {
        if (b - a).abs() <= tol * (T::one() + c.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    let (refined, refined_val) = if fc < fd { (c, fc) } else { (d, fd) };
    Ok(if refined_val <= best_val {
        refined
    } else {
        grid[best]
    })
}

/// Direct minimization of the model cost over `bounds`.
pub fn solve_u_direct<T: Scalar>(
    fm: &ForwardModel<T>,
    z: &StateVector<T>,
    y_d: T,
    w: &CostWeights<T>,
    bounds: ControlBounds<T>,
) -> Result<T> {
    minimize_on_grid(|u| model_cost(fm, z, u, y_d, w), bounds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdn::MdnHead;
    use crate::nn::Network;

    #[test]
    fn cost_reference_values() {
        let w = CostWeights::<f64>::new(0.4, 1.0, 0.001).unwrap();
        let e = MixtureParams::new(vec![0.5, 0.5], vec![-1.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert!((cost(&e, 0.0, &w) - 0.8).abs() < 1e-15);
        let tight = MixtureParams::new(vec![1.0], vec![0.0], vec![1e-300]).unwrap();
        assert!(cost(&tight, 0.0, &w) < 1e-300);
        assert!(CostWeights::new(-1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn single_kernel_phi_collapses() {
        let w = CostWeights::<f64>::new(0.4, 1.0, 0.01).unwrap();
        let e = MixtureParams::new(vec![1.0], vec![0.3], vec![0.2]).unwrap();
        let got = phi_from_derivatives(&e, &[0.0], &[0.7], &[0.05], &w);
        let expected = 0.4 * 0.05 + 2.0 * 1.0 * 0.3 * 0.7;
        assert!((got - expected).abs() < 1e-15);
    }

    struct Quadratic {
        a: Vec<f64>,
    }

    impl PhiSource<f64> for Quadratic {
        fn chi_dim(&self) -> usize {
            self.a.len()
        }
        // J = (u - a.chi)^2 + Q u^2 ; phi is the derivative of the first term
        fn phi(&self, chi: &[f64], u: f64) -> Result<f64> {
            Ok(2.0 * (u - dot(&self.a, chi)))
        }
    }

    #[test]
    fn zero_increment_holds_control() {
        let src = Quadratic { a: vec![0.3, -1.2] };
        let chi = ChiVector::from_vec(vec![0.4, 0.9]).unwrap();
        let step = recursive_u(0.7, &chi, &chi, &src, 0.01).unwrap();
        assert_eq!(step.u, 0.7);
    }

    #[test]
    fn guard_holds_previous_control() {
        struct Flat;
        impl PhiSource<f64> for Flat {
            fn chi_dim(&self) -> usize {
                1
            }
            fn phi(&self, chi: &[f64], _u: f64) -> Result<f64> {
                Ok(chi[0])
            }
        }
        let a = ChiVector::from_vec(vec![0.0]).unwrap();
        let b = ChiVector::from_vec(vec![1.0]).unwrap();
        let step = recursive_u(0.25, &a, &b, &Flat, 0.0).unwrap();
        assert!(step.guard_violated);
        assert_eq!(step.u, 0.25);
    }

    #[test]
    fn input_blind_model_gives_no_update() {
        // zero weights in every layer: phi does not depend on chi
        let head = MdnHead::with_default_floor(2).unwrap();
        let fm = ForwardModel::new(Network::zeros(&[2, 3, 6]).unwrap(), head, (1, 0)).unwrap();
        let src = ModelPhi { model: &fm, weights: CostWeights::new(0.4, 1.0, 0.001).unwrap() };
        let a = ChiVector::from_vec(vec![0.1, 0.5]).unwrap();
        let b = ChiVector::from_vec(vec![0.4, -0.5]).unwrap();
        let step = recursive_u(0.3, &a, &b, &src, 0.001).unwrap();
        assert!(step.dphi_dchi.iter().all(|&g| g == 0.0));
        assert_eq!(step.u, 0.3);
    }

    #[test]
    fn grid_minimizer_recovers_known_argmin() {
        let bounds = ControlBounds::new(-5.0, 5.0).unwrap();
        let u = minimize_on_grid(|u: f64| Ok((u - 1.234_567).powi(2) + 0.5), bounds).unwrap();
        assert!((u - 1.234_567).abs() < 1e-6);
        // minimum at a bound
        let u = minimize_on_grid(|u: f64| Ok(u), bounds).unwrap();
        assert_eq!(u, -5.0);
        assert!(ControlBounds::new(1.0, 1.0).is_err());
        assert_eq!(bounds.clamp(7.0), 5.0);
    }
}
