//! Local stability monitor for the linearized closed loop.
//!
//! The plant is linearized through the forward-model mean, the recursive
//! control law contributes the row vector `B_k`, and the two combine into
//! the closed-loop polynomial `N(z^-1) = 1 - sum_i a^i z^-i`. Its companion
//! matrix is checked against the unit ball.
//!
//! Note that a companion matrix of order two or more always has spectral
//! norm >= 1 (it contains a unit superdiagonal), so the norm test can only
//! pass for first-order loops; the spectral radius is reported alongside.

use nalgebra::{Complex, DMatrix};

use crate::dual::{ForwardModel, StateVector};
use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

pub const LINEARIZATION_STEP: f64 = 1e-4;

/// Partial derivatives of the plant map at an operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization<T> {
    /// `df/dy_{k-i}`, `i = 1..n`.
    pub dy: Vec<T>,
    /// `df/du_{k-j}`, `j = 0..m`.
    pub du: Vec<T>,
}

impl<T: Scalar> Linearization<T> {
    pub fn lags(&self) -> (usize, usize) {
        (self.dy.len(), self.du.len().saturating_sub(1))
    }
}

/// Central differences of the forward-model mixture mean.
pub fn linearize<T: Scalar>(
    fm: &ForwardModel<T>,
    z: &StateVector<T>,
    u: T,
) -> Result<Linearization<T>> {
    let (n, m) = fm.lags();
    check_dim("state vector", n + m, z.len())?;
    let h = T::lit(LINEARIZATION_STEP);
    let mean = |x: &[T]| -> Result<T> {
        let v = fm.pdf_at(x)?.moments().mean;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("forward model mean"))
        }
    };
    let base = z.with(u);
    let mut probe = base.clone();
    let mut derivs = Vec::with_capacity(base.len());
    for j in 0..base.len() {
        probe[j] = base[j] + h;
        let hi = mean(&probe)?;
        probe[j] = base[j] - h;
        let lo = mean(&probe)?;
        probe[j] = base[j];
        derivs.push((hi - lo) / (h + h));
    }
    // input order is (y lags, u lags, u); reorder controls as u_k, u_{k-1}, ..
    let dy = derivs[..n].to_vec();
    let mut du = vec![derivs[n + m]];
    du.extend_from_slice(&derivs[n..n + m]);
    Ok(Linearization { dy, du })
}

/// `B_k = -dphi/dchi / (2Q + dphi/du)`; `None` when the denominator is
/// within [`crate::control_law::GUARD_EPS`] of zero.
pub fn compute_bk<T: Scalar>(dphi_dchi: &[T], dphi_du: T, q: T) -> Option<Vec<T>> {
    let denom = q + q + dphi_du;
    if !(denom.abs() > T::lit(crate::control_law::GUARD_EPS)) {
        return None;
    }
    Some(dphi_dchi.iter().map(|&g| -g / denom).collect())
}

/// Coefficients `a^1 .. a^{n+m}` of the closed-loop polynomial
///
/// ```text
/// N = 1 - sum_j B^{n+j} z^-j - sum_i f_{y,i} z^-i
///       + (sum_i f_{y,i} z^-i)(sum_j B^{n+j} z^-j)
///       - (sum_{j>=0} f_{u,j} z^-j)(sum_i B^i z^-i)
/// ```
///
/// with `N = 1 - sum_i a^i z^-i`.
pub fn closed_loop_poly<T: Scalar>(lin: &Linearization<T>, bk: &[T]) -> Result<Vec<T>> {
    let (n, m) = lin.lags();
    check_dim("B_k", n + m + 1, bk.len())?;
    let by = &bk[..n];
    let bu = &bk[n..n + m];
    let mut c = vec![T::zero(); n + m + 1];
    c[0] = T::one();
    for j in 1..=m {
        c[j] = c[j] - bu[j - 1];
    }
    for i in 1..=n {
        c[i] = c[i] - lin.dy[i - 1];
    }
    for i in 1..=n {
        for j in 1..=m {
            c[i + j] = c[i + j] + lin.dy[i - 1] * bu[j - 1];
        }
    }
    for j in 0..=m {
        for i in 1..=n {
            c[i + j] = c[i + j] - lin.du[j] * by[i - 1];
        }
    }
    Ok(c[1..].iter().map(|&v| -v).collect())
}

/// Companion matrix: unit superdiagonal, last row `[a^d, .., a^1]`.
pub fn companion<T: Scalar>(coeffs: &[T]) -> DMatrix<f64> {
    let d = coeffs.len();
    let mut a = DMatrix::zeros(d, d);
    for i in 0..d.saturating_sub(1) {
        a[(i, i + 1)] = 1.0;
    }
    if d > 0 {
        for (col, c) in coeffs.iter().rev().enumerate() {
            a[(d - 1, col)] = c.as_f64();
        }
    }
    a
}

/// Eigenvalues of the companion matrix (real Schur decomposition).
pub fn companion_eigenvalues<T: Scalar>(coeffs: &[T]) -> Vec<Complex<f64>> {
    if coeffs.is_empty() {
        return Vec::new();
    }
    companion(coeffs).complex_eigenvalues().iter().copied().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCheck {
    pub coefficients: Vec<f64>,
    pub companion: DMatrix<f64>,
    /// Largest singular value.
    pub spectral_norm: f64,
    pub spectral_radius: f64,
    /// `spectral_norm < 1`.
    pub stable: bool,
    /// `spectral_radius < 1`.
    pub stable_by_radius: bool,
}

pub fn stability_check<T: Scalar>(coeffs: &[T]) -> StabilityCheck {
    let a = companion(coeffs);
    let (spectral_norm, spectral_radius) = if coeffs.is_empty() {
        (0.0, 0.0)
    } else {
        let norm = a
            .singular_values()
            .iter()
            .copied()
            .fold(0.0f64, f64::max);
        let radius = companion_eigenvalues(coeffs)
            .iter()
            .map(|z| z.norm())
            .fold(0.0f64, f64::max);
        (norm, radius)
    };
    StabilityCheck {
        coefficients: coeffs.iter().map(|c| c.as_f64()).collect(),
        companion: a,
        spectral_norm,
        spectral_radius,
        stable: spectral_norm < 1.0,
        stable_by_radius: spectral_radius < 1.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport<T> {
    pub linearization: Linearization<T>,
    /// `None` when the `2Q + dphi/du` guard fired; the report is then
    /// indeterminate and `check` is absent.
    pub bk: Option<Vec<T>>,
    pub check: Option<StabilityCheck>,
}

impl<T> StabilityReport<T> {
    pub fn indeterminate(&self) -> bool {
        self.check.is_none()
    }
}

/// Runs the full monitor at an operating point. Read-only with respect to
/// the model.
pub fn assess<T: Scalar>(
    fm: &ForwardModel<T>,
    z: &StateVector<T>,
    u: T,
    dphi_dchi: &[T],
    dphi_du: T,
    q: T,
) -> Result<StabilityReport<T>> {
    let linearization = linearize(fm, z, u)?;
    let bk = compute_bk(dphi_dchi, dphi_du, q);
    let check = match &bk {
        Some(b) => Some(stability_check(&closed_loop_poly(&linearization, b)?)),
        None => None,
    };
    Ok(StabilityReport {
        linearization,
        bk,
        check,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdn::MdnHead;
    use crate::nn::Network;

    #[test]
    fn bk_arithmetic() {
        assert_eq!(compute_bk(&[0.0, 0.0], 0.3, 0.1).unwrap(), vec![0.0, 0.0]);
        assert_eq!(compute_bk(&[1.0, 0.0], 0.0, 0.5).unwrap(), vec![-1.0, 0.0]);
        assert!(compute_bk(&[1.0], -0.2, 0.1).is_none());
    }

    #[test]
    fn static_plant_without_feedback_is_trivial() {
        let lin = Linearization { dy: vec![0.0, 0.0], du: vec![0.0, 0.0] };
        let a = closed_loop_poly(&lin, &[0.0; 4]).unwrap();
        assert_eq!(a, vec![0.0; 3]);
    }

    #[test]
    fn first_order_hand_case() {
        let lin = Linearization { dy: vec![0.3], du: vec![0.2] };
        let a = closed_loop_poly(&lin, &[-1.5, 0.7]).unwrap();
        assert_eq!(a, vec![0.3 + -1.5 * 0.2]);
    }

    #[test]
    fn companion_layout_and_hand_spectrum() {
        let chk = stability_check(&[0.5, 0.0]);
        assert_eq!(chk.companion, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.5]));
        assert!((chk.spectral_radius - 0.5).abs() < 1e-12);
        assert!(chk.stable_by_radius);
        assert!(chk.spectral_norm >= 1.0);
        assert!(chk.spectral_radius <= chk.spectral_norm);

        let nil = stability_check(&[0.0, 0.0, 0.0]);
        assert!(nil.spectral_radius < 1e-12);

        let first = stability_check(&[-0.4]);
        assert!((first.spectral_norm - 0.4).abs() < 1e-15);
        assert!(first.stable);
    }

    #[test]
    fn constant_model_has_zero_linearization() {
        let head = MdnHead::with_default_floor(2).unwrap();
        let mut net = Network::<f64>::zeros(&[3, 2, 6]).unwrap();
        // output biases only: means 0.7 and -0.1
        let n = net.params().len();
        net.params_mut()[n - 4] = 0.7;
        net.params_mut()[n - 3] = -0.1;
        let fm = ForwardModel::new(net, head, (1, 1)).unwrap();
        let z = StateVector::new(vec![0.2], vec![0.1]).unwrap();
        let lin = linearize(&fm, &z, 0.5).unwrap();
        assert_eq!(lin.dy, vec![0.0]);
        assert_eq!(lin.du, vec![0.0, 0.0]);
    }
}
