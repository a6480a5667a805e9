//! Benchmark stochastic plants, their noise sources and reference models.

use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::mdn::MixtureParams;
use crate::scalar::Scalar;

/// Gaussian-mixture noise source.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMixture<T> {
    mixture: MixtureParams<T>,
}

impl<T: Scalar> NoiseMixture<T> {
    pub fn new(means: Vec<T>, variances: Vec<T>, weights: Vec<T>) -> Result<Self> {
        Ok(Self {
            mixture: MixtureParams::new(weights, means, variances)?,
        })
    }

    /// Additive noise of the first benchmark: N(1, 0.02) and N(0, 0.001).
    pub fn additive(weights: [T; 2]) -> Result<Self> {
        Self::new(
            vec![T::one(), T::zero()],
            vec![T::lit(0.02), T::lit(0.001)],
            weights.to_vec(),
        )
    }

    /// Multiplicative noise of the second benchmark: N(0.5, 0.002) and N(0, 0.001).
    pub fn multiplicative(weights: [T; 2]) -> Result<Self> {
        Self::new(
            vec![T::lit(0.5), T::zero()],
            vec![T::lit(0.002), T::lit(0.001)],
            weights.to_vec(),
        )
    }

    pub fn mixture(&self) -> &MixtureParams<T> {
        &self.mixture
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        self.mixture.sample(rng)
    }
}

/// `y = 0.5 - 0.02 y_{k-1} (1.2 + atan u_k) + 0.2 u_k + eps`.
pub fn step_plant1<T: Scalar>(y_prev: T, u: T, eps: T) -> T {
    T::lit(0.5) - T::lit(0.02) * y_prev * (T::lit(1.2) + u.atan()) + T::lit(0.2) * u + eps
}

/// `y = (29/40) eps sin((16 u + 8 y)/(3 + 4 u^2 + 4 y^2)) + 0.2 (u + y)`
/// with `u = u_{k-1}`, `y = y_{k-1}`.
pub fn step_plant2<T: Scalar>(y_prev: T, u_prev: T, eps: T) -> T {
    let four = T::lit(4.0);
    let arg = (T::lit(16.0) * u_prev + T::lit(8.0) * y_prev)
        / (T::lit(3.0) + four * u_prev * u_prev + four * y_prev * y_prev);
    T::lit(29.0 / 40.0) * eps * arg.sin() + T::lit(0.2) * (u_prev + y_prev)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantKind {
    /// First benchmark, additive noise; the control acts in the same sample.
    Additive,
    /// Second benchmark, multiplicative noise; the control acts one sample later.
    Multiplicative,
}

/// A plant being simulated.
///
/// [`Plant::apply`] takes the control chosen after observing the last
/// output and returns the output it produces. For the multiplicative plant
/// that control is the `u_{k-1}` of its difference equation.
#[derive(Debug, Clone, PartialEq)]
pub struct Plant<T> {
    kind: PlantKind,
    y_prev: T,
    steps: usize,
}

impl<T: Scalar> Plant<T> {
    pub fn new(kind: PlantKind, y0: T) -> Self {
        Self {
            kind,
            y_prev: y0,
            steps: 0,
        }
    }

    pub fn kind(&self) -> PlantKind {
        self.kind
    }

    pub fn last_output(&self) -> T {
        self.y_prev
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn apply(&mut self, u: T, eps: T) -> T {
        let y = match self.kind {
            PlantKind::Additive => step_plant1(self.y_prev, u, eps),
            PlantKind::Multiplicative => step_plant2(self.y_prev, u, eps),
        };
        self.y_prev = y;
        self.steps += 1;
        y
    }
}

/// `y^d_k = r_{k-delay} + c y^d_{k-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceModel<T> {
    c: T,
    delay: usize,
    yd_prev: T,
    r_held: T,
}

impl<T: Scalar> ReferenceModel<T> {
    pub fn new(c: T, delay: usize) -> Result<Self> {
        if !(c.abs() < T::one()) {
            return Err(Error::Config(format!("reference feedback |c| must be < 1, got {c}")));
        }
        if delay > 1 {
            return Err(Error::Config(format!("reference delay must be 0 or 1, got {delay}")));
        }
        Ok(Self {
            c,
            delay,
            yd_prev: T::zero(),
            r_held: T::zero(),
        })
    }

    /// `y^d_k = r_k + 0.25 y^d_{k-1}`.
    pub fn additive() -> Self {
        Self::new(T::lit(0.25), 0).expect("valid constants")
    }

    /// `y^d_k = r_{k-1} + 0.32 y^d_{k-1}`.
    pub fn multiplicative() -> Self {
        Self::new(T::lit(0.32), 1).expect("valid constants")
    }

    pub fn feedback(&self) -> T {
        self.c
    }

    pub fn last(&self) -> T {
        self.yd_prev
    }

    pub fn step(&mut self, r: T) -> T {
        let r_eff = if self.delay == 0 {
            r
        } else {
            std::mem::replace(&mut self.r_held, r)
        };
        self.yd_prev = r_eff + self.c * self.yd_prev;
        self.yd_prev
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceKind {
    /// Level uniform in `[-1, 1]`, held for `hold` steps.
    PiecewiseConstant { hold: usize },
    /// `amplitude * sin(2 pi k / period)`.
    Sinusoid { amplitude: f64, period: f64 },
    /// Fixed sequence, e.g. loaded with [`read_reference_file`].
    Sequence(Vec<f64>),
}

impl ReferenceKind {
    pub fn piecewise() -> Self {
        Self::PiecewiseConstant { hold: 50 }
    }

    pub fn sinusoid() -> Self {
        Self::Sinusoid {
            amplitude: 0.5,
            period: 100.0,
        }
    }
}

/// Generator of reference inputs `r_k = offset + scale * base_k`.
#[derive(Debug, Clone)]
pub struct ReferenceSignal {
    pub kind: ReferenceKind,
    pub offset: f64,
    pub scale: f64,
    level: f64,
}

impl ReferenceSignal {
    pub fn new(kind: ReferenceKind) -> Self {
        Self::with_affine(kind, 0.0, 1.0)
    }

    pub fn with_affine(kind: ReferenceKind, offset: f64, scale: f64) -> Self {
        Self {
            kind,
            offset,
            scale,
            level: 0.0,
        }
    }

    /// `r_k`; must be called for k = 0, 1, 2, ... in order when the kind
    /// is piecewise constant (levels are drawn from `rng` on window starts).
    pub fn value<R: Rng + ?Sized>(&mut self, k: usize, rng: &mut R) -> Result<f64> {
        let base = match &self.kind {
            ReferenceKind::PiecewiseConstant { hold } => {
                if k.is_multiple_of((*hold).max(1)) {
                    self.level = rng.random_range(-1.0..=1.0);
                }
                self.level
            }
            ReferenceKind::Sinusoid { amplitude, period } => {
                amplitude * (std::f64::consts::TAU * k as f64 / period).sin()
            }
            ReferenceKind::Sequence(values) => *values.get(k).ok_or_else(|| {
                Error::Config(format!(
                    "reference sequence has {} values, step {k} requested",
                    values.len()
                ))
            })?,
        };
        Ok(self.offset + self.scale * base)
    }

    pub fn sequence<R: Rng + ?Sized>(&mut self, len: usize, rng: &mut R) -> Result<Vec<f64>> {
        (0..len).map(|k| self.value(k, rng)).collect()
    }
}

/// One real per line; blank lines and `#` comments are ignored.
pub fn read_reference_file(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.parse::<f64>()
                .map_err(|e| Error::Config(format!("bad reference value {l:?}: {e}")))
        })
        .collect()
}

pub fn write_reference_file(path: &Path, values: &[f64]) -> Result<()> {
    let mut text = String::with_capacity(values.len() * 20);
    for v in values {
        text.push_str(&format!("{v:?}\n"));
    }
    fs::write(path, text)?;
    Ok(())
}

/// Piecewise-constant excitation uniform in `[lo, hi]`.
pub fn excitation_controls<R: Rng + ?Sized>(
    len: usize,
    lo: f64,
    hi: f64,
    hold: usize,
    rng: &mut R,
) -> Vec<f64> {
    let hold = hold.max(1);
    let mut level = 0.0;
    (0..len)
        .map(|k| {
            if k % hold == 0 {
                level = rng.random_range(lo..=hi);
            }
            level
        })
        .collect()
}
