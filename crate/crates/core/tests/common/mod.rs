//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Plain-loop MLP evaluation: tanh hidden layers, linear output, params laid
/// out per layer as row-major weights followed by biases.
pub fn mlp_oracle(sizes: &[usize], params: &[f64], x: &[f64]) -> Vec<f64> {
    let mut act = x.to_vec();
    let mut off = 0;
    for l in 0..sizes.len() - 1 {
        let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
        let w = &params[off..off + fan_in * fan_out];
        let b = &params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
        off += fan_in * fan_out + fan_out;
        let mut next = vec![0.0; fan_out];
        for o in 0..fan_out {
            let mut s = b[o];
            for i in 0..fan_in {
                s += w[o * fan_in + i] * act[i];
            }
            next[o] = if l + 2 < sizes.len() { s.tanh() } else { s };
        }
        act = next;
    }
    act
}

/// Central difference of `f` along coordinate `j` of `x`.
pub fn central_diff<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], j: usize, h: f64) -> f64 {
    let mut p = x.to_vec();
    p[j] = x[j] + h;
    let hi = f(&p);
    p[j] = x[j] - h;
    let lo = f(&p);
    (hi - lo) / (2.0 * h)
}

/// `|a - b| <= tol * max(|a|, |b|, 1e-3)`; the floor keeps near-zero
/// components from demanding accuracy below finite-difference round-off.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-3)
}

pub fn gaussian_pdf(t: f64, mean: f64, var: f64) -> f64 {
    (-(t - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

pub fn mixture_pdf(priors: &[f64], means: &[f64], vars: &[f64], t: f64) -> f64 {
    (0..priors.len())
        .map(|i| priors[i] * gaussian_pdf(t, means[i], vars[i]))
        .sum()
}

/// Composite Simpson rule with `n` (even) intervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Integration range covering every kernel by `width` standard deviations.
pub fn mixture_range(means: &[f64], vars: &[f64], width: f64) -> (f64, f64) {
    let lo = means
        .iter()
        .zip(vars)
        .map(|(m, v)| m - width * v.sqrt())
        .fold(f64::INFINITY, f64::min);
    let hi = means
        .iter()
        .zip(vars)
        .map(|(m, v)| m + width * v.sqrt())
        .fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Random mixture: N in 1..=4, priors from normalized uniforms, means in
/// [-3, 3], variances log-uniform in [0.01, 4].
pub fn random_mixture<R: Rng>(rng: &mut R) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = rng.random_range(1..=4);
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let priors = raw.iter().map(|r| r / total).collect();
    let means = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let vars = (0..n)
        .map(|_| 10f64.powf(rng.random_range(-2.0..0.6)))
        .collect();
    (priors, means, vars)
}

/// Product of two coefficient sequences in ascending powers.
pub fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, y) in b.iter().enumerate() {
        out[i] += y;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct C {
    pub re: f64,
    pub im: f64,
}

impl C {
    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }
    fn add(self, o: C) -> C {
        C::new(self.re + o.re, self.im + o.im)
    }
    fn sub(self, o: C) -> C {
        C::new(self.re - o.re, self.im - o.im)
    }
    fn mul(self, o: C) -> C {
        C::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }
    fn div(self, o: C) -> C {
        let d = o.re * o.re + o.im * o.im;
        C::new(
            (self.re * o.re + self.im * o.im) / d,
            (self.im * o.re - self.re * o.im) / d,
        )
    }
    pub fn abs(self) -> f64 {
        self.re.hypot(self.im)
    }
}

/// Roots of the monic polynomial `z^d + c[0] z^{d-1} + .. + c[d-1]` by
/// Durand-Kerner iteration, polished with Newton steps.
pub fn durand_kerner(c: &[f64]) -> Vec<C> {
    let d = c.len();
    let eval = |z: C| {
        let mut p = C::new(1.0, 0.0);
        for &ci in c {
            p = p.mul(z).add(C::new(ci, 0.0));
        }
        p
    };
    let deriv = |z: C| {
        let mut p = C::new(1.0, 0.0);
        let mut dp = C::new(0.0, 0.0);
        for &ci in c {
            dp = dp.mul(z).add(p);
            p = p.mul(z).add(C::new(ci, 0.0));
        }
        dp
    };
    let seed = C::new(0.4, 0.9);
    let mut roots: Vec<C> = (0..d)
        .map(|i| {
            let mut z = C::new(1.0, 0.0);
            for _ in 0..i {
                z = z.mul(seed);
            }
            z
        })
        .collect();
    for _ in 0..2000 {
        let mut delta = 0.0f64;
        for i in 0..d {
            let mut den = C::new(1.0, 0.0);
            for j in 0..d {
                if i != j {
                    den = den.mul(roots[i].sub(roots[j]));
                }
            }
            let step = eval(roots[i]).div(den);
            roots[i] = roots[i].sub(step);
            delta = delta.max(step.abs());
        }
        if delta < 1e-15 {
            break;
        }
    }
    for r in roots.iter_mut() {
        for _ in 0..3 {
            let dp = deriv(*r);
            if dp.abs() > 1e-300 {
                *r = r.sub(eval(*r).div(dp));
            }
        }
    }
    roots
}

/// Greedy matching distance between two root multisets.
pub fn root_set_distance(a: &[C], b: &[C]) -> f64 {
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for x in a {
        let (j, d) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, y)| (j, x.sub(*y).abs()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .expect("equal lengths");
        used[j] = true;
        worst = worst.max(d);
    }
    worst
}

/// Samples `(y_prev, u, y)` from `y = 0.5 y_prev + 0.2 u + eps`,
/// `eps ~ N(0, 0.01^2)`, under uniform excitation in [-2, 2].
pub fn linear_plant_data(seed: u64, len: usize) -> Vec<(f64, f64, f64)> {
    let mut r = rng(seed);
    let mut y = 0.0;
    (0..len)
        .map(|_| {
            let u = r.random_range(-2.0..2.0);
            let eps = 0.01 * normal(&mut r);
            let next = 0.5 * y + 0.2 * u + eps;
            let row = (y, u, next);
            y = next;
            row
        })
        .collect()
}

/// Standard normal draw (Box-Muller).
pub fn normal<R: Rng>(r: &mut R) -> f64 {
    let a: f64 = r.random_range(f64::EPSILON..1.0);
    let b: f64 = r.random_range(0.0..1.0);
    (-2.0 * a.ln()).sqrt() * (2.0 * std::f64::consts::PI * b).cos()
}

pub struct MonitorTally {
    pub checked: usize,
    pub radius_below_one: usize,
    pub indeterminate: usize,
}

/// Trains a forward model on [`linear_plant_data`], then closes the loop
/// with the direct optimal control and runs the stability monitor every
/// second step.
pub fn linear_plant_monitor(seed: u64, steps: usize) -> MonitorTally {
    use mdn_control::control_law::{phi_jacobians, solve_u_direct, ModelPhi};
    use mdn_control::dual::ForwardSample;
    use mdn_control::nn::TrainState;
    use mdn_control::stability::assess;
    use mdn_control::{
        ChiVector, ControlBounds, CostWeights, ForwardModel, MdnHead, StateVector,
    };

    let data: Vec<ForwardSample<f64>> = linear_plant_data(seed, 800)
        .into_iter()
        .map(|(y, u, t)| ForwardSample { input: vec![y, u], target: t })
        .collect();
    let mut r = rng(seed ^ 0x5eed);
    let head = MdnHead::with_default_floor(2).unwrap();
    let mut fm = ForwardModel::init((1, 0), &[10], head, &mut r).unwrap();
    let mut state = TrainState::new(fm.net.params().len());
    fm.train(&data, &mut state, 300).unwrap();

    let w = CostWeights::new(0.4, 1.0, 0.001).unwrap();
    let bounds = ControlBounds::new(-5.0, 5.0).unwrap();
    let source = ModelPhi { model: &fm, weights: w };
    let mut z = StateVector::zeros(1, 0);
    let mut tally = MonitorTally { checked: 0, radius_below_one: 0, indeterminate: 0 };
    for k in 0..steps {
        let y_d = 0.4 * (2.0 * std::f64::consts::PI * k as f64 / 50.0).sin();
        let u = solve_u_direct(&fm, &z, y_d, &w, bounds).unwrap();
        if k % 2 == 0 {
            let chi = ChiVector::new(&z, y_d);
            let (d_chi, d_u) = phi_jacobians(&source, chi.as_slice(), u).unwrap();
            let report = assess(&fm, &z, u, &d_chi, d_u, w.q).unwrap();
            tally.checked += 1;
            match report.check {
                Some(c) if c.spectral_radius < 1.0 => tally.radius_below_one += 1,
                Some(_) => {}
                None => tally.indeterminate += 1,
            }
        }
        let y = 0.5 * z.outputs()[0] + 0.2 * u + 0.01 * normal(&mut r);
        z.push(y, u);
    }
    tally
}
