//! The online control loops for the MDN controller and the baseline.

use std::collections::VecDeque;

use super::config::{RunConfig, TargetRule};
use super::pretrain::{stream_rng, PretrainedModels, Stream};
use super::trace::{Method, SimTrace, StabilitySample, TraceRow};
use crate::baseline::{BaselinePair, TrackingSample};
use crate::control_law::{
    cost, phi_jacobians, recursive_u, solve_u_direct, ChiVector, ModelPhi, PhiSource,
};
use crate::dual::{error_pdf, ControllerSample, ForwardModel, ForwardSample, InverseController, StateVector};
use crate::error::{Error, Result};
use crate::nn::TrainState;
use crate::plants::{Plant, ReferenceSignal};
use crate::stability::assess;

/// Noise and reference inputs of one run, shared by both methods.
#[derive(Debug, Clone, PartialEq)]
pub struct RunStreams {
    pub noise: Vec<f64>,
    pub reference: Vec<f64>,
}

impl RunStreams {
    pub fn generate(cfg: &RunConfig) -> Result<Self> {
        let noise_model = cfg.noise()?;
        let mut rng = stream_rng(cfg.seed, Stream::RunNoise);
        let noise = (0..cfg.run_steps).map(|_| noise_model.sample(&mut rng)).collect();
        let mut rng = stream_rng(cfg.seed, Stream::RunReference);
        let reference = ReferenceSignal::with_affine(
            cfg.reference_kind()?,
            cfg.reference_offset,
            cfg.reference_scale,
        )
        .sequence(cfg.run_steps, &mut rng)?;
        Ok(Self { noise, reference })
    }

    pub fn len(&self) -> usize {
        self.noise.len().min(self.reference.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn push_bounded<S>(buf: &mut VecDeque<S>, item: S, cap: usize) {
    if buf.len() == cap {
        buf.pop_front();
    }
    buf.push_back(item);
}

fn finite(v: f64, what: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Mutable state of the MDN loop between steps.
struct MdnLoop<'a> {
    cfg: &'a RunConfig,
    forward: ForwardModel<f64>,
    controller: InverseController<f64>,
    forward_state: TrainState<f64>,
    controller_state: TrainState<f64>,
    forward_buf: VecDeque<ForwardSample<f64>>,
    controller_buf: VecDeque<ControllerSample<f64>>,
    plant: Plant<f64>,
    z: StateVector<f64>,
    u_prev: f64,
    /// `(chi, u*)` of the previous step.
    last_target: Option<(ChiVector<f64>, f64)>,
}

impl MdnLoop<'_> {
    fn target(&self, chi: &ChiVector<f64>, y_d: f64) -> Result<f64> {
        let bounds = self.cfg.bounds()?;
        let w = &self.cfg.weights;
        if let (TargetRule::Recursive, Some((chi_prev, u_prev))) =
            (self.cfg.target_rule, &self.last_target)
        {
            let source = ModelPhi {
                model: &self.forward,
                weights: *w,
            };
            let step = recursive_u(*u_prev, chi_prev, chi, &source, w.q)?;
            if !step.guard_violated {
                let u = bounds.clamp(step.u);
                // Newton distance to stationarity under the current model.
                let residual = source.phi(chi.as_slice(), u)? + (w.q + w.q) * u;
                let newton = residual / (w.q + w.q + step.dphi_du);
                if newton.abs() <= self.cfg.recursive_tolerance {
                    return Ok(u);
                }
            }
        }
        solve_u_direct(&self.forward, &self.z, y_d, w, bounds)
    }

    fn step(&mut self, k: usize, r: f64, y_d: f64, eps: f64) -> Result<TraceRow> {
        let cfg = self.cfg;
        let bounds = cfg.bounds()?;
        let w = cfg.weights;
        let chi = ChiVector::new(&self.z, y_d);

        // 1. optimal control target
        let u_star = finite(self.target(&chi, y_d)?, "control target")?;

        // 2. move the inverse controller toward it
        let train_priors = self.forward.priors(&self.z, u_star)?;
        let sample = ControllerSample {
            input: self.z.with(y_d),
            priors: train_priors,
            target: u_star,
        };
        push_bounded(&mut self.controller_buf, sample, cfg.replay_size);
        self.controller.train(
            self.controller_buf.make_contiguous(),
            &mut self.controller_state,
            cfg.controller_updates,
        )?;
        let last = self.controller_buf.back().expect("buffer is non-empty");
        let nll_controller = finite(
            self.controller
                .pdf_at(&last.input, &last.priors)?
                .nll(u_star)
                .value,
            "controller NLL",
        )?;

        // 3. most probable branch; priors from the last applied control
        let select_priors = self.forward.priors(&self.z, self.u_prev)?;
        let u = bounds.clamp(
            self.controller
                .control_pdf(&self.z, y_d, &select_priors)?
                .most_probable(),
        );
        let u = finite(u, "control")?;

        // 4. plant
        let y = finite(self.plant.apply(u, eps), "plant output")?;

        // 5. forward model update on the observed output
        let nll_forward = finite(
            self.forward.output_pdf(&self.z, u)?.nll(y).value,
            "forward NLL",
        )?;
        let sample = ForwardSample {
            input: self.z.with(u),
            target: y,
        };
        push_bounded(&mut self.forward_buf, sample, cfg.replay_size);
        self.forward.train(
            self.forward_buf.make_contiguous(),
            &mut self.forward_state,
            cfg.forward_updates,
        )?;

        // 6. bookkeeping and periodic stability monitor
        let output = self.forward.output_pdf(&self.z, u)?;
        let j = finite(cost(&error_pdf(&output, y_d), u, &w), "cost")?;
        let stability = if k.is_multiple_of(cfg.stability_period) {
            let source = ModelPhi {
                model: &self.forward,
                weights: w,
            };
            let (d_chi, d_u) = phi_jacobians(&source, chi.as_slice(), u)?;
            let report = assess(&self.forward, &self.z, u, &d_chi, d_u, w.q)?;
            Some(report.check.map(|c| StabilitySample {
                spectral_norm: c.spectral_norm,
                spectral_radius: c.spectral_radius,
                stable: c.stable,
            }))
        } else {
            None
        };

        self.last_target = Some((chi, u_star));
        self.z.push(y, u);
        self.u_prev = u;
        Ok(TraceRow {
            k,
            r,
            y_d,
            y,
            u,
            e: y - y_d,
            cost: j,
            nll_forward: Some(nll_forward),
            nll_controller: Some(nll_controller),
            stability,
        })
    }
}

/// Runs the six-step MDN loop. A non-finite value or failed update halts the
/// run; the rows so far are kept and `failure` is set.
pub fn run_mdn(cfg: &RunConfig, models: &PretrainedModels, streams: &RunStreams) -> Result<SimTrace> {
    cfg.validate()?;
    let forward = models.forward.clone();
    let controller = models.controller.clone();
    let mut lp = MdnLoop {
        cfg,
        forward_state: TrainState::new(forward.net.params().len()),
        controller_state: TrainState::new(controller.net.params().len()),
        forward,
        controller,
        forward_buf: VecDeque::with_capacity(cfg.replay_size),
        controller_buf: VecDeque::with_capacity(cfg.replay_size),
        plant: Plant::new(cfg.example.plant_kind(), 0.0),
        z: StateVector::zeros(cfg.lags.0, cfg.lags.1),
        u_prev: 0.0,
        last_target: None,
    };
    let mut reference = cfg.example.reference_model();
    let mut trace = SimTrace::new(Method::Mdn);
    for k in 0..streams.len() {
        let r = streams.reference[k];
        let y_d = reference.step(r);
        match lp.step(k, r, y_d, streams.noise[k]) {
            Ok(row) => trace.rows.push(row),
            Err(e) => {
                trace.failure = Some(format!("step {k}: {e}"));
                break;
            }
        }
    }
    Ok(trace)
}

/// Runs the baseline loop on the same streams: control, plant, then one
/// update of each network.
pub fn run_baseline(
    cfg: &RunConfig,
    models: &PretrainedModels,
    streams: &RunStreams,
) -> Result<SimTrace> {
    cfg.validate()?;
    let bounds = cfg.bounds()?;
    let q = cfg.weights.q;
    let mut bp: BaselinePair<f64> = models.baseline.clone();
    let mut forward_state = TrainState::new(bp.forward.params().len());
    let mut controller_state = TrainState::new(bp.controller.params().len());
    let mut forward_buf = VecDeque::with_capacity(cfg.replay_size);
    let mut tracking_buf = VecDeque::with_capacity(cfg.replay_size);
    let mut plant = Plant::new(cfg.example.plant_kind(), 0.0);
    let mut z = StateVector::zeros(cfg.lags.0, cfg.lags.1);
    let mut reference = cfg.example.reference_model();
    let mut trace = SimTrace::new(Method::Baseline);

    for k in 0..streams.len() {
        let r = streams.reference[k];
        let y_d = reference.step(r);
        let mut step = || -> Result<TraceRow> {
            let u = finite(bp.control(&z, y_d, bounds)?, "control")?;
            let y = finite(plant.apply(u, streams.noise[k]), "plant output")?;
            push_bounded(&mut forward_buf, ForwardSample { input: z.with(u), target: y }, cfg.replay_size);
            bp.train_forward(forward_buf.make_contiguous(), &mut forward_state, cfg.forward_updates)?;
            push_bounded(
                &mut tracking_buf,
                TrackingSample { state: z.to_vec(), y_d },
                cfg.replay_size,
            );
            bp.train_controller(tracking_buf.make_contiguous(), &mut controller_state, cfg.controller_updates)?;
            let e = y - y_d;
            let j = finite(e * e + q * u * u, "cost")?;
            z.push(y, u);
            Ok(TraceRow {
                k,
                r,
                y_d,
                y,
                u,
                e,
                cost: j,
                nll_forward: None,
                nll_controller: None,
                stability: None,
            })
        };
        match step() {
            Ok(row) => trace.rows.push(row),
            Err(e) => {
                trace.failure = Some(format!("step {k}: {e}"));
                break;
            }
        }
    }
    Ok(trace)
}
