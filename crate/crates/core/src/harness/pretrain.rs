//! Offline excitation run and initial fits of all four networks.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use crate::baseline::{BaselinePair, TrackingSample};
use crate::control_law::solve_u_direct;
use crate::dual::{ControllerSample, ForwardModel, ForwardSample, InverseController, StateVector};
use crate::error::{Error, Result};
use crate::mdn::MdnHead;
use crate::nn::{read_snapshot, write_snapshot, Snapshot, TrainState};
use crate::plants::{excitation_controls, Plant, ReferenceKind, ReferenceSignal};

pub const FORWARD_TAG: &str = "forward";
pub const CONTROLLER_TAG: &str = "controller";
pub const BASELINE_FORWARD_TAG: &str = "baseline-forward";
pub const BASELINE_CONTROLLER_TAG: &str = "baseline-controller";

const SNAPSHOT_FILES: [(&str, &str); 4] = [
    (FORWARD_TAG, "forward.snap"),
    (CONTROLLER_TAG, "controller.snap"),
    (BASELINE_FORWARD_TAG, "baseline_forward.snap"),
    (BASELINE_CONTROLLER_TAG, "baseline_controller.snap"),
];

/// Independent random streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Excitation = 2,
    ExcitationNoise = 3,
    PretrainReference = 4,
    RunNoise = 5,
    RunReference = 6,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainedModels {
    pub forward: ForwardModel<f64>,
    pub controller: InverseController<f64>,
    pub baseline: BaselinePair<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainReport {
    pub train_samples: usize,
    pub heldout_samples: usize,
    pub forward_nll_initial: f64,
    pub forward_nll_final: f64,
    pub forward_nll_heldout: f64,
    /// RMSE of the mixture mean on the held-out split.
    pub forward_rmse_heldout: f64,
    pub controller_nll_final: f64,
    pub baseline_mse_heldout: f64,
    pub baseline_tracking_final: f64,
}

/// Excitation dataset `((z, u), y)` in time order.
pub fn excitation_data(cfg: &RunConfig) -> Result<Vec<ForwardSample<f64>>> {
    let noise = cfg.noise()?;
    let mut u_rng = stream_rng(cfg.seed, Stream::Excitation);
    let mut eps_rng = stream_rng(cfg.seed, Stream::ExcitationNoise);
    let controls = excitation_controls(
        cfg.pretrain_steps,
        cfg.excitation.0,
        cfg.excitation.1,
        cfg.excitation_hold,
        &mut u_rng,
    );
    let mut plant = Plant::new(cfg.example.plant_kind(), 0.0);
    let mut z = StateVector::zeros(cfg.lags.0, cfg.lags.1);
    let mut data = Vec::with_capacity(controls.len());
    for &u in &controls {
        let y = plant.apply(u, noise.sample(&mut eps_rng));
        if !y.is_finite() {
            return Err(Error::NonFinite("excitation output"));
        }
        data.push(ForwardSample {
            input: z.with(u),
            target: y,
        });
        z.push(y, u);
    }
    Ok(data)
}

/// Splits off the trailing 20% as a held-out set.
pub fn split_heldout<S>(data: &[S]) -> (&[S], &[S]) {
    let cut = data.len() - data.len() / 5;
    data.split_at(cut)
}

pub fn pretrain(cfg: &RunConfig) -> Result<(PretrainedModels, PretrainReport)> {
    cfg.validate()?;
    let data = excitation_data(cfg)?;
    let (train, heldout) = split_heldout(&data);
    let mut init_rng = stream_rng(cfg.seed, Stream::Init);
    let head = MdnHead::new(cfg.kernels, cfg.variance_floor)?;

    let mut forward = ForwardModel::init(cfg.lags, &cfg.hidden, head, &mut init_rng)?;
    let forward_nll_initial = forward.mean_nll(train)?;
    let mut state = TrainState::new(forward.net.params().len());
    let forward_nll_final = forward
        .train(train, &mut state, cfg.pretrain_iters)
        .map_err(|e| pretrain_error("forward model", e))?;
    let forward_nll_heldout = forward.mean_nll(heldout)?;
    let mut sq = 0.0;
    for s in heldout {
        let mean = forward.pdf_at(&s.input)?.moments().mean;
        sq += (mean - s.target).powi(2);
    }
    let forward_rmse_heldout = (sq / heldout.len() as f64).sqrt();

    // Controller targets: cost minimizers for reference-driven set points at
    // the states visited during excitation. File sequences shorter than the
    // excitation run are cycled.
    let (n, m) = cfg.lags;
    let bounds = cfg.bounds()?;
    let mut reference = ReferenceSignal::with_affine(
        cfg.reference_kind()?,
        cfg.reference_offset,
        cfg.reference_scale,
    );
    let mut ref_rng = stream_rng(cfg.seed, Stream::PretrainReference);
    let mut ref_model = cfg.example.reference_model();
    let mut ctl_batch = Vec::with_capacity(train.len());
    let mut trk_batch = Vec::with_capacity(train.len());
    for (k, s) in train.iter().enumerate() {
        let idx = match &reference.kind {
            ReferenceKind::Sequence(v) if !v.is_empty() => k % v.len(),
            _ => k,
        };
        let r = reference.value(idx, &mut ref_rng)?;
        let y_d = ref_model.step(r);
        let z = StateVector::from_slice(&s.input[..n + m], n, m)?;
        let u_star = solve_u_direct(&forward, &z, y_d, &cfg.weights, bounds)?;
        ctl_batch.push(ControllerSample {
            input: z.with(y_d),
            priors: forward.priors(&z, u_star)?,
            target: u_star,
        });
        trk_batch.push(TrackingSample {
            state: z.to_vec(),
            y_d,
        });
    }
    let mut controller = InverseController::init(cfg.lags, &cfg.hidden, head, &mut init_rng)?;
    let mut state = TrainState::new(controller.net.params().len());
    let controller_nll_final = controller
        .train(&ctl_batch, &mut state, cfg.pretrain_iters)
        .map_err(|e| pretrain_error("inverse controller", e))?;

    let mut baseline = BaselinePair::init(cfg.lags, &cfg.hidden, cfg.weights.q, &mut init_rng)?;
    let mut state = TrainState::new(baseline.forward.params().len());
    baseline
        .train_forward(train, &mut state, cfg.pretrain_iters)
        .map_err(|e| pretrain_error("baseline forward model", e))?;
    let baseline_mse_heldout = baseline.forward_loss_grad(baseline.forward.params(), heldout).0;
    let mut state = TrainState::new(baseline.controller.params().len());
    let baseline_tracking_final = baseline
        .train_controller(&trk_batch, &mut state, cfg.pretrain_iters)
        .map_err(|e| pretrain_error("baseline controller", e))?;

    let report = PretrainReport {
        train_samples: train.len(),
        heldout_samples: heldout.len(),
        forward_nll_initial,
        forward_nll_final,
        forward_nll_heldout,
        forward_rmse_heldout,
        controller_nll_final,
        baseline_mse_heldout,
        baseline_tracking_final,
    };
    Ok((
        PretrainedModels {
            forward,
            controller,
            baseline,
        },
        report,
    ))
}

fn pretrain_error(what: &str, e: Error) -> Error {
    Error::Diverged(format!("pretraining {what}: {e}"))
}

impl PretrainedModels {
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let nets = [
            &self.forward.net,
            &self.controller.net,
            &self.baseline.forward,
            &self.baseline.controller,
        ];
        for ((tag, file), net) in SNAPSHOT_FILES.iter().zip(nets) {
            let w = BufWriter::new(File::create(dir.join(file))?);
            write_snapshot(w, &Snapshot::of(tag, net))?;
        }
        Ok(())
    }

    /// Loads snapshots written by [`PretrainedModels::save`]; head and lag
    /// settings come from `cfg` and must agree with the stored layer sizes.
    pub fn load(dir: &Path, cfg: &RunConfig) -> Result<Self> {
        let mut nets = Vec::with_capacity(4);
        for (tag, file) in SNAPSHOT_FILES {
            let path = dir.join(file);
            let f = File::open(&path).map_err(|e| {
                Error::Snapshot(format!("cannot open {}: {e}", path.display()))
            })?;
            nets.push(read_snapshot(BufReader::new(f))?.expect_network::<f64>(tag)?);
        }
        let head = MdnHead::new(cfg.kernels, cfg.variance_floor)?;
        let mut it = nets.into_iter();
        let (f, c, bf, bc) = (
            it.next().unwrap(),
            it.next().unwrap(),
            it.next().unwrap(),
            it.next().unwrap(),
        );
        Ok(Self {
            forward: ForwardModel::new(f, head, cfg.lags)?,
            controller: InverseController::new(c, head, cfg.lags)?,
            baseline: BaselinePair::new(bf, bc, cfg.weights.q, cfg.lags)?,
        })
    }
}
