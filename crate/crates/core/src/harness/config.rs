//! Run configuration: flat `key = value` files with per-example defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::control_law::{ControlBounds, CostWeights};
use crate::error::{Error, Result};
use crate::plants::{read_reference_file, NoiseMixture, PlantKind, ReferenceKind, ReferenceModel};

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "MDNCTL_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example {
    /// Additive-noise plant.
    One,
    /// Multiplicative-noise plant.
    Two,
}

impl Example {
    pub fn id(self) -> u8 {
        match self {
            Example::One => 1,
            Example::Two => 2,
        }
    }

    pub fn plant_kind(self) -> PlantKind {
        match self {
            Example::One => PlantKind::Additive,
            Example::Two => PlantKind::Multiplicative,
        }
    }

    pub fn reference_model(self) -> ReferenceModel<f64> {
        match self {
            Example::One => ReferenceModel::additive(),
            Example::Two => ReferenceModel::multiplicative(),
        }
    }
}

/// How step 1 of the online loop obtains the control target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetRule {
    /// First-order recursive update, direct solve when the guard fires.
    Recursive,
    /// Direct minimization of the model cost every step.
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceSource {
    Kind(ReferenceKind),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub example: Example,
    pub kernels: usize,
    pub variance_floor: f64,
    /// `(n, m)`: lagged outputs and lagged controls in the state vector.
    pub lags: (usize, usize),
    pub hidden: Vec<usize>,
    pub weights: CostWeights<f64>,
    pub noise_weights: [f64; 2],
    pub reference: ReferenceSource,
    pub reference_offset: f64,
    pub reference_scale: f64,
    pub seed: u64,
    pub pretrain_steps: usize,
    /// SCG iterations for each offline fit.
    pub pretrain_iters: usize,
    pub excitation: (f64, f64),
    pub excitation_hold: usize,
    pub run_steps: usize,
    /// SCG iterations per online step for the forward models.
    pub forward_updates: usize,
    /// SCG iterations per online step for the controllers.
    pub controller_updates: usize,
    pub replay_size: usize,
    pub stability_period: usize,
    pub u_bounds: (f64, f64),
    pub target_rule: TargetRule,
    /// Largest Newton distance to stationarity accepted from the recursive
    /// update before falling back to the direct solve.
    pub recursive_tolerance: f64,
    pub trailing_window: usize,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn example(example: Example) -> Self {
        let (weights, reference_offset, reference_scale) = match example {
            Example::One => (CostWeights { r: 0.4, m: 1.0, q: 0.001 }, 0.75, 0.5),
            Example::Two => (CostWeights { r: 0.25, m: 1.0, q: 0.01 }, 0.0, 0.5),
        };
        Self {
            example,
            kernels: 2,
            variance_floor: 1e-6,
            lags: (1, 0),
            hidden: vec![10],
            weights,
            noise_weights: [0.5, 0.5],
            reference: ReferenceSource::Kind(ReferenceKind::sinusoid()),
            reference_offset,
            reference_scale,
            seed: 1,
            pretrain_steps: 2000,
            pretrain_iters: 300,
            excitation: (-2.0, 2.0),
            excitation_hold: 1,
            run_steps: 500,
            forward_updates: 1,
            controller_updates: 1,
            replay_size: 100,
            stability_period: 10,
            u_bounds: (-5.0, 5.0),
            target_rule: TargetRule::Recursive,
            recursive_tolerance: 0.05,
            trailing_window: 200,
            output_dir: PathBuf::from("out"),
        }
    }

    pub fn noise(&self) -> Result<NoiseMixture<f64>> {
        match self.example {
            Example::One => NoiseMixture::additive(self.noise_weights),
            Example::Two => NoiseMixture::multiplicative(self.noise_weights),
        }
    }

    pub fn bounds(&self) -> Result<ControlBounds<f64>> {
        ControlBounds::new(self.u_bounds.0, self.u_bounds.1)
    }

    pub fn reference_kind(&self) -> Result<ReferenceKind> {
        match &self.reference {
            ReferenceSource::Kind(k) => Ok(k.clone()),
            ReferenceSource::File(p) => Ok(ReferenceKind::Sequence(read_reference_file(p)?)),
        }
    }

    /// Parses `key = value` lines; `example` is applied first so that the
    /// remaining keys override its defaults.
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_pairs(parse_pairs(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Builds a config from a file's pairs with `overrides` applied on top.
    pub fn from_pairs(pairs: BTreeMap<String, String>) -> Result<Self> {
        let example = match pairs.get("example").map(String::as_str) {
            None | Some("1") => Example::One,
            Some("2") => Example::Two,
            Some(other) => return Err(Error::Config(format!("unknown example {other:?}"))),
        };
        let mut cfg = Self::example(example);
        for (k, v) in &pairs {
            if k != "example" {
                cfg.set(k, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "example" => {
                return Err(Error::Config("example must be chosen before other keys".into()))
            }
            "kernels" => self.kernels = parse(key, v)?,
            "variance_floor" => self.variance_floor = parse(key, v)?,
            "lags" => {
                let l = parse_list::<usize>(key, v)?;
                if l.len() != 2 {
                    return Err(Error::Config(format!("lags needs two values, got {v:?}")));
                }
                self.lags = (l[0], l[1]);
            }
            "hidden" => self.hidden = parse_list(key, v)?,
            "r_weight" => self.weights.r = parse(key, v)?,
            "m_weight" => self.weights.m = parse(key, v)?,
            "q_weight" => self.weights.q = parse(key, v)?,
            "noise_weights" => {
                let w = parse_list::<f64>(key, v)?;
                if w.len() != 2 {
                    return Err(Error::Config(format!("noise_weights needs two values, got {v:?}")));
                }
                self.noise_weights = [w[0], w[1]];
            }
            "reference" => {
                self.reference = match v {
                    "piecewise" => ReferenceSource::Kind(ReferenceKind::piecewise()),
                    "sinusoid" => ReferenceSource::Kind(ReferenceKind::sinusoid()),
                    _ => match v.strip_prefix("file:") {
                        Some(p) => ReferenceSource::File(PathBuf::from(p)),
                        None => {
                            return Err(Error::Config(format!(
                                "reference must be piecewise, sinusoid or file:PATH, got {v:?}"
                            )))
                        }
                    },
                }
            }
            "reference_offset" => self.reference_offset = parse(key, v)?,
            "reference_scale" => self.reference_scale = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "pretrain_steps" => self.pretrain_steps = parse(key, v)?,
            "pretrain_iters" => self.pretrain_iters = parse(key, v)?,
            "excitation" => {
                let l = parse_list::<f64>(key, v)?;
                if l.len() != 2 {
                    return Err(Error::Config(format!("excitation needs two values, got {v:?}")));
                }
                self.excitation = (l[0], l[1]);
            }
            "excitation_hold" => self.excitation_hold = parse(key, v)?,
            "run_steps" => self.run_steps = parse(key, v)?,
            "forward_updates" => self.forward_updates = parse(key, v)?,
            "controller_updates" => self.controller_updates = parse(key, v)?,
            "online_updates" => {
                let n = parse(key, v)?;
                self.forward_updates = n;
                self.controller_updates = n;
            }
            "replay_size" => self.replay_size = parse(key, v)?,
            "stability_period" => self.stability_period = parse(key, v)?,
            "u_bounds" => {
                let l = parse_list::<f64>(key, v)?;
                if l.len() != 2 {
                    return Err(Error::Config(format!("u_bounds needs two values, got {v:?}")));
                }
                self.u_bounds = (l[0], l[1]);
            }
            "target_rule" => {
                self.target_rule = match v {
                    "recursive" => TargetRule::Recursive,
                    "direct" => TargetRule::Direct,
                    _ => return Err(Error::Config(format!("unknown target_rule {v:?}"))),
                }
            }
            "recursive_tolerance" => self.recursive_tolerance = parse(key, v)?,
            "trailing_window" => self.trailing_window = parse(key, v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("kernels", self.kernels),
            ("pretrain_steps", self.pretrain_steps),
            ("pretrain_iters", self.pretrain_iters),
            ("run_steps", self.run_steps),
            ("forward_updates", self.forward_updates),
            ("controller_updates", self.controller_updates),
            ("replay_size", self.replay_size),
            ("stability_period", self.stability_period),
            ("trailing_window", self.trailing_window),
            ("excitation_hold", self.excitation_hold),
            ("lags.n", self.lags.0),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer sizes must be positive".into()));
        }
        if self.pretrain_steps < 5 {
            return Err(Error::Config("pretrain_steps must be at least 5".into()));
        }
        CostWeights::new(self.weights.r, self.weights.m, self.weights.q)?;
        if !(self.weights.q > 0.0) {
            return Err(Error::Config("q_weight must be positive for the recursive law".into()));
        }
        if !(self.recursive_tolerance >= 0.0) {
            return Err(Error::Config("recursive_tolerance must be non-negative".into()));
        }
        if !(self.variance_floor > 0.0) {
            return Err(Error::Config("variance_floor must be positive".into()));
        }
        if !(self.excitation.0 < self.excitation.1) {
            return Err(Error::Config("excitation range is empty".into()));
        }
        self.noise()?;
        self.bounds()?;
        Ok(())
    }

    /// Applies [`OUTPUT_DIR_ENV`] if set.
    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            if !dir.is_empty() {
                self.output_dir = PathBuf::from(dir);
            }
        }
    }

    /// Serializes back to the `key = value` format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let _ = writeln!(s, "example = {}", self.example.id());
        let _ = writeln!(s, "kernels = {}", self.kernels);
        let _ = writeln!(s, "variance_floor = {:?}", self.variance_floor);
        let _ = writeln!(s, "lags = {},{}", self.lags.0, self.lags.1);
        let _ = writeln!(s, "hidden = {}", join(&self.hidden));
        let _ = writeln!(s, "r_weight = {:?}", self.weights.r);
        let _ = writeln!(s, "m_weight = {:?}", self.weights.m);
        let _ = writeln!(s, "q_weight = {:?}", self.weights.q);
        let _ = writeln!(s, "noise_weights = {:?},{:?}", self.noise_weights[0], self.noise_weights[1]);
        let reference = match &self.reference {
            ReferenceSource::Kind(ReferenceKind::PiecewiseConstant { .. }) => "piecewise".to_string(),
            ReferenceSource::Kind(ReferenceKind::Sinusoid { .. }) => "sinusoid".to_string(),
            ReferenceSource::Kind(ReferenceKind::Sequence(_)) => "sinusoid".to_string(),
            ReferenceSource::File(p) => format!("file:{}", p.display()),
        };
        let _ = writeln!(s, "reference = {reference}");
        let _ = writeln!(s, "reference_offset = {:?}", self.reference_offset);
        let _ = writeln!(s, "reference_scale = {:?}", self.reference_scale);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "pretrain_steps = {}", self.pretrain_steps);
        let _ = writeln!(s, "pretrain_iters = {}", self.pretrain_iters);
        let _ = writeln!(s, "excitation = {:?},{:?}", self.excitation.0, self.excitation.1);
        let _ = writeln!(s, "excitation_hold = {}", self.excitation_hold);
        let _ = writeln!(s, "run_steps = {}", self.run_steps);
        let _ = writeln!(s, "forward_updates = {}", self.forward_updates);
        let _ = writeln!(s, "controller_updates = {}", self.controller_updates);
        let _ = writeln!(s, "replay_size = {}", self.replay_size);
        let _ = writeln!(s, "stability_period = {}", self.stability_period);
        let _ = writeln!(s, "u_bounds = {:?},{:?}", self.u_bounds.0, self.u_bounds.1);
        let rule = match self.target_rule {
            TargetRule::Recursive => "recursive",
            TargetRule::Direct => "direct",
        };
        let _ = writeln!(s, "target_rule = {rule}");
        let _ = writeln!(s, "recursive_tolerance = {:?}", self.recursive_tolerance);
        let _ = writeln!(s, "trailing_window = {}", self.trailing_window);
        let _ = writeln!(s, "output_dir = {}", self.output_dir.display());
        s
    }
}

/// Splits `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut pairs = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
        pairs.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(pairs)
}

fn parse<V: std::str::FromStr>(key: &str, v: &str) -> Result<V>
where
    V::Err: std::fmt::Display,
{
    v.parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {v:?}: {e}")))
}

fn parse_list<V: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<V>>
where
    V::Err: std::fmt::Display,
{
    v.split(',').map(|p| parse(key, p.trim())).collect()
}
