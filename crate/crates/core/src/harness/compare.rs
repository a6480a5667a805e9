//! Paired MDN / baseline runs on identical noise and reference streams.

use std::path::{Path, PathBuf};

use super::config::RunConfig;
use super::online::{run_baseline, run_mdn, RunStreams};
use super::pretrain::{pretrain, PretrainReport, PretrainedModels};
use super::trace::{summarize, summary_csv, SimTrace, Summary};
use crate::error::{Error, Result};

pub const MDN_TRACE_FILE: &str = "mdn_trace.csv";
pub const BASELINE_TRACE_FILE: &str = "baseline_trace.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub pretrain: PretrainReport,
    pub mdn: SimTrace,
    pub baseline: SimTrace,
    pub summary: Vec<Summary>,
}

impl Comparison {
    pub fn mdn_summary(&self) -> &Summary {
        &self.summary[0]
    }

    pub fn baseline_summary(&self) -> &Summary {
        &self.summary[1]
    }

    pub fn halted(&self) -> bool {
        self.mdn.failure.is_some() || self.baseline.failure.is_some()
    }

    /// Writes both traces and the summary; returns the written paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let paths = vec![
            dir.join(MDN_TRACE_FILE),
            dir.join(BASELINE_TRACE_FILE),
            dir.join(SUMMARY_FILE),
        ];
        self.mdn.write(&paths[0])?;
        self.baseline.write(&paths[1])?;
        std::fs::write(&paths[2], summary_csv(&self.summary))?;
        Ok(paths)
    }
}

/// Runs both methods from already pretrained models. The two runs share only
/// immutable inputs and execute on separate threads.
pub fn compare_with(cfg: &RunConfig, models: &PretrainedModels) -> Result<(SimTrace, SimTrace)> {
    let streams = RunStreams::generate(cfg)?;
    let (mdn, baseline) = std::thread::scope(|s| {
        let mdn = s.spawn(|| run_mdn(cfg, models, &streams));
        let baseline = run_baseline(cfg, models, &streams);
        (mdn.join(), baseline)
    });
    let mdn = mdn.map_err(|_| Error::Trace("MDN run panicked".into()))??;
    Ok((mdn, baseline?))
}

pub fn compare(cfg: &RunConfig) -> Result<Comparison> {
    let (models, report) = pretrain(cfg)?;
    let (mdn, baseline) = compare_with(cfg, &models)?;
    let summary = vec![
        summarize_or_empty(&mdn, cfg.trailing_window)?,
        summarize_or_empty(&baseline, cfg.trailing_window)?,
    ];
    Ok(Comparison {
        pretrain: report,
        mdn,
        baseline,
        summary,
    })
}

fn summarize_or_empty(trace: &SimTrace, window: usize) -> Result<Summary> {
    if trace.is_empty() {
        return Ok(Summary {
            method: trace.method,
            window: 0,
            mean_e: f64::NAN,
            std_e: f64::NAN,
            mean_cost: f64::NAN,
        });
    }
    summarize(trace, window)
}
