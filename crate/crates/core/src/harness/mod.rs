//! Configuration, pretraining, the online loops, comparison runs, traces
//! and figures.

pub mod compare;
pub mod config;
pub mod online;
pub mod plot;
pub mod pretrain;
pub mod trace;

pub use compare::{compare, compare_with, Comparison};
pub use config::{Example, ReferenceSource, RunConfig, TargetRule, OUTPUT_DIR_ENV};
pub use online::{run_baseline, run_mdn, RunStreams};
pub use plot::{emit_plots, render_svg};
pub use pretrain::{excitation_data, pretrain, PretrainReport, PretrainedModels};
pub use trace::{summarize, Method, SimTrace, StabilitySample, Summary, TraceRow};
