use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mdn_control::harness::config::parse_pairs;
use mdn_control::harness::{
    compare, emit_plots, pretrain, run_baseline, run_mdn, summarize, PretrainedModels, RunConfig,
    RunStreams, SimTrace,
};
use mdn_control::Error;

#[derive(Parser)]
#[command(name = "mdnctl", version, about = "MDN-based probabilistic control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat key = value configuration file; example 1 defaults when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set seed=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; takes precedence over the config file and the
    /// MDNCTL_OUTPUT_DIR environment variable.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Mdn,
    Baseline,
}

#[derive(Subcommand)]
enum Command {
    /// Excitation run and offline fits; writes four parameter snapshots.
    Pretrain {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Online run from stored snapshots; writes a trace.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Directory written by `pretrain`.
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, value_enum, default_value = "mdn")]
        method: MethodArg,
    },
    /// Pretrain, then run both methods on identical streams; writes both
    /// traces and a summary.
    Compare {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Renders traces to an SVG figure.
    Plots {
        #[arg(long, required = true, num_args = 1..)]
        trace: Vec<PathBuf>,
        /// Output file.
        #[arg(long, short, default_value = "control_results.svg")]
        out: PathBuf,
    },
    /// Prints the effective configuration.
    Config {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig, Error> {
    let mut pairs = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            parse_pairs(&text)?
        }
        None => BTreeMap::new(),
    };
    for o in &args.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {o:?} is not KEY=VALUE")))?;
        pairs.insert(k.trim().to_string(), v.trim().to_string());
    }
    let mut cfg = RunConfig::from_pairs(pairs)?;
    cfg.apply_env();
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn write_trace(trace: &SimTrace, path: &Path) -> Result<(), Error> {
    trace.write(path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn halted(traces: &[&SimTrace]) -> Result<(), Error> {
    for t in traces {
        if let Some(reason) = &t.failure {
            return Err(Error::Halted {
                step: t.len(),
                reason: format!("{} run: {reason}", t.method.name()),
            });
        }
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Pretrain { cfg } => {
            let cfg = load_config(&cfg)?;
            let (models, report) = pretrain(&cfg)?;
            let dir = cfg.output_dir.join("snapshots");
            models.save(&dir)?;
            std::fs::write(cfg.output_dir.join("config.txt"), cfg.to_text())?;
            println!(
                "forward NLL {:.4} -> {:.4} (held-out {:.4}, mean RMSE {:.4})",
                report.forward_nll_initial,
                report.forward_nll_final,
                report.forward_nll_heldout,
                report.forward_rmse_heldout
            );
            println!("controller NLL {:.4}", report.controller_nll_final);
            println!(
                "baseline held-out MSE {:.4}, tracking cost {:.4}",
                report.baseline_mse_heldout, report.baseline_tracking_final
            );
            println!("snapshots in {}", dir.display());
        }
        Command::Run {
            cfg,
            snapshot,
            method,
        } => {
            let cfg = load_config(&cfg)?;
            let models = PretrainedModels::load(&snapshot, &cfg)?;
            let streams = RunStreams::generate(&cfg)?;
            let (trace, file) = match method {
                MethodArg::Mdn => (run_mdn(&cfg, &models, &streams)?, "mdn_trace.csv"),
                MethodArg::Baseline => (run_baseline(&cfg, &models, &streams)?, "baseline_trace.csv"),
            };
            write_trace(&trace, &cfg.output_dir.join(file))?;
            halted(&[&trace])?;
            let s = summarize(&trace, cfg.trailing_window)?;
            println!(
                "{}: mean e {:+.5}, std e {:.5}, mean J {:.5} over {} steps",
                s.method.name(),
                s.mean_e,
                s.std_e,
                s.mean_cost,
                s.window
            );
        }
        Command::Compare { cfg } => {
            let cfg = load_config(&cfg)?;
            let cmp = compare(&cfg)?;
            for path in cmp.write(&cfg.output_dir)? {
                println!("wrote {}", path.display());
            }
            halted(&[&cmp.mdn, &cmp.baseline])?;
            for s in &cmp.summary {
                println!(
                    "{:>8}: mean e {:+.5}, std e {:.5}, mean J {:.5} over {} steps",
                    s.method.name(),
                    s.mean_e,
                    s.std_e,
                    s.mean_cost,
                    s.window
                );
            }
        }
        Command::Plots { trace, out } => {
            let traces = trace
                .iter()
                .map(|p| SimTrace::read(p))
                .collect::<Result<Vec<_>, _>>()?;
            let panels = emit_plots(&traces, &out)?;
            println!("wrote {} ({panels} panels)", out.display());
        }
        Command::Config { cfg } => {
            print!("{}", load_config(&cfg)?.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mdnctl: error: {e}");
            ExitCode::FAILURE
        }
    }
}
