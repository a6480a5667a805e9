use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
example = 1
hidden = 4
pretrain_steps = 200
pretrain_iters = 20
run_steps = 30
stability_period = 5
trailing_window = 10
";

fn mdnctl(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdnctl"))
        .args(args)
        .current_dir(dir)
        .env_remove("MDNCTL_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.cfg");
    std::fs::write(&path, SMALL).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn config_subcommand_applies_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let o = mdnctl(&["config", "--config", &cfg, "--set", "seed=42", "--set", "example=2"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("seed = 42"));
    assert!(text.contains("example = 2"));
    assert!(text.contains("q_weight = 0.01"));
    assert!(text.contains("hidden = 4"));
}

#[test]
fn bad_config_fails_with_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mdnctl(&["config", "--set", "no_such_key=1"], tmp.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("no_such_key"));

    let o = mdnctl(&["compare", "--config", "missing.cfg"], tmp.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("missing.cfg"));
}

#[test]
fn pretrain_then_run_from_snapshots() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("out");
    let o = mdnctl(&["pretrain", "--config", &cfg, "--out", out.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let snaps = out.join("snapshots");
    for f in ["forward.snap", "controller.snap", "baseline_forward.snap", "baseline_controller.snap"] {
        assert!(snaps.join(f).is_file(), "{f} missing");
    }

    for method in ["mdn", "baseline"] {
        let o = mdnctl(
            &[
                "run",
                "--config",
                &cfg,
                "--snapshot",
                snaps.to_str().unwrap(),
                "--method",
                method,
                "--out",
                out.to_str().unwrap(),
            ],
            tmp.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        let trace = std::fs::read_to_string(out.join(format!("{method}_trace.csv"))).unwrap();
        let mut lines = trace.lines();
        assert!(lines.next().unwrap().starts_with("k,r,y_d,y,u,e,J"));
        assert_eq!(lines.count(), 30);
    }

    let o = mdnctl(
        &["run", "--config", &cfg, "--snapshot", "nowhere"],
        tmp.path(),
    );
    assert!(!o.status.success());
    assert!(!stderr(&o).is_empty());
}

#[test]
fn compare_respects_env_output_dir_and_plots() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let env_out = tmp.path().join("from_env");
    let o = Command::new(env!("CARGO_BIN_EXE_mdnctl"))
        .args(["compare", "--config", &cfg])
        .current_dir(tmp.path())
        .env("MDNCTL_OUTPUT_DIR", &env_out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let mdn = env_out.join("mdn_trace.csv");
    let base = env_out.join("baseline_trace.csv");
    assert!(mdn.is_file() && base.is_file() && env_out.join("summary.csv").is_file());

    let svg = tmp.path().join("fig.svg");
    let o = mdnctl(
        &[
            "plots",
            "--trace",
            mdn.to_str().unwrap(),
            base.to_str().unwrap(),
            "--out",
            svg.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches(r#"<g class="panel">"#).count(), 4);

    let empty = tmp.path().join("empty.csv");
    let header = std::fs::read_to_string(&mdn).unwrap();
    std::fs::write(&empty, format!("{}\n", header.lines().next().unwrap())).unwrap();
    let o = mdnctl(&["plots", "--trace", empty.to_str().unwrap()], tmp.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("empty"));
}
