use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = "\
[deployment]
stations = 8

[simulation]
n_ues = 3
n_steps = 800

[mobility]
speed = 15.0

[task]
history = 3

[train]
episodes = 3
hidden = 8
";

fn mobseq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mobseq"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = mobseq(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Runs a failing command and returns (exit code, error kind, stderr).
fn fails(args: &[&str]) -> (i32, String, String) {
    let out = mobseq(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let stderr = String::from_utf8(out.stderr).unwrap();
    let line = stderr
        .lines()
        .find(|l| l.starts_with("error kind="))
        .unwrap_or_else(|| panic!("no error line in {stderr:?}"));
    let kind = line["error kind=".len()..].split(' ').next().unwrap().to_string();
    (out.status.code().unwrap(), kind, stderr)
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("config.toml"), config).unwrap();
        Workspace { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn config(&self) -> String {
        self.p("config.toml")
    }
}

fn data_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(str::to_string)
        .collect()
}

fn cyclic_trace(ws: &Workspace, name: &str, repeats: usize) -> String {
    let mut csv = String::from("ue_id,seq_index,cell_id,dwell_steps\n");
    for i in 0..repeats * 3 {
        csv.push_str(&format!("1,{i},{},4\n", i % 3 + 1));
    }
    fs::write(ws.path(name), csv).unwrap();
    ws.p(name)
}

#[test]
fn pipeline_writes_provenance_everywhere() {
    let ws = Workspace::new(SMALL);
    let c = ws.config();
    ok(&["generate", "--config", &c, "--out", &ws.p("dep.toml")]);
    ok(&["simulate", "--config", &c, "--deployment", &ws.p("dep.toml"), "--out", &ws.p("traces.csv")]);
    ok(&["train", "--config", &c, "--traces", &ws.p("traces.csv"), "--model", &ws.p("m.bin")]);
    ok(&["eval", "--config", &c, "--model", &ws.p("m.bin"), "--traces", &ws.p("traces.csv"), "--out", &ws.p("metrics.csv")]);
    for f in ["dep.toml", "traces.csv", "m.bin.loss.csv", "m.bin.dataset.toml", "metrics.csv"] {
        let text = fs::read_to_string(ws.path(f)).unwrap();
        let first = text.lines().next().unwrap();
        assert!(first.starts_with("# provenance config_hash="), "{f}: {first}");
        assert!(first.contains(" seed=") && first.contains(" version="), "{f}: {first}");
    }
    let traces = fs::read_to_string(ws.path("traces.csv")).unwrap();
    assert!(traces.contains("deployment_hash="));
    let meta = fs::read_to_string(ws.path("m.bin.dataset.toml")).unwrap();
    assert!(meta.contains("task_kind = \"cell_to_cell\""));
}

#[test]
fn loss_curve_has_one_row_per_episode() {
    let ws = Workspace::new(SMALL);
    let c = ws.config();
    ok(&["simulate", "--config", &c, "--out", &ws.p("t.csv")]);
    ok(&["train", "--config", &c, "--traces", &ws.p("t.csv"), "--model", &ws.p("m.bin"), "--episodes", "7", "--loss-curve", &ws.p("loss.csv")]);
    let rows = data_rows(&ws.path("loss.csv"));
    assert_eq!(rows.len(), 7);
    for (i, row) in rows.iter().enumerate() {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f[0], (i + 1).to_string());
        assert_eq!(f[1], "train");
        assert!(f[2].parse::<f64>().unwrap() > 0.0);
    }
    let text = fs::read_to_string(ws.path("loss.csv")).unwrap();
    assert!(text.lines().nth(1) == Some("episode,split,loss"));
}

#[test]
fn cyclic_trace_model_reaches_full_accuracy() {
    let ws = Workspace::new("[deployment]\nstations = 3\n[task]\nhistory = 3\n[train]\nlr = 0.01\n");
    let trace = cyclic_trace(&ws, "cyc.csv", 40);
    ok(&["train", "--config", &ws.config(), "--traces", &trace, "--model", &ws.p("m.bin"), "--episodes", "50"]);
    ok(&["eval", "--config", &ws.config(), "--model", &ws.p("m.bin"), "--traces", &trace, "--out", &ws.p("e.csv")]);
    let rows = data_rows(&ws.path("e.csv"));
    assert_eq!(rows, vec!["eval,3,1,1,1,accuracy,1".to_string()]);
}

#[test]
fn eval_emits_one_row_per_step() {
    let ws = Workspace::new(SMALL);
    let c = ws.config();
    ok(&["simulate", "--config", &c, "--out", &ws.p("t.csv")]);
    ok(&["train", "--config", &c, "--traces", &ws.p("t.csv"), "--model", &ws.p("m.bin"), "--horizon", "3"]);
    ok(&["eval", "--config", &c, "--model", &ws.p("m.bin"), "--traces", &ws.p("t.csv"), "--out", &ws.p("e.csv"), "--seed", "9"]);
    let rows = data_rows(&ws.path("e.csv"));
    assert_eq!(rows.len(), 3);
    for (k, row) in rows.iter().enumerate() {
        assert!(row.starts_with(&format!("eval,3,3,9,{},accuracy,", k + 1)), "{row}");
    }
}

#[test]
fn dwell_model_reports_mae() {
    let ws = Workspace::new(SMALL);
    let c = ws.config();
    ok(&["simulate", "--config", &c, "--out", &ws.p("t.csv")]);
    ok(&["train", "--config", &c, "--traces", &ws.p("t.csv"), "--model", &ws.p("m.bin"), "--task", "cell_dwell_to_dwell"]);
    ok(&["eval", "--config", &c, "--model", &ws.p("m.bin"), "--traces", &ws.p("t.csv"), "--out", &ws.p("e.csv")]);
    let rows = data_rows(&ws.path("e.csv"));
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("eval,3,1,1,1,mae,"));
}

#[test]
fn beam_log_and_beam_csv_both_train() {
    let ws = Workspace::new("[beam]\nn_ues = 2\nn_steps = 400\n[task]\nkind = \"beam_to_beam\"\nhistory = 2\n[train]\nepisodes = 2\nhidden = 8\n");
    let c = ws.config();
    ok(&["simulate", "--config", &c, "--beams", "--raw-log", "--out", &ws.p("log.csv")]);
    ok(&["simulate", "--config", &c, "--beams", "--out", &ws.p("beams.csv")]);
    assert!(fs::read_to_string(ws.path("log.csv")).unwrap().contains("timestamp,ue_id,beam_id"));
    assert!(fs::read_to_string(ws.path("beams.csv")).unwrap().contains("ue_id,seq_index,beam_id"));
    ok(&["train", "--config", &c, "--traces", &ws.p("log.csv"), "--model", &ws.p("a.bin")]);
    ok(&["train", "--config", &c, "--traces", &ws.p("beams.csv"), "--model", &ws.p("b.bin")]);
    // the raw log has no segment boundaries, so it yields at least as many windows
    let windows = |f: &str| -> usize {
        let meta = fs::read_to_string(ws.path(f)).unwrap();
        let line = meta.lines().find(|l| l.starts_with("train_windows")).unwrap();
        line.split('=').nth(1).unwrap().trim().parse().unwrap()
    };
    assert!(windows("a.bin.dataset.toml") >= windows("b.bin.dataset.toml"));
    assert!(windows("b.bin.dataset.toml") > 0);
}

#[test]
fn missing_output_is_usage_error() {
    let ws = Workspace::new(SMALL);
    for cmd in ["generate", "simulate"] {
        let (code, kind, _) = fails(&[cmd, "--config", &ws.config()]);
        assert_eq!((code, kind.as_str()), (2, "UsageError"));
    }
    let (_, kind, _) = fails(&["train", "--config", &ws.config(), "--traces", "x.csv"]);
    assert_eq!(kind, "UsageError");
}

#[test]
fn zero_steps_is_usage_error() {
    let ws = Workspace::new(SMALL);
    let (code, kind, _) = fails(&["simulate", "--config", &ws.config(), "--n-steps", "0", "--out", &ws.p("t.csv")]);
    assert_eq!((code, kind.as_str()), (2, "UsageError"));
    assert!(!ws.path("t.csv").exists());
}

#[test]
fn bad_flags_and_unknown_suite_are_usage_errors() {
    let (_, kind, _) = fails(&["simulate", "--no-such-flag"]);
    assert_eq!(kind, "UsageError");
    let ws = Workspace::new(SMALL);
    let (_, kind, stderr) = fails(&["suite", "--config", &ws.config(), "--name", "fig7", "--out-dir", &ws.p("o")]);
    assert_eq!(kind, "UsageError");
    assert!(stderr.contains("cell_accuracy"));
}

#[test]
fn unknown_config_key_fails_fast() {
    let ws = Workspace::new("[train]\nlearning_rate = 0.1\n");
    let (_, kind, stderr) = fails(&["generate", "--config", &ws.config(), "--out", &ws.p("d.toml")]);
    assert_eq!(kind, "InvalidConfig");
    assert!(stderr.contains("learning_rate"));
}

#[test]
fn vocabulary_mismatch_names_the_file() {
    let ws = Workspace::new("[deployment]\nstations = 2\n[task]\nhistory = 2\n");
    let trace = cyclic_trace(&ws, "three_cells.csv", 5);
    let (_, kind, stderr) = fails(&["train", "--config", &ws.config(), "--traces", &trace, "--model", &ws.p("m.bin")]);
    assert_eq!(kind, "VocabularyError");
    assert!(stderr.contains("three_cells.csv"), "{stderr}");
}

#[test]
fn eval_rejects_mismatched_tasks_and_empty_traces() {
    let ws = Workspace::new(SMALL);
    let c = ws.config();
    ok(&["simulate", "--config", &c, "--out", &ws.p("t.csv")]);
    ok(&["train", "--config", &c, "--traces", &ws.p("t.csv"), "--model", &ws.p("m.bin")]);
    let (model, out) = (ws.p("m.bin"), ws.p("e.csv"));
    let eval = |traces: &str, extra: &[&str]| {
        let mut args = vec!["eval", "--config", &c, "--model", &model, "--traces", traces, "--out", &out];
        args.extend_from_slice(extra);
        fails(&args).1
    };
    assert_eq!(eval(&ws.p("t.csv"), &["--history", "4"]), "TaskMismatchError");
    assert_eq!(eval(&ws.p("t.csv"), &["--task", "cell_dwell_to_cell"]), "TaskMismatchError");

    ok(&["simulate", "--config", &c, "--beams", "--n-steps", "50", "--out", &ws.p("b.csv")]);
    assert_eq!(eval(&ws.p("b.csv"), &[]), "TaskMismatchError");

    fs::write(ws.path("empty.csv"), "ue_id,seq_index,cell_id,dwell_steps\n").unwrap();
    assert_eq!(eval(&ws.p("empty.csv"), &[]), "EmptyDatasetError");
}

#[test]
fn suite_writes_metrics_and_curves() {
    let cfg = format!("{SMALL}\n[suite]\nseeds = [1, 2, 3]\nhistory_values = [2]\nhorizon_values = [1]\n");
    let ws = Workspace::new(&cfg);
    ok(&["suite", "--config", &ws.config(), "--name", "cell_accuracy", "--out-dir", &ws.p("out"), "--quiet"]);
    let metrics = ws.path("out/cell_accuracy/metrics.csv");
    let text = fs::read_to_string(&metrics).unwrap();
    assert!(text.starts_with("# provenance config_hash="));
    assert!(text.contains("seed=1;2;3"));
    assert_eq!(text.lines().nth(1), Some("suite,N,K,seed,k_step,metric,value"));
    for seed in 1..=3 {
        assert!(text.contains(&format!("cell_accuracy,2,1,{seed},1,accuracy,")));
        let curve = ws.path(&format!("out/cell_accuracy/loss_cell_to_cell_N2_K1_seed{seed}.csv"));
        assert_eq!(data_rows(&curve).len(), 3);
    }
}
