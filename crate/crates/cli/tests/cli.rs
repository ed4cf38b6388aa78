use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use raceway::pipeline::compute_metrics;
use raceway::{io, Agent, RunConfig, SeedPlan, OBSERVATION_DIM};

fn raceway(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_raceway")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) -> String {
    let o = raceway(args);
    assert!(o.status.success(), "raceway {args:?} failed: {}", stderr(&o));
    stdout(&o)
}

struct Work {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: String,
}

impl Work {
    fn new() -> Work {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let config = root.join("run.toml");
        std::fs::write(
            &config,
            "seed = 5\n\n[experiment]\ntrain_days = 1\ntest_days = 1\n\n[agent]\nhidden_width = 8\nupdates_per_epoch = 2\noffline_epochs = 4\nimitation_epochs = 2\nfinetune_epochs = 1\n",
        )
        .unwrap();
        Work { _dir: dir, config: config.to_string_lossy().into_owned(), root }
    }

    fn path(&self, name: &str) -> String {
        self.root.join(name).to_string_lossy().into_owned()
    }

    fn collect(&self) -> String {
        ok(&["collect", "--config", &self.config, "--out", &self.path("data")]);
        self.path("data/dataset.csv")
    }
}

fn active_windows(trace: &raceway::EpisodeTrace) -> usize {
    let mut prev = false;
    let mut n = 0;
    for r in &trace.records {
        n += usize::from(r.gate_active && !prev);
        prev = r.gate_active;
    }
    n
}

#[test]
fn missing_config_is_a_not_found_error() {
    let o = raceway(&["collect", "--config", "/no/such/run.toml"]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.starts_with("error[not-found]: config not found"), "{err}");
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let w = Work::new();
    std::fs::write(w.root.join("bad.toml"), "[pid]\nkp = -30.0\nkd = 1.0\n").unwrap();
    let o = raceway(&["show-config", "--config", &w.path("bad.toml")]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error[config]: config error at `pid.kd`"), "{}", stderr(&o));
}

#[test]
fn show_config_round_trips() {
    let w = Work::new();
    let text = ok(&["show-config", "--config", &w.config]);
    assert_eq!(RunConfig::parse(&text).unwrap(), RunConfig::load(Path::new(&w.config)).unwrap());
}

#[test]
fn collect_writes_one_row_per_completed_active_step() {
    let w = Work::new();
    let dataset = w.collect();
    let data = io::read_dataset(io::open(Path::new(&dataset)).unwrap()).unwrap();
    let trace = io::read_trace(io::open(Path::new(&w.path("data/trace_pid.csv"))).unwrap()).unwrap();
    assert_eq!(data.len(), trace.active_steps() - active_windows(&trace));
    assert_eq!(trace.records.len(), 8640);
}

#[test]
fn zero_epoch_training_checkpoints_the_initial_agent() {
    let w = Work::new();
    let dataset = w.collect();
    let out = w.path("zero");
    ok(&["train", "--config", &w.config, "--dataset", &dataset, "--epochs", "0", "--out", &out]);
    let text = std::fs::read_to_string(w.root.join("zero/agent.ckpt")).unwrap();
    let cfg = RunConfig::load(Path::new(&w.config)).unwrap();
    let agent_cfg = raceway::AgentConfig { offline_epochs: 0, ..cfg.agent.clone() };
    let mut rng = raceway::seeds::rng_from(SeedPlan::from_global(cfg.seed).agent_init);
    let fresh = Agent::new(agent_cfg, OBSERVATION_DIM, cfg.observation, &mut rng).unwrap();
    assert_eq!(Agent::from_text(&text).unwrap(), fresh);
    assert_eq!(std::fs::read_to_string(w.root.join("zero/loss.csv")).unwrap().lines().count(), 1);
}

#[test]
fn loss_curve_has_one_row_per_epoch_and_resume_keeps_optimizer_state() {
    let w = Work::new();
    let dataset = w.collect();
    let first = w.path("first");
    ok(&["train", "--config", &w.config, "--dataset", &dataset, "--epochs", "3", "--out", &first]);
    let history = io::read_loss_curve(io::open(&w.root.join("first/loss.csv")).unwrap()).unwrap();
    assert_eq!(history.len(), 3);

    let ckpt = w.path("first/agent.ckpt");
    let before = Agent::from_text(&std::fs::read_to_string(&ckpt).unwrap()).unwrap();
    let second = w.path("second");
    ok(&["train", "--config", &w.config, "--dataset", &dataset, "--resume", &ckpt, "--epochs", "2", "--out", &second]);
    let after = Agent::from_text(&std::fs::read_to_string(w.root.join("second/agent.ckpt")).unwrap()).unwrap();
    // two policy-gradient epochs of two updates each on top of the saved counters
    assert_eq!(after.critic_opt.step_count, before.critic_opt.step_count + 4);
    assert_eq!(after.actor_opt.step_count, before.actor_opt.step_count + 4);
}

#[test]
fn corrupt_dataset_row_is_reported_with_its_line() {
    let w = Work::new();
    let dataset = w.collect();
    let text = std::fs::read_to_string(&dataset).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[5] = "1,2,oops";
    std::fs::write(&dataset, lines.join("\n")).unwrap();
    let o = raceway(&["train", "--config", &w.config, "--dataset", &dataset, "--out", &w.path("t")]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error[csv]: malformed csv at line 6"), "{}", stderr(&o));
}

#[test]
fn deploy_without_fine_tuning_leaves_the_checkpoint_alone_and_reports_metrics() {
    let w = Work::new();
    let dataset = w.collect();
    ok(&["train", "--config", &w.config, "--dataset", &dataset, "--out", &w.path("m")]);
    let ckpt = w.path("m/agent.ckpt");
    let summary = ok(&["deploy", "--config", &w.config, "--checkpoint", &ckpt, "--out", &w.path("d")]);
    assert_eq!(std::fs::read(&ckpt).unwrap(), std::fs::read(w.root.join("d/agent_rl.ckpt")).unwrap());

    let trace = io::read_trace(io::open(&w.root.join("d/trace_rl.csv")).unwrap()).unwrap();
    let m = compute_metrics(&trace);
    assert_eq!(summary.trim_end(), format!("RL     iae={:.3} cce={:.3}", m.iae, m.cce));

    let o = raceway(&["deploy", "--config", &w.config, "--checkpoint", &ckpt, "--fine-tune", "--out", &w.path("d")]);
    assert!(stderr(&o).starts_with("error[invalid-parameter]"), "{}", stderr(&o));
}

#[test]
fn checkpoint_with_the_wrong_observation_size_is_rejected() {
    let w = Work::new();
    let cfg = RunConfig::load(Path::new(&w.config)).unwrap();
    let agent = Agent::new(cfg.agent, 7, cfg.observation, &mut raceway::seeds::rng_from(1)).unwrap();
    std::fs::write(w.root.join("seven.ckpt"), agent.to_text()).unwrap();
    let o = raceway(&["deploy", "--config", &w.config, "--checkpoint", &w.path("seven.ckpt"), "--out", &w.path("x")]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error[dimension-mismatch]"), "{}", stderr(&o));
}

#[test]
fn compare_writes_a_three_row_table_and_traces() {
    let w = Work::new();
    let out = w.path("cmp");
    let printed = ok(&["compare", "--config", &w.config, "--out", &out]);
    let table = std::fs::read_to_string(w.root.join("cmp/metrics.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "controller,iae,cce");
    let rows = io::read_metrics(table.as_bytes()).unwrap();
    let names: Vec<String> = rows.iter().map(|r| r.controller.to_string()).collect();
    assert_eq!(names, ["PID", "RL", "RL-FT"]);
    for name in ["pid", "rl", "rl-ft"] {
        let trace = io::read_trace(io::open(&w.root.join(format!("cmp/trace_{name}.csv"))).unwrap()).unwrap();
        assert_eq!(trace.records.len(), 8640);
    }
    assert!(printed.contains("ordering"));
    let again = ok(&["compare", "--config", &w.config, "--out", &out]);
    assert_eq!(printed, again);
    assert_eq!(std::fs::read_to_string(w.root.join("cmp/metrics.csv")).unwrap(), table);
}
