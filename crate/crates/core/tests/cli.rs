use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use membot_core::checkpoint::{Checkpoint, FORMAT_VERSION};
use membot_core::diffmath::Parameterized;

const SMALL: &str = "\
width = 8
head_hidden = 8
iterations = 24
pretrain_batch_size = 8
window = 8
steps = 240
finetune_batch_size = 8
warmup = 80
eval_every = 80
eval_episodes = 2
replay_window = 8
";

fn membot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_membot"))
        .args(args)
        .env("MEMBOT_THREADS", "1")
        .output()
        .expect("spawn membot")
}

fn ok(args: &[&str]) -> String {
    let out = membot(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let f = Fixture {
            dir: tempfile::tempdir().unwrap(),
        };
        fs::write(f.path("small.toml"), SMALL).unwrap();
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn demos(&self, task: &str, seed: u64) -> PathBuf {
        let p = self.path(&format!("{task}-{seed}.jsonl"));
        if !p.exists() {
            ok(&[
                "collect",
                "--task",
                task,
                "--episodes",
                "12",
                "--seed",
                &seed.to_string(),
                "--out",
                s(&p),
            ]);
        }
        p
    }

    fn pretrain(&self, variant: &str, out: &str) -> PathBuf {
        let demos = self.demos("reach", 1);
        let dir = self.path(out);
        ok(&[
            "pretrain",
            "--demos",
            s(&demos),
            "--config",
            s(&self.path("small.toml")),
            "--variant",
            variant,
            "--out",
            s(&dir),
        ]);
        dir.join("checkpoint.mbt")
    }
}

#[test]
fn collect_reports_pairs_and_is_deterministic() {
    let f = Fixture::new();
    let a = f.path("a.jsonl");
    let b = f.path("b.jsonl");
    let out = ok(&["collect", "--task", "reach", "--seed", "4", "--out", s(&a)]);
    assert!(out.starts_with("60 episodes, "), "{out}");
    let pairs: usize = out
        .split(", ")
        .nth(1)
        .unwrap()
        .split(' ')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(pairs > 60 && pairs <= 2400, "{pairs}");
    ok(&["collect", "--task", "reach", "--seed", "4", "--out", s(&b)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn collect_usage_errors_exit_2() {
    let f = Fixture::new();
    let out = membot(&["collect", "--task", "fly", "--out", s(&f.path("x.jsonl"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown task 'fly'"));
    let out = membot(&[
        "collect",
        "--task",
        "reach",
        "--episodes",
        "0",
        "--out",
        s(&f.path("x.jsonl")),
    ]);
    assert_eq!(code(&out), 2);
    assert_eq!(code(&membot(&["collect", "--task", "reach"])), 2);
}

#[test]
fn norecon_loss_column_is_zero() {
    let f = Fixture::new();
    let ck = f.pretrain("lstm-norecon", "norecon");
    let csv = fs::read_to_string(ck.with_file_name("loss.csv")).unwrap();
    let mut rows = 0;
    for line in csv.lines().skip(1) {
        assert_eq!(line.split(',').nth(2), Some("0"), "{line}");
        rows += 1;
    }
    assert_eq!(rows, 24);
}

#[test]
fn multi_task_demos_share_one_encoder() {
    let f = Fixture::new();
    let files: Vec<PathBuf> = [
        ("reach", 1),
        ("push", 2),
        ("memory-reach", 3),
        ("latch-drawer", 4),
        ("reach", 5),
    ]
    .iter()
    .map(|&(t, seed)| f.demos(t, seed))
    .collect();
    let dir = f.path("multi");
    let cfg = f.path("small.toml");
    let mut args = vec!["pretrain", "--demos"];
    args.extend(files.iter().map(|p| s(p)));
    args.extend(["--config", s(&cfg), "--variant", "ssm", "--out", s(&dir)]);
    ok(&args);
    let agent = Checkpoint::load(&dir.join("checkpoint.mbt"))
        .unwrap()
        .agent()
        .unwrap();
    assert_eq!(agent.normalizers.len(), 4);
    assert_eq!(agent.obs_width(), 6);
}

#[test]
fn interrupted_pretraining_resumes_exactly() {
    let f = Fixture::new();
    let demos = f.demos("reach", 1);
    let cfg = f.path("small.toml");
    let full = f.path("full");
    ok(&[
        "pretrain",
        "--demos",
        s(&demos),
        "--config",
        s(&cfg),
        "--seed",
        "3",
        "--out",
        s(&full),
    ]);

    let part = f.path("part");
    ok(&[
        "pretrain",
        "--demos",
        s(&demos),
        "--config",
        s(&cfg),
        "--seed",
        "3",
        "--stop-after",
        "10",
        "--out",
        s(&part),
    ]);
    let partial = fs::read_to_string(part.join("loss.csv")).unwrap();
    assert_eq!(partial.lines().count(), 11);
    let resumed = f.path("resumed");
    ok(&[
        "pretrain",
        "--demos",
        s(&demos),
        "--resume",
        s(&part.join("checkpoint.mbt")),
        "--out",
        s(&resumed),
    ]);
    for file in ["checkpoint.mbt", "loss.csv", "config.toml"] {
        assert_eq!(
            fs::read(full.join(file)).unwrap(),
            fs::read(resumed.join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn corrupt_demo_line_is_cited() {
    let f = Fixture::new();
    let demos = f.demos("reach", 1);
    let mut text = fs::read_to_string(&demos).unwrap();
    text.push_str("{\"obs\": [[0.0]]\n");
    let bad = f.path("bad.jsonl");
    fs::write(&bad, text).unwrap();
    let out = membot(&["pretrain", "--demos", s(&bad), "--out", s(&f.path("o"))]);
    assert_ne!(code(&out), 0);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.jsonl:14:"), "{err}");
}

#[test]
fn zero_step_finetune_keeps_parameters() {
    let f = Fixture::new();
    let ck = f.pretrain("lstm", "pre");
    let out = f.path("ft0");
    ok(&[
        "finetune",
        "--ckpt",
        s(&ck),
        "--task",
        "reach",
        "--steps",
        "0",
        "--config",
        s(&f.path("small.toml")),
        "--out",
        s(&out),
    ]);
    let before = Checkpoint::load(&ck).unwrap().agent().unwrap();
    let after = Checkpoint::load(&out.join("checkpoint.mbt"))
        .unwrap()
        .agent()
        .unwrap();
    assert_eq!(before.named_params(), after.named_params());
    assert_eq!(before.normalizers, after.normalizers);
    let csv = fs::read_to_string(out.join("train.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn finetune_curve_follows_eval_cadence() {
    let f = Fixture::new();
    let ck = f.pretrain("ssm", "pre");
    let out = f.path("ft");
    let stdout = ok(&[
        "finetune",
        "--ckpt",
        s(&ck),
        "--task",
        "memory-reach",
        "--p-obs",
        "0.7",
        "--demos",
        s(&f.demos("memory-reach", 2)),
        "--config",
        s(&f.path("small.toml")),
        "--out",
        s(&out),
    ]);
    assert!(stdout.contains("240 env steps"), "{stdout}");
    assert!(stdout.contains("160 updates, 80 BC updates"), "{stdout}");
    let csv = fs::read_to_string(out.join("train.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 240 / 80);
    let ck = Checkpoint::load(&out.join("checkpoint.mbt")).unwrap();
    assert_eq!(ck.counters().unwrap().joint_updates, 160);
    assert!(ck.has_optimizers());
}

#[test]
fn finetune_dimension_mismatch_exits_2() {
    let f = Fixture::new();
    let ck = f.pretrain("lstm", "pre");
    let out = membot(&[
        "finetune",
        "--ckpt",
        s(&ck),
        "--task",
        "push",
        "--steps",
        "0",
        "--out",
        s(&f.path("x")),
    ]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("[4, 2] vs [6, 2]"), "{err}");
}

#[test]
fn memoryless_baselines_start_fresh() {
    let f = Fixture::new();
    for (variant, tag) in [
        ("memoryless", "memoryless"),
        ("memoryless-mlp", "memoryless-mlp-encoder"),
    ] {
        let out = f.path(variant);
        let stdout = ok(&[
            "finetune",
            "--variant",
            variant,
            "--task",
            "reach",
            "--steps",
            "100",
            "--config",
            s(&f.path("small.toml")),
            "--out",
            s(&out),
        ]);
        assert!(stdout.starts_with(tag), "{stdout}");
        let agent = Checkpoint::load(&out.join("checkpoint.mbt"))
            .unwrap()
            .agent()
            .unwrap();
        assert_eq!(agent.variant.tag(), tag);
        assert!(agent.net.observer.is_none());
    }
    let ck = f.pretrain("ssm", "pre");
    let out = membot(&[
        "finetune",
        "--ckpt",
        s(&ck),
        "--variant",
        "lstm",
        "--task",
        "reach",
        "--out",
        s(&f.path("y")),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn sweep_records_failed_cells() {
    let f = Fixture::new();
    let reach = f.pretrain("ssm", "reach");
    let push_demos = f.demos("push", 2);
    let push = f.path("push");
    ok(&[
        "pretrain",
        "--demos",
        s(&push_demos),
        "--config",
        s(&f.path("small.toml")),
        "--out",
        s(&push),
    ]);
    let out = f.path("sweep");
    let stdout = ok(&[
        "sweep",
        "--ckpts",
        s(&reach),
        s(&push.join("checkpoint.mbt")),
        "--task",
        "push",
        "--p-grid",
        "0.5:1.0:0.25",
        "--episodes",
        "3",
        "--seeds",
        "2",
        "--expert",
        "--out",
        s(&out),
    ]);
    assert!(stdout.contains("6 cells evaluated, 3 failed"), "{stdout}");
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(results.contains("membot-ssm,push,0.5,N/A,N/A,N/A,N/A"));
    assert!(results.contains("membot-lstm-full,push,1,"));
    assert!(out.join("plotdata/push_success_rate.tsv").exists());

    let all_bad = membot(&[
        "sweep",
        "--ckpts",
        s(&reach),
        "--task",
        "push",
        "--p-grid",
        "1.0",
        "--episodes",
        "2",
        "--seeds",
        "1",
        "--out",
        s(&f.path("bad")),
    ]);
    assert_eq!(code(&all_bad), 1);
}

#[test]
fn sweep_usage_errors_and_arithmetic_check() {
    let f = Fixture::new();
    assert_eq!(
        code(&membot(&[
            "sweep",
            "--task",
            "reach",
            "--out",
            s(&f.path("x"))
        ])),
        2
    );
    let stdout = ok(&["sweep", "--check-reference-arithmetic"]);
    assert!(stdout.contains("360 entries"), "{stdout}");
    let dev: f64 = stdout
        .split("max deviation ")
        .nth(1)
        .unwrap()
        .split(' ')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(dev <= 0.1);
    let ck = f.pretrain("ssm", "pre");
    let bad_grid = membot(&[
        "sweep",
        "--ckpts",
        s(&ck),
        "--task",
        "reach",
        "--p-grid",
        "0.5:0.9:0.1",
        "--out",
        s(&f.path("g")),
    ]);
    assert_eq!(code(&bad_grid), 2);
}

#[test]
fn sweep_output_independent_of_thread_count() {
    let f = Fixture::new();
    let ck = f.pretrain("lstm", "pre");
    let run = |threads: &str, out: &Path| {
        let o = Command::new(env!("CARGO_BIN_EXE_membot"))
            .args([
                "sweep",
                "--ckpts",
                s(&ck),
                "--task",
                "reach",
                "--p-grid",
                "0.6:1.0:0.2",
                "--episodes",
                "4",
                "--seeds",
                "2",
                "--expert",
                "--out",
                s(out),
            ])
            .env("MEMBOT_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success());
    };
    run("1", &f.path("t1"));
    run("3", &f.path("t3"));
    for file in [
        "results.csv",
        "degradation.csv",
        "plotdata/reach_mean_return.tsv",
    ] {
        assert_eq!(
            fs::read(f.path("t1").join(file)).unwrap(),
            fs::read(f.path("t3").join(file)).unwrap()
        );
    }
    let o = Command::new(env!("CARGO_BIN_EXE_membot"))
        .args([
            "sweep",
            "--ckpts",
            s(&ck),
            "--task",
            "reach",
            "--out",
            s(&f.path("t0")),
        ])
        .env("MEMBOT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn evaluate_writes_one_row() {
    let f = Fixture::new();
    let ck = f.pretrain("ssm", "pre");
    let out = f.path("ev");
    ok(&[
        "evaluate",
        "--ckpt",
        s(&ck),
        "--task",
        "reach",
        "--p",
        "0.8",
        "--episodes",
        "5",
        "--seeds",
        "2",
        "--out",
        s(&out),
    ]);
    let text = fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("membot-ssm,reach,0.8,"));
}

#[test]
fn checkpoint_version_mismatch_is_reported() {
    let f = Fixture::new();
    let ck = f.pretrain("ssm", "pre");
    let mut bytes = fs::read(&ck).unwrap();
    bytes[8..12].copy_from_slice(&(FORMAT_VERSION + 7).to_le_bytes());
    let bad = f.path("old.mbt");
    fs::write(&bad, bytes).unwrap();
    let out = membot(&[
        "evaluate",
        "--ckpt",
        s(&bad),
        "--task",
        "reach",
        "--out",
        s(&f.path("e")),
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("version 8"));
}
