use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
max_rounds = 80
ranking_interval = 10

[data.synthetic]
num_clean_classes = 4
num_noise_classes = 2
instances_per_class = 30
feature_dim = 6
embedding_dim = 3
"#;

fn bsl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bsl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.toml");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_twice_gives_identical_pull_history() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = bsl(&["run", "--config", &cfg, "--out", s(out), "--seed", "3"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ha = fs::read(a.join("pull_history.csv")).unwrap();
    assert_eq!(ha, fs::read(b.join("pull_history.csv")).unwrap());
    assert!(ha.starts_with(b"timestep,class_id,reward\n"));
    for f in ["rewards.csv", "pull_counts.csv", "snapshots.csv", "f1.csv", "params.bin", "params.json", "gp_history.json", "summary.json"] {
        assert!(a.join(f).exists(), "{f}");
    }
}

#[test]
fn baseline_strategies_from_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("u");
    let o = bsl(&["run", "--config", &cfg, "--out", s(&out), "--strategy", "freq:2"]);
    assert!(o.status.success());
    let text = fs::read_to_string(out.join("pull_history.csv")).unwrap();
    // Header plus the full budget: baselines do not stop early.
    assert_eq!(text.lines().count(), 81);
    assert!(!out.join("gp_history.json").exists());
    let o = bsl(&["run", "--config", &cfg, "--out", s(&out), "--strategy", "nope"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn generate_then_run_eval_and_rank() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let data = dir.path().join("data");
    let o = bsl(&["generate", "--config", &cfg, "--out", s(&data)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["dataset.jsonl", "embeddings.txt", "clean_classes.txt", "config.toml"] {
        assert!(data.join(f).exists(), "{f}");
    }

    let runs = dir.path().join("runs");
    let o = bsl(&["multirun", "--config", s(&data.join("config.toml")), "--runs", "2", "--out", s(&runs)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let average = fs::read_to_string(runs.join("average_ranking.csv")).unwrap();
    assert_eq!(average.lines().count(), 7);

    let o = bsl(&["rank", "--runs", s(&runs.join("run_000")), s(&runs.join("run_001"))]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap(), average);

    let o = bsl(&[
        "eval",
        "--params",
        s(&runs.join("run_000/params.bin")),
        "--dataset",
        s(&data.join("dataset.jsonl")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.starts_with("rank,class_id,tp,fp,fn,precision,recall,f1\n"));
    assert_eq!(table.lines().count(), 7);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");

    let cfg = write_config(dir.path(), "beta = -1.0");
    assert_eq!(bsl(&["run", "--config", &cfg, "--out", s(&out)]).status.code(), Some(1));
    assert_eq!(bsl(&["run", "--config", "/nonexistent.toml", "--out", s(&out)]).status.code(), Some(1));
    assert_eq!(bsl(&["frobnicate"]).status.code(), Some(1));

    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"id\": 1}\n").unwrap();
    let emb = dir.path().join("e.txt");
    fs::write(&emb, "a 1 0\n").unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("embeddings = {:?}\n[data]\ndataset = {:?}\n", s(&emb), s(&bad)),
    );
    assert_eq!(bsl(&["run", "--config", &cfg, "--out", s(&out)]).status.code(), Some(2));

    // Features this large overflow the first parameter update.
    let huge = dir.path().join("huge.jsonl");
    let rows: String = ["train", "val", "test"]
        .iter()
        .map(|split| format!("{{\"id\":\"{split}\",\"features\":[1e300],\"labels\":[\"a\"],\"split\":\"{split}\"}}\n"))
        .collect();
    fs::write(&huge, rows).unwrap();
    fs::write(&emb, "a 1 0\n").unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("embeddings = {:?}\n[data]\ndataset = {:?}\n[learner]\nlearning_rate = 1e10\n", s(&emb), s(&huge)),
    );
    let o = bsl(&["run", "--config", &cfg, "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn json_config_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    fs::write(
        &p,
        r#"{"max_rounds": 20, "ranking_interval": 10,
            "data": {"synthetic": {"num_clean_classes": 3, "num_noise_classes": 1,
                     "instances_per_class": 20, "feature_dim": 4, "embedding_dim": 2}}}"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = bsl(&["run", "--config", s(&p), "--out", s(&out), "--strategy", "uniform"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}
