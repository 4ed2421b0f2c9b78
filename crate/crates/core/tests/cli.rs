use std::path::Path;
use std::process::Command;

const TINY: &str = r#"
seed = 1
[model]
embed_dim = 16
encoder_layers = 1
decoder_layers = 1
heads = 2
feedforward_dim = 16
max_seq_len = 64
[pretrain]
epochs = 30
batch_size = 16
lr = 0.003
[sft]
epochs = 40
batch_size = 8
lr = 0.001
[exit]
rounds = 1
samples = 2
lr = 0.0003
[dpo]
rounds = 1
samples = 8
lr = 0.0003
[rl]
steps = 2
batch_size = 8
group_size = 4
lr = 0.0003
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sketch-align"))
}

fn ok(cmd: &mut Command) -> Vec<u8> {
    let out = cmd.output().expect("binary runs");
    assert!(out.status.success(), "{cmd:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

/// datagen -> pretrain -> sft, outputs under `dir`.
fn prepare(dir: &Path) {
    std::fs::write(dir.join("tiny.toml"), TINY).unwrap();
    ok(bin().args(["datagen", "--count", "60", "--seed", "3", "--drop-prob", "0.1", "--out", &p(dir, "data.jsonl")]));
    ok(bin().args(["pretrain", "--data", &p(dir, "data.jsonl"), "--config", &p(dir, "tiny.toml"), "--out", &p(dir, "base.ckpt")]));
    ok(bin().args([
        "sft", "--data", &p(dir, "data.jsonl"), "--init", &p(dir, "base.ckpt"), "--config", &p(dir, "tiny.toml"),
        "--out", &p(dir, "sft.ckpt"),
    ]));
}

/// align from the SFT checkpoint, then eval; returns the aligned checkpoint path.
fn align_and_eval(dir: &Path, algo: &str) -> String {
    let ckpt = p(dir, &format!("{algo}.ckpt"));
    ok(bin().args([
        "align", "--algo", algo, "--data", &p(dir, "data.jsonl"), "--init", &p(dir, "sft.ckpt"), "--config",
        &p(dir, "tiny.toml"), "--out", &ckpt, "--log", &p(dir, &format!("{algo}.log.jsonl")),
    ]));
    ok(bin().args([
        "eval", "--model", &ckpt, "--data", &p(dir, "data.jsonl"), "--k", "4", "--seed", "5", "--split", "all",
        "--report", &p(dir, &format!("{algo}.report.json")),
    ]));
    ckpt
}

#[test]
fn pipeline_outputs_are_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [a.path(), b.path()] {
        prepare(d);
        align_and_eval(d, "rloo");
    }
    for f in ["data.jsonl", "base.ckpt", "sft.ckpt", "rloo.ckpt", "rloo.log.jsonl", "rloo.report.json"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(!x.is_empty(), "{f} is empty");
        assert!(x == y, "{f} differs between runs");
    }
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.path().join("rloo.report.json")).unwrap()).unwrap();
    assert_eq!(report["samples"], serde_json::json!(240));
    let log = std::fs::read_to_string(a.path().join("rloo.log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
}

#[test]
fn every_algorithm_runs_from_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    for algo in ["exit", "dpo", "remax", "grpo"] {
        let ckpt = align_and_eval(dir.path(), algo);
        assert!(Path::new(&ckpt).exists(), "{algo}");
    }
}

#[test]
fn solve_render_and_vocab() {
    let dir = tempfile::tempdir().unwrap();
    let sketch = r#"{"primitives":[{"id":0,"kind":"point","params":[0.0,0.0],"fixed":true},
        {"id":1,"kind":"point","params":[4.0,1.0],"fixed":false}],
        "constraints":[{"kind":"distance_dim","refs":[0,1],"value":5.0},{"kind":"horizontal","refs":[0,1]}]}"#;
    std::fs::write(dir.path().join("s.json"), sketch).unwrap();
    let out = ok(bin().args(["solve", "--sketch", &p(dir.path(), "s.json")]));
    let report: serde_json::Value = serde_json::from_slice(&out).unwrap();
    assert_eq!(report["category"], "fully_constrained");
    std::fs::write(dir.path().join("c.json"), r#"[{"kind":"distance_dim","refs":[0,1],"value":5.0}]"#).unwrap();
    let out = ok(bin().args(["solve", "--sketch", &p(dir.path(), "s.json"), "--constraints", &p(dir.path(), "c.json")]));
    assert_eq!(serde_json::from_slice::<serde_json::Value>(&out).unwrap()["category"], "under_constrained");
    ok(bin().args(["render", "--sketch", &p(dir.path(), "s.json"), "--out", &p(dir.path(), "s.svg")]));
    assert!(std::fs::read_to_string(dir.path().join("s.svg")).unwrap().contains("<svg"));
    let vocab: serde_json::Value = serde_json::from_slice(&ok(bin().arg("vocab"))).unwrap();
    assert_eq!(vocab["tokens"].as_array().unwrap().len(), 103);
}

#[test]
fn exit_codes() {
    assert_eq!(bin().arg("frobnicate").output().unwrap().status.code(), Some(2));
    assert_eq!(bin().args(["eval", "--model", "x"]).output().unwrap().status.code(), Some(2));
    assert_eq!(bin().args(["solve", "--sketch", "/does/not/exist.json"]).output().unwrap().status.code(), Some(1));
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
}
