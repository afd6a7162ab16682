use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
[model]
word_dim = 8
char_in_dim = 4
char_dim = 8
conv_width = 3
hidden = 8

[training]
max_epochs = 1
batch_size = 32

[pretraining]
max_epochs = 1
batch_size = 32

[skipgram]
dim = 8
epochs = 1
"#;

fn titlepress(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_titlepress"))
        .current_dir(dir)
        .env_remove("TITLEPRESS_DEVICE")
        .env("RUST_LOG", "warn")
        .args(["--config", "tiny.toml", "--seed", "3"])
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn lines(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn full_pipeline_through_the_cli() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("tiny.toml"), TINY).unwrap();

    ok(titlepress(d, &["synth", "--count", "200", "--out", "raw.jsonl"]));
    ok(titlepress(d, &["normalize", "--in", "raw.jsonl", "--out", "pairs.jsonl"]));
    assert_eq!(lines(&d.join("pairs.jsonl")), 200);
    ok(titlepress(d, &["split", "--in", "pairs.jsonl", "--outdir", "data"]));
    assert_eq!(lines(&d.join("data/test.jsonl")), 40);
    ok(titlepress(d, &["build-vocab", "--in", "data/train.jsonl", "--out", "vocab.json"]));
    let vocab: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("vocab.json")).unwrap()).unwrap();
    assert!(vocab["words"].as_array().unwrap().len() > 20);

    ok(titlepress(d, &["train-skipgram", "--titles", "data/train.jsonl", "--out", "sg.json", "--vectors-out", "vec.txt"]));
    ok(titlepress(
        d,
        &["pretrain-gen", "--titles", "data/train.jsonl", "--skipgram", "sg.json", "--f", "0.25", "--window", "2", "--out", "corpus.jsonl"],
    ));
    let n_corpus = lines(&d.join("corpus.jsonl"));
    assert!(n_corpus > 4 * 144 && n_corpus <= 5 * 144, "{n_corpus}");

    ok(titlepress(
        d,
        &["pretrain", "--corpus", "corpus.jsonl", "--vocab", "vocab.json", "--vectors", "vec.txt", "--out", "pt.ckpt", "--outdir", "runs"],
    ));
    assert!(fs::read_to_string(d.join("runs/pretrain_history.csv")).unwrap().starts_with("epoch,train_loss,val_f1,val_em,lr,unfrozen_layers"));

    ok(titlepress(d, &["finetune", "--data", "data", "--vocab", "vocab.json", "--init", "pt.ckpt", "--out", "ft.ckpt", "--outdir", "runs"]));
    let stdout = ok(titlepress(
        d,
        &["evaluate", "--checkpoint", "ft.ckpt", "--vocab", "vocab.json", "--in", "data/test.jsonl", "--outdir", "runs"],
    ));
    let metrics: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    assert_eq!(metrics["n"], 40);
    let keys: Vec<&String> = metrics.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["em", "n", "rouge1_f1"]);
    assert!(d.join("runs/metrics.json").exists());

    ok(titlepress(
        d,
        &[
            "ablate", "--data", "data", "--vocab", "vocab.json", "--pretrained", "pt.ckpt", "--variant", "CB3SA", "--variant",
            "CB3SA+PT", "--outdir", "res",
        ],
    ));
    ok(titlepress(
        d,
        &["sweep", "--data", "data", "--vocab", "vocab.json", "--pretrained", "pt.ckpt", "--fractions", "0.5,1.0", "--outdir", "res"],
    ));
    ok(titlepress(d, &["report", "--outdir", "res"]));
    let table = fs::read_to_string(d.join("res/ablation.csv")).unwrap();
    assert!(table.starts_with("Model,F1,EM\nCB3SA,"));
    assert!(table.contains("\nCB3SA+PT,"));
    assert_eq!(lines(&d.join("res/sweep.csv")), 5);
    assert!(fs::read_to_string(d.join("res/sweep.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn standalone_corpus_and_pretrain_binaries() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("tiny.toml"), TINY).unwrap();
    ok(titlepress(d, &["synth", "--count", "60", "--out", "pairs.jsonl"]));
    let run = |bin: &str, args: &[&str]| {
        Command::new(bin).current_dir(d).env_remove("TITLEPRESS_DEVICE").args(args).output().unwrap()
    };
    ok(run(env!("CARGO_BIN_EXE_corpus"), &["build-vocab", "--in", "pairs.jsonl", "--out", "vocab.json"]));
    ok(run(env!("CARGO_BIN_EXE_corpus"), &["split", "--in", "pairs.jsonl", "--seed", "5", "--outdir", "d"]));
    assert_eq!(lines(&d.join("d/train.jsonl")) + lines(&d.join("d/val.jsonl")) + lines(&d.join("d/test.jsonl")), 60);
    ok(run(
        env!("CARGO_BIN_EXE_pretrain"),
        &["gen", "--config", "tiny.toml", "--titles", "pairs.jsonl", "--f", "0.25", "--window", "2", "--seed", "1", "--out", "c.jsonl"],
    ));
    let first: serde_json::Value =
        serde_json::from_str(fs::read_to_string(d.join("c.jsonl")).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(first["tokens"].as_array().unwrap().len(), first["labels"].as_array().unwrap().len());
}

#[test]
fn errors_exit_nonzero_with_a_message() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("tiny.toml"), TINY).unwrap();

    let out = Command::new(env!("CARGO_BIN_EXE_titlepress"))
        .current_dir(d)
        .env("TITLEPRESS_DEVICE", "cuda")
        .args(["synth", "--count", "5", "--out", "x.jsonl"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cuda"));

    let out = titlepress(d, &["evaluate", "--checkpoint", "missing.ckpt", "--vocab", "missing.json", "--in", "x.jsonl"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    fs::write(d.join("bad.toml"), "[model]\nhiden = 3\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_titlepress"))
        .current_dir(d)
        .args(["--config", "bad.toml", "synth", "--out", "x.jsonl"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("hiden"));

    let out = titlepress(d, &["ablate", "--data", ".", "--variant", "CB9"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("CB3SA-SA+MHSA8"));
}
