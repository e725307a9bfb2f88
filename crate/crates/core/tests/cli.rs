//! End-to-end runs of the `deepvar` binary.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use deepvar::corpus::load_bio_file;

fn deepvar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deepvar")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const DOCS: &str = "d1\tThe c.35delG mutation in GJB2 was common.\n\
                    d2\tCarriers of rs1042522 and p.(Arg72Pro) were genotyped.\n";

#[test]
fn prepare_writes_bio_and_reports_alignment() {
    let dir = tempfile::tempdir().unwrap();
    let text = dir.path().join("docs.txt");
    let ann = dir.path().join("ann.tsv");
    fs::write(&text, DOCS).unwrap();
    fs::write(&ann, "d1\t4\t12\tDNAMutation\tc.35delG\nd2\t12\t21\tSNP\trs1042522\n").unwrap();
    let out = dir.path().join("out");
    let o = deepvar(&["prepare", "--text", s(&text), "--annotations", s(&ann), "--out-dir", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("misaligned: 0"));
    let sentences = load_bio_file(&out.join("corpus.bio")).unwrap();
    assert_eq!(sentences.len(), 2);
    assert_eq!(sentences[0].tokens[1].text, "c.35delG");
    assert_eq!(sentences[0].tags[1].name(), "B-DNAMutation");
    assert_eq!(sentences[1].tags[2].name(), "B-SNP");

    fs::write(&ann, "d1\t4\t12\tDNAMutation\tc.35delG\nd2\t14\t21\tSNP\t1042522\n").unwrap();
    let o = deepvar(&["prepare", "--text", s(&text), "--annotations", s(&ann), "--out-dir", s(&out), "--holdout", "0.5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("misaligned: 1"));
    assert!(stdout(&o).contains("MidToken"));
    let report = fs::read_to_string(out.join("alignment_report.txt")).unwrap();
    assert!(report.contains("MidToken\td2\t14\t21"));
    let train = load_bio_file(&out.join("train.bio")).unwrap();
    let validation = load_bio_file(&out.join("validation.bio")).unwrap();
    assert_eq!(train.len() + validation.len(), 2);
}

#[test]
fn prepare_failures_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.txt");
    let o = deepvar(&["prepare", "--text", s(&missing), "--annotations", s(&missing), "--out-dir", s(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("nope.txt"));

    let text = dir.path().join("docs.txt");
    fs::write(&text, DOCS).unwrap();
    let ann = dir.path().join("ann.tsv");
    fs::write(&ann, "d1\t4\tx\tDNAMutation\tc.35delG\n").unwrap();
    let o = deepvar(&["prepare", "--text", s(&text), "--annotations", s(&ann), "--out-dir", s(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("ann.tsv:1:"), "{}", stderr(&o));

    assert_eq!(code(&deepvar(&["prepare", "--text", s(&text)])), 1);
    assert_eq!(code(&deepvar(&["frobnicate"])), 1);
    assert_eq!(code(&deepvar(&["--help"])), 0);
}

fn trained(dir: &Path) -> (PathBuf, PathBuf) {
    let config = common::write_synthetic_fixture(dir, 24, 8, 2);
    let run = dir.join("run");
    let o = deepvar(&["train", "--config", s(&config), "--out-dir", s(&run), "--jobs", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("epochs: 2"));
    (config, run)
}

#[test]
fn train_writes_artifacts_and_checkpoint_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let (_, run) = trained(dir.path());
    for f in ["config.toml", "train_log.jsonl", "model.ckpt", "timing.json", "report.json"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let log = fs::read_to_string(run.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["mean_loss"].as_f64().unwrap().is_finite());
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["status"]["status"], "completed");
    assert_eq!(report["split_sizes"]["train"], 18);
    assert_eq!(report["split_sizes"]["validation"], 6);

    let model = deepvar::network::checkpoint::load(&run.join("model.ckpt")).unwrap();
    let saved_config = deepvar::config::RunConfig::load(&run.join("config.toml")).unwrap();
    assert_eq!(model.config, saved_config.model);
}

#[test]
fn train_failures() {
    let dir = tempfile::tempdir().unwrap();
    let config = common::write_synthetic_fixture(dir.path(), 8, 2, 1);
    let mut text = fs::read_to_string(&config).unwrap();
    text = text.replace("[embeddings]\n", "[embeddings]\npath = \"missing.vec\"\n");
    fs::write(&config, &text).unwrap();
    let o = deepvar(&["train", "--config", s(&config), "--out-dir", s(&dir.path().join("r"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("missing.vec"), "{}", stderr(&o));

    fs::write(&config, text.replace("[model]\n", "[model]\nbogus = 1\n")).unwrap();
    let o = deepvar(&["train", "--config", s(&config), "--out-dir", s(&dir.path().join("r"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));
}

#[test]
fn tag_then_evaluate_agree() {
    let dir = tempfile::tempdir().unwrap();
    let (_, run) = trained(dir.path());
    let ckpt = run.join("model.ckpt");
    let test = dir.path().join("test.bio");

    let tagged = dir.path().join("tagged.txt");
    let o = deepvar(&["tag", "--checkpoint", s(&ckpt), "--input", s(&test), "--format", "bio", "--output", s(&tagged)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let predicted = tagged;

    let via_file = dir.path().join("eval-file");
    let via_ckpt = dir.path().join("eval-ckpt");
    let a = deepvar(&["evaluate", "--gold", s(&test), "--predicted", s(&predicted), "--out-dir", s(&via_file)]);
    let b = deepvar(&["evaluate", "--gold", s(&test), "--checkpoint", s(&ckpt), "--out-dir", s(&via_ckpt)]);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(code(&b), 0, "{}", stderr(&b));
    assert_eq!(stdout(&a), stdout(&b));
    assert_eq!(fs::read(via_file.join("eval.json")).unwrap(), fs::read(via_ckpt.join("eval.json")).unwrap());
    assert!(stdout(&a).contains("DNAMutation"));

    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    let eval: serde_json::Value = serde_json::from_str(&fs::read_to_string(via_ckpt.join("eval.json")).unwrap()).unwrap();
    assert_eq!(report["test"], eval);

    let text_in = dir.path().join("raw.txt");
    fs::write(&text_in, "The c.35delG mutation (rs334) was found.\n\n").unwrap();
    let o = deepvar(&["tag", "--checkpoint", s(&ckpt), "--input", s(&text_in)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("The\t"), "{out}");
    assert!(out.contains("\nrs334\t"));
    assert!(out.contains("## spans: "));
}

#[test]
fn tag_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let (_, run) = trained(dir.path());
    let ckpt = run.join("model.ckpt");
    let empty = dir.path().join("empty.txt");
    fs::write(&empty, "").unwrap();
    let o = deepvar(&["tag", "--checkpoint", s(&ckpt), "--input", s(&empty)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o), "");

    let mut bytes = fs::read(&ckpt).unwrap();
    let n = bytes.len();
    bytes[n - 1] ^= 0xff;
    let bad = dir.path().join("bad.ckpt");
    fs::write(&bad, bytes).unwrap();
    let o = deepvar(&["tag", "--checkpoint", s(&bad), "--input", s(&empty)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("checksum"), "{}", stderr(&o));

    let test = dir.path().join("test.bio");
    let short = dir.path().join("short.bio");
    let mut sentences = load_bio_file(&test).unwrap();
    sentences.pop();
    deepvar::corpus::save_bio_file(&short, &sentences).unwrap();
    let o = deepvar(&["evaluate", "--gold", s(&test), "--predicted", s(&short)]);
    assert_eq!(code(&o), 2);
    assert_eq!(code(&deepvar(&["evaluate", "--gold", s(&test)])), 1);
}

fn grid_config(dir: &Path, extra: &str) -> PathBuf {
    let config = common::write_synthetic_fixture(dir, 12, 4, 1);
    let mut text = fs::read_to_string(&config).unwrap();
    text.push_str(&format!(
        r#"
[grid]
char_encoder = ["cnn"]
max_char_length = [8]
char_emb_size = [0]
char_dropout = [0.0]
cnn_filters = [4]
cnn_window = [3]
char_lstm_states = [3]
word_lstm_states = [3]
word_lstm_dropout = [0.0]
units = [1]
hidden_states = [4, 6]
hidden_dropout = [0.0]
batch_size = [4]
optimizer = ["ADAM"]
word_embeddings = [{{ dim = 5 }}]
{extra}
"#
    ));
    fs::write(&config, text).unwrap();
    config
}

fn trial_dirs(root: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(root)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("trial-"))
        .collect();
    v.sort();
    v
}

#[test]
fn grid_budget_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let config = grid_config(dir.path(), "");
    let out = dir.path().join("grid");
    let o = deepvar(&["grid", "--config", s(&config), "--out-dir", s(&out), "--budget", "1", "--jobs", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(trial_dirs(&out).len(), 1);
    assert_eq!(fs::read_to_string(out.join("ranking.tsv")).unwrap().lines().count(), 2);

    let out = dir.path().join("full");
    let o = deepvar(&["grid", "--config", s(&config), "--out-dir", s(&out), "--jobs", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(trial_dirs(&out), vec!["trial-0000000", "trial-0000001"]);
    let timing = out.join("trial-0000001").join("timing.json");
    fs::write(&timing, "sentinel").unwrap();
    let ranking = fs::read(out.join("ranking.json")).unwrap();
    let o = deepvar(&["grid", "--config", s(&config), "--out-dir", s(&out), "--jobs", "2", "--resume"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&timing).unwrap(), "sentinel");
    assert_eq!(fs::read(out.join("ranking.json")).unwrap(), ranking);
}

#[test]
fn grid_rejects_bad_axes() {
    let dir = tempfile::tempdir().unwrap();
    let config = grid_config(dir.path(), "");
    let text = fs::read_to_string(&config).unwrap().replace("cnn_filters = [4]", "cnn_filters = []");
    fs::write(&config, text).unwrap();
    let o = deepvar(&["grid", "--config", s(&config), "--out-dir", s(&dir.path().join("g"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("grid.cnn_filters"), "{}", stderr(&o));

    let text = fs::read_to_string(&config).unwrap().replace("cnn_filters = []", "cnn_filters = [4]\nlayers = [2]");
    fs::write(&config, text).unwrap();
    let o = deepvar(&["grid", "--config", s(&config), "--out-dir", s(&dir.path().join("g"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("layers"), "{}", stderr(&o));
}
