use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"seeds = [0, 1]
rounds = 2
batch_size = 10

[data]
num_labeled = 40
num_pool = 60
num_test = 50
num_classes = 3
dim = 3
spread = 1.0

[[classifiers]]
kind = "knn"
k = 5
"#;

fn activelab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_activelab"))
        .args(args)
        .current_dir(dir)
        .env("ACTIVELAB_OUTPUT_ROOT", dir.join("runs"))
        .output()
        .expect("spawn activelab")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn run_writes_one_row_per_seed_and_round() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir, "small.toml", SMALL);
    let out = dir.path().join("out");
    let o = activelab(&["run", "--config", &cfg, "--out", out.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    for name in ["config.toml", "results.json", "summary.csv", "accuracy.svg", "manifest.json"] {
        assert!(out.join(name).exists(), "missing {name}");
    }
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"results.csv\""));
}

#[test]
fn rerun_needs_force_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir, "small.toml", SMALL);
    let out = dir.path().join("out");
    let args = ["run", "--config", &cfg, "--out", out.to_str().unwrap()];
    assert!(activelab(&args, dir.path()).status.success());
    let first = fs::read(out.join("results.csv")).unwrap();

    let refused = activelab(&args, dir.path());
    assert!(!refused.status.success());
    assert!(stderr(&refused).contains("--force"), "{}", stderr(&refused));

    let mut forced = args.to_vec();
    forced.push("--force");
    let o = activelab(&forced, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(out.join("results.csv")).unwrap(), first);
}

#[test]
fn unknown_scorer_in_config_names_line_and_choices() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir, "bad.toml", "seeds = [0]\nscorer = \"bald\"\n");
    let out = dir.path().join("out");
    let o = activelab(&["run", "--config", &cfg, "--out", out.to_str().unwrap()], dir.path());
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("bad.toml:2"), "{err}");
    for name in ["activelab", "activelab_ensemble", "good_random", "entropy", "uncertainty", "alc", "disagreement"] {
        assert!(err.contains(name), "missing {name} in {err}");
    }
    assert!(!out.exists(), "no partial output directory");
}

#[test]
fn unknown_scorer_flag_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir, "small.toml", SMALL);
    let o = activelab(&["run", "--config", &cfg, "--scorer", "bald"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("good_random"), "{}", stderr(&o));
}

#[test]
fn run_defaults_to_output_root() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir, "small.toml", SMALL);
    let o = activelab(&["run", "--config", &cfg, "--seed", "4"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("runs/small/results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3);
    assert!(csv.lines().skip(1).all(|l| l.starts_with("4,")));
}

const PREDICTIONS: &str = "example_id,p_0,p_1\n\
a,0.9,0.1\n\
b,0.2,0.8\n\
c,0.6,0.4\n\
d,0.5,0.5\n\
e,0.7,0.3\n\
f,0.1,0.9\n";

const ANNOTATIONS: &str = "example_id,annotator_id,label\n\
a,x,0\n\
a,y,0\n\
b,x,1\n\
b,z,1\n\
c,y,1\n\
c,z,0\n";

#[test]
fn good_random_puts_unlabeled_first() {
    let dir = tempfile::tempdir().unwrap();
    let ann = write(&dir, "ann.csv", ANNOTATIONS);
    let preds = write(&dir, "preds.csv", PREDICTIONS);
    let args = ["score", "--annotations", &ann, "--predictions", &preds, "--scorer", "good_random", "--seed", "9"];
    let o = activelab(&args, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let pools: Vec<&str> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(pools, ["unlabeled", "unlabeled", "unlabeled", "labeled", "labeled", "labeled"]);
    assert_eq!(stdout(&activelab(&args, dir.path())), text);
}

#[test]
fn activelab_prefers_new_examples_when_everything_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let preds = write(
        &dir,
        "preds.csv",
        "example_id,p_0,p_1\na,0.8,0.2\nb,0.2,0.8\nc,0.8,0.2\nd,0.2,0.8\ne,0.8,0.2\n",
    );
    let ann = write(
        &dir,
        "ann.csv",
        "example_id,annotator_id,label\na,x,0\na,y,0\nb,x,1\nb,y,1\nc,z,0\n",
    );
    let o = activelab(&["score", "--annotations", &ann, "--predictions", &preds], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert!(rows[0].ends_with(",unlabeled") && rows[1].ends_with(",unlabeled"), "{text}");
}

#[test]
fn score_rejects_inconsistent_class_counts() {
    let dir = tempfile::tempdir().unwrap();
    let ann = write(&dir, "ann.csv", "example_id,annotator_id,label\na,x,2\n");
    let preds = write(&dir, "preds.csv", PREDICTIONS);
    let o = activelab(&["score", "--annotations", &ann, "--predictions", &preds], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("ann.csv:2"), "{}", stderr(&o));
}

#[test]
fn consensus_reports_every_annotator_once() {
    let dir = tempfile::tempdir().unwrap();
    let ann = write(&dir, "ann.csv", ANNOTATIONS);
    let preds = write(&dir, "preds.csv", PREDICTIONS);
    let out = dir.path().join("cons");
    let o = activelab(
        &["consensus", "--annotations", &ann, "--predictions", &preds, "--method", "majority_vote", "--out", out.to_str().unwrap()],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let consensus = fs::read_to_string(out.join("consensus.csv")).unwrap();
    let labels: Vec<&str> = consensus.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    // c is a tie broken by the model's 0.6 on class 0.
    assert_eq!(labels, ["0", "1", "0"]);
    let annotators = fs::read_to_string(out.join("annotators.csv")).unwrap();
    let mut ids: Vec<&str> = annotators.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    ids.sort_unstable();
    assert_eq!(ids, ["x", "y", "z"]);

    let again = activelab(
        &["consensus", "--annotations", &ann, "--predictions", &preds, "--out", out.to_str().unwrap()],
        dir.path(),
    );
    assert!(!again.status.success());
}

#[test]
fn report_draws_one_curve_per_scorer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir, "small.toml", SMALL);
    for scorer in ["activelab", "random"] {
        let out = dir.path().join(scorer);
        let o = activelab(
            &["run", "--config", &cfg, "--scorer", scorer, "--out", out.to_str().unwrap()],
            dir.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let out = dir.path().join("report");
    let o = activelab(&["report", "activelab", "random/results.csv", "--out", out.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let svg = fs::read_to_string(out.join("accuracy.svg")).unwrap();
    assert_eq!(svg.matches("class=\"curve\"").count(), 2);
    assert!(stdout(&o).contains("random"));

    let empty = activelab(&["report", "--out", "x"], dir.path());
    assert!(!empty.status.success());
}
