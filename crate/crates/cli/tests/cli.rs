use std::path::Path;
use std::process::{Command, Output};

fn polyset(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polyset")).arg("--out-dir").arg(out).args(args).output().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn moments_examples() {
    let dir = tempfile::tempdir().unwrap();
    let o = polyset(dir.path(), &["moments", "--family", "lognormal", "--mn", "1e6", "--disp", "3"]);
    assert!(o.status.success());
    let m = json(&dir.path().join("moments.json"));
    let analytic = m["analytic"]["mz_plus_1"].as_f64().unwrap();
    let empirical = m["empirical"]["mz_plus_1"].as_f64().unwrap();
    assert!((analytic / 2.7e7 - 1.0).abs() < 1e-12);
    assert!((empirical / analytic - 1.0).abs() < 0.02);
    assert!(dir.path().join("moments.config.json").is_file());

    let o = polyset(dir.path(), &["moments", "--family", "schulz-zimm", "--mn", "1e6", "--disp", "3"]);
    assert!(o.status.success());
    let m = json(&dir.path().join("moments.json"));
    assert!((m["analytic"]["mz_plus_1"].as_f64().unwrap() / 7e6 - 1.0).abs() < 1e-12);

    assert!(polyset(dir.path(), &["moments", "--mn", "1e5", "--disp", "1"]).status.success());
    let e = &json(&dir.path().join("moments.json"))["empirical"];
    assert_eq!(e["mn"], e["mz_plus_1"]);
}

#[test]
fn gen_dataset_is_reproducible_and_validated() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = polyset(d.path(), &["--seed", "7", "gen-dataset", "--records", "1e2"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["corpus.jsonl", "mn_histogram.csv", "mn_dispersity_bins.csv", "tail_moment_scatter.csv", "mz1_vs_mn.svg", "coverage.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let lines = std::fs::read_to_string(a.path().join("corpus.jsonl")).unwrap().lines().count();
    assert_eq!(lines, 101);

    let o = polyset(a.path(), &["gen-dataset", "--disp-min", "1.0"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("dispersity"));
    assert!(!polyset(a.path(), &["gen-dataset", "--records", "10"]).status.success());
}

#[test]
fn train_eval_pca_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(polyset(d, &["gen-dataset", "--records", "160", "--chains", "128"]).status.success());
    let corpus = d.join("corpus.jsonl");
    let corpus = corpus.to_str().unwrap();

    let o = polyset(d, &["train-eval", "--corpus", corpus, "--repr", "baseline", "--target", "mz", "--epochs", "20"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["learning_curve.csv", "learning_curve.svg", "parity.csv", "parity.svg", "smape_distribution.csv", "metrics.json", "checkpoint.json"] {
        assert!(d.join(format!("baseline_mz_{f}")).is_file(), "{f}");
    }
    let metrics = json(&d.join("baseline_mz_metrics.json"));
    assert!(metrics["test"]["r2"].is_number());
    assert!(metrics.get("wall_clock_secs").is_none());
    assert!(d.join("split.json").is_file());

    let split = d.join("split.json");
    let o = polyset(d, &["train-eval", "--corpus", corpus, "--split", split.to_str().unwrap(), "--epochs", "5"]);
    assert!(o.status.success());

    assert!(polyset(d, &["embed", "--corpus", corpus, "--repr", "baseline"]).status.success());
    assert_eq!(std::fs::read_to_string(d.join("embeddings_baseline.jsonl")).unwrap().lines().count(), 161);

    assert!(polyset(d, &["degeneracy-report", "--corpus", corpus]).status.success());
    assert!(json(&d.join("degeneracy_summary.json"))["mean_within_group_std_log10_mz1"].as_f64().unwrap() > 0.0);

    let o = polyset(d, &["pca", "--mn", "1e6", "--disp", "3", "--records", "40"]);
    assert!(o.status.success());
    let summary = json(&d.join("pca_polyset_summary.json"));
    assert!(summary["spearman_pc_vs_logmz1"].as_f64().unwrap() >= 0.9);
    assert!(d.join("pca_polyset_projections.csv").is_file() && d.join("pca_polyset.svg").is_file());

    let o = polyset(d, &["pca", "--mn", "1e6", "--disp", "3", "--repr", "baseline"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("degenerate embeddings"));

    assert!(!polyset(d, &["pca", "--corpus", corpus]).status.success());
    assert!(!polyset(d, &["train-eval", "--corpus", "does-not-exist.jsonl"]).status.success());
}
