use std::path::Path;
use std::process::{Command, Output};

fn pcgrbm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcgrbm"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn write_blobs(dir: &Path) {
    let d = pcgrbm_core::data::synth_blobs(30, 3, 4, 6.0, 1).unwrap();
    let mut text = String::from("f0,f1,f2,f3,class\n");
    for (i, row) in d.features.rows().into_iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        text.push_str(&format!("{},c{}\n", cells.join(","), d.labels.as_ref().unwrap()[i]));
    }
    std::fs::write(dir.join("blobs.csv"), text).unwrap();
}

#[test]
fn stats_reproduces_published_statistic() {
    let dir = tempfile::tempdir().unwrap();
    let out = pcgrbm(&["stats", "--input", &fixture("rank_matrix_12x9.csv"), "--ranks"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("T=52.5741"), "{text}");
    assert!(text.contains("df=8"), "{text}");

    let json = pcgrbm(
        &["stats", "--input", &fixture("rank_matrix_12x9.csv"), "--ranks", "--format", "json"],
        dir.path(),
    );
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert!((v["T"].as_f64().unwrap() - 52.5741).abs() < 1e-3);
    assert_eq!(v["df"], 8);
}

#[test]
fn stats_on_scores_ranks_them_first() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.csv"), "dataset,x,y\na,1,2\nb,3,4\n").unwrap();
    let out = pcgrbm(&["stats", "--input", "s.csv"], dir.path());
    assert!(out.status.success());
    assert!(stdout(&out).contains("T=1.6000"), "{}", stdout(&out));
}

#[test]
fn missing_seed_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    write_blobs(dir.path());
    let out = pcgrbm(
        &["train-pcgrbm", "--input", "blobs.csv", "--labels-column", "class", "--fraction", "0.1", "--out", "m.txt"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = pcgrbm(&["stats", "--input", "x.csv", "--bogus"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = pcgrbm(&["stats", "--input", "missing.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn help_lists_flags_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = pcgrbm(&["train-pcgrbm", "--help"], dir.path());
    assert!(out.status.success());
    let text = stdout(&out);
    for needle in [
        "--input", "--labels-column", "--hidden", "--epochs", "--epsilon", "--lambda",
        "--sign-mode", "--constraints", "--fraction", "--seed", "--out",
        "default: 100", "default: 0.00000001", "default: 0.7", "paper-exact",
    ] {
        assert!(text.contains(needle), "missing {needle} in\n{text}");
    }
}

#[test]
fn train_extract_cluster_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_blobs(d);
    let run = |args: &[&str]| {
        let o = pcgrbm(args, d);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        o
    };

    run(&["normalize", "--input", "blobs.csv", "--labels-column", "class", "--out", "norm.csv"]);
    run(&[
        "train-pcgrbm", "--input", "blobs.csv", "--labels-column", "class", "--fraction", "0.2",
        "--hidden", "5", "--epochs", "4", "--epsilon", "0.01", "--sign-mode", "descent",
        "--seed", "3", "--out", "model.txt",
    ]);
    let model = std::fs::read_to_string(d.join("model.txt")).unwrap();
    assert!(model.starts_with("pcgrbm-model 1\nkind pcgrbm\n"));
    assert!(model.contains("sign-mode descent\n"));

    run(&["extract", "--model", "model.txt", "--input", "blobs.csv", "--labels-column", "class", "--out", "h.csv"]);
    let h = std::fs::read_to_string(d.join("h.csv")).unwrap();
    let mut lines = h.lines();
    assert_eq!(lines.next().unwrap(), "h0,h1,h2,h3,h4");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 30);
    assert!(rows.iter().flatten().all(|&v| v > 0.0 && v < 1.0));

    let again = |name: &str| {
        run(&["extract", "--model", "model.txt", "--input", "blobs.csv", "--labels-column", "class", "--out", name]);
        std::fs::read(d.join(name)).unwrap()
    };
    assert_eq!(again("h2.csv"), h.as_bytes());

    let out = run(&[
        "cluster", "--input", "norm.csv", "--labels-column", "label", "--algorithm", "kmeans",
        "--k", "3", "--seed", "1", "--out", "assign.csv",
    ]);
    assert!(stdout(&out).contains("accuracy="));
    let eval = run(&["evaluate", "--input", "assign.csv"]);
    let text = stdout(&eval);
    assert!(text.contains("accuracy=") && text.contains("purity="), "{text}");

    std::fs::write(d.join("c.csv"), "kind,i,j\nmust,0,1\ncannot,0,29\n").unwrap();
    run(&[
        "cluster", "--input", "norm.csv", "--labels-column", "label", "--algorithm", "cop-kmeans",
        "--k", "3", "--seed", "1", "--constraints", "c.csv", "--out", "cop.csv",
    ]);
    let cop = std::fs::read_to_string(d.join("cop.csv")).unwrap();
    let cluster_of = |row: usize| cop.lines().nth(row + 1).unwrap().split(',').nth(1).unwrap().to_string();
    assert_eq!(cluster_of(0), cluster_of(1));
    assert_ne!(cluster_of(0), cluster_of(29));

    run(&["train-grbm", "--input", "norm.csv", "--labels-column", "label", "--hidden", "4", "--seed", "2", "--out", "g.txt"]);
    assert!(std::fs::read_to_string(d.join("g.txt")).unwrap().contains("kind grbm\n"));
}

#[test]
fn ap_needs_no_k() {
    let dir = tempfile::tempdir().unwrap();
    write_blobs(dir.path());
    let out = pcgrbm(
        &["cluster", "--input", "blobs.csv", "--labels-column", "class", "--algorithm", "ap", "--seed", "0", "--out", "a.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let missing_k = pcgrbm(
        &["cluster", "--input", "blobs.csv", "--algorithm", "kmeans", "--seed", "0", "--out", "a.csv"],
        dir.path(),
    );
    assert_eq!(missing_k.status.code(), Some(2));
}
