use std::path::{Path, PathBuf};
use std::process::Command;

use gwt_core::NoAllocProbe;

fn gwt(args: &[&str]) -> i32 {
    let mut argv = vec!["gwt"];
    argv.extend_from_slice(args);
    gwt_cli::run(argv, &NoAllocProbe)
}

fn binary(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_gwt")).args(args).output().unwrap()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("config.json");
    let text = format!(
        r#"{{"d":8,"k":2,"layers":1,"ffn_mult":2,"vocab":12,"task":"copy","n":8,"steps":40,"seed":3,
            "lr":0.003,"warmup":10,"mode":"exact","cheb_order":16,"trunc_m":4,"accum":1,"patience":0,
            "eval_every":20,"val_size":8{extra}}}"#
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(binary(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(binary(&["gradcheck", "--bogus"]).status.code(), Some(2));
    assert_eq!(binary(&[]).status.code(), Some(2));
    assert_eq!(gwt(&["train"]), 2);
    assert_eq!(gwt(&["--help"]), 0);
}

#[test]
fn runtime_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.json");
    assert_eq!(
        gwt(&["build-graph", "--conllu", "/nonexistent.conllu", "--out", p(&out)]),
        1
    );
    let bad = dir.path().join("bad.conllu");
    std::fs::write(&bad, "1\tx\t_\t_\t_\t_\t7\t_\t_\t_\n").unwrap();
    let output = binary(&["build-graph", "--conllu", p(&bad), "--out", p(&out)]);
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("line 1"));
}

#[test]
fn gradcheck_passes_on_fresh_build() {
    assert_eq!(
        binary(&["gradcheck", "--seed", "0", "--tol", "1e-4"]).status.code(),
        Some(0)
    );
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.csv");
    assert_eq!(gwt(&["gradcheck", "--target", "mix", "--out", p(&report)]), 0);
    assert!(std::fs::read_to_string(&report)
        .unwrap()
        .starts_with("tensor,len,rel_err"));
    // An impossible tolerance is a failed check, not a usage error.
    assert_eq!(gwt(&["gradcheck", "--tol", "0"]), 1);
}

#[test]
fn build_graph_matches_hand_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.json");
    assert_eq!(
        gwt(&["build-graph", "--conllu", p(&fixture("tiny.conllu")), "--out", p(&out)]),
        0
    );
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    // The cat sat . : det(cat→The), nsubj(sat→cat), punct(sat→.)
    assert_eq!(v[0]["n"], 4);
    assert_eq!(v[0]["edges"], serde_json::json!([[1, 0], [2, 1], [2, 3]]));
    assert_eq!(v[0]["labels"], serde_json::json!(["The", "cat", "sat", "."]));
    // Dogs do n't bark loudly : the multiword range line is skipped.
    assert_eq!(v[1]["n"], 5);
    assert_eq!(v[1]["edges"], serde_json::json!([[3, 0], [3, 1], [3, 2], [3, 4]]));

    let one = dir.path().join("one.json");
    assert_eq!(
        gwt(&[
            "build-graph",
            "--conllu",
            p(&fixture("tiny.conllu")),
            "--out",
            p(&one),
            "--sentence",
            "1"
        ]),
        0
    );
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&one).unwrap()).unwrap();
    assert_eq!(v["n"], 5);
    assert_eq!(
        gwt(&[
            "build-graph",
            "--conllu",
            p(&fixture("tiny.conllu")),
            "--out",
            p(&one),
            "--sentence",
            "2"
        ]),
        1
    );
}

#[test]
fn train_eval_and_spectrum_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(gwt(&["train", "--config", p(&cfg), "--out", p(&a)]), 0);
    assert_eq!(gwt(&["train", "--config", p(&cfg), "--out", p(&b)]), 0);
    for f in ["checkpoint.json", "metrics.csv", "validation.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let metrics = std::fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("step,loss,lr,grad_norm\n"));
    assert_eq!(metrics.lines().count(), 41);

    let (e1, e2) = (dir.path().join("e1.json"), dir.path().join("e2.json"));
    let ckpt = a.join("checkpoint.json");
    assert_eq!(
        gwt(&[
            "eval",
            "--checkpoint",
            p(&ckpt),
            "--seed",
            "9",
            "--examples",
            "16",
            "--out",
            p(&e1)
        ]),
        0
    );
    assert_eq!(
        gwt(&[
            "eval",
            "--checkpoint",
            p(&ckpt),
            "--seed",
            "9",
            "--examples",
            "16",
            "--out",
            p(&e2)
        ]),
        0
    );
    assert_eq!(std::fs::read(&e1).unwrap(), std::fs::read(&e2).unwrap());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&e1).unwrap()).unwrap();
    assert_eq!(v["tokens"], 16 * 8);
    assert!(v["accuracy"].as_f64().unwrap() >= 0.0);
    let cheb = dir.path().join("e3.json");
    assert_eq!(
        gwt(&[
            "eval",
            "--checkpoint",
            p(&ckpt),
            "--mode",
            "chebyshev",
            "--out",
            p(&cheb)
        ]),
        0
    );

    let s = dir.path().join("s.csv");
    assert_eq!(gwt(&["spectrum", "--checkpoint", p(&ckpt), "--out", p(&s)]), 0);
    let csv = std::fs::read_to_string(&s).unwrap();
    assert!(csv.starts_with("lambda,g_1,g_2\n"));
    assert_eq!(csv.lines().count(), 513);
    assert_eq!(
        gwt(&["spectrum", "--checkpoint", p(&ckpt), "--layer", "3", "--out", p(&s)]),
        1
    );
    assert_eq!(
        gwt(&["spectrum", "--seed", "1", "--k", "3", "--d", "4", "--out", p(&s)]),
        0
    );
}

#[test]
fn train_on_conllu_graphs_and_reject_chebyshev() {
    let dir = tempfile::tempdir().unwrap();
    let extra = format!(r#","graph":"{}""#, p(&fixture("tiny.conllu")));
    let cfg = write_config(dir.path(), &extra);
    assert_eq!(
        gwt(&["train", "--config", p(&cfg), "--out", p(&dir.path().join("run"))]),
        0
    );
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("\"exact\"", "\"chebyshev\"");
    std::fs::write(&cfg, text).unwrap();
    assert_eq!(
        gwt(&["train", "--config", p(&cfg), "--out", p(&dir.path().join("run2"))]),
        1
    );
}

#[test]
fn bench_reports_allocation_from_binary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    let slopes = dir.path().join("slopes.csv");
    let o = binary(&[
        "bench",
        "--ns",
        "8,16",
        "--d",
        "4",
        "--k",
        "2",
        "--modes",
        "exact,truncated:4,chebyshev:8,attention",
        "--out",
        p(&out),
        "--slopes",
        p(&slopes),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(
        rows[0],
        "n,d,k,mode,seconds,eig_seconds,peak_alloc_bytes,checksum,ref_error,verified"
    );
    assert_eq!(rows.len(), 9);
    for row in &rows[1..] {
        let cols: Vec<&str> = row.split(',').collect();
        assert!(cols[6].parse::<u64>().unwrap() > 0, "{row}");
        assert_eq!(cols[9], "true");
    }
    assert_eq!(std::fs::read_to_string(&slopes).unwrap().lines().count(), 5);
    assert_eq!(gwt(&["bench", "--ns", "4", "--out", p(&out)]), 1);
    assert_eq!(gwt(&["bench", "--modes", "fft", "--out", p(&out)]), 1);
}
