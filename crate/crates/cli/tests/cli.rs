use std::path::Path;
use std::process::{Command, Output};

fn treetomo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_treetomo")).args(args).env_remove("TREETOMO_SEED").output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn value(out: &Output, key: &str) -> String {
    stdout(out)
        .lines()
        .find_map(|l| l.strip_prefix(key).map(|v| v.trim().to_owned()))
        .unwrap_or_else(|| panic!("no {key} in {}", stdout(out)))
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_owned()
}

#[test]
fn rational_star_roundtrip_is_exact() {
    let out = treetomo(&["roundtrip", "--tree", "star", "--l", "2", "--n", "3", "--mode", "rational", "--seed", "4"]);
    assert!(out.status.success(), "{out:?}");
    assert_eq!(value(&out, "max_error").parse::<f64>().unwrap(), 0.0);
}

#[test]
fn random_tree_roundtrip_in_float() {
    let out = treetomo(&["roundtrip", "--random-tree", "--rout", "4", "--seed", "11"]);
    assert!(out.status.success(), "{out:?}");
    assert!(value(&out, "max_error").parse::<f64>().unwrap() <= 1e-9);
    assert!(value(&out, "max_time_read").parse::<usize>().unwrap() <= 16);
}

#[test]
fn gen_forward_invert_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let gen = treetomo(&[
        "gen", "--tree", "segment", "--k", "1", "--l", "2", "--mode", "rational", "--seed", "3", "--out", d,
    ]);
    assert!(gen.status.success(), "{gen:?}");
    let (tree, kernel) = (path(dir.path(), "tree.txt"), path(dir.path(), "kernel.txt"));
    let fwd = treetomo(&["forward", "--tree", &tree, "--kernel", &kernel, "--out", d]);
    assert!(fwd.status.success(), "{fwd:?}");
    let (p_in, p_out) = (path(dir.path(), "p_in.tsv"), path(dir.path(), "p_out.tsv"));
    let inv = treetomo(&[
        "invert", "--tree", &tree, "--p-in", &p_in, "--p-out", &p_out, "--kernel", &kernel, "--truth", &kernel,
        "--out", d,
    ]);
    assert!(inv.status.success(), "{inv:?}");
    assert_eq!(value(&inv, "max_error").parse::<f64>().unwrap(), 0.0);
    assert!(dir.path().join("report.txt").exists());
}

#[test]
fn truncated_laws_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert!(treetomo(&["gen", "--tree", "star", "--l", "2", "--n", "2", "--out", d]).status.success());
    let (tree, kernel) = (path(dir.path(), "tree.txt"), path(dir.path(), "kernel.txt"));
    // R = 2, so 3R + 4 = 10 steps are needed
    let fwd = treetomo(&["forward", "--tree", &tree, "--kernel", &kernel, "--t-max", "9", "--out", d]);
    assert!(fwd.status.success());
    let inv = treetomo(&[
        "invert",
        "--tree",
        &tree,
        "--p-in",
        &path(dir.path(), "p_in.tsv"),
        "--p-out",
        &path(dir.path(), "p_out.tsv"),
        "--out",
        d,
    ]);
    assert_eq!(inv.status.code(), Some(2), "{inv:?}");
    assert!(String::from_utf8_lossy(&inv.stderr).starts_with("error\tformat\t"));
}

#[test]
fn sample_and_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert!(treetomo(&["gen", "--tree", "edge", "--seed", "2", "--out", d]).status.success());
    let (tree, kernel) = (path(dir.path(), "tree.txt"), path(dir.path(), "kernel.txt"));
    let batch = path(dir.path(), "batch.txt");

    let run = |n: &str, workers: &str| {
        let s = treetomo(&[
            "sample",
            "--tree",
            &tree,
            "--kernel",
            &kernel,
            "--n",
            n,
            "--seed",
            "9",
            "--workers",
            workers,
            "--out",
            d,
        ]);
        assert!(s.status.success(), "{s:?}");
        std::fs::read_to_string(&batch).unwrap()
    };
    let one = run("20000", "1");
    assert_eq!(run("20000", "3"), one);

    let est = treetomo(&[
        "estimate", "--tree", &tree, "--batch", &batch, "--kernel", &kernel, "--truth", &kernel, "--out", d,
    ]);
    assert!(est.status.success(), "{est:?}");
    assert!(value(&est, "max_error").parse::<f64>().unwrap() < 0.05);
}

#[test]
fn too_few_walks_is_insufficient_data() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert!(treetomo(&["gen", "--tree", "star", "--l", "2", "--n", "3", "--out", d]).status.success());
    let tree = path(dir.path(), "tree.txt");
    let s =
        treetomo(&["sample", "--tree", &tree, "--kernel", &path(dir.path(), "kernel.txt"), "--n", "10", "--out", d]);
    assert!(s.status.success(), "{s:?}");
    let est = treetomo(&["estimate", "--tree", &tree, "--batch", &path(dir.path(), "batch.txt"), "--out", d]);
    assert_eq!(est.status.code(), Some(3), "{est:?}");
    assert!(String::from_utf8_lossy(&est.stderr).starts_with("error\tinsufficient-data\t"));
}

#[test]
fn seed_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let gen = |sub: &str, env: Option<&str>, flag: &[&str]| {
        let out = dir.path().join(sub);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_treetomo"));
        cmd.args(["gen", "--out", out.to_str().unwrap()]).args(flag).env_remove("TREETOMO_SEED");
        if let Some(seed) = env {
            cmd.env("TREETOMO_SEED", seed);
        }
        assert!(cmd.status().unwrap().success());
        std::fs::read_to_string(out.join("kernel.txt")).unwrap()
    };
    let from_env = gen("a", Some("7"), &[]);
    assert_eq!(from_env, gen("b", None, &["--seed", "7"]));
    assert_ne!(from_env, gen("c", None, &[]));
}

#[test]
fn error_exit_codes() {
    let missing = treetomo(&["forward", "--tree", "/nonexistent/tree.txt", "--kernel", "/nonexistent/k.txt"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error\tio\t"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("tree.txt");
    std::fs::write(&bad, "this is not a tree\n").unwrap();
    let out = treetomo(&["roundtrip", "--tree", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    assert_eq!(treetomo(&["roundtrip", "--bogus"]).status.code(), Some(2));
}

#[test]
fn consistency_table() {
    let out = treetomo(&["consistency", "--tree", "edge", "--n-grid", "2000,20000", "--seeds", "2"]);
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("n\t"));
    assert_eq!(lines.count(), 4);
}
