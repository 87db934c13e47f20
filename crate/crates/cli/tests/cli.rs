//! End-to-end tests of the `cpgsu` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cpgsu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpgsu")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, seed: u64, extra: &[&str]) {
    let seed = seed.to_string();
    let mut args = vec!["synth", "--shape", "20,20,20", "--rank", "3", "--seed", &seed, "--out", s(dir)];
    args.extend_from_slice(extra);
    let out = cpgsu(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn synth_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    synth(&a, 5, &[]);
    synth(&b, 5, &[]);
    for f in ["tensor.cpt", "truth.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
}

#[test]
fn gsu_recovers_the_rank_and_writes_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    synth(&data, 1, &[]);
    let input = data.join("tensor.cpt");
    let out = cpgsu(&["decompose", "--input", s(&input), "--variant", "gsu", "--rank-init", "7", "--seed", "1", "--out", s(&run)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let m = manifest(&run);
    assert_eq!(m["support_size"], 3);
    assert_eq!(m["variant"], "gsu");
    assert_eq!(m["seed"], 1);
    assert_eq!(m["config"]["rank_init"], 7);
    assert!(m["rel_err"].as_f64().unwrap() < 1e-4);
    for key in ["trace", "factors"] {
        assert!(Path::new(m[key].as_str().unwrap()).exists());
    }
    let trace = fs::read_to_string(run.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some("k,F,RelErr,lambda,w_k,support_size,safeguard_used"));
    assert_eq!(trace.lines().count() - 1, m["iterations"].as_u64().unwrap() as usize);

    // the digest is the SHA-256 of the input file
    let digest = m["input_sha256"].as_str().unwrap();
    assert_eq!(digest.len(), 64);
    assert!(digest.chars().all(|c| c.is_ascii_hexdigit()));

    // the estimate evaluates cleanly against the ground truth
    let eval = cpgsu(&["eval", "--estimated", s(&run.join("factors.txt")), "--reference", s(&data.join("truth.txt"))]);
    assert!(eval.status.success());
    let text = stdout(&eval);
    assert!(text.contains("matched_rank=3"));
    assert!(!text.contains("rmsep=-"));
}

#[test]
fn rerunning_from_a_manifest_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 2, &["--noise", "0.01"]);
    let input = data.join("tensor.cpt");
    let first = tmp.path().join("first");
    let second = tmp.path().join("second");
    let out = cpgsu(&["decompose", "--input", s(&input), "--variant", "gsu-rr", "--seed", "4", "--kappa", "0.9", "--out", s(&first)]);
    assert!(out.status.success());
    let cfg = first.join("manifest.json");
    let out = cpgsu(&["decompose", "--input", s(&input), "--variant", "gsu-rr", "--config", s(&cfg), "--out", s(&second)]);
    assert!(out.status.success());
    let (a, b) = (manifest(&first), manifest(&second));
    assert_eq!(a["rel_err"], b["rel_err"]);
    assert_eq!(a["config"], b["config"]);
    assert_eq!(b["config"]["kappa"], 0.9);
    assert_eq!(fs::read(first.join("trace.csv")).unwrap(), fs::read(second.join("trace.csv")).unwrap());
}

#[test]
fn toml_config_and_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 3, &["--text"]);
    let cfg = tmp.path().join("cfg.toml");
    fs::write(&cfg, "rank_init = 4\nkappa = 0.8\nmax_outer = 50\n").unwrap();
    let run = tmp.path().join("run");
    let input = data.join("tensor.cpt");
    let out = cpgsu(&["decompose", "--input", s(&input), "--config", s(&cfg), "--max-outer", "20", "--out", s(&run)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&run);
    assert_eq!(m["config"]["rank_init"], 4);
    assert_eq!(m["config"]["kappa"], 0.8);
    assert_eq!(m["config"]["max_outer"], 20);
    assert_eq!(m["iterations"], 20);
    assert_eq!(m["status"], "MaxIters");
}

#[test]
fn als_fits_the_true_rank() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 6, &[]);
    let run = tmp.path().join("als");
    let input = data.join("tensor.cpt");
    let out = cpgsu(&["decompose", "--input", s(&input), "--variant", "als", "--rank-init", "3", "--stop-tol", "1e-14", "--out", s(&run)]);
    assert!(out.status.success());
    let m = manifest(&run);
    assert!(m["rel_err"].as_f64().unwrap() < 1e-6, "{m}");
    assert_eq!(m["variant"], "als");
}

#[test]
fn batch_runs_one_directory_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 7, &[]);
    let run = tmp.path().join("batch");
    let input = data.join("tensor.cpt");
    let out = cpgsu(&["decompose", "--input", s(&input), "--batch", "3", "--seed", "10", "--kappa", "0.8", "--out", s(&run)]);
    assert!(out.status.success());
    for seed in 10..13 {
        assert_eq!(manifest(&run.join(format!("seed-{seed}")))["seed"], seed);
    }
}

#[test]
fn eval_of_identical_and_collapsed_estimates() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 8, &[]);
    let truth = data.join("truth.txt");
    let out = cpgsu(&["eval", "--estimated", s(&truth), "--reference", s(&truth), "--profiles", s(&tmp.path().join("p"))]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("matched_rank=3"));
    assert!(text.contains("rmsep=0e0"));
    assert!(tmp.path().join("p/profiles_normalized.csv").exists());

    // zero out two components: only one can be matched
    let content = fs::read_to_string(&truth).unwrap();
    let mut lines: Vec<String> = content.lines().map(String::from).collect();
    let first_row_of_last_mode = lines.len() - 20;
    for line in &mut lines[first_row_of_last_mode..] {
        let vals: Vec<&str> = line.split_whitespace().collect();
        *line = format!("{} 0e0 0e0", vals[0]);
    }
    let collapsed = tmp.path().join("collapsed.txt");
    fs::write(&collapsed, lines.join("\n") + "\n").unwrap();
    let out = cpgsu(&["eval", "--estimated", s(&collapsed), "--reference", s(&truth)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("matched_rank=1"));
    assert!(text.contains("rmsep=-"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 9, &[]);
    let input = data.join("tensor.cpt");
    let out_dir = tmp.path().join("o");

    // unreadable input
    let missing = tmp.path().join("missing.cpt");
    assert_eq!(cpgsu(&["decompose", "--input", s(&missing), "--out", s(&out_dir)]).status.code(), Some(2));
    let garbage = tmp.path().join("garbage.cpt");
    fs::write(&garbage, "not a tensor\n").unwrap();
    assert_eq!(cpgsu(&["decompose", "--input", s(&garbage), "--out", s(&out_dir)]).status.code(), Some(2));

    // unknown variant and other usage errors
    assert_eq!(cpgsu(&["decompose", "--input", s(&input), "--variant", "foo", "--out", s(&out_dir)]).status.code(), Some(3));
    assert_eq!(cpgsu(&["frobnicate"]).status.code(), Some(3));
    assert_eq!(cpgsu(&["synth", "--shape", "3,3", "--rank", "1", "--out", s(&out_dir)]).status.code(), Some(3));

    // unparsable or invalid config
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "no_such_field = 1\n").unwrap();
    assert_eq!(cpgsu(&["decompose", "--input", s(&input), "--config", s(&bad), "--out", s(&out_dir)]).status.code(), Some(4));
    assert_eq!(cpgsu(&["decompose", "--input", s(&input), "--kappa", "2", "--out", s(&out_dir)]).status.code(), Some(4));

    // dimension mismatch in eval
    let other = tmp.path().join("other");
    let out = cpgsu(&["synth", "--shape", "20,20,21", "--rank", "3", "--out", s(&other)]);
    assert!(out.status.success());
    let code = cpgsu(&["eval", "--estimated", s(&other.join("truth.txt")), "--reference", s(&data.join("truth.txt"))]).status.code();
    assert_eq!(code, Some(4));
}
