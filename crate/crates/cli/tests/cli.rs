use std::path::Path;
use std::process::{Command, Output};

use concentra_core::smallball::exact_smallball;
use concentra_core::NormSpec;

const BIN: &str = env!("CARGO_BIN_EXE_concentra");

fn run(dir: &Path, args: &[&str], config: &str) -> Output {
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, config).unwrap();
    Command::new(BIN)
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .env_remove("CONCENTRA_THREADS")
        .output()
        .unwrap()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn invalid_configs_exit_2_and_write_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = out.to_str().unwrap();
    let cases = [
        ("profile", r#"{"norm":{"family":"sup","dim":4},"bogus":1}"#),
        ("profile", r#"{"norm":{"family":"sup","dim":4}"#),
        ("profile", r#"{"norm":{"family":"lp","dim":4,"p":0.5}}"#),
        ("profile", r#"{"mc":{"samples":100}}"#),
        ("semigroup", r#"{"norm":{"family":"sup","dim":4},"params":{"t_grid":[0.5,0.1]}}"#),
        ("smallball", r#"{"norm":{"family":"sup","dim":4},"params":{"delta":[1.5]}}"#),
        ("scaling", r#"{"params":{"family":{"family":"sup"},"delta":0.3,"n_list":[16,32]}}"#),
        ("deform", r#"{"norm":{"family":"sup","dim":4},"params":{"mode":"smalldev","epsilon":0.9}}"#),
        ("accept", r#"{"params":{"only":[12]}}"#),
        ("position", r#"{"command":"profile","norm":{"family":"sup","dim":4}}"#),
    ];
    for (cmd, cfg) in cases {
        let res = run(tmp.path(), &[cmd, "--out", o], cfg);
        assert_eq!(res.status.code(), Some(2), "{cmd} {cfg}");
        let diag: serde_json::Value = serde_json::from_slice(&res.stderr).expect("diagnostics are JSON");
        assert_eq!(diag["exit_code"], 2);
        assert!(!out.exists(), "{cmd} {cfg} left output behind");
    }
}

#[test]
fn estimator_failures_exit_3_with_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = out.to_str().unwrap();

    let res = run(
        tmp.path(),
        &["position", "--max-iter", "1", "--out", o],
        r#"{"norm":{"family":"weighted_sup","dim":3,"w":[1.0,2.0,4.0]},"mc":{"samples":2000}}"#,
    );
    assert_eq!(res.status.code(), Some(3));
    let diag: serde_json::Value = serde_json::from_slice(&read(&out, "error.json")).unwrap();
    assert_eq!(diag["kind"], "convergence");
    assert_eq!(diag["iterations"], 1);
    assert!(diag["residual"].as_f64().unwrap() > 0.02);

    let res = run(
        tmp.path(),
        &["smallball", "--out", o],
        r#"{"norm":{"family":"sup","dim":256},"mc":{"samples":200},"params":{"delta":[0.1],"engine":"naive"}}"#,
    );
    assert_eq!(res.status.code(), Some(3));
    let diag: serde_json::Value = serde_json::from_slice(&read(&out, "error.json")).unwrap();
    assert_eq!(diag["kind"], "no_hits");
    assert!(diag["log_p_upper"].as_f64().unwrap() < 0.0);
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"norm":{"family":"sup","dim":16},"mc":{"samples":4000,"seed":9},
                  "params":{"delta":[0.3,0.6],"engine":"splitting"}}"#;
    let dirs: Vec<_> = ["1", "1", "3"]
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let d = tmp.path().join(format!("r{i}"));
            let res = run(tmp.path(), &["smallball", "--threads", t, "--out", d.to_str().unwrap()], cfg);
            assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
            d
        })
        .collect();
    for name in ["smallball.csv", "smallball.json"] {
        let first = read(&dirs[0], name);
        assert!(!first.is_empty());
        for d in &dirs[1..] {
            assert_eq!(first, read(d, name), "{name} differs");
        }
    }
}

#[test]
fn seed_flag_overrides_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"norm":{"family":"lp","dim":8,"p":2.0},"mc":{"samples":2000,"seed":1}}"#;
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    assert!(run(tmp.path(), &["profile", "--out", a.to_str().unwrap()], cfg).status.success());
    assert!(run(tmp.path(), &["profile", "--seed", "1", "--out", b.to_str().unwrap()], cfg).status.success());
    assert!(run(tmp.path(), &["profile", "--seed", "2", "--out", c.to_str().unwrap()], cfg).status.success());
    assert_eq!(read(&a, "profile.csv"), read(&b, "profile.csv"));
    assert_ne!(read(&a, "profile.csv"), read(&c, "profile.csv"));
}

#[test]
fn scaling_rows_match_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let res = run(
        tmp.path(),
        &["scaling", "--out", out.to_str().unwrap()],
        r#"{"params":{"family":{"family":"sup"},"delta":0.3,"n_list":[16,32,64,128]}}"#,
    );
    assert!(res.status.success());
    let table = read(&out, "scaling.csv");
    let mut rdr = csv::Reader::from_reader(&table[..]);
    let mut prev = f64::INFINITY;
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let n: usize = rec[0].parse().unwrap();
        let mean: f64 = rec[3].parse().unwrap();
        let log_p: f64 = rec[4].parse().unwrap();
        let exact = exact_smallball(&NormSpec::sup(n).unwrap(), 0.3 * mean).unwrap();
        assert!((log_p - exact.ln()).abs() < 1e-9 * exact.ln().abs(), "n={n}");
        assert!(log_p < prev);
        prev = log_p;
        rows += 1;
    }
    assert_eq!(rows, 4);
    let summary: serde_json::Value = serde_json::from_slice(&read(&out, "scaling.json")).unwrap();
    assert_eq!(summary["strictly_increasing"], true);
}

#[test]
fn every_command_writes_its_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let expected: &[(&str, &[&str])] = &[
        ("profile", &["profile.csv", "profile.json"]),
        ("semigroup", &["semigroup.csv", "semigroup.json"]),
        ("position", &["position.json", "balance.csv"]),
        ("smallball", &["smallball.csv", "smallball.json"]),
        ("scaling", &["scaling.csv", "scaling.json"]),
        ("deform", &["trace.csv", "store.json", "deform.json"]),
        ("accept", &["accept.txt", "accept.json"]),
    ];
    for (cmd, cfg) in concentra_cli::accept::determinism_configs() {
        let name = cmd.name();
        let out = tmp.path().join(name);
        let res = run(tmp.path(), &[name, "--out", out.to_str().unwrap()], cfg);
        assert!(res.status.success(), "{name}: {}", String::from_utf8_lossy(&res.stderr));
        assert!(!res.stdout.is_empty());
        let files = expected.iter().find(|(c, _)| *c == name).unwrap().1;
        for f in files {
            assert!(!read(&out, f).is_empty(), "{name}/{f}");
        }
    }
}
