//! End-to-end tests against the built `dqkd` binary.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::thread;

const BIN: &str = env!("CARGO_BIN_EXE_dqkd");

fn dqkd(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn dqkd")
}

fn spawn(args: &[&str]) -> Child {
    Command::new(BIN)
        .args(args)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn dqkd")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn free_addr() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    l.local_addr().unwrap().to_string()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn noiseless_run_summary_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let out = dqkd(&["run", "--rounds", "5000", "--output", path_str(&report)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        stdout(&out),
        "S=9.000, QBER=0.000, verdict Clean, key=4500\n"
    );
    let doc = json(&report);
    assert_eq!(doc["tool"], "dqkd");
    assert_eq!(doc["config"]["rounds"], 5000);
    assert_eq!(doc["security"]["bell_s"], 9.0);
    assert_eq!(doc["security"]["verdict"], "Clean");
}

#[test]
fn intercept_resend_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let out = dqkd(&[
        "run",
        "--rounds",
        "20000",
        "--eve",
        "ir-both",
        "--output",
        path_str(&report),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(
        stdout(&out).contains("verdict Eavesdropping"),
        "{}",
        stdout(&out)
    );
}

#[test]
fn ekert_run_reports_raw_key_fraction() {
    let out = dqkd(&[
        "run", "--mode", "ekert", "--rounds", "20000", "--output", "-",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let f = doc["baseline"]["raw_key_fraction"].as_f64().unwrap();
    assert!((f - 2.0 / 9.0).abs() < 0.01, "{f}");
    assert!(doc["security"].is_null());
}

#[test]
fn csv_export() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("rounds.csv");
    let out = dqkd(&[
        "run",
        "--rounds",
        "50",
        "--eta",
        "0.5",
        "--output",
        path_str(&dir.path().join("r.json")),
        "--csv",
        path_str(&csv),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 51);
    assert!(lines[0].starts_with("round_id,setting_a,setting_b"));
    assert!(lines[1].starts_with("0,A"));
}

#[test]
fn config_errors_exit_with_1() {
    let out = dqkd(&["run", "--eta", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--eta"), "{}", stderr(&out));

    let out = dqkd(&["run", "--mode", "pm", "--eve", "ir-both"]);
    assert_eq!(out.status.code(), Some(1));

    let out = dqkd(&["run", "--config", "/nonexistent/dqkd.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("config file"));

    let out = dqkd(&["run", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));

    let out = dqkd(&["net", "--role", "bob", "--source", "127.0.0.1:1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--peer"));
}

#[test]
fn help_exits_zero() {
    let out = dqkd(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("dump-groups"));
}

#[test]
fn unwritable_output_exits_with_2() {
    let out = dqkd(&[
        "run",
        "--rounds",
        "10",
        "--output",
        "/nonexistent/dir/r.json",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("session.toml");
    let report = dir.path().join("from-file.json");
    std::fs::write(
        &cfg,
        format!(
            "rounds = 300\nseed = 9\nmode = \"pm\"\noutput = \"{}\"\n",
            report.display()
        ),
    )
    .unwrap();
    let out = dqkd(&["run", "--config", path_str(&cfg)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let doc = json(&report);
    assert_eq!(doc["config"]["rounds"], 300);
    assert_eq!(doc["config"]["mode"], "pm");
}

#[test]
fn identical_runs_write_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        let out = dqkd(&[
            "run",
            "--rounds",
            "3000",
            "--seed",
            "5",
            "--pauli-p",
            "0.05",
            "--output",
            path_str(p),
        ]);
        assert!(out.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn dump_groups_matches_golden() {
    let out = dqkd(&["dump-groups"]);
    assert!(out.status.success());
    let golden = include_str!("golden/groups.json");
    assert_eq!(stdout(&out), golden);
    let groups: serde_json::Value = serde_json::from_str(golden).unwrap();
    assert_eq!(groups.as_array().unwrap().len(), 6);
}

#[test]
fn sweep_emits_csv() {
    let out = dqkd(&[
        "sweep", "--param", "pauli_p", "--from", "0", "--to", "0.2", "--steps", "3", "--rounds",
        "2000",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "pauli_p,bell_s,bell_s_stderr,qber");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("0,9,0,0"), "{}", lines[1]);
    assert!(lines[3].starts_with("0.2,"));

    let out = dqkd(&[
        "sweep", "--param", "eta", "--from", "0", "--to", "2", "--steps", "3",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

struct NetRun {
    alice: Output,
    bob: Output,
    source: Output,
}

fn net_session(
    common: &[&str],
    alice_report: &Path,
    bob_report: &Path,
    bob_extra: &[&str],
) -> NetRun {
    let source_addr = free_addr();
    let alice_addr = free_addr();
    let mut source_args = vec!["net", "--role", "source", "--listen", &source_addr];
    source_args.extend_from_slice(common);
    let mut alice_args = vec![
        "net",
        "--role",
        "alice",
        "--listen",
        &alice_addr,
        "--source",
        &source_addr,
        "--output",
        path_str(alice_report),
    ];
    alice_args.extend_from_slice(common);
    let mut bob_args = vec![
        "net",
        "--role",
        "bob",
        "--source",
        &source_addr,
        "--peer",
        &alice_addr,
        "--output",
        path_str(bob_report),
    ];
    bob_args.extend_from_slice(common);
    bob_args.extend_from_slice(bob_extra);

    let source = spawn(&source_args);
    let alice = spawn(&alice_args);
    let bob = spawn(&bob_args);
    NetRun {
        bob: bob.wait_with_output().unwrap(),
        alice: alice.wait_with_output().unwrap(),
        source: source.wait_with_output().unwrap(),
    }
}

#[test]
fn three_processes_agree_with_in_process_run() {
    let dir = tempfile::tempdir().unwrap();
    let (ra, rb, local) = (
        dir.path().join("a.json"),
        dir.path().join("b.json"),
        dir.path().join("local.json"),
    );
    let common = [
        "--rounds",
        "8000",
        "--seed",
        "3",
        "--pauli-p",
        "0.01",
        "--eta",
        "0.9",
    ];
    let run = net_session(&common, &ra, &rb, &[]);
    assert!(run.source.status.success(), "{}", stderr(&run.source));
    assert!(run.alice.status.success(), "{}", stderr(&run.alice));
    assert!(run.bob.status.success(), "{}", stderr(&run.bob));

    let mut args = vec!["run", "--output", path_str(&local)];
    args.extend_from_slice(&common);
    assert!(dqkd(&args).status.success());
    let expected = std::fs::read(&local).unwrap();
    assert_eq!(std::fs::read(&ra).unwrap(), expected);
    assert_eq!(std::fs::read(&rb).unwrap(), expected);
    assert_eq!(stdout(&run.alice), stdout(&run.bob));
}

#[test]
fn withheld_reveal_gives_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    let (ra, rb) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let run = net_session(&["--rounds", "1000"], &ra, &rb, &["--withhold-reveal"]);
    assert!(run.alice.status.success(), "{}", stderr(&run.alice));
    assert!(
        stdout(&run.alice).contains("verdict Inconclusive"),
        "{}",
        stdout(&run.alice)
    );
    assert_eq!(json(&ra)["security"]["verdict"], "Inconclusive");
}

#[test]
fn dropped_connection_exits_3_without_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("a.json");
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let source_addr = listener.local_addr().unwrap().to_string();
    // accepts, reads part of the greeting, then hangs up
    let fake_source = thread::spawn(move || {
        let (mut stream, _) = listener.accept().unwrap();
        let mut prefix = [0u8; 4];
        stream.read_exact(&mut prefix).unwrap();
        stream.flush().unwrap();
    });
    let alice_addr = free_addr();
    let out = dqkd(&[
        "net",
        "--role",
        "alice",
        "--listen",
        &alice_addr,
        "--source",
        &source_addr,
        "--rounds",
        "1000",
        "--output",
        path_str(&report),
    ]);
    fake_source.join().unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("aborted"));
    assert!(!report.exists());
}
