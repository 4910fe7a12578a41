//! Acceptance suite. Runs `rws selftest` twice with the same seed under
//! different thread counts, prints one line per criterion from the first
//! report, and checks that both report bodies are byte-identical.

use std::path::Path;
use std::process::{Command, ExitCode};

use rws_cli::selftest::SelftestReport;

fn selftest(dir: &Path, threads: usize) -> (i32, Vec<u8>) {
    let status = Command::new(env!("CARGO_BIN_EXE_rws"))
        .args(["selftest", "--format", "json", "--seed", "20240917"])
        .arg("--threads")
        .arg(threads.to_string())
        .arg("-o")
        .arg(dir)
        .stdout(std::process::Stdio::null())
        .status()
        .expect("rws binary runs");
    let body = std::fs::read(dir.join("report.json")).expect("selftest writes report.json");
    (status.code().unwrap_or(-1), body)
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let (code_a, body_a) = selftest(&tmp.path().join("threads1"), 1);
    let (code_b, body_b) = selftest(&tmp.path().join("threads4"), 4);
    let report: SelftestReport = serde_json::from_slice(&body_a).expect("report parses");

    let mut ok = true;
    for c in &report.criteria {
        println!("{}", c.line());
        ok &= c.pass;
    }
    let identical = body_a == body_b;
    println!(
        "criterion 10 [{}] report.json byte-identical for 1 vs 4 threads | {} vs {} bytes",
        if identical { "PASS" } else { "FAIL" },
        body_a.len(),
        body_b.len()
    );
    ok &= identical;
    let expected_code = if report.all_pass() { 0 } else { 3 };
    if code_a != expected_code || code_b != expected_code {
        println!("exit codes {code_a}, {code_b}; expected {expected_code}");
        ok = false;
    }
    if report.criteria.len() != 9 {
        println!("expected 9 in-process criteria, found {}", report.criteria.len());
        ok = false;
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
