use std::fs;
use std::process::{Command, Output};

fn numsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_numsim"))
        .args(args)
        .env_remove("NUMSIM_SEED")
        .output()
        .expect("binary runs")
}

fn column(header: &str, name: &str) -> usize {
    header.split(',').position(|c| c == name).unwrap()
}

#[test]
fn parking_lot_trace_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.csv");
    let status = numsim(&[
        "--scenario",
        "parking-lot",
        "--loss-every",
        "50",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );

    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert_eq!(header, numsim::cli::CSV_HEADER);
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 500 * 3);

    let (iter, loss, h_est) = (
        column(header, "iter"),
        column(header, "loss"),
        column(header, "h_estimated"),
    );
    for row in &rows {
        let t: u64 = row[iter].parse().unwrap();
        let flagged = row[loss] != "0";
        assert_eq!(flagged, t.is_multiple_of(50), "iteration {t}");
        if flagged {
            assert!(!row[h_est].is_empty());
        }
    }
}

#[test]
fn same_seed_same_bytes() {
    let args = [
        "--scenario",
        "parking-lot",
        "--loss-prob",
        "0.1",
        "--seed",
        "5",
        "--iterations",
        "200",
    ];
    let a = numsim(&args);
    let b = numsim(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);

    let c = numsim(&[
        "--scenario",
        "parking-lot",
        "--loss-prob",
        "0.1",
        "--seed",
        "6",
        "--iterations",
        "200",
    ]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn seed_from_environment() {
    let args = [
        "--scenario",
        "single-link",
        "--loss-prob",
        "0.3",
        "--iterations",
        "100",
    ];
    let with_env = Command::new(env!("CARGO_BIN_EXE_numsim"))
        .args(args)
        .env("NUMSIM_SEED", "17")
        .output()
        .unwrap();
    let explicit = numsim(&[&args[..], &["--seed", "17"]].concat());
    assert_eq!(with_env.stdout, explicit.stdout);
}

#[test]
fn topology_file_matches_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let topo = dir.path().join("lot.txt");
    fs::write(&topo, numsim::topology::Network::parking_lot().to_string()).unwrap();
    let from_file = numsim(&["--topology", topo.to_str().unwrap(), "--iterations", "100"]);
    let builtin = numsim(&["--scenario", "parking-lot", "--iterations", "100"]);
    assert!(from_file.status.success());
    assert_eq!(from_file.stdout, builtin.stdout);
}

#[test]
fn summary_reports_estimation() {
    let out = numsim(&[
        "--scenario",
        "parking-lot",
        "--loss-every",
        "50",
        "--summary",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("tracked link: CD"), "{text}");
    assert!(text.contains("loss iterations: 10"), "{text}");
    assert!(!text.starts_with("iter,"));
}

#[test]
fn hex_frames_on_stderr() {
    let out = numsim(&[
        "--scenario",
        "single-link",
        "--iterations",
        "2",
        "--hex-frames",
        "--summary",
    ]);
    assert!(out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    let frames: Vec<&str> = err.lines().filter(|l| !l.is_empty()).collect();
    assert!(!frames.is_empty());
    for f in frames {
        let hex = f.split_whitespace().last().unwrap();
        assert_eq!(hex.len(), 40, "{f}");
        assert!(hex.starts_with("01"));
    }
}

#[test]
fn sweep_writes_one_file_per_period() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let status = numsim(&[
        "--scenario",
        "parking-lot",
        "--sweep",
        "--iterations",
        "60",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    for k in numsim::cli::SWEEP_PERIODS {
        let text = fs::read_to_string(dir.path().join(format!("sweep-k{k}.csv"))).unwrap();
        assert_eq!(text.lines().count(), 1 + 60 * 3);
    }
}

#[test]
fn bad_arguments_exit_nonzero() {
    assert_eq!(numsim(&[]).status.code(), Some(2));
    assert_eq!(
        numsim(&[
            "--scenario",
            "single-link",
            "--loss-every",
            "5",
            "--loss-prob",
            "0.1"
        ])
        .status
        .code(),
        Some(2)
    );
    let missing = numsim(&["--topology", "/nonexistent/topo.txt"]);
    assert!(!missing.status.success());
    let unknown = numsim(&["--scenario", "ring"]);
    assert!(!unknown.status.success());
    assert!(numsim(&["--help"]).status.success());
}
