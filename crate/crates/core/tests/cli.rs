use std::path::Path;
use std::process::{Command, Output};

const SMALL: [&str; 4] = ["--set", "mesh.elements=32", "--set", "sweep.n=16"];

fn rtmodes(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rtmodes"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn negative_surface_tension_exits_2_naming_key() {
    let d = tempfile::tempdir().unwrap();
    let o = rtmodes(d.path(), &["--set", "geometry.sigma=-1", "profile"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("geometry.sigma"));
}

#[test]
fn unknown_key_in_file_exits_2() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("run.cfg"), "geometry.m = 1\nmesh.bogus = 3\n").unwrap();
    let o = rtmodes(d.path(), &["--config", "run.cfg", "profile"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("mesh.bogus"));
}

#[test]
fn help_documents_every_key() {
    let d = tempfile::tempdir().unwrap();
    let o = rtmodes(d.path(), &["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for spec in rtmodes::config::KEYS {
        assert!(text.contains(spec.key), "missing {}", spec.key);
    }
}

#[test]
fn profile_csv_shape() {
    let d = tempfile::tempdir().unwrap();
    let o = rtmodes(d.path(), &["profile", "--points", "5"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x3,rho0,Pprime_rho0,eps0,delta0"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| r.len() == 5 && r[1] > 0.0 && r[2] > 0.0));
}

#[test]
fn small_period_lattice_is_certified() {
    let d = tempfile::tempdir().unwrap();
    let mut args = SMALL.to_vec();
    args.extend(["lattice", "--L", "0.3"]);
    let o = rtmodes(d.path(), &args);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("# certificate: stable"));
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn run_meta_merges_and_checks_lattice_rate() {
    let d = tempfile::tempdir().unwrap();
    let mut disp = SMALL.to_vec();
    disp.extend(["dispersion", "--out", "d.csv"]);
    assert_eq!(rtmodes(d.path(), &disp).status.code(), Some(0));
    let mut lat = SMALL.to_vec();
    lat.extend(["lattice", "--out", "l.csv"]);
    assert_eq!(rtmodes(d.path(), &lat).status.code(), Some(0));
    let meta = std::fs::read_to_string(d.path().join("run.meta")).unwrap();
    for key in ["config_hash = ", "Lambda = ", "Lambda_L = ", "certificate = none", "Lambda_L_le_Lambda = pass"] {
        assert!(meta.contains(key), "run.meta lacks {key}:\n{meta}");
    }
}

#[test]
fn single_thread_output_is_reproducible() {
    let d = tempfile::tempdir().unwrap();
    let mut args = vec!["--threads", "1"];
    args.extend(SMALL);
    args.push("dispersion");
    let a = rtmodes(d.path(), &args);
    let b = rtmodes(d.path(), &args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn forms_dump_lists_three_matrices() {
    let d = tempfile::tempdir().unwrap();
    let o = rtmodes(d.path(), &["--set", "mesh.elements=2", "forms", "--xi", "1", "--dump"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for name in ["E0 ", "E1 ", "J "] {
        assert!(text.lines().any(|l| l.starts_with(name)));
    }
}

#[test]
fn stable_frequency_mode_evolution_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    let o = rtmodes(d.path(), &["--set", "mesh.elements=16", "evolve", "--xi", "100", "--T", "0.1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("evolution.data"));
}

#[test]
fn evolve_writes_trajectory() {
    let d = tempfile::tempdir().unwrap();
    let o = rtmodes(
        d.path(),
        &["--set", "mesh.elements=16", "evolve", "--xi", "1.5", "--T", "0.1", "--out", "e.csv"],
    );
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(d.path().join("e.csv")).unwrap();
    assert!(text.starts_with("t,kinetic,potential,dissipated_cum,norm1,norm2"));
    assert_eq!(text.lines().count(), 12);
}

#[test]
fn synthesize_writes_one_file_per_time() {
    let d = tempfile::tempdir().unwrap();
    let o = rtmodes(
        d.path(),
        &["--set", "mesh.elements=32", "synthesize", "--t", "0,0.5", "--grid", "2,2,3", "--out", "syn"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for t in ["0", "0.5"] {
        let text = std::fs::read_to_string(d.path().join(format!("syn/fields_t{t}.csv"))).unwrap();
        assert_eq!(text.lines().count(), 13);
    }
}

#[test]
fn verify_subset_passes() {
    let d = tempfile::tempdir().unwrap();
    let o = rtmodes(d.path(), &["verify", "--only", "1,2"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(), 2);
}

#[test]
fn verify_rejects_unknown_check() {
    let d = tempfile::tempdir().unwrap();
    let o = rtmodes(d.path(), &["verify", "--only", "16"]);
    assert_eq!(o.status.code(), Some(2));
}
