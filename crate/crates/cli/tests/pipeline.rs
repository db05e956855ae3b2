use std::fs;
use std::path::Path;
use std::process::Command;

use perc_cli::spec::{Kind, Model};
use perc_cli::{run_experiment, CliError, ExperimentSpec, Manifest, RunOptions};
use serde_json::Value;

fn spec(kind: Kind, out: &Path) -> ExperimentSpec {
    let mut s = ExperimentSpec { kind: Some(kind), seed: 11, out: Some(out.to_path_buf()), ..Default::default() };
    s.lattice.side = 21;
    s
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn checksums(m: &Manifest) -> Vec<(String, String)> {
    m.files.iter().map(|f| (f.path.clone(), f.sha256.clone())).collect()
}

#[test]
fn sample_writes_snapshot_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let s = spec(Kind::Sample, &out);
    let (_, m) = run_experiment(&s, RunOptions::default()).unwrap();
    assert!(out.join("config.snapshot").exists());
    assert!(out.join("manifest.json").exists());
    assert_eq!(m.files.len(), 2);
    assert!(m.verify(&out).unwrap().is_empty());
    let sm = summary(&out);
    assert_eq!(sm["open_edges"], sm["edges"]);
    assert_eq!(sm["largest_cluster"], 441);
    let snap = perc_core::percolation::snapshot::read_snapshot(&mut fs::File::open(out.join("config.snapshot")).unwrap()).unwrap();
    assert!(matches!(snap, perc_core::percolation::snapshot::Snapshot::Bond(_)));
}

#[test]
fn site_sample_writes_site_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let mut s = spec(Kind::Sample, tmp.path());
    s.lattice.model = Model::Site;
    s.lattice.p = 0.7;
    run_experiment(&s, RunOptions::default()).unwrap();
    let snap = perc_core::percolation::snapshot::read_snapshot(&mut fs::File::open(tmp.path().join("config.snapshot")).unwrap()).unwrap();
    assert!(matches!(snap, perc_core::percolation::snapshot::Snapshot::Site(_)));
}

#[test]
fn bounds_records_on_diagonal_slope_at_full_density() {
    let tmp = tempfile::tempdir().unwrap();
    let mut s = spec(Kind::Bounds, tmp.path());
    s.lattice.side = 121;
    s.kernel.times.count = 15;
    run_experiment(&s, RunOptions::default()).unwrap();
    let sm = summary(tmp.path());
    let slope = sm["on_diagonal_slope"].as_f64().unwrap();
    assert!((slope + 1.0).abs() <= 0.05, "slope {slope}");
    assert_eq!(sm["slope_within_0_05"], true);
    assert_eq!(sm["envelope_violations"], 0);
    let env: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("envelope.json")).unwrap()).unwrap();
    assert!(env["gaussian"]["constants"]["c1"].as_f64().unwrap() > 0.0);
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    for kind in [Kind::Geometry, Kind::Kernel, Kind::Harnack] {
        let mut a = spec(kind, &tmp.path().join(format!("{}-a", kind.name())));
        a.lattice.p = 0.7;
        a.lattice.configs = 2;
        a.geometry.pairs_per_config = 50;
        a.kernel.times.count = 5;
        a.kernel.msd_trials = 200;
        a.harnack = perc_cli::spec::HarnackSpec { radii: vec![3, 4], datasets: 4 };
        let mut b = a.clone();
        b.out = Some(tmp.path().join(format!("{}-b", kind.name())));
        let (_, ma) = run_experiment(&a, RunOptions { threads: Some(1) }).unwrap();
        let (_, mb) = run_experiment(&b, RunOptions { threads: Some(4) }).unwrap();
        assert_eq!(checksums(&ma), checksums(&mb), "{}", kind.name());
        assert_eq!(ma.threads, 1);
    }
}

#[test]
fn csv_floats_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let mut s = spec(Kind::Kernel, tmp.path());
    s.kernel.times.count = 3;
    run_experiment(&s, RunOptions::default()).unwrap();
    let text = fs::read_to_string(tmp.path().join("msd.csv")).unwrap();
    let line = text.lines().nth(2).unwrap();
    let field = line.split(',').nth(1).unwrap();
    let mantissa = field.split('e').next().unwrap();
    assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 17, "{field}");
    let v: f64 = field.parse().unwrap();
    assert_eq!(format!("{v:.16e}"), field);
}

fn tail_run(root: &Path, name: &str, sizes: Vec<i32>) -> std::path::PathBuf {
    let out = root.join(name);
    let mut s = spec(Kind::Events, &out);
    s.lattice.p = 0.95;
    s.events.sizes = sizes;
    s.events.trials = 100;
    run_experiment(&s, RunOptions::default()).unwrap();
    out
}

#[test]
fn report_passes_a_single_directory_through() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tail_run(tmp.path(), "a", vec![4, 8]);
    let mut s = spec(Kind::Report, &tmp.path().join("r"));
    s.report.inputs = vec![a.clone()];
    run_experiment(&s, RunOptions::default()).unwrap();
    let merged = fs::read_to_string(tmp.path().join("r/tail.csv")).unwrap();
    let original = fs::read_to_string(a.join("tail.csv")).unwrap();
    let ml: Vec<&str> = merged.lines().collect();
    let ol: Vec<&str> = original.lines().collect();
    assert_eq!(ml.len(), ol.len());
    for (m, o) in ml.iter().zip(&ol).skip(1) {
        assert!(m.ends_with(o), "{m} vs {o}");
        assert!(m.starts_with("events,NA,11,"));
    }
}

#[test]
fn report_unions_size_grids_with_marked_gaps() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tail_run(tmp.path(), "a", vec![4, 8]);
    let b = tail_run(tmp.path(), "b", vec![8, 16]);
    let mut s = spec(Kind::Report, &tmp.path().join("r"));
    s.report.inputs = vec![a, b];
    run_experiment(&s, RunOptions::default()).unwrap();
    let grid = fs::read_to_string(tmp.path().join("r/tail_grid.csv")).unwrap();
    let rows: Vec<Vec<&str>> = grid.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0][0], "size");
    assert_eq!(rows[1][0], "4");
    assert_eq!(rows[2][0], "8");
    assert_eq!(rows[3][0], "16");
    let width = rows[0].len();
    let half = (width - 1) / 2;
    assert!(rows[1][1 + half..].iter().all(|c| *c == "NA"));
    assert!(rows[3][1..1 + half].iter().all(|c| *c == "NA"));
    assert!(rows[2].iter().all(|c| *c != "NA"));
}

#[test]
fn report_of_nothing_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let s = spec(Kind::Report, tmp.path());
    assert!(matches!(run_experiment(&s, RunOptions::default()), Err(CliError::Validation(_))));
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_perc");
    let tmp = tempfile::tempdir().unwrap();

    let good = tmp.path().join("good.toml");
    fs::write(&good, "kind = \"sample\"\nseed = 3\n[lattice]\nside = 8\n").unwrap();
    let st = Command::new(bin).args(["sample", "--spec"]).arg(&good).arg("--out").arg(tmp.path().join("o")).status().unwrap();
    assert_eq!(st.code(), Some(0));

    let typo = tmp.path().join("typo.toml");
    fs::write(&typo, "[lattice]\nsidee = 8\n").unwrap();
    let st = Command::new(bin).args(["sample", "--spec"]).arg(&typo).arg("--out").arg(tmp.path().join("t")).status().unwrap();
    assert_eq!(st.code(), Some(2));

    let st = Command::new(bin).args(["kernel", "--spec"]).arg(&good).arg("--out").arg(tmp.path().join("k")).status().unwrap();
    assert_eq!(st.code(), Some(2));

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[lattice]\nside = 12\n[kernel]\nexit_radii = [20]\n[kernel.times]\ncount = 3\n").unwrap();
    let st = Command::new(bin).args(["kernel", "--spec"]).arg(&bad).arg("--out").arg(tmp.path().join("b")).status().unwrap();
    assert_eq!(st.code(), Some(3));

    let a = tmp.path().join("seed1");
    let b = tmp.path().join("seed2");
    for (dir, threads) in [(&a, "1"), (&b, "3")] {
        let st = Command::new(bin)
            .args(["sample", "--seed", "99", "--threads", threads, "--spec"])
            .arg(&good)
            .arg("--out")
            .arg(dir)
            .status()
            .unwrap();
        assert_eq!(st.code(), Some(0));
    }
    assert_eq!(fs::read(a.join("config.snapshot")).unwrap(), fs::read(b.join("config.snapshot")).unwrap());
    let m = Manifest::read(&a).unwrap();
    assert_eq!(m.seed, 99);
}

#[test]
fn geometry_at_full_density_is_l1_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let mut s = spec(Kind::Geometry, tmp.path());
    s.geometry.pairs_per_config = 200;
    run_experiment(&s, RunOptions::default()).unwrap();
    let sm = summary(tmp.path());
    assert_eq!(sm["l1_exact"], true);
    assert_eq!(sm["pairs"], 200);
}

#[test]
fn inequalities_hold_on_cluster_pieces() {
    let tmp = tempfile::tempdir().unwrap();
    let mut s = spec(Kind::Inequalities, tmp.path());
    s.lattice.p = 0.6;
    s.lattice.configs = 10;
    s.inequalities.very_good_radius = 4;
    run_experiment(&s, RunOptions::default()).unwrap();
    assert_eq!(summary(tmp.path())["inequality_failures"], 0);
    let csv = fs::read_to_string(tmp.path().join("inequalities.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);
}
