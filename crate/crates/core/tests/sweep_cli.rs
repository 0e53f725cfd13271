use std::fs;
use std::path::Path;
use std::process::Command;

use vibheom::config::{parse_config, RunConfig, Solver};
use vibheom::protocol::{run_protocol, HeomDynamics};
use vibheom::sweep::{emit_outputs, format_number, run_sweep, ResultTable, Row, SweepOptions, CSV_HEADER};

const SMALL: &str = r#"
solver = "fqme"
[model]
lambda_over_omega = 0.5
gamma = 0.0025
n_osc = 6
[drive]
amplitude = 0.2
[sweep]
omega_d = [0.1, 0.2, 0.3, 0.4]
phi = [0.0, 0.2]
[protocol]
cycle_tol = 1e-6
adiabatic_samples = 4
samples_per_cycle = 32
"#;

const SMALL_HEOM: &str = r#"
solver = "heom"
[model]
lambda_over_omega = 0.5
gamma = 0.025
n_osc = 4
[drive]
amplitude = 0.2
[sweep]
omega_d = [0.15, 0.3]
[heom]
pade_fermi = 6
threshold = 1e-4
rtol = 1e-5
[protocol]
cycle_tol = 1e-5
adiabatic_samples = 4
samples_per_cycle = 16
relaxation_window = 100.0
"#;

fn in_memory() -> SweepOptions {
    SweepOptions::default()
}

fn with_workers(text: &str, workers: usize) -> RunConfig {
    let mut c = parse_config(text).unwrap();
    c.workers = workers;
    c
}

#[test]
fn worker_count_does_not_change_the_table() {
    for text in [SMALL, SMALL_HEOM] {
        let one = run_sweep(&with_workers(text, 1), Path::new(""), &in_memory()).unwrap();
        let eight = run_sweep(&with_workers(text, 8), Path::new(""), &in_memory()).unwrap();
        assert_eq!(one.failures(), 0, "{:?}", one.rows);
        assert_eq!(one.to_csv().as_bytes(), eight.to_csv().as_bytes());
    }
}

#[test]
fn rows_follow_grid_order() {
    let c = with_workers(SMALL, 4);
    let t = run_sweep(&c, Path::new(""), &in_memory()).unwrap();
    let keys: Vec<(f64, f64)> = t.rows.iter().map(|r| (r.values[1], r.values[0])).collect();
    let expect: Vec<(f64, f64)> = c.points().iter().map(|p| (p.phi, p.omega_d)).collect();
    assert_eq!(keys, expect);
    assert!(t.rows.iter().all(|r| r.solver == "fqme"));
}

#[test]
fn single_point_sweep_matches_direct_protocol() {
    let text = SMALL_HEOM.replace("omega_d = [0.15, 0.3]", "omega_d = [0.3]");
    let c = parse_config(&text).unwrap();
    let t = run_sweep(&c, Path::new(""), &in_memory()).unwrap();
    assert_eq!(t.rows.len(), 1);
    let point = c.points()[0];
    let p = c.point_params(&point);
    let mut d = HeomDynamics::new(&p, &c.heom).unwrap();
    let (_, s) = run_protocol(&mut d, &p, &c.protocol).unwrap();
    let direct = Row::from_summary(Solver::Heom, &point, &s);
    assert_eq!(t.rows[0].to_csv_fields(), direct.to_csv_fields());
}

#[test]
fn undriven_config_gives_the_stationary_state() {
    let c = parse_config("solver = \"fqme\"\n[model]\nn_osc = 4\nlambda = 0.0\n[drive]\n").unwrap();
    let t = run_sweep(&c, Path::new(""), &in_memory()).unwrap();
    assert_eq!(t.rows.len(), 1);
    let r = &t.rows[0];
    assert!(r.is_ok());
    assert!((r.get("avg_population").unwrap() - 0.5).abs() < 1e-6);
    assert_eq!(r.get("amp_population"), Some(0.0));
    assert!(r.get("phase_population").unwrap().is_nan());
}

#[test]
fn resume_skips_completed_rows_and_reproduces_the_table() {
    let full_dir = tempfile::tempdir().unwrap();
    let c = parse_config(SMALL).unwrap();
    let on_disk = SweepOptions {
        resume: false,
        manifest: true,
    };
    let full = run_sweep(&c, full_dir.path(), &on_disk).unwrap();

    // An interrupted run: three finished rows and a torn fourth line.
    let part_dir = tempfile::tempdir().unwrap();
    let manifest = fs::read_to_string(full_dir.path().join("manifest.csv")).unwrap();
    let mut lines: Vec<&str> = manifest.lines().take(3).collect();
    let torn = &manifest.lines().nth(3).unwrap()[..20];
    lines.push(torn);
    fs::write(part_dir.path().join("manifest.csv"), lines.join("\n")).unwrap();
    fs::copy(full_dir.path().join("run.toml"), part_dir.path().join("run.toml")).unwrap();
    let resume = SweepOptions {
        resume: true,
        manifest: true,
    };
    let resumed = run_sweep(&c, part_dir.path(), &resume).unwrap();
    assert_eq!(resumed.to_csv(), full.to_csv());

    // Completed rows are taken from the manifest, not recomputed.
    let first = manifest.lines().next().unwrap();
    let fields: Vec<&str> = first.split(',').collect();
    let mut edited: Vec<String> = fields.iter().map(|s| s.to_string()).collect();
    edited[5] = format_number(0.123);
    let edited_manifest = std::iter::once(edited.join(","))
        .chain(manifest.lines().skip(1).map(String::from))
        .collect::<Vec<_>>()
        .join("\n");
    fs::write(part_dir.path().join("manifest.csv"), edited_manifest).unwrap();
    let resumed = run_sweep(&c, part_dir.path(), &resume).unwrap();
    let index: usize = fields[0].parse().unwrap();
    assert_eq!(resumed.rows[index].values[3], 0.123);
}

#[test]
fn resume_refuses_a_different_run() {
    let dir = tempfile::tempdir().unwrap();
    let c = parse_config(SMALL).unwrap();
    let opts = SweepOptions {
        resume: true,
        manifest: true,
    };
    run_sweep(&c, dir.path(), &opts).unwrap();
    let other = parse_config(&SMALL.replace("amplitude = 0.2", "amplitude = 0.3")).unwrap();
    assert!(run_sweep(&other, dir.path(), &opts).is_err());
}

#[test]
fn csv_round_trip_keeps_twelve_digits() {
    let c = parse_config(SMALL).unwrap();
    let t = run_sweep(&c, Path::new(""), &in_memory()).unwrap();
    let back = ResultTable::from_csv(&t.to_csv()).unwrap();
    assert_eq!(back.rows.len(), t.rows.len());
    for (a, b) in t.rows.iter().zip(&back.rows) {
        assert_eq!(a.solver, b.solver);
        assert_eq!(a.status, b.status);
        for (x, y) in a.values.iter().zip(b.values) {
            if x.is_nan() {
                assert!(y.is_nan());
            } else {
                assert!((x - y).abs() <= 5e-12 * x.abs(), "{x} vs {y}");
                assert_eq!(format_number(*x), format_number(y));
            }
        }
    }
}

#[test]
fn empty_table_writes_only_the_header() {
    let dir = tempfile::tempdir().unwrap();
    emit_outputs(&ResultTable::default(), dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(text, format!("{CSV_HEADER}\n"));
}

#[test]
fn outputs_include_figures_per_bath_coupling() {
    let dir = tempfile::tempdir().unwrap();
    let c = parse_config(SMALL).unwrap();
    let t = run_sweep(&c, Path::new(""), &in_memory()).unwrap();
    emit_outputs(&t, dir.path()).unwrap();
    for f in ["results.csv", "units.txt", "transport_00.svg", "response_00.svg"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let svg = fs::read_to_string(dir.path().join("transport_00.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("fqme phi = 0.2 eV"));
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_vibheom")).args(args).output().unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, SMALL).unwrap();
    let o = cli(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(table.lines().next(), Some(CSV_HEADER));
    assert_eq!(table.lines().count(), 9);

    let o = cli(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--resume"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read_to_string(out.join("results.csv")).unwrap(), table);

    // Undriven points succeed, driven ones cannot converge in one cycle.
    let partial = SMALL
        .replace("amplitude = 0.2", "amplitude = 0.2\nfrequency = 0.2")
        .replace("omega_d = [0.1, 0.2, 0.3, 0.4]", "amplitude = [0.0, 0.2]")
        .replace("[protocol]", "[protocol]\nmax_cycles = 1");
    fs::write(&cfg, partial).unwrap();
    let o = cli(&["run", cfg.to_str().unwrap(), "--out", dir.path().join("p").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let t = ResultTable::from_csv(&fs::read_to_string(dir.path().join("p/results.csv")).unwrap()).unwrap();
    assert_eq!(t.failures(), 2);
    assert!(t.rows.iter().any(|r| r.status.starts_with("failed: limit cycle not reached")));

    fs::write(&cfg, "[model]\nomegga = 0.2\n").unwrap();
    let o = cli(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    fs::write(&cfg, "[model]\nbath_coupling = 0.01\n").unwrap();
    let o = cli(&["run", cfg.to_str().unwrap(), "--solver", "fqme"]);
    assert_eq!(o.status.code(), Some(1));
}
