//! Sweep execution, result tables and plots.
//!
//! Every grid point of a [`RunConfig`] is solved with each selected solver. Points that
//! differ only in the drive frequency share their undriven relaxation and adiabatic
//! reference. Work is distributed over a worker pool one grid point at a time; finished
//! rows are appended to `manifest.csv` in the output directory so that an interrupted run
//! can resume. The final table is ordered by solver, then by grid point.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;

use crate::config::{RunConfig, Solver, SweepPoint};
use crate::error::{Error, Result};
type C = num_complex::Complex64;
use crate::model::ModelParams;
use crate::protocol::{
    adiabatic_reference, drive_to_limit_cycle, relax_undriven, AdiabaticReference, Convergence, Dynamics,
    HeomDynamics, LimitCycleSummary, QmeDynamics, Sample,
};

pub const CSV_HEADER: &str = "solver,omega_d_ev,phi_ev,lambda_bath_ev,avg_population,amp_population,phase_population,avg_displacement,amp_displacement,phase_displacement,avg_occupation,avg_power,avg_current,status";

pub const UNITS_NOTE: &str = "\
Units of the result table
energies (omega_d_ev, phi_ev, lambda_bath_ev): eV
phases (phase_population, phase_displacement): rad, relative to the adiabatic response
population, occupation: dimensionless; displacement: <a + a^dagger>
avg_current: e eV/hbar; 1 e eV/hbar = 2.43413e-4 A
avg_power: eV^2/hbar; 1 eV^2/hbar = 2.43413e-4 W
time: hbar/eV = 6.58212e-16 s
nan marks an undefined phase or a failed point; see the status column
";

/// Number of numeric columns of a row.
pub const N_VALUES: usize = 12;

/// One line of the result table.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub solver: String,
    /// `omega_d, phi, lambda_bath`, then the nine observables in header order.
    pub values: [f64; N_VALUES],
    /// `ok` or `failed: <reason>`.
    pub status: String,
}

impl Row {
    pub fn from_summary(solver: Solver, point: &SweepPoint, s: &LimitCycleSummary) -> Self {
        let phase = |x: Option<f64>| x.unwrap_or(f64::NAN);
        Row {
            solver: solver.name().into(),
            values: [
                point.omega_d,
                point.phi,
                point.lambda_bath,
                s.population.average,
                s.population.amplitude,
                phase(s.population.phase_shift),
                s.displacement.average,
                s.displacement.amplitude,
                phase(s.displacement.phase_shift),
                s.occupation.average,
                s.power,
                s.current,
            ],
            status: "ok".into(),
        }
    }

    /// Row of an undriven point: the stationary state, with vanishing amplitudes and power.
    pub fn stationary(solver: Solver, point: &SweepPoint, s: &Sample) -> Self {
        Row {
            solver: solver.name().into(),
            values: [
                point.omega_d,
                point.phi,
                point.lambda_bath,
                s.population,
                0.0,
                f64::NAN,
                s.displacement,
                0.0,
                f64::NAN,
                s.occupation,
                0.0,
                s.current(),
            ],
            status: "ok".into(),
        }
    }

    pub fn failed(solver: Solver, point: &SweepPoint, reason: &str) -> Self {
        let mut values = [f64::NAN; N_VALUES];
        values[0] = point.omega_d;
        values[1] = point.phi;
        values[2] = point.lambda_bath;
        Row {
            solver: solver.name().into(),
            values,
            status: format!("failed: {reason}"),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    /// Value of a numeric column by header name.
    pub fn get(&self, column: &str) -> Option<f64> {
        let i = CSV_HEADER.split(',').position(|c| c == column)?;
        (1..=N_VALUES).contains(&i).then(|| self.values[i - 1])
    }

    /// Fields as written to the table.
    pub fn to_csv_fields(&self) -> Vec<String> {
        let mut r = Vec::with_capacity(N_VALUES + 2);
        r.push(self.solver.clone());
        r.extend(self.values.iter().map(|&v| format_number(v)));
        r.push(self.status.clone());
        r
    }

    fn from_record(rec: &csv::StringRecord) -> Result<Self> {
        if rec.len() != N_VALUES + 2 {
            return Err(Error::Io(format!("table row has {} fields, expected {}", rec.len(), N_VALUES + 2)));
        }
        let mut values = [0.0; N_VALUES];
        for (v, field) in values.iter_mut().zip(rec.iter().skip(1)) {
            *v = field
                .parse()
                .map_err(|_| Error::Io(format!("bad number '{field}' in table")))?;
        }
        Ok(Row {
            solver: rec[0].to_string(),
            values,
            status: rec[N_VALUES + 1].to_string(),
        })
    }
}

/// Twelve significant digits in scientific notation; `nan`, `inf`, `-inf` otherwise.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.11e}")
    }
}

/// Rows of a sweep in table order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<Row>,
}

impl ResultTable {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_ok()).count()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(CSV_HEADER.split(',')).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.to_csv_fields()).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 table")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| Error::Io(e.to_string()))?;
        if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
            return Err(Error::Io("unexpected table header".into()));
        }
        let rows = r
            .records()
            .map(|rec| Row::from_record(&rec.map_err(|e| Error::Io(e.to_string()))?))
            .collect::<Result<_>>()?;
        Ok(ResultTable { rows })
    }
}

/// Options of [`run_sweep`] not stored in the configuration.
#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Reuse completed rows of a previous run in the output directory.
    pub resume: bool,
    /// Write rows to the manifest as they complete. Without it nothing touches the disk.
    pub manifest: bool,
}

fn make_dynamics(solver: Solver, p: &ModelParams, cfg: &RunConfig) -> Result<Box<dyn Dynamics + Send>> {
    Ok(match solver {
        Solver::Heom => Box::new(HeomDynamics::new(p, &cfg.heom)?),
        Solver::Fqme => Box::new(QmeDynamics::new(p, cfg.fqme.rtol)?),
    })
}

/// Shared start of all points of one group.
struct Prepared {
    start: Vec<C>,
    relaxation: Convergence,
    stationary: Sample,
    reference: Option<AdiabaticReference>,
}

fn prepare(solver: Solver, p: &ModelParams, cfg: &RunConfig) -> Result<Prepared> {
    let mut d = make_dynamics(solver, p, cfg)?;
    let relaxation = relax_undriven(d.as_mut(), p, &cfg.protocol)?;
    let start = d.vector();
    let stationary = d.sample();
    let reference = if p.drive_amplitude != 0.0 {
        Some(adiabatic_reference(d.as_mut(), p, &cfg.protocol)?)
    } else {
        None
    };
    Ok(Prepared {
        start,
        relaxation,
        stationary,
        reference,
    })
}

fn solve_point(solver: Solver, point: &SweepPoint, cfg: &RunConfig, prep: &Prepared) -> Result<Row> {
    let p = cfg.point_params(point);
    if p.drive_amplitude == 0.0 {
        return Ok(Row::stationary(solver, point, &prep.stationary));
    }
    let mut d = make_dynamics(solver, &p.undriven(), cfg)?;
    d.set_vector(&prep.start, 0.0);
    let (_, summary) = drive_to_limit_cycle(d.as_mut(), &p, &cfg.protocol, prep.reference.as_ref(), prep.relaxation)?;
    Ok(Row::from_summary(solver, point, &summary))
}

struct Job {
    index: usize,
    solver: Solver,
    point: SweepPoint,
    group: usize,
}

/// Configuration written next to the manifest; runs resume only into an identical one.
fn run_identity(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.workers = 1;
    c.out = String::new();
    c.to_toml()
}

fn load_manifest(dir: &Path, cfg: &RunConfig) -> Result<BTreeMap<usize, Row>> {
    let mut done = BTreeMap::new();
    let id_path = dir.join("run.toml");
    let Ok(previous) = fs::read_to_string(&id_path) else {
        return Ok(done);
    };
    if previous != run_identity(cfg) {
        return Err(Error::Io(format!(
            "{} belongs to a different run; use a fresh output directory or drop --resume",
            id_path.display()
        )));
    }
    let Ok(text) = fs::read_to_string(dir.join("manifest.csv")) else {
        return Ok(done);
    };
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    for rec in r.records() {
        // A torn final line from an interrupted run is skipped.
        let Ok(rec) = rec else { continue };
        if rec.len() != N_VALUES + 3 {
            continue;
        }
        let Ok(index) = rec[0].parse::<usize>() else { continue };
        let rest: csv::StringRecord = rec.iter().skip(1).collect();
        if let Ok(row) = Row::from_record(&rest) {
            if row.is_ok() {
                done.insert(index, row);
            }
        }
    }
    Ok(done)
}

struct Manifest {
    file: Option<fs::File>,
}

impl Manifest {
    fn append(&mut self, index: usize, row: &Row) -> Result<()> {
        let Some(f) = self.file.as_mut() else { return Ok(()) };
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        let mut rec = vec![index.to_string()];
        rec.extend(row.to_csv_fields());
        w.write_record(&rec).map_err(|e| Error::Io(e.to_string()))?;
        f.write_all(&w.into_inner().map_err(|e| Error::Io(e.to_string()))?)?;
        f.flush()?;
        Ok(())
    }
}

/// Runs every grid point with every selected solver.
///
/// Per-point failures become rows with a `failed:` status. Errors in setting up the
/// output directory or the worker pool are fatal.
pub fn run_sweep(cfg: &RunConfig, dir: &Path, options: &SweepOptions) -> Result<ResultTable> {
    cfg.validate()?;
    let points = cfg.points();
    let mut jobs = Vec::new();
    let mut groups: Vec<(Solver, SweepPoint)> = Vec::new();
    for &solver in cfg.solver.solvers() {
        for point in &points {
            let group = match groups.iter().position(|(s, g)| *s == solver && g.same_group(point)) {
                Some(g) => g,
                None => {
                    groups.push((solver, *point));
                    groups.len() - 1
                }
            };
            jobs.push(Job {
                index: jobs.len(),
                solver,
                point: *point,
                group,
            });
        }
    }

    let mut done = BTreeMap::new();
    let mut manifest = Manifest { file: None };
    if options.manifest {
        fs::create_dir_all(dir)?;
        if options.resume {
            done = load_manifest(dir, cfg)?;
        }
        fs::write(dir.join("run.toml"), run_identity(cfg))?;
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(options.resume)
            .write(true)
            .truncate(!options.resume)
            .open(dir.join("manifest.csv"))?;
        if options.resume {
            // Terminate a torn line so appended rows start cleanly.
            f.write_all(b"\n")?;
        }
        manifest.file = Some(f);
    }
    let manifest = Mutex::new(manifest);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Io(format!("worker pool: {e}")))?;

    let pending: Vec<&Job> = jobs.iter().filter(|j| !done.contains_key(&j.index)).collect();
    let needed: Vec<usize> = pending
        .iter()
        .map(|j| j.group)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let computed: Vec<(usize, Row)> = pool.install(|| -> Result<Vec<(usize, Row)>> {
        let prepared: BTreeMap<usize, std::result::Result<Prepared, String>> = needed
            .par_iter()
            .map(|&g| {
                let (solver, point) = groups[g];
                let p = cfg.point_params(&point);
                (g, prepare(solver, &p, cfg).map_err(|e| e.to_string()))
            })
            .collect();
        pending
            .par_iter()
            .map(|job| {
                let row = match &prepared[&job.group] {
                    Ok(prep) => solve_point(job.solver, &job.point, cfg, prep)
                        .unwrap_or_else(|e| Row::failed(job.solver, &job.point, &e.to_string())),
                    Err(e) => Row::failed(job.solver, &job.point, e),
                };
                if !row.is_ok() {
                    log::warn!("{} at omega_d = {}: {}", row.solver, job.point.omega_d, row.status);
                }
                manifest.lock().expect("manifest lock").append(job.index, &row)?;
                Ok((job.index, row))
            })
            .collect()
    })?;

    done.extend(computed);
    Ok(ResultTable {
        rows: done.into_values().collect(),
    })
}

/// Writes `results.csv`, `units.txt` and the plots into `dir`.
pub fn emit_outputs(table: &ResultTable, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("results.csv"), table.to_csv())?;
    fs::write(dir.join("units.txt"), UNITS_NOTE)?;
    crate::plot::write_figures(table, dir)
}
