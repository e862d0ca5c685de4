//! `run` and `validate`: scenario to output directory.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use pricefront::diagnostics::{
    blowup_panel, bound_suite, cumulative_flux, mass_report, stayaway_report, write_jsonl, Record,
};
use pricefront::duhamel::profile_snapshot;
use pricefront::fd::{fd_solve, FdTrajectory};
use pricefront::model::{read_profile_file, validate_initial, InitialData, SolutionState};
use pricefront::particles::{foliation_report, run_particles, write_transactions};
use pricefront::picard::Solver;
use pricefront::Error;

use crate::scenario::{InitialSource, Scenario, Stage};

pub const OUTPUT_ROOT_VAR: &str = "PRICEFRONT_OUTPUT_ROOT";

#[derive(Debug)]
pub enum CliError {
    /// Bad scenario or initial data; exit 1.
    Config(String),
    /// A blow-up threshold tripped; exit 2.
    Blowup(String),
    /// I/O or numerical failure; exit 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Blowup(_) => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Blowup(m) => write!(f, "blow-up detected: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub fn load_scenario(path: &Path) -> Result<(Scenario, Vec<u8>), CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Config(format!("{}: not valid UTF-8", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let scn = Scenario::parse(&text, base).map_err(|e| CliError::Config(format!("{}:{}", path.display(), anchored(&e))))?;
    Ok((scn, bytes))
}

fn anchored(e: &crate::scenario::ScenarioError) -> String {
    if e.line > 0 {
        format!("{}: {}", e.line, e.message)
    } else {
        format!(" {}", e.message)
    }
}

pub fn load_initial(scn: &Scenario) -> Result<InitialData, CliError> {
    let res = match &scn.source {
        InitialSource::Builtin(name) => InitialData::builtin(name, &scn.params),
        InitialSource::File(path) => read_profile_file(path).and_then(|(xs, fs)| validate_initial(&xs, &fs, None, &scn.params)),
    };
    res.map_err(|e| CliError::Config(e.to_string()))
}

/// Scenario `output` (relative paths under the output root), else `<root>/<scenario stem>`.
pub fn output_dir(scn: &Scenario, scenario_path: &Path, override_dir: Option<&Path>) -> PathBuf {
    if let Some(d) = override_dir {
        return d.to_path_buf();
    }
    let root = std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    match &scn.output {
        Some(p) if p.is_absolute() => p.clone(),
        Some(p) => root.join(p),
        None => root.join(scenario_path.file_stem().unwrap_or_default()),
    }
}

#[derive(Debug, Serialize)]
pub struct ValidationSummary {
    pub p_i: f64,
    pub lambda_i: f64,
    pub mass_b: f64,
    pub mass_p: f64,
    pub sup_norm: f64,
}

pub fn validate(path: &Path) -> Result<ValidationSummary, CliError> {
    let (scn, _) = load_scenario(path)?;
    let init = load_initial(&scn)?;
    Ok(ValidationSummary {
        p_i: init.p_i,
        lambda_i: init.lambda_i,
        mass_b: init.mass_b,
        mass_p: init.mass_p,
        sup_norm: init.sup_norm,
    })
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    fs::File::create(path).map(BufWriter::new).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn profile_name(t: f64) -> String {
    format!("profile_t{t}.csv")
}

fn write_profile(path: &Path, xs: &[f64], fs_: &[f64]) -> Result<(), CliError> {
    let mut w = create(path)?;
    writeln!(w, "x,f").map_err(runtime)?;
    for (x, f) in xs.iter().zip(fs_) {
        writeln!(w, "{x:.17e},{f:.17e}").map_err(runtime)?;
    }
    w.flush().map_err(runtime)
}

const TRAJECTORY_HEADER: &str = "t,p,lambda,M_b,M_p,cumulative_flux";

/// Trajectory rows at window ends, thinned to at most `scn.trajectory_rows`.
fn write_picard(dir: &Path, scn: &Scenario, state: &SolutionState) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(runtime)?;
    let nodes = state.nodes();
    let flux = cumulative_flux(state);
    let log = state.window_log();
    let stride = log.len().div_ceil(scn.trajectory_rows - 1).max(1);
    let mut rows = vec![0usize];
    for (w, rec) in log.iter().enumerate() {
        if (w + 1) % stride == 0 || w + 1 == log.len() {
            let t = rec.t_start + rec.length;
            let i = nodes.partition_point(|n| n.t < t).min(nodes.len() - 1);
            rows.push(i);
        }
    }
    rows.dedup();
    let mut records = vec![];
    let mut w = create(&dir.join("trajectory.csv"))?;
    writeln!(w, "{TRAJECTORY_HEADER}").map_err(runtime)?;
    for &i in &rows {
        let n = nodes[i];
        let m = mass_report(state, n.t).map_err(runtime)?;
        writeln!(w, "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}", n.t, n.p, n.lambda, m.mass_b, m.mass_p, flux[i])
            .map_err(runtime)?;
        records.push(Record::Mass(m));
        records.push(Record::Flux { t: n.t, cumulative: flux[i] });
    }
    w.flush().map_err(runtime)?;

    let grid = state.params().grid();
    for &t in &scn.snapshots {
        if t > state.t_current() {
            continue;
        }
        let prof = profile_snapshot(state, t, &grid).map_err(runtime)?;
        write_profile(&dir.join(profile_name(t)), &grid, &prof.values)?;
        if let Ok(b) = blowup_panel(state, t, &scn.thresholds) {
            records.push(Record::Blowup(b));
        }
    }
    records.push(Record::Stayaway(stayaway_report(state)));
    let mut windows: Vec<usize> = (0..log.len()).step_by(scn.diagnostics_stride).collect();
    if let Some(last) = log.len().checked_sub(1) {
        if windows.last() != Some(&last) {
            windows.push(last);
        }
    }
    for wi in windows {
        records.extend(bound_suite(state, wi).map_err(runtime)?.into_iter().map(Record::Bound));
    }
    let mut w = create(&dir.join("diagnostics.jsonl"))?;
    write_jsonl(&mut w, &records).map_err(runtime)?;
    w.flush().map_err(runtime)?;

    let mut w = create(&dir.join("windows.csv"))?;
    writeln!(w, "t_start,length,iterations,contraction_ratio,p_start,lambda_start,lambda_end,sup_norm_start")
        .map_err(runtime)?;
    for r in log {
        writeln!(
            w,
            "{:.17e},{:.17e},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            r.t_start, r.length, r.iterations, r.contraction_ratio, r.p_start, r.lambda_start, r.lambda_end, r.sup_norm_start
        )
        .map_err(runtime)?;
    }
    w.flush().map_err(runtime)
}

fn write_fd(dir: &Path, scn: &Scenario, tr: &FdTrajectory) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(runtime)?;
    let s = &tr.samples;
    let stride = (s.len() - 1).div_ceil(scn.trajectory_rows - 1).max(1);
    let mut w = create(&dir.join("trajectory.csv"))?;
    writeln!(w, "{TRAJECTORY_HEADER}").map_err(runtime)?;
    let mut flux = 0.0;
    for (i, r) in s.iter().enumerate() {
        if i > 0 {
            flux += 0.5 * (r.t - s[i - 1].t) * (r.lambda + s[i - 1].lambda);
        }
        if i % stride == 0 || i + 1 == s.len() {
            writeln!(w, "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}", r.t, r.p, r.lambda, r.mass_b, r.mass_p, flux)
                .map_err(runtime)?;
        }
    }
    w.flush().map_err(runtime)?;
    for (t, f) in &tr.snapshots {
        write_profile(&dir.join(profile_name(*t)), &tr.x, f)?;
    }
    Ok(())
}

fn write_particles(dir: &Path, scn: &Scenario, state: &SolutionState) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(runtime)?;
    let (ens, log) = run_particles(state, &scn.particles, scn.t_end).map_err(runtime)?;
    let mut w = create(&dir.join("transactions.csv"))?;
    write_transactions(&mut w, &log).map_err(runtime)?;
    w.flush().map_err(runtime)?;
    let report = foliation_report(&ens, state, scn.foliation_bins).map_err(runtime)?;
    let json = serde_json::to_string_pretty(&report).map_err(runtime)?;
    fs::write(dir.join("foliation_report.json"), json + "\n").map_err(runtime)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct Manifest<'a> {
    scenario: String,
    config_sha256: String,
    pricefront_version: &'a str,
    cli_version: &'a str,
    solvers: Vec<&'a str>,
    status: &'a str,
    params: &'a pricefront::model::ModelParams,
    quadrature: &'a pricefront::duhamel::QuadratureConfig,
    thresholds: &'a pricefront::picard::Thresholds,
    fd: &'a pricefront::fd::FdConfig,
    particles: &'a pricefront::particles::ParticleConfig,
    /// Relative path and sha256 of every output file.
    files: Vec<(String, String)>,
}

fn list_files(root: &Path, dir: &Path, out: &mut Vec<(String, String)>) -> Result<(), CliError> {
    let mut entries: Vec<_> = fs::read_dir(dir).map_err(runtime)?.collect::<Result<_, _>>().map_err(runtime)?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            list_files(root, &p, out)?;
        } else if p.file_name().is_some_and(|n| n != "manifest.json") {
            let rel = p.strip_prefix(root).unwrap_or(&p).to_string_lossy().replace('\\', "/");
            out.push((rel, sha256_hex(&fs::read(&p).map_err(runtime)?)));
        }
    }
    Ok(())
}

fn write_manifest(dir: &Path, path: &Path, bytes: &[u8], scn: &Scenario, status: &str) -> Result<(), CliError> {
    let mut files = vec![];
    list_files(dir, dir, &mut files)?;
    let m = Manifest {
        scenario: path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
        config_sha256: sha256_hex(bytes),
        pricefront_version: pricefront::VERSION,
        cli_version: env!("CARGO_PKG_VERSION"),
        solvers: scn.stages.iter().map(|s| s.name()).collect(),
        status,
        params: &scn.params,
        quadrature: &scn.quad,
        thresholds: &scn.thresholds,
        fd: &scn.fd,
        particles: &scn.particles,
        files,
    };
    let json = serde_json::to_string_pretty(&m).map_err(runtime)?;
    fs::write(dir.join("manifest.json"), json + "\n").map_err(runtime)
}

/// Executes every requested stage and writes the output tree. Returns the output directory.
pub fn run(path: &Path, override_dir: Option<&Path>) -> Result<PathBuf, CliError> {
    let (scn, bytes) = load_scenario(path)?;
    let init = load_initial(&scn)?;
    let dir = output_dir(&scn, path, override_dir);
    fs::create_dir_all(&dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;

    let mut state = None;
    if scn.runs(Stage::Picard) {
        let mut st = SolutionState::new(init.clone(), scn.params, scn.quad.clone()).map_err(runtime)?;
        let mut solver = Solver::new(&scn.params, scn.thresholds).map_err(runtime)?;
        match solver.advance(&mut st, scn.t_end) {
            Ok(()) => {}
            Err(Error::BlowupDetected(report)) => {
                let t = st.t_current();
                let dump = serde_json::json!({
                    "report": &*report,
                    "panel": blowup_panel(&st, t, &scn.thresholds).ok(),
                });
                let text = serde_json::to_string_pretty(&dump).map_err(runtime)?;
                fs::write(dir.join("blowup.json"), text.clone() + "\n").map_err(runtime)?;
                let pdir = dir.join("picard");
                write_picard(&pdir, &Scenario { snapshots: vec![t], ..scn.clone() }, &st)?;
                write_manifest(&dir, path, &bytes, &scn, "blowup")?;
                return Err(CliError::Blowup(format!("{report}\n{text}")));
            }
            Err(e) => return Err(runtime(e)),
        }
        state = Some(st);
    }

    // fd needs only the initial data; particles and diagnostics read the finished picard state
    std::thread::scope(|s| -> Result<(), CliError> {
        let fd = scn.runs(Stage::Fd).then(|| {
            s.spawn(|| -> Result<(), CliError> {
                let tr = fd_solve(&init, &scn.params, &scn.fd, scn.t_end, &scn.snapshots).map_err(runtime)?;
                write_fd(&dir.join("fd"), &scn, &tr)
            })
        });
        let parts = match (&state, scn.runs(Stage::Particles)) {
            (Some(st), true) => Some(s.spawn(|| write_particles(&dir.join("particles"), &scn, st))),
            _ => None,
        };
        if let Some(st) = &state {
            write_picard(&dir.join("picard"), &scn, st)?;
        }
        for h in [fd, parts].into_iter().flatten() {
            h.join().map_err(|_| runtime("worker thread panicked"))??;
        }
        Ok(())
    })?;
    write_manifest(&dir, path, &bytes, &scn, "ok")?;
    Ok(dir)
}
