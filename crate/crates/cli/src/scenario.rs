//! Flat `key = value` scenario files with `[section]` headers.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use pricefront::duhamel::QuadratureConfig;
use pricefront::fd::FdConfig;
use pricefront::model::ModelParams;
use pricefront::particles::ParticleConfig;
use pricefront::picard::Thresholds;

/// Parse or validation failure tied to a line of the scenario (0 when no line applies).
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}", self.line, self.message)
        } else {
            write!(f, "{}", self.message)
        }
    }
}

fn err(line: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError { line, message: message.into() }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSource {
    Builtin(String),
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Picard,
    Fd,
    Particles,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Picard => "picard",
            Stage::Fd => "fd",
            Stage::Particles => "particles",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub source: InitialSource,
    pub params: ModelParams,
    pub quad: QuadratureConfig,
    pub thresholds: Thresholds,
    pub fd: FdConfig,
    pub particles: ParticleConfig,
    pub t_end: f64,
    pub stages: Vec<Stage>,
    pub snapshots: Vec<f64>,
    pub output: Option<PathBuf>,
    /// Upper bound on trajectory rows written for the picard solver.
    pub trajectory_rows: usize,
    /// Bound suite runs on every `diagnostics_stride`-th window.
    pub diagnostics_stride: usize,
    pub foliation_bins: usize,
}

const KEYS: &[(&str, &[&str])] = &[
    ("initial", &["data"]),
    ("model", &["a", "a0", "rescue_half_factor"]),
    ("run", &["t_end", "solvers", "snapshots", "output"]),
    (
        "picard",
        &[
            "contraction_tol",
            "max_picard_iters",
            "window_safety_factor",
            "grid_points",
            "points_per_window",
            "gauss_points",
            "spectral_log_tol",
            "substitution",
            "trajectory_rows",
            "diagnostics_stride",
        ],
    ),
    ("fd", &["nx", "dt", "theta", "delta_width", "rannacher_steps"]),
    ("particles", &["n", "seed", "dt", "partitions", "bridge", "bins"]),
    ("thresholds", &["sup_growth", "lambda_floor", "curvature_ceiling"]),
];

struct Entry {
    value: String,
    line: usize,
}

struct Table {
    entries: BTreeMap<(String, String), Entry>,
    headers: BTreeMap<String, usize>,
}

impl Table {
    fn get<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, ScenarioError> {
        match self.entries.get(&(section.to_string(), key.to_string())) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse()
                .map(Some)
                .map_err(|_| err(e.line, format!("cannot parse '{}' as a value for {section}.{key}", e.value))),
        }
    }

    fn set<T: std::str::FromStr>(&self, section: &str, key: &str, slot: &mut T) -> Result<(), ScenarioError> {
        if let Some(v) = self.get(section, key)? {
            *slot = v;
        }
        Ok(())
    }

    fn line_of(&self, section: &str, key: &str) -> Option<usize> {
        self.entries.get(&(section.to_string(), key.to_string())).map(|e| e.line)
    }

    /// Anchors a validation message: first word names the key when it can.
    fn anchor(&self, section: &str, message: String) -> ScenarioError {
        let word: String = message.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
        let line = self
            .line_of(section, &word)
            .or_else(|| self.headers.get(section).copied())
            .unwrap_or(0);
        err(line, message)
    }
}

fn tokenize(text: &str) -> Result<Table, ScenarioError> {
    let mut entries: BTreeMap<(String, String), Entry> = BTreeMap::new();
    let mut headers = BTreeMap::new();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split(['#', ';']).next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(line, format!("unterminated section header '{body}'")))?
                .trim()
                .to_string();
            if !KEYS.iter().any(|(s, _)| *s == name) {
                return Err(err(line, format!("unknown section [{name}]")));
            }
            if headers.insert(name.clone(), line).is_some() {
                return Err(err(line, format!("section [{name}] appears twice")));
            }
            section = Some(name);
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected 'key = value', found '{body}'")))?;
        let (key, value) = (key.trim(), value.trim());
        let sec = section.as_ref().ok_or_else(|| err(line, format!("key '{key}' appears before any [section]")))?;
        let known = KEYS.iter().find(|(s, _)| s == sec).map(|(_, k)| *k).unwrap_or(&[]);
        if !known.contains(&key) {
            return Err(err(line, format!("unknown key '{key}' in [{sec}]")));
        }
        if value.is_empty() {
            return Err(err(line, format!("key '{key}' has no value")));
        }
        let slot = (sec.clone(), key.to_string());
        if let Some(prev) = entries.get(&slot) {
            return Err(err(line, format!("key '{key}' already set on line {}", prev.line)));
        }
        entries.insert(slot, Entry { value: value.to_string(), line });
    }
    Ok(Table { entries, headers })
}

fn parse_list<T: std::str::FromStr>(tab: &Table, section: &str, key: &str) -> Result<Option<Vec<T>>, ScenarioError> {
    let Some(e) = tab.entries.get(&(section.to_string(), key.to_string())) else {
        return Ok(None);
    };
    e.value
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| err(e.line, format!("cannot parse '{s}' in {section}.{key}"))))
        .collect::<Result<Vec<T>, _>>()
        .map(Some)
}

impl Scenario {
    /// Parses scenario text; relative data paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ScenarioError> {
        let tab = tokenize(text)?;

        let data_line = tab.line_of("initial", "data");
        let data: String = tab
            .get("initial", "data")?
            .ok_or_else(|| err(tab.headers.get("initial").copied().unwrap_or(0), "missing initial.data"))?;
        let source = match data.as_str() {
            "symmetric" | "skewed" => InitialSource::Builtin(data),
            path => {
                let p = Path::new(path);
                if p.extension().is_none() && !p.exists() && !base.join(p).exists() {
                    return Err(err(
                        data_line.unwrap_or(0),
                        format!("initial.data '{path}' is neither a built-in (symmetric, skewed) nor a file"),
                    ));
                }
                InitialSource::File(if p.is_absolute() { p.to_path_buf() } else { base.join(p) })
            }
        };

        let mut params = ModelParams::default();
        tab.set("model", "a", &mut params.a)?;
        tab.set("model", "a0", &mut params.a0)?;
        tab.set("model", "rescue_half_factor", &mut params.rescue_half_factor)?;
        tab.set("picard", "contraction_tol", &mut params.contraction_tol)?;
        tab.set("picard", "max_picard_iters", &mut params.max_picard_iters)?;
        tab.set("picard", "window_safety_factor", &mut params.window_safety_factor)?;
        tab.set("picard", "grid_points", &mut params.grid_points)?;
        if let Err(e) = params.validate() {
            let msg = strip_prefix(e.to_string());
            let section = if ["a ", "a0", "rescue"].iter().any(|k| msg.starts_with(k)) { "model" } else { "picard" };
            return Err(tab.anchor(section, msg));
        }

        let mut quad = QuadratureConfig::default();
        tab.set("picard", "points_per_window", &mut quad.points_per_window)?;
        tab.set("picard", "gauss_points", &mut quad.gauss_points)?;
        tab.set("picard", "spectral_log_tol", &mut quad.spectral_log_tol)?;
        tab.set("picard", "substitution", &mut quad.substitution)?;
        quad.validate().map_err(|e| tab.anchor("picard", strip_prefix(e.to_string())))?;

        let mut thresholds = Thresholds::default();
        tab.set("thresholds", "sup_growth", &mut thresholds.sup_growth)?;
        tab.set("thresholds", "lambda_floor", &mut thresholds.lambda_floor)?;
        tab.set("thresholds", "curvature_ceiling", &mut thresholds.curvature_ceiling)?;
        for (k, v) in [
            ("sup_growth", thresholds.sup_growth),
            ("lambda_floor", thresholds.lambda_floor),
            ("curvature_ceiling", thresholds.curvature_ceiling),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(tab.anchor("thresholds", format!("{k} must be positive and finite, got {v}")));
            }
        }

        let mut fd = FdConfig::default();
        tab.set("fd", "nx", &mut fd.nx)?;
        tab.set("fd", "dt", &mut fd.dt)?;
        tab.set("fd", "theta", &mut fd.theta)?;
        tab.set("fd", "delta_width", &mut fd.delta_width)?;
        tab.set("fd", "rannacher_steps", &mut fd.rannacher_steps)?;
        fd.validate().map_err(|e| tab.anchor("fd", strip_prefix(e.to_string())))?;

        let mut particles = ParticleConfig::default();
        tab.set("particles", "n", &mut particles.n)?;
        tab.set("particles", "seed", &mut particles.seed)?;
        tab.set("particles", "dt", &mut particles.dt)?;
        tab.set("particles", "partitions", &mut particles.partitions)?;
        tab.set("particles", "bridge", &mut particles.bridge)?;
        let mut foliation_bins = 50;
        tab.set("particles", "bins", &mut foliation_bins)?;
        if particles.dt.is_nan() || particles.dt <= 0.0 || particles.partitions == 0 || foliation_bins == 0 {
            return Err(tab.anchor("particles", "particles: dt, partitions and bins must be positive".into()));
        }

        let t_end: f64 = tab
            .get("run", "t_end")?
            .ok_or_else(|| err(tab.headers.get("run").copied().unwrap_or(0), "missing run.t_end"))?;
        if !(t_end >= 0.0 && t_end.is_finite()) {
            return Err(err(tab.line_of("run", "t_end").unwrap_or(0), format!("t_end must be finite and >= 0, got {t_end}")));
        }
        let names: Vec<String> = parse_list(&tab, "run", "solvers")?.unwrap_or_else(|| vec!["picard".into()]);
        let solvers_line = tab.line_of("run", "solvers").unwrap_or(0);
        let mut stages = vec![];
        for n in &names {
            let s = match n.as_str() {
                "picard" => Stage::Picard,
                "fd" | "fd_oracle" => Stage::Fd,
                "particles" => Stage::Particles,
                other => return Err(err(solvers_line, format!("unknown solver '{other}' (picard, fd, particles)"))),
            };
            if !stages.contains(&s) {
                stages.push(s);
            }
        }
        stages.sort();
        if stages.is_empty() {
            return Err(err(solvers_line, "run.solvers names no solver"));
        }
        if stages.contains(&Stage::Particles) && !stages.contains(&Stage::Picard) {
            return Err(err(solvers_line, "particles are driven by the picard trajectory; add picard to run.solvers"));
        }
        let mut snapshots: Vec<f64> = parse_list(&tab, "run", "snapshots")?.unwrap_or_default();
        if let Some(&bad) = snapshots.iter().find(|&&s| !(0.0..=t_end).contains(&s)) {
            return Err(err(
                tab.line_of("run", "snapshots").unwrap_or(0),
                format!("snapshot time {bad} lies outside [0, t_end = {t_end}]"),
            ));
        }
        snapshots.push(t_end);
        snapshots.sort_by(f64::total_cmp);
        snapshots.dedup();
        let output: Option<String> = tab.get("run", "output")?;

        let mut trajectory_rows = 2000;
        let mut diagnostics_stride = 64;
        tab.set("picard", "trajectory_rows", &mut trajectory_rows)?;
        tab.set("picard", "diagnostics_stride", &mut diagnostics_stride)?;
        if trajectory_rows < 2 || diagnostics_stride == 0 {
            return Err(tab.anchor("picard", "trajectory_rows must be >= 2 and diagnostics_stride >= 1".into()));
        }

        Ok(Scenario {
            source,
            params,
            quad,
            thresholds,
            fd,
            particles,
            t_end,
            stages,
            snapshots,
            output: output.map(PathBuf::from),
            trajectory_rows,
            diagnostics_stride,
            foliation_bins,
        })
    }

    pub fn runs(&self, s: Stage) -> bool {
        self.stages.contains(&s)
    }
}

fn strip_prefix(msg: String) -> String {
    msg.strip_prefix("invalid configuration: ").map(str::to_string).unwrap_or(msg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "[initial]\ndata = symmetric\n[run]\nt_end = 0.01\n";

    fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        Scenario::parse(text, Path::new("."))
    }

    #[test]
    fn minimal_scenario_uses_defaults() {
        let s = parse(BASE).unwrap();
        assert_eq!(s.source, InitialSource::Builtin("symmetric".into()));
        assert_eq!(s.params, ModelParams::default());
        assert_eq!(s.stages, vec![Stage::Picard]);
        assert_eq!(s.snapshots, vec![0.01]);
    }

    #[test]
    fn full_scenario() {
        let text = format!(
            "{BASE}solvers = fd, picard, particles  # all three\nsnapshots = 0.005\n[model]\na = 0.5\na0 = 0.1\n\
             [fd]\nnx = 801\n[particles]\nn = 1000\nseed = 7\nbridge = false\n[thresholds]\nsup_growth = 5\n"
        );
        let s = parse(&text).unwrap();
        assert_eq!(s.stages, vec![Stage::Picard, Stage::Fd, Stage::Particles]);
        assert_eq!((s.params.a, s.params.a0), (0.5, 0.1));
        assert_eq!(s.fd.nx, 801);
        assert_eq!((s.particles.n, s.particles.seed, s.particles.bridge), (1000, 7, false));
        assert_eq!(s.thresholds.sup_growth, 5.0);
        assert_eq!(s.snapshots, vec![0.005, 0.01]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("[initial]\ndata = symmetric\nbogus\n", 3, "expected 'key = value'"),
            ("a = 1\n", 1, "before any [section]"),
            ("[initial]\ndata = symmetric\n[mode]\n", 3, "unknown section"),
            ("[initial]\ndata = symmetric\n[run]\nt_end = 0.1\nt_end = 0.2\n", 5, "already set on line 4"),
            ("[initial]\ndata = symmetric\n[run]\nt_end = soon\n", 4, "cannot parse"),
            ("[initial]\ndata = symmetric\n[run]\nt_end = 0.1\n[model]\na = 0.4\na0 = 0.1\n", 7, "slope-window hypothesis"),
            ("[initial]\ndata = symmetric\n[run]\nt_end = 0.1\n[fd]\nnx = 3\n", 6, "nx must"),
            ("[initial]\ndata = symmetric\n[run]\nt_end = 0.1\nsolvers = particles\n", 5, "add picard"),
            ("[initial]\ndata = wobbly\n[run]\nt_end = 0.1\n", 2, "neither a built-in"),
            ("[initial]\ndata = symmetric\n[run]\nt_end = 0.1\nsnapshots = 0.5\n", 5, "outside"),
        ];
        for (text, line, needle) in cases {
            let e = parse(text).unwrap_err();
            assert_eq!(e.line, line, "{text:?}: {e}");
            assert!(e.message.contains(needle), "{text:?}: {e}");
        }
    }

    #[test]
    fn missing_required_keys() {
        assert!(parse("[run]\nt_end = 1\n").unwrap_err().message.contains("initial.data"));
        assert!(parse("[initial]\ndata = skewed\n").unwrap_err().message.contains("run.t_end"));
    }

    #[test]
    fn file_source_resolves_against_base() {
        let s = Scenario::parse("[initial]\ndata = prof.csv\n[run]\nt_end = 0\n", Path::new("/tmp/x")).unwrap();
        assert_eq!(s.source, InitialSource::File(PathBuf::from("/tmp/x/prof.csv")));
    }
}
