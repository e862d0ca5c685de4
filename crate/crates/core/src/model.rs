//! Parameters, validated initial data, and the history-based solution state.

use std::path::Path;
use std::sync::OnceLock;

use serde::Serialize;

use crate::duhamel::QuadratureConfig;
use crate::error::{Error, InitialDataIssue, Result};
use crate::kernel::NeumannKernel;
use crate::linalg::fornberg_weights;
use crate::quadrature::GaussLegendre;
use crate::spline::NeumannSpline;

/// Highest cosine mode kept for the initial profile.
pub const INITIAL_MODES: usize = 16_384;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    /// Transaction jump size, in (0, 1).
    pub a: f64,
    /// Half-width of the neighbourhood where the front is tracked, `0 < a0 < a/4`.
    pub a0: f64,
    pub contraction_tol: f64,
    pub max_picard_iters: usize,
    /// Multiplies `sqrt(t0)`; window lengths scale with its square.
    pub window_safety_factor: f64,
    pub grid_points: usize,
    /// Fraction of the gap to the wall that caps the jump size.
    pub rescue_half_factor: f64,
}

impl ModelParams {
    pub fn new(a: f64, a0: f64) -> Result<Self> {
        let p = Self { a, a0, ..Self::default() };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a < 1.0) {
            return Err(Error::Config(format!("a must lie in (0, 1), got {}", self.a)));
        }
        if !(self.a0 > 0.0 && self.a0 < self.a / 4.0) {
            return Err(Error::Config(format!(
                "a0 = {} violates the slope-window hypothesis 0 < a0 < a/4 = {}",
                self.a0,
                self.a / 4.0
            )));
        }
        if self.grid_points < 201 {
            return Err(Error::Config(format!("grid_points must be at least 201, got {}", self.grid_points)));
        }
        if !(self.window_safety_factor > 0.0 && self.window_safety_factor <= 1.0) {
            return Err(Error::Config(format!(
                "window_safety_factor must lie in (0, 1], got {}",
                self.window_safety_factor
            )));
        }
        if !(self.rescue_half_factor > 0.0 && self.rescue_half_factor <= 1.0) {
            return Err(Error::Config(format!(
                "rescue_half_factor must lie in (0, 1], got {}",
                self.rescue_half_factor
            )));
        }
        if !(self.contraction_tol > 0.0) || self.max_picard_iters < 2 {
            return Err(Error::Config("contraction_tol must be positive and max_picard_iters >= 2".into()));
        }
        Ok(())
    }

    /// Uniform grid with `grid_points` nodes on [-1, 1].
    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(self.grid_points)
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            a: 0.4,
            a0: 0.05,
            contraction_tol: 1e-11,
            max_picard_iters: 30,
            window_safety_factor: 1.0,
            grid_points: 401,
            rescue_half_factor: 0.5,
        }
    }
}

pub fn uniform_grid(n: usize) -> Vec<f64> {
    let h = 2.0 / (n - 1) as f64;
    (0..n).map(|i| if i + 1 == n { 1.0 } else { -1.0 + h * i as f64 }).collect()
}

/// Jump offsets `(a_left, a_right)` after the wall rescue.
pub fn rescue_clamp(p: f64, params: &ModelParams) -> Result<(f64, f64)> {
    if !(p > -1.0 && p < 1.0) {
        return Err(Error::Domain(format!("front position {p} lies outside (-1, 1)")));
    }
    Ok(clamp_offsets(p, params.a, params.rescue_half_factor))
}

#[inline]
pub(crate) fn clamp_offsets(p: f64, a: f64, factor: f64) -> (f64, f64) {
    (a.min(factor * (1.0 + p)), a.min(factor * (1.0 - p)))
}

/// Source (buyer side) and sink (vendor side) locations for front position p.
#[inline]
pub(crate) fn source_sink(p: f64, a: f64, factor: f64) -> (f64, f64) {
    let (l, r) = clamp_offsets(p, a, factor);
    (p - l, p + r)
}

/// One sample of the front history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Node {
    pub t: f64,
    pub p: f64,
    pub lambda: f64,
}

/// Validated initial profile.
#[derive(Debug)]
pub struct InitialData {
    spline: NeumannSpline,
    pub p_i: f64,
    pub lambda_i: f64,
    pub mass_b: f64,
    pub mass_p: f64,
    pub sup_norm: f64,
    pub l1_norm: f64,
    coeffs: OnceLock<Vec<f64>>,
}

impl Clone for InitialData {
    fn clone(&self) -> Self {
        Self {
            spline: self.spline.clone(),
            p_i: self.p_i,
            lambda_i: self.lambda_i,
            mass_b: self.mass_b,
            mass_p: self.mass_p,
            sup_norm: self.sup_norm,
            l1_norm: self.l1_norm,
            coeffs: self.coeffs.clone(),
        }
    }
}

impl PartialEq for InitialData {
    fn eq(&self, o: &Self) -> bool {
        self.spline == o.spline
            && self.p_i == o.p_i
            && self.lambda_i == o.lambda_i
            && self.mass_b == o.mass_b
            && self.mass_p == o.mass_p
    }
}

impl InitialData {
    /// Samples `f` on the parameter grid and validates.
    pub fn from_fn(f: impl Fn(f64) -> f64, params: &ModelParams) -> Result<Self> {
        let xs = params.grid();
        let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        validate_initial(&xs, &fs, None, params)
    }

    /// Built-in profiles: `symmetric` is -sin(πx/2); `skewed` adds a constant and a
    /// cos(πx) bump so the zero sits off-centre and the two masses differ.
    pub fn builtin(name: &str, params: &ModelParams) -> Result<Self> {
        match name {
            "symmetric" => Self::from_fn(symmetric_profile, params),
            "skewed" => Self::from_fn(skewed_profile, params),
            _ => Err(Error::Domain(format!("unknown built-in initial data '{name}' (expected symmetric or skewed)"))),
        }
    }

    pub fn spline(&self) -> &NeumannSpline {
        &self.spline
    }

    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(self.spline.knots())
    }

    pub fn samples(&self) -> &[f64] {
        self.spline.samples()
    }

    pub fn value(&self, x: f64) -> f64 {
        self.spline.value(x)
    }

    /// Cosine coefficients `int f_I cos(mπ(x+1)/2) dx`, m = 0..=INITIAL_MODES.
    pub fn cosine_coefficients(&self) -> &[f64] {
        self.coeffs.get_or_init(|| self.spline.cosine_coefficients(INITIAL_MODES))
    }
}

pub fn symmetric_profile(x: f64) -> f64 {
    -(std::f64::consts::FRAC_PI_2 * x).sin()
}

pub fn skewed_profile(x: f64) -> f64 {
    0.15 - (std::f64::consts::FRAC_PI_2 * x).sin() - 0.2 * (std::f64::consts::PI * x).cos()
}

/// Checks sign structure, Neumann walls and the slope window on a sampled profile and derives p_I, λ_I, M_b, M_p.
pub fn validate_initial(
    xs: &[f64],
    fs: &[f64],
    p_hint: Option<f64>,
    params: &ModelParams,
) -> Result<InitialData> {
    let bad = |issue| Error::InvalidInitialData(issue);
    let n = xs.len();
    if n != fs.len() || n < 11 {
        return Err(bad(InitialDataIssue::Grid(format!(
            "need at least 11 matching samples, got {} x and {} f",
            n,
            fs.len()
        ))));
    }
    let h = 2.0 / (n - 1) as f64;
    for (i, &x) in xs.iter().enumerate() {
        let expect = -1.0 + h * i as f64;
        if (x - expect).abs() > 1e-9 {
            return Err(bad(InitialDataIssue::Grid(format!(
                "sample {i} at x = {x} is off the uniform grid over [-1, 1] (expected {expect})"
            ))));
        }
    }
    if fs.iter().any(|v| !v.is_finite()) {
        return Err(bad(InitialDataIssue::Grid("non-finite sample".into())));
    }
    let sup = fs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if sup == 0.0 {
        return Err(bad(InitialDataIssue::MultipleZeros(n)));
    }

    // exactly one zero, positive to the left
    let eps = 1e-12 * sup;
    let mut zeros = 0usize;
    let mut last_sign = 0.0f64;
    let mut in_run = false;
    for &v in fs {
        if v.abs() <= eps {
            if !in_run {
                zeros += 1;
                in_run = true;
            }
            continue;
        }
        let s = v.signum();
        if in_run {
            in_run = false;
        } else if last_sign != 0.0 && s != last_sign {
            zeros += 1;
        }
        last_sign = s;
    }
    if zeros != 1 {
        return Err(bad(InitialDataIssue::MultipleZeros(zeros)));
    }
    if !(fs[0] > eps && fs[n - 1] < -eps) {
        return Err(bad(InitialDataIssue::SignStructure));
    }

    // zero slope at both walls, second-order one-sided differences
    let slope_tol = 5.0 * h * sup;
    let left = (-3.0 * fs[0] + 4.0 * fs[1] - fs[2]) / (2.0 * h);
    let right = (3.0 * fs[n - 1] - 4.0 * fs[n - 2] + fs[n - 3]) / (2.0 * h);
    for (wall, slope) in [(-1.0, left), (1.0, right)] {
        if slope.abs() > slope_tol {
            return Err(bad(InitialDataIssue::BoundarySlope { wall, slope, tol: slope_tol }));
        }
    }

    let spline = NeumannSpline::new(fs);
    let i = fs.iter().position(|&v| v <= eps).expect("a sign change exists");
    let j = (i..n).find(|&k| fs[k] < -eps).expect("negative tail exists");
    let (mut lo, mut hi) = (xs[i - 1], xs[j]);
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if spline.value(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut p = 0.5 * (lo + hi);
    for _ in 0..4 {
        let d = spline.derivative(p, 1);
        if d == 0.0 {
            break;
        }
        let next = p - spline.value(p) / d;
        if !(next > xs[i - 1] && next < xs[j]) {
            break;
        }
        p = next;
    }
    if let Some(hint) = p_hint {
        if (hint - p).abs() > 2.0 * h {
            return Err(bad(InitialDataIssue::Grid(format!(
                "zero found at {p}, inconsistent with hint {hint}"
            ))));
        }
    }
    let lambda = -spline.derivative(p, 1);
    if !(lambda > 0.0) {
        return Err(bad(InitialDataIssue::SlopeWindow { x: p, slope: lambda, lambda }));
    }

    // -f_I' > λ_I / 2 on (p_I - a0, p_I + a0)
    let a0 = params.a0;
    if p - a0 <= -1.0 || p + a0 >= 1.0 {
        return Err(bad(InitialDataIssue::Grid(format!(
            "a0-window around p_I = {p} leaves the domain"
        ))));
    }
    for k in 1..400 {
        let x = p - a0 + 2.0 * a0 * k as f64 / 400.0;
        let slope = -spline.derivative(x, 1);
        if !(slope > 0.5 * lambda) {
            return Err(bad(InitialDataIssue::SlopeWindow { x, slope, lambda }));
        }
    }

    let mass_b = spline.integral(-1.0, p);
    let mass_p = -spline.integral(p, 1.0);
    if !(mass_b > 0.0 && mass_p > 0.0) {
        return Err(bad(InitialDataIssue::Mass));
    }
    let l1_norm = mass_b + mass_p;
    Ok(InitialData {
        spline,
        p_i: p,
        lambda_i: lambda,
        mass_b,
        mass_p,
        sup_norm: sup,
        l1_norm,
        coeffs: OnceLock::new(),
    })
}

/// Reads a two-column `x, f` text file. Columns may be separated by commas
/// or whitespace; lines starting with `#` are skipped.
pub fn read_profile_file(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path)?;
    parse_profile_text(&text)
}

pub fn parse_profile_text(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut xs = Vec::new();
    let mut fs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if cols.len() != 2 {
            return Err(Error::Config(format!(
                "line {}: expected two columns, found {}",
                lineno + 1,
                cols.len()
            )));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Config(format!("line {}: {s:?}: {e}", lineno + 1)))
        };
        // a header row such as "x,f" may open the file
        if xs.is_empty() && cols.iter().all(|c| c.parse::<f64>().is_err()) {
            continue;
        }
        xs.push(parse(cols[0])?);
        fs.push(parse(cols[1])?);
    }
    Ok((xs, fs))
}

/// Per-window solver record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowRecord {
    pub t_start: f64,
    pub length: f64,
    pub iterations: usize,
    /// Largest observed ratio of successive iterate differences; 0 if the
    /// iteration reached the noise floor before two differences were measurable.
    pub contraction_ratio: f64,
    pub p_start: f64,
    pub lambda_start: f64,
    pub lambda_end: f64,
    pub sup_norm_start: f64,
    pub flux_floor_ok: bool,
}

/// Source/sink bounding boxes and peak |λ| over a run of history nodes.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BlockSummary {
    pub source_lo: f64,
    pub source_hi: f64,
    pub sink_lo: f64,
    pub sink_hi: f64,
    pub lambda_max: f64,
}

impl BlockSummary {
    fn merge(self, o: Self) -> Self {
        Self {
            source_lo: self.source_lo.min(o.source_lo),
            source_hi: self.source_hi.max(o.source_hi),
            sink_lo: self.sink_lo.min(o.sink_lo),
            sink_hi: self.sink_hi.max(o.sink_hi),
            lambda_max: self.lambda_max.max(o.lambda_max),
        }
    }
}

/// Nodes per block; block k spans nodes `BLOCK*k ..= BLOCK*(k+1)`.
pub(crate) const BLOCK: usize = 16;

/// Sparse table over complete blocks: O(1) range queries, O(log n) appends.
#[derive(Debug, Clone, Default)]
pub(crate) struct BlockTable {
    levels: Vec<Vec<BlockSummary>>,
}

impl BlockTable {
    pub fn len(&self) -> usize {
        self.levels.first().map_or(0, |l| l.len())
    }

    fn push(&mut self, b: BlockSummary) {
        if self.levels.is_empty() {
            self.levels.push(vec![]);
        }
        self.levels[0].push(b);
        let n = self.levels[0].len();
        let mut j = 1;
        while (1usize << j) <= n {
            let half = 1usize << (j - 1);
            let i = n - (1 << j);
            let merged = self.levels[j - 1][i].merge(self.levels[j - 1][i + half]);
            if self.levels.len() <= j {
                self.levels.push(vec![]);
            }
            self.levels[j].push(merged);
            j += 1;
        }
    }

    /// Summary of blocks `b0..b1` (non-empty).
    pub fn query(&self, b0: usize, b1: usize) -> BlockSummary {
        let j = (usize::BITS - 1 - (b1 - b0).leading_zeros()) as usize;
        self.levels[j][b0].merge(self.levels[j][b1 - (1 << j)])
    }
}

/// The solution as a Duhamel history: f_I plus the (p, λ) trajectory.
#[derive(Debug, Clone)]
pub struct SolutionState {
    pub(crate) initial: InitialData,
    pub(crate) params: ModelParams,
    pub(crate) quad: QuadratureConfig,
    pub(crate) kernel: NeumannKernel,
    pub(crate) nodes: Vec<Node>,
    pub(crate) blocks: BlockTable,
    pub(crate) gl: GaussLegendre,
    pub(crate) window_log: Vec<WindowRecord>,
}

impl SolutionState {
    pub fn new(initial: InitialData, params: ModelParams, quad: QuadratureConfig) -> Result<Self> {
        params.validate()?;
        quad.validate()?;
        let gl = GaussLegendre::new(quad.gauss_points);
        let node = Node { t: 0.0, p: initial.p_i, lambda: initial.lambda_i };
        let mut s = Self {
            initial,
            params,
            quad,
            kernel: NeumannKernel::default(),
            nodes: vec![],
            blocks: BlockTable::default(),
            gl,
            window_log: vec![],
        };
        s.push_nodes(&[node])?;
        Ok(s)
    }

    /// State with a prescribed history (the first node must sit at t = 0).
    pub fn with_history(
        initial: InitialData,
        params: ModelParams,
        quad: QuadratureConfig,
        history: &[Node],
    ) -> Result<Self> {
        params.validate()?;
        quad.validate()?;
        let gl = GaussLegendre::new(quad.gauss_points);
        if history.first().is_none_or(|n| n.t != 0.0) {
            return Err(Error::Domain("history must start at t = 0".into()));
        }
        let mut s = Self {
            initial,
            params,
            quad,
            kernel: NeumannKernel::default(),
            nodes: vec![],
            blocks: BlockTable::default(),
            gl,
            window_log: vec![],
        };
        s.push_nodes(history)?;
        Ok(s)
    }

    pub fn initial(&self) -> &InitialData {
        &self.initial
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn quadrature(&self) -> &QuadratureConfig {
        &self.quad
    }

    pub fn kernel(&self) -> &NeumannKernel {
        &self.kernel
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn t_current(&self) -> f64 {
        self.nodes.last().map_or(0.0, |n| n.t)
    }

    pub fn window_log(&self) -> &[WindowRecord] {
        &self.window_log
    }

    pub(crate) fn record_window(&mut self, rec: WindowRecord) {
        self.window_log.push(rec);
    }

    /// Appends history nodes; times must increase strictly, p stay in (-1, 1).
    pub fn push_nodes(&mut self, new: &[Node]) -> Result<()> {
        let mut last_t = self.nodes.last().map(|n| n.t);
        for n in new {
            if let Some(lt) = last_t {
                if !(n.t > lt) {
                    return Err(Error::Domain(format!("history time {} does not exceed {}", n.t, lt)));
                }
            }
            if !(n.p > -1.0 && n.p < 1.0) {
                return Err(Error::Domain(format!("front position {} lies outside (-1, 1)", n.p)));
            }
            if !n.lambda.is_finite() {
                return Err(Error::Domain("non-finite flux in history".into()));
            }
            last_t = Some(n.t);
        }
        self.nodes.extend_from_slice(new);
        self.refresh_blocks();
        Ok(())
    }

    fn refresh_blocks(&mut self) {
        let (a, c) = (self.params.a, self.params.rescue_half_factor);
        while BLOCK * (self.blocks.len() + 1) < self.nodes.len() {
            let first = BLOCK * self.blocks.len();
            let mut b = BlockSummary {
                source_lo: f64::INFINITY,
                source_hi: f64::NEG_INFINITY,
                sink_lo: f64::INFINITY,
                sink_hi: f64::NEG_INFINITY,
                lambda_max: 0.0,
            };
            for n in &self.nodes[first..=first + BLOCK] {
                let (src, snk) = source_sink(n.p, a, c);
                b.source_lo = b.source_lo.min(src);
                b.source_hi = b.source_hi.max(src);
                b.sink_lo = b.sink_lo.min(snk);
                b.sink_hi = b.sink_hi.max(snk);
                b.lambda_max = b.lambda_max.max(n.lambda.abs());
            }
            self.blocks.push(b);
        }
    }

    /// Front position and flux at time t by linear interpolation of the history.
    pub fn interpolate(&self, t: f64) -> Result<(f64, f64)> {
        if !(t >= 0.0 && t <= self.t_current()) {
            return Err(Error::OutOfRange { t, t_current: self.t_current() });
        }
        Ok(interpolate_nodes(&self.nodes, t))
    }
}

pub(crate) fn interpolate_nodes(nodes: &[Node], t: f64) -> (f64, f64) {
    let i = nodes.partition_point(|n| n.t <= t);
    if i == 0 {
        return (nodes[0].p, nodes[0].lambda);
    }
    if i == nodes.len() {
        let n = nodes[i - 1];
        return (n.p, n.lambda);
    }
    let (a, b) = (nodes[i - 1], nodes[i]);
    let w = (t - a.t) / (b.t - a.t);
    (a.p + w * (b.p - a.p), a.lambda + w * (b.lambda - a.lambda))
}

/// A sampled snapshot `f(·, t)` with local-polynomial derivative queries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Profile {
    pub t: f64,
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
    /// `int_{-1}^{x_i} f`, when known.
    pub primitive: Option<Vec<f64>>,
    /// Degree of the local interpolating polynomial used for queries.
    pub order: usize,
    /// Intervals where derivative queries are refused.
    pub exclusion: Vec<(f64, f64)>,
}

impl Profile {
    pub fn from_samples(t: f64, xs: Vec<f64>, values: Vec<f64>) -> Self {
        Self { t, xs, values, primitive: None, order: 6, exclusion: vec![] }
    }

    pub fn from_fn(t: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        let xs = uniform_grid(n);
        let values = xs.iter().map(|&x| f(x)).collect();
        Self::from_samples(t, xs, values)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn in_exclusion(&self, x: f64) -> bool {
        self.exclusion.iter().any(|&(lo, hi)| x > lo && x < hi)
    }

    fn stencil(&self, x: f64) -> &[f64] {
        let n = self.xs.len();
        let width = (self.order + 1).min(n);
        let i = self.xs.partition_point(|&v| v < x);
        let start = i.saturating_sub(width / 2).min(n - width);
        &self.xs[start..start + width]
    }

    /// Derivatives 0..=max_order at x from the local interpolant.
    pub fn derivatives(&self, x: f64, max_order: usize) -> Vec<f64> {
        let st = self.stencil(x);
        let offset = st.as_ptr() as usize - self.xs.as_ptr() as usize;
        let start = offset / std::mem::size_of::<f64>();
        let w = fornberg_weights(x, st, max_order);
        let vals = &self.values[start..start + st.len()];
        w.iter()
            .map(|row| row.iter().zip(vals).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn value(&self, x: f64) -> f64 {
        self.derivatives(x, 0)[0]
    }

    /// Derivative query, refused inside exclusion zones.
    pub fn derivative(&self, x: f64, order: usize) -> Result<f64> {
        if order > 0 && self.in_exclusion(x) {
            return Err(Error::SingularEvaluation { x, t: self.t, radius: 0.0 });
        }
        Ok(self.derivatives(x, order)[order])
    }

    /// `int_{-1}^{1} f`: exact primitive when carried, else composite Simpson/trapezoid.
    pub fn integral(&self) -> f64 {
        if let Some(p) = &self.primitive {
            return *p.last().unwrap();
        }
        self.xs
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, v)| 0.5 * (x[1] - x[0]) * (v[0] + v[1]))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn params() -> ModelParams {
        ModelParams::default()
    }

    #[test]
    fn sine_profile_validates() {
        let d = InitialData::from_fn(|x| -(PI * x / 2.0).sin(), &params()).unwrap();
        assert!(d.p_i.abs() < 1e-12);
        assert!((d.lambda_i - PI / 2.0).abs() < 1e-6);
        assert!((d.mass_b - 2.0 / PI).abs() < 1e-8);
        assert!((d.mass_p - 2.0 / PI).abs() < 1e-8);
    }

    #[test]
    fn linear_profile_violates_neumann() {
        let err = InitialData::from_fn(|x| -x, &params()).unwrap_err();
        assert!(matches!(err, Error::InvalidInitialData(InitialDataIssue::BoundarySlope { .. })), "{err}");
    }

    #[test]
    fn full_sine_has_three_zeros() {
        let err = InitialData::from_fn(|x| (PI * x).sin(), &params()).unwrap_err();
        assert!(matches!(err, Error::InvalidInitialData(InitialDataIssue::MultipleZeros(3))), "{err}");
    }

    #[test]
    fn flipped_sign_rejected() {
        let err = InitialData::from_fn(|x| (PI * x / 2.0).sin(), &params()).unwrap_err();
        assert!(matches!(err, Error::InvalidInitialData(InitialDataIssue::SignStructure)), "{err}");
    }

    #[test]
    fn slope_window_rejected_for_sharp_front() {
        // slope at the zero is 20x the slope a little way off
        let f = |x: f64| -(20.0 * (PI * x / 2.0).sin()).atan();
        let err = InitialData::from_fn(f, &params()).unwrap_err();
        assert!(matches!(err, Error::InvalidInitialData(InitialDataIssue::SlopeWindow { .. })), "{err}");
    }

    #[test]
    fn validation_is_idempotent() {
        let p = params();
        let d = InitialData::from_fn(|x| 0.15 - (PI * x / 2.0).sin() - 0.2 * (PI * x).cos(), &p).unwrap();
        let again = validate_initial(&d.grid(), d.samples(), Some(d.p_i), &p).unwrap();
        assert_eq!(d, again);
    }

    #[test]
    fn rescue_clamp_examples() {
        let p = params();
        assert_eq!(rescue_clamp(0.0, &p).unwrap(), (0.4, 0.4));
        let (l, r) = rescue_clamp(0.9, &p).unwrap();
        assert_eq!(l, 0.4);
        assert!((r - 0.05).abs() < 1e-15);
        assert!(rescue_clamp(1.0, &p).is_err());
        assert!(rescue_clamp(-1.5, &p).is_err());
    }

    #[test]
    fn params_reject_wide_a0() {
        assert!(ModelParams::new(0.4, 0.1).is_err());
        assert!(ModelParams::new(0.4, 0.05).is_ok());
        assert!(ModelParams::new(1.2, 0.05).is_err());
    }

    #[test]
    fn profile_file_parsing() {
        let text = "# x f\n-1, 1\n0 0.5\n1,\t-2\n";
        let (xs, fs) = parse_profile_text(text).unwrap();
        assert_eq!(xs, vec![-1.0, 0.0, 1.0]);
        assert_eq!(fs, vec![1.0, 0.5, -2.0]);
        let err = parse_profile_text("1 2 3\n").unwrap_err();
        assert!(err.to_string().contains("line 1"));
        let (xs, _) = parse_profile_text("x,f\n-1,1\n1,-1\n").unwrap();
        assert_eq!(xs, vec![-1.0, 1.0]);
        assert!(parse_profile_text("-1,1\nx,f\n").unwrap_err().to_string().contains("line 2"));
    }

    #[test]
    fn profile_derivatives_of_polynomial() {
        let pr = Profile::from_fn(0.0, 201, |x| -x.powi(3) - x.powi(4));
        let d = pr.derivatives(0.0, 4);
        assert!(d[1].abs() < 1e-10 && d[2].abs() < 1e-8);
        assert!((d[3] + 6.0).abs() < 1e-6);
        assert!((d[4] + 24.0).abs() < 1e-4);
    }

    proptest::proptest! {
        #[test]
        fn clamp_keeps_sources_inside(p in -0.999f64..0.999, a in 0.01f64..0.99, half in proptest::bool::ANY) {
            let prm = ModelParams {
                a,
                a0: a / 8.0,
                rescue_half_factor: if half { 0.5 } else { 0.9 },
                ..ModelParams::default()
            };
            let (l, r) = rescue_clamp(p, &prm).unwrap();
            proptest::prop_assert!(l > 0.0 && r > 0.0);
            proptest::prop_assert!(p - l > -1.0 && p - l < p);
            proptest::prop_assert!(p + r < 1.0 && p + r > p);
        }
    }
}
