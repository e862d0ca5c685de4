//! Duhamel evaluation: propagated initial data plus the source/sink history integral.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{modes_for, Jet};
use crate::model::{source_sink, BlockSummary, Node, Profile, SolutionState, BLOCK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HistoryRule {
    /// Composite Gauss–Legendre on panels graded geometrically toward t' = t.
    GradedGaussLegendre,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureConfig {
    pub history_rule: HistoryRule,
    /// Integrate in s = sqrt(t - t') instead of t'.
    pub substitution: bool,
    /// Time nodes per solver window.
    pub points_per_window: usize,
    /// Gauss–Legendre points per history panel.
    pub gauss_points: usize,
    /// Cosine sums of the initial profile drop modes below exp(-spectral_log_tol).
    pub spectral_log_tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            history_rule: HistoryRule::GradedGaussLegendre,
            substitution: true,
            points_per_window: 8,
            gauss_points: 16,
            spectral_log_tol: 40.0,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.points_per_window < 8 {
            return Err(Error::Config(format!(
                "points_per_window must be at least 8, got {}",
                self.points_per_window
            )));
        }
        if !(2..=64).contains(&self.gauss_points) {
            return Err(Error::Config(format!("gauss_points must lie in 2..=64, got {}", self.gauss_points)));
        }
        if !(10.0..=80.0).contains(&self.spectral_log_tol) {
            return Err(Error::Config("spectral_log_tol must lie in [10, 80]".into()));
        }
        Ok(())
    }
}

/// Bounding boxes of source and sink positions over a stretch of history.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PathRange {
    pub source: (f64, f64),
    pub sink: (f64, f64),
    pub lambda_max: f64,
}

impl PathRange {
    fn empty() -> Self {
        Self {
            source: (f64::INFINITY, f64::NEG_INFINITY),
            sink: (f64::INFINITY, f64::NEG_INFINITY),
            lambda_max: 0.0,
        }
    }

    fn add(&mut self, src: f64, snk: f64, lambda: f64) {
        self.source = (self.source.0.min(src), self.source.1.max(src));
        self.sink = (self.sink.0.min(snk), self.sink.1.max(snk));
        self.lambda_max = self.lambda_max.max(lambda.abs());
    }

    fn merge(&mut self, b: &BlockSummary) {
        self.source = (self.source.0.min(b.source_lo), self.source.1.max(b.source_hi));
        self.sink = (self.sink.0.min(b.sink_lo), self.sink.1.max(b.sink_hi));
        self.lambda_max = self.lambda_max.max(b.lambda_max);
    }

    /// Distance from x to the nearest source or sink position. Mirror images
    /// in the walls are never closer than the direct distance.
    pub fn distance(&self, x: f64) -> f64 {
        let d = |(lo, hi): (f64, f64)| {
            if x < lo {
                lo - x
            } else if x > hi {
                x - hi
            } else {
                0.0
            }
        };
        d(self.source).min(d(self.sink))
    }
}

/// Read-only view of a state, optionally extended by trial nodes beyond the
/// committed history and optionally with sources switched off after `cutoff`.
#[derive(Clone, Copy)]
pub(crate) struct Evaluator<'a> {
    st: &'a SolutionState,
    ext: &'a [Node],
    cutoff: f64,
}

impl<'a> Evaluator<'a> {
    pub fn new(st: &'a SolutionState) -> Self {
        Self { st, ext: &[], cutoff: f64::INFINITY }
    }

    pub fn extended(st: &'a SolutionState, ext: &'a [Node]) -> Self {
        Self { st, ext, cutoff: f64::INFINITY }
    }

    /// Sources act only for t' < cutoff; the result is the free evolution of f(·, cutoff).
    pub fn with_cutoff(mut self, cutoff: f64) -> Self {
        self.cutoff = cutoff;
        self
    }

    fn len(&self) -> usize {
        self.st.nodes.len() + self.ext.len()
    }

    #[inline]
    fn node(&self, i: usize) -> Node {
        let b = self.st.nodes.len();
        if i < b {
            self.st.nodes[i]
        } else {
            self.ext[i - b]
        }
    }

    pub fn t_end(&self) -> f64 {
        self.ext.last().or(self.st.nodes.last()).map_or(0.0, |n| n.t)
    }

    /// Largest index whose node time is <= t (0 if none).
    fn locate(&self, t: f64) -> usize {
        let base = &self.st.nodes;
        if base.last().is_some_and(|n| n.t <= t) && !self.ext.is_empty() {
            let k = self.ext.partition_point(|n| n.t <= t);
            return if k == 0 { base.len() - 1 } else { base.len() + k - 1 };
        }
        base.partition_point(|n| n.t <= t).saturating_sub(1)
    }

    /// Front position and flux at time t.
    #[inline]
    pub fn at(&self, t: f64) -> (f64, f64) {
        let i = self.locate(t);
        let a = self.node(i);
        if i + 1 >= self.len() || t <= a.t {
            return (a.p, a.lambda);
        }
        let b = self.node(i + 1);
        let w = (t - a.t) / (b.t - a.t);
        (a.p + w * (b.p - a.p), a.lambda + w * (b.lambda - a.lambda))
    }

    fn sources(&self, p: f64) -> (f64, f64) {
        let prm = &self.st.params;
        source_sink(p, prm.a, prm.rescue_half_factor)
    }

    /// Source/sink bounding boxes over the history nodes bracketing [ta, tb].
    pub fn path_range(&self, ta: f64, tb: f64) -> PathRange {
        let mut r = PathRange::empty();
        let i0 = self.locate(ta);
        let i1 = (self.locate(tb) + 1).min(self.len() - 1);
        let b0 = i0.div_ceil(BLOCK);
        let b1 = (i1 / BLOCK).min(self.st.blocks.len());
        let mut scan = |lo: usize, hi: usize| {
            for i in lo..=hi {
                let n = self.node(i);
                let (src, snk) = self.sources(n.p);
                r.add(src, snk, n.lambda);
            }
        };
        if b1 > b0 {
            scan(i0, b0 * BLOCK);
            scan(b1 * BLOCK, i1);
            r.merge(&self.st.blocks.query(b0, b1));
        } else {
            scan(i0, i1);
        }
        r
    }

    /// Distance from x to any source or sink active in [t - (a0/4)^2, t].
    pub fn exclusion_distance(&self, x: f64, t: f64) -> f64 {
        let r = self.st.params.a0 / 4.0;
        let hi = t.min(self.cutoff);
        if hi < t - r * r {
            return f64::INFINITY;
        }
        self.path_range((t - r * r).max(0.0), hi).distance(x)
    }

    pub fn check_exclusion(&self, x: f64, t: f64) -> Result<()> {
        let r = self.st.params.a0 / 4.0;
        if self.exclusion_distance(x, t) < r {
            return Err(Error::SingularEvaluation { x, t, radius: r });
        }
        Ok(())
    }

    /// f, f_x, f_xx at (x, t), unchecked.
    pub fn jet(&self, x: f64, t: f64) -> Jet {
        if t <= 0.0 {
            let s = self.st.initial.spline();
            return Jet { f: s.value(x), fx: s.derivative(x, 1), fxx: s.derivative(x, 2) };
        }
        let mut out = initial_jet(self.st.initial.cosine_coefficients(), x, t, self.st.quad.spectral_log_tol);
        let k = &self.st.kernel;
        out += self.history(x, t, true, |y, tau| k.jet(x, y, tau));
        out
    }

    /// `int_{-1}^{x} f(z, t) dz`, unchecked.
    pub fn primitive(&self, x: f64, t: f64) -> f64 {
        if t <= 0.0 {
            return self.st.initial.spline().primitive(x);
        }
        let mut v = initial_primitive(self.st.initial.cosine_coefficients(), x, t, self.st.quad.spectral_log_tol);
        let k = &self.st.kernel;
        v += self.history(x, t, false, |y, tau| Jet { f: k.primitive(x, y, tau), fx: 0.0, fxx: 0.0 }).f;
        v
    }

    /// `int_0^{min(t, cutoff)} λ(t') [K(p - ā_L, t - t') - K(p + ā_R, t - t')] dt'`
    /// on panels graded geometrically in s = sqrt(t - t').
    fn history(&self, x: f64, t: f64, skippable: bool, kern: impl Fn(f64, f64) -> Jet) -> Jet {
        let t_src = t.min(self.cutoff).min(self.t_end());
        if t_src <= 0.0 {
            return Jet::default();
        }
        let s_hi = t.sqrt();
        let s_lo = (t - t_src).sqrt();
        let (p_end, _) = self.at(t_src);
        let (src, snk) = self.sources(p_end);
        let d_end = (x - src).abs().min((x - snk).abs());
        let mut floor = if d_end > 0.0 { d_end / 13.0 } else { s_hi / 16.0 };
        floor = floor.max(s_hi * 2f64.powi(-50)).max(s_lo);

        let mut out = Jet::default();
        let mut upper = s_hi;
        loop {
            let lower = if upper * 0.5 > floor { upper * 0.5 } else { s_lo };
            if upper > lower {
                out += self.panel(x, t, lower, upper, skippable, &kern);
            }
            if lower <= s_lo {
                break;
            }
            upper = lower;
        }
        out
    }

    fn panel(&self, x: f64, t: f64, sa: f64, sb: f64, skippable: bool, kern: &impl Fn(f64, f64) -> Jet) -> Jet {
        let (ta, tb) = (t - sb * sb, t - sa * sa);
        if skippable {
            let r = self.path_range(ta, tb);
            let tau = sb * sb;
            let delta = r.distance(x);
            let e = delta * delta / (4.0 * tau);
            if e > 3.0 && r.lambda_max > 0.0 {
                // three nearest images; e^{-e} tau^{-q} grows with tau for q <= 2.5 < e
                let log_bound = -e - 0.5 * tau.ln()
                    + (3.0 * (1.0 + 4.0 / tau + 16.0 / (tau * tau))).ln()
                    + (r.lambda_max * (tb - ta)).ln();
                if log_bound < -55.0 {
                    return Jet::default();
                }
            } else if r.lambda_max == 0.0 {
                return Jet::default();
            }
        }
        // split at history nodes when only a few fall inside
        let i0 = self.locate(ta);
        let i1 = self.locate(tb);
        let mut out = Jet::default();
        if i1 > i0 && i1 - i0 <= 8 {
            let mut hi = sb;
            for i in (i0 + 1)..=i1 {
                let ti = self.node(i).t;
                if ti <= ta || ti >= tb {
                    continue;
                }
                let s = (t - ti).sqrt();
                out += self.gauss(x, t, s, hi, kern);
                hi = s;
            }
            out += self.gauss(x, t, sa, hi, kern);
        } else {
            out = self.gauss(x, t, sa, sb, kern);
        }
        out
    }

    fn gauss(&self, x: f64, t: f64, sa: f64, sb: f64, kern: &impl Fn(f64, f64) -> Jet) -> Jet {
        let _ = x;
        let gl = &self.st.gl;
        let mut out = Jet::default();
        if self.st.quad.substitution {
            for (s, w) in gl.mapped(sa, sb) {
                let tau = s * s;
                let (p, lambda) = self.at(t - tau);
                if lambda == 0.0 {
                    continue;
                }
                let (src, snk) = self.sources(p);
                out += (kern(src, tau) - kern(snk, tau)).scale(2.0 * s * w * lambda);
            }
        } else {
            for (tau, w) in gl.mapped(sa * sa, sb * sb) {
                let (p, lambda) = self.at(t - tau);
                if lambda == 0.0 {
                    continue;
                }
                let (src, snk) = self.sources(p);
                out += (kern(src, tau) - kern(snk, tau)).scale(w * lambda);
            }
        }
        out
    }
}

/// `sum_m w_m A_m e^{-k_m^2 t} (cos, cos', cos'')(k_m (x + 1))`, with w_0 = 1/2.
pub(crate) fn initial_jet(coeffs: &[f64], x: f64, t: f64, log_tol: f64) -> Jet {
    let modes = modes_for(t, log_tol).min(coeffs.len() - 1);
    let mut out = Jet { f: 0.5 * coeffs[0], fx: 0.0, fxx: 0.0 };
    let (s1, c1) = (0.5 * PI * (x + 1.0)).sin_cos();
    let q = (-0.25 * PI * PI * t).exp();
    let q2 = q * q;
    let (mut c, mut s) = (1.0, 0.0);
    let (mut decay, mut ratio) = (1.0, q / q2);
    for (m, &a) in coeffs.iter().enumerate().take(modes + 1).skip(1) {
        (c, s) = (c * c1 - s * s1, s * c1 + c * s1);
        ratio *= q2;
        decay *= ratio;
        if decay == 0.0 {
            break;
        }
        let k = 0.5 * PI * m as f64;
        let w = a * decay;
        out.f += w * c;
        out.fx -= w * k * s;
        out.fxx -= w * k * k * c;
    }
    out
}

pub(crate) fn initial_primitive(coeffs: &[f64], x: f64, t: f64, log_tol: f64) -> f64 {
    let modes = modes_for(t, log_tol).min(coeffs.len() - 1);
    let mut acc = 0.5 * coeffs[0] * (x + 1.0);
    let (s1, c1) = (0.5 * PI * (x + 1.0)).sin_cos();
    let q = (-0.25 * PI * PI * t).exp();
    let q2 = q * q;
    let (mut c, mut s) = (1.0, 0.0);
    let (mut decay, mut ratio) = (1.0, q / q2);
    for (m, &a) in coeffs.iter().enumerate().take(modes + 1).skip(1) {
        (c, s) = (c * c1 - s * s1, s * c1 + c * s1);
        ratio *= q2;
        decay *= ratio;
        if decay == 0.0 {
            break;
        }
        acc += a * decay * s / (0.5 * PI * m as f64);
    }
    acc
}

fn check_query(state: &SolutionState, x: f64, t: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x = {x} lies outside [-1, 1]")));
    }
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be non-negative, got {t}")));
    }
    if t > state.t_current() {
        return Err(Error::OutOfRange { t, t_current: state.t_current() });
    }
    Ok(())
}

pub fn eval_f(state: &SolutionState, x: f64, t: f64) -> Result<f64> {
    check_query(state, x, t)?;
    Ok(Evaluator::new(state).jet(x, t).f)
}

/// f, f_x, f_xx together; refused inside the exclusion zone.
pub fn eval_jet(state: &SolutionState, x: f64, t: f64) -> Result<Jet> {
    check_query(state, x, t)?;
    let ev = Evaluator::new(state);
    ev.check_exclusion(x, t)?;
    Ok(ev.jet(x, t))
}

pub fn eval_fx(state: &SolutionState, x: f64, t: f64) -> Result<f64> {
    Ok(eval_jet(state, x, t)?.fx)
}

pub fn eval_fxx(state: &SolutionState, x: f64, t: f64) -> Result<f64> {
    Ok(eval_jet(state, x, t)?.fxx)
}

/// Away from the sources f_t = f_xx; inside the exclusion zone the query is refused.
pub fn eval_ft(state: &SolutionState, x: f64, t: f64) -> Result<f64> {
    eval_fxx(state, x, t)
}

/// `int_{-1}^{x} f(z, t) dz`.
pub fn eval_primitive(state: &SolutionState, x: f64, t: f64) -> Result<f64> {
    check_query(state, x, t)?;
    Ok(Evaluator::new(state).primitive(x, t))
}

/// Samples f(·, t) and its primitive on `grid`, marking derivative exclusion zones.
pub fn profile_snapshot(state: &SolutionState, t: f64, grid: &[f64]) -> Result<Profile> {
    for &x in grid {
        check_query(state, x, t)?;
    }
    let ev = Evaluator::new(state);
    let values = grid.iter().map(|&x| ev.jet(x, t).f).collect();
    let primitive = grid.iter().map(|&x| ev.primitive(x, t)).collect();
    let mut exclusion = vec![];
    if t > 0.0 {
        let r = state.params.a0 / 4.0;
        let pr = ev.path_range((t - r * r).max(0.0), t);
        exclusion.push((pr.source.0 - r, pr.source.1 + r));
        exclusion.push((pr.sink.0 - r, pr.sink.1 + r));
    }
    Ok(Profile { t, xs: grid.to_vec(), values, primitive: Some(primitive), order: 6, exclusion })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{uniform_grid, InitialData, ModelParams};

    fn sine_state(history: &[Node]) -> SolutionState {
        let prm = ModelParams::default();
        let init = InitialData::from_fn(|x| -(PI * x / 2.0).sin(), &prm).unwrap();
        SolutionState::with_history(init, prm, QuadratureConfig::default(), history).unwrap()
    }

    fn flat(t_end: f64, p: f64, lambda: f64, n: usize) -> Vec<Node> {
        (0..=n)
            .map(|i| Node { t: t_end * i as f64 / n as f64, p, lambda })
            .collect()
    }

    #[test]
    fn eigenfunction_decay() {
        let st = sine_state(&flat(1.0, 0.0, 0.0, 10));
        for &t in &[0.01, 0.1, 1.0] {
            for i in 0..41 {
                let x = -1.0 + 0.05 * i as f64;
                let exact = -(PI * x / 2.0).sin() * (-PI * PI * t / 4.0).exp();
                let got = eval_f(&st, x, t).unwrap();
                assert!((got - exact).abs() < 1e-8, "t={t} x={x}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn short_time_limit_is_initial_profile() {
        let st = sine_state(&flat(1e-4, 0.0, 0.0, 4));
        for i in 0..201 {
            let x = -1.0 + 0.01 * i as f64;
            let got = eval_f(&st, x, 1e-5).unwrap();
            assert!((got + (PI * x / 2.0).sin()).abs() < 1e-4);
        }
    }

    #[test]
    fn source_pair_has_zero_net_mass() {
        let st = sine_state(&flat(0.5, 0.0, 1.0, 50));
        let a0 = st.initial().mass_b - st.initial().mass_p;
        for &t in &[1e-4, 0.01, 0.2, 0.5] {
            let total = eval_primitive(&st, 1.0, t).unwrap();
            assert!((total - a0).abs() < 1e-10, "t={t}: {total}");
        }
    }

    #[test]
    fn fx_matches_central_difference() {
        let hist: Vec<Node> = (0..=40)
            .map(|i| {
                let t = 0.05 * i as f64 / 40.0;
                Node { t, p: 0.05 * t, lambda: 1.5 - t }
            })
            .collect();
        let st = sine_state(&hist);
        let ev = Evaluator::new(&st);
        let t = 0.05;
        let h = 1e-5;
        let mut rng = 12345u64;
        let mut checked = 0;
        while checked < 100 {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let x = -0.99 + 1.98 * ((rng >> 11) as f64 / (1u64 << 53) as f64);
            if ev.check_exclusion(x, t).is_err() || ev.exclusion_distance(x, t) < 0.05 {
                continue;
            }
            let fd = (eval_f(&st, x + h, t).unwrap() - eval_f(&st, x - h, t).unwrap()) / (2.0 * h);
            let fx = eval_fx(&st, x, t).unwrap();
            assert!((fd - fx).abs() < 1e-6 * (1.0 + fx.abs()), "x={x}: {fd} vs {fx}");
            checked += 1;
        }
    }

    #[test]
    fn exclusion_zone_refuses_derivatives() {
        let st = sine_state(&flat(0.01, 0.0, 1.0, 10));
        let err = eval_fx(&st, 0.4, 0.01).unwrap_err();
        assert!(matches!(err, Error::SingularEvaluation { .. }));
        assert!(eval_f(&st, 0.4, 0.01).unwrap().is_finite());
        assert!(eval_fx(&st, 0.0, 0.01).is_ok());
        assert!(matches!(eval_f(&st, 0.0, 0.02), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn substitution_resolves_endpoint_singularity() {
        // x on the current source: the integrand in t' behaves like (t - t')^{-1/2}
        let hist = flat(0.01, 0.0, 1.0, 1);
        let reference = {
            let mut st = sine_state(&hist);
            st.quad.gauss_points = 32;
            st.gl = crate::quadrature::GaussLegendre::new(32);
            eval_f(&st, -0.4, 0.01).unwrap()
        };
        let err_for = |n: usize, sub: bool| {
            let mut st = sine_state(&hist);
            st.quad.gauss_points = n;
            st.quad.substitution = sub;
            st.gl = crate::quadrature::GaussLegendre::new(n);
            (eval_f(&st, -0.4, 0.01).unwrap() - reference).abs()
        };
        let (e4, e8) = (err_for(4, true), err_for(8, true));
        assert!(e8 < 1e-10 || e4 / e8 >= 3.9, "{e4} {e8}");
        assert!(e8 < 1e-9);
        assert!(err_for(8, false) > 10.0 * e8);
    }

    #[test]
    fn snapshot_mass_and_determinism() {
        let st = sine_state(&flat(0.05, 0.01, 1.2, 20));
        let grid = uniform_grid(201);
        let a = profile_snapshot(&st, 0.05, &grid).unwrap();
        let b = profile_snapshot(&st, 0.05, &grid).unwrap();
        assert_eq!(a, b);
        let m = st.initial().mass_b - st.initial().mass_p;
        assert!((a.integral() - m).abs() < 1e-8);
        assert!(a.in_exclusion(0.01 - 0.4));
        assert!(a.derivative(0.41, 1).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]

        #[test]
        fn linear_in_flux_history(l1 in -2.0f64..2.0, l2 in -2.0f64..2.0, x in -1.0f64..1.0, t in 0.001f64..0.05) {
            let mk = |f: &dyn Fn(f64) -> f64| -> Vec<Node> {
                (0..=20).map(|i| { let s = 0.05 * i as f64 / 20.0; Node { t: s, p: 0.1 * s, lambda: f(s) } }).collect()
            };
            let s1 = sine_state(&mk(&|s| l1 * (1.0 + s)));
            let s2 = sine_state(&mk(&|s| l2 * (1.0 - 3.0 * s)));
            let s12 = sine_state(&mk(&|s| l1 * (1.0 + s) + l2 * (1.0 - 3.0 * s)));
            let s0 = sine_state(&mk(&|_| 0.0));
            let lhs = eval_f(&s12, x, t).unwrap() - eval_f(&s0, x, t).unwrap();
            let rhs = eval_f(&s1, x, t).unwrap() + eval_f(&s2, x, t).unwrap() - 2.0 * eval_f(&s0, x, t).unwrap();
            proptest::prop_assert!((lhs - rhs).abs() < 1e-10, "{} vs {}", lhs, rhs);
        }

        #[test]
        fn signed_mass_conserved(l in -2.0f64..2.0, v in -0.5f64..0.5, t in 0.0005f64..0.1) {
            let hist: Vec<Node> = (0..=10).map(|i| { let s = 0.1 * i as f64 / 10.0; Node { t: s, p: v * s, lambda: l * (1.0 + s) } }).collect();
            let st = sine_state(&hist);
            let m = st.initial().mass_b - st.initial().mass_p;
            proptest::prop_assert!((eval_primitive(&st, 1.0, t).unwrap() - m).abs() < 1e-8);
        }
    }
}
