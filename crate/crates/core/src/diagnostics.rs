//! Observational monitors: conservation, flux, wall distance, blow-up
//! quantities and the per-window bound checks. None of them alter a run.

use serde::Serialize;

use crate::duhamel::Evaluator;
use crate::error::{Error, Result};
use crate::front::bracketed_root;
use crate::model::{clamp_offsets, uniform_grid, SolutionState};
use crate::picard::Thresholds;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MassReport {
    pub t: f64,
    pub p: f64,
    pub mass_b: f64,
    pub mass_p: f64,
    pub deviation_b: f64,
    pub deviation_p: f64,
}

fn check_time(state: &SolutionState, t: f64) -> Result<()> {
    if !(t >= 0.0) || t > state.t_current() {
        return Err(Error::OutOfRange { t, t_current: state.t_current() });
    }
    Ok(())
}

/// Zero of f(·, t) near the interpolated history value.
pub fn front_at(state: &SolutionState, t: f64) -> Result<f64> {
    check_time(state, t)?;
    let (p0, _) = state.interpolate(t)?;
    if t == 0.0 {
        return Ok(state.initial().p_i);
    }
    let ev = Evaluator::new(state);
    let a0 = state.params().a0;
    let g = |x: f64| {
        let j = ev.jet(x, t);
        (j.f, j.fx)
    };
    let (lo, hi) = (p0 - 0.5 * a0, p0 + 0.5 * a0);
    // start inside a tight bracket around the history value
    let w = 1e-6;
    let (a, b) = if g(p0 - w).0 > 0.0 && g(p0 + w).0 < 0.0 { (p0 - w, p0 + w) } else { (lo, hi) };
    if !(g(a).0 > 0.0 && g(b).0 < 0.0) {
        return Err(Error::NoBracket { lo: a, hi: b });
    }
    Ok(bracketed_root(g, a, b, 1e-6, 1e-14).0)
}

/// One-sided masses split at p(t) and their drift from the initial values.
pub fn mass_report(state: &SolutionState, t: f64) -> Result<MassReport> {
    let init = state.initial();
    if t == 0.0 {
        return Ok(MassReport {
            t,
            p: init.p_i,
            mass_b: init.mass_b,
            mass_p: init.mass_p,
            deviation_b: 0.0,
            deviation_p: 0.0,
        });
    }
    let p = front_at(state, t)?;
    let ev = Evaluator::new(state);
    let mb = ev.primitive(p, t);
    let total = ev.primitive(1.0, t);
    let mp = mb - total;
    Ok(MassReport { t, p, mass_b: mb, mass_p: mp, deviation_b: mb - init.mass_b, deviation_p: mp - init.mass_p })
}

/// `int_0^t λ` by the trapezoid rule on the history.
pub fn flux_integral(state: &SolutionState, t: f64) -> Result<f64> {
    check_time(state, t)?;
    let nodes = state.nodes();
    let mut acc = 0.0;
    for w in nodes.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.t >= t {
            break;
        }
        if b.t <= t {
            acc += 0.5 * (b.t - a.t) * (a.lambda + b.lambda);
        } else {
            let lb = a.lambda + (b.lambda - a.lambda) * (t - a.t) / (b.t - a.t);
            acc += 0.5 * (t - a.t) * (a.lambda + lb);
        }
    }
    Ok(acc)
}

/// Cumulative flux at every history node.
pub fn cumulative_flux(state: &SolutionState) -> Vec<f64> {
    let nodes = state.nodes();
    let mut out = Vec::with_capacity(nodes.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in nodes.windows(2) {
        acc += 0.5 * (w[1].t - w[0].t) * (w[0].lambda + w[1].lambda);
        out.push(acc);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StayawayReport {
    pub min_distance: f64,
    pub t_at_min: f64,
    /// History nodes where the wall clamp shortened a jump.
    pub rescue_activations: usize,
    /// Activations occur exactly when `factor * min(1 - p, 1 + p) < a` somewhere.
    pub consistent: bool,
}

pub fn stayaway_report(state: &SolutionState) -> StayawayReport {
    let prm = state.params();
    let mut best = (f64::INFINITY, 0.0);
    let mut activations = 0;
    let mut predicted = false;
    for n in state.nodes() {
        let d = (1.0 - n.p).min(1.0 + n.p);
        if d < best.0 {
            best = (d, n.t);
        }
        let (l, r) = clamp_offsets(n.p, prm.a, prm.rescue_half_factor);
        if l < prm.a || r < prm.a {
            activations += 1;
        }
        predicted |= prm.rescue_half_factor * d < prm.a;
    }
    StayawayReport {
        min_distance: best.0,
        t_at_min: best.1,
        rescue_activations: activations,
        consistent: (activations > 0) == predicted,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlowupPanel {
    pub t: f64,
    pub sup_norm: f64,
    pub lambda: f64,
    pub curvature: f64,
    pub sup_flag: bool,
    pub lambda_flag: bool,
    pub curvature_flag: bool,
}

/// ‖f‖∞ (401-point sample), λ and |f_xx(p)| at t, with threshold flags.
pub fn blowup_panel(state: &SolutionState, t: f64, thresholds: &Thresholds) -> Result<BlowupPanel> {
    check_time(state, t)?;
    let init = state.initial();
    let ev = Evaluator::new(state);
    let sup = uniform_grid(401).into_iter().fold(0.0f64, |m, x| m.max(ev.jet(x, t).f.abs()));
    let p = front_at(state, t)?;
    ev.check_exclusion(p, t)?;
    let j = ev.jet(p, t);
    let (lambda, curvature) = (-j.fx, j.fxx.abs());
    Ok(BlowupPanel {
        t,
        sup_norm: sup,
        lambda,
        curvature,
        sup_flag: sup > thresholds.sup_growth * init.sup_norm,
        lambda_flag: lambda < thresholds.lambda_floor * init.lambda_i,
        curvature_flag: curvature > thresholds.curvature_ceiling,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// |f_x| ≤ 2‖f(start)‖∞ / sqrt(t - start) on the neighbourhood.
    DerivativeCeiling,
    /// |f_t| under the same ceiling.
    TimeDerivativeCeiling,
    /// |p(t) - p(start)| ≤ (8‖f‖∞/λ) sqrt(t - start).
    HolderTrack,
    /// -∂x of the free evolution of f(start) ≥ λ(start)/2 · e^{-(t - start)}.
    HarnackFloor,
    /// |f_x| ≤ 2‖f‖₁/τ² near the zero (report only).
    L1Derivative,
    /// |f_xx| ≤ 2‖f‖₁/τ^{5/2} near the zero (report only).
    L1SecondDerivative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub kind: BoundKind,
    pub window: usize,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `None` for report-only monitors.
    pub pass: Option<bool>,
}

/// Checks every bound at five interior times of a solved window.
pub fn bound_suite(state: &SolutionState, window: usize) -> Result<Vec<BoundCheck>> {
    let rec = *state
        .window_log()
        .get(window)
        .ok_or_else(|| Error::Domain(format!("window {window} has not been solved")))?;
    let prm = state.params();
    let ev = Evaluator::new(state);
    let free = Evaluator::new(state).with_cutoff(rec.t_start);
    let c = rec.p_start;
    let xs: Vec<f64> = (0..5).map(|i| c - 0.9 * prm.a0 + 0.45 * prm.a0 * i as f64).collect();
    let l1 = {
        let m = mass_report(state, rec.t_start)?;
        m.mass_b + m.mass_p
    };
    let sup = rec.sup_norm_start;
    let mut out = Vec::new();
    for k in 1..=5 {
        let t = rec.t_start + rec.length * k as f64 / 5.0;
        let tau = t - rec.t_start;
        let ceiling = 2.0 * sup / tau.sqrt();
        let (mut fx, mut fxx, mut harnack) = (0.0f64, 0.0f64, f64::INFINITY);
        for &x in &xs {
            let j = ev.jet(x, t);
            fx = fx.max(j.fx.abs());
            fxx = fxx.max(j.fxx.abs());
            harnack = harnack.min(-free.jet(x, t).fx);
        }
        let (p, _) = state.interpolate(t)?;
        let track = 8.0 * sup / rec.lambda_start * tau.sqrt();
        let floor = 0.5 * rec.lambda_start * (-tau).exp();
        let mut push = |kind, lhs: f64, rhs: f64, hard: bool| {
            let pass = if kind == BoundKind::HarnackFloor { lhs >= rhs } else { lhs <= rhs };
            out.push(BoundCheck { kind, window, t, lhs, rhs, pass: hard.then_some(pass) });
        };
        push(BoundKind::DerivativeCeiling, fx, ceiling, true);
        push(BoundKind::TimeDerivativeCeiling, fxx, ceiling, true);
        push(BoundKind::HolderTrack, (p - c).abs(), track, true);
        push(BoundKind::HarnackFloor, harnack, floor, true);
        push(BoundKind::L1Derivative, fx, 2.0 * l1 / (tau * tau), false);
        push(BoundKind::L1SecondDerivative, fxx, 2.0 * l1 / tau.powf(2.5), false);
    }
    Ok(out)
}

/// One line of the diagnostics ledger.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "monitor", rename_all = "snake_case")]
pub enum Record {
    Mass(MassReport),
    Flux { t: f64, cumulative: f64 },
    Stayaway(StayawayReport),
    Blowup(BlowupPanel),
    Bound(BoundCheck),
}

pub fn write_jsonl(mut w: impl std::io::Write, records: &[Record]) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Domain(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}
