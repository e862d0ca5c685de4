//! Window-by-window fixed-point solver for the free boundary.

use serde::Serialize;

use crate::duhamel::Evaluator;
use crate::error::{Error, Result};
use crate::front::bracketed_root;
use crate::kernel::{lemma_gamma_bound, NeumannKernel};
use crate::model::{clamp_offsets, InitialData, ModelParams, Node, SolutionState, WindowRecord};
use crate::duhamel::QuadratureConfig;

/// Blow-up thresholds; crossing any of them aborts the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    /// Abort when ‖f‖∞ exceeds this multiple of ‖f_I‖∞.
    pub sup_growth: f64,
    /// Abort when λ drops below this fraction of λ_I.
    pub lambda_floor: f64,
    /// Abort when |f_xx(p)| exceeds this.
    pub curvature_ceiling: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { sup_growth: 100.0, lambda_floor: 1e-3, curvature_ceiling: 1e6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BlowupCriterion {
    SupNorm,
    FluxFloor,
    Curvature,
    FluxDegenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowupReport {
    pub criterion: BlowupCriterion,
    pub t: f64,
    pub value: f64,
    pub threshold: f64,
    pub p: f64,
    pub lambda: f64,
    pub sup_norm: f64,
    pub windows: usize,
}

impl std::fmt::Display for BlowupReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:?} at t = {:.6e}: value {:.6e} vs threshold {:.6e} (p = {:.6}, lambda = {:.6e}, ‖f‖ = {:.6e}, {} windows)",
            self.criterion, self.t, self.value, self.threshold, self.p, self.lambda, self.sup_norm, self.windows
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowPlan {
    pub t_start: f64,
    pub t0: f64,
    /// Half-width of the iteration neighbourhood, centred at `p_center`.
    pub a0_n: f64,
    pub p_center: f64,
    pub lambda_start: f64,
    pub sup_norm: f64,
    /// `G(a) (1 + 8‖f‖/λ) sqrt(t0)`: the Lipschitz constant the estimate predicts.
    pub predicted_contraction: f64,
}

/// Largest admissible window: the two constraints
/// `8‖f‖/λ sqrt(t0) = a0/2` and `G(a)(1 + 8‖f‖/λ) sqrt(t0) < 1`, with the
/// smaller `sqrt(t0)` multiplied by `safety`.
pub fn window_length(sup_norm: f64, lambda: f64, a0: f64, gamma: f64, safety: f64) -> f64 {
    let ratio = 8.0 * sup_norm / lambda;
    let root_track = 0.5 * a0 / ratio;
    let root_contract = (1.0 - 1e-9) / (gamma * (1.0 + ratio));
    let root = safety * root_track.min(root_contract);
    root * root
}

pub fn plan_window(
    t_start: f64,
    p_center: f64,
    lambda_start: f64,
    sup_norm: f64,
    params: &ModelParams,
    gamma: f64,
) -> Result<WindowPlan> {
    if !(lambda_start > 0.0) {
        return Err(Error::BlowupDetected(Box::new(BlowupReport {
            criterion: BlowupCriterion::FluxDegenerate,
            t: t_start,
            value: lambda_start,
            threshold: 0.0,
            p: p_center,
            lambda: lambda_start,
            sup_norm,
            windows: 0,
        })));
    }
    let t0 = window_length(sup_norm, lambda_start, params.a0, gamma, params.window_safety_factor);
    let predicted_contraction = gamma * (1.0 + 8.0 * sup_norm / lambda_start) * t0.sqrt();
    Ok(WindowPlan {
        t_start,
        t0,
        a0_n: params.a0,
        p_center,
        lambda_start,
        sup_norm,
        predicted_contraction,
    })
}

/// Time nodes of a window (excluding its start).
pub fn window_times(plan: &WindowPlan, n: usize) -> Vec<f64> {
    (1..=n)
        .map(|j| if j == n { plan.t_start + plan.t0 } else { plan.t_start + plan.t0 * j as f64 / n as f64 })
        .collect()
}

/// One application of the map: freeze the candidate sources, solve the linear
/// problem by Duhamel, and re-locate the zero and flux at each window node.
///
/// Also returns |f_xx| at the final zero.
pub fn apply_phi(state: &SolutionState, plan: &WindowPlan, candidate: &[Node]) -> Result<(Vec<Node>, f64)> {
    let ev = Evaluator::extended(state, candidate);
    let (lo, hi) = (plan.p_center - plan.a0_n, plan.p_center + plan.a0_n);
    let ftol = 1e-13 * plan.sup_norm;
    let mut out = Vec::with_capacity(candidate.len());
    let mut curvature = 0.0;
    for c in candidate {
        let t = c.t;
        let g = |x: f64| {
            let j = ev.jet(x, t);
            (j.f, j.fx)
        };
        // Newton from the previous iterate; fall back to a bracketed search
        let mut x = c.p;
        let mut jet = ev.jet(x, t);
        let mut ok = false;
        for _ in 0..8 {
            if jet.f.abs() <= ftol {
                ok = true;
                break;
            }
            if !(jet.fx < 0.0) {
                break;
            }
            let next = x - jet.f / jet.fx;
            if !(next > lo && next < hi) {
                break;
            }
            x = next;
            jet = ev.jet(x, t);
        }
        if !ok {
            let (flo, fhi) = (g(lo).0, g(hi).0);
            if !(flo > 0.0 && fhi < 0.0) {
                return Err(Error::IterationDiverged(format!(
                    "zero left the neighbourhood ({lo:.6}, {hi:.6}) at t = {t:.6e}: f = ({flo:.3e}, {fhi:.3e})"
                )));
            }
            let (root, _) = bracketed_root(g, lo, hi, 1e-6, ftol);
            x = root;
            jet = ev.jet(x, t);
        }
        if !(x > lo && x < hi) {
            return Err(Error::IterationDiverged(format!("zero {x} escaped ({lo}, {hi}) at t = {t:.6e}")));
        }
        curvature = jet.fxx.abs();
        out.push(Node { t, p: x, lambda: -jet.fx });
    }
    Ok((out, curvature))
}

/// Outcome of the fixed-point loop on one window.
#[derive(Debug, Clone)]
pub struct WindowSolution {
    pub nodes: Vec<Node>,
    pub iterations: usize,
    pub contraction_ratio: f64,
    pub differences: Vec<f64>,
    pub curvature: f64,
}

/// Probe points of X = L∞(p_c - a0, p_c + a0).
fn probe_points(plan: &WindowPlan) -> [f64; 5] {
    let (c, r) = (plan.p_center, plan.a0_n);
    [c - 0.9 * r, c - 0.45 * r, c, c + 0.45 * r, c + 0.9 * r]
}

fn sample_iterate(state: &SolutionState, plan: &WindowPlan, cand: &[Node]) -> Vec<f64> {
    let ev = Evaluator::extended(state, cand);
    let n = cand.len();
    let xs = probe_points(plan);
    [n / 2, n]
        .iter()
        .flat_map(|&j| {
            let t = cand[j.max(1) - 1].t;
            xs.map(|x| ev.jet(x, t).f)
        })
        .collect()
}

/// Iterates `apply_phi` from the frozen seed until the sup-norm change on X
/// drops below `contraction_tol · ‖f‖∞`.
pub fn iterate_window(state: &SolutionState, plan: &WindowPlan) -> Result<WindowSolution> {
    let prm = &state.params;
    let n = state.quad.points_per_window;
    let seed: Vec<Node> = window_times(plan, n)
        .into_iter()
        .map(|t| Node { t, p: plan.p_center, lambda: plan.lambda_start })
        .collect();
    let tol = prm.contraction_tol * plan.sup_norm;
    let floor = 1e3 * tol;
    let mut cand = seed;
    let mut f_prev = sample_iterate(state, plan, &cand);
    let mut diffs = Vec::new();
    let mut ratio: f64 = 0.0;
    for k in 1..=prm.max_picard_iters {
        let (next, curvature) = apply_phi(state, plan, &cand)?;
        let f_next = sample_iterate(state, plan, &next);
        let d = f_prev.iter().zip(&f_next).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if let Some(&prev) = diffs.last() {
            if prev > floor {
                ratio = ratio.max(d / prev);
            }
        }
        diffs.push(d);
        if d <= tol && k >= 2 {
            return Ok(WindowSolution { nodes: next, iterations: k, contraction_ratio: ratio, differences: diffs, curvature });
        }
        cand = next;
        f_prev = f_next;
    }
    Err(Error::IterationDiverged(format!(
        "no convergence in {} iterations on window at t = {:.6e} (last change {:.3e})",
        prm.max_picard_iters,
        plan.t_start,
        diffs.last().copied().unwrap_or(f64::NAN)
    )))
}

/// Drives the fixed-point solver across windows.
#[derive(Debug, Clone)]
pub struct Solver {
    pub thresholds: Thresholds,
    /// G(a): sup of the kernel-derivative integral bound.
    pub gamma: f64,
    argmax: f64,
    since_scan: usize,
}

const RESCAN_EVERY: usize = 64;

impl Solver {
    pub fn new(params: &ModelParams, thresholds: Thresholds) -> Result<Self> {
        params.validate()?;
        let g = lemma_gamma_bound(&NeumannKernel::default(), params.a)?;
        Ok(Self { thresholds, gamma: g.value, argmax: -1.0, since_scan: RESCAN_EVERY })
    }

    /// Sampled estimate of ‖f(·, t)‖∞: walls, sources, the last maximiser and its
    /// neighbours, plus a periodic coarse scan.
    pub fn sup_norm(&mut self, state: &SolutionState, t: f64) -> f64 {
        let ev = Evaluator::new(state);
        let (p, _) = ev.at(t);
        let (l, r) = clamp_offsets(p, state.params.a, state.params.rescue_half_factor);
        let mut pts = vec![-1.0, 1.0, p - l, p + r, self.argmax];
        let h = 0.01;
        pts.extend([self.argmax - h, self.argmax + h]);
        self.since_scan += 1;
        if self.since_scan >= RESCAN_EVERY {
            self.since_scan = 0;
            pts.extend((0..=40).map(|i| -1.0 + 0.05 * i as f64));
        }
        let mut best = (0.0f64, self.argmax);
        for x in pts {
            let x = x.clamp(-1.0, 1.0);
            let v = ev.jet(x, t).f.abs();
            if v > best.0 {
                best = (v, x);
            }
        }
        self.argmax = best.1;
        best.0
    }

    fn blowup(&self, state: &SolutionState, criterion: BlowupCriterion, value: f64, threshold: f64, sup: f64) -> Error {
        let last = *state.nodes.last().unwrap();
        Error::BlowupDetected(Box::new(BlowupReport {
            criterion,
            t: last.t,
            value,
            threshold,
            p: last.p,
            lambda: last.lambda,
            sup_norm: sup,
            windows: state.window_log.len(),
        }))
    }

    pub fn plan(&mut self, state: &SolutionState) -> Result<WindowPlan> {
        let last = *state.nodes.last().unwrap();
        let sup = self.sup_norm(state, last.t);
        let init = &state.initial;
        if sup > self.thresholds.sup_growth * init.sup_norm {
            return Err(self.blowup(state, BlowupCriterion::SupNorm, sup, self.thresholds.sup_growth * init.sup_norm, sup));
        }
        if last.lambda < self.thresholds.lambda_floor * init.lambda_i {
            return Err(self.blowup(
                state,
                BlowupCriterion::FluxFloor,
                last.lambda,
                self.thresholds.lambda_floor * init.lambda_i,
                sup,
            ));
        }
        plan_window(last.t, last.p, last.lambda, sup, &state.params, self.gamma)
    }

    /// Solves one window and appends it to the state.
    pub fn solve_window(&mut self, state: &mut SolutionState, plan: &WindowPlan) -> Result<WindowRecord> {
        let prm = state.params;
        let (l, r) = clamp_offsets(plan.p_center, prm.a, prm.rescue_half_factor);
        // derivative queries in the neighbourhood must stay clear of the sources
        let clearance = l.min(r) - plan.a0_n;
        if clearance < prm.a0 / 4.0 {
            return Err(Error::SingularEvaluation { x: plan.p_center, t: plan.t_start, radius: prm.a0 / 4.0 });
        }
        let sol = iterate_window(state, plan)?;
        let lambda_end = sol.nodes.last().unwrap().lambda;
        let rec = WindowRecord {
            t_start: plan.t_start,
            length: plan.t0,
            iterations: sol.iterations,
            contraction_ratio: sol.contraction_ratio,
            p_start: plan.p_center,
            lambda_start: plan.lambda_start,
            lambda_end,
            sup_norm_start: plan.sup_norm,
            flux_floor_ok: lambda_end >= plan.lambda_start / 4.0,
        };
        state.push_nodes(&sol.nodes)?;
        state.record_window(rec);
        if sol.curvature > self.thresholds.curvature_ceiling {
            return Err(self.blowup(state, BlowupCriterion::Curvature, sol.curvature, self.thresholds.curvature_ceiling, plan.sup_norm));
        }
        Ok(rec)
    }

    /// Advances the state to `t_end`. On error the windows solved so far are kept.
    pub fn advance(&mut self, state: &mut SolutionState, t_end: f64) -> Result<()> {
        while state.t_current() < t_end * (1.0 - 1e-14) {
            let mut plan = self.plan(state)?;
            let remaining = t_end - plan.t_start;
            if plan.t0 >= remaining {
                plan.t0 = remaining;
            } else if plan.t0 * 1.5 > remaining {
                // avoid a sliver at the end
                plan.t0 = 0.5 * remaining;
            }
            self.solve_window(state, &plan)?;
        }
        Ok(())
    }
}

/// Solves from the initial data to `t_end`.
pub fn global_solve(
    initial: InitialData,
    params: ModelParams,
    quad: QuadratureConfig,
    thresholds: Thresholds,
    t_end: f64,
) -> Result<SolutionState> {
    let mut state = SolutionState::new(initial, params, quad)?;
    let mut solver = Solver::new(&params, thresholds)?;
    solver.advance(&mut state, t_end)?;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine() -> (InitialData, ModelParams) {
        let prm = ModelParams::default();
        (InitialData::from_fn(|x| -(PI * x / 2.0).sin(), &prm).unwrap(), prm)
    }

    #[test]
    fn window_length_arithmetic() {
        // tracking constraint alone (huge contraction budget)
        let t0 = window_length(1.0, PI / 2.0, 0.05, 1e-9, 1.0);
        let root = 0.025 * (PI / 2.0) / 8.0;
        assert!((t0 - root * root).abs() < 1e-15);
        assert!((t0 - 2.41e-5).abs() < 1e-7);
        // doubling λ quadruples the tracking candidate
        let t1 = window_length(1.0, PI, 0.05, 1e-9, 1.0);
        assert!((t1 / t0 - 4.0).abs() < 1e-12);
        // never above either bound
        let g = 55.0;
        let t2 = window_length(1.0, PI / 2.0, 0.05, g, 1.0);
        let contract = 1.0 / (g * (1.0 + 16.0 / PI));
        assert!(t2 <= t0 && t2 <= contract * contract);
    }

    #[test]
    fn halving_safety_doubles_window_count() {
        let t = window_length(1.0, 1.5, 0.05, 55.0, 0.25);
        let t_half = window_length(1.0, 1.5, 0.05, 55.0, 0.125);
        assert!(t / t_half >= 2.0);
    }

    #[test]
    fn zero_horizon_leaves_state_unchanged() {
        let (init, prm) = sine();
        let st = global_solve(init.clone(), prm, QuadratureConfig::default(), Thresholds::default(), 0.0).unwrap();
        assert_eq!(st.nodes().len(), 1);
        assert_eq!(st.initial(), &init);
    }

    #[test]
    fn symmetric_first_window_stays_centered() {
        let (init, prm) = sine();
        let mut st = SolutionState::new(init, prm, QuadratureConfig::default()).unwrap();
        let mut solver = Solver::new(&prm, Thresholds::default()).unwrap();
        let plan = solver.plan(&st).unwrap();
        let rec = solver.solve_window(&mut st, &plan).unwrap();
        assert!(rec.contraction_ratio <= 0.5);
        for n in st.nodes() {
            assert!(n.p.abs() < 1e-8);
        }
        assert!(rec.flux_floor_ok);
    }

    #[test]
    fn converged_trajectory_is_a_fixed_point() {
        let (init, prm) = sine();
        let st = SolutionState::new(init, prm, QuadratureConfig::default()).unwrap();
        let mut solver = Solver::new(&prm, Thresholds::default()).unwrap();
        let plan = solver.plan(&st).unwrap();
        let sol = iterate_window(&st, &plan).unwrap();
        let (again, _) = apply_phi(&st, &plan, &sol.nodes).unwrap();
        for (a, b) in again.iter().zip(&sol.nodes) {
            assert!((a.p - b.p).abs() < 1e-11 && (a.lambda - b.lambda).abs() < 1e-9);
        }
    }
}
