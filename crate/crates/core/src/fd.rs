//! Finite-difference front tracking on a uniform grid: the independent oracle.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::solve_tridiagonal;
use crate::model::{source_sink, uniform_grid, InitialData, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdConfig {
    pub nx: usize,
    /// Largest time step; the run uses the largest step ≤ dt that divides t_end.
    pub dt: f64,
    /// 0 explicit, 0.5 Crank–Nicolson, 1 backward Euler.
    pub theta: f64,
    /// 1: nearest-node deposit, 2: linear hat.
    pub delta_width: usize,
    /// Leading steps replaced by two backward-Euler half steps.
    pub rannacher_steps: usize,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self { nx: 2001, dt: 1e-5, theta: 0.5, delta_width: 2, rannacher_steps: 1 }
    }
}

impl FdConfig {
    pub fn h(&self) -> f64 {
        2.0 / (self.nx - 1) as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 11 {
            return Err(Error::Config(format!("nx must be at least 11, got {}", self.nx)));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Config(format!("theta must lie in [0, 1], got {}", self.theta)));
        }
        let h = self.h();
        if self.theta < 0.5 && self.dt > 0.5 * h * h {
            return Err(Error::Config(format!(
                "explicit-leaning scheme (theta = {}) needs dt <= h^2/2 = {:.3e}, got {:.3e}",
                self.theta,
                0.5 * h * h,
                self.dt
            )));
        }
        if !matches!(self.delta_width, 1 | 2) {
            return Err(Error::Config(format!("delta_width must be 1 or 2, got {}", self.delta_width)));
        }
        Ok(())
    }

    /// Twice the resolution in space and time.
    pub fn refined(&self) -> Self {
        Self { nx: 2 * self.nx - 1, dt: 0.5 * self.dt, ..self.clone() }
    }
}

/// Grid function with its time.
#[derive(Debug, Clone, PartialEq)]
pub struct FdGrid {
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    pub t: f64,
}

impl FdGrid {
    pub fn from_initial(initial: &InitialData, nx: usize) -> Self {
        let x = uniform_grid(nx);
        let f = x.iter().map(|&v| initial.value(v)).collect();
        Self { x, f, t: 0.0 }
    }

    pub fn h(&self) -> f64 {
        self.x[1] - self.x[0]
    }

    /// Trapezoid weights; the discrete Neumann Laplacian conserves `sum w_i f_i`.
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.x.len() {
            0.5 * self.h()
        } else {
            self.h()
        }
    }

    pub fn mass(&self) -> f64 {
        (0..self.f.len()).map(|i| self.weight(i) * self.f[i]).sum()
    }

    /// `int_{-1}^{y}` of the piecewise-linear interpolant.
    pub fn primitive(&self, y: f64) -> f64 {
        let h = self.h();
        let j = (((y + 1.0) / h).floor().max(0.0) as usize).min(self.x.len() - 2);
        let full: f64 = (0..j).map(|i| 0.5 * h * (self.f[i] + self.f[i + 1])).sum();
        let u = y - self.x[j];
        let fy = self.f[j] + (self.f[j + 1] - self.f[j]) * u / h;
        full + 0.5 * u * (self.f[j] + fy)
    }

    /// Adds `amount` of mass at y (hat or nearest node).
    pub fn deposit(&mut self, y: f64, amount: f64, width: usize) {
        let h = self.h();
        let n = self.x.len();
        let s = ((y + 1.0) / h).clamp(0.0, (n - 1) as f64);
        if width == 1 {
            let i = s.round() as usize;
            let w = self.weight(i);
            self.f[i] += amount / w;
            return;
        }
        let j = (s.floor() as usize).min(n - 2);
        let alpha = s - j as f64;
        let (wj, wk) = (self.weight(j), self.weight(j + 1));
        self.f[j] += (1.0 - alpha) * amount / wj;
        self.f[j + 1] += alpha * amount / wk;
    }

    /// The single sign change: linear interpolation, then a cubic polish.
    pub fn locate_front(&self) -> Result<f64> {
        let n = self.f.len();
        let mut found = None;
        for i in 0..n - 1 {
            if self.f[i] > 0.0 && self.f[i + 1] <= 0.0 {
                if found.is_some() {
                    return Err(Error::MultipleZeroSuspected { lo: self.x[0], hi: self.x[n - 1] });
                }
                found = Some(i);
            }
        }
        let j = found.ok_or(Error::NoBracket { lo: -1.0, hi: 1.0 })?;
        let (f0, f1) = (self.f[j], self.f[j + 1]);
        let mut p = self.x[j] + self.h() * f0 / (f0 - f1);
        if j >= 1 && j + 2 < n {
            let xs = &self.x[j - 1..=j + 2];
            let fs = &self.f[j - 1..=j + 2];
            for _ in 0..8 {
                let w = crate::linalg::fornberg_weights(p, xs, 1);
                let v: f64 = w[0].iter().zip(fs).map(|(a, b)| a * b).sum();
                let d: f64 = w[1].iter().zip(fs).map(|(a, b)| a * b).sum();
                if d == 0.0 {
                    break;
                }
                let next = (p - v / d).clamp(self.x[j], self.x[j + 1]);
                if (next - p).abs() < 1e-16 {
                    break;
                }
                p = next;
            }
        }
        Ok(p)
    }

    /// λ = -f_x(p): mean of cubic extrapolations from each side, and their gap.
    pub fn front_flux(&self, p: f64) -> (f64, f64) {
        let h = self.h();
        let n = self.x.len();
        let j = (((p + 1.0) / h).floor() as usize).min(n - 2);
        let slope = |lo: usize| {
            let w = crate::linalg::fornberg_weights(p, &self.x[lo..lo + 4], 1);
            -w[1].iter().zip(&self.f[lo..lo + 4]).map(|(a, b)| a * b).sum::<f64>()
        };
        let left = slope(j.saturating_sub(3).min(n - 4));
        let right = slope((j + 1).min(n - 4));
        (0.5 * (left + right), (left - right).abs())
    }
}

/// One theta step of f_t = f_xx with the source pair deposited at the start.
pub fn fd_step(
    grid: &mut FdGrid,
    p: f64,
    lambda: f64,
    params: &ModelParams,
    config: &FdConfig,
    dt: f64,
    theta: f64,
) -> Result<()> {
    if !(p > -1.0 && p < 1.0) {
        return Err(Error::Domain(format!("front position {p} outside (-1, 1)")));
    }
    let (src, snk) = source_sink(p, params.a, params.rescue_half_factor);
    grid.deposit(src, lambda * dt, config.delta_width);
    grid.deposit(snk, -lambda * dt, config.delta_width);
    theta_step(&mut grid.f, grid.x[1] - grid.x[0], dt, theta);
    grid.t += dt;
    Ok(())
}

fn theta_step(f: &mut [f64], h: f64, dt: f64, theta: f64) {
    let n = f.len();
    let r = dt / (h * h);
    // explicit part: (I + (1-θ) dt L) f, with ghost f_{-1} = f_1
    let e = (1.0 - theta) * r;
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        let (l, c, u) = (
            if i == 0 { f[1] } else { f[i - 1] },
            f[i],
            if i + 1 == n { f[n - 2] } else { f[i + 1] },
        );
        rhs[i] = c + e * (l - 2.0 * c + u);
    }
    if theta == 0.0 {
        f.copy_from_slice(&rhs);
        return;
    }
    let m = theta * r;
    let mut lower = vec![-m; n];
    let diag = vec![1.0 + 2.0 * m; n];
    let mut upper = vec![-m; n];
    upper[0] = -2.0 * m;
    lower[n - 1] = -2.0 * m;
    solve_tridiagonal(&lower, &diag, &upper, &mut rhs);
    f.copy_from_slice(&rhs);
}

#[derive(Debug, Clone, Serialize)]
pub struct FdSample {
    pub t: f64,
    pub p: f64,
    pub lambda: f64,
    pub lambda_gap: f64,
    pub mass_b: f64,
    pub mass_p: f64,
}

#[derive(Debug, Clone)]
pub struct FdTrajectory {
    pub config: FdConfig,
    pub samples: Vec<FdSample>,
    pub x: Vec<f64>,
    /// (t, f) at the requested snapshot times.
    pub snapshots: Vec<(f64, Vec<f64>)>,
}

impl FdTrajectory {
    pub fn last(&self) -> &FdSample {
        self.samples.last().unwrap()
    }

    pub fn snapshot(&self, t: f64) -> Option<&[f64]> {
        self.snapshots
            .iter()
            .find(|(s, _)| (s - t).abs() <= 1e-12 * t.max(1.0))
            .map(|(_, f)| f.as_slice())
    }
}

fn sample(grid: &FdGrid) -> Result<FdSample> {
    let h = grid.h();
    let p = grid.locate_front()?;
    if !(p > -1.0 + h && p < 1.0 - h) {
        return Err(Error::Domain(format!("front {p} reached the wall layer at t = {}", grid.t)));
    }
    let (lambda, gap) = grid.front_flux(p);
    let mb = grid.primitive(p);
    let total = grid.mass();
    Ok(FdSample { t: grid.t, p, lambda, lambda_gap: gap, mass_b: mb, mass_p: mb - total })
}

/// Coupled run to `t_end`: locate p and λ from the grid, deposit, step.
pub fn fd_solve(
    initial: &InitialData,
    params: &ModelParams,
    config: &FdConfig,
    t_end: f64,
    snapshot_times: &[f64],
) -> Result<FdTrajectory> {
    config.validate()?;
    params.validate()?;
    let mut grid = FdGrid::from_initial(initial, config.nx);
    let steps = if t_end > 0.0 { (t_end / config.dt).ceil() as usize } else { 0 };
    let dt = if steps > 0 { t_end / steps as f64 } else { 0.0 };
    let mut samples = vec![sample(&grid)?];
    let mut snaps: Vec<(f64, Vec<f64>)> = vec![];
    let mut pending: Vec<f64> = snapshot_times.to_vec();
    pending.sort_by(f64::total_cmp);
    let take = |grid: &FdGrid, pending: &mut Vec<f64>, snaps: &mut Vec<(f64, Vec<f64>)>| {
        while pending.first().is_some_and(|&s| s <= grid.t + 0.5 * dt.max(1e-300)) {
            let s = pending.remove(0);
            snaps.push((s, grid.f.clone()));
        }
    };
    take(&grid, &mut pending, &mut snaps);
    for k in 0..steps {
        let last = samples.last().unwrap();
        let (p, lambda) = (last.p, last.lambda);
        if k < config.rannacher_steps && config.theta < 1.0 {
            fd_step(&mut grid, p, lambda, params, config, 0.5 * dt, 1.0)?;
            fd_step(&mut grid, p, lambda, params, config, 0.5 * dt, 1.0)?;
        } else {
            fd_step(&mut grid, p, lambda, params, config, dt, config.theta)?;
        }
        if k + 1 == steps {
            grid.t = t_end;
        }
        samples.push(sample(&grid)?);
        take(&grid, &mut pending, &mut snaps);
    }
    Ok(FdTrajectory { config: config.clone(), samples, x: grid.x, snapshots: snaps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine_grid(nx: usize) -> FdGrid {
        let x = uniform_grid(nx);
        let f = x.iter().map(|&v| -(PI * v / 2.0).sin()).collect();
        FdGrid { x, f, t: 0.0 }
    }

    #[test]
    fn eigen_decay_per_step() {
        let mut g = sine_grid(401);
        let cfg = FdConfig { nx: 401, ..FdConfig::default() };
        let dt = 1e-4;
        let prm = ModelParams::default();
        for _ in 0..100 {
            fd_step(&mut g, 0.0, 0.0, &prm, &cfg, dt, 0.5).unwrap();
        }
        let amp = (-PI * PI * 0.01 / 4.0).exp();
        for (x, f) in g.x.iter().zip(&g.f) {
            assert!((f + (PI * x / 2.0).sin() * amp).abs() < 1e-5);
        }
    }

    #[test]
    fn deposit_weights_sum_exactly() {
        for width in [1, 2] {
            let mut g = sine_grid(101);
            let before = g.mass();
            g.deposit(-0.3337, 0.125, width);
            assert!((g.mass() - before - 0.125).abs() < 1e-15);
            g.deposit(-1.0, 0.5, width);
            g.deposit(1.0, 0.5, width);
            assert!((g.mass() - before - 1.125).abs() < 1e-14);
        }
    }

    #[test]
    fn step_conserves_signed_mass() {
        let mut g = sine_grid(201);
        let cfg = FdConfig { nx: 201, ..FdConfig::default() };
        let prm = ModelParams::default();
        let m0 = g.mass();
        for theta in [0.5, 1.0] {
            fd_step(&mut g, 0.05, 1.3, &prm, &cfg, 1e-3, theta).unwrap();
            assert!((g.mass() - m0).abs() < 1e-14);
        }
    }

    #[test]
    fn explicit_stability_guard() {
        let cfg = FdConfig { nx: 201, dt: 1e-3, theta: 0.0, ..FdConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let ok = FdConfig { nx: 201, dt: 4e-5, theta: 0.0, ..FdConfig::default() };
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn symmetric_front_stays_centered() {
        let prm = ModelParams::default();
        let init = InitialData::from_fn(|x| -(PI * x / 2.0).sin(), &prm).unwrap();
        let cfg = FdConfig { nx: 401, dt: 1e-4, ..FdConfig::default() };
        let run = fd_solve(&init, &prm, &cfg, 0.05, &[0.05]).unwrap();
        let h = cfg.h();
        assert!(run.samples.iter().all(|s| s.p.abs() < h));
        assert!(run.snapshot(0.05).is_some());
    }

    #[test]
    fn front_and_flux_on_exact_profile() {
        let g = sine_grid(401);
        let p = g.locate_front().unwrap();
        assert!(p.abs() < 1e-12);
        let (lambda, gap) = g.front_flux(p);
        assert!((lambda - PI / 2.0).abs() < 1e-6 && gap < 1e-6);
    }
}
