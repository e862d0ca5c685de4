//! Reflected Brownian particles absorbed at a prescribed front and reinjected
//! one level up: a Monte-Carlo picture of the vendor density.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::duhamel::eval_primitive;
use crate::error::{Error, Result};
use crate::model::{clamp_offsets, ModelParams, SolutionState};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticleConfig {
    pub n: usize,
    pub seed: u64,
    pub dt: f64,
    /// Independent RNG streams; particle i draws from stream i mod partitions.
    pub partitions: usize,
    /// Brownian-bridge correction for crossings inside a step.
    pub bridge: bool,
}

impl Default for ParticleConfig {
    fn default() -> Self {
        Self { n: 100_000, seed: 20_240_917, dt: 2e-5, partitions: 16, bridge: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transaction {
    pub t: f64,
    pub particle_id: usize,
    pub level_from: u32,
    pub level_to: u32,
    pub reinjection_x: f64,
}

#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub positions: Vec<f64>,
    pub levels: Vec<u32>,
    pub particle_mass: f64,
    pub rng_seed: u64,
    pub t: f64,
    streams: Vec<ChaCha8Rng>,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Mass on each level, index = level.
    pub fn level_masses(&self) -> Vec<f64> {
        let top = self.levels.iter().copied().max().map_or(0, |l| l as usize + 1);
        let mut m = vec![0.0; top];
        for &l in &self.levels {
            m[l as usize] += self.particle_mass;
        }
        m
    }

    pub fn total_mass(&self) -> f64 {
        self.particle_mass * self.len() as f64
    }

    /// `sum_n n M^(n)`.
    pub fn level_moment(&self) -> f64 {
        self.particle_mass * self.levels.iter().map(|&l| l as f64).sum::<f64>()
    }
}

/// Samples `n` level-0 particles from a piecewise-linear density by inverse CDF.
pub fn init_ensemble(xs: &[f64], density: &[f64], n: usize, seed: u64, partitions: usize) -> Result<ParticleEnsemble> {
    if xs.len() != density.len() || xs.len() < 2 {
        return Err(Error::Domain("density needs at least two matching samples".into()));
    }
    if let Some(v) = density.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Domain(format!("density must be non-negative, found {v}")));
    }
    let mut cdf = vec![0.0; xs.len()];
    for i in 1..xs.len() {
        if !(xs[i] > xs[i - 1]) {
            return Err(Error::Domain("density abscissae must increase".into()));
        }
        cdf[i] = cdf[i - 1] + 0.5 * (xs[i] - xs[i - 1]) * (density[i] + density[i - 1]);
    }
    let mass = *cdf.last().unwrap();
    if n > 0 && !(mass > 0.0) {
        return Err(Error::Domain("density has zero mass".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.random::<f64>() * mass;
        let i = cdf.partition_point(|&c| c < target).clamp(1, xs.len() - 1);
        // solve the quadratic for the linear density on [x_{i-1}, x_i]
        let (x0, h) = (xs[i - 1], xs[i] - xs[i - 1]);
        let (d0, d1) = (density[i - 1], density[i]);
        let need = target - cdf[i - 1];
        let slope = (d1 - d0) / h;
        let u = if slope.abs() < 1e-14 * (d0 + d1 + 1e-300) / h {
            if d0 > 0.0 { need / d0 } else { 0.5 * h }
        } else {
            let disc = (d0 * d0 + 2.0 * slope * need).max(0.0);
            2.0 * need / (d0 + disc.sqrt())
        };
        positions.push(x0 + u.clamp(0.0, h));
    }
    Ok(ParticleEnsemble {
        levels: vec![0; n],
        positions,
        particle_mass: if n > 0 { mass / n as f64 } else { 0.0 },
        rng_seed: seed,
        t: 0.0,
        streams: make_streams(seed, partitions.max(1)),
    })
}

fn make_streams(seed: u64, partitions: usize) -> Vec<ChaCha8Rng> {
    (0..partitions)
        .map(|k| {
            let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
            r.set_stream(k as u64 + 1);
            r
        })
        .collect()
}

/// Advances every particle by `dt` under the front `p_at(t)`; absorbed
/// particles are reinjected at `p + ā_R` one level up. Transactions are
/// appended in particle-id order.
pub fn step_ensemble(
    ens: &mut ParticleEnsemble,
    p_at: impl Fn(f64) -> f64,
    dt: f64,
    params: &ModelParams,
    bridge: bool,
    log: &mut Vec<Transaction>,
) {
    let (p0, p1) = (p_at(ens.t), p_at(ens.t + dt));
    let t1 = ens.t + dt;
    let sigma = (2.0 * dt).sqrt();
    let (_, ar) = clamp_offsets(p1, params.a, params.rescue_half_factor);
    let reinject = p1 + ar;
    let parts = ens.streams.len();
    for (k, rng) in ens.streams.iter_mut().enumerate() {
        let mut i = k;
        while i < ens.positions.len() {
            let x = ens.positions[i];
            let z: f64 = rng.sample(StandardNormal);
            let mut y = x + sigma * z;
            while !(-1.0..=1.0).contains(&y) {
                y = if y > 1.0 { 2.0 - y } else { -2.0 - y };
            }
            let mut absorbed = y < p1;
            if !absorbed && bridge {
                let (d1, d2) = (x - p0, y - p1);
                let e = d1 * d2 / dt;
                // always draw so the stream does not depend on the branch
                let u: f64 = rng.random();
                absorbed = e < 40.0 && u < (-e).exp();
            }
            if absorbed {
                let from = ens.levels[i];
                ens.levels[i] = from + 1;
                ens.positions[i] = reinject;
                log.push(Transaction { t: t1, particle_id: i, level_from: from, level_to: from + 1, reinjection_x: reinject });
            } else {
                ens.positions[i] = y;
            }
            i += parts;
        }
    }
    let start = log.partition_point(|tr| tr.t < t1);
    log[start..].sort_by_key(|tr| tr.particle_id);
    ens.t = t1;
}

/// Writes a transaction log as CSV.
pub fn write_transactions(mut w: impl std::io::Write, log: &[Transaction]) -> std::io::Result<()> {
    writeln!(w, "t,particle_id,level_from,level_to,reinjection_x")?;
    for tr in log {
        writeln!(w, "{:.17e},{},{},{},{:.17e}", tr.t, tr.particle_id, tr.level_from, tr.level_to, tr.reinjection_x)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct FoliationReport {
    pub t: f64,
    pub particles: usize,
    pub total_mass: f64,
    pub level_masses: Vec<f64>,
    /// `sum_n n M^(n)`.
    pub level_moment: f64,
    /// `int_0^t λ`.
    pub flux_integral: f64,
    pub level_moment_se: f64,
    /// |level_moment - flux_integral| in standard errors.
    pub level_moment_z: f64,
    pub bins: usize,
    /// Binned L¹ distance between particle and PDE vendor densities.
    pub density_l1: f64,
    pub vendor_mass: f64,
    /// Fitted ratio of successive level occupancies (least squares on log counts).
    pub tail_ratio: Option<f64>,
    pub tail_nonincreasing: bool,
}

/// Compares an ensemble against the PDE state that drove it.
pub fn foliation_report(ens: &ParticleEnsemble, state: &SolutionState, bins: usize) -> Result<FoliationReport> {
    let t = ens.t;
    if t > state.t_current() * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "ensemble time {t} is beyond the PDE trajectory ({})",
            state.t_current()
        )));
    }
    let t = t.min(state.t_current());
    let lambda_int = crate::diagnostics::flux_integral(state, t)?;
    let moment = ens.level_moment();
    let n = ens.len();
    let se = if n > 1 {
        let mean = ens.levels.iter().map(|&l| l as f64).sum::<f64>() / n as f64;
        let var = ens.levels.iter().map(|&l| (l as f64 - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        ens.total_mass() * var.sqrt() / (n as f64).sqrt()
    } else {
        0.0
    };
    let z = if se > 0.0 { (moment - lambda_int).abs() / se } else if moment == lambda_int { 0.0 } else { f64::INFINITY };

    let (p, _) = state.interpolate(t)?;
    let edges: Vec<f64> = (0..=bins).map(|k| p + (1.0 - p) * k as f64 / bins as f64).collect();
    let mut counts = vec![0usize; bins];
    for &x in &ens.positions {
        let k = (((x - p) / (1.0 - p)) * bins as f64).floor();
        counts[(k.max(0.0) as usize).min(bins - 1)] += 1;
    }
    let prim: Vec<f64> = edges.iter().map(|&e| eval_primitive(state, e, t)).collect::<Result<_>>()?;
    let mut l1 = 0.0;
    for k in 0..bins {
        let pde = -(prim[k + 1] - prim[k]);
        l1 += (counts[k] as f64 * ens.particle_mass - pde).abs();
    }
    let vendor_mass = -(prim[bins] - prim[0]);

    let masses = ens.level_masses();
    let occ: Vec<usize> = (0..masses.len()).map(|l| ens.levels.iter().filter(|&&v| v as usize >= l).count()).collect();
    let tail_nonincreasing = occ.windows(2).all(|w| w[1] <= w[0]);
    let pts: Vec<(f64, f64)> = masses
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, m)| **m > 0.0)
        .map(|(l, m)| (l as f64, m.ln()))
        .collect();
    let tail_ratio = (pts.len() >= 2).then(|| {
        let k = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        let (mx, my) = (sx / k, sy / k);
        let num: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
        (num / den).exp()
    });

    Ok(FoliationReport {
        t,
        particles: n,
        total_mass: ens.total_mass(),
        level_masses: masses,
        level_moment: moment,
        flux_integral: lambda_int,
        level_moment_se: se,
        level_moment_z: z,
        bins,
        density_l1: l1,
        vendor_mass,
        tail_ratio,
        tail_nonincreasing,
    })
}

/// Initial vendor density `-f_I` on `[p_I, 1]`, sampled at `n` points.
pub fn initial_vendor_density(state: &SolutionState, n: usize) -> (Vec<f64>, Vec<f64>) {
    let init = state.initial();
    let p = init.p_i;
    let xs: Vec<f64> = (0..n).map(|i| p + (1.0 - p) * i as f64 / (n - 1) as f64).collect();
    let rho = xs.iter().map(|&x| (-init.value(x)).max(0.0)).collect();
    (xs, rho)
}

/// Drives an ensemble along the state's front trajectory to time `t_end`.
pub fn run_particles(state: &SolutionState, cfg: &ParticleConfig, t_end: f64) -> Result<(ParticleEnsemble, Vec<Transaction>)> {
    if t_end > state.t_current() {
        return Err(Error::OutOfRange { t: t_end, t_current: state.t_current() });
    }
    let (xs, rho) = initial_vendor_density(state, 2001);
    let mut ens = init_ensemble(&xs, &rho, cfg.n, cfg.seed, cfg.partitions)?;
    let steps = (t_end / cfg.dt).ceil() as usize;
    let dt = if steps > 0 { t_end / steps as f64 } else { 0.0 };
    let mut log = Vec::new();
    let p_at = |t: f64| state.interpolate(t.min(state.t_current())).map(|v| v.0).unwrap_or(f64::NAN);
    for _ in 0..steps {
        step_ensemble(&mut ens, p_at, dt, state.params(), cfg.bridge, &mut log);
    }
    Ok((ens, log))
}
