//! `compare`: differences between two trajectory directories on their common time range.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::run::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub p: Vec<f64>,
    pub lambda: Vec<f64>,
}

fn parse_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| CliError::Runtime(format!("{}: empty file", path.display())))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = vec![];
    for (i, l) in lines.enumerate() {
        if l.trim().is_empty() {
            continue;
        }
        let row = l
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| CliError::Runtime(format!("{}:{}: non-numeric field", path.display(), i + 2)))?;
        if row.len() != header.len() {
            return Err(CliError::Runtime(format!("{}:{}: expected {} fields", path.display(), i + 2, header.len())));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// A run directory, one of its solver subdirectories, or a trajectory file's directory.
pub fn resolve(dir: &Path) -> Result<PathBuf, CliError> {
    if dir.join("trajectory.csv").is_file() {
        return Ok(dir.to_path_buf());
    }
    for sub in ["picard", "fd"] {
        if dir.join(sub).join("trajectory.csv").is_file() {
            return Ok(dir.join(sub));
        }
    }
    Err(CliError::Runtime(format!("{}: no trajectory.csv found", dir.display())))
}

pub fn read_trajectory(dir: &Path) -> Result<Trajectory, CliError> {
    let path = dir.join("trajectory.csv");
    let (header, rows) = parse_csv(&path)?;
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Runtime(format!("{}: missing column {name}", path.display())))
    };
    let (it, ip, il) = (col("t")?, col("p")?, col("lambda")?);
    if rows.is_empty() {
        return Err(CliError::Runtime(format!("{}: no rows", path.display())));
    }
    Ok(Trajectory {
        t: rows.iter().map(|r| r[it]).collect(),
        p: rows.iter().map(|r| r[ip]).collect(),
        lambda: rows.iter().map(|r| r[il]).collect(),
    })
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let i = xs.partition_point(|&v| v < x);
    if i == 0 {
        return ys[0];
    }
    if i >= xs.len() {
        return ys[xs.len() - 1];
    }
    let (x0, x1) = (xs[i - 1], xs[i]);
    if x1 == x0 {
        return ys[i];
    }
    ys[i - 1] + (ys[i] - ys[i - 1]) * (x - x0) / (x1 - x0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Norms {
    pub linf: f64,
    pub l1: f64,
}

/// Norms of `a - b` on the union of both sample sets inside [lo, hi].
fn diff_norms(xa: &[f64], ya: &[f64], xb: &[f64], yb: &[f64], lo: f64, hi: f64) -> Norms {
    let mut grid: Vec<f64> = xa.iter().chain(xb).copied().filter(|&x| x >= lo && x <= hi).collect();
    grid.push(lo);
    grid.push(hi);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let d: Vec<f64> = grid.iter().map(|&x| (interp(xa, ya, x) - interp(xb, yb, x)).abs()).collect();
    let linf = d.iter().fold(0.0f64, |m, v| m.max(*v));
    let l1 = grid.windows(2).zip(d.windows(2)).map(|(g, v)| 0.5 * (g[1] - g[0]) * (v[0] + v[1])).sum();
    Norms { linf, l1 }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileDiff {
    pub t: f64,
    pub norms: Norms,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub a: String,
    pub b: String,
    pub t_range: (f64, f64),
    pub p: Norms,
    pub lambda: Norms,
    /// Latest snapshot time present in both directories.
    pub profile: Option<ProfileDiff>,
}

fn profile_times(dir: &Path) -> Vec<(f64, PathBuf)> {
    let mut out = vec![];
    if let Ok(rd) = fs::read_dir(dir) {
        for e in rd.flatten() {
            let name = e.file_name().to_string_lossy().into_owned();
            if let Some(t) = name.strip_prefix("profile_t").and_then(|s| s.strip_suffix(".csv")) {
                if let Ok(t) = t.parse::<f64>() {
                    out.push((t, e.path()));
                }
            }
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn read_profile(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let (_, rows) = parse_csv(path)?;
    Ok((rows.iter().map(|r| r[0]).collect(), rows.iter().map(|r| r[1]).collect()))
}

pub fn compare(a: &Path, b: &Path) -> Result<CompareReport, CliError> {
    let (da, db) = (resolve(a)?, resolve(b)?);
    let (ta, tb) = (read_trajectory(&da)?, read_trajectory(&db)?);
    let lo = ta.t[0].max(tb.t[0]);
    let hi = ta.t[ta.t.len() - 1].min(tb.t[tb.t.len() - 1]);
    if lo > hi {
        return Err(CliError::Runtime(format!("time ranges are disjoint: [{}, {}] vs [{}, {}]", ta.t[0], ta.t[ta.t.len() - 1], tb.t[0], tb.t[tb.t.len() - 1])));
    }
    let p = diff_norms(&ta.t, &ta.p, &tb.t, &tb.p, lo, hi);
    let lambda = diff_norms(&ta.t, &ta.lambda, &tb.t, &tb.lambda, lo, hi);

    let pb = profile_times(&db);
    let mut profile = None;
    for (t, path_a) in profile_times(&da).into_iter().rev() {
        if t > hi {
            continue;
        }
        if let Some((_, path_b)) = pb.iter().find(|(s, _)| *s == t) {
            let (xa, fa) = read_profile(&path_a)?;
            let (xb, fb) = read_profile(path_b)?;
            let lo_x = xa[0].max(xb[0]);
            let hi_x = xa[xa.len() - 1].min(xb[xb.len() - 1]);
            profile = Some(ProfileDiff { t, norms: diff_norms(&xa, &fa, &xb, &fb, lo_x, hi_x) });
            break;
        }
    }
    Ok(CompareReport {
        a: da.display().to_string(),
        b: db.display().to_string(),
        t_range: (lo, hi),
        p,
        lambda,
        profile,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_and_norms() {
        let xs = [0.0, 1.0, 2.0];
        assert_eq!(interp(&xs, &[0.0, 2.0, 0.0], 0.5), 1.0);
        assert_eq!(interp(&xs, &[0.0, 2.0, 0.0], 5.0), 0.0);
        let n = diff_norms(&xs, &[1.0, 1.0, 1.0], &[0.0, 2.0], &[0.0, 0.0], 0.0, 2.0);
        assert_eq!(n.linf, 1.0);
        assert!((n.l1 - 2.0).abs() < 1e-15);
        let z = diff_norms(&xs, &[3.0, 1.0, 4.0], &xs, &[3.0, 1.0, 4.0], 0.0, 2.0);
        assert_eq!((z.linf, z.l1), (0.0, 0.0));
    }
}
