//! Zero location, flux and front velocity on sampled profiles.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Profile;

/// Safeguarded Newton on `[lo, hi]` where `g(lo) > 0 > g(hi)`.
///
/// `g` returns the value and slope. Bisection narrows the bracket to
/// `bisect_width` first; Newton steps that leave the bracket are replaced by
/// bisection. Returns the root and the last (value, slope) pair.
pub(crate) fn bracketed_root(
    g: impl Fn(f64) -> (f64, f64),
    mut lo: f64,
    mut hi: f64,
    bisect_width: f64,
    ftol: f64,
) -> (f64, (f64, f64)) {
    while hi - lo > bisect_width {
        let mid = 0.5 * (lo + hi);
        let v = g(mid).0;
        if v == 0.0 {
            return (mid, g(mid));
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    let mut last = g(x);
    for _ in 0..60 {
        let (v, d) = last;
        if v.abs() <= ftol {
            break;
        }
        if v > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let mut next = if d != 0.0 { x - v / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == x || hi - lo < 4.0 * f64::EPSILON * x.abs().max(1.0) {
            break;
        }
        x = next;
        last = g(x);
    }
    (x, last)
}

/// Zero of a profile inside `bracket`, positive on the left side.
pub fn locate_zero(profile: &Profile, bracket: (f64, f64)) -> Result<f64> {
    let (lo, hi) = bracket;
    let (flo, fhi) = (profile.value(lo), profile.value(hi));
    if !(flo * fhi < 0.0) {
        return Err(Error::NoBracket { lo, hi });
    }
    let sign = if flo > 0.0 { 1.0 } else { -1.0 };
    // samples inside the bracket must be strictly monotone
    let mut prev = flo;
    for (&x, &v) in profile.xs.iter().zip(&profile.values) {
        if x <= lo || x >= hi {
            continue;
        }
        if (v - prev) * sign >= 0.0 {
            return Err(Error::MultipleZeroSuspected { lo, hi });
        }
        prev = v;
    }
    if (fhi - prev) * sign >= 0.0 {
        return Err(Error::MultipleZeroSuspected { lo, hi });
    }
    let scale = profile.sup_norm().max(f64::MIN_POSITIVE);
    let g = |x: f64| {
        let d = profile.derivatives(x, 1);
        (sign * d[0], sign * d[1])
    };
    let (p, _) = bracketed_root(g, lo, hi, 1e-6, 1e-13 * scale);
    Ok(p)
}

/// λ = -f_x(p).
pub fn flux(profile: &Profile, p: f64) -> Result<f64> {
    Ok(-profile.derivative(p, 1)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Velocity {
    pub speed: f64,
    /// `Some(3)` when f_x vanished and the third/fourth-derivative ratio was used.
    pub degenerate_order: Option<usize>,
}

/// ṗ = -f_xx/f_x, or -f_xxxx/(2 f_xxx) when the gradient vanishes.
pub fn velocity(profile: &Profile, p: f64, degeneracy_tol: f64) -> Result<Velocity> {
    if profile.in_exclusion(p) {
        return Err(Error::SingularEvaluation { x: p, t: profile.t, radius: 0.0 });
    }
    let d = profile.derivatives(p, 4);
    let tol = degeneracy_tol * profile.sup_norm();
    if d[1].abs() > tol {
        return Ok(Velocity { speed: -d[2] / d[1], degenerate_order: None });
    }
    if d[2].abs() <= tol && d[3].abs() > tol {
        return Ok(Velocity { speed: -d[4] / (2.0 * d[3]), degenerate_order: Some(3) });
    }
    Err(Error::DegenerateFront { x: p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn linear_root() {
        let pr = Profile::from_fn(0.0, 201, |x| -x);
        assert!(locate_zero(&pr, (-0.5, 0.5)).unwrap().abs() < 1e-14);
    }

    #[test]
    fn sine_root_and_flux() {
        let pr = Profile::from_fn(0.0, 401, |x| -(PI * x / 2.0).sin());
        let p = locate_zero(&pr, (-0.3, 0.4)).unwrap();
        assert!(p.abs() < 1e-12);
        assert!((flux(&pr, p).unwrap() - PI / 2.0).abs() < 1e-9);
        let scaled = Profile::from_fn(0.0, 401, |x| -3.0 * (PI * x / 2.0).sin());
        assert!((flux(&scaled, 0.0).unwrap() - 3.0 * PI / 2.0).abs() < 1e-8);
        let v = velocity(&pr, p, 1e-8).unwrap();
        assert!(v.speed.abs() < 1e-9 && v.degenerate_order.is_none());
    }

    #[test]
    fn no_bracket() {
        let pr = Profile::from_fn(0.0, 201, |x| 1.0 + x * x);
        assert!(matches!(locate_zero(&pr, (-0.5, 0.5)), Err(Error::NoBracket { .. })));
    }

    #[test]
    fn non_monotone_bracket() {
        let pr = Profile::from_fn(0.0, 201, |x| -x * (x - 0.3) * (x + 0.3) - 0.001);
        assert!(matches!(
            locate_zero(&pr, (-0.9, 0.9)),
            Err(Error::MultipleZeroSuspected { .. })
        ));
    }

    #[test]
    fn velocity_formula() {
        let pr = Profile::from_fn(0.0, 201, |x| -x + x * x);
        let v = velocity(&pr, 0.0, 1e-8).unwrap();
        assert!((v.speed - 2.0).abs() < 1e-8);
    }

    #[test]
    fn degenerate_velocity() {
        let pr = Profile::from_fn(0.0, 201, |x| -x.powi(3) - x.powi(4));
        let v = velocity(&pr, 0.0, 1e-8).unwrap();
        assert_eq!(v.degenerate_order, Some(3));
        assert!((v.speed + 2.0).abs() < 1e-5, "{}", v.speed);
        let flat = Profile::from_fn(0.0, 201, |x| -x.powi(5));
        assert!(matches!(velocity(&flat, 0.0, 1e-8), Err(Error::DegenerateFront { .. })));
    }
}
