//! Clamped cubic spline on a uniform grid over [-1, 1] with zero end slopes.

use std::f64::consts::PI;

/// Cubic pieces `a + b u + c u^2 + d u^3`, `u = x - x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeumannSpline {
    h: f64,
    values: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
    /// Integral from -1 up to knot i.
    cumulative: Vec<f64>,
}

impl NeumannSpline {
    /// Interpolates `values` sampled at `x_i = -1 + 2 i / (n - 1)`.
    pub fn new(values: &[f64]) -> Self {
        let n = values.len();
        assert!(n >= 4, "spline needs at least four samples");
        let h = 2.0 / (n - 1) as f64;
        let moments = clamped_moments(values, h);
        let mut a = Vec::with_capacity(n - 1);
        let mut b = Vec::with_capacity(n - 1);
        let mut c = Vec::with_capacity(n - 1);
        let mut d = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            let (m0, m1) = (moments[i], moments[i + 1]);
            a.push(values[i]);
            b.push((values[i + 1] - values[i]) / h - h * (2.0 * m0 + m1) / 6.0);
            c.push(0.5 * m0);
            d.push((m1 - m0) / (6.0 * h));
        }
        let mut cumulative = vec![0.0; n];
        for i in 0..n - 1 {
            cumulative[i + 1] =
                cumulative[i] + h * (a[i] + h * (b[i] / 2.0 + h * (c[i] / 3.0 + h * d[i] / 4.0)));
        }
        Self { h, values: values.to_vec(), a, b, c, d, cumulative }
    }

    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Self {
        let h = 2.0 / (n - 1) as f64;
        let v: Vec<f64> = (0..n).map(|i| f(-1.0 + h * i as f64)).collect();
        Self::new(&v)
    }

    pub fn knots(&self) -> usize {
        self.values.len()
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn samples(&self) -> &[f64] {
        &self.values
    }

    pub fn knot(&self, i: usize) -> f64 {
        -1.0 + self.h * i as f64
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let last = self.a.len() - 1;
        let i = (((x + 1.0) / self.h).floor().max(0.0) as usize).min(last);
        (i, x - self.knot(i))
    }

    pub fn value(&self, x: f64) -> f64 {
        let (i, u) = self.locate(x);
        self.a[i] + u * (self.b[i] + u * (self.c[i] + u * self.d[i]))
    }

    /// Derivative of the given order (0..=3); zero above 3.
    pub fn derivative(&self, x: f64, order: usize) -> f64 {
        let (i, u) = self.locate(x);
        let (b, c, d) = (self.b[i], self.c[i], self.d[i]);
        match order {
            0 => self.value(x),
            1 => b + u * (2.0 * c + 3.0 * d * u),
            2 => 2.0 * c + 6.0 * d * u,
            3 => 6.0 * d,
            _ => 0.0,
        }
    }

    /// `int_{-1}^{x} s`.
    pub fn primitive(&self, x: f64) -> f64 {
        let (i, u) = self.locate(x);
        self.cumulative[i]
            + u * (self.a[i] + u * (self.b[i] / 2.0 + u * (self.c[i] / 3.0 + u * self.d[i] / 4.0)))
    }

    pub fn integral(&self, lo: f64, hi: f64) -> f64 {
        self.primitive(hi) - self.primitive(lo)
    }

    /// `A_m = int s(x) cos(m pi (x + 1) / 2) dx` for m = 0..=max_mode, in closed form.
    ///
    /// With zero end slopes every boundary term of the repeated integration by
    /// parts cancels, leaving only the jumps of the piecewise-constant third
    /// derivative: `A_m = -k^-4 sum_i s'''_i [cos k(x+1)]_{x_i}^{x_{i+1}}`.
    pub fn cosine_coefficients(&self, max_mode: usize) -> Vec<f64> {
        let intervals = self.a.len();
        let period = 2 * intervals;
        let mut out = Vec::with_capacity(max_mode + 1);
        out.push(self.cumulative[intervals]);
        for m in 1..=max_mode {
            let k = m as f64 * PI / 2.0;
            let k4 = k * k * k * k;
            // theta_i = m pi i / intervals, reduced exactly on the integer lattice
            let cos_at = |i: usize| (PI * ((m * i) % period) as f64 / intervals as f64).cos();
            let mut acc = 0.0;
            let mut prev = cos_at(0);
            for i in 0..intervals {
                let next = cos_at(i + 1);
                acc += 6.0 * self.d[i] * (next - prev);
                prev = next;
            }
            out.push(-acc / k4);
        }
        out
    }
}

fn clamped_moments(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    let h2 = h * h;
    let mut lower = vec![1.0; n];
    let mut diag = vec![4.0; n];
    let mut upper = vec![1.0; n];
    let mut rhs = vec![0.0; n];
    diag[0] = 2.0;
    upper[0] = 1.0;
    rhs[0] = 6.0 * (y[1] - y[0]) / h2;
    for i in 1..n - 1 {
        rhs[i] = 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]) / h2;
    }
    lower[n - 1] = 1.0;
    diag[n - 1] = 2.0;
    rhs[n - 1] = -6.0 * (y[n - 1] - y[n - 2]) / h2;
    crate::linalg::solve_tridiagonal(&lower, &diag, &upper, &mut rhs);
    rhs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussLegendre;

    #[test]
    fn reproduces_smooth_neumann_function() {
        let f = |x: f64| -(PI * x / 2.0).sin();
        let s = NeumannSpline::from_fn(201, f);
        for i in 0..1000 {
            let x = -1.0 + 2.0 * i as f64 / 999.0;
            assert!((s.value(x) - f(x)).abs() < 1e-9);
            let df = -(PI / 2.0) * (PI * x / 2.0).cos();
            assert!((s.derivative(x, 1) - df).abs() < 1e-6);
        }
        assert!(s.derivative(-1.0, 1).abs() < 1e-14);
        assert!(s.derivative(1.0, 1).abs() < 1e-14);
    }

    #[test]
    fn primitive_matches_closed_form() {
        let s = NeumannSpline::from_fn(201, |x| -(PI * x / 2.0).sin());
        let exact = 2.0 / PI;
        assert!((s.integral(0.0, 1.0) + exact).abs() < 1e-9);
        assert!((s.integral(-1.0, 0.0) - exact).abs() < 1e-9);
    }

    #[test]
    fn cosine_coefficients_match_quadrature() {
        let s = NeumannSpline::from_fn(41, |x| (1.0 - x * x).powi(2) + 0.3 * x);
        let coeffs = s.cosine_coefficients(30);
        let gl = GaussLegendre::new(12);
        for (m, &cm) in coeffs.iter().enumerate() {
            let k = m as f64 * PI / 2.0;
            let q: f64 = (0..40)
                .map(|i| {
                    let lo = s.knot(i);
                    gl.integrate(lo, lo + s.spacing(), |x| s.value(x) * (k * (x + 1.0)).cos())
                })
                .sum();
            assert!((q - cm).abs() < 1e-13, "m={m}: {q} vs {cm}");
        }
    }
}
