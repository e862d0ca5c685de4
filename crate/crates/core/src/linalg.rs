/// Thomas algorithm; `rhs` is overwritten with the solution.
///
/// `lower[0]` and `upper[n-1]` are ignored. The system must be diagonally
/// dominant (all uses here are).
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) {
    let n = rhs.len();
    let mut c = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    rhs[0] /= diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        if i + 1 < n {
            c[i] = upper[i] / m;
        }
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
}

/// Finite-difference weights (Fornberg) for derivatives 0..=max_order at `z`
/// from nodes `xs`. Returns `w[order][node]`.
pub fn fornberg_weights(z: f64, xs: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - z;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_solves_known_system() {
        let lower = [0.0, 1.0, 1.0, 1.0];
        let diag = [4.0, 4.0, 4.0, 4.0];
        let upper = [1.0, 1.0, 1.0, 0.0];
        let x = [1.0, -2.0, 3.0, 0.5];
        let mut rhs: Vec<f64> = (0..4)
            .map(|i| {
                let mut s = diag[i] * x[i];
                if i > 0 {
                    s += lower[i] * x[i - 1];
                }
                if i < 3 {
                    s += upper[i] * x[i + 1];
                }
                s
            })
            .collect();
        solve_tridiagonal(&lower, &diag, &upper, &mut rhs);
        for i in 0..4 {
            assert!((rhs[i] - x[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn fornberg_differentiates_polynomials() {
        let xs = [-0.3, -0.1, 0.0, 0.2, 0.35];
        let w = fornberg_weights(0.05, &xs, 4);
        let p = |x: f64| 1.0 - 2.0 * x + x.powi(3) - 0.5 * x.powi(4);
        let vals: Vec<f64> = xs.iter().map(|&x| p(x)).collect();
        let d = |k: usize| -> f64 { w[k].iter().zip(&vals).map(|(a, b)| a * b).sum() };
        let z: f64 = 0.05;
        assert!((d(0) - p(z)).abs() < 1e-13);
        assert!((d(1) - (-2.0 + 3.0 * z * z - 2.0 * z.powi(3))).abs() < 1e-11);
        assert!((d(2) - (6.0 * z - 6.0 * z * z)).abs() < 1e-9);
        assert!((d(3) - (6.0 - 12.0 * z)).abs() < 1e-8);
        assert!((d(4) + 12.0).abs() < 1e-7);
    }
}
