//! Small numerical kernels shared by the simulator and the synthesis code.

/// Solve a tridiagonal system with the Thomas algorithm.
///
/// `lower[0]` and `upper[n - 1]` are ignored. Returns `None` on a zero pivot.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = rhs.len();
    debug_assert!(lower.len() == n && diag.len() == n && upper.len() == n);
    if n == 0 {
        return Some(Vec::new());
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    if diag[0] == 0.0 {
        return None;
    }
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let den = diag[i] - lower[i] * c[i - 1];
        if den == 0.0 || !den.is_finite() {
            return None;
        }
        c[i] = upper[i] / den;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / den;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    Some(x)
}

/// Equidistant nodes on `[0, 1]`.
pub fn unit_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

/// Local cubic (4-point Lagrange) interpolation of samples on a uniform unit grid.
pub fn cubic_interp_unit(values: &[f64], x: f64) -> f64 {
    let n = values.len();
    let h = 1.0 / (n - 1) as f64;
    let s = (x / h).clamp(0.0, (n - 1) as f64);
    let i = (s.floor() as usize).min(n - 2);
    let start = i.saturating_sub(1).min(n.saturating_sub(4));
    let xs: Vec<f64> = (start..start + 4.min(n)).map(|k| k as f64).collect();
    let mut acc = 0.0;
    for (a, &xa) in xs.iter().enumerate() {
        let mut w = 1.0;
        for (b, &xb) in xs.iter().enumerate() {
            if a != b {
                w *= (s - xb) / (xa - xb);
            }
        }
        acc += w * values[start + a];
    }
    acc
}

/// Resample a field given on a uniform unit grid to another uniform unit grid.
pub fn resample_unit(values: &[f64], n_out: usize) -> Vec<f64> {
    if values.len() == n_out {
        return values.to_vec();
    }
    unit_grid(n_out)
        .into_iter()
        .map(|x| cubic_interp_unit(values, x))
        .collect()
}

/// Second-order one-sided derivative at the left end of a uniform grid.
pub fn d_left(values: &[f64], h: f64) -> f64 {
    (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h)
}

/// Second-order one-sided derivative at the right end of a uniform grid.
pub fn d_right(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * h)
}

/// Trapezoidal rule for samples with spacing `h`.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    h * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1]))
}

/// Cumulative composite Simpson integral on a uniform grid (trapezoid-corrected
/// for odd panels), starting at zero.
pub fn cumulative_simpson(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    for i in 1..n {
        if i % 2 == 0 {
            out[i] = out[i - 2] + h / 3.0 * (values[i - 2] + 4.0 * values[i - 1] + values[i]);
        } else if i == 1 {
            // quadratic through the first three nodes
            let f0 = values[0];
            let f1 = values[1];
            let f2 = if n > 2 { values[2] } else { values[1] };
            out[1] = h / 12.0 * (5.0 * f0 + 8.0 * f1 - f2);
        } else {
            let (a, b, c) = (values[i - 2], values[i - 1], values[i]);
            out[i] = out[i - 1] + h / 12.0 * (-a + 8.0 * b + 5.0 * c);
        }
    }
    out
}

const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// Composite 8-point Gauss-Legendre quadrature of `f` over `[a, b]`.
pub fn gauss_legendre<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
            acc += w * f(mid + 0.5 * h * x);
        }
    }
    0.5 * h * acc
}

/// Cubic Hermite interpolation between `(t0, y0, dy0)` and `(t1, y1, dy1)`.
pub fn hermite(t0: f64, y0: f64, dy0: f64, t1: f64, y1: f64, dy1: f64, t: f64) -> f64 {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    h00 * y0 + h10 * h * dy0 + h01 * y1 + h11 * h * dy1
}

/// Locate `t` on a uniform time grid: returns the left index and the fraction.
pub fn locate(t0: f64, dt: f64, n: usize, t: f64) -> (usize, f64) {
    if n < 2 {
        return (0, 0.0);
    }
    let s = ((t - t0) / dt).clamp(0.0, (n - 1) as f64);
    let i = (s.floor() as usize).min(n - 2);
    (i, s - i as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_solves_laplacian() {
        let n = 6;
        let lower = vec![-1.0; n];
        let upper = vec![-1.0; n];
        let diag = vec![2.0; n];
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let rhs: Vec<f64> = (0..n)
            .map(|i| {
                let l = if i > 0 { x_true[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x_true[i + 1] } else { 0.0 };
                2.0 * x_true[i] - l - r
            })
            .collect();
        let x = solve_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
        for i in 0..n {
            assert!((x[i] - x_true[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cubic_interp_is_exact_for_cubics() {
        let f = |x: f64| 1.0 - 2.0 * x + 3.0 * x * x * x;
        let vals: Vec<f64> = unit_grid(11).into_iter().map(f).collect();
        for k in 0..50 {
            let x = k as f64 / 49.0;
            assert!((cubic_interp_unit(&vals, x) - f(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn one_sided_differences_exact_for_quadratics() {
        let h = 0.1;
        let v: Vec<f64> = (0..5).map(|i| { let x = i as f64 * h; 2.0 + x - 3.0 * x * x }).collect();
        assert!((d_left(&v, h) - 1.0).abs() < 1e-12);
        assert!((d_right(&v, h) - (1.0 - 6.0 * 0.4)).abs() < 1e-12);
    }

    #[test]
    fn simpson_and_gauss_integrate_polynomials() {
        let h = 0.05;
        let v: Vec<f64> = (0..21).map(|i| (i as f64 * h).powi(2)).collect();
        let c = cumulative_simpson(&v, h);
        for (i, ci) in c.iter().enumerate() {
            let x = i as f64 * h;
            assert!((ci - x.powi(3) / 3.0).abs() < 1e-14, "i={i}");
        }
        let g = gauss_legendre(|x| x.powi(7), 0.0, 2.0, 3);
        assert!((g - 32.0).abs() < 1e-11);
    }

    #[test]
    fn hermite_reproduces_cubics() {
        let f = |t: f64| t * t * t - t;
        let df = |t: f64| 3.0 * t * t - 1.0;
        let v = hermite(1.0, f(1.0), df(1.0), 2.0, f(2.0), df(2.0), 1.3);
        assert!((v - f(1.3)).abs() < 1e-12);
    }
}
