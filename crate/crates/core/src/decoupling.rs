//! Decoupling of the interface ODE from the PDE.
//!
//! `w~ = w - N(sigma, t) x` with `N = sum_j n_j(t) sigma^j` solving
//!
//! ```text
//! dN/dt = Lambda N'' + A N - N F_bar - C K + R,   N(0) = 0,   N'(0) = -K.
//! ```
//!
//! Comparing powers of sigma gives
//! `(j+2)(j+1) Lambda n_{j+2} = dn_j/dt - sum_m A_{j-m} n_m + n_j F_bar + C_j K - R_j`,
//! which is solved row by row on jets, so `dn_j/dt` is exact. The Taylor-scaled
//! coefficients `L_j = j! n_j` are exposed for reporting.

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::linearization::{jet_const, jet_zero, mat_mul, mat_sub, mat_values, ExtendedSystemMatrices, JetMat};

pub type Mat2 = [[f64; 2]; 2];

pub fn mat2_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let e = |i: usize, j: usize| a[i][0] * b[0][j] + a[i][1] * b[1][j];
    [[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]]
}

pub fn mat2_vec(a: &Mat2, x: [f64; 2]) -> [f64; 2] {
    [a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]]
}

pub fn mat2_norm(a: &Mat2) -> f64 {
    a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

/// Eigenvalues of a real 2x2 matrix as `(re, im)` pairs.
pub fn eig2(a: &Mat2) -> [(f64, f64); 2] {
    let tr = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let disc = 0.25 * tr * tr - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        [(0.5 * tr + s, 0.0), (0.5 * tr - s, 0.0)]
    } else {
        let s = (-disc).sqrt();
        [(0.5 * tr, s), (0.5 * tr, -s)]
    }
}

pub fn check_hurwitz(f_bar: &Mat2) -> Result<()> {
    let eig = eig2(f_bar);
    if eig.iter().all(|(re, _)| *re < 0.0) {
        Ok(())
    } else {
        Err(Error::Config(format!("F_bar = {f_bar:?} is not Hurwitz (eigenvalues {eig:?})")))
    }
}

fn const_mat(m: &Mat2) -> JetMat {
    [[jet_const(m[0][0]), jet_const(m[0][1])], [jet_const(m[1][0]), jet_const(m[1][1])]]
}

#[derive(Clone, Debug)]
pub struct OdeGain {
    pub t: f64,
    pub k: JetMat,
    pub f_bar: Mat2,
}

impl OdeGain {
    pub fn values(&self) -> Mat2 {
        mat_values(&self.k)
    }
}

/// `K = S^-1 (F - F_bar)`, so that `F - S K = F_bar`.
pub fn choose_gain(m: &ExtendedSystemMatrices, f_bar: &Mat2) -> Result<OdeGain> {
    check_hurwitz(f_bar)?;
    let s_inv = m.s_inverse()?;
    let k = mat_mul(&s_inv, &mat_sub(&m.f, &const_mat(f_bar)));
    Ok(OdeGain { t: m.t, k, f_bar: *f_bar })
}

#[derive(Clone, Debug)]
pub struct DecouplingSolution {
    pub t: f64,
    /// `n_j`, the sigma^j coefficients of `N`.
    pub n: Vec<JetMat>,
    pub gain: OdeGain,
}

fn entry_eval(n: &[Mat2], i: usize, j: usize, sigma: f64) -> f64 {
    n.iter().rev().fold(0.0, |acc, m| acc * sigma + m[i][j])
}

impl DecouplingSolution {
    pub fn truncation(&self) -> usize {
        self.n.len() - 1
    }

    pub fn coeff_values(&self) -> Vec<Mat2> {
        self.n.iter().map(mat_values).collect()
    }

    /// Taylor-scaled coefficient `L_j`.
    pub fn l(&self, j: usize) -> Mat2 {
        let f: f64 = (1..=j).map(|k| k as f64).product();
        let v = mat_values(&self.n[j]);
        [[v[0][0] * f, v[0][1] * f], [v[1][0] * f, v[1][1] * f]]
    }

    fn eval_deriv(&self, sigma: f64, order: usize) -> Mat2 {
        let mut c = self.coeff_values();
        for _ in 0..order {
            c = (1..c.len())
                .map(|p| {
                    let s = p as f64;
                    [[c[p][0][0] * s, c[p][0][1] * s], [c[p][1][0] * s, c[p][1][1] * s]]
                })
                .collect();
        }
        [[entry_eval(&c, 0, 0, sigma), entry_eval(&c, 0, 1, sigma)], [
            entry_eval(&c, 1, 0, sigma),
            entry_eval(&c, 1, 1, sigma),
        ]]
    }

    pub fn n_at(&self, sigma: f64) -> Mat2 {
        self.eval_deriv(sigma, 0)
    }

    pub fn dn_at(&self, sigma: f64) -> Mat2 {
        self.eval_deriv(sigma, 1)
    }

    pub fn ddn_at(&self, sigma: f64) -> Mat2 {
        self.eval_deriv(sigma, 2)
    }

    /// `C_bar(sigma) = C(sigma) - N(sigma) S`.
    pub fn c_bar(&self, m: &ExtendedSystemMatrices, sigma: f64) -> Mat2 {
        let c = crate::linearization::series_mat_eval(&m.c, sigma);
        let ns = mat2_mul(&self.n_at(sigma), &m.s_values());
        [[c[0][0] - ns[0][0], c[0][1] - ns[0][1]], [c[1][0] - ns[1][0], c[1][1] - ns[1][1]]]
    }

    /// `P_bar = P + B N(1) - N'(1)`.
    pub fn p_bar(&self, m: &ExtendedSystemMatrices) -> Mat2 {
        let p = mat_values(&m.p);
        let n1 = self.n_at(1.0);
        let dn1 = self.dn_at(1.0);
        let b = [m.b[0].value(), m.b[1].value()];
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = p[i][j] + b[i] * n1[i][j] - dn1[i][j];
            }
        }
        out
    }

    /// Shortest time jet among the coefficients.
    pub fn time_len(&self) -> usize {
        self.n.iter().flatten().flatten().map(Jet::len).min().unwrap_or(0)
    }
}

/// Solve the sigma recursion up to `truncation`.
pub fn solve_decoupling(m: &ExtendedSystemMatrices, gain: &OdeGain, truncation: usize) -> Result<DecouplingSolution> {
    let avail = m.degree();
    if truncation > avail + 2 {
        return Err(Error::Synthesis(format!(
            "decoupling order {truncation} needs coefficient series of degree {}, only {avail} available",
            truncation - 2
        )));
    }
    let f_bar = const_mat(&gain.f_bar);
    let zero: JetMat = [[jet_zero(), jet_zero()], [jet_zero(), jet_zero()]];
    let mut n: Vec<JetMat> = vec![zero.clone(), gain.k.clone().map(|row| row.map(|e| e.scale(-1.0)))];
    let lam_inv = [m.lambda[0].recip(), m.lambda[1].recip()];
    for j in 0..truncation.saturating_sub(1) {
        let mut acc: JetMat = n[j].clone().map(|row| row.map(|e| e.dt()));
        for mm in 0..=j {
            for i in 0..2 {
                let a = &m.a[i].coeffs[j - mm];
                for c in 0..2 {
                    acc[i][c] = &acc[i][c] - &(a * &n[mm][i][c]);
                }
            }
        }
        let nf = mat_mul(&n[j], &f_bar);
        let cj: JetMat = [
            [m.c[0][0].coeffs[j].clone(), m.c[0][1].coeffs[j].clone()],
            [m.c[1][0].coeffs[j].clone(), m.c[1][1].coeffs[j].clone()],
        ];
        let ck = mat_mul(&cj, &gain.k);
        let scale = 1.0 / ((j + 2) as f64 * (j + 1) as f64);
        let next: JetMat = std::array::from_fn(|i| {
            std::array::from_fn(|c| {
                let rj = &m.r[i][c].coeffs[j];
                let v = &(&(&acc[i][c] + &nf[i][c]) + &ck[i][c]) - rj;
                (&v * &lam_inv[i]).scale(scale)
            })
        });
        if next.iter().flatten().any(|e| e.is_empty()) {
            return Err(Error::Synthesis(format!(
                "time-derivative information exhausted at decoupling order {}",
                j + 2
            )));
        }
        n.push(next);
    }
    n.truncate(truncation + 1);
    Ok(DecouplingSolution { t: m.t, n, gain: gain.clone() })
}

/// Ratio guard on `|L_{j+2}| / (|L_j| + eps)` averaged over the samples, for
/// `j >= j_min`.
pub fn divergence_ratios(solutions: &[DecouplingSolution], j_min: usize) -> Vec<(usize, f64)> {
    let Some(first) = solutions.first() else { return Vec::new() };
    let jmax = first.truncation();
    let scale = solutions
        .iter()
        .flat_map(|s| (0..=jmax).map(move |j| mat2_norm(&s.l(j))))
        .fold(0.0, f64::max);
    let eps = 1e-12 * scale.max(f64::MIN_POSITIVE);
    (j_min..=jmax.saturating_sub(2))
        .map(|j| {
            let mean = solutions
                .iter()
                .map(|s| mat2_norm(&s.l(j + 2)) / (mat2_norm(&s.l(j)) + eps))
                .sum::<f64>()
                / solutions.len() as f64;
            (j, mean)
        })
        .collect()
}

pub fn check_divergence(solutions: &[DecouplingSolution], j_min: usize, threshold: f64) -> Result<()> {
    for (j, ratio) in divergence_ratios(solutions, j_min) {
        if !(ratio < threshold) {
            return Err(Error::Divergence { index: j, ratio });
        }
    }
    Ok(())
}

/// `w~ = w - N x` on a uniform grid.
pub fn apply_decoupling(w: &[Vec<f64>; 2], x: [f64; 2], sol: &DecouplingSolution) -> [Vec<f64>; 2] {
    shift(w, x, sol, -1.0)
}

pub fn invert_decoupling(w_tilde: &[Vec<f64>; 2], x: [f64; 2], sol: &DecouplingSolution) -> [Vec<f64>; 2] {
    shift(w_tilde, x, sol, 1.0)
}

fn shift(w: &[Vec<f64>; 2], x: [f64; 2], sol: &DecouplingSolution, sign: f64) -> [Vec<f64>; 2] {
    let n = w[0].len();
    let mut out = w.clone();
    for k in 0..n {
        let nx = mat2_vec(&sol.n_at(k as f64 / (n - 1) as f64), x);
        out[0][k] += sign * nx[0];
        out[1][k] += sign * nx[1];
    }
    out
}
