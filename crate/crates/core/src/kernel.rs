//! Backstepping kernels of the Volterra transform `w_bar = w~ - int_0^sigma K w~`.
//!
//! With the time derivative neglected, each element of `K` solves
//!
//! ```text
//! lambda_i k_ss - lambda_j k_zz = (mu_i + a_j(z)) k ,   0 <= z <= s,
//! ```
//!
//! on the triangle. Off-diagonal elements vanish on `z = s` together with
//! their normal derivative. For `lambda_i < lambda_j` this forces `k_ij = 0`.
//! For `lambda_i > lambda_j` the element is zero above the characteristic
//! `z = c s`, `c = sqrt(lambda_j / lambda_i)`, and below it is a mixed problem
//! with the `z = 0` data `-T_c[C_bar]_ij / lambda_j` and a constant jump along
//! the characteristic. Diagonal elements follow the trace
//! `k_ii(s, s) = k_ii(0, 0) - (1 / (2 lambda_i)) int_0^s (a_i + mu_i)`.
//!
//! Each mixed problem is marched in characteristic coordinates; the coupling
//! through `T_c[C_bar]` is resolved by a fixed-point iteration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoupling::{mat2_vec, Mat2};
use crate::error::{Error, Result};
use crate::jet::{poly_eval, poly_integral};
use crate::decoupling::DecouplingSolution;
use crate::linearization::{lambda_ordering, ExtendedSystemMatrices, LambdaOrdering};
use crate::numerics::{gauss_legendre, trapezoid};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetParams {
    pub mu_1_per_s: f64,
    pub mu_2_per_s: f64,
}

impl TargetParams {
    pub fn mu(&self) -> [f64; 2] {
        [self.mu_1_per_s, self.mu_2_per_s]
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu_1_per_s > 0.0 && self.mu_2_per_s > 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!("target decay rates must be positive, got {:?}", self.mu())))
        }
    }
}

impl Default for TargetParams {
    fn default() -> Self {
        TargetParams { mu_1_per_s: 3e-4, mu_2_per_s: 3e-4 }
    }
}

/// Coefficients entering the kernel equations at one instant, as plain
/// polynomials in sigma.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelProblem {
    pub t: f64,
    pub lambda: [f64; 2],
    pub a: [Vec<f64>; 2],
    pub c_bar: [[Vec<f64>; 2]; 2],
}

impl KernelProblem {
    /// Coefficients of the decoupled system: `A` and `C_bar = C - N S`.
    pub fn from_decoupled(m: &ExtendedSystemMatrices, sol: &DecouplingSolution) -> KernelProblem {
        let s = m.s_values();
        let n = sol.coeff_values();
        let c_bar = std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                let mut c = m.c[i][j].values();
                let len = c.len().max(n.len());
                c.resize(len, 0.0);
                for (k, nk) in n.iter().enumerate() {
                    c[k] -= nk[i][0] * s[0][j] + nk[i][1] * s[1][j];
                }
                c
            })
        });
        KernelProblem { t: m.t, lambda: m.lambdas(), a: [m.a[0].values(), m.a[1].values()], c_bar }
    }

    pub fn c_bar_at(&self, s: f64) -> Mat2 {
        [[poly_eval(&self.c_bar[0][0], s), poly_eval(&self.c_bar[0][1], s)], [
            poly_eval(&self.c_bar[1][0], s),
            poly_eval(&self.c_bar[1][1], s),
        ]]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelOptions {
    pub n_sigma: usize,
    /// Characteristic-grid points per sigma step.
    pub refine: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Impose the `z = 0` condition only for off-diagonal elements; diagonal
    /// elements then vanish on `z = 0` and the diagonal of `D` is nonzero.
    pub literal_diagonal: bool,
    pub equal_tolerance: f64,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions {
            n_sigma: 101,
            refine: 2,
            tolerance: 1e-10,
            max_iterations: 200,
            literal_diagonal: false,
            equal_tolerance: 1e-6,
        }
    }
}

const GHOST: usize = 3;

/// Solution of `lambda (u_xx - u_yy) = f(y) u` on `0 <= y <= x <= x_max` with
/// `u(x, 0) = phi(x)` and `u(x, x) = psi(x)`, on a grid in `xi = x + y`,
/// `eta = x - y`.
#[derive(Clone, Debug)]
pub struct GoursatGrid {
    h: f64,
    m: usize,
    width: usize,
    u: Vec<f64>,
}

impl GoursatGrid {
    pub fn solve(
        x_max: f64,
        h: f64,
        lambda: f64,
        phi: impl Fn(f64) -> f64,
        psi: impl Fn(f64) -> f64,
        f: impl Fn(f64) -> f64,
    ) -> GoursatGrid {
        let m = (2.0 * x_max / h).ceil() as usize;
        let width = m + 1 + 2 * GHOST;
        let mut g = GoursatGrid { h, m, width, u: vec![f64::NAN; (m + 1) * width] };
        // node (i, j): xi = i h, eta = j h
        for i in 0..=m {
            g.set(i, 0, psi(i as f64 * h / 2.0));
            if 2 * i <= m {
                g.set(i, i as isize, phi(i as f64 * h));
            }
        }
        for j in 1..=m / 2 {
            for i in j + 1..=m - j {
                let y_c = (i - j) as f64 * h / 2.0;
                let kappa = h * h * f(y_c) / (16.0 * lambda);
                let (a, b, c) = (g.get(i - 1, j as isize), g.get(i, j as isize - 1), g.get(i - 1, j as isize - 1));
                let v = (a + b - c + kappa * (a + b + c)) / (1.0 - kappa);
                g.set(i, j as isize, v);
            }
        }
        g.fill_ghosts();
        g
    }

    fn idx(&self, i: usize, j: isize) -> usize {
        i * self.width + (j + GHOST as isize) as usize
    }

    fn set(&mut self, i: usize, j: isize, v: f64) {
        let k = self.idx(i, j);
        self.u[k] = v;
    }

    fn get(&self, i: usize, j: isize) -> f64 {
        self.u[self.idx(i, j)]
    }

    fn get_checked(&self, i: isize, j: isize) -> f64 {
        if i < 0 || i as usize > self.m || j < -(GHOST as isize) || j > (self.m + GHOST) as isize {
            return f64::NAN;
        }
        self.get(i as usize, j)
    }

    fn valid(&self, i: usize, j: isize) -> bool {
        j >= 0 && j <= i as isize && i as isize + j <= self.m as isize
    }

    /// Polynomial extrapolation along `eta` beyond `eta = 0` and `eta = xi`.
    fn fill_ghosts(&mut self) {
        for i in 0..=self.m {
            let top = (i as isize).min(self.m as isize - i as isize);
            if top < 0 {
                continue;
            }
            let below: Vec<f64> = (0..=top.min(3)).map(|j| self.get(i, j)).collect();
            for g in 1..=GHOST as isize {
                let v = extrapolate(&below, -g as f64);
                self.set(i, -g, v);
            }
            if top == i as isize {
                let above: Vec<f64> = (0..=top.min(3)).map(|k| self.get(i, top - k)).collect();
                for g in 1..=GHOST as isize {
                    let v = extrapolate(&above, -g as f64);
                    self.set(i, top + g, v);
                }
            }
        }
    }

    /// Value and first derivatives `(u, u_x, u_y)` by local bicubic
    /// interpolation in the characteristic coordinates.
    pub fn eval(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let xi = (x + y) / self.h;
        let eta = (x - y) / self.h;
        let ci = xi.floor() as isize - 1;
        let cj = eta.floor() as isize - 1;
        for shift in SHIFTS {
            let (i0, j0) = (ci + shift.0, cj + shift.1);
            let mut vals = [[0.0; 4]; 4];
            let mut ok = true;
            'outer: for a in 0..4 {
                for b in 0..4 {
                    let v = self.get_checked(i0 + a, j0 + b);
                    if !v.is_finite() {
                        ok = false;
                        break 'outer;
                    }
                    vals[a as usize][b as usize] = v;
                }
            }
            if !ok {
                continue;
            }
            let (wi, dwi) = lagrange4(xi - i0 as f64);
            let (wj, dwj) = lagrange4(eta - j0 as f64);
            let mut u = 0.0;
            let mut u_xi = 0.0;
            let mut u_eta = 0.0;
            for a in 0..4 {
                for b in 0..4 {
                    u += wi[a] * wj[b] * vals[a][b];
                    u_xi += dwi[a] * wj[b] * vals[a][b];
                    u_eta += wi[a] * dwj[b] * vals[a][b];
                }
            }
            u_xi /= self.h;
            u_eta /= self.h;
            return (u, u_xi + u_eta, u_xi - u_eta);
        }
        (f64::NAN, f64::NAN, f64::NAN)
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        self.eval(x, y).0
    }

    pub fn max_abs(&self) -> f64 {
        (0..=self.m)
            .flat_map(|i| (0..=i as isize).map(move |j| (i, j)))
            .filter(|&(i, j)| self.valid(i, j))
            .map(|(i, j)| self.get(i, j).abs())
            .fold(0.0, f64::max)
    }
}

const SHIFTS: [(isize, isize); 13] = [
    (0, 0),
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (-1, -1),
    (1, 1),
    (-1, 1),
    (1, -1),
    (-2, 0),
    (0, -2),
    (-2, -2),
    (-2, -1),
];

/// Weights and derivative weights of the cubic through nodes 0..3 at `s`.
fn lagrange4(s: f64) -> ([f64; 4], [f64; 4]) {
    let mut w = [0.0; 4];
    let mut dw = [0.0; 4];
    for a in 0..4 {
        let xa = a as f64;
        let mut num = 1.0;
        let mut den = 1.0;
        for b in 0..4 {
            if a != b {
                num *= s - b as f64;
                den *= xa - b as f64;
            }
        }
        w[a] = num / den;
        let mut d = 0.0;
        for skip in 0..4 {
            if skip == a {
                continue;
            }
            let mut p = 1.0;
            for b in 0..4 {
                if b != a && b != skip {
                    p *= s - b as f64;
                }
            }
            d += p;
        }
        dw[a] = d / den;
    }
    (w, dw)
}

/// Lagrange extrapolation of samples at `0, 1, ..` to `s`.
fn extrapolate(v: &[f64], s: f64) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for a in 0..n {
        let mut w = 1.0;
        for b in 0..n {
            if a != b {
                w *= (s - b as f64) / (a as f64 - b as f64);
            }
        }
        acc += w * v[a];
    }
    acc
}

#[derive(Clone, Debug)]
enum Element {
    Zero,
    /// Solution on the triangle with `x = sigma`.
    Diagonal(GoursatGrid),
    /// Nonzero below `zeta = c sigma`, `x = c sigma`.
    Lower(GoursatGrid, f64),
}

impl Element {
    fn value(&self, s: f64, z: f64) -> f64 {
        match self {
            Element::Zero => 0.0,
            Element::Diagonal(g) => g.value(s, z),
            Element::Lower(g, c) => {
                if z > c * s {
                    0.0
                } else {
                    g.value(c * s, z)
                }
            }
        }
    }

    /// `dk/dsigma` on the side of the discontinuity that contains `(s, z)`.
    fn d_sigma(&self, s: f64, z: f64) -> f64 {
        match self {
            Element::Zero => 0.0,
            Element::Diagonal(g) => g.eval(s, z).1,
            Element::Lower(g, c) => {
                if z > c * s {
                    0.0
                } else {
                    c * g.eval(c * s, z).1
                }
            }
        }
    }

    /// Upper end of the support in zeta at `s`.
    fn support(&self, s: f64) -> f64 {
        match self {
            Element::Zero => 0.0,
            Element::Diagonal(_) => s,
            Element::Lower(_, c) => c * s,
        }
    }
}

/// Kernel at one instant, sampled on the controller grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelSnapshot {
    pub t: f64,
    pub n_sigma: usize,
    pub lambda: [f64; 2],
    pub mu: [f64; 2],
    pub ordering: LambdaOrdering,
    /// `k_ij(sigma_a, zeta_b)` row-major in `(a, b)`, zero for `b > a`.
    pub k: [[Vec<f64>; 2]; 2],
    /// `dk_ij/dsigma (1, zeta_b)`.
    pub dk_dsigma_1: [[Vec<f64>; 2]; 2],
    /// `(c, J)` for a discontinuous element: zero above `zeta = c sigma`, jump `J`.
    pub jump: [[Option<(f64, f64)>; 2]; 2],
    /// Coupling matrix of the target system, `D_ij(sigma_a)`.
    pub d: [[Vec<f64>; 2]; 2],
    /// `T_c[C_bar]_ij(sigma_a)`.
    pub tc_c_bar: [[Vec<f64>; 2]; 2],
    pub iterations: usize,
    pub last_update: f64,
}

impl KernelSnapshot {
    pub fn spacing(&self) -> f64 {
        1.0 / (self.n_sigma - 1) as f64
    }

    pub fn k_at(&self, i: usize, j: usize, a: usize, b: usize) -> f64 {
        self.k[i][j][a * self.n_sigma + b]
    }

    pub fn k_matrix(&self, a: usize, b: usize) -> Mat2 {
        [[self.k_at(0, 0, a, b), self.k_at(0, 1, a, b)], [self.k_at(1, 0, a, b), self.k_at(1, 1, a, b)]]
    }

    /// `K(1, 1)`.
    pub fn k_end(&self) -> Mat2 {
        let n = self.n_sigma - 1;
        self.k_matrix(n, n)
    }

    pub fn d_matrix(&self, a: usize) -> Mat2 {
        [[self.d[0][0][a], self.d[0][1][a]], [self.d[1][0][a], self.d[1][1][a]]]
    }

    /// `w - int_0^sigma K(sigma, zeta) w(zeta) dzeta` with trapezoid weights.
    pub fn transform(&self, w: &[Vec<f64>; 2]) -> [Vec<f64>; 2] {
        let n = self.n_sigma;
        let h = self.spacing();
        let mut out = w.clone();
        for a in 1..n {
            for b in 0..=a {
                let wt = if b == 0 || b == a { 0.5 * h } else { h };
                let kw = mat2_vec(&self.k_matrix(a, b), [w[0][b], w[1][b]]);
                out[0][a] -= wt * kw[0];
                out[1][a] -= wt * kw[1];
            }
        }
        out
    }

    /// Inverse of [`Self::transform`] by forward substitution.
    pub fn inverse_transform(&self, v: &[Vec<f64>; 2]) -> [Vec<f64>; 2] {
        let n = self.n_sigma;
        let h = self.spacing();
        let mut w = [vec![0.0; n], vec![0.0; n]];
        w[0][0] = v[0][0];
        w[1][0] = v[1][0];
        for a in 1..n {
            let mut rhs = [v[0][a], v[1][a]];
            for b in 0..a {
                let wt = if b == 0 { 0.5 * h } else { h };
                let kw = mat2_vec(&self.k_matrix(a, b), [w[0][b], w[1][b]]);
                rhs[0] += wt * kw[0];
                rhs[1] += wt * kw[1];
            }
            let k = self.k_matrix(a, a);
            let m = [[1.0 - 0.5 * h * k[0][0], -0.5 * h * k[0][1]], [-0.5 * h * k[1][0], 1.0 - 0.5 * h * k[1][1]]];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            w[0][a] = (m[1][1] * rhs[0] - m[0][1] * rhs[1]) / det;
            w[1][a] = (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det;
        }
        w
    }

    pub fn traces(&self) -> KernelTraces {
        KernelTraces {
            t: self.t,
            dk_dsigma_1: self.dk_dsigma_1.clone(),
            k_end: self.k_end(),
            jump: self.jump,
        }
    }

    /// Diagonal trace `k_ii(sigma_a, sigma_a)`.
    pub fn diagonal_trace(&self, i: usize) -> Vec<f64> {
        (0..self.n_sigma).map(|a| self.k_at(i, i, a, a)).collect()
    }

    pub fn sup_norm(&self) -> f64 {
        self.k.iter().flatten().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Boundary data of the kernel used by the control law.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelTraces {
    pub t: f64,
    pub dk_dsigma_1: [[Vec<f64>; 2]; 2],
    pub k_end: Mat2,
    pub jump: [[Option<(f64, f64)>; 2]; 2],
}

impl KernelTraces {
    /// `int_0^1 dK/dsigma(1, z) w(z) dz + jump terms + K(1, 1) w(1)`.
    pub fn boundary_operator(&self, w: &[Vec<f64>; 2]) -> ([f64; 2], [f64; 2], [f64; 2]) {
        let n = w[0].len();
        let h = 1.0 / (n - 1) as f64;
        let mut integral = [0.0; 2];
        let mut jump = [0.0; 2];
        for i in 0..2 {
            for j in 0..2 {
                let prod: Vec<f64> = self.dk_dsigma_1[i][j].iter().zip(&w[j]).map(|(k, v)| k * v).collect();
                integral[i] += trapezoid(&prod, h);
                if let Some((c, jmp)) = self.jump[i][j] {
                    jump[i] += c * jmp * crate::numerics::cubic_interp_unit(&w[j], c);
                }
            }
        }
        let end = mat2_vec(&self.k_end, [w[0][n - 1], w[1][n - 1]]);
        (integral, jump, end)
    }
}

fn lerp_vec(a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect()
}

fn lerp_mat_vec(a: &[[Vec<f64>; 2]; 2], b: &[[Vec<f64>; 2]; 2], s: f64) -> [[Vec<f64>; 2]; 2] {
    std::array::from_fn(|i| std::array::from_fn(|j| lerp_vec(&a[i][j], &b[i][j], s)))
}

fn lerp_jump(a: Option<(f64, f64)>, b: Option<(f64, f64)>, s: f64) -> Option<(f64, f64)> {
    match (a, b) {
        (Some((c0, j0)), Some((c1, j1))) => Some((c0 + s * (c1 - c0), j0 + s * (j1 - j0))),
        (x, None) if s < 0.5 => x,
        (None, x) if s >= 0.5 => x,
        _ => None,
    }
}

/// Snapshots at increasing times, linearly interpolated in between.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelSet {
    pub snapshots: Vec<KernelSnapshot>,
}

impl KernelSet {
    fn bracket(&self, t: f64) -> (usize, usize, f64) {
        let n = self.snapshots.len();
        if n == 1 || t <= self.snapshots[0].t {
            return (0, 0, 0.0);
        }
        if t >= self.snapshots[n - 1].t {
            return (n - 1, n - 1, 0.0);
        }
        let k = self.snapshots.partition_point(|s| s.t <= t) - 1;
        let (a, b) = (&self.snapshots[k], &self.snapshots[k + 1]);
        (k, k + 1, (t - a.t) / (b.t - a.t))
    }

    pub fn at(&self, t: f64) -> KernelSnapshot {
        let (i0, i1, s) = self.bracket(t);
        let (a, b) = (&self.snapshots[i0], &self.snapshots[i1]);
        if i0 == i1 || s == 0.0 {
            return a.clone();
        }
        KernelSnapshot {
            t,
            n_sigma: a.n_sigma,
            lambda: [0, 1].map(|i| a.lambda[i] + s * (b.lambda[i] - a.lambda[i])),
            mu: a.mu,
            ordering: if s < 0.5 { a.ordering } else { b.ordering },
            k: lerp_mat_vec(&a.k, &b.k, s),
            dk_dsigma_1: lerp_mat_vec(&a.dk_dsigma_1, &b.dk_dsigma_1, s),
            jump: std::array::from_fn(|i| std::array::from_fn(|j| lerp_jump(a.jump[i][j], b.jump[i][j], s))),
            d: lerp_mat_vec(&a.d, &b.d, s),
            tc_c_bar: lerp_mat_vec(&a.tc_c_bar, &b.tc_c_bar, s),
            iterations: a.iterations.max(b.iterations),
            last_update: a.last_update.max(b.last_update),
        }
    }

    /// Last `count` nodes of the transform at `t`.
    pub fn transform_tail(&self, t: f64, w: &[Vec<f64>; 2], count: usize) -> [Vec<f64>; 2] {
        let (i0, i1, s) = self.bracket(t);
        let (a, b) = (&self.snapshots[i0], &self.snapshots[i1]);
        let n = a.n_sigma;
        let h = a.spacing();
        let mut out = [Vec::with_capacity(count), Vec::with_capacity(count)];
        for row in n - count..n {
            for i in 0..2 {
                let mut acc = w[i][row];
                for j in 0..2 {
                    for col in 0..=row {
                        let wt = if col == 0 || col == row { 0.5 * h } else { h };
                        let (ka, kb) = (a.k_at(i, j, row, col), b.k_at(i, j, row, col));
                        acc -= wt * (ka + s * (kb - ka)) * w[j][col];
                    }
                }
                out[i].push(acc);
            }
        }
        out
    }

    pub fn traces_at(&self, t: f64) -> KernelTraces {
        let (i0, i1, s) = self.bracket(t);
        let (a, b) = (&self.snapshots[i0], &self.snapshots[i1]);
        if i0 == i1 || s == 0.0 {
            return a.traces();
        }
        let (ka, kb) = (a.k_end(), b.k_end());
        KernelTraces {
            t,
            dk_dsigma_1: lerp_mat_vec(&a.dk_dsigma_1, &b.dk_dsigma_1, s),
            k_end: std::array::from_fn(|i| std::array::from_fn(|j| ka[i][j] + s * (kb[i][j] - ka[i][j]))),
            jump: std::array::from_fn(|i| std::array::from_fn(|j| lerp_jump(a.jump[i][j], b.jump[i][j], s))),
        }
    }
}

/// Snapshot times equidistant over `[0, duration]`.
pub fn snapshot_times(duration: f64, n_t: usize) -> Vec<f64> {
    if n_t <= 1 {
        return vec![0.0];
    }
    (0..n_t).map(|k| duration * k as f64 / (n_t - 1) as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Zero,
    Diagonal,
    Lower,
}

fn element_kinds(ordering: LambdaOrdering) -> [[Kind; 2]; 2] {
    match ordering {
        LambdaOrdering::MeltSlower => [[Kind::Diagonal, Kind::Lower], [Kind::Zero, Kind::Diagonal]],
        _ => [[Kind::Diagonal, Kind::Zero], [Kind::Lower, Kind::Diagonal]],
    }
}

/// Quasi-static kernel at one instant.
pub fn solve_kernel_quasistatic(
    problem: &KernelProblem,
    target: &TargetParams,
    options: &KernelOptions,
) -> Result<KernelSnapshot> {
    target.validate()?;
    let lambda = problem.lambda;
    if !(lambda[0] > 0.0 && lambda[1] > 0.0) {
        return Err(Error::Synthesis(format!("non-positive diffusion coefficients {lambda:?}")));
    }
    let ordering = lambda_ordering(lambda, options.equal_tolerance);
    if ordering == LambdaOrdering::Equal {
        log::warn!("nearly equal diffusion coefficients at t = {}, treating lambda_1 < lambda_2", problem.t);
    }
    let kinds = element_kinds(ordering);
    let mu = target.mu();
    let n = options.n_sigma;
    let delta = 1.0 / (n - 1) as f64;
    // fine sigma grid carrying the z = 0 data; extends 3 steps beyond sigma = 1
    let fine_step = delta / options.refine as f64;
    let n_fine = 3 * options.refine + (n - 1) * options.refine + 1;
    let fine: Vec<f64> = (0..n_fine).map(|k| k as f64 * fine_step).collect();
    let s_max = fine[n_fine - 1];

    let a_int: [Vec<f64>; 2] = [0, 1].map(|i| {
        let mut c = problem.a[i].clone();
        if c.is_empty() {
            c.push(0.0);
        }
        c[0] += mu[i];
        poly_integral(&c)
    });

    let mut tc: [[Vec<f64>; 2]; 2] =
        std::array::from_fn(|i| std::array::from_fn(|j| fine.iter().map(|&s| poly_eval(&problem.c_bar[i][j], s)).collect()));
    let scale = tc.iter().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);

    let build = |tc: &[[Vec<f64>; 2]; 2]| -> [[Element; 2]; 2] {
        std::array::from_fn(|i| {
            std::array::from_fn(|j| match kinds[i][j] {
                Kind::Zero => Element::Zero,
                Kind::Diagonal => {
                    let lam = lambda[i];
                    let data: Vec<f64> = if options.literal_diagonal {
                        vec![0.0; n_fine]
                    } else {
                        tc[i][i].iter().map(|v| -v / lam).collect()
                    };
                    let k00 = data[0];
                    let ai = &a_int[i];
                    let a_coef = &problem.a[j];
                    let g = GoursatGrid::solve(
                        s_max,
                        fine_step,
                        lam,
                        |x| sample_fine(&data, fine_step, x),
                        |x| k00 - poly_eval(ai, x) / (2.0 * lam),
                        |y| mu[i] + poly_eval(a_coef, y),
                    );
                    Element::Diagonal(g)
                }
                Kind::Lower => {
                    let lam = lambda[j];
                    let c = (lambda[j] / lambda[i]).sqrt();
                    let data: Vec<f64> = tc[i][j].iter().map(|v| -v / lam).collect();
                    let jump = data[0];
                    let a_coef = &problem.a[j];
                    let g = GoursatGrid::solve(
                        c * s_max,
                        c * fine_step,
                        lam,
                        |x| sample_fine(&data, fine_step, x / c),
                        |_| jump,
                        |y| mu[i] + poly_eval(a_coef, y),
                    );
                    Element::Lower(g, c)
                }
            })
        })
    };

    let mut elements = build(&tc);
    let mut iterations = 0;
    let mut update = f64::INFINITY;
    while iterations < options.max_iterations {
        iterations += 1;
        let next = tc_c_bar(problem, &elements, &fine);
        update = next
            .iter()
            .flatten()
            .zip(tc.iter().flatten())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
            / scale;
        tc = next;
        elements = build(&tc);
        if update < options.tolerance {
            break;
        }
    }
    if !(update < options.tolerance) {
        return Err(Error::Synthesis(format!(
            "kernel fixed point at t = {} not converged after {iterations} iterations (update {update:e}, |C_bar| {scale:e}, {n} nodes)",
            problem.t
        )));
    }

    let grid: Vec<f64> = (0..n).map(|a| a as f64 * delta).collect();
    let k: [[Vec<f64>; 2]; 2] = std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            let e = &elements[i][j];
            let mut v = vec![0.0; n * n];
            for a in 0..n {
                for b in 0..=a {
                    v[a * n + b] = e.value(grid[a], grid[b]);
                }
            }
            v
        })
    });
    let dk_dsigma_1 = std::array::from_fn(|i| std::array::from_fn(|j| grid.iter().map(|&z| elements[i][j].d_sigma(1.0, z)).collect()));
    let jump = std::array::from_fn(|i| {
        std::array::from_fn(|j| match &elements[i][j] {
            Element::Lower(_, c) => Some((*c, -tc[i][j][0] / lambda[j])),
            _ => None,
        })
    });
    let tc_grid: [[Vec<f64>; 2]; 2] =
        std::array::from_fn(|i| std::array::from_fn(|j| (0..n).map(|a| tc[i][j][a * options.refine]).collect()));
    let d = std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            let imposed = match kinds[i][j] {
                Kind::Zero => false,
                Kind::Lower => true,
                Kind::Diagonal => !options.literal_diagonal,
            };
            if imposed {
                vec![0.0; n]
            } else {
                tc_grid[i][j].iter().map(|v| -v).collect()
            }
        })
    });
    Ok(KernelSnapshot {
        t: problem.t,
        n_sigma: n,
        lambda,
        mu,
        ordering,
        k,
        dk_dsigma_1,
        jump,
        d,
        tc_c_bar: tc_grid,
        iterations,
        last_update: update,
    })
}

fn sample_fine(data: &[f64], step: f64, s: f64) -> f64 {
    let pos = s / step;
    let k = pos.round();
    if (pos - k).abs() < 1e-9 && (k as usize) < data.len() {
        return data[k as usize];
    }
    let n = data.len();
    let i = (pos.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    extrapolate(&data[i..i + 4], pos - i as f64)
}

/// `T_c[C_bar](s) = C_bar(s) - int_0^s K(s, z) C_bar(z) dz` on the fine grid.
fn tc_c_bar(problem: &KernelProblem, elements: &[[Element; 2]; 2], fine: &[f64]) -> [[Vec<f64>; 2]; 2] {
    let rows: Vec<Mat2> = fine
        .par_iter()
        .map(|&s| {
            let mut out = problem.c_bar_at(s);
            if s == 0.0 {
                return out;
            }
            for i in 0..2 {
                for m in 0..2 {
                    let e = &elements[i][m];
                    let top = e.support(s);
                    if top <= 0.0 {
                        continue;
                    }
                    for j in 0..2 {
                        let cj = &problem.c_bar[m][j];
                        out[i][j] -= gauss_legendre(|z| e.value(s, z) * poly_eval(cj, z), 0.0, top, 4);
                    }
                }
            }
            out
        })
        .collect();
    std::array::from_fn(|i| std::array::from_fn(|j| rows.iter().map(|r| r[i][j]).collect()))
}

pub fn build_kernel_set(problems: &[KernelProblem], target: &TargetParams, options: &KernelOptions) -> Result<KernelSet> {
    let snapshots = problems
        .par_iter()
        .map(|p| solve_kernel_quasistatic(p, target, options))
        .collect::<Result<Vec<_>>>()?;
    Ok(KernelSet { snapshots })
}

/// Interior residual of the stationary kernel PDE on the sampled grid,
/// relative to the largest term. Stencils crossing a discontinuity are skipped.
pub fn pde_residual(snap: &KernelSnapshot, problem: &KernelProblem) -> f64 {
    let n = snap.n_sigma;
    let h = snap.spacing();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            let jump = snap.jump[i][j];
            for a in 2..n - 1 {
                for b in 1..a.saturating_sub(1) {
                    let (s, z) = (a as f64 * h, b as f64 * h);
                    if let Some((c, _)) = jump {
                        if (z - c * s).abs() < 2.5 * h {
                            continue;
                        }
                    }
                    let k = |aa: usize, bb: usize| snap.k_at(i, j, aa, bb);
                    let kss = (k(a + 1, b) - 2.0 * k(a, b) + k(a - 1, b)) / (h * h);
                    let kzz = (k(a, b + 1) - 2.0 * k(a, b) + k(a, b - 1)) / (h * h);
                    let reac = (snap.mu[i] + poly_eval(&problem.a[j], z)) * k(a, b);
                    let terms = [snap.lambda[i] * kss, snap.lambda[j] * kzz, reac];
                    worst = worst.max((terms[0] - terms[1] - terms[2]).abs());
                    scale = scale.max(terms.iter().fold(0.0, |m, v| m.max(v.abs())));
                }
            }
        }
    }
    if scale == 0.0 {
        0.0
    } else {
        worst / scale
    }
}

/// Largest deviation of `k_ii(s, s) - k_ii(0, 0)` from `-(1/(2 lambda_i)) int_0^s (a_i + mu_i)`,
/// relative to the largest trace value.
pub fn trace_identity_error(snap: &KernelSnapshot, problem: &KernelProblem) -> f64 {
    let n = snap.n_sigma;
    let h = snap.spacing();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..2 {
        let mut c = problem.a[i].clone();
        if c.is_empty() {
            c.push(0.0);
        }
        c[0] += snap.mu[i];
        let int = poly_integral(&c);
        let k00 = snap.k_at(i, i, 0, 0);
        for a in 0..n {
            let s = a as f64 * h;
            let want = -poly_eval(&int, s) / (2.0 * snap.lambda[i]);
            let got = snap.k_at(i, i, a, a) - k00;
            worst = worst.max((got - want).abs());
            scale = scale.max(want.abs()).max(snap.k_at(i, i, a, a).abs());
        }
    }
    worst / scale.max(f64::MIN_POSITIVE)
}
