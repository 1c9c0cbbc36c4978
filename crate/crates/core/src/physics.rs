//! Plant model: two heat equations on front-fixed domains coupled through the
//! Stefan condition at the solid/liquid interface.
//!
//! Phase 1 (crystal) occupies `[Gamma_1, gamma]`, phase 2 (melt) occupies
//! `[gamma, Gamma_2]`. Both are mapped onto `sigma in [0, 1]` with `sigma = 0`
//! at the interface and `sigma = 1` at the heated boundary.
//!
//! The conductivity in the Neumann factor `q_i = beta_i (Gamma_i - gamma) / k_i`
//! carries the phase index; the boundary orientation factors are
//! `beta_1 = -1`, `beta_2 = +1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::d_left;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Crystal,
    Melt,
}

impl Phase {
    pub const BOTH: [Phase; 2] = [Phase::Crystal, Phase::Melt];

    pub fn index(self) -> usize {
        match self {
            Phase::Crystal => 0,
            Phase::Melt => 1,
        }
    }

    pub fn from_index(i: usize) -> Phase {
        if i == 0 {
            Phase::Crystal
        } else {
            Phase::Melt
        }
    }

    /// Sign of the boundary flux in the Neumann condition.
    pub fn beta(self) -> f64 {
        match self {
            Phase::Crystal => -1.0,
            Phase::Melt => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub alpha_1_m2_per_s: f64,
    pub alpha_2_m2_per_s: f64,
    pub k_1_w_per_m_k: f64,
    pub k_2_w_per_m_k: f64,
    pub rho_m_kg_per_m3: f64,
    pub q_star_j_per_kg: f64,
    pub t_m_kelvin: f64,
}

impl MaterialParams {
    /// Gallium arsenide, literature values. `alpha_i = k_i / (rho c_p,i)`.
    pub fn gaas() -> Self {
        let rho = 5710.0;
        let (k1, k2) = (7.1, 17.8);
        let (cp1, cp2) = (424.0, 434.0);
        MaterialParams {
            alpha_1_m2_per_s: k1 / (rho * cp1),
            alpha_2_m2_per_s: k2 / (rho * cp2),
            k_1_w_per_m_k: k1,
            k_2_w_per_m_k: k2,
            rho_m_kg_per_m3: rho,
            q_star_j_per_kg: 7.26e5,
            t_m_kelvin: 1511.0,
        }
    }

    pub fn alpha(&self, phase: Phase) -> f64 {
        match phase {
            Phase::Crystal => self.alpha_1_m2_per_s,
            Phase::Melt => self.alpha_2_m2_per_s,
        }
    }

    pub fn k(&self, phase: Phase) -> f64 {
        match phase {
            Phase::Crystal => self.k_1_w_per_m_k,
            Phase::Melt => self.k_2_w_per_m_k,
        }
    }

    /// Volumetric latent heat `rho q*` (J/m^3).
    pub fn latent(&self) -> f64 {
        self.rho_m_kg_per_m3 * self.q_star_j_per_kg
    }

    /// Volumetric heat capacity `k / alpha`.
    pub fn heat_capacity(&self, phase: Phase) -> f64 {
        self.k(phase) / self.alpha(phase)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.alpha_1_m2_per_s,
            self.alpha_2_m2_per_s,
            self.k_1_w_per_m_k,
            self.k_2_w_per_m_k,
            self.rho_m_kg_per_m3,
            self.q_star_j_per_kg,
            self.t_m_kelvin,
        ];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::Config("material parameters must be strictly positive".into()))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryParams {
    pub gamma_1_m: f64,
    pub gamma_2_m: f64,
}

impl Default for GeometryParams {
    fn default() -> Self {
        GeometryParams {
            gamma_1_m: 0.0,
            gamma_2_m: 0.45,
        }
    }
}

impl GeometryParams {
    pub fn boundary(&self, phase: Phase) -> f64 {
        match phase {
            Phase::Crystal => self.gamma_1_m,
            Phase::Melt => self.gamma_2_m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma_1_m < self.gamma_2_m {
            Ok(())
        } else {
            Err(Error::Config("Gamma_1 must lie below Gamma_2".into()))
        }
    }

    pub fn check_interface(&self, gamma: f64) -> Result<()> {
        if gamma > self.gamma_1_m && gamma < self.gamma_2_m && gamma.is_finite() {
            Ok(())
        } else {
            Err(Error::AssumptionViolation {
                gamma,
                lower: self.gamma_1_m,
                upper: self.gamma_2_m,
            })
        }
    }

    /// Signed extent `Gamma_i - gamma` of a phase.
    pub fn extent(&self, phase: Phase, gamma: f64) -> f64 {
        self.boundary(phase) - gamma
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterfaceState {
    pub gamma: f64,
    pub gamma_dot: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseField {
    pub phase: Phase,
    /// Temperatures at `N + 1` equidistant nodes of `sigma in [0, 1]`.
    pub values: Vec<f64>,
}

impl PhaseField {
    pub fn spacing(&self) -> f64 {
        1.0 / (self.values.len() - 1) as f64
    }

    /// Fixed-domain gradient at the interface.
    pub fn d_sigma_at_interface(&self) -> f64 {
        d_left(&self.values, self.spacing())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantState {
    pub fields: [PhaseField; 2],
    pub interface: InterfaceState,
    pub time: f64,
}

impl PlantState {
    pub fn field(&self, phase: Phase) -> &PhaseField {
        &self.fields[phase.index()]
    }

    pub fn nodes(&self) -> usize {
        self.fields[0].values.len()
    }

    /// Physical gradient `dT_i/dz` at the interface.
    pub fn interface_gradient(&self, phase: Phase, geometry: &GeometryParams) -> f64 {
        self.field(phase).d_sigma_at_interface() / geometry.extent(phase, self.interface.gamma)
    }

    /// Sensible heat relative to `T_m` per unit area, both phases (J/m^2).
    pub fn sensible_heat(&self, params: &MaterialParams, geometry: &GeometryParams) -> f64 {
        Phase::BOTH
            .iter()
            .map(|&p| {
                let f = self.field(p);
                let len = geometry.extent(p, self.interface.gamma).abs();
                let h = f.spacing() * len;
                let rel: Vec<f64> = f.values.iter().map(|v| v - params.t_m_kelvin).collect();
                params.heat_capacity(p) * crate::numerics::trapezoid(&rel, h)
            })
            .sum()
    }
}

/// `z -> sigma` for the given phase.
pub fn front_fix_map(z: f64, gamma: f64, phase: Phase, geometry: &GeometryParams) -> Result<f64> {
    geometry.check_interface(gamma)?;
    let b = geometry.boundary(phase);
    let (lo, hi) = if gamma < b { (gamma, b) } else { (b, gamma) };
    if !(z >= lo && z <= hi) {
        return Err(Error::Domain(format!(
            "z = {z} m outside the domain [{lo}, {hi}] of phase {phase:?}"
        )));
    }
    Ok((z - gamma) / (b - gamma))
}

/// `sigma -> z` for the given phase.
pub fn front_fix_inverse(sigma: f64, gamma: f64, phase: Phase, geometry: &GeometryParams) -> Result<f64> {
    geometry.check_interface(gamma)?;
    if !(0.0..=1.0).contains(&sigma) {
        return Err(Error::Domain(format!("sigma = {sigma} outside [0, 1]")));
    }
    Ok(gamma + sigma * (geometry.boundary(phase) - gamma))
}

/// Interface velocity from the Stefan condition.
pub fn stefan_velocity(grad_1: f64, grad_2: f64, params: &MaterialParams) -> f64 {
    (params.k_1_w_per_m_k * grad_1 - params.k_2_w_per_m_k * grad_2) / params.latent()
}

/// Fixed-domain diffusion coefficient `alpha_i / (Gamma_i - gamma)^2`.
pub fn lambda_bar(phase: Phase, gamma: f64, params: &MaterialParams, geometry: &GeometryParams) -> f64 {
    let l = geometry.extent(phase, gamma);
    params.alpha(phase) / (l * l)
}

/// Convection coefficient `(1 - sigma) gamma_dot / (Gamma_i - gamma)`.
pub fn psi_bar(phase: Phase, sigma: f64, gamma: f64, gamma_dot: f64, geometry: &GeometryParams) -> f64 {
    (1.0 - sigma) * gamma_dot / geometry.extent(phase, gamma)
}

/// Neumann factor relating heater flux to `dT/dsigma(1)`.
pub fn q_bar(phase: Phase, gamma: f64, params: &MaterialParams, geometry: &GeometryParams) -> f64 {
    phase.beta() * geometry.extent(phase, gamma) / params.k(phase)
}

/// Interface factor: `gamma_dot = s_1 dT_1/dsigma(0) + s_2 dT_2/dsigma(0)`.
pub fn s_bar(phase: Phase, gamma: f64, params: &MaterialParams, geometry: &GeometryParams) -> f64 {
    -phase.beta() * params.k(phase) / (params.latent() * geometry.extent(phase, gamma))
}

/// Time derivatives of the front-fixed system.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedDomainRates {
    /// `dT_i/dt` on every node; the Dirichlet node carries zero.
    pub fields: [Vec<f64>; 2],
    pub gamma_dot: f64,
}

/// Right-hand side of the front-fixed model with central differences and a
/// ghost node for the Neumann boundary.
pub fn fixed_domain_rhs(
    state: &PlantState,
    inputs: [f64; 2],
    params: &MaterialParams,
    geometry: &GeometryParams,
) -> Result<FixedDomainRates> {
    let gamma = state.interface.gamma;
    geometry.check_interface(gamma)?;
    let gamma_dot = interface_velocity(state, params, geometry);
    let fields = Phase::BOTH.map(|p| {
        let f = state.field(p);
        let v = &f.values;
        let n = v.len() - 1;
        let h = f.spacing();
        let lam = lambda_bar(p, gamma, params, geometry);
        let ghost = v[n - 1] + 2.0 * h * q_bar(p, gamma, params, geometry) * inputs[p.index()];
        let mut out = vec![0.0; n + 1];
        for j in 1..=n {
            let right = if j == n { ghost } else { v[j + 1] };
            let sigma = j as f64 * h;
            let d2 = (v[j - 1] - 2.0 * v[j] + right) / (h * h);
            let d1 = (right - v[j - 1]) / (2.0 * h);
            out[j] = lam * d2 + psi_bar(p, sigma, gamma, gamma_dot, geometry) * d1;
        }
        out
    });
    Ok(FixedDomainRates { fields, gamma_dot })
}

/// Interface velocity of a state from its fixed-domain interface gradients.
pub fn interface_velocity(state: &PlantState, params: &MaterialParams, geometry: &GeometryParams) -> f64 {
    let gamma = state.interface.gamma;
    Phase::BOTH
        .iter()
        .map(|&p| s_bar(p, gamma, params, geometry) * state.field(p).d_sigma_at_interface())
        .sum()
}

/// Stationary solution with linear profiles and balanced interface fluxes.
pub fn steady_state(
    gamma: f64,
    grad_1: f64,
    nodes: usize,
    params: &MaterialParams,
    geometry: &GeometryParams,
) -> Result<PlantState> {
    geometry.check_interface(gamma)?;
    let grad_2 = params.k_1_w_per_m_k / params.k_2_w_per_m_k * grad_1;
    Ok(linear_state(gamma, [grad_1, grad_2], nodes, params, geometry, 0.0))
}

/// Linear temperature profiles through `T_m` at the interface with the given
/// physical gradients; the interface velocity follows from the Stefan condition.
pub fn linear_state(
    gamma: f64,
    grads: [f64; 2],
    nodes: usize,
    params: &MaterialParams,
    geometry: &GeometryParams,
    time: f64,
) -> PlantState {
    let fields = Phase::BOTH.map(|p| {
        let l = geometry.extent(p, gamma);
        PhaseField {
            phase: p,
            values: (0..nodes)
                .map(|j| {
                    let sigma = j as f64 / (nodes - 1) as f64;
                    params.t_m_kelvin + grads[p.index()] * sigma * l
                })
                .collect(),
        }
    });
    PlantState {
        fields,
        interface: InterfaceState {
            gamma,
            gamma_dot: stefan_velocity(grads[0], grads[1], params),
        },
        time,
    }
}
