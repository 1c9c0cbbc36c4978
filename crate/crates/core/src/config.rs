//! Run configuration: JSON schema, validation and config hash.
//!
//! Every section is optional and falls back to the default GaAs growth run.
//! Units are part of the field names.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decoupling::Mat2;
use crate::error::{Error, Result};
use crate::kernel::{KernelOptions, TargetParams};
use crate::physics::{GeometryParams, MaterialParams};
use crate::reference::{build_references, plan_flat_output, FlatOutputTrajectory, ReferenceBundle, ScenarioConfig};
use crate::sim::SimConfig;
use crate::synthesis::SynthesisOptions;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Gains {
    /// Closed-loop matrix of the ODE state; must be Hurwitz.
    pub f_bar_per_s: Mat2,
    pub mu_1_per_s: f64,
    pub mu_2_per_s: f64,
}

impl Default for Gains {
    fn default() -> Self {
        let s = SynthesisOptions::default();
        Gains { f_bar_per_s: s.f_bar, mu_1_per_s: s.target.mu_1_per_s, mu_2_per_s: s.target.mu_2_per_s }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    /// Truncation order of the power series.
    pub truncation: usize,
    /// Time step of the stored reference samples.
    pub reference_dt_s: f64,
    /// Nodes of the controller and kernel grid per phase.
    pub controller_nodes: usize,
    pub table_dt_s: f64,
    pub kernel_snapshots: usize,
    pub kernel_refine: usize,
    pub kernel_tolerance: f64,
    pub kernel_max_iterations: usize,
    pub literal_diagonal: bool,
    pub lambda_equal_tolerance: f64,
    pub divergence_j_min: usize,
    pub divergence_threshold: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        let s = SynthesisOptions::default();
        Numerics {
            truncation: s.truncation,
            reference_dt_s: 10.0,
            controller_nodes: s.kernel.n_sigma,
            table_dt_s: s.table_dt_s,
            kernel_snapshots: s.n_snapshots,
            kernel_refine: s.kernel.refine,
            kernel_tolerance: s.kernel.tolerance,
            kernel_max_iterations: s.kernel.max_iterations,
            literal_diagonal: s.kernel.literal_diagonal,
            lambda_equal_tolerance: s.kernel.equal_tolerance,
            divergence_j_min: s.divergence_j_min,
            divergence_threshold: s.divergence_threshold,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub material: MaterialParams,
    pub geometry: GeometryParams,
    pub scenario: ScenarioConfig,
    pub gains: Gains,
    pub numerics: Numerics,
    pub simulation: SimConfig,
    /// Not part of the config hash.
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            material: MaterialParams::gaas(),
            geometry: GeometryParams::default(),
            scenario: ScenarioConfig::vgf_default(),
            gains: Gains::default(),
            numerics: Numerics::default(),
            simulation: SimConfig::default(),
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Positivity, grid consistency, Hurwitz `F_bar`, `mu_i > 0` and the
    /// planned interface staying inside the ampoule.
    pub fn validate(&self) -> Result<()> {
        self.material.validate()?;
        self.geometry.validate()?;
        let sc = &self.scenario;
        if !(sc.duration_s > 0.0 && sc.seed_length_m > 0.0 && sc.gradient_setpoint_k_per_m > 0.0) {
            return Err(Error::Config("scenario duration, seed length and gradient setpoint must be positive".into()));
        }
        let nm = &self.numerics;
        if !(nm.reference_dt_s > 0.0) || nm.reference_dt_s > sc.duration_s {
            return Err(Error::Config(format!("reference_dt_s {} must lie in (0, duration]", nm.reference_dt_s)));
        }
        if !(nm.kernel_tolerance > 0.0) || nm.kernel_max_iterations == 0 {
            return Err(Error::Config("kernel tolerance and iteration limit must be positive".into()));
        }
        self.synthesis_options().validate()?;
        self.simulation.validate()?;
        self.plan()?;
        Ok(())
    }

    pub fn synthesis_options(&self) -> SynthesisOptions {
        let nm = &self.numerics;
        SynthesisOptions {
            truncation: nm.truncation,
            f_bar: self.gains.f_bar_per_s,
            target: TargetParams { mu_1_per_s: self.gains.mu_1_per_s, mu_2_per_s: self.gains.mu_2_per_s },
            table_dt_s: nm.table_dt_s,
            n_snapshots: nm.kernel_snapshots,
            kernel: KernelOptions {
                n_sigma: nm.controller_nodes,
                refine: nm.kernel_refine,
                tolerance: nm.kernel_tolerance,
                max_iterations: nm.kernel_max_iterations,
                literal_diagonal: nm.literal_diagonal,
                equal_tolerance: nm.lambda_equal_tolerance,
            },
            divergence_j_min: nm.divergence_j_min,
            divergence_threshold: nm.divergence_threshold,
        }
    }

    pub fn plan(&self) -> Result<FlatOutputTrajectory> {
        plan_flat_output(&self.scenario, &self.geometry)
    }

    pub fn build_references(&self) -> Result<ReferenceBundle> {
        let flat = self.plan()?;
        build_references(
            &flat,
            &self.material,
            &self.geometry,
            self.numerics.controller_nodes,
            self.numerics.reference_dt_s,
            self.numerics.truncation,
        )
    }

    /// SHA-256 of the canonical JSON without the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let value = serde_json::to_value(&c).expect("config serializes");
        let digest = Sha256::digest(serde_json::to_vec(&value).expect("value serializes"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
