pub mod artifact;
pub mod cli;
pub mod config;
pub mod control;
pub mod decoupling;
pub mod error;
pub mod gevrey;
pub mod jet;
pub mod kernel;
pub mod linearization;
pub mod numerics;
pub mod physics;
pub mod reference;
pub mod sim;
pub mod synthesis;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    pub struct Overview;
    #[doc = include_str!("../../../book/src/planning.md")]
    pub struct Planning;
    #[doc = include_str!("../../../book/src/synthesis.md")]
    pub struct Synthesis;
    #[doc = include_str!("../../../book/src/simulation.md")]
    pub struct Simulation;
    #[doc = include_str!("../../../book/src/artifacts.md")]
    pub struct Artifacts;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
