//! Experiment configuration: TOML files plus CLI overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::PathKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    AgpSweep,
    NcBondProfile,
    GapScan,
    GapTraversal,
    CriticalPrep,
    Combinatorial,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::AgpSweep => "agp-sweep",
            ExperimentKind::NcBondProfile => "nc-bond-profile",
            ExperimentKind::GapScan => "gap-scan",
            ExperimentKind::GapTraversal => "gap-traversal",
            ExperimentKind::CriticalPrep => "critical-prep",
            ExperimentKind::Combinatorial => "combinatorial",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "agp-sweep" => Some(ExperimentKind::AgpSweep),
            "nc-bond-profile" | "nc-profile" => Some(ExperimentKind::NcBondProfile),
            "gap-scan" => Some(ExperimentKind::GapScan),
            "gap-traversal" => Some(ExperimentKind::GapTraversal),
            "critical-prep" => Some(ExperimentKind::CriticalPrep),
            "combinatorial" => Some(ExperimentKind::Combinatorial),
            _ => None,
        }
    }
}

fn default_threads() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Chain length.
    pub n: usize,
    /// Master seed; per-instance seeds derive from it explicitly.
    pub seed: u64,
    #[serde(default = "default_threads")]
    pub threads: usize,

    /// Transverse field of the gap-traversal family.
    pub gstar: Option<f64>,
    /// Total adiabatic time `T`.
    pub total_time: Option<f64>,
    /// Slices per unit time `S`.
    pub slices_per_unit: Option<f64>,
    /// Chunk count `M`.
    pub chunks: Option<usize>,
    /// Circuit layers per chunk `L`.
    pub layers: Option<usize>,
    /// Adiabatic path.
    pub path: Option<PathKind>,
    /// Variational MPO bond dimensions.
    pub chi: Option<Vec<usize>>,
    /// Regularization grid.
    pub eta: Option<Vec<f64>>,
    /// AGP sweep count per solve.
    pub agp_sweeps: Option<usize>,
    /// Trotter layer count `R`.
    pub trotter_layers: Option<usize>,
    /// Trotter baseline total-time scan.
    pub trotter_time_scan: Option<Vec<f64>>,
    /// L-BFGS iteration caps `Q` to scan.
    pub lbfgs_iters: Option<Vec<usize>>,
    /// Lambda grid points for gap scans.
    pub grid_points: Option<usize>,
    /// Nested-commutator orders.
    pub nc_orders: Option<Vec<usize>>,
    /// Random instance count (combinatorial).
    pub instances: Option<usize>,
    /// MPS bond cap for circuit optimization.
    pub max_bond: Option<usize>,
    /// Truncation cutoff.
    pub cutoff: Option<f64>,
    /// lambda value for single-point experiments (agp-sweep).
    pub lambda: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Serde(format!("config: {e}")))
    }

    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serde(format!("config: {e}")))
    }

    fn need<T: Clone>(&self, field: &Option<T>, name: &str) -> Result<T> {
        field.clone().ok_or_else(|| {
            Error::InvalidArgument(format!(
                "config for {} requires `{name}`",
                self.experiment.as_str()
            ))
        })
    }

    pub fn require_total_time(&self) -> Result<f64> {
        self.need(&self.total_time, "total_time")
    }

    pub fn require_slices(&self) -> Result<f64> {
        self.need(&self.slices_per_unit, "slices_per_unit")
    }

    pub fn require_chi(&self) -> Result<Vec<usize>> {
        self.need(&self.chi, "chi")
    }

    pub fn require_eta(&self) -> Result<Vec<f64>> {
        self.need(&self.eta, "eta")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidArgument("config: n must be >= 1".into()));
        }
        if self.threads < 1 {
            return Err(Error::InvalidArgument("config: threads must be >= 1".into()));
        }
        match self.experiment {
            ExperimentKind::AgpSweep => {
                self.require_chi()?;
                self.require_eta()?;
            }
            ExperimentKind::NcBondProfile => {
                self.need(&self.nc_orders, "nc_orders")?;
            }
            ExperimentKind::GapScan => {
                self.need(&self.gstar, "gstar")?;
                self.need(&self.grid_points, "grid_points")?;
            }
            ExperimentKind::GapTraversal => {
                self.need(&self.gstar, "gstar")?;
                self.require_total_time()?;
                self.require_slices()?;
                self.need(&self.chunks, "chunks")?;
                self.need(&self.layers, "layers")?;
                self.require_chi()?;
                self.need(&self.trotter_layers, "trotter_layers")?;
            }
            ExperimentKind::CriticalPrep => {
                self.require_total_time()?;
                self.require_slices()?;
                self.need(&self.layers, "layers")?;
                self.need(&self.lbfgs_iters, "lbfgs_iters")?;
            }
            ExperimentKind::Combinatorial => {
                self.require_total_time()?;
                self.need(&self.instances, "instances")?;
                self.need(&self.chunks, "chunks")?;
                self.need(&self.layers, "layers")?;
                self.need(&self.trotter_time_scan, "trotter_time_scan")?;
            }
        }
        Ok(())
    }

    /// Stable 64-bit hash of the canonical TOML form, for provenance rows.
    pub fn hash(&self) -> Result<String> {
        let text = self.to_toml()?;
        let mut h: u64 = 0xcbf29ce484222325;
        for b in text.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        Ok(format!("{h:016x}"))
    }
}
