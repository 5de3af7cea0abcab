use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fsmatrix::OutputGrid;
use crate::measurement::{ControlGrid, DataMode, DetectorModel, MIN_PHASE_AVERAGE_POINTS};
use crate::quadrature::QuadratureGrid;
use crate::reconstruction::{
    AveragingOrder, PhaseAveraging, QuadratureParams, ReconstructOptions, RegularizationFilter,
};
use crate::state::{DensityOperatorFock, FieldScale, StateSpec};

/// Everything a run needs. Every key is optional in the file; unknown keys
/// are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub state: StateSpec,
    pub field_scale: FieldScale,
    pub control: ControlSpec,
    /// Samples per setting M (ignored for analytic datasets).
    pub samples: usize,
    pub seed: u64,
    pub detector: DetectorModel,
    pub mode: DataMode,
    pub filter: Option<RegularizationFilter>,
    pub quadrature: Option<QuadratureParams>,
    /// Largest z served by an empirical characteristic function.
    pub z_cap: Option<f64>,
    /// Reference phases φ_k; zeros when absent.
    pub phases: Option<Vec<f64>>,
    pub output_grid: Option<GridSpec>,
    pub phase_averaging: Option<PhaseAveraging>,
    pub bench: BenchSpec,
    pub outputs: OutputPaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            state: StateSpec::vacuum(2, 8),
            field_scale: FieldScale::default(),
            control: ControlSpec::default(),
            samples: 100_000,
            seed: 0,
            detector: DetectorModel::ideal(),
            mode: DataMode::Histogram,
            filter: None,
            quadrature: None,
            z_cap: None,
            phases: None,
            output_grid: None,
            phase_averaging: None,
            bench: BenchSpec::default(),
            outputs: OutputPaths::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Full,
    Relative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSpec {
    pub layout: Layout,
    /// Points per mixing-angle axis.
    pub n_alpha: usize,
    /// Points per ψ axis (full) or Δψ axis (relative).
    pub n_psi: usize,
    /// ψ₁ averaging points of the relative layout.
    pub n_average: usize,
    /// Half-width of the quadrature grid; sized from the state when absent.
    pub f_max: Option<f64>,
    /// Bins of the quadrature grid; 64 when absent.
    pub n_bins: Option<usize>,
}

impl Default for ControlSpec {
    fn default() -> Self {
        ControlSpec {
            layout: Layout::Full,
            n_alpha: 8,
            n_psi: 8,
            n_average: MIN_PHASE_AVERAGE_POINTS,
            f_max: None,
            n_bins: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    /// Same symmetric axes for every mode.
    Uniform {
        n_centers: usize,
        center_max: f64,
        n_offsets: usize,
        offset_max: f64,
    },
    Explicit(OutputGrid),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSize {
    pub n_centers: usize,
    pub n_offsets: usize,
    pub nodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSpec {
    pub sizes: Vec<BenchSize>,
    pub repeats: usize,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            sizes: vec![
                BenchSize {
                    n_centers: 9,
                    n_offsets: 5,
                    nodes: 64,
                },
                BenchSize {
                    n_centers: 9,
                    n_offsets: 5,
                    nodes: 128,
                },
            ],
            repeats: 1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputPaths {
    pub dataset: Option<PathBuf>,
    pub result: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub bench: Option<PathBuf>,
}

fn config_err(key: &str, e: impl std::fmt::Display) -> Error {
    Error::Config {
        key: key.to_string(),
        message: e.to_string(),
    }
}

/// Parses a config document; errors name the offending key.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        config_err(if key == "." { "<root>" } else { &key }, e.inner())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config { key, message } => Error::Config {
            key: format!("{}: {key}", path.display()),
            message,
        },
        other => other,
    })
}

impl RunConfig {
    pub fn n_modes(&self) -> usize {
        self.state.n_modes
    }

    /// Range checks on every physical parameter.
    pub fn validate(&self) -> Result<()> {
        self.state.validate().map_err(|e| config_err("state", e))?;
        let n = self.n_modes();
        let c = &self.control;
        if n < 2 {
            return Err(config_err("state.n_modes", "at least two modes are required"));
        }
        if c.n_alpha < 1 {
            return Err(config_err("control.n_alpha", "must be >= 1"));
        }
        if c.n_psi < 1 {
            return Err(config_err("control.n_psi", "must be >= 1"));
        }
        if c.layout == Layout::Relative && c.n_average < MIN_PHASE_AVERAGE_POINTS {
            return Err(config_err(
                "control.n_average",
                format!("must be >= {MIN_PHASE_AVERAGE_POINTS}"),
            ));
        }
        if let Some(f) = c.f_max {
            if !(f.is_finite() && f > 0.0) {
                return Err(config_err("control.f_max", "must be finite and > 0"));
            }
        }
        if let Some(b) = c.n_bins {
            if b < 8 {
                return Err(config_err("control.n_bins", "must be >= 8"));
            }
        }
        if self.mode != DataMode::Analytic && self.samples == 0 {
            return Err(config_err("samples", "must be >= 1 unless mode is analytic"));
        }
        if let Some(f) = &self.filter {
            f.validate().map_err(|e| config_err("filter", e))?;
        }
        if let Some(q) = &self.quadrature {
            q.validate().map_err(|e| config_err("quadrature", e))?;
        }
        if let Some(z) = self.z_cap {
            if !(z.is_finite() && z > 0.0) {
                return Err(config_err("z_cap", "must be finite and > 0"));
            }
        }
        if let Some(p) = &self.phases {
            if p.len() != n || p.iter().any(|v| !v.is_finite()) {
                return Err(config_err("phases", format!("expected {n} finite values")));
            }
        }
        if self.output_grid.is_some() {
            let g = self.output_grid().map_err(|e| config_err("output_grid", e))?;
            if g.n_modes() != n {
                return Err(config_err("output_grid", format!("expected {n} modes")));
            }
        }
        if let Some(pa) = &self.phase_averaging {
            if pa.n_points < MIN_PHASE_AVERAGE_POINTS {
                return Err(config_err(
                    "phase_averaging.n_points",
                    format!("must be >= {MIN_PHASE_AVERAGE_POINTS}"),
                ));
            }
        }
        if self.bench.repeats == 0 {
            return Err(config_err("bench.repeats", "must be >= 1"));
        }
        for (i, s) in self.bench.sizes.iter().enumerate() {
            if s.n_centers == 0 || s.n_offsets == 0 || s.nodes < 2 {
                return Err(config_err(
                    &format!("bench.sizes[{i}]"),
                    "n_centers and n_offsets must be >= 1, nodes >= 2",
                ));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON of the effective configuration.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn reference_phases(&self) -> Vec<f64> {
        self.phases.clone().unwrap_or_else(|| vec![0.0; self.n_modes()])
    }

    pub fn control_grid(&self, state: &DensityOperatorFock) -> Result<ControlGrid> {
        let c = &self.control;
        let default = QuadratureGrid::default_for(state, self.field_scale);
        let qgrid = QuadratureGrid::new(
            c.f_max.unwrap_or(default.f_max()),
            c.n_bins.unwrap_or(default.n_bins()),
        )?;
        let n = self.n_modes();
        match c.layout {
            Layout::Full => ControlGrid::full(n, c.n_alpha, c.n_psi, &self.reference_phases(), qgrid),
            Layout::Relative => ControlGrid::relative(n, c.n_alpha, c.n_psi, c.n_average, qgrid),
        }
    }

    pub fn output_grid(&self) -> Result<OutputGrid> {
        match &self.output_grid {
            None => Ok(OutputGrid::default_for(self.n_modes(), self.field_scale)),
            Some(GridSpec::Uniform {
                n_centers,
                center_max,
                n_offsets,
                offset_max,
            }) => OutputGrid::uniform(self.n_modes(), *n_centers, *center_max, *n_offsets, *offset_max),
            Some(GridSpec::Explicit(g)) => {
                g.validate()?;
                Ok(g.clone())
            }
        }
    }

    pub fn reconstruct_options(&self, n_modes: usize, scale: FieldScale) -> ReconstructOptions {
        let mut o = ReconstructOptions::default_for(n_modes, scale);
        o.filter = self.filter;
        if let Some(q) = self.quadrature {
            o.quadrature = q;
        }
        o
    }

    pub fn averaging(&self) -> PhaseAveraging {
        self.phase_averaging.unwrap_or(PhaseAveraging {
            n_points: MIN_PHASE_AVERAGE_POINTS,
            order: AveragingOrder::DistributionLevel,
        })
    }
}

/// Named two-mode test states, or a path to a JSON state spec.
pub fn resolve_state(name: &str) -> Result<StateSpec> {
    let spec = match name {
        "vacuum" => StateSpec::vacuum(2, 8),
        "coherent" => StateSpec::coherent(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)], 16),
        "fock" => StateSpec::fock(vec![1, 0], 8),
        "squeezed" => StateSpec::two_mode_squeezed(0.5, 16),
        path => {
            let p = Path::new(path);
            let text = std::fs::read_to_string(p).map_err(|e| {
                Error::invalid(format!(
                    "'{path}' is neither a named state (vacuum, coherent, fock, squeezed) \
                     nor a readable state file: {e}"
                ))
            })?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            serde_path_to_error::deserialize(de)
                .map_err(|e| config_err(&format!("{path}: {}", e.path()), e.inner()))?
        }
    };
    spec.validate()?;
    Ok(spec)
}
