//! Density matrices sampled in the field-strength basis.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reconstruction::{PhaseAveraging, QuadratureParams, RegularizationFilter};
use crate::state::FieldScale;

/// Per-mode axes for the centers ℱ and offsets ℱ′ of
/// ⟨ℱ−ℱ′, φ|ρ̂|ℱ+ℱ′, φ⟩.
///
/// Offset axes are symmetric about zero so every entry has its Hermitian
/// partner on the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputGrid {
    pub centers: Vec<Vec<f64>>,
    pub offsets: Vec<Vec<f64>>,
}

/// `n` points on [−a, a] that are exact negatives of each other.
pub fn symmetric_axis(n: usize, a: f64) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    let mut axis = vec![0.0; n];
    for i in 0..n / 2 {
        let v = -a + 2.0 * a * i as f64 / (n - 1) as f64;
        axis[i] = v;
        axis[n - 1 - i] = -v;
    }
    axis
}

impl OutputGrid {
    pub fn new(centers: Vec<Vec<f64>>, offsets: Vec<Vec<f64>>) -> Result<Self> {
        let g = OutputGrid { centers, offsets };
        g.validate()?;
        Ok(g)
    }

    /// Same center and offset axes for every mode.
    pub fn uniform(
        n_modes: usize,
        n_centers: usize,
        center_max: f64,
        n_offsets: usize,
        offset_max: f64,
    ) -> Result<Self> {
        Self::new(
            vec![symmetric_axis(n_centers, center_max); n_modes],
            vec![symmetric_axis(n_offsets, offset_max); n_modes],
        )
    }

    /// 9 centers on [−6|F|, 6|F|] and 5 offsets on [−|F|, |F|] per mode.
    pub fn default_for(n_modes: usize, scale: FieldScale) -> Self {
        let f = scale.get();
        Self::uniform(n_modes, 9, 6.0 * f, 5, f).expect("default grid is valid")
    }

    /// Like [`OutputGrid::default_for`] but with ℱ′ varied on mode 1 only,
    /// so every offset is sign-coherent and inside what a full-layout
    /// control grid measures.
    pub fn default_measured(n_modes: usize, scale: FieldScale) -> Self {
        let f = scale.get();
        let mut offsets = vec![vec![0.0]; n_modes];
        offsets[0] = symmetric_axis(5, f);
        Self::new(vec![symmetric_axis(9, 6.0 * f); n_modes], offsets).expect("default grid is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.centers.len();
        if n == 0 || self.offsets.len() != n {
            return Err(Error::invalid(
                "output grid needs one center axis and one offset axis per mode",
            ));
        }
        for (k, axis) in self.centers.iter().chain(&self.offsets).enumerate() {
            if axis.is_empty() {
                return Err(Error::invalid(format!("output grid axis {k} is empty")));
            }
            if axis.iter().any(|v| !v.is_finite()) || axis.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid(format!(
                    "output grid axis {k} must be finite and strictly increasing"
                )));
            }
        }
        for (k, axis) in self.offsets.iter().enumerate() {
            let m = axis.len();
            if (0..m).any(|i| axis[i] != -axis[m - 1 - i]) {
                return Err(Error::invalid(format!(
                    "offset axis of mode {k} is not symmetric about zero"
                )));
            }
        }
        Ok(())
    }

    pub fn n_modes(&self) -> usize {
        self.centers.len()
    }

    pub fn n_centers(&self) -> usize {
        self.centers.iter().map(Vec::len).product()
    }

    pub fn n_offsets(&self) -> usize {
        self.offsets.iter().map(Vec::len).product()
    }

    pub fn center_digits(&self, index: usize) -> Vec<usize> {
        unflatten(index, &self.centers)
    }

    pub fn offset_digits(&self, index: usize) -> Vec<usize> {
        unflatten(index, &self.offsets)
    }

    pub fn center(&self, index: usize) -> Vec<f64> {
        let d = self.center_digits(index);
        d.iter().zip(&self.centers).map(|(&i, a)| a[i]).collect()
    }

    pub fn offset(&self, index: usize) -> Vec<f64> {
        let d = self.offset_digits(index);
        d.iter().zip(&self.offsets).map(|(&i, a)| a[i]).collect()
    }

    /// Index of −ℱ′.
    pub fn mirror_offset(&self, index: usize) -> usize {
        let d = self.offset_digits(index);
        d.iter()
            .zip(&self.offsets)
            .fold(0, |acc, (&i, a)| acc * a.len() + (a.len() - 1 - i))
    }

    /// Offsets that are computed directly: zero, or first nonzero component
    /// positive. The rest are their Hermitian mirrors.
    pub fn canonical_offsets(&self) -> Vec<usize> {
        (0..self.n_offsets())
            .filter(|&j| {
                let v = self.offset(j);
                match v.iter().find(|x| **x != 0.0) {
                    None => true,
                    Some(x) => *x > 0.0,
                }
            })
            .collect()
    }

    /// Index of the all-zero offset, if the grid has one.
    pub fn zero_offset(&self) -> Option<usize> {
        (0..self.n_offsets()).find(|&j| self.offset(j).iter().all(|x| *x == 0.0))
    }
}

fn unflatten(mut index: usize, axes: &[Vec<f64>]) -> Vec<usize> {
    let mut d = vec![0; axes.len()];
    for k in (0..axes.len()).rev() {
        d[k] = index % axes[k].len();
        index /= axes[k].len();
    }
    d
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Direct Fock expansion of the known state.
    Oracle,
    /// Characteristic function from sum-field data, then N outer integrals.
    SumField,
    /// Joint distributions, their N-fold transform, then N outer integrals.
    JointBaseline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub method: Method,
    /// `state`, `analytic`, `analytic_degraded`, or the empirical data kind.
    pub source: String,
    pub transform_stages: Option<usize>,
    /// Efficiency assumed by the compensation factor.
    pub eta: f64,
    pub filter: Option<RegularizationFilter>,
    pub amplification_bound: Option<f64>,
    pub quadrature: Option<QuadratureParams>,
    pub phase_averaged: Option<PhaseAveraging>,
    pub trace_deficit: Option<f64>,
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    pub tool_version: String,
}

impl Provenance {
    pub fn new(method: Method, source: impl Into<String>) -> Self {
        Provenance {
            method,
            source: source.into(),
            transform_stages: None,
            eta: 1.0,
            filter: None,
            amplification_bound: None,
            quadrature: None,
            phase_averaged: None,
            trace_deficit: None,
            config_hash: None,
            seed: None,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Residuals {
    /// max |ρ(ℱ,ℱ′) − conj ρ(ℱ,−ℱ′)| over ℱ′ ≠ 0.
    pub hermiticity: f64,
    /// Largest |Im ρ(ℱ; 0)|.
    pub diagonal_imag_max: Option<f64>,
    /// Most negative Re ρ(ℱ; 0), or 0 if none is negative.
    pub diagonal_negativity: Option<f64>,
    /// ∫ Re ρ(ℱ; 0) dℱ by trapezoid over the center axes.
    pub diagonal_normalization: Option<f64>,
}

/// Reconstructed or exact ⟨ℱ−ℱ′, φ|ρ̂|ℱ+ℱ′, φ⟩ on an [`OutputGrid`].
///
/// `elements[c * n_offsets + o]` holds center `c` and offset `o`, each
/// flattened row-major with mode 1 most significant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityMatrixFS {
    pub n_modes: usize,
    pub field_scale: FieldScale,
    pub phases: Vec<f64>,
    pub grid: OutputGrid,
    pub elements: Vec<Complex64>,
    pub provenance: Provenance,
    pub residuals: Residuals,
}

impl DensityMatrixFS {
    /// Builds the full matrix from per-offset columns over all centers for
    /// the canonical offsets; the remaining offsets are Hermitian mirrors.
    pub(crate) fn from_canonical(
        grid: OutputGrid,
        phases: Vec<f64>,
        field_scale: FieldScale,
        columns: Vec<(usize, Vec<Complex64>)>,
        provenance: Provenance,
    ) -> Self {
        let nc = grid.n_centers();
        let no = grid.n_offsets();
        let mut elements = vec![Complex64::new(0.0, 0.0); nc * no];
        let mut done = vec![false; no];
        for (j, col) in &columns {
            for c in 0..nc {
                elements[c * no + j] = col[c];
            }
            done[*j] = true;
        }
        for j in 0..no {
            if !done[j] {
                let m = grid.mirror_offset(j);
                debug_assert!(done[m]);
                for c in 0..nc {
                    elements[c * no + j] = elements[c * no + m].conj();
                }
            }
        }
        let mut out = DensityMatrixFS {
            n_modes: grid.n_modes(),
            field_scale,
            phases,
            grid,
            elements,
            provenance,
            residuals: Residuals::default(),
        };
        out.residuals = out.compute_residuals();
        out
    }

    pub fn element(&self, center: usize, offset: usize) -> Complex64 {
        self.elements[center * self.grid.n_offsets() + offset]
    }

    pub fn compute_residuals(&self) -> Residuals {
        let nc = self.grid.n_centers();
        let no = self.grid.n_offsets();
        let zero = self.grid.zero_offset();
        let mut herm: f64 = 0.0;
        for j in 0..no {
            if Some(j) == zero {
                continue;
            }
            let m = self.grid.mirror_offset(j);
            for c in 0..nc {
                let d = self.elements[c * no + j] - self.elements[c * no + m].conj();
                herm = herm.max(d.norm());
            }
        }
        let mut r = Residuals {
            hermiticity: herm,
            ..Residuals::default()
        };
        if let Some(z) = zero {
            let diag: Vec<Complex64> = (0..nc).map(|c| self.elements[c * no + z]).collect();
            r.diagonal_imag_max = Some(diag.iter().fold(0.0, |m, v| m.max(v.im.abs())));
            r.diagonal_negativity = Some(diag.iter().fold(0.0, |m, v| m.min(v.re)));
            let re: Vec<f64> = diag.iter().map(|v| v.re).collect();
            r.diagonal_normalization = Some(trapezoid_nd(&re, &self.grid.centers));
        }
        r
    }

    /// Checks that two matrices live on the same grid, phases, and scale.
    pub fn check_compatible(&self, other: &DensityMatrixFS) -> Result<()> {
        if self.n_modes != other.n_modes {
            return Err(Error::GridMismatch(format!(
                "{} modes vs {} modes",
                self.n_modes, other.n_modes
            )));
        }
        if self.grid != other.grid {
            return Err(Error::GridMismatch("output grids differ".into()));
        }
        if self.field_scale != other.field_scale {
            return Err(Error::GridMismatch(format!(
                "field scale {} vs {}",
                self.field_scale, other.field_scale
            )));
        }
        if self
            .phases
            .iter()
            .zip(&other.phases)
            .any(|(a, b)| (a - b).abs() > 1e-12)
        {
            return Err(Error::GridMismatch("reference phases differ".into()));
        }
        if self.elements.len() != other.elements.len() {
            return Err(Error::GridMismatch("element counts differ".into()));
        }
        Ok(())
    }
}

/// Tensor-product trapezoid of row-major `values` over possibly non-uniform axes.
pub(crate) fn trapezoid_nd(values: &[f64], axes: &[Vec<f64>]) -> f64 {
    let weights: Vec<Vec<f64>> = axes.iter().map(|a| trapezoid_weights(a)).collect();
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let d = unflatten(i, axes);
            d.iter()
                .zip(&weights)
                .fold(*v, |acc, (&k, w)| acc * w[k])
        })
        .sum()
}

pub(crate) fn trapezoid_weights(axis: &[f64]) -> Vec<f64> {
    let n = axis.len();
    if n == 1 {
        return vec![1.0];
    }
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let h = axis[i + 1] - axis[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}
