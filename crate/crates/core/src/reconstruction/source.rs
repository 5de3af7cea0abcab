//! Sources of the joint characteristic function Ψ(z, ψ).

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::coords::{hyperspherical_angles, nmode_weights};
use crate::error::{Error, Result};
use crate::measurement::{DataMode, DetectorModel, PhaseControl, SettingData, SumFieldDataset};
use crate::state::{charfn_unchecked, DensityOperatorFock, FieldScale};

/// Taylor terms kept per bin of the sample expansion.
pub const EXPANSION_ORDER: usize = 27;
/// Default largest z served from raw samples, in units of 1/|F|.
pub const DEFAULT_Z_CAP: f64 = 40.0;
/// Slack when matching a query to the end of a control axis.
const AXIS_TOL: f64 = 1e-9;

/// Where Ψ comes from.
#[derive(Clone, Debug)]
pub enum CharFnSource<'a> {
    /// Exact Ψ of a known state, optionally seen through lossy detectors
    /// (Ψ multiplied by e^{−y²|F|²(1−η)/(2η)}).
    Analytic {
        state: &'a DensityOperatorFock,
        detector: Option<DetectorModel>,
    },
    /// Ψ̂ estimated from a sum-field dataset.
    Empirical(&'a EmpiricalCharFn),
    /// Average of the inner source over a common phase shift 2πj/n of all ψ_k.
    PhaseAveraged {
        inner: Box<CharFnSource<'a>>,
        n_points: usize,
    },
}

impl<'a> CharFnSource<'a> {
    pub fn analytic(state: &'a DensityOperatorFock) -> Self {
        CharFnSource::Analytic {
            state,
            detector: None,
        }
    }

    pub fn n_modes(&self) -> usize {
        match self {
            CharFnSource::Analytic { state, .. } => state.n_modes(),
            CharFnSource::Empirical(e) => e.n_modes(),
            CharFnSource::PhaseAveraged { inner, .. } => inner.n_modes(),
        }
    }

    pub(crate) fn label(&self) -> String {
        match self {
            CharFnSource::Analytic { detector: None, .. } => "analytic".into(),
            CharFnSource::Analytic { .. } => "analytic_degraded".into(),
            CharFnSource::Empirical(e) => format!("empirical_{}", e.mode_name()),
            CharFnSource::PhaseAveraged { inner, .. } => inner.label(),
        }
    }

    pub(crate) fn trace_deficit(&self) -> Option<f64> {
        match self {
            CharFnSource::Analytic { state, .. } => Some(state.trace_deficit()),
            CharFnSource::Empirical(_) => None,
            CharFnSource::PhaseAveraged { inner, .. } => inner.trace_deficit(),
        }
    }

    /// Ψ at the per-mode arguments (z_k ≥ 0, ψ_k).
    pub(crate) fn eval_vector(&self, z: &[f64], psi: &[f64], f_abs: f64) -> Result<Complex64> {
        match self {
            CharFnSource::Analytic { state, detector } => {
                let mut v = charfn_unchecked(state, z, psi, f_abs);
                if let Some(d) = detector {
                    let r2: f64 = z.iter().map(|x| x * x).sum();
                    v *= d.attenuation(r2.sqrt(), FieldScale::new(f_abs)?);
                }
                Ok(v)
            }
            CharFnSource::Empirical(e) => e.eval_vector(z, psi),
            CharFnSource::PhaseAveraged { inner, n_points } => {
                let mut acc = Complex64::new(0.0, 0.0);
                let mut shifted = psi.to_vec();
                for j in 0..*n_points {
                    let theta = 2.0 * PI * j as f64 / *n_points as f64;
                    for (s, p) in shifted.iter_mut().zip(psi) {
                        *s = p + theta;
                    }
                    acc += inner.eval_vector(z, &shifted, f_abs)?;
                }
                Ok(acc / *n_points as f64)
            }
        }
    }
}

/// Ψ(z w(angles), ψ) for radial z ≥ 0 and N−1 hyperspherical angles.
pub fn charfn_eval(
    source: &CharFnSource<'_>,
    z: f64,
    angles: &[f64],
    psi: &[f64],
    scale: FieldScale,
) -> Result<Complex64> {
    let n = source.n_modes();
    if angles.len() + 1 != n || psi.len() != n {
        return Err(Error::invalid(format!(
            "{n} modes need {} angles and {n} phases",
            n - 1
        )));
    }
    if !(z.is_finite() && z >= 0.0) || angles.iter().chain(psi).any(|v| !v.is_finite()) {
        return Err(Error::invalid("z must be finite and >= 0; angles and phases finite"));
    }
    if z == 0.0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let zv: Vec<f64> = nmode_weights(angles).iter().map(|w| z * w).collect();
    source.eval_vector(&zv, psi, scale.get())
}

/// Σ_b e^{i z c_b} Σ_p a_{b,p} (iz)^p with c_b = c0 + b·dc.
#[derive(Clone, Debug)]
struct BinnedExpansion {
    c0: f64,
    dc: f64,
    order: usize,
    coeffs: Vec<f64>,
}

impl BinnedExpansion {
    /// a_{b,p} = Σ_j (ℱ_j − c_b)^p / (p! M) over the samples in bin b.
    fn from_samples(samples: &[f64], dc: f64) -> Self {
        let order = EXPANSION_ORDER;
        let lo = samples.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        let hi = samples.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let b_lo = (lo / dc).round() as i64;
        let b_hi = (hi / dc).round() as i64;
        let n_bins = (b_hi - b_lo + 1) as usize;
        let mut coeffs = vec![0.0; n_bins * order];
        for &f in samples {
            let b = (f / dc).round() as i64;
            let d = f - b as f64 * dc;
            let row = &mut coeffs[(b - b_lo) as usize * order..][..order];
            let mut t = 1.0;
            for (p, c) in row.iter_mut().enumerate() {
                *c += t;
                t *= d / (p + 1) as f64;
            }
        }
        let inv_m = 1.0 / samples.len() as f64;
        for c in &mut coeffs {
            *c *= inv_m;
        }
        BinnedExpansion {
            c0: b_lo as f64 * dc,
            dc,
            order,
            coeffs,
        }
    }

    fn from_weights(c0: f64, dc: f64, weights: Vec<f64>) -> Self {
        BinnedExpansion {
            c0,
            dc,
            order: 1,
            coeffs: weights,
        }
    }

    fn eval(&self, z: f64) -> Complex64 {
        let rot = Complex64::from_polar(1.0, z * self.dc);
        let mut e = Complex64::from_polar(1.0, z * self.c0);
        let mut acc = Complex64::new(0.0, 0.0);
        for row in self.coeffs.chunks_exact(self.order) {
            // Horner in (iz)
            let (mut hr, mut hi) = (row[self.order - 1], 0.0);
            for &a in row[..self.order - 1].iter().rev() {
                (hr, hi) = (a - hi * z, hr * z);
            }
            acc += e * Complex64::new(hr, hi);
            e *= rot;
        }
        acc
    }
}

/// Ψ̂ from a dataset: exact in z at every recorded setting, multilinear
/// across the control grid, with no extrapolation.
#[derive(Clone, Debug)]
pub struct EmpiricalCharFn {
    n_modes: usize,
    mode: DataMode,
    phases: PhaseControl,
    alpha_axes: Vec<Vec<f64>>,
    z_cap: f64,
    settings: Vec<BinnedExpansion>,
}

impl EmpiricalCharFn {
    /// `z_cap` defaults to 40/|F| for raw samples and π/Δℱ for binned data.
    pub fn from_dataset(ds: &SumFieldDataset, z_cap: Option<f64>) -> Result<Self> {
        ds.validate()?;
        let grid = &ds.control.quadrature_grid;
        let f_abs = ds.field_scale.get();
        let default_cap = match ds.mode {
            DataMode::Samples => DEFAULT_Z_CAP / f_abs,
            _ => PI / grid.width(),
        };
        let z_cap = z_cap.unwrap_or(default_cap);
        if !(z_cap.is_finite() && z_cap > 0.0) {
            return Err(Error::invalid("z_cap must be finite and > 0"));
        }
        let settings = ds
            .records
            .iter()
            .map(|r| match &r.data {
                SettingData::Samples(s) => BinnedExpansion::from_samples(s, 4.0 / z_cap),
                SettingData::Counts(c) => {
                    let m = ds.samples_per_setting as f64;
                    BinnedExpansion::from_weights(
                        grid.center(0),
                        grid.width(),
                        c.iter().map(|&v| v as f64 / m).collect(),
                    )
                }
                SettingData::Density(d) => BinnedExpansion::from_weights(
                    grid.center(0),
                    grid.width(),
                    d.iter().map(|v| v * grid.width()).collect(),
                ),
            })
            .collect();
        Ok(EmpiricalCharFn {
            n_modes: ds.n_modes,
            mode: ds.mode,
            phases: ds.control.phases.clone(),
            alpha_axes: ds.control.alpha_axes.clone(),
            z_cap,
            settings,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn z_cap(&self) -> f64 {
        self.z_cap
    }

    pub fn is_relative(&self) -> bool {
        matches!(self.phases, PhaseControl::Relative { .. })
    }

    /// ψ₁ averaging grid size of a relative-layout dataset.
    pub fn n_average(&self) -> Option<usize> {
        match self.phases {
            PhaseControl::Relative { n_average, .. } => Some(n_average),
            PhaseControl::Full { .. } => None,
        }
    }

    pub(crate) fn psi_span(&self) -> Option<(f64, f64)> {
        match &self.phases {
            PhaseControl::Full { psi_axes } => Some((psi_axes[0][0], psi_axes[0][psi_axes[0].len() - 1])),
            PhaseControl::Relative { .. } => None,
        }
    }

    fn mode_name(&self) -> &'static str {
        match self.mode {
            DataMode::Samples => "samples",
            DataMode::Histogram => "histogram",
            DataMode::Analytic => "analytic",
        }
    }

    /// Ψ̂ of a single recorded setting.
    pub fn setting_value(&self, flat: usize, z: f64) -> Complex64 {
        self.settings[flat].eval(z)
    }

    pub(crate) fn eval_vector(&self, z: &[f64], psi: &[f64]) -> Result<Complex64> {
        let radius = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if radius == 0.0 {
            return Ok(Complex64::new(1.0, 0.0));
        }
        if radius > self.z_cap * (1.0 + 1e-12) {
            return Err(Error::Coverage(format!(
                "z = {radius:.6} exceeds the largest z = {:.6} this dataset serves",
                self.z_cap
            )));
        }
        let angles = hyperspherical_angles(z);

        // (lower index, upper index, upper weight, axis length) per control axis
        let mut cells: Vec<(usize, usize, f64, usize)> = Vec::with_capacity(2 * self.n_modes);
        for (k, (axis, &a)) in self.alpha_axes.iter().zip(&angles).enumerate() {
            cells.push(locate(axis, a).ok_or_else(|| {
                Error::Coverage(format!(
                    "angle {k} = {a:.6} outside the measured range [{:.6}, {:.6}]",
                    axis[0],
                    axis[axis.len() - 1]
                ))
            })?);
        }
        match &self.phases {
            PhaseControl::Full { psi_axes } => {
                for (k, (axis, &p)) in psi_axes.iter().zip(psi).enumerate() {
                    cells.push(locate(axis, p).ok_or_else(|| {
                        Error::Coverage(format!(
                            "psi_{} = {p:.6} outside the measured range [{:.6}, {:.6}]",
                            k + 1,
                            axis[0],
                            axis[axis.len() - 1]
                        ))
                    })?);
                }
            }
            PhaseControl::Relative { delta_psi_axes, .. } => {
                for (k, axis) in delta_psi_axes.iter().enumerate() {
                    cells.push(locate_periodic(axis.len(), psi[k + 1] - psi[0]));
                }
            }
        }

        let mut acc = Complex64::new(0.0, 0.0);
        for mask in 0..(1usize << cells.len()) {
            let mut w = 1.0;
            let mut flat = 0;
            for (d, &(lo, hi, t, len)) in cells.iter().enumerate() {
                let upper = mask >> d & 1 == 1;
                w *= if upper { t } else { 1.0 - t };
                flat = flat * len + if upper { hi } else { lo };
            }
            if w != 0.0 {
                acc += self.settings[flat].eval(radius) * w;
            }
        }
        Ok(acc)
    }
}

fn locate(axis: &[f64], x: f64) -> Option<(usize, usize, f64, usize)> {
    let n = axis.len();
    let (lo, hi) = (axis[0], axis[n - 1]);
    if x < lo - AXIS_TOL || x > hi + AXIS_TOL || !x.is_finite() {
        return None;
    }
    if n == 1 {
        return Some((0, 0, 0.0, 1));
    }
    let x = x.clamp(lo, hi);
    let i = axis.partition_point(|&v| v <= x).clamp(1, n - 1) - 1;
    let t = (x - axis[i]) / (axis[i + 1] - axis[i]);
    Some((i, i + 1, t, n))
}

fn locate_periodic(n: usize, x: f64) -> (usize, usize, f64, usize) {
    let u = (x / (2.0 * PI)).rem_euclid(1.0) * n as f64;
    let i = (u.floor() as usize).min(n - 1);
    let t = (u - i as f64).clamp(0.0, 1.0);
    (i, (i + 1) % n, t, n)
}

/// How a phase-averaged reconstruction combines the ψ₁ shifts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragingOrder {
    /// Average of reconstructed matrices.
    MatrixLevel,
    /// Reconstruction of the averaged characteristic function.
    DistributionLevel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseAveraging {
    pub n_points: usize,
    pub order: AveragingOrder,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expansion_matches_direct_sum() {
        let samples: Vec<f64> = (0..2000).map(|i| ((i * 7919 % 2003) as f64 / 2003.0 - 0.5) * 9.0).collect();
        let e = BinnedExpansion::from_samples(&samples, 0.1);
        for &z in &[0.0, 0.37, 3.3, 17.0, 40.0] {
            let direct: Complex64 = samples
                .iter()
                .map(|f| Complex64::from_polar(1.0, z * f))
                .sum::<Complex64>()
                / samples.len() as f64;
            assert!((e.eval(z) - direct).norm() < 1e-13, "z={z}");
        }
    }

    #[test]
    fn periodic_locate_wraps() {
        let (i, j, t, _) = locate_periodic(4, -0.25 * PI);
        assert_eq!((i, j), (3, 0));
        assert!((t - 0.5).abs() < 1e-12);
        let (i, _, t, _) = locate_periodic(4, 2.0 * PI);
        assert_eq!(i, 0);
        assert!(t.abs() < 1e-12);
    }

    #[test]
    fn locate_edges() {
        let axis = [0.0, 1.0, 3.0];
        assert_eq!(locate(&axis, 3.0), Some((1, 2, 1.0, 3)));
        assert_eq!(locate(&axis, 0.0), Some((0, 1, 0.0, 3)));
        assert_eq!(locate(&axis, 2.0), Some((1, 2, 0.5, 3)));
        assert!(locate(&axis, 3.1).is_none());
    }
}
