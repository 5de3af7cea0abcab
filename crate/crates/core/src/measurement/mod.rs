//! Simulated sum-field measurements on a grid of mixing angles and phases.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::atomic::{AtomicUsize, Ordering};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{check_mass, check_orders, sum_distribution_unchecked, QuadratureGrid, Route};
use crate::reconstruction::nmode_weights;
use crate::state::{DensityOperatorFock, FieldScale};

/// Refinement factor of the grid used for inverse-CDF sampling.
pub const SAMPLING_REFINEMENT: usize = 8;
/// Distance of the default mixing-angle axis from 0 and π/2.
pub const ALPHA_EDGE: f64 = 1e-3;
/// Smallest ψ₁ grid accepted for phase averaging.
pub const MIN_PHASE_AVERAGE_POINTS: usize = 16;

/// Quantum efficiency η of the homodyne detectors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDetector", into = "RawDetector")]
pub struct DetectorModel {
    eta: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetector {
    eta: f64,
}

impl TryFrom<RawDetector> for DetectorModel {
    type Error = Error;
    fn try_from(r: RawDetector) -> Result<Self> {
        DetectorModel::new(r.eta)
    }
}

impl From<DetectorModel> for RawDetector {
    fn from(d: DetectorModel) -> Self {
        RawDetector { eta: d.eta }
    }
}

impl Default for DetectorModel {
    fn default() -> Self {
        DetectorModel { eta: 1.0 }
    }
}

impl DetectorModel {
    pub fn new(eta: f64) -> Result<Self> {
        if eta.is_finite() && eta > 0.0 && eta <= 1.0 {
            Ok(DetectorModel { eta })
        } else {
            Err(Error::invalid(format!("eta must lie in (0, 1], got {eta}")))
        }
    }

    pub fn ideal() -> Self {
        Self::default()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// |F|²(1−η)/η.
    pub fn noise_variance(&self, scale: FieldScale) -> f64 {
        let f = scale.get();
        f * f * (1.0 - self.eta) / self.eta
    }

    /// e^{−z² σ²/2}: the characteristic function of the added noise.
    pub fn attenuation(&self, z: f64, scale: FieldScale) -> f64 {
        (-0.5 * z * z * self.noise_variance(scale)).exp()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhaseControl {
    /// Absolute phases ψ_k, each axis inside a π interval.
    Full { psi_axes: Vec<Vec<f64>> },
    /// Only Δψ_k = ψ_{k+1} − ψ₁ is controlled; ψ₁ is drawn uniformly from
    /// `n_average` points on [0, 2π) for every sample.
    Relative {
        delta_psi_axes: Vec<Vec<f64>>,
        n_average: usize,
    },
}

/// Settings (mixing angles × phases) at which sum-field data are taken.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlGrid {
    /// N−1 hyperspherical angle axes.
    pub alpha_axes: Vec<Vec<f64>>,
    pub phases: PhaseControl,
    pub quadrature_grid: QuadratureGrid,
}

/// α_i = ε + (π/2 − 2ε) i/(n−1).
pub fn default_alpha_axis(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![PI / 4.0];
    }
    (0..n)
        .map(|i| ALPHA_EDGE + (FRAC_PI_2 - 2.0 * ALPHA_EDGE) * i as f64 / (n - 1) as f64)
        .collect()
}

/// n points on the closed interval [φ − π, φ].
pub fn default_psi_axis(n: usize, phase: f64) -> Vec<f64> {
    if n == 1 {
        return vec![phase];
    }
    let mut v: Vec<f64> = (0..n)
        .map(|i| phase - PI + PI * i as f64 / (n - 1) as f64)
        .collect();
    v[n - 1] = phase;
    v
}

/// n points 2πi/n on [0, 2π).
pub fn periodic_axis(n: usize) -> Vec<f64> {
    (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect()
}

/// One control setting.
#[derive(Clone, Debug, PartialEq)]
pub struct Setting {
    pub alpha: Vec<f64>,
    /// Absolute phases (full layout) or Δψ (relative layout).
    pub psi: Vec<f64>,
}

impl ControlGrid {
    /// `n_alpha` angles per axis and `n_psi` phases per mode on [φ_k − π, φ_k].
    pub fn full(
        n_modes: usize,
        n_alpha: usize,
        n_psi: usize,
        reference_phases: &[f64],
        quadrature_grid: QuadratureGrid,
    ) -> Result<Self> {
        if reference_phases.len() != n_modes {
            return Err(Error::invalid("one reference phase per mode is required"));
        }
        let g = ControlGrid {
            alpha_axes: vec![default_alpha_axis(n_alpha); n_modes.saturating_sub(1)],
            phases: PhaseControl::Full {
                psi_axes: reference_phases
                    .iter()
                    .map(|&p| default_psi_axis(n_psi, p))
                    .collect(),
            },
            quadrature_grid,
        };
        g.validate()?;
        Ok(g)
    }

    /// Relative-phase layout with `n_dpsi` periodic points per Δψ axis.
    pub fn relative(
        n_modes: usize,
        n_alpha: usize,
        n_dpsi: usize,
        n_average: usize,
        quadrature_grid: QuadratureGrid,
    ) -> Result<Self> {
        let g = ControlGrid {
            alpha_axes: vec![default_alpha_axis(n_alpha); n_modes.saturating_sub(1)],
            phases: PhaseControl::Relative {
                delta_psi_axes: vec![periodic_axis(n_dpsi); n_modes.saturating_sub(1)],
                n_average,
            },
            quadrature_grid,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn n_modes(&self) -> usize {
        self.alpha_axes.len() + 1
    }

    pub fn is_relative(&self) -> bool {
        matches!(self.phases, PhaseControl::Relative { .. })
    }

    pub fn phase_axes(&self) -> &[Vec<f64>] {
        match &self.phases {
            PhaseControl::Full { psi_axes } => psi_axes,
            PhaseControl::Relative { delta_psi_axes, .. } => delta_psi_axes,
        }
    }

    /// Angle axes followed by phase axes.
    pub fn axes(&self) -> Vec<&[f64]> {
        self.alpha_axes
            .iter()
            .chain(self.phase_axes())
            .map(Vec::as_slice)
            .collect()
    }

    pub fn n_settings(&self) -> usize {
        self.axes().iter().map(|a| a.len()).product()
    }

    pub fn setting_digits(&self, mut flat: usize) -> Vec<usize> {
        let axes = self.axes();
        let mut d = vec![0; axes.len()];
        for k in (0..axes.len()).rev() {
            d[k] = flat % axes[k].len();
            flat /= axes[k].len();
        }
        d
    }

    pub fn setting(&self, digits: &[usize]) -> Setting {
        let na = self.alpha_axes.len();
        let alpha = (0..na).map(|k| self.alpha_axes[k][digits[k]]).collect();
        let psi = self
            .phase_axes()
            .iter()
            .enumerate()
            .map(|(k, a)| a[digits[na + k]])
            .collect();
        Setting { alpha, psi }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_modes();
        if n < 2 {
            return Err(Error::invalid("a control grid needs at least two modes"));
        }
        for (k, axis) in self.alpha_axes.iter().enumerate() {
            check_increasing(axis, &format!("alpha axis {k}"))?;
            if axis.iter().any(|a| !(*a > 0.0 && *a < FRAC_PI_2)) {
                return Err(Error::invalid(format!("alpha axis {k} must lie in (0, pi/2)")));
            }
        }
        match &self.phases {
            PhaseControl::Full { psi_axes } => {
                if psi_axes.len() != n {
                    return Err(Error::invalid(format!("{n} modes need {n} psi axes")));
                }
                for (k, axis) in psi_axes.iter().enumerate() {
                    check_increasing(axis, &format!("psi axis {k}"))?;
                    if axis[axis.len() - 1] - axis[0] > PI + 1e-12 {
                        return Err(Error::invalid(format!("psi axis {k} spans more than pi")));
                    }
                }
            }
            PhaseControl::Relative {
                delta_psi_axes,
                n_average,
            } => {
                if delta_psi_axes.len() != n - 1 {
                    return Err(Error::invalid(format!("{n} modes need {} delta-psi axes", n - 1)));
                }
                for (k, axis) in delta_psi_axes.iter().enumerate() {
                    let want = periodic_axis(axis.len());
                    if axis.is_empty() || axis.iter().zip(&want).any(|(a, b)| (a - b).abs() > 1e-12) {
                        return Err(Error::invalid(format!(
                            "delta-psi axis {k} must be the uniform grid 2*pi*i/n on [0, 2*pi)"
                        )));
                    }
                }
                if *n_average < MIN_PHASE_AVERAGE_POINTS {
                    return Err(Error::invalid(format!(
                        "n_average must be >= {MIN_PHASE_AVERAGE_POINTS}, got {n_average}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn check_increasing(axis: &[f64], what: &str) -> Result<()> {
    if axis.is_empty() {
        return Err(Error::invalid(format!("{what} is empty")));
    }
    if axis.iter().any(|v| !v.is_finite()) || axis.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(format!("{what} must be finite and strictly increasing")));
    }
    Ok(())
}

/// Convolves a normalized density on `grid` with the zero-mean Gaussian of
/// variance |F|²(1−η)/η, as a product of transforms on a zero-padded FFT
/// grid. The output is renormalized.
pub fn apply_efficiency(
    dist: &[f64],
    grid: &QuadratureGrid,
    model: DetectorModel,
    scale: FieldScale,
) -> Result<Vec<f64>> {
    if dist.len() != grid.n_bins() {
        return Err(Error::invalid(format!(
            "distribution has {} bins, grid has {}",
            dist.len(),
            grid.n_bins()
        )));
    }
    if dist.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("distribution must be finite"));
    }
    if model.eta() == 1.0 {
        return Ok(dist.to_vec());
    }
    let n = dist.len();
    let dx = grid.width();
    let sigma = model.noise_variance(scale).sqrt();
    let half = (10.0 * sigma / dx).ceil() as usize;
    let len = (n + 2 * half + 1).next_power_of_two();

    // Sampled Gaussian kernel, wrapped so index 0 is the zero shift.
    let mut kernel = vec![Complex64::new(0.0, 0.0); len];
    let mut ksum = 0.0;
    for m in 0..=half {
        let x = m as f64 * dx;
        let v = (-0.5 * x * x / (sigma * sigma)).exp();
        kernel[m] = Complex64::new(v, 0.0);
        ksum += v;
        if m > 0 {
            kernel[len - m] = Complex64::new(v, 0.0);
            ksum += v;
        }
    }
    let mut signal = vec![Complex64::new(0.0, 0.0); len];
    for (s, &d) in signal.iter_mut().zip(dist) {
        *s = Complex64::new(d, 0.0);
    }

    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    fwd.process(&mut kernel);
    fwd.process(&mut signal);
    for (s, k) in signal.iter_mut().zip(&kernel) {
        *s *= k / (ksum * len as f64);
    }
    inv.process(&mut signal);

    let mut out: Vec<f64> = signal[..n].iter().map(|c| c.re).collect();
    let mass: f64 = out.iter().sum::<f64>() * dx;
    if mass > 0.0 {
        for v in &mut out {
            *v /= mass;
        }
    }
    Ok(out)
}

/// Inverse-CDF sampler with linear interpolation inside the refined bins.
#[derive(Clone, Debug)]
struct Cdf {
    lo: f64,
    width: f64,
    cdf: Vec<f64>,
}

impl Cdf {
    fn new(density: &[f64], grid: &QuadratureGrid) -> Self {
        let mut cdf = Vec::with_capacity(density.len() + 1);
        let mut acc = 0.0;
        cdf.push(0.0);
        for &p in density {
            acc += p.max(0.0);
            cdf.push(acc);
        }
        for c in &mut cdf {
            *c /= acc;
        }
        Cdf {
            lo: grid.f_min(),
            width: grid.width(),
            cdf,
        }
    }

    fn draw(&self, u: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c <= u).clamp(1, self.cdf.len() - 1) - 1;
        let (a, b) = (self.cdf[i], self.cdf[i + 1]);
        let t = if b > a { (u - a) / (b - a) } else { 0.5 };
        self.lo + (i as f64 + t) * self.width
    }
}

/// Sum-field density (after detector noise) on `grid`, checked for mass
/// escaping the grid.
pub(crate) fn setting_density(
    state: &DensityOperatorFock,
    alpha: &[f64],
    psi: &[f64],
    model: DetectorModel,
    grid: &QuadratureGrid,
    scale: FieldScale,
) -> Result<Vec<f64>> {
    let w = nmode_weights(alpha);
    let p = sum_distribution_unchecked(state, &w, psi, grid, scale.get(), Route::Fourier);
    check_mass(state, &w, psi, grid, scale.get(), &p)?;
    let mut p = apply_efficiency(&p, grid, model, scale)?;
    let mass: f64 = p.iter().sum::<f64>() * grid.width();
    for v in &mut p {
        *v /= mass;
    }
    Ok(p)
}

fn check_setting_inputs(state: &DensityOperatorFock, alpha: &[f64], psi: &[f64]) -> Result<()> {
    check_orders(state)?;
    let n = state.n_modes();
    if alpha.len() + 1 != n || psi.len() != n {
        return Err(Error::invalid(format!(
            "{n} modes need {} angles and {n} phases",
            n - 1
        )));
    }
    if alpha.iter().any(|a| !(*a > 0.0 && *a < FRAC_PI_2)) {
        return Err(Error::invalid("mixing angles must lie in (0, pi/2)"));
    }
    if psi.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("phases must be finite"));
    }
    Ok(())
}

/// Draws `m` sum-field values for one setting by inverse-CDF sampling on
/// the grid refined ×[`SAMPLING_REFINEMENT`].
#[allow(clippy::too_many_arguments)]
pub fn sample_setting(
    state: &DensityOperatorFock,
    alpha: &[f64],
    psi: &[f64],
    m: usize,
    model: DetectorModel,
    seed: u64,
    grid: &QuadratureGrid,
    scale: FieldScale,
) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::invalid("sample count must be >= 1"));
    }
    check_setting_inputs(state, alpha, psi)?;
    let fine = grid.refined(SAMPLING_REFINEMENT);
    let cdf = Cdf::new(&setting_density(state, alpha, psi, model, &fine, scale)?, &fine);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..m).map(|_| cdf.draw(rng.gen::<f64>())).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DataMode {
    /// Raw sum-field values.
    Samples,
    /// Counts on the quadrature grid.
    Histogram,
    /// Exact densities at bin centers (noiseless ideal experiment).
    Analytic,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SettingData {
    Samples(Vec<f64>),
    Counts(Vec<u64>),
    Density(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SettingRecord {
    /// Multi-index over [`ControlGrid::axes`].
    pub index: Vec<usize>,
    pub seed: u64,
    pub data: SettingData,
}

/// Sum-field data for every setting of a control grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SumFieldDataset {
    pub n_modes: usize,
    pub field_scale: FieldScale,
    pub detector: DetectorModel,
    pub seed: u64,
    /// 0 for analytic datasets.
    pub samples_per_setting: usize,
    pub mode: DataMode,
    pub control: ControlGrid,
    /// Ordered by flat setting index.
    pub records: Vec<SettingRecord>,
}

impl SumFieldDataset {
    pub fn validate(&self) -> Result<()> {
        self.control.validate()?;
        if self.control.n_modes() != self.n_modes {
            return Err(Error::invalid("control grid and dataset disagree on the mode count"));
        }
        if self.records.len() != self.control.n_settings() {
            return Err(Error::invalid(format!(
                "dataset has {} records, control grid has {} settings",
                self.records.len(),
                self.control.n_settings()
            )));
        }
        let bins = self.control.quadrature_grid.n_bins();
        let m = self.samples_per_setting;
        if (self.mode == DataMode::Analytic) != (m == 0) {
            return Err(Error::invalid("samples_per_setting must be 0 exactly for analytic datasets"));
        }
        for (flat, r) in self.records.iter().enumerate() {
            if r.index != self.control.setting_digits(flat) {
                return Err(Error::invalid(format!("record {flat} is out of order")));
            }
            let ok = match (&r.data, self.mode) {
                (SettingData::Samples(s), DataMode::Samples) => {
                    s.len() == m && s.iter().all(|v| v.is_finite())
                }
                (SettingData::Counts(c), DataMode::Histogram) => {
                    c.len() == bins && c.iter().sum::<u64>() == m as u64
                }
                (SettingData::Density(d), DataMode::Analytic) => {
                    d.len() == bins && d.iter().all(|v| v.is_finite())
                }
                _ => false,
            };
            if !ok {
                return Err(Error::invalid(format!(
                    "record {:?} does not match the dataset mode and sizes",
                    r.index
                )));
            }
        }
        Ok(())
    }

    /// ∫ p dℱ per setting (counts/M for histograms, 1 for raw samples).
    pub fn normalizations(&self) -> Vec<f64> {
        let dx = self.control.quadrature_grid.width();
        self.records
            .iter()
            .map(|r| match &r.data {
                SettingData::Samples(_) => 1.0,
                SettingData::Counts(c) => {
                    c.iter().sum::<u64>() as f64 / self.samples_per_setting as f64
                }
                SettingData::Density(d) => d.iter().sum::<f64>() * dx,
            })
            .collect()
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// s₀ = splitmix64(master), s_{k+1} = splitmix64(s_k ⊕ (i_k + 1)).
pub fn setting_seed(master: u64, index: &[usize]) -> u64 {
    index
        .iter()
        .fold(splitmix64(master), |s, &i| splitmix64(s ^ (i as u64 + 1)))
}

/// Per-setting record generation.
///
/// For the relative layout every sample first draws ψ₁ uniformly from the
/// `n_average` grid; analytic densities are averaged over that grid.
#[allow(clippy::too_many_arguments)]
pub fn build_dataset(
    state: &DensityOperatorFock,
    control: &ControlGrid,
    m: usize,
    model: DetectorModel,
    seed: u64,
    scale: FieldScale,
    mode: DataMode,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<SumFieldDataset> {
    control.validate()?;
    check_orders(state)?;
    if control.n_modes() != state.n_modes() {
        return Err(Error::invalid(format!(
            "control grid is for {} modes, state has {}",
            control.n_modes(),
            state.n_modes()
        )));
    }
    if mode != DataMode::Analytic && m == 0 {
        return Err(Error::invalid("sample count must be >= 1"));
    }
    let total = control.n_settings();
    let done = AtomicUsize::new(0);
    let records = (0..total)
        .into_par_iter()
        .map(|flat| {
            let index = control.setting_digits(flat);
            let s = setting_seed(seed, &index);
            let data = setting_record(state, control, &index, m, model, s, scale, mode)
                .map_err(|e| Error::Setting {
                    index: index.clone(),
                    source: Box::new(e),
                })?;
            let finished = done.fetch_add(1, Ordering::Relaxed) + 1;
            if let Some(cb) = progress {
                cb(finished, total);
            }
            Ok(SettingRecord {
                index,
                seed: s,
                data,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SumFieldDataset {
        n_modes: state.n_modes(),
        field_scale: scale,
        detector: model,
        seed,
        samples_per_setting: if mode == DataMode::Analytic { 0 } else { m },
        mode,
        control: control.clone(),
        records,
    })
}

/// Absolute phase vectors whose distributions make up one setting.
fn phase_branches(control: &ControlGrid, setting: &Setting) -> Vec<Vec<f64>> {
    match &control.phases {
        PhaseControl::Full { .. } => vec![setting.psi.clone()],
        PhaseControl::Relative { n_average, .. } => periodic_axis(*n_average)
            .into_iter()
            .map(|p1| {
                let mut v = vec![p1];
                v.extend(setting.psi.iter().map(|d| p1 + d));
                v
            })
            .collect(),
    }
}

#[allow(clippy::too_many_arguments)]
fn setting_record(
    state: &DensityOperatorFock,
    control: &ControlGrid,
    index: &[usize],
    m: usize,
    model: DetectorModel,
    seed: u64,
    scale: FieldScale,
    mode: DataMode,
) -> Result<SettingData> {
    let setting = control.setting(index);
    let branches = phase_branches(control, &setting);
    let grid = &control.quadrature_grid;
    if mode == DataMode::Analytic {
        let mut acc = vec![0.0; grid.n_bins()];
        for psi in &branches {
            let d = setting_density(state, &setting.alpha, psi, model, grid, scale)?;
            for (a, v) in acc.iter_mut().zip(d) {
                *a += v;
            }
        }
        let nb = branches.len() as f64;
        return Ok(SettingData::Density(acc.into_iter().map(|v| v / nb).collect()));
    }

    let fine = grid.refined(SAMPLING_REFINEMENT);
    let cdfs = branches
        .iter()
        .map(|psi| {
            setting_density(state, &setting.alpha, psi, model, &fine, scale).map(|d| Cdf::new(&d, &fine))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = move || {
        let cdf = if cdfs.len() == 1 {
            &cdfs[0]
        } else {
            &cdfs[rng.gen_range(0..cdfs.len())]
        };
        cdf.draw(rng.gen::<f64>())
    };
    match mode {
        DataMode::Samples => Ok(SettingData::Samples((0..m).map(|_| draw()).collect())),
        _ => {
            let mut counts = vec![0u64; grid.n_bins()];
            for _ in 0..m {
                let f = draw();
                let b = grid
                    .bin_of(f)
                    .expect("samples are drawn inside the grid");
                counts[b] += 1;
            }
            Ok(SettingData::Counts(counts))
        }
    }
}

/// Control parameters of a lossless beam splitter with intensity
/// transmittance T followed by phase shifters θ₁, θ₂: α = arccos √T, ψ_k = θ_k.
pub fn interferometer_params(transmittance: f64, theta1: f64, theta2: f64) -> Result<(f64, f64, f64)> {
    if !(transmittance > 0.0 && transmittance < 1.0) {
        return Err(Error::invalid(format!(
            "transmittance must lie in (0, 1), got {transmittance}"
        )));
    }
    if !(theta1.is_finite() && theta2.is_finite()) {
        return Err(Error::invalid("phases must be finite"));
    }
    Ok((transmittance.sqrt().acos(), theta1, theta2))
}
