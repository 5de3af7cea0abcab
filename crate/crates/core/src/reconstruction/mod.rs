//! Density matrices in the field-strength basis from the joint
//! characteristic function, with N+1 Fourier integrals: the z integral that
//! turns sum-field data into Ψ, then N outer integrals over y.
//!
//! ```text
//! ρ(ℱ, ℱ′) = (2π)^{-N} ∫ d^N y e^{-i y·ℱ} e^{y²|F|²(1−η)/(2η)} Ψ(z(y, ℱ′), ψ(y, ℱ′, φ))
//! ```

mod coords;
mod source;

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsmatrix::{DensityMatrixFS, Method, OutputGrid, Provenance};
use crate::measurement::DetectorModel;
use crate::quadrature::{check_orders, wavefunctions, FSMatrixPoint};
use crate::state::{fill_displacement, DensityOperatorFock, FieldScale};

pub use coords::{coordinate_map, nmode_weights, CoordinateMap};
pub(crate) use coords::mode_coords;
pub use source::{
    charfn_eval, AveragingOrder, CharFnSource, EmpiricalCharFn, PhaseAveraging, DEFAULT_Z_CAP,
    EXPANSION_ORDER,
};

/// Default ceiling on the noise amplification bound, e^20.
pub const DEFAULT_AMPLIFICATION_CEILING: f64 = 485_165_195.409_790_3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Taper {
    None,
    /// Cosine roll-off from 1 at y_cut − width to 0 at y_cut.
    Cosine { width: f64 },
}

/// Radial cutoff on y = √(Σ z_k²) for the compensated integrand.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizationFilter {
    pub y_cut: f64,
    pub taper: Taper,
}

impl RegularizationFilter {
    pub fn hard(y_cut: f64) -> Result<Self> {
        let f = RegularizationFilter {
            y_cut,
            taper: Taper::None,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.y_cut.is_finite() && self.y_cut > 0.0) {
            return Err(Error::invalid(format!("y_cut must be finite and > 0, got {}", self.y_cut)));
        }
        if let Taper::Cosine { width } = self.taper {
            if !(width > 0.0 && width <= self.y_cut) {
                return Err(Error::invalid("taper width must lie in (0, y_cut]"));
            }
        }
        Ok(())
    }

    /// e^{y_cut²|F|²(1−η)/(2η)}.
    pub fn amplification_bound(&self, detector: DetectorModel, scale: FieldScale) -> f64 {
        (0.5 * self.y_cut * self.y_cut * detector.noise_variance(scale)).exp()
    }

    fn weight(&self, radius: f64) -> f64 {
        if radius > self.y_cut {
            return 0.0;
        }
        match self.taper {
            Taper::None => 1.0,
            Taper::Cosine { width } => {
                let start = self.y_cut - width;
                if radius <= start {
                    1.0
                } else {
                    0.5 * (1.0 + (PI * (radius - start) / width).cos())
                }
            }
        }
    }
}

/// Tensor-product trapezoid over [−y_max, y_max]^N.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureParams {
    pub nodes: usize,
    pub y_max: f64,
}

impl QuadratureParams {
    /// 128 nodes per axis up to two modes, 64 beyond; y_max = 8/|F|.
    pub fn default_for(n_modes: usize, scale: FieldScale) -> Self {
        QuadratureParams {
            nodes: if n_modes <= 2 { 128 } else { 64 },
            y_max: 8.0 / scale.get(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes < 2 {
            return Err(Error::invalid("quadrature needs at least 2 nodes per axis"));
        }
        if !(self.y_max.is_finite() && self.y_max > 0.0) {
            return Err(Error::invalid("y_max must be finite and > 0"));
        }
        Ok(())
    }

    fn nodes_and_weights(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.nodes;
        let h = 2.0 * self.y_max / (n - 1) as f64;
        let y = (0..n).map(|i| -self.y_max + i as f64 * h).collect();
        let mut w = vec![h; n];
        w[0] *= 0.5;
        w[n - 1] *= 0.5;
        (y, w)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReconstructOptions {
    /// Efficiency compensated for; η < 1 requires a filter.
    pub detector: DetectorModel,
    pub filter: Option<RegularizationFilter>,
    pub quadrature: QuadratureParams,
    pub amplification_ceiling: f64,
}

impl ReconstructOptions {
    pub fn default_for(n_modes: usize, scale: FieldScale) -> Self {
        ReconstructOptions {
            detector: DetectorModel::ideal(),
            filter: None,
            quadrature: QuadratureParams::default_for(n_modes, scale),
            amplification_ceiling: DEFAULT_AMPLIFICATION_CEILING,
        }
    }

    /// Validates and returns the amplification bound and the effective
    /// quadrature (the box shrinks to the filter cutoff when one is set).
    fn prepare(&self, scale: FieldScale) -> Result<(f64, QuadratureParams)> {
        self.quadrature.validate()?;
        let eta = self.detector.eta();
        match &self.filter {
            None if eta < 1.0 => Err(Error::FilterRequired { eta }),
            None => Ok((1.0, self.quadrature)),
            Some(f) => {
                f.validate()?;
                let bound = f.amplification_bound(self.detector, scale);
                if bound > self.amplification_ceiling {
                    return Err(Error::Amplification {
                        bound,
                        ceiling: self.amplification_ceiling,
                        y_cut: f.y_cut,
                        eta,
                    });
                }
                Ok((
                    bound,
                    QuadratureParams {
                        nodes: self.quadrature.nodes,
                        y_max: f.y_cut,
                    },
                ))
            }
        }
    }
}

/// One reconstructed element and the amplification bound it was run under.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementResult {
    pub value: Complex64,
    pub amplification_bound: f64,
}

/// Per-mode operator matrices at every y node, for integrands of the
/// form Tr[ρ̂ ⊗_k M_k(z_k, ψ_k)].
struct FactorizedModes {
    z: Vec<Vec<f64>>,
    mats: Vec<Vec<Vec<Complex64>>>,
}

impl FactorizedModes {
    fn build(
        nodes: &[f64],
        offset: &[f64],
        phases: &[f64],
        f_abs: f64,
        matrix: &(dyn Fn(f64, f64) -> Vec<Complex64> + Sync),
    ) -> Self {
        let (z, mats) = offset
            .iter()
            .zip(phases)
            .map(|(&fp, &phi)| {
                nodes
                    .par_iter()
                    .map(|&y| {
                        let (zk, pk) = mode_coords(y, fp, phi, f_abs);
                        (zk, matrix(zk, pk))
                    })
                    .unzip()
            })
            .unzip();
        FactorizedModes { z, mats }
    }
}

/// The outer-integral kernel: either Ψ from a source or the joint-baseline
/// transform of p_j.
enum Integrand<'s, 'a> {
    Source(&'s CharFnSource<'a>),
    Joint {
        state: &'s DensityOperatorFock,
        tables: &'s [JointTable],
    },
}

/// Values of the integrand Ψ(z(y), ψ(y)) over the full y node grid
/// (row-major), zero where the radial cut removes the node.
fn integrand_values(
    integrand: &Integrand<'_, '_>,
    offset: &[f64],
    phases: &[f64],
    nodes: &[f64],
    f_abs: f64,
    cut: Option<f64>,
) -> Result<Vec<Complex64>> {
    let n = offset.len();
    let q = nodes.len();
    let total = q.pow(n as u32);
    let s2: Vec<f64> = offset.iter().map(|fp| (fp / (f_abs * f_abs)).powi(2)).collect();
    let radius2 = |flat: usize| -> f64 {
        let mut r = 0.0;
        let mut rem = flat;
        for k in (0..n).rev() {
            let y = nodes[rem % q];
            rem /= q;
            r += y * y + s2[k];
        }
        r
    };
    let keep = |flat: usize| cut.map_or(true, |c| radius2(flat) <= c * c);

    let factorized = |fm: FactorizedModes,
                      state: &DensityOperatorFock,
                      attenuation: Option<DetectorModel>|
     -> Result<Vec<Complex64>> {
        let scale = FieldScale::new(f_abs)?;
        Ok((0..total)
            .into_par_iter()
            .map(|flat| {
                if !keep(flat) {
                    return Complex64::new(0.0, 0.0);
                }
                let mut refs: Vec<&[Complex64]> = Vec::with_capacity(n);
                let mut rem = flat;
                let mut idx = vec![0; n];
                for k in (0..n).rev() {
                    idx[k] = rem % q;
                    rem /= q;
                }
                for k in 0..n {
                    refs.push(&fm.mats[k][idx[k]]);
                }
                let v = state.trace_with_product(&refs);
                match attenuation {
                    Some(d) => {
                        let r2: f64 = (0..n).map(|k| fm.z[k][idx[k]].powi(2)).sum();
                        v * d.attenuation(r2.sqrt(), scale)
                    }
                    None => v,
                }
            })
            .collect())
    };

    match integrand {
        Integrand::Source(CharFnSource::Analytic { state, detector }) => {
            let dim = state.dim_per_mode();
            let fm = FactorizedModes::build(nodes, offset, phases, f_abs, &|z, psi| {
                let beta = Complex64::new(0.0, z * f_abs) * Complex64::from_polar(1.0, psi);
                let mut m = vec![Complex64::new(0.0, 0.0); dim * dim];
                fill_displacement(beta, dim, &mut m);
                m
            });
            factorized(fm, state, *detector)
        }
        Integrand::Source(CharFnSource::PhaseAveraged { inner, n_points }) => {
            let mut acc = vec![Complex64::new(0.0, 0.0); total];
            let mut shifted = phases.to_vec();
            for j in 0..*n_points {
                let theta = 2.0 * PI * j as f64 / *n_points as f64;
                for (s, p) in shifted.iter_mut().zip(phases) {
                    *s = p + theta;
                }
                let v = integrand_values(&Integrand::Source(inner), offset, &shifted, nodes, f_abs, cut)?;
                for (a, b) in acc.iter_mut().zip(v) {
                    *a += b;
                }
            }
            let inv = 1.0 / *n_points as f64;
            Ok(acc.into_iter().map(|v| v * inv).collect())
        }
        Integrand::Source(source @ CharFnSource::Empirical(_)) => (0..total)
            .into_par_iter()
            .map(|flat| {
                if !keep(flat) {
                    return Ok(Complex64::new(0.0, 0.0));
                }
                let mut z = vec![0.0; n];
                let mut psi = vec![0.0; n];
                let mut rem = flat;
                for k in (0..n).rev() {
                    let (zk, pk) = mode_coords(nodes[rem % q], offset[k], phases[k], f_abs);
                    z[k] = zk;
                    psi[k] = pk;
                    rem /= q;
                }
                source.eval_vector(&z, &psi, f_abs)
            })
            .collect(),
        Integrand::Joint { state, tables } => {
            let fm = FactorizedModes::build(nodes, offset, phases, f_abs, &|z, psi| {
                tables[0].kernel(z, psi)
            });
            factorized(fm, state, None)
        }
    }
}

/// Contracts axis `axis` of a row-major tensor with `mat` (rows × shape[axis]).
fn contract_axis(
    data: &[Complex64],
    shape: &mut [usize],
    axis: usize,
    mat: &[Complex64],
    rows: usize,
) -> Vec<Complex64> {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let len = shape[axis];
    let mut out = vec![Complex64::new(0.0, 0.0); outer * rows * inner];
    out.par_chunks_mut(rows * inner)
        .enumerate()
        .for_each(|(o, block)| {
            for r in 0..rows {
                let dst = &mut block[r * inner..(r + 1) * inner];
                for n in 0..len {
                    let m = mat[r * len + n];
                    let src = &data[(o * len + n) * inner..(o * len + n + 1) * inner];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += m * s;
                    }
                }
            }
        });
    shape[axis] = rows;
    out
}

/// Outer integrals for a set of offsets, returning one column over all
/// centers per offset.
#[allow(clippy::too_many_arguments)]
fn outer_integrals(
    integrand: &Integrand<'_, '_>,
    centers: &[Vec<f64>],
    offsets: &[Vec<f64>],
    phases: &[f64],
    detector: DetectorModel,
    filter: Option<RegularizationFilter>,
    quad: QuadratureParams,
    scale: FieldScale,
) -> Result<Vec<Vec<Complex64>>> {
    let n = phases.len();
    let f_abs = scale.get();
    let (nodes, weights) = quad.nodes_and_weights();
    let q = nodes.len();
    let sigma2 = detector.noise_variance(scale);
    let norm = (2.0 * PI).powi(-(n as i32));

    // E_k[c][n] = w_n e^{−i y_n ℱ_{k,c}}
    let mats: Vec<Vec<Complex64>> = centers
        .iter()
        .map(|axis| {
            axis.iter()
                .flat_map(|&f| {
                    nodes
                        .iter()
                        .zip(&weights)
                        .map(move |(&y, &w)| Complex64::from_polar(w, -y * f))
                })
                .collect()
        })
        .collect();

    offsets
        .iter()
        .map(|offset| {
            let mut g = integrand_values(integrand, offset, phases, &nodes, f_abs, filter.map(|f| f.y_cut))
                .map_err(|e| at_offset(e, offset))?;
            if filter.is_some() || sigma2 > 0.0 {
                let s2: f64 = offset.iter().map(|fp| (fp / (f_abs * f_abs)).powi(2)).sum();
                g.par_iter_mut().enumerate().for_each(|(flat, v)| {
                    let mut r2 = s2;
                    let mut rem = flat;
                    for _ in 0..n {
                        let y = nodes[rem % q];
                        rem /= q;
                        r2 += y * y;
                    }
                    let mut factor = (0.5 * r2 * sigma2).exp();
                    if let Some(f) = &filter {
                        factor *= f.weight(r2.sqrt());
                    }
                    *v *= factor;
                });
            }
            let mut shape = vec![q; n];
            for k in (0..n).rev() {
                g = contract_axis(&g, &mut shape, k, &mats[k], centers[k].len());
            }
            Ok(g.into_iter().map(|v| v * norm).collect())
        })
        .collect()
}

fn at_offset(e: Error, offset: &[f64]) -> Error {
    match e {
        Error::Coverage(m) => Error::Coverage(format!("offset {offset:?}: {m}")),
        other => other,
    }
}

fn check_source_inputs(source: &CharFnSource<'_>, n: usize, phases: &[f64]) -> Result<()> {
    if source.n_modes() != n || phases.len() != n {
        return Err(Error::invalid(format!(
            "source has {} modes; grid and phases must match",
            source.n_modes()
        )));
    }
    if phases.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("phases must be finite"));
    }
    match source {
        CharFnSource::Analytic { state, .. } => check_orders(state),
        CharFnSource::Empirical(e) if e.is_relative() => Err(Error::PhaseCoverage(
            "the dataset controls only relative phases; only a phase-averaged \
             reconstruction is possible"
                .into(),
        )),
        CharFnSource::Empirical(_) => Ok(()),
        CharFnSource::PhaseAveraged { inner, .. } => match inner.as_ref() {
            CharFnSource::Analytic { state, .. } => check_orders(state),
            _ => Err(Error::invalid("phase-averaged sources must wrap an analytic source")),
        },
    }
}

/// Single element ⟨ℱ−ℱ′, φ|ρ̂|ℱ+ℱ′, φ⟩. Offsets with no positive
/// component come from the Hermitian partner at −ℱ′.
pub fn reconstruct_element(
    source: &CharFnSource<'_>,
    point: &FSMatrixPoint,
    opts: &ReconstructOptions,
    scale: FieldScale,
) -> Result<ElementResult> {
    let n = source.n_modes();
    point.validate(n)?;
    check_source_inputs(source, n, &point.phases)?;
    let (bound, quad) = opts.prepare(scale)?;
    let mirrored = point.f_offset.iter().all(|v| *v <= 0.0) && point.f_offset.iter().any(|v| *v < 0.0);
    let offset: Vec<f64> = if mirrored {
        point.f_offset.iter().map(|v| -v).collect()
    } else {
        point.f_offset.clone()
    };
    let centers: Vec<Vec<f64>> = point.f_center.iter().map(|&f| vec![f]).collect();
    let cols = outer_integrals(
        &Integrand::Source(source),
        &centers,
        &[offset],
        &point.phases,
        opts.detector,
        opts.filter,
        quad,
        scale,
    )?;
    let v = cols[0][0];
    Ok(ElementResult {
        value: if mirrored { v.conj() } else { v },
        amplification_bound: bound,
    })
}

fn check_grid(grid: &OutputGrid, n: usize) -> Result<()> {
    grid.validate()?;
    if grid.n_modes() != n {
        return Err(Error::invalid(format!(
            "output grid has {} modes, expected {n}",
            grid.n_modes()
        )));
    }
    Ok(())
}

/// Reconstruction over an output grid; canonical offsets are integrated and
/// the rest filled from ρ(ℱ, −ℱ′) = conj ρ(ℱ, ℱ′).
pub fn reconstruct_grid(
    source: &CharFnSource<'_>,
    grid: &OutputGrid,
    phases: &[f64],
    opts: &ReconstructOptions,
    scale: FieldScale,
) -> Result<DensityMatrixFS> {
    let n = source.n_modes();
    check_grid(grid, n)?;
    check_source_inputs(source, n, phases)?;
    reconstruct_grid_unchecked(source, grid, phases, opts, scale)
}

fn reconstruct_grid_unchecked(
    source: &CharFnSource<'_>,
    grid: &OutputGrid,
    phases: &[f64],
    opts: &ReconstructOptions,
    scale: FieldScale,
) -> Result<DensityMatrixFS> {
    let n = source.n_modes();
    let (bound, quad) = opts.prepare(scale)?;
    let canon = grid.canonical_offsets();
    let offsets: Vec<Vec<f64>> = canon.iter().map(|&j| grid.offset(j)).collect();
    let cols = outer_integrals(
        &Integrand::Source(source),
        &grid.centers,
        &offsets,
        phases,
        opts.detector,
        opts.filter,
        quad,
        scale,
    )?;
    let mut prov = Provenance::new(Method::SumField, source.label());
    prov.transform_stages = Some(n + 1);
    prov.eta = opts.detector.eta();
    prov.filter = opts.filter;
    prov.amplification_bound = Some(bound);
    prov.quadrature = Some(quad);
    prov.trace_deficit = source.trace_deficit();
    if let CharFnSource::PhaseAveraged { n_points, .. } = source {
        prov.phase_averaged = Some(PhaseAveraging {
            n_points: *n_points,
            order: AveragingOrder::DistributionLevel,
        });
    }
    if let CharFnSource::Empirical(e) = source {
        if let Some(n_points) = e.n_average() {
            prov.phase_averaged = Some(PhaseAveraging {
                n_points,
                order: AveragingOrder::DistributionLevel,
            });
        }
    }
    Ok(DensityMatrixFS::from_canonical(
        grid.clone(),
        phases.to_vec(),
        scale,
        canon.into_iter().zip(cols).collect(),
        prov,
    ))
}

/// Phase-averaged density matrix: the average over a common shift
/// θ_j = 2πj/n of every reference phase.
///
/// Analytic sources are averaged at the requested order. Empirical sources
/// must come from a relative-phase dataset, whose data are already averaged
/// over its own ψ₁ grid.
pub fn phase_averaged_reconstruct(
    source: &CharFnSource<'_>,
    grid: &OutputGrid,
    phases: &[f64],
    opts: &ReconstructOptions,
    scale: FieldScale,
    averaging: PhaseAveraging,
) -> Result<DensityMatrixFS> {
    let n = source.n_modes();
    check_grid(grid, n)?;
    match source {
        CharFnSource::Empirical(e) => {
            if let Some((lo, hi)) = e.psi_span() {
                return Err(Error::PhaseCoverage(format!(
                    "the dataset covers psi_1 only on [{lo:.6}, {hi:.6}]; phase averaging \
                     needs psi_1 over a full 2*pi (simulate with the relative-phase layout)"
                )));
            }
            if phases.len() != n || phases.iter().any(|p| !p.is_finite()) {
                return Err(Error::invalid(format!("phases must be {n} finite values")));
            }
            reconstruct_grid_unchecked(source, grid, phases, opts, scale)
        }
        CharFnSource::PhaseAveraged { .. } => Err(Error::invalid("source is already phase-averaged")),
        CharFnSource::Analytic { .. } => {
            check_source_inputs(source, n, phases)?;
            if averaging.n_points < crate::measurement::MIN_PHASE_AVERAGE_POINTS {
                return Err(Error::PhaseCoverage(format!(
                    "phase averaging needs at least {} psi_1 points, got {}",
                    crate::measurement::MIN_PHASE_AVERAGE_POINTS,
                    averaging.n_points
                )));
            }
            match averaging.order {
                AveragingOrder::DistributionLevel => {
                    let wrapped = CharFnSource::PhaseAveraged {
                        inner: Box::new(source.clone()),
                        n_points: averaging.n_points,
                    };
                    reconstruct_grid_unchecked(&wrapped, grid, phases, opts, scale)
                }
                AveragingOrder::MatrixLevel => {
                    let np = averaging.n_points;
                    let mut acc: Option<DensityMatrixFS> = None;
                    for j in 0..np {
                        let theta = 2.0 * PI * j as f64 / np as f64;
                        let shifted: Vec<f64> = phases.iter().map(|p| p + theta).collect();
                        let m = reconstruct_grid_unchecked(source, grid, &shifted, opts, scale)?;
                        match &mut acc {
                            None => acc = Some(m),
                            Some(a) => {
                                for (x, y) in a.elements.iter_mut().zip(&m.elements) {
                                    *x += y;
                                }
                            }
                        }
                    }
                    let mut out = acc.expect("at least one shift");
                    let inv = 1.0 / np as f64;
                    for x in &mut out.elements {
                        *x *= inv;
                    }
                    out.phases = phases.to_vec();
                    out.provenance.phase_averaged = Some(averaging);
                    out.residuals = out.compute_residuals();
                    Ok(out)
                }
            }
        }
    }
}

/// Tabulated u_a(ℱ) u_b(ℱ) for one mode, used to Fourier-transform the
/// joint distribution.
struct JointTable {
    dim: usize,
    f: Vec<f64>,
    w: Vec<f64>,
    /// u[m * dim + a]
    u: Vec<f64>,
}

impl JointTable {
    fn new(dim: usize, f_abs: f64) -> Self {
        let f_max = 1.5 * f_abs * std::f64::consts::SQRT_2 * ((2 * dim + 1) as f64).sqrt() + 4.0 * f_abs;
        let n = (2.0 * f_max / (0.1 * f_abs)).ceil() as usize + 1;
        let h = 2.0 * f_max / (n - 1) as f64;
        let f: Vec<f64> = (0..n).map(|i| -f_max + i as f64 * h).collect();
        let mut w = vec![h; n];
        w[0] *= 0.5;
        w[n - 1] *= 0.5;
        let u = f.iter().flat_map(|&x| wavefunctions(x, f_abs, dim)).collect();
        JointTable { dim, f, w, u }
    }

    /// [b * dim + a] = e^{i(b−a)ψ} ∫ dℱ e^{izℱ} u_a(ℱ) u_b(ℱ).
    fn kernel(&self, z: f64, psi: f64) -> Vec<Complex64> {
        let d = self.dim;
        let mut s = vec![Complex64::new(0.0, 0.0); d * d];
        for (m, (&f, &w)) in self.f.iter().zip(&self.w).enumerate() {
            let e = Complex64::from_polar(w, z * f);
            let u = &self.u[m * d..(m + 1) * d];
            for a in 0..d {
                let ea = e * u[a];
                for b in a..d {
                    s[a * d + b] += ea * u[b];
                }
            }
        }
        let mut out = vec![Complex64::new(0.0, 0.0); d * d];
        for a in 0..d {
            for b in 0..d {
                let v = if a <= b { s[a * d + b] } else { s[b * d + a] };
                out[b * d + a] = v * Complex64::from_polar(1.0, (b as f64 - a as f64) * psi);
            }
        }
        out
    }
}

/// 2N-transform baseline: the joint distributions p_j(ℱ, ψ) are
/// Fourier-transformed over all N field strengths to give Ψ, followed by
/// the same N outer integrals.
pub fn reconstruct_from_joint(
    state: &DensityOperatorFock,
    grid: &OutputGrid,
    phases: &[f64],
    quad: QuadratureParams,
    scale: FieldScale,
) -> Result<DensityMatrixFS> {
    let n = state.n_modes();
    check_orders(state)?;
    check_grid(grid, n)?;
    quad.validate()?;
    if phases.len() != n || phases.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid(format!("phases must be {n} finite values")));
    }
    let tables = [JointTable::new(state.dim_per_mode(), scale.get())];
    let canon = grid.canonical_offsets();
    let offsets: Vec<Vec<f64>> = canon.iter().map(|&j| grid.offset(j)).collect();
    let cols = outer_integrals(
        &Integrand::Joint {
            state,
            tables: &tables,
        },
        &grid.centers,
        &offsets,
        phases,
        DetectorModel::ideal(),
        None,
        quad,
        scale,
    )?;
    let mut prov = Provenance::new(Method::JointBaseline, "state");
    prov.transform_stages = Some(2 * n);
    prov.amplification_bound = Some(1.0);
    prov.quadrature = Some(quad);
    prov.trace_deficit = Some(state.trace_deficit());
    Ok(DensityMatrixFS::from_canonical(
        grid.clone(),
        phases.to_vec(),
        scale,
        canon.into_iter().zip(cols).collect(),
        prov,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{compare_matrices, oracle_grid, oracle_matrix_element};
    use crate::state::{build_state, StateSpec};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn vacuum_element() {
        let vac = build_state(&StateSpec::vacuum(2, 4)).unwrap();
        let s = FieldScale::default();
        let pt = FSMatrixPoint::new(vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]);
        let r = reconstruct_element(&CharFnSource::analytic(&vac), &pt, &ReconstructOptions::default_for(2, s), s).unwrap();
        assert!((r.value - c(1.0 / (2.0 * PI), 0.0)).norm() < 1e-4);
        assert_eq!(r.amplification_bound, 1.0);
    }

    #[test]
    fn coherent_elements_match_oracle() {
        let st = build_state(&StateSpec::coherent(vec![c(1.0, 0.0), c(0.0, 0.0)], 16)).unwrap();
        let s = FieldScale::default();
        let opts = ReconstructOptions::default_for(2, s);
        for (f, fp, phi) in [
            ([0.5, -0.3], [0.4, 0.2], [0.0, 0.0]),
            ([1.7, 0.2], [0.0, 0.7], [0.6, -1.0]),
            ([2.0, 0.0], [-0.5, -0.25], [0.0, 0.3]),
            ([-0.4, 1.0], [0.5, -0.5], [1.2, 0.0]),
        ] {
            let pt = FSMatrixPoint::new(f.to_vec(), fp.to_vec(), phi.to_vec());
            let got = reconstruct_element(&CharFnSource::analytic(&st), &pt, &opts, s).unwrap().value;
            let want = oracle_matrix_element(&st, &pt, s).unwrap();
            assert!((got - want).norm() < 1e-6, "{pt:?}: {got} vs {want}");
        }
    }

    #[test]
    fn filter_is_required_below_unit_efficiency() {
        let vac = build_state(&StateSpec::vacuum(2, 4)).unwrap();
        let s = FieldScale::default();
        let mut opts = ReconstructOptions::default_for(2, s);
        opts.detector = DetectorModel::new(0.9).unwrap();
        let pt = FSMatrixPoint::new(vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]);
        let src = CharFnSource::analytic(&vac);
        assert!(matches!(reconstruct_element(&src, &pt, &opts, s), Err(Error::FilterRequired { .. })));
        opts.filter = Some(RegularizationFilter::hard(6.0).unwrap());
        let r = reconstruct_element(&src, &pt, &opts, s).unwrap();
        assert!((r.amplification_bound - 2f64.exp()).abs() < 1e-12);
        opts.filter = Some(RegularizationFilter::hard(30.0).unwrap());
        assert!(matches!(reconstruct_element(&src, &pt, &opts, s), Err(Error::Amplification { .. })));
    }

    #[test]
    fn degraded_source_is_compensated() {
        let st = build_state(&StateSpec::coherent(vec![c(0.5, 0.5), c(0.0, 0.0)], 16)).unwrap();
        let s = FieldScale::default();
        let det = DetectorModel::new(0.9).unwrap();
        let mut opts = ReconstructOptions::default_for(2, s);
        opts.detector = det;
        opts.filter = Some(RegularizationFilter::hard(6.0).unwrap());
        let grid = OutputGrid::uniform(2, 5, 4.0, 3, 0.5).unwrap();
        let src = CharFnSource::Analytic {
            state: &st,
            detector: Some(det),
        };
        let m = reconstruct_grid(&src, &grid, &[0.0, 0.0], &opts, s).unwrap();
        let o = oracle_grid(&st, &grid, &[0.0, 0.0], s).unwrap();
        assert!(compare_matrices(&m, &o).unwrap().linf < 1e-4);
    }

    #[test]
    fn baseline_agrees_with_oracle() {
        let st = build_state(&StateSpec::coherent(vec![c(0.3, -0.4), c(0.1, 0.0)], 12)).unwrap();
        let s = FieldScale::default();
        let grid = OutputGrid::uniform(2, 3, 2.0, 3, 0.5).unwrap();
        let q = QuadratureParams { nodes: 64, y_max: 8.0 };
        let b = reconstruct_from_joint(&st, &grid, &[0.2, 0.0], q, s).unwrap();
        let o = oracle_grid(&st, &grid, &[0.2, 0.0], s).unwrap();
        assert!(compare_matrices(&b, &o).unwrap().linf < 1e-6);
        assert_eq!(b.provenance.transform_stages, Some(4));
        assert_eq!(b.residuals.hermiticity, 0.0);
    }

    #[test]
    fn phase_average_orders_agree() {
        let st = build_state(&StateSpec::coherent(vec![c(0.6, 0.0), c(0.0, 0.0)], 14)).unwrap();
        let s = FieldScale::default();
        let grid = OutputGrid::uniform(2, 3, 2.0, 3, 0.5).unwrap();
        let mut opts = ReconstructOptions::default_for(2, s);
        opts.quadrature.nodes = 48;
        let src = CharFnSource::analytic(&st);
        let a = phase_averaged_reconstruct(&src, &grid, &[0.0, 0.0], &opts, s, PhaseAveraging { n_points: 16, order: AveragingOrder::MatrixLevel }).unwrap();
        let b = phase_averaged_reconstruct(&src, &grid, &[0.0, 0.0], &opts, s, PhaseAveraging { n_points: 16, order: AveragingOrder::DistributionLevel }).unwrap();
        for (x, y) in a.elements.iter().zip(&b.elements) {
            assert!((x - y).norm() < 1e-12);
        }
        assert!(phase_averaged_reconstruct(&src, &grid, &[0.0, 0.0], &opts, s, PhaseAveraging { n_points: 8, order: AveragingOrder::MatrixLevel }).is_err());
    }

    #[test]
    fn axis_contraction_matches_direct_sum() {
        let data: Vec<Complex64> = (0..12).map(|i| c(i as f64, -(i as f64) * 0.5)).collect();
        let mat: Vec<Complex64> = (0..8).map(|i| c(1.0, i as f64)).collect();
        let mut shape = vec![3, 4];
        let out = contract_axis(&data, &mut shape, 1, &mat, 2);
        assert_eq!(shape, vec![3, 2]);
        for o in 0..3 {
            for r in 0..2 {
                let want: Complex64 = (0..4).map(|n| mat[r * 4 + n] * data[o * 4 + n]).sum();
                assert!((out[o * 2 + r] - want).norm() < 1e-12);
            }
        }
    }
}
