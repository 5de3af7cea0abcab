//! Exact field-strength-basis quantities computed directly from a known
//! state: quadrature wavefunctions, joint and sum-field distributions, and
//! the matrix-element oracle that reconstructions are checked against.

mod hermite;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsmatrix::{trapezoid_weights, DensityMatrixFS, Method, OutputGrid, Provenance};
use crate::reconstruction::nmode_weights;
use crate::state::{charfn_unchecked, DensityOperatorFock, FieldScale};

pub use hermite::{quadrature_wavefunction, MAX_ORDER};
pub(crate) use hermite::wavefunctions;

/// Half-width of the z window used by [`Route::Fourier`], in units of 1/|F|.
pub const FOURIER_Z_MAX: f64 = 10.0;
/// Trapezoid nodes across [−z_max, z_max] for [`Route::Fourier`].
pub const FOURIER_NODES: usize = 512;
/// Largest probability mass allowed to fall outside a grid.
pub const MASS_TOL: f64 = 1e-4;

/// Uniform binning of [−f_max, f_max].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct QuadratureGrid {
    f_max: f64,
    n_bins: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    f_min: f64,
    f_max: f64,
    n_bins: usize,
}

impl TryFrom<RawGrid> for QuadratureGrid {
    type Error = Error;
    fn try_from(r: RawGrid) -> Result<Self> {
        if r.f_min != -r.f_max {
            return Err(Error::invalid("quadrature grid must be symmetric: f_min = -f_max"));
        }
        QuadratureGrid::new(r.f_max, r.n_bins)
    }
}

impl From<QuadratureGrid> for RawGrid {
    fn from(g: QuadratureGrid) -> Self {
        RawGrid {
            f_min: -g.f_max,
            f_max: g.f_max,
            n_bins: g.n_bins,
        }
    }
}

impl QuadratureGrid {
    pub fn new(f_max: f64, n_bins: usize) -> Result<Self> {
        if !(f_max.is_finite() && f_max > 0.0) {
            return Err(Error::invalid(format!("f_max must be finite and > 0, got {f_max}")));
        }
        if n_bins < 8 {
            return Err(Error::invalid(format!("n_bins must be >= 8, got {n_bins}")));
        }
        Ok(QuadratureGrid { f_max, n_bins })
    }

    /// f_max = 6|F|(1 + √n̄_max) with 64 bins.
    pub fn default_for(state: &DensityOperatorFock, scale: FieldScale) -> Self {
        let nbar = (0..state.n_modes())
            .map(|k| state.mean_photon_number(k))
            .fold(0.0, f64::max);
        QuadratureGrid {
            f_max: 6.0 * scale.get() * (1.0 + nbar.max(0.0).sqrt()),
            n_bins: 64,
        }
    }

    pub fn f_min(&self) -> f64 {
        -self.f_max
    }

    pub fn f_max(&self) -> f64 {
        self.f_max
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn width(&self) -> f64 {
        2.0 * self.f_max / self.n_bins as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        -self.f_max + (i as f64 + 0.5) * self.width()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_bins).map(|i| self.center(i)).collect()
    }

    /// Same range with `factor` times as many bins.
    pub fn refined(&self, factor: usize) -> Self {
        QuadratureGrid {
            f_max: self.f_max,
            n_bins: self.n_bins * factor,
        }
    }

    /// Left-closed bin index; `f_max` itself goes to the last bin.
    pub fn bin_of(&self, f: f64) -> Option<usize> {
        if !(f >= -self.f_max && f <= self.f_max) {
            return None;
        }
        let i = ((f + self.f_max) / self.width()).floor() as usize;
        Some(i.min(self.n_bins - 1))
    }
}

/// One density-matrix element ⟨ℱ−ℱ′, φ|ρ̂|ℱ+ℱ′, φ⟩.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FSMatrixPoint {
    pub f_center: Vec<f64>,
    pub f_offset: Vec<f64>,
    pub phases: Vec<f64>,
}

impl FSMatrixPoint {
    pub fn new(f_center: Vec<f64>, f_offset: Vec<f64>, phases: Vec<f64>) -> Self {
        FSMatrixPoint {
            f_center,
            f_offset,
            phases,
        }
    }

    pub(crate) fn validate(&self, n_modes: usize) -> Result<()> {
        for (name, v) in [
            ("f_center", &self.f_center),
            ("f_offset", &self.f_offset),
            ("phases", &self.phases),
        ] {
            if v.len() != n_modes {
                return Err(Error::invalid(format!(
                    "{name} has length {}, expected {n_modes}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("{name} must be finite")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Line integral of the joint distribution (two modes only).
    Projection,
    /// Fourier transform of Ψ along the weight direction.
    Fourier,
}

pub(crate) fn check_orders(state: &DensityOperatorFock) -> Result<()> {
    if state.dim_per_mode() > MAX_ORDER {
        return Err(Error::WavefunctionOrder(state.dim_per_mode() - 1));
    }
    Ok(())
}

/// ⟨ℱ, ψ|n⟩ = u_n(ℱ) e^{−inψ} for n < len, and its conjugate.
fn rotated_pair(f: f64, psi: f64, f_abs: f64, len: usize) -> (Vec<Complex64>, Vec<Complex64>) {
    let u = wavefunctions(f, f_abs, len);
    let bra: Vec<Complex64> = u
        .iter()
        .enumerate()
        .map(|(n, &un)| Complex64::from_polar(un, -(n as f64) * psi))
        .collect();
    let ket = bra.iter().map(|c| c.conj()).collect();
    (bra, ket)
}

/// p_j(ℱ, ψ) = ⟨ℱ, ψ|ρ̂|ℱ, ψ⟩.
pub fn joint_distribution(
    state: &DensityOperatorFock,
    f: &[f64],
    psi: &[f64],
    scale: FieldScale,
) -> Result<f64> {
    check_orders(state)?;
    let n = state.n_modes();
    if f.len() != n || psi.len() != n {
        return Err(Error::invalid(format!("f and psi must have length {n}")));
    }
    if f.iter().chain(psi).any(|v| !v.is_finite()) {
        return Err(Error::invalid("f and psi must be finite"));
    }
    Ok(joint_unchecked(state, f, psi, scale.get()))
}

fn joint_unchecked(state: &DensityOperatorFock, f: &[f64], psi: &[f64], f_abs: f64) -> f64 {
    let dim = state.dim_per_mode();
    let (bras, kets): (Vec<Vec<Complex64>>, Vec<Vec<Complex64>>) = f
        .iter()
        .zip(psi)
        .map(|(&fk, &pk)| rotated_pair(fk, pk, f_abs, dim))
        .unzip();
    let b: Vec<&[Complex64]> = bras.iter().map(Vec::as_slice).collect();
    let k: Vec<&[Complex64]> = kets.iter().map(Vec::as_slice).collect();
    state.contract_vectors(&b, &k).re
}

/// Sum-field distribution p_s(ℱ) for ℱ̂ = Σ_k w_k ℱ̂_k(ψ_k) at the bin
/// centers of `grid`, where the weights come from the mixing angles
/// (one angle for two modes).
pub fn sum_distribution_exact(
    state: &DensityOperatorFock,
    alpha: &[f64],
    psi: &[f64],
    grid: &QuadratureGrid,
    scale: FieldScale,
    route: Route,
) -> Result<Vec<f64>> {
    check_orders(state)?;
    let n = state.n_modes();
    if alpha.len() + 1 != n {
        return Err(Error::invalid(format!(
            "{n} modes need {} mixing angles, got {}",
            n - 1,
            alpha.len()
        )));
    }
    if psi.len() != n {
        return Err(Error::invalid(format!("psi must have length {n}")));
    }
    if alpha
        .iter()
        .any(|a| !(a.is_finite() && *a > 0.0 && *a < std::f64::consts::FRAC_PI_2))
    {
        return Err(Error::invalid("mixing angles must lie in (0, pi/2)"));
    }
    if psi.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("phases must be finite"));
    }
    if route == Route::Projection && n != 2 {
        return Err(Error::invalid("the projection route is defined for two modes only"));
    }
    let w = nmode_weights(alpha);
    let p = sum_distribution_unchecked(state, &w, psi, grid, scale.get(), route);
    check_mass(state, &w, psi, grid, scale.get(), &p)?;
    Ok(p)
}

pub(crate) fn sum_distribution_unchecked(
    state: &DensityOperatorFock,
    w: &[f64],
    psi: &[f64],
    grid: &QuadratureGrid,
    f_abs: f64,
    route: Route,
) -> Vec<f64> {
    let centers = grid.centers();
    match route {
        Route::Fourier => fourier_route(state, w, psi, &centers, f_abs),
        Route::Projection => projection_route(state, w, psi, &centers, grid.width(), f_abs),
    }
}

pub(crate) fn check_mass(
    state: &DensityOperatorFock,
    w: &[f64],
    psi: &[f64],
    grid: &QuadratureGrid,
    f_abs: f64,
    p: &[f64],
) -> Result<()> {
    let mass: f64 = p.iter().sum::<f64>() * grid.width();
    let outside = 1.0 - mass;
    if outside > MASS_TOL {
        return Err(Error::GridTooCoarse {
            mass_outside: outside,
            suggested_f_max: suggest_f_max(state, w, psi, f_abs).max(1.5 * grid.f_max()),
        });
    }
    Ok(())
}

/// |mean| + 10σ of the sum field, from finite differences of Ψ at z = 0.
fn suggest_f_max(state: &DensityOperatorFock, w: &[f64], psi: &[f64], f_abs: f64) -> f64 {
    let h = 1e-3 / f_abs;
    let zp: Vec<f64> = w.iter().map(|wk| h * wk).collect();
    let zm: Vec<f64> = w.iter().map(|wk| -h * wk).collect();
    let p = charfn_unchecked(state, &zp, psi, f_abs);
    let m = charfn_unchecked(state, &zm, psi, f_abs);
    let mean = (p - m).im / (2.0 * h);
    let second = -((p + m).re - 2.0) / (h * h);
    mean.abs() + 10.0 * (second - mean * mean).max(0.0).sqrt()
}

fn fourier_route(
    state: &DensityOperatorFock,
    w: &[f64],
    psi: &[f64],
    centers: &[f64],
    f_abs: f64,
) -> Vec<f64> {
    // Even node count: the positive half carries everything via Ψ(−z) = conj Ψ(z).
    let z_max = FOURIER_Z_MAX / f_abs;
    let h = 2.0 * z_max / (FOURIER_NODES - 1) as f64;
    let half = FOURIER_NODES / 2;
    let nodes: Vec<(f64, Complex64)> = (half..FOURIER_NODES)
        .map(|j| {
            let z = -z_max + j as f64 * h;
            let zk: Vec<f64> = w.iter().map(|wk| z * wk).collect();
            let weight = if j == FOURIER_NODES - 1 { 0.5 } else { 1.0 };
            (z, charfn_unchecked(state, &zk, psi, f_abs) * weight)
        })
        .collect();
    centers
        .iter()
        .map(|&f| {
            let s: f64 = nodes
                .iter()
                .map(|(z, v)| (Complex64::from_polar(1.0, -z * f) * v).re)
                .sum();
            s * h / std::f64::consts::PI
        })
        .collect()
}

fn projection_route(
    state: &DensityOperatorFock,
    w: &[f64],
    psi: &[f64],
    centers: &[f64],
    bin_width: f64,
    f_abs: f64,
) -> Vec<f64> {
    let (c, s) = (w[0], w[1]);
    let nbar: f64 = (0..state.n_modes()).map(|k| state.mean_photon_number(k)).sum();
    let t_max = 12.0 * f_abs * (1.0 + nbar.max(0.0).sqrt());
    let step = 0.5 * bin_width;
    let m = (t_max / step).ceil() as i64;
    centers
        .iter()
        .map(|&f| {
            let mut acc = 0.0;
            for i in -m..=m {
                let t = i as f64 * step;
                let weight = if i.abs() == m { 0.5 } else { 1.0 };
                let pt = [f * c - t * s, f * s + t * c];
                acc += weight * joint_unchecked(state, &pt, psi, f_abs);
            }
            acc * step
        })
        .collect()
}

/// ⟨ℱ−ℱ′, φ|ρ̂|ℱ+ℱ′, φ⟩ by direct Fock expansion.
pub fn oracle_matrix_element(
    state: &DensityOperatorFock,
    point: &FSMatrixPoint,
    scale: FieldScale,
) -> Result<Complex64> {
    check_orders(state)?;
    point.validate(state.n_modes())?;
    let dim = state.dim_per_mode();
    let f_abs = scale.get();
    let mut bras = Vec::with_capacity(state.n_modes());
    let mut kets = Vec::with_capacity(state.n_modes());
    for k in 0..state.n_modes() {
        let (f, fp, phi) = (point.f_center[k], point.f_offset[k], point.phases[k]);
        bras.push(rotated_pair(f - fp, phi, f_abs, dim).0);
        kets.push(rotated_pair(f + fp, phi, f_abs, dim).1);
    }
    let b: Vec<&[Complex64]> = bras.iter().map(Vec::as_slice).collect();
    let k: Vec<&[Complex64]> = kets.iter().map(Vec::as_slice).collect();
    Ok(state.contract_vectors(&b, &k))
}

/// Oracle elements over a whole output grid.
pub fn oracle_grid(
    state: &DensityOperatorFock,
    grid: &OutputGrid,
    phases: &[f64],
    scale: FieldScale,
) -> Result<DensityMatrixFS> {
    check_orders(state)?;
    grid.validate()?;
    let n = state.n_modes();
    if grid.n_modes() != n || phases.len() != n {
        return Err(Error::invalid(format!(
            "output grid and phases must describe {n} modes"
        )));
    }
    if phases.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("phases must be finite"));
    }
    let dim = state.dim_per_mode();
    let f_abs = scale.get();

    // Per mode, indexed [center_i * n_off_k + offset_j].
    let mut bras: Vec<Vec<Vec<Complex64>>> = Vec::with_capacity(n);
    let mut kets: Vec<Vec<Vec<Complex64>>> = Vec::with_capacity(n);
    for k in 0..n {
        let mut bk = Vec::new();
        let mut kk = Vec::new();
        for &f in &grid.centers[k] {
            for &fp in &grid.offsets[k] {
                bk.push(rotated_pair(f - fp, phases[k], f_abs, dim).0);
                kk.push(rotated_pair(f + fp, phases[k], f_abs, dim).1);
            }
        }
        bras.push(bk);
        kets.push(kk);
    }

    let nc = grid.n_centers();
    let columns: Vec<(usize, Vec<Complex64>)> = grid
        .canonical_offsets()
        .into_iter()
        .map(|j| {
            let od = grid.offset_digits(j);
            let col = (0..nc)
                .into_par_iter()
                .map(|c| {
                    let cd = grid.center_digits(c);
                    let mut b = Vec::with_capacity(n);
                    let mut kt = Vec::with_capacity(n);
                    for k in 0..n {
                        let idx = cd[k] * grid.offsets[k].len() + od[k];
                        b.push(bras[k][idx].as_slice());
                        kt.push(kets[k][idx].as_slice());
                    }
                    state.contract_vectors(&b, &kt)
                })
                .collect();
            (j, col)
        })
        .collect();

    let mut prov = Provenance::new(Method::Oracle, "state");
    prov.trace_deficit = Some(state.trace_deficit());
    Ok(DensityMatrixFS::from_canonical(
        grid.clone(),
        phases.to_vec(),
        scale,
        columns,
        prov,
    ))
}

/// Differences between two matrices on the same grid, plus the invariant
/// residuals of the first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonMetrics {
    pub linf: f64,
    pub l2_rms: f64,
    pub hermiticity_residual: f64,
    pub diagonal_imag_max: Option<f64>,
    pub diagonal_negativity: Option<f64>,
    pub diagonal_normalization: Option<f64>,
}

pub fn compare_matrices(a: &DensityMatrixFS, b: &DensityMatrixFS) -> Result<ComparisonMetrics> {
    a.check_compatible(b)?;
    let mut linf: f64 = 0.0;
    let mut sq = 0.0;
    for (x, y) in a.elements.iter().zip(&b.elements) {
        let d = (x - y).norm();
        linf = linf.max(d);
        sq += d * d;
    }
    let r = a.compute_residuals();
    Ok(ComparisonMetrics {
        linf,
        l2_rms: (sq / a.elements.len() as f64).sqrt(),
        hermiticity_residual: r.hermiticity,
        diagonal_imag_max: r.diagonal_imag_max,
        diagonal_negativity: r.diagonal_negativity,
        diagonal_normalization: r.diagonal_normalization,
    })
}

/// Diagnostic photon-number populations ⟨n|ρ̂|n⟩ for multi-indices below
/// `dim` per mode, from trapezoid quadrature over the grid.
///
/// Output grids are usually far too coarse for this to be accurate; it is a
/// sanity check, not a reconstruction.
pub fn fock_populations(m: &DensityMatrixFS, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || dim > MAX_ORDER {
        return Err(Error::invalid(format!("dim must be in 1..={MAX_ORDER}")));
    }
    let grid = &m.grid;
    let n = m.n_modes;
    let f_abs = m.field_scale.get();
    let cw: Vec<Vec<f64>> = grid.centers.iter().map(|a| trapezoid_weights(a)).collect();
    let ow: Vec<Vec<f64>> = grid.offsets.iter().map(|a| trapezoid_weights(a)).collect();
    // kernel[k][(ci, oj)][n] = 2 u_n(F−F′) u_n(F+F′) w_c w_o
    let kernel: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|k| {
            let mut out = Vec::new();
            for (ci, &f) in grid.centers[k].iter().enumerate() {
                for (oj, &fp) in grid.offsets[k].iter().enumerate() {
                    let a = wavefunctions(f - fp, f_abs, dim);
                    let b = wavefunctions(f + fp, f_abs, dim);
                    let w = 2.0 * cw[k][ci] * ow[k][oj];
                    out.push(a.iter().zip(&b).map(|(x, y)| w * x * y).collect());
                }
            }
            out
        })
        .collect();
    let size = dim.pow(n as u32);
    let no = grid.n_offsets();
    let mut pops = vec![0.0; size];
    for c in 0..grid.n_centers() {
        let cd = grid.center_digits(c);
        for o in 0..no {
            let od = grid.offset_digits(o);
            let v = m.elements[c * no + o].re;
            for (idx, p) in pops.iter_mut().enumerate() {
                let mut prod = v;
                let mut rem = idx;
                for k in (0..n).rev() {
                    let nk = rem % dim;
                    rem /= dim;
                    prod *= kernel[k][cd[k] * grid.offsets[k].len() + od[k]][nk];
                }
                *p += prod;
            }
        }
    }
    Ok(pops)
}
