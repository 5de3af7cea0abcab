//! Change of variables from the outer integration variables y_k to the
//! characteristic-function arguments (z_k, ψ_k).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::FieldScale;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordinateMap {
    pub z: Vec<f64>,
    pub psi: Vec<f64>,
    /// y = √(Σ z_k²).
    pub radius: f64,
    /// Hyperspherical angles α_j = atan2(√(Σ_{k>j} z_k²), z_j); β for two modes.
    pub angles: Vec<f64>,
}

/// z_k = √(y_k² + ℱ′_k²/|F|⁴) and ψ_k = φ_k − arccot(y_k|F|²/ℱ′_k) with
/// arccot in (0, π).
///
/// The arccot is evaluated as atan2(ℱ′_k, y_k|F|²), which also gives the
/// ℱ′_k = 0 limit: ψ_k = φ_k for y_k > 0 and φ_k − π for y_k < 0.
pub fn coordinate_map(
    y: &[f64],
    f_offset: &[f64],
    phases: &[f64],
    scale: FieldScale,
) -> Result<CoordinateMap> {
    let n = y.len();
    if f_offset.len() != n || phases.len() != n || n == 0 {
        return Err(Error::invalid("y, f_offset and phases must have the same nonzero length"));
    }
    if y.iter().chain(f_offset).chain(phases).any(|v| !v.is_finite()) {
        return Err(Error::invalid("coordinate inputs must be finite"));
    }
    if f_offset.iter().any(|v| *v < 0.0) {
        return Err(Error::invalid(
            "offsets must be >= 0; negative offsets come from the Hermiticity relation",
        ));
    }
    let f_abs = scale.get();
    let mut z = vec![0.0; n];
    let mut psi = vec![0.0; n];
    for k in 0..n {
        let (zk, pk) = mode_coords(y[k], f_offset[k], phases[k], f_abs);
        z[k] = zk;
        psi[k] = pk;
    }
    let radius = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    let angles = hyperspherical_angles(&z);
    Ok(CoordinateMap {
        z,
        psi,
        radius,
        angles,
    })
}

/// (z_k, ψ_k) for one mode. Any offset sign is accepted here.
#[inline]
pub(crate) fn mode_coords(y: f64, f_offset: f64, phase: f64, f_abs: f64) -> (f64, f64) {
    // −0.0 would flip atan2 to −π on the negative axis.
    let fp = if f_offset == 0.0 { 0.0 } else { f_offset };
    let s = fp / (f_abs * f_abs);
    let z = y.hypot(s);
    let psi = phase - fp.atan2(y * f_abs * f_abs);
    (z, psi)
}

pub(crate) fn hyperspherical_angles(z: &[f64]) -> Vec<f64> {
    let n = z.len();
    let mut tail = 0.0;
    let mut angles = vec![0.0; n.saturating_sub(1)];
    // tail² = Σ_{k>j} z_k², accumulated from the back
    let mut tails = vec![0.0; n];
    for k in (0..n).rev() {
        tails[k] = tail;
        tail += z[k] * z[k];
    }
    for j in 0..n.saturating_sub(1) {
        angles[j] = tails[j].sqrt().atan2(z[j]);
    }
    angles
}

/// w₁ = cos α₁, w₂ = sin α₁ cos α₂, …, w_N = sin α₁⋯sin α_{N−1}.
///
/// The last weight is taken as √(1 − Σ_{k<N} w_k²) so the weights are
/// exactly unit-norm.
pub fn nmode_weights(angles: &[f64]) -> Vec<f64> {
    let n = angles.len() + 1;
    let mut w = Vec::with_capacity(n);
    let mut sin_prod = 1.0;
    for a in angles {
        w.push(sin_prod * a.cos());
        sin_prod *= a.sin();
    }
    let rest: f64 = w.iter().map(|v| v * v).sum();
    w.push((1.0 - rest).max(0.0).sqrt());
    w
}
