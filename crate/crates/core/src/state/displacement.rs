//! Matrix elements of the displacement operator in a truncated Fock basis.
//!
//! The elements are the exact infinite-dimensional values ⟨m|D(β)|n⟩ for
//! `m, n < dim`, generated column by column from
//!
//! ```text
//! ⟨m|D|0⟩ = e^{-|β|²/2} β^m / √m!
//! √n ⟨m|D|n⟩ = √m ⟨m-1|D|n-1⟩ - β* ⟨m|D|n-1⟩
//! ```
//!
//! which follows from `D a† D† = a† - β*`. Exponentiating a truncated
//! generator instead would corrupt the large-|β| corner that the
//! reconstruction integrals reach.

use num_complex::Complex64;

/// Row-major `dim × dim` matrix with entry `[m * dim + n] = ⟨m|D(β)|n⟩`.
pub fn displacement_matrix(beta: Complex64, dim: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); dim * dim];
    fill_displacement(beta, dim, &mut out);
    out
}

/// In-place variant of [`displacement_matrix`]; `out.len()` must be `dim * dim`.
pub fn fill_displacement(beta: Complex64, dim: usize, out: &mut [Complex64]) {
    assert_eq!(out.len(), dim * dim);
    let zero = Complex64::new(0.0, 0.0);
    if beta == zero {
        out.fill(zero);
        for k in 0..dim {
            out[k * dim + k] = Complex64::new(1.0, 0.0);
        }
        return;
    }

    let r2 = beta.norm_sqr();
    let ln_r = beta.norm().ln();
    let theta = beta.arg();

    // First column in log space so that e^{-|β|²/2} cannot underflow
    // before the β^m growth is applied.
    let mut ln_fact = 0.0;
    for m in 0..dim {
        if m > 0 {
            ln_fact += (m as f64).ln();
        }
        let ln_mag = -0.5 * r2 + m as f64 * ln_r - 0.5 * ln_fact;
        out[m * dim] = Complex64::from_polar(ln_mag.exp(), m as f64 * theta);
    }

    let beta_conj = beta.conj();
    for n in 1..dim {
        let inv_sqrt_n = 1.0 / (n as f64).sqrt();
        for m in 0..dim {
            let diag = if m > 0 {
                out[(m - 1) * dim + (n - 1)] * (m as f64).sqrt()
            } else {
                zero
            };
            out[m * dim + n] = (diag - beta_conj * out[m * dim + n - 1]) * inv_sqrt_n;
        }
    }
}
