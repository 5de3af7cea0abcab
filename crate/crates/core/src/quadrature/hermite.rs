//! Oscillator eigenfunctions in field-strength units.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::state::FieldScale;

/// Orders at or above this are refused; the upward recurrence is only
/// validated below it.
pub const MAX_ORDER: usize = 200;

/// u_n(F) = (2π|F|²)^{-1/4} (2ⁿ n!)^{-1/2} H_n(F/(|F|√2)) e^{-F²/(4|F|²)}.
pub fn quadrature_wavefunction(n: usize, f: f64, scale: FieldScale) -> Result<f64> {
    if n >= MAX_ORDER {
        return Err(Error::WavefunctionOrder(n));
    }
    if !f.is_finite() {
        return Err(Error::invalid("field strength must be finite"));
    }
    let mut out = vec![0.0; n + 1];
    fill_wavefunctions(f, scale.get(), &mut out);
    Ok(out[n])
}

/// Writes u_0(f) .. u_{len-1}(f) into `out` using
/// u_n = √(2/n) x u_{n-1} - √((n-1)/n) u_{n-2}, x = f/(|F|√2).
pub(crate) fn fill_wavefunctions(f: f64, f_abs: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    let x = f / (f_abs * std::f64::consts::SQRT_2);
    out[0] = (2.0 * PI * f_abs * f_abs).powf(-0.25) * (-0.5 * x * x).exp();
    if out.len() > 1 {
        out[1] = std::f64::consts::SQRT_2 * x * out[0];
    }
    for n in 2..out.len() {
        let nf = n as f64;
        out[n] = (2.0 / nf).sqrt() * x * out[n - 1] - ((nf - 1.0) / nf).sqrt() * out[n - 2];
    }
}

pub(crate) fn wavefunctions(f: f64, f_abs: f64, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    fill_wavefunctions(f, f_abs, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Physicists' Hermite polynomial by its explicit sum, for low orders.
    fn hermite_explicit(n: usize, x: f64) -> f64 {
        let mut s = 0.0;
        for m in 0..=n / 2 {
            let mut c = 1.0;
            for k in 1..=n {
                c *= k as f64;
            }
            let mut d = 1.0;
            for k in 1..=m {
                d *= k as f64;
            }
            for k in 1..=(n - 2 * m) {
                d *= k as f64;
            }
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            s += sign * c / d * (2.0 * x).powi((n - 2 * m) as i32);
        }
        s
    }

    #[test]
    fn low_orders_match_explicit_formula() {
        let f_abs = 0.8;
        for &f in &[-2.3, -0.4, 0.0, 0.9, 3.1] {
            let u = wavefunctions(f, f_abs, 9);
            let x = f / (f_abs * 2f64.sqrt());
            for (n, un) in u.iter().enumerate() {
                let mut fact = 1.0;
                for k in 1..=n {
                    fact *= k as f64;
                }
                let want = (2.0 * PI * f_abs * f_abs).powf(-0.25)
                    / (2f64.powi(n as i32) * fact).sqrt()
                    * hermite_explicit(n, x)
                    * (-f * f / (4.0 * f_abs * f_abs)).exp();
                assert!((un - want).abs() < 1e-13, "n={n} f={f}");
            }
        }
    }

    #[test]
    fn vacuum_peak_value() {
        let v = quadrature_wavefunction(0, 0.0, FieldScale::default()).unwrap();
        assert!((v - 0.6316187777460647).abs() < 1e-15);
        assert_eq!(quadrature_wavefunction(1, 0.0, FieldScale::default()).unwrap(), 0.0);
    }

    #[test]
    fn orthonormal_on_a_fine_grid() {
        let scale = FieldScale::new(1.4).unwrap();
        let h = 0.01;
        let n_pts = 4001;
        let mut gram = vec![0.0; 11 * 11];
        for i in 0..n_pts {
            let f = -20.0 + i as f64 * h;
            let u = wavefunctions(f, scale.get(), 11);
            for a in 0..11 {
                for b in 0..11 {
                    gram[a * 11 + b] += h * u[a] * u[b];
                }
            }
        }
        for a in 0..11 {
            for b in 0..11 {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((gram[a * 11 + b] - want).abs() < 1e-8, "({a},{b})");
            }
        }
    }

    #[test]
    fn order_ceiling() {
        assert!(quadrature_wavefunction(199, 1.0, FieldScale::default()).is_ok());
        assert!(matches!(
            quadrature_wavefunction(200, 1.0, FieldScale::default()),
            Err(Error::WavefunctionOrder(200))
        ));
    }
}
