use homotomo::state::{CHAR_TOL, TRACE_TOL};
use homotomo::{build_state, characteristic_function, mean_field, DensityOperatorFock, Error, FieldScale, StateKind, StateSpec};
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::{FRAC_PI_2, PI};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn unit() -> FieldScale {
    FieldScale::default()
}

/// ρ_A ⊗ ρ_B for two single-mode states of equal dimension.
fn kron(a: &DensityOperatorFock, b: &DensityOperatorFock) -> DensityOperatorFock {
    let d = a.dim_per_mode();
    assert_eq!(d, b.dim_per_mode());
    let size = d * d;
    let mut el = vec![c(0.0, 0.0); size * size];
    for i1 in 0..d {
        for i2 in 0..d {
            for j1 in 0..d {
                for j2 in 0..d {
                    el[(i1 * d + i2) * size + j1 * d + j2] = a.element(&[i1], &[j1]) * b.element(&[i2], &[j2]);
                }
            }
        }
    }
    DensityOperatorFock::from_elements(2, d, el, a.trace_deficit() + b.trace_deficit()).unwrap()
}

fn test_states() -> Vec<DensityOperatorFock> {
    [
        StateSpec::vacuum(2, 8),
        StateSpec::coherent(vec![c(1.0, 0.0), c(0.0, 0.0)], 16),
        StateSpec::coherent(vec![c(0.3, -0.7), c(-0.5, 0.2)], 16),
        StateSpec::fock(vec![1, 0], 8),
        StateSpec::fock(vec![2, 1], 8),
        StateSpec::two_mode_squeezed(0.5, 16),
        StateSpec::new(2, 16, StateKind::SingleModeSqueezed { mode: 1, r: 0.4, phase: 0.3 }),
    ]
    .iter()
    .map(|s| build_state(s).unwrap())
    .collect()
}

#[test]
fn vacuum_has_single_entry() {
    let s = build_state(&StateSpec::vacuum(2, 8)).unwrap();
    for (i, v) in s.elements().iter().enumerate() {
        let want = if i == 0 { 1.0 } else { 0.0 };
        assert_eq!(*v, c(want, 0.0), "entry {i}");
    }
}

#[test]
fn fock_product_single_entry() {
    let s = build_state(&StateSpec::fock(vec![1, 0], 8)).unwrap();
    assert_eq!(s.element(&[1, 0], &[1, 0]), c(1.0, 0.0));
    let nonzero = s.elements().iter().filter(|v| v.norm() > 0.0).count();
    assert_eq!(nonzero, 1);
}

#[test]
fn coherent_photon_statistics_are_poisson() {
    let s = build_state(&StateSpec::coherent(vec![c(1.0, 0.0), c(0.0, 0.0)], 16)).unwrap();
    let mut fact = 1.0;
    for n in 0..12 {
        if n > 0 {
            fact *= n as f64;
        }
        // |<n|γ>|² summed independently of the builder
        let want = (-1.0f64).exp() / fact;
        let got = s.element(&[n, 0], &[n, 0]);
        assert!((got.re - want).abs() < 1e-12, "n={n}: {got} vs {want}");
        assert!(got.im.abs() < 1e-15);
    }
    assert!((s.element(&[0, 0], &[0, 0]).re - 0.36788).abs() < 1e-5);
}

#[test]
fn truncation_deficit_is_reported_with_required_dim() {
    let err = build_state(&StateSpec::coherent(vec![c(3.0, 0.0), c(0.0, 0.0)], 8)).unwrap_err();
    match err {
        Error::Truncation { mode, required_dim, deficit } => {
            assert_eq!(mode, 0);
            assert!(required_dim > 8);
            assert!(deficit > TRACE_TOL);
        }
        other => panic!("unexpected error {other}"),
    }
    let ok = build_state(&StateSpec::coherent(vec![c(3.0, 0.0), c(0.0, 0.0)], 40)).unwrap();
    assert!(ok.trace_deficit() <= TRACE_TOL);
    assert!((ok.trace().re - 1.0).abs() < 1e-12);
}

#[test]
fn mixture_weights_must_sum_to_one() {
    use homotomo::state::MixtureComponent;
    let mix = |w: f64| {
        StateSpec::new(
            2,
            8,
            StateKind::Mixture {
                components: vec![
                    MixtureComponent { weight: w, state: StateKind::Vacuum },
                    MixtureComponent { weight: 0.5, state: StateKind::FockProduct { occupations: vec![1, 0] } },
                ],
            },
        )
    };
    assert!(build_state(&mix(0.6)).is_err());
    let s = build_state(&mix(0.5)).unwrap();
    assert!((s.element(&[0, 0], &[0, 0]).re - 0.5).abs() < 1e-15);
    assert!((s.element(&[1, 0], &[1, 0]).re - 0.5).abs() < 1e-15);
}

#[test]
fn built_states_satisfy_operator_invariants() {
    for s in test_states() {
        assert!(s.hermiticity_residual() <= 1e-12);
        let tr = s.trace();
        assert!(tr.im.abs() <= 1e-12);
        assert!(tr.re >= 1.0 - TRACE_TOL && tr.re <= 1.0 + 1e-12);
        let size = s.size();
        for i in 0..size {
            let d = s.elements()[i * size + i];
            assert!(d.im.abs() <= 1e-12 && d.re >= -1e-12);
        }
    }
}

#[test]
fn vacuum_charfn_is_gaussian() {
    let s = build_state(&StateSpec::vacuum(2, 16)).unwrap();
    for psi in [0.0, 0.7, -2.0] {
        let v = characteristic_function(&s, &[1.0, 0.0], &[psi, 0.0], unit()).unwrap();
        assert!((v - c((-0.5f64).exp(), 0.0)).norm() < 1e-12, "{v}");
    }
    // closed form over a range of z and a non-unit |F|
    let scale = FieldScale::new(0.7).unwrap();
    let s = build_state(&StateSpec::vacuum(2, 32)).unwrap();
    for z in [0.3, 1.5, 3.0] {
        let v = characteristic_function(&s, &[z, 0.5 * z], &[0.1, 2.0], scale).unwrap();
        let r2 = 1.25 * z * z * 0.49;
        assert!((v.re - (-r2 / 2.0).exp()).abs() < 1e-10 && v.im.abs() < 1e-12);
    }
}

#[test]
fn coherent_charfn_phase_is_mean_field() {
    let s = build_state(&StateSpec::coherent(vec![c(1.0, 0.0), c(0.0, 0.0)], 16)).unwrap();
    let v = characteristic_function(&s, &[1.0, 0.0], &[0.0, 0.0], unit()).unwrap();
    assert!((v.norm() - 0.60653).abs() < 1e-5);
    let want = Complex64::from_polar((-0.5f64).exp(), 2.0);
    assert!((v - want).norm() < 1e-8, "{v} vs {want}");
}

#[test]
fn mean_field_examples() {
    let vac = build_state(&StateSpec::vacuum(2, 8)).unwrap();
    assert_eq!(mean_field(&vac, 1, 0.3, unit()).unwrap(), 0.0);
    let a = build_state(&StateSpec::coherent(vec![c(1.0, 0.0), c(0.0, 0.0)], 16)).unwrap();
    assert!((mean_field(&a, 0, 0.0, unit()).unwrap() - 2.0).abs() < 1e-8);
    let b = build_state(&StateSpec::coherent(vec![c(0.0, 1.0), c(0.0, 0.0)], 16)).unwrap();
    assert!((mean_field(&b, 0, FRAC_PI_2, unit()).unwrap() - 2.0).abs() < 1e-8);
    assert!(mean_field(&b, 2, 0.0, unit()).is_err());
}

#[test]
fn field_scale_must_be_positive() {
    assert!(FieldScale::new(0.0).is_err());
    assert!(FieldScale::new(-1.0).is_err());
    assert!(FieldScale::new(f64::NAN).is_err());
    assert_eq!(FieldScale::default().get(), 1.0);
}

fn state_strategy() -> impl Strategy<Value = usize> {
    0..7usize
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn charfn_at_origin_is_one(i in state_strategy(), psi1 in -PI..PI, psi2 in -PI..PI) {
        let s = &test_states()[i];
        let v = characteristic_function(s, &[0.0, 0.0], &[psi1, psi2], unit()).unwrap();
        prop_assert!((v - c(1.0, 0.0)).norm() <= 1e-12);
    }

    #[test]
    fn charfn_bounded_and_hermitian(
        i in state_strategy(),
        z1 in -4.0..4.0f64, z2 in -4.0..4.0f64,
        psi1 in -PI..PI, psi2 in -PI..PI,
    ) {
        let s = &test_states()[i];
        let v = characteristic_function(s, &[z1, z2], &[psi1, psi2], unit()).unwrap();
        let w = characteristic_function(s, &[-z1, -z2], &[psi1, psi2], unit()).unwrap();
        prop_assert!(v.norm() <= 1.0 + CHAR_TOL);
        prop_assert!((w - v.conj()).norm() <= 1e-12);
    }

    #[test]
    fn product_states_factorize(
        g in (-1.0..1.0f64, -1.0..1.0f64),
        n in 0..3usize,
        z1 in -3.0..3.0f64, z2 in -3.0..3.0f64,
        psi1 in -PI..PI, psi2 in -PI..PI,
    ) {
        let a = build_state(&StateSpec::coherent(vec![c(g.0, g.1)], 20)).unwrap();
        let b = build_state(&StateSpec::fock(vec![n], 20)).unwrap();
        let ab = kron(&a, &b);
        let joint = characteristic_function(&ab, &[z1, z2], &[psi1, psi2], unit()).unwrap();
        let pa = characteristic_function(&a, &[z1], &[psi1], unit()).unwrap();
        let pb = characteristic_function(&b, &[z2], &[psi2], unit()).unwrap();
        prop_assert!((joint - pa * pb).norm() <= 1e-10, "{} vs {}", joint, pa * pb);
    }

    #[test]
    fn coherent_phase_covariance(
        g in (-1.0..1.0f64, -1.0..1.0f64),
        theta in -PI..PI,
        z in -3.0..3.0f64,
        psi in -PI..PI,
    ) {
        let gamma = c(g.0, g.1);
        let a = build_state(&StateSpec::coherent(vec![gamma, c(0.0, 0.0)], 20)).unwrap();
        let b = build_state(&StateSpec::coherent(vec![gamma * Complex64::from_polar(1.0, theta), c(0.0, 0.0)], 20)).unwrap();
        let va = characteristic_function(&a, &[z, 0.4], &[psi, 0.1], unit()).unwrap();
        let vb = characteristic_function(&b, &[z, 0.4], &[psi + theta, 0.1], unit()).unwrap();
        prop_assert!((va - vb).norm() <= 1e-10);
    }
}
