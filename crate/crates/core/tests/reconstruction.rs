use homotomo::fsmatrix::{symmetric_axis, Method, OutputGrid};
use homotomo::measurement::{build_dataset, ControlGrid, DataMode, DetectorModel};
use homotomo::quadrature::{
    compare_matrices, oracle_grid, oracle_matrix_element, sum_distribution_exact, FSMatrixPoint, QuadratureGrid, Route,
};
use homotomo::reconstruction::{
    charfn_eval, coordinate_map, nmode_weights, phase_averaged_reconstruct, reconstruct_element,
    reconstruct_from_joint, reconstruct_grid, AveragingOrder, CharFnSource, EmpiricalCharFn, PhaseAveraging,
    QuadratureParams, ReconstructOptions, RegularizationFilter, Taper,
};
use homotomo::{build_state, DensityOperatorFock, Error, FieldScale, StateSpec};
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, SQRT_2};

fn unit() -> FieldScale {
    FieldScale::default()
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn vacuum() -> DensityOperatorFock {
    build_state(&StateSpec::vacuum(2, 8)).unwrap()
}

fn coherent() -> DensityOperatorFock {
    build_state(&StateSpec::coherent(vec![c(1.0, 0.0), c(0.0, 0.0)], 16)).unwrap()
}

fn opts() -> ReconstructOptions {
    ReconstructOptions::default_for(2, unit())
}

#[test]
fn coordinate_map_examples() {
    let m = coordinate_map(&[1.0, 1.0], &[0.0, 0.0], &[0.0, 0.0], unit()).unwrap();
    assert_eq!(m.z, vec![1.0, 1.0]);
    assert!((m.radius - SQRT_2).abs() < 1e-15);
    assert!((m.angles[0] - FRAC_PI_4).abs() < 1e-15);
    assert_eq!(m.psi, vec![0.0, 0.0]);

    let phi = 0.3;
    let m = coordinate_map(&[1.0, 0.5], &[1.0, 0.0], &[phi, 0.0], unit()).unwrap();
    assert!((m.z[0] - SQRT_2).abs() < 1e-15);
    assert!((m.psi[0] - (phi - FRAC_PI_4)).abs() < 1e-15);

    let m = coordinate_map(&[-1.0, 0.5], &[1.0, 0.0], &[phi, 0.0], unit()).unwrap();
    assert!((m.z[0] - SQRT_2).abs() < 1e-15);
    assert!((m.psi[0] - (phi - 3.0 * FRAC_PI_4)).abs() < 1e-15);

    assert!(coordinate_map(&[1.0, 1.0], &[-0.5, 0.0], &[0.0, 0.0], unit()).is_err());
}

#[test]
fn coordinate_map_uses_field_scale() {
    // z_k = √(y² + ℱ′²/|F|⁴), arccot argument y|F|²/ℱ′
    let s = FieldScale::new(2.0).unwrap();
    let m = coordinate_map(&[0.25, 0.0], &[1.0, 0.0], &[0.0, 0.0], s).unwrap();
    assert!((m.z[0] - (0.0625f64 + 1.0 / 16.0).sqrt()).abs() < 1e-15);
    assert!((m.psi[0] + FRAC_PI_4).abs() < 1e-15);
}

#[test]
fn nmode_weight_examples() {
    let w = nmode_weights(&[FRAC_PI_4]);
    assert!((w[0] - SQRT_2 / 2.0).abs() < 1e-15 && (w[1] - SQRT_2 / 2.0).abs() < 1e-15);
    let w = nmode_weights(&[FRAC_PI_4, FRAC_PI_4]);
    for (got, want) in w.iter().zip([SQRT_2 / 2.0, 0.5, 0.5]) {
        assert!((got - want).abs() < 1e-15);
    }
    assert_eq!(w.iter().map(|v| v * v).sum::<f64>(), 1.0);
}

#[test]
fn three_mode_vacuum_sum_has_unit_variance() {
    let vac = build_state(&StateSpec::vacuum(3, 6)).unwrap();
    let grid = QuadratureGrid::new(7.0, 128).unwrap();
    for angles in [[0.2, 1.3], [FRAC_PI_4, FRAC_PI_4], [1.5, 0.05]] {
        let p = sum_distribution_exact(&vac, &angles, &[0.1, 1.0, -2.0], &grid, unit(), Route::Fourier).unwrap();
        let dx = grid.width();
        let var: f64 = p.iter().zip(grid.centers()).map(|(v, f)| v * f * f).sum::<f64>() * dx;
        assert!((var - 1.0).abs() < 1e-8, "{var}");
    }
}

#[test]
fn charfn_eval_examples() {
    let vac = vacuum();
    let src = CharFnSource::analytic(&vac);
    assert_eq!(charfn_eval(&src, 0.0, &[0.4], &[1.0, 2.0], unit()).unwrap(), c(1.0, 0.0));
    for (beta, psi) in [(0.3, [0.0, 0.0]), (1.2, [1.0, -2.0])] {
        let v = charfn_eval(&src, 2.0, &[beta], &psi, unit()).unwrap();
        assert!((v - c((-2.0f64).exp(), 0.0)).norm() < 1e-12);
    }
    assert!((charfn_eval(&src, 2.0, &[0.3], &[0.0, 0.0], unit()).unwrap().re - 0.13534).abs() < 1e-5);
}

#[test]
fn empirical_charfn_from_samples() {
    let vac = vacuum();
    let grid = QuadratureGrid::new(6.0, 64).unwrap();
    let control = ControlGrid::full(2, 3, 3, &[0.0, 0.0], grid).unwrap();
    let m = 100_000;
    let ds = build_dataset(&vac, &control, m, DetectorModel::ideal(), 1, unit(), DataMode::Samples, None).unwrap();
    let e = EmpiricalCharFn::from_dataset(&ds, None).unwrap();
    let src = CharFnSource::Empirical(&e);
    assert_eq!(charfn_eval(&src, 0.0, &[0.4], &[-1.0, -2.0], unit()).unwrap(), c(1.0, 0.0));
    let bound = 5.0 / (m as f64).sqrt();
    for (beta, psi) in [(0.2, [-0.5, -1.0]), (FRAC_PI_4, [-PI, 0.0]), (1.4, [-2.0, -3.0])] {
        let v = charfn_eval(&src, 1.0, &[beta], &psi, unit()).unwrap();
        assert!((v.norm() - (-0.5f64).exp()).abs() <= bound, "{v}");
    }
    // outside the recorded π-interval of ψ₁, and beyond the served z range
    assert!(matches!(charfn_eval(&src, 1.0, &[0.4], &[0.5, -1.0], unit()), Err(Error::Coverage(_))));
    assert!(matches!(charfn_eval(&src, e.z_cap() * 1.01, &[0.4], &[-0.5, -1.0], unit()), Err(Error::Coverage(_))));
}

#[test]
fn element_examples() {
    let vac = vacuum();
    let p = FSMatrixPoint::new(vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]);
    let r = reconstruct_element(&CharFnSource::analytic(&vac), &p, &opts(), unit()).unwrap();
    assert!((r.value - c(1.0 / (2.0 * PI), 0.0)).norm() < 1e-4);
    assert_eq!(r.amplification_bound, 1.0);
}

#[test]
fn ideal_detector_filter_changes_nothing() {
    let s = coherent();
    let src = CharFnSource::analytic(&s);
    let p = FSMatrixPoint::new(vec![1.0, -0.5], vec![0.5, 0.25], vec![0.3, 0.0]);
    let mut plain = opts();
    plain.quadrature = QuadratureParams { nodes: 128, y_max: 12.0 };
    let mut filtered = plain;
    filtered.filter = Some(RegularizationFilter::hard(12.0).unwrap());
    let a = reconstruct_element(&src, &p, &plain, unit()).unwrap();
    let b = reconstruct_element(&src, &p, &filtered, unit()).unwrap();
    assert_eq!(b.amplification_bound, 1.0);
    assert!((a.value - b.value).norm() < 1e-15);
}

#[test]
fn lossy_detector_needs_a_filter_below_the_ceiling() {
    let s = vacuum();
    let src = CharFnSource::analytic(&s);
    let p = FSMatrixPoint::new(vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]);
    let mut o = opts();
    o.detector = DetectorModel::new(0.9).unwrap();
    assert!(matches!(reconstruct_element(&src, &p, &o, unit()), Err(Error::FilterRequired { .. })));
    o.filter = Some(RegularizationFilter::hard(30.0).unwrap());
    let err = reconstruct_element(&src, &p, &o, unit()).unwrap_err();
    assert!(matches!(err, Error::Amplification { .. }));
    assert!(err.to_string().contains("lower y_cut"));
    o.filter = Some(RegularizationFilter::hard(6.0).unwrap());
    let r = reconstruct_element(&src, &p, &o, unit()).unwrap();
    assert!((r.amplification_bound - 2f64.exp()).abs() <= 1e-12 * 2f64.exp());
}

#[test]
fn filter_validation() {
    assert!(RegularizationFilter::hard(0.0).is_err());
    assert!(RegularizationFilter::hard(f64::INFINITY).is_err());
    let f = RegularizationFilter { y_cut: 6.0, taper: Taper::Cosine { width: 7.0 } };
    assert!(f.validate().is_err());
    let f = RegularizationFilter { y_cut: 6.0, taper: Taper::Cosine { width: 1.0 } };
    assert!(f.validate().is_ok());
}

#[test]
fn tapered_filter_stays_close_for_lossless_data() {
    let s = vacuum();
    let src = CharFnSource::analytic(&s);
    let grid = OutputGrid::uniform(2, 5, 4.0, 3, 0.5).unwrap();
    let mut o = opts();
    o.filter = Some(RegularizationFilter { y_cut: 8.0, taper: Taper::Cosine { width: 2.0 } });
    let r = reconstruct_grid(&src, &grid, &[0.0, 0.0], &o, unit()).unwrap();
    let oracle = oracle_grid(&s, &grid, &[0.0, 0.0], unit()).unwrap();
    assert!(compare_matrices(&r, &oracle).unwrap().linf < 1e-6);
}

#[test]
fn grid_is_hermitian_by_construction() {
    let s = build_state(&StateSpec::two_mode_squeezed(0.5, 16)).unwrap();
    let grid = OutputGrid::uniform(2, 5, 3.0, 3, 0.8).unwrap();
    let r = reconstruct_grid(&CharFnSource::analytic(&s), &grid, &[0.2, -0.4], &opts(), unit()).unwrap();
    assert_eq!(r.residuals.hermiticity, 0.0);
    for ci in 0..grid.n_centers() {
        for o in 0..grid.n_offsets() {
            let m = grid.mirror_offset(o);
            if m == o {
                continue;
            }
            assert_eq!(r.element(ci, o), r.element(ci, m).conj());
        }
    }
    assert_eq!(r.provenance.method, Method::SumField);
    assert_eq!(r.provenance.transform_stages, Some(3));
    assert_eq!(r.provenance.source, "analytic");
}

#[test]
fn quadrature_convergence_is_monotone() {
    let s = coherent();
    let src = CharFnSource::analytic(&s);
    let grid = OutputGrid::uniform(2, 3, 2.0, 3, 0.5).unwrap();
    let oracle = oracle_grid(&s, &grid, &[0.0, 0.0], unit()).unwrap();
    let mut prev = f64::INFINITY;
    // each step halves the node spacing on [−8, 8]
    for nodes in [9, 17, 33, 65] {
        let mut o = opts();
        o.quadrature = QuadratureParams { nodes, y_max: 8.0 };
        let r = reconstruct_grid(&src, &grid, &[0.0, 0.0], &o, unit()).unwrap();
        let e = compare_matrices(&r, &oracle).unwrap().linf;
        assert!(e <= 1.5 * prev, "nodes {nodes}: {e} after {prev}");
        prev = e;
    }
    assert!(prev < 1e-3);
}

#[test]
fn joint_baseline_metadata() {
    let s = vacuum();
    let grid = OutputGrid::uniform(2, 3, 2.0, 3, 0.5).unwrap();
    let r = reconstruct_from_joint(&s, &grid, &[0.0, 0.0], QuadratureParams::default_for(2, unit()), unit()).unwrap();
    assert_eq!(r.provenance.method, Method::JointBaseline);
    assert_eq!(r.provenance.transform_stages, Some(4));
    let oracle = oracle_grid(&s, &grid, &[0.0, 0.0], unit()).unwrap();
    assert!(compare_matrices(&r, &oracle).unwrap().linf < 1e-3);
}

#[test]
fn analytic_dataset_reconstructs_the_oracle() {
    let s = coherent();
    let qgrid = QuadratureGrid::default_for(&s, unit());
    let control = ControlGrid::full(2, 16, 16, &[0.0, 0.0], qgrid).unwrap();
    let ds = build_dataset(&s, &control, 0, DetectorModel::ideal(), 0, unit(), DataMode::Analytic, None).unwrap();
    let e = EmpiricalCharFn::from_dataset(&ds, None).unwrap();
    let grid = OutputGrid::new(vec![symmetric_axis(5, 4.0); 2], vec![symmetric_axis(3, 0.5), vec![0.0]]).unwrap();
    let mut o = opts();
    o.quadrature.nodes = 64;
    // binned data serve z ≤ π/Δℱ; cut radially inside that
    o.filter = Some(RegularizationFilter::hard(8.0).unwrap());
    assert!(e.z_cap() > 8.0);
    let r = reconstruct_grid(&CharFnSource::Empirical(&e), &grid, &[0.0, 0.0], &o, unit()).unwrap();
    assert_eq!(r.provenance.source, "empirical_analytic");
    let oracle = oracle_grid(&s, &grid, &[0.0, 0.0], unit()).unwrap();
    let m = compare_matrices(&r, &oracle).unwrap();
    assert!(m.linf < 5e-3, "{}", m.linf);
}

#[test]
fn phase_averaging_requires_full_circle_coverage() {
    let s = coherent();
    let src = CharFnSource::analytic(&s);
    let grid = OutputGrid::uniform(2, 3, 2.0, 1, 0.0).unwrap();
    let few = PhaseAveraging { n_points: 8, order: AveragingOrder::MatrixLevel };
    assert!(matches!(
        phase_averaged_reconstruct(&src, &grid, &[0.0, 0.0], &opts(), unit(), few),
        Err(Error::PhaseCoverage(_))
    ));

    let qgrid = QuadratureGrid::default_for(&s, unit());
    let control = ControlGrid::full(2, 2, 2, &[0.0, 0.0], qgrid).unwrap();
    let ds = build_dataset(&s, &control, 0, DetectorModel::ideal(), 0, unit(), DataMode::Analytic, None).unwrap();
    let e = EmpiricalCharFn::from_dataset(&ds, None).unwrap();
    let avg = PhaseAveraging { n_points: 16, order: AveragingOrder::MatrixLevel };
    assert!(matches!(
        phase_averaged_reconstruct(&CharFnSource::Empirical(&e), &grid, &[0.0, 0.0], &opts(), unit(), avg),
        Err(Error::PhaseCoverage(_))
    ));
}

#[test]
fn relative_dataset_phase_averaged_reconstruction() {
    let s = coherent();
    let qgrid = QuadratureGrid::default_for(&s, unit());
    let control = ControlGrid::relative(2, 12, 12, 16, qgrid).unwrap();
    let ds = build_dataset(&s, &control, 0, DetectorModel::ideal(), 0, unit(), DataMode::Analytic, None).unwrap();
    let e = EmpiricalCharFn::from_dataset(&ds, None).unwrap();
    let grid = OutputGrid::new(vec![symmetric_axis(5, 4.0); 2], vec![symmetric_axis(3, 0.5), vec![0.0]]).unwrap();
    let avg = PhaseAveraging { n_points: 16, order: AveragingOrder::DistributionLevel };
    let mut o = opts();
    o.quadrature.nodes = 64;
    o.filter = Some(RegularizationFilter::hard(8.0).unwrap());
    let r = phase_averaged_reconstruct(&CharFnSource::Empirical(&e), &grid, &[0.0, 0.0], &o, unit(), avg).unwrap();
    assert!(r.provenance.phase_averaged.is_some());
    let want = phase_averaged_reconstruct(&CharFnSource::analytic(&s), &grid, &[0.0, 0.0], &o, unit(), avg).unwrap();
    let m = compare_matrices(&r, &want).unwrap();
    assert!(m.linf < 5e-3, "{}", m.linf);
}

#[test]
fn phase_average_invariant_under_grid_shift() {
    let s = coherent();
    let src = CharFnSource::analytic(&s);
    let grid = OutputGrid::uniform(2, 3, 2.0, 3, 0.5).unwrap();
    let mut o = opts();
    o.quadrature.nodes = 64;
    for order in [AveragingOrder::MatrixLevel, AveragingOrder::DistributionLevel] {
        let avg = PhaseAveraging { n_points: 16, order };
        let a = phase_averaged_reconstruct(&src, &grid, &[0.0, 0.0], &o, unit(), avg).unwrap();
        let d = 3.0 * 2.0 * PI / 16.0;
        let b = phase_averaged_reconstruct(&src, &grid, &[d, d], &o, unit(), avg).unwrap();
        let diff = a.elements.iter().zip(&b.elements).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(diff <= 1e-6, "{order:?}: {diff}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coordinate_map_invariants(
        y in (-5.0..5.0f64, -5.0..5.0f64),
        fp in (0.0..3.0f64, 0.0..3.0f64),
        phi in (-PI..PI, -PI..PI),
    ) {
        let m = coordinate_map(&[y.0, y.1], &[fp.0, fp.1], &[phi.0, phi.1], unit()).unwrap();
        prop_assert!(m.z[0] >= y.0.abs() && m.z[1] >= y.1.abs());
        prop_assert!((m.radius - m.z[0].hypot(m.z[1])).abs() <= 1e-12);
        prop_assert!(m.angles[0] >= 0.0 && m.angles[0] <= FRAC_PI_2);
        for k in 0..2 {
            let d = [phi.0, phi.1][k] - m.psi[k];
            prop_assert!(d >= 0.0 && d <= PI);
        }
        let w = nmode_weights(&m.angles);
        prop_assert!((w[0] * m.radius - m.z[0]).abs() <= 1e-12);
        prop_assert!((w[1] * m.radius - m.z[1]).abs() <= 1e-12);
    }

    #[test]
    fn zero_offset_limit(y in -5.0..5.0f64, phi in -PI..PI) {
        prop_assume!(y != 0.0);
        let m = coordinate_map(&[y, 1.0], &[0.0, 0.0], &[phi, 0.0], unit()).unwrap();
        prop_assert_eq!(m.z[0], y.abs());
        let want = if y > 0.0 { phi } else { phi - PI };
        prop_assert!((m.psi[0] - want).abs() <= 1e-15);
    }

    #[test]
    fn weights_are_unit_norm(angles in proptest::collection::vec(0.001..FRAC_PI_2 - 0.001, 1..6)) {
        let w = nmode_weights(&angles);
        prop_assert_eq!(w.len(), angles.len() + 1);
        prop_assert!((w.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() <= 1e-15);
        prop_assert!((w[0] - angles[0].cos()).abs() <= 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn coherent_elements_match_oracle(
        f in (-4.0..4.0f64, -4.0..4.0f64),
        fp in (-1.0..1.0f64, -1.0..1.0f64),
        phi in (-PI..PI, -PI..PI),
    ) {
        let s = coherent();
        let point = FSMatrixPoint::new(vec![f.0, f.1], vec![fp.0, fp.1], vec![phi.0, phi.1]);
        let r = reconstruct_element(&CharFnSource::analytic(&s), &point, &opts(), unit()).unwrap();
        let o = oracle_matrix_element(&s, &point, unit()).unwrap();
        prop_assert!((r.value - o).norm() <= 1e-3, "{} vs {}", r.value, o);
    }

    #[test]
    fn empirical_charfn_modulus_bounded(
        z in 0.0..20.0f64,
        beta in 0.0..FRAC_PI_2,
        psi in (-PI..0.0f64, -PI..0.0f64),
    ) {
        let s = coherent();
        let qgrid = QuadratureGrid::default_for(&s, unit());
        let control = ControlGrid::full(2, 3, 3, &[0.0, 0.0], qgrid).unwrap();
        let ds = build_dataset(&s, &control, 500, DetectorModel::ideal(), 4, unit(), DataMode::Samples, None).unwrap();
        let e = EmpiricalCharFn::from_dataset(&ds, None).unwrap();
        let v = charfn_eval(&CharFnSource::Empirical(&e), z, &[beta], &[psi.0, psi.1], unit()).unwrap();
        prop_assert!(v.norm() <= 1.0 + 1e-12);
    }
}
