mod common;

use common::*;
use eivgmm_core::diagnostics::*;
use eivgmm_core::gmm::{
    fitted_regressors, gmm_distance_estimate, gmm_estimate, GmmSpec, Weighting,
};
use eivgmm_core::synthetic::{generate_eiv, EivScenario, LatentDistribution, NormalStream};
use eivgmm_core::{ols_fit, DesignMatrix, NamedMatrix};
use nalgebra::DMatrix;
use proptest::prelude::*;

#[test]
fn relevance_null_rarely_reaches_threshold() {
    let mut weak = 0;
    for seed in 0..500 {
        let mut r = NormalStream::new(seed);
        let x = named(&["x"], normal_matrix(&mut r, 2000, 1));
        let z = NamedMatrix::new(names("z", 2), normal_matrix(&mut r, 2000, 2)).unwrap();
        let rep = relevance_test(&x, &z, &[], None, RELEVANCE_THRESHOLD).unwrap();
        if rep.records[0].f_stat < RELEVANCE_THRESHOLD {
            weak += 1;
        }
    }
    assert!(weak >= 495, "{weak} of 500 below threshold");
}

#[test]
fn relevance_detects_strong_first_stage() {
    let mut r = NormalStream::new(7);
    let z = normal_matrix(&mut r, 1000, 2);
    let x = z.column(0) * 0.8 - z.column(1) * 0.4 + normal_vector(&mut r, 1000);
    let rep = relevance_test(
        &named(&["x"], DMatrix::from_column_slice(1000, 1, x.as_slice())),
        &NamedMatrix::new(names("z", 2), z).unwrap(),
        &[],
        None,
        RELEVANCE_THRESHOLD,
    )
    .unwrap();
    assert_eq!(rep.records[0].verdict, Strength::Strong);
    assert_eq!(rep.overall, OverallRelevance::Robust);
    assert_eq!(rep.records[0].instruments[0], "alpha");
}

#[test]
fn relevance_f_is_scale_invariant() {
    let mut r = NormalStream::new(8);
    let z = normal_matrix(&mut r, 500, 3);
    let x = z.column(0) * 0.2 + normal_vector(&mut r, 500);
    let xm = DMatrix::from_column_slice(500, 1, x.as_slice());
    let base = relevance_test(
        &named(&["x"], xm.clone()),
        &NamedMatrix::new(names("z", 3), z.clone()).unwrap(),
        &[],
        None,
        24.0,
    )
    .unwrap();
    let mut zs = z.clone();
    zs.column_mut(1).scale_mut(1e4);
    zs.column_mut(2).scale_mut(-3e-3);
    let scaled = relevance_test(
        &named(&["x"], xm * 250.0),
        &NamedMatrix::new(names("z", 3), zs).unwrap(),
        &[],
        None,
        24.0,
    )
    .unwrap();
    let (a, b) = (base.records[0].f_stat, scaled.records[0].f_stat);
    assert!((a - b).abs() < 1e-9 * a, "{a} vs {b}");
}

#[test]
fn relevance_excludes_own_instrument_and_caps_exact_fit() {
    let mut r = NormalStream::new(9);
    let z = normal_matrix(&mut r, 200, 2);
    let x = DMatrix::from_column_slice(200, 1, (z.column(0) * 2.0 + z.column(1)).as_slice());
    let zn = NamedMatrix::new(names("z", 2), z).unwrap();
    let rep = relevance_test(&named(&["x"], x.clone()), &zn, &[], None, 24.0).unwrap();
    assert!(rep.records[0].capped && rep.records[0].f_stat.is_infinite());
    let rep = relevance_test(&named(&["x"], x), &zn, &[Some(0)], None, 24.0).unwrap();
    assert_eq!(
        rep.records[0].instruments,
        vec!["alpha".to_string(), "z1".to_string()]
    );
    assert!(!rep.records[0].capped);
}

#[test]
fn overall_verdict_needs_one_strong_regressor() {
    let (per, overall) = relevance_verdicts(&[3.0, 24.0, 100.0], 24.0);
    assert_eq!(per, vec![Strength::Weak, Strength::Weak, Strength::Strong]);
    assert_eq!(overall, OverallRelevance::Robust);
    assert_eq!(
        relevance_verdicts(&[24.0, 1.0], 24.0).1,
        OverallRelevance::Weak
    );
    assert_eq!(
        relevance_verdicts(&[24.000001], 24.0).1,
        OverallRelevance::Robust
    );
}

#[test]
fn exogeneity_flags_correlated_errors() {
    let mut suspect = 0;
    for seed in 0..200 {
        let mut r = NormalStream::new(1000 + seed);
        let z = normal_matrix(&mut r, 1000, 2);
        let e = z.column(0) * 0.5 + normal_vector(&mut r, 1000) * 0.75f64.sqrt();
        let rep = exogeneity_test(
            &e,
            &NamedMatrix::new(names("z", 2), z).unwrap(),
            DEFAULT_ALPHA,
        )
        .unwrap();
        if rep.verdict == Exogeneity::Suspect {
            suspect += 1;
        }
    }
    assert!(suspect >= 190, "{suspect} of 200 flagged");
}

#[test]
fn exogeneity_null_size() {
    let mut ok = 0;
    for seed in 0..400 {
        let mut r = NormalStream::new(5000 + seed);
        let z = normal_matrix(&mut r, 500, 2);
        let e = normal_vector(&mut r, 500) + DMatrix::from_element(500, 1, 3.0).column(0);
        let rep = exogeneity_test(
            &e,
            &NamedMatrix::new(names("z", 2), z).unwrap(),
            DEFAULT_ALPHA,
        )
        .unwrap();
        if rep.verdict == Exogeneity::Exogenous {
            ok += 1;
        }
    }
    // two independent 5% tests: 90.25% expected
    let rate = ok as f64 / 400.0;
    assert!((rate - 0.9025).abs() < 0.045, "rate {rate}");
}

#[test]
fn ols_residuals_are_mechanically_orthogonal_to_regressors() {
    let mut r = NormalStream::new(11);
    let x = design_with_intercept(&mut r, 300, 4);
    let y =
        &x * nalgebra::DVector::from_vec(vec![0.1, 1.0, -1.0, 0.5]) + normal_vector(&mut r, 300);
    let d = DesignMatrix::new(named(&["alpha", "a", "b", "c"], x.clone())).unwrap();
    let fit = ols_fit(&y, &d, None).unwrap();
    let rep = exogeneity_test(
        &fit.residuals,
        &named(&["a", "b", "c"], x.columns(1, 3).into_owned()),
        0.05,
    )
    .unwrap();
    assert!(rep.coefficients.amax() < 1e-12);
    assert!(rep.r2 < 1e-12);
    assert_eq!(rep.verdict, Exogeneity::Exogenous);
}

fn ols_as_gmm(y: &nalgebra::DVector<f64>, x: &NamedMatrix) -> eivgmm_core::GmmFit {
    let t = x.nrows();
    gmm_estimate(&GmmSpec {
        y: y.clone(),
        exogenous: x.clone(),
        endogenous: NamedMatrix::new(vec![], DMatrix::zeros(t, 0)).unwrap(),
        excluded: NamedMatrix::new(vec![], DMatrix::zeros(t, 0)).unwrap(),
        weighting: Weighting::InverseZZ,
        hac_lags: None,
    })
    .unwrap()
}

#[test]
fn hausman_is_zero_for_identical_fits() {
    let mut r = NormalStream::new(12);
    let x = design_with_intercept(&mut r, 200, 3);
    let y = normal_vector(&mut r, 200);
    let xn = named(&["alpha", "a", "b"], x.clone());
    let d = DesignMatrix::new(xn.clone()).unwrap();
    let ols = ols_fit(&y, &d, None).unwrap();
    let g = ols_as_gmm(&y, &xn);
    let rep = hausman_test(&ols, &g, &d, &x, 0.05).unwrap();
    assert_eq!(rep.h, 0.0);
    assert_eq!(rep.dof, 0);
    assert_eq!(rep.verdict, HausmanVerdict::OlsConsistent);
}

fn eiv_hausman(seed: u64, meas: f64) -> HausmanReport {
    let mut s = EivScenario::new(seed, 2000, vec![0.5]);
    s.meas_error_sd = vec![meas];
    s.latent = LatentDistribution::Exponential;
    let data = generate_eiv(&s).unwrap();
    let xn = named(&["x"], data.x_observed);
    let d = DesignMatrix::with_intercept(&xn).unwrap();
    let ols = ols_fit(&data.y, &d, None).unwrap();
    let g = gmm_distance_estimate(
        &data.y,
        &named(&["alpha"], ones(2000)),
        &xn,
        Weighting::TwoStepHac,
        None,
        true,
    )
    .unwrap();
    let xhat = fitted_regressors(d.matrix(), &g.instruments.data).unwrap();
    hausman_test(&ols, &g, &d, &xhat, 0.05).unwrap()
}

#[test]
fn hausman_detects_measurement_error() {
    let rejections = (0..50)
        .filter(|&s| eiv_hausman(300 + s, 1.0).verdict == HausmanVerdict::MeasurementError)
        .count();
    assert!(rejections >= 45, "{rejections} of 50");
    let clean = (0..200)
        .filter(|&s| eiv_hausman(600 + s, 0.0).verdict == HausmanVerdict::MeasurementError)
        .count();
    assert!(clean <= 25, "{clean} of 200 false rejections");
}

#[test]
fn hausman_ignores_regressor_order() {
    let mut s = EivScenario::new(77, 800, vec![0.5, -0.3]);
    s.meas_error_sd = vec![0.7, 0.2];
    s.latent = LatentDistribution::Exponential;
    let data = generate_eiv(&s).unwrap();
    let run = |order: [usize; 2]| {
        let xn = NamedMatrix::new(
            order.iter().map(|&j| format!("x{j}")).collect(),
            data.x_observed.select_columns(&order),
        )
        .unwrap();
        let d = DesignMatrix::with_intercept(&xn).unwrap();
        let ols = ols_fit(&data.y, &d, None).unwrap();
        let g = gmm_distance_estimate(
            &data.y,
            &named(&["alpha"], ones(800)),
            &xn,
            Weighting::TwoStepHac,
            None,
            true,
        )
        .unwrap();
        let xhat = fitted_regressors(d.matrix(), &g.instruments.data).unwrap();
        hausman_test(&ols, &g, &d, &xhat, 0.05).unwrap()
    };
    let (a, b) = (run([0, 1]), run([1, 0]));
    assert!(
        (a.h - b.h).abs() < 1e-8 * a.h.max(1.0),
        "{} vs {}",
        a.h,
        b.h
    );
    assert_eq!(a.dof, b.dof);
}

#[test]
fn harvey_uses_hac_t_ratio() {
    let mut r = NormalStream::new(13);
    let x = design_with_intercept(&mut r, 400, 3);
    let y = &x * nalgebra::DVector::from_vec(vec![0.0, 0.3, 0.0]) + normal_vector(&mut r, 400);
    let fit = ols_fit(
        &y,
        &DesignMatrix::new(named(&["alpha", "a", "b"], x)).unwrap(),
        None,
    )
    .unwrap();
    let rec = harvey_screen(&fit, "a", HARVEY_THRESHOLD).unwrap();
    assert_eq!(rec.t_ratio, fit.t_hac[1]);
    assert!(rec.pass);
    assert!(harvey_screen(&fit, "missing", 3.0).is_err());
}

proptest! {
    #[test]
    fn harvey_is_symmetric(t in -1e3f64..1e3) {
        prop_assert_eq!(harvey_pass(t, 3.0), harvey_pass(-t, 3.0));
        prop_assert_eq!(harvey_pass(t, 3.0), t.abs() > 3.0);
    }
}
