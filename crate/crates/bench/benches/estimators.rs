use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use eivgmm_core::{
    gmm_distance_estimate, gmm_estimate, hac_covariance, ols_fit, DesignMatrix, EivSample,
    EivScenario, GmmSpec, LatentDistribution, NamedMatrix, Weighting,
};

const SIZES: [usize; 3] = [377, 1_000, 5_000];

struct Problem {
    sample: EivSample,
    exogenous: NamedMatrix,
    endogenous: NamedMatrix,
    design: DesignMatrix,
}

fn problem(t: usize) -> Problem {
    let mut s = EivScenario::new(17, t, vec![0.6, 1.0, 0.3, 0.3, -0.2, 0.1]);
    s.meas_error_sd[0] = 1.0;
    s.latent = LatentDistribution::Exponential;
    let sample = eivgmm_core::generate_eiv(&s).unwrap();
    let x = &sample.x_observed;
    let exo_names = ["MKT", "SMB", "HML", "RMW", "CMA"]
        .map(String::from)
        .to_vec();
    let endogenous = NamedMatrix::new(vec!["LBR".into()], x.columns(0, 1).into_owned()).unwrap();
    let exogenous = NamedMatrix::new(exo_names, x.columns(1, 5).into_owned()).unwrap();
    let design = DesignMatrix::with_intercept(&endogenous.hstack(&exogenous).unwrap()).unwrap();
    Problem {
        sample,
        exogenous,
        endogenous,
        design,
    }
}

fn bench_ols(c: &mut Criterion) {
    let mut group = c.benchmark_group("ols_fit");
    for t in SIZES {
        let p = problem(t);
        group.bench_with_input(BenchmarkId::from_parameter(t), &p, |b, p| {
            b.iter(|| ols_fit(black_box(&p.sample.y), &p.design, None).unwrap())
        });
    }
    group.finish();
}

fn bench_hac(c: &mut Criterion) {
    let mut group = c.benchmark_group("hac_covariance");
    for t in SIZES {
        let p = problem(t);
        let residuals = ols_fit(&p.sample.y, &p.design, None).unwrap().residuals;
        group.bench_with_input(BenchmarkId::from_parameter(t), &p, |b, p| {
            b.iter(|| hac_covariance(&p.design, black_box(&residuals), 6).unwrap())
        });
    }
    group.finish();
}

fn bench_gmm(c: &mut Criterion) {
    let mut group = c.benchmark_group("gmm_two_step");
    for t in SIZES {
        let p = problem(t);
        let stacked = eivgmm_core::build_cumulant_instruments(&p.endogenous, true)
            .unwrap()
            .stacked;
        let excluded = stacked.select(&stacked.names[1..]).unwrap();
        let spec = GmmSpec {
            y: p.sample.y.clone(),
            exogenous: p.exogenous.with_intercept("alpha").unwrap(),
            endogenous: p.endogenous.clone(),
            excluded,
            weighting: Weighting::TwoStepHac,
            hac_lags: None,
        };
        group.bench_with_input(BenchmarkId::from_parameter(t), &spec, |b, spec| {
            b.iter(|| gmm_estimate(black_box(spec)).unwrap())
        });
    }
    group.finish();
}

fn bench_distance(c: &mut Criterion) {
    let mut group = c.benchmark_group("gmm_distance");
    for t in SIZES {
        let p = problem(t);
        let exogenous = p.exogenous.with_intercept("alpha").unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(t), &p, |b, p| {
            b.iter(|| {
                gmm_distance_estimate(
                    black_box(&p.sample.y),
                    &exogenous,
                    &p.endogenous,
                    Weighting::TwoStepHac,
                    None,
                    true,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_ols, bench_hac, bench_gmm, bench_distance);
criterion_main!(benches);
