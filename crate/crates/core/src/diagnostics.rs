//! Instrument relevance and exogeneity, the Hausman comparison of OLS with
//! IV/GMM, and the |t| > 3 credibility screen.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::gmm::{chi2_sf, GmmFit};
use crate::instruments::CONSTANT;
use crate::linalg::{check_full_rank, psd_pinv, spd_inverse, LeastSquares, NamedMatrix};
use crate::regression::{ols_fit, DesignMatrix, FitResult, INTERCEPT};

/// First-stage F above which an instrument set counts as strong.
pub const RELEVANCE_THRESHOLD: f64 = 24.0;
/// Absolute t-ratio a factor must exceed to pass the credibility screen.
pub const HARVEY_THRESHOLD: f64 = 3.0;
pub const DEFAULT_ALPHA: f64 = 0.05;
/// Relative eigenvalue cut-off for the Hausman variance difference.
pub const HAUSMAN_RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strength {
    Weak,
    Strong,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverallRelevance {
    Robust,
    Weak,
}

/// Strong iff `f > threshold`.
pub fn strength(f: f64, threshold: f64) -> Strength {
    if f > threshold {
        Strength::Strong
    } else {
        Strength::Weak
    }
}

/// The instruments are robust when at least one regression clears the bar.
pub fn relevance_verdicts(f_values: &[f64], threshold: f64) -> (Vec<Strength>, OverallRelevance) {
    let per: Vec<Strength> = f_values.iter().map(|&f| strength(f, threshold)).collect();
    let overall = if per.contains(&Strength::Strong) {
        OverallRelevance::Robust
    } else {
        OverallRelevance::Weak
    };
    (per, overall)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceRecord {
    pub regressor: String,
    /// Instruments in the first stage, intercept first.
    pub instruments: Vec<String>,
    pub coefficients: DVector<f64>,
    /// HAC t-statistics of the coefficients.
    pub t_stats: DVector<f64>,
    pub f_stat: f64,
    /// The regressor is an exact linear function of the instruments; F is
    /// reported as infinite.
    pub capped: bool,
    pub verdict: Strength,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceReport {
    pub records: Vec<RelevanceRecord>,
    pub overall: OverallRelevance,
    pub threshold: f64,
}

fn ensure_intercept(z: &NamedMatrix) -> Result<(NamedMatrix, usize)> {
    let ones = (0..z.ncols()).find(|&j| z.data.column(j).iter().all(|&v| v == 1.0));
    match ones {
        Some(j) => Ok((z.clone(), j)),
        None => Ok((z.with_intercept(CONSTANT)?, 0)),
    }
}

/// First-stage regressions of each regressor on the instruments with a
/// HAC-robust Wald F that every non-intercept coefficient is zero.
///
/// `own[j]`, when set, is the column of `z` built from regressor `j`; it is
/// left out of that regressor's first stage. An intercept is added to `z`
/// when none is present.
pub fn relevance_test(
    x: &NamedMatrix,
    z: &NamedMatrix,
    own: &[Option<usize>],
    hac_lags: Option<usize>,
    threshold: f64,
) -> Result<RelevanceReport> {
    if x.nrows() != z.nrows() {
        return Err(Error::Shape(format!(
            "{} regressor rows, {} instrument rows",
            x.nrows(),
            z.nrows()
        )));
    }
    if !own.is_empty() && own.len() != x.ncols() {
        return Err(Error::Shape(format!(
            "{} own-instrument entries for {} regressors",
            own.len(),
            x.ncols()
        )));
    }
    let had_intercept = (0..z.ncols()).any(|j| z.data.column(j).iter().all(|&v| v == 1.0));
    let (zfull, icol) = ensure_intercept(z)?;
    let shift = usize::from(!had_intercept);

    let mut records = Vec::with_capacity(x.ncols());
    for (j, regressor) in x.names.iter().enumerate() {
        let skip = own.get(j).copied().flatten().map(|c| c + shift);
        let keep: Vec<usize> = (0..zfull.ncols()).filter(|&c| Some(c) != skip).collect();
        if keep.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "fewer than two instruments remain for `{regressor}`"
            )));
        }
        // intercept first, then the rest in order
        let mut order = vec![icol];
        order.extend(keep.iter().copied().filter(|&c| c != icol));
        let mut names: Vec<String> = order.iter().map(|&c| zfull.names[c].clone()).collect();
        names[0] = INTERCEPT.to_string();
        let data = zfull.data.select_columns(&order);
        let design = DesignMatrix::new(NamedMatrix::new(names.clone(), data)?)?;
        let xj = x.data.column(j).into_owned();
        let fit = ols_fit(&xj, &design, hac_lags)?;

        let q = order.len() - 1;
        let mean = xj.mean();
        let tss: f64 = xj.iter().map(|v| (v - mean).powi(2)).sum();
        let rss = fit.residuals.norm_squared();
        let pi = fit.coefficients.rows(1, q).into_owned();
        let v = fit.vcov_hac.view((1, 1), (q, q)).into_owned();
        let (f_stat, capped) = if rss <= 1e-20 * tss.max(f64::MIN_POSITIVE) {
            (f64::INFINITY, true)
        } else {
            match spd_inverse(&v) {
                Ok(vinv) => (pi.dot(&(vinv * &pi)) / q as f64, false),
                Err(_) => (f64::INFINITY, true),
            }
        };
        records.push(RelevanceRecord {
            regressor: regressor.clone(),
            instruments: names,
            coefficients: fit.coefficients.clone(),
            t_stats: fit.t_hac.clone(),
            f_stat,
            capped,
            verdict: strength(f_stat, threshold),
        });
    }
    let f: Vec<f64> = records.iter().map(|r| r.f_stat).collect();
    let (_, overall) = relevance_verdicts(&f, threshold);
    Ok(RelevanceReport {
        records,
        overall,
        threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exogeneity {
    Exogenous,
    Suspect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExogeneityReport {
    /// Intercept first, then the instruments.
    pub names: Vec<String>,
    pub coefficients: DVector<f64>,
    pub p_values: DVector<f64>,
    pub r2: f64,
    pub alpha: f64,
    pub verdict: Exogeneity,
}

/// Regresses fitted residuals on the instruments (plus an intercept).
///
/// The verdict is `Exogenous` when no instrument coefficient is significant
/// at `alpha`; the intercept is reported but not part of the verdict.
/// Coefficients at machine zero mean the residuals are orthogonal to the
/// instruments by construction, not that exogeneity has been demonstrated.
pub fn exogeneity_test(
    residuals: &DVector<f64>,
    z: &NamedMatrix,
    alpha: f64,
) -> Result<ExogeneityReport> {
    if residuals.len() != z.nrows() {
        return Err(Error::Shape(format!(
            "{} residuals for {} instrument rows",
            residuals.len(),
            z.nrows()
        )));
    }
    let (zfull, icol) = ensure_intercept(z)?;
    let mut order = vec![icol];
    order.extend((0..zfull.ncols()).filter(|&c| c != icol));
    let mut names: Vec<String> = order.iter().map(|&c| zfull.names[c].clone()).collect();
    names[0] = INTERCEPT.to_string();
    let design = DesignMatrix::new(NamedMatrix::new(
        names.clone(),
        zfull.data.select_columns(&order),
    )?)?;
    let fit = ols_fit(residuals, &design, Some(0))?;
    let p_values = fit.t_classical.map(|t| fit.p_value(t));

    let mean = residuals.mean();
    let tss: f64 = residuals.iter().map(|v| (v - mean).powi(2)).sum();
    let r2 = if tss > 0.0 {
        (1.0 - fit.residuals.norm_squared() / tss).max(0.0)
    } else {
        0.0
    };
    let suspect = p_values.iter().skip(1).any(|&p| p.is_nan() || p <= alpha);
    Ok(ExogeneityReport {
        names,
        coefficients: fit.coefficients,
        p_values,
        r2,
        alpha,
        verdict: if suspect {
            Exogeneity::Suspect
        } else {
            Exogeneity::Exogenous
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HausmanVerdict {
    OlsConsistent,
    MeasurementError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HausmanReport {
    pub h: f64,
    /// Numerical rank of the variance difference actually inverted.
    pub dof: usize,
    pub p_value: f64,
    pub s2_common: f64,
    pub shared: Vec<String>,
    /// `b_IVGMM - b_OLS` over the shared coefficients.
    pub delta: DVector<f64>,
    pub verdict: HausmanVerdict,
}

/// `H = d'[(X̂'X̂)^{-1} - (X'X)^{-1}]^{-1} d / s²` over the coefficients the
/// two fits share, with `s²` from the OLS fit.
///
/// The bracketed difference is symmetrised and reduced to its positive
/// semidefinite part before a pseudo-inverse; `dof` is its retained rank.
pub fn hausman_test(
    ols: &FitResult,
    ivgmm: &GmmFit,
    x: &DesignMatrix,
    x_hat: &DMatrix<f64>,
    alpha: f64,
) -> Result<HausmanReport> {
    if x_hat.shape() != x.matrix().shape() {
        return Err(Error::Shape(format!(
            "X is {:?}, X̂ is {:?}",
            x.matrix().shape(),
            x_hat.shape()
        )));
    }
    if ols.nobs() != x.nobs() || ivgmm.fit.nobs() != x.nobs() {
        return Err(Error::Shape(
            "fits were estimated on different samples".into(),
        ));
    }
    let shared: Vec<String> = ivgmm
        .fit
        .names
        .iter()
        .filter(|n| ols.names.contains(n) && x.names().contains(n))
        .cloned()
        .collect();
    if shared.is_empty() {
        return Err(Error::InvalidArgument(
            "the fits share no coefficients".into(),
        ));
    }
    check_full_rank(x.matrix(), x.names())?;
    check_full_rank(x_hat, x.names())?;
    let xtx_inv = LeastSquares::new(x.matrix()).xtx_inverse();
    let xhat_inv = LeastSquares::new(x_hat).xtx_inverse();
    let diff = xhat_inv - xtx_inv;

    let idx: Vec<usize> = shared
        .iter()
        .map(|n| {
            x.names()
                .iter()
                .position(|m| m == n)
                .expect("shared name is in X")
        })
        .collect();
    let sub = DMatrix::from_fn(idx.len(), idx.len(), |a, b| diff[(idx[a], idx[b])]);
    let delta = DVector::from_iterator(
        shared.len(),
        shared
            .iter()
            .map(|n| ivgmm.fit.coefficient(n).unwrap() - ols.coefficient(n).unwrap()),
    );
    let (pinv, dof) = psd_pinv(&sub, HAUSMAN_RANK_TOL);
    if dof < shared.len() {
        log::info!(
            "Hausman: variance difference has rank {dof} of {}",
            shared.len()
        );
    }
    let s2 = ols.sigma2;
    let h = if dof == 0 || s2 <= 0.0 {
        0.0
    } else {
        (delta.dot(&(pinv * &delta)) / s2).max(0.0)
    };
    let p_value = chi2_sf(h, dof);
    Ok(HausmanReport {
        h,
        dof,
        p_value,
        s2_common: s2,
        shared,
        delta,
        verdict: if p_value < alpha {
            HausmanVerdict::MeasurementError
        } else {
            HausmanVerdict::OlsConsistent
        },
    })
}

/// Critical value of χ²(dof) at level `alpha`.
pub fn chi2_critical(dof: usize, alpha: f64) -> f64 {
    ChiSquared::new(dof as f64)
        .map(|d| d.inverse_cdf(1.0 - alpha))
        .unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarveyRecord {
    pub factor: String,
    pub t_ratio: f64,
    pub pass: bool,
}

/// Sign-free strict test `|t| > threshold`.
pub fn harvey_pass(t: f64, threshold: f64) -> bool {
    t.abs() > threshold
}

/// Screens a factor on its HAC t-ratio.
pub fn harvey_screen(fit: &FitResult, factor: &str, threshold: f64) -> Result<HarveyRecord> {
    let t = fit.t_hac_of(factor)?;
    Ok(HarveyRecord {
        factor: factor.to_string(),
        t_ratio: t,
        pass: harvey_pass(t, threshold),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harvey_boundaries() {
        assert!(harvey_pass(-3.16, HARVEY_THRESHOLD));
        assert!(!harvey_pass(3.00, HARVEY_THRESHOLD));
        assert!(harvey_pass(6.50, HARVEY_THRESHOLD));
        assert!(!harvey_pass(-3.00, HARVEY_THRESHOLD));
    }

    #[test]
    fn verdict_rule_is_strict() {
        let (per, overall) = relevance_verdicts(&[23.86, 24.0, 24.01], 24.0);
        assert_eq!(per, vec![Strength::Weak, Strength::Weak, Strength::Strong]);
        assert_eq!(overall, OverallRelevance::Robust);
        let (_, overall) = relevance_verdicts(&[1.0, 23.99], 24.0);
        assert_eq!(overall, OverallRelevance::Weak);
    }

    #[test]
    fn residuals_equal_to_an_instrument_are_suspect() {
        let t = 40;
        let z1: Vec<f64> = (0..t).map(|i| ((i * 7 % 13) as f64 - 6.0) / 3.0).collect();
        let z2: Vec<f64> = (0..t).map(|i| (i as f64 * 0.37).sin()).collect();
        let z = NamedMatrix::from_columns(vec![("z1", z1.clone()), ("z2", z2)]).unwrap();
        let r = exogeneity_test(&DVector::from_vec(z1), &z, 0.05).unwrap();
        assert!((r.coefficients[1] - 1.0).abs() < 1e-10);
        assert_eq!(r.verdict, Exogeneity::Suspect);
    }

    #[test]
    fn exogeneity_length_mismatch() {
        let z = NamedMatrix::from_columns(vec![("z1", vec![1.0, 2.0, 3.0])]).unwrap();
        assert!(exogeneity_test(&DVector::zeros(4), &z, 0.05).is_err());
    }

    #[test]
    fn relevance_needs_two_instruments() {
        let x = NamedMatrix::from_columns(vec![("x", vec![1.0, 2.0, 3.0, 5.0])]).unwrap();
        let z = NamedMatrix::from_columns(vec![("z", vec![0.0, 1.0, 0.0, 2.0])]).unwrap();
        assert!(relevance_test(&x, &z, &[Some(0)], Some(0), 24.0).is_err());
        assert!(relevance_test(&x, &z, &[None], Some(0), 24.0).is_ok());
    }

    #[test]
    fn exact_first_stage_is_capped() {
        let t = 30;
        let z1: Vec<f64> = (0..t).map(|i| (i as f64 * 0.5).cos()).collect();
        let z2: Vec<f64> = (0..t).map(|i| (i as f64 * 0.2).sin()).collect();
        let x: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| 1.0 + 2.0 * a - b).collect();
        let xm = NamedMatrix::from_columns(vec![("x", x)]).unwrap();
        let z = NamedMatrix::from_columns(vec![("z1", z1), ("z2", z2)]).unwrap();
        let r = relevance_test(&xm, &z, &[], None, 24.0).unwrap();
        assert!(r.records[0].capped);
        assert_eq!(r.records[0].f_stat, f64::INFINITY);
        assert_eq!(r.records[0].verdict, Strength::Strong);
        assert_eq!(r.overall, OverallRelevance::Robust);
    }

    #[test]
    fn chi2_critical_value() {
        assert!((chi2_critical(1, 0.05) - 3.841458820694124).abs() < 1e-8);
    }
}
