//! Linear instrumental-variable GMM.
//!
//! With `L` instruments `Z` for `K` regressors `X`, the sample moments are
//! `ḡ(β) = Z'(y - Xβ)/T`, the objective is `J(β) = T ḡ'Wḡ`, and its minimiser
//! has the closed form `β = (X'ZWZ'X)^{-1} X'ZWZ'y`.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::instruments::robust_filter;
use crate::linalg::{
    check_full_rank, is_positive_definite, spd_inverse, symmetrize, LeastSquares, NamedMatrix,
};
use crate::regression::{
    adjusted_r2, default_hac_lags, durbin_watson, long_run_sum, t_ratios, FitResult, Method,
};

/// Relative residual variance below which an added instrument counts as
/// collinear with the instruments before it.
pub const INSTRUMENT_COLLINEARITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum Weighting {
    Identity,
    /// `W = (Z'Z/T)^{-1}`; the estimator is two-stage least squares.
    InverseZZ,
    /// Two-stage least squares first, then `W = Ŝ^{-1}` with `Ŝ` the
    /// Newey-West long-run covariance of the moments, and one re-solve.
    TwoStepHac,
    /// A caller-supplied symmetric positive definite `L × L` matrix.
    Fixed(DMatrix<f64>),
}

/// One linear IV/GMM problem.
///
/// Regressors are `[exogenous | endogenous]`, instruments are
/// `[exogenous | excluded]`: exogenous columns instrument themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmSpec {
    pub y: DVector<f64>,
    pub exogenous: NamedMatrix,
    pub endogenous: NamedMatrix,
    pub excluded: NamedMatrix,
    pub weighting: Weighting,
    /// Bandwidth for `Ŝ` and the HAC covariance; `None` uses the default rule.
    pub hac_lags: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub fit: FitResult,
    /// Hansen's J, `T ḡ'Wḡ` at the estimate with the final weighting.
    pub j_stat: f64,
    pub j_dof: usize,
    pub j_pvalue: f64,
    /// `ḡ(β̂)`, length `L`.
    pub moment_values: DVector<f64>,
    pub weighting_used: DMatrix<f64>,
    /// The instrument matrix actually used, after collinearity screening.
    pub instruments: NamedMatrix,
    pub dropped_instruments: Vec<String>,
    /// Warnings raised during estimation (fallbacks, dropped columns).
    pub notes: Vec<String>,
}

fn check_conformable(y: &DVector<f64>, x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<()> {
    if x.nrows() != y.len() || z.nrows() != y.len() {
        return Err(Error::Shape(format!(
            "y has {} rows, X {}, Z {}",
            y.len(),
            x.nrows(),
            z.nrows()
        )));
    }
    Ok(())
}

/// `ḡ(β) = Z'(y - Xβ) / T`.
pub fn moment_conditions(
    beta: &DVector<f64>,
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    check_conformable(y, x, z)?;
    if beta.len() != x.ncols() {
        return Err(Error::Shape(format!(
            "{} coefficients for {} regressors",
            beta.len(),
            x.ncols()
        )));
    }
    let u = y - x * beta;
    Ok(z.transpose() * u / y.len() as f64)
}

/// `J(β) = T ḡ(β)' W ḡ(β)`.
pub fn gmm_objective(
    beta: &DVector<f64>,
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> Result<f64> {
    if w.shape() != (z.ncols(), z.ncols()) {
        return Err(Error::Shape(format!(
            "W is {:?} for {} instruments",
            w.shape(),
            z.ncols()
        )));
    }
    if !is_positive_definite(w) {
        return Err(Error::NotPositiveDefinite);
    }
    let g = moment_conditions(beta, y, x, z)?;
    Ok((y.len() as f64 * g.dot(&(symmetrize(w) * &g))).max(0.0))
}

/// Closed-form minimiser of the GMM objective for a fixed weighting.
///
/// Solved as the least-squares problem `min |C'(Z'y - Z'X β)|` with
/// `W = CC'`, which avoids forming `(X'ZWZ'X)^{-1}`.
pub fn gmm_solve(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    check_conformable(y, x, z)?;
    let (l, k) = (z.ncols(), x.ncols());
    if l < k {
        return Err(Error::UnderIdentified(format!(
            "{l} instruments for {k} regressors"
        )));
    }
    if w.shape() != (l, l) {
        return Err(Error::Shape(format!(
            "W is {:?} for {l} instruments",
            w.shape()
        )));
    }
    let zx = z.transpose() * x;
    let names: Vec<String> = (0..k).map(|j| format!("Z'X[{j}]")).collect();
    check_full_rank(&zx, &names)
        .map_err(|_| Error::UnderIdentified(format!("Z'X has rank below {k}")))?;
    let chol = symmetrize(w).cholesky().ok_or(Error::NotPositiveDefinite)?;
    let ct = chol.l().transpose();
    let a = &ct * zx;
    let b = &ct * (z.transpose() * y);
    Ok(LeastSquares::new(&a).solve_vec(&b))
}

/// Appends `excluded` columns to `exogenous` one at a time, skipping any
/// column whose part not explained by the columns already kept is negligible.
fn screen_instruments(
    exogenous: &NamedMatrix,
    excluded: &NamedMatrix,
) -> Result<(NamedMatrix, Vec<String>)> {
    let mut kept = exogenous.clone();
    let mut dropped = Vec::new();
    for (j, name) in excluded.names.iter().enumerate() {
        let col = excluded.data.column(j).into_owned();
        let total = col.norm_squared();
        let unexplained = if total == 0.0 {
            0.0
        } else if kept.ncols() == 0 {
            1.0
        } else if check_full_rank(&kept.data, &kept.names).is_ok() {
            let b = LeastSquares::new(&kept.data).solve_vec(&col);
            (&col - &kept.data * b).norm_squared() / total
        } else {
            1.0
        };
        if unexplained < INSTRUMENT_COLLINEARITY_TOL {
            log::warn!("dropping instrument `{name}`: collinear with earlier instruments");
            dropped.push(name.clone());
        } else {
            let single = NamedMatrix::new(
                vec![name.clone()],
                DMatrix::from_column_slice(col.len(), 1, col.as_slice()),
            )?;
            kept = kept.hstack(&single)?;
        }
    }
    Ok((kept, dropped))
}

/// `X̂ = Z (Z'Z)^{-1} Z'X`.
pub fn fitted_regressors(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let names: Vec<String> = (0..z.ncols()).map(|j| format!("z{j}")).collect();
    check_full_rank(z, &names)?;
    Ok(z * LeastSquares::new(z).solve(x))
}

pub(crate) fn chi2_sf(stat: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    ChiSquared::new(dof as f64)
        .map(|d| d.sf(stat.max(0.0)))
        .unwrap_or(f64::NAN)
}

/// Estimates the model described by `spec`.
pub fn gmm_estimate(spec: &GmmSpec) -> Result<GmmFit> {
    let t = spec.y.len();
    let regressors = spec.exogenous.hstack(&spec.endogenous)?;
    for n in &spec.endogenous.names {
        if spec.excluded.names.contains(n) {
            return Err(Error::InvalidArgument(format!(
                "`{n}` is both endogenous and an excluded instrument"
            )));
        }
    }
    let (instruments, dropped) = screen_instruments(&spec.exogenous, &spec.excluded)?;
    let mut notes: Vec<String> = dropped
        .iter()
        .map(|n| format!("instrument `{n}` dropped as collinear"))
        .collect();
    let (l, k) = (instruments.ncols(), regressors.ncols());
    if l < k {
        return Err(Error::UnderIdentified(format!(
            "{l} usable instruments for {k} regressors"
        )));
    }
    if t <= l.max(k) {
        return Err(Error::TooFewObservations {
            t,
            required: l.max(k) + 1,
        });
    }
    check_full_rank(&regressors.data, &regressors.names)?;
    check_full_rank(&instruments.data, &instruments.names)?;

    let x = &regressors.data;
    let z = &instruments.data;
    let y = &spec.y;
    let tf = t as f64;
    let lags = spec.hac_lags.unwrap_or_else(|| default_hac_lags(t));
    if lags >= t {
        return Err(Error::InvalidArgument(format!(
            "HAC lags ({lags}) must be below T ({t})"
        )));
    }

    let w_zz = || spd_inverse(&(z.transpose() * z / tf));
    let moment_cov = |beta: &DVector<f64>| -> Result<DMatrix<f64>> {
        let u = y - x * beta;
        let mut scores = z.clone();
        for (i, mut row) in scores.row_iter_mut().enumerate() {
            row *= u[i];
        }
        Ok(long_run_sum(&scores, lags)? / tf)
    };

    let mut efficient = false;
    let (beta, w) = match &spec.weighting {
        Weighting::Identity => {
            let w = DMatrix::identity(l, l);
            (gmm_solve(y, x, z, &w)?, w)
        }
        Weighting::InverseZZ => {
            let w = w_zz()?;
            (gmm_solve(y, x, z, &w)?, w)
        }
        Weighting::Fixed(w) => {
            if w.shape() != (l, l) {
                return Err(Error::Shape(format!(
                    "W is {:?} for {l} instruments",
                    w.shape()
                )));
            }
            if !is_positive_definite(w) {
                return Err(Error::NotPositiveDefinite);
            }
            (gmm_solve(y, x, z, w)?, w.clone())
        }
        Weighting::TwoStepHac => {
            let w1 = w_zz()?;
            let beta1 = gmm_solve(y, x, z, &w1)?;
            let s = moment_cov(&beta1)?;
            match spd_inverse(&s) {
                Ok(w2) => {
                    efficient = true;
                    (gmm_solve(y, x, z, &w2)?, w2)
                }
                Err(_) => {
                    log::warn!(
                        "long-run moment covariance is not positive definite; using (Z'Z/T)^-1"
                    );
                    notes.push(
                        "HAC moment covariance not positive definite; fell back to InverseZZ"
                            .into(),
                    );
                    (beta1, w1)
                }
            }
        }
    };

    let residuals = y - x * &beta;
    let moment_values = z.transpose() * &residuals / tf;
    let j_dof = l - k;
    let j_stat = if j_dof == 0 {
        0.0
    } else {
        (tf * moment_values.dot(&(&w * &moment_values))).max(0.0)
    };

    let g = z.transpose() * x / tf;
    let gwg = g.transpose() * &w * &g;
    let gwg_inv =
        spd_inverse(&gwg).map_err(|_| Error::UnderIdentified("G'WG is singular".into()))?;
    let vcov_hac = if efficient {
        &gwg_inv / tf
    } else {
        let s = moment_cov(&beta)?;
        let gw = g.transpose() * &w;
        symmetrize(&(&gwg_inv * (&gw * s * gw.transpose()) * &gwg_inv / tf))
    };

    let x_hat = fitted_regressors(x, z)?;
    let sigma2 = residuals.norm_squared() / (t - k) as f64;
    let vcov_classical = spd_inverse(&(x_hat.transpose() * &x_hat))? * sigma2;

    let fit = FitResult {
        method: Method::IvGmm,
        names: regressors.names.clone(),
        t_classical: t_ratios(&beta, &vcov_classical),
        t_hac: t_ratios(&beta, &vcov_hac),
        adj_r2: adjusted_r2(y, &residuals, k).unwrap_or(f64::NAN),
        dw: durbin_watson(&residuals).unwrap_or(f64::NAN),
        coefficients: beta,
        residuals,
        vcov_classical,
        vcov_hac,
        sigma2,
        hac_lags: lags,
    };
    Ok(GmmFit {
        fit,
        j_stat,
        j_dof,
        j_pvalue: chi2_sf(j_stat, j_dof),
        moment_values,
        weighting_used: w,
        instruments,
        dropped_instruments: dropped,
        notes,
    })
}

/// Relative column norm below which a filtered regressor counts as zero.
pub const DEGENERATE_FILTER_TOL: f64 = 1e-8;

/// Robust-instrument GMM for regressors measured with error.
///
/// The endogenous block is filtered through its Durbin/Pal instruments
/// (see [`crate::instruments`]): `x = x̂ + d`. Each endogenous column is then
/// instrumented by its fitted part `x̂ = x - d`, so that the estimate under
/// `InverseZZ` weighting is `(X'P_z X)^{-1} X'P_z y`. A filtered column `d`
/// that vanishes means the regressor is an exact function of its own
/// instruments and the filter carries no information; that case is rejected.
pub fn gmm_distance_estimate(
    y: &DVector<f64>,
    exogenous: &NamedMatrix,
    endogenous: &NamedMatrix,
    weighting: Weighting,
    hac_lags: Option<usize>,
    demean: bool,
) -> Result<GmmFit> {
    let (_, filtered) = robust_filter(endogenous, demean)?;
    for (j, name) in endogenous.names.iter().enumerate() {
        let xn = endogenous.data.column(j).norm();
        if filtered.d.column(j).norm() <= DEGENERATE_FILTER_TOL * xn.max(f64::MIN_POSITIVE) {
            return Err(Error::UnderIdentified(format!(
                "filtered regressor d[`{name}`] is zero; `{name}` is exactly spanned by its instruments"
            )));
        }
    }
    let names = endogenous
        .names
        .iter()
        .map(|n| format!("hat:{n}"))
        .collect();
    let excluded = NamedMatrix::new(names, filtered.fitted)?;
    gmm_estimate(&GmmSpec {
        y: y.clone(),
        exogenous: exogenous.clone(),
        endogenous: endogenous.clone(),
        excluded,
        weighting,
        hac_lags,
    })
}
