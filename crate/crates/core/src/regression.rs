//! Ordinary least squares with classical and Newey-West inference.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::linalg::{check_full_rank, symmetrize, LeastSquares, NamedMatrix};

/// Name given to the all-ones regressor.
pub const INTERCEPT: &str = "alpha";

/// Regressor block of a linear model: `T` rows, `K < T` named columns, no
/// missing values, and (when present) an exactly all-ones intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    columns: NamedMatrix,
    intercept: Option<usize>,
}

impl DesignMatrix {
    /// Validates `columns`; a column named [`INTERCEPT`] must be all ones.
    pub fn new(columns: NamedMatrix) -> Result<Self> {
        let (t, k) = (columns.nrows(), columns.ncols());
        if k == 0 {
            return Err(Error::InvalidArgument(
                "design matrix has no columns".into(),
            ));
        }
        if t <= k {
            return Err(Error::TooFewObservations { t, required: k + 1 });
        }
        if columns.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "design matrix has non-finite entries".into(),
            ));
        }
        let intercept = columns.position(INTERCEPT);
        if let Some(j) = intercept {
            if columns.data.column(j).iter().any(|&v| v != 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "intercept column `{INTERCEPT}` is not all ones"
                )));
            }
        }
        Ok(Self { columns, intercept })
    }

    /// Prepends an intercept to `regressors`.
    pub fn with_intercept(regressors: &NamedMatrix) -> Result<Self> {
        Self::new(regressors.with_intercept(INTERCEPT)?)
    }

    pub fn names(&self) -> &[String] {
        &self.columns.names
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.columns.data
    }

    pub fn columns(&self) -> &NamedMatrix {
        &self.columns
    }

    pub fn intercept(&self) -> Option<usize> {
        self.intercept
    }

    pub fn nobs(&self) -> usize {
        self.columns.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.columns.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Ols,
    IvGmm,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Ols => "OLS",
            Method::IvGmm => "IVGMM",
        }
    }
}

/// Estimates and inference for one linear fit. OLS and IV/GMM fits share
/// this shape.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub method: Method,
    pub names: Vec<String>,
    pub coefficients: DVector<f64>,
    pub residuals: DVector<f64>,
    pub vcov_classical: DMatrix<f64>,
    pub vcov_hac: DMatrix<f64>,
    pub t_classical: DVector<f64>,
    pub t_hac: DVector<f64>,
    /// Adjusted R²; NaN when the dependent series is constant.
    pub adj_r2: f64,
    /// Durbin-Watson statistic; NaN when every residual is zero.
    pub dw: f64,
    /// Residual variance, RSS / (T - K).
    pub sigma2: f64,
    pub hac_lags: usize,
}

impl FitResult {
    pub fn nobs(&self) -> usize {
        self.residuals.len()
    }

    /// Residual degrees of freedom, T - K.
    pub fn dof(&self) -> usize {
        self.nobs() - self.names.len()
    }

    pub fn index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn coefficient(&self, name: &str) -> Result<f64> {
        Ok(self.coefficients[self.index(name)?])
    }

    pub fn t_hac_of(&self, name: &str) -> Result<f64> {
        Ok(self.t_hac[self.index(name)?])
    }

    /// Two-sided p-value of a t-ratio: Student t with T - K degrees of
    /// freedom for OLS, standard normal for IV/GMM.
    pub fn p_value(&self, t: f64) -> f64 {
        if t.is_nan() {
            return f64::NAN;
        }
        let tail = match self.method {
            Method::Ols => StudentsT::new(0.0, 1.0, self.dof() as f64)
                .map(|d| d.sf(t.abs()))
                .unwrap_or(f64::NAN),
            Method::IvGmm => Normal::standard().sf(t.abs()),
        };
        (2.0 * tail).min(1.0)
    }

    /// HAC p-value of coefficient `j`.
    pub fn p_value_hac(&self, j: usize) -> f64 {
        self.p_value(self.t_hac[j])
    }
}

/// `coef / sqrt(var)` with the degenerate zero-variance cases made explicit.
pub(crate) fn t_ratio(coef: f64, var: f64) -> f64 {
    if var > 0.0 {
        coef / var.sqrt()
    } else if coef == 0.0 {
        0.0
    } else {
        coef.signum() * f64::INFINITY
    }
}

pub(crate) fn t_ratios(coefs: &DVector<f64>, vcov: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        coefs.len(),
        coefs
            .iter()
            .enumerate()
            .map(|(j, &c)| t_ratio(c, vcov[(j, j)])),
    )
}

/// Newey-West rule-of-thumb bandwidth, `floor(4 (T/100)^(2/9))`.
pub fn default_hac_lags(t: usize) -> usize {
    (4.0 * (t as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

/// Bartlett-weighted long-run sum of score outer products,
/// `Γ0 + Σ_{l=1..L} (1 - l/(L+1)) (Γl + Γl')` with `Γl = Σ_t s_t s_{t-l}'`.
///
/// Rows of `scores` are time periods. The sum is not divided by `T`.
pub fn long_run_sum(scores: &DMatrix<f64>, lags: usize) -> Result<DMatrix<f64>> {
    let t = scores.nrows();
    if lags >= t.max(1) {
        return Err(Error::InvalidArgument(format!(
            "HAC lags ({lags}) must be below the sample size ({t})"
        )));
    }
    let mut s = scores.transpose() * scores;
    for l in 1..=lags {
        let w = 1.0 - l as f64 / (lags as f64 + 1.0);
        let lead = scores.rows(l, t - l);
        let lag = scores.rows(0, t - l);
        let gamma = lead.transpose() * lag;
        s += (&gamma + gamma.transpose()) * w;
    }
    Ok(symmetrize(&s))
}

fn scores(x: &DMatrix<f64>, residuals: &DVector<f64>) -> DMatrix<f64> {
    let mut s = x.clone();
    for (t, mut row) in s.row_iter_mut().enumerate() {
        row *= residuals[t];
    }
    s
}

fn hac_with_bread(
    bread: &DMatrix<f64>,
    x: &DMatrix<f64>,
    residuals: &DVector<f64>,
    lags: usize,
) -> Result<DMatrix<f64>> {
    let meat = long_run_sum(&scores(x, residuals), lags)?;
    Ok(symmetrize(&(bread * meat * bread)))
}

/// Newey-West covariance `(X'X)^{-1} S (X'X)^{-1}` of OLS coefficients.
pub fn hac_covariance(
    x: &DesignMatrix,
    residuals: &DVector<f64>,
    lags: usize,
) -> Result<DMatrix<f64>> {
    if residuals.len() != x.nobs() {
        return Err(Error::Shape(format!(
            "{} residuals for {} observations",
            residuals.len(),
            x.nobs()
        )));
    }
    if lags >= x.nobs() {
        return Err(Error::InvalidArgument(format!(
            "HAC lags ({lags}) must be below the sample size ({})",
            x.nobs()
        )));
    }
    check_full_rank(x.matrix(), x.names())?;
    let bread = LeastSquares::new(x.matrix()).xtx_inverse();
    hac_with_bread(&bread, x.matrix(), residuals, lags)
}

/// `Σ (e_t - e_{t-1})² / Σ e_t²`.
pub fn durbin_watson(residuals: &DVector<f64>) -> Result<f64> {
    if residuals.len() < 2 {
        return Err(Error::TooFewObservations {
            t: residuals.len(),
            required: 2,
        });
    }
    let den = residuals.norm_squared();
    if den == 0.0 {
        return Err(Error::Undefined("Durbin-Watson statistic"));
    }
    let num: f64 = residuals
        .as_slice()
        .windows(2)
        .map(|w| (w[1] - w[0]).powi(2))
        .sum();
    Ok(num / den)
}

/// `1 - (RSS/(T-K)) / (TSS/(T-1))`.
pub fn adjusted_r2(y: &DVector<f64>, residuals: &DVector<f64>, k: usize) -> Result<f64> {
    let t = y.len();
    if residuals.len() != t {
        return Err(Error::Shape(format!(
            "{} residuals for {t} observations",
            residuals.len()
        )));
    }
    if t <= k {
        return Err(Error::TooFewObservations { t, required: k + 1 });
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::Undefined("adjusted R² of a constant series"));
    }
    let mean = y.mean();
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let rss = residuals.norm_squared();
    Ok(1.0 - (rss / (t - k) as f64) / (tss / (t - 1) as f64))
}

/// Least-squares fit of `y` on `x`.
///
/// `hac_lags = None` uses [`default_hac_lags`].
pub fn ols_fit(y: &DVector<f64>, x: &DesignMatrix, hac_lags: Option<usize>) -> Result<FitResult> {
    let (t, k) = (x.nobs(), x.ncols());
    if y.len() != t {
        return Err(Error::Shape(format!("y has {} rows, X has {t}", y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "dependent series has non-finite values".into(),
        ));
    }
    check_full_rank(x.matrix(), x.names())?;
    let lags = hac_lags.unwrap_or_else(|| default_hac_lags(t));

    let ls = LeastSquares::new(x.matrix());
    let coefficients = ls.solve_vec(y);
    let residuals = y - x.matrix() * &coefficients;
    let sigma2 = residuals.norm_squared() / (t - k) as f64;
    let bread = ls.xtx_inverse();
    let vcov_classical = &bread * sigma2;
    let vcov_hac = hac_with_bread(&bread, x.matrix(), &residuals, lags)?;

    Ok(FitResult {
        method: Method::Ols,
        names: x.names().to_vec(),
        t_classical: t_ratios(&coefficients, &vcov_classical),
        t_hac: t_ratios(&coefficients, &vcov_hac),
        adj_r2: adjusted_r2(y, &residuals, k).unwrap_or(f64::NAN),
        dw: durbin_watson(&residuals).unwrap_or(f64::NAN),
        coefficients,
        residuals,
        vcov_classical,
        vcov_hac,
        sigma2,
        hac_lags: lags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(cols: Vec<(&str, Vec<f64>)>) -> DesignMatrix {
        DesignMatrix::new(NamedMatrix::from_columns(cols).unwrap()).unwrap()
    }

    #[test]
    fn intercept_only_fit_is_the_mean() {
        let x = design(vec![(INTERCEPT, vec![1.0; 3])]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let fit = ols_fit(&y, &x, Some(0)).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-14);
        let expected = [-1.0, 0.0, 1.0];
        for (r, e) in fit.residuals.iter().zip(expected) {
            assert!((r - e).abs() < 1e-14);
        }
        assert!(fit.adj_r2.abs() < 1e-14);
    }

    #[test]
    fn exact_fit_recovers_coefficients() {
        let x1: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).sin()).collect();
        let x2: Vec<f64> = (0..20).map(|i| (i as f64 * 0.3).cos() * 2.0).collect();
        let x = design(vec![(INTERCEPT, vec![1.0; 20]), ("a", x1), ("b", x2)]);
        let beta = DVector::from_vec(vec![0.5, -1.5, 2.0]);
        let y = x.matrix() * &beta;
        let fit = ols_fit(&y, &x, None).unwrap();
        assert!((&fit.coefficients - &beta).amax() < 1e-10);
        assert!(fit.residuals.amax() < 1e-12);
        assert!((fit.adj_r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_design_is_rejected() {
        let a: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        let x = design(vec![(INTERCEPT, vec![1.0; 10]), ("a", a), ("b", b)]);
        let y = DVector::from_fn(10, |i, _| i as f64);
        match ols_fit(&y, &x, None) {
            Err(Error::Singular { columns }) => assert_eq!(columns, vec!["a", "b"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn too_few_observations() {
        let m =
            NamedMatrix::from_columns(vec![("a", vec![1.0, 2.0]), ("b", vec![0.0, 1.0])]).unwrap();
        assert!(matches!(
            DesignMatrix::new(m),
            Err(Error::TooFewObservations { .. })
        ));
    }

    #[test]
    fn intercept_must_be_ones() {
        let m = NamedMatrix::from_columns(vec![(INTERCEPT, vec![1.0, 1.0, 2.0])]).unwrap();
        assert!(DesignMatrix::new(m).is_err());
    }

    #[test]
    fn durbin_watson_alternating() {
        let e = DVector::from_vec(vec![1.0, -1.0, 1.0, -1.0]);
        assert_eq!(durbin_watson(&e).unwrap(), 3.0);
    }

    #[test]
    fn durbin_watson_near_constant() {
        let e = DVector::from_vec(vec![1.0, 1.0 + 1e-9, 1.0 - 1e-9, 1.0]);
        assert!(durbin_watson(&e).unwrap() < 1e-15);
    }

    #[test]
    fn durbin_watson_errors() {
        assert!(durbin_watson(&DVector::zeros(5)).is_err());
        assert!(durbin_watson(&DVector::from_vec(vec![1.0])).is_err());
    }

    #[test]
    fn adjusted_r2_cases() {
        let y = DVector::from_vec(vec![1.0, 2.0, 4.0, 7.0]);
        assert_eq!(adjusted_r2(&y, &DVector::zeros(4), 2).unwrap(), 1.0);
        let mean = y.mean();
        let dev = y.map(|v| v - mean);
        assert_eq!(adjusted_r2(&y, &dev, 1).unwrap(), 0.0);
        assert!(adjusted_r2(&DVector::from_element(4, 3.0), &dev, 1).is_err());
    }

    #[test]
    fn hac_rejects_excess_lags() {
        let x = design(vec![(INTERCEPT, vec![1.0; 4])]);
        let e = DVector::from_vec(vec![1.0, -1.0, 0.5, 0.2]);
        assert!(hac_covariance(&x, &e, 4).is_err());
        assert!(hac_covariance(&x, &e, 3).is_ok());
    }

    #[test]
    fn default_lag_rule() {
        assert_eq!(default_hac_lags(100), 4);
        assert_eq!(default_hac_lags(377), 5);
        assert_eq!(default_hac_lags(2000), 7);
    }

    #[test]
    fn zero_variance_t_ratio() {
        assert_eq!(t_ratio(0.0, 0.0), 0.0);
        assert_eq!(t_ratio(-2.0, 0.0), f64::NEG_INFINITY);
        assert_eq!(t_ratio(3.0, 4.0), 1.5);
    }
}
