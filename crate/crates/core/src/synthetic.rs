//! Errors-in-variables simulation and explicit-formula reference estimators.
//!
//! Draws come from ChaCha20 (`rand_chacha` 0.9) seeded with
//! `seed_from_u64`; normals use the Box-Muller transform on 53-bit uniforms,
//! so a seed fixes the dataset independently of platform and thread count.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::linalg::SINGULAR_TOL;

/// Deterministic stream of uniform and standard normal draws.
#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let r = (-2.0 * self.uniform().ln()).sqrt();
        let theta = std::f64::consts::TAU * self.uniform();
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Exponential(1) shifted to mean zero: unit variance, skewness 2.
    pub fn centered_exponential(&mut self) -> f64 {
        -self.uniform().ln() - 1.0
    }
}

/// Distribution of the standardized latent factor innovations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LatentDistribution {
    #[default]
    Gaussian,
    /// Centered unit exponential. Skewed, so that higher-moment instruments
    /// of the observed regressor are informative.
    Exponential,
}

/// A linear model whose regressors are observed with additive Gaussian
/// measurement error: `y = alpha + X β + ε`, `X_obs = X + u`.
#[derive(Debug, Clone, PartialEq)]
pub struct EivScenario {
    pub seed: u64,
    pub t: usize,
    pub alpha: f64,
    pub beta_true: Vec<f64>,
    /// Covariance of the true regressors, `K × K`, positive definite.
    pub factor_cov: DMatrix<f64>,
    pub meas_error_sd: Vec<f64>,
    pub resid_sd: f64,
    pub latent: LatentDistribution,
}

impl EivScenario {
    /// Unit-variance independent factors, no measurement error.
    pub fn new(seed: u64, t: usize, beta_true: Vec<f64>) -> Self {
        let k = beta_true.len();
        Self {
            seed,
            t,
            alpha: 0.0,
            beta_true,
            factor_cov: DMatrix::identity(k, k),
            meas_error_sd: vec![0.0; k],
            resid_sd: 1.0,
            latent: LatentDistribution::Gaussian,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.beta_true.len();
        if k == 0 {
            return Err(Error::InvalidArgument(
                "scenario needs at least one regressor".into(),
            ));
        }
        if self.factor_cov.shape() != (k, k) || self.meas_error_sd.len() != k {
            return Err(Error::Shape(format!(
                "scenario dimensions disagree with {k} coefficients"
            )));
        }
        if (&self.factor_cov - self.factor_cov.transpose()).amax() > 1e-12 * self.factor_cov.amax()
            || self.factor_cov.clone().cholesky().is_none()
        {
            return Err(Error::InvalidArgument(
                "factor covariance is not symmetric positive definite".into(),
            ));
        }
        if self
            .meas_error_sd
            .iter()
            .chain([&self.resid_sd])
            .any(|&s| s.is_nan() || s < 0.0)
        {
            return Err(Error::InvalidArgument(
                "standard deviations must be nonnegative".into(),
            ));
        }
        if self.t == 0 {
            return Err(Error::InvalidArgument(
                "sample size must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Reads `key = value` lines (`#` starts a comment). Recognised keys:
    /// `seed`, `T`, `alpha`, `beta`, `factor_cov` (rows separated by `;`) or
    /// `factor_var` (diagonal), `meas_error_sd`, `resid_sd`, `latent`
    /// (`gaussian` | `exponential`). Lists are comma separated.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| map.get(k).map(String::as_str);
        let need = |k: &str| {
            get(k).ok_or_else(|| Error::InvalidArgument(format!("scenario is missing `{k}`")))
        };
        let seed = parse_scalar::<u64>(need("seed")?, "seed")?;
        let t = parse_scalar::<usize>(
            get("T")
                .or(get("t"))
                .ok_or_else(|| Error::InvalidArgument("scenario is missing `T`".into()))?,
            "T",
        )?;
        let beta_true = parse_list(need("beta")?, "beta")?;
        let k = beta_true.len();
        let mut s = EivScenario::new(seed, t, beta_true);
        if let Some(v) = get("alpha") {
            s.alpha = parse_scalar(v, "alpha")?;
        }
        if let Some(v) = get("factor_cov") {
            let rows = v
                .split(';')
                .map(|r| parse_list(r, "factor_cov"))
                .collect::<Result<Vec<_>>>()?;
            if rows.len() != k || rows.iter().any(|r| r.len() != k) {
                return Err(Error::Shape(format!("factor_cov must be {k}x{k}")));
            }
            s.factor_cov = DMatrix::from_fn(k, k, |i, j| rows[i][j]);
        } else if let Some(v) = get("factor_var") {
            let d = parse_list(v, "factor_var")?;
            if d.len() != k {
                return Err(Error::Shape(format!("factor_var needs {k} entries")));
            }
            s.factor_cov = DMatrix::from_diagonal(&DVector::from_vec(d));
        }
        if let Some(v) = get("meas_error_sd") {
            s.meas_error_sd = parse_list(v, "meas_error_sd")?;
        }
        if let Some(v) = get("resid_sd") {
            s.resid_sd = parse_scalar(v, "resid_sd")?;
        }
        if let Some(v) = get("latent") {
            s.latent = match v.to_ascii_lowercase().as_str() {
                "gaussian" | "normal" => LatentDistribution::Gaussian,
                "exponential" | "skewed" => LatentDistribution::Exponential,
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown latent distribution `{other}`"
                    )))
                }
            };
        }
        s.validate()?;
        Ok(s)
    }
}

/// Parses `key = value` text into a map; later keys override earlier ones.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected `key = value`, found `{line}`"),
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn parse_scalar<T: std::str::FromStr>(v: &str, key: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("`{key}`: cannot parse `{v}`")))
}

pub(crate) fn parse_list(v: &str, key: &str) -> Result<Vec<f64>> {
    v.split(',').map(|s| parse_scalar(s, key)).collect()
}

/// Simulated data: the dependent series, true regressors, observed regressors.
#[derive(Debug, Clone, PartialEq)]
pub struct EivSample {
    pub y: DVector<f64>,
    pub x_true: DMatrix<f64>,
    pub x_observed: DMatrix<f64>,
}

/// Draws one dataset. Per period the draw order is: `K` latent innovations,
/// `K` measurement errors, one regression error.
pub fn generate_eiv(s: &EivScenario) -> Result<EivSample> {
    s.validate()?;
    let k = s.beta_true.len();
    let chol = s.factor_cov.clone().cholesky().expect("validated").l();
    let beta = DVector::from_row_slice(&s.beta_true);
    let mut rng = NormalStream::new(s.seed);
    let mut x_true = DMatrix::zeros(s.t, k);
    let mut x_obs = DMatrix::zeros(s.t, k);
    let mut y = DVector::zeros(s.t);
    let mut e = DVector::zeros(k);
    for t in 0..s.t {
        for v in e.iter_mut() {
            *v = match s.latent {
                LatentDistribution::Gaussian => rng.normal(),
                LatentDistribution::Exponential => rng.centered_exponential(),
            };
        }
        let xt = &chol * &e;
        for j in 0..k {
            let u = rng.normal();
            x_true[(t, j)] = xt[j];
            x_obs[(t, j)] = xt[j] + s.meas_error_sd[j] * u;
        }
        y[t] = s.alpha + xt.dot(&beta) + s.resid_sd * rng.normal();
    }
    Ok(EivSample {
        y,
        x_true,
        x_observed: x_obs,
    })
}

/// Reference OLS: `(X'X)^{-1} X'y = V Σ^{-1} U'y` from the singular value
/// decomposition of the column-equilibrated design.
pub fn oracle_ols(y: &DVector<f64>, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    if y.len() != x.nrows() {
        return Err(Error::Shape("y and X disagree in length".into()));
    }
    let k = x.ncols();
    let d: Vec<f64> = (0..k).map(|j| x.column(j).norm()).collect();
    if d.iter().any(|&v| v.is_nan() || v <= 0.0) {
        return Err(Error::Singular { columns: vec![] });
    }
    let xs = DMatrix::from_fn(x.nrows(), k, |i, j| x[(i, j)] / d[j]);
    let svd = xs.svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.iter().any(|&s| s <= 1e-13 * smax) {
        return Err(Error::Singular { columns: vec![] });
    }
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V'");
    let mut c = u.transpose() * y;
    for (i, ci) in c.iter_mut().enumerate() {
        *ci /= svd.singular_values[i];
    }
    let b = v_t.transpose() * c;
    Ok(DVector::from_fn(k, |i, _| b[i] / d[i]))
}

/// Reference two-stage least squares `(X̂'X̂)^{-1} X̂'y`, with the explicit
/// projection `X̂ = U U'X` onto an orthonormal basis `U` of the columns of
/// `Z`; the final solve uses the singular value decomposition of `X̂`.
pub fn oracle_2sls(y: &DVector<f64>, x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DVector<f64>> {
    if z.ncols() < x.ncols() {
        return Err(Error::UnderIdentified(format!(
            "{} instruments for {} regressors",
            z.ncols(),
            x.ncols()
        )));
    }
    if y.len() != x.nrows() || z.nrows() != x.nrows() {
        return Err(Error::Shape("y, X and Z disagree in length".into()));
    }
    let zs = z.clone().svd(true, false);
    let smax = zs.singular_values.max();
    if zs.singular_values.iter().any(|&s| s <= SINGULAR_TOL * smax) {
        return Err(Error::Singular { columns: vec![] });
    }
    let u = zs.u.expect("requested U");
    let x_hat = &u * (u.transpose() * x);
    let xs = x_hat.svd(true, true);
    let smax = xs.singular_values.max();
    if xs.singular_values.iter().any(|&s| s <= SINGULAR_TOL * smax) {
        return Err(Error::UnderIdentified("X̂ is rank deficient".into()));
    }
    let (u, v_t, d) = (
        xs.u.expect("requested U"),
        xs.v_t.expect("requested V'"),
        xs.singular_values,
    );
    let c = u.transpose() * y;
    Ok(v_t.transpose() * DVector::from_fn(d.len(), |i, _| c[i] / d[i]))
}
