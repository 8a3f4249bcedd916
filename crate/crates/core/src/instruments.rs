//! Higher-moment instruments for regressors measured with error.
//!
//! For a (demeaned) regressor block `x` with `n` columns the instrument set is
//! `{1, x∘x, x∘x∘x - 3x·D(x'x/T)}`, where `∘` is the elementwise product and
//! `D(·)` keeps the diagonal. The squares are Durbin's instruments, the
//! kurtosis-corrected cubes Pal's. Projecting `x` on them gives fitted values
//! `x̂`; the remainder `d = x - x̂` is the filtered regressor block.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{check_full_rank, LeastSquares, NamedMatrix};

/// Name of the constant instrument.
pub const CONSTANT: &str = "const";

/// The stacked instrument matrix `[z0 | z1 | z2]` built from a regressor block.
#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentSet {
    pub source_names: Vec<String>,
    /// Squares of the (demeaned) regressors, `T × n`.
    pub z1: DMatrix<f64>,
    /// Kurtosis-corrected cubes, `T × n`.
    pub z2: DMatrix<f64>,
    /// `[const | z1 | z2]`, `T × (2n+1)`.
    pub stacked: NamedMatrix,
    /// First-stage coefficients (`(2n+1) × n`, one column per regressor) once
    /// the set has been used by [`InstrumentSet::filter`].
    pub first_stage_coefficients: Option<DMatrix<f64>>,
}

/// `x ∘ x` and `x ∘ x ∘ x − 3 x D(x'x/T)` for the columns of `x`, as given.
pub fn cumulant_powers(x: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let t = x.nrows() as f64;
    let z1 = x.component_mul(x);
    let mut z2 = z1.component_mul(x);
    for (j, mut col) in z2.column_iter_mut().enumerate() {
        let second_moment = x.column(j).norm_squared() / t;
        col.axpy(-3.0 * second_moment, &x.column(j), 1.0);
    }
    (z1, z2)
}

fn demeaned(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    out
}

/// Builds the Durbin/Pal instrument set for the regressor block `x`.
pub fn build_cumulant_instruments(x: &NamedMatrix, demean: bool) -> Result<InstrumentSet> {
    let (t, n) = (x.nrows(), x.ncols());
    if n == 0 {
        return Err(Error::InvalidArgument(
            "no regressors to build instruments from".into(),
        ));
    }
    if t <= 2 * n + 1 {
        return Err(Error::TooFewObservations {
            t,
            required: 2 * n + 2,
        });
    }
    let base = if demean {
        demeaned(&x.data)
    } else {
        x.data.clone()
    };
    let (z1, z2) = cumulant_powers(&base);

    let mut names = vec![CONSTANT.to_string()];
    names.extend(x.names.iter().map(|s| format!("{s}^2")));
    names.extend(x.names.iter().map(|s| format!("{s}^3c")));
    let mut data = DMatrix::from_element(t, 2 * n + 1, 1.0);
    data.columns_mut(1, n).copy_from(&z1);
    data.columns_mut(1 + n, n).copy_from(&z2);

    Ok(InstrumentSet {
        source_names: x.names.clone(),
        z1,
        z2,
        stacked: NamedMatrix::new(names, data)?,
        first_stage_coefficients: None,
    })
}

impl InstrumentSet {
    /// Projects `x` (the block the set was built from) on the instruments,
    /// keeps the first-stage coefficients, and returns the filtered block.
    pub fn filter(&mut self, x: &NamedMatrix) -> Result<FilteredInstruments> {
        if x.names != self.source_names {
            return Err(Error::Shape(
                "regressors differ from the instrument source".into(),
            ));
        }
        let projection = project_fitted(&x.data, &self.stacked)?;
        self.first_stage_coefficients = Some(projection.coefficients);
        residual_instruments(&x.data, &projection.fitted)
    }
}

/// First-stage output: fitted values and coefficients (`L × n`).
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub fitted: DMatrix<f64>,
    pub coefficients: DMatrix<f64>,
}

/// Column-wise first-stage regressions of `x` on `z`: `x̂ = Z (Z'Z)^{-1} Z'x`.
///
/// Non-constant instrument columns are scaled to unit sample standard
/// deviation before solving and the coefficients mapped back; fitted values
/// do not depend on that reparameterisation.
pub fn project_fitted(x: &DMatrix<f64>, z: &NamedMatrix) -> Result<Projection> {
    if x.nrows() != z.nrows() {
        return Err(Error::Shape(format!(
            "regressors have {} rows, instruments {}",
            x.nrows(),
            z.nrows()
        )));
    }
    if z.nrows() < z.ncols() {
        return Err(Error::TooFewObservations {
            t: z.nrows(),
            required: z.ncols(),
        });
    }
    check_full_rank(&z.data, &z.names)?;

    let scales: Vec<f64> = z
        .data
        .column_iter()
        .map(|c| sample_sd(c.as_slice()))
        .collect();
    let mut zs = z.data.clone();
    for (j, mut col) in zs.column_iter_mut().enumerate() {
        if scales[j] > 0.0 {
            col /= scales[j];
        }
    }
    let scaled = LeastSquares::new(&zs).solve(x);
    let fitted = &zs * &scaled;
    let mut coefficients = scaled;
    for (j, mut row) in coefficients.row_iter_mut().enumerate() {
        if scales[j] > 0.0 {
            row /= scales[j];
        }
    }
    Ok(Projection {
        fitted,
        coefficients,
    })
}

fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / n as f64;
    (v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// The filtered regressors `d = x - x̂` and the fitted block `x̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredInstruments {
    pub d: DMatrix<f64>,
    pub fitted: DMatrix<f64>,
}

pub fn residual_instruments(
    x: &DMatrix<f64>,
    fitted: &DMatrix<f64>,
) -> Result<FilteredInstruments> {
    if x.shape() != fitted.shape() {
        return Err(Error::Shape(format!(
            "regressors are {:?}, fitted values {:?}",
            x.shape(),
            fitted.shape()
        )));
    }
    Ok(FilteredInstruments {
        d: x - fitted,
        fitted: fitted.clone(),
    })
}

/// Builds the instruments for `x`, runs the first stage and returns both.
pub fn robust_filter(
    x: &NamedMatrix,
    demean: bool,
) -> Result<(InstrumentSet, FilteredInstruments)> {
    let mut set = build_cumulant_instruments(x, demean)?;
    let filtered = set.filter(x)?;
    Ok((set, filtered))
}
