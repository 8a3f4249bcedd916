//! Dense linear-algebra helpers shared by the estimators.
//!
//! Least-squares problems are solved by Householder QR on a column-equilibrated
//! copy of the design, so badly scaled factor columns do not cost accuracy.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value threshold below which a design is rank deficient.
pub const SINGULAR_TOL: f64 = 1e-10;

/// A real matrix whose columns carry names.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedMatrix {
    pub names: Vec<String>,
    pub data: DMatrix<f64>,
}

impl NamedMatrix {
    pub fn new(names: Vec<String>, data: DMatrix<f64>) -> Result<Self> {
        if names.len() != data.ncols() {
            return Err(Error::Shape(format!(
                "{} names for {} columns",
                names.len(),
                data.ncols()
            )));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::DuplicateColumn(n.clone()));
            }
        }
        Ok(Self { names, data })
    }

    /// Builds from named column vectors of equal length.
    pub fn from_columns<S: Into<String>>(cols: Vec<(S, Vec<f64>)>) -> Result<Self> {
        let nrows = cols.first().map_or(0, |c| c.1.len());
        let mut names = Vec::with_capacity(cols.len());
        let mut data = DMatrix::zeros(nrows, cols.len());
        for (j, (name, values)) in cols.into_iter().enumerate() {
            let name = name.into();
            if values.len() != nrows {
                return Err(Error::Shape(format!(
                    "column `{name}` has {} rows, expected {nrows}",
                    values.len()
                )));
            }
            data.set_column(j, &DVector::from_vec(values));
            names.push(name);
        }
        Self::new(names, data)
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Result<DVector<f64>> {
        let j = self
            .position(name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
        Ok(self.data.column(j).into_owned())
    }

    /// Selects columns by name, in the order given.
    pub fn select(&self, names: &[String]) -> Result<NamedMatrix> {
        let idx = names
            .iter()
            .map(|n| {
                self.position(n)
                    .ok_or_else(|| Error::UnknownColumn(n.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(NamedMatrix {
            names: names.to_vec(),
            data: self.data.select_columns(&idx),
        })
    }

    /// Horizontal concatenation.
    pub fn hstack(&self, other: &NamedMatrix) -> Result<NamedMatrix> {
        if self.nrows() != other.nrows() {
            return Err(Error::Shape(format!(
                "cannot stack {} rows with {} rows",
                self.nrows(),
                other.nrows()
            )));
        }
        let mut names = self.names.clone();
        names.extend(other.names.iter().cloned());
        let mut data = DMatrix::zeros(self.nrows(), self.ncols() + other.ncols());
        data.columns_mut(0, self.ncols()).copy_from(&self.data);
        data.columns_mut(self.ncols(), other.ncols())
            .copy_from(&other.data);
        NamedMatrix::new(names, data)
    }

    /// Prepends an all-ones column named `name`.
    pub fn with_intercept(&self, name: &str) -> Result<NamedMatrix> {
        let ones = NamedMatrix {
            names: vec![name.to_string()],
            data: DMatrix::from_element(self.nrows(), 1, 1.0),
        };
        ones.hstack(self)
    }
}

/// Euclidean norms of the columns; zero columns get scale one.
pub fn column_scales(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        x.ncols(),
        x.column_iter().map(|c| {
            let n = c.norm();
            if n > 0.0 && n.is_finite() {
                n
            } else {
                1.0
            }
        }),
    )
}

fn scale_columns(x: &DMatrix<f64>, scales: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for (j, mut c) in out.column_iter_mut().enumerate() {
        c /= scales[j];
    }
    out
}

/// Checks numerical full column rank of the column-equilibrated matrix.
///
/// On failure the error names every column that loads on a near-null right
/// singular vector.
pub fn check_full_rank(x: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let k = x.ncols();
    if k == 0 {
        return Ok(());
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "matrix has non-finite entries".into(),
        ));
    }
    let xs = scale_columns(x, &column_scales(x));
    let svd = xs.svd(false, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let tol = SINGULAR_TOL * smax;
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let mut flagged = vec![false; k];
    let mut deficient = smax <= 0.0;
    for (i, &s) in sv.iter().enumerate() {
        if s < tol || smax <= 0.0 {
            deficient = true;
            let row = v_t.row(i);
            let m = row.amax();
            for j in 0..k {
                if row[j].abs() > 0.1 * m {
                    flagged[j] = true;
                }
            }
        }
    }
    if deficient {
        let columns = names
            .iter()
            .zip(&flagged)
            .filter(|(_, &f)| f)
            .map(|(n, _)| n.clone())
            .collect();
        return Err(Error::Singular { columns });
    }
    Ok(())
}

/// QR factorisation of a column-equilibrated design, reusable across
/// right-hand sides.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    scales: DVector<f64>,
}

impl LeastSquares {
    /// Factorises `x`, which must have at least as many rows as columns and
    /// full column rank (see [`check_full_rank`]).
    pub fn new(x: &DMatrix<f64>) -> Self {
        let scales = column_scales(x);
        let qr = scale_columns(x, &scales).qr();
        Self {
            q: qr.q(),
            r: qr.r(),
            scales,
        }
    }

    /// Coefficients minimising `|y - X b|` for every column of `rhs`.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let qty = self.q.transpose() * rhs;
        let mut b = self
            .r
            .solve_upper_triangular(&qty)
            .expect("full-rank R has a nonzero diagonal");
        for (i, mut row) in b.row_iter_mut().enumerate() {
            row /= self.scales[i];
        }
        b
    }

    pub fn solve_vec(&self, y: &DVector<f64>) -> DVector<f64> {
        let m = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
        self.solve(&m).column(0).into_owned()
    }

    /// `(X'X)^{-1}` assembled from the triangular factor.
    pub fn xtx_inverse(&self) -> DMatrix<f64> {
        let k = self.r.ncols();
        let rinv = self
            .r
            .solve_upper_triangular(&DMatrix::identity(k, k))
            .expect("full-rank R has a nonzero diagonal");
        let mut inv = &rinv * rinv.transpose();
        for i in 0..k {
            for j in 0..k {
                inv[(i, j)] /= self.scales[i] * self.scales[j];
            }
        }
        symmetrize(&inv)
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// True when the symmetric part of `m` admits a Cholesky factor.
pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    m.is_square() && m.iter().all(|v| v.is_finite()) && symmetrize(m).cholesky().is_some()
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = symmetrize(m).cholesky().ok_or(Error::NotPositiveDefinite)?;
    Ok(symmetrize(&chol.inverse()))
}

/// Moore-Penrose inverse of the positive semidefinite part of a symmetric
/// matrix. Eigenvalues at or below `rel_tol * max_eigenvalue` are treated as
/// zero. Returns the inverse together with the retained rank.
pub fn psd_pinv(m: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, usize) {
    let n = m.nrows();
    let eig = symmetrize(m).symmetric_eigen();
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let mut out = DMatrix::zeros(n, n);
    let mut rank = 0;
    if lmax <= 0.0 {
        return (out, 0);
    }
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l > rel_tol * lmax {
            rank += 1;
            let v = eig.eigenvectors.column(i);
            out += (v * v.transpose()) / l;
        }
    }
    (symmetrize(&out), rank)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_recovers_exact_coefficients() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0, 7.0]);
        let b = LeastSquares::new(&x).solve_vec(&y);
        assert!((b[0] - 1.0).abs() < 1e-12);
        assert!((b[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn xtx_inverse_matches_direct_inverse() {
        let x = DMatrix::from_row_slice(5, 2, &[1.0, 0.5, 1.0, -1.0, 1.0, 2.0, 1.0, 0.0, 1.0, 3.5]);
        let direct = (x.transpose() * &x).try_inverse().unwrap();
        let inv = LeastSquares::new(&x).xtx_inverse();
        assert!((direct - inv).amax() < 1e-12);
    }

    #[test]
    fn rank_check_names_duplicated_columns() {
        let x = DMatrix::from_row_slice(
            4,
            3,
            &[1.0, 2.0, 4.0, 1.0, 3.0, 6.0, 1.0, 5.0, 10.0, 1.0, 7.0, 14.0],
        );
        let names: Vec<String> = ["const", "a", "b"].iter().map(|s| s.to_string()).collect();
        match check_full_rank(&x, &names) {
            Err(Error::Singular { columns }) => {
                assert_eq!(columns, vec!["a".to_string(), "b".to_string()])
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rank_check_ignores_column_scale() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1e-9, 1.0, 3e-9, 1.0, -2e-9]);
        assert!(check_full_rank(&x, &["a".into(), "b".into()]).is_ok());
    }

    #[test]
    fn pinv_drops_negative_part() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, -1.0]);
        let (p, rank) = psd_pinv(&m, 1e-12);
        assert_eq!(rank, 1);
        assert!((p[(0, 0)] - 0.5).abs() < 1e-15);
        assert_eq!(p[(1, 1)], 0.0);
    }

    #[test]
    fn named_matrix_rejects_duplicates() {
        let r = NamedMatrix::from_columns(vec![("a", vec![1.0]), ("a", vec![2.0])]);
        assert_eq!(r, Err(Error::DuplicateColumn("a".into())));
    }
}
