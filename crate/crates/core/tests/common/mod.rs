#![allow(dead_code)]

use eivgmm_core::synthetic::NormalStream;
use eivgmm_core::NamedMatrix;
use nalgebra::{DMatrix, DVector};

pub fn names(prefix: &str, k: usize) -> Vec<String> {
    (0..k).map(|j| format!("{prefix}{j}")).collect()
}

pub fn named(names: &[&str], m: DMatrix<f64>) -> NamedMatrix {
    NamedMatrix::new(names.iter().map(|s| s.to_string()).collect(), m).unwrap()
}

pub fn ones(t: usize) -> DMatrix<f64> {
    DMatrix::from_element(t, 1, 1.0)
}

pub fn normal_matrix(r: &mut NormalStream, t: usize, k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(t, k, |_, _| r.normal())
}

pub fn normal_vector(r: &mut NormalStream, t: usize) -> DVector<f64> {
    DVector::from_fn(t, |_, _| r.normal())
}

/// Design with an intercept in column 0 and `k - 1` Gaussian regressors.
pub fn design_with_intercept(r: &mut NormalStream, t: usize, k: usize) -> DMatrix<f64> {
    let mut x = normal_matrix(r, t, k);
    x.column_mut(0).fill(1.0);
    x
}

/// Explicit hat-matrix product `Z (Z'Z)^{-1} Z' X` via a dense inverse.
pub fn hat_matrix_oracle(x: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
    let p = z * (z.transpose() * z).try_inverse().unwrap() * z.transpose();
    p * x
}

/// White sandwich `(X'X)^{-1} (Σ u_t² x_t x_t') (X'X)^{-1}` by explicit loop.
pub fn white_oracle(x: &DMatrix<f64>, u: &DVector<f64>) -> DMatrix<f64> {
    let k = x.ncols();
    let mut meat = DMatrix::zeros(k, k);
    for t in 0..x.nrows() {
        let xt = x.row(t).transpose();
        meat += &xt * xt.transpose() * (u[t] * u[t]);
    }
    let bread = (x.transpose() * x).try_inverse().unwrap();
    &bread * meat * &bread
}

/// Two-pass sample mean and standard deviation.
pub fn two_pass(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mut mean = 0.0;
    for x in v {
        mean += x;
    }
    mean /= n;
    let mut ss = 0.0;
    let mut comp = 0.0;
    for x in v {
        ss += (x - mean) * (x - mean);
        comp += x - mean;
    }
    ((mean), ((ss - comp * comp / n) / (n - 1.0)).sqrt())
}

pub fn corr(a: &[f64], b: &[f64]) -> f64 {
    let (ma, sa) = two_pass(a);
    let (mb, sb) = two_pass(b);
    let n = a.len() as f64;
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / ((n - 1.0) * sa * sb)
}
