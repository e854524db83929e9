//! Ordinary least squares on complete rows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Feature, FeatureMatrix};

/// Relative ridge added to the centred Gram diagonal.
const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub features: Vec<Feature>,
    pub coef: Vec<f64>,
    pub intercept: f64,
    /// Training column means, substituted for missing cells at prediction.
    pub fill: Vec<f64>,
}

impl LinearModel {
    #[inline]
    pub fn predict_row(&self, row: &[f64], missing: &[bool]) -> f64 {
        let mut y = self.intercept;
        for j in 0..self.coef.len() {
            let x = if missing[j] { self.fill[j] } else { row[j] };
            y += self.coef[j] * x;
        }
        y
    }
}

/// Fits `y = X a + b` by least squares. Rows with any missing cell are
/// dropped.
pub fn fit_linear(train: &FeatureMatrix) -> Result<LinearModel> {
    let y = train
        .target()
        .ok_or_else(|| Error::InvalidParam("training matrix has no target".into()))?;
    let p = train.n_features();
    let rows: Vec<usize> = (0..train.n_rows())
        .filter(|&r| !train.row_missing(r).iter().any(|&m| m))
        .collect();
    if rows.len() < p + 1 {
        return Err(Error::Insufficient(format!(
            "{} complete rows for {p} coefficients and an intercept",
            rows.len()
        )));
    }
    let n = rows.len() as f64;
    let mut mean_x = vec![0.0; p];
    let mut mean_y = 0.0;
    for &r in &rows {
        for (mx, x) in mean_x.iter_mut().zip(train.row(r)) {
            *mx += x;
        }
        mean_y += y[r];
    }
    for mx in &mut mean_x {
        *mx /= n;
    }
    mean_y /= n;

    let mut gram = vec![vec![0.0; p]; p];
    let mut rhs = vec![0.0; p];
    let mut centred = vec![0.0; p];
    for &r in &rows {
        for (c, (x, mx)) in centred.iter_mut().zip(train.row(r).iter().zip(&mean_x)) {
            *c = x - mx;
        }
        let dy = y[r] - mean_y;
        for i in 0..p {
            rhs[i] += centred[i] * dy;
            for j in i..p {
                gram[i][j] += centred[i] * centred[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            gram[i][j] = gram[j][i];
        }
    }
    let scale = if p > 0 {
        (0..p).map(|i| gram[i][i]).sum::<f64>() / p as f64
    } else {
        0.0
    };
    let ridge = RIDGE * scale.max(1.0);
    for (i, row) in gram.iter_mut().enumerate() {
        row[i] += ridge;
    }
    let coef = solve(gram, rhs)?;
    let intercept = mean_y - coef.iter().zip(&mean_x).map(|(a, m)| a * m).sum::<f64>();

    let mut fill = vec![0.0; p];
    let mut count = vec![0usize; p];
    for r in 0..train.n_rows() {
        for j in 0..p {
            if let Some(v) = train.get(r, j) {
                fill[j] += v;
                count[j] += 1;
            }
        }
    }
    for (f, c) in fill.iter_mut().zip(&count) {
        *f = if *c > 0 { *f / *c as f64 } else { 0.0 };
    }
    Ok(LinearModel {
        features: train.features().to_vec(),
        coef,
        intercept,
        fill,
    })
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        if !(a[piv][col].abs() > 0.0) {
            return Err(Error::Insufficient("normal equations are singular".into()));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Insufficient(
            "least-squares solution is not finite".into(),
        ));
    }
    Ok(x)
}
