use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ridge-regularized least squares on standardized features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept
            + x.iter()
                .zip(&self.means)
                .zip(&self.scales)
                .zip(&self.weights)
                .map(|(((v, m), s), w)| w * (v - m) / s)
                .sum::<f64>()
    }

    pub fn fit(x: &[Vec<f64>], y: &[f64], ridge: f64) -> Result<LinearModel> {
        let n = x.len();
        if n == 0 {
            return Err(Error::Parameter("empty training data".into()));
        }
        let p = x[0].len();
        let mut means = vec![0.0; p];
        let mut scales = vec![0.0; p];
        for j in 0..p {
            means[j] = x.iter().map(|r| r[j]).sum::<f64>() / n as f64;
            let var = x.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / n as f64;
            scales[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let z = DMatrix::from_fn(n, p, |i, j| (x[i][j] - means[j]) / scales[j]);
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
        let mut gram = z.transpose() * &z;
        for j in 0..p {
            gram[(j, j)] += ridge;
        }
        let rhs = z.transpose() * yc;
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::Parameter("normal equations are not positive definite".into()))?;
        let w = chol.solve(&rhs);
        Ok(LinearModel {
            means,
            scales,
            weights: w.iter().copied().collect(),
            intercept: y_mean,
        })
    }
}
