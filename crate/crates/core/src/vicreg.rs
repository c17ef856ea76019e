//! VICReg objective: invariance, variance and covariance terms over two
//! batches of embeddings, with analytic gradients.
//!
//! Column variance and the covariance matrix both use the unbiased `1/(n-1)`
//! normalization. The covariance penalty sums the squared off-diagonal
//! entries and divides by the embedding dimension `d`.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VicregWeights {
    pub lambda: f64,
    pub mu: f64,
    pub nu: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl Default for VicregWeights {
    fn default() -> Self {
        VicregWeights { lambda: 25.0, mu: 25.0, nu: 1.0, gamma: 1.0, epsilon: 1e-4 }
    }
}

impl VicregWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.lambda, self.mu, self.nu, self.gamma, self.epsilon];
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) || self.gamma <= 0.0 || self.epsilon <= 0.0 {
            return Err(Error::config("vicreg", "weights must be finite and non-negative with gamma, epsilon > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub invariance: f64,
    pub variance_a: f64,
    pub variance_b: f64,
    pub covariance_a: f64,
    pub covariance_b: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.invariance, self.variance_a, self.variance_b, self.covariance_a, self.covariance_b, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

fn need_two_rows(z: ArrayView2<f64>) -> Result<()> {
    if z.nrows() < 2 {
        return Err(Error::InvalidArgument(format!(
            "variance and covariance need a batch of at least 2 embeddings, got {}",
            z.nrows()
        )));
    }
    Ok(())
}

fn same_shape(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!("embedding batches {:?} and {:?} differ", a.dim(), b.dim())));
    }
    Ok(())
}

/// Mean over the batch of squared Euclidean distances between paired rows.
pub fn invariance_loss(za: ArrayView2<f64>, zb: ArrayView2<f64>) -> Result<f64> {
    same_shape(za, zb)?;
    let n = za.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument("empty embedding batch".into()));
    }
    Ok(za.iter().zip(zb.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64)
}

fn centered(z: ArrayView2<f64>) -> Array2<f64> {
    let mean = z.mean_axis(Axis(0)).expect("non-empty");
    &z - &mean
}

/// Hinge on each column's standard deviation, averaged over columns.
pub fn variance_loss(z: ArrayView2<f64>, gamma: f64, epsilon: f64) -> Result<f64> {
    need_two_rows(z)?;
    let (n, d) = z.dim();
    let c = centered(z);
    let total: f64 = c
        .axis_iter(Axis(1))
        .map(|col| {
            let var = col.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64;
            (gamma - (var + epsilon).sqrt()).max(0.0)
        })
        .sum();
    Ok(total / d as f64)
}

/// Unbiased `d x d` covariance of the batch.
pub fn covariance_matrix(z: ArrayView2<f64>) -> Result<Array2<f64>> {
    need_two_rows(z)?;
    let n = z.nrows();
    let c = centered(z);
    Ok(c.t().dot(&c) / (n - 1) as f64)
}

/// Squared off-diagonal covariance entries summed, divided by `d`.
pub fn covariance_loss(z: ArrayView2<f64>) -> Result<f64> {
    let cov = covariance_matrix(z)?;
    let d = cov.nrows();
    let off: f64 = cov.indexed_iter().filter(|((i, j), _)| i != j).map(|(_, v)| v * v).sum();
    Ok(off / d as f64)
}

pub fn vicreg_total(za: ArrayView2<f64>, zb: ArrayView2<f64>, w: &VicregWeights) -> Result<LossBreakdown> {
    same_shape(za, zb)?;
    need_two_rows(za)?;
    let invariance = invariance_loss(za, zb)?;
    let variance_a = variance_loss(za, w.gamma, w.epsilon)?;
    let variance_b = variance_loss(zb, w.gamma, w.epsilon)?;
    let covariance_a = covariance_loss(za)?;
    let covariance_b = covariance_loss(zb)?;
    let total = w.lambda * invariance + w.mu * (variance_a + variance_b) + w.nu * (covariance_a + covariance_b);
    Ok(LossBreakdown { invariance, variance_a, variance_b, covariance_a, covariance_b, total })
}

/// Gradient of `mu * v(z) + nu * c(z)` with respect to one batch.
fn regularizer_grad(z: ArrayView2<f64>, w: &VicregWeights) -> Array2<f64> {
    let (n, d) = z.dim();
    let nm1 = (n - 1) as f64;
    let c = centered(z);
    let mut grad = Array2::zeros((n, d));

    if w.mu != 0.0 {
        // d/dz_ij of max(0, g - sqrt(var_j + eps)) = -(z_ij - mean_j) / ((n-1) * std_j) inside the hinge
        for (j, col) in c.axis_iter(Axis(1)).enumerate() {
            let var = col.iter().map(|v| v * v).sum::<f64>() / nm1;
            let std = (var + w.epsilon).sqrt();
            if std < w.gamma {
                let scale = -w.mu / (d as f64 * nm1 * std);
                for i in 0..n {
                    grad[[i, j]] += scale * col[i];
                }
            }
        }
    }

    if w.nu != 0.0 {
        // c = (1/d) sum_{k != l} C_kl^2 ; dc/dz = (4 / (d (n-1))) * centered * offdiag(C)
        let mut cov = c.t().dot(&c) / nm1;
        for k in 0..d {
            cov[[k, k]] = 0.0;
        }
        grad.scaled_add(w.nu * 4.0 / (d as f64 * nm1), &c.dot(&cov));
    }
    grad
}

/// Analytic `(dL/dZa, dL/dZb)` of the weighted total.
pub fn vicreg_grad(
    za: ArrayView2<f64>,
    zb: ArrayView2<f64>,
    w: &VicregWeights,
) -> Result<(Array2<f64>, Array2<f64>)> {
    same_shape(za, zb)?;
    let n = za.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument("empty embedding batch".into()));
    }
    let diff = (&za - &zb) * (2.0 * w.lambda / n as f64);
    let mut ga = diff.clone();
    let mut gb = -diff;
    if w.mu != 0.0 || w.nu != 0.0 {
        need_two_rows(za)?;
        ga += &regularizer_grad(za, w);
        gb += &regularizer_grad(zb, w);
    }
    Ok((ga, gb))
}
