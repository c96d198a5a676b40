//! Score of a Gaussian kernel density over the point cloud, and the descent
//! step that pulls an off-cloud state back toward the data.
//!
//! The density is `rho(x) = (1/N) sum_i exp(-|x - x_i|^2 / (2 sigma^2))` up
//! to the usual normalizing constant, so the score is
//!
//! ```text
//! score(x) = grad log rho(x) = (b(x) - x) / sigma^2
//! b(x)     = sum_i w_i(x) x_i,   w_i proportional to exp(-|x - x_i|^2 / (2 sigma^2))
//! ```
//!
//! The descent step `x + sigma^2 score(x)` therefore equals the softmax
//! barycenter `b(x)` exactly; it is computed in that form so the result is a
//! convex combination of cloud points by construction. Weights are formed
//! with the smallest squared distance subtracted, which keeps the largest
//! exponent at zero. Sums run sequentially so results are reproducible bit
//! for bit.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::manifolds::PointCloud;
use crate::util::dist_sq;

/// Fraction of the cloud's enclosing diameter used as the default kernel
/// width.
pub const DEFAULT_SIGMA_FRACTION: f64 = 0.005;

/// Gaussian kernel density score over a fixed point cloud.
pub struct ScoreConfig<'a> {
    points: &'a Array2<f64>,
    sigma: f64,
}

impl<'a> ScoreConfig<'a> {
    /// `sigma = None` selects 0.5% of the cloud's enclosing diameter.
    pub fn new(cloud: &'a PointCloud, sigma: Option<f64>) -> Result<Self> {
        let sigma = match sigma {
            Some(s) => s,
            None => DEFAULT_SIGMA_FRACTION * cloud.enclosing_diameter(),
        };
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "kernel width must be positive and finite, got {sigma}"
            )));
        }
        Ok(ScoreConfig {
            points: &cloud.points,
            sigma,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    fn barycenter(&self, x: &[f64]) -> Result<Array1<f64>> {
        let (n_points, ambient) = self.points.dim();
        if x.len() != ambient {
            return Err(Error::InvalidParameter(format!(
                "query has dimension {}, cloud has {ambient}",
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("query is not finite".into()));
        }
        let rows = self.points.as_slice().expect("row-major storage");
        let mut d2 = vec![0.0; n_points];
        let mut d2_min = f64::INFINITY;
        for i in 0..n_points {
            let d = dist_sq(x, &rows[i * ambient..(i + 1) * ambient]);
            d2_min = d2_min.min(d);
            d2[i] = d;
        }
        let inv_two_sigma_sq = 1.0 / (2.0 * self.sigma * self.sigma);
        let mut total = 0.0;
        let mut bary = Array1::<f64>::zeros(ambient);
        for i in 0..n_points {
            let arg = (d2[i] - d2_min) * inv_two_sigma_sq;
            // exp(-arg) is exactly 0.0 beyond 745, so skipping the call
            // changes nothing.
            if arg > 745.0 {
                continue;
            }
            let w = (-arg).exp();
            if w == 0.0 {
                continue;
            }
            total += w;
            let xi = &rows[i * ambient..(i + 1) * ambient];
            for k in 0..ambient {
                bary[k] += w * xi[k];
            }
        }
        bary.mapv_inplace(|v| v / total);
        Ok(bary)
    }

    /// Gradient of the log kernel density at `x`.
    pub fn score_at(&self, x: &[f64]) -> Result<Array1<f64>> {
        let mut bary = self.barycenter(x)?;
        let inv_sigma_sq = 1.0 / (self.sigma * self.sigma);
        for (b, &xi) in bary.iter_mut().zip(x) {
            *b = (*b - xi) * inv_sigma_sq;
        }
        Ok(bary)
    }

    /// One stabilization step `x + sigma^2 score(x)`, returned in its exact
    /// barycentric form.
    pub fn drgd_step(&self, x: &[f64]) -> Result<Array1<f64>> {
        self.barycenter(x)
    }
}
