//! Proximity graph over a point cloud and the discrete operators read off it.
//!
//! For points `x_1..x_N`, symmetric weights `W_ij` come from a kernel on
//! pairwise distances with bandwidth `h`:
//!
//! ```text
//! hard cutoff:  W_ij = 1            if 0 < |x_i - x_j| <= h
//! gaussian:     W_ij = exp(-|x_i - x_j|^2 / h^2), truncated below 1e-12
//! ```
//!
//! with `W_ii = 0`. Writing `m_i = sum_j W_ij` and `P = M^{-1} W` for the
//! random-walk transition matrix, the discrete generator is
//!
//! ```text
//! (G u)(x_i) = (c / h^2) * sum_j P_ij (u(x_j) - u(x_i))
//! ```
//!
//! the negation of the random-walk graph Laplacian. With the default scaling
//! `c = d + 2` (`d` the intrinsic dimension) and a hard cutoff, `G` acts on
//! dense samples of a `d`-manifold like half the Laplace-Beltrami operator.
//!
//! The carre du champ of two node functions,
//! `cdc(u, w) = G(uw) - u Gw - w Gu`, collapses to the local covariance form
//! `(c / h^2) * sum_j P_ij (u_j - u_i)(w_j - w_i)`, and the Dirichlet form is
//! its degree-weighted total: `E(u, v) = <u, -Gv>` under the stationary
//! weights `m_i / sum m`.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::manifolds::PointCloud;
use crate::neighbors::SpatialIndex;
use crate::util::dist_sq;

/// Weights below this value are truncated to zero for the gaussian kernel.
const GAUSSIAN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    HardCutoff,
    Gaussian,
}

impl Kernel {
    /// Distance beyond which the kernel's weight is zero at bandwidth `h`.
    fn reach(self, h: f64) -> f64 {
        match self {
            Kernel::HardCutoff => h,
            // exp(-(r/h)^2) >= GAUSSIAN_FLOOR  <=>  r <= h sqrt(-ln floor)
            Kernel::Gaussian => h * (-GAUSSIAN_FLOOR.ln()).sqrt(),
        }
    }

    fn weight(self, d2: f64, h: f64) -> f64 {
        match self {
            Kernel::HardCutoff => 1.0,
            Kernel::Gaussian => {
                let w = (-d2 / (h * h)).exp();
                if w < GAUSSIAN_FLOOR {
                    0.0
                } else {
                    w
                }
            }
        }
    }

    /// Smallest bandwidth under which a neighbor at distance `d` gets a
    /// nonzero weight.
    fn connecting_bandwidth(self, d: f64) -> f64 {
        match self {
            Kernel::HardCutoff => d,
            Kernel::Gaussian => d / (-GAUSSIAN_FLOOR.ln()).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GraphConfig {
    pub bandwidth: f64,
    pub kernel: Kernel,
    /// Scaling constant `c` in `(c / h^2)`; `d + 2` recovers half the
    /// Laplace-Beltrami operator under a hard cutoff.
    pub scaling_c: f64,
}

impl GraphConfig {
    /// Hard-cutoff kernel with the canonical scaling for intrinsic
    /// dimension `d`.
    pub fn new(bandwidth: f64, intrinsic_dim: usize) -> Self {
        GraphConfig {
            bandwidth,
            kernel: Kernel::HardCutoff,
            scaling_c: (intrinsic_dim + 2) as f64,
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.bandwidth.is_finite() || self.bandwidth <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "bandwidth must be positive, got {}",
                self.bandwidth
            )));
        }
        if !self.scaling_c.is_finite() || self.scaling_c <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "scaling constant must be positive, got {}",
                self.scaling_c
            )));
        }
        Ok(())
    }
}

/// Symmetric weighted proximity graph in compressed sparse rows, together
/// with a snapshot of the node positions.
#[derive(Debug)]
pub struct ProximityGraph {
    points: Array2<f64>,
    intrinsic_dim: usize,
    offsets: Vec<usize>,
    neighbor_ids: Vec<u32>,
    weights: Vec<f64>,
    degrees: Vec<f64>,
    config: GraphConfig,
}

impl ProximityGraph {
    pub fn n_nodes(&self) -> usize {
        self.points.nrows()
    }

    pub fn ambient_dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.intrinsic_dim
    }

    pub fn config(&self) -> &GraphConfig {
        &self.config
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.points.ncols();
        &self.points.as_slice().expect("row-major storage")[i * d..(i + 1) * d]
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    /// Neighbor ids and weights of node `i`, ordered by id.
    pub fn neighbors(&self, i: usize) -> (&[u32], &[f64]) {
        let range = self.offsets[i]..self.offsets[i + 1];
        (&self.neighbor_ids[range.clone()], &self.weights[range])
    }

    /// Weighted degree `m_i`; strictly positive by construction.
    pub fn degree(&self, i: usize) -> f64 {
        self.degrees[i]
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.neighbor_ids.len() / 2
    }

    /// Mean number of neighbors per node.
    pub fn mean_degree(&self) -> f64 {
        self.neighbor_ids.len() as f64 / self.n_nodes() as f64
    }

    /// Nodes with fewer neighbors than the intrinsic dimension. Their local
    /// covariance is rank-deficient; diffusion through them degenerates but
    /// stays well defined.
    pub fn degenerate_count(&self) -> usize {
        (0..self.n_nodes())
            .filter(|&i| self.offsets[i + 1] - self.offsets[i] < self.intrinsic_dim)
            .count()
    }

    pub fn scale(&self) -> f64 {
        self.config.scaling_c / (self.config.bandwidth * self.config.bandwidth)
    }

    fn check_function(&self, u: &[f64], name: &str) -> Result<()> {
        if u.len() != self.n_nodes() {
            return Err(Error::InvalidParameter(format!(
                "{name} has {} entries for {} nodes",
                u.len(),
                self.n_nodes()
            )));
        }
        Ok(())
    }

    /// Applies the generator: `(G u)_i = (c / h^2) sum_j P_ij (u_j - u_i)`.
    pub fn generator_apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_function(u, "node function")?;
        let scale = self.scale();
        Ok((0..self.n_nodes())
            .map(|i| {
                let (ids, ws) = self.neighbors(i);
                let sum: f64 = ids
                    .iter()
                    .zip(ws)
                    .map(|(&j, &w)| w * (u[j as usize] - u[i]))
                    .sum();
                scale * sum / self.degrees[i]
            })
            .collect())
    }

    /// The random-walk graph Laplacian, the positive-semidefinite negation
    /// of the generator.
    pub fn rw_laplacian_apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.generator_apply(u)?;
        for v in out.iter_mut() {
            *v = -*v;
        }
        Ok(out)
    }

    /// Carre du champ of two node functions in closed form:
    /// `(c / h^2) sum_j P_ij (u_j - u_i)(w_j - w_i)`. Algebraically equal to
    /// `G(uw) - u Gw - w Gu`.
    pub fn cdc_apply(&self, u: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        self.check_function(u, "first node function")?;
        self.check_function(w, "second node function")?;
        let scale = self.scale();
        Ok((0..self.n_nodes())
            .map(|i| {
                let (ids, ws) = self.neighbors(i);
                let sum: f64 = ids
                    .iter()
                    .zip(ws)
                    .map(|(&j, &wt)| {
                        let j = j as usize;
                        wt * (u[j] - u[i]) * (w[j] - w[i])
                    })
                    .sum();
                scale * sum / self.degrees[i]
            })
            .collect())
    }

    /// Dirichlet form
    /// `E(u, v) = (c / (2 h^2)) sum_ij W_ij (u_i - u_j)(v_i - v_j) / sum_i m_i`,
    /// the degree-weighted pairing `<u, -Gv>`.
    pub fn dirichlet_form(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        self.check_function(u, "first node function")?;
        self.check_function(v, "second node function")?;
        let mut acc = 0.0;
        for i in 0..self.n_nodes() {
            let (ids, ws) = self.neighbors(i);
            for (&j, &w) in ids.iter().zip(ws) {
                let j = j as usize;
                acc += w * (u[i] - u[j]) * (v[i] - v[j]);
            }
        }
        let total_degree: f64 = self.degrees.iter().sum();
        Ok(0.5 * self.scale() * acc / total_degree)
    }
}

/// Builds the proximity graph of `cloud` under `config`. `index` must be an
/// index over the same points.
///
/// Fails if any node ends up without a neighbor (zero weighted degree); the
/// error names the worst such node and the smallest bandwidth that would
/// attach it.
pub fn build_graph(
    cloud: &PointCloud,
    index: &SpatialIndex,
    config: GraphConfig,
) -> Result<ProximityGraph> {
    config.validate()?;
    let n = cloud.n_points();
    if index.len() != n || index.dim() != cloud.ambient_dim() {
        return Err(Error::InvalidParameter(
            "spatial index does not match the cloud".into(),
        ));
    }
    if n == 1 {
        return Err(Error::Isolated {
            node: 0,
            bandwidth: config.bandwidth,
            suggested: f64::INFINITY,
        });
    }
    let reach = config.kernel.reach(config.bandwidth);
    let rows: Vec<Result<Vec<(u32, f64)>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let hits = index.radius_query(cloud.point(i), reach)?;
            Ok(hits
                .into_iter()
                .filter(|&(j, _)| j != i)
                .filter_map(|(j, d)| {
                    let w = config.kernel.weight(d * d, config.bandwidth);
                    (w > 0.0).then_some((j as u32, w))
                })
                .collect())
        })
        .collect();

    let mut offsets = Vec::with_capacity(n + 1);
    let mut neighbor_ids = Vec::new();
    let mut weights = Vec::new();
    let mut degrees = Vec::with_capacity(n);
    let mut worst_isolated: Option<(usize, f64)> = None;
    offsets.push(0);
    for (i, row) in rows.into_iter().enumerate() {
        let row = row?;
        let m: f64 = row.iter().map(|&(_, w)| w).sum();
        if m <= 0.0 {
            let nn = index.knn(cloud.point(i), 2)?;
            let d_nn = nn
                .iter()
                .find(|&&(j, _)| j != i)
                .map(|&(_, d)| d)
                .unwrap_or(f64::INFINITY);
            let suggested = config.kernel.connecting_bandwidth(d_nn);
            if worst_isolated.is_none_or(|(_, s)| suggested > s) {
                worst_isolated = Some((i, suggested));
            }
            offsets.push(neighbor_ids.len());
            degrees.push(0.0);
            continue;
        }
        for (j, w) in row {
            neighbor_ids.push(j);
            weights.push(w);
        }
        offsets.push(neighbor_ids.len());
        degrees.push(m);
    }
    if let Some((node, suggested)) = worst_isolated {
        return Err(Error::Isolated {
            node,
            bandwidth: config.bandwidth,
            suggested,
        });
    }
    Ok(ProximityGraph {
        points: cloud.points.clone(),
        intrinsic_dim: cloud.intrinsic_dim,
        offsets,
        neighbor_ids,
        weights,
        degrees,
        config,
    })
}

/// Default bandwidth for a cloud: 1.5 times the smallest radius under which
/// the hard-cutoff graph is connected.
///
/// That radius is the longest edge of the Euclidean minimum spanning tree,
/// computed exactly by Prim's algorithm (quadratic in N, parallelized over
/// candidate nodes).
pub fn default_bandwidth(points: &Array2<f64>) -> Result<f64> {
    let (n, d) = points.dim();
    if n < 2 {
        return Err(Error::DegenerateInput(
            "bandwidth selection needs at least two points".into(),
        ));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput(
            "bandwidth selection input contains non-finite coordinates".into(),
        ));
    }
    let flat = points.as_slice().expect("row-major storage");
    let point = |i: usize| &flat[i * d..(i + 1) * d];

    let mut in_tree = vec![false; n];
    in_tree[0] = true;
    let mut best: Vec<f64> = (0..n).map(|j| dist_sq(point(0), point(j))).collect();
    let mut bottleneck_sq = 0.0f64;
    let mut latest = 0usize;
    for _ in 1..n {
        let newest = point(latest);
        let (d2, jmin) = best
            .par_iter_mut()
            .enumerate()
            .filter(|&(j, _)| !in_tree[j])
            .map(|(j, b)| {
                let d2 = dist_sq(newest, point(j));
                if d2 < *b {
                    *b = d2;
                }
                (*b, j)
            })
            .reduce(
                || (f64::INFINITY, usize::MAX),
                |a, b| {
                    if a.0 < b.0 || (a.0 == b.0 && a.1 < b.1) {
                        a
                    } else {
                        b
                    }
                },
            );
        bottleneck_sq = bottleneck_sq.max(d2);
        in_tree[jmin] = true;
        latest = jmin;
    }
    Ok(1.5 * bottleneck_sq.sqrt())
}
