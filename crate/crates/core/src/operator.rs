//! Node-wise drift vectors and carre-du-champ matrices, with their
//! positive-semidefinite square roots, plus the extension that evaluates the
//! field at arbitrary ambient points.
//!
//! At node `i` with transition weights `P_ij` and scale `c / h^2`:
//!
//! ```text
//! drift_i  = (c / h^2) sum_j P_ij (x_j - x_i)           (generator of coordinates)
//! cdc_i    = (c / h^2) sum_j P_ij (x_j - x_i)(x_j - x_i)^T
//! ```
//!
//! `cdc_i` is a sum of positively weighted rank-one terms, hence positive
//! semidefinite up to roundoff; eigenvalues are clipped at zero before the
//! symmetric square root is taken.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::ProximityGraph;
use crate::neighbors::SpatialIndex;

/// Regularizer added to distances when inverse-distance weights are formed,
/// so queries that coincide with a node stay well defined.
const INVERSE_DISTANCE_EPS: f64 = 1e-12;

/// Drift vector, clipped carre-du-champ matrix, and its square root at one
/// ambient point.
#[derive(Debug, Clone)]
pub struct LocalOperator {
    pub drift: Array1<f64>,
    pub cdc: Array2<f64>,
    pub cdc_sqrt: Array2<f64>,
}

/// The estimated operator field over all nodes of a proximity graph.
pub struct OperatorField {
    drift: Array2<f64>,
    cdc: Vec<Array2<f64>>,
    cdc_sqrt: Vec<Array2<f64>>,
    /// Nodes whose neighborhood had fewer points than the intrinsic
    /// dimension at build time; `None` for fields reconstructed from disk.
    degenerate_nodes: Option<usize>,
}

impl OperatorField {
    pub fn n_nodes(&self) -> usize {
        self.drift.nrows()
    }

    pub fn ambient_dim(&self) -> usize {
        self.drift.ncols()
    }

    pub fn drift_row(&self, i: usize) -> &[f64] {
        let n = self.drift.ncols();
        &self.drift.as_slice().expect("row-major storage")[i * n..(i + 1) * n]
    }

    pub fn drift(&self) -> &Array2<f64> {
        &self.drift
    }

    pub fn cdc(&self, i: usize) -> &Array2<f64> {
        &self.cdc[i]
    }

    pub fn cdc_sqrt(&self, i: usize) -> &Array2<f64> {
        &self.cdc_sqrt[i]
    }

    pub fn degenerate_nodes(&self) -> Option<usize> {
        self.degenerate_nodes
    }

    /// Rebuilds a field from drift rows and carre-du-champ matrices (as read
    /// from disk): matrices are re-clipped and square roots recomputed.
    pub fn from_parts(drift: Array2<f64>, cdc: Vec<Array2<f64>>) -> Result<Self> {
        let (n_nodes, ambient) = drift.dim();
        if n_nodes == 0 || ambient == 0 {
            return Err(Error::DegenerateInput("operator field is empty".into()));
        }
        if cdc.len() != n_nodes {
            return Err(Error::InvalidParameter(format!(
                "{} matrices for {n_nodes} drift rows",
                cdc.len()
            )));
        }
        for (i, m) in cdc.iter().enumerate() {
            if m.dim() != (ambient, ambient) {
                return Err(Error::InvalidParameter(format!(
                    "matrix {i} has shape {:?}, expected ({ambient}, {ambient})",
                    m.dim()
                )));
            }
        }
        let pairs: Vec<(Array2<f64>, Array2<f64>)> =
            cdc.par_iter().map(psd_clip_and_sqrt).collect();
        let (cdc, cdc_sqrt) = pairs.into_iter().unzip();
        Ok(OperatorField {
            drift,
            cdc,
            cdc_sqrt,
            degenerate_nodes: None,
        })
    }
}

/// Clips a symmetric matrix to its positive-semidefinite part and returns it
/// with its symmetric square root.
pub(crate) fn psd_clip_and_sqrt(mat: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let n = mat.nrows();
    let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * (mat[[i, j]] + mat[[j, i]]));
    let eigen = sym.symmetric_eigen();
    let mut clipped = DMatrix::zeros(n, n);
    let mut root = DMatrix::zeros(n, n);
    for k in 0..n {
        let lambda = eigen.eigenvalues[k].max(0.0);
        let q = eigen.eigenvectors.column(k);
        let outer = &q * q.transpose();
        clipped += &outer * lambda;
        root += &outer * lambda.sqrt();
    }
    let to_ndarray = |m: &DMatrix<f64>| Array2::from_shape_fn((n, n), |(i, j)| m[(i, j)]);
    (to_ndarray(&clipped), to_ndarray(&root))
}

/// Estimates drift and carre-du-champ at every node of the graph.
pub fn build_operator_field(graph: &ProximityGraph) -> OperatorField {
    let n_nodes = graph.n_nodes();
    let ambient = graph.ambient_dim();
    let scale = graph.scale();

    let per_node: Vec<(Vec<f64>, Array2<f64>, Array2<f64>)> = (0..n_nodes)
        .into_par_iter()
        .map(|i| {
            let xi = graph.point(i);
            let (ids, ws) = graph.neighbors(i);
            let factor = scale / graph.degree(i);
            let mut drift = vec![0.0; ambient];
            let mut second = Array2::<f64>::zeros((ambient, ambient));
            let mut delta = vec![0.0; ambient];
            for (&j, &w) in ids.iter().zip(ws) {
                let xj = graph.point(j as usize);
                for k in 0..ambient {
                    delta[k] = xj[k] - xi[k];
                }
                for k in 0..ambient {
                    drift[k] += w * delta[k];
                    for l in 0..ambient {
                        second[[k, l]] += w * delta[k] * delta[l];
                    }
                }
            }
            for v in drift.iter_mut() {
                *v *= factor;
            }
            second.mapv_inplace(|v| v * factor);
            let (cdc, cdc_sqrt) = psd_clip_and_sqrt(&second);
            (drift, cdc, cdc_sqrt)
        })
        .collect();

    let mut drift = Array2::zeros((n_nodes, ambient));
    let mut cdc = Vec::with_capacity(n_nodes);
    let mut cdc_sqrt = Vec::with_capacity(n_nodes);
    for (i, (v, m, s)) in per_node.into_iter().enumerate() {
        for (k, value) in v.into_iter().enumerate() {
            drift[[i, k]] = value;
        }
        cdc.push(m);
        cdc_sqrt.push(s);
    }
    OperatorField {
        drift,
        cdc,
        cdc_sqrt,
        degenerate_nodes: Some(graph.degenerate_count()),
    }
}

/// Evaluates the field at an ambient point `x` through its `k` nearest nodes.
///
/// `k = 1` returns the nearest node's stored triple. For `k > 1` the drift
/// and carre du champ are averaged with inverse-distance weights
/// `w_j = 1 / (dist_j + 1e-12)` (normalized), the average is re-clipped to
/// positive semidefinite, and the square root recomputed.
pub fn extend_to_ambient(
    field: &OperatorField,
    index: &SpatialIndex,
    x: &[f64],
    k: usize,
) -> Result<LocalOperator> {
    extend_hinted(field, index, x, k, None).map(|(local, _)| local)
}

/// `extend_to_ambient` that also reports the nearest node, warm-starting the
/// search from `hint` so step-by-step drivers pay a near-constant query cost.
pub(crate) fn extend_hinted(
    field: &OperatorField,
    index: &SpatialIndex,
    x: &[f64],
    k: usize,
    hint: Option<usize>,
) -> Result<(LocalOperator, usize)> {
    if index.len() != field.n_nodes() || index.dim() != field.ambient_dim() {
        return Err(Error::InvalidParameter(
            "spatial index does not match the operator field".into(),
        ));
    }
    if k == 1 {
        let (i, _) = match hint {
            Some(h) => index.nearest_from(x, h)?,
            None => index.knn(x, 1)?[0],
        };
        return Ok((
            LocalOperator {
                drift: Array1::from_vec(field.drift_row(i).to_vec()),
                cdc: field.cdc[i].clone(),
                cdc_sqrt: field.cdc_sqrt[i].clone(),
            },
            i,
        ));
    }
    let nearest = index.knn(x, k)?;
    let ambient = field.ambient_dim();
    let mut weights: Vec<f64> = nearest
        .iter()
        .map(|&(_, d)| 1.0 / (d + INVERSE_DISTANCE_EPS))
        .collect();
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    let mut drift = Array1::<f64>::zeros(ambient);
    let mut blended = Array2::<f64>::zeros((ambient, ambient));
    for (&(i, _), &w) in nearest.iter().zip(&weights) {
        let row = field.drift_row(i);
        for k in 0..ambient {
            drift[k] += w * row[k];
        }
        blended.scaled_add(w, &field.cdc[i]);
    }
    let (cdc, cdc_sqrt) = psd_clip_and_sqrt(&blended);
    Ok((
        LocalOperator {
            drift,
            cdc,
            cdc_sqrt,
        },
        nearest[0].0,
    ))
}
