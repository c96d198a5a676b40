//! Point clouds sampled from reference manifolds.
//!
//! Three families are built in:
//!
//! * spheres `S^d` of radius `R` embedded in `R^{d+1}`, sampled uniformly by
//!   normalizing Gaussian draws;
//! * the 2-torus `(u, v) -> ((R + r cos v) cos u, (R + r cos v) sin u, r sin v)`,
//!   sampled uniformly by surface area via rejection on `v` (density
//!   proportional to `R + r cos v`);
//! * the swiss roll `(t, h) -> (t cos t, h, t sin t)` with `t` drawn uniformly
//!   by arclength (density proportional to `sqrt(1 + t^2)`) and `h` uniform,
//!   so the cloud is uniform with respect to surface area.
//!
//! Samplers draw one point at a time from a counter-based generator, so for a
//! fixed seed the first `k` points of a size-`N` cloud equal the size-`k`
//! cloud: clouds of increasing size are nested.

use std::f64::consts::TAU;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::util::{dist, norm};

/// Description of the manifold a cloud was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub enum ManifoldSpec {
    /// `S^dim` of radius `radius`, embedded in `R^{dim+1}`.
    Sphere { dim: usize, radius: f64 },
    /// 2-torus in `R^3` with ring radius `major` and tube radius `minor`.
    Torus { major: f64, minor: f64 },
    /// Swiss roll surface in `R^3`: spiral parameter in `[t_min, t_max]`,
    /// height in `[0, height]`.
    SwissRoll {
        t_min: f64,
        t_max: f64,
        height: f64,
    },
}

impl ManifoldSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match *self {
            ManifoldSpec::Sphere { dim, radius } => {
                if dim < 1 {
                    return bad(format!("sphere dimension must be at least 1, got {dim}"));
                }
                if !radius.is_finite() || radius <= 0.0 {
                    return bad(format!("sphere radius must be positive, got {radius}"));
                }
            }
            ManifoldSpec::Torus { major, minor } => {
                if !major.is_finite() || !minor.is_finite() || !(0.0 < minor && minor < major) {
                    return bad(format!(
                        "torus radii must satisfy 0 < minor < major, got major={major} minor={minor}"
                    ));
                }
            }
            ManifoldSpec::SwissRoll {
                t_min,
                t_max,
                height,
            } => {
                if !t_min.is_finite() || !t_max.is_finite() || !(0.0 < t_min && t_min < t_max) {
                    return bad(format!(
                        "swiss roll range must satisfy 0 < t_min < t_max, got [{t_min}, {t_max}]"
                    ));
                }
                if !height.is_finite() || height <= 0.0 {
                    return bad(format!("swiss roll height must be positive, got {height}"));
                }
            }
        }
        Ok(())
    }

    /// Ambient dimension of the embedding space.
    pub fn ambient_dim(&self) -> usize {
        match *self {
            ManifoldSpec::Sphere { dim, .. } => dim + 1,
            ManifoldSpec::Torus { .. } | ManifoldSpec::SwissRoll { .. } => 3,
        }
    }

    /// Intrinsic dimension of the manifold.
    pub fn intrinsic_dim(&self) -> usize {
        match *self {
            ManifoldSpec::Sphere { dim, .. } => dim,
            ManifoldSpec::Torus { .. } | ManifoldSpec::SwissRoll { .. } => 2,
        }
    }
}

/// A finite sample of a manifold: `N` points in `R^n`, row per point.
///
/// `latent` holds the sampler's parameter coordinates when the manifold has a
/// stored parametrization (torus `(u, v)`, swiss roll `(t, h)`); spheres carry
/// none. `spec` records which manifold the cloud came from, when known.
#[derive(Debug, Clone)]
pub struct PointCloud {
    pub points: Array2<f64>,
    pub intrinsic_dim: usize,
    pub latent: Option<Array2<f64>>,
    pub spec: Option<ManifoldSpec>,
}

impl PointCloud {
    pub fn n_points(&self) -> usize {
        self.points.nrows()
    }

    pub fn ambient_dim(&self) -> usize {
        self.points.ncols()
    }

    /// Row `i` as a slice (points are stored row-major and contiguous).
    pub fn point(&self, i: usize) -> &[f64] {
        let n = self.points.ncols();
        &self.points.as_slice().expect("row-major storage")[i * n..(i + 1) * n]
    }

    /// Checks the structural invariants: at least one finite point, spec
    /// parameters valid, sphere clouds on the sphere to `1e-9`, and stored
    /// latent coordinates reproducing the points through the parametrization
    /// to `1e-9`.
    pub fn validate(&self) -> Result<()> {
        let (n_points, ambient) = self.points.dim();
        if n_points == 0 {
            return Err(Error::DegenerateInput("point cloud is empty".into()));
        }
        if ambient == 0 {
            return Err(Error::DegenerateInput("points have no coordinates".into()));
        }
        if self.points.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput(
                "point cloud contains non-finite coordinates".into(),
            ));
        }
        if let Some(spec) = &self.spec {
            spec.validate()?;
            if spec.ambient_dim() != ambient {
                return Err(Error::InvalidParameter(format!(
                    "spec expects ambient dimension {}, cloud has {ambient}",
                    spec.ambient_dim()
                )));
            }
            if spec.intrinsic_dim() != self.intrinsic_dim {
                return Err(Error::InvalidParameter(format!(
                    "spec has intrinsic dimension {}, cloud declares {}",
                    spec.intrinsic_dim(),
                    self.intrinsic_dim
                )));
            }
            if let ManifoldSpec::Sphere { radius, .. } = spec {
                for i in 0..n_points {
                    let r = norm(self.point(i));
                    if (r - radius).abs() > 1e-9 {
                        return Err(Error::DegenerateInput(format!(
                            "point {i} is off the sphere: |x| = {r}, radius = {radius}"
                        )));
                    }
                }
            }
        }
        if let Some(latent) = &self.latent {
            if latent.nrows() != n_points {
                return Err(Error::InvalidParameter(format!(
                    "latent has {} rows for {n_points} points",
                    latent.nrows()
                )));
            }
            let d_latent = latent.ncols();
            if d_latent == 0 || d_latent > 2 {
                return Err(Error::InvalidParameter(format!(
                    "latent dimension must be 1 or 2, got {d_latent}"
                )));
            }
            match &self.spec {
                Some(ManifoldSpec::Torus { major, minor }) => {
                    if d_latent != 2 {
                        return Err(Error::InvalidParameter(
                            "torus latent coordinates must be (u, v)".into(),
                        ));
                    }
                    for i in 0..n_points {
                        let p = torus_point(*major, *minor, latent[[i, 0]], latent[[i, 1]]);
                        if dist(&p, self.point(i)) > 1e-9 {
                            return Err(Error::DegenerateInput(format!(
                                "latent coordinates of point {i} do not reproduce it"
                            )));
                        }
                    }
                }
                Some(ManifoldSpec::SwissRoll { .. }) => {
                    if d_latent != 2 {
                        return Err(Error::InvalidParameter(
                            "swiss roll latent coordinates must be (t, h)".into(),
                        ));
                    }
                    for i in 0..n_points {
                        let p = swiss_roll_point(latent[[i, 0]], latent[[i, 1]]);
                        if dist(&p, self.point(i)) > 1e-9 {
                            return Err(Error::DegenerateInput(format!(
                                "latent coordinates of point {i} do not reproduce it"
                            )));
                        }
                    }
                }
                Some(ManifoldSpec::Sphere { .. }) => {
                    return Err(Error::InvalidParameter(
                        "sphere clouds carry no latent coordinates".into(),
                    ));
                }
                None => {}
            }
        }
        Ok(())
    }

    /// Diameter of the ball around the centroid that encloses the cloud.
    /// Used to set scale-dependent defaults (score bandwidth, divergence
    /// guard). Equals the exact diameter for centrally symmetric clouds.
    pub fn enclosing_diameter(&self) -> f64 {
        let (n_points, ambient) = self.points.dim();
        let mut centroid = vec![0.0; ambient];
        for i in 0..n_points {
            for (c, x) in centroid.iter_mut().zip(self.point(i)) {
                *c += x;
            }
        }
        for c in centroid.iter_mut() {
            *c /= n_points as f64;
        }
        let max_r = (0..n_points)
            .map(|i| dist(self.point(i), &centroid))
            .fold(0.0, f64::max);
        2.0 * max_r
    }
}

fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "sample count must be at least 1".into(),
        ));
    }
    Ok(())
}

/// Uniform sample of `S^dim` with the given radius: i.i.d. Gaussian vectors
/// in `R^{dim+1}`, normalized. Zero-norm draws are redrawn.
pub fn sample_sphere(dim: usize, radius: f64, n: usize, seed: u64) -> Result<PointCloud> {
    let spec = ManifoldSpec::Sphere { dim, radius };
    spec.validate()?;
    check_count(n)?;
    let ambient = dim + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Array2::zeros((n, ambient));
    let mut g = vec![0.0f64; ambient];
    for i in 0..n {
        loop {
            for gj in g.iter_mut() {
                *gj = rng.sample(StandardNormal);
            }
            let r = norm(&g);
            if r > 0.0 {
                for (j, gj) in g.iter().enumerate() {
                    points[[i, j]] = gj * radius / r;
                }
                break;
            }
        }
    }
    Ok(PointCloud {
        points,
        intrinsic_dim: dim,
        latent: None,
        spec: Some(spec),
    })
}

/// Embedding of the torus parameter pair `(u, v)`.
pub fn torus_point(major: f64, minor: f64, u: f64, v: f64) -> [f64; 3] {
    let ring = major + minor * v.cos();
    [ring * u.cos(), ring * u.sin(), minor * v.sin()]
}

/// Area-uniform sample of the 2-torus. `u` is uniform; `v` is drawn by
/// rejection with acceptance proportional to `major + minor cos v`, the area
/// density of the embedding. Latent coordinates `(u, v)` are stored.
pub fn sample_torus(major: f64, minor: f64, n: usize, seed: u64) -> Result<PointCloud> {
    let spec = ManifoldSpec::Torus { major, minor };
    spec.validate()?;
    check_count(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Array2::zeros((n, 3));
    let mut latent = Array2::zeros((n, 2));
    for i in 0..n {
        let u = rng.random::<f64>() * TAU;
        let v = loop {
            let v = rng.random::<f64>() * TAU;
            let accept = rng.random::<f64>() * (major + minor);
            if accept <= major + minor * v.cos() {
                break v;
            }
        };
        let p = torus_point(major, minor, u, v);
        for j in 0..3 {
            points[[i, j]] = p[j];
        }
        latent[[i, 0]] = u;
        latent[[i, 1]] = v;
    }
    Ok(PointCloud {
        points,
        intrinsic_dim: 2,
        latent: Some(latent),
        spec: Some(spec),
    })
}

/// Embedding of the swiss roll parameter pair `(t, h)`.
pub fn swiss_roll_point(t: f64, h: f64) -> [f64; 3] {
    [t * t.cos(), h, t * t.sin()]
}

/// Arclength of the spiral `t -> (t cos t, t sin t)` from 0:
/// antiderivative of `sqrt(1 + t^2)`.
fn spiral_arclength(t: f64) -> f64 {
    0.5 * (t * (1.0 + t * t).sqrt() + t.asinh())
}

/// Inverts `spiral_arclength` on `[lo, hi]` by safeguarded Newton iteration.
fn spiral_arclength_inverse(target: f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut t = 0.5 * (lo + hi);
    for _ in 0..128 {
        let f = spiral_arclength(t) - target;
        if f.abs() <= 1e-13 * (1.0 + target.abs()) {
            break;
        }
        if f > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let step = f / (1.0 + t * t).sqrt();
        let next = t - step;
        t = if next > lo && next < hi {
            next
        } else {
            0.5 * (lo + hi)
        };
    }
    t
}

/// Area-uniform sample of the swiss roll: `t` uniform by arclength on
/// `[t_min, t_max]` (density proportional to `sqrt(1 + t^2)`), `h` uniform on
/// `[0, height]`. Latent coordinates `(t, h)` are stored.
pub fn sample_swiss_roll(
    t_min: f64,
    t_max: f64,
    height: f64,
    n: usize,
    seed: u64,
) -> Result<PointCloud> {
    let spec = ManifoldSpec::SwissRoll {
        t_min,
        t_max,
        height,
    };
    spec.validate()?;
    check_count(n)?;
    let s_lo = spiral_arclength(t_min);
    let s_hi = spiral_arclength(t_max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Array2::zeros((n, 3));
    let mut latent = Array2::zeros((n, 2));
    for i in 0..n {
        let s = s_lo + rng.random::<f64>() * (s_hi - s_lo);
        let t = spiral_arclength_inverse(s, t_min, t_max);
        let h = rng.random::<f64>() * height;
        let p = swiss_roll_point(t, h);
        for j in 0..3 {
            points[[i, j]] = p[j];
        }
        latent[[i, 0]] = t;
        latent[[i, 1]] = h;
    }
    Ok(PointCloud {
        points,
        intrinsic_dim: 2,
        latent: Some(latent),
        spec: Some(spec),
    })
}

/// Radial projection onto the sphere of the given radius.
pub fn project_sphere(x: &[f64], radius: f64) -> Result<Array1<f64>> {
    if !radius.is_finite() || radius <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "sphere radius must be positive, got {radius}"
        )));
    }
    let r = norm(x);
    if r == 0.0 {
        return Err(Error::OutOfDomain(
            "cannot project the origin onto a sphere".into(),
        ));
    }
    Ok(Array1::from_iter(x.iter().map(|v| v * radius / r)))
}

/// Recovers the swiss roll parameters `(t, h)` of a point near the surface.
///
/// The spiral radius equals its parameter, so `t` is pinned to the winding
/// whose phase matches `atan2(x[2], x[0])` and whose value is closest to the
/// observed radius; the gap between the two is the distance to the spiral and
/// must stay within `tol`. `h` is the second coordinate.
pub fn swiss_roll_latent(
    t_min: f64,
    t_max: f64,
    height: f64,
    x: &[f64],
    tol: f64,
) -> Result<[f64; 2]> {
    ManifoldSpec::SwissRoll {
        t_min,
        t_max,
        height,
    }
    .validate()?;
    if x.len() != 3 {
        return Err(Error::InvalidParameter(format!(
            "swiss roll points live in R^3, got dimension {}",
            x.len()
        )));
    }
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be nonnegative, got {tol}"
        )));
    }
    let r = x[0].hypot(x[2]);
    let theta = x[2].atan2(x[0]);
    let k = ((r - theta) / TAU).round();
    let t = theta + TAU * k;
    let h = x[1];
    let off_surface = |what: String| Err(Error::OutOfDomain(what));
    if (t - r).abs() > tol {
        return off_surface(format!(
            "point is {} away from the spiral, tolerance {tol}",
            (t - r).abs()
        ));
    }
    if t < t_min - tol || t > t_max + tol {
        return off_surface(format!(
            "recovered parameter t = {t} outside [{t_min}, {t_max}]"
        ));
    }
    if h < -tol || h > height + tol {
        return off_surface(format!("height coordinate {h} outside [0, {height}]"));
    }
    Ok([t, h])
}
