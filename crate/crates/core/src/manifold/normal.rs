use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::manifold::geodesic::{geodesic_shoot, shoot_bundle};
use crate::manifold::metric::{quad_form, ChartPoint, Mat3, MetricField, MAX_DIM};

/// Arc step used for tangent vectors of geodesic spheres.
const TANGENT_STEP: f64 = 1e-5;

/// Focusing threshold on `A(r,θ) / r^{n-1}`.
const FOCUS_THRESHOLD: f64 = 0.1;

const LADDER_STEPS: usize = 32;

/// Indicator of the domain `D` inside the chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Domain {
    Whole,
    /// `{ x : normal · x > offset }`
    HalfSpace { normal: Vec<f64>, offset: f64 },
    /// Planar sector `{ apex + t (cos φ, sin φ) : t > 0, φ ∈ (start, end) }`,
    /// angles in radians.
    Sector { apex: Vec<f64>, start: f64, end: f64 },
}

impl Default for Domain {
    fn default() -> Self {
        Domain::Whole
    }
}

impl Domain {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Domain::Whole => true,
            Domain::HalfSpace { normal, offset } => {
                normal.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() > *offset
            }
            Domain::Sector { apex, start, end } => {
                let (dx, dy) = (x[0] - apex[0], x[1] - apex[1]);
                if dx == 0.0 && dy == 0.0 {
                    return false;
                }
                let mut phi = dy.atan2(dx);
                while phi < *start {
                    phi += 2.0 * PI;
                }
                phi > *start && phi < *end
            }
        }
    }
}

/// Geometry of one geodesic sphere point: chart position, tangent vectors
/// along unit-speed great-circle moves of the direction, and the induced
/// area density relative to the unit-sphere measure.
#[derive(Debug, Clone, Copy)]
pub struct SphereFrame {
    pub point: [f64; MAX_DIM],
    pub tangents: [[f64; MAX_DIM]; MAX_DIM - 1],
    pub area: f64,
}

/// Exponential-map chart around a center point.
#[derive(Debug, Clone)]
pub struct NormalNeighborhood {
    metric: MetricField,
    center: ChartPoint,
    /// Columns form a g-orthonormal frame at the center.
    frame: Mat3,
    radius_max: f64,
    /// (r, running max of spectral deviation up to r)
    deviation: Vec<(f64, f64)>,
}

/// Orthonormal basis of the tangent space of S^{n-1} at `theta`.
pub fn sphere_tangent_basis(theta: &[f64]) -> [[f64; MAX_DIM]; MAX_DIM - 1] {
    let mut out = [[0.0; MAX_DIM]; MAX_DIM - 1];
    if theta.len() == 2 {
        out[0] = [-theta[1], theta[0], 0.0];
        return out;
    }
    let axis = (0..3)
        .min_by(|&a, &b| theta[a].abs().partial_cmp(&theta[b].abs()).unwrap())
        .unwrap();
    let mut t1 = [0.0; 3];
    t1[axis] = 1.0;
    let d = theta[axis];
    for i in 0..3 {
        t1[i] -= d * theta[i];
    }
    let nrm = (t1[0] * t1[0] + t1[1] * t1[1] + t1[2] * t1[2]).sqrt();
    t1.iter_mut().for_each(|v| *v /= nrm);
    let t2 = [
        theta[1] * t1[2] - theta[2] * t1[1],
        theta[2] * t1[0] - theta[0] * t1[2],
        theta[0] * t1[1] - theta[1] * t1[0],
    ];
    out[0] = t1;
    out[1] = t2;
    out
}

/// Induced area density `√det(Dᵀ g D)` of `n-1` tangent vectors.
pub(crate) fn gram_area(metric: &MetricField, x: &[f64], tangents: &[[f64; MAX_DIM]]) -> f64 {
    let n = metric.dim();
    let g = metric.tensor(x);
    let m = n - 1;
    let mut gram = [[0.0; MAX_DIM]; MAX_DIM];
    for a in 0..m {
        for b in a..m {
            let v = quad_form(n, &g, &tangents[a], &tangents[b]);
            gram[a][b] = v;
            gram[b][a] = v;
        }
    }
    let d = crate::manifold::metric::det(m, &gram);
    if d > 0.0 {
        d.sqrt()
    } else {
        0.0
    }
}

fn normalize(v: &[f64]) -> Result<Vec<f64>> {
    let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(nrm > 0.0 && nrm.is_finite()) {
        return Err(invalid("direction must be a nonzero vector"));
    }
    Ok(v.iter().map(|x| x / nrm).collect())
}

/// Small deterministic direction sample used for normal-radius validation.
fn probe_directions(n: usize) -> Vec<Vec<f64>> {
    if n == 2 {
        (0..16)
            .map(|j| {
                let phi = (j as f64 + 0.5) * 2.0 * PI / 16.0;
                vec![phi.cos(), phi.sin()]
            })
            .collect()
    } else {
        // Fibonacci lattice
        let count = 32;
        let golden = PI * (3.0 - 5f64.sqrt());
        (0..count)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                let rad = (1.0 - z * z).sqrt();
                let phi = golden * i as f64;
                vec![rad * phi.cos(), rad * phi.sin(), z]
            })
            .collect()
    }
}

fn eig_deviation(n: usize, metric: &MetricField, f: &SphereFrame, r: f64) -> f64 {
    let m = n - 1;
    let g = metric.tensor(&f.point[..n]);
    let mut gram = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in 0..m {
            gram[(a, b)] = quad_form(n, &g, &f.tangents[a], &f.tangents[b]) / (r * r);
        }
    }
    SymmetricEigen::new(gram)
        .eigenvalues
        .iter()
        .map(|l| (l - 1.0).abs())
        .fold(0.0, f64::max)
}

impl NormalNeighborhood {
    pub fn metric(&self) -> &MetricField {
        &self.metric
    }

    pub fn center(&self) -> &ChartPoint {
        &self.center
    }

    pub fn radius_max(&self) -> f64 {
        self.radius_max
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }

    /// Chart velocity of the unit-speed radial geodesic with normal
    /// direction `theta` (Euclidean unit vector).
    fn chart_velocity(&self, theta: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|j| self.frame[i][j] * theta[j]).sum())
            .collect()
    }

    pub fn exp_map(&self, r: f64, theta: &[f64]) -> Result<ChartPoint> {
        if theta.len() != self.dim() {
            return Err(invalid("direction dimension mismatch"));
        }
        if !(0.0..=self.radius_max * (1.0 + 1e-12)).contains(&r) {
            return Err(invalid(format!(
                "radius {r} outside [0, {}]",
                self.radius_max
            )));
        }
        let theta = normalize(theta)?;
        if r == 0.0 {
            return Ok(self.center.clone());
        }
        let v = self.chart_velocity(&theta);
        geodesic_shoot(&self.metric, &self.center, &v, r)
    }

    /// Sphere geometry along the ray with direction `theta` at every radius
    /// in `radii` (ascending, positive).
    pub fn sphere_frames(&self, theta: &[f64], radii: &[f64]) -> Result<Vec<SphereFrame>> {
        let n = self.dim();
        let basis = sphere_tangent_basis(theta);
        if self.metric.is_euclidean() {
            return Ok(radii
                .iter()
                .map(|&r| {
                    let mut point = [0.0; MAX_DIM];
                    let mut tangents = [[0.0; MAX_DIM]; MAX_DIM - 1];
                    for i in 0..n {
                        point[i] = self.center[i] + r * theta[i];
                        for a in 0..n - 1 {
                            tangents[a][i] = r * basis[a][i];
                        }
                    }
                    SphereFrame {
                        point,
                        tangents,
                        area: r.powi(n as i32 - 1),
                    }
                })
                .collect());
        }
        let (c, s) = (TANGENT_STEP.cos(), TANGENT_STEP.sin());
        let mut velocities = vec![self.chart_velocity(theta)];
        for t in basis.iter().take(n - 1) {
            for sign in [1.0, -1.0] {
                let dir: Vec<f64> = (0..n).map(|i| c * theta[i] + sign * s * t[i]).collect();
                velocities.push(self.chart_velocity(&dir));
            }
        }
        let out = shoot_bundle(&self.metric, &self.center, &velocities, radii)?;
        let mut frames = Vec::with_capacity(radii.len());
        for (k, rays) in out.iter().enumerate() {
            let mut point = [0.0; MAX_DIM];
            point[..n].copy_from_slice(&rays[0][..n]);
            let mut tangents = [[0.0; MAX_DIM]; MAX_DIM - 1];
            for (a, tan) in tangents.iter_mut().enumerate().take(n - 1) {
                for i in 0..n {
                    tan[i] = (rays[1 + 2 * a][i] - rays[2 + 2 * a][i]) / (2.0 * TANGENT_STEP);
                }
            }
            let area = gram_area(&self.metric, &point[..n], &tangents[..n - 1]);
            if !(area > 0.0 && area.is_finite()) {
                return Err(Error::DegenerateTangent { r: radii[k] });
            }
            frames.push(SphereFrame {
                point,
                tangents,
                area,
            });
        }
        Ok(frames)
    }

    /// Upper envelope of the spectral distance between the pulled-back
    /// metric and the identity over the closed ball of radius `r`.
    pub fn metric_deviation(&self, r: f64) -> f64 {
        if r <= 0.0 || self.deviation.is_empty() {
            return 0.0;
        }
        let mut prev = (0.0, 0.0);
        for &(ri, di) in &self.deviation {
            if r <= ri {
                let t = (r - prev.0) / (ri - prev.0);
                return prev.1 + t * (di - prev.1);
            }
            prev = (ri, di);
        }
        prev.1
    }
}

/// Builds the exponential-map chart at `center`, marching radial geodesics
/// outward and rejecting radii where they start to focus.
pub fn build_normal_neighborhood(
    metric: &MetricField,
    center: &ChartPoint,
    radius: f64,
) -> Result<NormalNeighborhood> {
    let n = metric.dim();
    if center.dim() != n {
        return Err(invalid("center dimension mismatch"));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(invalid("radius must be positive"));
    }
    if !metric.contains(center) {
        return Err(Error::TrajectoryLeftChart { point: center.0.clone() });
    }
    metric.check_positive(center)?;

    let g = metric.eval(center);
    let eig = SymmetricEigen::new(g);
    let mut frame = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..n {
        for j in 0..n {
            let mut v = 0.0;
            for k in 0..n {
                v += eig.eigenvectors[(i, k)] * eig.eigenvectors[(j, k)] / eig.eigenvalues[k].sqrt();
            }
            frame[i][j] = v;
        }
    }
    let mut nbhd = NormalNeighborhood {
        metric: metric.clone(),
        center: center.clone(),
        frame,
        radius_max: radius,
        deviation: Vec::new(),
    };
    if metric.is_euclidean() {
        nbhd.deviation = vec![(radius, 0.0)];
        return Ok(nbhd);
    }

    let ladder: Vec<f64> = (1..=LADDER_STEPS)
        .map(|i| radius * i as f64 / LADDER_STEPS as f64)
        .collect();
    let mut dev = vec![0.0f64; LADDER_STEPS];
    for theta in probe_directions(n) {
        let frames = nbhd.sphere_frames(&theta, &ladder).map_err(|e| match e {
            Error::DegenerateTangent { r } => Error::RadiusTooLarge { radius, reached: r },
            other => other,
        })?;
        for (i, f) in frames.iter().enumerate() {
            let r = ladder[i];
            if f.area / r.powi(n as i32 - 1) < FOCUS_THRESHOLD {
                return Err(Error::RadiusTooLarge { radius, reached: r });
            }
            dev[i] = dev[i].max(eig_deviation(n, metric, f, r));
        }
    }
    let mut running = 0.0f64;
    nbhd.deviation = ladder
        .iter()
        .zip(dev)
        .map(|(&r, d)| {
            running = running.max(d);
            (r, running)
        })
        .collect();
    Ok(nbhd)
}

/// Geodesic ring `ε < d(P, P₀) < ε₀` intersected with a domain.
#[derive(Debug, Clone)]
pub struct GeodesicRing {
    pub neighborhood: NormalNeighborhood,
    pub eps: f64,
    pub eps0: f64,
    pub domain: Domain,
}

impl GeodesicRing {
    pub fn new(neighborhood: NormalNeighborhood, eps: f64, eps0: f64, domain: Domain) -> Result<Self> {
        if !(eps > 0.0 && eps < eps0 && eps0 <= neighborhood.radius_max() * (1.0 + 1e-12)) {
            return Err(invalid(format!(
                "ring needs 0 < eps < eps0 <= {} (got eps = {eps}, eps0 = {eps0})",
                neighborhood.radius_max()
            )));
        }
        Ok(GeodesicRing {
            neighborhood,
            eps,
            eps0,
            domain,
        })
    }

    pub fn dim(&self) -> usize {
        self.neighborhood.dim()
    }

    pub fn center(&self) -> &ChartPoint {
        self.neighborhood.center()
    }

    pub fn metric(&self) -> &MetricField {
        self.neighborhood.metric()
    }
}

/// Area density of the geodesic sphere `S(P₀, r)` at direction `theta`,
/// relative to the standard measure on the unit sphere.
pub fn sphere_area_element(nbhd: &NormalNeighborhood, r: f64, theta: &[f64]) -> Result<f64> {
    if !(r > 0.0 && r <= nbhd.radius_max() * (1.0 + 1e-12)) {
        return Err(invalid(format!("radius {r} outside (0, {}]", nbhd.radius_max())));
    }
    if theta.len() != nbhd.dim() {
        return Err(invalid("direction dimension mismatch"));
    }
    let theta = normalize(theta)?;
    Ok(nbhd.sphere_frames(&theta, &[r])?[0].area)
}
