//! Deterministic quadrature over geodesic spheres, shells and rings.

mod gauss_legendre;

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::manifold::{GeodesicRing, SphereFrame, MAX_DIM};

pub use gauss_legendre::{composite_gauss_legendre, gauss_legendre};

/// Cap applied to field values inside quadrature (densities may be `+∞`).
pub const FIELD_CAP: f64 = 1e12;

/// A scalar field evaluated at chart points, also given the geodesic
/// distance `r` to the ring center.
pub trait ScalarField: Sync {
    fn value(&self, x: &[f64], r: f64) -> f64;
}

impl<F> ScalarField for F
where
    F: Fn(&[f64], f64) -> f64 + Sync,
{
    fn value(&self, x: &[f64], r: f64) -> f64 {
        self(x, r)
    }
}

pub(crate) fn clamp_value(v: f64, x: &[f64]) -> Result<f64> {
    if v.is_nan() {
        Err(Error::FieldEvaluation { point: x.to_vec() })
    } else if v > FIELD_CAP {
        Ok(FIELD_CAP)
    } else {
        Ok(v)
    }
}

/// Angular resolution: a single count (circle, or polar = count/2 and
/// azimuth = count on the 2-sphere) or an explicit `[polar, azimuth]` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AngularNodes {
    Count(usize),
    Product([usize; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub radial_panels: usize,
    #[serde(default = "default_order")]
    pub radial_order: usize,
    #[serde(default)]
    pub angular_nodes: Option<AngularNodes>,
}

fn default_order() -> usize {
    4
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            radial_panels: 128,
            radial_order: 4,
            angular_nodes: None,
        }
    }
}

impl GridSpec {
    pub fn new(radial_panels: usize, angular_nodes: AngularNodes) -> Self {
        GridSpec {
            radial_panels,
            radial_order: 4,
            angular_nodes: Some(angular_nodes),
        }
    }

    /// Angular node counts resolved for a dimension: `[count]` for circles,
    /// `[polar, azimuth]` for 2-spheres.
    pub fn angular_for(&self, dim: usize) -> Vec<usize> {
        match (dim, self.angular_nodes) {
            (2, None) => vec![256],
            (2, Some(AngularNodes::Count(c))) => vec![c],
            (2, Some(AngularNodes::Product([a, b]))) => vec![a * b],
            (_, None) => vec![64, 128],
            (_, Some(AngularNodes::Count(c))) => vec![(c / 2).max(1), c],
            (_, Some(AngularNodes::Product(p))) => p.to_vec(),
        }
    }

    /// Same rule with radial and angular resolution doubled.
    pub fn doubled(&self, dim: usize) -> Self {
        let ang = self.angular_for(dim);
        GridSpec {
            radial_panels: 2 * self.radial_panels,
            radial_order: self.radial_order,
            angular_nodes: Some(if dim == 2 {
                AngularNodes::Count(2 * ang[0])
            } else {
                AngularNodes::Product([2 * ang[0], 2 * ang[1]])
            }),
        }
    }

    pub fn describe(&self, dim: usize) -> String {
        let ang = self.angular_for(dim);
        let ang = ang.iter().map(|a| a.to_string()).collect::<Vec<_>>().join("x");
        format!("radial {}x{} / angular {}", self.radial_panels, self.radial_order, ang)
    }
}

/// Quadrature on the unit sphere `S^{n-1}`: weights sum to its area.
#[derive(Debug, Clone)]
pub struct AngularGrid {
    dim: usize,
    directions: Vec<[f64; MAX_DIM]>,
    weights: Vec<f64>,
    order: Vec<usize>,
}

impl AngularGrid {
    /// Midpoint (periodic trapezoid) rule on the circle.
    pub fn circle(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(invalid("angular node count must be positive"));
        }
        let w = 2.0 * PI / count as f64;
        let directions = (0..count)
            .map(|j| {
                let phi = (j as f64 + 0.5) * w;
                [phi.cos(), phi.sin(), 0.0]
            })
            .collect();
        Ok(AngularGrid {
            dim: 2,
            directions,
            weights: vec![w; count],
            order: vec![count],
        })
    }

    /// Gauss–Legendre in `cos ϑ` times the midpoint rule in azimuth.
    pub fn sphere(polar: usize, azimuth: usize) -> Result<Self> {
        if polar == 0 || azimuth == 0 {
            return Err(invalid("angular node counts must be positive"));
        }
        let (z, wz) = gauss_legendre(polar);
        let dphi = 2.0 * PI / azimuth as f64;
        let mut directions = Vec::with_capacity(polar * azimuth);
        let mut weights = Vec::with_capacity(polar * azimuth);
        for (zi, wi) in z.iter().zip(&wz) {
            let s = (1.0 - zi * zi).sqrt();
            for j in 0..azimuth {
                let phi = (j as f64 + 0.5) * dphi;
                directions.push([s * phi.cos(), s * phi.sin(), *zi]);
                weights.push(wi * dphi);
            }
        }
        Ok(AngularGrid {
            dim: 3,
            directions,
            weights,
            order: vec![polar, azimuth],
        })
    }

    pub fn for_spec(dim: usize, spec: &GridSpec) -> Result<Self> {
        let ang = spec.angular_for(dim);
        match dim {
            2 => AngularGrid::circle(ang[0]),
            3 => AngularGrid::sphere(ang[0], ang[1]),
            _ => Err(invalid(format!("dimension {dim} not supported"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn direction(&self, j: usize) -> &[f64] {
        &self.directions[j][..self.dim]
    }

    pub fn weight(&self, j: usize) -> f64 {
        self.weights[j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

/// Discretized geodesic ring: shells `S(P₀, r_k)` on a radial rule, each
/// sampled on an angular grid through the exponential map.
#[derive(Debug, Clone)]
pub struct ShellGrid {
    ring: GeodesicRing,
    description: String,
    radii: Vec<f64>,
    radial_weights: Vec<f64>,
    angular: AngularGrid,
    /// shell-major: index `k * angular.len() + j`
    frames: Vec<SphereFrame>,
    mask: Vec<bool>,
}

impl ShellGrid {
    /// Composite Gauss–Legendre in `r` on `(ε, ε₀)` times the angular rule.
    pub fn build(ring: &GeodesicRing, spec: &GridSpec) -> Result<Self> {
        if spec.radial_panels == 0 || spec.radial_order == 0 {
            return Err(invalid("radial resolution must be positive"));
        }
        let (radii, weights) =
            composite_gauss_legendre(ring.eps, ring.eps0, spec.radial_panels, spec.radial_order);
        let angular = AngularGrid::for_spec(ring.dim(), spec)?;
        let mut grid = Self::with_radii(ring, radii, weights, angular)?;
        grid.description = spec.describe(ring.dim());
        Ok(grid)
    }

    /// Grid on explicit radii (ascending, inside the neighborhood) with
    /// caller-supplied radial weights.
    pub fn with_radii(
        ring: &GeodesicRing,
        radii: Vec<f64>,
        radial_weights: Vec<f64>,
        angular: AngularGrid,
    ) -> Result<Self> {
        let n = ring.dim();
        if angular.dim() != n {
            return Err(invalid("angular grid dimension mismatch"));
        }
        if radii.len() != radial_weights.len() || radii.is_empty() {
            return Err(invalid("radii and radial weights must be nonempty and aligned"));
        }
        if radii.windows(2).any(|w| w[0] >= w[1]) || radii[0] <= 0.0 {
            return Err(invalid("radii must be positive and strictly increasing"));
        }
        let nbhd = &ring.neighborhood;
        if *radii.last().unwrap() > nbhd.radius_max() * (1.0 + 1e-12) {
            return Err(invalid("radii exceed the normal neighborhood"));
        }
        let per_direction: Vec<Vec<SphereFrame>> = (0..angular.len())
            .into_par_iter()
            .map(|j| nbhd.sphere_frames(angular.direction(j), &radii))
            .collect::<Result<_>>()?;
        let m = angular.len();
        let mut frames = Vec::with_capacity(radii.len() * m);
        for k in 0..radii.len() {
            for dir in &per_direction {
                frames.push(dir[k]);
            }
        }
        let mask = frames
            .iter()
            .map(|f| ring.domain.contains(&f.point[..n]))
            .collect();
        let description = format!("{} custom radii / angular {:?}", radii.len(), angular.order());
        Ok(ShellGrid {
            ring: ring.clone(),
            description,
            radii,
            radial_weights,
            angular,
            frames,
            mask,
        })
    }

    pub fn ring(&self) -> &GeodesicRing {
        &self.ring
    }

    pub fn dim(&self) -> usize {
        self.ring.dim()
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn shells(&self) -> usize {
        self.radii.len()
    }

    pub fn directions(&self) -> usize {
        self.angular.len()
    }

    pub fn angular(&self) -> &AngularGrid {
        &self.angular
    }

    pub fn radius(&self, k: usize) -> f64 {
        self.radii[k]
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn radial_weight(&self, k: usize) -> f64 {
        self.radial_weights[k]
    }

    pub fn radial_weights(&self) -> &[f64] {
        &self.radial_weights
    }

    pub fn frame(&self, k: usize, j: usize) -> &SphereFrame {
        &self.frames[k * self.angular.len() + j]
    }

    pub fn point(&self, k: usize, j: usize) -> &[f64] {
        &self.frame(k, j).point[..self.dim()]
    }

    pub fn in_domain(&self, k: usize, j: usize) -> bool {
        self.mask[k * self.angular.len() + j]
    }

    /// `dA` of cell (k, j) with the domain mask applied.
    pub fn area_weight(&self, k: usize, j: usize) -> f64 {
        if self.in_domain(k, j) {
            self.frame(k, j).area * self.angular.weight(j)
        } else {
            0.0
        }
    }

    /// `dV = dA dr` (radial geodesics are unit speed and orthogonal to the
    /// spheres in normal coordinates).
    pub fn volume_weight(&self, k: usize, j: usize) -> f64 {
        self.area_weight(k, j) * self.radial_weights[k]
    }

    /// g-area of `D ∩ S(P₀, r_k)`.
    pub fn shell_area(&self, k: usize) -> f64 {
        (0..self.directions()).map(|j| self.area_weight(k, j)).sum()
    }

    /// Ordered evaluation of a field on the in-domain cells of shell `k`:
    /// `(j, value, dA)`.
    pub fn shell_values<F: ScalarField + ?Sized>(
        &self,
        k: usize,
        f: &F,
    ) -> Result<Vec<(usize, f64, f64)>> {
        let r = self.radii[k];
        let mut out = Vec::with_capacity(self.directions());
        for j in 0..self.directions() {
            if !self.in_domain(k, j) {
                continue;
            }
            let x = self.point(k, j);
            let v = clamp_value(f.value(x, r), x)?;
            out.push((j, v, self.area_weight(k, j)));
        }
        Ok(out)
    }
}

/// `Σ f dA` over shell `k`.
pub fn integrate_sphere<F: ScalarField + ?Sized>(grid: &ShellGrid, k: usize, f: &F) -> Result<f64> {
    if k >= grid.shells() {
        return Err(invalid(format!("shell index {k} out of range")));
    }
    Ok(grid.shell_values(k, f)?.iter().map(|(_, v, a)| v * a).sum())
}

/// `Σ f dV` over the whole ring, reduced in fixed shell order.
pub fn integrate_ring<F: ScalarField + ?Sized>(grid: &ShellGrid, f: &F) -> Result<f64> {
    let per_shell: Vec<f64> = (0..grid.shells())
        .into_par_iter()
        .map(|k| {
            let wr = grid.radial_weight(k);
            Ok(grid
                .shell_values(k, f)?
                .iter()
                .map(|(_, v, a)| v * a * wr)
                .sum())
        })
        .collect::<Result<_>>()?;
    Ok(per_shell.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{build_normal_neighborhood, ChartPoint, Domain, MetricField};

    fn flat_ring(n: usize, eps: f64, eps0: f64, domain: Domain) -> GeodesicRing {
        let m = MetricField::euclidean(n).unwrap();
        let nb = build_normal_neighborhood(&m, &ChartPoint::origin(n), eps0).unwrap();
        GeodesicRing::new(nb, eps, eps0, domain).unwrap()
    }

    #[test]
    fn angular_weights_sum_to_sphere_area() {
        let c = AngularGrid::circle(256).unwrap();
        assert!((c.weights().iter().sum::<f64>() - 2.0 * PI).abs() < 1e-12);
        let s = AngularGrid::sphere(64, 128).unwrap();
        assert!((s.weights().iter().sum::<f64>() - 4.0 * PI).abs() < 1e-12);
        assert!(s.weights().iter().all(|&w| w > 0.0));
    }

    #[test]
    fn sphere_integrals() {
        let ring = flat_ring(2, 0.5, 1.0, Domain::Whole);
        let spec = GridSpec::new(8, AngularNodes::Count(256));
        let grid = ShellGrid::build(&ring, &spec).unwrap();
        let one = |_: &[f64], _: f64| 1.0;
        let k = grid.shells() - 1;
        let v = integrate_sphere(&grid, k, &one).unwrap();
        assert!((v - 2.0 * PI * grid.radius(k)).abs() < 1e-12);

        let half = flat_ring(2, 0.5, 1.0, Domain::HalfSpace { normal: vec![0.0, 1.0], offset: 0.0 });
        let grid = ShellGrid::build(&half, &spec).unwrap();
        let v = integrate_sphere(&grid, k, &one).unwrap();
        assert!((v - PI * grid.radius(k)).abs() < 1e-12);

        let ring3 = flat_ring(3, 0.5, 2.0, Domain::Whole);
        let grid = ShellGrid::with_radii(
            &ring3,
            vec![2.0],
            vec![1.0],
            AngularGrid::sphere(16, 32).unwrap(),
        )
        .unwrap();
        let r2 = |_: &[f64], r: f64| r * r;
        let v = integrate_sphere(&grid, 0, &r2).unwrap();
        assert!((v - 64.0 * PI).abs() < 1e-11);
    }

    #[test]
    fn ring_integrals() {
        let spec = GridSpec::new(32, AngularNodes::Count(64));
        let one = |_: &[f64], _: f64| 1.0;
        let g2 = ShellGrid::build(&flat_ring(2, 0.5, 1.0, Domain::Whole), &spec).unwrap();
        assert!((integrate_ring(&g2, &one).unwrap() - 0.75 * PI).abs() < 1e-12);
        let inv_r2 = |_: &[f64], r: f64| 1.0 / (r * r);
        assert!((integrate_ring(&g2, &inv_r2).unwrap() - 2.0 * PI * 2f64.ln()).abs() < 1e-11);

        let spec3 = GridSpec::new(8, AngularNodes::Product([8, 16]));
        let g3 = ShellGrid::build(&flat_ring(3, 0.5, 1.0, Domain::Whole), &spec3).unwrap();
        let exact = 4.0 * PI / 3.0 * (1.0 - 0.125);
        assert!((integrate_ring(&g3, &one).unwrap() - exact).abs() < 1e-12);
    }

    #[test]
    fn nan_fields_are_reported_and_infinities_clamped() {
        let spec = GridSpec::new(2, AngularNodes::Count(8));
        let g = ShellGrid::build(&flat_ring(2, 0.5, 1.0, Domain::Whole), &spec).unwrap();
        let nan = |_: &[f64], _: f64| f64::NAN;
        assert!(matches!(integrate_ring(&g, &nan), Err(Error::FieldEvaluation { .. })));
        let inf = |_: &[f64], _: f64| f64::INFINITY;
        let v = integrate_sphere(&g, 0, &inf).unwrap();
        assert!((v - FIELD_CAP * 2.0 * PI * g.radius(0)).abs() < 1e-3 * v);
    }

    #[test]
    fn doubled_spec() {
        let s = GridSpec::default().doubled(3);
        assert_eq!(s.radial_panels, 256);
        assert_eq!(s.angular_for(3), vec![128, 256]);
        assert_eq!(GridSpec::default().doubled(2).angular_for(2), vec![512]);
    }
}
