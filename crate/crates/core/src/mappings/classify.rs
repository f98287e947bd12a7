use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifold::{geodesic_distance, ChartPoint, GeodesicRing};
use crate::mappings::{dilatation_at, MapModel};
use crate::modulus::ExponentSet;
use crate::quadrature::{GridSpec, ShellGrid};

#[derive(Debug, Clone)]
pub struct ClassifyOptions {
    pub grid: GridSpec,
    /// Also sample the ring center itself.
    pub include_center: bool,
    pub random_pairs: usize,
    pub seed: u64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            grid: GridSpec::new(8, crate::quadrature::AngularNodes::Count(32)),
            include_center: false,
            random_pairs: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifyReport {
    pub lipschitz: bool,
    /// Largest sampled quotient `d_*(f(P), f(T)) / d(P, T)`.
    pub lip: f64,
    pub bilipschitz: bool,
    /// Smallest sampled quotient.
    pub lower_lip: f64,
    pub finitely_bilipschitz: bool,
    /// Points where `0 < l ≤ L < ∞` fails or the differential is undefined.
    pub failures: Vec<Vec<f64>>,
    pub pairs: usize,
    pub points: usize,
}

/// Samples pairwise distance quotients (grid neighbours plus seeded random
/// long-range pairs) and pointwise dilatations over a ring.
pub fn classify_map(
    map: &MapModel,
    ring: &GeodesicRing,
    exps: &ExponentSet,
    opts: &ClassifyOptions,
) -> Result<ClassifyReport> {
    let grid = ShellGrid::build(ring, &opts.grid)?;
    let (m, d) = (grid.shells(), grid.directions());
    let mut points: Vec<ChartPoint> = Vec::new();
    let mut index = vec![None; m * d];
    for k in 0..m {
        for j in 0..d {
            if grid.in_domain(k, j) {
                index[k * d + j] = Some(points.len());
                points.push(ChartPoint::new(grid.point(k, j)));
            }
        }
    }
    let center = if opts.include_center {
        points.push(ring.center().clone());
        Some(points.len() - 1)
    } else {
        None
    };

    let mut pairs = Vec::new();
    for k in 0..m {
        for j in 0..d {
            let Some(a) = index[k * d + j] else { continue };
            if let Some(b) = index[k * d + (j + 1) % d] {
                if a != b {
                    pairs.push((a, b));
                }
            }
            if k + 1 < m {
                if let Some(b) = index[(k + 1) * d + j] {
                    pairs.push((a, b));
                }
            }
            if k == 0 {
                if let Some(c) = center {
                    pairs.push((a, c));
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    if points.len() > 1 {
        for _ in 0..opts.random_pairs {
            let a = rng.gen_range(0..points.len());
            let b = rng.gen_range(0..points.len());
            if a != b {
                pairs.push((a, b));
            }
        }
    }

    let images: Vec<ChartPoint> = points
        .iter()
        .map(|p| {
            let fx = map.forward(p);
            if fx.len() != map.dim() || !map.target().contains(&fx) {
                Err(Error::ImageLeftChart { point: fx })
            } else {
                Ok(ChartPoint(fx))
            }
        })
        .collect::<Result<_>>()?;

    let quotients: Vec<f64> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let d0 = geodesic_distance(map.source(), &points[a], &points[b])?;
            let d1 = geodesic_distance(map.target(), &images[a], &images[b])?;
            Ok(if d0 > 0.0 { d1 / d0 } else { f64::NAN })
        })
        .collect::<Result<_>>()?;
    let finite = quotients.iter().filter(|q| !q.is_nan());
    let lip = finite.clone().cloned().fold(0.0, f64::max);
    let lower_lip = finite.cloned().fold(f64::INFINITY, f64::min);

    let samples: Vec<Option<bool>> = points
        .par_iter()
        .map(|p| match dilatation_at(map, p, exps) {
            Ok(s) => Ok(Some(s.finitely_bilipschitz())),
            Err(Error::NotDifferentiable { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let failures: Vec<Vec<f64>> = samples
        .iter()
        .zip(&points)
        .filter(|(ok, _)| **ok != Some(true))
        .map(|(_, p)| p.0.clone())
        .collect();

    Ok(ClassifyReport {
        lipschitz: lip.is_finite(),
        lip,
        bilipschitz: lip.is_finite() && lower_lip > 0.0,
        lower_lip,
        finitely_bilipschitz: failures.is_empty(),
        failures,
        pairs: pairs.len(),
        points: points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{build_normal_neighborhood, Domain, MetricField};
    use crate::quadrature::AngularNodes;

    fn annulus(eps: f64) -> GeodesicRing {
        let m = MetricField::euclidean(2).unwrap();
        let nb = build_normal_neighborhood(&m, &ChartPoint::origin(2), 1.0).unwrap();
        GeodesicRing::new(nb, eps, 1.0, Domain::Whole).unwrap()
    }

    #[test]
    fn identity_is_an_isometry() {
        let m = MetricField::euclidean(2).unwrap();
        let r = classify_map(
            &MapModel::identity(&m),
            &annulus(0.5),
            &ExponentSet::new(2, 2.0).unwrap(),
            &ClassifyOptions::default(),
        )
        .unwrap();
        assert!(r.lipschitz && r.bilipschitz && r.finitely_bilipschitz);
        assert!((r.lip - 1.0).abs() < 1e-12 && (r.lower_lip - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_lip_estimate_approaches_norm() {
        let m = MetricField::euclidean(2).unwrap();
        let f = MapModel::linear(&[vec![3.0, 0.0], vec![0.0, 1.0]], &m, &m).unwrap();
        let e = ExponentSet::new(2, 2.0).unwrap();
        let mut last = 0.0;
        for count in [8, 128] {
            let opts = ClassifyOptions {
                grid: GridSpec::new(4, AngularNodes::Count(count)),
                ..Default::default()
            };
            let r = classify_map(&f, &annulus(0.5), &e, &opts).unwrap();
            assert!(r.lip <= 3.0 + 1e-12);
            last = r.lip;
        }
        assert!(last > 2.99, "{last}");
    }

    #[test]
    fn radial_stretch_on_and_off_the_center() {
        let m = MetricField::euclidean(2).unwrap();
        let f = MapModel::radial_stretch(2.0, &m, &m).unwrap();
        let e = ExponentSet::new(2, 2.0).unwrap();
        let r = classify_map(&f, &annulus(0.5), &e, &ClassifyOptions::default()).unwrap();
        assert!(r.finitely_bilipschitz && r.bilipschitz);
        assert!(r.lower_lip >= 0.5 && r.lip <= 2.0);

        let opts = ClassifyOptions {
            include_center: true,
            ..Default::default()
        };
        let r = classify_map(&f, &annulus(0.05), &e, &opts).unwrap();
        assert!(!r.finitely_bilipschitz);
        assert_eq!(r.failures, vec![vec![0.0, 0.0]]);
    }
}
