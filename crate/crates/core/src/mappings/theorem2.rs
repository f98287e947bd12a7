//! Lower Q-homeomorphism check with `Q = K_p`: the lower bound `I` built
//! from the outer dilatation against the oracle modulus of the image family
//! `f(S(P₀, r))`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifold::{gram_area, GeodesicRing, MAX_DIM};
use crate::mappings::dilatation::sample_from_differential;
use crate::mappings::{jacobian_at, MapModel};
use crate::modulus::{solve_shell, ExponentSet, OracleOptions};
use crate::quadrature::{GridSpec, ShellGrid, FIELD_CAP};

/// Relative slack in `lhs ≥ rhs`.
pub const THEOREM2_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem2Report {
    /// Oracle modulus of the image surface family.
    pub lhs: f64,
    /// Lagrange value of the same discrete program.
    pub lhs_closed: f64,
    /// `∫ dr / ‖K_p‖_s` on the source ring.
    pub rhs: f64,
    pub holds: bool,
    /// `(lhs − rhs) / rhs`
    pub gap: f64,
    pub infinite_cells: usize,
    pub k_p_min: f64,
    pub k_p_max: f64,
}

struct ShellResult {
    qnorm_s: f64,
    oracle: f64,
    closed: f64,
    infinite: usize,
    k_min: f64,
    k_max: f64,
}

fn shell_result(map: &MapModel, grid: &ShellGrid, exps: &ExponentSet, k: usize) -> Result<ShellResult> {
    let n = map.dim();
    let mut q_sum = 0.0;
    let mut cost = Vec::new();
    let mut measure = Vec::new();
    let mut zero_cost = false;
    let mut infinite = 0;
    let (mut k_min, mut k_max) = (f64::INFINITY, 0.0f64);
    for j in 0..grid.directions() {
        let da = grid.area_weight(k, j);
        if da <= 0.0 {
            continue;
        }
        let frame = grid.frame(k, j);
        let x = &frame.point[..n];
        let fx = map.forward(x);
        if fx.len() != n || !map.target().contains(&fx) {
            return Err(Error::ImageLeftChart { point: fx });
        }
        let df = jacobian_at(map, x)?;
        let sample = sample_from_differential(map, x, &fx, &df, exps)?;
        let kp = if sample.k_p.is_finite() {
            sample.k_p.min(FIELD_CAP)
        } else {
            infinite += 1;
            FIELD_CAP
        };
        k_min = k_min.min(sample.k_p);
        k_max = k_max.max(sample.k_p);
        q_sum += kp.powf(exps.s) * da;

        // Image surface element from the pushed-forward parametrization.
        let mut tangents = [[0.0; MAX_DIM]; MAX_DIM - 1];
        for (a, t) in tangents.iter_mut().enumerate().take(n - 1) {
            for i in 0..n {
                t[i] = (0..n).map(|l| df[i][l] * frame.tangents[a][l]).sum();
            }
        }
        let b = gram_area(map.target(), &fx, &tangents[..n - 1]) * grid.angular().weight(j);
        if b <= 0.0 {
            continue;
        }
        // image volume J dV spread over the image area b
        let a = sample.jacobian * da;
        if a == 0.0 {
            zero_cost = true;
        }
        cost.push(a / b);
        measure.push(b);
    }
    if q_sum <= 0.0 || measure.is_empty() {
        return Err(Error::EmptyShell {
            index: k,
            radius: grid.radius(k),
        });
    }
    let (oracle, closed) = if zero_cost {
        (0.0, 0.0)
    } else {
        let sol = solve_shell(&cost, &measure, exps.q, &OracleOptions::default())?;
        let closed = measure
            .iter()
            .zip(&cost)
            .map(|(m, c)| m * c.powf(-exps.s))
            .sum::<f64>()
            .powf(-1.0 / exps.s);
        (sol.value, closed)
    };
    Ok(ShellResult {
        qnorm_s: q_sum.powf(1.0 / exps.s),
        oracle,
        closed,
        infinite,
        k_min,
        k_max,
    })
}

/// Checks `M_p(f(Σ_ε)) ≥ ∫_ε^{ε₀} dr / ‖K_p‖_s(P₀, r)` on a discretized ring.
pub fn verify_theorem2(
    map: &MapModel,
    ring: &GeodesicRing,
    exps: &ExponentSet,
    spec: &GridSpec,
) -> Result<Theorem2Report> {
    if ring.metric() != map.source() {
        return Err(crate::error::invalid("ring metric must be the map's source metric"));
    }
    let grid = ShellGrid::build(ring, spec)?;
    let shells: Vec<ShellResult> = (0..grid.shells())
        .into_par_iter()
        .map(|k| shell_result(map, &grid, exps, k))
        .collect::<Result<_>>()?;
    let w = grid.radial_weights();
    let rhs: f64 = shells.iter().zip(w).map(|(s, w)| w / s.qnorm_s).sum();
    let lhs: f64 = shells.iter().zip(w).map(|(s, w)| w * s.oracle).sum();
    let lhs_closed: f64 = shells.iter().zip(w).map(|(s, w)| w * s.closed).sum();
    let gap = (lhs - rhs) / rhs;
    Ok(Theorem2Report {
        lhs,
        lhs_closed,
        rhs,
        holds: lhs >= rhs * (1.0 - THEOREM2_TOLERANCE),
        gap,
        infinite_cells: shells.iter().map(|s| s.infinite).sum(),
        k_p_min: shells.iter().map(|s| s.k_min).fold(f64::INFINITY, f64::min),
        k_p_max: shells.iter().map(|s| s.k_max).fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{build_normal_neighborhood, ChartPoint, Domain, MetricField};
    use crate::quadrature::AngularNodes;
    use std::f64::consts::{LN_2, PI};

    fn setup() -> (MetricField, GeodesicRing, ExponentSet, GridSpec) {
        let m = MetricField::euclidean(2).unwrap();
        let nb = build_normal_neighborhood(&m, &ChartPoint::origin(2), 1.0).unwrap();
        let ring = GeodesicRing::new(nb, 0.5, 1.0, Domain::Whole).unwrap();
        (m, ring, ExponentSet::new(2, 2.0).unwrap(), GridSpec::new(16, AngularNodes::Count(64)))
    }

    #[test]
    fn identity_is_sharp() {
        let (m, ring, e, spec) = setup();
        let r = verify_theorem2(&MapModel::identity(&m), &ring, &e, &spec).unwrap();
        assert!((r.rhs - LN_2 / (2.0 * PI)).abs() < 1e-12);
        assert!((r.lhs - r.rhs).abs() < 1e-12);
        assert!(r.holds);
    }

    #[test]
    fn diagonal_map() {
        let (m, ring, e, spec) = setup();
        let f = MapModel::linear(&[vec![2.0, 0.0], vec![0.0, 1.0]], &m, &m).unwrap();
        let r = verify_theorem2(&f, &ring, &e, &spec).unwrap();
        // ∫ dr / (2 · 2πr) and ∫ 2 dr / (5πr)
        assert!((r.rhs - LN_2 / (4.0 * PI)).abs() < 1e-12);
        assert!((r.lhs_closed - 2.0 * LN_2 / (5.0 * PI)).abs() < 1e-10);
        assert!((r.lhs - r.lhs_closed).abs() < 1e-6 * r.lhs_closed);
        assert!(r.holds && r.gap > 0.0);
    }

    #[test]
    fn radial_stretch() {
        let (m, ring, e, spec) = setup();
        let f = MapModel::radial_stretch(2.0, &m, &m).unwrap();
        let r = verify_theorem2(&f, &ring, &e, &spec).unwrap();
        assert!((r.k_p_min - 2.0).abs() < 1e-12 && (r.k_p_max - 2.0).abs() < 1e-12);
        assert!((r.rhs - LN_2 / (4.0 * PI)).abs() < 1e-12);
        assert!((r.lhs - LN_2 / PI).abs() < 1e-9);
        assert!(r.holds);
    }

    #[test]
    fn image_leaving_the_chart() {
        let ball = MetricField::poincare_ball(2).unwrap();
        let nb = build_normal_neighborhood(&ball, &ChartPoint::origin(2), 1.0).unwrap();
        let ring = GeodesicRing::new(nb, 0.5, 1.0, Domain::Whole).unwrap();
        let f = MapModel::linear(&[vec![3.0, 0.0], vec![0.0, 3.0]], &ball, &ball).unwrap();
        let r = verify_theorem2(&f, &ring, &ExponentSet::new(2, 2.0).unwrap(), &GridSpec::new(2, AngularNodes::Count(16)));
        assert!(matches!(r, Err(Error::ImageLeftChart { .. })));
    }
}
