//! Numeric evidence for the boundary divergence condition
//! `∫_0^δ dr / ‖K‖_{n-1}(P₀, r) = ∞` and for logarithmic growth of `K`.
//!
//! Both checks sample a dyadic ladder `t_j = δ 2^{-j}`. Divergence of an
//! improper integral cannot be decided from finitely many samples, so the
//! verdicts are heuristics:
//!
//! * `converges` when the geometric tail estimate of the increments drops
//!   below `1e-6 · max(1, I_J)`;
//! * `diverges` when the increments per step of `ln ln(1/t)` do not decay
//!   (log-log slope ≥ −0.1 over the finer half of the ladder), which covers
//!   linear growth in `ln(1/t)` and the slower `ln ln(1/t)` growth;
//! * `inconclusive` otherwise.

use std::fmt;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::manifold::{ChartPoint, Domain, GeodesicRing, NormalNeighborhood};
use crate::modulus::{shell_weights, WeightField};
use crate::quadrature::{gauss_legendre, AngularGrid, AngularNodes, GridSpec, ShellGrid};

const CONVERGENCE_TAIL: f64 = 1e-6;
const DIVERGENCE_SLOPE: f64 = -0.1;
const LOG_GROWTH_SLOPE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Diverges,
    Converges,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Diverges => "diverges",
            Verdict::Converges => "converges",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone)]
pub struct LadderOptions {
    /// Number of dyadic levels below `δ`.
    pub levels: usize,
    /// Gauss–Legendre order in `ln r` on each dyadic interval.
    pub order: usize,
    /// Angular resolution (defaults per dimension when `None`).
    pub angular: Option<AngularNodes>,
}

impl Default for LadderOptions {
    fn default() -> Self {
        LadderOptions {
            levels: 20,
            order: 8,
            angular: None,
        }
    }
}

impl LadderOptions {
    fn angular_grid(&self, dim: usize) -> Result<AngularGrid> {
        let spec = GridSpec {
            angular_nodes: self.angular,
            ..GridSpec::default()
        };
        AngularGrid::for_spec(dim, &spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceReport {
    pub center: Vec<f64>,
    pub delta: f64,
    /// Cutoffs `t_j = δ 2^{-j}`, decreasing.
    pub cutoffs: Vec<f64>,
    /// `‖K‖_{n-1}(P₀, t_j)`
    pub norms: Vec<f64>,
    /// `I_j = ∫_{t_j}^δ dr / ‖K‖_{n-1}`
    pub partial_integrals: Vec<f64>,
    pub verdict: Verdict,
    /// Log-log slope of the increments of `I_j` per step of `ln ln(1/t)`.
    pub growth_fit: f64,
    /// Least-squares slope of `I_j` against `ln(1/t_j)` on the finer half.
    pub log_slope: f64,
    /// Geometric estimate of `∫_0^{t_J}` (infinite when increments do not
    /// shrink).
    pub tail_estimate: f64,
}

fn ladder(delta: f64, levels: usize) -> Vec<f64> {
    (1..=levels).map(|j| delta * 0.5f64.powi(j as i32)).collect()
}

fn ring_for(nbhd: &NormalNeighborhood, domain: &Domain, inner: f64, delta: f64) -> Result<GeodesicRing> {
    if !(delta > 0.0 && delta < nbhd.radius_max()) {
        return Err(invalid(format!(
            "delta = {delta} must lie in (0, {})",
            nbhd.radius_max()
        )));
    }
    GeodesicRing::new(nbhd.clone(), inner, delta, domain.clone())
}

/// Least-squares slope of `y` against `x`.
fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub fn divergence_check(
    k: &WeightField,
    nbhd: &NormalNeighborhood,
    domain: &Domain,
    delta: f64,
    opts: &LadderOptions,
) -> Result<DivergenceReport> {
    let levels = opts.levels;
    if levels < 4 || opts.order == 0 {
        return Err(invalid("divergence check needs at least 4 levels"));
    }
    let n = nbhd.dim();
    let cutoffs = ladder(delta, levels);
    let ring = ring_for(nbhd, domain, cutoffs[levels - 1], delta)?;

    // Ascending radii: each ladder point (zero weight) followed by the
    // Gauss–Legendre nodes in ln r of the interval above it; δ itself last.
    let (u, wu) = gauss_legendre(opts.order);
    let mut radii = Vec::new();
    let mut weights = Vec::new();
    let mut interval = Vec::new();
    for j in (1..=levels).rev() {
        let (lo, hi) = (cutoffs[j - 1], if j == 1 { delta } else { cutoffs[j - 2] });
        radii.push(lo);
        weights.push(0.0);
        interval.push(None);
        let (a, b) = (lo.ln(), hi.ln());
        for (ui, wi) in u.iter().zip(&wu) {
            let r = (0.5 * (a + b) + 0.5 * (b - a) * ui).exp();
            radii.push(r);
            weights.push(0.5 * (b - a) * wi * r);
            interval.push(Some(j));
        }
    }
    let grid = ShellGrid::with_radii(&ring, radii, weights, opts.angular_grid(n)?)?;

    let e = (n - 1) as f64;
    let mut increments = vec![0.0; levels + 1];
    let mut norms = vec![0.0; levels];
    for s in 0..grid.shells() {
        let sum: f64 = shell_weights(&grid, k, s)?
            .iter()
            .map(|(_, v, a)| v.powf(e) * a)
            .sum();
        if !(sum > 0.0) {
            return Err(Error::EmptyShell {
                index: s,
                radius: grid.radius(s),
            });
        }
        let norm = sum.powf(1.0 / e);
        match interval[s] {
            Some(j) => increments[j] += grid.radial_weight(s) / norm,
            None => {
                let j = cutoffs.iter().position(|t| *t == grid.radius(s)).unwrap();
                norms[j] = norm;
            }
        }
    }
    let mut partial = Vec::with_capacity(levels);
    let mut acc = 0.0;
    for inc in &increments[1..] {
        acc += inc;
        partial.push(acc);
    }

    let d = &increments[1..];
    let ratio = d[levels - 1] / d[levels - 2];
    let tail_estimate = if ratio < 1.0 {
        d[levels - 1] * ratio / (1.0 - ratio)
    } else {
        f64::INFINITY
    };

    // ln L_j with L_j = 1 + ln(δ / t_j)
    let log_l: Vec<f64> = (0..=levels)
        .map(|j| (1.0 + j as f64 * std::f64::consts::LN_2).ln())
        .collect();
    let half = levels / 2;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for j in half..=levels {
        let sigma = increments[j] / (log_l[j] - log_l[j - 1]);
        if sigma > 0.0 {
            xs.push(log_l[j]);
            ys.push(sigma.ln());
        }
    }
    let growth_fit = if xs.len() >= 2 { slope(&xs, &ys) } else { f64::NEG_INFINITY };
    let lx: Vec<f64> = cutoffs[half - 1..].iter().map(|t| (1.0 / t).ln()).collect();
    let log_slope = slope(&lx, &partial[half - 1..]);

    let i_last = partial[levels - 1];
    let verdict = if tail_estimate < CONVERGENCE_TAIL * i_last.max(1.0) {
        Verdict::Converges
    } else if growth_fit >= DIVERGENCE_SLOPE {
        Verdict::Diverges
    } else {
        Verdict::Inconclusive
    };
    Ok(DivergenceReport {
        center: nbhd.center().0.clone(),
        delta,
        cutoffs,
        norms,
        partial_integrals: partial,
        verdict,
        growth_fit,
        log_slope,
        tail_estimate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogGrowthFit {
    pub is_o_log: bool,
    /// `sup_shell K / ln(1/r)` at the finest sampled radius.
    pub constant: f64,
    /// Largest ratio over the finer half of the ladder.
    pub sup_ratio: f64,
    /// Log-log slope of the ratio against `ln(1/r)`.
    pub slope: f64,
    pub radii: Vec<f64>,
    pub ratios: Vec<f64>,
}

/// Fits `sup_{S(P₀,r)} K` against `ln(1/r)` on `r = δ 2^{-j}`.
pub fn log_growth_fit(
    k: &WeightField,
    nbhd: &NormalNeighborhood,
    domain: &Domain,
    delta: f64,
    opts: &LadderOptions,
) -> Result<LogGrowthFit> {
    if !(delta < 1.0) {
        return Err(invalid("log growth fit needs delta < 1"));
    }
    let levels = opts.levels;
    if levels < 4 {
        return Err(invalid("log growth fit needs at least 4 levels"));
    }
    let radii = ladder(delta, levels);
    let ring = ring_for(nbhd, domain, radii[levels - 1], delta)?;
    let mut ascending = radii.clone();
    ascending.reverse();
    let grid = ShellGrid::with_radii(
        &ring,
        ascending,
        vec![0.0; levels],
        opts.angular_grid(nbhd.dim())?,
    )?;
    let mut ratios = vec![0.0; levels];
    for s in 0..grid.shells() {
        let cells = shell_weights(&grid, k, s)?;
        if cells.is_empty() {
            return Err(Error::EmptyShell {
                index: s,
                radius: grid.radius(s),
            });
        }
        let sup = cells.iter().map(|c| c.1).fold(0.0, f64::max);
        let r = grid.radius(s);
        ratios[levels - 1 - s] = sup / (1.0 / r).ln();
    }
    let half = levels / 2;
    let xs: Vec<f64> = radii[half..].iter().map(|r| (1.0 / r).ln().ln()).collect();
    let ys: Vec<f64> = ratios[half..].iter().map(|q| q.ln()).collect();
    let fit = slope(&xs, &ys);
    let sup_ratio = ratios[half..].iter().cloned().fold(0.0, f64::max);
    Ok(LogGrowthFit {
        is_o_log: fit <= LOG_GROWTH_SLOPE && sup_ratio.is_finite(),
        constant: ratios[levels - 1],
        sup_ratio,
        slope: fit,
        radii,
        ratios,
    })
}

/// Flat half-disk setup used by examples and checks: the center is the
/// origin on the boundary line `x2 = 0` of the upper half plane.
pub fn half_disk(delta: f64) -> Result<(NormalNeighborhood, Domain)> {
    let m = crate::manifold::MetricField::euclidean(2)?;
    let nbhd = crate::manifold::build_normal_neighborhood(&m, &ChartPoint::origin(2), 2.0 * delta)?;
    Ok((
        nbhd,
        Domain::HalfSpace {
            normal: vec![0.0, 1.0],
            offset: 0.0,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn weights() -> [(WeightField, Verdict); 3] {
        [
            (WeightField::constant(1.0).unwrap(), Verdict::Diverges),
            (WeightField::radial("1/r", |r| 1.0 / r), Verdict::Converges),
            (WeightField::radial("3 ln(1/r)", |r| 3.0 * (1.0 / r).ln()), Verdict::Diverges),
        ]
    }

    #[test]
    fn half_disk_examples() {
        let delta = 0.5;
        let (nb, dom) = half_disk(delta).unwrap();
        let opts = LadderOptions::default();
        for (k, want) in weights() {
            let rep = divergence_check(&k, &nb, &dom, delta, &opts).unwrap();
            assert_eq!(rep.verdict, want, "{}: {rep:?}", k.description());
            assert!(rep.partial_integrals.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn closed_form_partial_integrals() {
        let delta = 0.5;
        let (nb, dom) = half_disk(delta).unwrap();
        let opts = LadderOptions::default();
        let one = divergence_check(&weights()[0].0, &nb, &dom, delta, &opts).unwrap();
        let inv = divergence_check(&weights()[1].0, &nb, &dom, delta, &opts).unwrap();
        let log = divergence_check(&weights()[2].0, &nb, &dom, delta, &opts).unwrap();
        for (j, t) in one.cutoffs.iter().enumerate() {
            assert!((one.norms[j] - PI * t).abs() < 1e-12 * t);
            let exact = (delta / t).ln() / PI;
            assert!((one.partial_integrals[j] - exact).abs() < 1e-12 * exact);
            let exact = (delta - t) / PI;
            assert!((inv.partial_integrals[j] - exact).abs() < 1e-12 * exact);
            let exact = ((1.0 / t).ln().ln() - (1.0 / delta).ln().ln()) / (3.0 * PI);
            assert!((log.partial_integrals[j] - exact).abs() < 1e-9 * exact);
        }
        assert!((one.log_slope - 1.0 / PI).abs() < 1e-9);
    }

    #[test]
    fn log_growth_examples() {
        let delta = 0.5;
        let (nb, dom) = half_disk(delta).unwrap();
        let opts = LadderOptions::default();
        let five = log_growth_fit(&WeightField::constant(5.0).unwrap(), &nb, &dom, delta, &opts).unwrap();
        assert!(five.is_o_log);
        assert!(five.constant < five.ratios[0]);
        let log = log_growth_fit(&weights()[2].0, &nb, &dom, delta, &opts).unwrap();
        assert!(log.is_o_log && (log.constant - 3.0).abs() < 1e-9);
        let inv = log_growth_fit(&weights()[1].0, &nb, &dom, delta, &opts).unwrap();
        assert!(!inv.is_o_log);
        assert!(log_growth_fit(&weights()[1].0, &nb, &dom, 1.5, &opts).is_err());
    }

    #[test]
    fn log_growth_implies_divergence() {
        let delta = 0.5;
        let (nb, dom) = half_disk(delta).unwrap();
        let opts = LadderOptions::default();
        let mut cases: Vec<WeightField> = weights().into_iter().map(|w| w.0).collect();
        cases.push(WeightField::constant(5.0).unwrap());
        cases.push(WeightField::expression("2 + x1 / r").unwrap());
        for k in cases {
            let fit = log_growth_fit(&k, &nb, &dom, delta, &opts).unwrap();
            if fit.is_o_log {
                let rep = divergence_check(&k, &nb, &dom, delta, &opts).unwrap();
                assert_eq!(rep.verdict, Verdict::Diverges, "{}", k.description());
            }
        }
    }

    #[test]
    fn sector_domain() {
        let m = crate::manifold::MetricField::euclidean(2).unwrap();
        let nb = crate::manifold::build_normal_neighborhood(&m, &ChartPoint::origin(2), 1.0).unwrap();
        let dom = Domain::Sector {
            apex: vec![0.0, 0.0],
            start: 0.0,
            end: PI / 2.0,
        };
        let rep = divergence_check(&WeightField::constant(1.0).unwrap(), &nb, &dom, 0.5, &LadderOptions::default()).unwrap();
        assert!((rep.norms[3] - 0.5 * PI * rep.cutoffs[3]).abs() < 1e-12);
        assert_eq!(rep.verdict, Verdict::Diverges);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn larger_k_never_increases_partial_integrals(c in 1.0f64..4.0, b in 0.0f64..2.0) {
            let delta = 0.5;
            let (nb, dom) = half_disk(delta).unwrap();
            let opts = LadderOptions { levels: 8, ..Default::default() };
            let small = WeightField::expression("1 + 0.5 * x2 / r").unwrap();
            let large = WeightField::field("c K + b", move |x, r| c * (1.0 + 0.5 * x[1] / r) + b);
            let a = divergence_check(&small, &nb, &dom, delta, &opts).unwrap();
            let z = divergence_check(&large, &nb, &dom, delta, &opts).unwrap();
            for (x, y) in a.partial_integrals.iter().zip(&z.partial_integrals) {
                prop_assert!(y <= x);
            }
        }
    }
}
