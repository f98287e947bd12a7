//! α-modulus of the curves joining the boundary spheres of a flat annulus:
//! the classical closed form and a discrete brute-force oracle.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::modulus::ExponentSet;

/// Area of the unit sphere `S^{n-1}` in `ℝ^n`.
pub fn unit_sphere_area(n: usize) -> f64 {
    match n {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI / (n - 2) as f64 * unit_sphere_area(n - 2),
    }
}

/// `M_α = ω_{n-1} (∫_ε^{ε₀} r^{(1-n)/(α-1)} dr)^{1-α}`.
pub fn curve_modulus_flat_annulus(exps: &ExponentSet, eps: f64, eps0: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < eps0 && eps0.is_finite()) {
        return Err(invalid("annulus needs 0 < eps < eps0"));
    }
    let a = exps.alpha;
    if !(a > 1.0) {
        return Err(Error::UnsupportedExponent(format!("alpha = {a} must exceed 1")));
    }
    let n = exps.n as f64;
    let e = (1.0 - n) / (a - 1.0);
    let j = if (e + 1.0).abs() < 1e-12 {
        (eps0 / eps).ln()
    } else {
        (eps0.powf(e + 1.0) - eps.powf(e + 1.0)) / (e + 1.0)
    };
    Ok(unit_sphere_area(exps.n) * j.powf(1.0 - a))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceOptions {
    pub radial_cells: usize,
    pub angular_cells: usize,
    /// Angular offsets (radians) between the inner and outer endpoint of
    /// each straight chord.
    pub offsets: Vec<f64>,
    pub max_sweeps: usize,
    pub tol: f64,
}

impl Default for BruteForceOptions {
    fn default() -> Self {
        BruteForceOptions {
            radial_cells: 32,
            angular_cells: 64,
            offsets: vec![-0.2, -0.1, 0.0, 0.1, 0.2],
            max_sweeps: 20_000,
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BruteForceResult {
    /// Energy of a feasible cellwise-constant density.
    pub value: f64,
    /// Dual lower bound of the discrete program.
    pub lower: f64,
    pub curves: usize,
    pub cells: usize,
    pub sweeps: usize,
}

/// Cell lengths of the chord from `a` to `b` on the polar cell grid.
fn chord_row(a: [f64; 2], b: [f64; 2], eps: f64, eps0: f64, kr: usize, ka: usize) -> Vec<(usize, f64)> {
    let d = [b[0] - a[0], b[1] - a[1]];
    let dd = d[0] * d[0] + d[1] * d[1];
    let ad = a[0] * d[0] + a[1] * d[1];
    let aa = a[0] * a[0] + a[1] * a[1];
    let dr = (eps0 - eps) / kr as f64;
    let dphi = 2.0 * PI / ka as f64;
    let mut ts = vec![0.0, 1.0];
    for i in 1..kr {
        let r = eps + i as f64 * dr;
        let disc = ad * ad - dd * (aa - r * r);
        if disc >= 0.0 {
            for t in [(-ad + disc.sqrt()) / dd, (-ad - disc.sqrt()) / dd] {
                if t > 0.0 && t < 1.0 {
                    ts.push(t);
                }
            }
        }
    }
    for j in 0..ka {
        let u = [(j as f64 * dphi).cos(), (j as f64 * dphi).sin()];
        let ca = u[0] * a[1] - u[1] * a[0];
        let cd = u[0] * d[1] - u[1] * d[0];
        if cd != 0.0 {
            let t = -ca / cd;
            let p = [a[0] + t * d[0], a[1] + t * d[1]];
            if t > 0.0 && t < 1.0 && u[0] * p[0] + u[1] * p[1] > 0.0 {
                ts.push(t);
            }
        }
    }
    ts.sort_by(f64::total_cmp);
    let len = dd.sqrt();
    let mut row: BTreeMap<usize, f64> = BTreeMap::new();
    for w in ts.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let t = 0.5 * (w[0] + w[1]);
        let p = [a[0] + t * d[0], a[1] + t * d[1]];
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        let ir = (((r - eps) / dr) as usize).min(kr - 1);
        let phi = p[1].atan2(p[0]).rem_euclid(2.0 * PI);
        let ia = ((phi / dphi) as usize).min(ka - 1);
        *row.entry(ir * ka + ia).or_insert(0.0) += (w[1] - w[0]) * len;
    }
    row.into_iter().collect()
}

/// Discrete 2-modulus of straight chords joining the circles of a planar
/// annulus, over densities constant on polar cells. Planar and `α = 2` only.
pub fn curve_modulus_brute_force(
    exps: &ExponentSet,
    eps: f64,
    eps0: f64,
    opts: &BruteForceOptions,
) -> Result<BruteForceResult> {
    if exps.n != 2 || (exps.alpha - 2.0).abs() > 1e-12 {
        return Err(Error::UnsupportedExponent(format!(
            "brute-force curve modulus needs n = 2 and alpha = 2 (got n = {}, alpha = {})",
            exps.n, exps.alpha
        )));
    }
    if !(eps > 0.0 && eps < eps0) {
        return Err(invalid("annulus needs 0 < eps < eps0"));
    }
    let (kr, ka) = (opts.radial_cells, opts.angular_cells);
    if kr == 0 || ka == 0 || opts.offsets.is_empty() {
        return Err(invalid("brute force needs cells and chord offsets"));
    }
    for &off in &opts.offsets {
        // The chord must move outward from its inner endpoint.
        if eps0 * off.cos() < eps {
            return Err(invalid(format!("chord offset {off} dips inside the inner circle")));
        }
    }
    let dr = (eps0 - eps) / kr as f64;
    let dphi = 2.0 * PI / ka as f64;
    let area: Vec<f64> = (0..kr * ka)
        .map(|c| {
            let (r0, r1) = (eps + (c / ka) as f64 * dr, eps + (c / ka + 1) as f64 * dr);
            0.5 * dphi * (r1 * r1 - r0 * r0)
        })
        .collect();

    let mut rows = Vec::with_capacity(ka * opts.offsets.len());
    for j in 0..ka {
        let phi = (j as f64 + 0.5) * dphi;
        for &off in &opts.offsets {
            let a = [eps * phi.cos(), eps * phi.sin()];
            let b = [eps0 * (phi + off).cos(), eps0 * (phi + off).sin()];
            rows.push(chord_row(a, b, eps, eps0, kr, ka));
        }
    }
    let denom: Vec<f64> = rows
        .iter()
        .map(|row| row.iter().map(|(c, l)| l * l / area[*c]).sum())
        .collect();

    // Hildreth's dual coordinate ascent for min ½ Σ a ρ² s.t. Nρ ≥ 1.
    let mut lambda = vec![0.0; rows.len()];
    let mut rho = vec![0.0; kr * ka];
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        let mut moved: f64 = 0.0;
        for (c, row) in rows.iter().enumerate() {
            let dot: f64 = row.iter().map(|(i, l)| l * rho[*i]).sum();
            let delta = ((1.0 - dot) / denom[c]).max(-lambda[c]);
            if delta != 0.0 {
                lambda[c] += delta;
                for (i, l) in row {
                    rho[*i] += delta * l / area[*i];
                }
                moved = moved.max(delta.abs() * denom[c].sqrt());
            }
        }
        if moved < opts.tol {
            break;
        }
        if sweeps >= opts.max_sweeps {
            return Err(Error::SolverNotConverged { iterations: sweeps });
        }
    }
    let energy: f64 = rho.iter().zip(&area).map(|(r, a)| a * r * r).sum();
    let lower = 2.0 * lambda.iter().sum::<f64>() - energy;
    let min_len = rows
        .iter()
        .map(|row| row.iter().map(|(i, l)| l * rho[*i]).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    if !(min_len > 0.0) {
        return Err(Error::SolverNotConverged { iterations: sweeps });
    }
    Ok(BruteForceResult {
        value: energy / (min_len * min_len),
        lower,
        curves: rows.len(),
        cells: kr * ka,
        sweeps,
    })
}
