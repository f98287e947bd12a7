//! p-moduli of geodesic sphere families: exponents, sphere norms of the
//! weight, the lower-bound integral, the extremal density, the per-shell
//! convex oracle, the weighted Jensen identity and the ring upper bound.

mod curve;
mod oracle;

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::expr::Expr;
use crate::quadrature::{clamp_value, ScalarField, ShellGrid};

pub use curve::{
    curve_modulus_brute_force, curve_modulus_flat_annulus, unit_sphere_area, BruteForceOptions,
    BruteForceResult,
};
pub use oracle::{project_weighted_simplex, solve_shell, OracleOptions, OracleSolution};

/// Smallest admissible inner radius relative to the outer one.
pub const EPS_RATIO_MIN: f64 = 1e-3;

/// Exponent bookkeeping `(n, p, q, s, α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentSet {
    pub n: usize,
    pub p: f64,
    /// `p / (n-1)`
    pub q: f64,
    /// `(n-1) / (p-n+1)`
    pub s: f64,
    /// `p / (p-n+1)`
    pub alpha: f64,
}

impl ExponentSet {
    pub fn new(n: usize, p: f64) -> Result<Self> {
        if n < 2 {
            return Err(invalid("dimension must be at least 2"));
        }
        let m = (n - 1) as f64;
        if !(p > m && p.is_finite()) {
            return Err(Error::UnsupportedExponent(format!(
                "p = {p} must exceed n - 1 = {m}"
            )));
        }
        let d = p - m;
        Ok(ExponentSet {
            n,
            p,
            q: p / m,
            s: m / d,
            alpha: p / d,
        })
    }
}

#[derive(Clone)]
enum WeightKind {
    Constant(f64),
    Radial(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    Expression(Expr),
    Field(Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>),
}

/// Positive weight `Q(P)`. Evaluated with the chart point and its geodesic
/// distance to the ring center.
#[derive(Clone)]
pub struct WeightField {
    kind: WeightKind,
    scale: f64,
    description: String,
}

impl fmt::Debug for WeightField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WeightField({})", self.description)
    }
}

impl WeightField {
    pub fn constant(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(invalid("constant weight must be positive and finite"));
        }
        Ok(WeightField {
            kind: WeightKind::Constant(c),
            scale: 1.0,
            description: format!("constant {c}"),
        })
    }

    /// Weight depending only on the distance to the center.
    pub fn radial(
        description: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        WeightField {
            kind: WeightKind::Radial(Arc::new(f)),
            scale: 1.0,
            description: description.into(),
        }
    }

    /// Symbolic weight in `x1..xn` and `r`.
    pub fn expression(src: &str) -> Result<Self> {
        let expr = Expr::parse(src)?;
        Ok(WeightField {
            description: format!("expression {expr}"),
            kind: WeightKind::Expression(expr),
            scale: 1.0,
        })
    }

    pub fn field(
        description: impl Into<String>,
        f: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        WeightField {
            kind: WeightKind::Field(Arc::new(f)),
            scale: 1.0,
            description: description.into(),
        }
    }

    /// `c · Q`
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.scale *= c;
        out.description = format!("{c} * ({})", self.description);
        out
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn eval(&self, x: &[f64], r: f64) -> f64 {
        let v = match &self.kind {
            WeightKind::Constant(c) => *c,
            WeightKind::Radial(f) => f(r),
            WeightKind::Expression(e) => e.eval(x, r),
            WeightKind::Field(f) => f(x, r),
        };
        self.scale * v
    }

    /// True when the weight cannot vary along a geodesic sphere.
    pub fn is_radial(&self) -> bool {
        match &self.kind {
            WeightKind::Constant(_) | WeightKind::Radial(_) => true,
            WeightKind::Expression(e) => e.arity() == 0,
            WeightKind::Field(_) => false,
        }
    }
}

impl ScalarField for WeightField {
    fn value(&self, x: &[f64], r: f64) -> f64 {
        self.eval(x, r)
    }
}

/// Weight values on the in-domain cells of shell `k` as `(j, Q, dA)`,
/// rejecting nonpositive or undefined values.
pub(crate) fn shell_weights(grid: &ShellGrid, q: &WeightField, k: usize) -> Result<Vec<(usize, f64, f64)>> {
    let cells = grid.shell_values(k, q)?;
    for &(j, v, _) in &cells {
        if !(v > 0.0) {
            return Err(Error::FieldEvaluation {
                point: grid.point(k, j).to_vec(),
            });
        }
    }
    Ok(cells)
}

fn check_eps_ratio(grid: &ShellGrid) -> Result<()> {
    let ring = grid.ring();
    if ring.eps < EPS_RATIO_MIN * ring.eps0 {
        return Err(invalid(format!(
            "eps = {} is below {EPS_RATIO_MIN} * eps0",
            ring.eps
        )));
    }
    Ok(())
}

/// `‖Q‖_s` on shell `k`: `(Σ Q^s dA)^{1/s}` over the in-domain cells.
pub fn qnorm_on_sphere(grid: &ShellGrid, q: &WeightField, exps: &ExponentSet, k: usize) -> Result<f64> {
    if k >= grid.shells() {
        return Err(invalid(format!("shell index {k} out of range")));
    }
    let sum: f64 = shell_weights(grid, q, k)?
        .iter()
        .map(|(_, v, a)| v.powf(exps.s) * a)
        .sum();
    Ok(sum.powf(1.0 / exps.s))
}

fn qnorms(grid: &ShellGrid, q: &WeightField, exps: &ExponentSet) -> Result<Vec<f64>> {
    let norms: Vec<f64> = (0..grid.shells())
        .into_par_iter()
        .map(|k| qnorm_on_sphere(grid, q, exps, k))
        .collect::<Result<_>>()?;
    for (k, nk) in norms.iter().enumerate() {
        if !(*nk > 0.0) {
            return Err(Error::EmptyShell {
                index: k,
                radius: grid.radius(k),
            });
        }
    }
    Ok(norms)
}

/// `I = ∫_ε^{ε₀} dr / ‖Q‖_s(P₀, r)` on the grid's radial rule.
pub fn lower_bound_integral(grid: &ShellGrid, q: &WeightField, exps: &ExponentSet) -> Result<f64> {
    check_eps_ratio(grid)?;
    let norms = qnorms(grid, q, exps)?;
    Ok(norms
        .iter()
        .zip(grid.radial_weights())
        .map(|(nk, w)| w / nk)
        .sum())
}

/// Nonnegative density on the cells of a grid, stored shell-major like the
/// grid itself. Cells outside the domain carry 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    shells: usize,
    directions: usize,
    values: Vec<f64>,
}

impl Density {
    pub fn zeros(grid: &ShellGrid) -> Self {
        Density {
            shells: grid.shells(),
            directions: grid.directions(),
            values: vec![0.0; grid.shells() * grid.directions()],
        }
    }

    /// Samples `f` at every cell center.
    pub fn from_fn(grid: &ShellGrid, f: impl Fn(&[f64], f64) -> f64) -> Result<Self> {
        let mut d = Density::zeros(grid);
        for k in 0..grid.shells() {
            for j in 0..grid.directions() {
                d.set(k, j, f(grid.point(k, j), grid.radius(k)))?;
            }
        }
        Ok(d)
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.values[k * self.directions + j]
    }

    pub fn set(&mut self, k: usize, j: usize, v: f64) -> Result<()> {
        if !(v >= 0.0) {
            return Err(invalid(format!("density value {v} must be nonnegative")));
        }
        self.values[k * self.directions + j] = v.min(crate::quadrature::FIELD_CAP);
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn shells(&self) -> usize {
        self.shells
    }

    fn matches(&self, grid: &ShellGrid) -> bool {
        self.shells == grid.shells() && self.directions == grid.directions()
    }
}

/// `ρ₀ = (Q / ‖Q‖_s(P₀, d(P, P₀)))^{1/(p-n+1)}`.
pub fn extremal_density(grid: &ShellGrid, q: &WeightField, exps: &ExponentSet) -> Result<Density> {
    check_eps_ratio(grid)?;
    let norms = qnorms(grid, q, exps)?;
    let e = 1.0 / (exps.p - (exps.n as f64 - 1.0));
    let mut rho = Density::zeros(grid);
    for (k, nk) in norms.iter().enumerate() {
        for (j, v, _) in shell_weights(grid, q, k)? {
            rho.set(k, j, (v / nk).powf(e))?;
        }
    }
    Ok(rho)
}

/// `Σ ρ^p / Q dV` over the ring.
pub fn objective_value(
    grid: &ShellGrid,
    q: &WeightField,
    exps: &ExponentSet,
    rho: &Density,
) -> Result<f64> {
    if !rho.matches(grid) {
        return Err(invalid("density does not match the grid"));
    }
    let per_shell: Vec<f64> = (0..grid.shells())
        .into_par_iter()
        .map(|k| {
            let mut acc = 0.0;
            for (j, v, a) in shell_weights(grid, q, k)? {
                let r = rho.get(k, j);
                if r > 0.0 {
                    acc += r.powf(exps.p) / v * a;
                }
            }
            Ok(acc * grid.radial_weight(k))
        })
        .collect::<Result<_>>()?;
    Ok(per_shell.iter().sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    ClosedForm,
    ConvexOracle,
}

impl fmt::Display for EstimateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimateKind::ClosedForm => "closed_form",
            EstimateKind::ConvexOracle => "convex_oracle",
        })
    }
}

/// Per-shell infimum of `Σ α^q / Q dA` subject to `Σ α dA = 1`.
pub fn per_shell_infimum(
    grid: &ShellGrid,
    q: &WeightField,
    exps: &ExponentSet,
    k: usize,
    mode: EstimateKind,
) -> Result<f64> {
    match mode {
        EstimateKind::ClosedForm => {
            let nk = qnorm_on_sphere(grid, q, exps, k)?;
            if !(nk > 0.0) {
                return Err(Error::EmptyShell {
                    index: k,
                    radius: grid.radius(k),
                });
            }
            Ok(1.0 / nk)
        }
        EstimateKind::ConvexOracle => Ok(shell_oracle(grid, q, exps, k)?.value),
    }
}

pub(crate) fn shell_oracle(
    grid: &ShellGrid,
    q: &WeightField,
    exps: &ExponentSet,
    k: usize,
) -> Result<OracleSolution> {
    if k >= grid.shells() {
        return Err(invalid(format!("shell index {k} out of range")));
    }
    let cells = shell_weights(grid, q, k)?;
    let cells: Vec<_> = cells.into_iter().filter(|c| c.2 > 0.0).collect();
    if cells.is_empty() {
        return Err(Error::EmptyShell {
            index: k,
            radius: grid.radius(k),
        });
    }
    let c: Vec<f64> = cells.iter().map(|c| 1.0 / c.1).collect();
    let m: Vec<f64> = cells.iter().map(|c| c.2).collect();
    solve_shell(&c, &m, exps.q, &OracleOptions::default())
}

/// One row of the per-shell table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShellRow {
    pub r: f64,
    pub area: f64,
    pub qnorm: f64,
    pub infimum_closed: f64,
    pub infimum_oracle: f64,
}

/// Per-shell areas, norms and both infima, in shell order.
pub fn shell_table(grid: &ShellGrid, q: &WeightField, exps: &ExponentSet) -> Result<Vec<ShellRow>> {
    check_eps_ratio(grid)?;
    (0..grid.shells())
        .into_par_iter()
        .map(|k| {
            let qnorm = qnorm_on_sphere(grid, q, exps, k)?;
            if !(qnorm > 0.0) {
                return Err(Error::EmptyShell {
                    index: k,
                    radius: grid.radius(k),
                });
            }
            Ok(ShellRow {
                r: grid.radius(k),
                area: grid.shell_area(k),
                qnorm,
                infimum_closed: 1.0 / qnorm,
                infimum_oracle: shell_oracle(grid, q, exps, k)?.value,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulusEstimate {
    pub value: f64,
    pub kind: EstimateKind,
    pub resolution: String,
    /// Relative difference to the paired estimate.
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfaceModulus {
    pub closed_form: ModulusEstimate,
    pub convex_oracle: ModulusEstimate,
    pub shells: Vec<ShellRow>,
}

/// Closed-form lower bound `I` and the discrete oracle minimum over
/// densities with unit `(n-1)`-energy on every shell.
pub fn surface_family_modulus(
    grid: &ShellGrid,
    q: &WeightField,
    exps: &ExponentSet,
) -> Result<SurfaceModulus> {
    let shells = shell_table(grid, q, exps)?;
    let closed: f64 = shells
        .iter()
        .zip(grid.radial_weights())
        .map(|(s, w)| w * s.infimum_closed)
        .sum();
    let oracle: f64 = shells
        .iter()
        .zip(grid.radial_weights())
        .map(|(s, w)| w * s.infimum_oracle)
        .sum();
    let gap = (oracle - closed).abs() / closed.abs().max(f64::MIN_POSITIVE);
    let resolution = grid.description().to_string();
    Ok(SurfaceModulus {
        closed_form: ModulusEstimate {
            value: closed,
            kind: EstimateKind::ClosedForm,
            resolution: resolution.clone(),
            gap: Some(gap),
        },
        convex_oracle: ModulusEstimate {
            value: oracle,
            kind: EstimateKind::ConvexOracle,
            resolution,
            gap: Some(gap),
        },
        shells,
    })
}

/// Nonnegative radial profile `η(r)`.
#[derive(Clone)]
pub struct RadialProfile {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    description: String,
}

impl fmt::Debug for RadialProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RadialProfile({})", self.description)
    }
}

impl RadialProfile {
    pub fn from_fn(description: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        RadialProfile {
            f: Arc::new(f),
            description: description.into(),
        }
    }

    /// `1 / (ε₀ − ε)`
    pub fn uniform(eps: f64, eps0: f64) -> Self {
        let v = 1.0 / (eps0 - eps);
        RadialProfile::from_fn("uniform", move |_| v)
    }

    /// Piecewise-linear interpolation of `(knots, values)`, constant beyond
    /// the end knots.
    pub fn piecewise_linear(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() != values.len() || knots.is_empty() {
            return Err(invalid("knots and values must be nonempty and aligned"));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("knots must be strictly increasing"));
        }
        if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(invalid("profile values must be nonnegative"));
        }
        let desc = format!("piecewise linear on {} knots", knots.len());
        Ok(RadialProfile::from_fn(desc, move |r| interpolate(&knots, &values, r)))
    }

    /// Random nonnegative piecewise-linear profile on `[ε, ε₀]`, not yet
    /// normalized.
    pub fn random<R: Rng>(rng: &mut R, eps: f64, eps0: f64, knots: usize) -> Result<Self> {
        let knots = knots.max(2);
        let xs: Vec<f64> = (0..knots)
            .map(|i| eps + (eps0 - eps) * i as f64 / (knots - 1) as f64)
            .collect();
        let mut ys: Vec<f64> = (0..knots).map(|_| rng.gen_range(0.0..1.0)).collect();
        if ys.iter().all(|y| *y == 0.0) {
            ys[0] = 1.0;
        }
        RadialProfile::piecewise_linear(xs, ys)
    }

    /// `η₀(t) = 1 / (I · ‖Q‖_s(P₀, t))`, interpolated between grid radii.
    pub fn canonical(grid: &ShellGrid, q: &WeightField, exps: &ExponentSet) -> Result<Self> {
        let norms = qnorms(grid, q, exps)?;
        let i: f64 = norms
            .iter()
            .zip(grid.radial_weights())
            .map(|(nk, w)| w / nk)
            .sum();
        let values: Vec<f64> = norms.iter().map(|nk| 1.0 / (i * nk)).collect();
        let mut p = RadialProfile::piecewise_linear(grid.radii().to_vec(), values)?;
        p.description = "canonical".into();
        Ok(p)
    }

    /// Rescaled so that the grid's radial rule integrates it to 1.
    pub fn normalized_on(&self, grid: &ShellGrid) -> Result<Self> {
        let total = self.integral_on(grid);
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::NotNormalized { integral: total });
        }
        let f = self.f.clone();
        Ok(RadialProfile {
            f: Arc::new(move |r| f(r) / total),
            description: format!("{} (normalized)", self.description),
        })
    }

    pub fn eval(&self, r: f64) -> f64 {
        (self.f)(r)
    }

    pub fn integral_on(&self, grid: &ShellGrid) -> f64 {
        grid.radii()
            .iter()
            .zip(grid.radial_weights())
            .map(|(r, w)| self.eval(*r) * w)
            .sum()
    }

    pub fn description(&self) -> &str {
        &self.description
    }
}

fn interpolate(xs: &[f64], ys: &[f64], r: f64) -> f64 {
    if r <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if r >= xs[last] {
        return ys[last];
    }
    let i = xs.partition_point(|x| *x <= r) - 1;
    let t = (r - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + t * (ys[i + 1] - ys[i])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JensenReport {
    /// `1 / I^s`
    pub lhs: f64,
    /// `∫ Q^s η^α dV`
    pub rhs: f64,
    pub holds: bool,
}

/// Relative slack allowed in `rhs ≥ lhs`.
pub const JENSEN_TOLERANCE: f64 = 1e-9;

/// Compares `1/I^s` with `∫ Q^s η^α(d(P, P₀)) dV` for a normalized `η`.
pub fn jensen_verify(
    grid: &ShellGrid,
    q: &WeightField,
    exps: &ExponentSet,
    eta: &RadialProfile,
) -> Result<JensenReport> {
    check_eps_ratio(grid)?;
    let integral = eta.integral_on(grid);
    if !((integral - 1.0).abs() <= 1e-6) {
        return Err(Error::NotNormalized { integral });
    }
    let norms = qnorms(grid, q, exps)?;
    let i: f64 = norms
        .iter()
        .zip(grid.radial_weights())
        .map(|(nk, w)| w / nk)
        .sum();
    let lhs = i.powf(-exps.s);
    let mut rhs = 0.0;
    for (k, nk) in norms.iter().enumerate() {
        let e = eta.eval(grid.radius(k));
        let e = clamp_value(e, grid.point(k, 0))?;
        if e < 0.0 {
            return Err(invalid("radial profile must be nonnegative"));
        }
        if e > 0.0 {
            // Σ_j Q^s dA = ‖Q‖_s^s
            rhs += grid.radial_weight(k) * e.powf(exps.alpha) * nk.powf(exps.s);
        }
    }
    Ok(JensenReport {
        lhs,
        rhs,
        holds: rhs >= lhs * (1.0 - JENSEN_TOLERANCE),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RingBound {
    pub bound: f64,
    pub c_estimate: f64,
    pub integral: f64,
}

/// `c / I^s` with the surrogate `c = (1 + δ_g(ε₀))^{p·s}`.
pub fn ring_upper_bound(grid: &ShellGrid, q: &WeightField, exps: &ExponentSet) -> Result<RingBound> {
    let integral = lower_bound_integral(grid, q, exps)?;
    let ring = grid.ring();
    let dev = ring.neighborhood.metric_deviation(ring.eps0);
    let c_estimate = (1.0 + dev).powf(exps.p * exps.s);
    Ok(RingBound {
        bound: c_estimate / integral.powf(exps.s),
        c_estimate,
        integral,
    })
}
