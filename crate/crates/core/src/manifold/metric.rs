use std::fmt;
use std::ops::Deref;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::expr::{Expr, Var};

pub const MAX_DIM: usize = 3;

pub type Mat3 = [[f64; MAX_DIM]; MAX_DIM];

/// `dg[k][i][j] = ∂_k g_ij`
pub type MetricDerivative = [Mat3; MAX_DIM];

/// `gamma[i][j][k] = Γ^i_jk`
pub type Christoffel = [Mat3; MAX_DIM];

const FD_STEP: f64 = 1e-5;

/// A point in local chart coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint(pub Vec<f64>);

impl ChartPoint {
    pub fn new(coords: impl Into<Vec<f64>>) -> Self {
        ChartPoint(coords.into())
    }

    pub fn origin(dim: usize) -> Self {
        ChartPoint(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl Deref for ChartPoint {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<&[f64]> for ChartPoint {
    fn from(v: &[f64]) -> Self {
        ChartPoint(v.to_vec())
    }
}

/// Axis-aligned coordinate box of a chart. Leaving it is an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainBox {
    pub fn cube(dim: usize, half_width: f64) -> Self {
        DomainBox {
            lo: vec![-half_width; dim],
            hi: vec![half_width; dim],
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (lo, hi))| v.is_finite() && *v >= *lo && *v <= *hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConformalFactor {
    Constant(f64),
    Expression { expr: Expr, grad: Vec<Expr> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum MetricKind {
    Euclidean,
    /// Round sphere of the given radius in normal coordinates centred at a
    /// pole, so that `|x|` is the geodesic distance from the pole.
    RoundSphere { radius: f64 },
    /// Poincaré ball model, `g = 4/(1-|x|²)² δ`.
    PoincareBall,
    /// `g = λ(x) δ`.
    ConformalFlat(ConformalFactor),
    /// Full matrix of expressions; only the upper triangle is evaluated.
    Custom { entries: Vec<Vec<Expr>> },
}

/// A smooth Riemannian metric `g_ij(x)` on one chart.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricField {
    dim: usize,
    kind: MetricKind,
    domain: DomainBox,
}

impl fmt::Display for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(n={})", self.tag(), self.dim)
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if (2..=MAX_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(invalid(format!("dimension {dim} not supported (2 or 3)")))
    }
}

impl MetricField {
    pub fn euclidean(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(MetricField {
            dim,
            kind: MetricKind::Euclidean,
            domain: DomainBox::cube(dim, 1e6),
        })
    }

    pub fn round_sphere(dim: usize, radius: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid("sphere radius must be positive"));
        }
        Ok(MetricField {
            dim,
            kind: MetricKind::RoundSphere { radius },
            domain: DomainBox::cube(dim, std::f64::consts::PI * radius),
        })
    }

    pub fn poincare_ball(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(MetricField {
            dim,
            kind: MetricKind::PoincareBall,
            domain: DomainBox::cube(dim, 1.0),
        })
    }

    pub fn conformal_constant(dim: usize, lambda: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid("conformal factor must be positive"));
        }
        Ok(MetricField {
            dim,
            kind: MetricKind::ConformalFlat(ConformalFactor::Constant(lambda)),
            domain: DomainBox::cube(dim, 1e6),
        })
    }

    /// `g = λ(x) δ` with `λ` given as an expression in `x1..xn`.
    pub fn conformal_flat(dim: usize, factor: &str, domain: DomainBox) -> Result<Self> {
        check_dim(dim)?;
        let expr = Expr::parse(factor)?;
        if expr.arity() > dim || expr.uses_distance() {
            return Err(Error::Parse(format!(
                "conformal factor `{factor}` may only use x1..x{dim}"
            )));
        }
        let grad = (0..dim).map(|k| expr.diff(Var::Coord(k))).collect();
        let m = MetricField {
            dim,
            kind: MetricKind::ConformalFlat(ConformalFactor::Expression { expr, grad }),
            domain,
        };
        m.validate_samples()?;
        Ok(m)
    }

    /// Custom metric from an `n × n` matrix of expressions in `x1..xn`.
    pub fn custom(dim: usize, entries: &[Vec<String>], domain: DomainBox) -> Result<Self> {
        check_dim(dim)?;
        if entries.len() != dim || entries.iter().any(|row| row.len() != dim) {
            return Err(invalid(format!("custom metric needs a {dim}x{dim} matrix")));
        }
        let mut parsed = Vec::with_capacity(dim);
        for row in entries {
            let mut prow = Vec::with_capacity(dim);
            for src in row {
                let e = Expr::parse(src)?;
                if e.arity() > dim || e.uses_distance() {
                    return Err(Error::Parse(format!(
                        "metric entry `{src}` may only use x1..x{dim}"
                    )));
                }
                prow.push(e);
            }
            parsed.push(prow);
        }
        let m = MetricField {
            dim,
            kind: MetricKind::Custom { entries: parsed },
            domain,
        };
        m.validate_samples()?;
        Ok(m)
    }

    pub fn with_domain(mut self, domain: DomainBox) -> Result<Self> {
        if domain.lo.len() != self.dim || domain.hi.len() != self.dim {
            return Err(invalid("domain box dimension mismatch"));
        }
        self.domain = domain;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &MetricKind {
        &self.kind
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn tag(&self) -> &'static str {
        match self.kind {
            MetricKind::Euclidean => "euclidean",
            MetricKind::RoundSphere { .. } => "round-sphere",
            MetricKind::PoincareBall => "poincare-ball",
            MetricKind::ConformalFlat(_) => "conformal-flat",
            MetricKind::Custom { .. } => "custom",
        }
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.kind, MetricKind::Euclidean)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim || !self.domain.contains(x) {
            return false;
        }
        // The catalog charts are balls: stay off the antipodal point of the
        // sphere and inside the unit ball for the hyperbolic model.
        match self.kind {
            MetricKind::RoundSphere { radius } => {
                dot(self.dim, x, x).sqrt() < 0.99 * std::f64::consts::PI * radius
            }
            MetricKind::PoincareBall => dot(self.dim, x, x) < 1.0 - 1e-9,
            _ => true,
        }
    }

    /// Sample the domain box on a small lattice and check symmetry and
    /// positive definiteness of the user-supplied tensor.
    fn validate_samples(&self) -> Result<()> {
        let n = self.dim;
        let per_axis = 5usize;
        let total = per_axis.pow(n as u32);
        let mut x = [0.0; MAX_DIM];
        for idx in 0..total {
            let mut rem = idx;
            for (k, xk) in x.iter_mut().enumerate().take(n) {
                let t = (rem % per_axis) as f64 / (per_axis - 1) as f64;
                rem /= per_axis;
                let lo = self.domain.lo[k].max(-1e3);
                let hi = self.domain.hi[k].min(1e3);
                *xk = lo + (hi - lo) * (0.05 + 0.9 * t);
            }
            if let MetricKind::Custom { entries } = &self.kind {
                for i in 0..n {
                    for j in (i + 1)..n {
                        let a = entries[i][j].eval(&x[..n], 0.0);
                        let b = entries[j][i].eval(&x[..n], 0.0);
                        if a != b {
                            return Err(Error::NotSymmetric { i, j });
                        }
                    }
                }
            }
            self.check_positive(&x[..n])?;
        }
        Ok(())
    }

    pub fn check_positive(&self, x: &[f64]) -> Result<()> {
        let g = self.tensor(x);
        if is_positive_definite(self.dim, &g) {
            Ok(())
        } else {
            Err(Error::NonPositiveDefinite { point: x.to_vec() })
        }
    }

    /// Metric components at `x` as a fixed 3×3 block (unused rows are zero).
    pub fn tensor(&self, x: &[f64]) -> Mat3 {
        let n = self.dim;
        let mut g = [[0.0; MAX_DIM]; MAX_DIM];
        match &self.kind {
            MetricKind::Euclidean => {
                for (i, row) in g.iter_mut().enumerate().take(n) {
                    row[i] = 1.0;
                }
            }
            MetricKind::RoundSphere { radius } => {
                let rho2 = dot(n, x, x);
                let t = rho2.sqrt() / radius;
                let (a, b) = (sphere_a(t), sphere_b(t) / (radius * radius));
                for i in 0..n {
                    for j in i..n {
                        let v = b * (x[i] * x[j]);
                        g[i][j] = v;
                        g[j][i] = v;
                    }
                    g[i][i] += a;
                }
            }
            MetricKind::PoincareBall => {
                let w = 1.0 - dot(n, x, x);
                let lam = 4.0 / (w * w);
                for (i, row) in g.iter_mut().enumerate().take(n) {
                    row[i] = lam;
                }
            }
            MetricKind::ConformalFlat(f) => {
                let lam = match f {
                    ConformalFactor::Constant(c) => *c,
                    ConformalFactor::Expression { expr, .. } => expr.eval(x, 0.0),
                };
                for (i, row) in g.iter_mut().enumerate().take(n) {
                    row[i] = lam;
                }
            }
            MetricKind::Custom { entries } => {
                for i in 0..n {
                    for j in i..n {
                        let v = entries[i][j].eval(x, 0.0);
                        g[i][j] = v;
                        g[j][i] = v;
                    }
                }
            }
        }
        g
    }

    pub fn eval(&self, x: &ChartPoint) -> DMatrix<f64> {
        let g = self.tensor(x);
        DMatrix::from_fn(self.dim, self.dim, |i, j| g[i][j])
    }

    /// `∂_k g_ij` at `x`: closed form for the catalog, central differences
    /// for custom tensors.
    pub fn derivative(&self, x: &[f64]) -> MetricDerivative {
        let n = self.dim;
        let mut dg = [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM];
        match &self.kind {
            MetricKind::Euclidean | MetricKind::ConformalFlat(ConformalFactor::Constant(_)) => {}
            MetricKind::RoundSphere { radius } => {
                let r2 = radius * radius;
                let t = dot(n, x, x).sqrt() / radius;
                let b = sphere_b(t) / r2;
                let da = sphere_da_over_t(t) / r2;
                let db = sphere_db_over_t(t) / (r2 * r2);
                for k in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            let mut v = db * x[k] * x[i] * x[j];
                            if i == j {
                                v += da * x[k];
                            }
                            if i == k {
                                v += b * x[j];
                            }
                            if j == k {
                                v += b * x[i];
                            }
                            dg[k][i][j] = v;
                        }
                    }
                }
            }
            MetricKind::PoincareBall => {
                let w = 1.0 - dot(n, x, x);
                let c = 16.0 / (w * w * w);
                for k in 0..n {
                    for i in 0..n {
                        dg[k][i][i] = c * x[k];
                    }
                }
            }
            MetricKind::ConformalFlat(ConformalFactor::Expression { grad, .. }) => {
                for k in 0..n {
                    let d = grad[k].eval(x, 0.0);
                    for i in 0..n {
                        dg[k][i][i] = d;
                    }
                }
            }
            MetricKind::Custom { .. } => {
                let mut xp = [0.0; MAX_DIM];
                let mut xm = [0.0; MAX_DIM];
                for k in 0..n {
                    xp[..n].copy_from_slice(&x[..n]);
                    xm[..n].copy_from_slice(&x[..n]);
                    xp[k] += FD_STEP;
                    xm[k] -= FD_STEP;
                    let gp = self.tensor(&xp[..n]);
                    let gm = self.tensor(&xm[..n]);
                    for i in 0..n {
                        for j in 0..n {
                            dg[k][i][j] = (gp[i][j] - gm[i][j]) / (2.0 * FD_STEP);
                        }
                    }
                }
            }
        }
        dg
    }

    pub fn christoffel(&self, x: &[f64]) -> Christoffel {
        let n = self.dim;
        let mut gamma = [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM];
        if matches!(
            self.kind,
            MetricKind::Euclidean | MetricKind::ConformalFlat(ConformalFactor::Constant(_))
        ) {
            return gamma;
        }
        let g = self.tensor(x);
        let ginv = match inverse(n, &g) {
            Some(m) => m,
            None => {
                return [[[f64::NAN; MAX_DIM]; MAX_DIM]; MAX_DIM];
            }
        };
        let dg = self.derivative(x);
        // lowered symbols Γ_ljk = ½(∂_j g_lk + ∂_k g_lj − ∂_l g_jk)
        let mut low = [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM];
        for l in 0..n {
            for j in 0..n {
                for k in j..n {
                    let v = 0.5 * (dg[j][l][k] + dg[k][l][j] - dg[l][j][k]);
                    low[l][j][k] = v;
                    low[l][k][j] = v;
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in j..n {
                    let mut v = 0.0;
                    for l in 0..n {
                        v += ginv[i][l] * low[l][j][k];
                    }
                    gamma[i][j][k] = v;
                    gamma[i][k][j] = v;
                }
            }
        }
        gamma
    }

    /// Geodesic acceleration `-Γ^i_jk v^j v^k`.
    pub fn geodesic_accel(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let n = self.dim;
        let gamma = self.christoffel(x);
        for i in 0..n {
            let mut a = 0.0;
            for j in 0..n {
                for k in 0..n {
                    a += gamma[i][j][k] * v[j] * v[k];
                }
            }
            out[i] = -a;
        }
    }

    pub fn norm(&self, x: &[f64], v: &[f64]) -> f64 {
        quad_form(self.dim, &self.tensor(x), v, v).sqrt()
    }

    /// `√det g(x)`.
    pub fn volume_element(&self, x: &ChartPoint) -> Result<f64> {
        let g = self.tensor(x);
        let d = det(self.dim, &g);
        if d > 0.0 && d.is_finite() {
            Ok(d.sqrt())
        } else {
            Err(Error::NonPositiveDefinite { point: x.0.clone() })
        }
    }
}

// (sin t / t)², and friends, with series near t = 0.
const SERIES_CUTOFF: f64 = 0.5;
const SERIES_TERMS: usize = 16;

/// Coefficient `c_k` of `sin²t / t² = Σ_{k≥1} c_k t^{2k-2}`.
fn sinc2_coeff(k: usize) -> f64 {
    let mut c = 0.5;
    for m in 1..=2 * k {
        c *= 2.0 / m as f64;
    }
    if k % 2 == 0 {
        -c
    } else {
        c
    }
}

fn series(t: f64, first: usize, term: impl Fn(usize) -> f64, power: impl Fn(usize) -> i32) -> f64 {
    (first..first + SERIES_TERMS)
        .rev()
        .map(|k| term(k) * t.powi(power(k)))
        .sum()
}

fn sphere_a(t: f64) -> f64 {
    if t < SERIES_CUTOFF {
        series(t, 1, sinc2_coeff, |k| 2 * k as i32 - 2)
    } else {
        let s = t.sin() / t;
        s * s
    }
}

/// (1 − a(t)) / t²
fn sphere_b(t: f64) -> f64 {
    if t < SERIES_CUTOFF {
        series(t, 2, |k| -sinc2_coeff(k), |k| 2 * k as i32 - 4)
    } else {
        (1.0 - sphere_a(t)) / (t * t)
    }
}

/// a'(t) / t
fn sphere_da_over_t(t: f64) -> f64 {
    if t < SERIES_CUTOFF {
        series(t, 2, |k| sinc2_coeff(k) * (2 * k - 2) as f64, |k| 2 * k as i32 - 4)
    } else {
        let s = t.sin() / t;
        let ds = (t * t.cos() - t.sin()) / (t * t);
        2.0 * s * ds / t
    }
}

/// b'(t) / t
fn sphere_db_over_t(t: f64) -> f64 {
    if t < SERIES_CUTOFF {
        series(t, 3, |k| -sinc2_coeff(k) * (2 * k - 4) as f64, |k| 2 * k as i32 - 6)
    } else {
        let t2 = t * t;
        -sphere_da_over_t(t) / t2 - 2.0 * sphere_b(t) / t2
    }
}

pub(crate) fn dot(n: usize, a: &[f64], b: &[f64]) -> f64 {
    (0..n).map(|i| a[i] * b[i]).sum()
}

pub(crate) fn quad_form(n: usize, g: &Mat3, a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += g[i][j] * a[i] * b[j];
        }
    }
    s
}

pub(crate) fn det(n: usize, m: &Mat3) -> f64 {
    match n {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        _ => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
    }
}

pub(crate) fn inverse(n: usize, m: &Mat3) -> Option<Mat3> {
    let d = det(n, m);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let mut inv = [[0.0; MAX_DIM]; MAX_DIM];
    match n {
        1 => inv[0][0] = 1.0 / d,
        2 => {
            inv[0][0] = m[1][1] / d;
            inv[0][1] = -m[0][1] / d;
            inv[1][0] = -m[1][0] / d;
            inv[1][1] = m[0][0] / d;
        }
        _ => {
            for i in 0..3 {
                for j in 0..3 {
                    let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
                    let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
                    inv[i][j] = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / d;
                }
            }
        }
    }
    Some(inv)
}

/// Sylvester's criterion on leading minors (n ≤ 3).
pub(crate) fn is_positive_definite(n: usize, m: &Mat3) -> bool {
    (1..=n).all(|k| {
        let d = det(k, m);
        d > 0.0 && d.is_finite()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_metrics_are_symmetric_and_positive() {
        let metrics = [
            MetricField::euclidean(2).unwrap(),
            MetricField::round_sphere(3, 1.0).unwrap(),
            MetricField::poincare_ball(2).unwrap(),
            MetricField::conformal_flat(2, "1 + x1^2 + x2^2", DomainBox::cube(2, 2.0)).unwrap(),
        ];
        for m in &metrics {
            let n = m.dim();
            let x = [0.31, -0.22, 0.17];
            let g = m.tensor(&x[..n]);
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(g[i][j], g[j][i]);
                }
            }
            assert!(is_positive_definite(n, &g), "{m}");
        }
    }

    #[test]
    fn volume_element_examples() {
        let e = MetricField::euclidean(3).unwrap();
        assert_eq!(e.volume_element(&ChartPoint::new([0.3, 0.1, 0.2])).unwrap(), 1.0);

        let c = MetricField::conformal_flat(2, "1 + x1^2 + x2^2", DomainBox::cube(2, 2.0)).unwrap();
        let x = ChartPoint::new([0.5, 0.25]);
        let v = c.volume_element(&x).unwrap();
        assert!((v - (1.0 + 0.25 + 0.0625)).abs() < 1e-14);

        // factor 2/(1-|x|²) = 8/3, squared
        let p = MetricField::poincare_ball(2).unwrap();
        let v = p.volume_element(&ChartPoint::new([0.5, 0.0])).unwrap();
        assert!((v - 64.0 / 9.0).abs() < 1e-13);
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let metrics = [
            MetricField::round_sphere(2, 1.0).unwrap(),
            MetricField::round_sphere(3, 2.0).unwrap(),
            MetricField::poincare_ball(3).unwrap(),
            MetricField::conformal_flat(2, "exp(x1) * (2 + sin(x2))", DomainBox::cube(2, 2.0))
                .unwrap(),
        ];
        let points = [[0.3, -0.2, 0.1], [0.004, 0.003, -0.002], [0.0, 0.0, 0.0]];
        for m in &metrics {
            let n = m.dim();
            for x in &points {
                let dg = m.derivative(&x[..n]);
                for k in 0..n {
                    let h = 1e-6;
                    let mut xp = *x;
                    let mut xm = *x;
                    xp[k] += h;
                    xm[k] -= h;
                    let gp = m.tensor(&xp[..n]);
                    let gm = m.tensor(&xm[..n]);
                    for i in 0..n {
                        for j in 0..n {
                            let fd = (gp[i][j] - gm[i][j]) / (2.0 * h);
                            assert!(
                                (fd - dg[k][i][j]).abs() < 1e-7,
                                "{m} at {x:?}: d{k} g{i}{j} {fd} vs {}",
                                dg[k][i][j]
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn sphere_series_is_continuous_at_cutoff() {
        let below = SERIES_CUTOFF * (1.0 - 1e-12);
        let above = SERIES_CUTOFF * (1.0 + 1e-12);
        for f in [sphere_a, sphere_b, sphere_da_over_t, sphere_db_over_t] {
            let (a, b) = (f(below), f(above));
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn rejects_invalid_custom_metrics() {
        let asym = vec![
            vec!["1".to_string(), "x1".to_string()],
            vec!["x2".to_string(), "1".to_string()],
        ];
        assert!(matches!(
            MetricField::custom(2, &asym, DomainBox::cube(2, 1.0)),
            Err(Error::NotSymmetric { .. })
        ));
        let indefinite = vec![
            vec!["1".to_string(), "0".to_string()],
            vec!["0".to_string(), "-1".to_string()],
        ];
        assert!(matches!(
            MetricField::custom(2, &indefinite, DomainBox::cube(2, 1.0)),
            Err(Error::NonPositiveDefinite { .. })
        ));
        assert!(MetricField::euclidean(4).is_err());
    }

    #[test]
    fn inverse_roundtrip() {
        let m = [[2.0, 0.3, 0.1], [0.3, 1.5, -0.2], [0.1, -0.2, 1.1]];
        let inv = inverse(3, &m).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| m[i][k] * inv[k][j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }
}
