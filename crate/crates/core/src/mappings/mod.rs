//! Chart-to-chart maps, their dilatation fields and the lower
//! Q-homeomorphism check with `Q = K_p`.

mod classify;
mod dilatation;
mod theorem2;

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::expr::{Expr, Var};
use crate::manifold::{Mat3, MetricField, MAX_DIM};

pub use classify::{classify_map, ClassifyOptions, ClassifyReport};
pub use dilatation::{dilatation_at, jacobian_at, outer_dilatation, DilatationSample};
pub use theorem2::{verify_theorem2, Theorem2Report, THEOREM2_TOLERANCE};

#[derive(Clone)]
pub enum MapKind {
    Identity,
    /// `x ↦ A x`
    Linear(Mat3),
    /// `x ↦ |x|^{k-1} x`
    RadialStretch { k: f64 },
    /// Component expressions in `x1..xn` with their symbolic Jacobian.
    Symbolic { components: Vec<Expr>, jacobian: Vec<Vec<Expr>> },
    Custom(Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>),
}

/// A map `f` between two charts of the same dimension.
#[derive(Clone)]
pub struct MapModel {
    kind: MapKind,
    source: MetricField,
    target: MetricField,
    description: String,
    analytic: bool,
}

impl fmt::Debug for MapModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MapModel({})", self.description)
    }
}

fn same_dim(source: &MetricField, target: &MetricField) -> Result<()> {
    if source.dim() != target.dim() {
        return Err(invalid("source and target charts must have the same dimension"));
    }
    Ok(())
}

impl MapModel {
    pub fn identity(metric: &MetricField) -> Self {
        MapModel {
            kind: MapKind::Identity,
            source: metric.clone(),
            target: metric.clone(),
            description: "identity".into(),
            analytic: true,
        }
    }

    pub fn linear(a: &[Vec<f64>], source: &MetricField, target: &MetricField) -> Result<Self> {
        same_dim(source, target)?;
        let n = source.dim();
        if a.len() != n || a.iter().any(|row| row.len() != n) {
            return Err(invalid(format!("linear map must be {n}x{n}")));
        }
        if a.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("linear map entries must be finite"));
        }
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..n {
            m[i][..n].copy_from_slice(&a[i]);
        }
        Ok(MapModel {
            kind: MapKind::Linear(m),
            source: source.clone(),
            target: target.clone(),
            description: format!("linear {a:?}"),
            analytic: true,
        })
    }

    pub fn radial_stretch(k: f64, source: &MetricField, target: &MetricField) -> Result<Self> {
        same_dim(source, target)?;
        if !(k > 0.0 && k.is_finite()) {
            return Err(invalid("stretch exponent must be positive"));
        }
        Ok(MapModel {
            kind: MapKind::RadialStretch { k },
            source: source.clone(),
            target: target.clone(),
            description: format!("radial stretch k = {k}"),
            analytic: true,
        })
    }

    /// Components as expressions in `x1..xn`.
    pub fn symbolic<S: AsRef<str>>(
        components: &[S],
        source: &MetricField,
        target: &MetricField,
    ) -> Result<Self> {
        same_dim(source, target)?;
        let n = source.dim();
        if components.len() != n {
            return Err(invalid(format!("symbolic map needs {n} components")));
        }
        let exprs = components
            .iter()
            .map(|c| Expr::parse(c.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        for e in &exprs {
            if e.uses_distance() {
                return Err(Error::Parse("map components may not use `r`".into()));
            }
            if e.arity() > n {
                return Err(Error::Parse(format!("map component `{e}` uses coordinates beyond x{n}")));
            }
        }
        let jacobian = exprs
            .iter()
            .map(|e| (0..n).map(|k| e.diff(Var::Coord(k))).collect())
            .collect();
        let description = format!(
            "symbolic ({})",
            exprs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", ")
        );
        Ok(MapModel {
            kind: MapKind::Symbolic {
                components: exprs,
                jacobian,
            },
            source: source.clone(),
            target: target.clone(),
            description,
            analytic: true,
        })
    }

    /// Arbitrary closure; its differential is always estimated numerically.
    pub fn custom(
        description: impl Into<String>,
        f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        source: &MetricField,
        target: &MetricField,
    ) -> Result<Self> {
        same_dim(source, target)?;
        Ok(MapModel {
            kind: MapKind::Custom(Arc::new(f)),
            source: source.clone(),
            target: target.clone(),
            description: description.into(),
            analytic: false,
        })
    }

    /// Same map with the analytic differential switched off.
    pub fn finite_difference_only(&self) -> Self {
        let mut out = self.clone();
        out.analytic = false;
        out
    }

    pub fn kind(&self) -> &MapKind {
        &self.kind
    }

    pub fn source(&self) -> &MetricField {
        &self.source
    }

    pub fn target(&self) -> &MetricField {
        &self.target
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn tag(&self) -> &'static str {
        match self.kind {
            MapKind::Identity => "identity",
            MapKind::Linear(_) => "linear",
            MapKind::RadialStretch { .. } => "radial_stretch",
            MapKind::Symbolic { .. } => "symbolic",
            MapKind::Custom(_) => "custom",
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        match &self.kind {
            MapKind::Identity => x[..n].to_vec(),
            MapKind::Linear(a) => (0..n)
                .map(|i| (0..n).map(|j| a[i][j] * x[j]).sum())
                .collect(),
            MapKind::RadialStretch { k } => {
                let rho = x[..n].iter().map(|v| v * v).sum::<f64>().sqrt();
                let f = if rho == 0.0 { 0.0 } else { rho.powf(k - 1.0) };
                x[..n].iter().map(|v| f * v).collect()
            }
            MapKind::Symbolic { components, .. } => {
                components.iter().map(|e| e.eval(&x[..n], 0.0)).collect()
            }
            MapKind::Custom(f) => f(&x[..n]),
        }
    }

    /// Analytic differential when the catalog provides one.
    pub fn analytic_jacobian(&self, x: &[f64]) -> Option<Result<Mat3>> {
        if !self.analytic {
            return None;
        }
        let n = self.dim();
        let mut d = [[0.0; MAX_DIM]; MAX_DIM];
        match &self.kind {
            MapKind::Identity => {
                for (i, row) in d.iter_mut().enumerate().take(n) {
                    row[i] = 1.0;
                }
            }
            MapKind::Linear(a) => d = *a,
            MapKind::RadialStretch { k } => {
                let rho = x[..n].iter().map(|v| v * v).sum::<f64>().sqrt();
                if rho == 0.0 {
                    if *k < 1.0 {
                        return Some(Err(Error::NotDifferentiable { point: x[..n].to_vec() }));
                    }
                    if *k == 1.0 {
                        for (i, row) in d.iter_mut().enumerate().take(n) {
                            row[i] = 1.0;
                        }
                    }
                    return Some(Ok(d));
                }
                // |x|^{k-1} (I + (k-1) u uᵀ)
                let f = rho.powf(k - 1.0);
                for i in 0..n {
                    for j in 0..n {
                        let uu = x[i] * x[j] / (rho * rho);
                        d[i][j] = f * ((k - 1.0) * uu + if i == j { 1.0 } else { 0.0 });
                    }
                }
            }
            MapKind::Symbolic { jacobian, .. } => {
                for i in 0..n {
                    for j in 0..n {
                        d[i][j] = jacobian[i][j].eval(&x[..n], 0.0);
                    }
                }
            }
            MapKind::Custom(_) => return None,
        }
        Some(Ok(d))
    }
}
