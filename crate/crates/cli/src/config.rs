use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use ringmod_core::manifold::DomainBox;
use ringmod_core::mappings::MapModel;
use ringmod_core::modulus::{ExponentSet, WeightField};
use ringmod_core::quadrature::{AngularNodes, GridSpec};
use ringmod_core::{ChartPoint, Domain, MetricField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Modulus,
    Jensen,
    Dilatation,
    Theorem2,
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricSpec {
    Euclidean { dim: usize },
    RoundSphere { dim: usize, radius: f64 },
    PoincareBall { dim: usize },
    ConformalConstant { dim: usize, lambda: f64 },
    /// `λ(x)² δ` with `λ` an expression in `x1..xn`.
    ConformalFlat { dim: usize, factor: String, half_width: f64 },
    /// Symmetric matrix of expressions in `x1..xn`.
    Custom { dim: usize, entries: Vec<Vec<String>>, half_width: f64 },
}

impl MetricSpec {
    pub fn build(&self) -> ringmod_core::Result<MetricField> {
        match self {
            MetricSpec::Euclidean { dim } => MetricField::euclidean(*dim),
            MetricSpec::RoundSphere { dim, radius } => MetricField::round_sphere(*dim, *radius),
            MetricSpec::PoincareBall { dim } => MetricField::poincare_ball(*dim),
            MetricSpec::ConformalConstant { dim, lambda } => MetricField::conformal_constant(*dim, *lambda),
            MetricSpec::ConformalFlat { dim, factor, half_width } => {
                MetricField::conformal_flat(*dim, factor, DomainBox::cube(*dim, *half_width))
            }
            MetricSpec::Custom { dim, entries, half_width } => {
                MetricField::custom(*dim, entries, DomainBox::cube(*dim, *half_width))
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            MetricSpec::Euclidean { dim }
            | MetricSpec::RoundSphere { dim, .. }
            | MetricSpec::PoincareBall { dim }
            | MetricSpec::ConformalConstant { dim, .. }
            | MetricSpec::ConformalFlat { dim, .. }
            | MetricSpec::Custom { dim, .. } => *dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    Identity,
    Linear { matrix: Vec<Vec<f64>> },
    RadialStretch { k: f64 },
    Symbolic { components: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    Constant { value: f64 },
    /// Expression in `x1..xn` and `r`, the distance to the center.
    Expression { expr: String },
}

impl WeightSpec {
    pub fn build(&self) -> ringmod_core::Result<WeightField> {
        match self {
            WeightSpec::Constant { value } => WeightField::constant(*value),
            WeightSpec::Expression { expr } => WeightField::expression(expr),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_panels")]
    pub radial_panels: usize,
    #[serde(default = "default_order")]
    pub radial_order: usize,
    #[serde(default)]
    pub angular_nodes: Option<AngularNodes>,
}

fn default_panels() -> usize {
    GridSpec::default().radial_panels
}

fn default_order() -> usize {
    GridSpec::default().radial_order
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            radial_panels: default_panels(),
            radial_order: default_order(),
            angular_nodes: None,
        }
    }
}

impl GridConfig {
    pub fn spec(&self) -> GridSpec {
        GridSpec {
            radial_panels: self.radial_panels,
            radial_order: self.radial_order,
            angular_nodes: self.angular_nodes,
        }
    }
}

fn default_samples() -> usize {
    100
}

fn default_knots() -> usize {
    8
}

fn default_levels() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub metric: MetricSpec,
    /// Target chart metric for maps; the source metric when absent.
    #[serde(default)]
    pub target_metric: Option<MetricSpec>,
    #[serde(default)]
    pub map: Option<MapSpec>,
    /// `Q` for modulus and jensen, `K` for boundary.
    #[serde(default)]
    pub weight: Option<WeightSpec>,
    /// Chart coordinates of `P₀`; the chart origin when absent.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default)]
    pub domain: Domain,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub eps0: Option<f64>,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub grid: GridConfig,
    /// Boundary ladder top `δ`.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// Random profiles drawn by `jensen`.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_knots")]
    pub knots: usize,
    /// File name prefix inside the output directory.
    #[serde(default)]
    pub output_prefix: String,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let n = self.metric.dim();
        if let Some(t) = &self.target_metric {
            if t.dim() != n {
                bail!("target_metric dimension {} differs from metric dimension {n}", t.dim());
            }
        }
        if let Some(c) = &self.center {
            if c.len() != n {
                bail!("center has {} coordinates, expected {n}", c.len());
            }
        }
        if self.output_prefix.contains(['/', '\\']) {
            bail!("output_prefix must be a plain file name prefix");
        }
        let need = |what: &str, ok: bool| -> anyhow::Result<()> {
            if !ok {
                bail!("command {:?} needs `{what}`", self.command);
            }
            Ok(())
        };
        match self.command {
            Command::Boundary => {
                need("weight", self.weight.is_some())?;
                need("delta", self.delta.is_some())?;
            }
            cmd => {
                need("eps", self.eps.is_some())?;
                need("eps0", self.eps0.is_some())?;
                need("p", self.p.is_some())?;
                let (eps, eps0) = (self.eps.unwrap(), self.eps0.unwrap());
                if !(eps > 0.0 && eps < eps0) {
                    bail!("need 0 < eps < eps0 (got eps = {eps}, eps0 = {eps0})");
                }
                match cmd {
                    Command::Modulus | Command::Jensen => need("weight", self.weight.is_some())?,
                    _ => need("map", self.map.is_some())?,
                }
            }
        }
        Ok(())
    }

    pub fn center(&self) -> ChartPoint {
        match &self.center {
            Some(c) => ChartPoint::new(c.clone()),
            None => ChartPoint::origin(self.metric.dim()),
        }
    }

    pub fn exponents(&self) -> ringmod_core::Result<ExponentSet> {
        ExponentSet::new(self.metric.dim(), self.p.unwrap_or(f64::NAN))
    }

    pub fn build_map(&self, source: &MetricField) -> ringmod_core::Result<MapModel> {
        let target = match &self.target_metric {
            Some(t) => t.build()?,
            None => source.clone(),
        };
        match self.map.as_ref().expect("validated") {
            MapSpec::Identity => {
                if &target == source {
                    Ok(MapModel::identity(source))
                } else {
                    let n = source.dim();
                    let eye: Vec<Vec<f64>> = (0..n)
                        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                        .collect();
                    MapModel::linear(&eye, source, &target)
                }
            }
            MapSpec::Linear { matrix } => MapModel::linear(matrix, source, &target),
            MapSpec::RadialStretch { k } => MapModel::radial_stretch(*k, source, &target),
            MapSpec::Symbolic { components } => MapModel::symbolic(components, source, &target),
        }
    }
}
