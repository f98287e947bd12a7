//! Riemannian metrics on a single chart, geodesics and normal neighborhoods.

mod geodesic;
mod metric;
mod normal;
pub mod ode;

pub use geodesic::{geodesic_distance, geodesic_shoot, log_map, shoot_bundle, sphere_embed, sphere_unembed};
pub use metric::{
    ChartPoint, Christoffel, ConformalFactor, DomainBox, Mat3, MetricDerivative, MetricField,
    MetricKind, MAX_DIM,
};
pub(crate) use normal::gram_area;
pub use normal::{
    build_normal_neighborhood, sphere_area_element, sphere_tangent_basis, Domain, GeodesicRing,
    NormalNeighborhood, SphereFrame,
};
