//! Numerical toolkit for p-moduli of geodesic sphere families on Riemannian
//! charts: the sharp lower bound for lower Q-homeomorphisms, the extremal
//! density, the weighted Jensen identity, dilatations of finitely bilipschitz
//! maps and boundary divergence checks. Every closed form is paired with an
//! independent convex-optimization oracle.

pub mod boundary;
pub mod check;
pub mod error;
pub mod expr;
pub mod manifold;
pub mod mappings;
pub mod modulus;
pub mod quadrature;

pub use error::{Error, Result};
pub use manifold::{
    build_normal_neighborhood, geodesic_distance, geodesic_shoot, sphere_area_element, ChartPoint,
    Domain, DomainBox, GeodesicRing, MetricField, NormalNeighborhood,
};
pub use quadrature::{AngularGrid, GridSpec, ShellGrid};
