use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::manifold::{ChartPoint, Mat3, MetricField, MAX_DIM};
use crate::mappings::MapModel;
use crate::modulus::ExponentSet;

/// Base step of the central differences (chart units).
const FD_STEP: f64 = 1e-5;

/// Largest tolerated relative change between the `h` and `h/2` estimates.
const FD_VARIATION: f64 = 0.1;

/// `(L, l, J, K_p)` of a map at a point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DilatationSample {
    pub point: Vec<f64>,
    /// `L(P, f)`, largest metric stretch
    pub l_upper: f64,
    /// `l(P, f)`, smallest metric stretch
    pub l_lower: f64,
    /// `J(P, f)`
    pub jacobian: f64,
    /// `K_p(P, f)`; `+∞` when `J = 0 < L`
    pub k_p: f64,
}

impl DilatationSample {
    pub fn finitely_bilipschitz(&self) -> bool {
        0.0 < self.l_lower && self.l_lower <= self.l_upper && self.l_upper.is_finite()
    }
}

/// `L^p / J` if `J ≠ 0`, `1` if `L = 0`, `+∞` otherwise.
pub fn outer_dilatation(l_upper: f64, jacobian: f64, p: f64) -> f64 {
    if jacobian != 0.0 {
        l_upper.powf(p) / jacobian
    } else if l_upper == 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

fn central_difference(map: &MapModel, x: &[f64], h: f64) -> Result<Mat3> {
    let n = map.dim();
    let mut d = [[0.0; MAX_DIM]; MAX_DIM];
    let mut xp = x[..n].to_vec();
    let mut xm = x[..n].to_vec();
    for k in 0..n {
        xp[k] = x[k] + h;
        xm[k] = x[k] - h;
        let (fp, fm) = (map.forward(&xp), map.forward(&xm));
        if fp.len() != n || fm.len() != n {
            return Err(invalid("map returned a point of the wrong dimension"));
        }
        for i in 0..n {
            d[i][k] = (fp[i] - fm[i]) / (2.0 * h);
        }
        xp[k] = x[k];
        xm[k] = x[k];
    }
    Ok(d)
}

/// `Df(x)`: analytic when available, otherwise Richardson-extrapolated
/// central differences with steps `h` and `h/2`.
pub fn jacobian_at(map: &MapModel, x: &[f64]) -> Result<Mat3> {
    if let Some(d) = map.analytic_jacobian(x) {
        return d;
    }
    let n = map.dim();
    let d1 = central_difference(map, x, FD_STEP)?;
    let d2 = central_difference(map, x, FD_STEP / 2.0)?;
    let mut out = [[0.0; MAX_DIM]; MAX_DIM];
    let (mut diff, mut scale) = (0.0f64, 0.0f64);
    for i in 0..n {
        for j in 0..n {
            out[i][j] = (4.0 * d2[i][j] - d1[i][j]) / 3.0;
            diff = diff.max((d1[i][j] - d2[i][j]).abs());
            scale = scale.max(d2[i][j].abs());
        }
    }
    // Derivatives below 1e-3 are compared on an absolute scale.
    if !out.iter().flatten().all(|v| v.is_finite()) || diff > FD_VARIATION * scale.max(1e-3) {
        return Err(Error::NotDifferentiable { point: x[..n].to_vec() });
    }
    Ok(out)
}

fn to_matrix(n: usize, m: &Mat3) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| m[i][j])
}

/// `(G^{1/2}, det G)` of a symmetric positive definite metric matrix.
fn sqrt_and_det(metric: &MetricField, x: &[f64]) -> Result<(DMatrix<f64>, f64)> {
    let n = metric.dim();
    let g = to_matrix(n, &metric.tensor(x));
    let eig = SymmetricEigen::new(g);
    if eig.eigenvalues.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::NonPositiveDefinite { point: x[..n].to_vec() });
    }
    let det = eig.eigenvalues.iter().product();
    let root = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt))
        * eig.eigenvectors.transpose();
    Ok((root, det))
}

/// Dilatations from a known differential: singular values of
/// `G_*^{1/2}(f(P)) Df(P) G^{-1/2}(P)` and `J = |det Df| √det G_* / √det G`.
pub(crate) fn sample_from_differential(
    map: &MapModel,
    x: &[f64],
    fx: &[f64],
    df: &Mat3,
    exps: &ExponentSet,
) -> Result<DilatationSample> {
    let n = map.dim();
    let (gs, det_s) = sqrt_and_det(map.source(), x)?;
    let (gt, det_t) = sqrt_and_det(map.target(), fx)?;
    let gs_inv = gs
        .try_inverse()
        .ok_or_else(|| Error::NonPositiveDefinite { point: x[..n].to_vec() })?;
    let d = to_matrix(n, df);
    let m = &gt * &d * gs_inv;
    let sv = m.singular_values();
    let l_upper = sv.iter().cloned().fold(0.0, f64::max);
    let l_lower = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let jacobian = d.determinant().abs() * (det_t / det_s).sqrt();
    Ok(DilatationSample {
        point: x[..n].to_vec(),
        l_upper,
        l_lower,
        jacobian,
        k_p: outer_dilatation(l_upper, jacobian, exps.p),
    })
}

pub fn dilatation_at(map: &MapModel, point: &ChartPoint, exps: &ExponentSet) -> Result<DilatationSample> {
    let n = map.dim();
    if point.dim() != n || exps.n != n {
        return Err(invalid("dimension mismatch"));
    }
    if !map.source().contains(point) {
        return Err(Error::TrajectoryLeftChart { point: point.0.clone() });
    }
    let fx = map.forward(point);
    if fx.len() != n || !map.target().contains(&fx) {
        return Err(Error::ImageLeftChart { point: fx });
    }
    let df = jacobian_at(map, point)?;
    sample_from_differential(map, point, &fx, &df, exps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::DomainBox;
    use proptest::prelude::*;

    fn flat() -> MetricField {
        MetricField::euclidean(2).unwrap()
    }

    fn e2() -> ExponentSet {
        ExponentSet::new(2, 2.0).unwrap()
    }

    #[test]
    fn identity_is_isometric() {
        for m in [
            flat(),
            MetricField::poincare_ball(2).unwrap(),
            MetricField::conformal_flat(2, "1 + x1^2", DomainBox::cube(2, 2.0)).unwrap(),
        ] {
            let s = dilatation_at(&MapModel::identity(&m), &ChartPoint::new([0.3, -0.2]), &e2()).unwrap();
            for v in [s.l_upper, s.l_lower, s.jacobian, s.k_p] {
                assert!((v - 1.0).abs() < 1e-12, "{s:?}");
            }
        }
    }

    #[test]
    fn diagonal_linear_map() {
        let a = MapModel::linear(&[vec![2.0, 0.0], vec![0.0, 1.0]], &flat(), &flat()).unwrap();
        let s = dilatation_at(&a, &ChartPoint::new([0.4, 0.1]), &e2()).unwrap();
        assert!((s.l_upper - 2.0).abs() < 1e-12);
        assert!((s.l_lower - 1.0).abs() < 1e-12);
        assert!((s.jacobian - 2.0).abs() < 1e-12);
        assert!((s.k_p - 2.0).abs() < 1e-12);
        let fd = dilatation_at(&a.finite_difference_only(), &ChartPoint::new([0.4, 0.1]), &e2()).unwrap();
        assert!((fd.k_p - 2.0).abs() < 1e-9);
    }

    #[test]
    fn radial_stretch_closed_form() {
        let f = MapModel::radial_stretch(2.0, &flat(), &flat()).unwrap();
        let r: f64 = 0.7;
        let phi: f64 = 1.1;
        let s = dilatation_at(&f, &ChartPoint::new([r * phi.cos(), r * phi.sin()]), &e2()).unwrap();
        assert!((s.l_upper - 2.0 * r).abs() < 1e-12);
        assert!((s.l_lower - r).abs() < 1e-12);
        assert!((s.jacobian - 2.0 * r * r).abs() < 1e-12);
        assert!((s.k_p - 2.0).abs() < 1e-12);
        let at0 = dilatation_at(&f, &ChartPoint::origin(2), &e2()).unwrap();
        assert_eq!((at0.l_upper, at0.jacobian, at0.k_p), (0.0, 0.0, 1.0));
        assert!(!at0.finitely_bilipschitz());
    }

    #[test]
    fn outer_dilatation_branches() {
        assert_eq!(outer_dilatation(0.0, 0.0, 2.0), 1.0);
        assert_eq!(outer_dilatation(1.5, 0.0, 2.0), f64::INFINITY);
        assert_eq!(outer_dilatation(2.0, 2.0, 2.0), 2.0);
    }

    #[test]
    fn kinks_are_not_differentiable() {
        let f = MapModel::symbolic(&["sqrt(abs(x1) + x1)", "x2"], &flat(), &flat()).unwrap();
        let r = dilatation_at(&f.finite_difference_only(), &ChartPoint::new([0.0, 0.3]), &e2());
        assert!(matches!(r, Err(Error::NotDifferentiable { .. })), "{r:?}");
    }

    #[test]
    fn image_outside_target_chart() {
        let ball = MetricField::poincare_ball(2).unwrap();
        let f = MapModel::linear(&[vec![3.0, 0.0], vec![0.0, 3.0]], &ball, &ball).unwrap();
        let r = dilatation_at(&f, &ChartPoint::new([0.5, 0.0]), &e2());
        assert!(matches!(r, Err(Error::ImageLeftChart { .. })));
    }

    #[test]
    fn curved_metrics_scale_the_stretch() {
        // identity chart map from flat to the constant conformal metric 4δ
        let target = MetricField::conformal_constant(2, 4.0).unwrap();
        let f = MapModel::custom("id", |x| x.to_vec(), &flat(), &target).unwrap();
        let s = dilatation_at(&f, &ChartPoint::new([0.1, 0.2]), &e2()).unwrap();
        assert!((s.l_upper - 2.0).abs() < 1e-9 && (s.l_lower - 2.0).abs() < 1e-9);
        assert!((s.jacobian - 4.0).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn finite_differences_agree_with_analytic(x in -0.9f64..0.9, y in -0.9f64..0.9, k in 0.5f64..3.0) {
            prop_assume!(x * x + y * y > 1e-2);
            let maps = [
                MapModel::radial_stretch(k, &flat(), &flat()).unwrap(),
                MapModel::symbolic(&["x1 + 0.3 * sin(x2)", "x2 + 0.2 * x1^2"], &flat(), &flat()).unwrap(),
            ];
            let p = ChartPoint::new([x, y]);
            for f in &maps {
                let a = dilatation_at(f, &p, &e2()).unwrap();
                let b = dilatation_at(&f.finite_difference_only(), &p, &e2()).unwrap();
                prop_assert!((a.k_p - b.k_p).abs() < 1e-6 * a.k_p);
                prop_assert!((a.l_upper - b.l_upper).abs() < 1e-6 * a.l_upper);
                prop_assert!((a.l_lower - b.l_lower).abs() < 1e-6 * a.l_lower);
                prop_assert!((a.jacobian - b.jacobian).abs() < 1e-6 * a.jacobian);
            }
        }

        #[test]
        fn rotating_the_source_chart_keeps_k_p(x in -0.8f64..0.8, y in -0.8f64..0.8, theta in 0.0f64..6.28) {
            prop_assume!(x * x + y * y > 1e-2);
            let f = MapModel::symbolic(&["x1 + 0.3 * sin(x2)", "x2 + 0.2 * x1^2"], &flat(), &flat()).unwrap();
            let (c, s) = (theta.cos(), theta.sin());
            let g = f.clone();
            // f̃(y) = f(Rᵀ y) in the rotated chart
            let rotated = MapModel::custom(
                "rotated",
                move |v| g.forward(&[c * v[0] + s * v[1], -s * v[0] + c * v[1]]),
                &flat(),
                &flat(),
            ).unwrap();
            let p = ChartPoint::new([x, y]);
            let rp = ChartPoint::new([c * x - s * y, s * x + c * y]);
            let a = dilatation_at(&f, &p, &e2()).unwrap();
            let b = dilatation_at(&rotated, &rp, &e2()).unwrap();
            prop_assert!((a.k_p - b.k_p).abs() < 1e-6 * a.k_p);
        }
    }
}
