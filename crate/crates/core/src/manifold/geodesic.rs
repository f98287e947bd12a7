use crate::error::{invalid, Error, Result};
use crate::manifold::metric::{dot, ChartPoint, MetricField, MetricKind, MAX_DIM};
use crate::manifold::ode::{integrate, OdeOptions};

/// Integrates a bundle of geodesics from `start` with the given initial chart
/// velocities and records positions at each time in `stops`.
///
/// Returns `out[stop][ray]` as chart coordinates.
pub fn shoot_bundle(
    metric: &MetricField,
    start: &[f64],
    velocities: &[Vec<f64>],
    stops: &[f64],
) -> Result<Vec<Vec<Vec<f64>>>> {
    let n = metric.dim();
    let rays = velocities.len();
    let mut y = vec![0.0; 2 * n * rays];
    for (r, v) in velocities.iter().enumerate() {
        y[2 * n * r..2 * n * r + n].copy_from_slice(&start[..n]);
        y[2 * n * r + n..2 * n * (r + 1)].copy_from_slice(&v[..n]);
    }
    let mut out = Vec::with_capacity(stops.len());
    integrate(
        |_t, y, dy| {
            for r in 0..rays {
                let base = 2 * n * r;
                let (x, v) = (&y[base..base + n], &y[base + n..base + 2 * n]);
                dy[base..base + n].copy_from_slice(v);
                let mut acc = [0.0; MAX_DIM];
                metric.geodesic_accel(x, v, &mut acc);
                dy[base + n..base + 2 * n].copy_from_slice(&acc[..n]);
            }
        },
        &mut y,
        0.0,
        stops,
        &OdeOptions::default(),
        |_, y| {
            out.push(
                (0..rays)
                    .map(|r| y[2 * n * r..2 * n * r + n].to_vec())
                    .collect(),
            );
            Ok(())
        },
        |y| {
            for r in 0..rays {
                let x = &y[2 * n * r..2 * n * r + n];
                if !metric.contains(x) {
                    return Err(Error::TrajectoryLeftChart { point: x.to_vec() });
                }
            }
            Ok(())
        },
    )?;
    Ok(out)
}

/// Endpoint of the arclength-parametrized geodesic leaving `start` in the
/// direction of `velocity` (rescaled to unit g-norm) after `length`.
pub fn geodesic_shoot(
    metric: &MetricField,
    start: &ChartPoint,
    velocity: &[f64],
    length: f64,
) -> Result<ChartPoint> {
    let n = metric.dim();
    if start.dim() != n || velocity.len() != n {
        return Err(invalid("dimension mismatch"));
    }
    if !(length >= 0.0 && length.is_finite()) {
        return Err(invalid("geodesic length must be finite and nonnegative"));
    }
    if !metric.contains(start) {
        return Err(Error::TrajectoryLeftChart { point: start.0.clone() });
    }
    let speed = metric.norm(start, velocity);
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(invalid("initial velocity must be nonzero"));
    }
    let unit: Vec<f64> = velocity.iter().map(|v| v / speed).collect();
    if metric.is_euclidean() {
        let end: Vec<f64> = (0..n).map(|i| start[i] + length * unit[i]).collect();
        if !metric.contains(&end) {
            return Err(Error::TrajectoryLeftChart { point: end });
        }
        return Ok(ChartPoint(end));
    }
    let out = shoot_bundle(metric, start, &[unit], &[length])?;
    Ok(ChartPoint(out[0][0].clone()))
}

/// Initial velocity `v` at `a` with `exp_a(v) = b`, by Newton iteration on
/// shooting. The Jacobian comes from a bundle of perturbed rays.
pub fn log_map(metric: &MetricField, a: &ChartPoint, b: &ChartPoint) -> Result<Vec<f64>> {
    let n = metric.dim();
    let mut v: Vec<f64> = (0..n).map(|i| b[i] - a[i]).collect();
    let scale = 1.0 + b.iter().map(|x| x.abs()).fold(0.0, f64::max);
    for _ in 0..50 {
        let vnorm = v.iter().map(|x| x.abs()).fold(0.0, f64::max);
        if vnorm == 0.0 {
            return Ok(v);
        }
        let h = 1e-5 * vnorm;
        let mut bundle = vec![v.clone()];
        for k in 0..n {
            let mut vp = v.clone();
            let mut vm = v.clone();
            vp[k] += h;
            vm[k] -= h;
            bundle.push(vp);
            bundle.push(vm);
        }
        let out = shoot_bundle(metric, a, &bundle, &[1.0])
            .map_err(|e| Error::OutsideNormalRange(e.to_string()))?;
        let rays = &out[0];
        let resid: Vec<f64> = (0..n).map(|i| rays[0][i] - b[i]).collect();
        let rmax = resid.iter().map(|x| x.abs()).fold(0.0, f64::max);
        if rmax < 1e-12 * scale {
            return Ok(v);
        }
        let jac = nalgebra::DMatrix::from_fn(n, n, |i, k| {
            (rays[1 + 2 * k][i] - rays[2 + 2 * k][i]) / (2.0 * h)
        });
        let rhs = nalgebra::DVector::from_iterator(n, resid.iter().map(|x| -x));
        let step = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::OutsideNormalRange("singular exponential map".into()))?;
        let smax = step.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let damp = if smax > vnorm { vnorm / smax } else { 1.0 };
        for i in 0..n {
            v[i] += damp * step[i];
        }
    }
    Err(Error::OutsideNormalRange(
        "Newton iteration on the exponential map did not converge".into(),
    ))
}

/// Geodesic distance between two chart points. Closed forms for the
/// catalog, log-map shooting otherwise.
pub fn geodesic_distance(metric: &MetricField, a: &ChartPoint, b: &ChartPoint) -> Result<f64> {
    let n = metric.dim();
    if a.dim() != n || b.dim() != n {
        return Err(invalid("dimension mismatch"));
    }
    let diff2: f64 = (0..n).map(|i| (a[i] - b[i]).powi(2)).sum();
    match metric.kind() {
        MetricKind::Euclidean => Ok(diff2.sqrt()),
        MetricKind::ConformalFlat(crate::manifold::metric::ConformalFactor::Constant(c)) => {
            Ok(c.sqrt() * diff2.sqrt())
        }
        MetricKind::PoincareBall => {
            let wa = 1.0 - dot(n, a, a);
            let wb = 1.0 - dot(n, b, b);
            Ok((1.0 + 2.0 * diff2 / (wa * wb)).acosh())
        }
        MetricKind::RoundSphere { radius } => {
            let ea = sphere_embed(a, *radius);
            let eb = sphere_embed(b, *radius);
            // atan2 form keeps accuracy for nearby points
            let mut cross2 = 0.0;
            let mut dotp = 0.0;
            for i in 0..=n {
                dotp += ea[i] * eb[i];
                for j in (i + 1)..=n {
                    let c = ea[i] * eb[j] - ea[j] * eb[i];
                    cross2 += c * c;
                }
            }
            Ok(radius * cross2.sqrt().atan2(dotp))
        }
        _ => {
            if diff2 == 0.0 {
                return Ok(0.0);
            }
            // Canonical orientation makes the result exactly symmetric.
            let (p, q) = if a.0.partial_cmp(&b.0) == Some(std::cmp::Ordering::Greater) {
                (b, a)
            } else {
                (a, b)
            };
            let v = log_map(metric, p, q)?;
            Ok(metric.norm(p, &v))
        }
    }
}

/// Unit-sphere embedding of a round-sphere chart point: `x` are normal
/// coordinates at the pole (scaled by the radius).
pub fn sphere_embed(x: &[f64], radius: f64) -> Vec<f64> {
    let n = x.len();
    let rho = dot(n, x, x).sqrt();
    let t = rho / radius;
    let mut e = vec![t.cos()];
    let sinc = if t < 1e-8 { 1.0 - t * t / 6.0 } else { t.sin() / t };
    e.extend(x.iter().map(|xi| sinc * xi / radius));
    e
}

/// Inverse of [`sphere_embed`].
pub fn sphere_unembed(e: &[f64], radius: f64) -> Vec<f64> {
    let tail: f64 = e[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
    let t = tail.atan2(e[0]);
    let factor = if tail < 1e-300 { 1.0 } else { t / tail };
    e[1..].iter().map(|v| radius * factor * v).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::metric::DomainBox;

    #[test]
    fn euclidean_shoot_and_distance() {
        let m = MetricField::euclidean(2).unwrap();
        let end = geodesic_shoot(&m, &ChartPoint::new([0.0, 0.0]), &[1.0, 0.0], 1.0).unwrap();
        assert_eq!(end.0, vec![1.0, 0.0]);
        let d = geodesic_distance(&m, &ChartPoint::new([0.0, 0.0]), &ChartPoint::new([3.0, 4.0]))
            .unwrap();
        assert_eq!(d, 5.0);
    }

    #[test]
    fn constant_conformal_distance_scales() {
        let m = MetricField::conformal_constant(2, 4.0).unwrap();
        let d = geodesic_distance(&m, &ChartPoint::new([0.0, 0.0]), &ChartPoint::new([1.0, 0.0]))
            .unwrap();
        assert!((d - 2.0).abs() < 1e-15);
    }

    #[test]
    fn poincare_radial_geodesic() {
        let m = MetricField::poincare_ball(2).unwrap();
        for len in [0.1, 0.5, 1.0, 1.5] {
            let end = geodesic_shoot(&m, &ChartPoint::new([0.0, 0.0]), &[1.0, 0.0], len).unwrap();
            assert!((end[0] - (len / 2.0).tanh()).abs() < 1e-9, "{len}: {:?}", end);
            assert!(end[1].abs() < 1e-12);
        }
        let d = geodesic_distance(&m, &ChartPoint::new([0.0, 0.0]), &ChartPoint::new([0.5, 0.0]))
            .unwrap();
        assert!((d - 2.0 * 0.5f64.atanh()).abs() < 1e-14);
    }

    #[test]
    fn sphere_shoot_matches_great_circle() {
        let m = MetricField::round_sphere(2, 1.0).unwrap();
        let start = ChartPoint::new([0.05, 0.02]);
        let dir = [1.0, 0.3];
        let len = std::f64::consts::FRAC_PI_2;
        let end = geodesic_shoot(&m, &start, &dir, len).unwrap();

        // closed form: X(t) = cos t X0 + sin t V with V the unit tangent
        let x0 = sphere_embed(&start, 1.0);
        let h = 1e-7;
        let xp: Vec<f64> = start.iter().zip(dir).map(|(s, d)| s + h * d).collect();
        let xm: Vec<f64> = start.iter().zip(dir).map(|(s, d)| s - h * d).collect();
        let (ep, em) = (sphere_embed(&xp, 1.0), sphere_embed(&xm, 1.0));
        let mut tang: Vec<f64> = ep.iter().zip(&em).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        let tn = tang.iter().map(|v| v * v).sum::<f64>().sqrt();
        tang.iter_mut().for_each(|v| *v /= tn);
        let exact: Vec<f64> = x0
            .iter()
            .zip(&tang)
            .map(|(a, v)| len.cos() * a + len.sin() * v)
            .collect();
        let exact = sphere_unembed(&exact, 1.0);
        for i in 0..2 {
            assert!((end[i] - exact[i]).abs() < 1e-7, "{:?} vs {:?}", end, exact);
        }
    }

    #[test]
    fn shooting_distance_for_nonconstant_conformal() {
        let m = MetricField::conformal_flat(2, "1 + x1^2 + x2^2", DomainBox::cube(2, 2.0)).unwrap();
        let a = ChartPoint::new([0.1, -0.05]);
        let dir = [0.6, 0.8];
        for len in [0.05, 0.2, 0.3] {
            let b = geodesic_shoot(&m, &a, &dir, len).unwrap();
            let d = geodesic_distance(&m, &a, &b).unwrap();
            assert!((d - len).abs() < 1e-6 * len, "{d} vs {len}");
            let d2 = geodesic_distance(&m, &b, &a).unwrap();
            assert_eq!(d, d2);
        }
    }

    #[test]
    fn leaving_the_chart_is_an_error() {
        let m = MetricField::poincare_ball(2).unwrap();
        let r = geodesic_shoot(&m, &ChartPoint::new([0.0, 0.0]), &[1.0, 0.0], 50.0);
        assert!(matches!(r, Err(Error::TrajectoryLeftChart { .. })));
    }

    #[test]
    fn embed_roundtrip() {
        let x = [0.3, -0.7, 1.1];
        let back = sphere_unembed(&sphere_embed(&x, 2.0), 2.0);
        for i in 0..3 {
            assert!((x[i] - back[i]).abs() < 1e-14);
        }
    }
}
