//! Built-in acceptance suite. Every criterion is deterministic for a fixed
//! seed and reports the quantities it compared.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::{LN_2, PI};

use crate::boundary::{divergence_check, half_disk, log_growth_fit, LadderOptions, Verdict};
use crate::error::Result;
use crate::manifold::{build_normal_neighborhood, ChartPoint, Domain, GeodesicRing, MetricField};
use crate::mappings::{dilatation_at, verify_theorem2, MapModel};
use crate::modulus::{
    curve_modulus_brute_force, curve_modulus_flat_annulus, extremal_density, jensen_verify,
    lower_bound_integral, objective_value, ring_upper_bound, surface_family_modulus,
    BruteForceOptions, ExponentSet, RadialProfile, WeightField,
};
use crate::quadrature::{AngularNodes, GridSpec, ShellGrid};

pub const CRITERIA: u32 = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub title: String,
    pub passed: bool,
    pub metrics: Vec<Metric>,
    pub message: String,
}

struct Recorder {
    metrics: Vec<Metric>,
    failures: Vec<String>,
}

impl Recorder {
    fn new() -> Self {
        Recorder {
            metrics: Vec::new(),
            failures: Vec::new(),
        }
    }

    fn value(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.push(Metric {
            name: name.into(),
            value,
        });
    }

    fn require(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    /// Records `|got − want| / |want|` and requires it to be at most `tol`.
    fn close(&mut self, name: &str, got: f64, want: f64, tol: f64) {
        let rel = (got - want).abs() / want.abs();
        self.value(format!("{name}.value"), got);
        self.value(format!("{name}.rel_err"), rel);
        self.require(rel <= tol, format!("{name}: relative error {rel:e} > {tol:e}"));
    }

    fn finish(self, id: u32, title: &str) -> CriterionResult {
        CriterionResult {
            id,
            title: title.into(),
            passed: self.failures.is_empty(),
            metrics: self.metrics,
            message: if self.failures.is_empty() {
                "ok".into()
            } else {
                self.failures.join("; ")
            },
        }
    }
}

fn run(id: u32, title: &str, body: impl FnOnce(&mut Recorder) -> Result<()>) -> CriterionResult {
    let mut rec = Recorder::new();
    if let Err(e) = body(&mut rec) {
        rec.failures.push(format!("error[{}] {e}", e.code()));
    }
    rec.finish(id, title)
}

fn ring(metric: &MetricField, eps: f64, eps0: f64, domain: Domain) -> Result<GeodesicRing> {
    let nb = build_normal_neighborhood(metric, &ChartPoint::origin(metric.dim()), eps0)?;
    GeodesicRing::new(nb, eps, eps0, domain)
}

fn flat_annulus() -> Result<GeodesicRing> {
    ring(&MetricField::euclidean(2)?, 0.5, 1.0, Domain::Whole)
}

/// Grid used for the property suites; the 3-dimensional default is kept
/// coarse enough for desk-scale memory.
fn suite_grid(n: usize) -> GridSpec {
    if n == 2 {
        GridSpec::new(64, AngularNodes::Count(128))
    } else {
        GridSpec::new(32, AngularNodes::Product([16, 32]))
    }
}

fn radial_weight() -> WeightField {
    WeightField::radial("2 + r", |r| 2.0 + r)
}

/// Metric, ring and weight configurations shared by the density and
/// averaging checks.
fn configurations(metric: &dyn Fn(usize) -> Result<MetricField>, eps: f64, eps0: f64) -> Result<Vec<(String, ShellGrid, WeightField, ExponentSet)>> {
    let mut out = Vec::new();
    for n in [2usize, 3] {
        let m = metric(n)?;
        let grid = ShellGrid::build(&ring(&m, eps, eps0, Domain::Whole)?, &suite_grid(n))?;
        for p in [n as f64, n as f64 + 1.0] {
            for q in [WeightField::constant(1.0)?, radial_weight()] {
                let label = format!("n={n} p={p} Q={}", q.description());
                out.push((label, grid.clone(), q, ExponentSet::new(n, p)?));
            }
        }
    }
    Ok(out)
}

fn sphere_closed_form(eps: f64, eps0: f64) -> f64 {
    ((eps0 / 2.0).tan().ln() - (eps / 2.0).tan().ln()) / (2.0 * PI)
}

/// Surface modulus on an `n = 2, p = 2, Q ≡ 1` ring against a closed form.
fn sharpness(rec: &mut Recorder, r: &GeodesicRing, exact: f64, tol: f64, doubled_tol: Option<f64>) -> Result<()> {
    let exps = ExponentSet::new(2, 2.0)?;
    let one = WeightField::constant(1.0)?;
    let spec = GridSpec::default();
    let sm = surface_family_modulus(&ShellGrid::build(r, &spec)?, &one, &exps)?;
    rec.close("closed_form", sm.closed_form.value, exact, tol);
    rec.close("oracle", sm.convex_oracle.value, exact, tol);
    if let Some(t) = doubled_tol {
        let fine = surface_family_modulus(&ShellGrid::build(r, &spec.doubled(2))?, &one, &exps)?;
        rec.close("oracle_doubled", fine.convex_oracle.value, exact, t);
    }
    Ok(())
}

fn extremal(rec: &mut Recorder, configs: &[(String, ShellGrid, WeightField, ExponentSet)], tol: f64) -> Result<()> {
    for (label, grid, q, exps) in configs {
        let rho = extremal_density(grid, q, exps)?;
        let obj = objective_value(grid, q, exps, &rho)?;
        let i = lower_bound_integral(grid, q, exps)?;
        rec.close(&format!("{label} objective"), obj, i, tol);
    }
    Ok(())
}

fn jensen(rec: &mut Recorder, configs: &[(String, ShellGrid, WeightField, ExponentSet)], tol: f64, seed: u64) -> Result<()> {
    for (c, (label, grid, q, exps)) in configs.iter().enumerate() {
        let eta0 = RadialProfile::canonical(grid, q, exps)?.normalized_on(grid)?;
        let rep = jensen_verify(grid, q, exps, &eta0)?;
        rec.close(&format!("{label} canonical"), rep.rhs, rep.lhs, tol);
        let ring = grid.ring();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(c as u64));
        let mut violations = 0;
        let mut worst = f64::INFINITY;
        for _ in 0..100 {
            let knots = rng.gen_range(2..12);
            let eta = RadialProfile::random(&mut rng, ring.eps, ring.eps0, knots)?.normalized_on(grid)?;
            let rep = jensen_verify(grid, q, exps, &eta)?;
            if !rep.holds {
                violations += 1;
            }
            worst = worst.min((rep.rhs - rep.lhs) / rep.lhs);
        }
        rec.value(format!("{label} violations"), violations as f64);
        rec.value(format!("{label} min_rel_slack"), worst);
        rec.require(violations == 0, format!("{label}: {violations} random profiles violate the inequality"));
    }
    Ok(())
}

pub fn criterion_1() -> CriterionResult {
    run(1, "surface modulus sharpness on the flat annulus", |rec| {
        sharpness(rec, &flat_annulus()?, LN_2 / (2.0 * PI), 1e-3, Some(1e-4))
    })
}

pub fn criterion_2() -> CriterionResult {
    run(2, "extremal density attains the lower bound", |rec| {
        let configs = configurations(&MetricField::euclidean, 0.5, 1.0)?;
        extremal(rec, &configs, 1e-4)
    })
}

pub fn criterion_3(seed: u64) -> CriterionResult {
    run(3, "averaging inequality and its equality case", |rec| {
        let configs = configurations(&MetricField::euclidean, 0.5, 1.0)?;
        jensen(rec, &configs, 1e-4, seed)
    })
}

pub fn criterion_4() -> CriterionResult {
    run(4, "curve and surface modulus duality", |rec| {
        let exps = ExponentSet::new(2, 2.0)?;
        let r = flat_annulus()?;
        let grid = ShellGrid::build(&r, &GridSpec::default())?;
        let surface = surface_family_modulus(&grid, &WeightField::constant(1.0)?, &exps)?;
        let curve = curve_modulus_flat_annulus(&exps, 0.5, 1.0)?;
        rec.value("curve_modulus", curve);
        rec.value("surface_modulus", surface.convex_oracle.value);
        rec.close("product", curve * surface.convex_oracle.value, 1.0, 1e-3);
        let brute = curve_modulus_brute_force(&exps, 0.5, 1.0, &BruteForceOptions::default())?;
        rec.value("brute_force.lower", brute.lower);
        rec.value("brute_force.curves", brute.curves as f64);
        rec.close("brute_force", brute.value, 2.0 * PI / LN_2, 1e-2);
        Ok(())
    })
}

pub fn criterion_5(seed: u64) -> CriterionResult {
    run(5, "dilatation of catalog maps", |rec| {
        let m = MetricField::euclidean(2)?;
        let exps = ExponentSet::new(2, 2.0)?;
        let x = ChartPoint::new(vec![0.3, -0.7]);

        let s = dilatation_at(&MapModel::identity(&m), &x, &exps)?;
        let err = [s.l_upper, s.l_lower, s.jacobian, s.k_p]
            .iter()
            .map(|v| (v - 1.0).abs())
            .fold(0.0, f64::max);
        rec.value("identity.max_err", err);
        rec.require(err <= 1e-9, format!("identity deviates by {err:e}"));

        let diag = MapModel::linear(&[vec![2.0, 0.0], vec![0.0, 1.0]], &m, &m)?;
        let a = dilatation_at(&diag, &x, &exps)?.k_p;
        let fd = dilatation_at(&diag.finite_difference_only(), &x, &exps)?.k_p;
        rec.value("diag.analytic", a);
        rec.value("diag.finite_difference", fd);
        rec.require((a - 2.0).abs() <= 1e-9, format!("analytic K_2 = {a}"));
        rec.require((fd - 2.0).abs() <= 1e-6, format!("finite-difference K_2 = {fd}"));

        let stretch = MapModel::radial_stretch(2.0, &m, &m)?.finite_difference_only();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let r = rng.gen_range(0.5..1.0);
            let phi = rng.gen_range(0.0..2.0 * PI);
            let p = ChartPoint::new(vec![r * phi.cos(), r * phi.sin()]);
            worst = worst.max((dilatation_at(&stretch, &p, &exps)?.k_p - 2.0).abs());
        }
        rec.value("stretch.max_err", worst);
        rec.require(worst <= 1e-5, format!("radial stretch K_2 off by {worst:e}"));
        Ok(())
    })
}

pub fn criterion_6() -> CriterionResult {
    run(6, "lower Q-homeomorphism inequality with Q = K_p", |rec| {
        let m = MetricField::euclidean(2)?;
        let exps = ExponentSet::new(2, 2.0)?;
        let r = flat_annulus()?;
        let maps = [
            ("identity", MapModel::identity(&m)),
            ("diag", MapModel::linear(&[vec![2.0, 0.0], vec![0.0, 1.0]], &m, &m)?),
            ("stretch", MapModel::radial_stretch(2.0, &m, &m)?),
        ];
        for (name, f) in &maps {
            let rep = verify_theorem2(f, &r, &exps, &GridSpec::default())?;
            rec.value(format!("{name}.lhs"), rep.lhs);
            rec.value(format!("{name}.rhs"), rep.rhs);
            rec.require(rep.holds && rep.lhs >= rep.rhs - 1e-3, format!("{name}: lhs {} < rhs {}", rep.lhs, rep.rhs));
            if *name == "identity" {
                rec.close("identity.equality", rep.lhs, rep.rhs, 1e-3);
            }
        }
        Ok(())
    })
}

pub fn criterion_7(seed: u64) -> CriterionResult {
    run(7, "round-sphere metric near the center", |rec| {
        let (eps, eps0) = (0.1, 0.2);
        let sphere = |n: usize| MetricField::round_sphere(n, 1.0);
        let r = ring(&sphere(2)?, eps, eps0, Domain::Whole)?;
        sharpness(rec, &r, sphere_closed_form(eps, eps0), 1e-2, None)?;
        let configs = configurations(&sphere, eps, eps0)?;
        extremal(rec, &configs, 1e-2)?;
        jensen(rec, &configs, 1e-2, seed)?;
        let grid = ShellGrid::build(&r, &GridSpec::default())?;
        let bound = ring_upper_bound(&grid, &WeightField::constant(1.0)?, &ExponentSet::new(2, 2.0)?)?;
        rec.value("c_estimate", bound.c_estimate);
        rec.require(bound.c_estimate <= 1.05, format!("c_estimate = {}", bound.c_estimate));
        Ok(())
    })
}

pub fn criterion_8() -> CriterionResult {
    run(8, "boundary divergence checkers", |rec| {
        let delta = 0.5;
        let (nb, dom) = half_disk(delta)?;
        let opts = LadderOptions::default();
        let cases = [
            ("K=1", WeightField::constant(1.0)?, Verdict::Diverges),
            ("K=1/r", WeightField::radial("1/r", |r| 1.0 / r), Verdict::Converges),
            ("K=3ln(1/r)", WeightField::radial("3 ln(1/r)", |r| 3.0 * (1.0 / r).ln()), Verdict::Diverges),
        ];
        for (name, k, want) in &cases {
            let rep = divergence_check(k, &nb, &dom, delta, &opts)?;
            rec.value(format!("{name}.I_last"), *rep.partial_integrals.last().unwrap());
            rec.value(format!("{name}.growth_fit"), rep.growth_fit);
            rec.require(rep.verdict == *want, format!("{name}: verdict {} (expected {want})", rep.verdict));
            let fit = log_growth_fit(k, &nb, &dom, delta, &opts)?;
            rec.value(format!("{name}.is_o_log"), if fit.is_o_log { 1.0 } else { 0.0 });
            if fit.is_o_log {
                rec.require(rep.verdict == Verdict::Diverges, format!("{name}: logarithmic growth but verdict {}", rep.verdict));
            }
            if *name == "K=3ln(1/r)" {
                rec.value(format!("{name}.constant"), fit.constant);
                rec.require(fit.is_o_log, format!("{name}: log growth not detected"));
            }
        }
        Ok(())
    })
}

/// Criteria 1 through 8 in order.
pub fn run_all(seed: u64) -> Vec<CriterionResult> {
    vec![
        criterion_1(),
        criterion_2(),
        criterion_3(seed),
        criterion_4(),
        criterion_5(seed),
        criterion_6(),
        criterion_7(seed),
        criterion_8(),
    ]
}
