use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ringmod_core::boundary::{divergence_check, log_growth_fit, LadderOptions};
use ringmod_core::check::CriterionResult;
use ringmod_core::manifold::build_normal_neighborhood;
use ringmod_core::mappings::{classify_map, dilatation_at, verify_theorem2, ClassifyOptions, MapModel};
use ringmod_core::modulus::{
    extremal_density, jensen_verify, objective_value, ring_upper_bound, shell_table,
    surface_family_modulus, ExponentSet, RadialProfile, ShellRow, WeightField,
};
use ringmod_core::{ChartPoint, GeodesicRing, ShellGrid};

use crate::config::{Command, RunConfig};
use crate::output::{flag, num, Outputs, Profile, Summary, Table};

fn shells_table(rows: &[ShellRow]) -> Table {
    let mut t = Table::new(
        "shells.csv",
        &["r", "area", "qnorm_s", "per_shell_infimum_closed", "per_shell_infimum_oracle"],
    );
    for s in rows {
        t.push(vec![num(s.r), num(s.area), num(s.qnorm), num(s.infimum_closed), num(s.infimum_oracle)]);
    }
    t
}

fn header(cfg: &RunConfig, threads: usize) -> anyhow::Result<Summary> {
    let mut s = Summary::default();
    s.text("command", serde_json::to_value(cfg.command)?.as_str().unwrap_or_default());
    s.text("config", serde_json::to_string(cfg)?);
    s.text("seed", cfg.seed.to_string());
    s.text("threads", threads.to_string());
    s.text("version", env!("CARGO_PKG_VERSION"));
    Ok(s)
}

fn ring(cfg: &RunConfig) -> anyhow::Result<GeodesicRing> {
    let m = cfg.metric.build()?;
    let (eps, eps0) = (cfg.eps.unwrap(), cfg.eps0.unwrap());
    let nb = build_normal_neighborhood(&m, &cfg.center(), eps0)?;
    Ok(GeodesicRing::new(nb, eps, eps0, cfg.domain.clone())?)
}

/// `K_p` of `map` as a weight; undefined points evaluate to NaN.
fn k_p_weight(map: &MapModel, exps: ExponentSet) -> WeightField {
    let map = map.clone();
    WeightField::field("K_p", move |x, _| {
        dilatation_at(&map, &ChartPoint::new(x.to_vec()), &exps)
            .map(|s| s.k_p)
            .unwrap_or(f64::NAN)
    })
}

/// Executes one configured computation.
pub fn run(cfg: &RunConfig, threads: usize) -> anyhow::Result<Outputs> {
    let mut out = Outputs {
        summary: header(cfg, threads)?,
        ..Default::default()
    };
    match cfg.command {
        Command::Modulus => modulus(cfg, &mut out)?,
        Command::Jensen => jensen(cfg, &mut out)?,
        Command::Dilatation => dilatation(cfg, &mut out)?,
        Command::Theorem2 => theorem2(cfg, &mut out)?,
        Command::Boundary => boundary(cfg, &mut out)?,
    }
    Ok(out)
}

fn modulus(cfg: &RunConfig, out: &mut Outputs) -> anyhow::Result<()> {
    let exps = cfg.exponents()?;
    let q = cfg.weight.as_ref().unwrap().build()?;
    let grid = ShellGrid::build(&ring(cfg)?, &cfg.grid.spec())?;
    let sm = surface_family_modulus(&grid, &q, &exps)?;
    let rho = extremal_density(&grid, &q, &exps)?;
    let objective = objective_value(&grid, &q, &exps, &rho)?;
    let bound = ring_upper_bound(&grid, &q, &exps)?;
    let s = &mut out.summary;
    s.text("resolution", grid.description());
    s.value("I", sm.closed_form.value);
    s.value("oracle_modulus", sm.convex_oracle.value);
    s.value("gap", sm.convex_oracle.gap.unwrap_or(f64::NAN));
    s.value("extremal_objective", objective);
    s.value("c_estimate", bound.c_estimate);
    s.value("upper_bound", bound.bound);
    let mut p = Profile::new("r", "1/qnorm_s");
    p.points = sm.shells.iter().map(|r| (r.r, r.infimum_closed)).collect();
    out.profile = Some(p);
    out.tables.push(shells_table(&sm.shells));
    Ok(())
}

fn jensen(cfg: &RunConfig, out: &mut Outputs) -> anyhow::Result<()> {
    let exps = cfg.exponents()?;
    let q = cfg.weight.as_ref().unwrap().build()?;
    let r = ring(cfg)?;
    let grid = ShellGrid::build(&r, &cfg.grid.spec())?;
    let eta0 = RadialProfile::canonical(&grid, &q, &exps)?.normalized_on(&grid)?;
    let canon = jensen_verify(&grid, &q, &exps, &eta0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut violations = 0usize;
    let mut slack = f64::INFINITY;
    for _ in 0..cfg.samples {
        let knots = rng.gen_range(2..=cfg.knots.max(2));
        let eta = RadialProfile::random(&mut rng, r.eps, r.eps0, knots)?.normalized_on(&grid)?;
        let rep = jensen_verify(&grid, &q, &exps, &eta)?;
        if !rep.holds {
            violations += 1;
        }
        slack = slack.min((rep.rhs - rep.lhs) / rep.lhs);
    }
    let rows = shell_table(&grid, &q, &exps)?;
    let s = &mut out.summary;
    s.text("resolution", grid.description());
    s.value("lhs", canon.lhs);
    s.value("rhs_canonical", canon.rhs);
    s.value("canonical_rel_gap", (canon.rhs - canon.lhs).abs() / canon.lhs);
    s.text("samples", cfg.samples.to_string());
    s.text("violations", violations.to_string());
    s.value("min_rel_slack", slack);
    s.text("holds", flag(violations == 0));
    let mut p = Profile::new("r", "eta0");
    p.points = grid.radii().iter().map(|t| (*t, eta0.eval(*t))).collect();
    out.profile = Some(p);
    out.tables.push(shells_table(&rows));
    Ok(())
}

fn dilatation(cfg: &RunConfig, out: &mut Outputs) -> anyhow::Result<()> {
    let exps = cfg.exponents()?;
    let r = ring(cfg)?;
    let map = cfg.build_map(r.metric())?;
    let grid = ShellGrid::build(&r, &cfg.grid.spec())?;
    let n = grid.dim();
    let mut cols = vec!["r".to_string()];
    cols.extend((1..=n).map(|i| format!("x{i}")));
    cols.extend(["l_upper", "l_lower", "jacobian", "k_p"].map(String::from));
    let mut points = Table {
        name: "points.csv".into(),
        header: cols,
        rows: Vec::new(),
    };
    let mut profile = Profile::new("r", "max_k_p");
    let (mut lo, mut hi, mut sum, mut count) = (f64::INFINITY, 0.0f64, 0.0, 0usize);
    for k in 0..grid.shells() {
        let mut shell_max = 0.0f64;
        for j in 0..grid.directions() {
            if !grid.in_domain(k, j) {
                continue;
            }
            let x = ChartPoint::new(grid.point(k, j).to_vec());
            let d = dilatation_at(&map, &x, &exps)?;
            let mut row = vec![num(grid.radius(k))];
            row.extend(x.0.iter().map(|v| num(*v)));
            row.extend([d.l_upper, d.l_lower, d.jacobian, d.k_p].map(num));
            points.rows.push(row);
            lo = lo.min(d.k_p);
            hi = hi.max(d.k_p);
            sum += d.k_p;
            count += 1;
            shell_max = shell_max.max(d.k_p);
        }
        profile.points.push((grid.radius(k), shell_max));
    }
    let class = classify_map(
        &map,
        &r,
        &exps,
        &ClassifyOptions {
            seed: cfg.seed,
            ..Default::default()
        },
    )?;
    let rows = shell_table(&grid, &k_p_weight(&map, exps), &exps)?;
    let s = &mut out.summary;
    s.text("resolution", grid.description());
    s.text("map", map.description());
    s.value("k_p_min", lo);
    s.value("k_p_max", hi);
    s.value("k_p_mean", sum / count as f64);
    s.text("lipschitz", flag(class.lipschitz));
    s.value("lip", class.lip);
    s.text("bilipschitz", flag(class.bilipschitz));
    s.value("lower_lip", class.lower_lip);
    s.text("finitely_bilipschitz", flag(class.finitely_bilipschitz));
    s.text("failures", class.failures.len().to_string());
    out.tables.push(shells_table(&rows));
    out.tables.push(points);
    out.profile = Some(profile);
    Ok(())
}

fn theorem2(cfg: &RunConfig, out: &mut Outputs) -> anyhow::Result<()> {
    let exps = cfg.exponents()?;
    let r = ring(cfg)?;
    let map = cfg.build_map(r.metric())?;
    let spec = cfg.grid.spec();
    let rep = verify_theorem2(&map, &r, &exps, &spec)?;
    let grid = ShellGrid::build(&r, &spec)?;
    let rows = shell_table(&grid, &k_p_weight(&map, exps), &exps)?;
    let s = &mut out.summary;
    s.text("resolution", grid.description());
    s.text("map", map.description());
    s.value("lhs", rep.lhs);
    s.value("lhs_closed", rep.lhs_closed);
    s.value("rhs", rep.rhs);
    s.value("gap", rep.gap);
    s.text("holds", flag(rep.holds));
    s.text("infinite_cells", rep.infinite_cells.to_string());
    s.value("k_p_min", rep.k_p_min);
    s.value("k_p_max", rep.k_p_max);
    let mut p = Profile::new("r", "k_p_norm_s");
    p.points = rows.iter().map(|row| (row.r, row.qnorm)).collect();
    out.profile = Some(p);
    out.tables.push(shells_table(&rows));
    Ok(())
}

fn boundary(cfg: &RunConfig, out: &mut Outputs) -> anyhow::Result<()> {
    let m = cfg.metric.build()?;
    let delta = cfg.delta.unwrap();
    let nb = build_normal_neighborhood(&m, &cfg.center(), 1.01 * delta)?;
    let k = cfg.weight.as_ref().unwrap().build()?;
    let opts = LadderOptions {
        levels: cfg.levels,
        angular: cfg.grid.angular_nodes,
        ..Default::default()
    };
    let rep = divergence_check(&k, &nb, &cfg.domain, delta, &opts)?;
    let mut ladder = Table::new("ladder.csv", &["t", "k_norm", "partial_integral"]);
    for j in 0..rep.cutoffs.len() {
        ladder.push(vec![num(rep.cutoffs[j]), num(rep.norms[j]), num(rep.partial_integrals[j])]);
    }
    let s = &mut out.summary;
    s.text("verdict", rep.verdict.to_string());
    s.value("delta", delta);
    s.value("partial_integral_last", *rep.partial_integrals.last().unwrap());
    s.value("growth_fit", rep.growth_fit);
    s.value("log_slope", rep.log_slope);
    s.value("tail_estimate", rep.tail_estimate);
    if delta < 1.0 {
        let fit = log_growth_fit(&k, &nb, &cfg.domain, delta, &opts)?;
        s.text("is_o_log", flag(fit.is_o_log));
        s.value("log_constant", fit.constant);
        s.value("log_sup_ratio", fit.sup_ratio);
    }
    let mut p = Profile::new("t", "partial_integral");
    p.points = rep.cutoffs.iter().cloned().zip(rep.partial_integrals.iter().cloned()).collect();
    out.profile = Some(p);
    out.tables.push(ladder);
    Ok(())
}

/// Files for the built-in acceptance suite.
pub fn check_outputs(results: &[CriterionResult], seed: u64, threads: usize) -> Outputs {
    let mut s = Summary::default();
    s.text("command", "check");
    s.text("seed", seed.to_string());
    s.text("threads", threads.to_string());
    s.text("version", env!("CARGO_PKG_VERSION"));
    let passed = results.iter().filter(|r| r.passed).count();
    s.text("passed", passed.to_string());
    s.text("total", results.len().to_string());
    let mut t = Table::new("check.csv", &["id", "title", "passed", "metric", "value"]);
    for r in results {
        s.text(&format!("criterion_{}", r.id), if r.passed { "PASS" } else { "FAIL" });
        if r.metrics.is_empty() {
            t.push(vec![r.id.to_string(), r.title.clone(), flag(r.passed), String::new(), String::new()]);
        }
        for m in &r.metrics {
            t.push(vec![r.id.to_string(), r.title.clone(), flag(r.passed), m.name.clone(), num(m.value)]);
        }
    }
    Outputs {
        summary: s,
        tables: vec![t],
        profile: None,
    }
}
