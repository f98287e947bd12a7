//! Projected-gradient solver for the per-shell convex program
//!
//! ```text
//! minimize   Σ_j c_j α_j^q m_j
//! subject to Σ_j α_j m_j = 1,  α_j ≥ 0
//! ```
//!
//! with `m_j > 0` the cell measures. Gradients and projections use the
//! `m`-weighted inner product, so the iteration does not depend on how
//! finely a region is subdivided.

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    pub max_iterations: usize,
    /// Stop once the relative objective change falls below this.
    pub rel_tol: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            max_iterations: 10_000,
            rel_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub value: f64,
    pub alpha: Vec<f64>,
    pub iterations: usize,
}

fn objective(c: &[f64], m: &[f64], q: f64, a: &[f64]) -> f64 {
    c.iter()
        .zip(m)
        .zip(a)
        .map(|((c, m), a)| if *a > 0.0 { c * a.powf(q) * m } else { 0.0 })
        .sum()
}

/// Projection onto `{α ≥ 0, Σ α m = 1}` in the `m`-weighted norm:
/// `α_j = max(z_j − τ, 0)` with `τ` fixed by the constraint.
pub fn project_weighted_simplex(z: &[f64], m: &[f64], out: &mut [f64]) {
    let mut idx: Vec<usize> = (0..z.len()).collect();
    idx.sort_by(|&a, &b| z[b].total_cmp(&z[a]));
    let (mut sm, mut smz) = (0.0, 0.0);
    let mut tau = 0.0;
    for &i in &idx {
        let (sm2, smz2) = (sm + m[i], smz + m[i] * z[i]);
        let t = (smz2 - 1.0) / sm2;
        if z[i] <= t {
            break;
        }
        sm = sm2;
        smz = smz2;
        tau = t;
    }
    for (o, zi) in out.iter_mut().zip(z) {
        *o = (zi - tau).max(0.0);
    }
}

/// Solves the per-shell program from the uniform start.
pub fn solve_shell(c: &[f64], m: &[f64], q: f64, opts: &OracleOptions) -> Result<OracleSolution> {
    if c.len() != m.len() || c.is_empty() {
        return Err(invalid("oracle needs matching, nonempty coefficient and measure vectors"));
    }
    if !(q > 1.0) {
        return Err(invalid(format!("oracle exponent q = {q} must exceed 1")));
    }
    if c.iter().any(|v| !(*v > 0.0 && v.is_finite())) || m.iter().any(|v| !(*v > 0.0)) {
        return Err(invalid("oracle coefficients and measures must be positive"));
    }
    let total: f64 = m.iter().sum();
    let k = c.len();
    let mut a = vec![1.0 / total; k];
    let mut f = objective(c, m, q, &a);
    let mut grad = vec![0.0; k];
    let mut z = vec![0.0; k];
    let mut trial = vec![0.0; k];
    let mut step = 0.0f64;

    for it in 1..=opts.max_iterations {
        for j in 0..k {
            grad[j] = q * c[j] * a[j].max(0.0).powf(q - 1.0);
        }
        // Local smoothness of the m-weighted Hessian q(q-1) c α^{q-2}.
        let lip = (0..k)
            .filter(|&j| a[j] > 0.0)
            .map(|j| q * (q - 1.0) * c[j] * a[j].powf(q - 2.0))
            .fold(0.0, f64::max);
        let guess = if lip > 0.0 { 1.0 / lip } else { 1.0 };
        step = if step > 0.0 { (2.0 * step).min(4.0 * guess) } else { guess };

        let f_new = loop {
            for j in 0..k {
                z[j] = a[j] - step * grad[j];
            }
            project_weighted_simplex(&z, m, &mut trial);
            let f_trial = objective(c, m, q, &trial);
            let mut lin = 0.0;
            let mut quad = 0.0;
            for j in 0..k {
                let d = trial[j] - a[j];
                lin += grad[j] * d * m[j];
                quad += d * d * m[j];
            }
            if f_trial <= f + lin + quad / (2.0 * step) + 1e-15 * f.abs() {
                break f_trial;
            }
            step *= 0.5;
            if step < 1e-300 {
                return Err(Error::SolverNotConverged { iterations: it });
            }
        };
        let change = (f - f_new).abs();
        a.copy_from_slice(&trial);
        f = f_new;
        if change <= opts.rel_tol * f.abs() {
            return Ok(OracleSolution {
                value: f,
                alpha: a,
                iterations: it,
            });
        }
    }
    Err(Error::SolverNotConverged {
        iterations: opts.max_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_weights_give_uniform_minimizer() {
        let m = vec![0.5; 8];
        let c = vec![1.0; 8];
        let sol = solve_shell(&c, &m, 2.0, &OracleOptions::default()).unwrap();
        // Σ α² m with Σ α m = 1: α ≡ 1/4, value 1/4
        assert!((sol.value - 0.25).abs() < 1e-14);
        assert!(sol.alpha.iter().all(|a| (a - 0.25).abs() < 1e-14));
    }

    #[test]
    fn matches_lagrange_solution() {
        // value = (Σ m c^{-s})^{-1/s} with s = 1/(q-1)
        let m: Vec<f64> = (0..40).map(|j| 0.1 + 0.01 * j as f64).collect();
        let c: Vec<f64> = (0..40).map(|j| 1.0 / (1.0 + 0.5 * (0.3 * j as f64).cos())).collect();
        for q in [1.5, 2.0, 3.0] {
            let s = 1.0 / (q - 1.0);
            let exact = m.iter().zip(&c).map(|(m, c)| m * c.powf(-s)).sum::<f64>().powf(-1.0 / s);
            let sol = solve_shell(&c, &m, q, &OracleOptions::default()).unwrap();
            assert!((sol.value - exact).abs() < 1e-8 * exact, "q={q}: {} vs {exact}", sol.value);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(solve_shell(&[1.0], &[1.0], 1.0, &OracleOptions::default()).is_err());
        assert!(solve_shell(&[1.0, -1.0], &[1.0, 1.0], 2.0, &OracleOptions::default()).is_err());
        assert!(solve_shell(&[], &[], 2.0, &OracleOptions::default()).is_err());
    }

    proptest! {
        #[test]
        fn projection_is_feasible(z in prop::collection::vec(-3.0f64..3.0, 1..30),
                                  seed in 0.1f64..2.0) {
            let m: Vec<f64> = (0..z.len()).map(|j| seed + 0.1 * j as f64).collect();
            let mut out = vec![0.0; z.len()];
            project_weighted_simplex(&z, &m, &mut out);
            let total: f64 = out.iter().zip(&m).map(|(a, m)| a * m).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(out.iter().all(|a| *a >= 0.0));
        }

        #[test]
        fn oracle_never_beats_closed_form(c in prop::collection::vec(0.2f64..5.0, 2..24),
                                          q in 1.3f64..3.5) {
            let m: Vec<f64> = (0..c.len()).map(|j| 1.0 + 0.05 * j as f64).collect();
            let s = 1.0 / (q - 1.0);
            let exact = m.iter().zip(&c).map(|(m, c)| m * c.powf(-s)).sum::<f64>().powf(-1.0 / s);
            let sol = solve_shell(&c, &m, q, &OracleOptions::default()).unwrap();
            prop_assert!(sol.value >= exact * (1.0 - 1e-12));
            prop_assert!(sol.value <= exact * (1.0 + 1e-6));
        }
    }
}
