//! Slow independent oracles for cross-checking on small instances.
//!
//! Nothing here is used by the solver. The Monte Carlo estimator and the
//! linear-programming envelope share no code with `quadrature` and
//! `convexify`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::SimplexGrid;
use crate::model::{DriftSource, Expr, GameSpec};

/// Monte Carlo estimate of one step expectation with standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub zbar: Vec<f64>,
    pub se_mean: f64,
    pub se_zbar: Vec<f64>,
}

/// Plain Monte Carlo over `ΔB ~ N(0, τ Id)`:
/// `mean = E[φ(x + σ ΔB)]`, `zbar = E[φ(x + σ ΔB) (σ*)⁻¹ ΔB] / τ`.
pub fn mc_step_expectation<F>(
    phi: F,
    spec: &GameSpec,
    t: f64,
    x: &[f64],
    tau: f64,
    n: usize,
    seed: u64,
) -> Result<McEstimate>
where
    F: Fn(&[f64]) -> f64,
{
    assert!(n >= 100, "Monte Carlo needs at least 100 samples");
    let d = spec.d;
    let sigma = spec.sigma(t, x);
    let inv_t = spec.sigma_inv_transpose(t, x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = vec![0.0; d];
    let mut db = vec![0.0; d];
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let mut z1 = vec![0.0; d];
    let mut z2 = vec![0.0; d];
    for _ in 0..n {
        for v in db.iter_mut() {
            let g: f64 = StandardNormal.sample(&mut rng);
            *v = tau.sqrt() * g;
        }
        for r in 0..d {
            y[r] = x[r] + (0..d).map(|c| sigma[(r, c)] * db[c]).sum::<f64>();
        }
        let f = phi(&y);
        s1 += f;
        s2 += f * f;
        for r in 0..d {
            let z = f * (0..d).map(|c| inv_t[(r, c)] * db[c]).sum::<f64>() / tau;
            z1[r] += z;
            z2[r] += z * z;
        }
    }
    let nf = n as f64;
    let se = |s1: f64, s2: f64| ((s2 / nf - (s1 / nf).powi(2)).max(0.0) / (nf - 1.0)).sqrt();
    Ok(McEstimate {
        mean: s1 / nf,
        zbar: z1.iter().map(|s| s / nf).collect(),
        se_mean: se(s1, s2),
        se_zbar: z1.iter().zip(&z2).map(|(&a, &b)| se(a, b)).collect(),
    })
}

/// Largest grid this oracle accepts.
pub const ORACLE_MAX_NODES: usize = 200;

/// Convex envelope on the grid as a linear program per node: minimize
/// `Σ_q λ_q f_q` over `λ >= 0` with `Σ_q λ_q node_q = p`.
///
/// Two scenarios: exhaustive search over bracketing pairs. More scenarios:
/// dense simplex method with Bland's rule, started from the vertex basis.
pub fn envelope_oracle(simplex: &SimplexGrid, values: &[f64]) -> Vec<f64> {
    assert!(simplex.len() <= ORACLE_MAX_NODES, "oracle grids are capped at {ORACLE_MAX_NODES} nodes");
    assert_eq!(values.len(), simplex.len());
    match simplex.n_scenarios() {
        1 => values.to_vec(),
        2 => {
            // node j sits at p_1 = j / m
            let n = values.len();
            (0..n)
                .map(|j| {
                    let mut best = values[j];
                    for a in 0..j {
                        for b in j + 1..n {
                            let w = (j - a) as f64 / (b - a) as f64;
                            best = best.min((1.0 - w) * values[a] + w * values[b]);
                        }
                    }
                    best
                })
                .collect()
        }
        _ => (0..simplex.len()).map(|j| lp_envelope(simplex, values, j)).collect(),
    }
}

fn lp_envelope(simplex: &SimplexGrid, f: &[f64], j: usize) -> f64 {
    const EPS: f64 = 1e-12;
    let rows = simplex.n_scenarios();
    let cols = simplex.len();
    let m = simplex.resolution() as f64;
    // constraints Σ_q λ_q c_q[r] = c_j[r], scaled by 1/m
    let mut tab: Vec<Vec<f64>> = (0..rows)
        .map(|r| (0..cols).map(|q| simplex.composition(q)[r] as f64 / m).collect())
        .collect();
    let mut rhs: Vec<f64> = (0..rows).map(|r| simplex.composition(j)[r] as f64 / m).collect();
    let mut basis: Vec<usize> = (0..rows).map(|r| simplex.vertex(r)).collect();
    loop {
        let entering = (0..cols).find(|&q| {
            let rc = f[q] - (0..rows).map(|r| f[basis[r]] * tab[r][q]).sum::<f64>();
            rc < -EPS * (1.0 + f[q].abs())
        });
        let Some(q) = entering else { break };
        let mut leave: Option<usize> = None;
        for r in 0..rows {
            if tab[r][q] > EPS {
                let better = match leave {
                    None => true,
                    Some(l) => {
                        let (a, b) = (rhs[r] / tab[r][q], rhs[l] / tab[l][q]);
                        a < b - EPS || (a <= b + EPS && basis[r] < basis[l])
                    }
                };
                if better {
                    leave = Some(r);
                }
            }
        }
        let r = leave.expect("bounded program");
        let piv = tab[r][q];
        tab[r].iter_mut().for_each(|v| *v /= piv);
        rhs[r] /= piv;
        for o in 0..rows {
            if o != r && tab[o][q] != 0.0 {
                let factor = tab[o][q];
                for c in 0..cols {
                    tab[o][c] -= factor * tab[r][c];
                }
                rhs[o] -= factor * rhs[r];
            }
        }
        basis[r] = q;
    }
    (0..rows).map(|r| f[basis[r]] * rhs[r]).sum()
}

/// `E[sin(x + σ(B_T - B_t))] + c = e^{-σ²(T - t)/2} sin(x) + c` for
/// `g = sin(x) + c`.
pub fn heat_closed_form(g: &Expr, sigma: f64, t: f64, t_end: f64, x: f64) -> Result<f64> {
    let c = g.as_sin_plus_const().ok_or_else(|| Error::UnsupportedG(format!("{g:?}")))?;
    Ok((-sigma * sigma * (t_end - t) / 2.0).exp() * x.sin() + c)
}

/// Exact value `Σ_i p_i (e^{-σ²(T - t)/2} sin x + c_i)` of a coefficient-free
/// one-dimensional game with constant volatility and sine payoffs.
pub fn heat_value(spec: &GameSpec, t: f64, x: f64, p: &[f64]) -> Result<f64> {
    let cfg = spec.config();
    let parse_const = |s: &str| Expr::parse(s).ok().and_then(|e| e.constant_value());
    let drift_free = match &cfg.b {
        DriftSource::Scalar(s) => parse_const(s) == Some(0.0),
        DriftSource::Vector(v) => v.iter().all(|s| parse_const(s) == Some(0.0)),
    };
    let cost_free = cfg.l.iter().all(|s| parse_const(s) == Some(0.0));
    let sigma = parse_const(&cfg.sigma[0][0]);
    let (true, true, 1, Some(sigma)) = (drift_free, cost_free, spec.d, sigma) else {
        return Err(Error::Validation(
            "closed form needs d = 1, zero drift and running cost, and constant sigma".into(),
        ));
    };
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi * heat_closed_form(spec.terminal_expr(i), sigma, t, spec.t_end, x)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convexify::vex_values;
    use crate::model::{builtin_config, builtin_problem};
    use crate::quadrature::{step_expectation, GHRule};
    use rand::Rng;

    fn with_sigma(sigma: &str) -> GameSpec {
        let mut cfg = builtin_config("heat").unwrap().game;
        cfg.sigma = vec![vec![sigma.into()]];
        cfg.bounds.sigma = 4.0;
        cfg.bounds.sigma_inv = 4.0;
        GameSpec::from_config(&cfg).unwrap()
    }

    #[test]
    fn mc_constant() {
        let spec = builtin_problem("heat").unwrap();
        let e = mc_step_expectation(|_| 1.75, &spec, 0.0, &[0.3], 0.05, 10_000, 1).unwrap();
        assert!((e.mean - 1.75).abs() <= 1e-12);
        assert!(e.zbar[0].abs() <= 4.0 * e.se_zbar[0]);
    }

    #[test]
    fn mc_square_moment() {
        let spec = with_sigma("2");
        let tau = 0.05;
        let e = mc_step_expectation(|y| y[0] * y[0], &spec, 0.0, &[0.0], tau, 200_000, 9).unwrap();
        assert!((e.mean - 4.0 * tau).abs() <= 4.0 * e.se_mean);
    }

    #[test]
    fn mc_agrees_with_quadrature_on_heat() {
        let spec = builtin_problem("heat").unwrap();
        let rule = GHRule::new(5, 1).unwrap();
        let phi = |y: &[f64]| y[0].sin() + 0.5;
        for (i, &x) in [-1.0, 0.4, 2.2].iter().enumerate() {
            let q = step_expectation(phi, &spec, 0.0, &[x], 1.0 / 32.0, &rule).unwrap();
            let mc = mc_step_expectation(phi, &spec, 0.0, &[x], 1.0 / 32.0, 1_000_000, i as u64).unwrap();
            assert!((q.mean - mc.mean).abs() <= 4.0 * mc.se_mean);
            assert!((q.zbar[0] - mc.zbar[0]).abs() <= 4.0 * mc.se_zbar[0]);
        }
    }

    #[test]
    fn oracle_examples() {
        let g = SimplexGrid::new(2, 2);
        assert_eq!(envelope_oracle(&g, &[0.0, 1.0, 0.0]), vec![0.0, 0.0, 0.0]);
        let g = SimplexGrid::new(3, 4);
        let f: Vec<f64> = (0..g.len()).map(|j| 0.5 * g.point(j)[0] - 2.0 * g.point(j)[2] + 1.0).collect();
        let o = envelope_oracle(&g, &f);
        for (a, b) in o.iter().zip(&f) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_matches_fast_envelope() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for (n_sc, m, trials) in [(2, 12, 20), (3, 6, 10), (4, 4, 5)] {
            let g = SimplexGrid::new(n_sc, m);
            for _ in 0..trials {
                let f: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let fast = vex_values(&g, &f).unwrap();
                let slow = envelope_oracle(&g, &f);
                for (a, b) in fast.iter().zip(&slow) {
                    assert!((a - b).abs() <= 1e-9, "{n_sc} {m}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn closed_form_examples() {
        let spec = builtin_problem("heat").unwrap();
        let g0 = spec.terminal_expr(0);
        assert_eq!(heat_closed_form(g0, 1.0, 0.0, 1.0, 0.0).unwrap(), 0.5);
        let x = 0.9f64;
        assert_eq!(heat_closed_form(g0, 1.0, 1.0, 1.0, x).unwrap(), x.sin() + 0.5);
        let v = heat_closed_form(g0, 1.0, 0.0, 1.0, std::f64::consts::FRAC_PI_2).unwrap();
        assert!((v - 0.5 - 0.60653).abs() < 1e-5);
        let bad = Expr::parse("cos(x)").unwrap();
        assert!(matches!(heat_closed_form(&bad, 1.0, 0.0, 1.0, 0.0), Err(Error::UnsupportedG(_))));
        assert!((heat_value(&spec, 0.0, 0.0, &[0.5, 0.5]).unwrap()).abs() < 1e-15);
        assert!(heat_value(&builtin_problem("reveal2").unwrap(), 0.0, 0.0, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn closed_form_against_mc() {
        let spec = builtin_problem("heat").unwrap();
        let x = std::f64::consts::FRAC_PI_2;
        let mc = mc_step_expectation(|y| y[0].sin(), &spec, 0.0, &[x], 1.0, 400_000, 3).unwrap();
        let exact = heat_closed_form(&Expr::parse("sin(x)").unwrap(), 1.0, 0.0, 1.0, x).unwrap();
        assert!((mc.mean - exact).abs() <= 4.0 * mc.se_mean);
    }
}
