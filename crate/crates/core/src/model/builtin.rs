//! Built-in benchmark problems.
//!
//! * `heat`: no drift, no running cost, unit volatility, `g_i = sin(x) + c_i`.
//!   The value stays affine in `p` and is known in closed form.
//! * `pursuit1d`: `b = u + v` on symmetric control grids, no running cost.
//!   The Hamiltonian vanishes identically on these grids.
//! * `reveal2`: separable scenario-dependent running costs whose Hamiltonian
//!   is W-shaped in the belief, so the informed player gains from partially
//!   revealing the scenario around `p = (1/2, 1/2)`.

use super::{
    BeliefConfig, Bounds, DiscretizationConfig, DriftSource, GameConfig, GameSpec, OutputConfig,
    ProblemConfig, QuadratureConfig,
};
use crate::error::{Error, Result};

pub const BUILTIN_NAMES: [&str; 3] = ["heat", "pursuit1d", "reveal2"];

/// Scenario offsets of the `heat` payoffs.
pub const HEAT_OFFSETS: [f64; 2] = [0.5, -0.5];

fn s(v: &str) -> String {
    v.to_string()
}

fn bounds(b: f64, sigma: f64, l: f64, g: f64, lip_g: f64) -> Bounds {
    Bounds {
        b,
        sigma,
        sigma_inv: 1.0 / sigma,
        l,
        g,
        lip_g,
        lip_b: None,
        lip_l: None,
        lip_sigma: None,
    }
}

/// Full configuration (game plus default discretization) of a built-in problem.
pub fn builtin_config(name: &str) -> Result<ProblemConfig> {
    let (game, disc) = match name {
        "heat" => (
            GameConfig {
                d: 1,
                n_scenarios: 2,
                t0: 0.0,
                t_end: 1.0,
                domain: vec![[-8.0, 8.0]],
                controls_u: vec![vec![0.0]],
                controls_v: vec![vec![0.0]],
                b: DriftSource::Scalar(s("0")),
                sigma: vec![vec![s("1")]],
                l: vec![s("0"), s("0")],
                g: vec![s("sin(x) + 0.5"), s("sin(x) - 0.5")],
                bounds: bounds(0.0, 1.0, 0.0, 1.5, 1.0),
            },
            DiscretizationConfig { steps: 32, space_nodes: vec![201], simplex_m: 16 },
        ),
        "pursuit1d" => {
            let grid: Vec<Vec<f64>> = [-1.0, -0.5, 0.0, 0.5, 1.0].iter().map(|&c| vec![c]).collect();
            (
                GameConfig {
                    d: 1,
                    n_scenarios: 2,
                    t0: 0.0,
                    t_end: 1.0,
                    domain: vec![[-5.0, 5.0]],
                    controls_u: grid.clone(),
                    controls_v: grid,
                    b: DriftSource::Scalar(s("u + v")),
                    sigma: vec![vec![s("0.5")]],
                    l: vec![s("0"), s("0")],
                    g: vec![s("min(abs(x), 2)"), s("2 - min(abs(x - 1), 2)")],
                    bounds: bounds(2.0, 0.5, 0.0, 2.0, 1.0),
                },
                DiscretizationConfig { steps: 32, space_nodes: vec![161], simplex_m: 16 },
            )
        }
        "reveal2" => {
            let w = "(1 + 0.25 * cos(x))";
            (
                GameConfig {
                    d: 1,
                    n_scenarios: 2,
                    t0: 0.0,
                    t_end: 1.0,
                    domain: vec![[-6.0, 6.0]],
                    controls_u: vec![vec![-1.0], vec![1.0]],
                    controls_v: vec![
                        vec![-1.0, -1.0],
                        vec![-1.0, 1.0],
                        vec![1.0, -1.0],
                        vec![1.0, 1.0],
                    ],
                    b: DriftSource::Scalar(s("0.5 * (v1 - u1)")),
                    sigma: vec![vec![s("1")]],
                    l: vec![
                        format!("{w} * (0.75 * v1 + 0.25 * v2 + 0.5 * u1)"),
                        format!("{w} * (-0.25 * v1 - 0.75 * v2 - 0.5 * u1)"),
                    ],
                    g: vec![s("0.5 * sin(x)"), s("-0.5 * sin(x)")],
                    bounds: bounds(1.0, 1.0, 1.875, 0.5, 0.5),
                },
                DiscretizationConfig { steps: 32, space_nodes: vec![121], simplex_m: 16 },
            )
        }
        other => return Err(Error::UnknownProblem(other.to_string())),
    };
    let beliefs = BeliefConfig { x0: vec![0.0], p0: vec![0.5, 0.5] };
    Ok(ProblemConfig {
        name: name.to_string(),
        game,
        discretization: disc,
        quadrature: QuadratureConfig::default(),
        output: OutputConfig::default(),
        beliefs: Some(beliefs),
    })
}

/// Compiled game of a built-in problem.
pub fn builtin_problem(name: &str) -> Result<GameSpec> {
    GameSpec::from_config(&builtin_config(name)?.game)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unknown_name() {
        assert!(matches!(builtin_problem("nosuch"), Err(Error::UnknownProblem(_))));
    }

    #[test]
    fn builtins_validate() {
        for name in BUILTIN_NAMES {
            let cfg = builtin_config(name).unwrap();
            cfg.validate().unwrap();
        }
    }

    #[test]
    fn declared_bounds_hold_on_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for name in BUILTIN_NAMES {
            let spec = builtin_problem(name).unwrap();
            let mut b = vec![0.0; spec.d];
            for _ in 0..100 {
                let t = rng.random_range(spec.t0..=spec.t_end);
                let x: Vec<f64> =
                    spec.domain.iter().map(|[lo, hi]| rng.random_range(*lo..=*hi)).collect();
                let u = &spec.controls_u[rng.random_range(0..spec.controls_u.len())];
                let v = &spec.controls_v[rng.random_range(0..spec.controls_v.len())];
                spec.drift(t, &x, u, v, &mut b);
                assert!(b.iter().map(|c| c * c).sum::<f64>().sqrt() <= spec.bounds.b + 1e-12);
                for i in 0..spec.n_scenarios {
                    assert!(spec.running(i, t, &x, u, v).abs() <= spec.bounds.l + 1e-12);
                }
                assert!(spec.sigma(t, &x).determinant().abs() > 1e-12);
            }
        }
    }

    #[test]
    fn heat_is_coefficient_free() {
        let spec = builtin_problem("heat").unwrap();
        let mut b = [1.0];
        spec.drift(0.3, &[1.0], &[0.0], &[0.0], &mut b);
        assert_eq!(b[0], 0.0);
        assert_eq!(spec.running(1, 0.3, &[1.0], &[0.0], &[0.0]), 0.0);
        assert_eq!(spec.sigma(0.0, &[2.0])[(0, 0)], 1.0);
        let x = 0.7_f64;
        assert!((spec.terminal(0, &[x]) - (x.sin() + 0.5)).abs() < 1e-15);
    }
}
