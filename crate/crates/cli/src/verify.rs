//! Property and oracle checks behind `isaacs-vex verify`.

use isaacs_vex::belief::{dpp_residual, kernel_from_split};
use isaacs_vex::convexify::{vex, vex_values};
use isaacs_vex::grid::{Grids, SimplexGrid, ValueField};
use isaacs_vex::hamiltonian::check_growth;
use isaacs_vex::model::{GameSpec, ProblemConfig};
use isaacs_vex::quadrature::{gaussian_tail_moment, step_expectation, GHRule};
use isaacs_vex::reference::{envelope_oracle, heat_value, mc_step_expectation};
use isaacs_vex::scheme::{pre_envelope, solve, Solution, SolveOptions};
use isaacs_vex::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// Isaacs gaps above this count as a failure of the condition.
pub const ISAACS_TOL: f64 = 1e-9;
/// Lipschitz constant of the random fields in the monotonicity check.
pub const MONOTONE_LIP: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, passed: bool, detail: String) -> Outcome {
    Outcome { name, passed, detail }
}

/// Largest difference quotient of the terminal payoffs between neighboring
/// space nodes.
pub fn terminal_lipschitz(spec: &GameSpec, grids: &Grids) -> f64 {
    let space = &grids.space;
    let mut best = 0.0f64;
    for s in 0..space.len() {
        let idx = space.multi_index(s);
        let x = space.point(s);
        for a in 0..space.dim() {
            if idx[a] + 1 >= space.counts()[a] {
                continue;
            }
            let y = space.point(s + space.strides()[a]);
            for i in 0..spec.n_scenarios {
                best = best.max((spec.terminal(i, &x) - spec.terminal(i, &y)).abs() / space.spacing()[a]);
            }
        }
    }
    best
}

/// Growth bound `1.1 ((M_L + 1) e^{c' (T - t0)} - 1)` with `c' >= 0` the
/// least-squares rate of `ln((M_k + 1) / (M_L + 1))` on `T - t_k`.
/// Returns `(bound, observed max)`.
pub fn growth_bound(t_end: f64, t0: f64, series: &[(f64, f64)]) -> (f64, f64) {
    let m_last = series.last().map_or(0.0, |s| s.1);
    let (mut sy, mut ss) = (0.0, 0.0);
    for &(t, m) in series {
        let lag = t_end - t;
        sy += lag * ((m + 1.0) / (m_last + 1.0)).ln();
        ss += lag * lag;
    }
    let rate = if ss > 0.0 { (sy / ss).max(0.0) } else { 0.0 };
    let bound = 1.1 * ((m_last + 1.0) * (rate * (t_end - t0)).exp() - 1.0) + 1e-12;
    (bound, series.iter().fold(0.0f64, |a, s| a.max(s.1)))
}

/// Additive slack `2 M ‖σ⁻¹‖ tail(M ‖σ⁻¹‖, τ, d)` allowed in the order check.
pub fn monotonicity_slack(spec: &GameSpec, lip: f64, tau: f64) -> f64 {
    let c = lip * spec.bounds.sigma_inv;
    2.0 * c * gaussian_tail_moment(c, tau, spec.d as u32)
}

/// Walk along every axis with steps in `[-step_a, step_a]`, summed over axes.
fn random_walk(grids: &Grids, rng: &mut ChaCha8Rng, lip: f64) -> Vec<f64> {
    let space = &grids.space;
    let d = space.dim();
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|a| {
            let step = lip / d as f64 * space.spacing()[a];
            let mut v = rng.random_range(-1.0..1.0);
            (0..space.counts()[a])
                .map(|_| {
                    let out = v;
                    v += rng.random_range(-step..=step);
                    out
                })
                .collect()
        })
        .collect();
    (0..space.len())
        .map(|s| space.multi_index(s).iter().enumerate().map(|(a, &i)| axes[a][i]).sum())
        .collect()
}

/// A pair `φ >= ψ` of fields at slice `k`, both convex in `p` with
/// Lipschitz constant at most `lip` in `x`:
/// `Σ p_i f_i(x) + κ |p - p*|²` with `f_i = ψ_i` or `ψ_i + max(w_i, 0) + c_i`.
pub fn random_ordered_fields(grids: &Grids, k: usize, lip: f64, rng: &mut ChaCha8Rng) -> (ValueField, ValueField) {
    let simplex = &grids.simplex;
    let n_sc = simplex.n_scenarios();
    let n_space = grids.space.len();
    let mut low = Vec::with_capacity(n_sc);
    let mut high = Vec::with_capacity(n_sc);
    for _ in 0..n_sc {
        let base = random_walk(grids, rng, lip / 2.0);
        let bump = random_walk(grids, rng, lip / 2.0);
        let c: f64 = rng.random_range(0.0..0.1);
        high.push(base.iter().zip(&bump).map(|(b, w)| b + w.max(0.0) + c).collect::<Vec<f64>>());
        low.push(base);
    }
    let kappa: f64 = rng.random_range(0.0..2.0);
    let star: Vec<f64> = {
        let e: Vec<f64> = (0..n_sc).map(|_| rng.random_range(0.01..1.0)).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|v| v / s).collect()
    };
    let build = |f: &[Vec<f64>]| {
        let mut values = Vec::with_capacity(n_space * simplex.len());
        for s in 0..n_space {
            for j in 0..simplex.len() {
                let p = simplex.point(j);
                let lin: f64 = p.iter().zip(f).map(|(pi, fi)| pi * fi[s]).sum();
                let quad: f64 = p.iter().zip(&star).map(|(a, b)| (a - b) * (a - b)).sum();
                values.push(lin + kappa * quad);
            }
        }
        ValueField::new(k, grids.time.node(k), n_space, simplex.len(), values)
    };
    (build(&high), build(&low))
}

/// One scheme step from `field` without the divergence guard.
pub fn step_operator(spec: &GameSpec, grids: &Grids, rule: &GHRule, field: &ValueField) -> Result<Vec<Vec<f64>>> {
    (0..grids.space.len())
        .into_par_iter()
        .map(|s| vex_values(&grids.simplex, &pre_envelope(spec, grids, rule, field, s)?.0))
        .collect()
}

/// Worst `ψ-step - φ-step` beyond the slack over `pairs` random ordered pairs.
/// Returns `(violations, worst shortfall, slack)`.
pub fn monotonicity_check(
    spec: &GameSpec,
    grids: &Grids,
    rule: &GHRule,
    pairs: usize,
    seed: u64,
) -> Result<(usize, f64, f64)> {
    let slack = monotonicity_slack(spec, MONOTONE_LIP, grids.time.tau());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..pairs {
        let k = rng.random_range(1..=grids.time.steps());
        let (hi, lo) = random_ordered_fields(grids, k, MONOTONE_LIP, &mut rng);
        let (a, b) = (step_operator(spec, grids, rule, &hi)?, step_operator(spec, grids, rule, &lo)?);
        for (ra, rb) in a.iter().zip(&b) {
            for (u, v) in ra.iter().zip(rb) {
                let short = v - u;
                worst = worst.max(short);
                if short > slack + 1e-12 {
                    violations += 1;
                }
            }
        }
    }
    Ok((violations, worst, slack))
}

/// Worst deviations `(|Σλ - 1|, |Σλπ - p|, |Σλ f(π) - v̂|)` over `samples`
/// random stored splits, `f` being the recomputed pre-envelope values.
pub fn splitting_identities(
    spec: &GameSpec,
    sol: &Solution,
    rule: &GHRule,
    samples: usize,
    seed: u64,
) -> Result<[f64; 3]> {
    let grids = &sol.grids;
    let simplex = &grids.simplex;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 3];
    for _ in 0..samples {
        let k = rng.random_range(0..grids.time.steps());
        let s = rng.random_range(0..grids.space.len());
        let j = rng.random_range(0..simplex.len());
        let (f, _) = pre_envelope(spec, grids, rule, &sol.fields[k + 1], s)?;
        let node = sol.splits[k][s].node(j);
        let total: f64 = node.weights.iter().sum();
        worst[0] = worst[0].max((total - 1.0).abs());
        for (c, &pc) in simplex.point(j).iter().enumerate() {
            let got: f64 = node.weights.iter().zip(&node.points).map(|(w, &q)| w * simplex.point(q)[c]).sum();
            worst[1] = worst[1].max((got - pc).abs());
        }
        let value: f64 = node.weights.iter().zip(&node.points).map(|(w, &q)| w * f[q]).sum();
        worst[2] = worst[2].max((value - sol.fields[k].get(s, j)).abs());
    }
    Ok(worst)
}

/// Worst `dpp_residual` over `samples` random nodes.
pub fn dpp_check(spec: &GameSpec, sol: &Solution, rule: &GHRule, samples: usize, seed: u64) -> Result<f64> {
    let grids = &sol.grids;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes: Vec<(usize, usize, usize)> = (0..samples)
        .map(|_| {
            (
                rng.random_range(0..grids.time.steps()),
                rng.random_range(0..grids.space.len()),
                rng.random_range(0..grids.simplex.len()),
            )
        })
        .collect();
    let res: Vec<f64> =
        nodes.par_iter().map(|&(k, s, j)| dpp_residual(spec, sol, rule, k, s, j)).collect::<Result<_>>()?;
    Ok(res.into_iter().fold(0.0, f64::max))
}

/// Worst `|E[p_{k+1} | p] - p|` and `|Σ_l q_{i,l} - 1|` over every stored kernel.
pub fn kernel_martingale(sol: &Solution) -> Result<(f64, f64)> {
    let simplex = &sol.grids.simplex;
    let per_step: Vec<(f64, f64)> = sol
        .splits
        .par_iter()
        .map(|step| -> Result<(f64, f64)> {
            let mut worst = (0.0f64, 0.0f64);
            for env in step {
                for j in 0..simplex.len() {
                    let kernel = kernel_from_split(simplex, env.node(j), j)?;
                    for (a, b) in kernel.mean_target(simplex).iter().zip(simplex.point(j)) {
                        worst.0 = worst.0.max((a - b).abs());
                    }
                    for row in &kernel.rows {
                        let total: f64 = row.iter().map(|r| r.1).sum();
                        worst.1 = worst.1.max((total - 1.0).abs());
                    }
                }
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    Ok(per_step.into_iter().fold((0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1))))
}

fn random_values(rng: &mut ChaCha8Rng, simplex: &SimplexGrid) -> Vec<f64> {
    let n_sc = simplex.n_scenarios();
    let a: Vec<f64> = (0..n_sc).map(|_| rng.random_range(-1.0..1.0)).collect();
    (0..simplex.len())
        .map(|j| {
            let p = simplex.point(j);
            let lin: f64 = p.iter().zip(&a).map(|(x, y)| x * y).sum();
            lin + rng.random_range(-1.0..1.0) * (3.0 * p[0]).sin() + rng.random_range(-0.5..0.5)
        })
        .collect()
}

/// Worst `|vex(vex f) - vex f|` over random instances.
pub fn envelope_idempotence(simplex: &SimplexGrid, instances: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let once = vex_values(simplex, &random_values(&mut rng, simplex))?;
        let twice = vex_values(simplex, &once)?;
        worst = once.iter().zip(&twice).fold(worst, |m, (a, b)| m.max((a - b).abs()));
    }
    Ok(worst)
}

/// Worst `|oracle - vex|` over random instances on `simplex`.
pub fn envelope_vs_oracle(simplex: &SimplexGrid, instances: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let f = random_values(&mut rng, simplex);
        let fast = vex(simplex, &f)?.values();
        let slow = envelope_oracle(simplex, &f);
        worst = fast.iter().zip(&slow).fold(worst, |m, (a, b)| m.max((a - b).abs()));
    }
    Ok(worst)
}

/// Quadrature against Monte Carlo on `configs` random smooth functions at
/// random `(t, x)`. Returns the largest deviation in standard errors.
pub fn quadrature_vs_mc(spec: &GameSpec, rule: &GHRule, tau: f64, configs: usize, samples: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.d;
    let mut worst = 0.0f64;
    for c in 0..configs {
        let t = rng.random_range(spec.t0..spec.t_end);
        let x: Vec<f64> = spec.domain.iter().map(|&[lo, hi]| rng.random_range(lo..hi)).collect();
        let a0: f64 = rng.random_range(-1.0..1.0);
        let coef: Vec<(f64, f64, f64)> = (0..d)
            .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(0.5..2.0), rng.random_range(0.0..6.3)))
            .collect();
        let phi = |y: &[f64]| a0 + y.iter().zip(&coef).map(|(yr, (a, w, b))| a * (w * yr + b).sin()).sum::<f64>();
        let quad = step_expectation(phi, spec, t, &x, tau, rule)?;
        let mc = mc_step_expectation(phi, spec, t, &x, tau, samples, seed.wrapping_add(c as u64 + 1))?;
        let z = |a: f64, b: f64, se: f64| if se > 0.0 { (a - b).abs() / se } else if a == b { 0.0 } else { f64::INFINITY };
        worst = worst.max(z(quad.mean, mc.mean, mc.se_mean));
        for r in 0..d {
            worst = worst.max(z(quad.zbar[r], mc.zbar[r], mc.se_zbar[r]));
        }
    }
    Ok(worst)
}

/// Monte Carlo estimate and standard error of `E[1{|X| >= 1/C} |X|]`, `X ~ N(0, τ)`.
pub fn tail_moment_mc(c: f64, tau: f64, samples: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..samples {
        let g: f64 = StandardNormal.sample(&mut rng);
        let x = (tau.sqrt() * g).abs();
        let v = if x >= 1.0 / c { x } else { 0.0 };
        s1 += v;
        s2 += v * v;
    }
    let n = samples as f64;
    let mean = s1 / n;
    (mean, ((s2 / n - mean * mean).max(0.0) / (n - 1.0)).sqrt())
}

/// Sup error at `t0` against the closed form on the inner half of the box,
/// or `None` when the game has no closed form.
pub fn heat_error(spec: &GameSpec, grids: &Grids, field: &ValueField) -> Option<f64> {
    let [lo, hi] = spec.domain[0];
    let (a, b) = (lo + (hi - lo) / 4.0, hi - (hi - lo) / 4.0);
    let mut worst = 0.0f64;
    for s in 0..grids.space.len() {
        let x = grids.space.point(s)[0];
        if x < a - 1e-12 || x > b + 1e-12 {
            continue;
        }
        for j in 0..grids.simplex.len() {
            let exact = heat_value(spec, field.t, x, grids.simplex.point(j)).ok()?;
            worst = worst.max((field.get(s, j) - exact).abs());
        }
    }
    Some(worst)
}

/// Runs every check on the configured problem.
pub fn cmd_verify(cfg: &ProblemConfig, seed: u64) -> Result<Vec<Outcome>> {
    let spec = GameSpec::from_config(&cfg.game)?;
    let grids = Grids::from_config(&spec, &cfg.discretization);
    let rule = GHRule::new(cfg.quadrature.order, spec.d)?;
    let sol = solve(&spec, &grids, &rule, SolveOptions::default())?;
    let r = &sol.report;
    let mut out = Vec::new();

    let growth = check_growth(&spec, 2000, seed)?;
    out.push(outcome(
        "hamiltonian-growth",
        growth.max_violation <= 1e-9,
        format!("fitted {:.4} vs declared {:.4}", growth.fitted_growth, growth.declared_growth),
    ));
    let gap = growth.max_isaacs_gap.max(r.max_isaacs_gap);
    out.push(outcome("isaacs-condition", gap <= ISAACS_TOL, format!("max gap {gap:.3e}")));

    let lip_g = terminal_lipschitz(&spec, &grids);
    out.push(outcome(
        "terminal-lipschitz",
        lip_g <= spec.bounds.lip_g * (1.0 + 1e-9) + 1e-12,
        format!("observed {lip_g:.4} vs declared {:.4}", spec.bounds.lip_g),
    ));

    out.push(outcome(
        "convexity",
        r.max_convexity_residual <= 1e-10,
        format!("max residual {:.3e}", r.max_convexity_residual),
    ));
    let chord = r.slices.iter().fold(f64::NEG_INFINITY, |a, s| a.max(s.chord_excess));
    out.push(outcome("chord-bound", chord <= 1e-10, format!("max excess {chord:.3e}")));

    out.push(outcome(
        "lipschitz-growth-x",
        r.lipschitz_growth.ok,
        format!("observed {:.4} vs bound {:.4}", r.lipschitz_growth.observed, r.lipschitz_growth.bound),
    ));
    let series: Vec<(f64, f64)> = r.slices.iter().map(|s| (s.t, s.lip_p)).collect();
    let (bound_p, obs_p) = growth_bound(spec.t_end, spec.t0, &series);
    out.push(outcome("lipschitz-growth-p", obs_p <= bound_p, format!("observed {obs_p:.4} vs bound {bound_p:.4}")));
    out.push(outcome(
        "boundedness",
        r.boundedness.ok,
        format!("observed {:.4} vs bound {:.4}", r.boundedness.observed, r.boundedness.bound),
    ));
    out.push(outcome(
        "holder-in-time",
        r.holder.ok,
        format!("observed {:.4} vs bound {:.4}", r.holder.observed, r.holder.bound),
    ));

    if grids.time.steps() > 0 {
        let w = splitting_identities(&spec, &sol, &rule, 1000, seed)?;
        out.push(outcome(
            "splitting-identities",
            w[0] <= 1e-12 && w[1] <= 1e-12 && w[2] <= 1e-10,
            format!("weights {:.1e}, barycenter {:.1e}, value {:.1e}", w[0], w[1], w[2]),
        ));
        let dpp = dpp_check(&spec, &sol, &rule, 1000, seed)?;
        out.push(outcome("one-step-dpp", dpp <= 1e-10, format!("max residual {dpp:.3e}")));
        let (mart, rows) = kernel_martingale(&sol)?;
        out.push(outcome(
            "kernel-martingale",
            mart <= 1e-12 && rows <= 1e-12,
            format!("mean {mart:.1e}, row sums {rows:.1e}"),
        ));
    }

    let idem = envelope_idempotence(&grids.simplex, 100, seed)?;
    out.push(outcome("envelope-idempotence", idem <= 1e-12, format!("max change {idem:.3e}")));
    let o2 = envelope_vs_oracle(&SimplexGrid::new(2, 12), 20, seed)?;
    let o3 = envelope_vs_oracle(&SimplexGrid::new(3, 6), 10, seed)?;
    out.push(outcome(
        "envelope-oracle",
        o2 <= 1e-9 && o3 <= 1e-9,
        format!("I=2 {o2:.2e}, I=3 {o3:.2e}"),
    ));

    let tau = if grids.time.steps() > 0 { grids.time.tau() } else { 0.05 };
    let z = quadrature_vs_mc(&spec, &rule, tau, 50, 100_000, seed)?;
    out.push(outcome("quadrature-vs-mc", z <= 4.0, format!("max deviation {z:.2} SE")));

    if grids.time.steps() > 0 {
        let (viol, worst, slack) = monotonicity_check(&spec, &grids, &rule, 200, seed)?;
        out.push(outcome(
            "monotonicity",
            viol == 0,
            format!("{viol} violations, worst shortfall {worst:.3e}, slack {slack:.3e}"),
        ));
    }

    let mut tail_z = 0.0f64;
    for (i, &(c, t)) in [(10.0, 0.04), (5.0, 0.1), (2.0, 0.25)].iter().enumerate() {
        let (m, se) = tail_moment_mc(c, t, 1_000_000, seed.wrapping_add(i as u64));
        tail_z = tail_z.max((m - gaussian_tail_moment(c, t, 1)).abs() / se);
    }
    out.push(outcome("tail-moment", tail_z <= 4.0, format!("max deviation {tail_z:.2} SE")));

    if let Some(err) = heat_error(&spec, &grids, &sol.fields[0]) {
        out.push(outcome("closed-form", err <= 2e-2, format!("interior sup error {err:.3e}")));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use isaacs_vex::model::builtin_problem;

    #[test]
    fn ordered_fields_are_ordered_and_lipschitz() {
        let spec = builtin_problem("heat").unwrap();
        let grids = Grids::new(&spec, 4, &[41], 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (hi, lo) = random_ordered_fields(&grids, 4, 2.0, &mut rng);
            assert!(hi.values.iter().zip(&lo.values).all(|(a, b)| a >= b));
            let h = grids.space.spacing()[0];
            for s in 0..40 {
                for j in 0..grids.simplex.len() {
                    assert!((hi.get(s + 1, j) - hi.get(s, j)).abs() <= 2.0 * h + 1e-12);
                }
            }
        }
    }

    #[test]
    fn growth_bound_of_flat_series() {
        let (b, o) = growth_bound(1.0, 0.0, &[(0.0, 1.0), (0.5, 1.0), (1.0, 1.0)]);
        assert_eq!(o, 1.0);
        assert!((b - 1.1).abs() < 1e-9);
    }

    #[test]
    fn tail_mc_matches_closed_form() {
        let (m, se) = tail_moment_mc(2.0, 0.25, 200_000, 1);
        assert!((m - gaussian_tail_moment(2.0, 0.25, 1)).abs() <= 4.0 * se);
    }

    #[test]
    fn nonlipschitz_payoff_is_flagged() {
        let mut cfg = isaacs_vex::model::builtin_config("heat").unwrap();
        cfg.game.g = vec!["sqrt(abs(x))".into(), "sqrt(abs(x))".into()];
        cfg.game.bounds.g = 3.0;
        let spec = GameSpec::from_config(&cfg.game).unwrap();
        let grids = Grids::from_config(&spec, &cfg.discretization);
        assert!(terminal_lipschitz(&spec, &grids) > spec.bounds.lip_g);
    }
}
