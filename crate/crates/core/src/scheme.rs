//! Backward time stepping.
//!
//! ```text
//! V(t_L, x, p)     = <p, g(x)>
//! V(t_{k-1}, x, p) = Vex_p( E[V(t_k, x + σ ΔB, p)] + τ H(t_{k-1}, x, zbar, p) )
//! ```
//!
//! Each step computes the expectation and `zbar` at every (space, simplex)
//! node, adds the Hamiltonian term, and convexifies in `p` last.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convexify::{convexity_residual, vex, EnvelopeSplit};
use crate::error::{Error, Result};
use crate::grid::{Grids, SimplexGrid, SpaceGrid, Stencil, ValueField};
use crate::hamiltonian::HamiltonianTable;
use crate::model::GameSpec;
use crate::quadrature::{GHRule, Transition};

/// Knobs of [`solve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Keep every step's envelope splits (needed for belief simulation).
    pub keep_splits: bool,
    /// Recompute the convexity residual of every slice.
    pub check_convexity: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { keep_splits: true, check_convexity: true }
    }
}

/// Output of one backward step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub field: ValueField,
    /// One envelope per space node.
    pub splits: Vec<EnvelopeSplit>,
    pub max_isaacs_gap: f64,
    pub n_split: usize,
    pub wall_seconds: f64,
}

/// Per-slice diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceDiagnostics {
    pub k: usize,
    pub t: f64,
    pub max_value: f64,
    pub min_value: f64,
    pub lip_x: f64,
    pub lip_p: f64,
    pub convexity_residual: f64,
    /// Largest `V(p) - Σ p_i V(e^i)`; nonpositive for convex slices.
    pub chord_excess: f64,
    pub max_isaacs_gap: f64,
    pub n_split: usize,
    pub wall_seconds: f64,
}

/// A computed bound next to the observed quantity it controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub bound: f64,
    pub observed: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub steps: usize,
    pub tau: f64,
    pub space_nodes: Vec<usize>,
    pub simplex_m: usize,
    pub quadrature_order: usize,
    pub slices: Vec<SliceDiagnostics>,
    /// `max |V(t_{k+l}) - V(t_k)| / sqrt(t_{k+l} - t_k)` for lag `l = 1..=L`.
    pub holder_by_lag: Vec<f64>,
    pub holder_max: f64,
    pub max_isaacs_gap: f64,
    pub max_convexity_residual: f64,
    pub max_abs_value: f64,
    pub lip_x_max: f64,
    pub lip_p_max: f64,
    /// `c = max(|b|, |l|)` from the declared bounds.
    pub growth_constant: f64,
    /// Least-squares rate `c'` of `ln((M_k + 1) / (M_L + 1)) ≈ c' (T - t_k)`.
    pub fitted_lip_rate: f64,
    pub lipschitz_growth: BoundCheck,
    pub boundedness: BoundCheck,
    pub holder: BoundCheck,
    pub wall_seconds: f64,
}

/// Everything a solve produces. `fields[k]` is the slice at `t_k`;
/// `splits[k][s]` is the envelope that produced `fields[k]` at space node `s`.
#[derive(Debug, Clone)]
pub struct Solution {
    pub grids: Grids,
    pub fields: Vec<ValueField>,
    pub splits: Vec<Vec<EnvelopeSplit>>,
    pub report: SolveReport,
}

/// `c = max(sup|b|, sup|l|)`.
pub fn growth_constant(spec: &GameSpec) -> f64 {
    spec.bounds.b.max(spec.bounds.l)
}

/// Circuit breaker for runaway fields: ten times the a-priori bound.
pub fn divergence_guard(spec: &GameSpec) -> f64 {
    let c = growth_constant(spec);
    let horizon = spec.horizon();
    let lip = (spec.bounds.lip_g + c * horizon) * (c * horizon).exp();
    10.0 * (spec.bounds.g + c * horizon * (1.0 + lip))
}

/// `V(t_L, x, p) = Σ_i p_i g_i(x)`.
pub fn terminal_slice(spec: &GameSpec, grids: &Grids) -> ValueField {
    let (space, simplex) = (&grids.space, &grids.simplex);
    let k = grids.time.steps();
    let mut values = Vec::with_capacity(space.len() * simplex.len());
    for s in 0..space.len() {
        let x = space.point(s);
        let g: Vec<f64> = (0..spec.n_scenarios).map(|i| spec.terminal(i, &x)).collect();
        for j in 0..simplex.len() {
            let mut acc = 0.0;
            for (p, gi) in simplex.point(j).iter().zip(&g) {
                acc += p * gi;
            }
            values.push(acc);
        }
    }
    ValueField::new(k, grids.time.node(k), space.len(), simplex.len(), values)
}

/// Pre-envelope values `E[V(t_k, X, p)] + τ H` over the simplex grid at
/// space node `s`, for the step from `field` (slice `k`) to slice `k - 1`,
/// together with the largest Isaacs gap met.
pub fn pre_envelope(
    spec: &GameSpec,
    grids: &Grids,
    rule: &GHRule,
    field: &ValueField,
    s: usize,
) -> Result<(Vec<f64>, f64)> {
    let k = field.k;
    let t = grids.time.node(k - 1);
    let tau = grids.time.tau();
    let x = grids.space.point(s);
    let tr = Transition::new(spec, t, &x, tau, rule)?;
    let table = HamiltonianTable::new(spec, t, &x)?;
    let stencils: Vec<Stencil> = (0..tr.len()).map(|q| Stencil::new(&grids.space, tr.point(q))).collect();
    let mut phi = vec![0.0; tr.len()];
    let mut gap = 0.0f64;
    let pre = (0..grids.simplex.len())
        .map(|j| {
            for (slot, st) in phi.iter_mut().zip(&stencils) {
                *slot = st.apply(field, j);
            }
            let e = tr.combine(rule, &phi);
            let h = table.eval(&e.zbar, grids.simplex.point(j));
            gap = gap.max(h.isaacs_gap);
            e.mean + tau * h.value
        })
        .collect();
    Ok((pre, gap))
}

/// One backward step: slice `k` to slice `k - 1`.
pub fn backward_step(spec: &GameSpec, grids: &Grids, rule: &GHRule, field: &ValueField) -> Result<StepOutput> {
    assert!(field.k >= 1, "no step before the first slice");
    let start = Instant::now();
    let per_node: Vec<(EnvelopeSplit, f64)> = (0..grids.space.len())
        .into_par_iter()
        .map(|s| {
            let (pre, gap) = pre_envelope(spec, grids, rule, field, s)?;
            Ok((vex(&grids.simplex, &pre)?, gap))
        })
        .collect::<Result<_>>()?;
    let k = field.k - 1;
    let mut values = Vec::with_capacity(field.values.len());
    let mut max_gap = 0.0f64;
    let mut n_split = 0;
    let mut splits = Vec::with_capacity(per_node.len());
    for (env, gap) in per_node {
        values.extend(env.nodes.iter().map(|n| n.value));
        n_split += env.n_split();
        max_gap = max_gap.max(gap);
        splits.push(env);
    }
    let out = ValueField::new(k, grids.time.node(k), field.n_space, field.n_simplex, values);
    let bound = divergence_guard(spec);
    let worst = out.max_abs();
    if !(worst <= bound) {
        return Err(Error::DivergedField { k, value: worst, bound });
    }
    Ok(StepOutput {
        field: out,
        splits,
        max_isaacs_gap: max_gap,
        n_split,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Terminal slice followed by `L` backward steps.
pub fn solve(spec: &GameSpec, grids: &Grids, rule: &GHRule, opts: SolveOptions) -> Result<Solution> {
    let start = Instant::now();
    let steps = grids.time.steps();
    let mut fields = vec![terminal_slice(spec, grids)];
    let mut splits = Vec::new();
    let mut step_info = vec![(0.0, 0, 0.0); steps + 1];
    for k in (0..steps).rev() {
        let out = backward_step(spec, grids, rule, fields.last().unwrap())?;
        step_info[k] = (out.max_isaacs_gap, out.n_split, out.wall_seconds);
        fields.push(out.field);
        if opts.keep_splits {
            splits.push(out.splits);
        }
    }
    fields.reverse();
    splits.reverse();
    let mut report = diagnostics_with(spec, grids, rule.order(), &fields, opts.check_convexity);
    for (slice, &(gap, n_split, wall)) in report.slices.iter_mut().zip(&step_info) {
        slice.max_isaacs_gap = gap;
        slice.n_split = n_split;
        slice.wall_seconds = wall;
    }
    report.max_isaacs_gap = step_info.iter().fold(0.0, |a, s| a.max(s.0));
    report.wall_seconds = start.elapsed().as_secs_f64();
    Ok(Solution { grids: grids.clone(), fields, splits, report })
}

/// Regularity constants of a sequence of slices `fields[k]`, `k = 0..=L`.
pub fn diagnostics(spec: &GameSpec, grids: &Grids, quadrature_order: usize, fields: &[ValueField]) -> SolveReport {
    diagnostics_with(spec, grids, quadrature_order, fields, true)
}

fn diagnostics_with(
    spec: &GameSpec,
    grids: &Grids,
    quadrature_order: usize,
    fields: &[ValueField],
    check_convexity: bool,
) -> SolveReport {
    assert!(!fields.is_empty(), "at least one slice");
    let pairs = simplex_pairs(&grids.simplex);
    let slices: Vec<SliceDiagnostics> = fields
        .par_iter()
        .map(|f| slice_diagnostics(grids, &pairs, f, check_convexity))
        .collect();
    let n_lags = fields.len() - 1;
    let holder_by_lag: Vec<f64> = (1..=n_lags)
        .into_par_iter()
        .map(|lag| {
            (0..fields.len() - lag).fold(0.0f64, |acc, k| {
                let (a, b) = (&fields[k], &fields[k + lag]);
                let dt = (b.t - a.t).sqrt();
                let diff = a.values.iter().zip(&b.values).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
                acc.max(diff / dt)
            })
        })
        .collect();
    let holder_max = holder_by_lag.iter().fold(0.0f64, |a, &b| a.max(b));
    let lip_x_max = slices.iter().fold(0.0f64, |a, s| a.max(s.lip_x));
    let lip_p_max = slices.iter().fold(0.0f64, |a, s| a.max(s.lip_p));
    let max_abs_value = slices.iter().fold(0.0f64, |a, s| a.max(s.max_value.abs()).max(s.min_value.abs()));
    let c = growth_constant(spec);
    let horizon = spec.horizon();

    let m_last = slices.last().unwrap().lip_x;
    let (mut sy, mut ss) = (0.0, 0.0);
    for sl in &slices {
        let lag = spec.t_end - sl.t;
        sy += lag * ((sl.lip_x + 1.0) / (m_last + 1.0)).ln();
        ss += lag * lag;
    }
    let rate = if ss > 0.0 { (sy / ss).max(0.0) } else { 0.0 };
    let predicted = 1.1 * ((m_last + 1.0) * (rate * horizon).exp() - 1.0) + 1e-12;
    let lipschitz_growth = BoundCheck { bound: predicted, observed: lip_x_max, ok: lip_x_max <= predicted };

    let a_priori = spec.bounds.g + c * horizon * (1.0 + lip_x_max);
    let boundedness = BoundCheck { bound: a_priori, observed: max_abs_value, ok: max_abs_value <= a_priori + 1e-12 };

    let hold = 1.1
        * (spec.bounds.sigma * (spec.d as f64).sqrt() * lip_x_max + c * (1.0 + lip_x_max) * horizon.sqrt());
    let holder = BoundCheck { bound: hold, observed: holder_max, ok: holder_max <= hold };

    SolveReport {
        steps: grids.time.steps(),
        tau: grids.time.tau(),
        space_nodes: grids.space.counts().to_vec(),
        simplex_m: grids.simplex.resolution(),
        quadrature_order,
        max_convexity_residual: slices.iter().fold(0.0f64, |a, s| a.max(s.convexity_residual)),
        slices,
        holder_by_lag,
        holder_max,
        max_isaacs_gap: 0.0,
        max_abs_value,
        lip_x_max,
        lip_p_max,
        growth_constant: c,
        fitted_lip_rate: rate,
        lipschitz_growth,
        boundedness,
        holder,
        wall_seconds: 0.0,
    }
}

/// Simplex neighbor pairs `(j, j + (e_a - e_b)/m)`, `a < b`.
fn simplex_pairs(simplex: &SimplexGrid) -> Vec<(usize, usize)> {
    let n = simplex.n_scenarios();
    let mut out = Vec::new();
    for j in 0..simplex.len() {
        for a in 0..n {
            for b in a + 1..n {
                if let Some(o) = simplex.shift(j, a, b) {
                    out.push((j, o));
                }
            }
        }
    }
    out
}

fn lip_x(space: &SpaceGrid, f: &ValueField) -> f64 {
    let mut best = 0.0f64;
    for s in 0..space.len() {
        let idx = space.multi_index(s);
        for a in 0..space.dim() {
            if idx[a] + 1 >= space.counts()[a] {
                continue;
            }
            let o = s + space.strides()[a];
            let h = space.spacing()[a];
            for (u, v) in f.at_node(s).iter().zip(f.at_node(o)) {
                best = best.max((u - v).abs() / h);
            }
        }
    }
    best
}

fn slice_diagnostics(
    grids: &Grids,
    pairs: &[(usize, usize)],
    f: &ValueField,
    check_convexity: bool,
) -> SliceDiagnostics {
    let simplex = &grids.simplex;
    let dist = std::f64::consts::SQRT_2 / simplex.resolution() as f64;
    let vertices: Vec<usize> = (0..simplex.n_scenarios()).map(|i| simplex.vertex(i)).collect();
    let mut lip_p = 0.0f64;
    let mut residual = 0.0f64;
    let mut chord = f64::NEG_INFINITY;
    for s in 0..f.n_space {
        let row = f.at_node(s);
        for &(a, b) in pairs {
            lip_p = lip_p.max((row[a] - row[b]).abs() / dist);
        }
        if check_convexity {
            residual = residual.max(convexity_residual(simplex, row).unwrap_or(f64::INFINITY));
        }
        for (j, &v) in row.iter().enumerate() {
            let mut lin = 0.0;
            for (p, &vi) in simplex.point(j).iter().zip(&vertices) {
                lin += p * row[vi];
            }
            chord = chord.max(v - lin);
        }
    }
    SliceDiagnostics {
        k: f.k,
        t: f.t,
        max_value: f.values.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)),
        min_value: f.values.iter().fold(f64::INFINITY, |a, &b| a.min(b)),
        lip_x: lip_x(&grids.space, f),
        lip_p,
        convexity_residual: residual,
        chord_excess: chord,
        max_isaacs_gap: 0.0,
        n_split: 0,
        wall_seconds: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_config, builtin_problem, GameConfig, HEAT_OFFSETS};

    fn small(name: &str, steps: usize, n: usize, m: usize) -> (GameSpec, Grids, GHRule) {
        let spec = builtin_problem(name).unwrap();
        let grids = Grids::new(&spec, steps, &[n], m);
        let rule = GHRule::new(5, spec.d).unwrap();
        (spec, grids, rule)
    }

    fn custom(edit: impl FnOnce(&mut GameConfig)) -> GameSpec {
        let mut cfg = builtin_config("heat").unwrap().game;
        edit(&mut cfg);
        GameSpec::from_config(&cfg).unwrap()
    }

    #[test]
    fn terminal_examples() {
        let (spec, grids, _) = small("heat", 4, 17, 4);
        let f = terminal_slice(&spec, &grids);
        let mid = grids.space.nearest(&[0.0]);
        let half = grids.simplex.find(&[2, 2]).unwrap();
        assert_eq!(f.get(mid, half), 0.5 * (HEAT_OFFSETS[0] + HEAT_OFFSETS[1]));
        let v = grids.simplex.vertex(0);
        for s in 0..grids.space.len() {
            assert_eq!(f.get(s, v), spec.terminal(0, &grids.space.point(s)));
        }
    }

    #[test]
    fn heat_single_step_is_gaussian_smoothing() {
        let spec = custom(|c| c.domain = vec![[-3.0, 3.0]]);
        let grids = Grids::new(&spec, 100, &[2401], 4);
        let rule = GHRule::new(5, 1).unwrap();
        let out = backward_step(&spec, &grids, &rule, &terminal_slice(&spec, &grids)).unwrap();
        let tau = grids.time.tau();
        let e1 = grids.simplex.vertex(0);
        for x in [0.0, -1.0, 0.5, 2.0] {
            let s = grids.space.nearest(&[x]);
            let xs = grids.space.point(s)[0];
            let want = (-tau / 2.0).exp() * xs.sin() + HEAT_OFFSETS[0];
            assert!((out.field.get(s, e1) - want).abs() < 1e-6, "x={x}");
        }
        assert_eq!(out.n_split, 0);
    }

    #[test]
    fn constants_are_fixed_without_running_cost() {
        let spec = custom(|c| {
            c.controls_u = vec![vec![-1.0], vec![1.0]];
            c.b = crate::model::DriftSource::Scalar("u + 0.5 * sin(x)".into());
            c.bounds.b = 1.5;
        });
        let grids = Grids::new(&spec, 8, &[21], 4);
        let rule = GHRule::new(4, 1).unwrap();
        let field = ValueField::constant(8, 1.0, 21, 5, 2.75);
        let out = backward_step(&spec, &grids, &rule, &field).unwrap();
        assert!(out.field.values.iter().all(|&v| v == 2.75));
    }

    #[test]
    fn unit_running_cost_adds_tau() {
        let spec = custom(|c| {
            c.l = vec!["1".into(), "1".into()];
            c.bounds.l = 1.0;
        });
        let grids = Grids::new(&spec, 8, &[21], 4);
        let rule = GHRule::new(4, 1).unwrap();
        let field = ValueField::constant(8, 1.0, 21, 5, 0.0);
        let out = backward_step(&spec, &grids, &rule, &field).unwrap();
        let tau = grids.time.tau();
        assert!(out.field.values.iter().all(|&v| (v - tau).abs() < 1e-15));
    }

    #[test]
    fn zero_steps_is_terminal_only() {
        let (spec, grids, rule) = small("heat", 0, 11, 2);
        let sol = solve(&spec, &grids, &rule, SolveOptions::default()).unwrap();
        assert_eq!(sol.fields.len(), 1);
        assert_eq!(sol.fields[0], terminal_slice(&spec, &grids));
        assert!(sol.splits.is_empty());
    }

    #[test]
    fn reveal_splits_at_half() {
        let (spec, grids, rule) = small("reveal2", 8, 61, 8);
        let sol = solve(&spec, &grids, &rule, SolveOptions::default()).unwrap();
        assert!(sol.report.slices[0].n_split > 0);
        assert!(sol.report.max_convexity_residual <= 1e-10);
        assert!(sol.report.slices.iter().all(|s| s.chord_excess <= 1e-10));
        assert_eq!(sol.splits.len(), 8);
        assert!(sol.report.boundedness.ok);
    }

    #[test]
    fn diverged_field_guard() {
        let (spec, grids, rule) = small("heat", 4, 11, 2);
        let field = ValueField::constant(4, 1.0, 11, 3, 1e6);
        assert!(matches!(backward_step(&spec, &grids, &rule, &field), Err(Error::DivergedField { .. })));
    }

    #[test]
    fn constant_fields_have_zero_constants() {
        let (spec, grids, _) = small("heat", 3, 11, 3);
        let fields: Vec<ValueField> =
            (0..=3).map(|k| ValueField::constant(k, grids.time.node(k), 11, 4, -1.25)).collect();
        let r = diagnostics(&spec, &grids, 5, &fields);
        assert_eq!(r.lip_x_max, 0.0);
        assert_eq!(r.lip_p_max, 0.0);
        assert_eq!(r.holder_max, 0.0);
    }

    #[test]
    fn terminal_lipschitz_of_sine() {
        let (spec, grids, _) = small("heat", 2, 161, 4);
        let r = diagnostics(&spec, &grids, 5, &[terminal_slice(&spec, &grids)]);
        assert!(r.lip_x_max <= 1.0 + grids.space.spacing()[0] * 1e-6);
        assert!(r.lip_x_max > 0.99);
    }

    #[test]
    fn report_round_trips_as_json() {
        let (spec, grids, rule) = small("pursuit1d", 3, 21, 4);
        let sol = solve(&spec, &grids, &rule, SolveOptions { keep_splits: false, check_convexity: true }).unwrap();
        let text = serde_json::to_string(&sol.report).unwrap();
        let back: SolveReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, sol.report);
        assert!(sol.splits.is_empty());
    }
}
