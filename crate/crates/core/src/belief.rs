//! One-step belief feedbacks and simulated a posteriori belief paths.
//!
//! At `(k, x, p)` with split `p = Σ_l λ_l π^l`, the informed player who knows
//! scenario `i` moves the public belief to `π^l` with probability
//! `λ_l (π^l)_i / p_i`. Averaged over `i ~ p` the jump to `π^l` has
//! probability `λ_l`, and the posterior of `i` after it is `(π^l)_i`, so the
//! beliefs form a martingale. At the end the scenario is revealed.

use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::convexify::{EnvelopeSplit, NodeSplit};
use crate::error::{Error, Result};
use crate::grid::{interpolate, Grids, SimplexGrid};
use crate::hamiltonian::HamiltonianTable;
use crate::model::GameSpec;
use crate::quadrature::{step_expectation, GHRule};
use crate::scheme::Solution;

/// Tolerance on `Σ_l λ_l (π^l)_i = p_i`.
pub const SPLIT_TOL: f64 = 1e-9;

/// Transition law of the belief out of one simplex node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OneStepKernel {
    pub base: usize,
    /// Split points and their unconditional probabilities `λ_l`.
    pub points: Vec<usize>,
    pub lambda: Vec<f64>,
    /// `rows[i]`: (target node, probability) given the hidden scenario `i`.
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl OneStepKernel {
    /// `Σ_i p_i Σ_l q_{i,l} π^l`, which equals the base point.
    pub fn mean_target(&self, simplex: &SimplexGrid) -> Vec<f64> {
        let p = simplex.point(self.base);
        let mut out = vec![0.0; p.len()];
        for (i, row) in self.rows.iter().enumerate() {
            for &(node, q) in row {
                for (o, c) in out.iter_mut().zip(simplex.point(node)) {
                    *o += p[i] * q * c;
                }
            }
        }
        out
    }
}

/// Kernel of the split stored at simplex node `base`.
pub fn kernel_from_split(simplex: &SimplexGrid, split: &NodeSplit, base: usize) -> Result<OneStepKernel> {
    let p = simplex.point(base);
    for (coord, &expected) in p.iter().enumerate() {
        let got: f64 = split.weights.iter().zip(&split.points).map(|(w, &q)| w * simplex.point(q)[coord]).sum();
        if (got - expected).abs() > SPLIT_TOL {
            return Err(Error::InconsistentSplit { coord, got, expected });
        }
    }
    let rows = (0..p.len())
        .map(|i| {
            if simplex.composition(base)[i] == 0 {
                return vec![(base, 1.0)];
            }
            split
                .weights
                .iter()
                .zip(&split.points)
                .map(|(&w, &q)| (q, w * simplex.point(q)[i] / p[i]))
                .filter(|&(_, prob)| prob > 0.0)
                .collect()
        })
        .collect();
    Ok(OneStepKernel { base, points: split.points.clone(), lambda: split.weights.clone(), rows })
}

/// One recorded step of a belief path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeliefStep {
    pub k: usize,
    pub t: f64,
    pub x: Vec<f64>,
    /// Simplex-grid node of the belief.
    pub p: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeliefPath {
    pub path_id: u64,
    /// Hidden scenario, drawn once from the initial belief.
    pub scenario: usize,
    /// Steps `k = 0..=L`, then the revelation step `k = L + 1` at `t = T`.
    pub steps: Vec<BeliefStep>,
}

fn categorical(rng: &mut ChaCha8Rng, probs: impl Iterator<Item = f64> + Clone) -> usize {
    let total: f64 = probs.clone().sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, q) in probs.enumerate() {
        if q <= 0.0 {
            continue;
        }
        acc += q;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Simulates `n_paths` belief paths from `(x0, p0)`; `p0` is a simplex node.
///
/// Path `n` uses a ChaCha8 stream `n` under `seed`, so results do not depend
/// on how paths are scheduled.
pub fn simulate_beliefs(
    spec: &GameSpec,
    grids: &Grids,
    splits: &[Vec<EnvelopeSplit>],
    x0: &[f64],
    p0: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<BeliefPath>> {
    let steps = grids.time.steps();
    if splits.len() != steps {
        return Err(Error::Validation("belief simulation needs the envelope splits of every step".into()));
    }
    let tau = grids.time.tau();
    let sqrt_tau = tau.sqrt();
    let simplex = &grids.simplex;
    (0..n_paths as u64)
        .into_par_iter()
        .map(|path_id| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(path_id);
            let scenario = categorical(&mut rng, simplex.point(p0).iter().copied());
            let mut x = x0.to_vec();
            let mut p = p0;
            let mut record = Vec::with_capacity(steps + 2);
            for k in 0..steps {
                let t = grids.time.node(k);
                record.push(BeliefStep { k, t, x: x.clone(), p });
                let s = grids.space.nearest(&x);
                let kernel = kernel_from_split(simplex, splits[k][s].node(p), p)?;
                let row = &kernel.rows[scenario];
                p = row[categorical(&mut rng, row.iter().map(|a| a.1))].0;
                let sigma = spec.sigma(t, &x);
                let db: Vec<f64> = (0..spec.d).map(|_| StandardNormal.sample(&mut rng)).collect();
                x = (0..spec.d)
                    .map(|r| x[r] + sqrt_tau * (0..spec.d).map(|c| sigma[(r, c)] * db[c]).sum::<f64>())
                    .collect();
            }
            record.push(BeliefStep { k: steps, t: grids.time.node(steps), x: x.clone(), p });
            record.push(BeliefStep { k: steps + 1, t: grids.time.node(steps), x, p: simplex.vertex(scenario) });
            Ok(BeliefPath { path_id, scenario, steps: record })
        })
        .collect()
}

/// Aggregate statistics of simulated paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeliefSummary {
    pub n_paths: usize,
    pub seed: u64,
    pub initial_belief: Vec<f64>,
    /// Empirical mean belief at every recorded step `k = 0..=L+1`.
    pub mean_belief: Vec<Vec<f64>>,
    /// `max_i |mean_k,i - p0_i|` per step.
    pub drift: Vec<f64>,
    /// `4 max_i sqrt(p0_i (1 - p0_i) / n)`, the Monte Carlo tolerance on `drift`.
    pub drift_tolerance: f64,
    /// Number of paths whose belief first reaches a vertex at step `k`.
    pub revelation_histogram: Vec<usize>,
    pub scenario_counts: Vec<usize>,
}

pub fn summarize(simplex: &SimplexGrid, paths: &[BeliefPath], seed: u64) -> BeliefSummary {
    let n_sc = simplex.n_scenarios();
    let n = paths.len();
    let len = paths.first().map_or(0, |p| p.steps.len());
    let p0 = paths.first().map_or(vec![0.0; n_sc], |p| simplex.point(p.steps[0].p).to_vec());
    let mut mean_belief = vec![vec![0.0; n_sc]; len];
    let mut histogram = vec![0; len];
    let mut scenario_counts = vec![0; n_sc];
    for path in paths {
        scenario_counts[path.scenario] += 1;
        for (acc, step) in mean_belief.iter_mut().zip(&path.steps) {
            for (a, c) in acc.iter_mut().zip(simplex.point(step.p)) {
                *a += c;
            }
        }
        if let Some(k) = path.steps.iter().position(|s| simplex.is_vertex(s.p).is_some()) {
            histogram[k] += 1;
        }
    }
    for row in &mut mean_belief {
        row.iter_mut().for_each(|v| *v /= n.max(1) as f64);
    }
    let drift = mean_belief
        .iter()
        .map(|row| row.iter().zip(&p0).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
        .collect();
    let drift_tolerance =
        4.0 * p0.iter().fold(0.0f64, |m, &q| m.max((q * (1.0 - q) / n.max(1) as f64).sqrt()));
    BeliefSummary {
        n_paths: n,
        seed,
        initial_belief: p0,
        mean_belief,
        drift,
        drift_tolerance,
        revelation_histogram: histogram,
        scenario_counts,
    }
}

/// `|V(t_k, x, p) - Σ_l λ_l (E[V(t_{k+1}, X, π^l)] + τ H(t_k, x, zbar(π^l), π^l))|`
/// at space node `s` and simplex node `j`, by direct re-evaluation.
pub fn dpp_residual(
    spec: &GameSpec,
    solution: &Solution,
    rule: &GHRule,
    k: usize,
    s: usize,
    j: usize,
) -> Result<f64> {
    let grids = &solution.grids;
    assert!(k < grids.time.steps(), "no step after the last slice");
    let split = solution.splits[k][s].node(j);
    let t = grids.time.node(k);
    let tau = grids.time.tau();
    let x = grids.space.point(s);
    let next = &solution.fields[k + 1];
    let table = HamiltonianTable::new(spec, t, &x)?;
    let mut total = 0.0;
    for (&w, &q) in split.weights.iter().zip(&split.points) {
        let phi = |y: &[f64]| interpolate(next, &grids.space, y, q);
        let e = step_expectation(phi, spec, t, &x, tau, rule)?;
        let h = table.eval(&e.zbar, grids.simplex.point(q));
        total += w * (e.mean + tau * h.value);
    }
    Ok((solution.fields[k].get(s, j) - total).abs())
}
