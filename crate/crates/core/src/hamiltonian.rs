//! Isaacs Hamiltonian over finite control grids.
//!
//! `H(t, x, ξ, p) = max_v min_u { <b(t,x,u,v), ξ> + Σ_i p_i l_i(t,x,u,v) }`,
//! evaluated by enumeration. The dual ordering `min_u max_v` is computed
//! alongside; their difference is the Isaacs gap of the grids.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GameSpec;

/// Result of one Hamiltonian evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianValue {
    /// sup-inf value, the one used by the scheme.
    pub value: f64,
    /// inf-sup minus sup-inf; nonnegative up to rounding.
    pub isaacs_gap: f64,
    /// Minimizing control index at the maximizing `v`.
    pub argmin_u: usize,
    pub argmax_v: usize,
}

/// Drift and running costs tabulated over `U × V` at a fixed `(t, x)`.
///
/// The scheme evaluates `H` at many `(ξ, p)` for the same `(t, x)`, so the
/// coefficient interpreter runs once per space node and step.
#[derive(Debug, Clone)]
pub struct HamiltonianTable {
    d: usize,
    n_scenarios: usize,
    nu: usize,
    nv: usize,
    drift: Vec<f64>,
    running: Vec<f64>,
}

impl HamiltonianTable {
    pub fn new(spec: &GameSpec, t: f64, x: &[f64]) -> Result<Self> {
        let (d, n) = (spec.d, spec.n_scenarios);
        let (nu, nv) = (spec.controls_u.len(), spec.controls_v.len());
        let mut drift = vec![0.0; nu * nv * d];
        let mut running = vec![0.0; nu * nv * n];
        for (iu, u) in spec.controls_u.iter().enumerate() {
            for (iv, v) in spec.controls_v.iter().enumerate() {
                let cell = iu * nv + iv;
                let b = &mut drift[cell * d..(cell + 1) * d];
                spec.drift(t, x, u, v, b);
                if b.iter().any(|c| !c.is_finite()) {
                    return Err(Error::NonFiniteCoefficient { what: "b".into(), t, x: x.to_vec() });
                }
                for i in 0..n {
                    let l = spec.running(i, t, x, u, v);
                    if !l.is_finite() {
                        return Err(Error::NonFiniteCoefficient {
                            what: format!("l[{i}]"),
                            t,
                            x: x.to_vec(),
                        });
                    }
                    running[cell * n + i] = l;
                }
            }
        }
        Ok(HamiltonianTable { d, n_scenarios: n, nu, nv, drift, running })
    }

    /// Inner payoff `<b, ξ> + Σ_i p_i l_i` at control pair `(iu, iv)`.
    #[inline]
    pub fn payoff(&self, iu: usize, iv: usize, xi: &[f64], p: &[f64]) -> f64 {
        let cell = iu * self.nv + iv;
        let b = &self.drift[cell * self.d..(cell + 1) * self.d];
        let l = &self.running[cell * self.n_scenarios..(cell + 1) * self.n_scenarios];
        let mut dot = 0.0;
        for (bj, xj) in b.iter().zip(xi) {
            dot += bj * xj;
        }
        let mut cost = 0.0;
        for (pi, li) in p.iter().zip(l) {
            cost += pi * li;
        }
        dot + cost
    }

    pub fn eval(&self, xi: &[f64], p: &[f64]) -> HamiltonianValue {
        let mut grid = vec![0.0; self.nu * self.nv];
        for iu in 0..self.nu {
            for iv in 0..self.nv {
                grid[iu * self.nv + iv] = self.payoff(iu, iv, xi, p);
            }
        }
        // sup over v of inf over u; strict comparisons keep the lowest index
        let mut best = f64::NEG_INFINITY;
        let (mut arg_u, mut arg_v) = (0, 0);
        for iv in 0..self.nv {
            let mut inner = f64::INFINITY;
            let mut inner_u = 0;
            for iu in 0..self.nu {
                let val = grid[iu * self.nv + iv];
                if val < inner {
                    inner = val;
                    inner_u = iu;
                }
            }
            if inner > best {
                best = inner;
                arg_u = inner_u;
                arg_v = iv;
            }
        }
        let mut dual = f64::INFINITY;
        for iu in 0..self.nu {
            let inner = (0..self.nv).map(|iv| grid[iu * self.nv + iv]).fold(f64::NEG_INFINITY, f64::max);
            dual = dual.min(inner);
        }
        HamiltonianValue { value: best, isaacs_gap: dual - best, argmin_u: arg_u, argmax_v: arg_v }
    }
}

/// Tolerance on `Σ p_i = 1` accepted by [`ham`].
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Hamiltonian at a single point.
pub fn ham(spec: &GameSpec, t: f64, x: &[f64], xi: &[f64], p: &[f64]) -> Result<HamiltonianValue> {
    if p.len() != spec.n_scenarios
        || p.iter().any(|&v| v < -SIMPLEX_TOL)
        || (p.iter().sum::<f64>() - 1.0).abs() > SIMPLEX_TOL
    {
        return Err(Error::Validation(format!("belief {p:?} is not on the simplex")));
    }
    Ok(HamiltonianTable::new(spec, t, x)?.eval(xi, p))
}

/// Empirical growth and Lipschitz constants of `H` over random samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub samples: usize,
    /// Smallest `c` with `|H| <= c (1 + |ξ|)` on the samples.
    pub fitted_growth: f64,
    /// Observed Lipschitz modulus in ξ.
    pub lip_xi: f64,
    /// Observed Lipschitz modulus in p (Euclidean).
    pub lip_p: f64,
    /// Observed modulus of `|ΔH| / ((1 + |ξ|)(|Δx| + |Δt|))`.
    pub lip_tx: f64,
    /// Growth constant implied by the declared bounds, `max(‖b‖∞, ‖l‖∞)`.
    pub declared_growth: f64,
    /// `max(|H| - declared (1 + |ξ|), 0)` over the samples.
    pub max_violation: f64,
    pub max_isaacs_gap: f64,
}

const XI_RANGE: f64 = 10.0;

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Fits growth and Lipschitz constants of `H` from `samples` random base
/// points, each paired with a perturbation in ξ, in p and in (t, x).
pub fn check_growth(spec: &GameSpec, samples: usize, seed: u64) -> Result<GrowthReport> {
    assert!(samples >= 2, "need at least two samples");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let declared = spec.bounds.b.max(spec.bounds.l);
    let mut rep = GrowthReport {
        samples,
        fitted_growth: 0.0,
        lip_xi: 0.0,
        lip_p: 0.0,
        lip_tx: 0.0,
        declared_growth: declared,
        max_violation: 0.0,
        max_isaacs_gap: 0.0,
    };
    let draw_x = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        spec.domain.iter().map(|[lo, hi]| rng.random_range(*lo..=*hi)).collect()
    };
    for _ in 0..samples {
        let t = rng.random_range(spec.t0..=spec.t_end);
        let x = draw_x(&mut rng);
        let xi: Vec<f64> = (0..spec.d).map(|_| rng.random_range(-XI_RANGE..=XI_RANGE)).collect();
        let p = random_simplex(&mut rng, spec.n_scenarios);
        let table = HamiltonianTable::new(spec, t, &x)?;
        let h = table.eval(&xi, &p);
        rep.max_isaacs_gap = rep.max_isaacs_gap.max(h.isaacs_gap);
        let scale = 1.0 + norm(&xi);
        rep.fitted_growth = rep.fitted_growth.max(h.value.abs() / scale);
        rep.max_violation = rep.max_violation.max(h.value.abs() - declared * scale);

        let step: f64 = rng.random_range(1e-3..1.0);
        let xi2: Vec<f64> = xi.iter().map(|c| c + step * rng.random_range(-1.0..=1.0)).collect();
        let dxi = dist(&xi, &xi2);
        if dxi > 0.0 {
            let h2 = table.eval(&xi2, &p).value;
            rep.lip_xi = rep.lip_xi.max((h2 - h.value).abs() / dxi);
        }

        let p2 = random_simplex(&mut rng, spec.n_scenarios);
        let dp = dist(&p, &p2);
        if dp > 0.0 {
            let h2 = table.eval(&xi, &p2).value;
            rep.lip_p = rep.lip_p.max((h2 - h.value).abs() / dp);
        }

        let t2 = (t + step * rng.random_range(-0.1..=0.1)).clamp(spec.t0, spec.t_end);
        let x2: Vec<f64> = x
            .iter()
            .zip(&spec.domain)
            .map(|(c, [lo, hi])| (c + step * rng.random_range(-1.0..=1.0)).clamp(*lo, *hi))
            .collect();
        let dtx = dist(&x, &x2) + (t - t2).abs();
        if dtx > 0.0 {
            let h2 = HamiltonianTable::new(spec, t2, &x2)?.eval(&xi, &p).value;
            rep.lip_tx = rep.lip_tx.max((h2 - h.value).abs() / (scale * dtx));
        }
    }
    rep.max_violation = rep.max_violation.max(0.0);
    Ok(rep)
}
