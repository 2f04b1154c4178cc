//! One-step Gaussian expectations by tensor Gauss-Hermite quadrature.
//!
//! For a continuation `φ` and the Euler step `X = x + σ(t, x) ΔB`,
//! `ΔB ~ N(0, τ Id)`, this module computes
//!
//! ```text
//! mean = E[φ(X)]
//! zbar = (1/τ) E[φ(X) (σ*)⁻¹(t, x) ΔB]
//! ```
//!
//! with `ΔB = √τ ζ` and `ζ` running over the nodes of a probabilists'
//! Gauss-Hermite rule.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::GameSpec;

/// Gauss-Hermite rule for the standard normal, tensorized to `d` axes.
#[derive(Debug, Clone, PartialEq)]
pub struct GHRule {
    order: usize,
    d: usize,
    nodes_1d: Vec<f64>,
    weights_1d: Vec<f64>,
    /// Row-major `Q^d × d`, last axis fastest.
    points: Vec<f64>,
    weights: Vec<f64>,
    /// Index of the antipodal point `-ζ_q`.
    antipode: Vec<usize>,
}

impl GHRule {
    /// Builds the rule by Golub-Welsch on the Jacobi matrix of the
    /// probabilists' Hermite recurrence and checks the moment invariants.
    pub fn new(order: usize, d: usize) -> Result<GHRule> {
        if order == 0 || d == 0 {
            return Err(Error::Validation("quadrature needs order >= 1 and d >= 1".into()));
        }
        let q = order;
        let jacobi = DMatrix::from_fn(q, q, |r, c| {
            if r + 1 == c || c + 1 == r {
                (r.max(c) as f64).sqrt()
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..q)
            .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        // enforce exact symmetry about zero
        let mut nodes = vec![0.0; q];
        let mut weights = vec![0.0; q];
        for i in 0..q {
            let j = q - 1 - i;
            nodes[i] = 0.5 * (pairs[i].0 - pairs[j].0);
            weights[i] = 0.5 * (pairs[i].1 + pairs[j].1);
        }
        let total = crate::sum::pairwise(&weights);
        weights.iter_mut().for_each(|w| *w /= total);

        let n_points = q.pow(d as u32);
        let mut points = Vec::with_capacity(n_points * d);
        let mut tensor_w = Vec::with_capacity(n_points);
        let mut antipode = Vec::with_capacity(n_points);
        for flat in 0..n_points {
            let mut rem = flat;
            let mut idx = vec![0; d];
            for a in (0..d).rev() {
                idx[a] = rem % q;
                rem /= q;
            }
            let mut w = 1.0;
            let mut anti = 0;
            for &i in &idx {
                points.push(nodes[i]);
                w *= weights[i];
                anti = anti * q + (q - 1 - i);
            }
            tensor_w.push(w);
            antipode.push(anti);
        }
        let rule = GHRule {
            order,
            d,
            nodes_1d: nodes,
            weights_1d: weights,
            points,
            weights: tensor_w,
            antipode,
        };
        rule.check_moments()?;
        Ok(rule)
    }

    fn check_moments(&self) -> Result<()> {
        let sum: f64 = self.weights_1d.iter().sum();
        let m2: f64 = self.nodes_1d.iter().zip(&self.weights_1d).map(|(z, w)| w * z * z).sum();
        let mut odd_ok = true;
        for k in (1..2 * self.order).step_by(2) {
            let m: f64 =
                self.nodes_1d.iter().zip(&self.weights_1d).map(|(z, w)| w * z.powi(k as i32)).sum();
            let scale = double_factorial(k as u32 + 1).max(1.0);
            odd_ok &= m.abs() <= 1e-13 * scale;
        }
        let m2_ok = self.order == 1 || (m2 - 1.0).abs() <= 1e-12;
        if (sum - 1.0).abs() > 1e-14 || !odd_ok || !m2_ok {
            return Err(Error::Validation(format!(
                "Gauss-Hermite rule of order {} failed its moment checks",
                self.order
            )));
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn nodes_1d(&self) -> &[f64] {
        &self.nodes_1d
    }

    pub fn weights_1d(&self) -> &[f64] {
        &self.weights_1d
    }

    pub fn point(&self, q: usize) -> &[f64] {
        &self.points[q * self.d..(q + 1) * self.d]
    }

    pub fn weight(&self, q: usize) -> f64 {
        self.weights[q]
    }

    /// Weighted sum `Σ_q terms[q]` with antipodal pairs added first and the
    /// pair sums reduced by pairwise summation. Odd integrands cancel exactly.
    pub fn symmetric_sum(&self, terms: &[f64]) -> f64 {
        let mut pairs = Vec::with_capacity(terms.len() / 2 + 1);
        for (q, &t) in terms.iter().enumerate() {
            let a = self.antipode[q];
            if a > q {
                pairs.push(t + terms[a]);
            } else if a == q {
                pairs.push(t);
            }
        }
        crate::sum::pairwise(&pairs)
    }
}

fn double_factorial(n: u32) -> f64 {
    (1..=n).rev().step_by(2).map(|k| k as f64).product()
}

/// Result of one step expectation.
#[derive(Debug, Clone, PartialEq)]
pub struct StepExpectation {
    pub mean: f64,
    pub zbar: Vec<f64>,
}

/// Transition from a fixed `(t, x)` over one step of length `τ`: the
/// quadrature points `x + √τ σ ζ_q` and the directions `(σ*)⁻¹ ζ_q`.
#[derive(Debug, Clone)]
pub struct Transition {
    d: usize,
    points: Vec<f64>,
    dirs: Vec<f64>,
    inv_sqrt_tau: f64,
}

impl Transition {
    pub fn new(spec: &GameSpec, t: f64, x: &[f64], tau: f64, rule: &GHRule) -> Result<Transition> {
        assert!(tau > 0.0, "step length must be positive");
        let sigma = spec.sigma(t, x);
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteCoefficient { what: "sigma".into(), t, x: x.to_vec() });
        }
        if !(sigma.determinant().abs() > crate::model::SIGMA_DET_EPS) {
            return Err(Error::SingularSigma { t, x: x.to_vec() });
        }
        let inv_t = sigma
            .transpose()
            .try_inverse()
            .ok_or_else(|| Error::SingularSigma { t, x: x.to_vec() })?;
        Ok(Transition::with_matrices(x, tau, &sigma, &inv_t, rule))
    }

    pub fn with_matrices(
        x: &[f64],
        tau: f64,
        sigma: &DMatrix<f64>,
        sigma_inv_t: &DMatrix<f64>,
        rule: &GHRule,
    ) -> Transition {
        let d = x.len();
        let sqrt_tau = tau.sqrt();
        let mut points = Vec::with_capacity(rule.len() * d);
        let mut dirs = Vec::with_capacity(rule.len() * d);
        for q in 0..rule.len() {
            let z = rule.point(q);
            for r in 0..d {
                let mut acc = 0.0;
                for c in 0..d {
                    acc += sigma[(r, c)] * z[c];
                }
                points.push(x[r] + sqrt_tau * acc);
            }
            for r in 0..d {
                let mut acc = 0.0;
                for c in 0..d {
                    acc += sigma_inv_t[(r, c)] * z[c];
                }
                dirs.push(acc);
            }
        }
        Transition { d, points, dirs, inv_sqrt_tau: 1.0 / sqrt_tau }
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, q: usize) -> &[f64] {
        &self.points[q * self.d..(q + 1) * self.d]
    }

    /// Combines continuation values `phi[q] = φ(point(q))` into mean and zbar.
    pub fn combine(&self, rule: &GHRule, phi: &[f64]) -> StepExpectation {
        let n = self.len();
        // centering on one sample makes constants exact despite Σw = 1 ± ulp
        let anchor = phi[n / 2];
        let centered: Vec<f64> = (0..n).map(|q| rule.weight(q) * (phi[q] - anchor)).collect();
        let mean = anchor + rule.symmetric_sum(&centered);
        let weighted: Vec<f64> = (0..n).map(|q| rule.weight(q) * phi[q]).collect();
        let mut terms = vec![0.0; n];
        let zbar = (0..self.d)
            .map(|c| {
                for q in 0..n {
                    terms[q] = weighted[q] * self.dirs[q * self.d + c];
                }
                rule.symmetric_sum(&terms) * self.inv_sqrt_tau
            })
            .collect();
        StepExpectation { mean, zbar }
    }
}

/// `E[φ(X)]` and `zbar` for one Euler step from `(t, x)`.
pub fn step_expectation<F>(
    phi: F,
    spec: &GameSpec,
    t: f64,
    x: &[f64],
    tau: f64,
    rule: &GHRule,
) -> Result<StepExpectation>
where
    F: Fn(&[f64]) -> f64,
{
    let tr = Transition::new(spec, t, x, tau, rule)?;
    let vals: Vec<f64> = (0..tr.len()).map(|q| phi(tr.point(q))).collect();
    Ok(tr.combine(rule, &vals))
}

/// `Γ(d/2)` for positive integers `d`, by the half-integer recurrence.
pub fn gamma_half(d: u32) -> f64 {
    assert!(d >= 1);
    let (mut g, mut a) = if d % 2 == 0 { (1.0, 1.0) } else { (std::f64::consts::PI.sqrt(), 0.5) };
    let target = d as f64 / 2.0;
    while a < target {
        g *= a;
        a += 1.0;
    }
    g
}

/// Closed-form Gaussian tail moment
/// `τ^{1/2} e^{-1/(2 C² τ)} / (2^{d/2 - 1} Γ(d/2))`.
///
/// For `d = 1` this is `E[1{|X| >= 1/C} |X|]` with `X ~ N(0, τ)`; it bounds
/// the monotonicity defect of one scheme step.
pub fn gaussian_tail_moment(c: f64, tau: f64, d: u32) -> f64 {
    assert!(c > 0.0 && tau > 0.0 && d >= 1);
    let norm = 2f64.powf(d as f64 / 2.0 - 1.0) * gamma_half(d);
    tau.sqrt() * (-1.0 / (2.0 * c * c * tau)).exp() / norm
}
