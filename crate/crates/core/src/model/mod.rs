//! Game definition: coefficients, control grids, horizon and domain box,
//! plus the JSON configuration that carries them.

mod builtin;
pub mod expr;

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use builtin::{builtin_config, builtin_problem, BUILTIN_NAMES, HEAT_OFFSETS};
pub use expr::{Env, Expr};

use crate::error::{Error, Result};

/// Drift given either as a single expression (d = 1) or one per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DriftSource {
    Scalar(String),
    Vector(Vec<String>),
}

impl DriftSource {
    fn components(&self) -> Vec<&str> {
        match self {
            DriftSource::Scalar(s) => vec![s.as_str()],
            DriftSource::Vector(v) => v.iter().map(String::as_str).collect(),
        }
    }
}

/// Declared a-priori constants of the problem. Norms: Euclidean for `b`,
/// max-row-sum for the matrices `sigma` and `sigma_inv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub b: f64,
    pub sigma: f64,
    pub sigma_inv: f64,
    pub l: f64,
    pub g: f64,
    /// Lipschitz constant of every `g_i`.
    pub lip_g: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lip_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lip_l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lip_sigma: Option<f64>,
}

/// The `game` block of a configuration, kept in source form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub d: usize,
    #[serde(rename = "I")]
    pub n_scenarios: usize,
    pub t0: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub domain: Vec<[f64; 2]>,
    #[serde(rename = "controls_U")]
    pub controls_u: Vec<Vec<f64>>,
    #[serde(rename = "controls_V")]
    pub controls_v: Vec<Vec<f64>>,
    pub b: DriftSource,
    pub sigma: Vec<Vec<String>>,
    pub l: Vec<String>,
    pub g: Vec<String>,
    pub bounds: Bounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationConfig {
    /// Number of time steps.
    #[serde(rename = "L")]
    pub steps: usize,
    /// Nodes per spatial axis.
    pub space_nodes: Vec<usize>,
    /// Simplex grid resolution.
    pub simplex_m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    /// Gauss-Hermite points per axis.
    pub order: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig { order: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "yes")]
    pub snapshots: bool,
    #[serde(default = "yes")]
    pub values_csv: bool,
    #[serde(default = "yes")]
    pub splits_csv: bool,
}

fn yes() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { snapshots: true, values_csv: true, splits_csv: true }
    }
}

/// Initial condition for belief simulations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeliefConfig {
    pub x0: Vec<f64>,
    pub p0: Vec<f64>,
}

/// A complete problem file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub name: String,
    pub game: GameConfig,
    pub discretization: DiscretizationConfig,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beliefs: Option<BeliefConfig>,
}

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<ProblemConfig> {
        let cfg: ProblemConfig =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Compiles the game block and checks every invariant, including
    /// volatility invertibility at each (time node, space node).
    pub fn validate(&self) -> Result<()> {
        let spec = GameSpec::from_config(&self.game)?;
        let disc = &self.discretization;
        if disc.space_nodes.len() != spec.d {
            return Err(Error::Validation(format!(
                "space_nodes has {} entries, expected d = {}",
                disc.space_nodes.len(),
                spec.d
            )));
        }
        if disc.space_nodes.iter().any(|&n| n < 2) {
            return Err(Error::Validation("every axis needs at least 2 nodes".into()));
        }
        if disc.simplex_m < 1 {
            return Err(Error::Validation("simplex_m must be at least 1".into()));
        }
        if self.quadrature.order < 1 {
            return Err(Error::Validation("quadrature order must be at least 1".into()));
        }
        if let Some(b) = &self.beliefs {
            if b.x0.len() != spec.d || b.p0.len() != spec.n_scenarios {
                return Err(Error::Validation("beliefs.x0/p0 have wrong length".into()));
            }
            if b.p0.iter().any(|&p| !(p >= 0.0)) || (b.p0.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::Validation("beliefs.p0 is not a probability vector".into()));
            }
        }
        let grids = crate::grid::Grids::new(&spec, disc.steps, &disc.space_nodes, disc.simplex_m);
        for k in 0..=grids.time.steps() {
            let t = grids.time.node(k);
            for s in 0..grids.space.len() {
                let x = grids.space.point(s);
                spec.check_sigma(t, &x)?;
            }
        }
        Ok(())
    }
}

/// Reads and validates a problem file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ProblemConfig> {
    let text = std::fs::read_to_string(path.as_ref())?;
    ProblemConfig::from_json(&text)
}

/// Compiled, immutable game description.
#[derive(Debug, Clone)]
pub struct GameSpec {
    pub d: usize,
    pub n_scenarios: usize,
    pub t0: f64,
    pub t_end: f64,
    pub domain: Vec<[f64; 2]>,
    pub controls_u: Vec<Vec<f64>>,
    pub controls_v: Vec<Vec<f64>>,
    pub bounds: Bounds,
    drift: Vec<Expr>,
    sigma: Vec<Vec<Expr>>,
    running: Vec<Expr>,
    terminal: Vec<Expr>,
    source: GameConfig,
}

/// Determinant threshold below which the volatility is treated as singular.
pub const SIGMA_DET_EPS: f64 = 1e-12;

const SPOT_SAMPLES: usize = 100;

impl GameSpec {
    pub fn from_config(cfg: &GameConfig) -> Result<GameSpec> {
        let invalid = |m: String| Err(Error::Validation(m));
        let d = cfg.d;
        if d == 0 {
            return invalid("d must be at least 1".into());
        }
        if cfg.n_scenarios == 0 {
            return invalid("I must be at least 1".into());
        }
        if !(cfg.t0.is_finite() && cfg.t_end.is_finite()) || cfg.t_end <= cfg.t0 {
            return invalid(format!("need T > t0, got t0 = {}, T = {}", cfg.t0, cfg.t_end));
        }
        if cfg.domain.len() != d {
            return invalid(format!("domain has {} axes, expected {d}", cfg.domain.len()));
        }
        for (j, [lo, hi]) in cfg.domain.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
                return invalid(format!("domain axis {j}: need lo < hi, got [{lo}, {hi}]"));
            }
        }
        let dim_u = control_dim(&cfg.controls_u, "controls_U")?;
        let dim_v = control_dim(&cfg.controls_v, "controls_V")?;

        let parse = |what: &str, src: &str| {
            Expr::parse(src).map_err(|e| Error::Validation(format!("{what}: {e}")))
        };
        let check_usage = |what: &str, e: &Expr, allow_t: bool, allow_uv: bool| -> Result<()> {
            let u = e.usage();
            let bad = u.x > d
                || (u.t && !allow_t)
                || (!allow_uv && (u.u > 0 || u.v > 0))
                || u.u > dim_u
                || u.v > dim_v;
            if bad {
                return Err(Error::Validation(format!("{what} references out-of-scope variables ({u})")));
            }
            Ok(())
        };

        let b_src = cfg.b.components();
        if b_src.len() != d {
            return invalid(format!("b has {} components, expected {d}", b_src.len()));
        }
        let mut drift = Vec::with_capacity(d);
        for (j, src) in b_src.iter().enumerate() {
            let e = parse(&format!("b[{j}]"), src)?;
            check_usage(&format!("b[{j}]"), &e, true, true)?;
            drift.push(e);
        }

        if cfg.sigma.len() != d || cfg.sigma.iter().any(|row| row.len() != d) {
            return invalid(format!("sigma must be a {d}x{d} matrix"));
        }
        let mut sigma = Vec::with_capacity(d);
        for (r, row) in cfg.sigma.iter().enumerate() {
            let mut out = Vec::with_capacity(d);
            for (c, src) in row.iter().enumerate() {
                let what = format!("sigma[{r}][{c}]");
                let e = parse(&what, src)?;
                check_usage(&what, &e, true, false)?;
                out.push(e);
            }
            sigma.push(out);
        }

        let n = cfg.n_scenarios;
        if cfg.l.len() != n || cfg.g.len() != n {
            return invalid(format!("l and g need exactly I = {n} entries"));
        }
        let mut running = Vec::with_capacity(n);
        for (i, src) in cfg.l.iter().enumerate() {
            let e = parse(&format!("l[{i}]"), src)?;
            check_usage(&format!("l[{i}]"), &e, true, true)?;
            running.push(e);
        }
        let mut terminal = Vec::with_capacity(n);
        for (i, src) in cfg.g.iter().enumerate() {
            let e = parse(&format!("g[{i}]"), src)?;
            check_usage(&format!("g[{i}]"), &e, false, false)?;
            terminal.push(e);
        }

        let bd = &cfg.bounds;
        let declared = [bd.b, bd.sigma, bd.sigma_inv, bd.l, bd.g, bd.lip_g];
        if declared.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return invalid("bounds must be finite and nonnegative".into());
        }

        let spec = GameSpec {
            d,
            n_scenarios: n,
            t0: cfg.t0,
            t_end: cfg.t_end,
            domain: cfg.domain.clone(),
            controls_u: cfg.controls_u.clone(),
            controls_v: cfg.controls_v.clone(),
            bounds: cfg.bounds.clone(),
            drift,
            sigma,
            running,
            terminal,
            source: cfg.clone(),
        };
        spec.spot_check()?;
        Ok(spec)
    }

    /// The source configuration this spec was compiled from.
    pub fn config(&self) -> &GameConfig {
        &self.source
    }

    pub fn horizon(&self) -> f64 {
        self.t_end - self.t0
    }

    pub fn drift(&self, t: f64, x: &[f64], u: &[f64], v: &[f64], out: &mut [f64]) {
        let env = Env::new(t, x, u, v);
        for (o, e) in out.iter_mut().zip(&self.drift) {
            *o = e.eval(&env);
        }
    }

    pub fn sigma(&self, t: f64, x: &[f64]) -> DMatrix<f64> {
        let env = Env::new(t, x, &[], &[]);
        DMatrix::from_fn(self.d, self.d, |r, c| self.sigma[r][c].eval(&env))
    }

    pub fn running(&self, i: usize, t: f64, x: &[f64], u: &[f64], v: &[f64]) -> f64 {
        self.running[i].eval(&Env::new(t, x, u, v))
    }

    pub fn terminal(&self, i: usize, x: &[f64]) -> f64 {
        self.terminal[i].eval(&Env::new(0.0, x, &[], &[]))
    }

    pub fn terminal_expr(&self, i: usize) -> &Expr {
        &self.terminal[i]
    }

    /// Inverse of the transposed volatility, `(σ*)⁻¹(t, x)`.
    pub fn sigma_inv_transpose(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>> {
        let s = self.check_sigma(t, x)?;
        s.transpose()
            .try_inverse()
            .ok_or_else(|| Error::SingularSigma { t, x: x.to_vec() })
    }

    /// Evaluates σ(t, x) and rejects non-finite or singular matrices.
    pub fn check_sigma(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>> {
        let s = self.sigma(t, x);
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteCoefficient { what: "sigma".into(), t, x: x.to_vec() });
        }
        if !(s.determinant().abs() > SIGMA_DET_EPS) {
            return Err(Error::Validation(format!("sigma is singular at t={t}, x={x:?}")));
        }
        Ok(s)
    }

    /// Evaluates every coefficient on a fixed pseudo-random sample of the
    /// domain box and control grids and checks finiteness and declared bounds.
    fn spot_check(&self) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let tol = |bound: f64| bound * (1.0 + 1e-12) + 1e-12;
        let bd = &self.bounds;
        let mut b = vec![0.0; self.d];
        for _ in 0..SPOT_SAMPLES {
            let t = rng.random_range(self.t0..=self.t_end);
            let x: Vec<f64> = self.domain.iter().map(|[lo, hi]| rng.random_range(*lo..=*hi)).collect();
            let u = &self.controls_u[rng.random_range(0..self.controls_u.len())];
            let v = &self.controls_v[rng.random_range(0..self.controls_v.len())];
            let fail = |what: &str, val: f64| {
                if !val.is_finite() {
                    Err(Error::NonFiniteCoefficient { what: what.into(), t, x: x.clone() })
                } else {
                    Err(Error::Validation(format!(
                        "{what} = {val} exceeds its declared bound at t={t}, x={x:?}"
                    )))
                }
            };
            self.drift(t, &x, u, v, &mut b);
            let nb = b.iter().map(|c| c * c).sum::<f64>().sqrt();
            if !(nb <= tol(bd.b)) {
                return fail("b", nb);
            }
            let s = self.check_sigma(t, &x)?;
            let ns = max_row_sum(&s);
            if !(ns <= tol(bd.sigma)) {
                return fail("sigma", ns);
            }
            let inv = s.try_inverse().ok_or_else(|| Error::SingularSigma { t, x: x.clone() })?;
            let ni = max_row_sum(&inv);
            if !(ni <= tol(bd.sigma_inv)) {
                return fail("sigma_inv", ni);
            }
            for i in 0..self.n_scenarios {
                let l = self.running(i, t, &x, u, v);
                if !(l.abs() <= tol(bd.l)) {
                    return fail(&format!("l[{i}]"), l);
                }
                let g = self.terminal(i, &x);
                if !(g.abs() <= tol(bd.g)) {
                    return fail(&format!("g[{i}]"), g);
                }
            }
        }
        Ok(())
    }
}

/// Matrix infinity norm (max absolute row sum).
pub fn max_row_sum(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn control_dim(controls: &[Vec<f64>], what: &str) -> Result<usize> {
    let first = controls
        .first()
        .ok_or_else(|| Error::Validation(format!("{what} is empty")))?;
    if controls.iter().any(|c| c.len() != first.len()) {
        return Err(Error::Validation(format!("{what} points have mixed dimensions")));
    }
    if controls.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("{what} contains non-finite values")));
    }
    Ok(first.len())
}
