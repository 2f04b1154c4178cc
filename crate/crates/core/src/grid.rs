//! Time partition, spatial box grid, simplex grid and value fields.
//!
//! Values off the spatial grid are obtained by multilinear interpolation
//! after clamping to the box, i.e. constant extension outside. All weights
//! are nonnegative and sum to one, so interpolation is monotone and never
//! overshoots the stored values.

use std::collections::HashMap;

use crate::model::GameSpec;

/// Uniform partition `t_k = t0 + k * tau`, `k = 0..=L`, with `t_L = T` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    t_end: f64,
    steps: usize,
    tau: f64,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, steps: usize) -> Self {
        let tau = if steps == 0 { t_end - t0 } else { (t_end - t0) / steps as f64 };
        TimeGrid { t0, t_end, steps, tau }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn node(&self, k: usize) -> f64 {
        assert!(k <= self.steps, "time index {k} out of range");
        if k == self.steps {
            self.t_end
        } else {
            self.t0 + k as f64 * self.tau
        }
    }
}

/// Uniform tensor grid on an axis-aligned box, flattened row-major
/// (first axis slowest).
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceGrid {
    lo: Vec<f64>,
    hi: Vec<f64>,
    counts: Vec<usize>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    len: usize,
}

impl SpaceGrid {
    pub fn new(domain: &[[f64; 2]], counts: &[usize]) -> Self {
        assert_eq!(domain.len(), counts.len());
        assert!(counts.iter().all(|&n| n >= 2), "each axis needs two nodes");
        let d = counts.len();
        let lo: Vec<f64> = domain.iter().map(|b| b[0]).collect();
        let hi: Vec<f64> = domain.iter().map(|b| b[1]).collect();
        let spacing = (0..d).map(|a| (hi[a] - lo[a]) / (counts[a] - 1) as f64).collect();
        let mut strides = vec![1; d];
        for a in (0..d.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * counts[a + 1];
        }
        let len = counts.iter().product();
        SpaceGrid { lo, hi, counts: counts.to_vec(), spacing, strides, len }
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Coordinate of node `j` on axis `a`; the last node is exactly `hi`.
    pub fn coord(&self, a: usize, j: usize) -> f64 {
        if j + 1 == self.counts[a] {
            self.hi[a]
        } else {
            self.lo[a] + j as f64 * self.spacing[a]
        }
    }

    pub fn multi_index(&self, mut s: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for a in 0..self.dim() {
            idx[a] = s / self.strides[a];
            s %= self.strides[a];
        }
        idx
    }

    pub fn point(&self, s: usize) -> Vec<f64> {
        self.multi_index(s)
            .iter()
            .enumerate()
            .map(|(a, &j)| self.coord(a, j))
            .collect()
    }

    /// Nearest node in the Euclidean metric (per-axis rounding after clamping).
    pub fn nearest(&self, x: &[f64]) -> usize {
        let mut s = 0;
        for a in 0..self.dim() {
            let r = ((x[a].clamp(self.lo[a], self.hi[a]) - self.lo[a]) / self.spacing[a]).round();
            let j = (r as usize).min(self.counts[a] - 1);
            s += j * self.strides[a];
        }
        s
    }

    /// Cell index and local coordinate in `[0, 1]` along one axis after clamping.
    fn locate(&self, a: usize, x: f64) -> (usize, f64) {
        let n = self.counts[a];
        let xc = x.clamp(self.lo[a], self.hi[a]);
        let r = (xc - self.lo[a]) / self.spacing[a];
        // snap onto a node when x reproduces its coordinate exactly
        let near = (r.round() as usize).min(n - 1);
        if self.coord(a, near) == xc {
            return if near == n - 1 { (n - 2, 1.0) } else { (near, 0.0) };
        }
        let i0 = (r.floor().max(0.0) as usize).min(n - 2);
        let theta = ((xc - self.coord(a, i0)) / self.spacing[a]).clamp(0.0, 1.0);
        (i0, theta)
    }
}

/// Corner indices and weights of the multilinear interpolant at one point.
///
/// Corners are visited in a fixed order (bit `a` of the corner mask selects
/// the upper node on axis `a`), which fixes the summation order.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    pub nodes: Vec<usize>,
    pub weights: Vec<f64>,
}

impl Stencil {
    pub fn new(space: &SpaceGrid, x: &[f64]) -> Stencil {
        let d = space.dim();
        let cells: Vec<(usize, f64)> = (0..d).map(|a| space.locate(a, x[a])).collect();
        let corners = 1usize << d;
        let mut nodes = Vec::with_capacity(corners);
        let mut weights = Vec::with_capacity(corners);
        for mask in 0..corners {
            let mut s = 0;
            let mut w = 1.0;
            for (a, &(i0, theta)) in cells.iter().enumerate() {
                if mask >> a & 1 == 1 {
                    s += (i0 + 1) * space.strides[a];
                    w *= theta;
                } else {
                    s += i0 * space.strides[a];
                    w *= 1.0 - theta;
                }
            }
            nodes.push(s);
            weights.push(w);
        }
        Stencil { nodes, weights }
    }

    /// Interpolated value of simplex column `j` of `field`.
    #[inline]
    pub fn apply(&self, field: &ValueField, j: usize) -> f64 {
        let n = field.n_simplex;
        let mut acc = 0.0;
        for (s, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * field.values[s * n + j];
        }
        acc
    }
}

/// Grid on the probability simplex Δ(I): all p with coordinates in
/// {0, 1/m, ..., 1}, enumerated in lexicographic order of the integer
/// compositions `m * p`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexGrid {
    n_scenarios: usize,
    m: usize,
    compositions: Vec<Vec<u32>>,
    coords: Vec<Vec<f64>>,
    index: HashMap<Vec<u32>, usize>,
    vertices: Vec<usize>,
}

impl SimplexGrid {
    pub fn new(n_scenarios: usize, m: usize) -> Self {
        assert!(n_scenarios >= 1 && m >= 1);
        let mut compositions = Vec::new();
        let mut cur = vec![0u32; n_scenarios];
        enumerate_compositions(0, m as u32, &mut cur, &mut compositions);
        let coords = compositions
            .iter()
            .map(|c| c.iter().map(|&k| k as f64 / m as f64).collect())
            .collect();
        let index: HashMap<Vec<u32>, usize> =
            compositions.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        let vertices = (0..n_scenarios)
            .map(|i| {
                let mut c = vec![0u32; n_scenarios];
                c[i] = m as u32;
                index[&c]
            })
            .collect();
        SimplexGrid { n_scenarios, m, compositions, coords, index, vertices }
    }

    pub fn n_scenarios(&self) -> usize {
        self.n_scenarios
    }

    pub fn resolution(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.compositions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.compositions.is_empty()
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.coords[j]
    }

    pub fn composition(&self, j: usize) -> &[u32] {
        &self.compositions[j]
    }

    pub fn find(&self, composition: &[u32]) -> Option<usize> {
        self.index.get(composition).copied()
    }

    /// Index of the vertex `e^i`.
    pub fn vertex(&self, i: usize) -> usize {
        self.vertices[i]
    }

    pub fn is_vertex(&self, j: usize) -> Option<usize> {
        self.vertices.iter().position(|&v| v == j)
    }

    /// Neighbor `p + (e_i - e_j) / m`, when it lies on the grid.
    pub fn shift(&self, node: usize, plus: usize, minus: usize) -> Option<usize> {
        let c = &self.compositions[node];
        if c[minus] == 0 {
            return None;
        }
        let mut n = c.clone();
        n[plus] += 1;
        n[minus] -= 1;
        self.find(&n)
    }

    /// Nearest grid node: largest-remainder rounding of `m * p`.
    pub fn nearest(&self, p: &[f64]) -> usize {
        let m = self.m as f64;
        let scaled: Vec<f64> = p.iter().map(|&v| v.max(0.0) * m).collect();
        let total: f64 = scaled.iter().sum();
        let scaled: Vec<f64> = scaled.iter().map(|v| v * m / total.max(f64::MIN_POSITIVE)).collect();
        let mut c: Vec<u32> = scaled.iter().map(|v| v.floor() as u32).collect();
        let mut missing = self.m as i64 - c.iter().map(|&k| k as i64).sum::<i64>();
        let mut order: Vec<usize> = (0..p.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = scaled[a] - scaled[a].floor();
            let fb = scaled[b] - scaled[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if missing <= 0 {
                break;
            }
            c[i] += 1;
            missing -= 1;
        }
        self.find(&c).expect("rounded composition lies on the grid")
    }
}

fn enumerate_compositions(pos: usize, remaining: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    let last = cur.len() - 1;
    if pos == last {
        cur[pos] = remaining;
        out.push(cur.clone());
        return;
    }
    for k in 0..=remaining {
        cur[pos] = k;
        enumerate_compositions(pos + 1, remaining - k, cur, out);
    }
}

/// All grids of one discretization.
#[derive(Debug, Clone, PartialEq)]
pub struct Grids {
    pub time: TimeGrid,
    pub space: SpaceGrid,
    pub simplex: SimplexGrid,
}

impl Grids {
    pub fn new(spec: &GameSpec, steps: usize, space_nodes: &[usize], m: usize) -> Self {
        Grids {
            time: TimeGrid::new(spec.t0, spec.t_end, steps),
            space: SpaceGrid::new(&spec.domain, space_nodes),
            simplex: SimplexGrid::new(spec.n_scenarios, m),
        }
    }

    pub fn from_config(spec: &GameSpec, cfg: &crate::model::DiscretizationConfig) -> Self {
        Grids::new(spec, cfg.steps, &cfg.space_nodes, cfg.simplex_m)
    }
}

/// Values of one time slice on (space node, simplex node), space-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    pub k: usize,
    pub t: f64,
    pub n_space: usize,
    pub n_simplex: usize,
    pub values: Vec<f64>,
}

impl ValueField {
    pub fn new(k: usize, t: f64, n_space: usize, n_simplex: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n_space * n_simplex);
        ValueField { k, t, n_space, n_simplex, values }
    }

    pub fn constant(k: usize, t: f64, n_space: usize, n_simplex: usize, c: f64) -> Self {
        ValueField::new(k, t, n_space, n_simplex, vec![c; n_space * n_simplex])
    }

    #[inline]
    pub fn get(&self, s: usize, j: usize) -> f64 {
        self.values[s * self.n_simplex + j]
    }

    /// Values over the simplex grid at space node `s`.
    pub fn at_node(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_simplex..(s + 1) * self.n_simplex]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Multilinear interpolation of column `p_index` at `x`, clamped to the box.
pub fn interpolate(field: &ValueField, space: &SpaceGrid, x: &[f64], p_index: usize) -> f64 {
    Stencil::new(space, x).apply(field, p_index)
}
