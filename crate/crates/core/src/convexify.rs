//! Discrete convex envelope in the belief variable and its splitting
//! representation `p = Σ_l λ_l π^l`, `v̂(p) = Σ_l λ_l f(π^l)`.
//!
//! The envelope is the lower convex hull of the lifted grid points
//! `{(p, f(p))}`. For two scenarios this is a monotone-chain pass; for more
//! scenarios an incremental (beneath-beyond) lower hull with exact integer
//! orientation predicates on the compositions `m p`.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::SimplexGrid;

/// Relative tolerance under which a node counts as touching its envelope.
pub const TOUCH_TOL: f64 = 1e-13;

/// Relative tolerance below which a point does not see a hull facet.
const HULL_TOL: f64 = 5e-14;

/// Envelope value and split of one simplex node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeSplit {
    pub value: f64,
    /// Envelope equals the input at this node; the split is the node itself.
    pub touching: bool,
    pub weights: Vec<f64>,
    /// Simplex-grid indices of the split points, ascending.
    pub points: Vec<usize>,
}

impl NodeSplit {
    fn singleton(j: usize, value: f64) -> NodeSplit {
        NodeSplit { value, touching: true, weights: vec![1.0], points: vec![j] }
    }

    pub fn support(&self) -> usize {
        self.points.len()
    }
}

/// Envelope of one function on the simplex grid, node by node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeSplit {
    pub nodes: Vec<NodeSplit>,
}

impl EnvelopeSplit {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.value).collect()
    }

    pub fn node(&self, j: usize) -> &NodeSplit {
        &self.nodes[j]
    }

    /// Number of nodes where the envelope lies strictly below the input.
    pub fn n_split(&self) -> usize {
        self.nodes.iter().filter(|n| !n.touching).count()
    }
}

/// Convex envelope of `values` over `simplex` with per-node splits.
pub fn vex(simplex: &SimplexGrid, values: &[f64]) -> Result<EnvelopeSplit> {
    assert_eq!(values.len(), simplex.len(), "one value per simplex node");
    if let Some(j) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput(j));
    }
    let scale = 1.0 + values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let candidates = match simplex.n_scenarios() {
        1 => return Ok(EnvelopeSplit { nodes: vec![NodeSplit::singleton(0, values[0])] }),
        2 => chain(simplex.resolution(), values),
        _ => hull(simplex, values, HULL_TOL * scale),
    };
    let tol = TOUCH_TOL * scale;
    let nodes = candidates
        .into_iter()
        .enumerate()
        .map(|(j, atoms)| finish(j, values, atoms, tol))
        .collect();
    Ok(EnvelopeSplit { nodes })
}

/// Envelope values only.
pub fn vex_values(simplex: &SimplexGrid, values: &[f64]) -> Result<Vec<f64>> {
    Ok(vex(simplex, values)?.values())
}

fn finish(j: usize, f: &[f64], mut atoms: Vec<(usize, f64)>, tol: f64) -> NodeSplit {
    atoms.retain(|&(_, w)| w > 0.0);
    atoms.sort_by_key(|a| a.0);
    let value: f64 = atoms.iter().map(|&(n, w)| w * f[n]).sum();
    if atoms.len() <= 1 || f[j] <= value + tol {
        return NodeSplit::singleton(j, f[j]);
    }
    NodeSplit {
        value,
        touching: false,
        weights: atoms.iter().map(|a| a.1).collect(),
        points: atoms.iter().map(|a| a.0).collect(),
    }
}

/// Two scenarios: node `j` sits at `p_1 = j / m`.
fn chain(m: usize, f: &[f64]) -> Vec<Vec<(usize, f64)>> {
    let mut hull: Vec<usize> = Vec::with_capacity(m + 1);
    for j in 0..=m {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (b - a) as f64 * (f[j] - f[a]) - (j - a) as f64 * (f[b] - f[a]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(j);
    }
    let mut out = vec![Vec::new(); m + 1];
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        out[a] = vec![(a, 1.0)];
        let span = (b - a) as f64;
        for (j, slot) in out.iter_mut().enumerate().take(b).skip(a + 1) {
            *slot = vec![(a, (b - j) as f64 / span), (b, (j - a) as f64 / span)];
        }
    }
    out[m] = vec![(m, 1.0)];
    out
}

/// Lifted point cloud with integer projections (the first `I - 1`
/// composition coordinates).
struct Cloud<'a> {
    dim: usize,
    proj: Vec<Vec<i64>>,
    f: &'a [f64],
}

#[derive(Debug, Clone)]
struct Facet {
    verts: Vec<usize>,
    det: i128,
    lo: Vec<i64>,
    hi: Vec<i64>,
    alive: bool,
}

impl<'a> Cloud<'a> {
    fn new(simplex: &SimplexGrid, f: &'a [f64]) -> Self {
        let dim = simplex.n_scenarios() - 1;
        let proj = (0..simplex.len())
            .map(|j| simplex.composition(j)[..dim].iter().map(|&c| c as i64).collect())
            .collect();
        Cloud { dim, proj, f }
    }

    fn orient(&self, verts: &[usize], replace: Option<(usize, usize)>) -> i128 {
        let n = self.dim + 1;
        let mut a = vec![0i128; n * n];
        for (r, &v) in verts.iter().enumerate() {
            let src = match replace {
                Some((row, q)) if row == r => q,
                _ => v,
            };
            for c in 0..self.dim {
                a[r * n + c] = self.proj[src][c] as i128;
            }
            a[r * n + self.dim] = 1;
        }
        bareiss(&mut a, n)
    }

    fn facet(&self, verts: Vec<usize>) -> Facet {
        let det = self.orient(&verts, None);
        let lo = (0..self.dim).map(|c| verts.iter().map(|&v| self.proj[v][c]).min().unwrap()).collect();
        let hi = (0..self.dim).map(|c| verts.iter().map(|&v| self.proj[v][c]).max().unwrap()).collect();
        Facet { verts, det, lo, hi, alive: true }
    }

    /// Barycentric numerators of `q` in `facet`.
    fn bary(&self, facet: &Facet, q: usize) -> Vec<i128> {
        (0..facet.verts.len()).map(|r| self.orient(&facet.verts, Some((r, q)))).collect()
    }

    fn contains(&self, facet: &Facet, q: usize) -> Option<Vec<i128>> {
        let p = &self.proj[q];
        if (0..self.dim).any(|c| p[c] < facet.lo[c] || p[c] > facet.hi[c]) {
            return None;
        }
        let num = self.bary(facet, q);
        let s = facet.det.signum();
        num.iter().all(|&d| d * s >= 0).then_some(num)
    }

    /// Height of the facet's plane above `f(q)`.
    fn gap(&self, facet: &Facet, q: usize) -> f64 {
        let num = self.bary(facet, q);
        let det = facet.det as f64;
        let plane: f64 = num.iter().zip(&facet.verts).map(|(&d, &v)| d as f64 / det * self.f[v]).sum();
        plane - self.f[q]
    }

    fn locate(&self, facets: &[Facet], q: usize) -> Option<(usize, Vec<i128>)> {
        facets
            .iter()
            .enumerate()
            .filter(|(_, f)| f.alive)
            .find_map(|(i, f)| self.contains(f, q).map(|num| (i, num)))
    }
}

fn bareiss(a: &mut [i128], n: usize) -> i128 {
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n - 1 {
        if a[k * n + k] == 0 {
            match (k + 1..n).find(|&r| a[r * n + k] != 0) {
                Some(r) => {
                    for c in 0..n {
                        a.swap(k * n + c, r * n + c);
                    }
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i * n + j] = (a[i * n + j] * a[k * n + k] - a[i * n + k] * a[k * n + j]) / prev;
            }
        }
        prev = a[k * n + k];
    }
    sign * a[n * n - 1]
}

fn ridge_key(verts: &[usize], skip: usize) -> Vec<usize> {
    let mut r: Vec<usize> = verts.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, &v)| v).collect();
    r.sort_unstable();
    r
}

fn hull(simplex: &SimplexGrid, f: &[f64], thr: f64) -> Vec<Vec<(usize, f64)>> {
    let cloud = Cloud::new(simplex, f);
    let facets = incremental_hull(simplex, &cloud, thr).unwrap_or_else(|| brute_force_hull(&cloud, thr));
    (0..simplex.len())
        .map(|q| {
            let (i, num) = cloud.locate(&facets, q).expect("lower hull covers the simplex");
            let det = facets[i].det as f64;
            facets[i].verts.iter().zip(num).map(|(&v, d)| (v, d as f64 / det)).collect()
        })
        .collect()
}

fn incremental_hull(simplex: &SimplexGrid, cloud: &Cloud, thr: f64) -> Option<Vec<Facet>> {
    let n_sc = simplex.n_scenarios();
    let mut facets = vec![cloud.facet((0..n_sc).map(|i| simplex.vertex(i)).collect())];
    let mut ridges: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    let link = |ridges: &mut HashMap<Vec<usize>, Vec<usize>>, facet: &Facet, id: usize| {
        for r in 0..facet.verts.len() {
            ridges.entry(ridge_key(&facet.verts, r)).or_default().push(id);
        }
    };
    link(&mut ridges, &facets[0], 0);

    for q in 0..simplex.len() {
        if simplex.is_vertex(q).is_some() {
            continue;
        }
        let (start, _) = cloud.locate(&facets, q)?;
        if cloud.gap(&facets[start], q) <= thr {
            continue;
        }
        let mut visible = vec![start];
        let mut seen = std::collections::HashSet::from([start]);
        let mut horizon: Vec<Vec<usize>> = Vec::new();
        let mut head = 0;
        while head < visible.len() {
            let id = visible[head];
            head += 1;
            for r in 0..facets[id].verts.len() {
                let key = ridge_key(&facets[id].verts, r);
                let other = ridges[&key].iter().copied().find(|&o| o != id && facets[o].alive);
                match other {
                    Some(o) if seen.contains(&o) => {}
                    Some(o) if cloud.gap(&facets[o], q) > thr => {
                        seen.insert(o);
                        visible.push(o);
                    }
                    _ => horizon.push(key),
                }
            }
        }
        for &id in &visible {
            facets[id].alive = false;
            for r in 0..facets[id].verts.len() {
                let key = ridge_key(&facets[id].verts, r);
                if let Some(list) = ridges.get_mut(&key) {
                    list.retain(|&o| o != id);
                }
            }
        }
        for ridge in horizon {
            let mut verts = ridge;
            verts.push(q);
            let facet = cloud.facet(verts);
            if facet.det == 0 {
                continue;
            }
            let id = facets.len();
            link(&mut ridges, &facet, id);
            facets.push(facet);
        }
    }

    let volume: i128 = facets.iter().filter(|f| f.alive).map(|f| f.det.abs()).sum();
    let full = (simplex.resolution() as i128).pow(cloud.dim as u32);
    (volume == full).then_some(facets)
}

/// All lower supporting simplices, by enumeration. Used only when the
/// incremental hull fails its volume check.
fn brute_force_hull(cloud: &Cloud, thr: f64) -> Vec<Facet> {
    let n = cloud.proj.len();
    let k = cloud.dim + 1;
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let facet = cloud.facet(idx.clone());
        if facet.det != 0 && (0..n).all(|q| cloud.gap(&facet, q) <= thr) {
            out.push(facet);
        }
        // next combination
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
    out
}

/// Discrete convexity: nonnegative second differences along every edge
/// direction `(e_i - e_j) / m`, and the envelope reproduces the values.
pub fn is_discretely_convex(simplex: &SimplexGrid, values: &[f64]) -> bool {
    convexity_residual(simplex, values).is_some_and(|r| r <= 1e-10)
}

/// Largest violation of the two discrete convexity tests, `None` when the
/// values are not finite.
pub fn convexity_residual(simplex: &SimplexGrid, values: &[f64]) -> Option<f64> {
    let env = vex(simplex, values).ok()?;
    let mut worst = 0.0f64;
    let n_sc = simplex.n_scenarios();
    for p in 0..simplex.len() {
        for i in 0..n_sc {
            for j in i + 1..n_sc {
                if let (Some(a), Some(b)) = (simplex.shift(p, i, j), simplex.shift(p, j, i)) {
                    worst = worst.max(2.0 * values[p] - values[a] - values[b]);
                }
            }
        }
        worst = worst.max((env.nodes[p].value - values[p]).abs());
    }
    Some(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn check_split(simplex: &SimplexGrid, f: &[f64], env: &EnvelopeSplit) {
        for (j, node) in env.nodes.iter().enumerate() {
            assert!(node.support() <= simplex.n_scenarios());
            let s: f64 = node.weights.iter().sum();
            assert!((s - 1.0).abs() <= 1e-12);
            assert!(node.weights.iter().all(|&w| w > 0.0));
            for c in 0..simplex.n_scenarios() {
                let bar: f64 = node.weights.iter().zip(&node.points).map(|(w, &q)| w * simplex.point(q)[c]).sum();
                assert!((bar - simplex.point(j)[c]).abs() <= 1e-12);
            }
            let val: f64 = node.weights.iter().zip(&node.points).map(|(w, &q)| w * f[q]).sum();
            assert!((val - node.value).abs() <= 1e-10);
            assert!(node.value <= f[j]);
            assert_eq!(node.touching, node.value == f[j]);
        }
        for i in 0..simplex.n_scenarios() {
            let v = simplex.vertex(i);
            assert!(env.nodes[v].touching);
            assert_eq!(env.nodes[v].points, vec![v]);
        }
        assert!(is_discretely_convex(simplex, &env.values()));
    }

    #[test]
    fn bump_on_three_nodes() {
        let g = SimplexGrid::new(2, 2);
        let f = [0.0, 1.0, 0.0];
        let env = vex(&g, &f).unwrap();
        assert_eq!(env.values(), vec![0.0, 0.0, 0.0]);
        let mid = env.node(1);
        assert_eq!(mid.weights, vec![0.5, 0.5]);
        let pts: Vec<&[f64]> = mid.points.iter().map(|&q| g.point(q)).collect();
        assert_eq!(pts, vec![&[0.0, 1.0][..], &[1.0, 0.0][..]]);
        assert!(!is_discretely_convex(&g, &f));
        check_split(&g, &f, &env);
    }

    #[test]
    fn double_well() {
        let g = SimplexGrid::new(2, 4);
        let f = [0.0, -1.0, 0.0, -1.0, 0.0];
        let env = vex(&g, &f).unwrap();
        assert_eq!(env.values(), vec![0.0, -1.0, -1.0, -1.0, 0.0]);
        let mid = env.node(2);
        assert_eq!(mid.weights, vec![0.5, 0.5]);
        assert_eq!(g.point(mid.points[0])[0], 0.25);
        assert_eq!(g.point(mid.points[1])[0], 0.75);
        check_split(&g, &f, &env);
    }

    #[test]
    fn affine_is_fixed() {
        for (n_sc, m) in [(2, 7), (3, 5), (4, 3)] {
            let g = SimplexGrid::new(n_sc, m);
            let c: Vec<f64> = (0..n_sc).map(|i| 0.3 * i as f64 - 1.1).collect();
            let f: Vec<f64> =
                (0..g.len()).map(|j| g.point(j).iter().zip(&c).map(|(p, c)| p * c).sum()).collect();
            let env = vex(&g, &f).unwrap();
            assert_eq!(env.values(), f);
            assert_eq!(env.n_split(), 0);
        }
    }

    #[test]
    fn single_scenario_and_coarse_grid() {
        let g = SimplexGrid::new(1, 4);
        let env = vex(&g, &[2.5]).unwrap();
        assert_eq!(env.values(), vec![2.5]);
        let g = SimplexGrid::new(2, 1);
        assert!(is_discretely_convex(&g, &[3.0, -7.0]));
    }

    #[test]
    fn non_finite_rejected() {
        let g = SimplexGrid::new(2, 2);
        assert!(matches!(vex(&g, &[0.0, f64::NAN, 1.0]), Err(Error::NonFiniteInput(1))));
        assert!(!is_discretely_convex(&g, &[0.0, f64::INFINITY, 1.0]));
    }

    #[test]
    fn concave_in_three_scenarios() {
        // f(p) = -|p|^2 is concave: envelope is affine through the vertices
        let g = SimplexGrid::new(3, 6);
        let f: Vec<f64> = (0..g.len()).map(|j| -g.point(j).iter().map(|x| x * x).sum::<f64>()).collect();
        let env = vex(&g, &f).unwrap();
        for j in 0..g.len() {
            assert!((env.node(j).value + 1.0).abs() < 1e-14);
        }
        check_split(&g, &f, &env);
    }

    #[test]
    fn incremental_matches_brute_force() {
        let g = SimplexGrid::new(3, 5);
        let f: Vec<f64> = (0..g.len())
            .map(|j| {
                let p = g.point(j);
                (7.0 * p[0]).sin() + (3.0 * p[1] - 1.0).powi(2) - p[2]
            })
            .collect();
        let cloud = Cloud::new(&g, &f);
        let fast = incremental_hull(&g, &cloud, 1e-14).unwrap();
        let slow = brute_force_hull(&cloud, 1e-14);
        for q in 0..g.len() {
            let value = |facets: &[Facet]| {
                let (i, num) = cloud.locate(facets, q).unwrap();
                let det = facets[i].det as f64;
                facets[i].verts.iter().zip(num).map(|(&v, d)| d as f64 / det * f[v]).sum::<f64>()
            };
            assert!((value(&fast) - value(&slow)).abs() < 1e-12);
        }
    }

    #[test]
    fn incremental_hull_survives_ties() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for (n_sc, m) in [(3, 16), (4, 6), (3, 9)] {
            let g = SimplexGrid::new(n_sc, m);
            for trial in 0..20 {
                // coarse levels create many coplanar lifts
                let f: Vec<f64> = (0..g.len())
                    .map(|j| {
                        let r: f64 = rng.random_range(-1.0..1.0);
                        if trial % 2 == 0 { (r * 2.0).round() } else { r + g.point(j)[0].powi(2) }
                    })
                    .collect();
                let scale = 1.0 + f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                let cloud = Cloud::new(&g, &f);
                assert!(incremental_hull(&g, &cloud, HULL_TOL * scale).is_some());
                check_split(&g, &f, &vex(&g, &f).unwrap());
            }
        }
    }

    #[test]
    fn bareiss_small() {
        let mut a = vec![0, 1, 1, 1, 0, 1, 2, 3, 1];
        // rows (0,1,1), (1,0,1), (2,3,1)
        assert_eq!(bareiss(&mut a, 3), 0 * (0 - 3) - 1 * (1 - 2) + 1 * (3 - 0));
    }

    fn simplex_values(n_sc: usize, m: usize) -> impl Strategy<Value = (SimplexGrid, Vec<f64>)> {
        let g = SimplexGrid::new(n_sc, m);
        let n = g.len();
        proptest::collection::vec(-2.0f64..2.0, n).prop_map(move |v| (g.clone(), v))
    }

    fn grids() -> impl Strategy<Value = (SimplexGrid, Vec<f64>)> {
        prop_oneof![simplex_values(2, 9), simplex_values(3, 4), simplex_values(4, 3)]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn splits_are_valid((g, f) in grids()) {
            let env = vex(&g, &f).unwrap();
            check_split(&g, &f, &env);
        }

        #[test]
        fn idempotent((g, f) in grids()) {
            let once = vex_values(&g, &f).unwrap();
            let twice = vex_values(&g, &once).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn monotone((g, f) in grids(), bump in proptest::collection::vec(0.0f64..1.0, 35)) {
            let h: Vec<f64> = f.iter().zip(bump.iter().cycle()).map(|(a, b)| a + b).collect();
            let lo = vex_values(&g, &f).unwrap();
            let hi = vex_values(&g, &h).unwrap();
            for (a, b) in lo.iter().zip(&hi) {
                prop_assert!(b >= &(a - 1e-12));
            }
        }

        #[test]
        fn affine_shift((g, f) in grids(), c in -3.0f64..3.0, slope in proptest::collection::vec(-2.0f64..2.0, 4)) {
            let shifted: Vec<f64> = (0..g.len())
                .map(|j| f[j] + c + g.point(j).iter().zip(&slope).map(|(p, s)| p * s).sum::<f64>())
                .collect();
            let a = vex_values(&g, &f).unwrap();
            let b = vex_values(&g, &shifted).unwrap();
            for j in 0..g.len() {
                let aff: f64 = c + g.point(j).iter().zip(&slope).map(|(p, s)| p * s).sum::<f64>();
                prop_assert!((b[j] - a[j] - aff).abs() <= 1e-12);
            }
        }

        #[test]
        fn maximal_convex_minorant((g, f) in grids(), seed in proptest::collection::vec(-1.0f64..1.0, 4)) {
            // h = max of two affine functions, shifted below f
            let aff = |j: usize, s: &[f64]| g.point(j).iter().zip(s).map(|(p, c)| p * c).sum::<f64>();
            let other: Vec<f64> = seed.iter().rev().cloned().collect();
            let raw: Vec<f64> = (0..g.len()).map(|j| aff(j, &seed).max(aff(j, &other))).collect();
            let gap = (0..g.len()).map(|j| raw[j] - f[j]).fold(f64::NEG_INFINITY, f64::max);
            let h: Vec<f64> = raw.iter().map(|r| r - gap).collect();
            prop_assume!(is_discretely_convex(&g, &h));
            let env = vex_values(&g, &f).unwrap();
            for j in 0..g.len() {
                prop_assert!(h[j] <= env[j] + 1e-12);
            }
        }

        #[test]
        fn vertices_pinned((g, f) in grids()) {
            let env = vex_values(&g, &f).unwrap();
            for i in 0..g.n_scenarios() {
                prop_assert_eq!(env[g.vertex(i)], f[g.vertex(i)]);
            }
        }
    }
}
