use std::time::Instant;

use isaacs_vex::grid::{Grids, ValueField};
use isaacs_vex::model::{GameSpec, ProblemConfig};
use isaacs_vex::quadrature::GHRule;
use isaacs_vex::reference::heat_value;
use isaacs_vex::scheme::{solve, SolveOptions};
use isaacs_vex::Result;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefineLevel {
    pub level: usize,
    pub steps: usize,
    pub tau: f64,
    pub space_nodes: Vec<usize>,
    pub simplex_m: usize,
    /// Interior sup difference to the next finer level at the nodes of this one.
    pub diff_to_next: Option<f64>,
    /// `diff_to_next` of the previous level divided by this one's.
    pub ratio: Option<f64>,
    /// Sup error at `t0` against the closed form, when the game has one.
    pub closed_form_error: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefineTable {
    pub name: String,
    /// Inner half of the box, on which differences are measured.
    pub interior: Vec<[f64; 2]>,
    pub levels: Vec<RefineLevel>,
}

/// Discretization of level `l`: `τ / 2^l`, `h / 2^l`, `m 2^l`.
pub fn level_grids(spec: &GameSpec, cfg: &ProblemConfig, l: usize) -> Grids {
    let f = 1usize << l;
    let d = &cfg.discretization;
    let nodes: Vec<usize> = d.space_nodes.iter().map(|&n| (n - 1) * f + 1).collect();
    Grids::new(spec, d.steps * f, &nodes, d.simplex_m * f)
}

fn interior_box(spec: &GameSpec) -> Vec<[f64; 2]> {
    spec.domain.iter().map(|&[lo, hi]| [lo + (hi - lo) / 4.0, hi - (hi - lo) / 4.0]).collect()
}

fn inside(x: &[f64], b: &[[f64; 2]]) -> bool {
    x.iter().zip(b).all(|(&c, &[lo, hi])| c >= lo - 1e-12 && c <= hi + 1e-12)
}

/// Sup over all coarse slices, interior coarse space nodes and coarse
/// simplex nodes of `|coarse - fine|`, the fine grid having every index doubled.
pub fn level_difference(
    coarse: (&Grids, &[ValueField]),
    fine: (&Grids, &[ValueField]),
    interior: &[[f64; 2]],
) -> f64 {
    let (cg, cf) = coarse;
    let (fg, ff) = fine;
    let fine_simplex: Vec<usize> = (0..cg.simplex.len())
        .map(|j| {
            let comp: Vec<u32> = cg.simplex.composition(j).iter().map(|c| 2 * c).collect();
            fg.simplex.find(&comp).expect("doubled composition lies on the finer grid")
        })
        .collect();
    let mut worst = 0.0f64;
    for s in 0..cg.space.len() {
        if !inside(&cg.space.point(s), interior) {
            continue;
        }
        let fs: usize = cg.space.multi_index(s).iter().zip(fg.space.strides()).map(|(i, st)| 2 * i * st).sum();
        for (k, field) in cf.iter().enumerate() {
            let other = &ff[2 * k];
            for (j, &fj) in fine_simplex.iter().enumerate() {
                worst = worst.max((field.get(s, j) - other.get(fs, fj)).abs());
            }
        }
    }
    worst
}

/// Sup error of the slice at `t0` against the closed form over interior nodes.
pub fn closed_form_error(spec: &GameSpec, grids: &Grids, field: &ValueField, interior: &[[f64; 2]]) -> Result<f64> {
    let mut worst = 0.0f64;
    for s in 0..grids.space.len() {
        let x = grids.space.point(s);
        if !inside(&x, interior) {
            continue;
        }
        for j in 0..grids.simplex.len() {
            let exact = heat_value(spec, field.t, x[0], grids.simplex.point(j))?;
            worst = worst.max((field.get(s, j) - exact).abs());
        }
    }
    Ok(worst)
}

/// Solves on `levels` successively halved grids.
pub fn cmd_refine(cfg: &ProblemConfig, levels: usize) -> Result<RefineTable> {
    let spec = GameSpec::from_config(&cfg.game)?;
    let rule = GHRule::new(cfg.quadrature.order, spec.d)?;
    let interior = interior_box(&spec);
    let has_closed_form = spec.d == 1 && heat_value(&spec, spec.t0, 0.0, &vec![1.0 / spec.n_scenarios as f64; spec.n_scenarios]).is_ok();
    let opts = SolveOptions { keep_splits: false, check_convexity: false };
    let mut rows: Vec<RefineLevel> = Vec::with_capacity(levels);
    let mut prev: Option<(Grids, Vec<ValueField>)> = None;
    for l in 0..levels {
        let start = Instant::now();
        let grids = level_grids(&spec, cfg, l);
        let sol = solve(&spec, &grids, &rule, opts)?;
        let closed = if has_closed_form {
            Some(closed_form_error(&spec, &grids, &sol.fields[0], &interior)?)
        } else {
            None
        };
        if let Some((pg, pf)) = &prev {
            let diff = level_difference((pg, pf), (&grids, &sol.fields), &interior);
            let last = rows.last_mut().unwrap();
            last.diff_to_next = Some(diff);
        }
        let n = rows.len();
        if n >= 2 {
            if let (Some(a), Some(b)) = (rows[n - 2].diff_to_next, rows[n - 1].diff_to_next) {
                rows[n - 1].ratio = Some(a / b);
            }
        }
        rows.push(RefineLevel {
            level: l,
            steps: grids.time.steps(),
            tau: grids.time.tau(),
            space_nodes: grids.space.counts().to_vec(),
            simplex_m: grids.simplex.resolution(),
            diff_to_next: None,
            ratio: None,
            closed_form_error: closed,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
        prev = Some((grids, sol.fields));
    }
    Ok(RefineTable { name: cfg.name.clone(), interior, levels: rows })
}

pub fn print_table(t: &RefineTable) {
    println!("refinement of `{}` (interior {:?})", t.name, t.interior);
    println!("{:>5} {:>6} {:>10} {:>8} {:>5} {:>12} {:>8} {:>12}", "level", "L", "tau", "nodes", "m", "diff", "ratio", "exact err");
    let opt = |v: Option<f64>, w: usize| v.map_or(format!("{:>w$}", "-"), |v| format!("{v:>w$.4e}"));
    for r in &t.levels {
        println!(
            "{:>5} {:>6} {:>10.3e} {:>8} {:>5} {} {} {}",
            r.level,
            r.steps,
            r.tau,
            r.space_nodes.iter().product::<usize>(),
            r.simplex_m,
            opt(r.diff_to_next, 12),
            r.ratio.map_or(format!("{:>8}", "-"), |v| format!("{v:>8.3}")),
            opt(r.closed_form_error, 12),
        );
    }
}
