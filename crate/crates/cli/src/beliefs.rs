use std::path::Path;

use isaacs_vex::belief::{simulate_beliefs, summarize, BeliefSummary};
use isaacs_vex::grid::Grids;
use isaacs_vex::io::{read_splits_csv, write_json, write_paths_csv};
use isaacs_vex::model::{GameSpec, ProblemConfig};
use isaacs_vex::{Error, Result};

/// Reads `splits.csv` from the solve directory `out`, simulates paths and
/// writes `paths.csv` and `beliefs.json` next to it.
///
/// The start point comes from the config's `beliefs` block; without one,
/// paths start at the center of the box with the uniform belief.
pub fn cmd_beliefs(cfg: &ProblemConfig, out: &Path, n_paths: usize, seed: u64) -> Result<BeliefSummary> {
    let spec = GameSpec::from_config(&cfg.game)?;
    let grids = Grids::from_config(&spec, &cfg.discretization);
    let splits_path = out.join("splits.csv");
    if !splits_path.is_file() {
        return Err(Error::MissingArtifacts(splits_path));
    }
    let splits = read_splits_csv(&splits_path, &grids, None)?;
    let (x0, p0) = match &cfg.beliefs {
        Some(b) => (b.x0.clone(), b.p0.clone()),
        None => (
            spec.domain.iter().map(|[lo, hi]| 0.5 * (lo + hi)).collect(),
            vec![1.0 / spec.n_scenarios as f64; spec.n_scenarios],
        ),
    };
    if x0.len() != spec.d || p0.len() != spec.n_scenarios {
        return Err(Error::Validation("beliefs.x0 / beliefs.p0 have the wrong length".into()));
    }
    let start = grids.simplex.nearest(&p0);
    let paths = simulate_beliefs(&spec, &grids, &splits, &x0, start, n_paths, seed)?;
    write_paths_csv(&out.join("paths.csv"), &grids, &paths)?;
    let summary = summarize(&grids.simplex, &paths, seed);
    write_json(&out.join("beliefs.json"), &summary)?;
    Ok(summary)
}

pub fn print_summary(s: &BeliefSummary) {
    println!("simulated {} paths (seed {}) from p0 = {:?}", s.n_paths, s.seed, s.initial_belief);
    let worst = s.drift.iter().fold(0.0f64, |a, &b| a.max(b));
    println!("  max mean-belief drift {:.3e} (tolerance {:.3e})", worst, s.drift_tolerance);
    println!("  revelation step histogram {:?}", s.revelation_histogram);
    println!("  scenario counts {:?}", s.scenario_counts);
}
