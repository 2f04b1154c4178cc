use std::path::Path;

use isaacs_vex::grid::Grids;
use isaacs_vex::io::{snapshot_name, write_json, write_snapshot, write_splits_csv, write_values_csv};
use isaacs_vex::model::{GameSpec, ProblemConfig};
use isaacs_vex::quadrature::GHRule;
use isaacs_vex::scheme::{solve, Solution, SolveOptions, SolveReport};
use isaacs_vex::Result;

/// Solves `cfg` and writes into `out`:
/// `config.json`, `report.json`, `values.csv`, `snapshots/slice_*.vexf` and
/// `splits.csv` (the last three as enabled in the output block).
pub fn cmd_solve(cfg: &ProblemConfig, out: &Path) -> Result<Solution> {
    let spec = GameSpec::from_config(&cfg.game)?;
    let grids = Grids::from_config(&spec, &cfg.discretization);
    let rule = GHRule::new(cfg.quadrature.order, spec.d)?;
    std::fs::create_dir_all(out)?;
    let opts = SolveOptions { keep_splits: cfg.output.splits_csv, check_convexity: true };
    let sol = solve(&spec, &grids, &rule, opts)?;
    std::fs::write(out.join("config.json"), cfg.to_json() + "\n")?;
    write_json(&out.join("report.json"), &sol.report)?;
    if cfg.output.values_csv {
        write_values_csv(&out.join("values.csv"), &grids, &sol.fields)?;
    }
    if cfg.output.snapshots {
        let dir = out.join("snapshots");
        std::fs::create_dir_all(&dir)?;
        for f in &sol.fields {
            write_snapshot(&dir.join(snapshot_name(f.k)), &grids, f)?;
        }
    }
    if cfg.output.splits_csv {
        write_splits_csv(&out.join("splits.csv"), &grids, &sol.splits)?;
    }
    Ok(sol)
}

pub fn print_summary(cfg: &ProblemConfig, r: &SolveReport) {
    println!("solved `{}`: L={} tau={} space={:?} m={} Q={}", cfg.name, r.steps, r.tau, r.space_nodes, r.simplex_m, r.quadrature_order);
    println!("  max |V|            {:.6}", r.max_abs_value);
    println!("  Lip x / Lip p      {:.6} / {:.6}", r.lip_x_max, r.lip_p_max);
    println!("  Hoelder-in-t max   {:.6}", r.holder_max);
    println!("  max Isaacs gap     {:.3e}", r.max_isaacs_gap);
    println!("  convexity residual {:.3e}", r.max_convexity_residual);
    println!("  split nodes (t0)   {}", r.slices.first().map_or(0, |s| s.n_split));
    println!("  wall time          {:.3} s", r.wall_seconds);
}
