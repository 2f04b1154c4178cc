use isaacs_vex::belief::simulate_beliefs;
use isaacs_vex::grid::Grids;
use isaacs_vex::io::{read_snapshot, read_splits_csv, write_snapshot, write_splits_csv};
use isaacs_vex::model::{builtin_config, GameSpec};
use isaacs_vex::quadrature::GHRule;
use isaacs_vex::scheme::{solve, SolveOptions};
use proptest::prelude::*;

fn small(name: &str) -> (GameSpec, Grids, GHRule) {
    let cfg = builtin_config(name).unwrap();
    let spec = GameSpec::from_config(&cfg.game).unwrap();
    let grids = Grids::new(&spec, 6, &[31], 6);
    (spec, grids, GHRule::new(5, 1).unwrap())
}

#[test]
fn artifacts_round_trip_into_beliefs() {
    let (spec, grids, rule) = small("reveal2");
    let sol = solve(&spec, &grids, &rule, SolveOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let path = dir.path().join("splits.csv");
    write_splits_csv(&path, &grids, &sol.splits).unwrap();
    let back = read_splits_csv(&path, &grids, Some(&sol.fields)).unwrap();
    for (a, b) in sol.splits.iter().flatten().zip(back.iter().flatten()) {
        for (na, nb) in a.nodes.iter().zip(&b.nodes) {
            assert_eq!(na.points, nb.points);
            assert_eq!(na.weights, nb.weights);
            assert_eq!(na.touching, nb.touching);
        }
    }

    let start = grids.simplex.nearest(&[0.5, 0.5]);
    let direct = simulate_beliefs(&spec, &grids, &sol.splits, &[0.0], start, 64, 2).unwrap();
    let reread = simulate_beliefs(&spec, &grids, &back, &[0.0], start, 64, 2).unwrap();
    assert_eq!(direct, reread);

    let snap = dir.path().join("s.vexf");
    write_snapshot(&snap, &grids, &sol.fields[3]).unwrap();
    let (head, field) = read_snapshot(&snap).unwrap();
    assert_eq!(head.k, 3);
    assert_eq!(field.values, sol.fields[3].values);
}

#[test]
fn information_has_value_in_reveal() {
    let (spec, grids, rule) = small("reveal2");
    let sol = solve(&spec, &grids, &rule, SolveOptions::default()).unwrap();
    // strictly below the chord somewhere: the informed player randomizes
    let f = &sol.fields[0];
    let (a, b) = (grids.simplex.vertex(0), grids.simplex.vertex(1));
    let mut gap = 0.0f64;
    for s in 0..f.n_space {
        for j in 0..grids.simplex.len() {
            let p = grids.simplex.point(j);
            gap = gap.min(f.get(s, j) - p[0] * f.get(s, a) - p[1] * f.get(s, b));
        }
    }
    assert!(gap < -1e-6, "{gap}");
    assert!(sol.splits[0].iter().any(|e| e.n_split() > 0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Constant payoffs without running cost stay affine in p and never split.
    #[test]
    fn constant_payoffs_are_preserved(c1 in -1.0f64..1.0, c2 in -1.0f64..1.0) {
        let mut cfg = builtin_config("pursuit1d").unwrap();
        cfg.game.g = vec![format!("{c1}"), format!("{c2}")];
        let spec = GameSpec::from_config(&cfg.game).unwrap();
        let grids = Grids::new(&spec, 3, &[21], 4);
        let sol = solve(&spec, &grids, &GHRule::new(3, 1).unwrap(), SolveOptions::default()).unwrap();
        for f in &sol.fields {
            for s in 0..f.n_space {
                for j in 0..grids.simplex.len() {
                    let p = grids.simplex.point(j);
                    prop_assert!((f.get(s, j) - (p[0] * c1 + p[1] * c2)).abs() <= 1e-14);
                }
            }
        }
        prop_assert!(sol.splits.iter().flatten().all(|e| e.n_split() == 0));
    }
}
