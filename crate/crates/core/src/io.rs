//! Solve artifacts on disk.
//!
//! * values CSV: `k, t_k, x_1..x_d, p_1..p_I, value`
//! * slice snapshot: `"VEXF1"`, then little-endian `u32` k, d, I, m, the
//!   `d` axis node counts, `f64` t_k, and the values space-major
//! * splits CSV: `k, x_1..x_d, p_1..p_I, l, lambda, pi_1..pi_I`, one row per
//!   split atom
//! * paths CSV: `path_id, i, k, t_k, x_1..x_d, p_1..p_I`

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::belief::BeliefPath;
use crate::convexify::{EnvelopeSplit, NodeSplit};
use crate::error::{Error, Result};
use crate::grid::{Grids, ValueField};

pub const SNAPSHOT_MAGIC: &[u8; 5] = b"VEXF1";

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

fn header(d: usize, n_sc: usize, head: &[&str], tail: &[&str]) -> Vec<String> {
    let mut h: Vec<String> = head.iter().map(|s| s.to_string()).collect();
    h.extend((1..=d).map(|a| format!("x{a}")));
    h.extend((1..=n_sc).map(|i| format!("p{i}")));
    h.extend(tail.iter().map(|s| s.to_string()));
    h
}

/// All slices as one long CSV table.
pub fn write_values_csv(path: &Path, grids: &Grids, fields: &[ValueField]) -> Result<()> {
    let (space, simplex) = (&grids.space, &grids.simplex);
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header(space.dim(), simplex.n_scenarios(), &["k", "t"], &["value"])).map_err(csv_err)?;
    let mut row: Vec<String> = Vec::new();
    for f in fields {
        for s in 0..space.len() {
            let x = space.point(s);
            for j in 0..simplex.len() {
                row.clear();
                row.push(f.k.to_string());
                row.push(f.t.to_string());
                row.extend(x.iter().map(|v| v.to_string()));
                row.extend(simplex.point(j).iter().map(|v| v.to_string()));
                row.push(f.get(s, j).to_string());
                w.write_record(&row).map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_snapshot(path: &Path, grids: &Grids, field: &ValueField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(SNAPSHOT_MAGIC)?;
    let d = grids.space.dim();
    for v in [field.k, d, grids.simplex.n_scenarios(), grids.simplex.resolution()] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    for &n in grids.space.counts() {
        w.write_all(&(n as u32).to_le_bytes())?;
    }
    w.write_all(&field.t.to_le_bytes())?;
    for v in &field.values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Header of a snapshot file.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotHeader {
    pub k: usize,
    pub d: usize,
    pub n_scenarios: usize,
    pub m: usize,
    pub counts: Vec<usize>,
}

pub fn read_snapshot(path: &Path) -> Result<(SnapshotHeader, ValueField)> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let bad = || Error::Parse(format!("{} is not a VEXF1 snapshot", path.display()));
    if bytes.len() < 21 || &bytes[..5] != SNAPSHOT_MAGIC {
        return Err(bad());
    }
    let mut pos = 5;
    let u32_at = |pos: &mut usize| -> Result<usize> {
        let b = bytes.get(*pos..*pos + 4).ok_or_else(bad)?;
        *pos += 4;
        Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
    };
    let k = u32_at(&mut pos)?;
    let d = u32_at(&mut pos)?;
    let n_sc = u32_at(&mut pos)?;
    let m = u32_at(&mut pos)?;
    let counts = (0..d).map(|_| u32_at(&mut pos)).collect::<Result<Vec<_>>>()?;
    let floats = &bytes[pos..];
    if floats.len() % 8 != 0 || floats.is_empty() {
        return Err(bad());
    }
    let mut vals = floats.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let t = vals.next().unwrap();
    let values: Vec<f64> = vals.collect();
    let n_space: usize = counts.iter().product();
    if n_space == 0 || values.len() % n_space != 0 {
        return Err(bad());
    }
    let n_simplex = values.len() / n_space;
    let header = SnapshotHeader { k, d, n_scenarios: n_sc, m, counts };
    Ok((header, ValueField::new(k, t, n_space, n_simplex, values)))
}

pub fn snapshot_name(k: usize) -> String {
    format!("slice_{k:05}.vexf")
}

/// Splits of steps `k = 0..L-1`, one row per atom.
pub fn write_splits_csv(path: &Path, grids: &Grids, splits: &[Vec<EnvelopeSplit>]) -> Result<()> {
    let (space, simplex) = (&grids.space, &grids.simplex);
    let n_sc = simplex.n_scenarios();
    let mut head = header(space.dim(), n_sc, &["k"], &["l", "lambda"]);
    head.extend((1..=n_sc).map(|i| format!("pi{i}")));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(&head).map_err(csv_err)?;
    let mut row: Vec<String> = Vec::new();
    for (k, step) in splits.iter().enumerate() {
        for (s, env) in step.iter().enumerate() {
            let x = space.point(s);
            for (j, node) in env.nodes.iter().enumerate() {
                for (l, (&lam, &q)) in node.weights.iter().zip(&node.points).enumerate() {
                    row.clear();
                    row.push(k.to_string());
                    row.extend(x.iter().map(|v| v.to_string()));
                    row.extend(simplex.point(j).iter().map(|v| v.to_string()));
                    row.push(l.to_string());
                    row.push(lam.to_string());
                    row.extend(simplex.point(q).iter().map(|v| v.to_string()));
                    w.write_record(&row).map_err(csv_err)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a splits CSV back onto `grids`. Envelope values are taken from
/// `fields[k]` when given, else left as NaN.
pub fn read_splits_csv(
    path: &Path,
    grids: &Grids,
    fields: Option<&[ValueField]>,
) -> Result<Vec<Vec<EnvelopeSplit>>> {
    let (space, simplex) = (&grids.space, &grids.simplex);
    let (d, n_sc) = (space.dim(), simplex.n_scenarios());
    let m = simplex.resolution() as f64;
    let steps = grids.time.steps();
    let empty = NodeSplit { value: f64::NAN, touching: false, weights: vec![], points: vec![] };
    let mut out = vec![vec![EnvelopeSplit { nodes: vec![empty; simplex.len()] }; space.len()]; steps];
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let expected = 1 + d + n_sc + 2 + n_sc;
    let node_of = |coords: &[f64]| -> Result<usize> {
        let comp: Vec<u32> = coords.iter().map(|c| (c * m).round() as u32).collect();
        simplex.find(&comp).ok_or_else(|| Error::Parse(format!("belief {coords:?} is off the simplex grid")))
    };
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != expected {
            return Err(Error::Parse(format!("splits row has {} fields, expected {expected}", rec.len())));
        }
        let nums: Vec<f64> = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| Error::Parse(format!("`{f}`: {e}"))))
            .collect::<Result<_>>()?;
        let k = nums[0] as usize;
        if k >= steps {
            return Err(Error::Parse(format!("split step {k} outside 0..{steps}")));
        }
        let s = space.nearest(&nums[1..1 + d]);
        let j = node_of(&nums[1 + d..1 + d + n_sc])?;
        let lam = nums[2 + d + n_sc];
        let q = node_of(&nums[3 + d + n_sc..])?;
        let node = &mut out[k][s].nodes[j];
        node.weights.push(lam);
        node.points.push(q);
    }
    for (k, step) in out.iter_mut().enumerate() {
        for (s, env) in step.iter_mut().enumerate() {
            for (j, node) in env.nodes.iter_mut().enumerate() {
                if node.points.is_empty() {
                    return Err(Error::Parse(format!("no split stored for k={k}, space node {s}, simplex node {j}")));
                }
                node.touching = node.points == [j];
                if let Some(f) = fields {
                    node.value = f[k].get(s, j);
                }
            }
        }
    }
    Ok(out)
}

pub fn write_paths_csv(path: &Path, grids: &Grids, paths: &[BeliefPath]) -> Result<()> {
    let simplex = &grids.simplex;
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header(grids.space.dim(), simplex.n_scenarios(), &["path_id", "i", "k", "t"], &[]))
        .map_err(csv_err)?;
    let mut row: Vec<String> = Vec::new();
    for p in paths {
        for step in &p.steps {
            row.clear();
            row.push(p.path_id.to_string());
            row.push((p.scenario + 1).to_string());
            row.push(step.k.to_string());
            row.push(step.t.to_string());
            row.extend(step.x.iter().map(|v| v.to_string()));
            row.extend(simplex.point(step.p).iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_problem;
    use crate::quadrature::GHRule;
    use crate::scheme::{solve, SolveOptions};

    #[test]
    fn snapshot_round_trip() {
        let spec = builtin_problem("reveal2").unwrap();
        let grids = Grids::new(&spec, 2, &[11], 4);
        let sol = solve(&spec, &grids, &GHRule::new(3, 1).unwrap(), SolveOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(snapshot_name(0));
        write_snapshot(&p, &grids, &sol.fields[0]).unwrap();
        let (h, f) = read_snapshot(&p).unwrap();
        assert_eq!(f, sol.fields[0]);
        assert_eq!(h, SnapshotHeader { k: 0, d: 1, n_scenarios: 2, m: 4, counts: vec![11] });
        std::fs::write(&p, b"VEXF2garbage").unwrap();
        assert!(matches!(read_snapshot(&p), Err(Error::Parse(_))));
    }

    #[test]
    fn splits_round_trip() {
        let spec = builtin_problem("reveal2").unwrap();
        let grids = Grids::new(&spec, 3, &[13], 8);
        let sol = solve(&spec, &grids, &GHRule::new(3, 1).unwrap(), SolveOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("splits.csv");
        write_splits_csv(&p, &grids, &sol.splits).unwrap();
        let back = read_splits_csv(&p, &grids, Some(&sol.fields)).unwrap();
        assert_eq!(back, sol.splits);
    }

    #[test]
    fn values_csv_shape() {
        let spec = builtin_problem("heat").unwrap();
        let grids = Grids::new(&spec, 1, &[5], 2);
        let sol = solve(&spec, &grids, &GHRule::new(3, 1).unwrap(), SolveOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("values.csv");
        write_values_csv(&p, &grids, &sol.fields).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "k,t,x1,p1,p2,value");
        assert_eq!(lines.count(), 2 * 5 * 3);
    }
}
