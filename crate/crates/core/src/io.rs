//! Binary basis containers and CSV output.
//!
//! A basis file starts with the magic `GMSBASIS` and a record count. Each
//! record is a header of four u64 values `(block, tag, rows, cols)`, the
//! eigenvalues for eigenfunction records (`cols` f64), then the matrix in
//! column-major order. Everything is little-endian. Tags 1 to 3 are the
//! snapshot kinds, 11 and 12 the eigenfunction families.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use faer::Mat;

use crate::adaptive::{ConvergenceRecord, Strategy};
use crate::error::{Error, Result};
use crate::field::read_u64;
use crate::grid::Grid;
use crate::indicators::IndicatorSet;
use crate::snapshots::{SnapshotKind, SnapshotSpace};
use crate::spectral::{EigenData, Family, OfflineSpaces};

const BASIS_MAGIC: &[u8; 8] = b"GMSBASIS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordTag {
    Snapshot(SnapshotKind),
    Eigen(Family),
}

impl RecordTag {
    pub fn code(self) -> u64 {
        match self {
            RecordTag::Snapshot(k) => k.code(),
            RecordTag::Eigen(f) => 10 + f.number() as u64,
        }
    }

    pub fn from_code(c: u64) -> Option<Self> {
        match c {
            11 => Some(RecordTag::Eigen(Family::One)),
            12 => Some(RecordTag::Eigen(Family::Two)),
            _ => SnapshotKind::from_code(c).map(RecordTag::Snapshot),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BasisRecord {
    pub block: usize,
    pub tag: RecordTag,
    /// Eigenvalues (eigenfunction records only).
    pub values: Vec<f64>,
    /// Columns are fine coefficient vectors on the block.
    pub matrix: Mat<f64>,
}

impl BasisRecord {
    pub fn from_snapshot(s: &SnapshotSpace) -> Self {
        Self {
            block: s.block,
            tag: RecordTag::Snapshot(s.kind),
            values: Vec::new(),
            matrix: s.basis.clone(),
        }
    }

    pub fn from_eigen(e: &EigenData) -> Self {
        Self {
            block: e.block,
            tag: RecordTag::Eigen(e.family),
            values: e.values.clone(),
            matrix: e.functions.clone(),
        }
    }
}

pub fn write_basis_file(path: &Path, records: &[BasisRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(BASIS_MAGIC)?;
    w.write_all(&(records.len() as u64).to_le_bytes())?;
    for r in records {
        let (rows, cols) = (r.matrix.nrows(), r.matrix.ncols());
        for h in [r.block as u64, r.tag.code(), rows as u64, cols as u64] {
            w.write_all(&h.to_le_bytes())?;
        }
        if let RecordTag::Eigen(_) = r.tag {
            if r.values.len() != cols {
                return Err(Error::Format("eigenvalue count does not match the column count".into()));
            }
            for v in &r.values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        for c in 0..cols {
            for i in 0..rows {
                w.write_all(&r.matrix[(i, c)].to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = [0u8; 8];
    (0..n)
        .map(|_| {
            r.read_exact(&mut buf)?;
            Ok(f64::from_le_bytes(buf))
        })
        .collect()
}

pub fn read_basis_file(path: &Path) -> Result<Vec<BasisRecord>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != BASIS_MAGIC {
        return Err(Error::Format(format!("{}: not a basis file", path.display())));
    }
    let count = read_u64(&mut r)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let block = read_u64(&mut r)? as usize;
        let code = read_u64(&mut r)?;
        let tag = RecordTag::from_code(code).ok_or_else(|| Error::Format(format!("unknown record tag {code}")))?;
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        let values = match tag {
            RecordTag::Eigen(_) => read_f64s(&mut r, cols)?,
            RecordTag::Snapshot(_) => Vec::new(),
        };
        let data = read_f64s(&mut r, rows * cols)?;
        out.push(BasisRecord {
            block,
            tag,
            values,
            matrix: Mat::from_fn(rows, cols, |i, j| data[j * rows + i]),
        });
    }
    Ok(out)
}

/// Snapshot and eigenfunction records of every block.
pub fn offline_records(spaces: &OfflineSpaces) -> Vec<BasisRecord> {
    let mut out = Vec::new();
    for b in &spaces.blocks {
        out.push(BasisRecord::from_snapshot(&b.snapshot));
        out.push(BasisRecord::from_eigen(&b.eig1));
        if let Some(e) = &b.eig2 {
            out.push(BasisRecord::from_eigen(e));
        }
    }
    out
}

/// Full-precision float for CSV (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub const HISTORY_HEADER: &str = "m,strategy,dof,e2,ea,e2_snap,ea_snap,sum_eta2,k_marked,n_added,n_removed,seconds";

pub fn history_csv(records: &[ConvergenceRecord]) -> String {
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.m,
            r.strategy,
            r.dof,
            fmt_f64(r.e2),
            fmt_f64(r.ea),
            fmt_opt(r.e2_snap),
            fmt_opt(r.ea_snap),
            fmt_f64(r.sum_eta2),
            r.k_marked,
            r.n_added,
            r.n_removed,
            fmt_f64(r.seconds)
        );
    }
    s
}

pub fn write_history(path: &Path, records: &[ConvergenceRecord]) -> Result<()> {
    std::fs::write(path, history_csv(records))?;
    Ok(())
}

/// Parse a history file. The `converged` flag is not stored and reads as
/// `false`.
pub fn read_history(path: &Path) -> Result<Vec<ConvergenceRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let perr = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if k == 0 {
            if line.trim() != HISTORY_HEADER {
                return Err(perr(1, "unexpected header".into()));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 12 {
            return Err(perr(k + 1, format!("expected 12 fields, found {}", f.len())));
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| perr(k + 1, format!("bad number `{}`", f[i])));
        let int = |i: usize| f[i].parse::<usize>().map_err(|_| perr(k + 1, format!("bad integer `{}`", f[i])));
        let opt = |i: usize| if f[i].is_empty() { Ok(None) } else { num(i).map(Some) };
        out.push(ConvergenceRecord {
            m: int(0)?,
            strategy: f[1].parse::<Strategy>()?,
            dof: int(2)?,
            e2: num(3)?,
            ea: num(4)?,
            e2_snap: opt(5)?,
            ea_snap: opt(6)?,
            sum_eta2: num(7)?,
            k_marked: int(8)?,
            n_added: int(9)?,
            n_removed: int(10)?,
            seconds: num(11)?,
            converged: false,
        });
    }
    Ok(out)
}

/// One row per iteration, block and family.
pub fn write_indicators(path: &Path, sets: &[IndicatorSet]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "m,block,family,dual_norm2,lambda_next,eta2")?;
    for (m, set) in sets.iter().enumerate() {
        let mut entries = set.entries.clone();
        entries.sort_by_key(|e| (e.block, e.family));
        for e in entries {
            writeln!(
                w,
                "{m},{},{},{},{},{}",
                e.block,
                e.family.number(),
                fmt_f64(e.dual_norm2),
                fmt_opt(e.lambda_next),
                fmt_f64(e.eta2)
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Named nodal fields with coordinates, one row per block node.
pub fn write_solution(path: &Path, grid: &Grid, fields: &[(&str, &[f64])]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let names: Vec<&str> = fields.iter().map(|f| f.0).collect();
    writeln!(w, "block,node,x,y,{}", names.join(","))?;
    let npb = grid.nodes_per_block();
    for i in 0..grid.num_blocks() {
        for n in 0..npb {
            let [x, y] = grid.node_coords(i, n);
            let vals: Vec<String> = fields.iter().map(|f| fmt_f64(f.1[i * npb + n])).collect();
            writeln!(w, "{i},{n},{},{},{}", fmt_f64(x), fmt_f64(y), vals.join(","))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Long-format comparison rows `label,strategy,dof,ea,e2`.
pub fn comparison_csv(runs: &[(String, Vec<ConvergenceRecord>)]) -> String {
    let mut s = String::from("label,strategy,dof,ea,e2\n");
    for (label, records) in runs {
        for r in records {
            let _ = writeln!(s, "{label},{},{},{},{}", r.strategy, r.dof, fmt_f64(r.ea), fmt_f64(r.e2));
        }
    }
    s
}

/// Plain-text table with DOF, e2 and ea columns (plus the snapshot
/// errors when present).
pub fn summary_table(records: &[ConvergenceRecord]) -> String {
    let snap = records.iter().any(|r| r.ea_snap.is_some());
    let mut s = String::new();
    if snap {
        let _ = writeln!(s, "{:>8}  {:>10}  {:>10}  {:>10}  {:>10}", "DOF", "e2", "ea", "e2_snap", "ea_snap");
    } else {
        let _ = writeln!(s, "{:>8}  {:>10}  {:>10}", "DOF", "e2", "ea");
    }
    for r in records {
        let _ = write!(s, "{:>8}  {:>10.4e}  {:>10.4e}", r.dof, r.e2, r.ea);
        if snap {
            let _ = write!(
                s,
                "  {:>10.4e}  {:>10.4e}",
                r.e2_snap.unwrap_or(f64::NAN),
                r.ea_snap.unwrap_or(f64::NAN)
            );
        }
        s.push('\n');
    }
    s
}
