//! CSV readers and writers for catalogs, traces and strategy checkpoints.
//!
//! Formats (UTF-8, LF):
//! - catalog: `file,size`, one row per file, ids `0..N-1` contiguous;
//! - trace: `slot,sbs,file,demand`, sparse, rows in (slot, sbs, file) order;
//! - strategy: `file,fraction`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::strategy::CachingStrategy;
use crate::topology::Topology;
use crate::trace::DemandTrace;

const CATALOG_HEADER: [&str; 2] = ["file", "size"];
const TRACE_HEADER: [&str; 4] = ["slot", "sbs", "file", "demand"];
const STRATEGY_HEADER: [&str; 2] = ["file", "fraction"];

/// What a trace file does not record by itself.
#[derive(Debug, Clone)]
pub struct TraceShape {
    pub topology: Topology,
    /// Number of slots; inferred as `max slot + 1` when `None`.
    pub n_slots: Option<usize>,
    /// Cache budget as a fraction of the catalog's total size.
    pub cache_fraction: f64,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Reads rows of `width` fields after checking the header. Returns
/// `(line, fields)` pairs.
fn read_rows<R: Read>(
    reader: R,
    path: &Path,
    header: &[&str],
) -> Result<Vec<(usize, Vec<String>)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    let mut seen_header = false;
    for rec in rdr.records() {
        let rec = rec.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if !seen_header {
            let got: Vec<&str> = rec.iter().collect();
            if got != header {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("expected header '{}', got '{}'", header.join(","), got.join(",")),
                });
            }
            seen_header = true;
            continue;
        }
        if rec.len() != header.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("expected {} fields, got {}", header.len(), rec.len()),
            });
        }
        rows.push((line, rec.iter().map(str::to_owned).collect()));
    }
    if !seen_header {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "missing header".into(),
        });
    }
    Ok(rows)
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, name: &str, s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("bad {name} '{s}'"),
    })
}

/// Reads file sizes from a catalog CSV.
pub fn load_catalog_sizes(path: &Path) -> Result<Vec<f64>> {
    let rows = read_rows(open(path)?, path, &CATALOG_HEADER)?;
    let mut sizes = vec![f64::NAN; rows.len()];
    for (line, fields) in &rows {
        let f: usize = parse_field(path, *line, "file", &fields[0])?;
        let s: f64 = parse_field(path, *line, "size", &fields[1])?;
        if f >= sizes.len() {
            return Err(Error::validation(format!(
                "{}:{line}: file ids must be contiguous from 0, got {f}",
                path.display()
            )));
        }
        if !sizes[f].is_nan() {
            return Err(Error::validation(format!(
                "{}:{line}: duplicate file {f}",
                path.display()
            )));
        }
        sizes[f] = s;
    }
    Ok(sizes)
}

/// Loads and validates a catalog and its trace.
pub fn load_trace(
    catalog_path: &Path,
    trace_path: &Path,
    shape: &TraceShape,
) -> Result<(Catalog, DemandTrace)> {
    let sizes = load_catalog_sizes(catalog_path)?;
    let total: f64 = sizes.iter().sum();
    let catalog = Catalog::new(sizes, shape.cache_fraction * total)?;

    let rows = read_rows(open(trace_path)?, trace_path, &TRACE_HEADER)?;
    let mut parsed = Vec::with_capacity(rows.len());
    let mut max_slot = None;
    for (line, fields) in &rows {
        let t: usize = parse_field(trace_path, *line, "slot", &fields[0])?;
        let b: usize = parse_field(trace_path, *line, "sbs", &fields[1])?;
        let f: usize = parse_field(trace_path, *line, "file", &fields[2])?;
        let d: f64 = parse_field(trace_path, *line, "demand", &fields[3])?;
        if f >= catalog.n_files() {
            return Err(Error::validation(format!(
                "{}:{line}: file {f} out of range (catalog has {} files)",
                trace_path.display(),
                catalog.n_files()
            )));
        }
        if b >= shape.topology.n_sbs() {
            return Err(Error::validation(format!(
                "{}:{line}: sbs {b} out of range (topology has {} sBSs)",
                trace_path.display(),
                shape.topology.n_sbs()
            )));
        }
        if !(d.is_finite() && d >= 0.0) {
            return Err(Error::validation(format!(
                "{}:{line}: negative demand {d}",
                trace_path.display()
            )));
        }
        max_slot = max_slot.max(Some(t));
        parsed.push((*line, t, b, f, d));
    }
    let n_slots = match shape.n_slots {
        Some(n) => n,
        None => max_slot.map_or(0, |m| m + 1),
    };
    let mut trace = DemandTrace::zeros(n_slots, catalog.n_files(), shape.topology.clone());
    let mut seen = std::collections::HashSet::new();
    for (line, t, b, f, d) in parsed {
        if t >= n_slots {
            return Err(Error::validation(format!(
                "{}:{line}: slot {t} out of range ({n_slots} slots)",
                trace_path.display()
            )));
        }
        if !seen.insert((t, b, f)) {
            return Err(Error::validation(format!(
                "{}:{line}: duplicate entry for slot {t}, sbs {b}, file {f}",
                trace_path.display()
            )));
        }
        trace.set(t, b, f, d)?;
    }
    Ok((catalog, trace))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn write_catalog<W: Write>(mut w: W, catalog: &Catalog) -> std::io::Result<()> {
    writeln!(w, "{}", CATALOG_HEADER.join(","))?;
    for (f, s) in catalog.sizes().iter().enumerate() {
        writeln!(w, "{f},{s}")?;
    }
    Ok(())
}

pub fn write_trace<W: Write>(mut w: W, trace: &DemandTrace) -> std::io::Result<()> {
    writeln!(w, "{}", TRACE_HEADER.join(","))?;
    for (t, b, f, d) in trace.nonzero() {
        writeln!(w, "{t},{b},{f},{d}")?;
    }
    Ok(())
}

pub fn save_catalog(path: &Path, catalog: &Catalog) -> Result<()> {
    let mut w = create(path)?;
    write_catalog(&mut w, catalog)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn save_trace(path: &Path, trace: &DemandTrace) -> Result<()> {
    let mut w = create(path)?;
    write_trace(&mut w, trace)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Writes a strategy checkpoint. Values use the shortest representation that
/// parses back to the same `f64`.
pub fn save_strategy(path: &Path, strategy: &CachingStrategy) -> Result<()> {
    let mut w = create(path)?;
    let res = (|| {
        writeln!(w, "{}", STRATEGY_HEADER.join(","))?;
        for (f, x) in strategy.fractions().iter().enumerate() {
            writeln!(w, "{f},{x}")?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

pub fn load_strategy(path: &Path, catalog: &Catalog) -> Result<CachingStrategy> {
    let rows = read_rows(open(path)?, path, &STRATEGY_HEADER)?;
    let mut fractions = vec![0.0; catalog.n_files()];
    for (line, fields) in &rows {
        let f: usize = parse_field(path, *line, "file", &fields[0])?;
        let x: f64 = parse_field(path, *line, "fraction", &fields[1])?;
        if f >= fractions.len() {
            return Err(Error::validation(format!(
                "{}:{line}: file {f} out of range",
                path.display()
            )));
        }
        fractions[f] = x;
    }
    CachingStrategy::new(fractions, catalog)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn shape(n_sbs: usize, n_slots: Option<usize>) -> TraceShape {
        TraceShape {
            topology: Topology::line(n_sbs),
            n_slots,
            cache_fraction: 0.5,
        }
    }

    #[test]
    fn loads_small_files() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(dir.path(), "c.csv", "file,size\n0,10\n1,20\n");
        let t = write(dir.path(), "t.csv", "slot,sbs,file,demand\n0,0,0,5\n");
        let (cat, tr) = load_trace(&c, &t, &shape(1, None)).unwrap();
        assert_eq!(cat.sizes(), &[10.0, 20.0]);
        assert_eq!(cat.budget(), 15.0);
        assert_eq!(tr.slot_demand(0, 0).unwrap(), &[5.0, 0.0]);
    }

    #[test]
    fn empty_trace_is_all_zero() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(dir.path(), "c.csv", "file,size\n0,10\n1,20\n");
        let t = write(dir.path(), "t.csv", "slot,sbs,file,demand\n");
        let (_, tr) = load_trace(&c, &t, &shape(2, Some(3))).unwrap();
        assert_eq!(tr.n_slots(), 3);
        assert_eq!(tr.nonzero().count(), 0);
    }

    #[test]
    fn rejects_out_of_range_file() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(dir.path(), "c.csv", "file,size\n0,10\n1,20\n");
        let t = write(dir.path(), "t.csv", "slot,sbs,file,demand\n0,0,7,1\n");
        let err = load_trace(&c, &t, &shape(1, None)).unwrap_err().to_string();
        assert!(err.contains("file 7 out of range"), "{err}");
    }

    #[test]
    fn malformed_row_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(dir.path(), "c.csv", "file,size\n0,10\n");
        let t = write(dir.path(), "t.csv", "slot,sbs,file,demand\n0,0,0,1\n0,0,x,1\n");
        match load_trace(&c, &t, &shape(1, None)).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
        let t = write(dir.path(), "t2.csv", "slot,sbs,file,demand\n0,0,0\n");
        assert!(matches!(
            load_trace(&c, &t, &shape(1, None)).unwrap_err(),
            Error::Parse { line: 2, .. }
        ));
    }

    #[test]
    fn rejects_negative_demand_and_bad_header() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(dir.path(), "c.csv", "file,size\n0,10\n");
        let t = write(dir.path(), "t.csv", "slot,sbs,file,demand\n0,0,0,-1\n");
        assert!(matches!(
            load_trace(&c, &t, &shape(1, None)).unwrap_err(),
            Error::Validation(_)
        ));
        let t = write(dir.path(), "t2.csv", "t,b,f,d\n");
        assert!(matches!(
            load_trace(&c, &t, &shape(1, None)).unwrap_err(),
            Error::Parse { line: 1, .. }
        ));
    }

    #[test]
    fn strategy_checkpoint_round_trips_bits() {
        let dir = tempfile::tempdir().unwrap();
        let cat = Catalog::new(vec![3.0, 7.0, 11.0], 9.0).unwrap();
        let s = CachingStrategy::new(vec![0.1 + 0.2, 1.0 / 3.0, 1e-17], &cat).unwrap();
        let p = dir.path().join("s.csv");
        save_strategy(&p, &s).unwrap();
        let back = load_strategy(&p, &cat).unwrap();
        for (a, b) in s.fractions().iter().zip(back.fractions()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
