//! File formats.
//!
//! * Point clouds are CSV with a header `x0,…,x{n-1}` and, for measures, an
//!   optional `mass` column (uniform masses when absent). Masses are
//!   normalized to sum to one.
//! * Weights, partitions and reports are JSON (see [`WeightsFile`] and the
//!   serde derives on the library types).
//! * A partition exports as CSV `x0,…,x{n-1},cell`.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::geometry::{sample_uniform, SphereSample};
use crate::mk1d::EmpiricalMeasure;
use crate::partition::Partition;
use crate::transport::{DualWeights, SolveReport};
use crate::{Error, Result};

/// A reproducible quadrature: `count` uniform points from `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub n: usize,
    pub count: usize,
    pub seed: u64,
}

impl QuadratureSpec {
    pub fn sample(&self) -> Result<SphereSample> {
        sample_uniform(self.n, self.count, self.seed)
    }
}

/// Output of a solve: weights, diagnostics and the quadrature to rebuild.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    pub weights: DualWeights,
    pub report: SolveReport,
    pub quadrature: QuadratureSpec,
    pub tol: f64,
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_table<R: Read>(reader: R) -> Result<Table> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::invalid(format!("row {}: cannot parse {f:?} as a number", i + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::invalid("CSV has no data rows"));
    }
    Ok(Table { header, rows })
}

/// Coordinate columns `x0..x{n-1}` in order, and the index of `mass` if any.
fn layout(header: &[String]) -> Result<(usize, Option<usize>)> {
    let mass = header.iter().position(|h| h == "mass");
    let coords: Vec<&String> = header.iter().filter(|h| *h != "mass").collect();
    for (i, h) in coords.iter().enumerate() {
        if **h != format!("x{i}") {
            return Err(Error::invalid(format!("unexpected column {h:?}; expected x{i}")));
        }
    }
    if mass.is_some_and(|m| m != header.len() - 1) {
        return Err(Error::invalid("the mass column must come last"));
    }
    if coords.is_empty() {
        return Err(Error::invalid("no coordinate columns"));
    }
    Ok((coords.len(), mass))
}

pub fn read_measure<R: Read>(reader: R) -> Result<EmpiricalMeasure> {
    let t = read_table(reader)?;
    let (n, mass) = layout(&t.header)?;
    let points: Vec<Vec<f64>> = t.rows.iter().map(|r| r[..n].to_vec()).collect();
    match mass {
        None => EmpiricalMeasure::uniform(&points),
        Some(m) => {
            let w: Vec<f64> = t.rows.iter().map(|r| r[m]).collect();
            if w.iter().any(|x| !(*x > 0.0)) {
                return Err(Error::invalid("masses must be positive"));
            }
            EmpiricalMeasure::weighted(&points, &w)
        }
    }
}

pub fn write_measure<W: Write>(mu: &EmpiricalMeasure, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..mu.dim()).map(|i| format!("x{i}")).collect();
    header.push("mass".into());
    w.write_record(&header)?;
    for (x, m) in mu.points().zip(mu.masses()) {
        w.write_record(x.iter().chain(std::iter::once(m)).map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads points on the sphere; rows must have unit norm within `1e-6`.
pub fn read_sphere_sample<R: Read>(reader: R, seed: u64) -> Result<SphereSample> {
    let t = read_table(reader)?;
    let (n, mass) = layout(&t.header)?;
    if mass.is_some() {
        return Err(Error::invalid("sphere samples have no mass column"));
    }
    SphereSample::from_flat(n, t.rows.into_iter().flatten().collect(), seed)
}

pub fn write_sphere_sample<W: Write>(sample: &SphereSample, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record((0..sample.n()).map(|i| format!("x{i}")))?;
    for x in sample.points() {
        w.write_record(x.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Quadrature points with their cell: `x0,…,x{n-1},cell`.
pub fn write_partition_points<W: Write>(part: &Partition, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..part.dim()).map(|i| format!("x{i}")).collect();
    header.push("cell".into());
    w.write_record(&header)?;
    for (x, cell) in part.quadrature.points().zip(&part.quad_assignments) {
        w.write_record(x.iter().map(|v| v.to_string()).chain(std::iter::once(cell.to_string())))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_measure_file(path: &Path) -> Result<EmpiricalMeasure> {
    read_measure(BufReader::new(File::open(path)?))
}
