//! CSV and JSON artifacts.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde_json::{json, Value};

use crate::error::{Error, ModelError, Result};
use crate::model::{region_boundaries, PayoffTriple, RegionPartition};
use crate::sets::PointSet;
use crate::solver::ValueSolution;
use crate::strategy::pure_stop_sets;

pub const VALUE_COLUMNS: [&str; 10] = ["x", "f", "g", "h", "f_tilde", "g_tilde", "v", "in_d1", "in_d2", "residual"];

/// 17 significant digits, enough to read back the same double.
fn fmt(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x > 0.0 {
        "inf".into()
    } else if x < 0.0 {
        "-inf".into()
    } else {
        "nan".into()
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        k => Error::Model(ModelError::Config {
            field: "csv".into(),
            message: format!("{k:?}"),
        }),
    }
}

pub fn write_value_csv<W: Write>(out: W, sol: &ValueSolution, payoffs: &PayoffTriple) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(VALUE_COLUMNS).map_err(csv_err)?;
    for i in 0..sol.grid.len() {
        let x = sol.grid[i];
        let (f, g, h) = payoffs.eval(x);
        let flag = |b: bool| if b { "1".to_string() } else { "0".to_string() };
        w.write_record([
            fmt(x),
            fmt(f),
            fmt(g),
            fmt(h),
            fmt(sol.f_tilde[i]),
            fmt(sol.g_tilde[i]),
            fmt(sol.v[i]),
            flag(sol.d1_mask[i]),
            flag(sol.d2_mask[i]),
            fmt(sol.residual[i]),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns of a value CSV, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValueTable {
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    pub f_tilde: Vec<f64>,
    pub g_tilde: Vec<f64>,
    pub v: Vec<f64>,
    pub in_d1: Vec<bool>,
    pub in_d2: Vec<bool>,
    pub residual: Vec<f64>,
}

pub fn read_value_csv<R: Read>(input: R) -> Result<ValueTable> {
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd.headers().map_err(csv_err)?.clone();
    if headers.iter().ne(VALUE_COLUMNS) {
        return Err(ModelError::Config {
            field: "header".into(),
            message: format!("expected {}", VALUE_COLUMNS.join(",")),
        }
        .into());
    }
    let mut t = ValueTable::default();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let num = |j: usize| -> Result<f64> {
            rec[j].trim().parse::<f64>().map_err(|e| {
                ModelError::Config {
                    field: format!("line {} column {}", line + 2, VALUE_COLUMNS[j]),
                    message: e.to_string(),
                }
                .into()
            })
        };
        t.x.push(num(0)?);
        t.f.push(num(1)?);
        t.g.push(num(2)?);
        t.h.push(num(3)?);
        t.f_tilde.push(num(4)?);
        t.g_tilde.push(num(5)?);
        t.v.push(num(6)?);
        t.in_d1.push(&rec[7] == "1");
        t.in_d2.push(&rec[8] == "1");
        t.residual.push(num(9)?);
    }
    Ok(t)
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

pub fn set_json(s: &PointSet) -> Value {
    json!({
        "intervals": s.intervals.iter().map(|&(a, b)| json!([finite_or_null(a), finite_or_null(b)])).collect::<Vec<_>>(),
        "points": s.points,
    })
}

/// Free boundaries, region boundaries and the pure stop sets of a solution.
pub fn boundaries_json(sol: &ValueSolution, partition: &RegionPartition, payoffs: &PayoffTriple) -> Result<Value> {
    let regions = region_boundaries(payoffs, partition)?;
    let (s1, s2) = pure_stop_sets(sol, partition, payoffs)?;
    Ok(json!({
        "free_boundaries": { "d1": sol.free_boundaries.d1, "d2": sol.free_boundaries.d2 },
        "region_boundaries": regions
            .iter()
            .map(|b| json!({ "x": b.x, "left": format!("{:?}", b.left), "right": format!("{:?}", b.right) }))
            .collect::<Vec<_>>(),
        "pure_stop_sets": { "player1": set_json(&s1), "player2": set_json(&s2) },
        "iterations": sol.iterations,
        "max_residual": sol.residual.iter().fold(0.0f64, |m, r| m.max(r.abs())),
    }))
}

pub fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, v)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn write_value_file(path: &Path, sol: &ValueSolution, payoffs: &PayoffTriple) -> Result<()> {
    write_value_csv(BufWriter::new(File::create(path)?), sol, payoffs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting_round_trips() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 4.618317239384073, f64::MAX, f64::MIN_POSITIVE] {
            assert_eq!(fmt(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(fmt(f64::INFINITY), "inf");
        assert_eq!("-inf".parse::<f64>().unwrap(), f64::NEG_INFINITY);
    }
}
