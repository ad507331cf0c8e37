//! Curve file formats: JSON Lines and long-format CSV.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use crate::curve::{Curve, CurveDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveFormat {
    Jsonl,
    Csv,
}

impl FromStr for CurveFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(CurveFormat::Jsonl),
            "csv" => Ok(CurveFormat::Csv),
            other => Err(Error::param(format!("unknown curve format {other:?}"))),
        }
    }
}

impl CurveFormat {
    /// Guess from the file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CurveFormat::Csv,
            _ => CurveFormat::Jsonl,
        }
    }
}

pub fn load_curves(path: impl AsRef<Path>, format: CurveFormat) -> Result<CurveDataset> {
    let file = File::open(path.as_ref())?;
    read_curves(BufReader::new(file), format)
}

pub fn read_curves<R: Read>(reader: R, format: CurveFormat) -> Result<CurveDataset> {
    match format {
        CurveFormat::Jsonl => read_jsonl(BufReader::new(reader)),
        CurveFormat::Csv => read_csv(reader),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonCurve {
    id: String,
    values: Vec<f64>,
    #[serde(default)]
    costs: Option<Vec<f64>>,
}

fn read_jsonl<R: BufRead>(reader: R) -> Result<CurveDataset> {
    let mut curves: Vec<(usize, Curve)> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: JsonCurve = serde_json::from_str(&line)
            .map_err(|e| Error::data(lineno, format!("malformed record: {e}")))?;
        let curve = Curve {
            id: raw.id,
            values: raw.values,
            costs: raw.costs,
        };
        curve
            .validate()
            .map_err(|e| Error::data(lineno, e.to_string()))?;
        curves.push((lineno, curve));
    }
    finish(curves)
}

fn read_csv<R: Read>(reader: R) -> Result<CurveDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::data(1, e.to_string()))?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    let with_cost = match names.as_slice() {
        ["run_id", "step", "value"] => false,
        ["run_id", "step", "value", "cost"] => true,
        _ => {
            return Err(Error::data(
                1,
                format!(
                    "expected header run_id,step,value[,cost], found {}",
                    names.join(",")
                ),
            ))
        }
    };

    let mut curves: Vec<(usize, Curve)> = Vec::new();
    let mut current: Option<(usize, Curve)> = None;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::data(line, format!("malformed record: {e}"))
        })?;
        let lineno = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("");
        let id = field(0).to_string();
        let step: usize = field(1)
            .parse()
            .map_err(|_| Error::data(lineno, format!("invalid step {:?}", field(1))))?;
        let value: f64 = field(2)
            .parse()
            .map_err(|_| Error::data(lineno, format!("invalid value {:?}", field(2))))?;
        if !value.is_finite() {
            return Err(Error::data(
                lineno,
                format!("non-finite value {:?}", field(2)),
            ));
        }
        let cost = if with_cost {
            let c: f64 = field(3)
                .parse()
                .map_err(|_| Error::data(lineno, format!("invalid cost {:?}", field(3))))?;
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::data(
                    lineno,
                    format!("non-positive cost {:?}", field(3)),
                ));
            }
            Some(c)
        } else {
            None
        };

        let continues = matches!(&current, Some((_, c)) if c.id == id);
        if !continues {
            if let Some(done) = current.take() {
                curves.push(done);
            }
            if curves.iter().any(|(_, c)| c.id == id) {
                return Err(Error::data(
                    lineno,
                    format!("rows for run {id:?} are not contiguous"),
                ));
            }
            current = Some((
                lineno,
                Curve {
                    id: id.clone(),
                    values: Vec::new(),
                    costs: with_cost.then(Vec::new),
                },
            ));
        }
        let (_, curve) = current.as_mut().expect("current run set above");
        if step != curve.values.len() + 1 {
            return Err(Error::data(
                lineno,
                format!(
                    "run {id:?}: expected step {}, found {step}",
                    curve.values.len() + 1
                ),
            ));
        }
        curve.values.push(value);
        if let (Some(costs), Some(c)) = (curve.costs.as_mut(), cost) {
            costs.push(c);
        }
    }
    if let Some(done) = current {
        curves.push(done);
    }
    finish(curves)
}

fn finish(curves: Vec<(usize, Curve)>) -> Result<CurveDataset> {
    if curves.is_empty() {
        return Err(Error::data(1, "empty file: no curves"));
    }
    let mut seen = std::collections::HashSet::new();
    for (line, curve) in &curves {
        if !seen.insert(curve.id.as_str()) {
            return Err(Error::data(*line, format!("duplicate id {:?}", curve.id)));
        }
    }
    CurveDataset::new(curves.into_iter().map(|(_, c)| c).collect())
}

pub fn write_jsonl<W: Write>(mut out: W, dataset: &CurveDataset) -> Result<()> {
    for curve in dataset.curves() {
        serde_json::to_writer(&mut out, curve)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
