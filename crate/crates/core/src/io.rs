//! File formats: `T^Δ` tables as flat text, tradeoff points as CSV and
//! per-step episode traces.
//!
//! A table file is a `#`-prefixed header followed by one whitespace-separated
//! row per anchor:
//!
//! ```text
//! # sleeptrack tdelta
//! # provenance: greedy
//! # interpolate: false
//! # bound: 1
//! # anchors: 1 2 3
//! 0 0.25
//! 0.1 0
//! 0 0
//! ```
//!
//! A solved Q_MDP policy may follow as a `# section: sleep` block with one
//! row of per-sensor sleep times per location.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sim::{TraceStep, TradeoffPoint};
use crate::tdelta::{Provenance, TDeltaTable};

const MAGIC: &str = "# sleeptrack tdelta";

/// A table plus an optional solved sleep-time matrix (rows = locations).
#[derive(Debug, Clone, PartialEq)]
pub struct TableFile {
    pub table: TDeltaTable,
    pub sleep: Option<Vec<Vec<u32>>>,
}

fn join<T: ToString>(xs: impl IntoIterator<Item = T>) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn write_table<W: Write>(out: &mut W, file: &TableFile) -> Result<()> {
    let t = &file.table;
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "# provenance: {}", t.provenance().as_str())?;
    writeln!(out, "# interpolate: {}", t.interpolates())?;
    writeln!(out, "# bound: {}", t.bound())?;
    writeln!(out, "# anchors: {}", join(t.anchors()))?;
    for row in t.values().chunks(t.sensors()) {
        writeln!(out, "{}", join(row))?;
    }
    if let Some(sleep) = &file.sleep {
        writeln!(out, "# section: sleep")?;
        for row in sleep {
            writeln!(out, "{}", join(row))?;
        }
    }
    Ok(())
}

fn parse_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("line {line}: {msg}"))
}

fn numbers<T: std::str::FromStr>(s: &str, line: usize) -> Result<Vec<T>> {
    s.split_whitespace()
        .map(|w| w.parse().map_err(|_| parse_err(line, format!("bad number {w:?}"))))
        .collect()
}

pub fn read_table<R: BufRead>(input: R) -> Result<TableFile> {
    let mut provenance = None;
    let mut interpolate = None;
    let mut bound = None;
    let mut anchors: Option<Vec<f64>> = None;
    let mut values = Vec::new();
    let mut sensors = None;
    let mut sleep: Option<Vec<Vec<u32>>> = None;
    let mut seen_magic = false;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if let Some(header) = text.strip_prefix('#') {
            if text == MAGIC {
                seen_magic = true;
                continue;
            }
            let Some((key, value)) = header.split_once(':') else { continue };
            let value = value.trim();
            match key.trim() {
                "provenance" => provenance = Some(Provenance::parse(value)?),
                "interpolate" => {
                    interpolate = Some(value.parse::<bool>().map_err(|_| parse_err(n, "interpolate must be true or false"))?)
                }
                "bound" => bound = Some(value.parse::<f64>().map_err(|_| parse_err(n, "bad bound"))?),
                "anchors" => anchors = Some(numbers(value, n)?),
                "section" if value == "sleep" => sleep = Some(Vec::new()),
                "section" => return Err(parse_err(n, format!("unknown section {value:?}"))),
                _ => {}
            }
            continue;
        }
        if let Some(rows) = sleep.as_mut() {
            rows.push(numbers(text, n)?);
            continue;
        }
        let row: Vec<f64> = numbers(text, n)?;
        match sensors {
            None => sensors = Some(row.len()),
            Some(s) if s != row.len() => return Err(parse_err(n, format!("expected {s} columns, found {}", row.len()))),
            _ => {}
        }
        values.extend(row);
    }
    if !seen_magic {
        return Err(Error::Parse("not a T^Δ table file".into()));
    }
    let anchors = anchors.ok_or_else(|| Error::Parse("missing anchors header".into()))?;
    let sensors = sensors.ok_or_else(|| Error::Parse("table has no rows".into()))?;
    let rows = values.len() / sensors;
    if rows != anchors.len() {
        return Err(Error::Parse(format!("{} anchors but {rows} rows", anchors.len())));
    }
    let table = TDeltaTable::new(
        anchors,
        sensors,
        values,
        interpolate.unwrap_or(false),
        provenance.unwrap_or(Provenance::File),
        bound.ok_or_else(|| Error::Parse("missing bound header".into()))?,
    )?;
    Ok(TableFile { table, sleep })
}

pub fn save_table(path: &Path, file: &TableFile) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_table(&mut out, file)?;
    out.flush()?;
    Ok(())
}

pub fn load_table(path: &Path) -> Result<TableFile> {
    read_table(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn write_points<W: Write>(out: W, points: &[TradeoffPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_points<R: std::io::Read>(input: R) -> Result<Vec<TradeoffPoint>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Writes a trace as CSV with columns `step,b,b_hat,awake,g`.
pub fn write_trace<W: Write>(out: W, trace: &[TraceStep]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "b", "b_hat", "awake", "g"])?;
    for s in trace {
        w.write_record([
            s.step.to_string(),
            s.location.to_string(),
            s.estimate.to_string(),
            s.awake.to_string(),
            s.cost.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
