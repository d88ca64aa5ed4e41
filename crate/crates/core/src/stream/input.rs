use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::generators::StreamItem;
use crate::error::{Error, Result};

/// Expected layout of one input line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ItemShape {
    /// A single positive integer.
    Item,
    /// `d` comma-separated coordinates.
    Point(usize),
    /// `d` features followed by the target.
    Row(usize),
    /// `d` values of the first matrix followed by `d'` of the second.
    RowPair(usize, usize),
}

fn reals(line: &str, expected: usize, lineno: usize) -> Result<Vec<f64>> {
    let vals = line
        .split(',')
        .map(|t| {
            let v: f64 = t.trim().parse().map_err(|_| Error::Parse { line: lineno, msg: format!("not a number: {:?}", t.trim()) })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Parse { line: lineno, msg: "non-finite value".into() })
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    if vals.len() != expected {
        return Err(Error::Parse { line: lineno, msg: format!("expected {expected} values, found {}", vals.len()) });
    }
    Ok(vals)
}

/// Parses one non-empty line; `lineno` is 1-based and only used for errors.
pub fn parse_line(line: &str, shape: ItemShape, lineno: usize) -> Result<StreamItem> {
    let line = line.trim();
    match shape {
        ItemShape::Item => match line.parse::<u64>() {
            Ok(x) if x >= 1 => Ok(StreamItem::Item(x)),
            _ => Err(Error::Parse { line: lineno, msg: format!("not a positive integer: {line:?}") }),
        },
        ItemShape::Point(d) => Ok(StreamItem::Point(reals(line, d, lineno)?)),
        ItemShape::Row(d) => {
            let mut v = reals(line, d + 1, lineno)?;
            let b = v.pop().expect("d + 1 values");
            Ok(StreamItem::Row(v, b))
        }
        ItemShape::RowPair(d, dp) => {
            let mut a = reals(line, d + dp, lineno)?;
            let b = a.split_off(d);
            Ok(StreamItem::RowPair(a, b))
        }
    }
}

/// Reads a whole input file; blank lines are skipped.
pub fn parse_input(path: &Path, shape: ItemShape) -> Result<Vec<StreamItem>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_line(&line, shape, i + 1)?);
    }
    Ok(out)
}

fn join(vals: &[f64]) -> String {
    vals.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

/// Line representation that `parse_line` reads back exactly.
pub fn format_item(item: &StreamItem) -> String {
    match item {
        StreamItem::Item(x) => x.to_string(),
        StreamItem::Point(p) => join(p),
        StreamItem::Row(a, b) => format!("{},{}", join(a), b),
        StreamItem::RowPair(a, b) => format!("{},{}", join(a), join(b)),
    }
}

pub fn write_stream<W: Write>(mut w: W, items: impl IntoIterator<Item = StreamItem>) -> Result<()> {
    for it in items {
        writeln!(w, "{}", format_item(&it))?;
    }
    Ok(())
}
