//! Text formats: events, labels and predictions CSV.
//!
//! All three are strict: an exact header line, LF line endings, one record
//! per line, optional trailing newline. Writers always terminate each row
//! with `\n` and print floats in shortest round-trip form, so
//! `write(read(write(x)))` is byte-identical to `write(x)`.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::events::{Event, EventStream};
use crate::metrics::{LabelRecord, LabelSeries, PupilPrediction};

pub const EVENTS_HEADER: &str = "t,x,y,p";
pub const LABELS_HEADER: &str = "t,x,y,close";
pub const PREDICTIONS_HEADER: &str = "t,x,y,confidence";

/// Yields `(line_number, fields)` for each data row after checking the
/// header. Line numbers are 1-based, header is line 1.
fn rows<'a, const N: usize>(
    text: &'a str,
    header: &'static str,
) -> Result<impl Iterator<Item = Result<(usize, [&'a str; N])>> + 'a> {
    let mut lines = text.split('\n');
    let first = lines.next().unwrap_or("");
    if first != header {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header `{header}`, found `{first}`"),
        });
    }
    // A single trailing newline leaves one empty final piece.
    let mut body: Vec<&str> = lines.collect();
    if body.last() == Some(&"") {
        body.pop();
    }
    Ok(body.into_iter().enumerate().map(|(i, line)| {
        let line_no = i + 2;
        let mut fields = [""; N];
        let mut parts = line.split(',');
        for f in fields.iter_mut() {
            *f = parts.next().ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected {N} columns"),
            })?;
        }
        if parts.next().is_some() {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected {N} columns"),
            });
        }
        Ok((line_no, fields))
    }))
}

fn field<T: FromStr>(s: &str, name: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("cannot parse {name} from `{s}`"),
    })
}

fn finite(s: &str, name: &str, line: usize) -> Result<f64> {
    let v: f64 = field(s, name, line)?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            msg: format!("{name} must be finite"),
        });
    }
    Ok(v)
}

fn flag(s: &str, name: &str, line: usize) -> Result<bool> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(Error::Parse {
            line,
            msg: format!("{name} must be 0 or 1, found `{s}`"),
        }),
    }
}

pub fn parse_event_csv(text: &str, width: u16, height: u16) -> Result<EventStream> {
    let mut events = Vec::new();
    let mut prev_t = 0u64;
    for row in rows::<4>(text, EVENTS_HEADER)? {
        let (line, [t, x, y, p]) = row?;
        let t: u64 = field(t, "t", line)?;
        let x: u64 = field(x, "x", line)?;
        let y: u64 = field(y, "y", line)?;
        let p = flag(p, "p", line)?;
        if x >= width as u64 || y >= height as u64 {
            return Err(Error::OutOfBounds {
                x,
                y,
                width,
                height,
                line: Some(line),
            });
        }
        if !events.is_empty() && t < prev_t {
            return Err(Error::NonMonotonic { line });
        }
        prev_t = t;
        events.push(Event::new(t, x as u16, y as u16, p));
    }
    EventStream::new(width, height, events)
}

pub fn write_event_csv(stream: &EventStream) -> String {
    let mut out = String::with_capacity(16 * stream.len() + 8);
    out.push_str(EVENTS_HEADER);
    out.push('\n');
    for e in stream.events() {
        writeln!(out, "{},{},{},{}", e.t, e.x, e.y, e.p as u8).unwrap();
    }
    out
}

/// Parses a labels file. `rate_hz` is stored as metadata only.
pub fn parse_label_csv(text: &str, rate_hz: f64) -> Result<LabelSeries> {
    let mut records = Vec::new();
    for row in rows::<4>(text, LABELS_HEADER)? {
        let (line, [t, x, y, close]) = row?;
        let rec = LabelRecord {
            t: field(t, "t", line)?,
            x: finite(x, "x", line)?,
            y: finite(y, "y", line)?,
            close: flag(close, "close", line)?,
        };
        if let Some(prev) = records.last() {
            let prev: &LabelRecord = prev;
            if rec.t <= prev.t {
                return Err(Error::NonMonotonic { line });
            }
        }
        records.push(rec);
    }
    LabelSeries::new(records, rate_hz)
}

pub fn write_label_csv(labels: &LabelSeries) -> String {
    let mut out = String::from(LABELS_HEADER);
    out.push('\n');
    for r in labels.records() {
        writeln!(out, "{},{},{},{}", r.t, r.x, r.y, r.close as u8).unwrap();
    }
    out
}

pub fn parse_prediction_csv(text: &str) -> Result<Vec<(u64, PupilPrediction)>> {
    rows::<4>(text, PREDICTIONS_HEADER)?
        .map(|row| {
            let (line, [t, x, y, c]) = row?;
            let confidence = finite(c, "confidence", line)?;
            if !(0.0..=1.0).contains(&confidence) {
                return Err(Error::Parse {
                    line,
                    msg: "confidence must lie in [0, 1]".into(),
                });
            }
            Ok((
                field(t, "t", line)?,
                PupilPrediction {
                    x: finite(x, "x", line)?,
                    y: finite(y, "y", line)?,
                    confidence,
                },
            ))
        })
        .collect()
}

pub fn write_prediction_csv(preds: &[(u64, PupilPrediction)]) -> String {
    let mut out = String::from(PREDICTIONS_HEADER);
    out.push('\n');
    for (t, p) in preds {
        writeln!(out, "{},{},{},{}", t, p.x, p.y, p.confidence).unwrap();
    }
    out
}
