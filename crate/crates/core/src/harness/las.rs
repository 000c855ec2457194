//! Reader for unwrapped LAS 2.0 well-log files.
//!
//! Supported sections are `~V`, `~W`, `~C`, `~P`, `~O` and `~A`. Header lines
//! follow `MNEM.UNIT  VALUE : DESCRIPTION`. The first curve is the depth
//! index. Samples equal to the `NULL` value from `~W` are stored as `None`.
//! Wrapped files (`WRAP. YES`) are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LasError {
    #[error("LAS line {line}: {msg}")]
    Malformed { line: usize, msg: String },

    #[error("LAS line {line}: unsupported: {msg}")]
    Unsupported { line: usize, msg: String },

    #[error("LAS: missing required section {section}")]
    MissingSection { section: &'static str },

    #[error("LAS line {line}: expected {expected} values, found {found}")]
    ColumnCount { line: usize, expected: usize, found: usize },

    #[error("LAS line {line}: malformed number `{token}`")]
    BadNumber { line: usize, token: String },

    #[error("LAS line {line}: depth index is not strictly monotone")]
    NonMonotoneDepth { line: usize },
}

/// One header entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeaderItem {
    pub mnemonic: String,
    pub unit: String,
    pub value: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LasCurve {
    pub info: HeaderItem,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellLog {
    pub version: HeaderItem,
    pub well: Vec<HeaderItem>,
    pub parameters: Vec<HeaderItem>,
    pub null_value: Option<f64>,
    depth_unit: String,
    depths: Vec<f64>,
    curves: Vec<LasCurve>,
}

impl WellLog {
    /// Builds a log from in-memory samples; `curves` excludes the depth index.
    pub fn from_samples(depths: Vec<f64>, curves: Vec<(String, Vec<Option<f64>>)>) -> Result<Self, LasError> {
        check_monotone(&depths)?;
        let mut out = Vec::with_capacity(curves.len());
        for (name, values) in curves {
            if values.len() != depths.len() {
                return Err(LasError::Malformed {
                    line: 0,
                    msg: format!("curve {name} has {} samples for {} depths", values.len(), depths.len()),
                });
            }
            out.push(LasCurve { info: item(&name, "", "", ""), values });
        }
        Ok(WellLog {
            version: item("VERS", "", "2.0", ""),
            well: Vec::new(),
            parameters: Vec::new(),
            null_value: None,
            depth_unit: "M".into(),
            depths,
            curves: out,
        })
    }

    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    pub fn depth_unit(&self) -> &str {
        &self.depth_unit
    }

    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }

    /// Curves other than the depth index, in file order.
    pub fn curves(&self) -> &[LasCurve] {
        &self.curves
    }

    /// Case-insensitive lookup by mnemonic.
    pub fn curve(&self, mnemonic: &str) -> Option<&[Option<f64>]> {
        self.curves
            .iter()
            .find(|c| c.info.mnemonic.eq_ignore_ascii_case(mnemonic))
            .map(|c| c.values.as_slice())
    }

    pub fn well_value(&self, mnemonic: &str) -> Option<&str> {
        self.well.iter().find(|h| h.mnemonic.eq_ignore_ascii_case(mnemonic)).map(|h| h.value.as_str())
    }
}

fn item(m: &str, u: &str, v: &str, d: &str) -> HeaderItem {
    HeaderItem { mnemonic: m.into(), unit: u.into(), value: v.into(), description: d.into() }
}

fn check_monotone(depths: &[f64]) -> Result<(), LasError> {
    if depths.len() < 2 {
        return Ok(());
    }
    let up = depths[1] > depths[0];
    for (i, w) in depths.windows(2).enumerate() {
        let ok = if up { w[1] > w[0] } else { w[1] < w[0] };
        if !ok {
            return Err(LasError::NonMonotoneDepth { line: i + 2 });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Version,
    Well,
    Curve,
    Parameter,
    Other,
    Ascii,
}

fn parse_header_line(line: &str, lineno: usize) -> Result<HeaderItem, LasError> {
    let malformed = |msg: &str| LasError::Malformed { line: lineno, msg: msg.to_string() };
    let line = line.trim();
    let dot = line.find('.').ok_or_else(|| malformed("header line has no `.` after the mnemonic"))?;
    let mnemonic = line[..dot].trim();
    if mnemonic.is_empty() {
        return Err(malformed("empty mnemonic"));
    }
    let rest = &line[dot + 1..];
    // The unit runs up to the first space; the value up to the last colon.
    let unit_end = rest.find(char::is_whitespace).unwrap_or(rest.len());
    let (unit, rest) = rest.split_at(unit_end);
    let unit = unit.trim_end_matches(':');
    let colon = rest.rfind(':').ok_or_else(|| malformed("header line has no `:` before the description"))?;
    Ok(item(mnemonic, unit, rest[..colon].trim(), rest[colon + 1..].trim()))
}

fn parse_number(token: &str, lineno: usize) -> Result<f64, LasError> {
    token
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| LasError::BadNumber { line: lineno, token: token.to_string() })
}

/// Parses LAS text.
pub fn parse_las(text: &str) -> Result<WellLog, LasError> {
    let mut section = Section::None;
    let mut version: Option<HeaderItem> = None;
    let mut well = Vec::new();
    let mut curve_info: Vec<HeaderItem> = Vec::new();
    let mut parameters = Vec::new();
    let mut null_value = None;
    let mut saw_ascii = false;
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(tagline) = line.strip_prefix('~') {
            if section == Section::Ascii {
                return Err(LasError::Malformed { line: lineno, msg: "section after ~A data".into() });
            }
            section = match tagline.chars().next().map(|c| c.to_ascii_uppercase()) {
                Some('V') => Section::Version,
                Some('W') => Section::Well,
                Some('C') => Section::Curve,
                Some('P') => Section::Parameter,
                Some('O') => Section::Other,
                Some('A') => {
                    if curve_info.is_empty() {
                        return Err(LasError::MissingSection { section: "~C" });
                    }
                    saw_ascii = true;
                    Section::Ascii
                }
                _ => {
                    return Err(LasError::Malformed { line: lineno, msg: format!("unknown section `~{tagline}`") });
                }
            };
            continue;
        }
        match section {
            Section::None => {
                return Err(LasError::Malformed { line: lineno, msg: "content before the first section".into() });
            }
            Section::Version => {
                let h = parse_header_line(line, lineno)?;
                match h.mnemonic.to_ascii_uppercase().as_str() {
                    "VERS" => {
                        let v = parse_number(&h.value, lineno)?;
                        if v != 2.0 {
                            return Err(LasError::Unsupported { line: lineno, msg: format!("LAS version {}", h.value) });
                        }
                        version = Some(h);
                    }
                    "WRAP" => {
                        if !h.value.eq_ignore_ascii_case("NO") {
                            return Err(LasError::Unsupported { line: lineno, msg: "wrapped mode (WRAP = YES)".into() });
                        }
                    }
                    _ => {}
                }
            }
            Section::Well => {
                let h = parse_header_line(line, lineno)?;
                if h.mnemonic.eq_ignore_ascii_case("NULL") {
                    null_value = Some(parse_number(&h.value, lineno)?);
                }
                well.push(h);
            }
            Section::Curve => curve_info.push(parse_header_line(line, lineno)?),
            Section::Parameter => parameters.push(parse_header_line(line, lineno)?),
            Section::Other => {}
            Section::Ascii => {
                let row = line
                    .split_whitespace()
                    .map(|t| parse_number(t, lineno))
                    .collect::<Result<Vec<_>, _>>()?;
                if row.len() != curve_info.len() {
                    return Err(LasError::ColumnCount { line: lineno, expected: curve_info.len(), found: row.len() });
                }
                rows.push((lineno, row));
            }
        }
    }

    let version = version.ok_or(LasError::MissingSection { section: "~V (VERS)" })?;
    if !saw_ascii {
        return Err(LasError::MissingSection { section: "~A" });
    }

    let is_null = |x: f64| null_value.is_some_and(|n| x == n);
    let mut depths = Vec::with_capacity(rows.len());
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(rows.len()); curve_info.len() - 1];
    let mut prev: Option<f64> = None;
    let mut direction = 0.0;
    for (lineno, row) in &rows {
        let d = row[0];
        if is_null(d) {
            return Err(LasError::Malformed { line: *lineno, msg: "null depth index".into() });
        }
        if let Some(p) = prev {
            let step = d - p;
            if step == 0.0 || (direction != 0.0 && step.signum() != direction) {
                return Err(LasError::NonMonotoneDepth { line: *lineno });
            }
            direction = step.signum();
        }
        prev = Some(d);
        depths.push(d);
        for (col, &x) in columns.iter_mut().zip(&row[1..]) {
            col.push(if is_null(x) { None } else { Some(x) });
        }
    }

    let mut info = curve_info.into_iter();
    let depth_info = info.next().expect("curve section is non-empty");
    let curves = info.zip(columns).map(|(info, values)| LasCurve { info, values }).collect();
    Ok(WellLog { version, well, parameters, null_value, depth_unit: depth_info.unit, depths, curves })
}

/// Reads and parses a LAS file.
pub fn read_las(path: impl AsRef<Path>) -> crate::Result<WellLog> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
    Ok(parse_las(&text)?)
}
