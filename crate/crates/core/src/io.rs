//! Comma-separated persistence for click records and APD traces.
//!
//! Files may begin with `#` comment lines; the header row is mandatory and
//! must match exactly. Times are written in µs and phases in radians, both
//! with 6 decimals.

use std::io::{Read, Write};

use crate::photonics::{ClickRecord, Herald, SpinBasis, SpinResult};

pub const CLICKS_HEADER: [&str; 8] = [
    "attempt_id",
    "herald",
    "detection_time_us",
    "phi_at_attempt",
    "spin_basis",
    "spin_result",
    "window_index",
    "photon_count",
];

pub const APD_HEADER: [&str; 2] = ["apd1", "apd2"];

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("line {line}: {msg}")]
    Format { line: u64, msg: String },
    #[error("missing or wrong header, expected `{expected}`")]
    Header { expected: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl IoError {
    pub fn line(&self) -> Option<u64> {
        match self {
            IoError::Format { line, .. } => Some(*line),
            IoError::Csv(e) => e.position().map(|p| p.line()),
            _ => None,
        }
    }
}

/// Writes one row per heralded attempt, after optional `#` comment lines.
pub fn write_clicks<W: Write>(out: W, comments: &[String], records: &[ClickRecord]) -> Result<(), IoError> {
    let mut out = out;
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CLICKS_HEADER)?;
    for r in records {
        w.write_record([
            r.attempt_id.to_string(),
            r.herald.label().to_string(),
            format!("{:.6}", r.detection_time_us),
            format!("{:.6}", r.phi_at_attempt),
            r.spin_basis.label().to_string(),
            r.spin_result.label().to_string(),
            r.window_index.to_string(),
            r.photon_count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn clicks_to_string(comments: &[String], records: &[ClickRecord]) -> String {
    let mut buf = Vec::new();
    write_clicks(&mut buf, comments, records).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("ascii output")
}

fn reader<R: Read>(input: R, header: &[&str]) -> Result<csv::Reader<R>, IoError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(input);
    let expected = header.join(",");
    let ok = r.headers().map(|h| h.iter().eq(header.iter().copied())).unwrap_or(false);
    if !ok {
        return Err(IoError::Header { expected });
    }
    Ok(r)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str, line: u64) -> Result<T, IoError> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse().map_err(|_| IoError::Format { line, msg: format!("column `{name}`: cannot parse `{raw}`") })
}

fn finite(v: f64, name: &str, line: u64) -> Result<f64, IoError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(IoError::Format { line, msg: format!("column `{name}` must be finite") })
    }
}

pub fn read_clicks<R: Read>(input: R) -> Result<Vec<ClickRecord>, IoError> {
    let mut r = reader(input, &CLICKS_HEADER)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != CLICKS_HEADER.len() {
            return Err(IoError::Format {
                line,
                msg: format!("expected {} fields, got {}", CLICKS_HEADER.len(), rec.len()),
            });
        }
        let label = |i: usize| rec.get(i).unwrap_or("");
        let bad = |i: usize| IoError::Format {
            line,
            msg: format!("column `{}`: unknown value `{}`", CLICKS_HEADER[i], label(i)),
        };
        let detection_time_us = finite(field(&rec, 2, CLICKS_HEADER[2], line)?, CLICKS_HEADER[2], line)?;
        let phi_at_attempt = finite(field(&rec, 3, CLICKS_HEADER[3], line)?, CLICKS_HEADER[3], line)?;
        let window_index: u8 = field(&rec, 6, CLICKS_HEADER[6], line)?;
        if window_index == 0 {
            return Err(IoError::Format { line, msg: "window_index starts at 1".into() });
        }
        out.push(ClickRecord {
            attempt_id: field(&rec, 0, CLICKS_HEADER[0], line)?,
            herald: Herald::from_label(label(1)).ok_or_else(|| bad(1))?,
            detection_time_us,
            phi_at_attempt,
            spin_basis: SpinBasis::from_label(label(4)).ok_or_else(|| bad(4))?,
            spin_result: SpinResult::from_label(label(5)).ok_or_else(|| bad(5))?,
            window_index,
            photon_count: field(&rec, 7, CLICKS_HEADER[7], line)?,
        });
    }
    Ok(out)
}

pub fn parse_clicks(text: &str) -> Result<Vec<ClickRecord>, IoError> {
    read_clicks(text.as_bytes())
}

/// Paired APD voltages, one row per phase-tracking sample.
pub fn read_apd<R: Read>(input: R) -> Result<Vec<(f64, f64)>, IoError> {
    let mut r = reader(input, &APD_HEADER)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(IoError::Format { line, msg: format!("expected 2 fields, got {}", rec.len()) });
        }
        let a = finite(field(&rec, 0, "apd1", line)?, "apd1", line)?;
        let b = finite(field(&rec, 1, "apd2", line)?, "apd2", line)?;
        out.push((a, b));
    }
    Ok(out)
}

pub fn parse_apd(text: &str) -> Result<Vec<(f64, f64)>, IoError> {
    read_apd(text.as_bytes())
}

pub fn apd_to_string(points: &[(f64, f64)]) -> String {
    let mut s = APD_HEADER.join(",");
    s.push('\n');
    for (a, b) in points {
        s.push_str(&format!("{a:.6},{b:.6}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photonics::Detector;

    fn sample() -> Vec<ClickRecord> {
        vec![
            ClickRecord {
                attempt_id: 17,
                herald: Herald::CentralBin(Detector::Two),
                detection_time_us: 76.234_567,
                phi_at_attempt: 1.5,
                spin_basis: SpinBasis::Y,
                spin_result: SpinResult::Down,
                window_index: 1,
                photon_count: 0,
            },
            ClickRecord {
                attempt_id: 40,
                herald: Herald::EarlyBin,
                detection_time_us: 1.0,
                phi_at_attempt: -0.25,
                spin_basis: SpinBasis::Z,
                spin_result: SpinResult::Up,
                window_index: 2,
                photon_count: 3,
            },
        ]
    }

    #[test]
    fn clicks_round_trip() {
        let text = clicks_to_string(&["manifest = manifest.toml".into()], &sample());
        assert!(text.starts_with("# manifest"));
        assert!(text.contains("76.234567,1.500000"));
        assert_eq!(parse_clicks(&text).unwrap(), sample());
    }

    #[test]
    fn header_is_mandatory() {
        let body = "17,central2,76.2,1.5,Y,down,1,0\n";
        assert!(matches!(parse_clicks(body), Err(IoError::Header { .. })));
        assert!(matches!(parse_clicks(""), Err(IoError::Header { .. })));
    }

    #[test]
    fn bad_row_reports_line() {
        let text = format!("{}\n1,early,1.0,0.0,Z,up,1,0\n2,middle,1.0,0.0,Z,up,1,0\n", CLICKS_HEADER.join(","));
        let e = parse_clicks(&text).unwrap_err();
        assert_eq!(e.line(), Some(3), "{e}");
    }

    #[test]
    fn apd_round_trip_and_errors() {
        let pts = vec![(0.5, -0.25), (1.0, 0.0)];
        assert_eq!(parse_apd(&apd_to_string(&pts)).unwrap(), pts);
        assert!(parse_apd("apd1,apd2\n1,nan\n").is_err());
        assert!(parse_apd("a,b\n1,2\n").is_err());
    }
}
