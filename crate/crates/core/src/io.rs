//! Text formats shared by the artifact writers.

use crate::error::{Error, Result};

/// Seventeen significant digits; parses back to the same double.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn parse_f64(field: &str, path: &str, row: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|e| Error::Format {
        path: path.to_string(),
        reason: format!("row {row}: cannot parse {field:?} as a number ({e})"),
    })
}

pub(crate) fn check_header(reader: &mut csv::Reader<&[u8]>, expected: &[&str], path: &str) -> Result<()> {
    let header = reader.headers()?.clone();
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Format {
            path: path.to_string(),
            reason: format!("expected columns {expected:?}, found {got:?}"),
        });
    }
    Ok(())
}

pub(crate) fn format_error(path: &str, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_string(),
        reason: reason.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0, -0.0] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
    }
}
