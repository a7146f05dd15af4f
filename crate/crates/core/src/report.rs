//! Shared report serialization.
//!
//! Machine-readable reports are JSON (pretty, trailing newline); their byte
//! content is a pure function of the report values, since every struct
//! serializes ordered fields and shortest-roundtrip floats. Human-readable
//! summaries print p-values with four decimals.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

/// Write a report as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let rendered = serde_json::to_string_pretty(value)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
    out.write_all(rendered.as_bytes())?;
    out.write_all(b"\n")
}

/// Four-decimal p-value formatting for rendered tables.
pub fn fmt_p(p: f64) -> String {
    format!("{p:.4}")
}

/// Mean and population standard deviation, for fold aggregation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_formatting() {
        assert_eq!(fmt_p(0.024), "0.0240");
        assert_eq!(fmt_p(1.0), "1.0000");
        assert_eq!(fmt_p(0.75183), "0.7518");
    }

    #[test]
    fn mean_std_population() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
    }
}
