//! Band CSV and JSON serialization.

use std::io::{Read, Write};

use serde::Serialize;
use splineband::BandResult;

pub const BAND_HEADER: [&str; 5] = ["x", "f1_hat", "lower", "upper", "sigma_x"];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_band_csv<W: Write>(band: &BandResult, out: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(BAND_HEADER)?;
    for k in 0..band.grid.len() {
        writer.write_record([
            format_float(band.grid[k]),
            format_float(band.f1_hat[k]),
            format_float(band.lower[k]),
            format_float(band.upper[k]),
            format_float(band.sigma_x[k]),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Columns of a band CSV in header order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BandColumns {
    pub x: Vec<f64>,
    pub f1_hat: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub sigma_x: Vec<f64>,
}

pub fn read_band_csv<R: Read>(input: R) -> Result<BandColumns, String> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers().map_err(|e| e.to_string())?;
    if header.iter().ne(BAND_HEADER) {
        return Err(format!("unexpected header {header:?}"));
    }
    let mut cols = BandColumns::default();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| e.to_string())?;
        let v: Vec<f64> = record
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| format!("row {}: {e}", i + 1)))
            .collect::<Result<_, _>>()?;
        if v.len() != BAND_HEADER.len() {
            return Err(format!("row {} has {} fields", i + 1, v.len()));
        }
        cols.x.push(v[0]);
        cols.f1_hat.push(v[1]);
        cols.lower.push(v[2]);
        cols.upper.push(v[3]);
        cols.sigma_x.push(v[4]);
    }
    Ok(cols)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_csv_round_trips_bitwise() {
        let band = BandResult {
            grid: vec![-2.0, 0.1, 1.0 / 3.0],
            f1_hat: vec![1e-300, -0.0, std::f64::consts::PI],
            lower: vec![-1.0, -2.5e10, 0.3],
            upper: vec![2.0, 5e-324, 1.0 + f64::EPSILON],
            sigma_x: vec![0.7, 0.8, 0.9],
            c_alpha: 2.9,
            alpha: 0.05,
            bootstrap_draws: 100,
            seed: 1,
        };
        let mut buf = Vec::new();
        write_band_csv(&band, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,f1_hat,lower,upper,sigma_x\n"));
        let back = read_band_csv(buf.as_slice()).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.x), bits(&band.grid));
        assert_eq!(bits(&back.f1_hat), bits(&band.f1_hat));
        assert_eq!(bits(&back.lower), bits(&band.lower));
        assert_eq!(bits(&back.upper), bits(&band.upper));
        assert_eq!(bits(&back.sigma_x), bits(&band.sigma_x));
    }

    #[test]
    fn reader_rejects_foreign_header() {
        assert!(read_band_csv("a,b\n1,2\n".as_bytes()).is_err());
    }
}
