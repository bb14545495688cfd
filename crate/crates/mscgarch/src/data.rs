//! Data ingestion, returns transformation, descriptive statistics, and the
//! CSV writers behind the CLI.

use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::bayes::PosteriorDraws;
use crate::error::{Error, Result};
use crate::filter::FilterRun;
use crate::model::SimulationOutput;

/// A univariate series with optional row labels (dates).
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesData {
    pub timestamps: Option<Vec<String>>,
    pub values: Vec<f64>,
}

/// Percentage log returns from a price series:
/// `r_t = 100 * ln(P_t / P_{t-1})`.
pub fn prices_to_returns(prices: &[f64]) -> Result<Vec<f64>> {
    if prices.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 prices to form returns, got {}",
            prices.len()
        )));
    }
    if let Some(idx) = prices.iter().position(|p| !p.is_finite() || *p <= 0.0) {
        return Err(Error::InvalidSeries {
            index: idx,
            reason: format!("price must be positive and finite, got {}", prices[idx]),
        });
    }
    Ok(prices
        .windows(2)
        .map(|w| 100.0 * (w[1] / w[0]).ln())
        .collect())
}

/// Sample descriptive statistics.
///
/// `std` uses the n-1 denominator; skewness and kurtosis are the
/// standardized third and fourth central moments (kurtosis is non-excess,
/// Gaussian = 3). Both are `None` for a constant series.
#[derive(Debug, Clone, Serialize)]
pub struct DescriptiveStats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub skewness: Option<f64>,
    pub kurtosis: Option<f64>,
    pub max: f64,
    pub min: f64,
}

pub fn descriptive_stats(series: &[f64]) -> Result<DescriptiveStats> {
    if series.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "need at least 4 observations, got {}",
            series.len()
        )));
    }
    if let Some(idx) = series.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidSeries {
            index: idx,
            reason: "non-finite value".into(),
        });
    }
    let n = series.len();
    let nf = n as f64;
    let mean = series.iter().sum::<f64>() / nf;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for v in series {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    let (skewness, kurtosis) = if m2 > 0.0 {
        (Some(m3 / m2.powf(1.5)), Some(m4 / (m2 * m2)))
    } else {
        (None, None)
    };
    let max = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = series.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(DescriptiveStats {
        n,
        mean,
        std: (m2 * nf / (nf - 1.0)).sqrt(),
        skewness,
        kurtosis,
        max,
        min,
    })
}

/// Reads a univariate series from CSV. Accepts bare-value rows or
/// `(label, value)` rows, with or without a header; rejects non-finite
/// values with their row index.
pub fn read_series_csv<R: Read>(reader: R) -> Result<SeriesData> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records: Vec<csv::StringRecord> = Vec::new();
    for record in csv_reader.records() {
        records.push(record?);
    }
    if records.is_empty() {
        return Err(Error::InvalidParameter("CSV contains no rows".into()));
    }
    let width = records[0].len();
    if width == 0 || width > 2 {
        return Err(Error::InvalidParameter(format!(
            "unsupported CSV layout: expected 1 or 2 columns, got {width}"
        )));
    }
    let value_col = width - 1;
    // A first row whose value column does not parse is a header.
    let start = usize::from(
        records[0]
            .get(value_col)
            .is_none_or(|f| f.parse::<f64>().is_err()),
    );
    let mut timestamps = (width == 2).then(Vec::new);
    let mut values = Vec::with_capacity(records.len() - start);
    for (offset, record) in records[start..].iter().enumerate() {
        let index = start + offset;
        if record.len() != width {
            return Err(Error::InvalidSeries {
                index,
                reason: format!("expected {width} columns, got {}", record.len()),
            });
        }
        let field = record.get(value_col).unwrap_or("");
        let value: f64 = field.parse().map_err(|_| Error::InvalidSeries {
            index,
            reason: format!("cannot parse {field:?} as a number"),
        })?;
        if !value.is_finite() {
            return Err(Error::InvalidSeries {
                index,
                reason: "non-finite value".into(),
            });
        }
        values.push(value);
        if let Some(ts) = timestamps.as_mut() {
            ts.push(record.get(0).unwrap_or("").to_string());
        }
    }
    if values.is_empty() {
        return Err(Error::InvalidParameter("CSV contains no data rows".into()));
    }
    Ok(SeriesData { timestamps, values })
}

pub fn read_series_csv_path(path: &Path) -> Result<SeriesData> {
    let file = std::fs::File::open(path)?;
    read_series_csv(std::io::BufReader::new(file))
}

/// Writes a simulated path: `t, y, z, H_1..H_K` (regimes are 1-based in
/// the file).
pub fn write_simulation_csv<W: Write>(writer: W, sim: &SimulationOutput) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let k = sim.k();
    let mut header = vec!["t".to_string(), "y".to_string(), "z".to_string()];
    header.extend((1..=k).map(|j| format!("H_{j}")));
    out.write_record(&header)?;
    for t in 0..sim.len() {
        let mut row = vec![
            (t + 1).to_string(),
            format_float(sim.y[t]),
            (sim.z[t] + 1).to_string(),
        ];
        row.extend((0..k).map(|j| format_float(sim.variance(t, j))));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes per-period filter output:
/// `t, y, y_squared, var_forecast, alpha_1..alpha_K, H_1..H_K`.
pub fn write_forecast_csv<W: Write>(writer: W, y: &[f64], run: &FilterRun) -> Result<()> {
    if y.len() != run.forecasts.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: run.forecasts.len(),
        });
    }
    let mut out = csv::Writer::from_writer(writer);
    let k = run.forecasts.first().map_or(0, |f| f.alpha_pred.len());
    let mut header = vec![
        "t".to_string(),
        "y".to_string(),
        "y_squared".to_string(),
        "var_forecast".to_string(),
    ];
    header.extend((1..=k).map(|j| format!("alpha_{j}")));
    header.extend((1..=k).map(|j| format!("H_{j}")));
    out.write_record(&header)?;
    for (t, forecast) in run.forecasts.iter().enumerate() {
        let mut row = vec![
            (t + 1).to_string(),
            format_float(y[t]),
            format_float(y[t] * y[t]),
            format_float(forecast.var_forecast),
        ];
        row.extend(forecast.alpha_pred.iter().map(|v| format_float(*v)));
        row.extend(forecast.per_regime.iter().map(|s| format_float(s.h)));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes retained posterior draws, one row per iteration, one column per
/// parameter (model parameters then transition probabilities), preceded by
/// the chain id.
pub fn write_posterior_csv<W: Write>(writer: W, chains: &[PosteriorDraws]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let first = chains
        .first()
        .ok_or_else(|| Error::InvalidParameter("no chains to write".into()))?;
    let mut header = vec!["chain".to_string()];
    header.extend(first.names());
    out.write_record(&header)?;
    for draws in chains {
        for row in draws.draw_matrix() {
            let mut record = vec![draws.config.chain.to_string()];
            record.extend(row.iter().map(|v| format_float(*v)));
            out.write_record(&record)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Tidy per-period comparison data for external plotting:
/// `t, y_squared, var_cgarch, var_garch, abs_err_cgarch, abs_err_garch`.
pub fn write_per_period_errors_csv<W: Write>(
    writer: W,
    y: &[f64],
    cgarch: &FilterRun,
    garch: &FilterRun,
) -> Result<()> {
    if y.len() != cgarch.forecasts.len() || y.len() != garch.forecasts.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: cgarch.forecasts.len(),
        });
    }
    let mut out = csv::Writer::from_writer(writer);
    out.write_record([
        "t",
        "y_squared",
        "var_cgarch",
        "var_garch",
        "abs_err_cgarch",
        "abs_err_garch",
    ])?;
    for (t, &obs) in y.iter().enumerate() {
        let y2 = obs * obs;
        let vc = cgarch.forecasts[t].var_forecast;
        let vg = garch.forecasts[t].var_forecast;
        out.write_record([
            (t + 1).to_string(),
            format_float(y2),
            format_float(vc),
            format_float(vg),
            format_float((vc - y2).abs()),
            format_float((vg - y2).abs()),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn format_float(v: f64) -> String {
    // Display gives the shortest representation that round-trips.
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::simulate;
    use crate::test_fixtures::dgp_spec;

    #[test]
    fn returns_of_flat_prices_are_zero() {
        assert_eq!(prices_to_returns(&[100.0, 100.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn returns_match_log_formula() {
        let r = prices_to_returns(&[100.0, 101.0]).unwrap();
        assert!((r[0] - 100.0 * (1.01_f64).ln()).abs() < 1e-12);
        assert!((r[0] - 0.995_033_085_316_808_3).abs() < 1e-12);
    }

    #[test]
    fn returns_are_antisymmetric() {
        let r = prices_to_returns(&[100.0, 101.0, 100.0]).unwrap();
        assert!((r[0] + r[1]).abs() < 1e-12);
    }

    #[test]
    fn returns_reject_bad_prices() {
        match prices_to_returns(&[100.0, -3.0, 100.0]) {
            Err(Error::InvalidSeries { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected InvalidSeries, got {other:?}"),
        }
        assert!(prices_to_returns(&[100.0]).is_err());
        assert!(prices_to_returns(&[100.0, f64::NAN]).is_err());
    }

    #[test]
    fn stats_of_gaussian_sample() {
        let spec = crate::test_fixtures::constant_variance_spec(1.0);
        let sim = simulate(&spec, 200_000, 71, 1.0).unwrap();
        let stats = descriptive_stats(&sim.y).unwrap();
        assert!(stats.mean.abs() < 0.01);
        assert!((stats.std - 1.0).abs() < 0.01);
        assert!(stats.skewness.unwrap().abs() < 0.03);
        assert!((stats.kurtosis.unwrap() - 3.0).abs() < 0.06);
        assert!(stats.max > 3.0 && stats.min < -3.0);
    }

    #[test]
    fn stats_of_symmetric_two_point_sample() {
        let series = [-1.0, 1.0, -1.0, 1.0, -1.0, 1.0];
        let stats = descriptive_stats(&series).unwrap();
        assert_eq!(stats.mean, 0.0);
        assert_eq!(stats.skewness.unwrap(), 0.0);
        assert_eq!(stats.max, 1.0);
        assert_eq!(stats.min, -1.0);
    }

    #[test]
    fn stats_of_constant_series_flag_undefined_moments() {
        let stats = descriptive_stats(&[2.0; 10]).unwrap();
        assert_eq!(stats.std, 0.0);
        assert!(stats.skewness.is_none());
        assert!(stats.kurtosis.is_none());
    }

    #[test]
    fn stats_require_minimum_length() {
        assert!(descriptive_stats(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn csv_bare_values() {
        let data = read_series_csv("1.5\n-0.25\n3\n".as_bytes()).unwrap();
        assert_eq!(data.values, vec![1.5, -0.25, 3.0]);
        assert!(data.timestamps.is_none());
    }

    #[test]
    fn csv_header_and_dates() {
        let text = "date,close\n2020-01-01,100.0\n2020-01-02,101.5\n";
        let data = read_series_csv(text.as_bytes()).unwrap();
        assert_eq!(data.values, vec![100.0, 101.5]);
        assert_eq!(
            data.timestamps.unwrap(),
            vec!["2020-01-01".to_string(), "2020-01-02".to_string()]
        );
    }

    #[test]
    fn csv_header_on_bare_values() {
        let data = read_series_csv("returns\n0.5\n-0.5\n".as_bytes()).unwrap();
        assert_eq!(data.values, vec![0.5, -0.5]);
    }

    #[test]
    fn csv_rejects_non_finite_and_garbage() {
        match read_series_csv("1.0\nNaN\n2.0\n".as_bytes()) {
            Err(Error::InvalidSeries { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected InvalidSeries, got {other:?}"),
        }
        match read_series_csv("d,v\nx,1.0\ny,oops\n".as_bytes()) {
            Err(Error::InvalidSeries { index, .. }) => assert_eq!(index, 2),
            other => panic!("expected InvalidSeries, got {other:?}"),
        }
        assert!(read_series_csv("a,b,c\n1,2,3\n".as_bytes()).is_err());
        assert!(read_series_csv("".as_bytes()).is_err());
    }

    #[test]
    fn simulation_csv_shape() {
        let sim = simulate(&dgp_spec(), 5, 73, 1.0).unwrap();
        let mut buf = Vec::new();
        write_simulation_csv(&mut buf, &sim).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.trim().lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0], "t,y,z,H_1,H_2");
        // Regime labels in the file are 1-based.
        let z_field: usize = lines[1].split(',').nth(2).unwrap().parse().unwrap();
        assert!(z_field == 1 || z_field == 2);
    }

    #[test]
    fn forecast_csv_round_trips_through_reader() {
        let spec = dgp_spec();
        let sim = simulate(&spec, 20, 77, 1.0).unwrap();
        let run = crate::filter::run_filter_with_init(&spec, &sim.y, 1.0).unwrap();
        let mut buf = Vec::new();
        write_forecast_csv(&mut buf, &sim.y, &run).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,y,y_squared,var_forecast,alpha_1,alpha_2,H_1,H_2"));
        // The var_forecast column parses back to the original values.
        for (line, forecast) in text.trim().lines().skip(1).zip(run.forecasts.iter()) {
            let field: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
            assert_eq!(field, forecast.var_forecast);
        }
    }
}
