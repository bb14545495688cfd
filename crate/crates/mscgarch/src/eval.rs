//! Forecast-accuracy metrics and the head-to-head model comparison.
//!
//! Volatility forecasts are scored against the squared observations:
//! `e_t = var_forecast_t - y_t²`, `RMSE = sqrt(mean e²)`,
//! `MAE = mean |e|`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::filter::run_filter;
use crate::model::ModelSpec;

/// Accuracy of one model's variance forecasts.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub model_name: String,
    pub rmse: f64,
    pub mae: f64,
    pub n: usize,
    /// `|var_forecast_t - y_t²|` per evaluated period.
    pub per_t_abs_error: Vec<f64>,
}

/// Scores forecasts against squared observations. Both series must be
/// aligned so that `var_forecast[t]` was formed without seeing `y[t]`.
pub fn forecast_errors(model_name: &str, var_forecast: &[f64], y: &[f64]) -> Result<EvalReport> {
    if var_forecast.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: var_forecast.len(),
            right: y.len(),
        });
    }
    if var_forecast.is_empty() {
        return Err(Error::InvalidParameter(
            "cannot evaluate an empty series".into(),
        ));
    }
    let n = y.len();
    let mut sq_sum = 0.0;
    let mut abs_sum = 0.0;
    let mut per_t_abs_error = Vec::with_capacity(n);
    for (f, obs) in var_forecast.iter().zip(y.iter()) {
        let e = f - obs * obs;
        sq_sum += e * e;
        abs_sum += e.abs();
        per_t_abs_error.push(e.abs());
    }
    Ok(EvalReport {
        model_name: model_name.to_string(),
        rmse: (sq_sum / n as f64).sqrt(),
        mae: abs_sum / n as f64,
        n,
        per_t_abs_error,
    })
}

/// Side-by-side forecast accuracy of the full model and the
/// constant-weight baseline on the same series.
#[derive(Debug, Clone, Serialize)]
pub struct ModelComparison {
    pub cgarch: EvalReport,
    pub garch: EvalReport,
    pub winner_rmse: String,
    pub winner_mae: String,
    /// First evaluated index (0 for in-sample evaluation).
    pub eval_start: usize,
}

/// Filters the series under both specs and scores each model's one-step
/// forecasts over the whole sample.
pub fn compare_models(
    y: &[f64],
    spec_cgarch: &ModelSpec,
    spec_garch: &ModelSpec,
) -> Result<ModelComparison> {
    compare_models_from(y, spec_cgarch, spec_garch, 0)
}

/// As [`compare_models`], but scores only `t >= eval_start` (filtering
/// still consumes the full history), for held-out evaluation.
pub fn compare_models_from(
    y: &[f64],
    spec_cgarch: &ModelSpec,
    spec_garch: &ModelSpec,
    eval_start: usize,
) -> Result<ModelComparison> {
    if eval_start >= y.len() {
        return Err(Error::InvalidParameter(format!(
            "evaluation start {eval_start} leaves no observations (series length {})",
            y.len()
        )));
    }
    let run_cg = run_filter(spec_cgarch, y)?;
    let run_g = run_filter(spec_garch, y)?;
    let tail = &y[eval_start..];
    let fc_cg: Vec<f64> = run_cg.forecasts[eval_start..]
        .iter()
        .map(|f| f.var_forecast)
        .collect();
    let fc_g: Vec<f64> = run_g.forecasts[eval_start..]
        .iter()
        .map(|f| f.var_forecast)
        .collect();
    let cgarch = forecast_errors("MS-CGARCH", &fc_cg, tail)?;
    let garch = forecast_errors("MS-GARCH", &fc_g, tail)?;
    let winner = |a: f64, b: f64| {
        if a < b {
            "MS-CGARCH".to_string()
        } else if b < a {
            "MS-GARCH".to_string()
        } else {
            "tie".to_string()
        }
    };
    let winner_rmse = winner(cgarch.rmse, garch.rmse);
    let winner_mae = winner(cgarch.mae, garch.mae);
    Ok(ModelComparison {
        cgarch,
        garch,
        winner_rmse,
        winner_mae,
        eval_start,
    })
}

impl ModelComparison {
    /// Comparison table as CSV, metrics by model.
    pub fn to_csv_string(&self) -> String {
        format!(
            "metric,MS-GARCH,MS-CGARCH\nrmse,{},{}\nmae,{},{}\n",
            self.garch.rmse, self.cgarch.rmse, self.garch.mae, self.cgarch.mae
        )
    }

    /// Compact JSON comparison table (per-period errors omitted).
    pub fn to_table_json(&self) -> serde_json::Value {
        serde_json::json!({
            "comparison": [
                {"model": "MS-GARCH", "rmse": self.garch.rmse, "mae": self.garch.mae},
                {"model": "MS-CGARCH", "rmse": self.cgarch.rmse, "mae": self.cgarch.mae},
            ],
            "winner_rmse": self.winner_rmse,
            "winner_mae": self.winner_mae,
            "eval_start": self.eval_start,
            "n": self.cgarch.n,
            "volatility_proxy": "squared_observations",
        })
    }
}
