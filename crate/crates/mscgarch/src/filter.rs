//! Forward filtering, one-step volatility forecasting, and exact
//! log-likelihood.
//!
//! Because every regime's variance recursion is path-independent, the
//! predictive regime probabilities `α_j^(t) = p(Z_t=j | I_{t-1})` follow an
//! exact `O(T*K)` forward recursion: weight the predictive probabilities by
//! the per-regime Gaussian densities of `y_t`, renormalize, and push the
//! filtered vector through the transition matrix. The one-step variance
//! forecast is the mixture `Var(Y_t | I_{t-1}) = Σ_j α_j^(t) H_{t,j}`.
//!
//! All mixture sums run in log space with a max shift; a 300-step density
//! product underflows in linear space.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{variance_step_raw, ModelSpec, VarianceStep};
use crate::stability::stationary_distribution;

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Log density of `N(0, variance)` at `y`.
#[inline]
pub(crate) fn gaussian_log_density(y: f64, variance: f64) -> f64 {
    -0.5 * (LN_2PI + variance.ln() + y * y / variance)
}

/// Filter state after `t` observations.
///
/// `alpha_pred` is the predictive vector `p(Z_{t+1}=j | I_t)` and `h` the
/// per-regime variances `H_{t+1,j}` for the next observation, so the state
/// always carries exactly what the next density evaluation needs.
#[derive(Debug, Clone)]
pub struct FilterState {
    /// Number of observations absorbed so far.
    pub t: usize,
    /// Predictive regime probabilities for the next observation.
    pub alpha_pred: Vec<f64>,
    /// Filtered regime probabilities `p(Z_t=j | I_t)`; equals the
    /// stationary distribution before any observation.
    pub alpha_filt: Vec<f64>,
    /// Per-regime conditional variances for the next observation.
    pub h: Vec<f64>,
    /// Components (h1, h2, w) behind each entry of `h`.
    pub components: Vec<VarianceStep>,
    /// Accumulated log likelihood.
    pub loglik: f64,
}

/// One-step-ahead variance forecast, formed strictly from `I_{t-1}`.
#[derive(Debug, Clone, Serialize)]
pub struct ForecastRecord {
    /// 1-based index of the observation this forecast targets.
    pub t: usize,
    /// `Σ_j α_j^(t) H_{t,j}`.
    pub var_forecast: f64,
    /// Per-regime `(H, h1, h2, w)` entering the mixture.
    pub per_regime: Vec<VarianceStep>,
    /// Predictive probabilities used as mixture weights.
    pub alpha_pred: Vec<f64>,
}

/// Initializes the filter: the predictive vector is the stationary
/// distribution and the variance recursion is seeded with `y_0 = 0` and
/// `H_{0,j} = h_init`, so the first observation's variances are
/// `H_{1,j} = b0_j + b2_j * h_init`.
pub fn filter_init(spec: &ModelSpec, h_init: f64) -> Result<FilterState> {
    spec.validate()?;
    if !h_init.is_finite() || h_init <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "H_init must be positive, got {h_init}"
        )));
    }
    let pi = stationary_distribution(&spec.transition)?;
    let components: Vec<VarianceStep> = spec
        .regimes
        .iter()
        .map(|p| variance_step_raw(p, 0.0, h_init))
        .collect();
    let h = components.iter().map(|s| s.h).collect();
    Ok(FilterState {
        t: 0,
        alpha_pred: pi.clone(),
        alpha_filt: pi,
        h,
        components,
        loglik: 0.0,
    })
}

/// Absorbs one observation: mixes the per-regime Gaussian densities with
/// the predictive probabilities (log space), updates the filtered and
/// predictive vectors, advances every regime's variance with `y_t`, and
/// accumulates the log likelihood.
pub fn filter_step(state: &FilterState, spec: &ModelSpec, y_t: f64) -> Result<FilterState> {
    if !y_t.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "observation must be finite, got {y_t}"
        )));
    }
    let k = spec.k();
    debug_assert_eq!(state.h.len(), k);

    // log(α_j f_j) with a max shift before exponentiation.
    let log_joint: Vec<f64> = state
        .alpha_pred
        .iter()
        .zip(state.h.iter())
        .map(|(&a, &h)| a.ln() + gaussian_log_density(y_t, h))
        .collect();
    let max_log = log_joint.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max_log.is_finite() {
        return Err(Error::Numerical(
            "mixture density vanished for every regime".into(),
        ));
    }
    let mut scaled: Vec<f64> = log_joint.iter().map(|l| (l - max_log).exp()).collect();
    let total: f64 = scaled.iter().sum();
    for v in &mut scaled {
        *v /= total;
    }
    let alpha_filt = scaled;
    let loglik = state.loglik + max_log + total.ln();

    let mut alpha_pred = vec![0.0; k];
    for (m, &filt) in alpha_filt.iter().enumerate() {
        for (j, slot) in alpha_pred.iter_mut().enumerate() {
            *slot += filt * spec.transition.prob(m, j);
        }
    }

    let components: Vec<VarianceStep> = spec
        .regimes
        .iter()
        .zip(state.h.iter())
        .map(|(p, &h_prev)| variance_step_raw(p, y_t, h_prev))
        .collect();
    let h = components.iter().map(|s| s.h).collect();

    Ok(FilterState {
        t: state.t + 1,
        alpha_pred,
        alpha_filt,
        h,
        components,
        loglik,
    })
}

/// One-step variance forecast from the current state; uses only
/// information already absorbed by the filter.
pub fn forecast_one_step(state: &FilterState) -> ForecastRecord {
    let var_forecast = state
        .alpha_pred
        .iter()
        .zip(state.h.iter())
        .map(|(a, h)| a * h)
        .sum();
    ForecastRecord {
        t: state.t + 1,
        var_forecast,
        per_regime: state.components.clone(),
        alpha_pred: state.alpha_pred.clone(),
    }
}

/// Output of a full filter pass.
#[derive(Debug, Clone)]
pub struct FilterRun {
    /// State after each observation (`states[t-1]` has absorbed `y_1..y_t`).
    pub states: Vec<FilterState>,
    /// Forecast for each observation, formed before it was absorbed.
    pub forecasts: Vec<ForecastRecord>,
    /// Total log likelihood of the series.
    pub loglik: f64,
}

/// Runs the filter over a series with `H_{0,j}` set to the series' sample
/// variance (falling back to 1 for degenerate inputs).
pub fn run_filter(spec: &ModelSpec, y: &[f64]) -> Result<FilterRun> {
    run_filter_with_init(spec, y, default_h_init(y))
}

/// Runs the filter with an explicit initial variance.
pub fn run_filter_with_init(spec: &ModelSpec, y: &[f64], h_init: f64) -> Result<FilterRun> {
    if y.is_empty() {
        return Err(Error::InvalidParameter(
            "series must have at least one observation".into(),
        ));
    }
    if let Some(idx) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidSeries {
            index: idx,
            reason: "non-finite value".into(),
        });
    }
    let mut state = filter_init(spec, h_init)?;
    let mut states = Vec::with_capacity(y.len());
    let mut forecasts = Vec::with_capacity(y.len());
    for (i, &y_t) in y.iter().enumerate() {
        forecasts.push(forecast_one_step(&state));
        state = filter_step(&state, spec, y_t)
            .map_err(|e| Error::Numerical(format!("filter failed at t={}: {e}", i + 1)))?;
        states.push(state.clone());
    }
    let loglik = state.loglik;
    Ok(FilterRun {
        states,
        forecasts,
        loglik,
    })
}

/// Sample variance (n-1 denominator) of a series, used as the default
/// variance seed; 1.0 when the series is too short or constant.
pub fn default_h_init(y: &[f64]) -> f64 {
    if y.len() < 2 {
        return 1.0;
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (y.len() - 1) as f64;
    if var.is_finite() && var > 0.0 {
        var
    } else {
        1.0
    }
}
