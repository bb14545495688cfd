//! Model types, the component weight function, the per-regime variance
//! recursion, and process simulation.
//!
//! A hidden Markov chain `Z_t` on `{1..K}` selects the active regime. Each
//! regime `j` carries two GARCH(1,1) components
//!
//! ```text
//! h1 = a0 + a1*y²_{t-1} + a2*H_{t-1,j}
//! h2 = b0 + b1*y²_{t-1} + b2*H_{t-1,j}
//! ```
//!
//! mixed into the regime variance `H_{t,j} = w*h1 + (1-w)*h2` by a weight
//! `w = (1-exp(-γ|y_{t-1}|)) / (1+exp(-γ|y_{t-1}|))` that grows from 0 to 1
//! with the size of the previous observation. The observation is
//! `y_t = ε_t * sqrt(H_{t,Z_t})` with standard normal `ε_t`.
//!
//! Every regime's recursion is driven only by `y` and its own lagged
//! variance, never by the realized regime history, so all `K` variance paths
//! are deterministic functions of the data. That keeps exact filtering and
//! likelihood evaluation at `O(T*K)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{sample_categorical, simulation_rng};
use crate::stability::stationary_distribution;

/// One regime's parameters: two GARCH components and the weight slope.
///
/// `a0 > 0`, `b0 > 0` and `a1, a2, b1, b2 >= 0` keep the conditional
/// variance strictly positive; `gamma > 0` makes the weight increase with
/// `|y_{t-1}|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeParams {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub gamma: f64,
}

impl RegimeParams {
    pub fn new(a0: f64, a1: f64, a2: f64, b0: f64, b1: f64, b2: f64, gamma: f64) -> Result<Self> {
        let params = Self {
            a0,
            a1,
            a2,
            b0,
            b1,
            b2,
            gamma,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.a0, self.a1, self.a2, self.b0, self.b1, self.b2, self.gamma,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "regime parameters must be finite".into(),
            ));
        }
        if self.a0 <= 0.0 || self.b0 <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "component intercepts must be strictly positive, got a0={}, b0={}",
                self.a0, self.b0
            )));
        }
        if self.a1 < 0.0 || self.a2 < 0.0 || self.b1 < 0.0 || self.b2 < 0.0 {
            return Err(Error::InvalidParameter(
                "ARCH/GARCH coefficients must be nonnegative".into(),
            ));
        }
        if self.gamma <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "slope parameter gamma must be positive, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Row-stochastic transition matrix of an irreducible, aperiodic chain.
///
/// Construction validates that rows sum to one (within 1e-12), entries lie
/// in `[0,1]`, and the chain is primitive, which is what guarantees a unique
/// stationary distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct TransitionMatrix {
    rows: Vec<Vec<f64>>,
}

const ROW_SUM_TOL: f64 = 1e-12;

impl TransitionMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if k == 0 {
            return Err(Error::InvalidTransition("matrix is empty".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidTransition(format!(
                    "row {i} has {} entries, expected {k}",
                    row.len()
                )));
            }
            if row.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
                return Err(Error::InvalidTransition(format!(
                    "row {i} has entries outside [0,1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidTransition(format!(
                    "row {i} sums to {sum}, expected 1 within {ROW_SUM_TOL:e}"
                )));
            }
        }
        let matrix = Self { rows };
        if !matrix.is_primitive() {
            return Err(Error::InvalidTransition(
                "chain must be irreducible and aperiodic (no unique stationary distribution)"
                    .into(),
            ));
        }
        Ok(matrix)
    }

    /// Number of states.
    pub fn k(&self) -> usize {
        self.rows.len()
    }

    /// Transition probability `p(Z_t = to | Z_{t-1} = from)`.
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.rows[from][to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.rows[from]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Wielandt primitivity test: P is irreducible and aperiodic iff
    /// P^((K-1)^2 + 1) is entrywise positive.
    fn is_primitive(&self) -> bool {
        let k = self.k();
        let power = (k - 1) * (k - 1) + 1;
        // Work on the zero pattern; magnitudes do not matter here.
        let mut acc: Vec<Vec<f64>> = self.rows.clone();
        for _ in 1..power {
            let mut next = vec![vec![0.0; k]; k];
            for (acc_row, next_row) in acc.iter().zip(next.iter_mut()) {
                for (&v, rhs_row) in acc_row.iter().zip(self.rows.iter()) {
                    if v > 0.0 {
                        for (slot, &p) in next_row.iter_mut().zip(rhs_row.iter()) {
                            *slot += v * p;
                        }
                    }
                }
            }
            acc = next;
        }
        acc.iter().all(|row| row.iter().all(|v| *v > 0.0))
    }
}

impl TryFrom<Vec<Vec<f64>>> for TransitionMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows)
    }
}

impl From<TransitionMatrix> for Vec<Vec<f64>> {
    fn from(m: TransitionMatrix) -> Self {
        m.rows
    }
}

/// Full model specification: `K` regimes plus the transition matrix.
/// Innovations are standard normal.
///
/// Serializes to the spec JSON document
/// `{"regimes":[{"a0":..,"a1":..,"a2":..,"b0":..,"b1":..,"b2":..,"gamma":..},..],
///   "transition":[[..],..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub regimes: Vec<RegimeParams>,
    pub transition: TransitionMatrix,
}

impl ModelSpec {
    pub fn new(regimes: Vec<RegimeParams>, transition: TransitionMatrix) -> Result<Self> {
        let spec = Self {
            regimes,
            transition,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.regimes.is_empty() {
            return Err(Error::InvalidParameter(
                "spec must have at least one regime".into(),
            ));
        }
        if self.regimes.len() != self.transition.k() {
            return Err(Error::InvalidParameter(format!(
                "{} regimes but transition matrix is {}x{}",
                self.regimes.len(),
                self.transition.k(),
                self.transition.k()
            )));
        }
        for params in &self.regimes {
            params.validate()?;
        }
        Ok(())
    }

    /// Number of regimes.
    pub fn k(&self) -> usize {
        self.regimes.len()
    }

    /// Parses and validates a spec. Malformed JSON, transition-matrix
    /// violations, and regime-parameter violations each surface with their
    /// own error category.
    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct RawSpec {
            regimes: Vec<RegimeParams>,
            transition: Vec<Vec<f64>>,
        }
        let raw: RawSpec = serde_json::from_str(text)?;
        let transition = TransitionMatrix::new(raw.transition)?;
        ModelSpec::new(raw.regimes, transition)
    }

    /// Canonical pretty-printed JSON; field order is fixed so that
    /// load/save round-trips are byte-identical.
    pub fn to_json_pretty(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("spec serializes");
        out.push('\n');
        out
    }
}

/// Weight of the first (high-volatility) component given the previous
/// observation: `(1 - exp(-γ|y|)) / (1 + exp(-γ|y|))`.
///
/// Zero at `y = 0`, strictly increasing in `|y|`, approaches 1 as
/// `|y| -> ∞` (saturating to 1.0 in f64 once `γ|y|` exceeds ~37). Equals
/// `tanh(γ|y|/2)`.
pub fn weight(gamma: f64, y_prev: f64) -> Result<f64> {
    if !gamma.is_finite() || gamma <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    if !y_prev.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "y_prev must be finite, got {y_prev}"
        )));
    }
    Ok(weight_raw(gamma, y_prev))
}

#[inline]
pub(crate) fn weight_raw(gamma: f64, y_prev: f64) -> f64 {
    let q = (-gamma * y_prev.abs()).exp();
    (1.0 - q) / (1.0 + q)
}

/// One advance of a regime's variance recursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceStep {
    /// Mixed conditional variance `w*h1 + (1-w)*h2`.
    pub h: f64,
    /// First (high-volatility) component.
    pub h1: f64,
    /// Second (low-volatility) component.
    pub h2: f64,
    /// Component weight at this step.
    pub w: f64,
}

/// Advances one regime's variance given the previous observation and that
/// regime's previous variance.
pub fn regime_variance_step(
    params: &RegimeParams,
    y_prev: f64,
    h_prev: f64,
) -> Result<VarianceStep> {
    params.validate()?;
    if !y_prev.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "y_prev must be finite, got {y_prev}"
        )));
    }
    if !h_prev.is_finite() || h_prev <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "H_prev must be positive, got {h_prev}"
        )));
    }
    Ok(variance_step_raw(params, y_prev, h_prev))
}

#[inline]
pub(crate) fn variance_step_raw(p: &RegimeParams, y_prev: f64, h_prev: f64) -> VarianceStep {
    let y2 = y_prev * y_prev;
    let h1 = p.a0 + p.a1 * y2 + p.a2 * h_prev;
    let h2 = p.b0 + p.b1 * y2 + p.b2 * h_prev;
    let w = weight_raw(p.gamma, y_prev);
    // Equal components mix to themselves exactly, whatever the weight.
    let h = if h1 == h2 {
        h1
    } else {
        w * h1 + (1.0 - w) * h2
    };
    VarianceStep { h, h1, h2, w }
}

/// A simulated path: observations, regime labels, and all per-regime
/// variance paths.
#[derive(Debug, Clone)]
pub struct SimulationOutput {
    /// Observations `y_1..y_T`.
    pub y: Vec<f64>,
    /// Active regime index (0-based) per period.
    pub z: Vec<usize>,
    k: usize,
    // T x K, row-major.
    h: Vec<f64>,
}

impl SimulationOutput {
    /// Number of regimes.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of periods.
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Conditional variance of regime `j` at period `t` (0-based).
    pub fn variance(&self, t: usize, j: usize) -> f64 {
        self.h[t * self.k + j]
    }

    /// All per-regime variances at period `t`.
    pub fn variances_at(&self, t: usize) -> &[f64] {
        &self.h[t * self.k..(t + 1) * self.k]
    }

    /// Variance of the active regime at period `t`.
    pub fn active_variance(&self, t: usize) -> f64 {
        self.variance(t, self.z[t])
    }
}

/// Simulates `t_len` observations from the model.
///
/// The first regime is drawn from the stationary distribution, later ones
/// from the transition rows. All regime variance recursions advance every
/// period; the recursion is seeded with `y_0 = 0` and `H_{0,j} = h_init`,
/// so `H_{1,j} = b0 + b2*h_init`. Deterministic given `seed` (the
/// simulation RNG stream; see [`crate::rng`]).
pub fn simulate(
    spec: &ModelSpec,
    t_len: usize,
    seed: u64,
    h_init: f64,
) -> Result<SimulationOutput> {
    spec.validate()?;
    if t_len == 0 {
        return Err(Error::InvalidParameter("T must be >= 1".into()));
    }
    if !h_init.is_finite() || h_init <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "H_init must be positive, got {h_init}"
        )));
    }
    let k = spec.k();
    let pi = stationary_distribution(&spec.transition)?;
    let mut rng = simulation_rng(seed);

    let mut y = Vec::with_capacity(t_len);
    let mut z = Vec::with_capacity(t_len);
    let mut h = Vec::with_capacity(t_len * k);

    let mut h_prev = vec![h_init; k];
    let mut y_prev = 0.0;
    for t in 0..t_len {
        for (params, slot) in spec.regimes.iter().zip(h_prev.iter_mut()) {
            *slot = variance_step_raw(params, y_prev, *slot).h;
        }
        h.extend_from_slice(&h_prev);
        // Draw order per period is fixed: regime first, then innovation.
        let state = if t == 0 {
            sample_categorical(&pi, &mut rng)
        } else {
            sample_categorical(spec.transition.row(z[t - 1]), &mut rng)
        };
        let eps: f64 = rng.sample(StandardNormal);
        let y_t = eps * h_prev[state].sqrt();
        z.push(state);
        y.push(y_t);
        y_prev = y_t;
    }
    Ok(SimulationOutput { y, z, k, h })
}

/// Projects a spec onto its constant-weight degenerate case by setting
/// `b := a` componentwise in every regime. The weight then mixes equal
/// components and each regime reduces to a plain GARCH(1,1), i.e. the
/// regime-switching GARCH baseline.
pub fn ms_garch_spec(spec: &ModelSpec) -> ModelSpec {
    let regimes = spec
        .regimes
        .iter()
        .map(|p| RegimeParams {
            b0: p.a0,
            b1: p.a1,
            b2: p.a2,
            ..*p
        })
        .collect();
    ModelSpec {
        regimes,
        transition: spec.transition.clone(),
    }
}
