//! Bayesian estimation via a three-block Gibbs sampler.
//!
//! Each iteration (i) redraws the hidden regime path by forward filtering /
//! backward sampling, (ii) redraws the diagonal transition probabilities
//! from their conjugate beta posteriors, and (iii) sweeps every model
//! parameter with a Griddy Gibbs step: the conditional posterior is
//! evaluated on a grid spanning the uniform prior interval, integrated to a
//! CDF by the trapezoid rule, and inverted at a uniform draw.
//!
//! Estimation is limited to two regimes in this release (the model, filter,
//! and stability layers handle general K). Label switching is resolved by
//! keeping regime 1 the high-volatility regime: draws with
//! `a0[1] < a0[2]` are relabeled, permuting the regimes, the transition
//! probabilities, and the sampled path together.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{default_h_init, gaussian_log_density, run_filter_with_init};
use crate::model::{variance_step_raw, ModelSpec, RegimeParams, TransitionMatrix};
use crate::rng::{gibbs_rng, sample_categorical};

/// Which model the sampler fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    /// Full model: seven parameters per regime.
    #[serde(rename = "MS-CGARCH")]
    MsCgarch,
    /// Constant-weight baseline: only `(a0, a1, a2)` per regime are
    /// sampled and the second component is tied to the first.
    #[serde(rename = "MS-GARCH")]
    MsGarch,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::MsCgarch => write!(f, "MS-CGARCH"),
            ModelKind::MsGarch => write!(f, "MS-GARCH"),
        }
    }
}

/// Scalar parameters of one regime, in sweep order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThetaParam {
    A0,
    A1,
    A2,
    B0,
    B1,
    B2,
    Gamma,
}

impl ThetaParam {
    /// Sweep order within a regime.
    pub const ALL: [ThetaParam; 7] = [
        ThetaParam::A0,
        ThetaParam::A1,
        ThetaParam::A2,
        ThetaParam::B0,
        ThetaParam::B1,
        ThetaParam::B2,
        ThetaParam::Gamma,
    ];

    /// Position within [`ThetaParam::ALL`].
    pub fn index(self) -> usize {
        match self {
            ThetaParam::A0 => 0,
            ThetaParam::A1 => 1,
            ThetaParam::A2 => 2,
            ThetaParam::B0 => 3,
            ThetaParam::B1 => 4,
            ThetaParam::B2 => 5,
            ThetaParam::Gamma => 6,
        }
    }

    pub fn get(self, p: &RegimeParams) -> f64 {
        match self {
            ThetaParam::A0 => p.a0,
            ThetaParam::A1 => p.a1,
            ThetaParam::A2 => p.a2,
            ThetaParam::B0 => p.b0,
            ThetaParam::B1 => p.b1,
            ThetaParam::B2 => p.b2,
            ThetaParam::Gamma => p.gamma,
        }
    }

    pub fn set(self, p: &mut RegimeParams, value: f64) {
        match self {
            ThetaParam::A0 => p.a0 = value,
            ThetaParam::A1 => p.a1 = value,
            ThetaParam::A2 => p.a2 = value,
            ThetaParam::B0 => p.b0 = value,
            ThetaParam::B1 => p.b1 = value,
            ThetaParam::B2 => p.b2 = value,
            ThetaParam::Gamma => p.gamma = value,
        }
    }

    /// Display name, 1-based regime suffix: `a0` of regime 0 is `"a01"`.
    pub fn name(self, regime: usize) -> String {
        let base = match self {
            ThetaParam::A0 => "a0",
            ThetaParam::A1 => "a1",
            ThetaParam::A2 => "a2",
            ThetaParam::B0 => "b0",
            ThetaParam::B1 => "b1",
            ThetaParam::B2 => "b2",
            ThetaParam::Gamma => "gamma",
        };
        format!("{base}{}", regime + 1)
    }
}

/// Closed interval of a uniform prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Priors: uniform intervals for the regime parameters and beta
/// hyperparameters `(stay, leave)` for each diagonal transition
/// probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    /// Per regime, in sweep order `[a0, a1, a2, b0, b1, b2, gamma]`.
    pub theta_bounds: Vec<[Interval; 7]>,
    /// Per diagonal: `eta_beta[i] = (c_ii1, c_ii2)` for `η_{ii} ~
    /// Beta(c_ii1, c_ii2)`.
    pub eta_beta: Vec<(f64, f64)>,
}

impl PriorSpec {
    /// Default two-regime priors: intercepts on `(0.001, 10]`, ARCH/GARCH
    /// coefficients on `[0, 0.999]`, slope on `(0.01, 10]`, flat
    /// `Beta(1,1)` on the diagonal transition probabilities.
    pub fn default_k2() -> Self {
        #[rustfmt::skip]
        let bounds = [
            Interval { lo: 0.001, hi: 10.0 },  // a0
            Interval { lo: 0.0, hi: 0.999 },   // a1
            Interval { lo: 0.0, hi: 0.999 },   // a2
            Interval { lo: 0.001, hi: 10.0 },  // b0
            Interval { lo: 0.0, hi: 0.999 },   // b1
            Interval { lo: 0.0, hi: 0.999 },   // b2
            Interval { lo: 0.01, hi: 10.0 },   // gamma
        ];
        Self {
            theta_bounds: vec![bounds; 2],
            eta_beta: vec![(1.0, 1.0); 2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta_bounds.is_empty() {
            return Err(Error::InvalidParameter("prior has no regimes".into()));
        }
        for (r, bounds) in self.theta_bounds.iter().enumerate() {
            for (i, iv) in bounds.iter().enumerate() {
                if !iv.lo.is_finite() || !iv.hi.is_finite() || iv.lo >= iv.hi {
                    return Err(Error::InvalidParameter(format!(
                        "regime {r} parameter {i}: bad interval [{}, {}]",
                        iv.lo, iv.hi
                    )));
                }
            }
            // Intercepts and the slope must stay strictly positive.
            for idx in [0usize, 3, 6] {
                if bounds[idx].lo <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "regime {r} parameter {idx}: lower bound must exclude 0"
                    )));
                }
            }
        }
        for (i, (c1, c2)) in self.eta_beta.iter().enumerate() {
            if !(*c1 > 0.0 && *c2 > 0.0 && c1.is_finite() && c2.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "beta hyperparameters for diagonal {i} must be positive"
                )));
            }
        }
        Ok(())
    }

    pub fn bounds(&self, regime: usize, param: ThetaParam) -> Interval {
        self.theta_bounds[regime][param.index()]
    }
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self::default_k2()
    }
}

/// Sampler configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub n_iter: usize,
    pub n_burnin: usize,
    /// Grid points per Griddy step; at least 16.
    pub grid_size: usize,
    pub seed: u64,
    /// RNG stream offset; run concurrent chains with distinct values.
    pub chain: u64,
    /// Enforce the `a0[1] > a0[2]` ordering by relabeling.
    pub identification: bool,
    /// Retain the sampled regime paths.
    pub keep_states: bool,
    pub kind: ModelKind,
}

impl GibbsConfig {
    /// Defaults: 20% burn-in, grid size 33, chain 0, identification on.
    pub fn new(n_iter: usize, seed: u64) -> Self {
        Self {
            n_iter,
            n_burnin: n_iter / 5,
            grid_size: 33,
            seed,
            chain: 0,
            identification: true,
            keep_states: false,
            kind: ModelKind::MsCgarch,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_iter == 0 || self.n_iter <= self.n_burnin {
            return Err(Error::InvalidParameter(format!(
                "need n_iter > n_burnin >= 0, got {} and {}",
                self.n_iter, self.n_burnin
            )));
        }
        if self.grid_size < 16 {
            return Err(Error::InvalidParameter(format!(
                "grid size must be at least 16, got {}",
                self.grid_size
            )));
        }
        Ok(())
    }
}

/// Retained MCMC output.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub kind: ModelKind,
    /// Column names for `theta_draws`, table order (see [`theta_names`]).
    pub theta_names: Vec<String>,
    /// One row per retained iteration.
    pub theta_draws: Vec<Vec<f64>>,
    /// Column names for `eta_draws` (`eta11`, `eta22`).
    pub eta_names: Vec<String>,
    pub eta_draws: Vec<Vec<f64>>,
    /// Sampled regime paths, retained on request.
    pub z_draws: Option<Vec<Vec<usize>>>,
    /// Per-parameter count of draws landing in the outermost grid cells;
    /// persistent hits mean the prior interval is pinching the posterior.
    pub grid_edge_hits: Vec<u64>,
    pub config: GibbsConfig,
}

/// Summary row for one parameter.
#[derive(Debug, Clone, Serialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

/// Posterior summary: one row per model parameter followed by the
/// transition probabilities.
#[derive(Debug, Clone, Serialize)]
pub struct PosteriorSummary {
    pub model: ModelKind,
    pub n_draws: usize,
    pub parameters: Vec<ParameterSummary>,
}

impl PosteriorDraws {
    pub fn n_retained(&self) -> usize {
        self.theta_draws.len()
    }

    /// All column names: model parameters then transition probabilities.
    pub fn names(&self) -> Vec<String> {
        self.theta_names
            .iter()
            .chain(self.eta_names.iter())
            .cloned()
            .collect()
    }

    /// Retained draws as rows of `theta ++ eta` columns.
    pub fn draw_matrix(&self) -> Vec<Vec<f64>> {
        self.theta_draws
            .iter()
            .zip(self.eta_draws.iter())
            .map(|(t, e)| t.iter().chain(e.iter()).copied().collect())
            .collect()
    }

    pub fn summary(&self) -> PosteriorSummary {
        let names = self.names();
        let matrix = self.draw_matrix();
        let parameters = names
            .iter()
            .enumerate()
            .map(|(col, name)| {
                let values: Vec<f64> = matrix.iter().map(|row| row[col]).collect();
                summarize(name, &values)
            })
            .collect();
        PosteriorSummary {
            model: self.kind,
            n_draws: self.n_retained(),
            parameters,
        }
    }

    /// Plug-in spec at the posterior means.
    pub fn posterior_mean_spec(&self) -> Result<ModelSpec> {
        let theta_means: Vec<f64> = (0..self.theta_names.len())
            .map(|col| column_mean(&self.theta_draws, col))
            .collect();
        let eta_means: Vec<f64> = (0..self.eta_names.len())
            .map(|col| column_mean(&self.eta_draws, col))
            .collect();
        let regimes = match self.kind {
            ModelKind::MsCgarch => (0..2)
                .map(|r| {
                    RegimeParams::new(
                        theta_means[r * 6],
                        theta_means[r * 6 + 1],
                        theta_means[r * 6 + 2],
                        theta_means[r * 6 + 3],
                        theta_means[r * 6 + 4],
                        theta_means[r * 6 + 5],
                        theta_means[12 + r],
                    )
                })
                .collect::<Result<Vec<_>>>()?,
            ModelKind::MsGarch => (0..2)
                .map(|r| {
                    // Weight is irrelevant with tied components; any
                    // positive slope works.
                    RegimeParams::new(
                        theta_means[r * 3],
                        theta_means[r * 3 + 1],
                        theta_means[r * 3 + 2],
                        theta_means[r * 3],
                        theta_means[r * 3 + 1],
                        theta_means[r * 3 + 2],
                        1.0,
                    )
                })
                .collect::<Result<Vec<_>>>()?,
        };
        let transition = TransitionMatrix::new(vec![
            vec![eta_means[0], 1.0 - eta_means[0]],
            vec![1.0 - eta_means[1], eta_means[1]],
        ])?;
        ModelSpec::new(regimes, transition)
    }
}

fn column_mean(rows: &[Vec<f64>], col: usize) -> f64 {
    rows.iter().map(|r| r[col]).sum::<f64>() / rows.len() as f64
}

fn summarize(name: &str, values: &[f64]) -> ParameterSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let quantile = |q: f64| -> f64 {
        let pos = q * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    };
    ParameterSummary {
        name: name.to_string(),
        mean,
        std: var.sqrt(),
        q05: quantile(0.05),
        q50: quantile(0.50),
        q95: quantile(0.95),
    }
}

/// Table-order column names for a model kind: the six component
/// coefficients per regime, then the slopes (full model only).
pub fn theta_names(kind: ModelKind, k: usize) -> Vec<String> {
    let mut names = Vec::new();
    match kind {
        ModelKind::MsCgarch => {
            for r in 0..k {
                for param in &ThetaParam::ALL[..6] {
                    names.push(param.name(r));
                }
            }
            for r in 0..k {
                names.push(ThetaParam::Gamma.name(r));
            }
        }
        ModelKind::MsGarch => {
            for r in 0..k {
                for param in &ThetaParam::ALL[..3] {
                    names.push(param.name(r));
                }
            }
        }
    }
    names
}

fn theta_row(kind: ModelKind, regimes: &[RegimeParams]) -> Vec<f64> {
    let mut row = Vec::new();
    match kind {
        ModelKind::MsCgarch => {
            for p in regimes {
                row.extend_from_slice(&[p.a0, p.a1, p.a2, p.b0, p.b1, p.b2]);
            }
            for p in regimes {
                row.push(p.gamma);
            }
        }
        ModelKind::MsGarch => {
            for p in regimes {
                row.extend_from_slice(&[p.a0, p.a1, p.a2]);
            }
        }
    }
    row
}

fn storage_index(kind: ModelKind, k: usize, regime: usize, param: ThetaParam) -> usize {
    match kind {
        ModelKind::MsCgarch => match param {
            ThetaParam::Gamma => 6 * k + regime,
            other => regime * 6 + other.index(),
        },
        ModelKind::MsGarch => regime * 3 + param.index(),
    }
}

fn swept_params(kind: ModelKind) -> &'static [ThetaParam] {
    match kind {
        ModelKind::MsCgarch => &ThetaParam::ALL,
        ModelKind::MsGarch => &ThetaParam::ALL[..3],
    }
}

/// Complete-data log likelihood `Σ_t log f(y_t | θ, z_t, Y_{t-1})` along a
/// fixed regime path. Uses exactly the filter's variance recursion and
/// initialization (`y_0 = 0`, `H_{0,j} = h_init`).
pub fn complete_data_loglik(
    regimes: &[RegimeParams],
    z: &[usize],
    y: &[f64],
    h_init: f64,
) -> Result<f64> {
    if z.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: z.len(),
            right: y.len(),
        });
    }
    if !h_init.is_finite() || h_init <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "H_init must be positive, got {h_init}"
        )));
    }
    for p in regimes {
        p.validate()?;
    }
    if let Some(&bad) = z.iter().find(|s| **s >= regimes.len()) {
        return Err(Error::InvalidParameter(format!(
            "regime label {bad} out of range"
        )));
    }
    Ok(complete_data_loglik_raw(regimes, z, y, h_init))
}

fn complete_data_loglik_raw(regimes: &[RegimeParams], z: &[usize], y: &[f64], h_init: f64) -> f64 {
    let k = regimes.len();
    let mut h: Vec<f64> = regimes
        .iter()
        .map(|p| variance_step_raw(p, 0.0, h_init).h)
        .collect();
    let mut ll = 0.0;
    for (t, &y_t) in y.iter().enumerate() {
        ll += gaussian_log_density(y_t, h[z[t]]);
        for j in 0..k {
            h[j] = variance_step_raw(&regimes[j], y_t, h[j]).h;
        }
    }
    ll
}

/// Draws a full regime path from its exact posterior given the current
/// parameters: forward filter, then a backward pass sampling
/// `z_t ∝ p(z_t | Y_t) * p(z_{t+1} | z_t)` by inverse CDF.
pub fn sample_states<R: Rng + ?Sized>(
    spec: &ModelSpec,
    y: &[f64],
    h_init: f64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let run = run_filter_with_init(spec, y, h_init)?;
    let t_len = y.len();
    let mut z = vec![0usize; t_len];
    z[t_len - 1] = sample_categorical(&run.states[t_len - 1].alpha_filt, rng);
    for t in (0..t_len - 1).rev() {
        let probs = backward_draw_probs(&run.states[t].alpha_filt, &spec.transition, z[t + 1])
            .ok_or_else(|| Error::Numerical(format!("zero backward mass at t={}", t + 1)))?;
        z[t] = sample_categorical(&probs, rng);
    }
    Ok(z)
}

fn backward_draw_probs(
    filtered: &[f64],
    transition: &TransitionMatrix,
    z_next: usize,
) -> Option<Vec<f64>> {
    let mut probs: Vec<f64> = filtered
        .iter()
        .enumerate()
        .map(|(i, &f)| f * transition.prob(i, z_next))
        .collect();
    let total: f64 = probs.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return None;
    }
    for p in &mut probs {
        *p /= total;
    }
    Some(probs)
}

/// Draws the diagonal transition probabilities from their conjugate beta
/// posteriors given a path: `η_ii ~ Beta(c_ii1 + n_ii, c_ii2 + n_ij)`
/// where `n_ij` counts observed `i -> j` transitions. Two regimes only.
pub fn sample_transition<R: Rng + ?Sized>(
    z: &[usize],
    prior: &PriorSpec,
    rng: &mut R,
) -> Result<TransitionMatrix> {
    if z.len() < 2 {
        return Err(Error::InvalidParameter(
            "path must have at least 2 states".into(),
        ));
    }
    if prior.eta_beta.len() != 2 || z.iter().any(|s| *s > 1) {
        return Err(Error::InvalidParameter(
            "transition sampling supports K=2 in this release".into(),
        ));
    }
    let mut counts = [[0.0_f64; 2]; 2];
    for pair in z.windows(2) {
        counts[pair[0]][pair[1]] += 1.0;
    }
    let eta11 = draw_beta(
        prior.eta_beta[0].0 + counts[0][0],
        prior.eta_beta[0].1 + counts[0][1],
        rng,
    )?;
    let eta22 = draw_beta(
        prior.eta_beta[1].0 + counts[1][1],
        prior.eta_beta[1].1 + counts[1][0],
        rng,
    )?;
    TransitionMatrix::new(vec![vec![eta11, 1.0 - eta11], vec![1.0 - eta22, eta22]])
}

fn draw_beta<R: Rng + ?Sized>(alpha: f64, beta: f64, rng: &mut R) -> Result<f64> {
    let dist = Beta::new(alpha, beta)
        .map_err(|e| Error::InvalidParameter(format!("beta({alpha}, {beta}): {e}")))?;
    // Keep the chain away from the degenerate endpoints, where the
    // transition matrix would lose irreducibility.
    Ok(dist.sample(rng).clamp(1e-9, 1.0 - 1e-9))
}

/// Outcome of one Griddy Gibbs update.
#[derive(Debug, Clone, Copy)]
pub struct GriddyDraw {
    pub value: f64,
    /// The draw landed in the first or last grid cell.
    pub edge_hit: bool,
}

/// Griddy Gibbs step for one scalar parameter: evaluates the conditional
/// log posterior on a uniform grid over the prior interval (all per-regime
/// variance paths rebuilt from scratch at every grid point), normalizes in
/// log space, integrates with the trapezoid rule, and returns the
/// linear-interpolation inverse of the CDF at a uniform draw.
#[allow(clippy::too_many_arguments)]
pub fn griddy_gibbs_update<R: Rng + ?Sized>(
    regime: usize,
    param: ThetaParam,
    regimes: &[RegimeParams],
    z: &[usize],
    y: &[f64],
    h_init: f64,
    prior: &PriorSpec,
    grid_size: usize,
    rng: &mut R,
) -> Result<GriddyDraw> {
    griddy_update_inner(
        regime, param, regimes, z, y, h_init, prior, grid_size, false, rng,
    )
}

#[allow(clippy::too_many_arguments)]
fn griddy_update_inner<R: Rng + ?Sized>(
    regime: usize,
    param: ThetaParam,
    regimes: &[RegimeParams],
    z: &[usize],
    y: &[f64],
    h_init: f64,
    prior: &PriorSpec,
    grid_size: usize,
    tie_components: bool,
    rng: &mut R,
) -> Result<GriddyDraw> {
    if grid_size < 2 {
        return Err(Error::InvalidParameter(
            "grid needs at least 2 points".into(),
        ));
    }
    let iv = prior.bounds(regime, param);
    let grid = grid_points(iv.lo, iv.hi, grid_size);

    let mut trial = regimes.to_vec();
    let mut log_k = vec![f64::NEG_INFINITY; grid_size];
    let mut max_log = f64::NEG_INFINITY;
    for (i, &x) in grid.iter().enumerate() {
        set_with_tie(&mut trial[regime], param, x, tie_components);
        let ll = complete_data_loglik_raw(&trial, z, y, h_init);
        log_k[i] = ll;
        if ll > max_log {
            max_log = ll;
        }
    }
    if !max_log.is_finite() {
        return Err(Error::Numerical(format!(
            "conditional posterior for {} vanished over the whole grid",
            param.name(regime)
        )));
    }
    let density: Vec<f64> = log_k.iter().map(|l| (l - max_log).exp()).collect();
    let phi = trapezoid_cdf(&grid, &density);
    let total = *phi.last().expect("grid is non-empty");
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::Numerical(format!(
            "grid CDF for {} is degenerate",
            param.name(regime)
        )));
    }
    let u: f64 = rng.gen::<f64>() * total;
    let value = invert_linear_cdf(&grid, &phi, u);
    let edge_hit = value <= grid[1] || value >= grid[grid_size - 2];
    Ok(GriddyDraw { value, edge_hit })
}

fn set_with_tie(p: &mut RegimeParams, param: ThetaParam, value: f64, tie: bool) {
    param.set(p, value);
    if tie {
        match param {
            ThetaParam::A0 => p.b0 = value,
            ThetaParam::A1 => p.b1 = value,
            ThetaParam::A2 => p.b2 = value,
            _ => {}
        }
    }
}

fn grid_points(lo: f64, hi: f64, g: usize) -> Vec<f64> {
    let step = (hi - lo) / (g - 1) as f64;
    (0..g).map(|i| lo + step * i as f64).collect()
}

/// Cumulative trapezoid integral of `density` along `grid`; starts at 0.
fn trapezoid_cdf(grid: &[f64], density: &[f64]) -> Vec<f64> {
    let mut phi = Vec::with_capacity(grid.len());
    phi.push(0.0);
    for i in 1..grid.len() {
        let cell = 0.5 * (density[i] + density[i - 1]) * (grid[i] - grid[i - 1]);
        phi.push(phi[i - 1] + cell);
    }
    phi
}

/// Inverts a piecewise-linear CDF: finds the cell containing `u` and
/// interpolates. At grid nodes the inverse returns the node itself.
fn invert_linear_cdf(grid: &[f64], phi: &[f64], u: f64) -> f64 {
    if u <= 0.0 {
        return grid[0];
    }
    for i in 0..grid.len() - 1 {
        if u <= phi[i + 1] && phi[i + 1] > phi[i] {
            let frac = (u - phi[i]) / (phi[i + 1] - phi[i]);
            return grid[i] + frac * (grid[i + 1] - grid[i]);
        }
    }
    *grid.last().expect("grid is non-empty")
}

/// Runs one Gibbs chain and returns the retained draws.
///
/// Sweep order is fixed: regime 1 then regime 2, parameters
/// `a0, a1, a2, b0, b1, b2, gamma` within each (the baseline model sweeps
/// only `a0, a1, a2` and mirrors them into the second component). The
/// variance seed `H_{0,j}` is the sample variance of `y`. Initial
/// parameter values are drawn uniformly from the prior, so chains with
/// different `chain` ids start dispersed.
pub fn run_gibbs(y: &[f64], prior: &PriorSpec, cfg: &GibbsConfig) -> Result<PosteriorDraws> {
    cfg.validate()?;
    prior.validate()?;
    if prior.theta_bounds.len() != 2 {
        return Err(Error::InvalidParameter(
            "estimation supports K=2 in this release".into(),
        ));
    }
    if y.len() < 30 {
        return Err(Error::InvalidParameter(format!(
            "need at least 30 observations to fit, got {}",
            y.len()
        )));
    }
    if let Some(idx) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidSeries {
            index: idx,
            reason: "non-finite value".into(),
        });
    }
    let k = 2;
    let h_init = default_h_init(y);
    let mut rng = gibbs_rng(cfg.seed, cfg.chain);

    let mut regimes: Vec<RegimeParams> = (0..k)
        .map(|r| {
            let draw = |iv: Interval, rng: &mut rand_chacha::ChaCha12Rng| {
                iv.lo + rng.gen::<f64>() * iv.width()
            };
            let b = &prior.theta_bounds[r];
            let mut p = RegimeParams {
                a0: draw(b[0], &mut rng),
                a1: draw(b[1], &mut rng),
                a2: draw(b[2], &mut rng),
                b0: draw(b[3], &mut rng),
                b1: draw(b[4], &mut rng),
                b2: draw(b[5], &mut rng),
                gamma: draw(b[6], &mut rng),
            };
            if cfg.kind == ModelKind::MsGarch {
                p.b0 = p.a0;
                p.b1 = p.a1;
                p.b2 = p.a2;
            }
            p
        })
        .collect();
    if cfg.identification && regimes[0].a0 < regimes[1].a0 {
        regimes.swap(0, 1);
    }
    let eta11 = draw_beta(prior.eta_beta[0].0, prior.eta_beta[0].1, &mut rng)?;
    let eta22 = draw_beta(prior.eta_beta[1].0, prior.eta_beta[1].1, &mut rng)?;
    let mut transition =
        TransitionMatrix::new(vec![vec![eta11, 1.0 - eta11], vec![1.0 - eta22, eta22]])?;

    let names = theta_names(cfg.kind, k);
    let tie = cfg.kind == ModelKind::MsGarch;
    let retained = cfg.n_iter - cfg.n_burnin;
    let mut theta_draws = Vec::with_capacity(retained);
    let mut eta_draws = Vec::with_capacity(retained);
    let mut z_draws = cfg.keep_states.then(|| Vec::with_capacity(retained));
    let mut grid_edge_hits = vec![0u64; names.len()];

    for iter in 1..=cfg.n_iter {
        let spec = ModelSpec::new(regimes.clone(), transition.clone())?;
        let mut z = sample_states(&spec, y, h_init, &mut rng)
            .map_err(|e| Error::Numerical(format!("iteration {iter}: {e}")))?;
        transition = sample_transition(&z, prior, &mut rng)?;
        for regime in 0..k {
            for &param in swept_params(cfg.kind) {
                let draw = griddy_update_inner(
                    regime,
                    param,
                    &regimes,
                    &z,
                    y,
                    h_init,
                    prior,
                    cfg.grid_size,
                    tie,
                    &mut rng,
                )
                .map_err(|e| Error::Numerical(format!("iteration {iter}: {e}")))?;
                set_with_tie(&mut regimes[regime], param, draw.value, tie);
                if draw.edge_hit {
                    grid_edge_hits[storage_index(cfg.kind, k, regime, param)] += 1;
                }
            }
        }
        if cfg.identification && regimes[0].a0 < regimes[1].a0 {
            regimes.swap(0, 1);
            transition = TransitionMatrix::new(vec![
                vec![transition.prob(1, 1), transition.prob(1, 0)],
                vec![transition.prob(0, 1), transition.prob(0, 0)],
            ])?;
            for s in &mut z {
                *s = 1 - *s;
            }
        }
        if iter > cfg.n_burnin {
            theta_draws.push(theta_row(cfg.kind, &regimes));
            eta_draws.push(vec![transition.prob(0, 0), transition.prob(1, 1)]);
            if let Some(paths) = z_draws.as_mut() {
                paths.push(z.clone());
            }
        }
        if iter % 100 == 0 {
            log::debug!("gibbs chain {} iteration {iter}/{}", cfg.chain, cfg.n_iter);
        }
    }

    Ok(PosteriorDraws {
        kind: cfg.kind,
        theta_names: names,
        theta_draws,
        eta_names: vec!["eta11".to_string(), "eta22".to_string()],
        eta_draws,
        z_draws,
        grid_edge_hits,
        config: cfg.clone(),
    })
}

/// Gelman-Rubin potential scale reduction per column over two or more
/// equally sized chains.
pub fn gelman_rubin(chains: &[Vec<Vec<f64>>]) -> Result<Vec<f64>> {
    if chains.len() < 2 {
        return Err(Error::InvalidParameter("need at least 2 chains".into()));
    }
    let n = chains[0].len();
    if n < 2 || chains.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidParameter(
            "chains must have equal length >= 2".into(),
        ));
    }
    let width = chains[0][0].len();
    let m = chains.len() as f64;
    let nf = n as f64;
    let mut out = Vec::with_capacity(width);
    for col in 0..width {
        let means: Vec<f64> = chains
            .iter()
            .map(|c| c.iter().map(|row| row[col]).sum::<f64>() / nf)
            .collect();
        let grand = means.iter().sum::<f64>() / m;
        let b = nf / (m - 1.0)
            * means
                .iter()
                .map(|mu| (mu - grand) * (mu - grand))
                .sum::<f64>();
        let w = chains
            .iter()
            .zip(means.iter())
            .map(|(c, mu)| {
                c.iter()
                    .map(|row| (row[col] - mu) * (row[col] - mu))
                    .sum::<f64>()
                    / (nf - 1.0)
            })
            .sum::<f64>()
            / m;
        if w <= 0.0 {
            // Degenerate column (no within-chain variation).
            out.push(1.0);
            continue;
        }
        let var_plus = (nf - 1.0) / nf * w + b / nf;
        out.push((var_plus / w).sqrt());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{regime_variance_step, simulate};
    use crate::test_fixtures::dgp_spec;

    #[test]
    fn param_accessors_round_trip() {
        let mut p = RegimeParams::new(1.0, 0.2, 0.3, 0.4, 0.05, 0.1, 2.0).unwrap();
        for (i, param) in ThetaParam::ALL.iter().enumerate() {
            assert_eq!(param.index(), i);
            param.set(&mut p, 0.111 * (i + 1) as f64);
            assert_eq!(param.get(&p), 0.111 * (i + 1) as f64);
        }
        assert_eq!(ThetaParam::A0.name(0), "a01");
        assert_eq!(ThetaParam::Gamma.name(1), "gamma2");
    }

    #[test]
    fn prior_validation() {
        let prior = PriorSpec::default_k2();
        assert!(prior.validate().is_ok());
        let mut bad = prior.clone();
        bad.theta_bounds[0][0].lo = 0.0;
        assert!(bad.validate().is_err());
        let mut bad = prior.clone();
        bad.theta_bounds[1][2] = Interval { lo: 0.5, hi: 0.5 };
        assert!(bad.validate().is_err());
        let mut bad = prior;
        bad.eta_beta[0] = (0.0, 1.0);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = GibbsConfig::new(100, 1);
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.n_burnin, 20);
        cfg.n_burnin = 100;
        assert!(cfg.validate().is_err());
        let mut cfg = GibbsConfig::new(100, 1);
        cfg.grid_size = 8;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn single_regime_path_is_deterministic() {
        let p = RegimeParams::new(1.0, 0.1, 0.2, 0.5, 0.1, 0.1, 1.0).unwrap();
        let spec =
            ModelSpec::new(vec![p], TransitionMatrix::new(vec![vec![1.0]]).unwrap()).unwrap();
        let y = [0.1, -0.5, 0.3, 1.0, 0.2];
        let mut rng = gibbs_rng(1, 0);
        let z = sample_states(&spec, &y, 1.0, &mut rng).unwrap();
        assert_eq!(z, vec![0; 5]);
    }

    #[test]
    fn backward_probabilities_hand_example() {
        let trans = TransitionMatrix::new(vec![vec![0.85, 0.15], vec![0.05, 0.95]]).unwrap();
        // filtered (0.5, 0.5), next state 0: proportional to (0.425, 0.025).
        let probs = backward_draw_probs(&[0.5, 0.5], &trans, 0).unwrap();
        assert!((probs[0] - 0.425 / 0.45).abs() < 1e-14);
        assert!((probs[1] - 0.025 / 0.45).abs() < 1e-14);
    }

    #[test]
    fn backward_conditional_frequencies_match_bayes_rule() {
        // With identical regimes the densities cancel and the sampled path
        // is the chain itself; check p(z_t = j | z_{t+1} = k) empirically.
        let p = RegimeParams::new(1.0, 0.1, 0.2, 0.5, 0.05, 0.1, 1.0).unwrap();
        let spec = ModelSpec::new(
            vec![p, p],
            TransitionMatrix::new(vec![vec![0.85, 0.15], vec![0.05, 0.95]]).unwrap(),
        )
        .unwrap();
        let sim = simulate(&spec, 4000, 3, 1.0).unwrap();
        let mut rng = gibbs_rng(5, 0);
        let z = sample_states(&spec, &sim.y, 1.0, &mut rng).unwrap();
        let mut joint = [[0.0_f64; 2]; 2];
        for pair in z.windows(2) {
            joint[pair[0]][pair[1]] += 1.0;
        }
        // pi = (0.25, 0.75); p(prev=0 | next=0) = pi_0 p00 / pi_0' ... via
        // Bayes: (0.25 * 0.85) / (0.25 * 0.85 + 0.75 * 0.05) = 0.85.
        let col0 = joint[0][0] + joint[1][0];
        assert!((joint[0][0] / col0 - 0.85).abs() < 0.04);
        let col1 = joint[0][1] + joint[1][1];
        assert!((joint[0][1] / col1 - 0.05).abs() < 0.02);
    }

    #[test]
    fn symmetric_regimes_visit_both_states_equally() {
        let p = RegimeParams::new(0.5, 0.1, 0.2, 0.3, 0.05, 0.1, 1.0).unwrap();
        let spec = ModelSpec::new(
            vec![p, p],
            TransitionMatrix::new(vec![vec![0.7, 0.3], vec![0.3, 0.7]]).unwrap(),
        )
        .unwrap();
        let sim = simulate(&spec, 2000, 8, 1.0).unwrap();
        let mut rng = gibbs_rng(9, 0);
        let z = sample_states(&spec, &sim.y, 1.0, &mut rng).unwrap();
        let share = z.iter().filter(|s| **s == 0).count() as f64 / z.len() as f64;
        assert!((share - 0.5).abs() < 0.05, "regime-1 share {share}");
    }

    #[test]
    fn transition_posterior_mean_matches_conjugate_update() {
        // Path with n11 = 10, n12 = 2 and a flat prior: Beta(11, 3),
        // mean 11/14.
        let mut z = Vec::new();
        for _ in 0..2 {
            z.extend_from_slice(&[0, 0, 0, 0, 0, 0, 1, 1]);
        }
        // Transitions from 0: 10 stay, 2 leave; from 1: 3 stay, 1 leave.
        let counts = {
            let mut c = [[0; 2]; 2];
            for w in z.windows(2) {
                c[w[0]][w[1]] += 1;
            }
            c
        };
        assert_eq!(counts[0], [10, 2]);
        let prior = PriorSpec::default_k2();
        let mut rng = gibbs_rng(11, 0);
        let n = 20_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += sample_transition(&z, &prior, &mut rng).unwrap().prob(0, 0);
        }
        let mean = sum / n as f64;
        assert!((mean - 11.0 / 14.0).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn transition_posterior_reduces_to_prior_without_visits() {
        // State 0 never observed: its diagonal posterior is the flat prior.
        let z = vec![1usize; 50];
        let prior = PriorSpec::default_k2();
        let mut rng = gibbs_rng(13, 0);
        let n = 20_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += sample_transition(&z, &prior, &mut rng).unwrap().prob(0, 0);
        }
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn transition_posterior_concentrates_on_truth() {
        let spec = dgp_spec();
        let sim = simulate(&spec, 8000, 21, 1.0).unwrap();
        let prior = PriorSpec::default_k2();
        let mut rng = gibbs_rng(17, 0);
        let n = 2000;
        let mut sum11 = 0.0;
        let mut sum22 = 0.0;
        for _ in 0..n {
            let t = sample_transition(&sim.z, &prior, &mut rng).unwrap();
            sum11 += t.prob(0, 0);
            sum22 += t.prob(1, 1);
        }
        assert!((sum11 / n as f64 - 0.85).abs() < 0.02);
        assert!((sum22 / n as f64 - 0.95).abs() < 0.01);
    }

    #[test]
    fn grid_cdf_properties() {
        let grid = grid_points(0.0, 1.0, 33);
        assert_eq!(grid.len(), 33);
        assert_eq!(grid[0], 0.0);
        assert!((grid[32] - 1.0).abs() < 1e-15);
        let density: Vec<f64> = grid.iter().map(|x| 1.0 + x * x).collect();
        let phi = trapezoid_cdf(&grid, &density);
        assert_eq!(phi[0], 0.0);
        for i in 1..phi.len() {
            assert!(phi[i] > phi[i - 1]);
        }
        // Inverse at the nodes returns the nodes.
        for i in 0..grid.len() {
            let x = invert_linear_cdf(&grid, &phi, phi[i]);
            assert!((x - grid[i]).abs() < 1e-12, "node {i}");
        }
    }

    #[test]
    fn flat_cdf_inverts_linearly() {
        let grid = grid_points(0.0, 1.0, 33);
        let density = vec![1.0; 33];
        let phi = trapezoid_cdf(&grid, &density);
        let total = *phi.last().unwrap();
        let x = invert_linear_cdf(&grid, &phi, 0.3 * total);
        assert!((x - 0.3).abs() < 1e-12);
    }

    #[test]
    fn griddy_draws_stay_in_prior_support() {
        let spec = dgp_spec();
        let sim = simulate(&spec, 80, 31, 1.0).unwrap();
        let prior = PriorSpec::default_k2();
        let mut rng = gibbs_rng(19, 0);
        let z = sample_states(&spec, &sim.y, 1.0, &mut rng).unwrap();
        for regime in 0..2 {
            for &param in &ThetaParam::ALL {
                for _ in 0..20 {
                    let draw = griddy_gibbs_update(
                        regime,
                        param,
                        &spec.regimes,
                        &z,
                        &sim.y,
                        1.0,
                        &prior,
                        17,
                        &mut rng,
                    )
                    .unwrap();
                    let iv = prior.bounds(regime, param);
                    assert!(draw.value >= iv.lo && draw.value <= iv.hi);
                }
            }
        }
    }

    #[test]
    fn griddy_matches_direct_grid_sampling_oracle() {
        // Empirical cell frequencies of Griddy draws must match the
        // trapezoid cell masses of the gridded conditional posterior.
        let spec = dgp_spec();
        let sim = simulate(&spec, 300, 37, 1.0).unwrap();
        let prior = PriorSpec::default_k2();
        let g = 33;
        let param = ThetaParam::A1;
        let iv = prior.bounds(0, param);
        let grid = grid_points(iv.lo, iv.hi, g);

        // Direct oracle: normalized trapezoid masses per cell.
        let mut trial = spec.regimes.clone();
        let log_k: Vec<f64> = grid
            .iter()
            .map(|&x| {
                param.set(&mut trial[0], x);
                complete_data_loglik(&trial, &sim.z, &sim.y, 1.0).unwrap()
            })
            .collect();
        let max_log = log_k.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let density: Vec<f64> = log_k.iter().map(|l| (l - max_log).exp()).collect();
        let phi = trapezoid_cdf(&grid, &density);
        let total = *phi.last().unwrap();
        let cell_mass: Vec<f64> = (0..g - 1).map(|i| (phi[i + 1] - phi[i]) / total).collect();

        let mut rng = gibbs_rng(23, 0);
        let n = 4000;
        let mut counts = vec![0usize; g - 1];
        for _ in 0..n {
            let draw = griddy_gibbs_update(
                0,
                param,
                &spec.regimes,
                &sim.z,
                &sim.y,
                1.0,
                &prior,
                g,
                &mut rng,
            )
            .unwrap();
            let cell = ((draw.value - iv.lo) / (grid[1] - grid[0])).floor() as usize;
            counts[cell.min(g - 2)] += 1;
        }
        for (i, &mass) in cell_mass.iter().enumerate() {
            let freq = counts[i] as f64 / n as f64;
            assert!(
                (freq - mass).abs() < 0.03,
                "cell {i}: frequency {freq} vs mass {mass}"
            );
        }
    }

    #[test]
    fn conditional_likelihood_matches_filter_machinery_on_path() {
        // Independent route: advance each regime with the public variance
        // step and sum explicit normal densities along the path.
        let spec = dgp_spec();
        let sim = simulate(&spec, 200, 41, 1.0).unwrap();
        let direct = complete_data_loglik(&spec.regimes, &sim.z, &sim.y, 1.0).unwrap();

        let mut h: Vec<f64> = spec
            .regimes
            .iter()
            .map(|p| regime_variance_step(p, 0.0, 1.0).unwrap().h)
            .collect();
        let mut oracle = 0.0;
        for t in 0..sim.y.len() {
            let var = h[sim.z[t]];
            let dens = (-sim.y[t] * sim.y[t] / (2.0 * var)).exp()
                / (2.0 * std::f64::consts::PI * var).sqrt();
            oracle += dens.ln();
            for (j, p) in spec.regimes.iter().enumerate() {
                h[j] = regime_variance_step(p, sim.y[t], h[j]).unwrap().h;
            }
        }
        assert!(
            ((direct - oracle) / oracle).abs() < 1e-10,
            "{direct} vs {oracle}"
        );
    }

    #[test]
    fn griddy_recovers_intercept_with_truth_fixed() {
        // Condition on the true path and true remaining parameters; the
        // draws for a0 of regime 1 must concentrate near its true value.
        let spec = dgp_spec();
        let sim = simulate(&spec, 300, 43, 1.0).unwrap();
        let prior = PriorSpec::default_k2();
        let mut rng = gibbs_rng(29, 0);
        let n = 300;
        let mut sum = 0.0;
        for _ in 0..n {
            let draw = griddy_gibbs_update(
                0,
                ThetaParam::A0,
                &spec.regimes,
                &sim.z,
                &sim.y,
                1.0,
                &prior,
                33,
                &mut rng,
            )
            .unwrap();
            sum += draw.value;
        }
        let mean = sum / n as f64;
        assert!((mean - 2.2).abs() < 0.6, "conditional mean {mean}");
    }

    #[test]
    fn gibbs_is_reproducible() {
        let spec = dgp_spec();
        let sim = simulate(&spec, 60, 47, 1.0).unwrap();
        let prior = PriorSpec::default_k2();
        let mut cfg = GibbsConfig::new(20, 5);
        cfg.grid_size = 16;
        let a = run_gibbs(&sim.y, &prior, &cfg).unwrap();
        let b = run_gibbs(&sim.y, &prior, &cfg).unwrap();
        assert_eq!(a.theta_draws, b.theta_draws);
        assert_eq!(a.eta_draws, b.eta_draws);
        let mut cfg2 = cfg.clone();
        cfg2.chain = 1;
        let c = run_gibbs(&sim.y, &prior, &cfg2).unwrap();
        assert_ne!(a.theta_draws, c.theta_draws);
    }

    #[test]
    fn gibbs_respects_identification_ordering() {
        let spec = dgp_spec();
        let sim = simulate(&spec, 80, 51, 1.0).unwrap();
        let prior = PriorSpec::default_k2();
        let mut cfg = GibbsConfig::new(30, 9);
        cfg.grid_size = 16;
        let draws = run_gibbs(&sim.y, &prior, &cfg).unwrap();
        let names = draws.theta_names.clone();
        let a01 = names.iter().position(|n| n == "a01").unwrap();
        let a02 = names.iter().position(|n| n == "a02").unwrap();
        for row in &draws.theta_draws {
            assert!(row[a01] >= row[a02]);
        }
    }

    #[test]
    fn gibbs_rejects_bad_inputs() {
        let prior = PriorSpec::default_k2();
        let cfg = GibbsConfig::new(20, 1);
        assert!(run_gibbs(&[0.1; 10], &prior, &cfg).is_err());
        let y = vec![0.1; 40];
        let mut bad = y.clone();
        bad[3] = f64::NAN;
        assert!(run_gibbs(&bad, &prior, &cfg).is_err());
    }

    #[test]
    fn ms_garch_draws_keep_components_tied() {
        let spec = dgp_spec();
        let sim = simulate(&spec, 60, 53, 1.0).unwrap();
        let prior = PriorSpec::default_k2();
        let mut cfg = GibbsConfig::new(15, 3);
        cfg.grid_size = 16;
        cfg.kind = ModelKind::MsGarch;
        let draws = run_gibbs(&sim.y, &prior, &cfg).unwrap();
        assert_eq!(
            draws.theta_names,
            vec!["a01", "a11", "a21", "a02", "a12", "a22"]
        );
        let mean_spec = draws.posterior_mean_spec().unwrap();
        for p in &mean_spec.regimes {
            assert_eq!(p.a0, p.b0);
            assert_eq!(p.a1, p.b1);
            assert_eq!(p.a2, p.b2);
        }
    }

    #[test]
    fn summary_shape_and_mean_spec() {
        let spec = dgp_spec();
        let sim = simulate(&spec, 60, 57, 1.0).unwrap();
        let prior = PriorSpec::default_k2();
        let mut cfg = GibbsConfig::new(25, 7);
        cfg.grid_size = 16;
        let draws = run_gibbs(&sim.y, &prior, &cfg).unwrap();
        assert_eq!(draws.n_retained(), 20);
        let summary = draws.summary();
        assert_eq!(summary.parameters.len(), 16);
        assert_eq!(summary.parameters[0].name, "a01");
        assert_eq!(summary.parameters[15].name, "eta22");
        for p in &summary.parameters {
            assert!(p.mean.is_finite() && p.std.is_finite());
            assert!(p.q05 <= p.q50 && p.q50 <= p.q95);
        }
        let mean_spec = draws.posterior_mean_spec().unwrap();
        assert_eq!(mean_spec.k(), 2);
        assert!(mean_spec.validate().is_ok());
    }

    #[test]
    fn gelman_rubin_near_one_for_identical_chains() {
        let chain: Vec<Vec<f64>> = (0..50).map(|i| vec![(i % 7) as f64, 1.0]).collect();
        let rhat = gelman_rubin(&[chain.clone(), chain]).unwrap();
        assert!((rhat[0] - 1.0).abs() < 0.02);
        assert_eq!(rhat[1], 1.0);
        assert!(gelman_rubin(&[vec![vec![1.0]]]).is_err());
    }
}
