//! Second-moment stability analysis.
//!
//! Builds the truncation vector `Ω` and the `K²×K²` block matrix `C` whose
//! spectral radius decides whether the process is asymptotically stable in
//! variance. When `ρ(C) < 1` the limiting second moment is bounded by
//! `Π'(I-C)⁻¹Ω̇`, where `Ω̇` stacks `Ω` K times and `Π` selects the
//! diagonal blocks with stationary weights.
//!
//! Block `(row k, col j)` of `C` is `p(Z_{t-1}=j | Z_t=k) * (u e_j' + v)`
//! with `u_m = b1_m + (1+δ)|a1_m - b1_m|` and `v = diag(a2_1..a2_K)`; the
//! backward probabilities come from Bayes' rule on the stationary chain,
//! `p(Z_{t-1}=j | Z_t=k) = (π_j / π_k) P_{jk}`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ModelSpec, TransitionMatrix};

/// Stationary distribution `π` of a validated transition matrix:
/// `π'P = π'`, `Σπ = 1`, all entries positive.
pub fn stationary_distribution(p: &TransitionMatrix) -> Result<Vec<f64>> {
    let k = p.k();
    if k == 1 {
        return Ok(vec![1.0]);
    }
    // Solve (P' - I)π = 0 with the last equation replaced by Σπ = 1.
    let mut a = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            a[(i, j)] = p.prob(j, i) - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..k {
        a[(k - 1, j)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(k);
    rhs[k - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidTransition("no unique stationary distribution".into()))?;
    if pi.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::InvalidTransition(
            "stationary distribution is not strictly positive".into(),
        ));
    }
    let total: f64 = pi.iter().sum();
    Ok(pi.iter().map(|v| v / total).collect())
}

/// Smallest shock size `M` past which the component weight stays within
/// `delta` of 1: inverting the weight formula gives
/// `M = ln((2-δ)/δ) / γ`.
pub fn truncation_threshold(gamma: f64, delta: f64) -> Result<f64> {
    if !gamma.is_finite() || gamma <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    if !delta.is_finite() || delta <= 0.0 || delta >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "delta must lie in (0,1), got {delta}"
        )));
    }
    Ok(((2.0 - delta) / delta).ln() / gamma)
}

/// The assembled stability system, before the spectral radius and bound
/// are evaluated.
#[derive(Debug, Clone)]
pub struct StabilitySystem {
    /// Stationary distribution of the chain.
    pub pi: Vec<f64>,
    /// Truncation tolerance used for `M` and `u`.
    pub delta: f64,
    /// Per-regime truncation thresholds `M_j` (each from its own `γ_j`).
    pub m: Vec<f64>,
    /// `Ω_j = a0_j + |a1_j - b1_j| M_j²`.
    pub omega: Vec<f64>,
    /// The `K²×K²` nonnegative block matrix.
    pub c: DMatrix<f64>,
}

impl StabilitySystem {
    /// `Ω̇`: `Ω` stacked K times.
    pub fn omega_stacked(&self) -> DVector<f64> {
        let k = self.omega.len();
        DVector::from_fn(k * k, |i, _| self.omega[i % k])
    }

    /// `Π`: the K²-vector `[π_1 e_1', .., π_K e_K']`, i.e. `π_k` at
    /// position `kK + k` and zero elsewhere.
    pub fn pi_selector(&self) -> DVector<f64> {
        let k = self.pi.len();
        let mut v = DVector::zeros(k * k);
        for (i, &p) in self.pi.iter().enumerate() {
            v[i * k + i] = p;
        }
        v
    }
}

/// Builds `Ω`, `u`, `v`, and the block matrix `C` for a spec at tolerance
/// `delta`.
pub fn build_stability_system(spec: &ModelSpec, delta: f64) -> Result<StabilitySystem> {
    spec.validate()?;
    if !delta.is_finite() || delta <= 0.0 || delta >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "delta must lie in (0,1), got {delta}"
        )));
    }
    let k = spec.k();
    let pi = stationary_distribution(&spec.transition)?;

    let mut m = Vec::with_capacity(k);
    let mut omega = Vec::with_capacity(k);
    let mut u = Vec::with_capacity(k);
    for p in &spec.regimes {
        let m_j = truncation_threshold(p.gamma, delta)?;
        let spread = (p.a1 - p.b1).abs();
        m.push(m_j);
        omega.push(p.a0 + spread * m_j * m_j);
        u.push(p.b1 + (1.0 + delta) * spread);
    }

    // Backward probabilities p(Z_{t-1}=j | Z_t=k) = (π_j/π_k) P_{jk}.
    let backward = |j: usize, kk: usize| pi[j] / pi[kk] * spec.transition.prob(j, kk);

    let mut c = DMatrix::<f64>::zeros(k * k, k * k);
    for row_block in 0..k {
        for col_block in 0..k {
            let p_back = backward(col_block, row_block);
            // Block = p_back * (u e_j' + v): column j carries u, plus the
            // diagonal of a2 coefficients.
            for r in 0..k {
                c[(row_block * k + r, col_block * k + col_block)] += p_back * u[r];
                c[(row_block * k + r, col_block * k + r)] += p_back * spec.regimes[r].a2;
            }
        }
    }
    Ok(StabilitySystem {
        pi,
        delta,
        m,
        omega,
        c,
    })
}

/// Spectral radius of a nonnegative square matrix by power iteration.
///
/// Iterates on the shifted matrix `A + sI` (which moves the dominant
/// eigenvalue strictly ahead of every other modulus for nonnegative `A`)
/// and subtracts the shift back out. Convergence is declared when the
/// residual `‖Av - λv‖∞` falls below `1e-12 * max(1, λ)`; the slack
/// between that residual and the eigenvalue error keeps the result well
/// inside a 1e-10 tolerance on the radius itself.
pub fn spectral_radius(a: &DMatrix<f64>) -> Result<f64> {
    spectral_radius_with(a, 1e-12, 1_000_000)
}

pub fn spectral_radius_with(a: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<f64> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::InvalidParameter(format!(
            "matrix must be square and non-empty, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "matrix entries must be finite".into(),
        ));
    }
    if a.iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidParameter(
            "matrix entries must be nonnegative".into(),
        ));
    }

    let inf_norm = (0..n)
        .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    let shift = 1.0_f64.max(inf_norm);
    let shifted = a + DMatrix::<f64>::identity(n, n) * shift;

    let mut v = DVector::<f64>::from_element(n, 1.0 / (n as f64).sqrt());
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let w = &shifted * &v;
        let norm = w.norm();
        if norm == 0.0 {
            // Only possible if the shifted matrix annihilates v; with a
            // positive diagonal shift this cannot happen.
            return Err(Error::Numerical("power iteration collapsed to zero".into()));
        }
        v = w / norm;
        let image = &shifted * &v;
        let lambda = v.dot(&image);
        residual = (image - &v * lambda).amax();
        if residual <= tol * lambda.abs().max(1.0) {
            return Ok((lambda - shift).max(0.0));
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Evaluates the limiting second-moment bound `Π'(I-C)⁻¹Ω̇` when
/// `ρ(C) < 1`; `None` when the system is unstable and no bound exists.
///
/// The solve uses partially pivoted LU, never an explicit inverse. Returns
/// the bound together with the 1-norm condition estimate of `I - C` when
/// that exceeds 1e8.
pub fn second_moment_bound(
    system: &StabilitySystem,
    rho: f64,
) -> Result<Option<(f64, Option<f64>)>> {
    if rho >= 1.0 {
        return Ok(None);
    }
    let n = system.c.nrows();
    let a = DMatrix::<f64>::identity(n, n) - &system.c;
    let lu = a.clone().lu();
    let x = lu.solve(&system.omega_stacked()).ok_or_else(|| {
        Error::Numerical("(I - C) is singular although the spectral radius is below 1".into())
    })?;
    let bound = system.pi_selector().dot(&x);
    if !bound.is_finite() || bound <= 0.0 {
        return Err(Error::Numerical(format!(
            "second-moment bound evaluated to {bound}"
        )));
    }
    let condition = condition_estimate(&a);
    let warning = match condition {
        Some(c) if c > 1e8 => {
            log::warn!("(I - C) condition number {c:.3e}; bound may be inaccurate");
            Some(c)
        }
        _ => None,
    };
    Ok(Some((bound, warning)))
}

fn condition_estimate(a: &DMatrix<f64>) -> Option<f64> {
    let inv = a.clone().try_inverse()?;
    let norm1 = |m: &DMatrix<f64>| {
        (0..m.ncols())
            .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0_f64, f64::max)
    };
    Some(norm1(a) * norm1(&inv))
}

/// Full stability analysis of a spec: `π`, per-regime `M`, `Ω`, `C`, the
/// spectral radius, and the second-moment bound when one exists.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    /// Spectral radius of `C`.
    pub rho: f64,
    /// `rho < 1`.
    pub stable: bool,
    /// `Π'(I-C)⁻¹Ω̇`; present iff stable.
    pub bound: Option<f64>,
    pub delta: f64,
    #[serde(rename = "M")]
    pub m: Vec<f64>,
    /// `M` is computed per regime from that regime's slope parameter.
    pub m_convention: &'static str,
    pub pi: Vec<f64>,
    pub omega: Vec<f64>,
    /// 1-norm condition estimate of `I - C`, reported only past 1e8.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub condition_warning: Option<f64>,
    #[serde(skip)]
    pub c: DMatrix<f64>,
}

pub fn analyze_stability(spec: &ModelSpec, delta: f64) -> Result<StabilityReport> {
    let system = build_stability_system(spec, delta)?;
    let rho = spectral_radius(&system.c)?;
    let (bound, condition_warning) = match second_moment_bound(&system, rho)? {
        Some((b, w)) => (Some(b), w),
        None => (None, None),
    };
    Ok(StabilityReport {
        rho,
        stable: rho < 1.0,
        bound,
        delta,
        m: system.m,
        m_convention: "per-regime",
        pi: system.pi,
        omega: system.omega,
        condition_warning,
        c: system.c,
    })
}
