//! Entropic risk measures with a default-dependent risk tolerance.
//!
//! Before default the agent uses tolerance 1, afterwards `γ(τ)`; so
//! `ρ⁰_t = ln E[e^{−ξ⁰} | F_t]` and `ρ¹_t = γ(τ) ln E[e^{−ξ¹(τ)/γ(τ)} | F_t]`.
//! For claims affine in `W_T` both are explicit.

use rand_distr::{Distribution, StandardNormal};

use crate::claims::ClaimKind;
use crate::error::{Error, Result};
use crate::paths::{DefaultScenario, PathEnsemble, TimeGrid};
use crate::rng::{substream, StreamTag};

/// Post-default risk tolerance `γ(θ) = 1 − a e^{−bθ}`; the pre-default
/// tolerance is 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskToleranceProfile {
    a: f64,
    b: f64,
}

impl RiskToleranceProfile {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) || !(b >= 0.0) || !b.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "tolerance profile needs 0 < a < 1 and b >= 0, got a = {a}, b = {b}"
            )));
        }
        Ok(Self { a, b })
    }

    /// `γ(θ) = 1 − 0.9 e^{−θ}`.
    pub fn standard() -> Self {
        Self { a: 0.9, b: 1.0 }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn pre_default(&self) -> f64 {
        1.0
    }

    pub fn gamma(&self, theta: f64) -> f64 {
        1.0 - self.a * (-self.b * theta).exp()
    }
}

impl Default for RiskToleranceProfile {
    fn default() -> Self {
        Self::standard()
    }
}

/// `γ ln E[e^{−(a W_T + b)/γ} | W_t = w] = a²(T−t)/(2γ) − a w − b`.
pub fn rho_affine(a: f64, b: f64, t: f64, w_t: f64, maturity: f64, gamma: f64) -> f64 {
    a * a * (maturity - t) / (2.0 * gamma) - a * w_t - b
}

fn check_time(t: f64, maturity: f64) -> Result<()> {
    if !(0.0..=maturity).contains(&t) {
        return Err(Error::Domain(format!("t = {t} outside [0, {maturity}]")));
    }
    Ok(())
}

/// `s ξ + c` for one of the example claims; every such claim is affine in
/// `W_T` on both branches, so its risk has an explicit form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineClaim {
    pub kind: ClaimKind,
    pub scale: f64,
    pub shift: f64,
}

impl From<ClaimKind> for AffineClaim {
    fn from(kind: ClaimKind) -> Self {
        Self {
            kind,
            scale: 1.0,
            shift: 0.0,
        }
    }
}

impl AffineClaim {
    pub fn shifted(self, c: f64) -> Self {
        Self {
            shift: self.shift + c,
            ..self
        }
    }

    pub fn scaled(self, s: f64) -> Self {
        Self {
            scale: self.scale * s,
            shift: self.shift * s,
            ..self
        }
    }

    pub fn no_default_coefficients(&self) -> (f64, f64) {
        let (a, b) = self.kind.no_default_affine();
        (self.scale * a, self.scale * b + self.shift)
    }

    pub fn default_coefficients(&self, theta: f64, maturity: f64) -> (f64, f64) {
        let (a, b) = self.kind.default_branch_affine(theta, maturity);
        (self.scale * a, self.scale * b + self.shift)
    }

    /// `ρ⁰_t(ξ⁰)`, for `0 ≤ t ≤ T`.
    pub fn rho0(&self, t: f64, w_t: f64, maturity: f64) -> Result<f64> {
        check_time(t, maturity)?;
        let (a, b) = self.no_default_coefficients();
        Ok(rho_affine(a, b, t, w_t, maturity, 1.0))
    }

    /// `ρ¹_t(ξ¹(τ))`, for `τ ≤ t ≤ T`.
    pub fn rho1(&self, t: f64, w_t: f64, tau: f64, maturity: f64, profile: &RiskToleranceProfile) -> Result<f64> {
        check_time(t, maturity)?;
        if t < tau {
            return Err(Error::Domain(format!(
                "post-default component is defined on t >= tau, got t = {t} < tau = {tau}"
            )));
        }
        let (a, b) = self.default_coefficients(tau, maturity);
        Ok(rho_affine(a, b, t, w_t, maturity, profile.gamma(tau)))
    }
}

/// Pre-default component `ρ⁰_t(ξ⁰) = (T−t)/2 − W_t` (both example claims
/// share `ξ⁰ = W_T`).
pub fn rho0_closed(claim: ClaimKind, t: f64, w_t: f64, maturity: f64) -> Result<f64> {
    AffineClaim::from(claim).rho0(t, w_t, maturity)
}

/// Post-default component `ρ¹_t(ξ¹(τ))`, defined for `τ ≤ t ≤ T`.
pub fn rho1_closed(
    claim: ClaimKind,
    t: f64,
    w_t: f64,
    tau: f64,
    maturity: f64,
    profile: &RiskToleranceProfile,
) -> Result<f64> {
    AffineClaim::from(claim).rho1(t, w_t, tau, maturity, profile)
}

/// `ρ_t = ρ⁰_t 1{t<τ} + ρ¹_t 1{t≥τ}`.
pub fn rho_reconstruct(t: f64, tau: Option<f64>, rho0: f64, rho1: Option<f64>) -> Result<f64> {
    match tau {
        Some(tau) if t >= tau => rho1.ok_or_else(|| {
            Error::IncompleteInput(format!("post-default value missing at t = {t} >= tau = {tau}"))
        }),
        _ => Ok(rho0),
    }
}

/// Inner simulation settings of the nested Monte-Carlo oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NestedMcConfig {
    pub inner_samples: usize,
    pub seed: u64,
    pub stream: u64,
}

impl NestedMcConfig {
    pub fn new(inner_samples: usize, seed: u64) -> Self {
        Self {
            inner_samples,
            seed,
            stream: 0,
        }
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// Estimates `γ ln E[e^{−ξ(W_T)/γ} | W_t = w]` by resimulating `W_T` from
/// `(t, w)` with antithetic pairs.
pub fn entropic_nested_mc(
    payoff: impl Fn(f64) -> f64,
    t: f64,
    w_t: f64,
    maturity: f64,
    gamma: f64,
    config: NestedMcConfig,
) -> Result<McEstimate> {
    if config.inner_samples < 100 {
        return Err(Error::InvalidConfig(format!(
            "nested Monte Carlo needs at least 100 inner samples, got {}",
            config.inner_samples
        )));
    }
    check_time(t, maturity)?;
    if !(gamma > 0.0) {
        return Err(Error::InvalidConfig(format!("risk tolerance must be positive, got {gamma}")));
    }
    let pairs = config.inner_samples / 2;
    let sd = (maturity - t).sqrt();
    let mut rng = substream(config.seed, StreamTag::NestedInner, config.stream);
    let exponents: Vec<(f64, f64)> = (0..pairs)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (-payoff(w_t + sd * z) / gamma, -payoff(w_t - sd * z) / gamma)
        })
        .collect();
    let shift = exponents
        .iter()
        .flat_map(|&(u, v)| [u, v])
        .fold(f64::NEG_INFINITY, f64::max);
    let ys: Vec<f64> = exponents
        .iter()
        .map(|&(u, v)| 0.5 * ((u - shift).exp() + (v - shift).exp()))
        .collect();
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(McEstimate {
        value: gamma * (shift + mean.ln()),
        std_error: gamma * (var / n).sqrt() / mean,
    })
}

/// Risk trajectories of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskTrack {
    pub path_id: usize,
    pub scenario: DefaultScenario,
    /// First grid node with `t >= τ`, when that happens by `T`.
    pub default_node: Option<usize>,
    pub rho0: Vec<f64>,
    /// Post-default component; `None` before the default node.
    pub rho1: Vec<Option<f64>>,
    pub rho: Vec<f64>,
}

impl RiskTrack {
    /// Post-default value shown before default (fixed at zero).
    pub fn rho1_display(&self, k: usize) -> f64 {
        self.rho1[k].unwrap_or(0.0)
    }

    /// `ρ¹_τ − ρ⁰_τ` at the default node.
    pub fn jump(&self) -> Option<f64> {
        let k = self.default_node?;
        Some(self.rho1[k]? - self.rho0[k])
    }
}

/// Grids of `ρ⁰`, `ρ¹` and `ρ` along simulated paths on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskSurface {
    pub grid: TimeGrid,
    pub maturity_index: usize,
    pub tracks: Vec<RiskTrack>,
}

/// Closed-form surface for the selected paths.
pub fn closed_form_surface(
    ensemble: &PathEnsemble,
    scenarios: &[DefaultScenario],
    path_ids: &[usize],
    claim: impl Into<AffineClaim>,
    profile: &RiskToleranceProfile,
    maturity: f64,
) -> Result<RiskSurface> {
    let claim = claim.into();
    let grid = *ensemble.grid();
    let kt = grid.index_of(maturity)?;
    let mut tracks = Vec::with_capacity(path_ids.len());
    for &i in path_ids {
        let scenario = *scenarios
            .get(i)
            .ok_or_else(|| Error::IncompleteInput(format!("no scenario for path {i}")))?;
        let w = ensemble.path(i);
        let default_node = scenario.default_node(&grid, maturity);
        let mut rho0 = Vec::with_capacity(kt + 1);
        let mut rho1 = Vec::with_capacity(kt + 1);
        let mut rho = Vec::with_capacity(kt + 1);
        for k in 0..=kt {
            let t = grid.time(k);
            let r0 = claim.rho0(t, w[k], maturity)?;
            let r1 = match (default_node, scenario.tau) {
                (Some(kd), Some(tau)) if k >= kd => Some(claim.rho1(t, w[k], tau.min(t), maturity, profile)?),
                _ => None,
            };
            let tau_on_grid = default_node.map(|kd| grid.time(kd));
            rho.push(rho_reconstruct(t, tau_on_grid, r0, r1)?);
            rho0.push(r0);
            rho1.push(r1);
        }
        tracks.push(RiskTrack {
            path_id: i,
            scenario,
            default_node,
            rho0,
            rho1,
            rho,
        });
    }
    Ok(RiskSurface {
        grid,
        maturity_index: kt,
        tracks,
    })
}
