//! Entropic risk in the continuous model, evaluated by nested Gauss–Hermite
//! quadrature over the Brownian increments between observation dates.
//!
//! Before default `ρ_t = γ₀ ln E[e^{−ξ⁰/γ₀} | F_t]`; after default at `θ`,
//! `ρ_t = γ(θ) ln E[e^{−ξ¹(θ)/γ(θ)} | F_t]`. Claims are functions of `W` at
//! the observation dates and are indexed explicitly, never by `last()`.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Axiom, ClaimParams, RiskEngine, StoppingRule};
use crate::claims::DecomposedClaim;
use crate::entropic::RiskToleranceProfile;
use crate::error::{Error, Result};
use crate::quadrature::{log_weighted_exp, GaussHermite};

/// A claim together with the last observation index it depends on.
#[derive(Debug, Clone)]
pub struct PathClaim {
    pub claim: DecomposedClaim,
    pub horizon: usize,
}

/// State at observation `k`: `W` at dates `0..=k` and the default time if
/// `τ ≤ t_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub k: usize,
    pub w: Vec<f64>,
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathEvent {
    /// `{W_{t_k} > level}`.
    Above { k: usize, level: f64 },
    /// `{τ ≤ t_k}`.
    Defaulted { k: usize },
}

struct Inner {
    profile: RiskToleranceProfile,
    maturity: f64,
    n_obs: usize,
    rule: GaussHermite,
}

#[derive(Clone)]
pub struct ClosedFormEngine {
    inner: Arc<Inner>,
}

impl ClosedFormEngine {
    pub fn new(profile: RiskToleranceProfile, maturity: f64, n_obs: usize, order: usize) -> Result<Self> {
        if !(maturity > 0.0) || n_obs == 0 || order == 0 {
            return Err(Error::InvalidConfig(format!(
                "quadrature engine needs T > 0, n_obs >= 1 and order >= 1, got T = {maturity}, n_obs = {n_obs}, order = {order}"
            )));
        }
        Ok(Self {
            inner: Arc::new(Inner {
                profile,
                maturity,
                n_obs,
                rule: GaussHermite::new(order),
            }),
        })
    }

    /// `T = 1`, observations every quarter, 16 nodes per increment.
    pub fn standard() -> Self {
        Self::new(RiskToleranceProfile::standard(), 1.0, 4, 16).expect("valid standard engine")
    }

    pub fn n_obs(&self) -> usize {
        self.inner.n_obs
    }

    pub fn maturity(&self) -> f64 {
        self.inner.maturity
    }

    pub fn obs_time(&self, k: usize) -> f64 {
        self.inner.maturity * k as f64 / self.inner.n_obs as f64
    }

    pub fn obs_index(&self, t: f64) -> Result<usize> {
        let dt = self.inner.maturity / self.inner.n_obs as f64;
        let x = t / dt;
        let k = x.round();
        if (x - k).abs() > 1e-9 || k < 0.0 || k as usize > self.inner.n_obs {
            return Err(Error::GridAlignment { t, dt });
        }
        Ok(k as usize)
    }

    /// Wraps a claim on the full observation path.
    pub fn claim(&self, claim: DecomposedClaim) -> PathClaim {
        PathClaim {
            claim,
            horizon: self.inner.n_obs,
        }
    }

    /// `ln E[e^{f(W)} | W_0..W_k]` for `f` depending on dates `..=horizon`.
    fn log_mgf(&self, w: &mut Vec<f64>, horizon: usize, f: &dyn Fn(&[f64]) -> f64) -> f64 {
        let k = w.len() - 1;
        if k >= horizon {
            return f(w);
        }
        let sd = (self.inner.maturity / self.inner.n_obs as f64).sqrt();
        let values: Vec<f64> = self
            .inner
            .rule
            .nodes
            .iter()
            .map(|&x| {
                w.push(w[k] + sd * x);
                let v = self.log_mgf(w, horizon, f);
                w.pop();
                v
            })
            .collect();
        log_weighted_exp(&self.inner.rule.weights, &values)
    }

    /// `ρ⁰_{t_k}(ξ⁰)` given `W_0..W_k`.
    pub fn rho_pre(&self, claim: &PathClaim, w: &[f64]) -> f64 {
        let g = self.inner.profile.pre_default();
        let xi = &claim.claim;
        g * self.log_mgf(&mut w.to_vec(), claim.horizon, &|p| -xi.xi0(p) / g)
    }

    /// `ρ¹_{t_k}(ξ¹(θ))` given `W_0..W_k`.
    pub fn rho_post(&self, claim: &PathClaim, w: &[f64], theta: f64) -> f64 {
        let g = self.inner.profile.gamma(theta);
        let xi = &claim.claim;
        g * self.log_mgf(&mut w.to_vec(), claim.horizon, &|p| -xi.xi1(p, theta, 0) / g)
    }

    fn sample_state(&self, k: usize, rng: &mut ChaCha8Rng) -> PathPoint {
        let sd = (self.inner.maturity / self.inner.n_obs as f64).sqrt();
        let mut w = vec![0.0];
        for j in 0..k {
            let z: f64 = rng.sample(StandardNormal);
            w.push(w[j] + sd * z);
        }
        let tau = (k > 0 && rng.random_bool(0.5)).then(|| self.obs_time(k) * (1.0 - rng.random::<f64>()));
        PathPoint { k, w, tau }
    }
}

impl RiskEngine for ClosedFormEngine {
    type Claim = PathClaim;
    type Point = PathPoint;
    type Event = PathEvent;

    fn id(&self) -> &str {
        "closed_form"
    }

    fn tolerance(&self) -> f64 {
        1e-10
    }

    fn expected_failures(&self) -> &[Axiom] {
        &[Axiom::PositiveHomogeneity]
    }

    fn evaluate(&self, claim: &PathClaim, at: &PathPoint) -> Result<f64> {
        if at.w.len() != at.k + 1 || at.k > self.inner.n_obs {
            return Err(Error::InvalidConfig(format!(
                "point at observation {} carries {} values",
                at.k,
                at.w.len()
            )));
        }
        Ok(match at.tau {
            None => self.rho_pre(claim, &at.w),
            Some(theta) => self.rho_post(claim, &at.w, theta),
        })
    }

    fn constant(&self, c: f64) -> PathClaim {
        PathClaim {
            claim: DecomposedClaim::constant(c, self.inner.maturity),
            horizon: 0,
        }
    }

    fn combine(&self, a: f64, x: &PathClaim, b: f64, y: &PathClaim) -> PathClaim {
        PathClaim {
            claim: x.claim.combine(a, &y.claim, b).expect("engine claims share the maturity"),
            horizon: x.horizon.max(y.horizon),
        }
    }

    fn restrict(&self, x: &PathClaim, event: &PathEvent) -> PathClaim {
        let (f0, f1) = (x.claim.clone(), x.claim.clone());
        match *event {
            PathEvent::Above { k, level } => PathClaim {
                claim: DecomposedClaim::new(
                    "restricted",
                    self.inner.maturity,
                    x.claim.bound(),
                    move |p| if p[k] > level { f0.xi0(p) } else { 0.0 },
                    move |p, th, e| if p[k] > level { f1.xi1(p, th, e) } else { 0.0 },
                ),
                horizon: x.horizon.max(k),
            },
            PathEvent::Defaulted { k } => {
                let tk = self.obs_time(k);
                PathClaim {
                    claim: DecomposedClaim::new(
                        "restricted",
                        self.inner.maturity,
                        x.claim.bound(),
                        |_| 0.0,
                        move |p, th, e| if th <= tk { f1.xi1(p, th, e) } else { 0.0 },
                    ),
                    horizon: x.horizon,
                }
            }
        }
    }

    fn indicator(&self, event: &PathEvent, at: &PathPoint) -> bool {
        match *event {
            PathEvent::Above { k, level } => at.w[k] > level,
            PathEvent::Defaulted { k } => at.tau.is_some_and(|th| th <= self.obs_time(k)),
        }
    }

    fn generated_claim(&self, p: &ClaimParams) -> PathClaim {
        let ClaimParams { a, b, c, d } = *p;
        let n = self.inner.n_obs;
        let cutoff = d * self.inner.maturity;
        PathClaim {
            claim: DecomposedClaim::new(
                "generated",
                self.inner.maturity,
                a.abs() + c.abs(),
                move |w| a * (b * w[n]).tanh(),
                move |w, th, _| a * (b * w[n]).tanh() + if th <= cutoff { c } else { 0.0 },
            ),
            horizon: n,
        }
    }

    fn sample_point(&self, rng: &mut ChaCha8Rng) -> PathPoint {
        let k = rng.random_range(0..=self.inner.n_obs);
        self.sample_state(k, rng)
    }

    fn sample_event(&self, at: &PathPoint, rng: &mut ChaCha8Rng) -> PathEvent {
        if at.k > 0 && rng.random_bool(0.5) {
            PathEvent::Defaulted { k: at.k }
        } else {
            PathEvent::Above {
                k: at.k,
                level: rng.random_range(-1.0..=1.0),
            }
        }
    }

    fn flow_claim(&self, claim: &PathClaim, rule: &StoppingRule) -> Result<PathClaim> {
        let n = self.inner.n_obs;
        let maturity = self.inner.maturity;
        let (e0, e1, c0, c1) = (self.clone(), self.clone(), claim.clone(), claim.clone());
        match *rule {
            StoppingRule::Deterministic(s) => {
                let ks = self.obs_index(s)?;
                let ts = self.obs_time(ks);
                let c2 = claim.clone();
                Ok(PathClaim {
                    claim: DecomposedClaim::new(
                        "stopped",
                        maturity,
                        claim.claim.bound(),
                        move |w| -e0.rho_pre(&c0, &w[..=ks]),
                        move |w, th, _| {
                            if th <= ts {
                                -e1.rho_post(&c1, &w[..=ks], th)
                            } else {
                                -e1.rho_pre(&c2, &w[..=ks])
                            }
                        },
                    ),
                    horizon: ks,
                })
            }
            StoppingRule::DefaultTriggered => {
                // without default σ = T and −ρ_T(ξ) = ξ
                let dt = maturity / n as f64;
                Ok(PathClaim {
                    claim: DecomposedClaim::new(
                        "stopped",
                        maturity,
                        claim.claim.bound(),
                        move |w| c0.claim.xi0(w),
                        move |w, th, _| {
                            let ks = ((th / dt - 1e-9).ceil().max(0.0) as usize).min(n);
                            -e1.rho_post(&c1, &w[..=ks], th)
                        },
                    ),
                    horizon: n,
                })
            }
        }
    }

    fn flow_points(&self, rule: &StoppingRule, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<PathPoint>> {
        let n = self.inner.n_obs;
        let ks = match *rule {
            StoppingRule::Deterministic(s) => Some(self.obs_index(s)?),
            StoppingRule::DefaultTriggered => None,
        };
        Ok((0..count)
            .map(|_| match ks {
                Some(ks) => self.sample_state(rng.random_range(0..=ks), rng),
                None => {
                    let mut at = self.sample_state(rng.random_range(0..=n), rng);
                    // t ≤ σ after default only at the first date past τ
                    if let Some(th) = at.tau {
                        let first = ((th / (self.inner.maturity / n as f64) - 1e-9).ceil() as usize).min(n);
                        if first < at.k {
                            at.tau = Some(self.obs_time(at.k - 1) + (1.0 - rng.random::<f64>()) / n as f64 * self.inner.maturity);
                        }
                    }
                    at
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::claims::{claim_default_fraction, claim_terminal_brownian};
    use crate::entropic::{rho0_closed, rho1_closed};
    use crate::claims::ClaimKind;

    #[test]
    fn affine_claims_match_closed_form() {
        let e = ClosedFormEngine::standard();
        let profile = RiskToleranceProfile::standard();
        let at = PathPoint {
            k: 2,
            w: vec![0.0, 0.3, -0.2],
            tau: None,
        };
        let c = e.claim(claim_terminal_brownian(1.0));
        let want = rho0_closed(ClaimKind::TerminalBrownian, 0.5, -0.2, 1.0).unwrap();
        assert!((e.evaluate(&c, &at).unwrap() - want).abs() < 1e-12);
        let post = PathPoint { tau: Some(0.4), ..at };
        let c = e.claim(claim_default_fraction(1.0));
        let want = rho1_closed(ClaimKind::DefaultFraction, 0.5, -0.2, 0.4, 1.0, &profile).unwrap();
        assert!((e.evaluate(&c, &post).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn known_claim_returns_its_negative() {
        let e = ClosedFormEngine::standard();
        let c = e.claim(claim_terminal_brownian(1.0));
        let at = PathPoint {
            k: 4,
            w: vec![0.0, 0.1, 0.2, 0.3, 0.7],
            tau: None,
        };
        assert_eq!(e.evaluate(&c, &at).unwrap(), -0.7);
    }

    #[test]
    fn off_grid_stopping_time_is_rejected() {
        let e = ClosedFormEngine::standard();
        let c = e.claim(claim_terminal_brownian(1.0));
        assert!(matches!(
            e.flow_claim(&c, &StoppingRule::Deterministic(0.3)),
            Err(Error::GridAlignment { .. })
        ));
    }

    #[test]
    fn default_flow_points_satisfy_t_le_sigma() {
        let e = ClosedFormEngine::standard();
        let mut rng = crate::rng::substream(3, crate::rng::StreamTag::Axioms, 0);
        for at in e.flow_points(&StoppingRule::DefaultTriggered, 200, &mut rng).unwrap() {
            if let Some(th) = at.tau {
                assert!(th <= e.obs_time(at.k) && th > e.obs_time(at.k - 1));
            }
        }
    }
}
