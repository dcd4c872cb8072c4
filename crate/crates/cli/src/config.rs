use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use enlarged_risk::bsde::{DriverSpec, SolverConfig};
use enlarged_risk::claims::ClaimKind;
use enlarged_risk::entropic::RiskToleranceProfile;
use enlarged_risk::paths::{IntensityParams, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimId {
    DefaultFraction,
    TerminalBrownian,
}

impl From<ClaimId> for ClaimKind {
    fn from(c: ClaimId) -> Self {
        match c {
            ClaimId::DefaultFraction => ClaimKind::DefaultFraction,
            ClaimId::TerminalBrownian => ClaimKind::TerminalBrownian,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineId {
    ClosedForm,
    Bsde,
    Tree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriverId {
    Entropic,
    Zero,
    LinearZ,
}

/// Flat run configuration; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub maturity: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub mu: f64,
    pub sigma: f64,
    pub l0: f64,
    pub seed: u64,
    /// `γ(θ) = 1 − a e^{−bθ}`.
    pub a: f64,
    pub b: f64,
    pub claim: ClaimId,
    pub engine: EngineId,
    pub driver: DriverId,
    pub n_marks: usize,
    pub basis_order: usize,
    /// Every `theta_stride`-th grid node enters the post-default family.
    pub theta_stride: usize,
    pub bound: Option<f64>,
    pub axiom_samples: usize,
    pub dual_measures: usize,
    pub out: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            maturity: 1.0,
            n_steps: 1000,
            n_paths: 5,
            mu: 1.0,
            sigma: 0.1,
            l0: 1.0,
            seed: 1,
            a: 0.9,
            b: 1.0,
            claim: ClaimId::DefaultFraction,
            engine: EngineId::ClosedForm,
            driver: DriverId::Entropic,
            n_marks: 1,
            basis_order: 3,
            theta_stride: 10,
            bound: None,
            axiom_samples: 500,
            dual_measures: 200,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            bail!("invalid configuration: n_paths must be at least 1");
        }
        if self.n_steps == 0 {
            bail!("invalid configuration: n_steps must be at least 1");
        }
        if !(self.maturity > 0.0) {
            bail!("invalid configuration: maturity must be positive");
        }
        if !(self.sigma >= 0.0) || !self.mu.is_finite() || !(self.l0 > 0.0) {
            bail!("invalid configuration: need finite mu, sigma >= 0 and l0 > 0");
        }
        if self.n_marks == 0 || self.basis_order == 0 || self.theta_stride == 0 {
            bail!("invalid configuration: n_marks, basis_order and theta_stride must be at least 1");
        }
        if self.axiom_samples == 0 || self.dual_measures == 0 {
            bail!("invalid configuration: axiom_samples and dual_measures must be at least 1");
        }
        if let Some(b) = self.bound {
            if !(b > 0.0) {
                bail!("invalid configuration: bound must be positive");
            }
        }
        self.profile()?;
        Ok(())
    }

    pub fn profile(&self) -> Result<RiskToleranceProfile> {
        RiskToleranceProfile::new(self.a, self.b).context("invalid configuration")
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(0.0, self.maturity, self.n_steps).context("invalid configuration")
    }

    pub fn intensity(&self) -> IntensityParams {
        IntensityParams {
            mu: self.mu,
            sigma: self.sigma,
            l0: self.l0,
        }
    }

    pub fn driver_spec(&self) -> Result<DriverSpec> {
        Ok(match self.driver {
            DriverId::Entropic => DriverSpec::entropic(self.profile()?),
            DriverId::Zero => DriverSpec::zero(),
            DriverId::LinearZ => DriverSpec::linear_z(),
        })
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            basis_order: self.basis_order,
            bound: self.bound,
            ..SolverConfig::default()
        }
    }
}
