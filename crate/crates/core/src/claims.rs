//! Terminal claims split into their no-default and default parts,
//! `ξ = ξ⁰ 1{T<τ} + ξ¹(τ, ζ) 1{T≥τ}`.
//!
//! Functionals receive the Brownian path sampled on `[0, T]`; the last value
//! is `W_T`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::paths::DefaultScenario;

pub type NoDefaultPayoff = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type DefaultPayoff = Arc<dyn Fn(&[f64], f64, usize) -> f64 + Send + Sync>;

/// The two example claims, selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClaimKind {
    /// `W_T` without default, `W_T (T−τ)/T − 1` after a default.
    DefaultFraction,
    /// `W_T` in both branches.
    TerminalBrownian,
}

impl ClaimKind {
    pub fn name(self) -> &'static str {
        match self {
            ClaimKind::DefaultFraction => "default_fraction",
            ClaimKind::TerminalBrownian => "terminal_brownian",
        }
    }

    pub fn build(self, maturity: f64) -> DecomposedClaim {
        match self {
            ClaimKind::DefaultFraction => claim_default_fraction(maturity),
            ClaimKind::TerminalBrownian => claim_terminal_brownian(maturity),
        }
    }

    /// Coefficients `(a, b)` with `ξ¹(θ) = a W_T + b`; every example claim is
    /// affine in `W_T` on both branches.
    pub fn default_branch_affine(self, theta: f64, maturity: f64) -> (f64, f64) {
        match self {
            ClaimKind::DefaultFraction => ((maturity - theta) / maturity, -1.0),
            ClaimKind::TerminalBrownian => (1.0, 0.0),
        }
    }

    /// Coefficients of the no-default branch `ξ⁰ = a W_T + b`.
    pub fn no_default_affine(self) -> (f64, f64) {
        (1.0, 0.0)
    }
}

impl fmt::Display for ClaimKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClaimKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default_fraction" => Ok(ClaimKind::DefaultFraction),
            "terminal_brownian" => Ok(ClaimKind::TerminalBrownian),
            other => Err(Error::InvalidConfig(format!("unknown claim `{other}`"))),
        }
    }
}

/// A `G_T`-measurable payoff given through its decomposition.
#[derive(Clone)]
pub struct DecomposedClaim {
    name: String,
    maturity: f64,
    xi0: NoDefaultPayoff,
    xi1: DefaultPayoff,
    bound: f64,
}

impl fmt::Debug for DecomposedClaim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DecomposedClaim")
            .field("name", &self.name)
            .field("maturity", &self.maturity)
            .field("bound", &self.bound)
            .finish()
    }
}

/// Default truncation level `6 √T`.
pub fn default_bound(maturity: f64) -> f64 {
    6.0 * maturity.sqrt()
}

fn terminal(path: &[f64]) -> f64 {
    *path.last().expect("claim evaluated on an empty path")
}

impl DecomposedClaim {
    pub fn new(
        name: impl Into<String>,
        maturity: f64,
        bound: f64,
        xi0: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        xi1: impl Fn(&[f64], f64, usize) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            maturity,
            xi0: Arc::new(xi0),
            xi1: Arc::new(xi1),
            bound,
        }
    }

    /// A claim paying `c` whatever happens.
    pub fn constant(c: f64, maturity: f64) -> Self {
        Self::new(format!("constant({c})"), maturity, c.abs().max(1.0), move |_| c, move |_, _, _| c)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = bound;
        self
    }

    pub fn xi0(&self, path: &[f64]) -> f64 {
        (self.xi0)(path)
    }

    pub fn xi1(&self, path: &[f64], theta: f64, mark: usize) -> f64 {
        (self.xi1)(path, theta, mark)
    }

    /// `ξ⁰` when the scenario survives `T`, `ξ¹(τ, ζ)` otherwise.
    pub fn evaluate(&self, path: &[f64], scenario: &DefaultScenario) -> f64 {
        match scenario.tau {
            Some(tau) if tau <= self.maturity => self.xi1(path, tau, scenario.mark),
            _ => self.xi0(path),
        }
    }

    /// Both branches clamped to `[−B, B]`.
    pub fn truncated(&self) -> Self {
        let b = self.bound;
        let (xi0, xi1) = (self.xi0.clone(), self.xi1.clone());
        Self {
            name: format!("{}|trunc({b})", self.name),
            maturity: self.maturity,
            xi0: Arc::new(move |p| xi0(p).clamp(-b, b)),
            xi1: Arc::new(move |p, th, e| xi1(p, th, e).clamp(-b, b)),
            bound: b,
        }
    }

    /// `−ξ`, the terminal condition whose BSDE solution is the risk measure.
    pub fn negated(&self) -> Self {
        let (xi0, xi1) = (self.xi0.clone(), self.xi1.clone());
        Self {
            name: format!("-({})", self.name),
            maturity: self.maturity,
            xi0: Arc::new(move |p| -xi0(p)),
            xi1: Arc::new(move |p, th, e| -xi1(p, th, e)),
            bound: self.bound,
        }
    }

    /// `ξ + c`.
    pub fn shifted(&self, c: f64) -> Self {
        let (xi0, xi1) = (self.xi0.clone(), self.xi1.clone());
        Self {
            name: format!("{}+{c}", self.name),
            maturity: self.maturity,
            xi0: Arc::new(move |p| xi0(p) + c),
            xi1: Arc::new(move |p, th, e| xi1(p, th, e) + c),
            bound: self.bound + c.abs(),
        }
    }

    /// `λ ξ`.
    pub fn scaled(&self, lambda: f64) -> Self {
        let (xi0, xi1) = (self.xi0.clone(), self.xi1.clone());
        Self {
            name: format!("{lambda}*{}", self.name),
            maturity: self.maturity,
            xi0: Arc::new(move |p| lambda * xi0(p)),
            xi1: Arc::new(move |p, th, e| lambda * xi1(p, th, e)),
            bound: self.bound * lambda.abs(),
        }
    }

    /// `a ξ + b η` for claims of the same maturity.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if (self.maturity - other.maturity).abs() > 1e-12 {
            return Err(Error::InvalidConfig("cannot combine claims of different maturities".into()));
        }
        let (f0, f1, g0, g1) = (self.xi0.clone(), self.xi1.clone(), other.xi0.clone(), other.xi1.clone());
        Ok(Self {
            name: format!("{a}*{}+{b}*{}", self.name, other.name),
            maturity: self.maturity,
            xi0: Arc::new(move |p| a * f0(p) + b * g0(p)),
            xi1: Arc::new(move |p, th, e| a * f1(p, th, e) + b * g1(p, th, e)),
            bound: a.abs() * self.bound + b.abs() * other.bound,
        })
    }
}

/// `ξ = W_T 1{T<τ} + (W_T (T−τ)/T − 1) 1{T≥τ}`.
pub fn claim_default_fraction(maturity: f64) -> DecomposedClaim {
    DecomposedClaim::new(
        ClaimKind::DefaultFraction.name(),
        maturity,
        default_bound(maturity),
        terminal,
        move |p, theta, _| terminal(p) * (maturity - theta) / maturity - 1.0,
    )
}

/// `ξ = W_T`, insensitive to the default.
pub fn claim_terminal_brownian(maturity: f64) -> DecomposedClaim {
    DecomposedClaim::new(
        ClaimKind::TerminalBrownian.name(),
        maturity,
        default_bound(maturity),
        terminal,
        |p, _, _| terminal(p),
    )
}
