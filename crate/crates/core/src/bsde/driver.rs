//! Generators of the pre- and post-default BSDEs.

use std::fmt;
use std::sync::Arc;

use crate::entropic::RiskToleranceProfile;

/// `g⁰(t, y, z, u)` with `u` indexed by mark.
pub type PreDefaultRate = Arc<dyn Fn(f64, f64, f64, &[f64]) -> f64 + Send + Sync>;
/// `g¹(t, y, z, θ, e)`.
pub type PostDefaultRate = Arc<dyn Fn(f64, f64, f64, f64, usize) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriverPreset {
    Zero,
    /// `g = z` on both branches.
    LinearZ,
    /// `g⁰ = z²/2`, `g¹ = z²/(2γ(θ))`.
    Entropic(RiskToleranceProfile),
    Custom,
}

#[derive(Clone)]
pub struct DriverSpec {
    name: String,
    preset: DriverPreset,
    g0: PreDefaultRate,
    g1: PostDefaultRate,
    pub depends_on_y: bool,
    pub depends_on_u: bool,
    pub convex_in_z: bool,
}

impl fmt::Debug for DriverSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriverSpec")
            .field("name", &self.name)
            .field("preset", &self.preset)
            .field("depends_on_y", &self.depends_on_y)
            .field("depends_on_u", &self.depends_on_u)
            .field("convex_in_z", &self.convex_in_z)
            .finish()
    }
}

impl DriverSpec {
    pub fn zero() -> Self {
        Self {
            name: "zero".into(),
            preset: DriverPreset::Zero,
            g0: Arc::new(|_, _, _, _| 0.0),
            g1: Arc::new(|_, _, _, _, _| 0.0),
            depends_on_y: false,
            depends_on_u: false,
            convex_in_z: true,
        }
    }

    pub fn linear_z() -> Self {
        Self {
            name: "linear_z".into(),
            preset: DriverPreset::LinearZ,
            g0: Arc::new(|_, _, z, _| z),
            g1: Arc::new(|_, _, z, _, _| z),
            depends_on_y: false,
            depends_on_u: false,
            convex_in_z: true,
        }
    }

    pub fn entropic(profile: RiskToleranceProfile) -> Self {
        Self {
            name: "entropic".into(),
            preset: DriverPreset::Entropic(profile),
            g0: Arc::new(|_, _, z, _| 0.5 * z * z),
            g1: Arc::new(move |_, _, z, theta, _| 0.5 * z * z / profile.gamma(theta)),
            depends_on_y: false,
            depends_on_u: false,
            convex_in_z: true,
        }
    }

    pub fn custom(
        name: impl Into<String>,
        g0: impl Fn(f64, f64, f64, &[f64]) -> f64 + Send + Sync + 'static,
        g1: impl Fn(f64, f64, f64, f64, usize) -> f64 + Send + Sync + 'static,
        depends_on_y: bool,
        depends_on_u: bool,
        convex_in_z: bool,
    ) -> Self {
        Self {
            name: name.into(),
            preset: DriverPreset::Custom,
            g0: Arc::new(g0),
            g1: Arc::new(g1),
            depends_on_y,
            depends_on_u,
            convex_in_z,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn preset(&self) -> DriverPreset {
        self.preset
    }

    pub fn g0(&self, t: f64, y: f64, z: f64, u: &[f64]) -> f64 {
        (self.g0)(t, y, z, u)
    }

    pub fn g1(&self, t: f64, y: f64, z: f64, theta: f64, mark: usize) -> f64 {
        (self.g1)(t, y, z, theta, mark)
    }
}
