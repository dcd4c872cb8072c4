//! Stability of the solution with respect to the terminal condition:
//! `‖Ȳ − Ŷ‖_∞ ≤ 2M` with `M = max(K⁰‖ξ̄⁰ − ξ̂⁰‖_∞, sup K¹(θ,e)‖ξ̄¹ − ξ̂¹‖_∞)`.

use std::fmt;
use std::sync::Arc;

use super::ThetaGrid;
use crate::claims::DecomposedClaim;
use crate::entropic::RiskSurface;
use crate::error::{Error, Result};
use crate::paths::{PathEnsemble, TimeGrid};

/// `K⁰` and `K¹(θ, e)`; both 1 for drivers without `y`-dependence.
#[derive(Clone)]
pub struct StabilityConstants {
    pub k0: f64,
    pub k1: Arc<dyn Fn(f64, usize) -> f64 + Send + Sync>,
}

impl Default for StabilityConstants {
    fn default() -> Self {
        Self {
            k0: 1.0,
            k1: Arc::new(|_, _| 1.0),
        }
    }
}

impl fmt::Debug for StabilityConstants {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StabilityConstants").field("k0", &self.k0).finish_non_exhaustive()
    }
}

/// Pathwise sup of the terminal differences, per branch.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalGap {
    pub no_default: f64,
    /// `(θ, e, sup |ξ̄¹(θ,e) − ξ̂¹(θ,e)|)`.
    pub default: Vec<(f64, usize, f64)>,
}

/// Terminal differences over the paths of `ensemble` and the members of
/// `theta_grid`.
pub fn terminal_gap(
    bar: &DecomposedClaim,
    hat: &DecomposedClaim,
    ensemble: &PathEnsemble,
    theta_grid: &ThetaGrid,
) -> Result<TerminalGap> {
    if (bar.maturity() - hat.maturity()).abs() > 1e-12 {
        return Err(Error::InvalidConfig("terminal conditions have different maturities".into()));
    }
    let grid = ensemble.grid();
    let n = grid.index_of(bar.maturity())?;
    let paths: Vec<&[f64]> = ensemble.paths().map(|p| &p[..=n]).collect();
    let no_default = paths.iter().map(|p| (bar.xi0(p) - hat.xi0(p)).abs()).fold(0.0, f64::max);
    let mut default = Vec::new();
    for &node in theta_grid.nodes() {
        let theta = grid.time(node);
        for &e in theta_grid.marks() {
            let gap = paths
                .iter()
                .map(|p| (bar.xi1(p, theta, e) - hat.xi1(p, theta, e)).abs())
                .fold(0.0, f64::max);
            default.push((theta, e, gap));
        }
    }
    Ok(TerminalGap { no_default, default })
}

/// Solution trajectories of a set of paths on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectories {
    pub grid: TimeGrid,
    pub values: Vec<Vec<f64>>,
}

impl From<&RiskSurface> for Trajectories {
    fn from(surface: &RiskSurface) -> Self {
        Self {
            grid: surface.grid,
            values: surface.tracks.iter().map(|t| t.rho.clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AprioriReport {
    pub k0: f64,
    pub k1_max: f64,
    pub m0: f64,
    pub m1: f64,
    pub m: f64,
    pub observed: f64,
    pub violated: bool,
}

impl AprioriReport {
    pub fn bound(&self) -> f64 {
        2.0 * self.m
    }
}

pub fn apriori_gap(
    bar: &Trajectories,
    hat: &Trajectories,
    gap: &TerminalGap,
    constants: &StabilityConstants,
) -> Result<AprioriReport> {
    if bar.grid != hat.grid || bar.values.len() != hat.values.len() {
        return Err(Error::InvalidConfig("trajectories live on different grids or path sets".into()));
    }
    let mut observed: f64 = 0.0;
    for (a, b) in bar.values.iter().zip(&hat.values) {
        if a.len() != b.len() {
            return Err(Error::InvalidConfig("trajectories of different lengths".into()));
        }
        observed = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(observed, f64::max);
    }
    let m0 = constants.k0 * gap.no_default;
    let (m1, k1_max) = gap.default.iter().fold((0.0f64, 0.0f64), |(m, k), &(theta, e, g)| {
        let k1 = (constants.k1)(theta, e);
        (m.max(k1 * g), k.max(k1))
    });
    let m = m0.max(m1);
    Ok(AprioriReport {
        k0: constants.k0,
        k1_max,
        m0,
        m1,
        m,
        observed,
        violated: observed > 2.0 * m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_trajectories_have_no_gap() {
        let grid = TimeGrid::new(0.0, 1.0, 2).unwrap();
        let t = Trajectories {
            grid,
            values: vec![vec![0.1, 0.2, 0.3]],
        };
        let gap = TerminalGap {
            no_default: 0.0,
            default: vec![(0.0, 0, 0.0)],
        };
        let r = apriori_gap(&t, &t, &gap, &StabilityConstants::default()).unwrap();
        assert_eq!((r.m, r.observed, r.violated), (0.0, 0.0, false));
    }

    #[test]
    fn mismatched_grids() {
        let a = Trajectories {
            grid: TimeGrid::new(0.0, 1.0, 2).unwrap(),
            values: vec![vec![0.0; 3]],
        };
        let b = Trajectories {
            grid: TimeGrid::new(0.0, 1.0, 4).unwrap(),
            values: vec![vec![0.0; 5]],
        };
        let gap = TerminalGap {
            no_default: 0.0,
            default: vec![],
        };
        assert!(matches!(
            apriori_gap(&a, &b, &gap, &StabilityConstants::default()),
            Err(Error::InvalidConfig(_))
        ));
    }
}
