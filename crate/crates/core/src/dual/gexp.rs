//! Discrete g-expectations on the tree: one-step certainty equivalents
//! composed backward over a filtration.

use crate::bsde::DriverPreset;
use crate::entropic::RiskToleranceProfile;
use crate::error::{Error, Result};
use crate::quadrature::log_weighted_exp;

use super::tree::{Filtration, FiniteTreeModel};

/// Driver presets that have a tree analogue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreeDriver {
    /// `ρ_t = E[ρ_{t+1} | atom]`.
    Zero,
    /// `ρ_t = γ̃ ln E[e^{ρ_{t+1}/γ̃} | atom]`, with `γ̃ = 1` before default and
    /// `γ(τ)` after.
    Entropic(RiskToleranceProfile),
}

impl TreeDriver {
    pub fn from_preset(preset: &DriverPreset) -> Result<Self> {
        match preset {
            DriverPreset::Zero => Ok(TreeDriver::Zero),
            DriverPreset::Entropic(p) => Ok(TreeDriver::Entropic(*p)),
            other => Err(Error::Capability {
                engine: "tree".into(),
                what: format!("run driver preset {other:?}"),
            }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TreeDriver::Zero => "zero",
            TreeDriver::Entropic(_) => "entropic",
        }
    }

    pub fn profile(&self) -> Option<&RiskToleranceProfile> {
        match self {
            TreeDriver::Zero => None,
            TreeDriver::Entropic(p) => Some(p),
        }
    }

    /// Risk tolerance for the step out of epoch `t` on outcome `omega`;
    /// `None` for the linear driver.
    pub fn step_tolerance(&self, tree: &FiniteTreeModel, t: usize, omega: usize) -> Option<f64> {
        let profile = self.profile()?;
        let o = tree.outcome(omega);
        Some(match o.tau {
            Some(s) if s <= t => profile.gamma(tree.time(s)),
            _ => profile.pre_default(),
        })
    }
}

/// Values `ρ_t(ω)` for `t = 0..=N`, constant on the atoms of the filtration
/// used for the recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeRisk {
    filtration: Filtration,
    values: Vec<Vec<f64>>,
}

impl TreeRisk {
    pub fn filtration(&self) -> Filtration {
        self.filtration
    }

    pub fn at(&self, t: usize, omega: usize) -> f64 {
        self.values[t][omega]
    }

    /// `ρ_t` as a vector over outcomes.
    pub fn slice(&self, t: usize) -> &[f64] {
        &self.values[t]
    }

    /// `ρ_t` on each atom of the recursion filtration.
    pub fn atom_values(&self, tree: &FiniteTreeModel, t: usize) -> Vec<f64> {
        let part = tree.partition(self.filtration, t);
        (0..part.n_atoms()).map(|a| self.values[t][part.members(a)[0]]).collect()
    }

    pub fn initial(&self) -> f64 {
        self.values[0][0]
    }
}

fn check_terminal(tree: &FiniteTreeModel, xi: &[f64]) -> Result<()> {
    if xi.len() != tree.n_outcomes() {
        return Err(Error::IncompleteInput(format!(
            "claim has {} values for {} outcomes",
            xi.len(),
            tree.n_outcomes()
        )));
    }
    if xi.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("claim has non-finite values".into()));
    }
    Ok(())
}

/// Backward recursion of `driver` over `filtration` with `ρ_N = −ξ`.
pub fn g_expectation(tree: &FiniteTreeModel, filtration: Filtration, driver: &TreeDriver, xi: &[f64]) -> Result<TreeRisk> {
    check_terminal(tree, xi)?;
    let n = tree.n_periods();
    let p = tree.probabilities();
    let mut values = vec![Vec::new(); n + 1];
    values[n] = xi.iter().map(|x| -x).collect();
    for t in (0..n).rev() {
        let next = &values[t + 1];
        let part = tree.partition(filtration, t);
        let mut current = vec![0.0; tree.n_outcomes()];
        for a in 0..part.n_atoms() {
            let members = part.members(a);
            let mass: f64 = members.iter().map(|&w| p[w]).sum();
            let weights: Vec<f64> = members.iter().map(|&w| p[w] / mass).collect();
            let v = match driver.step_tolerance(tree, t, members[0]) {
                None => members.iter().zip(&weights).map(|(&w, q)| q * next[w]).sum(),
                Some(gamma) => {
                    let scaled: Vec<f64> = members.iter().map(|&w| next[w] / gamma).collect();
                    gamma * log_weighted_exp(&weights, &scaled)
                }
            };
            for &w in members {
                current[w] = v;
            }
        }
        values[t] = current;
    }
    Ok(TreeRisk { filtration, values })
}

/// `ρ_t(ξ)` on the progressively enlarged filtration.
pub fn discrete_g_expectation(tree: &FiniteTreeModel, driver: &TreeDriver, xi: &[f64]) -> Result<TreeRisk> {
    g_expectation(tree, Filtration::G, driver, xi)
}

/// Density of the maximizing measure `Q*` of the robust representation with
/// respect to `P`, conditional on the atom at `t`: the product of the one-step
/// tilts `e^{(ρ_{s+1} − ρ_s)/γ̃}` over `s ≥ t`.
pub fn tilt(tree: &FiniteTreeModel, driver: &TreeDriver, risk: &TreeRisk, t: usize) -> Vec<f64> {
    (0..tree.n_outcomes())
        .map(|w| {
            (t..tree.n_periods())
                .map(|s| match driver.step_tolerance(tree, s, w) {
                    None => 1.0,
                    Some(gamma) => ((risk.at(s + 1, w) - risk.at(s, w)) / gamma).exp(),
                })
                .product()
        })
        .collect()
}

/// True when `xi` is constant on the atoms of `F_N`.
pub fn is_walk_measurable(tree: &FiniteTreeModel, xi: &[f64]) -> bool {
    let part = tree.partition(Filtration::F, tree.n_periods());
    (0..part.n_atoms()).all(|a| {
        let m = part.members(a);
        m.iter().all(|&w| xi[w] == xi[m[0]])
    })
}

/// Pre-default risk `ρ⁰_t(ξ⁰)` of a walk-measurable claim, one value per
/// `F_t`-atom: the value of `ρ_t(ξ⁰)` on the surviving `G_t`-atom.
pub fn pre_default_risk(tree: &FiniteTreeModel, driver: &TreeDriver, xi0: &[f64], t: usize) -> Result<Vec<f64>> {
    if !is_walk_measurable(tree, xi0) {
        return Err(Error::Precondition("pre-default claim must be F_N-measurable".into()));
    }
    let risk = discrete_g_expectation(tree, driver, xi0)?;
    let part = tree.partition(Filtration::F, t);
    (0..part.n_atoms())
        .map(|a| {
            let g = tree
                .pre_default_atom(t, a)
                .ok_or_else(|| Error::ModelDegeneracy(format!("no surviving outcome in F-atom {a} at {t}")))?;
            Ok(risk.at(t, tree.partition(Filtration::G, t).members(g)[0]))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelevanceWitness {
    pub lambda: f64,
    /// `ρ₀(−λξ)`, positive.
    pub rho: f64,
}

/// Finds `λ > 0` with `ρ₀(−λξ) > 0` by doubling from `λ = 1`.
pub fn relevance_check(tree: &FiniteTreeModel, driver: &TreeDriver, xi: &[f64]) -> Result<RelevanceWitness> {
    check_terminal(tree, xi)?;
    if xi.iter().any(|&x| x < 0.0) {
        return Err(Error::Precondition("relevance needs ξ ≥ 0".into()));
    }
    if xi.iter().all(|&x| x == 0.0) {
        return Err(Error::Precondition("relevance is void for ξ = 0".into()));
    }
    let mut lambda = 1.0;
    for _ in 0..64 {
        let scaled: Vec<f64> = xi.iter().map(|x| -lambda * x).collect();
        let rho = discrete_g_expectation(tree, driver, &scaled)?.initial();
        if rho > 0.0 {
            return Ok(RelevanceWitness { lambda, rho });
        }
        lambda *= 2.0;
    }
    Err(Error::Numeric("doubling search found no relevance witness".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::tree::{Outcome, TreeSpec};

    fn coin() -> FiniteTreeModel {
        let o = |s: i8| Outcome { probability: 0.5, walk: vec![s], tau: None, mark: None };
        FiniteTreeModel::from_outcomes(1, 1, 1.0, vec![o(1), o(-1)]).unwrap()
    }

    #[test]
    fn zero_driver_is_expectation() {
        let tree = TreeSpec::default().build().unwrap();
        let xi: Vec<f64> = (0..tree.n_outcomes()).map(|w| (w as f64 * 0.37).sin()).collect();
        let risk = discrete_g_expectation(&tree, &TreeDriver::Zero, &xi).unwrap();
        let mean: f64 = tree.probabilities().iter().zip(&xi).map(|(p, x)| -p * x).sum();
        assert!((risk.initial() - mean).abs() < 1e-15);
    }

    #[test]
    fn one_period_certainty_equivalent() {
        let tree = coin();
        let (a, b) = (0.3, -1.1);
        let driver = TreeDriver::Entropic(RiskToleranceProfile::standard());
        let risk = discrete_g_expectation(&tree, &driver, &[a, b]).unwrap();
        let expected = (0.5 * ((-a as f64).exp() + (-b as f64).exp())).ln();
        assert!((risk.initial() - expected).abs() < 1e-15);
        assert_eq!(risk.slice(1), &[-a, -b]);
    }

    #[test]
    fn post_default_steps_use_default_tolerance() {
        let tree = TreeSpec::default().build().unwrap();
        let driver = TreeDriver::Entropic(RiskToleranceProfile::standard());
        let w = (0..tree.n_outcomes()).find(|&w| tree.outcome(w).tau == Some(1)).unwrap();
        let gamma = driver.step_tolerance(&tree, 1, w).unwrap();
        assert!((gamma - (1.0 - 0.9 * (-1.0f64 / 3.0).exp())).abs() < 1e-15);
        assert_eq!(driver.step_tolerance(&tree, 0, w), Some(1.0));
    }

    #[test]
    fn tilt_is_a_conditional_density() {
        let tree = TreeSpec::default().build().unwrap();
        let driver = TreeDriver::Entropic(RiskToleranceProfile::standard());
        let xi: Vec<f64> = (0..tree.n_outcomes()).map(|w| (w as f64).cos()).collect();
        let risk = discrete_g_expectation(&tree, &driver, &xi).unwrap();
        let p = tree.probabilities();
        for t in 0..=3 {
            let d = tilt(&tree, &driver, &risk, t);
            let weights: Vec<f64> = p.iter().zip(&d).map(|(a, b)| a * b).collect();
            let mass = tree.atom_mass(Filtration::G, t, &weights);
            let base = tree.atom_mass(Filtration::G, t, &p);
            for (m, b) in mass.iter().zip(&base) {
                assert!((m / b - 1.0).abs() < 1e-13);
            }
            // Jensen: the entropic value dominates the linear one
            let lin = tree.conditional_expectation(Filtration::G, t, &p, &xi.iter().map(|x| -x).collect::<Vec<_>>());
            for (r, l) in risk.atom_values(&tree, t).iter().zip(&lin) {
                assert!(r >= &(l - 1e-13));
            }
        }
    }

    #[test]
    fn relevance_witnesses() {
        let tree = TreeSpec::default().build().unwrap();
        let driver = TreeDriver::Entropic(RiskToleranceProfile::standard());
        let ones = vec![1.0; tree.n_outcomes()];
        let w = relevance_check(&tree, &driver, &ones).unwrap();
        assert_eq!(w.lambda, 1.0);
        assert!((w.rho - 1.0).abs() < 1e-14);
        let mut single = vec![0.0; tree.n_outcomes()];
        single[17] = 1.0;
        let w = relevance_check(&tree, &driver, &single).unwrap();
        let scaled: Vec<f64> = single.iter().map(|x| -w.lambda * x).collect();
        assert!(discrete_g_expectation(&tree, &driver, &scaled).unwrap().initial() > 0.0);
        assert!(relevance_check(&tree, &TreeDriver::Zero, &single).unwrap().lambda == 1.0);
        assert!(matches!(
            relevance_check(&tree, &driver, &vec![0.0; tree.n_outcomes()]),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn unsupported_preset() {
        assert!(matches!(
            TreeDriver::from_preset(&DriverPreset::LinearZ),
            Err(Error::Capability { .. })
        ));
    }
}
