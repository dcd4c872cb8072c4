//! Equivalent measures on the tree, their Azéma supermartingales, and the
//! split of `E_Q[−ξ | G_t]` into pre- and post-default parts.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{substream, StreamTag};

use super::tree::{Filtration, FiniteTreeModel};

/// `Q` given through its density `D = dQ/dP` over outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureChange {
    density: Vec<f64>,
}

impl MeasureChange {
    pub fn new(tree: &FiniteTreeModel, density: Vec<f64>) -> Result<Self> {
        if density.len() != tree.n_outcomes() {
            return Err(Error::IncompleteInput(format!(
                "density has {} values for {} outcomes",
                density.len(),
                tree.n_outcomes()
            )));
        }
        if density.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(Error::Domain("density must be finite and strictly positive".into()));
        }
        let mean: f64 = tree.probabilities().iter().zip(&density).map(|(p, d)| p * d).sum();
        if (mean - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("density has mean {mean}")));
        }
        Ok(Self { density })
    }

    pub fn identity(tree: &FiniteTreeModel) -> Self {
        Self { density: vec![1.0; tree.n_outcomes()] }
    }

    /// Normalizes positive weights `q(ω) ∝ Q(ω)` into a density.
    pub fn from_weights(tree: &FiniteTreeModel, q: &[f64]) -> Result<Self> {
        let total: f64 = q.iter().sum();
        let density = q.iter().zip(tree.probabilities()).map(|(x, p)| x / total / p).collect();
        Self::new(tree, density)
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// `Q(ω)` for every outcome.
    pub fn probabilities(&self, tree: &FiniteTreeModel) -> Vec<f64> {
        tree.probabilities().iter().zip(&self.density).map(|(p, d)| p * d).collect()
    }

    /// Whether `D` depends on the walk only.
    pub fn is_walk_measurable(&self, tree: &FiniteTreeModel) -> bool {
        let part = tree.partition(Filtration::F, tree.n_periods());
        (0..part.n_atoms()).all(|a| {
            let m = part.members(a);
            m.iter().all(|&w| (self.density[w] - self.density[m[0]]).abs() <= 1e-14 * self.density[m[0]])
        })
    }

    /// Whether `F` stays immersed in `G` under `Q`.
    pub fn is_immersion_preserving(&self, tree: &FiniteTreeModel) -> bool {
        tree.is_immersed_under(&self.probabilities(tree))
    }

    /// The measure equal to `P` on `G_t` and to `Q` conditionally on each
    /// `G_t`-atom, with density `D / E[D | G_t]`.
    pub fn anchored_at(&self, tree: &FiniteTreeModel, t: usize) -> Self {
        let p = tree.probabilities();
        let cond = tree.conditional_expectation(Filtration::G, t, &p, &self.density);
        let part = tree.partition(Filtration::G, t);
        let density = (0..tree.n_outcomes()).map(|w| self.density[w] / cond[part.label(w)]).collect();
        Self { density }
    }

    /// `E[D | F_N]` per outcome, the density of `Q⁰` on the walk.
    pub fn walk_density(&self, tree: &FiniteTreeModel) -> Vec<f64> {
        let n = tree.n_periods();
        let cond = tree.conditional_expectation(Filtration::F, n, &tree.probabilities(), &self.density);
        let part = tree.partition(Filtration::F, n);
        (0..tree.n_outcomes()).map(|w| cond[part.label(w)]).collect()
    }

    /// `Z^Q_t = Q(t < τ | F_t)` per `F_t`-atom.
    pub fn azema(&self, tree: &FiniteTreeModel, t: usize) -> Vec<f64> {
        let alive: Vec<f64> = tree
            .outcomes()
            .iter()
            .map(|o| if o.defaulted_by(t) { 0.0 } else { 1.0 })
            .collect();
        tree.conditional_expectation(Filtration::F, t, &self.probabilities(tree), &alive)
    }

    /// `k_t(Q) = (Z^Q/Z^P − 1) 1{Z^Q ≥ Z^P} + 1` per `F_t`-atom.
    pub fn k_factor(&self, tree: &FiniteTreeModel, t: usize) -> Vec<f64> {
        self.azema(tree, t)
            .iter()
            .zip(tree.azema(t))
            .map(|(q, p)| {
                let r = q / p;
                if r >= 1.0 { r } else { 1.0 }
            })
            .collect()
    }
}

/// Which parts of the model a sampled measure perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Perturbation {
    /// Walk transitions, default hazards and the mark law.
    Full,
    /// Walk transitions only, giving an `F_N`-measurable density.
    WalkOnly,
}

/// Draws an immersion-preserving measure: walk transitions tilted by
/// `e^{ε}` and default hazards shifted by `ε` on the logit scale, with every
/// `ε ~ U[−strength, strength]` drawn per tree node. Hazards at epoch `s`
/// depend on the walk up to `s` only, so immersion carries over from `P`.
pub fn sample_measure(
    tree: &FiniteTreeModel,
    seed: u64,
    index: u64,
    strength: f64,
    kind: Perturbation,
) -> Result<MeasureChange> {
    if !(strength >= 0.0) {
        return Err(Error::InvalidConfig(format!("perturbation strength {strength} is negative")));
    }
    if !tree.is_immersed() {
        return Err(Error::Precondition("sampler needs a reference measure with immersion".into()));
    }
    let mut rng = substream(seed, StreamTag::TreeMeasure, index);
    let mut draw = || if strength > 0.0 { rng.random_range(-strength..=strength) } else { 0.0 };
    let n = tree.n_periods();
    let p = tree.probabilities();
    let mut density = vec![1.0; tree.n_outcomes()];

    for t in 0..n {
        let parent = tree.partition(Filtration::F, t);
        let child = tree.partition(Filtration::F, t + 1);
        let child_mass = tree.atom_mass(Filtration::F, t + 1, &p);
        for a in 0..parent.n_atoms() {
            let mut kids: Vec<usize> = parent.members(a).iter().map(|&w| child.label(w)).collect();
            kids.sort_unstable();
            kids.dedup();
            let tilts: Vec<f64> = kids.iter().map(|_| draw().exp()).collect();
            let mass: f64 = kids.iter().map(|&c| child_mass[c]).sum();
            let norm: f64 = kids.iter().zip(&tilts).map(|(&c, e)| child_mass[c] / mass * e).sum();
            for (&c, e) in kids.iter().zip(&tilts) {
                for &w in child.members(c) {
                    density[w] *= e / norm;
                }
            }
        }
    }

    if kind == Perturbation::Full {
        let epochs = tree.epochs();
        let n_marks = tree.n_marks();
        for &s in &epochs {
            let part = tree.partition(Filtration::F, s);
            for b in 0..part.n_atoms() {
                let hit: Vec<f64> = (0..n_marks).map(|e| tree.density(s, b, Some(s), Some(e))).collect();
                let hit_total: f64 = hit.iter().sum();
                let at_risk: f64 = part
                    .members(b)
                    .iter()
                    .filter(|&&w| !tree.outcome(w).defaulted_by(s - 1))
                    .map(|&w| p[w])
                    .sum::<f64>()
                    / part.members(b).iter().map(|&w| p[w]).sum::<f64>();
                let h = hit_total / at_risk;
                let shift = draw();
                let mark_tilts: Vec<f64> = (0..n_marks).map(|_| draw().exp()).collect();
                if !(h > 0.0 && h < 1.0) {
                    continue;
                }
                let h_new = 1.0 / (1.0 + (1.0 - h) / h * (-shift).exp());
                let pi: Vec<f64> = hit.iter().map(|x| x / hit_total).collect();
                let pi_norm: f64 = pi.iter().zip(&mark_tilts).map(|(a, b)| a * b).sum();
                for &w in part.members(b) {
                    let o = tree.outcome(w);
                    match o.tau {
                        Some(tau) if tau == s => {
                            let e = o.mark.expect("defaulted outcome carries a mark");
                            density[w] *= h_new / h * mark_tilts[e] / pi_norm;
                        }
                        Some(tau) if tau < s => {}
                        _ => density[w] *= (1.0 - h_new) / (1.0 - h),
                    }
                }
            }
        }
    }

    let mean: f64 = p.iter().zip(&density).map(|(a, b)| a * b).sum();
    density.iter_mut().for_each(|d| *d /= mean);
    MeasureChange::new(tree, density)
}

/// `E_Q[−ξ | G_t]` written as `Φ⁰ 1{t<τ} + Φ¹(τ, ζ) 1{t≥τ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub t: usize,
    /// `Φ⁰` per `F_t`-atom.
    pub phi0: Vec<f64>,
    /// `Φ⁰` or `Φ¹` on each `G_t`-atom, whichever branch the atom is on.
    pub by_atom: Vec<f64>,
    /// `E_Q[−ξ | G_t]` from Bayes' formula on each `G_t`-atom.
    pub direct: Vec<f64>,
    pub max_discrepancy: f64,
}

/// Evaluates `Φ⁰` and `Φ¹` through the conditional density `γ` and the
/// Azéma supermartingale, using the density of `Q` anchored at `t` so that
/// `Q = P` on `G_t`, and compares with the direct conditional expectation.
pub fn decompose_conditional_expectation(
    tree: &FiniteTreeModel,
    q: &MeasureChange,
    xi: &[f64],
    t: usize,
) -> Result<Decomposition> {
    if xi.len() != tree.n_outcomes() {
        return Err(Error::IncompleteInput("claim does not cover every outcome".into()));
    }
    if t > tree.n_periods() {
        return Err(Error::InvalidConfig(format!("time {t} beyond the tree horizon")));
    }
    let n = tree.n_periods();
    let p = tree.probabilities();
    let d = q.anchored_at(tree, t).density;
    let azema = tree.azema(t);
    let f_t = tree.partition(Filtration::F, t);
    let f_n = tree.partition(Filtration::F, n);
    let g_t = tree.partition(Filtration::G, t);
    let f_n_mass = tree.atom_mass(Filtration::F, n, &p);
    let f_t_mass = tree.atom_mass(Filtration::F, t, &p);

    // E[Σ_{(θ,e)} (−ξ D)(θ,e) γ_N(θ,e) · 1{θ ∈ branch} | F_t] over the F_N-atoms of a
    let integrate = |a: usize, keep: &dyn Fn(Option<usize>, Option<usize>) -> bool| -> f64 {
        let mut leaves: Vec<usize> = f_t.members(a).iter().map(|&w| f_n.label(w)).collect();
        leaves.sort_unstable();
        leaves.dedup();
        leaves
            .iter()
            .map(|&f| {
                let inner: f64 = f_n
                    .members(f)
                    .iter()
                    .filter(|&&w| keep(tree.outcome(w).tau, tree.outcome(w).mark))
                    .map(|&w| {
                        let gamma_n = p[w] / f_n_mass[f];
                        -xi[w] * d[w] * gamma_n
                    })
                    .sum();
                f_n_mass[f] / f_t_mass[a] * inner
            })
            .sum()
    };

    let mut phi0 = vec![0.0; f_t.n_atoms()];
    for (a, slot) in phi0.iter_mut().enumerate() {
        if azema[a] <= 0.0 {
            return Err(Error::ModelDegeneracy(format!("zero Azéma value on F-atom {a} at {t}")));
        }
        *slot = integrate(a, &|tau, _| tau.is_none_or(|s| s > t)) / azema[a];
    }

    let q_weights: Vec<f64> = p.iter().zip(&d).map(|(a, b)| a * b).collect();
    let minus_xi: Vec<f64> = xi.iter().map(|x| -x).collect();
    let direct = tree.conditional_expectation(Filtration::G, t, &q_weights, &minus_xi);

    let mut by_atom = vec![0.0; g_t.n_atoms()];
    let mut max_discrepancy: f64 = 0.0;
    for (g, slot) in by_atom.iter_mut().enumerate() {
        let rep = tree.outcome(g_t.members(g)[0]);
        let a = f_t.label(g_t.members(g)[0]);
        *slot = if rep.defaulted_by(t) {
            let (theta, mark) = (rep.tau, rep.mark);
            let gamma_t = tree.density(t, a, theta, mark);
            integrate(a, &|tau, e| tau == theta && e == mark) / gamma_t
        } else {
            phi0[a]
        };
        max_discrepancy = max_discrepancy.max((*slot - direct[g]).abs());
    }
    Ok(Decomposition { t, phi0, by_atom, direct, max_discrepancy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::tree::TreeSpec;

    fn tree() -> FiniteTreeModel {
        TreeSpec::default().build().unwrap()
    }

    #[test]
    fn sampled_measures_preserve_immersion() {
        let tree = tree();
        for i in 0..20 {
            let q = sample_measure(&tree, 5, i, 0.6, Perturbation::Full).unwrap();
            assert!(q.is_immersion_preserving(&tree), "sample {i}");
            assert!(!q.is_walk_measurable(&tree));
            let w = sample_measure(&tree, 5, i, 0.6, Perturbation::WalkOnly).unwrap();
            assert!(w.is_walk_measurable(&tree));
            assert!(w.is_immersion_preserving(&tree));
        }
    }

    #[test]
    fn zero_strength_is_identity() {
        let tree = tree();
        let q = sample_measure(&tree, 1, 0, 0.0, Perturbation::Full).unwrap();
        assert!(q.density().iter().all(|d| (d - 1.0).abs() < 1e-14));
    }

    #[test]
    fn anchoring_restores_reference_on_g_t() {
        let tree = tree();
        let q = sample_measure(&tree, 2, 3, 0.6, Perturbation::Full).unwrap();
        for t in 0..=3 {
            let anchored = q.anchored_at(&tree, t);
            let mass_q = tree.atom_mass(Filtration::G, t, &anchored.probabilities(&tree));
            let mass_p = tree.atom_mass(Filtration::G, t, &tree.probabilities());
            for (a, b) in mass_q.iter().zip(&mass_p) {
                assert!((a - b).abs() < 1e-15);
            }
            assert!(anchored.k_factor(&tree, t).iter().all(|&k| (k - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn walk_densities_leave_survival_unchanged() {
        let tree = tree();
        for i in 0..5 {
            let q = sample_measure(&tree, 9, i, 0.8, Perturbation::WalkOnly).unwrap();
            for t in 0..=3 {
                for k in q.k_factor(&tree, t) {
                    assert!((k - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn decomposition_matches_bayes() {
        let tree = tree();
        for i in 0..10 {
            let q = sample_measure(&tree, 4, i, 0.7, Perturbation::Full).unwrap();
            let xi: Vec<f64> = (0..tree.n_outcomes()).map(|w| ((w * 7 + i as usize) as f64).sin()).collect();
            for t in 0..=3 {
                let d = decompose_conditional_expectation(&tree, &q, &xi, t).unwrap();
                assert!(d.max_discrepancy < 1e-12, "t={t} {}", d.max_discrepancy);
            }
        }
    }

    #[test]
    fn decomposition_trivial_cases() {
        let tree = tree();
        let p = MeasureChange::identity(&tree);
        // walk-measurable claim under P: Φ⁰ is the F-conditional mean
        let xi: Vec<f64> = tree.outcomes().iter().map(|o| o.walk_value(3) as f64).collect();
        let d = decompose_conditional_expectation(&tree, &p, &xi, 1).unwrap();
        let minus: Vec<f64> = xi.iter().map(|x| -x).collect();
        let f_mean = tree.conditional_expectation(Filtration::F, 1, &tree.probabilities(), &minus);
        for (a, b) in d.phi0.iter().zip(&f_mean) {
            assert!((a - b).abs() < 1e-15);
        }
        let d = decompose_conditional_expectation(&tree, &p, &xi, 3).unwrap();
        for (g, v) in d.by_atom.iter().enumerate() {
            let w = tree.partition(Filtration::G, 3).members(g)[0];
            assert!((v + xi[w]).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_densities() {
        let tree = tree();
        assert!(MeasureChange::new(&tree, vec![1.0; 3]).is_err());
        let mut d = vec![1.0; tree.n_outcomes()];
        d[0] = 0.0;
        assert!(MeasureChange::new(&tree, d).is_err());
        assert!(MeasureChange::new(&tree, vec![2.0; tree.n_outcomes()]).is_err());
    }
}
