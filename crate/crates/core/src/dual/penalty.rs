//! Penalty terms of the entropic tree risk measure.
//!
//! The closed form is the chain rule for relative entropy: on an atom `B` at
//! epoch `s`,
//!
//! ```text
//! α_s(B) = γ̃(B) KL(Q(·|B) ‖ P(·|B)) + Σ_C Q(C|B) α_{s+1}(C)
//! ```
//!
//! over the children `C` of `B`. The oracle maximizes
//! `E_Q[−ξ | A] − ρ_t(ξ)(A)` over claims directly and bounds it from below.

use argmin::core::{CostFunction, Executor, Gradient, IterState, OptimizationResult, State};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::BFGS;

use crate::entropic::RiskToleranceProfile;
use crate::error::{Error, Result};

use super::gexp::{g_expectation, tilt, TreeDriver};
use super::measure::MeasureChange;
use super::tree::{Filtration, FiniteTreeModel};

/// Box for the claims searched by the oracle.
pub const PENALTY_BOX: f64 = 10.0;
/// Largest accepted excess of the closed form over the oracle.
const STEP_BOUNDS: [f64; 3] = [10.0, 1.0, 0.1];
pub const ORACLE_GAP: f64 = 1e-6;

fn children(tree: &FiniteTreeModel, filtration: Filtration, s: usize, atom: usize) -> Vec<usize> {
    let next = tree.partition(filtration, s + 1);
    let mut kids: Vec<usize> = tree
        .partition(filtration, s)
        .members(atom)
        .iter()
        .map(|&w| next.label(w))
        .collect();
    kids.sort_unstable();
    kids.dedup();
    kids
}

/// Closed-form `α_t(Q)` per atom of `filtration` at `t` (`G` or `H`).
pub fn entropic_penalty_closed(
    tree: &FiniteTreeModel,
    filtration: Filtration,
    q: &MeasureChange,
    t: usize,
    profile: &RiskToleranceProfile,
) -> Result<Vec<f64>> {
    if filtration == Filtration::F {
        return Err(Error::Capability {
            engine: "tree".into(),
            what: "give a closed-form penalty on the walk filtration".into(),
        });
    }
    let driver = TreeDriver::Entropic(*profile);
    let p = tree.probabilities();
    let qp = q.probabilities(tree);
    let mut alpha = vec![0.0; tree.n_outcomes()];
    for s in (t..tree.n_periods()).rev() {
        let part = tree.partition(filtration, s);
        let next = tree.partition(filtration, s + 1);
        let (p_s, q_s) = (tree.atom_mass(filtration, s, &p), tree.atom_mass(filtration, s, &qp));
        let (p_n, q_n) = (tree.atom_mass(filtration, s + 1, &p), tree.atom_mass(filtration, s + 1, &qp));
        let mut current = vec![0.0; tree.n_outcomes()];
        for b in 0..part.n_atoms() {
            let gamma = driver.step_tolerance(tree, s, part.members(b)[0]).expect("entropic driver");
            let value: f64 = children(tree, filtration, s, b)
                .into_iter()
                .map(|c| {
                    let qc = q_n[c] / q_s[b];
                    let pc = p_n[c] / p_s[b];
                    qc * (gamma * (qc / pc).ln() + alpha[next.members(c)[0]])
                })
                .sum();
            for &w in part.members(b) {
                current[w] = value;
            }
        }
        alpha = current;
    }
    let part = tree.partition(filtration, t);
    Ok((0..part.n_atoms()).map(|a| alpha[part.members(a)[0]]).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Best objective found, a lower bound for the penalty.
    pub value: f64,
    /// Maximizing claim values per group, centered under the target measure.
    pub argmax: Vec<f64>,
    pub iterations: u64,
}

/// `−(E_target[−x] − ρ_t(ξ(x))(A))`, where `ξ(x)` puts `x_j` on group `j`.
#[derive(Clone)]
struct Objective<'a> {
    tree: &'a FiniteTreeModel,
    driver: TreeDriver,
    filtration: Filtration,
    t: usize,
    atom: usize,
    groups: &'a [Vec<usize>],
    target: &'a [f64],
}

impl Objective<'_> {
    // the cost is invariant under constant shifts, so the claim is centred
    fn claim(&self, x: &[f64]) -> Vec<f64> {
        let centre: f64 = self.target.iter().zip(x).map(|(w, v)| w * v).sum();
        let mut xi = vec![0.0; self.tree.n_outcomes()];
        for (g, &v) in self.groups.iter().zip(x) {
            for &w in g {
                xi[w] = v - centre;
            }
        }
        xi
    }

    fn rep(&self) -> usize {
        self.tree.partition(self.filtration, self.t).members(self.atom)[0]
    }
}

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let risk = g_expectation(self.tree, self.filtration, &self.driver, &self.claim(x))?;
        Ok(risk.at(self.t, self.rep()))
    }
}

impl Gradient for Objective<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, x: &Self::Param) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        let risk = g_expectation(self.tree, self.filtration, &self.driver, &self.claim(x))?;
        let d = tilt(self.tree, &self.driver, &risk, self.t);
        let part = self.tree.partition(self.filtration, self.t);
        let p = self.tree.probabilities();
        let mass: f64 = part.members(self.atom).iter().map(|&w| p[w]).sum();
        let inside = |w: usize| part.label(w) == self.atom;
        Ok(self
            .groups
            .iter()
            .zip(self.target)
            .map(|(g, &w_j)| {
                let q_star: f64 = g.iter().filter(|&&w| inside(w)).map(|&w| p[w] * d[w] / mass).sum();
                w_j - q_star
            })
            .collect())
    }
}

type Bfgs = BFGS<MoreThuenteLineSearch<Vec<f64>, Vec<f64>, f64>, f64>;
type BfgsState = IterState<Vec<f64>, Vec<f64>, (), Vec<Vec<f64>>, (), f64>;

fn ascend(
    tree: &FiniteTreeModel,
    profile: &RiskToleranceProfile,
    filtration: Filtration,
    t: usize,
    atom: usize,
    groups: &[Vec<usize>],
    target: &[f64],
) -> Result<OracleResult> {
    let objective = Objective {
        tree,
        driver: TreeDriver::Entropic(*profile),
        filtration,
        t,
        atom,
        groups,
        target,
    };
    let dim = groups.len();
    let start = vec![0.0; dim];
    let g0 = objective.gradient(&start).map_err(|e| Error::Numeric(e.to_string()))?;
    if g0.iter().all(|g| g.abs() < 1e-14) {
        let value = -objective.cost(&start).map_err(|e| Error::Numeric(e.to_string()))?;
        return Ok(OracleResult { value, argmax: start, iterations: 0 });
    }
    let mut last = None;
    for max_step in STEP_BOUNDS {
        match run_bfgs(&objective, &start, max_step) {
            Ok(r) => return finish(r, target),
            Err(e) => last = Some(e),
        }
    }
    Err(Error::Numeric(format!("penalty ascent failed: {}", last.unwrap())))
}

fn run_bfgs<'a>(
    objective: &Objective<'a>,
    start: &[f64],
    max_step: f64,
) -> std::result::Result<OptimizationResult<Objective<'a>, Bfgs, BfgsState>, argmin::core::Error> {
    let dim = start.len();
    let identity: Vec<Vec<f64>> = (0..dim)
        .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    // unbounded extrapolation overflows the tilts on measures far from P
    let line_search = MoreThuenteLineSearch::new().with_bounds(f64::EPSILON.sqrt(), max_step)?;
    let solver = BFGS::new(line_search).with_tolerance_grad(1e-10)?;
    Executor::new(objective.clone(), solver)
        .configure(|state| state.param(start.to_vec()).inv_hessian(identity).max_iters(500))
        .run()
}

fn finish(result: OptimizationResult<Objective<'_>, Bfgs, BfgsState>, target: &[f64]) -> Result<OracleResult> {
    let state = result.state();
    let best = state
        .get_best_param()
        .cloned()
        .ok_or_else(|| Error::Numeric("penalty ascent produced no iterate".into()))?;
    let centre: f64 = target.iter().zip(&best).map(|(w, v)| w * v).sum();
    let argmax: Vec<f64> = best.iter().map(|v| v - centre).collect();
    if argmax.iter().any(|v| v.abs() > PENALTY_BOX) {
        return Err(Error::Numeric(format!("penalty maximizer leaves the box ±{PENALTY_BOX}")));
    }
    Ok(OracleResult { value: -state.get_best_cost(), argmax, iterations: state.get_iter() })
}

/// Oracle for `α_t(Q)` on one atom of `G` or `H`, searching over claims that
/// are arbitrary on the outcomes of the atom.
pub fn penalty_oracle(
    tree: &FiniteTreeModel,
    filtration: Filtration,
    q: &MeasureChange,
    t: usize,
    atom: usize,
    profile: &RiskToleranceProfile,
) -> Result<OracleResult> {
    let members = tree.partition(filtration, t).members(atom);
    let qp = q.probabilities(tree);
    let mass: f64 = members.iter().map(|&w| qp[w]).sum();
    let groups: Vec<Vec<usize>> = members.iter().map(|&w| vec![w]).collect();
    let target: Vec<f64> = members.iter().map(|&w| qp[w] / mass).collect();
    ascend(tree, profile, filtration, t, atom, &groups, &target)
}

/// Oracle for the pre-default penalty `α⁰_t(Q⁰)` on the `F_t`-atom `a`:
/// the supremum of `E_{Q⁰}[−ξ⁰ | F_t] − ρ⁰_t(ξ⁰)` over walk-measurable claims.
pub fn pre_default_penalty_oracle(
    tree: &FiniteTreeModel,
    q: &MeasureChange,
    t: usize,
    a: usize,
    profile: &RiskToleranceProfile,
) -> Result<OracleResult> {
    let n = tree.n_periods();
    let g_atom = tree
        .pre_default_atom(t, a)
        .ok_or_else(|| Error::ModelDegeneracy(format!("no surviving outcome in F-atom {a} at {t}")))?;
    let f_n = tree.partition(Filtration::F, n);
    let mut leaves: Vec<usize> = tree
        .partition(Filtration::F, t)
        .members(a)
        .iter()
        .map(|&w| f_n.label(w))
        .collect();
    leaves.sort_unstable();
    leaves.dedup();
    let groups: Vec<Vec<usize>> = leaves.iter().map(|&f| f_n.members(f).to_vec()).collect();
    let qp = q.probabilities(tree);
    let mass: Vec<f64> = groups.iter().map(|g| g.iter().map(|&w| qp[w]).sum()).collect();
    let total: f64 = mass.iter().sum();
    let target: Vec<f64> = mass.iter().map(|m| m / total).collect();
    ascend(tree, profile, Filtration::G, t, g_atom, &groups, &target)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyComparison {
    pub closed: Vec<f64>,
    pub oracle: Vec<f64>,
    /// `max |closed − oracle|` over atoms.
    pub max_gap: f64,
}

/// `α_t(Q)` per `G_t`-atom, closed form checked against the oracle.
pub fn entropic_penalty(
    tree: &FiniteTreeModel,
    q: &MeasureChange,
    t: usize,
    profile: &RiskToleranceProfile,
) -> Result<PenaltyComparison> {
    let closed = entropic_penalty_closed(tree, Filtration::G, q, t, profile)?;
    let mut oracle = Vec::with_capacity(closed.len());
    let mut max_gap: f64 = 0.0;
    for (atom, &c) in closed.iter().enumerate() {
        let o = penalty_oracle(tree, Filtration::G, q, t, atom, profile)?.value;
        if o > c + 1e-9 || c > o + ORACLE_GAP {
            return Err(Error::Numeric(format!(
                "penalty on atom {atom} at {t}: closed form {c} vs oracle {o}"
            )));
        }
        max_gap = max_gap.max((c - o).abs());
        oracle.push(o);
    }
    Ok(PenaltyComparison { closed, oracle, max_gap })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomCheck {
    /// `G_t`-atom.
    pub atom: usize,
    pub pre_default: bool,
    pub alpha: f64,
    /// `k_t(Q)`; 1 on post-default atoms.
    pub k: f64,
    /// `α⁰_t(Q⁰)` before default, `α¹_t(Q¹)` after.
    pub branch_alpha: f64,
    /// `α − k α⁰` before default, `α − α¹` after.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyInequalityReport {
    pub t: usize,
    pub atoms: Vec<AtomCheck>,
    /// Smallest slack over pre-default atoms, `+∞` if there are none.
    pub min_pre_slack: f64,
    /// Largest `|α − α¹|` over post-default atoms, 0 if there are none.
    pub max_post_defect: f64,
    /// Pre-default atoms where the inequality is strict beyond `1e−9`.
    pub strict_atoms: usize,
}

/// Checks `α_t(Q) ≥ k_t(Q) α⁰_t(Q⁰)` before default and `α_t(Q) = α¹_t(Q¹)`
/// after, atom by atom. `α` is the closed form on `G`; `α⁰` and `α¹` come
/// from the oracle on walk-measurable and `H`-measurable claims.
pub fn penalty_inequality_check(
    tree: &FiniteTreeModel,
    q: &MeasureChange,
    t: usize,
    profile: &RiskToleranceProfile,
) -> Result<PenaltyInequalityReport> {
    if !q.is_immersion_preserving(tree) {
        return Err(Error::Precondition("Q does not preserve immersion".into()));
    }
    let alpha = entropic_penalty_closed(tree, Filtration::G, q, t, profile)?;
    let k = q.k_factor(tree, t);
    let g = tree.partition(Filtration::G, t);
    let h = tree.partition(Filtration::H, t);
    let mut atoms = Vec::with_capacity(g.n_atoms());
    for (atom, &a_val) in alpha.iter().enumerate() {
        let rep = g.members(atom)[0];
        let f_atom = tree.partition(Filtration::F, t).label(rep);
        let check = if tree.outcome(rep).defaulted_by(t) {
            let alpha1 = penalty_oracle(tree, Filtration::H, q, t, h.label(rep), profile)?.value;
            AtomCheck { atom, pre_default: false, alpha: a_val, k: 1.0, branch_alpha: alpha1, slack: a_val - alpha1 }
        } else {
            let alpha0 = pre_default_penalty_oracle(tree, q, t, f_atom, profile)?.value;
            let kf = k[f_atom];
            AtomCheck { atom, pre_default: true, alpha: a_val, k: kf, branch_alpha: alpha0, slack: a_val - kf * alpha0 }
        };
        atoms.push(check);
    }
    let min_pre_slack = atoms.iter().filter(|c| c.pre_default).map(|c| c.slack).fold(f64::INFINITY, f64::min);
    let max_post_defect = atoms.iter().filter(|c| !c.pre_default).map(|c| c.slack.abs()).fold(0.0, f64::max);
    let strict_atoms = atoms.iter().filter(|c| c.pre_default && c.slack > 1e-9).count();
    Ok(PenaltyInequalityReport { t, atoms, min_pre_slack, max_post_defect, strict_atoms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::measure::{sample_measure, Perturbation};
    use crate::dual::tree::{Outcome, TreeSpec};

    fn profile() -> RiskToleranceProfile {
        RiskToleranceProfile::standard()
    }

    #[test]
    fn reference_measure_has_no_penalty() {
        let tree = TreeSpec::default().build().unwrap();
        let p = MeasureChange::identity(&tree);
        for t in 0..=3 {
            let cmp = entropic_penalty(&tree, &p, t, &profile()).unwrap();
            assert!(cmp.closed.iter().all(|&a| a.abs() < 1e-15));
            assert!(cmp.oracle.iter().all(|&a| a.abs() < 1e-12));
        }
    }

    #[test]
    fn one_period_relative_entropy() {
        let o = |s: i8| Outcome { probability: 0.5, walk: vec![s], tau: None, mark: None };
        let tree = FiniteTreeModel::from_outcomes(1, 1, 1.0, vec![o(1), o(-1)]).unwrap();
        let qv = 0.8;
        let q = MeasureChange::from_weights(&tree, &[qv, 1.0 - qv]).unwrap();
        let expected = qv * (2.0 * qv).ln() + (1.0 - qv) * (2.0 * (1.0 - qv)).ln();
        let cmp = entropic_penalty(&tree, &q, 0, &profile()).unwrap();
        assert!((cmp.closed[0] - expected).abs() < 1e-15);
        assert!((cmp.oracle[0] - expected).abs() < 1e-10);
    }

    #[test]
    fn terminal_penalty_vanishes() {
        let tree = TreeSpec::default().build().unwrap();
        let q = sample_measure(&tree, 3, 0, 0.5, Perturbation::Full).unwrap();
        let cmp = entropic_penalty(&tree, &q, 3, &profile()).unwrap();
        assert!(cmp.closed.iter().chain(&cmp.oracle).all(|a| a.abs() < 1e-15));
    }

    #[test]
    fn closed_form_agrees_with_oracle() {
        let tree = TreeSpec::default().build().unwrap();
        for i in 0..4 {
            let q = sample_measure(&tree, 11, i, 0.6, Perturbation::Full).unwrap();
            for t in 0..3 {
                let cmp = entropic_penalty(&tree, &q, t, &profile()).unwrap();
                assert!(cmp.max_gap < ORACLE_GAP, "t={t}: {}", cmp.max_gap);
                let h_closed = entropic_penalty_closed(&tree, Filtration::H, &q, t, &profile()).unwrap();
                for (atom, c) in h_closed.iter().enumerate() {
                    let o = penalty_oracle(&tree, Filtration::H, &q, t, atom, &profile()).unwrap();
                    assert!((c - o.value).abs() < ORACLE_GAP);
                }
            }
        }
    }

    #[test]
    fn inequality_on_anchored_measures() {
        let tree = TreeSpec::default().build().unwrap();
        for i in 0..4 {
            let q = sample_measure(&tree, 12, i, 0.6, Perturbation::Full).unwrap();
            for t in 0..=3 {
                let report = penalty_inequality_check(&tree, &q.anchored_at(&tree, t), t, &profile()).unwrap();
                assert!(report.min_pre_slack >= -1e-10, "t={t}: {}", report.min_pre_slack);
                assert!(report.max_post_defect <= 1e-10, "t={t}: {}", report.max_post_defect);
            }
        }
    }

    #[test]
    fn non_immersed_measure_is_rejected() {
        let tree = TreeSpec::default().build().unwrap();
        let q: Vec<f64> = tree
            .outcomes()
            .iter()
            .map(|o| o.probability * if o.tau == Some(1) && o.walk[2] > 0 { 1.5 } else { 1.0 })
            .collect();
        let q = MeasureChange::from_weights(&tree, &q).unwrap();
        assert!(matches!(
            penalty_inequality_check(&tree, &q, 1, &profile()),
            Err(Error::Precondition(_))
        ));
    }
}
