//! Finite probability space carrying a walk filtration `F`, its progressive
//! enlargement `G` by a default time and mark, and the initially enlarged
//! filtration `H`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::hash::Hash;

use crate::error::{Error, Result};

const PROBABILITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Filtration {
    /// The walk alone.
    F,
    /// The walk plus default information as it arrives.
    G,
    /// The walk plus `(τ, ζ)` from time 0.
    H,
}

/// One elementary outcome: a walk path, a default epoch (or none within the
/// horizon) and the mark drawn at default.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub probability: f64,
    pub walk: Vec<i8>,
    pub tau: Option<usize>,
    pub mark: Option<usize>,
}

impl Outcome {
    /// Walk value `S_t`.
    pub fn walk_value(&self, t: usize) -> i64 {
        self.walk[..t].iter().map(|&s| s as i64).sum()
    }

    pub fn defaulted_by(&self, t: usize) -> bool {
        self.tau.is_some_and(|s| s <= t)
    }
}

/// Atoms of one σ-algebra, as a label per outcome plus the member lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    labels: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl Partition {
    fn from_keys<K: Eq + Hash>(keys: impl IntoIterator<Item = K>) -> Self {
        let mut ids: HashMap<K, usize> = HashMap::new();
        let mut labels = Vec::new();
        let mut members: Vec<Vec<usize>> = Vec::new();
        for (omega, key) in keys.into_iter().enumerate() {
            let next = ids.len();
            let id = *ids.entry(key).or_insert(next);
            if id == members.len() {
                members.push(Vec::new());
            }
            members[id].push(omega);
            labels.push(id);
        }
        Self { labels, members }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, omega: usize) -> usize {
        self.labels[omega]
    }

    pub fn n_atoms(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self, atom: usize) -> &[usize] {
        &self.members[atom]
    }

    /// True when every atom of `self` lies inside one atom of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        self.members
            .iter()
            .all(|m| m.iter().all(|&w| coarser.labels[w] == coarser.labels[m[0]]))
    }
}

/// Parameters of the default tree: a binary walk with a discrete Cox default,
/// hazard `1 − exp(−κ e^{−S/2})` at each default epoch and a mark law tilted
/// by the walk level.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeSpec {
    pub n_periods: usize,
    pub p_up: f64,
    pub default_epochs: Vec<usize>,
    pub n_marks: usize,
    pub kappa: f64,
    pub maturity: f64,
}

impl Default for TreeSpec {
    fn default() -> Self {
        Self {
            n_periods: 3,
            p_up: 0.5,
            default_epochs: vec![1, 2],
            n_marks: 2,
            kappa: 0.3,
            maturity: 1.0,
        }
    }
}

impl TreeSpec {
    pub fn hazard(&self, level: i64) -> f64 {
        1.0 - (-self.kappa * (-0.5 * level as f64).exp()).exp()
    }

    pub fn mark_law(&self, level: i64) -> Vec<f64> {
        let tilt = (level as f64).tanh();
        let w: Vec<f64> = (0..self.n_marks).map(|e| (0.4 * e as f64 * tilt).exp()).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }

    pub fn build(&self) -> Result<FiniteTreeModel> {
        let n = self.n_periods;
        if n == 0 || n > 16 {
            return Err(Error::InvalidConfig(format!("tree needs 1..=16 periods, got {n}")));
        }
        if !(self.p_up > 0.0 && self.p_up < 1.0) {
            return Err(Error::InvalidConfig(format!("p_up = {} outside (0, 1)", self.p_up)));
        }
        if self.n_marks == 0 || !(self.kappa > 0.0) || !(self.maturity > 0.0) {
            return Err(Error::InvalidConfig("tree needs marks ≥ 1, κ > 0 and T > 0".into()));
        }
        let mut epochs = self.default_epochs.clone();
        epochs.sort_unstable();
        epochs.dedup();
        if epochs.iter().any(|&s| s == 0 || s > n) {
            return Err(Error::InvalidConfig(format!("default epochs must lie in 1..={n}")));
        }

        let mut outcomes = Vec::new();
        for code in 0..(1usize << n) {
            let walk: Vec<i8> = (0..n).map(|i| if code >> (n - 1 - i) & 1 == 0 { 1 } else { -1 }).collect();
            let p_walk: f64 = walk.iter().map(|&s| if s > 0 { self.p_up } else { 1.0 - self.p_up }).product();
            let level = |t: usize| walk[..t].iter().map(|&s| s as i64).sum::<i64>();
            let mut alive = 1.0;
            for &s in &epochs {
                let h = self.hazard(level(s));
                for (e, pe) in self.mark_law(level(s)).into_iter().enumerate() {
                    outcomes.push(Outcome {
                        probability: p_walk * alive * h * pe,
                        walk: walk.clone(),
                        tau: Some(s),
                        mark: Some(e),
                    });
                }
                alive *= 1.0 - h;
            }
            outcomes.push(Outcome { probability: p_walk * alive, walk, tau: None, mark: None });
        }
        FiniteTreeModel::from_outcomes(n, self.n_marks, self.maturity / n as f64, outcomes)
    }
}

/// Explicit finite model. Times are `0, 1, …, N`; `τ = None` means no
/// default up to `N`.
#[derive(Debug, Clone)]
pub struct FiniteTreeModel {
    n_periods: usize,
    n_marks: usize,
    period_length: f64,
    outcomes: Vec<Outcome>,
    f: Vec<Partition>,
    g: Vec<Partition>,
    h: Vec<Partition>,
}

impl FiniteTreeModel {
    pub fn from_outcomes(n_periods: usize, n_marks: usize, period_length: f64, outcomes: Vec<Outcome>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::InvalidConfig("tree has no outcomes".into()));
        }
        if !(period_length > 0.0) {
            return Err(Error::InvalidConfig("period length must be positive".into()));
        }
        let mut total = 0.0;
        for (i, o) in outcomes.iter().enumerate() {
            if !(o.probability > 0.0) {
                return Err(Error::InvalidConfig(format!("outcome {i} has probability {}", o.probability)));
            }
            if o.walk.len() != n_periods || o.walk.iter().any(|&s| s != 1 && s != -1) {
                return Err(Error::InvalidConfig(format!("outcome {i} has a malformed walk")));
            }
            match (o.tau, o.mark) {
                (Some(s), Some(e)) if (1..=n_periods).contains(&s) && e < n_marks => {}
                (None, None) => {}
                _ => return Err(Error::InvalidConfig(format!("outcome {i} has an invalid (τ, ζ)"))),
            }
            total += o.probability;
        }
        if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(Error::InvalidConfig(format!("probabilities sum to {total}")));
        }

        let f: Vec<Partition> = (0..=n_periods)
            .map(|t| Partition::from_keys(outcomes.iter().map(|o| o.walk[..t].to_vec())))
            .collect();
        let g: Vec<Partition> = (0..=n_periods)
            .map(|t| {
                Partition::from_keys(outcomes.iter().map(|o| {
                    let info = if o.defaulted_by(t) { Some((o.tau, o.mark)) } else { None };
                    (o.walk[..t].to_vec(), info)
                }))
            })
            .collect();
        let h: Vec<Partition> = (0..=n_periods)
            .map(|t| Partition::from_keys(outcomes.iter().map(|o| (o.walk[..t].to_vec(), o.tau, o.mark))))
            .collect();
        if g[n_periods].n_atoms() != outcomes.len() {
            return Err(Error::InvalidConfig("outcomes are not distinct".into()));
        }
        Ok(Self { n_periods, n_marks, period_length, outcomes, f, g, h })
    }

    pub fn n_periods(&self) -> usize {
        self.n_periods
    }

    pub fn n_marks(&self) -> usize {
        self.n_marks
    }

    pub fn period_length(&self) -> f64 {
        self.period_length
    }

    /// Calendar time of epoch `t`.
    pub fn time(&self, t: usize) -> f64 {
        t as f64 * self.period_length
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    pub fn outcome(&self, omega: usize) -> &Outcome {
        &self.outcomes[omega]
    }

    pub fn n_outcomes(&self) -> usize {
        self.outcomes.len()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.outcomes.iter().map(|o| o.probability).collect()
    }

    pub fn partition(&self, filtration: Filtration, t: usize) -> &Partition {
        match filtration {
            Filtration::F => &self.f[t],
            Filtration::G => &self.g[t],
            Filtration::H => &self.h[t],
        }
    }

    /// Default epochs that occur with positive probability.
    pub fn epochs(&self) -> Vec<usize> {
        let mut e: Vec<usize> = self.outcomes.iter().filter_map(|o| o.tau).collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    /// `Σ_{ω ∈ atom} weights(ω)` for every atom.
    pub fn atom_mass(&self, filtration: Filtration, t: usize, weights: &[f64]) -> Vec<f64> {
        let part = self.partition(filtration, t);
        (0..part.n_atoms())
            .map(|a| part.members(a).iter().map(|&w| weights[w]).sum())
            .collect()
    }

    /// Conditional expectation of `values` under the measure with unnormalized
    /// weights `weights`, one entry per atom.
    pub fn conditional_expectation(&self, filtration: Filtration, t: usize, weights: &[f64], values: &[f64]) -> Vec<f64> {
        let part = self.partition(filtration, t);
        (0..part.n_atoms())
            .map(|a| {
                let (mut num, mut den) = (0.0, 0.0);
                for &w in part.members(a) {
                    num += weights[w] * values[w];
                    den += weights[w];
                }
                num / den
            })
            .collect()
    }

    /// `γ_t(θ, e)` on the `F_t`-atom `a`: `P(τ = θ, ζ = e | F_t)`, with
    /// `θ = None` for survival past `N`.
    pub fn density(&self, t: usize, a: usize, theta: Option<usize>, mark: Option<usize>) -> f64 {
        let part = &self.f[t];
        let (mut num, mut den) = (0.0, 0.0);
        for &w in part.members(a) {
            let o = &self.outcomes[w];
            den += o.probability;
            if o.tau == theta && o.mark == mark {
                num += o.probability;
            }
        }
        num / den
    }

    /// Azéma supermartingale `Z^P_t = P(t < τ | F_t)` per `F_t`-atom, summed
    /// from the density.
    pub fn azema(&self, t: usize) -> Vec<f64> {
        let epochs = self.epochs();
        (0..self.f[t].n_atoms())
            .map(|a| {
                let mut z = self.density(t, a, None, None);
                for &s in epochs.iter().filter(|&&s| s > t) {
                    z += (0..self.n_marks).map(|e| self.density(t, a, Some(s), Some(e))).sum::<f64>();
                }
                z
            })
            .collect()
    }

    /// `P(t < τ | F_t)` by direct enumeration of the atom.
    pub fn survival_direct(&self, t: usize) -> Vec<f64> {
        let alive: Vec<f64> = self
            .outcomes
            .iter()
            .map(|o| if o.defaulted_by(t) { 0.0 } else { 1.0 })
            .collect();
        self.conditional_expectation(Filtration::F, t, &self.probabilities(), &alive)
    }

    /// The `G_t`-atom of outcomes in `F_t`-atom `a` that have not defaulted.
    pub fn pre_default_atom(&self, t: usize, a: usize) -> Option<usize> {
        self.f[t]
            .members(a)
            .iter()
            .find(|&&w| !self.outcomes[w].defaulted_by(t))
            .map(|&w| self.g[t].label(w))
    }

    /// `F_t`-atom containing the given atom of a finer filtration.
    pub fn f_atom_of(&self, filtration: Filtration, t: usize, atom: usize) -> usize {
        let w = self.partition(filtration, t).members(atom)[0];
        self.f[t].label(w)
    }

    /// Whether every `P(τ = θ, ζ = e | F_N)` with `θ ≤ t` is already
    /// `F_t`-measurable under the weights `q`, which is immersion of `F` in
    /// `G` on a finite model.
    pub fn is_immersed_under(&self, q: &[f64]) -> bool {
        let n = self.n_periods;
        let mass_n = self.atom_mass(Filtration::F, n, q);
        for t in 0..n {
            let mass_t = self.atom_mass(Filtration::F, t, q);
            let mut events: Vec<Option<(usize, usize)>> = self
                .outcomes
                .iter()
                .filter(|o| o.defaulted_by(t))
                .map(|o| o.tau.zip(o.mark))
                .collect();
            events.sort_unstable();
            events.dedup();
            // `None` stands for survival past t
            events.push(None);
            for event in events {
                let hit: Vec<f64> = self
                    .outcomes
                    .iter()
                    .zip(q)
                    .map(|(o, &p)| {
                        let inside = match event {
                            Some(key) => o.tau.zip(o.mark) == Some(key),
                            None => !o.defaulted_by(t),
                        };
                        if inside { p } else { 0.0 }
                    })
                    .collect();
                let at_t = self.atom_mass(Filtration::F, t, &hit);
                let at_n = self.atom_mass(Filtration::F, n, &hit);
                for f in 0..self.f[n].n_atoms() {
                    let a = self.f[t].label(self.f[n].members(f)[0]);
                    if (at_n[f] / mass_n[f] - at_t[a] / mass_t[a]).abs() > 1e-12 {
                        return false;
                    }
                }
            }
        }
        true
    }

    pub fn is_immersed(&self) -> bool {
        self.is_immersed_under(&self.probabilities())
    }

    /// `F_t ⊂ G_t ⊂ H_t` atomwise at every `t`.
    pub fn refinement_chain_holds(&self) -> bool {
        (0..=self.n_periods).all(|t| self.g[t].refines(&self.f[t]) && self.h[t].refines(&self.g[t]))
    }

    /// Plain-text dump: a header block followed by one CSV row per outcome.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "periods {}", self.n_periods);
        let _ = writeln!(s, "marks {}", self.n_marks);
        let _ = writeln!(s, "period_length {:.16e}", self.period_length);
        let _ = writeln!(s, "outcome,probability,walk,tau,mark");
        for (i, o) in self.outcomes.iter().enumerate() {
            let walk: String = o.walk.iter().map(|&x| if x > 0 { '+' } else { '-' }).collect();
            let tau = o.tau.map_or("inf".to_string(), |s| s.to_string());
            let mark = o.mark.map_or("-".to_string(), |e| e.to_string());
            let _ = writeln!(s, "{i},{:.16e},{walk},{tau},{mark}", o.probability);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |what: &str| Error::InvalidConfig(format!("tree text: {what}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut header = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad("truncated header"))?;
            line.strip_prefix(key)
                .map(|v| v.trim().to_string())
                .ok_or_else(|| bad(&format!("expected `{key}`")))
        };
        let n_periods: usize = header("periods")?.parse().map_err(|_| bad("periods"))?;
        let n_marks: usize = header("marks")?.parse().map_err(|_| bad("marks"))?;
        let period_length: f64 = header("period_length")?.parse().map_err(|_| bad("period_length"))?;
        if lines.next().map(str::trim) != Some("outcome,probability,walk,tau,mark") {
            return Err(bad("missing column header"));
        }
        let mut outcomes = Vec::new();
        for (i, line) in lines.enumerate() {
            let cols: Vec<&str> = line.trim().split(',').collect();
            if cols.len() != 5 || cols[0].parse::<usize>().ok() != Some(i) {
                return Err(bad(&format!("row {i}")));
            }
            let walk = cols[2]
                .chars()
                .map(|c| match c {
                    '+' => Ok(1),
                    '-' => Ok(-1),
                    _ => Err(bad(&format!("walk in row {i}"))),
                })
                .collect::<Result<Vec<i8>>>()?;
            let tau = match cols[3] {
                "inf" => None,
                s => Some(s.parse().map_err(|_| bad(&format!("tau in row {i}")))?),
            };
            let mark = match cols[4] {
                "-" => None,
                s => Some(s.parse().map_err(|_| bad(&format!("mark in row {i}")))?),
            };
            let probability = cols[1].parse().map_err(|_| bad(&format!("probability in row {i}")))?;
            outcomes.push(Outcome { probability, walk, tau, mark });
        }
        Self::from_outcomes(n_periods, n_marks, period_length, outcomes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_tree_shape() {
        let tree = TreeSpec::default().build().unwrap();
        assert_eq!(tree.n_outcomes(), 40);
        assert_eq!(tree.epochs(), vec![1, 2]);
        assert_eq!(tree.partition(Filtration::F, 3).n_atoms(), 8);
        assert_eq!(tree.partition(Filtration::G, 0).n_atoms(), 1);
        assert_eq!(tree.partition(Filtration::G, 3).n_atoms(), 40);
        // H_0 knows (τ, ζ): 2 epochs × 2 marks + no default
        assert_eq!(tree.partition(Filtration::H, 0).n_atoms(), 5);
        let total: f64 = tree.probabilities().iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn filtrations_are_nested() {
        let tree = TreeSpec::default().build().unwrap();
        assert!(tree.refinement_chain_holds());
        for t in 0..3 {
            for filt in [Filtration::F, Filtration::G, Filtration::H] {
                assert!(tree.partition(filt, t + 1).refines(tree.partition(filt, t)));
            }
        }
    }

    #[test]
    fn cox_tree_is_immersed() {
        let tree = TreeSpec::default().build().unwrap();
        assert!(tree.is_immersed());
        // a default law that looks ahead at the last walk step breaks it
        let mut outcomes = tree.outcomes().to_vec();
        for o in outcomes.iter_mut() {
            let bump = if o.walk[2] > 0 { 1.2 } else { 0.8 };
            if o.tau == Some(1) {
                o.probability *= bump;
            }
        }
        let total: f64 = outcomes.iter().map(|o| o.probability).sum();
        outcomes.iter_mut().for_each(|o| o.probability /= total);
        let peeking = FiniteTreeModel::from_outcomes(3, 2, 1.0 / 3.0, outcomes).unwrap();
        assert!(!peeking.is_immersed());
    }

    #[test]
    fn azema_matches_enumeration() {
        let tree = TreeSpec::default().build().unwrap();
        for t in 0..=3 {
            let a = tree.azema(t);
            let b = tree.survival_direct(t);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-15, "t={t}: {x} vs {y}");
            }
        }
        assert!(tree.azema(0).iter().all(|&z| (z - 1.0).abs() < 1e-15));
    }

    #[test]
    fn text_round_trip() {
        let tree = TreeSpec::default().build().unwrap();
        let text = tree.to_text();
        let back = FiniteTreeModel::from_text(&text).unwrap();
        assert_eq!(back.outcomes(), tree.outcomes());
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn rejects_bad_models() {
        let o = Outcome { probability: 0.5, walk: vec![1], tau: None, mark: None };
        assert!(FiniteTreeModel::from_outcomes(1, 1, 1.0, vec![o.clone()]).is_err());
        let dup = vec![o.clone(), o];
        assert!(FiniteTreeModel::from_outcomes(1, 1, 1.0, dup).is_err());
        assert!(TreeSpec { default_epochs: vec![4], ..TreeSpec::default() }.build().is_err());
        assert!(FiniteTreeModel::from_text("periods x").is_err());
    }
}
