//! Discrete g-expectations on a finite tree, evaluated by backward recursion.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Axiom, ClaimParams, RiskEngine, StoppingRule};
use crate::dual::{discrete_g_expectation, FiniteTreeModel, TreeDriver, Filtration};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreePoint {
    pub t: usize,
    pub omega: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreeEvent {
    /// `{S_t > level}`.
    Above { t: usize, level: i64 },
    /// `{τ ≤ t}`.
    Defaulted { t: usize },
}

pub struct TreeEngine {
    tree: FiniteTreeModel,
    driver: TreeDriver,
    id: String,
}

impl TreeEngine {
    pub fn new(tree: FiniteTreeModel, driver: TreeDriver) -> Self {
        let id = format!("tree_{}", driver.name());
        Self { tree, driver, id }
    }

    pub fn tree(&self) -> &FiniteTreeModel {
        &self.tree
    }

    fn stop_index(&self, s: f64) -> Result<usize> {
        let dt = self.tree.period_length();
        let x = s / dt;
        let k = x.round();
        if (x - k).abs() > 1e-9 || k < 0.0 || k as usize > self.tree.n_periods() {
            return Err(Error::GridAlignment { t: s, dt });
        }
        Ok(k as usize)
    }

    fn sigma(&self, rule: &StoppingRule) -> Result<Vec<usize>> {
        let n = self.tree.n_periods();
        match *rule {
            StoppingRule::Deterministic(s) => Ok(vec![self.stop_index(s)?; self.tree.n_outcomes()]),
            StoppingRule::DefaultTriggered => {
                Ok(self.tree.outcomes().iter().map(|o| o.tau.unwrap_or(n).min(n)).collect())
            }
        }
    }
}

impl RiskEngine for TreeEngine {
    type Claim = Vec<f64>;
    type Point = TreePoint;
    type Event = TreeEvent;

    fn id(&self) -> &str {
        &self.id
    }

    fn tolerance(&self) -> f64 {
        1e-10
    }

    fn expected_failures(&self) -> &[Axiom] {
        match self.driver {
            TreeDriver::Zero => &[],
            TreeDriver::Entropic(_) => &[Axiom::PositiveHomogeneity],
        }
    }

    fn evaluate(&self, claim: &Vec<f64>, at: &TreePoint) -> Result<f64> {
        if at.t > self.tree.n_periods() || at.omega >= self.tree.n_outcomes() {
            return Err(Error::InvalidConfig(format!("no tree node at {at:?}")));
        }
        Ok(discrete_g_expectation(&self.tree, &self.driver, claim)?.at(at.t, at.omega))
    }

    fn constant(&self, c: f64) -> Vec<f64> {
        vec![c; self.tree.n_outcomes()]
    }

    fn combine(&self, a: f64, x: &Vec<f64>, b: f64, y: &Vec<f64>) -> Vec<f64> {
        x.iter().zip(y).map(|(u, v)| a * u + b * v).collect()
    }

    fn restrict(&self, x: &Vec<f64>, event: &TreeEvent) -> Vec<f64> {
        (0..x.len())
            .map(|w| if self.indicator(event, &TreePoint { t: 0, omega: w }) { x[w] } else { 0.0 })
            .collect()
    }

    fn indicator(&self, event: &TreeEvent, at: &TreePoint) -> bool {
        let o = self.tree.outcome(at.omega);
        match *event {
            TreeEvent::Above { t, level } => o.walk_value(t) > level,
            TreeEvent::Defaulted { t } => o.defaulted_by(t),
        }
    }

    fn generated_claim(&self, p: &ClaimParams) -> Vec<f64> {
        let n = self.tree.n_periods();
        let scale = (n as f64).sqrt();
        let cutoff = ((p.d * n as f64).ceil() as usize).max(1);
        self.tree
            .outcomes()
            .iter()
            .map(|o| {
                let hit = o.tau.is_some_and(|th| th <= cutoff);
                p.a * (p.b * o.walk_value(n) as f64 / scale).tanh() + if hit { p.c } else { 0.0 }
            })
            .collect()
    }

    fn sample_point(&self, rng: &mut ChaCha8Rng) -> TreePoint {
        TreePoint {
            t: rng.random_range(0..=self.tree.n_periods()),
            omega: rng.random_range(0..self.tree.n_outcomes()),
        }
    }

    fn sample_event(&self, at: &TreePoint, rng: &mut ChaCha8Rng) -> TreeEvent {
        let t = at.t;
        if t > 0 && rng.random_bool(0.5) {
            TreeEvent::Defaulted { t }
        } else {
            TreeEvent::Above {
                t,
                level: rng.random_range(-(t as i64)..=t as i64),
            }
        }
    }

    fn flow_claim(&self, claim: &Vec<f64>, rule: &StoppingRule) -> Result<Vec<f64>> {
        let sigma = self.sigma(rule)?;
        let risk = discrete_g_expectation(&self.tree, &self.driver, claim)?;
        Ok(sigma.iter().enumerate().map(|(w, &s)| -risk.at(s, w)).collect())
    }

    /// Every `G` atom with `t ≤ σ`; the count argument is ignored.
    fn flow_points(&self, rule: &StoppingRule, _count: usize, _rng: &mut ChaCha8Rng) -> Result<Vec<TreePoint>> {
        let sigma = self.sigma(rule)?;
        let mut points = Vec::new();
        for t in 0..=self.tree.n_periods() {
            let part = self.tree.partition(Filtration::G, t);
            for atom in 0..part.n_atoms() {
                let omega = part.members(atom)[0];
                if t <= sigma[omega] {
                    points.push(TreePoint { t, omega });
                }
            }
        }
        Ok(points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::TreeSpec;
    use crate::entropic::RiskToleranceProfile;

    fn engine() -> TreeEngine {
        TreeEngine::new(
            TreeSpec::default().build().unwrap(),
            TreeDriver::Entropic(RiskToleranceProfile::standard()),
        )
    }

    #[test]
    fn sigma_is_constant_on_atoms_where_t_le_sigma() {
        let e = engine();
        let sigma = e.sigma(&StoppingRule::DefaultTriggered).unwrap();
        for at in e.flow_points(&StoppingRule::DefaultTriggered, 0, &mut crate::rng::substream(0, crate::rng::StreamTag::Axioms, 0)).unwrap() {
            let part = e.tree.partition(Filtration::G, at.t);
            for &w in part.members(part.label(at.omega)) {
                assert!(at.t <= sigma[w]);
            }
        }
    }

    #[test]
    fn off_grid_stop_is_rejected() {
        let e = engine();
        assert!(matches!(
            e.flow_claim(&e.constant(1.0), &StoppingRule::Deterministic(0.5)),
            Err(Error::GridAlignment { .. })
        ));
    }

    #[test]
    fn generated_claim_uses_default_indicator() {
        let e = engine();
        let xi = e.generated_claim(&ClaimParams { a: 0.0, b: 1.0, c: 1.0, d: 1.0 });
        for (o, v) in e.tree.outcomes().iter().zip(&xi) {
            assert_eq!(*v, if o.tau.is_some() { 1.0 } else { 0.0 });
        }
    }
}
