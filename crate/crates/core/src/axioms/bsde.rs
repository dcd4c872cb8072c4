//! The regression solver as an engine. It only yields `ρ_0`, so events are
//! trivial and conditional or stopped evaluations are capability errors.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Axiom, ClaimParams, RiskEngine, StoppingRule};
use crate::bsde::{solve_bsde0, solve_bsdej, DriverPreset, DriverSpec, SolverConfig, ThetaGrid};
use crate::claims::DecomposedClaim;
use crate::error::{Error, Result};
use crate::paths::PathEnsemble;

pub struct BsdeEngine {
    driver: DriverSpec,
    ensemble: PathEnsemble,
    config: SolverConfig,
    tolerance: f64,
    id: String,
}

impl BsdeEngine {
    /// Three times the solver's accuracy tolerance of 0.02.
    pub const DEFAULT_TOLERANCE: f64 = 0.06;

    pub fn new(driver: DriverSpec, ensemble: PathEnsemble, config: SolverConfig) -> Self {
        let id = format!("bsde_{}", driver.name());
        Self {
            driver,
            ensemble,
            config,
            tolerance: Self::DEFAULT_TOLERANCE,
            id,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    fn maturity(&self) -> f64 {
        self.ensemble.grid().t_end()
    }

    fn unsupported(&self, what: impl Into<String>) -> Error {
        Error::Capability {
            engine: self.id.clone(),
            what: what.into(),
        }
    }
}

impl RiskEngine for BsdeEngine {
    type Claim = DecomposedClaim;
    /// Evaluation time; only `0` is supported.
    type Point = f64;
    /// `Ω` when true, `∅` otherwise.
    type Event = bool;

    fn id(&self) -> &str {
        &self.id
    }

    fn tolerance(&self) -> f64 {
        self.tolerance
    }

    fn expected_failures(&self) -> &[Axiom] {
        match self.driver.preset() {
            DriverPreset::Entropic(_) => &[Axiom::PositiveHomogeneity],
            _ => &[],
        }
    }

    fn evaluate(&self, claim: &DecomposedClaim, at: &f64) -> Result<f64> {
        if *at != 0.0 {
            return Err(self.unsupported(format!("evaluate conditionally at t = {at}")));
        }
        let terminal = claim.negated();
        if self.driver.depends_on_u {
            let grid = ThetaGrid::full(self.ensemble.grid().n_steps());
            let sol = solve_bsdej(&self.driver, &terminal, &grid, &self.ensemble, &self.config)?;
            Ok(sol.pre_default.initial_value())
        } else {
            Ok(solve_bsde0(&self.driver, &terminal, &self.ensemble, None, &self.config)?.initial_value())
        }
    }

    fn constant(&self, c: f64) -> DecomposedClaim {
        DecomposedClaim::constant(c, self.maturity())
    }

    fn combine(&self, a: f64, x: &DecomposedClaim, b: f64, y: &DecomposedClaim) -> DecomposedClaim {
        x.combine(a, y, b).expect("engine claims share the maturity")
    }

    fn restrict(&self, x: &DecomposedClaim, event: &bool) -> DecomposedClaim {
        if *event {
            x.clone()
        } else {
            self.constant(0.0)
        }
    }

    fn indicator(&self, event: &bool, _at: &f64) -> bool {
        *event
    }

    fn generated_claim(&self, p: &ClaimParams) -> DecomposedClaim {
        let ClaimParams { a, b, c, d } = *p;
        let cutoff = d * self.maturity();
        let last = |w: &[f64]| *w.last().expect("non-empty path");
        DecomposedClaim::new(
            "generated",
            self.maturity(),
            a.abs() + c.abs(),
            move |w| a * (b * last(w)).tanh(),
            move |w, th, _| a * (b * last(w)).tanh() + if th <= cutoff { c } else { 0.0 },
        )
    }

    fn sample_point(&self, _rng: &mut ChaCha8Rng) -> f64 {
        0.0
    }

    fn sample_event(&self, _at: &f64, rng: &mut ChaCha8Rng) -> bool {
        rng.random_bool(0.5)
    }

    fn flow_claim(&self, _claim: &DecomposedClaim, _rule: &StoppingRule) -> Result<DecomposedClaim> {
        Err(self.unsupported("evaluate a stopped claim"))
    }

    fn flow_points(&self, _rule: &StoppingRule, _count: usize, _rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        Err(self.unsupported("evaluate at t > 0"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropic::RiskToleranceProfile;
    use crate::paths::{simulate_brownian, TimeGrid};

    fn engine() -> BsdeEngine {
        let ens = simulate_brownian(TimeGrid::new(0.0, 1.0, 10).unwrap(), 2000, 4).unwrap();
        BsdeEngine::new(DriverSpec::entropic(RiskToleranceProfile::standard()), ens, SolverConfig::default())
    }

    #[test]
    fn conditional_evaluation_is_a_capability_error() {
        let e = engine();
        let c = e.constant(1.0);
        assert!(matches!(e.evaluate(&c, &0.5), Err(Error::Capability { .. })));
        assert!(matches!(
            e.flow_claim(&c, &StoppingRule::DefaultTriggered),
            Err(Error::Capability { .. })
        ));
    }

    #[test]
    fn constants_translate() {
        let e = engine();
        let v = e.evaluate(&e.constant(0.7), &0.0).unwrap();
        assert!((v + 0.7).abs() < 1e-12);
    }
}
