//! The dual checks on one tree, summarized as one report per check.

use rayon::prelude::*;

use super::gexp::{relevance_check, TreeDriver};
use super::measure::{decompose_conditional_expectation, sample_measure, MeasureChange, Perturbation};
use super::penalty::{entropic_penalty_closed, penalty_inequality_check, penalty_oracle};
use super::tree::{Filtration, FiniteTreeModel};
use crate::axioms::AxiomReport;
use crate::entropic::RiskToleranceProfile;
use crate::error::Result;
use crate::rng::{substream, StreamTag};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualSuiteConfig {
    /// Measures for the penalty inequality.
    pub measures: usize,
    /// Measures for the oracle comparison.
    pub oracle_measures: usize,
    /// Walk-only measures for the `k = 1` check.
    pub walk_only_measures: usize,
    /// Claims for the relevance check.
    pub relevance_claims: usize,
    pub strength: f64,
    pub seed: u64,
}

impl Default for DualSuiteConfig {
    fn default() -> Self {
        Self {
            measures: 200,
            oracle_measures: 50,
            walk_only_measures: 20,
            relevance_claims: 50,
            strength: 0.5,
            seed: 0,
        }
    }
}

pub const INEQUALITY_TOLERANCE: f64 = 1e-10;
pub const ORACLE_TOLERANCE: f64 = 1e-6;
pub const K_TOLERANCE: f64 = 1e-12;
pub const DECOMPOSITION_TOLERANCE: f64 = 1e-12;

const ENGINE: &str = "tree";

fn report(id: &str, samples: usize, violation: f64, tolerance: f64) -> AxiomReport {
    AxiomReport::new(id, ENGINE, samples, violation, tolerance, false)
}

fn measures(tree: &FiniteTreeModel, cfg: &DualSuiteConfig, n: usize, offset: u64, kind: Perturbation) -> Result<Vec<MeasureChange>> {
    (0..n as u64).map(|i| sample_measure(tree, cfg.seed, offset + i, cfg.strength, kind)).collect()
}

/// Runs every dual check; reports are ordered by check id.
pub fn run_dual_suite(tree: &FiniteTreeModel, profile: &RiskToleranceProfile, cfg: &DualSuiteConfig) -> Result<Vec<AxiomReport>> {
    let n = tree.n_periods();
    let mut out = Vec::new();

    let full = measures(tree, cfg, cfg.measures, 0, Perturbation::Full)?;
    let checks = full
        .par_iter()
        .flat_map_iter(|q| (0..n).map(move |t| (q, t)))
        .map(|(q, t)| penalty_inequality_check(tree, &q.anchored_at(tree, t), t, profile))
        .collect::<Result<Vec<_>>>()?;
    let pre = checks.iter().map(|r| -r.min_pre_slack).fold(0.0, f64::max);
    let post = checks.iter().map(|r| r.max_post_defect).fold(0.0, f64::max);
    out.push(report("dual_inequality_pre", checks.len(), pre, INEQUALITY_TOLERANCE));
    out.push(report("dual_inequality_post", checks.len(), post, INEQUALITY_TOLERANCE));

    let k_below_one = full
        .iter()
        .flat_map(|q| (0..=n).flat_map(move |t| q.k_factor(tree, t)))
        .map(|k| 1.0 - k)
        .fold(0.0, f64::max);
    out.push(report("dual_k_at_least_one", full.len(), k_below_one, K_TOLERANCE));

    let walk = measures(tree, cfg, cfg.walk_only_measures, 1 << 32, Perturbation::WalkOnly)?;
    let k_gap = walk
        .iter()
        .flat_map(|q| (0..=n).flat_map(move |t| q.k_factor(tree, t)))
        .map(|k| (k - 1.0).abs())
        .fold(0.0, f64::max);
    out.push(report("dual_k_walk_only", walk.len(), k_gap, K_TOLERANCE));

    let oracle = &full[..cfg.oracle_measures.min(full.len())];
    let gaps = oracle
        .par_iter()
        .flat_map_iter(|q| (0..=n).map(move |t| (q, t)))
        .map(|(q, t)| {
            let closed = entropic_penalty_closed(tree, Filtration::G, q, t, profile)?;
            let mut gap: f64 = 0.0;
            for (atom, c) in closed.into_iter().enumerate() {
                let o = penalty_oracle(tree, Filtration::G, q, t, atom, profile)?.value;
                gap = gap.max((o - c).abs());
            }
            Ok(gap)
        })
        .collect::<Result<Vec<f64>>>()?;
    out.push(report("dual_penalty_oracle", oracle.len(), gaps.into_iter().fold(0.0, f64::max), ORACLE_TOLERANCE));

    let claims: Vec<Vec<f64>> = (0..cfg.relevance_claims as u64)
        .map(|i| {
            let mut rng = substream(cfg.seed, StreamTag::TreeMeasure, (2 << 32) + i);
            let mut xi: Vec<f64> = (0..tree.n_outcomes())
                .map(|_| if rng.random_bool(0.3) { rng.random::<f64>() } else { 0.0 })
                .collect();
            if xi.iter().all(|&x| x == 0.0) {
                let j = rng.random_range(0..xi.len());
                xi[j] = 1.0;
            }
            xi
        })
        .collect();
    let driver = TreeDriver::Entropic(*profile);
    let failures = claims.iter().filter(|xi| relevance_check(tree, &driver, xi).is_err()).count();
    out.push(report("dual_relevance", claims.len(), failures as f64, 0.0));

    let mut discrepancy: f64 = 0.0;
    for (q, xi) in full.iter().zip(&claims) {
        for t in 0..=n {
            discrepancy = discrepancy.max(decompose_conditional_expectation(tree, q, xi, t)?.max_discrepancy);
        }
    }
    out.push(report(
        "dual_decomposition",
        full.len().min(claims.len()),
        discrepancy,
        DECOMPOSITION_TOLERANCE,
    ));

    out.sort_by(|a, b| a.check_id.cmp(&b.check_id));
    Ok(out)
}
