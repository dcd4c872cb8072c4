//! Least-squares Monte-Carlo solver for a BSDE with one default jump.
//!
//! After default the solution is a family of Brownian BSDEs indexed by the
//! default time `θ` and mark `e`:
//!
//! ```text
//! Y¹_t(θ,e) = ξ¹(θ,e) + ∫_t^T g¹(s, Y¹, Z¹, θ, e) ds − ∫_t^T Z¹ dW,   t ≥ θ
//! ```
//!
//! Before default a single Brownian BSDE whose driver sees the jump size
//! `U_t = Y¹_t(t,·) − Y⁰_t` through the diagonal of the family:
//!
//! ```text
//! Y⁰_t = ξ⁰ + ∫_t^T g⁰(s, Y⁰, Z⁰, U) ds − ∫_t^T Z⁰ dW
//! ```
//!
//! The scheme is explicit backward Euler: `Z_k` is the `ΔW_k` loading in the
//! regression of `Ŷ_{k+1}` on `(ψ(x_k), ψ(x_k) ΔW_k)` and `Y_k` the regression
//! of `Ŷ_{k+1} + g(t_k, Ŷ_{k+1}, Z_k) dt − Z_k ΔW_k` on `ψ(x_k)`. The multi-step variant regresses the
//! realized `ξ + Σ_{j≥k} g_j dt` instead of the fitted `Ŷ_{k+1}`. Conditional
//! expectations at step `k` are regressions on monomials of the
//! standardized state `W_k/√t_k` (the constant alone at `t = 0`). Solutions are stored as regression
//! coefficients per step and materialized per path on demand.

mod apriori;
mod driver;
mod regression;

pub use apriori::{apriori_gap, terminal_gap, AprioriReport, StabilityConstants, TerminalGap, Trajectories};
pub use driver::{DriverPreset, DriverSpec, PostDefaultRate, PreDefaultRate};
pub use regression::{basis_size, eval_poly, monomial_design, regression_step, LeastSquares, RegressionFit};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::claims::DecomposedClaim;
use crate::error::{Error, Result};
use crate::paths::{DefaultScenario, PathEnsemble, TimeGrid};

/// Regression targets of the backward step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// `Y_k = E[Ŷ_{k+1} + g dt]` with the fitted `Ŷ_{k+1}`.
    #[default]
    OneStep,
    /// `Y_k = E[ξ + Σ_{j≥k} g_j dt]` with realized sums.
    MultiStep,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub basis_order: usize,
    pub scheme: Scheme,
    /// Truncation level of the terminal condition; the claim's own bound
    /// when `None`.
    pub bound: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            basis_order: 3,
            scheme: Scheme::OneStep,
            bound: None,
        }
    }
}

/// Default nodes (indices into the time grid) and marks of the
/// post-default family.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaGrid {
    nodes: Vec<usize>,
    marks: Vec<usize>,
}

impl ThetaGrid {
    /// Every node `0..=n` with the single mark 0.
    pub fn full(n: usize) -> Self {
        Self {
            nodes: (0..=n).collect(),
            marks: vec![0],
        }
    }

    /// Every `stride`-th node, always including `n`.
    pub fn strided(n: usize, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidConfig("theta-grid stride must be positive".into()));
        }
        let mut nodes: Vec<usize> = (0..=n).step_by(stride).collect();
        if nodes.last() != Some(&n) {
            nodes.push(n);
        }
        Ok(Self { nodes, marks: vec![0] })
    }

    pub fn from_nodes(mut nodes: Vec<usize>, mut marks: Vec<usize>) -> Result<Self> {
        nodes.sort_unstable();
        nodes.dedup();
        marks.sort_unstable();
        marks.dedup();
        if nodes.is_empty() || marks.is_empty() {
            return Err(Error::InvalidConfig("theta-grid needs at least one node and one mark".into()));
        }
        Ok(Self { nodes, marks })
    }

    pub fn with_marks(self, marks: Vec<usize>) -> Result<Self> {
        Self::from_nodes(self.nodes, marks)
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn marks(&self) -> &[usize] {
        &self.marks
    }

    pub fn contains(&self, node: usize, mark: usize) -> bool {
        self.nodes.binary_search(&node).is_ok() && self.marks.binary_search(&mark).is_ok()
    }

    fn position(&self, node: usize, mark: usize) -> Option<usize> {
        let a = self.nodes.binary_search(&node).ok()?;
        let b = self.marks.binary_search(&mark).ok()?;
        Some(a * self.marks.len() + b)
    }

    fn members(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.nodes.iter().flat_map(move |&n| self.marks.iter().map(move |&e| (n, e)))
    }
}

/// Conditioning quality of one backward step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    pub condition: f64,
    pub residual_rms: f64,
}

#[derive(Clone)]
struct Context<'a> {
    ensemble: &'a PathEnsemble,
    grid: TimeGrid,
    n: usize,
    order: usize,
    bound: f64,
    terminal: DecomposedClaim,
}

impl<'a> Context<'a> {
    fn new(ensemble: &'a PathEnsemble, terminal: &DecomposedClaim, config: &SolverConfig) -> Result<Self> {
        let grid = *ensemble.grid();
        if grid.t_start() != 0.0 {
            return Err(Error::InvalidConfig("solver grids start at t = 0".into()));
        }
        let n = grid.index_of(terminal.maturity())?;
        let bound = config.bound.unwrap_or(terminal.bound());
        if !(bound > 0.0) {
            return Err(Error::InvalidConfig(format!("truncation bound must be positive, got {bound}")));
        }
        Ok(Self {
            ensemble,
            grid,
            n,
            order: config.basis_order,
            bound,
            terminal: terminal.clone().with_bound(bound).truncated(),
        })
    }

    fn order_at(&self, k: usize) -> usize {
        if k == 0 {
            0
        } else {
            self.order
        }
    }

    fn state(&self, k: usize, i: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.ensemble.path(i)[k] / self.grid.time(k).sqrt()
        }
    }

    fn states(&self, k: usize) -> Vec<f64> {
        (0..self.ensemble.n_paths()).map(|i| self.state(k, i)).collect()
    }

    fn clamp(&self, y: f64) -> f64 {
        y.clamp(-self.bound - 1.0, self.bound + 1.0)
    }

    fn path(&self, i: usize) -> &'a [f64] {
        &self.ensemble.path(i)[..=self.n]
    }

    fn fitted(&self, coefficients: &[f64], k: usize, i: usize) -> f64 {
        self.clamp(eval_poly(coefficients, self.state(k, i)))
    }

    fn check_point(&self, i: usize, k: usize) -> Result<()> {
        if i >= self.ensemble.n_paths() || k > self.n {
            return Err(Error::InvalidConfig(format!(
                "no solution value at path {i}, step {k} (paths {}, steps {})",
                self.ensemble.n_paths(),
                self.n
            )));
        }
        Ok(())
    }
}

struct StepFit {
    y: DMatrix<f64>,
    z: DMatrix<f64>,
    diagnostics: StepDiagnostics,
}

/// One backward step for several BSDEs sharing the design at step `k`.
///
/// `sums` holds, per path and column, the realized `ξ + Σ_{j>k} g_j dt`
/// and is advanced to step `k` in place; `y_next` holds the fitted `Y_{k+1}`
/// passed to the driver `rate(j, i, y, z)`.
fn backward_step(
    ctx: &Context<'_>,
    k: usize,
    sums: &mut DMatrix<f64>,
    y_next: &DMatrix<f64>,
    rate: impl Fn(usize, usize, f64, f64) -> f64 + Sync,
) -> Result<StepFit> {
    let n = sums.nrows();
    let m = sums.ncols();
    let dt = ctx.grid.dt();
    let ls = LeastSquares::new(&ctx.states(k), ctx.order_at(k), k)?;
    let dw: Vec<f64> = (0..n)
        .map(|i| {
            let p = ctx.ensemble.path(i);
            p[k + 1] - p[k]
        })
        .collect();

    // joint regression on (ψ(x), ψ(x) ΔW): the ΔW loading is Z
    let p = basis_size(ctx.order_at(k));
    let basis = monomial_design(&ctx.states(k), ctx.order_at(k));
    let joint = DMatrix::from_fn(n, 2 * p, |i, c| if c < p { basis[(i, c)] } else { basis[(i, c - p)] * dw[i] });
    let joint = LeastSquares::from_design(joint, ctx.order_at(k), k)?;
    let loadings = joint.solve(sums);
    let z_coef = loadings.rows(p, p).into_owned();
    let z = &basis * &z_coef;

    sums.as_mut_slice().par_chunks_mut(n).enumerate().for_each(|(j, col)| {
        for (i, v) in col.iter_mut().enumerate() {
            *v += dt * rate(j, i, y_next[(i, j)], z[(i, j)]);
        }
    });
    // Z ΔW has zero conditional mean; removing it from the target leaves the
    // regression unbiased and strips the martingale noise
    let mut y_target = vec![0.0; n * m];
    y_target.par_chunks_mut(n).enumerate().for_each(|(j, col)| {
        for (i, v) in col.iter_mut().enumerate() {
            *v = sums[(i, j)] - z[(i, j)] * dw[i];
        }
    });
    let y_target = DMatrix::from_vec(n, m, y_target);
    let y_coef = ls.solve(&y_target);
    let residual = (&y_target - ls.fitted(&y_coef))
        .column_iter()
        .map(|c| c.norm() / (n as f64).sqrt())
        .fold(0.0, f64::max);
    Ok(StepFit {
        y: y_coef,
        z: z_coef,
        diagnostics: StepDiagnostics {
            step: k,
            condition: ls.condition(),
            residual_rms: residual,
        },
    })
}

fn column(m: &DMatrix<f64>, j: usize) -> Vec<f64> {
    m.column(j).iter().copied().collect()
}

struct Member {
    node: usize,
    mark: usize,
    theta: f64,
    /// Coefficients for steps `node..n`.
    y: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
}

/// Post-default solutions `Y¹(θ,e)`, `Z¹(θ,e)` for every member of a
/// [`ThetaGrid`].
pub struct Bsde1Family<'a> {
    ctx: Context<'a>,
    theta_grid: ThetaGrid,
    members: Vec<Member>,
    diagnostics: Vec<StepDiagnostics>,
}

pub fn solve_bsde1_family<'a>(
    driver: &DriverSpec,
    terminal: &DecomposedClaim,
    theta_grid: &ThetaGrid,
    ensemble: &'a PathEnsemble,
    config: &SolverConfig,
) -> Result<Bsde1Family<'a>> {
    let ctx = Context::new(ensemble, terminal, config)?;
    if let Some(&last) = theta_grid.nodes().last() {
        if last > ctx.n {
            return Err(Error::InvalidConfig(format!(
                "theta node {last} lies beyond the maturity node {}",
                ctx.n
            )));
        }
    }
    let mut members: Vec<Member> = theta_grid
        .members()
        .map(|(node, mark)| Member {
            node,
            mark,
            theta: ctx.grid.time(node),
            y: Vec::new(),
            z: Vec::new(),
        })
        .collect();
    let n_paths = ensemble.n_paths();
    let mut diagnostics = Vec::with_capacity(ctx.n);

    // members are ordered by node, so the active ones form a prefix
    let mut sums = DMatrix::from_fn(n_paths, members.len(), |i, j| {
        ctx.terminal.xi1(ctx.path(i), members[j].theta, members[j].mark)
    });
    for k in (0..ctx.n).rev() {
        let active = members.partition_point(|mb| mb.node <= k);
        if active == 0 {
            break;
        }
        if sums.ncols() > active {
            sums = sums.columns(0, active).into_owned();
        }
        let y_next = if k + 1 == ctx.n {
            sums.clone()
        } else {
            let mut next = vec![0.0; n_paths * active];
            next.par_chunks_mut(n_paths).zip(&members[..active]).for_each(|(col, mb)| {
                let coef = mb.y.last().expect("later step solved");
                for (i, v) in col.iter_mut().enumerate() {
                    *v = ctx.fitted(coef, k + 1, i);
                }
            });
            DMatrix::from_vec(n_paths, active, next)
        };
        if config.scheme == Scheme::OneStep {
            sums.copy_from(&y_next);
        }
        let t = ctx.grid.time(k);
        let fit = backward_step(&ctx, k, &mut sums, &y_next, |j, _, y, z| {
            let mb = &members[j];
            driver.g1(t, y, z, mb.theta, mb.mark)
        })?;
        for (j, mb) in members[..active].iter_mut().enumerate() {
            mb.y.push(column(&fit.y, j));
            mb.z.push(column(&fit.z, j));
        }
        diagnostics.push(fit.diagnostics);
    }
    for mb in &mut members {
        mb.y.reverse();
        mb.z.reverse();
    }
    diagnostics.reverse();
    Ok(Bsde1Family {
        ctx,
        theta_grid: theta_grid.clone(),
        members,
        diagnostics,
    })
}

impl<'a> Bsde1Family<'a> {
    pub fn theta_grid(&self) -> &ThetaGrid {
        &self.theta_grid
    }

    pub fn diagnostics(&self) -> &[StepDiagnostics] {
        &self.diagnostics
    }

    fn member(&self, node: usize, mark: usize) -> Result<&Member> {
        self.theta_grid
            .position(node, mark)
            .map(|p| &self.members[p])
            .ok_or_else(|| Error::InvalidConfig(format!("(node {node}, mark {mark}) is not in the theta-grid")))
    }

    /// `Y¹_k(θ_node, mark)` on path `i`; `None` before the default node.
    pub fn y(&self, node: usize, mark: usize, i: usize, k: usize) -> Result<Option<f64>> {
        self.ctx.check_point(i, k)?;
        let mb = self.member(node, mark)?;
        Ok(if k < node {
            None
        } else if k == self.ctx.n {
            Some(self.ctx.terminal.xi1(self.ctx.path(i), mb.theta, mark))
        } else {
            Some(self.ctx.fitted(&mb.y[k - node], k, i))
        })
    }

    /// `Z¹_k(θ_node, mark)` on path `i`, for `node ≤ k < n`.
    pub fn z(&self, node: usize, mark: usize, i: usize, k: usize) -> Result<Option<f64>> {
        self.ctx.check_point(i, k)?;
        let mb = self.member(node, mark)?;
        Ok((k >= node && k < self.ctx.n).then(|| eval_poly(&mb.z[k - node], self.ctx.state(k, i))))
    }

    /// Diagonal `Y¹_k(t_k, e)` for every mark.
    pub fn diagonal(&self, i: usize, k: usize) -> Result<Vec<f64>> {
        self.theta_grid
            .marks()
            .iter()
            .map(|&e| Ok(self.y(k, e, i, k)?.expect("diagonal lies on or after its node")))
            .collect()
    }
}

/// Pre-default solution `Y⁰`, `Z⁰`.
pub struct Bsde0Solution<'a> {
    ctx: Context<'a>,
    y: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    diagnostics: Vec<StepDiagnostics>,
}

/// Solves the pre-default equation. The family is required when the
/// driver depends on the jump size; its diagonal then enters `g⁰`
/// explicitly through the step-`k+1` values.
pub fn solve_bsde0<'a>(
    driver: &DriverSpec,
    terminal: &DecomposedClaim,
    ensemble: &'a PathEnsemble,
    family: Option<&Bsde1Family<'_>>,
    config: &SolverConfig,
) -> Result<Bsde0Solution<'a>> {
    let ctx = Context::new(ensemble, terminal, config)?;
    if driver.depends_on_u {
        let fam = family.ok_or_else(|| {
            Error::InvalidConfig("driver depends on the jump size but no post-default family was given".into())
        })?;
        if fam.ctx.n != ctx.n || !std::ptr::eq(fam.ctx.ensemble, ensemble) {
            return Err(Error::InvalidConfig("post-default family was solved on another ensemble".into()));
        }
        if let Some(k) = (1..=ctx.n).find(|&k| !fam.theta_grid.nodes().contains(&k)) {
            return Err(Error::InvalidConfig(format!(
                "jump-size coupling needs every grid node in the theta-grid; node {k} is missing"
            )));
        }
    }
    let n_paths = ensemble.n_paths();
    let mut y: Vec<Vec<f64>> = Vec::with_capacity(ctx.n);
    let mut z: Vec<Vec<f64>> = Vec::with_capacity(ctx.n);
    let mut diagnostics = Vec::with_capacity(ctx.n);
    let mut sums = DMatrix::from_fn(n_paths, 1, |i, _| ctx.terminal.xi0(ctx.path(i)));
    for k in (0..ctx.n).rev() {
        let next: Vec<f64> = if k + 1 == ctx.n {
            sums.column(0).iter().copied().collect()
        } else {
            let coef = y.last().expect("later step solved");
            (0..n_paths).map(|i| ctx.fitted(coef, k + 1, i)).collect()
        };
        let u: Option<Vec<Vec<f64>>> = match family {
            Some(fam) if driver.depends_on_u => Some(
                (0..n_paths)
                    .map(|i| {
                        let d = fam.diagonal(i, k + 1)?;
                        Ok(d.into_iter().map(|v| v - next[i]).collect())
                    })
                    .collect::<Result<_>>()?,
            ),
            _ => None,
        };
        let t = ctx.grid.time(k);
        let y_next = DMatrix::from_vec(n_paths, 1, next);
        if config.scheme == Scheme::OneStep {
            sums.copy_from(&y_next);
        }
        let fit = backward_step(&ctx, k, &mut sums, &y_next, |_, i, yv, zv| {
            let ui: &[f64] = u.as_ref().map_or(&[], |u| &u[i]);
            driver.g0(t, yv, zv, ui)
        })?;
        y.push(column(&fit.y, 0));
        z.push(column(&fit.z, 0));
        diagnostics.push(fit.diagnostics);
    }
    y.reverse();
    z.reverse();
    diagnostics.reverse();
    Ok(Bsde0Solution { ctx, y, z, diagnostics })
}

impl<'a> Bsde0Solution<'a> {
    pub fn diagnostics(&self) -> &[StepDiagnostics] {
        &self.diagnostics
    }

    pub fn y(&self, i: usize, k: usize) -> Result<f64> {
        self.ctx.check_point(i, k)?;
        Ok(if k == self.ctx.n {
            self.ctx.terminal.xi0(self.ctx.path(i))
        } else {
            self.ctx.fitted(&self.y[k], k, i)
        })
    }

    /// `Z⁰_k` for `k < n`.
    pub fn z(&self, i: usize, k: usize) -> Result<Option<f64>> {
        self.ctx.check_point(i, k)?;
        Ok((k < self.ctx.n).then(|| eval_poly(&self.z[k], self.ctx.state(k, i))))
    }

    /// `Y⁰_0`, identical on all paths.
    pub fn initial_value(&self) -> f64 {
        self.ctx.clamp(self.y[0][0])
    }
}

/// Both components of the decomposed solution on one ensemble.
pub struct BsdeSolution<'a> {
    pub post_default: Bsde1Family<'a>,
    pub pre_default: Bsde0Solution<'a>,
}

pub fn solve_bsdej<'a>(
    driver: &DriverSpec,
    terminal: &DecomposedClaim,
    theta_grid: &ThetaGrid,
    ensemble: &'a PathEnsemble,
    config: &SolverConfig,
) -> Result<BsdeSolution<'a>> {
    let post_default = solve_bsde1_family(driver, terminal, theta_grid, ensemble, config)?;
    let pre_default = solve_bsde0(driver, terminal, ensemble, Some(&post_default), config)?;
    Ok(BsdeSolution {
        post_default,
        pre_default,
    })
}

/// Solution trajectories `(Y, Z, U)` on one path.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub default_node: Option<usize>,
    /// `Y_k`, `k = 0..=n`.
    pub y: Vec<f64>,
    /// `Z_k`, `k = 0..n`.
    pub z: Vec<f64>,
    /// `U_k` per mark on pre-default nodes; `None` when the theta-grid does
    /// not cover them.
    pub u: Option<Vec<Vec<f64>>>,
}

impl<'a> BsdeSolution<'a> {
    pub fn n_steps(&self) -> usize {
        self.pre_default.ctx.n
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.pre_default.ctx.grid
    }

    /// `U_k = Y¹_k(t_k, ·) − Y⁰_k`; requires `k` in the theta-grid.
    pub fn u_diag(&self, i: usize, k: usize) -> Result<Vec<f64>> {
        let y0 = self.pre_default.y(i, k)?;
        Ok(self.post_default.diagonal(i, k)?.into_iter().map(|v| v - y0).collect())
    }

    /// `Y = Y⁰ 1{t<τ} + Y¹(τ,ζ) 1{t≥τ}` on path `i`, with `τ` registered at
    /// the first grid node at or after it.
    pub fn reconstruct(&self, i: usize, scenario: &DefaultScenario) -> Result<Reconstruction> {
        let ctx = &self.pre_default.ctx;
        ctx.check_point(i, 0)?;
        let n = ctx.n;
        let kd = scenario.default_node(&ctx.grid, ctx.terminal.maturity());
        if let Some(kd) = kd {
            if !self.post_default.theta_grid.contains(kd, scenario.mark) {
                return Err(Error::InvalidConfig(format!(
                    "default node {kd} with mark {} is not in the theta-grid",
                    scenario.mark
                )));
            }
        }
        let switch = kd.unwrap_or(n + 1);
        let mut y = Vec::with_capacity(n + 1);
        let mut z = Vec::with_capacity(n);
        for k in 0..=n {
            if k < switch {
                y.push(self.pre_default.y(i, k)?);
                if k < n {
                    z.push(self.pre_default.z(i, k)?.expect("pre-default Z before maturity"));
                }
            } else {
                let node = switch;
                y.push(self.post_default.y(node, scenario.mark, i, k)?.expect("on or after default node"));
                if k < n {
                    z.push(self.post_default.z(node, scenario.mark, i, k)?.expect("on or after default node"));
                }
            }
        }
        let pre_nodes = switch.min(n + 1);
        let covered = (0..pre_nodes).all(|k| self.post_default.theta_grid.nodes().binary_search(&k).is_ok());
        let u = if covered {
            Some((0..pre_nodes).map(|k| self.u_diag(i, k)).collect::<Result<Vec<_>>>()?)
        } else {
            None
        };
        Ok(Reconstruction {
            default_node: kd,
            y,
            z,
            u,
        })
    }
}

/// [`BsdeSolution::reconstruct`] as a free function.
pub fn reconstruct_bsdej(solution: &BsdeSolution<'_>, path: usize, scenario: &DefaultScenario) -> Result<Reconstruction> {
    solution.reconstruct(path, scenario)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::claims::claim_terminal_brownian;
    use crate::entropic::RiskToleranceProfile;
    use crate::paths::simulate_brownian;

    fn ensemble(n_paths: usize, n_steps: usize, seed: u64) -> PathEnsemble {
        simulate_brownian(TimeGrid::new(0.0, 1.0, n_steps).unwrap(), n_paths, seed).unwrap()
    }

    #[test]
    fn zero_driver_constant_terminal() {
        let ens = ensemble(500, 10, 1);
        let c = DecomposedClaim::constant(0.3, 1.0);
        let sol = solve_bsdej(&DriverSpec::zero(), &c, &ThetaGrid::full(10), &ens, &SolverConfig::default()).unwrap();
        for i in [0, 17, 499] {
            for k in 0..=10 {
                assert!((sol.pre_default.y(i, k).unwrap() - 0.3).abs() < 1e-12);
                for node in 0..=k {
                    assert!((sol.post_default.y(node, 0, i, k).unwrap().unwrap() - 0.3).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn no_default_reconstruction_is_pre_default_branch() {
        let ens = ensemble(400, 8, 2);
        let c = claim_terminal_brownian(1.0).negated();
        let sol = solve_bsdej(
            &DriverSpec::entropic(RiskToleranceProfile::standard()),
            &c,
            &ThetaGrid::full(8),
            &ens,
            &SolverConfig::default(),
        )
        .unwrap();
        let r = sol.reconstruct(3, &DefaultScenario::fixed(Some(1.7), 0, 1.0)).unwrap();
        assert_eq!(r.default_node, None);
        for k in 0..=8 {
            assert_eq!(r.y[k], sol.pre_default.y(3, k).unwrap());
        }
        let r = sol.reconstruct(3, &DefaultScenario::fixed(Some(0.5), 0, 1.0)).unwrap();
        assert_eq!(r.default_node, Some(4));
        assert_eq!(r.y[4], sol.post_default.y(4, 0, 3, 4).unwrap().unwrap());
        assert_eq!(r.y[3], sol.pre_default.y(3, 3).unwrap());
        let u = r.u.unwrap();
        assert_eq!(u.len(), 4);
        for (k, uk) in u.iter().enumerate() {
            let diag = sol.post_default.y(k, 0, 3, k).unwrap().unwrap();
            assert_eq!(uk[0] + sol.pre_default.y(3, k).unwrap(), diag);
        }
    }

    #[test]
    fn missing_theta_node_is_a_configuration_error() {
        let ens = ensemble(400, 8, 3);
        let c = claim_terminal_brownian(1.0).negated();
        let grid = ThetaGrid::strided(8, 4).unwrap();
        let sol = solve_bsdej(&DriverSpec::zero(), &c, &grid, &ens, &SolverConfig::default()).unwrap();
        assert!(matches!(
            sol.reconstruct(0, &DefaultScenario::fixed(Some(0.3), 0, 1.0)),
            Err(Error::InvalidConfig(_))
        ));
        let r = sol.reconstruct(0, &DefaultScenario::fixed(Some(0.5), 0, 1.0)).unwrap();
        assert!(r.u.is_none());
    }

    #[test]
    fn terminal_values_are_exact() {
        let ens = ensemble(300, 5, 4);
        let c = claim_terminal_brownian(1.0).negated();
        let sol = solve_bsdej(&DriverSpec::linear_z(), &c, &ThetaGrid::full(5), &ens, &SolverConfig::default()).unwrap();
        for i in 0..300 {
            let w = ens.path(i)[5];
            assert_eq!(sol.pre_default.y(i, 5).unwrap(), (-w).clamp(-6.0, 6.0));
            assert_eq!(sol.post_default.y(2, 0, i, 5).unwrap(), Some((-w).clamp(-6.0, 6.0)));
        }
    }

    #[test]
    fn jump_size_coupling_requires_full_grid() {
        let ens = ensemble(300, 6, 5);
        let c = claim_terminal_brownian(1.0);
        let coupled = DriverSpec::custom("u", |_, _, _, u| u[0], |_, _, _, _, _| 0.0, false, true, true);
        let fam = solve_bsde1_family(&coupled, &c, &ThetaGrid::strided(6, 2).unwrap(), &ens, &SolverConfig::default())
            .unwrap();
        assert!(solve_bsde0(&coupled, &c, &ens, Some(&fam), &SolverConfig::default()).is_err());
        assert!(solve_bsde0(&coupled, &c, &ens, None, &SolverConfig::default()).is_err());
    }

    #[test]
    fn jump_size_coupling_solves() {
        // g¹ = 0 and ξ¹ = ξ⁰ + 1 make Y¹(t) − Y⁰ = 1 − gap, where gap is what
        // g⁰ = u adds to Y⁰; the explicit scheme gives gap_k = 1 − (1 − dt)^(n−k)
        let ens = ensemble(2000, 10, 6);
        let base = claim_terminal_brownian(1.0);
        let c = DecomposedClaim::new(
            "shifted default branch",
            1.0,
            10.0,
            |p: &[f64]| *p.last().unwrap(),
            |p: &[f64], _, _| *p.last().unwrap() + 1.0,
        );
        let coupled = DriverSpec::custom("u", |_, _, _, u| u[0], |_, _, _, _, _| 0.0, false, true, true);
        let sol = solve_bsdej(&coupled, &c, &ThetaGrid::full(10), &ens, &SolverConfig::default()).unwrap();
        let plain = solve_bsde0(&DriverSpec::zero(), &base.with_bound(10.0), &ens, None, &SolverConfig::default())
            .unwrap();
        for k in 0..10 {
            let gap = sol.pre_default.y(5, k).unwrap() - plain.y(5, k).unwrap();
            let expected = 1.0 - 0.9f64.powi(10 - k as i32);
            assert!((gap - expected).abs() < 1e-9, "{k}: {gap} vs {expected}");
        }
    }
}
