//! Reference Brownian filtration, intensity state and the Cox default time.
//!
//! The intensity state follows `dL = μ L dt + σ L dW` and is evaluated with
//! its lognormal solution on grid nodes. The default intensity is
//! `λ⁰ = exp(−L)`, the integrated hazard `Λ` accumulates it with the
//! trapezoidal rule, and the default time is the first time `Λ` reaches an
//! independent unit exponential threshold `η`.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{substream, StreamTag};

/// Uniform time grid `t_start = t_0 < … < t_n = t_end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_start: f64,
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidConfig("time grid needs at least one step".into()));
        }
        if !(t_start.is_finite() && t_end.is_finite()) || t_end <= t_start {
            return Err(Error::InvalidConfig(format!(
                "time grid needs t_start < t_end, got [{t_start}, {t_end}]"
            )));
        }
        Ok(Self {
            t_start,
            t_end,
            n_steps,
        })
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / self.n_steps as f64
    }

    /// Time of node `k`; the last node is exactly `t_end`.
    pub fn time(&self, k: usize) -> f64 {
        if k >= self.n_steps {
            self.t_end
        } else {
            self.t_start + (self.t_end - self.t_start) * (k as f64 / self.n_steps as f64)
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|k| self.time(k)).collect()
    }

    /// Index of the node at time `t`. Off-grid times are rejected rather than
    /// interpolated.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let dt = self.dt();
        let x = (t - self.t_start) / dt;
        let k = x.round();
        if !(0.0..=self.n_steps as f64).contains(&k) || (x - k).abs() > 1e-9 {
            return Err(Error::GridAlignment { t, dt });
        }
        Ok(k as usize)
    }

    /// First node whose time is `>= t`, if the grid reaches `t`.
    pub fn first_index_at_or_after(&self, t: f64) -> Option<usize> {
        if t <= self.t_start {
            return Some(0);
        }
        let x = (t - self.t_start) / self.dt();
        let near = x.round();
        let k = if (x - near).abs() <= 1e-9 { near } else { x.ceil() };
        (k <= self.n_steps as f64).then_some(k as usize)
    }
}

/// Brownian paths sampled on a common grid, stored row-major by path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
    w: Vec<f64>,
}

impl PathEnsemble {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let n = self.grid.n_nodes();
        &self.w[i * n..(i + 1) * n]
    }

    /// Values of `W` at node `k` across all paths.
    pub fn column(&self, k: usize) -> Vec<f64> {
        let n = self.grid.n_nodes();
        (0..self.n_paths).map(|i| self.w[i * n + k]).collect()
    }

    pub fn paths(&self) -> impl Iterator<Item = &[f64]> {
        self.w.chunks_exact(self.grid.n_nodes())
    }

    /// Builds an ensemble from explicit paths (each must start at 0).
    pub fn from_paths(grid: TimeGrid, paths: Vec<Vec<f64>>) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::InvalidConfig("ensemble needs at least one path".into()));
        }
        let mut w = Vec::with_capacity(paths.len() * grid.n_nodes());
        for (i, p) in paths.iter().enumerate() {
            if p.len() != grid.n_nodes() {
                return Err(Error::InvalidConfig(format!(
                    "path {i} has {} values, grid has {} nodes",
                    p.len(),
                    grid.n_nodes()
                )));
            }
            if p[0] != 0.0 {
                return Err(Error::InvalidConfig(format!("path {i} does not start at 0")));
            }
            w.extend_from_slice(p);
        }
        Ok(Self {
            grid,
            n_paths: paths.len(),
            seed: 0,
            w,
        })
    }
}

/// Simulates `n_paths` Brownian paths. Path `i` uses its own stream, so the
/// ensemble is identical for any thread count.
pub fn simulate_brownian(grid: TimeGrid, n_paths: usize, seed: u64) -> Result<PathEnsemble> {
    if n_paths == 0 {
        return Err(Error::InvalidConfig("n_paths must be positive".into()));
    }
    let n = grid.n_nodes();
    let sqrt_dt = grid.dt().sqrt();
    let mut w = vec![0.0; n_paths * n];
    w.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let mut rng = substream(seed, StreamTag::Brownian, i as u64);
        let mut acc = 0.0;
        for slot in row.iter_mut().skip(1) {
            let z: f64 = StandardNormal.sample(&mut rng);
            acc += sqrt_dt * z;
            *slot = acc;
        }
    });
    Ok(PathEnsemble {
        grid,
        n_paths,
        seed,
        w,
    })
}

/// Parameters of the intensity state `dL = μ L dt + σ L dW`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityParams {
    pub mu: f64,
    pub sigma: f64,
    pub l0: f64,
}

/// `λ⁰ = ν(L)` with `ν(x) = exp(−x)`.
pub fn nu(x: f64) -> f64 {
    (-x).exp()
}

/// Intensity state, default intensity and integrated hazard along one path.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityPath {
    pub l: Vec<f64>,
    pub lambda0: Vec<f64>,
    pub hazard: Vec<f64>,
}

impl IntensityPath {
    /// Builds the path from an explicit intensity array on `grid`. The state
    /// is recovered as `L = −ln λ⁰`.
    pub fn from_lambda(grid: &TimeGrid, lambda0: Vec<f64>) -> Result<Self> {
        if lambda0.len() != grid.n_nodes() {
            return Err(Error::InvalidConfig(format!(
                "intensity has {} values, grid has {} nodes",
                lambda0.len(),
                grid.n_nodes()
            )));
        }
        if lambda0.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::InvalidConfig("intensity must be finite and non-negative".into()));
        }
        let l = lambda0.iter().map(|&x| -x.ln()).collect();
        let hazard = trapezoid_cumulative(&lambda0, grid.dt());
        Ok(Self { l, lambda0, hazard })
    }
}

fn trapezoid_cumulative(values: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for pair in values.windows(2) {
        acc += 0.5 * dt * (pair[0] + pair[1]);
        out.push(acc);
    }
    out
}

/// Intensity along a single Brownian path, using the exact lognormal state.
pub fn intensity_for_path(grid: &TimeGrid, w: &[f64], params: IntensityParams) -> Result<IntensityPath> {
    if !(params.l0 > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "intensity state needs L0 > 0, got {}",
            params.l0
        )));
    }
    let drift = params.mu - 0.5 * params.sigma * params.sigma;
    let l: Vec<f64> = w
        .iter()
        .enumerate()
        .map(|(k, &wk)| {
            let t = grid.time(k) - grid.t_start();
            params.l0 * (drift * t + params.sigma * wk).exp()
        })
        .collect();
    let lambda0: Vec<f64> = l.iter().map(|&x| nu(x)).collect();
    let hazard = trapezoid_cumulative(&lambda0, grid.dt());
    Ok(IntensityPath { l, lambda0, hazard })
}

/// Intensity paths for every member of the ensemble.
pub fn simulate_intensity(paths: &PathEnsemble, params: IntensityParams) -> Result<Vec<IntensityPath>> {
    if !(params.l0 > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "intensity state needs L0 > 0, got {}",
            params.l0
        )));
    }
    (0..paths.n_paths())
        .into_par_iter()
        .map(|i| intensity_for_path(paths.grid(), paths.path(i), params))
        .collect()
}

/// Sampled default time and mark of one scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefaultScenario {
    /// `None` encodes `τ = +∞` (no default within the simulated horizon).
    pub tau: Option<f64>,
    pub eta: f64,
    pub mark: usize,
    pub survived_horizon: bool,
}

impl DefaultScenario {
    pub fn new(tau: Option<f64>, eta: f64, mark: usize, maturity: f64) -> Self {
        let survived_horizon = tau.map_or(true, |t| t > maturity);
        Self {
            tau,
            eta,
            mark,
            survived_horizon,
        }
    }

    /// A scenario defaulting at `tau` (or never) with an unspecified threshold.
    pub fn fixed(tau: Option<f64>, mark: usize, maturity: f64) -> Self {
        Self::new(tau, f64::NAN, mark, maturity)
    }

    /// Grid node at which the default is registered: the first node `>= τ`,
    /// or `None` when that node lies beyond `maturity`.
    pub fn default_node(&self, grid: &TimeGrid, maturity: f64) -> Option<usize> {
        let tau = self.tau?;
        if tau > maturity + 1e-12 {
            return None;
        }
        let k = grid.first_index_at_or_after(tau)?;
        (grid.time(k) <= maturity + 1e-12).then_some(k)
    }

    /// The same scenario with `τ` moved to its registering grid node.
    pub fn snapped(&self, grid: &TimeGrid, maturity: f64) -> Self {
        match self.default_node(grid, maturity) {
            Some(k) => Self::new(Some(grid.time(k)), self.eta, self.mark, maturity),
            None if self.tau.map_or(false, |t| t <= maturity) => {
                Self::new(None, self.eta, self.mark, maturity)
            }
            None => *self,
        }
    }

    pub fn defaulted_by(&self, t: f64) -> bool {
        self.tau.map_or(false, |tau| tau <= t)
    }
}

/// First time the hazard reaches `eta`, by linear inversion between the
/// bracketing nodes. `None` when the hazard stays below `eta` on the grid.
pub fn default_time_from_threshold(intensity: &IntensityPath, grid: &TimeGrid, eta: f64) -> Option<f64> {
    let h = &intensity.hazard;
    if eta <= h[0] {
        return Some(grid.time(0));
    }
    let k = h.partition_point(|&x| x < eta);
    if k >= h.len() {
        return None;
    }
    let (h0, h1) = (h[k - 1], h[k]);
    let (t0, t1) = (grid.time(k - 1), grid.time(k));
    let frac = if h1 > h0 { (eta - h0) / (h1 - h0) } else { 1.0 };
    Some(t0 + frac * (t1 - t0))
}

/// Draws `η ~ Exp(1)` from `eta_stream` and returns the resulting scenario.
/// The mark is drawn uniformly from `n_marks` values on `mark_stream`.
pub fn sample_default<R: Rng, M: Rng>(
    intensity: &IntensityPath,
    grid: &TimeGrid,
    maturity: f64,
    n_marks: usize,
    eta_stream: &mut R,
    mark_stream: &mut M,
) -> DefaultScenario {
    let eta: f64 = Exp1.sample(eta_stream);
    let tau = default_time_from_threshold(intensity, grid, eta);
    let mark = if n_marks > 1 {
        mark_stream.random_range(0..n_marks)
    } else {
        0
    };
    DefaultScenario::new(tau, eta, mark, maturity)
}

/// Default scenarios for every path, each from its own threshold stream.
pub fn simulate_defaults(
    paths: &PathEnsemble,
    intensities: &[IntensityPath],
    maturity: f64,
    n_marks: usize,
) -> Vec<DefaultScenario> {
    let seed = paths.seed();
    intensities
        .par_iter()
        .enumerate()
        .map(|(i, intensity)| {
            let mut eta_rng = substream(seed, StreamTag::DefaultThreshold, i as u64);
            let mut mark_rng = substream(seed, StreamTag::Mark, i as u64);
            sample_default(intensity, paths.grid(), maturity, n_marks.max(1), &mut eta_rng, &mut mark_rng)
        })
        .collect()
}

/// Azéma survival `P(t < τ | F_t) = exp(−Λ_t)` under the Cox construction.
pub fn azema_survival(intensity: &IntensityPath, grid: &TimeGrid, t: f64) -> Result<f64> {
    let k = grid.index_of(t)?;
    Ok((-intensity.hazard[k]).exp())
}
