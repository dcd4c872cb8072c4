use std::fmt::Write as _;
use std::path::Path;
use std::process::Command;

use anyhow::{Context, Result};

use enlarged_risk::axioms::{
    check_all_axioms, check_flow, merge_reports, AxiomReport, BsdeEngine, ClaimParams, ClosedFormEngine, RiskEngine,
    StoppingRule, TreeEngine,
};
use enlarged_risk::bsde::{solve_bsdej, ThetaGrid};
use enlarged_risk::claims::ClaimKind;
use enlarged_risk::dual::{run_dual_suite, DualSuiteConfig, TreeDriver, TreeSpec};
use enlarged_risk::entropic::{closed_form_surface, rho_affine};
use enlarged_risk::paths::{simulate_brownian, simulate_defaults, simulate_intensity, DefaultScenario, PathEnsemble};
use enlarged_risk::Error;

use crate::config::{DriverId, EngineId, RunConfig};
use crate::output::{fmt_f64, write_file, write_reports, write_rows, Row, SURFACE_HEADER, TRAJECTORY_HEADER};

/// Outcome of a subcommand: `passed` is false when a check failed.
pub struct RunStatus {
    pub passed: bool,
}

fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

fn write_manifest(out: &Path, command: &str, cfg: &RunConfig) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "command = \"{command}\"");
    let _ = writeln!(s, "seed = {}", cfg.seed);
    let _ = writeln!(s, "git_describe = \"{}\"", git_describe());
    let _ = writeln!(s, "\n[config]");
    s.push_str(&cfg.to_toml());
    write_file(out, "manifest.toml", &s)
}

struct Simulation {
    ensemble: PathEnsemble,
    scenarios: Vec<DefaultScenario>,
}

fn simulate_model(cfg: &RunConfig) -> Result<Simulation> {
    let ensemble = simulate_brownian(cfg.grid()?, cfg.n_paths, cfg.seed).context("paths")?;
    let intensities = simulate_intensity(&ensemble, cfg.intensity()).context("paths")?;
    let scenarios = simulate_defaults(&ensemble, &intensities, cfg.maturity, cfg.n_marks);
    Ok(Simulation { ensemble, scenarios })
}

fn figure_paths(cfg: &RunConfig, requested: Option<usize>, default: usize) -> Vec<usize> {
    (0..requested.unwrap_or(default).min(cfg.n_paths)).collect()
}

fn tau_or_inf(s: &DefaultScenario) -> f64 {
    s.tau.unwrap_or(f64::INFINITY)
}

/// Closed-form `ρ`, `ρ⁰`, `ρ¹` along simulated paths.
pub fn run_simulate(cfg: &RunConfig, out: &Path, paths_for_figure: Option<usize>) -> Result<RunStatus> {
    let sim = simulate_model(cfg)?;
    let ids = figure_paths(cfg, paths_for_figure, cfg.n_paths);
    let claim: ClaimKind = cfg.claim.into();
    let surface = closed_form_surface(&sim.ensemble, &sim.scenarios, &ids, claim, &cfg.profile()?, cfg.maturity)
        .context("entropic")?;
    let mut rows = Vec::with_capacity(ids.len() * (surface.maturity_index + 1));
    for track in &surface.tracks {
        let w = sim.ensemble.path(track.path_id);
        for k in 0..=surface.maturity_index {
            rows.push(Row {
                path_id: track.path_id,
                t: surface.grid.time(k),
                w: w[k],
                tau: tau_or_inf(&track.scenario),
                values: [track.rho[k], track.rho0[k], track.rho1_display(k)],
            });
        }
    }
    write_file(out, "trajectories.csv", &write_rows(TRAJECTORY_HEADER, &rows))?;
    write_manifest(out, "simulate", cfg)?;
    Ok(RunStatus { passed: true })
}

/// `Y⁰_0` for the example claims, which are affine in `W_T` before default.
fn closed_form_y0(driver: DriverId, claim: ClaimKind, maturity: f64) -> f64 {
    let (a, b) = claim.no_default_affine();
    match driver {
        DriverId::Entropic => rho_affine(a, b, 0.0, 0.0, maturity, 1.0),
        DriverId::Zero => -b,
        // the drift of W under the Girsanov measure is 1
        DriverId::LinearZ => -(a * maturity + b),
    }
}

/// Regression solution, per-step diagnostics and the comparison table.
pub fn run_solve(cfg: &RunConfig, out: &Path, paths_for_figure: Option<usize>) -> Result<RunStatus> {
    let sim = simulate_model(cfg)?;
    let grid = *sim.ensemble.grid();
    let n = grid.n_steps();
    let ids = figure_paths(cfg, paths_for_figure, 5);
    let mut nodes = ThetaGrid::strided(n, cfg.theta_stride).context("bsde")?.nodes().to_vec();
    nodes.extend(ids.iter().filter_map(|&i| sim.scenarios[i].default_node(&grid, cfg.maturity)));
    let theta = ThetaGrid::from_nodes(nodes, (0..cfg.n_marks).collect()).context("bsde")?;
    let claim: ClaimKind = cfg.claim.into();
    let terminal = claim.build(cfg.maturity).negated();
    let driver = cfg.driver_spec()?;
    let sol = solve_bsdej(&driver, &terminal, &theta, &sim.ensemble, &cfg.solver()).context("bsde")?;

    let mut rows = Vec::new();
    for &i in &ids {
        let scenario = sim.scenarios[i];
        let rec = sol.reconstruct(i, &scenario).context("bsde")?;
        let w = sim.ensemble.path(i);
        for k in 0..=n {
            let y1 = match rec.default_node {
                Some(kd) if k >= kd => rec.y[k],
                _ => 0.0,
            };
            rows.push(Row {
                path_id: i,
                t: grid.time(k),
                w: w[k],
                tau: tau_or_inf(&scenario),
                values: [rec.y[k], sol.pre_default.y(i, k).context("bsde")?, y1],
            });
        }
    }
    write_file(out, "surfaces.csv", &write_rows(SURFACE_HEADER, &rows))?;

    let mut diag = String::from("# Y = rho(xi): the solver runs on the terminal value -xi\nbranch,step,condition,residual_rms\n");
    for d in sol.pre_default.diagnostics() {
        let _ = writeln!(diag, "pre_default,{},{},{}", d.step, fmt_f64(d.condition), fmt_f64(d.residual_rms));
    }
    for d in sol.post_default.diagnostics() {
        let _ = writeln!(diag, "post_default,{},{},{}", d.step, fmt_f64(d.condition), fmt_f64(d.residual_rms));
    }
    write_file(out, "diagnostics.csv", &diag)?;

    let y0 = sol.pre_default.initial_value();
    let reference = closed_form_y0(cfg.driver, claim, cfg.maturity);
    let mut table = String::from("quantity,bsde,closed_form,abs_gap\n");
    let _ = writeln!(table, "y0_initial,{},{},{}", fmt_f64(y0), fmt_f64(reference), fmt_f64((y0 - reference).abs()));
    if cfg.driver == DriverId::Entropic && !ids.is_empty() {
        let snapped: Vec<DefaultScenario> = sim.scenarios.iter().map(|s| s.snapped(&grid, cfg.maturity)).collect();
        let surface = closed_form_surface(&sim.ensemble, &snapped, &ids, claim, &cfg.profile()?, cfg.maturity)
            .context("entropic")?;
        let (mut gap0, mut gap) = (0.0f64, 0.0f64);
        for (track, chunk) in surface.tracks.iter().zip(rows.chunks(n + 1)) {
            for k in 0..=n {
                gap0 = gap0.max((chunk[k].values[1] - track.rho0[k]).abs());
                gap = gap.max((chunk[k].values[0] - track.rho[k]).abs());
            }
        }
        let _ = writeln!(table, "y0_sup_gap,,,{}", fmt_f64(gap0));
        let _ = writeln!(table, "y_sup_gap,,,{}", fmt_f64(gap));
    }
    write_file(out, "comparison.csv", &table)?;
    write_manifest(out, "solve", cfg)?;
    Ok(RunStatus { passed: true })
}

fn axiom_reports<E: RiskEngine>(
    engine: &E,
    cfg: &RunConfig,
    flows: &[(E::Claim, StoppingRule, f64)],
) -> Result<Vec<AxiomReport>> {
    let mut reports = check_all_axioms(engine, cfg.axiom_samples, cfg.seed).context("axioms")?;
    for (claim, rule, tol) in flows {
        match check_flow(engine, claim, rule, *tol, 40, cfg.seed) {
            Ok(r) => reports.push(r),
            Err(e @ Error::Capability { .. }) => eprintln!("axioms: {e}; flow check skipped"),
            Err(e) => return Err(e).context("axioms"),
        }
    }
    Ok(reports)
}

fn dual_reports(cfg: &RunConfig, out: &Path) -> Result<Vec<AxiomReport>> {
    let tree = TreeSpec::default().build().context("dual")?;
    write_file(out, "tree.txt", &tree.to_text())?;
    let suite = DualSuiteConfig {
        measures: cfg.dual_measures,
        oracle_measures: cfg.dual_measures.min(50),
        seed: cfg.seed,
        ..Default::default()
    };
    let reports = run_dual_suite(&tree, &cfg.profile()?, &suite).context("dual")?;
    write_file(out, "dual.csv", &write_reports(&reports))?;
    Ok(reports)
}

/// Axiom suite on the configured engine plus the dual suite.
pub fn run_verify(cfg: &RunConfig, out: &Path) -> Result<RunStatus> {
    let profile = cfg.profile()?;
    let claim: ClaimKind = cfg.claim.into();
    let axioms = match cfg.engine {
        EngineId::ClosedForm => {
            let engine = ClosedFormEngine::new(profile, cfg.maturity, 4, 16).context("axioms")?;
            let c = engine.claim(claim.build(cfg.maturity));
            let flows = [
                (c.clone(), StoppingRule::Deterministic(cfg.maturity / 2.0), 1e-10),
                (c, StoppingRule::DefaultTriggered, 1e-10),
            ];
            axiom_reports(&engine, cfg, &flows)?
        }
        EngineId::Tree => {
            let tree = TreeSpec::default().build().context("dual")?;
            let dt = tree.period_length();
            let engine = TreeEngine::new(tree, TreeDriver::Entropic(profile));
            let c = engine.generated_claim(&ClaimParams { a: 1.3, b: 0.8, c: -0.6, d: 0.5 });
            let flows = [
                (c.clone(), StoppingRule::Deterministic(dt), 1e-12),
                (c, StoppingRule::DefaultTriggered, 1e-12),
            ];
            axiom_reports(&engine, cfg, &flows)?
        }
        EngineId::Bsde => {
            let ensemble = simulate_brownian(cfg.grid()?, cfg.n_paths, cfg.seed).context("paths")?;
            let engine = BsdeEngine::new(cfg.driver_spec()?, ensemble, cfg.solver());
            let c = claim.build(cfg.maturity);
            axiom_reports(&engine, cfg, &[(c, StoppingRule::DefaultTriggered, 1e-10)])?
        }
    };
    let axioms = merge_reports(axioms);
    write_file(out, "axioms.csv", &write_reports(&axioms))?;
    let dual = dual_reports(cfg, out)?;
    write_manifest(out, "verify", cfg)?;
    Ok(RunStatus {
        passed: axioms.iter().chain(&dual).all(AxiomReport::passed),
    })
}

/// Dual suite on the default tree.
pub fn run_tree_check(cfg: &RunConfig, out: &Path) -> Result<RunStatus> {
    let dual = dual_reports(cfg, out)?;
    write_manifest(out, "tree-check", cfg)?;
    Ok(RunStatus {
        passed: dual.iter().all(AxiomReport::passed),
    })
}
