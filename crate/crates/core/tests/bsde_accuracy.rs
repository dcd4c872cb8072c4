use std::time::Instant;

use enlarged_risk::bsde::{solve_bsde0, solve_bsde1_family, solve_bsdej, DriverSpec, SolverConfig, ThetaGrid};
use enlarged_risk::claims::{claim_default_fraction, claim_terminal_brownian, ClaimKind, DecomposedClaim};
use enlarged_risk::entropic::{closed_form_surface, RiskToleranceProfile};
use enlarged_risk::paths::{simulate_brownian, simulate_defaults, simulate_intensity, IntensityParams, TimeGrid};

fn grid(n: usize) -> TimeGrid {
    TimeGrid::new(0.0, 1.0, n).unwrap()
}

#[test]
fn entropic_pre_default_initial_value() {
    let start = Instant::now();
    let ens = simulate_brownian(grid(100), 100_000, 11).unwrap();
    let terminal = claim_terminal_brownian(1.0).negated();
    let driver = DriverSpec::entropic(RiskToleranceProfile::standard());
    let sol = solve_bsde0(&driver, &terminal, &ens, None, &SolverConfig::default()).unwrap();
    let y0 = sol.initial_value();
    println!("entropic Y0_0 = {y0} in {:?}", start.elapsed());
    assert!((y0 - 0.5).abs() <= 0.02, "{y0}");
}

#[test]
fn linear_driver_initial_value() {
    let ens = simulate_brownian(grid(100), 100_000, 12).unwrap();
    let terminal = claim_terminal_brownian(1.0);
    let sol = solve_bsde0(&DriverSpec::linear_z(), &terminal, &ens, None, &SolverConfig::default()).unwrap();
    let y0 = sol.initial_value();
    assert!((y0 - 1.0).abs() <= 0.02, "{y0}");
    // Y_t = W_t + (T − t), Z ≡ 1
    for k in [25, 50, 75] {
        for i in 0..20 {
            let w = ens.path(i)[k];
            let t = ens.grid().time(k);
            assert!((sol.y(i, k).unwrap() - (w + 1.0 - t)).abs() < 0.02);
            assert!((sol.z(i, k).unwrap().unwrap() - 1.0).abs() < 0.05);
        }
    }
}

#[test]
fn post_default_family_at_origin() {
    let ens = simulate_brownian(grid(50), 20_000, 13).unwrap();
    let theta = ThetaGrid::from_nodes(vec![0], vec![0]).unwrap();
    let profile = RiskToleranceProfile::standard();
    let terminal = claim_terminal_brownian(1.0).negated();
    let fam = solve_bsde1_family(&DriverSpec::entropic(profile), &terminal, &theta, &ens, &SolverConfig::default())
        .unwrap();
    let y = fam.y(0, 0, 0, 0).unwrap().unwrap();
    assert!((y - 1.0 / (2.0 * profile.gamma(0.0))).abs() <= 0.02, "{y}");
    let fam = solve_bsde1_family(&DriverSpec::linear_z(), &terminal.negated(), &theta, &ens, &SolverConfig::default())
        .unwrap();
    let y = fam.y(0, 0, 0, 0).unwrap().unwrap();
    assert!((y - 1.0).abs() <= 0.02, "{y}");
}

#[test]
fn reconstruction_matches_closed_form() {
    let start = Instant::now();
    let n = 100;
    let ens = simulate_brownian(grid(n), 20_000, 14).unwrap();
    let params = IntensityParams { mu: 1.0, sigma: 0.1, l0: 1.0 };
    let intens = simulate_intensity(&ens, params).unwrap();
    let scen = simulate_defaults(&ens, &intens, 1.0, 1);
    let profile = RiskToleranceProfile::standard();
    let claim = claim_default_fraction(1.0);
    let sol = solve_bsdej(
        &DriverSpec::entropic(profile),
        &claim.negated(),
        &ThetaGrid::full(n),
        &ens,
        &SolverConfig::default(),
    )
    .unwrap();
    println!("solve in {:?}", start.elapsed());
    let snapped: Vec<_> = scen.iter().map(|s| s.snapped(ens.grid(), 1.0)).collect();
    let ids: Vec<usize> = (0..100).collect();
    let surface = closed_form_surface(&ens, &snapped, &ids, ClaimKind::DefaultFraction, &profile, 1.0).unwrap();
    let mut worst: f64 = 0.0;
    let mut defaults = 0;
    for track in &surface.tracks {
        let r = sol.reconstruct(track.path_id, &snapped[track.path_id]).unwrap();
        defaults += r.default_node.is_some() as usize;
        for k in 0..=n {
            worst = worst.max((r.y[k] - track.rho[k]).abs());
        }
    }
    println!("reconstruction sup gap {worst} over {defaults} defaults, {:?}", start.elapsed());
    assert!(worst <= 0.03, "{worst}");
}

/// `ξ = −a W_T²`, whose pre-default entropic risk is
/// `−½ ln(1 − 2a(T−t)) + a W_t²/(1 − 2a(T−t))`.
fn negative_square(a: f64) -> DecomposedClaim {
    DecomposedClaim::new(
        "negative_square",
        1.0,
        6.0,
        move |p: &[f64]| -a * p.last().unwrap().powi(2),
        move |p: &[f64], _, _| -a * p.last().unwrap().powi(2),
    )
}

#[test]
fn refinement_reduces_error() {
    let a = 0.2;
    let exact = -0.5 * (1.0f64 - 2.0 * a).ln();
    let driver = DriverSpec::entropic(RiskToleranceProfile::standard());
    let terminal = negative_square(a).negated();
    let errors: Vec<f64> = [(10_000, 10), (20_000, 20), (40_000, 40)]
        .into_iter()
        .map(|(n, steps)| {
            let ens = simulate_brownian(grid(steps), n, 21).unwrap();
            let sol = solve_bsde0(&driver, &terminal, &ens, None, &SolverConfig::default()).unwrap();
            (sol.initial_value() - exact).abs()
        })
        .collect();
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
}

#[test]
fn ordered_terminals_give_ordered_solutions() {
    // ξ̄ = W_T + 0.2 tanh(W_T)² ≥ ξ = W_T, so −ξ̄ ≤ −ξ and the risk is ordered
    let ens = simulate_brownian(grid(50), 20_000, 22).unwrap();
    let profile = RiskToleranceProfile::standard();
    let driver = DriverSpec::entropic(profile);
    let low = claim_terminal_brownian(1.0);
    let high = DecomposedClaim::new(
        "bumped",
        1.0,
        6.0,
        |p: &[f64]| {
            let w = *p.last().unwrap();
            w + 0.2 * w.tanh().powi(2)
        },
        |p: &[f64], _, _| {
            let w = *p.last().unwrap();
            w + 0.2 * w.tanh().powi(2)
        },
    );
    let theta = ThetaGrid::strided(50, 10).unwrap();
    let a = solve_bsdej(&driver, &low.negated(), &theta, &ens, &SolverConfig::default()).unwrap();
    let b = solve_bsdej(&driver, &high.negated(), &theta, &ens, &SolverConfig::default()).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        for k in 0..=50 {
            worst = worst.max(b.pre_default.y(i, k).unwrap() - a.pre_default.y(i, k).unwrap());
            for &node in theta.nodes().iter().filter(|&&n| n <= k) {
                let hi = b.post_default.y(node, 0, i, k).unwrap().unwrap();
                let lo = a.post_default.y(node, 0, i, k).unwrap().unwrap();
                worst = worst.max(hi - lo);
            }
        }
    }
    assert!(worst <= 0.02, "{worst}");
}

#[test]
fn terminal_step_is_exact() {
    let ens = simulate_brownian(grid(20), 5_000, 23).unwrap();
    let claim = claim_default_fraction(1.0);
    let sol = solve_bsdej(
        &DriverSpec::entropic(RiskToleranceProfile::standard()),
        &claim.negated(),
        &ThetaGrid::full(20),
        &ens,
        &SolverConfig::default(),
    )
    .unwrap();
    for i in 0..200 {
        let p = ens.path(i);
        assert!((sol.pre_default.y(i, 20).unwrap() + claim.xi0(p)).abs() <= 1e-8);
        for node in [0, 7, 20] {
            let theta = ens.grid().time(node);
            let y = sol.post_default.y(node, 0, i, 20).unwrap().unwrap();
            assert!((y + claim.xi1(p, theta, 0)).abs() <= 1e-8);
        }
    }
}
