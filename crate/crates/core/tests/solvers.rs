//! Fixed points, periodic orbits and the spectral estimates at depth 8.

use std::sync::OnceLock;

use renormlab_core::decompspace::{pure_decomposition, Decomposition};
use renormlab_core::renorm::{
    find_fixed_point, find_fixed_point_from, find_periodic_orbit, renormalization_orbit_diagnostics,
    solve_peak_value, DecomposedMap,
};
use renormlab_core::spectral::{scaling_ratios, superstable_cascade, unstable_eigenvalue, DEFAULT_EPS};
use renormlab_core::{FixedPointReport, SolverConfig};

fn report(alpha: f64) -> &'static FixedPointReport {
    static REPORTS: [OnceLock<FixedPointReport>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    let slot = match alpha {
        a if a == 1.5 => 0,
        a if a == 2.0 => 1,
        _ => 2,
    };
    REPORTS[slot].get_or_init(|| find_fixed_point(&SolverConfig::with_alpha(alpha)).unwrap())
}

#[test]
fn fixed_point_is_self_consistent() {
    let config = SolverConfig::default();
    let r = report(2.0);
    assert!(r.residual_geometry <= 10.0 * config.tol, "{}", r.residual_geometry);
    assert!(r.residual_peak <= 10.0 * config.tol, "{}", r.residual_peak);
    let pure = pure_decomposition(&r.geometry, 2.0, config.grid, 1e-12).unwrap();
    assert!(pure.distance(&r.decomposition).unwrap() <= 2.0 * config.tol);
    assert_eq!(r.certify().unwrap(), (r.residual_geometry, r.residual_peak));
}

#[test]
fn period_one_is_the_fixed_point() {
    let config = SolverConfig {
        depth: 4,
        ..Default::default()
    };
    let fixed = find_fixed_point(&config).unwrap();
    let orbit = find_periodic_orbit(&config, 1).unwrap();
    assert_eq!(orbit.cycle.len(), 1);
    let element = &orbit.cycle[0];
    assert!((element.t_star - fixed.t_star).abs() <= config.tol);
    assert!(element.geometry.distance(&fixed.geometry).unwrap() <= config.tol);
}

#[test]
fn period_two_cycle_closes() {
    let config = SolverConfig {
        depth: 4,
        ..Default::default()
    };
    let orbit = find_periodic_orbit(&config, 2).unwrap();
    assert_eq!(orbit.cycle.len(), 2);
    assert!(orbit.closure_residual <= 1e-6, "{}", orbit.closure_residual);
    assert!(orbit.cycle.iter().all(|r| r.closure_residual == Some(orbit.closure_residual)));
    // each element renormalizes onto the next
    for i in 0..2 {
        let step = orbit.cycle[i].map().unwrap().renormalize().unwrap();
        let next = &orbit.cycle[(i + 1) % 2];
        assert!((step.rho - next.t_star).abs() <= 1e-6);
    }
    // a period-one point is also a period-two point
    let fixed = find_fixed_point(&config).unwrap();
    if orbit.coincides_with_fixed_point {
        assert!((orbit.cycle[0].t_star - fixed.t_star).abs() <= 1e-6);
    }
    assert!(matches!(
        find_periodic_orbit(&config, 0),
        Err(renormlab_core::Error::InvalidConfig(_))
    ));
}

#[test]
fn eigenvalue_expands_and_is_step_robust() {
    let r = report(2.0);
    let coarse = unstable_eigenvalue(r, DEFAULT_EPS).unwrap().value;
    let fine = unstable_eigenvalue(r, DEFAULT_EPS / 2.0).unwrap().value;
    assert!(coarse > 1.0);
    assert!((coarse - fine).abs() <= 0.01 * coarse, "{coarse} vs {fine}");
}

#[test]
fn eigenvalue_is_universal_across_starts() {
    let config = SolverConfig::default();
    let phi = Decomposition::random_analytic(config.depth, config.grid, 0.3, 0.35, 42).unwrap();
    let t = solve_peak_value(&phi, 2.0).unwrap().t;
    let g = DecomposedMap::new(phi, t, 2.0).unwrap().dynamical_geometry().unwrap();
    let other = find_fixed_point_from(&config, g, t).unwrap();
    let a = unstable_eigenvalue(report(2.0), DEFAULT_EPS).unwrap().value;
    let b = unstable_eigenvalue(&other, DEFAULT_EPS).unwrap().value;
    assert!((a - b).abs() <= 0.01 * a, "{a} vs {b}");
}

#[test]
fn eigenvalue_depends_on_the_exponent() {
    let deltas: Vec<f64> = [1.5, 2.0, 3.0]
        .iter()
        .map(|&a| unstable_eigenvalue(report(a), DEFAULT_EPS).unwrap().value)
        .collect();
    for i in 0..3 {
        for j in i + 1..3 {
            let gap = (deltas[i] - deltas[j]).abs() / deltas[i].max(deltas[j]);
            assert!(gap > 0.05, "{deltas:?}");
        }
    }
}

#[test]
fn cascade_estimates_converge() {
    for alpha in [1.5, 2.0, 3.0] {
        let table = superstable_cascade(alpha, 10).unwrap();
        let diffs: Vec<f64> = table.delta_estimates.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        let tail = &diffs[diffs.len() - 4..];
        assert!(tail.windows(2).all(|w| w[1] < w[0]), "alpha {alpha}: {diffs:?}");
        assert!(table.delta_estimates.iter().all(|&d| d > 0.0));
    }
}

#[test]
fn scaling_ratios_match_the_cascade() {
    let r = report(2.0);
    let ratios = scaling_ratios(r, 6).unwrap();
    assert!(ratios.iter().all(|&x| 0.0 < x && x < 1.0));
    // differences shrink until they reach round-off
    let diffs: Vec<f64> = ratios.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    for w in diffs[1..].windows(2) {
        assert!(w[1] < w[0] || w[1] < 1e-14, "{diffs:?}");
    }
    let limit = *ratios.last().unwrap();
    let orbit_scaling = superstable_cascade(2.0, 10).unwrap().scaling();
    assert!((limit - orbit_scaling).abs() <= 0.02 * orbit_scaling, "{limit} vs {orbit_scaling}");
}

#[test]
fn pure_start_stays_pure() {
    let r = report(2.0);
    let f = r.map().unwrap();
    let records = renormalization_orbit_diagnostics(&f, 3, 1e-12).unwrap();
    for rec in &records {
        assert!(rec.distance_to_pure.is_finite() && rec.distance_to_pure >= 0.0);
        assert!(rec.distance_to_pure < 1e-5, "{rec:?}");
    }
}
