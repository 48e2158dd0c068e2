mod common;

use approx::assert_relative_eq;
use fbcap::fading::FadingParams;
use fbcap::gauss_capacity::{
    capacity_full_csit, capacity_gaussian, capacity_no_csit, inner_power, solve_policy, water_filling_cutoff,
    CapacitySolver, SolverConfig,
};
use proptest::prelude::*;

const TOL: f64 = 1e-8;
const LOG2_E: f64 = std::f64::consts::LOG2_E;

fn params(alpha: f64, power: f64) -> FadingParams {
    FadingParams::new(alpha, power).unwrap()
}

fn solver() -> CapacitySolver {
    CapacitySolver::new(SolverConfig::default()).unwrap()
}

/// `E[log2(1 + P U)]` for `U ~ Exp(1)` by direct integration.
fn no_csit_by_integration(power: f64) -> f64 {
    common::adaptive_simpson(&|u: f64| (power * u).ln_1p() * (-u).exp(), 0.0, 60.0, 1e-13) * LOG2_E
}

#[test]
fn no_csit_anchor_values() {
    let oracle = LOG2_E * std::f64::consts::E * common::e1_by_integration(1.0);
    assert_relative_eq!(oracle, 0.860_347_382_270_886, max_relative = 1e-10);
    let c = capacity_no_csit(1.0).unwrap();
    assert!((c - oracle).abs() < 1e-12);
    assert!((c - 0.8603).abs() < 1e-4);
    assert!((c - no_csit_by_integration(1.0)).abs() < 1e-10);

    let c10 = capacity_no_csit(10.0).unwrap();
    assert!((c10 - no_csit_by_integration(10.0)).abs() < 1e-8);
    assert!((c10 - 2.9).abs() < 0.01);

    let small = 1e-4;
    let ratio = capacity_no_csit(small).unwrap() / (small * LOG2_E);
    assert!((ratio - 1.0).abs() < 0.01, "{ratio}");
}

#[test]
fn full_csit_anchor_values() {
    let u0 = common::rayleigh_cutoff(1.0);
    assert!((u0 - 0.394).abs() < 1e-3);
    assert!((water_filling_cutoff(1.0).unwrap() - u0).abs() < 1e-10);
    let oracle = common::e1_by_integration(u0) * LOG2_E;
    let c = capacity_full_csit(1.0).unwrap();
    assert!((c - oracle).abs() < 1e-9);
    assert!((c - 1.028).abs() < 1e-3);
    assert!((c - 1.028_538_925_359_485_7).abs() < 1e-12);

    for &p in &[0.1, 3.0, 30.0] {
        let u = common::rayleigh_cutoff(p);
        let wf = |v: f64| (v / u).ln() * (-v).exp();
        let direct = common::adaptive_simpson(&wf, u, u + 60.0, 1e-13) * LOG2_E;
        assert!((capacity_full_csit(p).unwrap() - direct).abs() < 1e-9, "P={p}");
    }

    let gap = capacity_full_csit(100.0).unwrap() - capacity_no_csit(100.0).unwrap();
    assert!(gap > 0.0 && gap < 0.05, "{gap}");
}

#[test]
fn inner_power_examples() {
    assert!((inner_power(2.0, 1.0, 1.0, 1e-10).unwrap() - 0.5).abs() < 1e-15);
    assert_eq!(inner_power(0.5, 1.0, 1.0, 1e-10).unwrap(), 0.0);

    let kkt = |rho: f64| common::adaptive_simpson(&|u: f64| u / (1.0 + rho * u) * (-u).exp(), 0.0, 60.0, 1e-13) - 0.5;
    let oracle = common::bisect(kkt, 0.0, 10.0);
    for &v in &[0.0, 0.3, 2.0, 17.0] {
        let rho = inner_power(v, 0.0, 0.5, 1e-10).unwrap();
        assert!((rho - oracle).abs() < 1e-8, "v={v}: {rho} vs {oracle}");
    }
}

#[test]
fn inner_power_correlated_cell_matches_oracle() {
    for &(v, sigma, lambda) in &[(1.5, 0.9, 0.6), (4.0, 0.5, 0.3), (0.2, 0.97, 0.1)] {
        let upper = common::phi_upper_limit(v, sigma);
        let kkt = |rho: f64| {
            common::adaptive_simpson(&|u: f64| u / (1.0 + rho * u) * common::phi_direct(u, v, sigma), 0.0, upper, 1e-13)
                - lambda
        };
        let oracle = common::bisect(kkt, 0.0, 1.0 / lambda);
        let rho = inner_power(v, sigma, lambda, 1e-10).unwrap();
        assert!((rho - oracle).abs() < 1e-7, "v={v} sigma={sigma}: {rho} vs {oracle}");
    }
    assert_eq!(inner_power(0.1, 0.9, 1.0, 1e-10).unwrap(), 0.0);
    assert!(inner_power(1.0, 0.5, 0.0, 1e-10).is_err());
}

#[test]
fn period_one_policy_is_water_filling() {
    let u0 = common::rayleigh_cutoff(1.0);
    let policy = solve_policy(&params(0.9, 1.0), 1, TOL).unwrap();
    assert!((policy.lambda().unwrap() - u0).abs() < 1e-8);
    let sub = policy.subchannel(1);
    for (&v, &rho) in sub.nodes.iter().zip(&sub.rho) {
        assert!((rho - (1.0 / u0 - 1.0 / v).max(0.0)).abs() < 1e-7);
    }
    for &v in &[0.1, 0.5, 1.0, 3.0] {
        assert!((policy.power_at(1, v) - (1.0 / u0 - 1.0 / v).max(0.0)).abs() < 1e-3);
    }
    assert!((policy.average_power() - 1.0).abs() < TOL);
}

#[test]
fn independent_fading_makes_late_subchannels_flat() {
    let policy = solve_policy(&params(0.0, 1.0), 4, TOL).unwrap();
    for t in 2..=4 {
        let rho = &policy.subchannel(t).rho;
        assert!(rho.iter().all(|&r| r == rho[0]));
        assert!(rho[0] > 0.0);
    }
}

#[test]
fn high_power_activates_everything() {
    let policy = solve_policy(&params(0.9, 1e3), 3, TOL).unwrap();
    let lambda = policy.lambda().unwrap();
    let sub = policy.subchannel(1);
    assert!(sub.rho.iter().all(|&r| r > 0.0));
    for (&v, &rho) in sub.nodes.iter().zip(&sub.rho) {
        assert!((rho - (1.0 / lambda - 1.0 / v)).abs() < 1e-9 * (1.0 / lambda));
    }
    assert!(policy.subchannels()[1..].iter().all(|s| s.rho.iter().all(|&r| r > 0.0)));
}

#[test]
fn period_one_capacity_equals_full_csit() {
    let full = capacity_full_csit(1.0).unwrap();
    for &alpha in &[0.8, 0.97] {
        let c = capacity_gaussian(&params(alpha, 1.0), 1, TOL).unwrap();
        assert!((c.capacity_bits - full).abs() < 1e-9, "{}", c.capacity_bits);
        assert!((c.capacity_bits - 1.028).abs() < 1e-3);
    }
    for &p in &[0.01, 10.0, 1e3] {
        let c = capacity_gaussian(&params(0.5, p), 1, TOL).unwrap().capacity_bits;
        assert!((c - capacity_full_csit(p).unwrap()).abs() < 1e-9 * c.max(1.0), "P={p}");
    }
}

#[test]
fn long_period_approaches_no_csit() {
    let c = capacity_gaussian(&params(0.8, 1.0), 64, TOL).unwrap().capacity_bits;
    let floor = capacity_no_csit(1.0).unwrap();
    assert!(c >= floor - TOL && c - floor < 0.01, "{c} vs {floor}");
}

#[test]
fn stronger_correlation_helps_at_period_eight() {
    let s = solver();
    let high = s.capacity(&params(0.97, 1.0), 8).unwrap().capacity_bits;
    let low = s.capacity(&params(0.8, 1.0), 8).unwrap().capacity_bits;
    assert!(high > low, "{high} vs {low}");
}

#[test]
fn result_structure_and_power() {
    let r = solver().capacity(&params(0.9, 2.0), 5).unwrap();
    assert_eq!(r.per_subchannel.len(), 5);
    let mean = r.per_subchannel.iter().sum::<f64>() / 5.0;
    assert!((r.capacity_bits - mean).abs() < 1e-12);
    assert!(r.diagnostics.power_residual <= TOL);
    assert!((r.policy.average_power() - 2.0).abs() <= 2.0 * TOL);
    assert!(r.policy.subchannels().iter().all(|s| s.rho.iter().all(|&x| x >= 0.0)));
}

#[test]
fn monotone_in_period() {
    let s = solver();
    for &alpha in &[0.8, 0.95] {
        let caps: Vec<f64> = [1, 2, 4, 8, 16]
            .iter()
            .map(|&t| s.capacity(&params(alpha, 1.0), t).unwrap().capacity_bits)
            .collect();
        assert!(caps.windows(2).all(|p| p[1] <= p[0] + 2.0 * TOL), "alpha={alpha}: {caps:?}");
    }
}

#[test]
fn monotone_in_correlation() {
    let s = solver();
    for &t in &[2, 6, 12] {
        let caps: Vec<f64> = [0.8, 0.9, 0.95, 0.97]
            .iter()
            .map(|&a| s.capacity(&params(a, 1.0), t).unwrap().capacity_bits)
            .collect();
        assert!(caps.windows(2).all(|p| p[1] >= p[0] - 2.0 * TOL), "T={t}: {caps:?}");
    }
}

#[test]
fn kkt_certificate_holds() {
    let s = solver();
    for &(alpha, t, p) in &[(0.8, 3, 1.0), (0.97, 10, 1.0), (0.9, 4, 0.05), (0.5, 2, 50.0)] {
        let r = s.capacity(&params(alpha, p), t).unwrap();
        let kkt = s.kkt_certificate(&r.policy).unwrap();
        assert!(kkt.holds(1e-7), "{alpha} {t} {p}: {kkt:?}");
        assert!(kkt.active_cells > 0);
    }
    let r = s.capacity(&params(0.9, 0.05), 3).unwrap();
    assert!(s.kkt_certificate(&r.policy).unwrap().inactive_cells > 0);
}

#[test]
fn quadrature_order_converged() {
    let coarse = solver();
    let fine = CapacitySolver::new(SolverConfig { quad_nodes: 192, ..SolverConfig::default() }).unwrap();
    for &(alpha, t) in &[(0.8, 2), (0.97, 6), (0.9, 1)] {
        let a = coarse.capacity(&params(alpha, 1.0), t).unwrap().capacity_bits;
        let b = fine.capacity(&params(alpha, 1.0), t).unwrap().capacity_bits;
        assert!((a - b).abs() < 1e-7, "alpha={alpha} T={t}: {a} vs {b}");
    }
}

#[test]
fn concavity_probe() {
    let s = solver();
    let r = s.capacity(&params(0.9, 1.0), 3).unwrap();
    let optimum = s.evaluate(&r.policy).unwrap();
    assert!((optimum - r.capacity_bits).abs() < 1e-12);
    for t in 1..=3 {
        let n = r.policy.subchannel(t).rho.len();
        for i in (0..n).step_by(7) {
            if r.policy.subchannel(t).rho[i] == 0.0 {
                continue;
            }
            for factor in [0.99, 1.01] {
                let bumped = r.policy.map_rho(|tt, ii, rho| if (tt, ii) == (t, i) { rho * factor } else { rho });
                let scale = 1.0 / bumped.average_power();
                let renormalized = bumped.map_rho(|_, _, rho| rho * scale);
                let value = s.evaluate(&renormalized).unwrap();
                assert!(value <= optimum + TOL, "t={t} i={i} x{factor}: {value} > {optimum}");
            }
        }
    }
}

#[test]
fn configuration_is_validated() {
    assert!(CapacitySolver::new(SolverConfig { quad_nodes: 7, ..SolverConfig::default() }).is_err());
    assert!(CapacitySolver::new(SolverConfig { quad_nodes: 513, ..SolverConfig::default() }).is_err());
    assert!(capacity_gaussian(&params(0.9, 1.0), 0, TOL).is_err());
    assert!(capacity_gaussian(&params(0.9, 1.0), 2, 0.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn bounded_by_baselines(alpha in 0.0f64..0.99, period in 1usize..7, power in 0.05f64..20.0) {
        let r = solver().capacity(&params(alpha, power), period).unwrap();
        let lo = capacity_no_csit(power).unwrap();
        let hi = capacity_full_csit(power).unwrap();
        let slack = TOL * hi.max(1.0);
        prop_assert!(lo - slack <= r.capacity_bits && r.capacity_bits <= hi + slack,
            "{} <= {} <= {}", lo, r.capacity_bits, hi);
        prop_assert!(r.diagnostics.power_residual <= TOL);
    }
}
