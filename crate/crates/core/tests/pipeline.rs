//! End-to-end paths through model, optimizer, pricing and simulator.

use bmpaw_core::optimizer::{hessian_audit, optimize_infiltration, Objective, SolverConfig};
use bmpaw_core::pricing::{feasible_bribe_region, minimum_eps};
use bmpaw_core::rewards::target_fork_resolution_term;
use bmpaw_core::sim::{empirical_rbar, empirical_rewards, simulate, SimConfig, ATTACKER, TARGET};
use bmpaw_core::{
    attacker_extra_reward, attacker_rewards, target_extra_reward, target_reward_bmpaw,
    AttackParams, PowerProfile, RbarPolicy, Strategy,
};

fn feasible() -> (PowerProfile, AttackParams) {
    (
        PowerProfile::new(0.4, 0.05, 0.1).unwrap(),
        AttackParams::new(0.8, 0.9, 0.3, 0.0, 0.0).unwrap(),
    )
}

#[test]
fn priced_bribes_at_the_optimum_pay_both_sides() {
    let (p, a) = feasible();
    let region = feasible_bribe_region(&p, &a, 5);
    assert!(region.feasible);
    for &(e1, e2) in &region.sample_points {
        let priced = a.with_bribes(e1, e2);
        let opt = optimize_infiltration(&p, &priced, &SolverConfig::default());
        assert!(opt.reward_at_opt >= p.alpha());
        let at = priced.with_infiltration(opt.r1_hat, opt.r2_hat);
        // The region was priced at (r1, r2) = (0.8, 0.9); at the optimum
        // the attacker still gains against PAW whenever it infiltrates.
        if opt.r1_hat > 0.0 {
            assert!(attacker_extra_reward(&p, &at).is_finite());
        }
        assert!(attacker_extra_reward(&p, &priced) > 0.0);
        assert!(target_extra_reward(&p, &priced) > 0.0);
    }
}

#[test]
fn minimum_bribe_sits_on_the_target_floor() {
    let (p, a) = feasible();
    let (e1, e2) = minimum_eps(&p, &a).unwrap();
    let at = a.with_bribes(e1, e2);
    assert!(target_extra_reward(&p, &at).abs() < 1e-12);
}

#[test]
fn simulated_optimum_matches_its_analytic_reward() {
    let (p, a) = feasible();
    let region = feasible_bribe_region(&p, &a, 1);
    let (e1, e2) = region.sample_points[0];
    let priced = a.with_bribes(e1, e2);
    let opt = optimize_infiltration(&p, &priced, &SolverConfig::default());
    let at = priced.with_infiltration(opt.r1_hat, opt.r2_hat);
    let tally = simulate(&SimConfig::new(p, at, Strategy::BmPaw, 1_000_000, 3)).unwrap();
    let e = empirical_rewards(&tally).unwrap();
    let rbar = empirical_rbar(&tally, &p).unwrap();
    let model = at.with_policy(RbarPolicy::Empirical(rbar));
    let attacker = attacker_rewards(&p, &model).total_bmpaw;
    let target = target_reward_bmpaw(&p, &model) - target_fork_resolution_term(&p, &model);
    assert!(e.role(ATTACKER).z_score(attacker).abs() <= 3.0);
    assert!(e.role(TARGET).z_score(target).abs() <= 3.0);
}

#[test]
fn hessian_audit_covers_every_point() {
    let (p, a) = feasible();
    let points: Vec<(f64, f64)> = (1..10)
        .flat_map(|i| (1..10).map(move |j| (i as f64 / 10.0, j as f64 / 10.0)))
        .collect();
    let audit = hessian_audit(&p, &a, Objective::Net, &points);
    assert_eq!(audit.total(), points.len());
}
