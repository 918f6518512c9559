use bmpaw_core::game::{
    best_response, nash_equilibrium, pool_rewards, GameAccounting, GameConfig, GameMode,
    GameSolverConfig, StrategyProfile,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_game(r: &mut ChaCha8Rng) -> (GameConfig, StrategyProfile) {
    let (a1, a2) = loop {
        let a1 = r.random_range(0.02..0.48);
        let a2 = r.random_range(0.02..0.48);
        if a1 + a2 < 0.95 {
            break (a1, a2);
        }
    };
    let cfg = GameConfig {
        eps1: r.random_range(0.0..0.3),
        eps2: r.random_range(0.0..0.3),
        accounting: if r.random() {
            GameAccounting::RevenueDensity
        } else {
            GameAccounting::DirectShares
        },
        ..GameConfig::new(a1, a2, r.random()).unwrap()
    };
    let s = StrategyProfile {
        r1_1: r.random(),
        r2_1: r.random(),
        r1_2: r.random(),
        r2_2: r.random(),
    };
    (cfg, s)
}

#[test]
fn monte_carlo_agrees_with_analytic_on_random_games() {
    let mut r = ChaCha8Rng::seed_from_u64(41);
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let (cfg, s) = random_game(&mut r);
        let a = pool_rewards(&cfg, &s, GameMode::Analytic).unwrap();
        let m = pool_rewards(
            &cfg,
            &s,
            GameMode::MonteCarlo {
                n_rounds: 1_000_000,
                seed: 1000 + k,
            },
        )
        .unwrap();
        for pool in 0..2 {
            let z = m.estimate(pool).z_score(a.rewards[pool]);
            worst = worst.max(z.abs());
            assert!(
                z.abs() <= 3.0,
                "config {k} pool {pool}: z = {z}, {cfg:?} {s:?}"
            );
        }
    }
    eprintln!("largest |z| over 100 comparisons: {worst:.2}");
}

#[test]
fn refined_best_response_matches_dense_grid() {
    let mut r = ChaCha8Rng::seed_from_u64(42);
    let solver = GameSolverConfig::default();
    let dense = GameSolverConfig {
        resolution: 401,
        ..solver
    };
    for k in 0..50 {
        let (cfg, s) = random_game(&mut r);
        let pool = k % 2;
        let br = best_response(&cfg, &s, pool, &solver);
        let oracle = best_response(&cfg, &s, pool, &dense);
        assert!(
            oracle.grid_reward - br.reward <= 1e-4,
            "config {k}: refined {} vs dense grid {}",
            br.reward,
            oracle.grid_reward
        );
    }
}

#[test]
fn larger_pool_wins_when_forks_always_succeed() {
    let cfg = GameConfig::new(0.2, 0.4, 1.0).unwrap();
    let r = nash_equilibrium(&cfg, &GameSolverConfig::default()).unwrap();
    assert!(r.converged && r.verified);
    assert!(r.rer[0] < 0.0 && r.rer[1] > 0.0, "{:?}", r.rer);
}

#[test]
fn symmetric_games_have_symmetric_equilibria() {
    for c in [0.2, 0.6, 1.0] {
        let cfg = GameConfig::new(0.25, 0.25, c).unwrap();
        let r = nash_equilibrium(&cfg, &GameSolverConfig::default()).unwrap();
        let (a, b) = (r.strategies.pool(0), r.strategies.pool(1));
        let tol = GameSolverConfig::default().tolerance;
        assert!(
            (a.0 - b.0).abs() <= tol && (a.1 - b.1).abs() <= tol,
            "c = {c}: {a:?} {b:?}"
        );
        assert!(
            (r.rewards[0] - r.rewards[1]).abs() <= tol,
            "c = {c}: {:?}",
            r.rewards
        );
    }
}

#[test]
fn other_miners_never_lose_without_bribes() {
    let solver = GameSolverConfig::default();
    for a2 in [0.1, 0.3] {
        for c in [0.2, 1.0] {
            let cfg = GameConfig::new(0.2, a2, c).unwrap();
            let r = nash_equilibrium(&cfg, &solver).unwrap();
            let others = 1.0 - (r.rewards[0] + r.rewards[1]);
            // Without bribes the other miners can only pick up forks.
            assert!(
                others >= cfg.others() - 1e-12,
                "{others} < {}",
                cfg.others()
            );
            assert!(r.rewards.iter().all(|&x| x >= 0.0));
        }
    }
}

#[test]
fn trajectory_starts_honest_and_ends_at_the_result() {
    let cfg = GameConfig::new(0.2, 0.3, 0.6).unwrap();
    let r = nash_equilibrium(&cfg, &GameSolverConfig::default()).unwrap();
    assert_eq!(r.trajectory[0], StrategyProfile::HONEST);
    assert_eq!(*r.trajectory.last().unwrap(), r.strategies);
    assert_eq!(r.trajectory.len(), r.iterations + 1);
}
