use super::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scalar_gains(g: f64, h: f64, sv: f64, su: f64) -> SubchannelGains<f64> {
    SubchannelGains::new(DMatrix::from_element(1, 1, g), DMatrix::from_element(1, 1, h), sv, su, 1.0).unwrap()
}

fn random_gains(rng: &mut ChaCha8Rng, n_c: usize, m: usize) -> SubchannelGains<f64> {
    let g = DMatrix::from_fn(n_c, m, |_, _| rng.random_range(0.2..2.0));
    let h = DMatrix::from_fn(n_c, m, |_, _| rng.random_range(0.2..2.0));
    SubchannelGains::new(g, h, 1.0, 1.0, 1.0).unwrap()
}

/// Independent high-SNR objective written straight from the SINR expression.
fn direct_objective(p_s: &DMatrix<f64>, p_r: &DMatrix<f64>, gains: &SubchannelGains<f64>, c: Criterion) -> f64 {
    let (n, m) = gains.g.shape();
    let mse: Vec<f64> = (0..m)
        .map(|s| {
            (0..n)
                .map(|k| {
                    let x = p_s[(k, s)] * gains.g[(k, s)].powi(2);
                    let y = p_r[(k, s)] * gains.h[(k, s)].powi(2);
                    let den = gains.sigma_v2 * y + gains.sigma_u2 * x;
                    let sinr = if den > 0.0 { x * y / den } else { 0.0 };
                    1.0 / (1.0 + sinr)
                })
                .sum::<f64>()
                / n as f64
        })
        .collect();
    match c {
        Criterion::Amse | Criterion::MaxMse => mse.iter().sum(),
        Criterion::Gmse => mse.iter().map(|v| v.log2()).sum(),
    }
}

#[test]
fn phi_exact_examples() {
    let g = scalar_gains(1.0, 1.0, 0.1, 0.1);
    assert_eq!(phi_exact(0.0, 3.0, &g, 0, 0), 1.0);
    let expected = 1.0 / (0.1 + 0.1 * 1.1) + 1.0;
    assert!((phi_exact(1.0, 1.0, &g, 0, 0) - expected).abs() < 1e-12);
    assert!((expected - 5.7619).abs() < 1e-4);
    let far = phi_exact(2.0, 1e12, &g, 0, 0);
    assert!((far - (2.0 / 0.1 + 1.0)).abs() < 1e-6);
}

#[test]
fn phi_highsnr_examples() {
    let g = scalar_gains(1.5, 1.5, 0.3, 0.3);
    assert_eq!(phi_highsnr(0.0, 2.0, &g, 0, 0), 1.0);
    assert_eq!(phi_highsnr(0.0, 0.0, &g, 0, 0), 1.0);
    let p = 4.0;
    assert!((phi_highsnr(p, p, &g, 0, 0) - (p * 2.25 / 0.6 + 1.0)).abs() < 1e-12);
}

#[test]
fn highsnr_sweep_bounds_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..2000 {
        let g = scalar_gains(rng.random_range(0.01..3.0), rng.random_range(0.01..3.0), rng.random_range(0.01..2.0), rng.random_range(0.01..2.0));
        let (ps, pr) = (rng.random_range(0.0..1e4), rng.random_range(0.0..1e4));
        let (e, a) = (phi_exact(ps, pr, &g, 0, 0), phi_highsnr(ps, pr, &g, 0, 0));
        assert!(a >= e - 1e-12);
        let x = ps * g.g[(0, 0)].powi(2);
        let y = pr * g.h[(0, 0)].powi(2);
        if x.min(y) / g.sigma_u2.max(g.sigma_v2) > 100.0 {
            assert!((a - e) / e < 0.01);
        }
    }
}

#[test]
fn objective_examples() {
    let ones = DMatrix::from_element(3, 2, 1.0);
    assert_eq!(objective(&ones, Criterion::Amse).unwrap(), 2.0);
    assert_eq!(objective(&ones, Criterion::Gmse).unwrap(), 0.0);
    assert_eq!(objective(&ones, Criterion::MaxMse).unwrap(), 1.0);
    let twos = DMatrix::from_element(3, 2, 2.0);
    let amse = objective(&twos, Criterion::Amse).unwrap();
    assert_eq!(amse, 1.0);
    assert_eq!(objective(&twos, Criterion::MaxMse).unwrap(), amse / 2.0);
    assert!(matches!(objective(&DMatrix::from_element(1, 1, 0.5), Criterion::Amse), Err(Error::Domain(_))));
}

#[test]
fn kkt_clamps_and_errors() {
    let g = scalar_gains(1.0, 1.0, 1.0, 1.0);
    assert_eq!(kkt_source_update(5.0, 1e12, 1.0, &g, 0, 0).unwrap(), 0.0);
    assert_eq!(kkt_relay_update(5.0, 1e12, 1.0, &g, 0, 0).unwrap(), 0.0);
    assert_eq!(kkt_source_update(0.0, 1e-3, 1.0, &g, 0, 0).unwrap(), 0.0);
    assert_eq!(kkt_relay_update(0.0, 1e-3, 1.0, &g, 0, 0).unwrap(), 0.0);
    assert!(matches!(kkt_source_update(1.0, 0.0, 1.0, &g, 0, 0), Err(Error::UnboundedUpdate(_))));
}

#[test]
fn kkt_updates_are_stationary_by_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for _ in 0..200 {
        let gains = random_gains(&mut rng, 3, 2);
        let p_r = DMatrix::from_fn(3, 2, |_, _| rng.random_range(1.0..50.0));
        let p_s0 = DMatrix::from_fn(3, 2, |_, _| rng.random_range(1.0..50.0));
        let (k, m) = (rng.random_range(0..3), rng.random_range(0..2));
        let lambda = rng.random_range(1e-4..1e-2);
        let ps = kkt_source_update(p_r[(k, m)], lambda, 1.0, &gains, k, m).unwrap();
        if ps < 1e-3 {
            continue;
        }
        let mut p = p_s0.clone();
        let h = 1e-6 * ps.max(1.0);
        p[(k, m)] = ps + h;
        let up = direct_objective(&p, &p_r, &gains, Criterion::Amse);
        p[(k, m)] = ps - h;
        let down = direct_objective(&p, &p_r, &gains, Criterion::Amse);
        let grad = (up - down) / (2.0 * h);
        assert!((grad + lambda).abs() <= 1e-4 * lambda, "{grad} vs {lambda}");

        let pr = kkt_relay_update(p_s0[(k, m)], lambda, 1.0, &gains, k, m).unwrap();
        if pr > 1e-3 {
            let mut q = p_r.clone();
            let h = 1e-6 * pr.max(1.0);
            q[(k, m)] = pr + h;
            let up = direct_objective(&p_s0, &q, &gains, Criterion::Amse);
            q[(k, m)] = pr - h;
            let down = direct_objective(&p_s0, &q, &gains, Criterion::Amse);
            assert!(((up - down) / (2.0 * h) + lambda).abs() <= 1e-4 * lambda);
        }
        checked += 1;
    }
    assert!(checked > 50);
}

#[test]
fn subgradient_direction() {
    assert_eq!(subgradient_step(2.0, 0.5, 10.0, 10.0), 2.0);
    assert!(subgradient_step(2.0, 0.5, 11.0, 10.0) > 2.0);
    assert!(subgradient_step(2.0, 0.5, 9.0, 10.0) < 2.0);
    assert_eq!(subgradient_step(0.1, 1.0, 0.0, 10.0), 0.0);
}

#[test]
fn single_subchannel_takes_full_budgets() {
    let g = scalar_gains(0.7, 1.3, 1.0, 1.0);
    for c in [Criterion::Amse, Criterion::Gmse] {
        let a = optimize(&g, (5.0, 8.0), c, &SolverOptions::default()).unwrap();
        assert!((a.p_s[(0, 0)] - 5.0).abs() < 1e-6 * 5.0);
        assert!((a.p_r[(0, 0)] - 8.0).abs() < 1e-6 * 8.0);
        let o = oracle_grid_search(&g, (5.0, 8.0), c, 200).unwrap();
        assert_eq!((o.p_s[(0, 0)], o.p_r[(0, 0)]), (5.0, 8.0));
    }
}

#[test]
fn identical_tones_split_evenly() {
    let gains =
        SubchannelGains::new(DMatrix::<f64>::from_element(2, 1, 1.2), DMatrix::from_element(2, 1, 0.8), 1.0, 1.0, 1.0)
            .unwrap();
    let a = optimize(&gains, (10.0, 6.0), Criterion::Amse, &SolverOptions::default()).unwrap();
    assert!((a.p_s[(0, 0)] - a.p_s[(1, 0)]).abs() < 1e-6);
    assert!((a.p_r[(0, 0)] - 3.0).abs() < 1e-5);
    let o = oracle_grid_search(&gains, (10.0, 6.0), Criterion::Amse, 200).unwrap();
    assert_eq!(o.p_s[(0, 0)], 5.0);
    assert_eq!(o.p_r[(0, 0)], 3.0);
}

fn relative_gap(solver: f64, oracle: f64, c: Criterion) -> f64 {
    match c {
        Criterion::Gmse => (solver.exp2() - oracle.exp2()) / oracle.exp2(),
        _ => (solver - oracle) / oracle,
    }
}

#[test]
fn solver_matches_grid_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..4 {
        let gains = random_gains(&mut rng, 4, 2);
        let budgets = (rng.random_range(4.0..40.0), rng.random_range(4.0..40.0));
        let c = if trial % 2 == 0 { Criterion::Amse } else { Criterion::Gmse };
        let a = optimize(&gains, budgets, c, &SolverOptions::default()).unwrap();
        let o = oracle_grid_search(&gains, budgets, c, 200).unwrap();
        let fa = direct_objective(&a.p_s, &a.p_r, &gains, c);
        let fo = direct_objective(&o.p_s, &o.p_r, &gains, c);
        assert!(relative_gap(fa, fo, c) < 0.02, "trial {trial}: {fa} vs {fo}");
    }
}

#[test]
fn solver_respects_budgets_and_slackness() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for c in [Criterion::Amse, Criterion::Gmse] {
        let gains = random_gains(&mut rng, 16, 2);
        let budgets = (64.0, 100.0);
        let a = optimize(&gains, budgets, c, &SolverOptions::default()).unwrap();
        assert!(a.source_total() <= budgets.0 * (1.0 + 1e-6));
        assert!(a.relay_total() <= budgets.1 * (1.0 + 1e-6));
        assert!(a.lambda * (budgets.0 - a.source_total()).abs() < 1e-4 * budgets.0);
        assert!(a.mu * (budgets.1 - a.relay_total()).abs() < 1e-4 * budgets.1);
        for (s, r) in a.p_s.iter().zip(a.p_r.iter()) {
            assert_eq!(*s == 0.0, *r == 0.0);
        }
    }
}

#[test]
fn outer_objective_is_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for c in [Criterion::Amse, Criterion::Gmse] {
        let gains = random_gains(&mut rng, 8, 2);
        let a = optimize(&gains, (30.0, 30.0), c, &SolverOptions::default()).unwrap();
        let mut ends = Vec::new();
        for o in 1..=a.outer_iterations {
            if let Some(row) = a.trace.iter().rev().find(|r| r.outer == o) {
                ends.push(row.objective);
            }
        }
        for w in ends.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0), "{ends:?}");
        }
    }
}

#[test]
fn max_mse_shares_the_arithmetic_allocation() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let gains = random_gains(&mut rng, 8, 2);
    let a = optimize(&gains, (20.0, 20.0), Criterion::Amse, &SolverOptions::default()).unwrap();
    let b = optimize(&gains, (20.0, 20.0), Criterion::MaxMse, &SolverOptions::default()).unwrap();
    assert_eq!(a.p_s, b.p_s);
    assert_eq!(a.p_r, b.p_r);
}

#[test]
fn diminishing_steps_still_converge_on_small_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let gains = random_gains(&mut rng, 2, 1);
    let opts = SolverOptions { step: StepRule::Diminishing { scale: 0.1 }, max_inner: 20_000, ..Default::default() };
    let a = optimize(&gains, (10.0, 10.0), Criterion::Amse, &opts).unwrap_or_else(|e| match e {
        OptimizeError::NoConvergence { best } => *best,
        OptimizeError::Invalid(e) => panic!("{e}"),
    });
    let b = optimize(&gains, (10.0, 10.0), Criterion::Amse, &SolverOptions::default()).unwrap();
    let (fa, fb) = (direct_objective(&a.p_s, &a.p_r, &gains, Criterion::Amse), direct_objective(&b.p_s, &b.p_r, &gains, Criterion::Amse));
    assert!((fa - fb).abs() < 1e-3 * fb);
}

#[test]
fn relay_only_keeps_source_frozen() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let gains = random_gains(&mut rng, 8, 2);
    let p_s = DMatrix::from_element(8, 2, 2.0);
    for c in [Criterion::Amse, Criterion::Gmse] {
        let a = optimize_relay(&gains, &p_s, 40.0, c, &SolverOptions::default()).unwrap();
        assert_eq!(a.p_s, p_s);
        assert!((a.relay_total() - 40.0).abs() < 1e-6 * 40.0);
        let joint = optimize(&gains, (32.0, 40.0), c, &SolverOptions::default()).unwrap();
        let fj = direct_objective(&joint.p_s, &joint.p_r, &gains, c);
        let fr = direct_objective(&a.p_s, &a.p_r, &gains, c);
        assert!(fj <= fr + 1e-9);
    }
}

#[test]
fn oracle_refinement_never_worsens() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for (n_c, m) in [(2, 1), (2, 2), (4, 2)] {
        let gains = random_gains(&mut rng, n_c, m);
        for c in [Criterion::Amse, Criterion::Gmse] {
            let coarse = oracle_grid_search(&gains, (10.0, 10.0), c, 20).unwrap();
            let fine = oracle_grid_search(&gains, (10.0, 10.0), c, 40).unwrap();
            let fc = direct_objective(&coarse.p_s, &coarse.p_r, &gains, c);
            let ff = direct_objective(&fine.p_s, &fine.p_r, &gains, c);
            assert!(ff <= fc + 1e-12);
        }
    }
}

#[test]
fn oracle_rejects_large_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let gains = random_gains(&mut rng, 5, 2);
    assert!(matches!(oracle_grid_search(&gains, (1.0, 1.0), Criterion::Amse, 10), Err(Error::TooLarge(_))));
}

fn feasible(rng_seed: u64, n: usize, total: f64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let raw = DMatrix::from_fn(n, 2, |_, _| rng.random_range(0.0..1.0));
    let s = raw.sum();
    raw * (total / s)
}

proptest! {
    #[test]
    fn highsnr_objective_is_jointly_convex(seed in 0u64..10_000, t in prop::sample::select(vec![0.25, 0.5, 0.75])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gains = random_gains(&mut rng, 4, 2);
        let (xs, xr) = (feasible(seed ^ 1, 4, 20.0), feasible(seed ^ 2, 4, 30.0));
        let (ys, yr) = (feasible(seed ^ 3, 4, 20.0), feasible(seed ^ 4, 4, 30.0));
        for c in [Criterion::Amse, Criterion::Gmse] {
            let fx = highsnr_objective(&xs, &xr, &gains, c).unwrap();
            let fy = highsnr_objective(&ys, &yr, &gains, c).unwrap();
            let ms = &xs * t + &ys * (1.0 - t);
            let mr = &xr * t + &yr * (1.0 - t);
            let fm = highsnr_objective(&ms, &mr, &gains, c).unwrap();
            prop_assert!(fm <= t * fx + (1.0 - t) * fy + 1e-9);
        }
    }

    #[test]
    fn am_gm_between_criteria(vals in prop::collection::vec(1.0f64..50.0, 6)) {
        let phi = DMatrix::from_vec(2, 3, vals);
        let amse = objective(&phi, Criterion::Amse).unwrap();
        let gmse = objective(&phi, Criterion::Gmse).unwrap();
        prop_assert!(gmse.exp2().powf(1.0 / 3.0) <= amse / 3.0 + 1e-12);
    }

    #[test]
    fn gmse_equals_negative_capacity(vals in prop::collection::vec(1.0f64..50.0, 4)) {
        let phi = DMatrix::from_vec(2, 2, vals);
        let mse = stream_mse(&phi).unwrap();
        let cap: f64 = mse.iter().map(|m| (1.0 + (1.0 / m - 1.0)).log2()).sum();
        prop_assert!((objective(&phi, Criterion::Gmse).unwrap() + cap).abs() < 1e-12);
    }

    #[test]
    fn allocations_meet_budgets(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gains = random_gains(&mut rng, 6, 2);
        let budgets = (rng.random_range(1.0..200.0), rng.random_range(1.0..200.0));
        let a = optimize(&gains, budgets, Criterion::Gmse, &SolverOptions::default()).unwrap();
        prop_assert!(a.source_total() <= budgets.0 * (1.0 + 1e-6));
        prop_assert!(a.relay_total() <= budgets.1 * (1.0 + 1e-6));
        prop_assert!(a.p_s.iter().chain(a.p_r.iter()).all(|&p| p >= 0.0));
    }
}

