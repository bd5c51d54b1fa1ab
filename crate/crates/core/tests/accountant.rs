use noisy_sgd_privacy::accountant::cyclic_sum_of_squares;
use noisy_sgd_privacy::{
    best_dp, rdp_to_dp, solve_sigma, validate, AccountRequest, Accountant, Adjacency, Branch, Diameter, PrivacyError,
    PrivacyParams, Regime, Stepsize,
};
use proptest::prelude::*;

fn eps(acc: &Accountant, p: &PrivacyParams, regime: Regime, alpha: f64) -> f64 {
    acc.epsilon(&AccountRequest::new(p.clone(), alpha, regime)).unwrap().epsilon
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn sc_params() -> PrivacyParams {
    PrivacyParams::new(1000, 10, 1.0, 1.0, 0.5, 1.0, 1)
        .with_smoothness(1.0)
        .with_strong_convexity(0.1)
}

fn decaying(t: usize, scale: f64) -> Stepsize {
    Stepsize::Schedule((1..=t).map(|i| scale / (i as f64).sqrt()).collect())
}

fn regime_base(regime: Regime) -> PrivacyParams {
    match regime {
        Regime::NoisySgd => PrivacyParams::new(500, 10, 1.0, 1.0, 0.05, 1.0, 1),
        Regime::FullBatch => PrivacyParams::new(50, 50, 1.0, 1.0, 0.05, 1.0, 1),
        Regime::Cyclic => PrivacyParams::new(50, 10, 1.0, 1.0, 0.05, 1.0, 1),
        Regime::StronglyConvex => sc_params(),
        Regime::NonuniformStepsize => PrivacyParams::new(500, 10, 1.0, 1.0, 0.1, 1.0, 1),
    }
}

fn at_t(regime: Regime, t: usize) -> PrivacyParams {
    let p = regime_base(regime).with_iterations(t);
    match regime {
        Regime::NonuniformStepsize => p.with_stepsize(decaying(t, 0.1)),
        _ => p,
    }
}

#[test]
fn nondecreasing_in_t_for_every_regime() {
    let acc = Accountant::default();
    let mut grid: Vec<usize> = (1..=200).collect();
    grid.extend((0..=12).map(|i| (200.0 * 500f64.powf(i as f64 / 12.0)).round() as usize));
    grid.dedup();
    for regime in Regime::ALL {
        let mut prev = 0.0;
        for &t in &grid {
            let e = eps(&acc, &at_t(regime, t), regime, 4.0);
            assert!(e >= prev * (1.0 - 1e-12), "{regime:?}: ε({t}) = {e} < {prev}");
            prev = e;
        }
    }
}

#[test]
fn convex_regimes_plateau_by_twice_the_horizon() {
    let acc = Accountant::default();
    let p = regime_base(Regime::NoisySgd);
    let horizon = (p.diameter.finite().unwrap() * p.n as f64 / (p.lipschitz * 0.05)).ceil() as usize;
    let level = eps(&acc, &p.clone().with_iterations(2 * horizon), Regime::NoisySgd, 8.0);
    for k in [3, 4, 8] {
        assert_eq!(eps(&acc, &p.clone().with_iterations(k * horizon), Regime::NoisySgd, 8.0), level, "{k}·T̄");
    }

    // Full batch: the branches cross at 2D̃n/(ηL), with D̃ = D + 2ηL/n the
    // diameter padded by one step's gradient difference.
    let p = regime_base(Regime::FullBatch);
    let (n, eta) = (p.n as f64, 0.05);
    let d_tilde = 1.0 + 2.0 * eta / n;
    let onset = (2.0 * d_tilde * n / eta).ceil() as usize + 1;
    let level = eps(&acc, &p.clone().with_iterations(onset), Regime::FullBatch, 8.0);
    for t in [onset + 1, 2 * onset, 10 * onset] {
        assert_eq!(eps(&acc, &p.clone().with_iterations(t), Regime::FullBatch, 8.0), level, "T={t}");
    }
    assert!(eps(&acc, &p.clone().with_iterations(onset - 3), Regime::FullBatch, 8.0) < level);
    let p = sc_params();
    let r = acc
        .epsilon(&AccountRequest::new(p.clone().with_iterations(100_000), 8.0, Regime::StronglyConvex))
        .unwrap();
    // Past the window length the plateau branch is fixed; before the linear
    // branch crosses it the linear value is the smaller one.
    let window = r.inner_solution.t_tilde.unwrap() + 1;
    for t in [window, 2 * window, 10 * window, 50 * window] {
        let s = acc
            .epsilon(&AccountRequest::new(p.clone().with_iterations(t), 8.0, Regime::StronglyConvex))
            .unwrap();
        match s.branch {
            Branch::Plateau => assert_eq!(s.epsilon, r.epsilon, "T={t}"),
            Branch::TLinear => assert!(s.epsilon <= r.epsilon, "T={t}"),
        }
    }
    let crossover = (r.epsilon / (r.linear_epsilon / 100_000.0)).ceil() as usize;
    assert_eq!(eps(&acc, &p.clone().with_iterations(crossover.max(window) + 1), Regime::StronglyConvex, 8.0), r.epsilon);
}

#[test]
fn t_linear_branch_doubles() {
    let acc = Accountant::default();
    let p = regime_base(Regime::NoisySgd);
    let r = acc
        .epsilon(&AccountRequest::new(p.clone().with_iterations(20), 4.0, Regime::NoisySgd))
        .unwrap();
    assert_eq!(r.branch, Branch::TLinear);
    let e40 = eps(&acc, &p.with_iterations(40), Regime::NoisySgd, 4.0);
    assert!(rel(e40, 2.0 * r.epsilon) < 1e-14);
}

#[test]
fn sigma_doubling_quarters_deterministic_regimes() {
    let acc = Accountant::default();
    for regime in [Regime::FullBatch, Regime::Cyclic] {
        for t in [1, 7, 300, 5000] {
            let p = at_t(regime, t);
            let a = eps(&acc, &p, regime, 3.0);
            let b = eps(&acc, &p.clone().with_sigma(2.0), regime, 3.0);
            assert!(rel(b, a / 4.0) < 1e-12, "{regime:?} T={t}: {a} {b}");
        }
    }
}

#[test]
fn full_batch_closed_form_at_integer_window() {
    // n = 100, η = 0.1, L = 0.5 makes x = 2ηL/n = 10⁻³ and D̃ = D + x;
    // choosing D = 0.999 gives the integer window D̃n/(2ηL) = 1000.
    let acc = Accountant::default();
    let (n, l, d, eta, sigma, alpha) = (100, 0.5, 0.999, 0.1, 1.5, 6.0);
    let p = PrivacyParams::new(n, n, l, d, eta, sigma, 50_000);
    let r = acc.epsilon(&AccountRequest::new(p, alpha, Regime::FullBatch)).unwrap();
    let d_tilde = d + 2.0 * eta * l / n as f64;
    assert_eq!(r.inner_solution.t_tilde, Some(1000));
    let want = 4.0 * alpha * d_tilde * l / (eta * sigma * sigma * n as f64);
    assert!(rel(r.epsilon, want) < 1e-12, "{} vs {want}", r.epsilon);
}

#[test]
fn full_batch_single_step_is_linear() {
    let acc = Accountant::default();
    let p = PrivacyParams::new(20, 20, 1.0, 1.0, 0.1, 2.0, 1);
    let r = acc.epsilon(&AccountRequest::new(p, 2.0, Regime::FullBatch)).unwrap();
    let x: f64 = 2.0 * 0.1 / 20.0;
    assert_eq!(r.branch, Branch::TLinear);
    assert!(rel(r.epsilon, 2.0 / (2.0 * 0.01 * 4.0) * x * x) < 1e-14);
}

#[test]
fn cyclic_with_full_batches_matches_full_batch() {
    let acc = Accountant::default();
    for (n, t) in [(20, 50), (20, 5000), (100, 20_000), (64, 1)] {
        let p = PrivacyParams::new(n, n, 1.0, 1.0, 0.05, 1.0, t);
        let a = eps(&acc, &p, Regime::FullBatch, 4.0);
        let b = eps(&acc, &p, Regime::Cyclic, 4.0);
        let horizon = (n as f64 / 0.05).ceil();
        assert!(rel(b, a) <= 2.0 / horizon, "n={n} T={t}: full {a}, cyclic {b}");
    }
}

#[test]
fn cyclic_worst_block_is_at_an_end() {
    // Small instance: n = 12, b = 3 gives four blocks. Windows aligned
    // with whole passes, as when the horizon is a multiple of n/b.
    let (blocks, y, z0) = (4, 0.3, 1.2);
    for t in (blocks..80).step_by(blocks) {
        for tau in (0..t).step_by(blocks) {
            let z = if tau == 0 { 0.0 } else { z0 };
            let all: Vec<f64> = (0..blocks).map(|k| cyclic_sum_of_squares(blocks, t, tau, k, y, z)).collect();
            let worst = all.iter().cloned().fold(f64::MIN, f64::max);
            let ends = all[0].max(all[blocks - 1]);
            assert!(ends >= worst * (1.0 - 1e-14), "T={t} τ={tau}: {all:?}");
        }
    }
}

#[test]
fn strongly_convex_approaches_convex_as_m_vanishes() {
    let acc = Accountant::default();
    let p = PrivacyParams::new(500, 10, 1.0, 1.0, 0.05, 1.0, 40_000).with_smoothness(1.0);
    let convex = eps(&acc, &p, Regime::NoisySgd, 8.0);
    let strong = eps(&acc, &p.with_strong_convexity(1e-8), Regime::StronglyConvex, 8.0);
    assert!(strong <= convex * (1.0 + 1e-12));
    assert!(rel(strong, convex) < 0.01, "{strong} vs {convex}");
}

#[test]
fn strongly_convex_needs_contraction() {
    let acc = Accountant::default();
    let p = PrivacyParams::new(100, 10, 1.0, 1.0, 2.0, 1.0, 10)
        .with_smoothness(1.0)
        .with_strong_convexity(0.5);
    let err = acc.epsilon(&AccountRequest::new(p, 2.0, Regime::StronglyConvex)).unwrap_err();
    assert!(matches!(err, PrivacyError::Domain(_) | PrivacyError::Validation(_)), "{err}");
    let p = PrivacyParams::new(100, 10, 1.0, 1.0, 0.5, 1.0, 10);
    assert!(acc.epsilon(&AccountRequest::new(p, 2.0, Regime::StronglyConvex)).is_err());
}

#[test]
fn constant_schedule_brackets_noisy_sgd() {
    // Same σ₁ and window: the schedule form charges one extra step of Q,
    // so noisy ≤ nonuniform ≤ noisy + Q(σ₂*).
    let acc = Accountant::default();
    for t in [3, 50, 2000, 50_000] {
        let p = PrivacyParams::new(500, 10, 1.0, 1.0, 0.05, 1.0, t);
        let noisy = acc.epsilon(&AccountRequest::new(p.clone(), 4.0, Regime::NoisySgd)).unwrap();
        let sched = p.clone().with_stepsize(Stepsize::Schedule(vec![0.05; t]));
        let non = eps(&acc, &sched, Regime::NonuniformStepsize, 4.0);
        let q = match noisy.inner_solution.sigma2 {
            Some(s2) => acc.sgm(0.02, 10.0 * s2 / 2.0, 4.0).unwrap(),
            None => 0.0,
        };
        assert!(non >= noisy.epsilon * (1.0 - 1e-9), "T={t}: {non} < {}", noisy.epsilon);
        assert!(non <= noisy.epsilon + q + 1e-12, "T={t}: {non} > {} + {q}", noisy.epsilon);
    }
}

#[test]
fn inverse_sqrt_stepsizes_grow_like_sqrt_t() {
    let acc = Accountant::default();
    let p = PrivacyParams::new(100, 10, 1.0, 0.2, 1.0, 1.0, 1);
    let at = |t: usize| {
        let q = p.clone().with_iterations(t).with_stepsize(decaying(t, 1.0));
        acc.epsilon(&AccountRequest::new(q, 4.0, Regime::NonuniformStepsize)).unwrap()
    };
    for t in [4000, 8000, 16000] {
        let (a, b) = (at(t), at(2 * t));
        assert_eq!(a.branch, Branch::Plateau, "T={t}");
        let ratio = b.epsilon / a.epsilon;
        assert!(ratio > 1.0 && ratio <= 2f64.sqrt() * 1.1, "T={t}: ratio {ratio}");
    }
}

#[test]
fn nonuniform_rejects_wrong_schedule_length() {
    let acc = Accountant::default();
    let p = PrivacyParams::new(100, 10, 1.0, 1.0, 0.1, 1.0, 10).with_stepsize(Stepsize::Schedule(vec![0.1; 9]));
    assert!(acc.epsilon(&AccountRequest::new(p, 2.0, Regime::NonuniformStepsize)).is_err());
}

#[test]
fn unbounded_domain_gives_linear_branch() {
    let acc = Accountant::default();
    let p = PrivacyParams::new(500, 10, 1.0, 1.0, 0.05, 1.0, 100_000).with_diameter(Diameter::Unbounded);
    let r = acc.epsilon(&AccountRequest::new(p, 4.0, Regime::NoisySgd)).unwrap();
    assert_eq!(r.branch, Branch::TLinear);
    assert_eq!(r.epsilon, r.linear_epsilon);
}

#[test]
fn dp_conversion_examples() {
    assert!((rdp_to_dp(2.0, 0.5, (-1f64).exp()).unwrap() - 1.5).abs() < 1e-15);
    let v = rdp_to_dp(101.0, 0.005, 0.01).unwrap();
    assert!(v < 0.1 && (v - (0.005 + 100f64.ln() / 100.0)).abs() < 1e-15);
    assert!((rdp_to_dp(4.0, 0.3, 1.0 - 1e-15).unwrap() - 0.3).abs() < 1e-14);
    assert!(rdp_to_dp(2.0, 0.1, 0.0).is_err());
    assert!(rdp_to_dp(2.0, 0.1, 1.0).is_err());
}

#[test]
fn best_dp_grid() {
    let acc = Accountant::default();
    let p = PrivacyParams::new(1000, 10, 1.0, 1.0, 0.05, 2.0, 50_000);
    let regime = Regime::NoisySgd;
    let delta = 1e-5;
    let single = best_dp(&acc, &p, regime, delta, &[8.0]).unwrap();
    assert_eq!(single.0, rdp_to_dp(8.0, eps(&acc, &p, regime, 8.0), delta).unwrap());
    let grid: Vec<f64> = (1..=10).map(|k| 2f64.powi(k)).collect();
    let (best, arg) = best_dp(&acc, &p, regime, delta, &grid).unwrap();
    assert!(grid.contains(&arg));
    for &a in &grid {
        assert!(best <= rdp_to_dp(a, eps(&acc, &p, regime, a), delta).unwrap());
    }
    assert!(best_dp(&acc, &p, regime, delta, &[]).is_err());

    // Optimized-α DP epsilon scales like 1/σ on the plateau.
    let fine: Vec<f64> = (0..=80).map(|k| 1.5 * 1.1f64.powi(k)).collect();
    let at = |s: f64| best_dp(&acc, &p.clone().with_sigma(s).with_iterations(200_000), regime, delta, &fine).unwrap().0;
    let ratio = at(16.0) / at(8.0);
    assert!((ratio - 0.5).abs() <= 0.05, "ratio {ratio}");
}

#[test]
fn solver_properties() {
    let acc = Accountant::default();
    let p = PrivacyParams::new(1000, 10, 1.0, 1.0, 0.05, 1.0, 40_000);
    let regime = Regime::NoisySgd;
    let s1 = solve_sigma(&acc, &p, regime, 8.0, 0.1).unwrap();
    let s2 = solve_sigma(&acc, &p, regime, 8.0, 0.2).unwrap();
    assert!(s2 < s1);
    // Both horizons are past the plateau onset, so the solutions agree.
    let s_long = solve_sigma(&acc, &p.clone().with_iterations(80_000), regime, 8.0, 0.1).unwrap();
    assert!(rel(s_long, s1) < 1e-5, "{s1} vs {s_long}");
    let err = solve_sigma(&acc, &p, regime, 8.0, 1e-40).unwrap_err();
    assert!(matches!(err, PrivacyError::Infeasible(_)), "{err}");
    assert!(solve_sigma(&acc, &p, regime, 8.0, 0.0).is_err());
}

#[test]
fn validation_examples() {
    let v = validate(&PrivacyParams::new(10, 20, 1.0, 1.0, 0.1, 1.0, 5));
    assert!(!v.is_valid());
    assert!(v.violations.iter().any(|x| x.message.contains("b ≤ n")), "{:?}", v.violations);
    let bad = PrivacyParams::new(10, 5, 1.0, 1.0, 3.0, 1.0, 5).with_smoothness(1.0);
    assert!(validate(&bad).violations.iter().any(|x| x.message.contains("η ≤ 2/M")));
    let good = PrivacyParams::new(10, 5, 1.0, 1.0, 0.1, 1.0, 5);
    assert!(validate(&good).violations.is_empty());
    assert_eq!(validate(&bad), validate(&bad));
    assert_eq!(good.gradient_sensitivity(), 2.0);
    assert_eq!(good.clone().with_adjacency(Adjacency::Remove).gradient_sensitivity(), 1.0);
    assert_eq!(good.with_sensitivity(0.7).gradient_sensitivity(), 0.7);
}

#[test]
fn privacy_curve_matches_pointwise() {
    let acc = Accountant::default();
    let p = regime_base(Regime::NoisySgd);
    let grid = [1, 10, 100, 1000, 100_000];
    let rows = acc.privacy_curve(&p, Regime::NoisySgd, 4.0, &grid).unwrap();
    for (t, r) in rows {
        assert_eq!(r.epsilon, eps(&acc, &p.clone().with_iterations(t), Regime::NoisySgd, 4.0));
    }
    assert!(acc.privacy_curve(&p, Regime::NoisySgd, 4.0, &[5, 3]).is_err());
    assert!(acc.privacy_curve(&p, Regime::NoisySgd, 4.0, &[]).is_err());
}

fn any_subsampled() -> impl Strategy<Value = (PrivacyParams, f64)> {
    (20usize..2000, 1usize..50, 0.2f64..3.0, 0.2f64..3.0, 0.005f64..0.5, 0.3f64..6.0, 1usize..5000, 1.5f64..32.0)
        .prop_map(|(n, b, l, d, eta, sigma, t, alpha)| (PrivacyParams::new(n, b.min(n), l, d, eta, sigma, t), alpha))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn never_above_linear_bound((p, alpha) in any_subsampled()) {
        let acc = Accountant::default();
        let r = acc.epsilon(&AccountRequest::new(p.clone(), alpha, Regime::NoisySgd)).unwrap();
        let linear = p.iterations as f64 * acc.sgm(p.sampling_rate(), p.b as f64 * p.sigma / p.gradient_sensitivity(), alpha).unwrap();
        prop_assert!(r.epsilon <= linear);
        prop_assert_eq!(r.linear_epsilon, linear);
        prop_assert!(r.epsilon >= 0.0);
    }

    #[test]
    fn nonincreasing_in_sigma((p, alpha) in any_subsampled(), factor in 1.01f64..3.0) {
        let acc = Accountant::default();
        let a = eps(&acc, &p, Regime::NoisySgd, alpha);
        let b = eps(&acc, &p.clone().with_sigma(p.sigma * factor), Regime::NoisySgd, alpha);
        prop_assert!(b <= a * (1.0 + 1e-9), "{} then {}", a, b);
    }

    #[test]
    fn remove_adjacency_is_no_worse((p, alpha) in any_subsampled()) {
        let acc = Accountant::default();
        let replace = eps(&acc, &p, Regime::NoisySgd, alpha);
        let remove = eps(&acc, &p.clone().with_adjacency(Adjacency::Remove), Regime::NoisySgd, alpha);
        prop_assert!(remove <= replace * (1.0 + 1e-9));
    }

    #[test]
    fn nondecreasing_in_alpha((p, alpha) in any_subsampled(), bump in 1.01f64..2.0) {
        let acc = Accountant::default();
        let a = eps(&acc, &p, Regime::NoisySgd, alpha);
        let b = eps(&acc, &p, Regime::NoisySgd, alpha * bump);
        prop_assert!(b >= a * (1.0 - 1e-9));
    }

    #[test]
    fn cyclic_sigma_quartering(n_blocks in 1usize..8, b in 1usize..20, t in 1usize..3000, sigma in 0.2f64..5.0) {
        let acc = Accountant::default();
        let p = PrivacyParams::new(n_blocks * b, b, 1.0, 1.0, 0.05, sigma, t);
        let a = eps(&acc, &p, Regime::Cyclic, 2.0);
        let d = eps(&acc, &p.clone().with_sigma(2.0 * sigma), Regime::Cyclic, 2.0);
        prop_assert!(rel(d, a / 4.0) < 1e-12);
    }
}
