//! Property tests of the gain, game and large-system layers.

use approx::assert_relative_eq;
use prake_core::lsa::{nu_arake, nu_branch, nu_region, NuRegion};
use prake_core::*;
use proptest::prelude::*;

/// A random network with enough processing gain for a feasible game.
fn bank(seed: u64, users: usize, paths: usize, beta: f64, frames: usize) -> LinkGains {
    let profile = ApdpProfile::from_db(paths, 10.0).unwrap();
    let (_, channels) = sample_network(&profile, users, 3.0, 20.0, &SeedStream::new(seed), 0).unwrap();
    let sel = RakeSelector::from_fraction(beta, paths).unwrap();
    link_gains(&channels, &sel, &SpreadingConfig::new(frames, 16).unwrap(), 5e-16).unwrap()
}

fn bank_strategy() -> impl Strategy<Value = LinkGains> {
    (any::<u64>(), 2usize..6, 10usize..40, 0.1f64..=1.0, 20usize..60)
        .prop_map(|(seed, k, l, b, nf)| bank(seed, k, l, b, nf))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sinr_monotone_in_powers(g in bank_strategy(), scale in 1.01f64..10.0, raw in prop::collection::vec(1e-9f64..1e-6, 6)) {
        let k = g.user_count();
        let p = &raw[..k];
        for user in 0..k {
            let base = sinr(&g, p, user);
            let mut up = p.to_vec();
            up[user] *= scale;
            prop_assert!(sinr(&g, &up, user) > base);
            for other in (0..k).filter(|j| *j != user) {
                let mut q = p.to_vec();
                q[other] *= scale;
                prop_assert!(sinr(&g, &q, user) <= base);
            }
        }
    }

    #[test]
    fn link_gains_commute_with_user_order(seed in any::<u64>(), rot in 1usize..4) {
        let profile = ApdpProfile::from_db(30, 10.0).unwrap();
        let (_, channels) = sample_network(&profile, 4, 3.0, 20.0, &SeedStream::new(seed), 0).unwrap();
        let sel = RakeSelector::from_fraction(0.3, 30).unwrap();
        let sp = SpreadingConfig::new(2, 10).unwrap();
        let perm: Vec<usize> = (0..4).map(|i| (i + rot) % 4).collect();
        let reordered: Vec<ChannelRealization> = perm.iter().map(|&i| channels[i].clone()).collect();
        let a = link_gains(&reordered, &sel, &sp, 5e-16).unwrap();
        let b = link_gains(&channels, &sel, &sp, 5e-16).unwrap().permuted(&perm);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn equilibrium_is_a_fixed_point(g in bank_strategy()) {
        let params = UtilityParams::standard();
        let out = solve_equilibrium(&g, &params, &SolverOptions::default()).unwrap();
        prop_assert!(out.converged);
        for k in 0..g.user_count() {
            let (p, _) = best_response(&g, &out.powers, k, &params).unwrap();
            prop_assert!((p - out.powers[k]).abs() <= 1e-9 * out.powers[k]);
        }
        if !out.any_clamped() {
            let exact = PowerGame::new(&g, params).unwrap().linear_fixed_point().unwrap();
            for (a, b) in out.powers.iter().zip(&exact) {
                prop_assert!((a - b).abs() <= 1e-8 * b);
            }
            for (s, t) in out.sinrs.iter().zip(&out.targets) {
                prop_assert!((s - t).abs() <= 1e-8 * t);
            }
        }
    }

    #[test]
    fn sweeps_from_zero_are_non_decreasing(g in bank_strategy()) {
        let game = PowerGame::new(&g, UtilityParams::standard()).unwrap();
        let mut p = vec![0.0; g.user_count()];
        for _ in 0..200 {
            let next = game.sweep(&p);
            prop_assert!(next.iter().zip(&p).all(|(a, b)| *a >= *b));
            p = next;
        }
    }

    #[test]
    fn best_response_maximizes_utility(g in bank_strategy(), raw in prop::collection::vec(1e-10f64..1e-8, 6)) {
        let params = UtilityParams::standard();
        let k = g.user_count();
        let mut p = raw[..k].to_vec();
        for user in 0..k {
            let (br, clamped) = best_response(&g, &p, user, &params).unwrap();
            prop_assume!(!clamped);
            let mut u_at = |x: f64| {
                p[user] = x;
                params.utility(sinr(&g, &p, user), x)
            };
            let best = u_at(br);
            for f in [0.5, 0.9, 0.99, 1.01, 1.1, 2.0] {
                prop_assert!(u_at(br * f) <= best * (1.0 + 1e-12));
            }
            p[user] = br;
        }
    }

    #[test]
    fn target_below_si_ratio(s in 1.0f64..1e8) {
        let g = gamma_star(s, 100).unwrap();
        prop_assert!(g > 0.0 && g < s);
    }

    #[test]
    fn mu_between_one_and_flat(rho_db in 0.0f64..40.0, beta in 0.01f64..=1.0) {
        let m = mu(db_to_linear(rho_db), beta).unwrap();
        prop_assert!(m >= 1.0 - 1e-12 && m <= 1.0 / beta + 1e-9);
    }

    #[test]
    fn nu_positive_and_continuous_in_lambda(rho_db in 0.5f64..30.0, beta in 0.02f64..0.98, lambda in 0.02f64..3.0) {
        let rho = db_to_linear(rho_db);
        let v = nu(rho, beta, lambda).unwrap();
        prop_assert!(v > 0.0 && v.is_finite());
        let h = 1e-7;
        let w = nu(rho, beta, lambda + h).unwrap();
        prop_assert!((v - w).abs() <= 1e-5 * v);
    }

    #[test]
    fn nu_branches_meet_on_boundaries(rho_db in 0.5f64..30.0, beta in 0.02f64..0.98) {
        let rho = db_to_linear(rho_db);
        for lambda in [beta.min(1.0 - beta), beta.max(1.0 - beta), 1.0] {
            let below = nu_region(beta, lambda * (1.0 - 1e-9));
            let above = nu_region(beta, lambda * (1.0 + 1e-9));
            let (a, b) = (nu_branch(below, rho, beta, lambda), nu_branch(above, rho, beta, lambda));
            prop_assert!((a - b).abs() <= 1e-8 * a.abs(), "{below:?}/{above:?} at {lambda}: {a} vs {b}");
        }
    }

    #[test]
    fn loss_at_least_one_and_invertible(rho_db in 0.0f64..20.0, beta in 0.15f64..1.0, chips in 50usize..200) {
        let p = LsaParams::new(db_to_linear(rho_db), beta, chips as f64 / 200.0, 20, chips, 8).unwrap();
        let db = loss_db(&p).unwrap();
        prop_assert!(db >= -1e-12);
        if db > 0.05 {
            let b = invert_loss(db, &p, 0.05).unwrap();
            prop_assert!((loss_db(&p.with_beta(b)).unwrap() - db).abs() <= 0.01);
        }
    }
}

#[test]
fn arake_limit_of_many_finger_branch() {
    for rho in [2.0, 10.0, 100.0] {
        for lambda in [0.1, 0.4, 0.9] {
            let a = nu_branch(NuRegion::BetweenManyFingers, rho, 1.0 - 1e-7, lambda);
            assert_relative_eq!(a, nu_arake(rho, lambda), max_relative = 1e-5);
        }
    }
}
