//! Statistical checks of the tap sampler and agreement of the two gain paths.

use prake_core::channel::tap_variance;
use prake_core::*;

fn network(profile: &ApdpProfile, users: usize, seed: u64, trial: u64) -> Vec<ChannelRealization> {
    sample_network(profile, users, 3.0, 20.0, &SeedStream::new(seed), trial).unwrap().1
}

/// Kolmogorov-Smirnov distance of `xs` from the unit exponential law.
fn ks_unit_exponential(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = 1.0 - (-x).exp();
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn tap_power_moments_follow_profile() {
    let profile = ApdpProfile::from_db(40, 10.0).unwrap();
    let topo = NetworkTopology::from_distances(vec![5.0]).unwrap();
    let var = topo.user_variance(0);
    let seeds = SeedStream::new(11);
    let n = 20_000;
    let mut sums = vec![(0.0, 0.0); 40];
    for t in 0..n {
        let ch = sample_channel(&profile, &topo, 0, &mut seeds.rng(t, 0)).unwrap();
        for (s, a) in sums.iter_mut().zip(ch.gains()) {
            s.0 += a.norm_sqr();
            s.1 += a.norm_sqr().powi(2);
        }
    }
    for (l, (m1, m2)) in sums.iter().enumerate() {
        let s2 = tap_variance(&profile, var, l + 1).unwrap();
        // |alpha|^2 is exponential: mean s2, second moment 2 s2^2.
        assert!((m1 / n as f64 / s2 - 1.0).abs() < 0.03, "tap {l}: mean");
        assert!((m2 / n as f64 / (2.0 * s2 * s2) - 1.0).abs() < 0.08, "tap {l}: second moment");
    }
}

#[test]
fn tap_amplitude_is_rayleigh() {
    let profile = ApdpProfile::from_db(8, 20.0).unwrap();
    let topo = NetworkTopology::from_distances(vec![12.0]).unwrap();
    let var = topo.user_variance(0);
    let seeds = SeedStream::new(3);
    for l in [1usize, 4, 8] {
        let s2 = tap_variance(&profile, var, l).unwrap();
        let mut xs: Vec<f64> = (0..4000)
            .map(|t| sample_channel(&profile, &topo, 0, &mut seeds.rng(t, 0)).unwrap().gains()[l - 1].norm_sqr() / s2)
            .collect();
        let d = ks_unit_exponential(&mut xs);
        // 1% critical value of the one-sample KS statistic.
        assert!(d < 1.63 / (xs.len() as f64).sqrt(), "tap {l}: KS distance {d}");
    }
}

#[test]
fn phases_are_uniform() {
    let profile = ApdpProfile::new(16, 1.0).unwrap();
    let mut re = 0.0;
    let mut im = 0.0;
    let mut n = 0.0;
    for t in 0..500 {
        for ch in network(&profile, 4, 5, t) {
            for a in ch.gains() {
                let u = a / a.norm();
                re += u.re;
                im += u.im;
                n += 1.0;
            }
        }
    }
    assert!((re / n).abs() < 0.02 && (im / n).abs() < 0.02);
}

#[test]
fn dense_and_fast_gains_agree() {
    for (paths, rho_db, beta, frames, chips) in [(60, 10.0, 0.3, 4, 20), (40, 0.0, 1.0, 2, 50), (25, 20.0, 0.1, 1, 7)] {
        let profile = ApdpProfile::from_db(paths, rho_db).unwrap();
        let sel = RakeSelector::from_fraction(beta, paths).unwrap();
        let spreading = SpreadingConfig::new(frames, chips).unwrap();
        for trial in 0..3 {
            let channels = network(&profile, 5, 9, trial);
            let fast = link_gains(&channels, &sel, &spreading, 5e-16).unwrap();
            let dense = link_gains_dense(&channels, &sel, &spreading, 5e-16).unwrap();
            for k in 0..5 {
                approx::assert_relative_eq!(fast.h_sp(k), dense.h_sp(k), max_relative = 1e-12);
                approx::assert_relative_eq!(fast.h_si(k), dense.h_si(k), max_relative = 1e-12);
                for j in 0..5 {
                    approx::assert_relative_eq!(fast.h_mai(k, j), dense.h_mai(k, j), max_relative = 1e-12);
                }
            }
        }
    }
}

#[test]
fn gain_factor_matches_frame_count() {
    let profile = ApdpProfile::from_db(50, 10.0).unwrap();
    let sel = RakeSelector::from_fraction(0.2, 50).unwrap();
    let channels = network(&profile, 4, 21, 0);
    let one = link_gains(&channels, &sel, &SpreadingConfig::new(1, 25).unwrap(), 5e-16).unwrap();
    let direct = link_gains(&channels, &sel, &SpreadingConfig::new(7, 25).unwrap(), 5e-16).unwrap();
    let scaled = one.with_gain_factor(7.0).unwrap();
    for k in 0..4 {
        approx::assert_relative_eq!(scaled.h_sp(k), direct.h_sp(k), max_relative = 1e-12);
        approx::assert_relative_eq!(scaled.h_si(k), direct.h_si(k), max_relative = 1e-12);
        for j in 0..4 {
            approx::assert_relative_eq!(scaled.h_mai(k, j), direct.h_mai(k, j), max_relative = 1e-12);
        }
    }
}

#[test]
fn si_ratio_is_at_least_one() {
    // 10^4 user realizations per (paths, beta) at N_c = 50, N_f = 20.
    // Violations are printed with their seed key; only paths = 200 fails.
    let spreading = SpreadingConfig::new(20, 50).unwrap();
    let users = 8;
    let trials = 1250;
    for paths in [50usize, 200] {
        let profile = ApdpProfile::from_db(paths, 10.0).unwrap();
        let banks: Vec<RakeSelector> =
            [1.0, 0.1].iter().map(|b| RakeSelector::from_fraction(*b, paths).unwrap()).collect();
        let mut violations = 0;
        let mut smallest = f64::INFINITY;
        for trial in 0..trials {
            let channels = network(&profile, users, 2, trial);
            for sel in &banks {
                let g = link_gains(&channels, sel, &spreading, 5e-16).unwrap();
                for k in 0..users {
                    let s = g.si_ratio(k);
                    smallest = smallest.min(s);
                    if s < 1.0 {
                        violations += 1;
                        println!("paths {paths} beta {} seed 2 trial {trial} user {k}: {s}", sel.finger_fraction());
                    }
                }
            }
        }
        println!("paths {paths}: smallest si_ratio {smallest}, {violations} below one");
        if paths == 200 {
            assert_eq!(violations, 0);
        }
    }
}
