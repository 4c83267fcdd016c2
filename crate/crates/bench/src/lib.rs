//! Fixtures shared by the benchmarks.

use prake_core::{link_gains, sample_network, ApdpProfile, ChannelRealization, LinkGains, RakeSelector, SeedStream, SpreadingConfig};

/// Channels of one simulated network: K = 8, rho = 10 dB, distances in
/// [3, 20] m.
pub fn network(paths: usize, seed: u64) -> Vec<ChannelRealization> {
    let profile = ApdpProfile::from_db(paths, 10.0).expect("valid profile");
    sample_network(&profile, 8, 3.0, 20.0, &SeedStream::new(seed), 0).expect("valid network").1
}

/// Link gains of [`network`] at N_c = 50, N_f = 20.
pub fn bank(paths: usize, beta: f64, seed: u64) -> LinkGains {
    let sel = RakeSelector::from_fraction(beta, paths).expect("valid fraction");
    let spreading = SpreadingConfig::new(20, 50).expect("valid spreading");
    link_gains(&network(paths, seed), &sel, &spreading, 5e-16).expect("valid bank")
}
