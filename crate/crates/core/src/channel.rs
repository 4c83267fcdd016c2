//! Network topology and frequency-selective channel generation.
//!
//! Each user sees a tapped-delay-line channel with `L` chip-spaced taps. Tap
//! amplitudes are independent circular complex Gaussians whose variances
//! follow an exponentially decaying average power delay profile (aPDP):
//!
//! ```text
//! var(alpha_{k,l}) = sigma_k^2 * rho^(-(l-1)/(L-1)),   sigma_k^2 = 0.3 * d_k^-2
//! ```
//!
//! so that the first-to-last tap power ratio equals `rho`. `rho = 1` (0 dB)
//! is the flat profile.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{SeedStream, TOPOLOGY_LANE};

/// Default large-scale scale factor in `sigma_k^2 = scale * d_k^-exponent`.
pub const DEFAULT_PATH_VARIANCE_SCALE: f64 = 0.3;
/// Default path-loss exponent.
pub const DEFAULT_PATHLOSS_EXPONENT: f64 = 2.0;

/// User placement around the access point.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    distances: Vec<f64>,
    path_variance_scale: f64,
    pathloss_exponent: f64,
}

impl NetworkTopology {
    /// Builds a topology from explicit distances (meters) with the default
    /// large-scale law.
    pub fn from_distances(distances: Vec<f64>) -> Result<Self> {
        Self::with_law(
            distances,
            DEFAULT_PATH_VARIANCE_SCALE,
            DEFAULT_PATHLOSS_EXPONENT,
        )
    }

    pub fn with_law(
        distances: Vec<f64>,
        path_variance_scale: f64,
        pathloss_exponent: f64,
    ) -> Result<Self> {
        if distances.is_empty() {
            return Err(Error::param("user_count", "need at least one user"));
        }
        if let Some(d) = distances.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(Error::param("distance", format!("{d} is not a positive length")));
        }
        if !(path_variance_scale.is_finite() && path_variance_scale > 0.0) {
            return Err(Error::param("path_variance_scale", "must be positive"));
        }
        if !pathloss_exponent.is_finite() {
            return Err(Error::param("pathloss_exponent", "must be finite"));
        }
        Ok(Self {
            distances,
            path_variance_scale,
            pathloss_exponent,
        })
    }

    pub fn user_count(&self) -> usize {
        self.distances.len()
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    /// Large-scale variance `sigma_k^2` of user `k` (0-based).
    pub fn user_variance(&self, k: usize) -> f64 {
        self.path_variance_scale * self.distances[k].powf(-self.pathloss_exponent)
    }
}

/// Draws `user_count` i.i.d. uniform distances on `[d_min, d_max]`.
pub fn sample_topology<R: Rng + ?Sized>(
    user_count: usize,
    d_min: f64,
    d_max: f64,
    rng: &mut R,
) -> Result<NetworkTopology> {
    if user_count == 0 {
        return Err(Error::param("user_count", "need at least one user"));
    }
    if !(d_min.is_finite() && d_max.is_finite() && d_min > 0.0 && d_min <= d_max) {
        return Err(Error::param(
            "distance bounds",
            format!("need 0 < d_min <= d_max, got [{d_min}, {d_max}]"),
        ));
    }
    let distances = (0..user_count)
        .map(|_| {
            if d_min == d_max {
                d_min
            } else {
                rng.gen_range(d_min..=d_max)
            }
        })
        .collect();
    NetworkTopology::from_distances(distances)
}

/// Exponentially decaying average power delay profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApdpProfile {
    path_count: usize,
    decay_ratio: f64,
}

impl ApdpProfile {
    pub fn new(path_count: usize, decay_ratio: f64) -> Result<Self> {
        if path_count == 0 {
            return Err(Error::param("path_count", "need at least one path"));
        }
        if !(decay_ratio.is_finite() && decay_ratio >= 1.0) {
            return Err(Error::param(
                "decay_ratio",
                format!("must be >= 1 (0 dB), got {decay_ratio}"),
            ));
        }
        Ok(Self {
            path_count,
            decay_ratio,
        })
    }

    /// Profile with the decay ratio given in dB.
    pub fn from_db(path_count: usize, decay_db: f64) -> Result<Self> {
        Self::new(path_count, db_to_linear(decay_db))
    }

    pub fn path_count(&self) -> usize {
        self.path_count
    }

    pub fn decay_ratio(&self) -> f64 {
        self.decay_ratio
    }

    /// Relative power `rho^(-(l-1)/(L-1))` of the 1-based tap `l`, without
    /// bounds checking. For `L = 1` the exponent is taken as 0.
    #[inline]
    pub(crate) fn relative_power(&self, l: usize) -> f64 {
        if self.path_count == 1 {
            return 1.0;
        }
        let x = (l - 1) as f64 / (self.path_count - 1) as f64;
        self.decay_ratio.powf(-x)
    }

    /// Relative tap powers for `l = 1..=L`.
    pub fn relative_powers(&self) -> Vec<f64> {
        (1..=self.path_count).map(|l| self.relative_power(l)).collect()
    }
}

/// Variance of the 1-based tap `l` for a user with large-scale variance
/// `user_variance`.
pub fn tap_variance(profile: &ApdpProfile, user_variance: f64, l: usize) -> Result<f64> {
    if l == 0 || l > profile.path_count {
        return Err(Error::Index {
            index: l,
            len: profile.path_count,
        });
    }
    Ok(user_variance * profile.relative_power(l))
}

/// Complex path gains of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    gains: Vec<Complex64>,
}

impl ChannelRealization {
    pub fn new(gains: Vec<Complex64>) -> Self {
        Self { gains }
    }

    pub fn gains(&self) -> &[Complex64] {
        &self.gains
    }

    pub fn path_count(&self) -> usize {
        self.gains.len()
    }

    /// `h_k = ||alpha_k||^2`.
    pub fn channel_gain(&self) -> f64 {
        self.gains.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Same realization with every tap multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            gains: self.gains.iter().map(|a| a * factor).collect(),
        }
    }
}

/// Draws the channel of user `k` (0-based): each tap is
/// `sqrt(var/2) * (g1 + i g2)` with `g1, g2` standard normal.
pub fn sample_channel<R: Rng + ?Sized>(
    profile: &ApdpProfile,
    topology: &NetworkTopology,
    k: usize,
    rng: &mut R,
) -> Result<ChannelRealization> {
    if k >= topology.user_count() {
        return Err(Error::Index {
            index: k + 1,
            len: topology.user_count(),
        });
    }
    let sigma2 = topology.user_variance(k);
    let gains = (1..=profile.path_count)
        .map(|l| {
            let std = (0.5 * sigma2 * profile.relative_power(l)).sqrt();
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(std * re, std * im)
        })
        .collect();
    Ok(ChannelRealization::new(gains))
}

/// Distances and channels of every user for Monte Carlo trial `trial`.
///
/// Distances come from the topology lane, user `k`'s taps from lane `k`, so
/// the result depends only on `(seeds, trial)`.
pub fn sample_network(
    profile: &ApdpProfile,
    user_count: usize,
    d_min: f64,
    d_max: f64,
    seeds: &SeedStream,
    trial: u64,
) -> Result<(NetworkTopology, Vec<ChannelRealization>)> {
    let topology = sample_topology(user_count, d_min, d_max, &mut seeds.rng(trial, TOPOLOGY_LANE))?;
    let channels = (0..user_count)
        .map(|k| sample_channel(profile, &topology, k, &mut seeds.rng(trial, k as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok((topology, channels))
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn topology_draws_within_bounds() {
        let mut rng = SeedStream::new(7).rng(0, TOPOLOGY_LANE);
        let t = sample_topology(8, 3.0, 20.0, &mut rng).unwrap();
        assert_eq!(t.user_count(), 8);
        assert!(t.distances().iter().all(|d| (3.0..=20.0).contains(d)));
    }

    #[test]
    fn degenerate_interval() {
        let mut rng = SeedStream::new(7).rng(0, 0);
        let t = sample_topology(1, 10.0, 10.0, &mut rng).unwrap();
        assert_eq!(t.distances(), &[10.0]);
        assert_relative_eq!(t.user_variance(0), 0.003, max_relative = 1e-15);
    }

    #[test]
    fn topology_is_deterministic() {
        let s = SeedStream::new(99);
        let a = sample_topology(8, 3.0, 20.0, &mut s.rng(5, TOPOLOGY_LANE)).unwrap();
        let b = sample_topology(8, 3.0, 20.0, &mut s.rng(5, TOPOLOGY_LANE)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_bounds_rejected() {
        let mut rng = SeedStream::new(1).rng(0, 0);
        assert!(sample_topology(3, 0.0, 5.0, &mut rng).is_err());
        assert!(sample_topology(3, 6.0, 5.0, &mut rng).is_err());
        assert!(sample_topology(0, 1.0, 5.0, &mut rng).is_err());
    }

    #[test]
    fn tap_variance_endpoints() {
        let p = ApdpProfile::new(200, 100.0).unwrap();
        assert_eq!(tap_variance(&p, 2.0, 1).unwrap(), 2.0);
        assert_relative_eq!(tap_variance(&p, 2.0, 200).unwrap(), 0.02, max_relative = 1e-14);
        assert!(matches!(tap_variance(&p, 2.0, 0), Err(Error::Index { .. })));
        assert!(matches!(tap_variance(&p, 2.0, 201), Err(Error::Index { .. })));
    }

    #[test]
    fn tap_variance_midpoint() {
        let p = ApdpProfile::new(201, 100.0).unwrap();
        assert_relative_eq!(tap_variance(&p, 1.0, 101).unwrap(), 0.1, max_relative = 1e-14);
    }

    #[test]
    fn flat_profile_and_single_tap() {
        let flat = ApdpProfile::from_db(50, 0.0).unwrap();
        for l in 1..=50 {
            assert_eq!(tap_variance(&flat, 0.7, l).unwrap(), 0.7);
        }
        let one = ApdpProfile::new(1, 10.0).unwrap();
        assert_eq!(tap_variance(&one, 0.7, 1).unwrap(), 0.7);
    }

    #[test]
    fn profile_is_log_linear() {
        let p = ApdpProfile::from_db(64, 20.0).unwrap();
        let logs: Vec<f64> = p.relative_powers().iter().map(|v| v.ln()).collect();
        // least-squares line through (l, log v)
        let n = logs.len() as f64;
        let xs: Vec<f64> = (0..logs.len()).map(|i| i as f64).collect();
        let mx = xs.iter().sum::<f64>() / n;
        let my = logs.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&logs).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let slope = sxy / sxx;
        let dev = xs
            .iter()
            .zip(&logs)
            .map(|(x, y)| (y - (my + slope * (x - mx))).abs())
            .fold(0.0, f64::max);
        assert!(dev < 1e-12, "max deviation {dev}");
        assert!(logs.windows(2).all(|w| w[1] < w[0]));
        assert_relative_eq!(logs[0] - logs[63], 100f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn invalid_profile() {
        assert!(ApdpProfile::new(0, 2.0).is_err());
        assert!(ApdpProfile::new(5, 0.5).is_err());
        assert!(ApdpProfile::new(5, f64::NAN).is_err());
    }

    #[test]
    fn scaling_user_variance_scales_taps() {
        let p = ApdpProfile::from_db(10, 10.0).unwrap();
        for l in 1..=10 {
            let a = tap_variance(&p, 1.5, l).unwrap();
            let b = tap_variance(&p, 3.0, l).unwrap();
            assert_relative_eq!(b, 2.0 * a, max_relative = 1e-15);
        }
    }

    #[test]
    fn channel_gain_is_squared_norm() {
        let c = ChannelRealization::new(vec![Complex64::new(1.0, 2.0), Complex64::new(-3.0, 0.5)]);
        assert_relative_eq!(c.channel_gain(), 1.0 + 4.0 + 9.0 + 0.25);
    }

    #[test]
    fn network_is_reproducible() {
        let p = ApdpProfile::from_db(32, 10.0).unwrap();
        let s = SeedStream::new(2024);
        let a = sample_network(&p, 4, 3.0, 20.0, &s, 17).unwrap();
        let b = sample_network(&p, 4, 3.0, 20.0, &s, 17).unwrap();
        assert_eq!(a, b);
        let c = sample_network(&p, 4, 3.0, 20.0, &s, 18).unwrap();
        assert_ne!(a.1[0], c.1[0]);
    }
}
