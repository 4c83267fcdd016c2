//! Rake combining and the per-realization link gains.
//!
//! For user `k` with path gains `alpha_k` and MRC weights `c_k = G alpha_k`
//! (where `G` keeps the first `L_P` taps), the Rake output SINR is
//!
//! ```text
//!            h_sp_k p_k
//! gamma_k = -------------------------------------------
//!           h_si_k p_k + sum_{j != k} h_mai_kj p_j + s2
//! ```
//!
//! with
//!
//! ```text
//! h_sp_k   = c_k^H alpha_k
//! h_si_k   = ||Phi (B_k^H alpha_k + A_k^H c_k)||^2 / (N h_sp_k)
//! h_mai_kj = (||B_k^H alpha_j||^2 + ||A_j^H c_k||^2 + |c_k^H alpha_j|^2) / (N h_sp_k)
//! ```
//!
//! `A_k` (`B_k`) is the `L x (L-1)` upper-shift matrix built from `alpha_k`
//! (`c_k`), and `Phi = diag(phi_1..phi_{L-1})` weights each shift by the
//! fraction of the frame it overlaps.
//!
//! Column `i` of `A^H y` is a lagged correlation at lag `s = L - i`, so the
//! production path evaluates these as banded sums restricted to the finger
//! support and never builds the matrices. [`interference_matrices`] and
//! [`link_gains_dense`] are the dense reference.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};

/// Partial-Rake receiver with maximal ratio combining on the first
/// `finger_count` taps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RakeSelector {
    path_count: usize,
    finger_count: usize,
}

impl RakeSelector {
    /// `L_P = floor(beta * L)`, at least one finger.
    pub fn from_fraction(finger_fraction: f64, path_count: usize) -> Result<Self> {
        if !(finger_fraction > 0.0 && finger_fraction <= 1.0) {
            return Err(Error::param(
                "finger_fraction",
                format!("must lie in (0, 1], got {finger_fraction}"),
            ));
        }
        if path_count == 0 {
            return Err(Error::param("path_count", "need at least one path"));
        }
        // 0.3 * 200 is 59.99999999999999 in binary floating point.
        let raw = (finger_fraction * path_count as f64 + 1e-9).floor() as usize;
        Ok(Self {
            path_count,
            finger_count: raw.clamp(1, path_count),
        })
    }

    pub fn with_fingers(finger_count: usize, path_count: usize) -> Result<Self> {
        if finger_count == 0 || finger_count > path_count {
            return Err(Error::param(
                "finger_count",
                format!("must lie in 1..={path_count}, got {finger_count}"),
            ));
        }
        Ok(Self {
            path_count,
            finger_count,
        })
    }

    pub fn all_rake(path_count: usize) -> Result<Self> {
        Self::with_fingers(path_count, path_count)
    }

    pub fn path_count(&self) -> usize {
        self.path_count
    }

    pub fn finger_count(&self) -> usize {
        self.finger_count
    }

    /// Effective `beta = L_P / L`.
    pub fn finger_fraction(&self) -> f64 {
        self.finger_count as f64 / self.path_count as f64
    }

    pub fn is_all_rake(&self) -> bool {
        self.finger_count == self.path_count
    }

    /// Diagonal of the 0/1 selection matrix `G`.
    pub fn selection_diagonal(&self) -> Vec<f64> {
        (0..self.path_count)
            .map(|l| if l < self.finger_count { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Time-hopping spreading parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpreadingConfig {
    frames: usize,
    chips_per_frame: usize,
}

impl SpreadingConfig {
    pub fn new(frames: usize, chips_per_frame: usize) -> Result<Self> {
        if frames == 0 {
            return Err(Error::param("frames", "must be positive"));
        }
        if chips_per_frame == 0 {
            return Err(Error::param("chips_per_frame", "must be positive"));
        }
        Ok(Self {
            frames,
            chips_per_frame,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn chips_per_frame(&self) -> usize {
        self.chips_per_frame
    }

    /// `N = N_f * N_c`.
    pub fn processing_gain(&self) -> usize {
        self.frames * self.chips_per_frame
    }

    /// `Lambda = N_c / L`.
    pub fn load_factor(&self, path_count: usize) -> f64 {
        self.chips_per_frame as f64 / path_count as f64
    }
}

/// MRC weights `c = G alpha`.
pub fn rake_weights(alpha: &ChannelRealization, sel: &RakeSelector) -> Result<Vec<Complex64>> {
    if alpha.path_count() != sel.path_count() {
        return Err(Error::param(
            "rake_weights",
            format!(
                "channel has {} taps, selector expects {}",
                alpha.path_count(),
                sel.path_count()
            ),
        ));
    }
    Ok(alpha
        .gains()
        .iter()
        .enumerate()
        .map(|(l, a)| if l < sel.finger_count() { *a } else { Complex64::new(0.0, 0.0) })
        .collect())
}

/// `phi_l = sqrt(min(L - l, N_c) / N_c)` for the 1-based shift index `l`.
pub fn phi_coefficient(l: usize, chips_per_frame: usize, path_count: usize) -> Result<f64> {
    if l == 0 || l >= path_count {
        return Err(Error::Index {
            index: l,
            len: path_count.saturating_sub(1),
        });
    }
    Ok(phi_squared_at_lag(path_count - l, chips_per_frame).sqrt())
}

/// `phi^2` expressed through the lag `s = L - l`.
#[inline]
fn phi_squared_at_lag(lag: usize, chips_per_frame: usize) -> f64 {
    lag.min(chips_per_frame) as f64 / chips_per_frame as f64
}

/// Dense `L x (L-1)` matrices `(A, B)` built from `alpha` and `c`:
/// entry `(l, i)` (1-based) holds tap `L + l - i` when `l <= i`, zero
/// otherwise.
pub fn interference_matrices(
    alpha: &[Complex64],
    c: &[Complex64],
) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
    if alpha.len() != c.len() {
        return Err(Error::param("interference_matrices", "length mismatch"));
    }
    Ok((shift_matrix(alpha), shift_matrix(c)))
}

fn shift_matrix(x: &[Complex64]) -> DMatrix<Complex64> {
    let n = x.len();
    let cols = n.saturating_sub(1);
    DMatrix::from_fn(n, cols, |r, col| {
        // 0-based row r, column col  <->  1-based l = r + 1, i = col + 1
        if r <= col {
            x[n + r - col - 1]
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Gains of every user in the network for one receiver bank.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGains {
    h_sp: Vec<f64>,
    h_si: Vec<f64>,
    /// Row-major `K x K`; the diagonal is unused and stored as 0.
    h_mai: Vec<f64>,
    noise_var: f64,
}

impl LinkGains {
    /// Assembles a bank from precomputed gains. `h_mai` is row-major `K x K`.
    pub fn from_parts(h_sp: Vec<f64>, h_si: Vec<f64>, mut h_mai: Vec<f64>, noise_var: f64) -> Result<Self> {
        let k = h_sp.len();
        if k == 0 || h_si.len() != k || h_mai.len() != k * k {
            return Err(Error::param("LinkGains", "inconsistent dimensions"));
        }
        if !(noise_var > 0.0) {
            return Err(Error::param("noise_var", "must be positive"));
        }
        if h_si.iter().chain(&h_mai).any(|v| !(*v >= 0.0)) {
            return Err(Error::param("LinkGains", "gains must be non-negative"));
        }
        for (user, &h) in h_sp.iter().enumerate() {
            if !(h > 0.0) {
                return Err(Error::DegenerateChannel { user, h_sp: h });
            }
        }
        for i in 0..k {
            h_mai[i * k + i] = 0.0;
        }
        Ok(Self {
            h_sp,
            h_si,
            h_mai,
            noise_var,
        })
    }

    pub fn user_count(&self) -> usize {
        self.h_sp.len()
    }

    pub fn h_sp(&self, k: usize) -> f64 {
        self.h_sp[k]
    }

    pub fn h_si(&self, k: usize) -> f64 {
        self.h_si[k]
    }

    pub fn h_mai(&self, k: usize, j: usize) -> f64 {
        self.h_mai[k * self.user_count() + j]
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// `h_sp / h_si`; infinite when there is no self-interference.
    pub fn si_ratio(&self, k: usize) -> f64 {
        if self.h_si[k] == 0.0 {
            f64::INFINITY
        } else {
            self.h_sp[k] / self.h_si[k]
        }
    }

    /// `zeta_k^-1 = sum_{j != k} h_mai_kj / h_sp_j`.
    pub fn mai_ratio_inv(&self, k: usize) -> f64 {
        (0..self.user_count())
            .filter(|&j| j != k)
            .map(|j| self.h_mai(k, j) / self.h_sp[j])
            .sum()
    }

    /// MAI power `sum_{j != k} h_mai_kj p_j` seen by user `k`.
    pub fn mai_power(&self, powers: &[f64], k: usize) -> f64 {
        let row = &self.h_mai[k * self.user_count()..(k + 1) * self.user_count()];
        row.iter()
            .zip(powers)
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, (h, p))| h * p)
            .sum()
    }

    /// Same bank with users reordered: user `i` of the result is user
    /// `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let k = self.user_count();
        let mut h_mai = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                h_mai[a * k + b] = self.h_mai(perm[a], perm[b]);
            }
        }
        Self {
            h_sp: perm.iter().map(|&i| self.h_sp[i]).collect(),
            h_si: perm.iter().map(|&i| self.h_si[i]).collect(),
            h_mai,
            noise_var: self.noise_var,
        }
    }

    /// Same channels with the processing gain multiplied by `factor`: the SI
    /// and MAI gains scale as `1/N`, `h_sp` does not.
    pub fn with_gain_factor(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::param("factor", "must be positive"));
        }
        Ok(Self {
            h_sp: self.h_sp.clone(),
            h_si: self.h_si.iter().map(|v| v / factor).collect(),
            h_mai: self.h_mai.iter().map(|v| v / factor).collect(),
            noise_var: self.noise_var,
        })
    }

    /// Same gains with another noise variance.
    pub fn with_noise_var(&self, noise_var: f64) -> Result<Self> {
        if !(noise_var > 0.0) {
            return Err(Error::param("noise_var", "must be positive"));
        }
        Ok(Self {
            noise_var,
            ..self.clone()
        })
    }
}

fn check_bank(
    channels: &[ChannelRealization],
    sel: &RakeSelector,
    noise_var: f64,
) -> Result<()> {
    if channels.is_empty() {
        return Err(Error::param("channels", "need at least one user"));
    }
    if let Some(ch) = channels.iter().find(|c| c.path_count() != sel.path_count()) {
        return Err(Error::param(
            "channels",
            format!("channel has {} taps, selector expects {}", ch.path_count(), sel.path_count()),
        ));
    }
    if !(noise_var > 0.0) {
        return Err(Error::param("noise_var", "must be positive"));
    }
    Ok(())
}

/// `sum_{l < n} conj(x[l + lag]) * y[l]` with `n = min(len_x - lag, len_y)`.
/// Callers pass slices already truncated to their non-zero support.
#[inline]
fn lagged_dot(x: &[Complex64], y: &[Complex64], lag: usize) -> Complex64 {
    if lag >= x.len() {
        return Complex64::new(0.0, 0.0);
    }
    let x = &x[lag..];
    let n = x.len().min(y.len());
    let (mut re, mut im) = (0.0, 0.0);
    for (a, b) in x[..n].iter().zip(&y[..n]) {
        // conj(a) * b
        re += a.re * b.re + a.im * b.im;
        im += a.re * b.im - a.im * b.re;
    }
    Complex64::new(re, im)
}

/// Link gains of every user for one receiver bank, evaluated with banded
/// lag sums.
pub fn link_gains(
    channels: &[ChannelRealization],
    sel: &RakeSelector,
    spreading: &SpreadingConfig,
    noise_var: f64,
) -> Result<LinkGains> {
    check_bank(channels, sel, noise_var)?;
    let k_users = channels.len();
    let l_paths = sel.path_count();
    let fingers = sel.finger_count();
    let n_gain = spreading.processing_gain() as f64;
    let nc = spreading.chips_per_frame();

    let alphas: Vec<&[Complex64]> = channels.iter().map(|c| c.gains()).collect();
    // c_k restricted to its support is just the first L_P taps of alpha_k.
    let weights: Vec<&[Complex64]> = alphas.iter().map(|a| &a[..fingers]).collect();

    let mut h_sp = Vec::with_capacity(k_users);
    for (user, w) in weights.iter().enumerate() {
        let h: f64 = w.iter().map(|a| a.norm_sqr()).sum();
        if !(h > 0.0) {
            return Err(Error::DegenerateChannel { user, h_sp: h });
        }
        h_sp.push(h);
    }

    let mut h_si = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let (a, c) = (alphas[k], weights[k]);
        let mut acc = 0.0;
        for lag in 1..l_paths {
            let t = lagged_dot(c, a, lag) + lagged_dot(a, c, lag);
            acc += phi_squared_at_lag(lag, nc) * t.norm_sqr();
        }
        h_si.push(acc / (n_gain * h_sp[k]));
    }

    let mut h_mai = vec![0.0; k_users * k_users];
    for k in 0..k_users {
        let c = weights[k];
        for j in (0..k_users).filter(|&j| j != k) {
            let a = alphas[j];
            let mut acc = lagged_dot(c, a, 0).norm_sqr();
            for lag in 1..l_paths {
                acc += lagged_dot(c, a, lag).norm_sqr() + lagged_dot(a, c, lag).norm_sqr();
            }
            h_mai[k * k_users + j] = acc / (n_gain * h_sp[k]);
        }
    }

    LinkGains::from_parts(h_sp, h_si, h_mai, noise_var)
}

/// Reference evaluation of the same gains through explicit `A`, `B` and
/// `Phi` matrices. Quadratic memory in `L`; intended for tests.
pub fn link_gains_dense(
    channels: &[ChannelRealization],
    sel: &RakeSelector,
    spreading: &SpreadingConfig,
    noise_var: f64,
) -> Result<LinkGains> {
    check_bank(channels, sel, noise_var)?;
    let k_users = channels.len();
    let l_paths = sel.path_count();
    let n_gain = spreading.processing_gain() as f64;

    let phi = DMatrix::<Complex64>::from_diagonal(&nalgebra::DVector::from_iterator(
        l_paths.saturating_sub(1),
        (1..l_paths).map(|l| {
            Complex64::new(phi_coefficient(l, spreading.chips_per_frame(), l_paths).unwrap(), 0.0)
        }),
    ));

    let mut alphas = Vec::with_capacity(k_users);
    let mut weights = Vec::with_capacity(k_users);
    let mut a_mats = Vec::with_capacity(k_users);
    let mut b_mats = Vec::with_capacity(k_users);
    for ch in channels {
        let c = rake_weights(ch, sel)?;
        let (a, b) = interference_matrices(ch.gains(), &c)?;
        alphas.push(nalgebra::DVector::from_column_slice(ch.gains()));
        weights.push(nalgebra::DVector::from_vec(c));
        a_mats.push(a);
        b_mats.push(b);
    }

    let mut h_sp = Vec::with_capacity(k_users);
    for (user, (c, a)) in weights.iter().zip(&alphas).enumerate() {
        let v = c.dotc(a);
        // c = G alpha, so c^H alpha = sum |alpha_l|^2 over the fingers.
        debug_assert!(v.im.abs() <= 1e-12 * v.re.abs().max(f64::MIN_POSITIVE));
        if !(v.re > 0.0) {
            return Err(Error::DegenerateChannel { user, h_sp: v.re });
        }
        h_sp.push(v.re);
    }

    let h_si = (0..k_users)
        .map(|k| {
            let v = &phi * (b_mats[k].adjoint() * &alphas[k] + a_mats[k].adjoint() * &weights[k]);
            v.norm_squared() / (n_gain * h_sp[k])
        })
        .collect();

    let mut h_mai = vec![0.0; k_users * k_users];
    for k in 0..k_users {
        for j in (0..k_users).filter(|&j| j != k) {
            let t1 = (b_mats[k].adjoint() * &alphas[j]).norm_squared();
            let t2 = (a_mats[j].adjoint() * &weights[k]).norm_squared();
            let t3 = weights[k].dotc(&alphas[j]).norm_sqr();
            h_mai[k * k_users + j] = (t1 + t2 + t3) / (n_gain * h_sp[k]);
        }
    }

    LinkGains::from_parts(h_sp, h_si, h_mai, noise_var)
}

/// SINR of user `k` at the Rake output for the power vector `powers`.
pub fn sinr(gains: &LinkGains, powers: &[f64], k: usize) -> f64 {
    let p = powers[k];
    let den = gains.h_si(k) * p + gains.mai_power(powers, k) + gains.noise_var();
    gains.h_sp(k) * p / den
}

/// SINRs of every user.
pub fn sinrs(gains: &LinkGains, powers: &[f64]) -> Vec<f64> {
    (0..gains.user_count()).map(|k| sinr(gains, powers, k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn real_channel(v: &[f64]) -> ChannelRealization {
        ChannelRealization::new(v.iter().map(|x| c(*x, 0.0)).collect())
    }

    #[test]
    fn selector_counts() {
        assert_eq!(RakeSelector::from_fraction(0.1, 200).unwrap().finger_count(), 20);
        assert_eq!(RakeSelector::from_fraction(0.3, 200).unwrap().finger_count(), 60);
        assert_eq!(RakeSelector::from_fraction(0.5, 200).unwrap().finger_count(), 100);
        assert_eq!(RakeSelector::from_fraction(0.001, 200).unwrap().finger_count(), 1);
        let all = RakeSelector::from_fraction(1.0, 200).unwrap();
        assert!(all.is_all_rake());
        assert!(RakeSelector::from_fraction(0.0, 10).is_err());
        assert!(RakeSelector::from_fraction(1.2, 10).is_err());
        let g = RakeSelector::with_fingers(2, 4).unwrap().selection_diagonal();
        assert_eq!(g, vec![1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn spreading_config() {
        let s = SpreadingConfig::new(20, 50).unwrap();
        assert_eq!(s.processing_gain(), 1000);
        assert_eq!(s.load_factor(200), 0.25);
        assert!(SpreadingConfig::new(0, 50).is_err());
    }

    #[test]
    fn weights_follow_selection() {
        let ch = real_channel(&[1.0, 2.0, 3.0, 4.0]);
        let w = rake_weights(&ch, &RakeSelector::with_fingers(2, 4).unwrap()).unwrap();
        assert_eq!(w, vec![c(1.0, 0.0), c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let all = rake_weights(&ch, &RakeSelector::all_rake(4).unwrap()).unwrap();
        assert_eq!(all, ch.gains());
        assert!(rake_weights(&ch, &RakeSelector::all_rake(5).unwrap()).is_err());
    }

    #[test]
    fn h_sp_is_finger_energy() {
        let ch = ChannelRealization::new(vec![c(1.0, 1.0), c(0.5, -2.0), c(3.0, 0.0), c(0.0, 4.0)]);
        let sel = RakeSelector::with_fingers(2, 4).unwrap();
        let g = link_gains(&[ch], &sel, &SpreadingConfig::new(5, 2).unwrap(), 1.0).unwrap();
        assert_relative_eq!(g.h_sp(0), 2.0 + 0.25 + 4.0);
    }

    #[test]
    fn phi_values() {
        assert_relative_eq!(phi_coefficient(9, 20, 10).unwrap(), (1.0f64 / 20.0).sqrt());
        assert_eq!(phi_coefficient(1, 5, 10).unwrap(), 1.0);
        assert_relative_eq!(phi_coefficient(160, 50, 200).unwrap(), 0.894427190999916, max_relative = 1e-12);
        assert!(phi_coefficient(0, 5, 10).is_err());
        assert!(phi_coefficient(10, 5, 10).is_err());
    }

    #[test]
    fn shift_matrix_layout() {
        let a = [c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)];
        let (am, bm) = interference_matrices(&a, &a).unwrap();
        assert_eq!(am.shape(), (3, 2));
        assert_eq!(am.column(0).iter().copied().collect::<Vec<_>>(), vec![a[2], c(0.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(am.column(1).iter().copied().collect::<Vec<_>>(), vec![a[1], a[2], c(0.0, 0.0)]);
        assert_eq!(am, bm);
    }

    #[test]
    fn zero_channel_gives_zero_matrices_and_error() {
        let z = vec![c(0.0, 0.0); 4];
        let (a, b) = interference_matrices(&z, &z).unwrap();
        assert!(a.iter().chain(b.iter()).all(|v| v.norm() == 0.0));
        let err = link_gains(
            &[ChannelRealization::new(z)],
            &RakeSelector::all_rake(4).unwrap(),
            &SpreadingConfig::new(1, 2).unwrap(),
            1.0,
        );
        assert!(matches!(err, Err(Error::DegenerateChannel { user: 0, .. })));
    }

    #[test]
    fn single_path_single_user() {
        let ch = ChannelRealization::new(vec![c(0.6, -0.8)]);
        let g = link_gains(
            &[ch],
            &RakeSelector::all_rake(1).unwrap(),
            &SpreadingConfig::new(4, 4).unwrap(),
            0.5,
        )
        .unwrap();
        assert_eq!(g.h_si(0), 0.0);
        assert_eq!(g.mai_ratio_inv(0), 0.0);
        assert!(g.si_ratio(0).is_infinite());
        assert_relative_eq!(sinr(&g, &[2.0], 0), 1.0 * 2.0 / 0.5, max_relative = 1e-14);
    }

    /// L = 3, N_c = 2, N_f = 5 expanded term by term:
    ///   phi_1^2 = min(2,2)/2 = 1, phi_2^2 = min(1,2)/2 = 1/2
    ///   B^H a: [conj(c3) a1, conj(c2) a1 + conj(c3) a2]
    ///   A^H c: [conj(a3) c1, conj(a2) c1 + conj(a3) c2]
    #[test]
    fn three_tap_hand_expansion() {
        let a1 = [c(1.0, 0.5), c(-0.3, 0.2), c(0.4, -0.7)];
        let a2 = [c(-0.2, 0.9), c(0.6, 0.1), c(-0.5, -0.4)];
        let sel = RakeSelector::with_fingers(2, 3).unwrap();
        let spreading = SpreadingConfig::new(5, 2).unwrap();
        let n = 10.0;
        let chans = [ChannelRealization::new(a1.to_vec()), ChannelRealization::new(a2.to_vec())];
        let g = link_gains(&chans, &sel, &spreading, 1e-3).unwrap();

        let w = |a: &[Complex64; 3]| [a[0], a[1], c(0.0, 0.0)];
        let (c1, c2) = (w(&a1), w(&a2));
        let hsp = |cw: &[Complex64; 3], a: &[Complex64; 3]| -> f64 {
            (cw[0].conj() * a[0] + cw[1].conj() * a[1] + cw[2].conj() * a[2]).re
        };
        let (hsp1, hsp2) = (hsp(&c1, &a1), hsp(&c2, &a2));
        assert_relative_eq!(g.h_sp(0), hsp1, max_relative = 1e-14);
        assert_relative_eq!(g.h_sp(1), hsp2, max_relative = 1e-14);

        // B_k^H y and A_k^H y for the L = 3 layout
        let bh = |cw: &[Complex64; 3], y: &[Complex64; 3]| {
            [cw[2].conj() * y[0], cw[1].conj() * y[0] + cw[2].conj() * y[1]]
        };
        let si = |a: &[Complex64; 3], cw: &[Complex64; 3], hsp: f64| {
            let u = bh(cw, a);
            let v = bh(a, cw);
            ((u[0] + v[0]).norm_sqr() * 1.0 + (u[1] + v[1]).norm_sqr() * 0.5) / (n * hsp)
        };
        assert_relative_eq!(g.h_si(0), si(&a1, &c1, hsp1), max_relative = 1e-13);
        assert_relative_eq!(g.h_si(1), si(&a2, &c2, hsp2), max_relative = 1e-13);

        let mai = |ck: &[Complex64; 3], aj: &[Complex64; 3], hspk: f64| {
            let t1: f64 = bh(ck, aj).iter().map(|z| z.norm_sqr()).sum();
            let t2: f64 = bh(aj, ck).iter().map(|z| z.norm_sqr()).sum();
            let t3 = (ck[0].conj() * aj[0] + ck[1].conj() * aj[1] + ck[2].conj() * aj[2]).norm_sqr();
            (t1 + t2 + t3) / (n * hspk)
        };
        assert_relative_eq!(g.h_mai(0, 1), mai(&c1, &a2, hsp1), max_relative = 1e-13);
        assert_relative_eq!(g.h_mai(1, 0), mai(&c2, &a1, hsp2), max_relative = 1e-13);
        assert_eq!(g.h_mai(0, 0), 0.0);
    }

    #[test]
    fn sinr_edge_cases() {
        let g = LinkGains::from_parts(vec![2.0, 1.0], vec![0.1, 0.2], vec![0.0, 0.3, 0.4, 0.0], 1.0).unwrap();
        assert_eq!(sinr(&g, &[0.0, 1.0], 0), 0.0);
        assert_relative_eq!(sinr(&g, &[1.0, 1.0], 0), 2.0 / (0.1 + 0.3 + 1.0));
        let lo = sinr(&g, &[1.0, 1.0], 0);
        let hi = sinr(&g, &[3.0, 3.0], 0);
        assert!(hi > lo);
        assert!(LinkGains::from_parts(vec![0.0], vec![0.0], vec![0.0], 1.0).is_err());
        assert!(LinkGains::from_parts(vec![1.0], vec![0.0], vec![0.0], 0.0).is_err());
    }
}
