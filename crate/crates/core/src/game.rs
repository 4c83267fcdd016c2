//! Energy-efficient non-cooperative power control.
//!
//! Each user maximizes `u_k = (D/M) R f(gamma_k) / p_k` over `p_k in [0, p_max]`
//! with `f(gamma) = (1 - exp(-gamma/2))^M`. The best response drives the SINR
//! to `Gamma(si_ratio_k)`, the root of `f'(g) g (1 - g/si_ratio) = f(g)`, which
//! yields
//!
//! ```text
//! p_k = min( Gamma_k (sum_{j != k} h_mai_kj p_j + s2) / (h_sp_k (1 - Gamma_k/si_ratio_k)), p_max )
//! ```
//!
//! The equilibrium is found by iterating best responses from `p = 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rake::{sinrs, LinkGains};

/// Packet and radio constants of the utility function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityParams {
    /// Information bits per packet `D`.
    pub info_bits: u32,
    /// Total bits per packet `M`.
    pub total_bits: u32,
    /// Bit rate `R` in bits/s.
    pub rate: f64,
    /// Maximum transmit power in watts. The minimum is 0.
    pub p_max: f64,
}

impl UtilityParams {
    pub fn new(info_bits: u32, total_bits: u32, rate: f64, p_max: f64) -> Result<Self> {
        if info_bits == 0 || info_bits > total_bits {
            return Err(Error::param("info_bits", "need 0 < D <= M"));
        }
        if total_bits < 2 {
            // f'(0) = 0 requires M >= 2; with M = 1 the target SINR equation
            // has no interior root.
            return Err(Error::param("total_bits", "need M >= 2"));
        }
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::param("rate", "must be positive"));
        }
        if !(p_max > 0.0) {
            return Err(Error::param("p_max", "must be positive"));
        }
        Ok(Self {
            info_bits,
            total_bits,
            rate,
            p_max,
        })
    }

    /// Simulation parameters: M = D = 100 b, R = 100 kb/s, p_max = 1 uW.
    pub fn standard() -> Self {
        Self {
            info_bits: 100,
            total_bits: 100,
            rate: 100e3,
            p_max: 1e-6,
        }
    }

    /// `(D/M) R`, the throughput scale of the utility in bits/s.
    pub fn throughput_scale(&self) -> f64 {
        self.info_bits as f64 / self.total_bits as f64 * self.rate
    }

    /// `u = (D/M) R f(gamma) / p`, zero at `p = 0`.
    pub fn utility(&self, sinr: f64, power: f64) -> f64 {
        if power <= 0.0 {
            return 0.0;
        }
        self.throughput_scale() * efficiency(sinr, self.total_bits) / power
    }
}

impl Default for UtilityParams {
    fn default() -> Self {
        Self::standard()
    }
}

/// Packet success rate `f(gamma) = (1 - exp(-gamma/2))^M`.
pub fn efficiency(sinr: f64, total_bits: u32) -> f64 {
    if sinr <= 0.0 {
        return 0.0;
    }
    (-(-sinr / 2.0).exp_m1()).powi(total_bits as i32)
}

/// `df/dgamma`.
pub fn efficiency_derivative(sinr: f64, total_bits: u32) -> f64 {
    if sinr <= 0.0 {
        return 0.0;
    }
    let m = total_bits as f64;
    let e = (-sinr / 2.0).exp();
    0.5 * m * e * (-(-sinr / 2.0).exp_m1()).powi(total_bits as i32 - 1)
}

/// Target SINR `Gamma(si_ratio)` for packets of `total_bits` bits.
///
/// Dividing the optimality condition by `f > 0` gives the equivalent
/// `(M/2) g (1 - g/si_ratio) = exp(g/2) - 1`, whose left side minus right side
/// is concave, zero at the origin with slope `(M-1)/2`, and negative at
/// `g = si_ratio`. It therefore has exactly one root in `(0, si_ratio)`, found by
/// bisection followed by Newton steps kept inside the bracket.
/// `si_ratio = inf` is accepted and gives the no-self-interference target.
pub fn gamma_star(si_ratio: f64, total_bits: u32) -> Result<f64> {
    if !(si_ratio > 0.0) {
        return Err(Error::Solver {
            si_ratio,
            detail: "si_ratio must be positive".into(),
        });
    }
    if total_bits < 2 {
        return Err(Error::Solver {
            si_ratio,
            detail: format!("M = {total_bits} gives no interior root"),
        });
    }
    let half_m = total_bits as f64 / 2.0;
    let inv = if si_ratio.is_infinite() { 0.0 } else { 1.0 / si_ratio };
    let g = |x: f64| half_m * x * (1.0 - x * inv) - (x / 2.0).exp_m1();
    let dg = |x: f64| half_m * (1.0 - 2.0 * x * inv) - 0.5 * (x / 2.0).exp();

    // Upper end: first power of two past the root, capped by si_ratio.
    let mut hi = 1.0;
    while g(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Solver {
                si_ratio,
                detail: "no sign change below 1e6".into(),
            });
        }
    }
    if hi > si_ratio {
        hi = si_ratio;
    }
    let mut lo = hi / 2.0;
    while g(lo) <= 0.0 {
        lo /= 2.0;
        if lo < 1e-300 {
            return Err(Error::Solver {
                si_ratio,
                detail: "no positive value of the target equation near 0".into(),
            });
        }
    }

    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-6 * hi {
            break;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..50 {
        let fx = g(x);
        if fx > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = dg(x);
        let mut next = x - fx / d;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * x {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Best-response schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    /// Every user responds to the previous sweep's powers.
    #[default]
    Jacobi,
    /// Users respond in index order to the most recent powers.
    GaussSeidel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop when `max_k |p_k' - p_k| / p_k' < tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub schedule: Schedule,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            schedule: Schedule::Jacobi,
        }
    }
}

/// Result of best-response dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumOutcome {
    pub powers: Vec<f64>,
    pub sinrs: Vec<f64>,
    /// Bits per joule.
    pub utilities: Vec<f64>,
    /// `Gamma(si_ratio_k)` of every user.
    pub targets: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Users whose best response hit `p_max`.
    pub clamped: Vec<bool>,
}

impl EquilibriumOutcome {
    pub fn any_clamped(&self) -> bool {
        self.clamped.iter().any(|c| *c)
    }
}

/// A bank of link gains together with the per-user target SINRs, which only
/// depend on `si_ratio_k` and are computed once.
/// Largest game whose clamped set is searched exhaustively.
const EXHAUSTIVE_CLAMP_USERS: usize = 12;

#[derive(Debug, Clone)]
pub struct PowerGame<'a> {
    gains: &'a LinkGains,
    params: UtilityParams,
    targets: Vec<f64>,
    /// `Gamma_k / (h_sp_k (1 - Gamma_k / si_ratio_k))`
    slopes: Vec<f64>,
}

impl<'a> PowerGame<'a> {
    pub fn new(gains: &'a LinkGains, params: UtilityParams) -> Result<Self> {
        let k = gains.user_count();
        let mut targets = Vec::with_capacity(k);
        let mut slopes = Vec::with_capacity(k);
        for user in 0..k {
            let si = gains.si_ratio(user);
            let g = gamma_star(si, params.total_bits)?;
            let margin = if si.is_infinite() { 1.0 } else { 1.0 - g / si };
            targets.push(g);
            slopes.push(g / (gains.h_sp(user) * margin));
        }
        Ok(Self {
            gains,
            params,
            targets,
            slopes,
        })
    }

    pub fn gains(&self) -> &LinkGains {
        self.gains
    }

    pub fn params(&self) -> &UtilityParams {
        &self.params
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Unclamped best response of user `k`.
    pub fn unclamped_response(&self, powers: &[f64], k: usize) -> f64 {
        self.slopes[k] * (self.gains.mai_power(powers, k) + self.gains.noise_var())
    }

    /// Best response of user `k` and whether it was clamped at `p_max`.
    pub fn best_response(&self, powers: &[f64], k: usize) -> (f64, bool) {
        let p = self.unclamped_response(powers, k);
        if p >= self.params.p_max {
            (self.params.p_max, true)
        } else {
            (p, false)
        }
    }

    /// One Jacobi sweep.
    pub fn sweep(&self, powers: &[f64]) -> Vec<f64> {
        (0..powers.len()).map(|k| self.best_response(powers, k).0).collect()
    }

    pub fn solve(&self, opts: &SolverOptions) -> EquilibriumOutcome {
        let k_users = self.gains.user_count();
        let mut p = vec![0.0; k_users];
        let mut iterations = 0;
        let mut converged = false;
        while iterations < opts.max_iter {
            iterations += 1;
            let next = match opts.schedule {
                Schedule::Jacobi => self.sweep(&p),
                Schedule::GaussSeidel => {
                    let mut q = p.clone();
                    for k in 0..k_users {
                        q[k] = self.best_response(&q, k).0;
                    }
                    q
                }
            };
            let change = next
                .iter()
                .zip(&p)
                .map(|(a, b)| if *a > 0.0 { (a - b).abs() / a } else { 0.0 })
                .fold(0.0, f64::max);
            p = next;
            if change < opts.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            if let Some(q) = self.active_set_fixed_point(&p) {
                p = q;
                converged = true;
            }
        }
        let clamped = (0..k_users).map(|k| self.best_response(&p, k).1).collect();
        let sinrs = sinrs(self.gains, &p);
        let utilities = sinrs
            .iter()
            .zip(&p)
            .map(|(g, pw)| self.params.utility(*g, *pw))
            .collect();
        EquilibriumOutcome {
            powers: p,
            sinrs,
            utilities,
            targets: self.targets.clone(),
            iterations,
            converged,
            clamped,
        }
    }

    /// Exact unclamped fixed point from the linear system
    /// `(I - diag(d) F) q = d s2`, `d_k = Gamma_k / (1 - Gamma_k/si_ratio_k)`,
    /// `F_kj = h_mai_kj / h_sp_j`, `p_k = q_k / h_sp_k`. Returns `None` when
    /// the system is singular or some power is non-positive.
    pub fn linear_fixed_point(&self) -> Option<Vec<f64>> {
        let k = self.gains.user_count();
        let g = self.gains;
        let d: Vec<f64> = (0..k).map(|i| self.slopes[i] * g.h_sp(i)).collect();
        let m = DMatrix::from_fn(k, k, |r, c| {
            let f = if r == c { 0.0 } else { g.h_mai(r, c) / g.h_sp(c) };
            (if r == c { 1.0 } else { 0.0 }) - d[r] * f
        });
        let rhs = DVector::from_iterator(k, d.iter().map(|x| x * g.noise_var()));
        let q = m.lu().solve(&rhs)?;
        let p: Vec<f64> = (0..k).map(|i| q[i] / g.h_sp(i)).collect();
        p.iter().all(|x| *x > 0.0).then_some(p)
    }

    /// Fixed point with the users in `clamped` held at `p_max` and the rest
    /// solved exactly. `None` if singular or if some free power is not in
    /// `(0, p_max)`.
    fn fixed_point_with_clamps(&self, clamped: &[bool]) -> Option<Vec<f64>> {
        let g = self.gains;
        let p_max = self.params.p_max;
        let free: Vec<usize> = (0..clamped.len()).filter(|k| !clamped[*k]).collect();
        let n = free.len();
        let mut p = vec![p_max; clamped.len()];
        if n > 0 {
            let m = DMatrix::from_fn(n, n, |r, c| {
                let (a, b) = (free[r], free[c]);
                if a == b {
                    1.0
                } else {
                    -self.slopes[a] * g.h_mai(a, b)
                }
            });
            let rhs = DVector::from_iterator(
                n,
                free.iter().map(|&a| {
                    let fixed: f64 = (0..clamped.len())
                        .filter(|j| clamped[*j] && *j != a)
                        .map(|j| g.h_mai(a, j) * p_max)
                        .sum();
                    self.slopes[a] * (g.noise_var() + fixed)
                }),
            );
            let x = m.lu().solve(&rhs)?;
            for (i, &a) in free.iter().enumerate() {
                p[a] = x[i];
            }
        }
        free.iter().all(|&a| p[a] > 0.0 && p[a] < p_max).then_some(p)
    }

    /// Whether `p` solves the clamped system for `clamped`: clamped users
    /// must still want at least `p_max`.
    fn consistent_clamps(&self, p: &[f64], clamped: &[bool]) -> bool {
        (0..p.len())
            .filter(|k| clamped[*k])
            .all(|k| self.unclamped_response(p, k) >= self.params.p_max)
    }

    /// Exact equilibrium found by choosing the clamped set directly. Used
    /// when the sweeps stall near the feasibility boundary, where their
    /// contraction factor approaches one. The clamped game has a single
    /// fixed point, so the first consistent set is the answer. Small games
    /// try every set by size; larger ones grow the set greedily from the
    /// clamps and received powers in `start`.
    fn active_set_fixed_point(&self, start: &[f64]) -> Option<Vec<f64>> {
        let k_users = start.len();
        if k_users <= EXHAUSTIVE_CLAMP_USERS {
            let mut masks: Vec<u32> = (0..1u32 << k_users).collect();
            masks.sort_by_key(|m| m.count_ones());
            return masks.into_iter().find_map(|m| {
                let clamped: Vec<bool> = (0..k_users).map(|k| m >> k & 1 == 1).collect();
                self.fixed_point_with_clamps(&clamped)
                    .filter(|p| self.consistent_clamps(p, &clamped))
            });
        }
        let mut clamped: Vec<bool> = (0..k_users).map(|k| start[k] >= self.params.p_max).collect();
        for _ in 0..=k_users {
            if let Some(p) = self.fixed_point_with_clamps(&clamped) {
                return self.consistent_clamps(&p, &clamped).then_some(p);
            }
            let next = (0..k_users)
                .filter(|k| !clamped[*k])
                .max_by(|a, b| (start[*a] * self.gains.h_sp(*a)).total_cmp(&(start[*b] * self.gains.h_sp(*b))))?;
            clamped[next] = true;
        }
        None
    }

    /// Reduced closed-form power
    /// `s2 Gamma_k / (h_sp_k (1 - Gamma_k (1/si_ratio_k + 1/zeta_k)))`, or `None`
    /// when user `k` violates the feasibility condition.
    ///
    /// This equals the fixed point only when every user arrives with the same
    /// normalized interference; in general it is an approximation.
    pub fn reduced_power(&self, k: usize) -> Option<f64> {
        let margin = feasibility_margin(self.gains, k, self.targets[k]);
        (margin > 0.0).then(|| self.gains.noise_var() * self.targets[k] / (self.gains.h_sp(k) * margin))
    }
}

/// `1 - Gamma_k (1/si_ratio_k + 1/zeta_k)`.
fn feasibility_margin(gains: &LinkGains, k: usize, target: f64) -> f64 {
    let si_inv = gains.h_si(k) / gains.h_sp(k);
    1.0 - target * (si_inv + gains.mai_ratio_inv(k))
}

/// Best response of user `k` against `powers`.
pub fn best_response(
    gains: &LinkGains,
    powers: &[f64],
    k: usize,
    params: &UtilityParams,
) -> Result<(f64, bool)> {
    let si = gains.si_ratio(k);
    let g = gamma_star(si, params.total_bits)?;
    let margin = if si.is_infinite() { 1.0 } else { 1.0 - g / si };
    let p = g * (gains.mai_power(powers, k) + gains.noise_var()) / (gains.h_sp(k) * margin);
    Ok(if p >= params.p_max { (params.p_max, true) } else { (p, false) })
}

/// Runs best-response dynamics from `p = 0`.
pub fn solve_equilibrium(
    gains: &LinkGains,
    params: &UtilityParams,
    opts: &SolverOptions,
) -> Result<EquilibriumOutcome> {
    if !(opts.tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    Ok(PowerGame::new(gains, *params)?.solve(opts))
}

/// Per-user feasibility `Gamma(si_ratio_k) (1/si_ratio_k + 1/zeta_k) < 1`.
pub fn feasibility(gains: &LinkGains, total_bits: u32) -> Result<Vec<bool>> {
    (0..gains.user_count())
        .map(|k| {
            let g = gamma_star(gains.si_ratio(k), total_bits)?;
            Ok(feasibility_margin(gains, k, g) > 0.0)
        })
        .collect()
}
