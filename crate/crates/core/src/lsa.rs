//! Large-system closed forms.
//!
//! As `L, N_c -> inf` with `Lambda = N_c / L` fixed, the normalized MAI and SI
//! terms of a user become deterministic:
//!
//! ```text
//! zeta_k^-1  -> (K - 1) mu(rho, beta) / N
//! si_ratio_k^-1 -> nu(rho, beta, Lambda) / N
//! ```
//!
//! with `rho` the first-to-last tap power ratio of the delay profile and
//! `beta = L_P / L` the fraction of combined paths. This module evaluates
//! `mu`, the five-region `nu`, their flat-profile and all-Rake limits, and the
//! equilibrium quantities built on top of them.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::game::{efficiency, gamma_star, UtilityParams};
use crate::rake::{RakeSelector, SpreadingConfig};

/// Below this distance from 1, `rho` is treated as a flat profile.
pub const FLAT_TOLERANCE: f64 = 1e-6;
/// Above `1 - ALL_RAKE_TOLERANCE`, `beta` is treated as all-Rake.
pub const ALL_RAKE_TOLERANCE: f64 = 1e-9;
/// Step in `ln rho` of the interpolation used between the flat limit and
/// the general expressions; see [`bridge_from_flat`].
const BRIDGE_STEP: f64 = 0.03;
/// Frame counts below this are flagged by [`min_frames`] callers.
pub const SUGGESTED_MIN_FRAMES: usize = 5;

fn check_rho(rho: f64) -> Result<()> {
    if rho.is_finite() && rho >= 1.0 {
        Ok(())
    } else {
        Err(Error::param("rho", format!("must be finite and >= 1, got {rho}")))
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta <= 1.0 {
        Ok(())
    } else {
        Err(Error::param("beta", format!("must lie in (0, 1], got {beta}")))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::param("lambda", format!("must be positive, got {lambda}")))
    }
}

fn is_flat(rho: f64) -> bool {
    (rho - 1.0).abs() < FLAT_TOLERANCE
}

fn is_all_rake(beta: f64) -> bool {
    1.0 - beta < ALL_RAKE_TOLERANCE
}

/// MAI scale `mu(rho, beta) = (rho - 1) rho^(beta-1) / (rho^beta - 1)`.
pub fn mu(rho: f64, beta: f64) -> Result<f64> {
    check_rho(rho)?;
    check_beta(beta)?;
    if is_all_rake(beta) {
        return Ok(mu_arake(rho));
    }
    if is_flat(rho) {
        return Ok(mu_flat(beta));
    }
    let x = rho.ln();
    Ok(x.exp_m1() * ((beta - 1.0) * x).exp() / (beta * x).exp_m1())
}

/// The general `nu` expressions cancel to fourth order in `ln rho` as
/// `rho -> 1`; at `rho = 1 + 1e-5` they have no correct digits left. For
/// `ln rho < BRIDGE_STEP` we instead interpolate a cubic in `ln rho` through
/// the exact flat value and the general expression at `ln rho = h, 2h, 3h`,
/// where it is still accurate to a few parts in 1e9.
fn bridge_from_flat(rho: f64, flat: f64, general: impl Fn(f64) -> f64) -> f64 {
    let x = rho.ln();
    if x >= BRIDGE_STEP {
        return general(rho);
    }
    let h = BRIDGE_STEP;
    let nodes = [0.0, h, 2.0 * h, 3.0 * h];
    let values = [flat, general(h.exp()), general((2.0 * h).exp()), general((3.0 * h).exp())];
    let mut acc = 0.0;
    for i in 0..4 {
        let mut w = values[i];
        for j in (0..4).filter(|&j| j != i) {
            w *= (x - nodes[j]) / (nodes[i] - nodes[j]);
        }
        acc += w;
    }
    acc
}

/// `mu` on a flat profile: `1 / beta`.
pub fn mu_flat(beta: f64) -> f64 {
    1.0 / beta
}

/// `mu` of the all-Rake receiver, 1 for every `rho`.
pub fn mu_arake(_rho: f64) -> f64 {
    1.0
}

pub fn mu_flat_arake() -> f64 {
    1.0
}

/// The five `(beta, Lambda)` regions on which `nu` has distinct closed forms.
/// Boundaries are closed on both sides; [`nu_region`] returns the first match
/// in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NuRegion {
    /// `Lambda <= min(beta, 1 - beta)`.
    BelowBoth,
    /// `beta <= 1/2`, `beta <= Lambda <= 1 - beta`.
    BetweenFewFingers,
    /// `beta >= 1/2`, `1 - beta <= Lambda <= beta`.
    BetweenManyFingers,
    /// `max(beta, 1 - beta) <= Lambda <= 1`.
    AboveBoth,
    /// `Lambda >= 1`: frames no shorter than the channel.
    FrameCoversChannel,
}

impl NuRegion {
    pub const ALL: [NuRegion; 5] = [
        NuRegion::BelowBoth,
        NuRegion::BetweenFewFingers,
        NuRegion::BetweenManyFingers,
        NuRegion::AboveBoth,
        NuRegion::FrameCoversChannel,
    ];
}

pub fn nu_region(beta: f64, lambda: f64) -> NuRegion {
    let lo = beta.min(1.0 - beta);
    let hi = beta.max(1.0 - beta);
    if lambda <= lo {
        NuRegion::BelowBoth
    } else if lambda <= hi && beta <= 0.5 {
        NuRegion::BetweenFewFingers
    } else if lambda <= hi {
        NuRegion::BetweenManyFingers
    } else if lambda <= 1.0 {
        NuRegion::AboveBoth
    } else {
        NuRegion::FrameCoversChannel
    }
}

/// Evaluates the general (`rho > 1`, `beta < 1`) expression of `region`
/// without checking that `(beta, lambda)` lies in it.
pub fn nu_branch(region: NuRegion, rho: f64, beta: f64, lambda: f64) -> f64 {
    let (r, b, l) = (rho, beta, lambda);
    let lr = r.ln();
    let rb = r.powf(b);
    let rl = r.powf(l);
    let den1 = 2.0 * (rb - 1.0).powi(2) * l * r.powf(1.0 + l) * lr;
    let den3 = 2.0 * (rb - 1.0).powi(2) * l * r.powf(2.0 + l) * lr;
    match region {
        NuRegion::BelowBoth => {
            (r * (rl - 1.0) * (4.0 * rb * rb + 3.0 * rl - 1.0)
                - 2.0 * rb * rl * (rb + 3.0 * r - 1.0) * l * lr)
                / den1
        }
        NuRegion::BetweenFewFingers => {
            (r * (4.0 * rl - 1.0) * (rb * rb - 1.0) - 2.0 * rb * rl * (3.0 * r * b - l + rb * l) * lr)
                / den1
        }
        NuRegion::BetweenManyFingers => {
            (-4.0 * r.powf(2.0 + 2.0 * b) - 4.0 * r.powf(2.0 + l)
                + r.powf(2.0 * (b + l))
                + 4.0 * r.powf(2.0 + 2.0 * b + l)
                + 3.0 * r.powf(2.0 + 2.0 * l)
                - 2.0 * r.powf(1.0 + b + l) * (b + 3.0 * r * l + rb * l - 1.0) * lr)
                / den3
        }
        NuRegion::AboveBoth => {
            (-r.powf(2.0 + 2.0 * b) - 4.0 * r.powf(2.0 + l)
                + r.powf(2.0 * (b + l))
                + 4.0 * r.powf(2.0 + 2.0 * b + l)
                - 2.0 * r.powf(1.0 + b + l) * (b + 3.0 * r * b + rb * l - 1.0) * lr)
                / den3
        }
        NuRegion::FrameCoversChannel => {
            (2.0 * r * (rb * rb - 1.0) - (rb + b + 3.0 * r * b - 1.0) * rb * lr)
                / ((rb - 1.0).powi(2) * l * r * lr)
        }
    }
}

/// SI scale `nu(rho, beta, Lambda)`, dispatching to the limit forms near
/// `rho = 1` and `beta = 1`.
pub fn nu(rho: f64, beta: f64, lambda: f64) -> Result<f64> {
    check_rho(rho)?;
    check_beta(beta)?;
    check_lambda(lambda)?;
    Ok(match (is_flat(rho), is_all_rake(beta)) {
        (true, true) => nu_flat_arake(lambda),
        (true, false) => nu_flat(beta, lambda),
        (false, true) => nu_arake(rho, lambda),
        (false, false) => {
            let region = nu_region(beta, lambda);
            bridge_from_flat(rho, nu_flat_branch(region, beta, lambda), |r| {
                nu_branch(region, r, beta, lambda)
            })
        }
    })
}

/// Flat-profile expression of `region`, unchecked.
pub fn nu_flat_branch(region: NuRegion, beta: f64, lambda: f64) -> f64 {
    let (b, l) = (beta, lambda);
    match region {
        NuRegion::BelowBoth => (2.0 * b * b + 2.0 * b - 4.0 * l * b + l * l) / (2.0 * b * b),
        NuRegion::BetweenFewFingers => 0.5 * ((2.0 - l) / b + b / l - 1.0),
        NuRegion::BetweenManyFingers => {
            (b.powi(3) + b * b * (9.0 * l - 3.0) + b * (3.0 - 9.0 * l * l) + 4.0 * l.powi(3) - 3.0 * l * l
                + 3.0 * l
                - 1.0)
                / (6.0 * l * b * b)
        }
        NuRegion::AboveBoth => (4.0 * b.powi(3) - 3.0 * b * b + 3.0 * b + (l - 1.0).powi(3)) / (6.0 * l * b * b),
        NuRegion::FrameCoversChannel => (4.0 * b * b - 3.0 * b + 3.0) / (6.0 * l * b),
    }
}

/// `nu` on a flat profile.
pub fn nu_flat(beta: f64, lambda: f64) -> f64 {
    nu_flat_branch(nu_region(beta, lambda), beta, lambda)
}

/// `nu` of the all-Rake receiver. Falls back to [`nu_flat_arake`] on a flat
/// profile.
pub fn nu_arake(rho: f64, lambda: f64) -> f64 {
    if is_flat(rho) {
        return nu_flat_arake(lambda);
    }
    bridge_from_flat(rho, nu_flat_arake(lambda), |r| nu_arake_general(r, lambda))
}

fn nu_arake_general(rho: f64, lambda: f64) -> f64 {
    let (r, l) = (rho, lambda);
    let lr = r.ln();
    let den = (r - 1.0).powi(2) * l * lr;
    if l <= 1.0 {
        2.0 * (r * r - 1.0 + r.powf(l) - r.powf(2.0 - l) - 2.0 * r * l * lr) / den
    } else {
        2.0 * (r * r - 1.0 - 2.0 * r * lr) / den
    }
}

pub fn nu_flat_arake(lambda: f64) -> f64 {
    if lambda <= 1.0 {
        2.0 / 3.0 * (lambda * lambda - 3.0 * lambda + 3.0)
    } else {
        2.0 / (3.0 * lambda)
    }
}

/// How the target SINR entering the predictions is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetRule {
    /// `Gamma(N / nu)`, the target at the asymptotic SI ratio.
    #[default]
    Finite,
    /// `Gamma(inf)`, the `N -> inf` limit of the above.
    Limit,
}

impl std::str::FromStr for TargetRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "finite" => Ok(TargetRule::Finite),
            "limit" => Ok(TargetRule::Limit),
            other => Err(Error::param("target_rule", format!("expected `finite` or `limit`, got `{other}`"))),
        }
    }
}

impl std::fmt::Display for TargetRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TargetRule::Finite => "finite",
            TargetRule::Limit => "limit",
        })
    }
}

/// Inputs of the large-system predictions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsaParams {
    pub rho: f64,
    pub beta: f64,
    /// `N_c / L`.
    pub lambda: f64,
    pub frames: usize,
    pub chips_per_frame: usize,
    pub users: usize,
    pub utility: UtilityParams,
    pub noise_var: f64,
    pub target_rule: TargetRule,
}

impl LsaParams {
    /// Standard utility constants and noise variance 5e-16 W.
    pub fn new(rho: f64, beta: f64, lambda: f64, frames: usize, chips_per_frame: usize, users: usize) -> Result<Self> {
        check_rho(rho)?;
        check_beta(beta)?;
        check_lambda(lambda)?;
        if frames == 0 || chips_per_frame == 0 {
            return Err(Error::param("spreading", "frames and chips per frame must be positive"));
        }
        if users == 0 {
            return Err(Error::param("users", "need at least one user"));
        }
        Ok(Self {
            rho,
            beta,
            lambda,
            frames,
            chips_per_frame,
            users,
            utility: UtilityParams::standard(),
            noise_var: 5e-16,
            target_rule: TargetRule::Finite,
        })
    }

    /// Parameters matching a simulated system. `beta` is the realized finger
    /// fraction `L_P / L` and `Lambda = N_c / L`.
    pub fn from_system(
        rho: f64,
        selector: &RakeSelector,
        spreading: &SpreadingConfig,
        users: usize,
    ) -> Result<Self> {
        Self::new(
            rho,
            selector.finger_fraction(),
            spreading.load_factor(selector.path_count()),
            spreading.frames(),
            spreading.chips_per_frame(),
            users,
        )
    }

    pub fn with_utility(mut self, utility: UtilityParams) -> Self {
        self.utility = utility;
        self
    }

    pub fn with_noise_var(mut self, noise_var: f64) -> Self {
        self.noise_var = noise_var;
        self
    }

    pub fn with_target_rule(mut self, rule: TargetRule) -> Self {
        self.target_rule = rule;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_frames(mut self, frames: usize) -> Self {
        self.frames = frames;
        self
    }

    pub fn processing_gain(&self) -> f64 {
        (self.frames * self.chips_per_frame) as f64
    }

    /// Same system with the all-Rake receiver.
    pub fn all_rake(&self) -> Self {
        self.with_beta(1.0)
    }
}

/// Target SINR for an asymptotic SI ratio `N / nu` under `rule`.
pub fn target_sinr(processing_gain: f64, nu: f64, rule: TargetRule, total_bits: u32) -> Result<f64> {
    match rule {
        TargetRule::Finite => gamma_star(processing_gain / nu, total_bits),
        TargetRule::Limit => gamma_star(f64::INFINITY, total_bits),
    }
}

/// Large-system equilibrium of one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsaPrediction {
    pub mu: f64,
    pub nu: f64,
    /// `(K - 1) mu / N`
    pub mai_inv: f64,
    /// `nu / N`
    pub si_inv: f64,
    pub target_sinr: f64,
    /// `N - gamma* [(K - 1) mu + nu]`
    pub margin: f64,
    pub power_w: f64,
    pub utility_bpj: f64,
    pub min_frames: usize,
    pub ber: f64,
}

/// `mu`, `nu`, target SINR and margin shared by every user.
fn core_terms(p: &LsaParams) -> Result<(f64, f64, f64, f64)> {
    let m = mu(p.rho, p.beta)?;
    let n = nu(p.rho, p.beta, p.lambda)?;
    let g = target_sinr(p.processing_gain(), n, p.target_rule, p.utility.total_bits)?;
    let margin = p.processing_gain() - g * ((p.users - 1) as f64 * m + n);
    Ok((m, n, g, margin))
}

/// Predicted equilibrium power of a user with desired-signal gain `h_sp`:
/// `N s2 gamma* / (h_sp (N - gamma* [(K - 1) mu + nu]))`.
pub fn predict_power(p: &LsaParams, h_sp: f64) -> Result<f64> {
    let (_, _, g, margin) = core_terms(p)?;
    if !(margin > 0.0) {
        return Err(Error::Infeasible { margin });
    }
    Ok(p.processing_gain() * p.noise_var * g / (h_sp * margin))
}

/// Predicted equilibrium utility in bits/J.
pub fn predict_utility(p: &LsaParams, h_sp: f64) -> Result<f64> {
    let (_, _, g, margin) = core_terms(p)?;
    if !(margin > 0.0) {
        return Err(Error::Infeasible { margin });
    }
    Ok(h_sp * p.utility.throughput_scale() * efficiency(g, p.utility.total_bits) * margin
        / (p.processing_gain() * p.noise_var * g))
}

/// Full prediction for a user with gain `h_sp`.
pub fn predict(p: &LsaParams, h_sp: f64) -> Result<LsaPrediction> {
    let (m, n, g, margin) = core_terms(p)?;
    let n_gain = p.processing_gain();
    Ok(LsaPrediction {
        mu: m,
        nu: n,
        mai_inv: (p.users - 1) as f64 * m / n_gain,
        si_inv: n / n_gain,
        target_sinr: g,
        margin,
        power_w: predict_power(p, h_sp)?,
        utility_bpj: predict_utility(p, h_sp)?,
        min_frames: min_frames(p)?,
        ber: ber_estimate(g),
    })
}

/// Smallest `N_f >= 1` with `N_f >= ceil(gamma* [(K - 1) mu + nu] / N_c)`,
/// where `gamma*` is re-evaluated at every `N = N_f N_c`. `p.frames` is
/// ignored. Results below [`SUGGESTED_MIN_FRAMES`] are not raised.
pub fn min_frames(p: &LsaParams) -> Result<usize> {
    let m = mu(p.rho, p.beta)?;
    let n = nu(p.rho, p.beta, p.lambda)?;
    let load = (p.users - 1) as f64 * m + n;
    let nc = p.chips_per_frame as f64;
    let mut nf = 1usize;
    loop {
        let g = target_sinr(nf as f64 * nc, n, p.target_rule, p.utility.total_bits)?;
        let need = (g * load / nc).ceil();
        if nf as f64 >= need {
            return Ok(nf);
        }
        nf += 1;
    }
}

/// Utility ratio of the all-Rake receiver over the partial Rake at
/// equilibrium, linear scale.
pub fn loss(p: &LsaParams) -> Result<f64> {
    let (m, _, g, margin) = core_terms(p)?;
    let (_, _, g_a, margin_a) = core_terms(&p.all_rake())?;
    if !(margin > 0.0) {
        return Err(Error::Infeasible { margin });
    }
    if !(margin_a > 0.0) {
        return Err(Error::Infeasible { margin: margin_a });
    }
    let bits = p.utility.total_bits;
    Ok(m * efficiency(g_a, bits) / efficiency(g, bits) * (g / g_a) * (margin_a / margin))
}

pub fn loss_db(p: &LsaParams) -> Result<f64> {
    Ok(10.0 * loss(p)?.log10())
}

/// Finger fraction `beta in [beta_min, 1]` whose loss equals `target_db`
/// within 0.01 dB. Infeasible fractions count as infinite loss.
pub fn invert_loss(target_db: f64, p: &LsaParams, beta_min: f64) -> Result<f64> {
    check_beta(beta_min)?;
    let eval = |beta: f64| match loss_db(&p.with_beta(beta)) {
        Ok(v) => Ok(v),
        Err(Error::Infeasible { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    };
    let max_db = eval(beta_min)?;
    if !(target_db >= 0.0) || target_db > max_db {
        return Err(Error::LossRange {
            target_db,
            min_db: 0.0,
            max_db,
        });
    }
    if target_db == 0.0 {
        return Ok(1.0);
    }
    // Loss decreases in beta.
    let (mut lo, mut hi) = (beta_min, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let v = eval(mid)?;
        if v > target_db {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Bit error rate approximation `Q(sqrt(gamma))`.
pub fn ber_estimate(sinr: f64) -> f64 {
    if sinr <= 0.0 {
        return 0.5;
    }
    0.5 * erfc((sinr / 2.0).sqrt())
}
