//! Finite-size and Monte Carlo checks of the large-system closed forms.
//!
//! Every deterministic quantity is evaluated as an explicit sum over `L` taps
//! with per-tap weights `w_l = rho^-((l-1)/(L-1))` (unit user variance, which
//! cancels in every ratio), `L_P = floor(beta L)` fingers and
//! `N_c = Lambda L` chips per frame. As `L` grows these sums converge to the
//! closed forms of [`crate::lsa`].

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::channel::{sample_network, ApdpProfile};
use crate::error::{Error, Result};
use crate::lsa::{self, NuRegion};
use crate::rake::{link_gains, RakeSelector, SpreadingConfig};
use crate::rng::SeedStream;

/// Unit step `u(n) = 1` for `n >= 0`.
pub fn unit_step(n: i64) -> f64 {
    if n >= 0 {
        1.0
    } else {
        0.0
    }
}

/// Per-tap standard deviations of one user's channel and Rake weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileMatrices {
    fingers: usize,
    /// `sd_l`, 0-based.
    sd: Vec<f64>,
    /// `sd_l` for `l < L_P`, else 0.
    sd_rake: Vec<f64>,
}

impl ProfileMatrices {
    pub fn new(path_count: usize, rho: f64, beta: f64) -> Result<Self> {
        if path_count < 2 {
            return Err(Error::param("path_count", "finite sums need L >= 2"));
        }
        let profile = ApdpProfile::new(path_count, rho)?;
        let fingers = RakeSelector::from_fraction(beta, path_count)?.finger_count();
        let sd: Vec<f64> = profile.relative_powers().iter().map(|v| v.sqrt()).collect();
        let sd_rake = sd.iter().enumerate().map(|(l, s)| if l < fingers { *s } else { 0.0 }).collect();
        Ok(Self { fingers, sd, sd_rake })
    }

    pub fn path_count(&self) -> usize {
        self.sd.len()
    }

    pub fn finger_count(&self) -> usize {
        self.fingers
    }

    pub fn path_std(&self) -> &[f64] {
        &self.sd
    }

    pub fn rake_std(&self) -> &[f64] {
        &self.sd_rake
    }

    /// `Theta(l, m) = sd_l sd~_m + sd~_l sd_m`, 1-based.
    pub fn theta(&self, l: usize, m: usize) -> f64 {
        let (l, m) = (l - 1, m - 1);
        self.sd[l] * self.sd_rake[m] + self.sd_rake[l] * self.sd[m]
    }

    /// `L x (L-1)` standard-deviation patterns of the interference matrices
    /// built from the channel (`C_A`) and from the Rake weights (`C_B`),
    /// scaled by `1/sqrt(L)`: entry `(l, i)` is `sd_{L+l-i} / sqrt(L)` for
    /// `l <= i` and zero below.
    pub fn variance_patterns(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.path_count();
        let scale = 1.0 / (n as f64).sqrt();
        let build = |v: &[f64]| {
            DMatrix::from_fn(n, n - 1, |r, c| if r <= c { v[n + r - c - 1] * scale } else { 0.0 })
        };
        (build(&self.sd), build(&self.sd_rake))
    }

    /// Diagonals of `C_A C_A^T` and `C_B C_B^T` by suffix sums:
    /// `(1/L) sum_{m > l} w_m` over paths and over fingers respectively.
    pub fn cross_diagonals(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.path_count();
        let inv = 1.0 / n as f64;
        let suffix = |v: &[f64]| {
            let mut out = vec![0.0; n];
            let mut acc = 0.0;
            for l in (0..n).rev() {
                out[l] = acc * inv;
                acc += v[l] * v[l];
            }
            out
        };
        (suffix(&self.sd), suffix(&self.sd_rake))
    }
}

/// `phi_i^2 = min(L - i, N_c) / N_c` with real `N_c = Lambda L`.
fn phi_sq(i: usize, path_count: usize, chips: f64) -> f64 {
    ((path_count - i) as f64).min(chips) / chips
}

/// Finite sums of the MAI and SI terms for one `(L, rho, beta)`.
#[derive(Debug, Clone)]
pub struct FiniteSums {
    pm: ProfileMatrices,
    rho: f64,
}

impl FiniteSums {
    pub fn new(path_count: usize, rho: f64, beta: f64) -> Result<Self> {
        Ok(Self {
            pm: ProfileMatrices::new(path_count, rho, beta)?,
            rho,
        })
    }

    pub fn profile(&self) -> &ProfileMatrices {
        &self.pm
    }

    fn n(&self) -> f64 {
        self.pm.path_count() as f64
    }

    /// `(1/L) sum_{l <= L_P} w_l`.
    pub fn den_mai(&self) -> f64 {
        self.pm.sd_rake.iter().map(|s| s * s).sum::<f64>() / self.n()
    }

    /// `(1/L^2) sum_{l < L_P} w_l sum_{l < m <= L_P} w_m`: interference whose
    /// later tap is a finger.
    pub fn num_mai_rake_later(&self) -> f64 {
        let (_, diag_b) = self.pm.cross_diagonals();
        self.pm.sd.iter().zip(&diag_b).map(|(s, d)| s * s * d).sum::<f64>() / self.n()
    }

    /// `(1/L^2) sum_{l <= L_P} w_l sum_{m > l} w_m`: interference whose
    /// earlier tap is a finger.
    pub fn num_mai_rake_earlier(&self) -> f64 {
        let (diag_a, _) = self.pm.cross_diagonals();
        self.pm.sd_rake.iter().zip(&diag_a).map(|(s, d)| s * s * d).sum::<f64>() / self.n()
    }

    /// `(1/L^2) sum_{l <= L_P} w_l^2`, the zero-lag MAI term.
    pub fn num_mai_aligned(&self) -> f64 {
        self.pm.sd_rake.iter().map(|s| s.powi(4)).sum::<f64>() / (self.n() * self.n())
    }

    /// `den_mai^2`.
    pub fn den_si(&self) -> f64 {
        self.den_mai().powi(2)
    }

    /// `(1/L) sum_l w_l`.
    pub fn channel_energy(&self) -> f64 {
        self.pm.sd.iter().map(|s| s * s).sum::<f64>() / self.n()
    }

    /// `mu_L`: the full MAI trace ratio including the zero-lag term.
    pub fn mu(&self) -> f64 {
        (self.num_mai_rake_later() + self.num_mai_rake_earlier() + self.num_mai_aligned()) / self.den_si()
    }

    /// `mu_L` without the zero-lag term, which vanishes as `L -> inf`.
    pub fn mu_cross_only(&self) -> f64 {
        (self.num_mai_rake_later() + self.num_mai_rake_earlier()) / self.den_si()
    }

    /// `(1/L) sum_l w_l / ((1/L) sum_{l <= L_P} w_l)`.
    pub fn channel_ratio(&self) -> f64 {
        self.channel_energy() / self.den_mai()
    }

    /// `(1/L^2) sum_{i=1}^{L-1} phi_i^2 sum_{l=1}^{i} Theta^2(l, L+l-i)`.
    pub fn si_numerator(&self, lambda: f64) -> f64 {
        let n = self.pm.path_count();
        let chips = lambda * n as f64;
        let mut acc = 0.0;
        for i in 1..n {
            let mut inner = 0.0;
            for l in 1..=i {
                inner += self.pm.theta(l, n + l - i).powi(2);
            }
            acc += phi_sq(i, n, chips) * inner;
        }
        acc / (self.n() * self.n())
    }

    /// Same quantity summed tap-major through the step-function weights
    /// `v(l, i) = u(L_P - l) + u(L_P - L + i - l) + 2 u(L_P - l) u(L_P - L + i - l)`
    /// and `Theta^2 = w_l w_{L+l-i} v(l, i)`.
    pub fn si_numerator_by_cases(&self, lambda: f64) -> f64 {
        let n = self.pm.path_count();
        let lp = self.pm.finger_count() as i64;
        let chips = lambda * n as f64;
        let ln_rho = self.rho.ln();
        let denom = (n - 1) as f64;
        let phi: Vec<f64> = (0..n).map(|i| if i == 0 { 0.0 } else { phi_sq(i, n, chips) }).collect();
        let mut acc = 0.0;
        for l in 1..n {
            let a = unit_step(lp - l as i64);
            let mut row = 0.0;
            for i in l..n {
                let b = unit_step(lp - n as i64 + i as i64 - l as i64);
                let v = a + b + 2.0 * a * b;
                if v == 0.0 {
                    continue;
                }
                let expo = (n + 2 * l - i - 2) as f64 / denom;
                row += phi[i] * v * (-expo * ln_rho).exp();
            }
            acc += row;
        }
        acc / (self.n() * self.n())
    }

    /// `nu_L = si_numerator / den_si`.
    pub fn nu(&self, lambda: f64) -> f64 {
        self.si_numerator(lambda) / self.den_si()
    }
}

/// `zeta^-1` at finite `L`: `(K - 1) mu_L / N`.
pub fn finite_mai_inv(path_count: usize, users: usize, processing_gain: usize, rho: f64, beta: f64) -> Result<f64> {
    let s = FiniteSums::new(path_count, rho, beta)?;
    Ok(users.saturating_sub(1) as f64 * s.mu() / processing_gain as f64)
}

/// Self-interference ratio inverse at finite `L`: `nu_L / N` with
/// `Lambda = N_c / L`.
pub fn finite_si_inv(
    path_count: usize,
    processing_gain: usize,
    chips_per_frame: usize,
    rho: f64,
    beta: f64,
) -> Result<f64> {
    let s = FiniteSums::new(path_count, rho, beta)?;
    let lambda = chips_per_frame as f64 / path_count as f64;
    Ok(s.nu(lambda) / processing_gain as f64)
}

// Closed forms of the intermediate quantities.

fn den_mai_closed(rho: f64, beta: f64) -> f64 {
    if (rho - 1.0).abs() < lsa::FLAT_TOLERANCE {
        return beta;
    }
    let rb = rho.powf(beta);
    (rb - 1.0) / (rb * rho.ln())
}

fn num_mai_rake_later_closed(rho: f64, beta: f64) -> f64 {
    if (rho - 1.0).abs() < lsa::FLAT_TOLERANCE {
        return beta * beta / 2.0;
    }
    let rb = rho.powf(beta);
    rho.powf(-2.0 * beta) * (rb - 1.0).powi(2) / (2.0 * rho.ln().powi(2))
}

fn num_mai_rake_earlier_closed(rho: f64, beta: f64) -> f64 {
    if (rho - 1.0).abs() < lsa::FLAT_TOLERANCE {
        return beta - beta * beta / 2.0;
    }
    let rb = rho.powf(beta);
    rho.powf(-1.0 - 2.0 * beta) * (rb - 1.0) * (rho - 2.0 * rb + rho.powf(beta + 1.0))
        / (2.0 * rho.ln().powi(2))
}

fn channel_energy_closed(rho: f64) -> f64 {
    if (rho - 1.0).abs() < lsa::FLAT_TOLERANCE {
        return 1.0;
    }
    (rho - 1.0) / (rho * rho.ln())
}

/// Which form of the SI numerator to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Form {
    Corrected,
    /// Variant with three token swaps: `rho^beta` for `rho^Lambda` in the
    /// first region, `Lambda^(Lambda+beta+1)` for `rho^(Lambda+beta+1)` and
    /// `3 rho Lambda` for `3 rho beta`. The finite sums reject it.
    Alternate,
}

/// SI numerator `nu den_si` over the common denominator
/// `2 rho^(Lambda + 2 beta + 1) Lambda ln^3 rho` and its relatives).
fn si_numerator_closed(region: NuRegion, rho: f64, beta: f64, lambda: f64, form: Form) -> f64 {
    let (r, b, l) = (rho, beta, lambda);
    let lr = r.ln();
    let rb = r.powf(b);
    let rl = r.powf(l);
    let lr3 = lr.powi(3);
    let alt = form == Form::Alternate;
    match region {
        NuRegion::BelowBoth => {
            let first = if alt { rb - 1.0 } else { rl - 1.0 };
            (r * first * (4.0 * rb * rb + 3.0 * rl - 1.0) - 2.0 * rb * rl * (rb + 3.0 * r - 1.0) * l * lr)
                / (2.0 * r.powf(l + 2.0 * b + 1.0) * l * lr3)
        }
        NuRegion::BetweenFewFingers => {
            (r * (rb * rb - 1.0) * (4.0 * rl - 1.0) - 2.0 * rb * rl * (3.0 * r * b - l + rb * l) * lr)
                / (2.0 * r.powf(l + 2.0 * b + 1.0) * l * lr3)
        }
        NuRegion::BetweenManyFingers => {
            let token = if alt { l.powf(l + b + 1.0) } else { r.powf(l + b + 1.0) };
            (-4.0 * r.powf(2.0 + 2.0 * b) - 4.0 * r.powf(2.0 + l)
                + r.powf(2.0 * (b + l))
                + 4.0 * r.powf(2.0 + 2.0 * b + l)
                + 3.0 * r.powf(2.0 + 2.0 * l)
                - 2.0 * token * (rb * l + 3.0 * r * l + b - 1.0) * lr)
                / (2.0 * r.powf(2.0 + 2.0 * b + l) * l * lr3)
        }
        NuRegion::AboveBoth => {
            let token = if alt { l.powf(l + b + 1.0) } else { r.powf(l + b + 1.0) };
            let mid = if alt { 3.0 * r * l } else { 3.0 * r * b };
            (-r.powf(2.0 + 2.0 * b) - 4.0 * r.powf(2.0 + l)
                + r.powf(2.0 * (b + l))
                + 4.0 * r.powf(2.0 + 2.0 * b + l)
                - 2.0 * token * (rb * l + mid + b - 1.0) * lr)
                / (2.0 * r.powf(2.0 + 2.0 * b + l) * l * lr3)
        }
        NuRegion::FrameCoversChannel => {
            (2.0 * r * (rb * rb - 1.0) - (rb + b + 3.0 * r * b - 1.0) * rb * lr)
                / (r.powf(2.0 * b + 1.0) * l * lr3)
        }
    }
}

fn region_label(region: NuRegion) -> &'static str {
    match region {
        NuRegion::BelowBoth => "below_both",
        NuRegion::BetweenFewFingers => "between_few_fingers",
        NuRegion::BetweenManyFingers => "between_many_fingers",
        NuRegion::AboveBoth => "above_both",
        NuRegion::FrameCoversChannel => "frame_covers_channel",
    }
}

/// Whether a row is a pass/fail check or an informational comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuditStatus {
    Asserted,
    /// An alternate form, reported for comparison only.
    Informational,
}

/// One comparison of a finite sum with its closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditRow {
    pub name: String,
    pub rho: f64,
    pub beta: f64,
    pub lambda: f64,
    pub path_count: usize,
    pub finite: f64,
    pub closed: f64,
    pub rel_err: f64,
    pub tolerance: f64,
    pub status: AuditStatus,
}

impl AuditRow {
    #[allow(clippy::too_many_arguments)]
    fn new(
        name: impl Into<String>,
        (rho, beta, lambda): (f64, f64, f64),
        path_count: usize,
        finite: f64,
        closed: f64,
        tolerance: f64,
        status: AuditStatus,
    ) -> Self {
        Self {
            name: name.into(),
            rho,
            beta,
            lambda,
            path_count,
            finite,
            closed,
            rel_err: relative_error(finite, closed),
            tolerance,
            status,
        }
    }

    pub fn passes(&self) -> bool {
        self.status == AuditStatus::Informational || self.rel_err <= self.tolerance
    }
}

pub fn relative_error(value: f64, reference: f64) -> f64 {
    if value == reference {
        0.0
    } else {
        (value - reference).abs() / reference.abs()
    }
}

/// Tolerance of asymptotic comparisons at large `L`.
pub const ASYMPTOTIC_TOLERANCE: f64 = 1e-2;
/// Tolerance of comparisons where the finite sum is itself exact.
pub const EXACT_TOLERANCE: f64 = 1e-10;

/// Every intermediate quantity of the MAI, SI and channel-ratio derivations
/// at one point, as finite sums and as closed forms. `lambda` only affects
/// the SI rows.
pub fn intermediate_audit(path_count: usize, rho: f64, beta: f64, lambda: f64) -> Result<Vec<AuditRow>> {
    let s = FiniteSums::new(path_count, rho, beta)?;
    let at = (rho, beta, lambda);
    let tol = ASYMPTOTIC_TOLERANCE;
    let den_closed = den_mai_closed(rho, beta);
    let flat = (rho - 1.0).abs() < lsa::FLAT_TOLERANCE;
    let den_tol = if flat { EXACT_TOLERANCE } else { tol };
    let mut rows = vec![
        AuditRow::new("den_mai", at, path_count, s.den_mai(), den_closed, den_tol, AuditStatus::Asserted),
        AuditRow::new(
            "num_mai_rake_later",
            at,
            path_count,
            s.num_mai_rake_later(),
            num_mai_rake_later_closed(rho, beta),
            tol,
            AuditStatus::Asserted,
        ),
        AuditRow::new(
            "num_mai_rake_earlier",
            at,
            path_count,
            s.num_mai_rake_earlier(),
            num_mai_rake_earlier_closed(rho, beta),
            tol,
            AuditStatus::Asserted,
        ),
        AuditRow::new(
            "mai_ratio",
            at,
            path_count,
            s.mu_cross_only(),
            lsa::mu(rho, beta)?,
            tol,
            AuditStatus::Asserted,
        ),
        AuditRow::new("den_si", at, path_count, s.den_si(), den_closed * den_closed, den_tol, AuditStatus::Asserted),
        AuditRow::new(
            "channel_energy",
            at,
            path_count,
            s.channel_energy(),
            channel_energy_closed(rho),
            if flat { EXACT_TOLERANCE } else { tol },
            AuditStatus::Asserted,
        ),
        AuditRow::new(
            "channel_to_rake_gain",
            at,
            path_count,
            s.channel_ratio(),
            lsa::mu(rho, beta)?,
            tol,
            AuditStatus::Asserted,
        ),
    ];
    if !flat && lsa::ALL_RAKE_TOLERANCE < 1.0 - beta {
        let region = lsa::nu_region(beta, lambda);
        let label = region_label(region);
        let num = s.si_numerator(lambda);
        rows.push(AuditRow::new(
            format!("si_numerator_{label}"),
            at,
            path_count,
            num,
            si_numerator_closed(region, rho, beta, lambda, Form::Corrected),
            tol,
            AuditStatus::Asserted,
        ));
        if matches!(region, NuRegion::BelowBoth | NuRegion::BetweenManyFingers | NuRegion::AboveBoth) {
            rows.push(AuditRow::new(
                format!("si_numerator_{label}_alternate"),
                at,
                path_count,
                num,
                si_numerator_closed(region, rho, beta, lambda, Form::Alternate),
                tol,
                AuditStatus::Informational,
            ));
        }
        rows.push(AuditRow::new(
            format!("nu_{label}"),
            at,
            path_count,
            num / s.den_si(),
            lsa::nu(rho, beta, lambda)?,
            tol,
            AuditStatus::Asserted,
        ));
    }
    Ok(rows)
}

/// Finite sums against the flat-profile and all-Rake limit forms.
pub fn limit_rows(path_count: usize) -> Result<Vec<AuditRow>> {
    let mut rows = Vec::new();
    let exact = EXACT_TOLERANCE;
    let tol = ASYMPTOTIC_TOLERANCE;
    for beta in [0.25, 0.5] {
        let s = FiniteSums::new(path_count, 1.0, beta)?;
        rows.push(AuditRow::new(
            "mu_flat",
            (1.0, beta, f64::NAN),
            path_count,
            s.channel_ratio(),
            lsa::mu_flat(beta),
            exact,
            AuditStatus::Asserted,
        ));
    }
    for (beta, lambda) in REGION_POINTS {
        let s = FiniteSums::new(path_count, 1.0, beta)?;
        let region = lsa::nu_region(beta, lambda);
        rows.push(AuditRow::new(
            format!("nu_flat_{}", region_label(region)),
            (1.0, beta, lambda),
            path_count,
            s.nu(lambda),
            lsa::nu_flat_branch(region, beta, lambda),
            tol,
            AuditStatus::Asserted,
        ));
    }
    for rho in [10.0, 100.0] {
        let s = FiniteSums::new(path_count, rho, 1.0)?;
        rows.push(AuditRow::new(
            "mu_arake",
            (rho, 1.0, f64::NAN),
            path_count,
            s.channel_ratio(),
            lsa::mu_arake(rho),
            exact,
            AuditStatus::Asserted,
        ));
        for lambda in [0.25, 2.0] {
            rows.push(AuditRow::new(
                "nu_arake",
                (rho, 1.0, lambda),
                path_count,
                s.nu(lambda),
                lsa::nu_arake(rho, lambda),
                tol,
                AuditStatus::Asserted,
            ));
        }
    }
    let s = FiniteSums::new(path_count, 1.0, 1.0)?;
    rows.push(AuditRow::new(
        "mu_flat_arake",
        (1.0, 1.0, f64::NAN),
        path_count,
        s.channel_ratio(),
        lsa::mu_flat_arake(),
        exact,
        AuditStatus::Asserted,
    ));
    for lambda in [0.5, 1.0, 2.0] {
        rows.push(AuditRow::new(
            "nu_flat_arake",
            (1.0, 1.0, lambda),
            path_count,
            s.nu(lambda),
            lsa::nu_flat_arake(lambda),
            tol,
            AuditStatus::Asserted,
        ));
    }
    Ok(rows)
}

/// One `(beta, Lambda)` inside each `nu` region, chosen so that `beta L`
/// and `Lambda L` are integers for `L` a multiple of 8.
pub const REGION_POINTS: [(f64, f64); 5] = [(0.25, 0.125), (0.25, 0.5), (0.75, 0.5), (0.75, 0.875), (0.5, 2.0)];

/// The full audit at path count `L`: every intermediate at `rho = 10` in
/// each `nu` region, the large-system operating point
/// `(rho, beta, Lambda) = (10, 0.1, 0.25)`, a steep profile, and every
/// limit form. Independent points are evaluated in parallel; row order is
/// fixed.
pub fn full_audit(path_count: usize) -> Result<Vec<AuditRow>> {
    let mut points: Vec<(f64, f64, f64)> = REGION_POINTS.iter().map(|(b, l)| (10.0, *b, *l)).collect();
    points.push((10.0, 0.1, 0.25));
    points.push((100.0, 0.3, 0.25));
    let blocks: Vec<Result<Vec<AuditRow>>> = points
        .par_iter()
        .map(|(r, b, l)| intermediate_audit(path_count, *r, *b, *l))
        .collect();
    let mut rows = Vec::new();
    for b in blocks {
        rows.extend(b?);
    }
    rows.extend(limit_rows(path_count)?);
    Ok(rows)
}

/// Writes audit rows as CSV.
pub fn write_audit_csv<W: Write>(rows: &[AuditRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "name", "rho", "beta", "lambda", "paths", "finite", "closed", "rel_err", "tolerance", "status", "pass",
    ])?;
    for r in rows {
        w.write_record([
            r.name.clone(),
            fmt_f(r.rho),
            fmt_f(r.beta),
            fmt_f(r.lambda),
            r.path_count.to_string(),
            fmt_f(r.finite),
            fmt_f(r.closed),
            fmt_f(r.rel_err),
            fmt_f(r.tolerance),
            match r.status {
                AuditStatus::Asserted => "asserted".into(),
                AuditStatus::Informational => "informational".into(),
            },
            r.passes().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(())
}

fn fmt_f(x: f64) -> String {
    format!("{x:e}")
}

/// Quantities tracked by [`convergence_table`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Mu,
    Nu,
    DenMai,
    ChannelRatio,
}

impl Quantity {
    pub fn label(&self) -> &'static str {
        match self {
            Quantity::Mu => "mu",
            Quantity::Nu => "nu",
            Quantity::DenMai => "den_mai",
            Quantity::ChannelRatio => "channel_to_rake_gain",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub path_count: usize,
    pub finite: f64,
    pub closed: f64,
    pub rel_err: f64,
}

/// Finite value, closed form and relative error of `q` across `grid`.
pub fn convergence_table(
    q: Quantity,
    grid: &[usize],
    rho: f64,
    beta: f64,
    lambda: f64,
) -> Result<Vec<ConvergenceRow>> {
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("grid", "path counts must increase"));
    }
    let closed = match q {
        Quantity::Mu | Quantity::ChannelRatio => lsa::mu(rho, beta)?,
        Quantity::Nu => lsa::nu(rho, beta, lambda)?,
        Quantity::DenMai => den_mai_closed(rho, beta),
    };
    grid.par_iter()
        .map(|&n| {
            let s = FiniteSums::new(n, rho, beta)?;
            let finite = match q {
                Quantity::Mu => s.mu_cross_only(),
                Quantity::Nu => s.nu(lambda),
                Quantity::DenMai => s.den_mai(),
                Quantity::ChannelRatio => s.channel_ratio(),
            };
            Ok(ConvergenceRow {
                path_count: n,
                finite,
                closed,
                rel_err: relative_error(finite, closed),
            })
        })
        .collect()
}

pub fn write_convergence_csv<W: Write>(q: Quantity, rows: &[ConvergenceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["quantity", "paths", "finite", "closed", "rel_err"])?;
    for r in rows {
        w.write_record([
            q.label().to_string(),
            r.path_count.to_string(),
            fmt_f(r.finite),
            fmt_f(r.closed),
            fmt_f(r.rel_err),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(())
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            std_err: (var / n).sqrt(),
            samples: xs.len(),
        }
    }
}

/// Ratio-of-means estimate `mean(a) / mean(b)^power` over independent
/// trials with a leave-one-trial-out jackknife standard error.
fn jackknife_ratio(a: &[(f64, usize)], b: &[(f64, usize)], power: i32) -> Estimate {
    let (sa, na) = a.iter().fold((0.0, 0usize), |acc, x| (acc.0 + x.0, acc.1 + x.1));
    let (sb, nb) = b.iter().fold((0.0, 0usize), |acc, x| (acc.0 + x.0, acc.1 + x.1));
    let ratio = |sa: f64, na: usize, sb: f64, nb: usize| (sa / na as f64) / (sb / nb as f64).powi(power);
    let full = ratio(sa, na, sb, nb);
    let t = a.len();
    let leave_out: Vec<f64> = (0..t)
        .map(|i| ratio(sa - a[i].0, na - a[i].1, sb - b[i].0, nb - b[i].1))
        .collect();
    let mean_lo = leave_out.iter().sum::<f64>() / t as f64;
    let var = (t as f64 - 1.0) / t as f64 * leave_out.iter().map(|x| (x - mean_lo).powi(2)).sum::<f64>();
    Estimate {
        mean: full,
        std_err: var.sqrt(),
        samples: t,
    }
}

/// Monte Carlo estimates of the normalized interference terms.
///
/// The per-sample means average the ratios a receiver actually sees. The
/// trace estimates are ratios of means with the per-user variances divided
/// out, i.e. the expectations the finite sums of [`FiniteSums`] evaluate
/// exactly. At finite `L` the two differ by the bias of a ratio of random
/// variables, which is of order `1 / L_P`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceEstimates {
    /// Per-sample mean of `N zeta^-1 / (K - 1)`, comparable with `mu`.
    pub mai: Estimate,
    /// Per-sample mean of `N h_si / h_sp`, comparable with `nu`.
    pub si: Estimate,
    /// Per-sample mean of `||alpha||^2 / h_sp`, comparable with `mu`.
    pub channel_ratio: Estimate,
    /// `E[N h_mai_kj h_sp_k] / (E[h_sp])^2`, equal to [`FiniteSums::mu`].
    pub mai_trace: Estimate,
    /// `E[N h_si h_sp] / (E[h_sp])^2`, equal to [`FiniteSums::nu`].
    pub si_trace: Estimate,
    /// `E[||alpha||^2] / E[h_sp]`, equal to [`FiniteSums::channel_ratio`].
    pub channel_ratio_trace: Estimate,
}

#[derive(Default)]
struct TrialSums {
    mai: Vec<f64>,
    si: Vec<f64>,
    ratio: Vec<f64>,
    /// (sum, count) of the trace numerators and the normalized gains.
    mai_num: (f64, usize),
    si_num: (f64, usize),
    energy: (f64, usize),
    h: (f64, usize),
}

/// Draws `trials` independent networks of `users >= 2` users and collects
/// the per-user normalized interference terms from the link-gain layer.
pub fn monte_carlo_interference(
    profile: &ApdpProfile,
    selector: &RakeSelector,
    spreading: &SpreadingConfig,
    users: usize,
    trials: usize,
    seeds: &SeedStream,
) -> Result<InterferenceEstimates> {
    if users < 2 {
        return Err(Error::param("users", "MAI needs at least two users"));
    }
    if trials < 2 {
        return Err(Error::param("trials", "need at least two trials"));
    }
    let n_gain = spreading.processing_gain() as f64;
    let per_trial: Vec<Result<TrialSums>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let (topo, channels) = sample_network(profile, users, 3.0, 20.0, seeds, t)?;
            let gains = link_gains(&channels, selector, spreading, 1.0)?;
            let var: Vec<f64> = (0..users).map(|k| topo.user_variance(k)).collect();
            let mut s = TrialSums::default();
            for k in 0..users {
                let (h, si) = (gains.h_sp(k), gains.h_si(k));
                s.mai.push(n_gain * gains.mai_ratio_inv(k) / (users - 1) as f64);
                s.si.push(n_gain * si / h);
                s.ratio.push(channels[k].channel_gain() / h);
                s.si_num.0 += n_gain * si * h / (var[k] * var[k]);
                s.si_num.1 += 1;
                s.energy.0 += channels[k].channel_gain() / var[k];
                s.energy.1 += 1;
                s.h.0 += h / var[k];
                s.h.1 += 1;
                for j in (0..users).filter(|&j| j != k) {
                    s.mai_num.0 += n_gain * gains.h_mai(k, j) * h / (var[k] * var[j]);
                    s.mai_num.1 += 1;
                }
            }
            Ok(s)
        })
        .collect();
    let mut all = TrialSums::default();
    let (mut mai_num, mut si_num, mut energy, mut h) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for t in per_trial {
        let t = t?;
        all.mai.extend(t.mai);
        all.si.extend(t.si);
        all.ratio.extend(t.ratio);
        mai_num.push(t.mai_num);
        si_num.push(t.si_num);
        energy.push(t.energy);
        h.push(t.h);
    }
    Ok(InterferenceEstimates {
        mai: Estimate::from_samples(&all.mai),
        si: Estimate::from_samples(&all.si),
        channel_ratio: Estimate::from_samples(&all.ratio),
        mai_trace: jackknife_ratio(&mai_num, &h, 2),
        si_trace: jackknife_ratio(&si_num, &h, 2),
        channel_ratio_trace: jackknife_ratio(&energy, &h, 1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn profile_masks() {
        let pm = ProfileMatrices::new(10, 10.0, 0.3).unwrap();
        assert_eq!(pm.finger_count(), 3);
        for l in 0..10 {
            if l < 3 {
                assert_eq!(pm.rake_std()[l], pm.path_std()[l]);
            } else {
                assert_eq!(pm.rake_std()[l], 0.0);
            }
            assert!(pm.path_std()[l] > 0.0);
        }
        assert_relative_eq!(pm.theta(1, 2), 2.0 * pm.path_std()[0] * pm.path_std()[1]);
        assert_relative_eq!(pm.theta(1, 5), pm.path_std()[0] * pm.path_std()[4]);
        assert_eq!(pm.theta(5, 6), 0.0);
    }

    #[test]
    fn suffix_diagonals_match_matrix_products() {
        let pm = ProfileMatrices::new(12, 5.0, 0.5).unwrap();
        let (ca, cb) = pm.variance_patterns();
        let (da, db) = pm.cross_diagonals();
        let pa = &ca * ca.transpose();
        let pb = &cb * cb.transpose();
        for l in 0..12 {
            assert_relative_eq!(pa[(l, l)], da[l], max_relative = 1e-13, epsilon = 1e-300);
            assert_relative_eq!(pb[(l, l)], db[l], max_relative = 1e-13, epsilon = 1e-300);
        }
    }

    #[test]
    fn full_trace_equals_channel_ratio() {
        for (r, b) in [(10.0, 0.3), (1.0, 0.5), (100.0, 1.0)] {
            let s = FiniteSums::new(200, r, b).unwrap();
            assert_relative_eq!(s.mu(), s.channel_ratio(), max_relative = 1e-12);
        }
    }

    #[test]
    fn evaluation_orders_agree() {
        for (r, b, l) in [(10.0, 0.1, 0.25), (10.0, 0.7, 0.5), (2.0, 0.5, 1.5), (100.0, 1.0, 0.3)] {
            let s = FiniteSums::new(300, r, b).unwrap();
            assert_relative_eq!(s.si_numerator(l), s.si_numerator_by_cases(l), max_relative = 1e-12);
        }
    }

    #[test]
    fn flat_all_rake_exact_at_any_size() {
        for n in [2, 7, 50] {
            assert_relative_eq!(finite_mai_inv(n, 5, 100, 1.0, 1.0).unwrap(), 4.0 / 100.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn flat_all_rake_si_tends_to_two_thirds() {
        let errs: Vec<f64> = [50, 200, 800]
            .iter()
            .map(|&n| (FiniteSums::new(n, 1.0, 1.0).unwrap().nu(1.0) - 2.0 / 3.0).abs())
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]));
        assert!(errs[2] < 5e-3);
    }

    #[test]
    fn finite_si_inv_scaling() {
        let v = finite_si_inv(200, 1000, 50, 10.0, 0.3).unwrap();
        let s = FiniteSums::new(200, 10.0, 0.3).unwrap();
        assert_relative_eq!(v, s.nu(0.25) / 1000.0);
    }

    #[test]
    fn audit_rows_at_moderate_size() {
        let rows = intermediate_audit(800, 10.0, 0.25, 0.125).unwrap();
        for r in &rows {
            if r.status == AuditStatus::Asserted {
                assert!(r.passes(), "{r:?}");
            }
        }
        let alt = rows.iter().find(|r| r.name.ends_with("alternate")).unwrap();
        assert!(alt.rel_err > 0.05);
    }

    #[test]
    fn convergence_shrinks() {
        let t = convergence_table(Quantity::Mu, &[50, 200, 800], 10.0, 0.5, 0.25).unwrap();
        assert!(t.windows(2).all(|w| w[1].rel_err < w[0].rel_err));
        assert!(convergence_table(Quantity::Mu, &[200, 50], 10.0, 0.5, 0.25).is_err());
        let mut buf = Vec::new();
        write_convergence_csv(Quantity::Mu, &t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("quantity,paths,finite,closed,rel_err\n"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn estimate_moments() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_relative_eq!(e.mean, 2.5);
        assert_relative_eq!(e.std_err, (5.0f64 / 3.0 / 4.0).sqrt());
    }
}
