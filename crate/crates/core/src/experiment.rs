//! Seeded experiment runners producing CSV tables.
//!
//! Every runner is deterministic for a fixed [`ExperimentConfig`]: random
//! draws come from [`SeedStream`] sub-streams keyed by trial, trials may run
//! on any number of threads, and results are reduced in trial order.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;

use crate::channel::{db_to_linear, linear_to_db, sample_network, ApdpProfile};
use crate::error::{Error, Result};
use crate::game::{gamma_star, solve_equilibrium, SolverOptions, UtilityParams};
use crate::lsa::{self, LsaParams, TargetRule};
use crate::oracle::{self, AuditRow};
use crate::rake::{link_gains, LinkGains, RakeSelector, SpreadingConfig};
use crate::rng::SeedStream;

/// Version recorded in CSV headers.
pub const VERSION: &str = match option_env!("PRAKE_GIT_DESCRIBE") {
    Some(v) => v,
    None => env!("CARGO_PKG_VERSION"),
};

/// Network, receiver and Monte Carlo settings shared by all runners.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub users: usize,
    pub paths: usize,
    pub chips: usize,
    pub frames: usize,
    /// Decay ratios in dB; runners sweeping `rho` iterate over all of them.
    pub rho_db: Vec<f64>,
    /// Finger fractions; runners sweeping `beta` iterate over all of them.
    pub betas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub utility: UtilityParams,
    pub noise_var: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub target_rule: TargetRule,
    /// Frame counts swept by [`run_po_vs_frames`].
    pub frame_grid: Vec<usize>,
    /// Path count of the finite-sum audit.
    pub audit_paths: usize,
    pub solver: SolverOptions,
}

impl Default for ExperimentConfig {
    /// The simulated network: K = 8, L = 200, N_c = 50, N_f = 20,
    /// rho = 10 dB, noise 5e-16 W, distances uniform in [3, 20] m.
    fn default() -> Self {
        Self {
            users: 8,
            paths: 200,
            chips: 50,
            frames: 20,
            rho_db: vec![10.0],
            betas: vec![1.0, 0.5, 0.3, 0.1],
            trials: 1000,
            seed: 1,
            utility: UtilityParams::standard(),
            noise_var: 5e-16,
            d_min: 3.0,
            d_max: 20.0,
            target_rule: TargetRule::Finite,
            frame_grid: (1..=40).collect(),
            audit_paths: 4000,
            solver: SolverOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.users == 0 {
            return Err(Error::param("users", "need at least one user"));
        }
        if self.paths < 2 {
            return Err(Error::param("paths", "need at least two paths"));
        }
        SpreadingConfig::new(self.frames, self.chips)?;
        if self.rho_db.is_empty() || self.rho_db.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(Error::param("rho_db", "need one or more finite values >= 0 dB"));
        }
        if self.betas.is_empty() || self.betas.iter().any(|b| !(*b > 0.0 && *b <= 1.0)) {
            return Err(Error::param("beta", "need one or more values in (0, 1]"));
        }
        if self.trials == 0 {
            return Err(Error::param("trials", "must be positive"));
        }
        if !(self.noise_var > 0.0) {
            return Err(Error::param("noise_var", "must be positive"));
        }
        if !(self.d_min > 0.0 && self.d_min <= self.d_max) {
            return Err(Error::param("distance", "need 0 < d_min <= d_max"));
        }
        if self.frame_grid.is_empty() || self.frame_grid.contains(&0) {
            return Err(Error::param("frame_grid", "need positive frame counts"));
        }
        if self.audit_paths < 2 {
            return Err(Error::param("audit_paths", "need at least two paths"));
        }
        Ok(())
    }

    /// `key=value` pairs in a fixed order, as recorded in CSV headers.
    pub fn describe(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
        format!(
            "users={} paths={} chips={} frames={} rho_db={} beta={} trials={} seed={} \
             info_bits={} total_bits={} rate={} p_max={} noise_var={} d_min={} d_max={} target_rule={}",
            self.users,
            self.paths,
            self.chips,
            self.frames,
            list(&self.rho_db),
            list(&self.betas),
            self.trials,
            self.seed,
            self.utility.info_bits,
            self.utility.total_bits,
            self.utility.rate,
            self.utility.p_max,
            self.noise_var,
            self.d_min,
            self.d_max,
            self.target_rule,
        )
    }

    fn spreading(&self, frames: usize) -> Result<SpreadingConfig> {
        SpreadingConfig::new(frames, self.chips)
    }

    fn lsa(&self, rho: f64, beta: f64, frames: usize) -> Result<LsaParams> {
        let sel = RakeSelector::from_fraction(beta, self.paths)?;
        Ok(LsaParams::from_system(rho, &sel, &self.spreading(frames)?, self.users)?
            .with_utility(self.utility)
            .with_noise_var(self.noise_var)
            .with_target_rule(self.target_rule))
    }
}

/// A CSV table: header plus rows of preformatted cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub name: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &'static str, columns: &[&'static str]) -> Self {
        Self {
            name,
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Index of `column`, if present.
    pub fn column(&self, column: &str) -> Option<usize> {
        self.columns.iter().position(|c| *c == column)
    }

    /// Numeric values of `column`; unparsable cells become NaN.
    pub fn values(&self, column: &str) -> Vec<f64> {
        let Some(i) = self.column(column) else {
            return Vec::new();
        };
        self.rows.iter().map(|r| r[i].parse().unwrap_or(f64::NAN)).collect()
    }

    /// Writes two comment lines (version, then configuration) followed by
    /// the header and rows.
    pub fn write_csv<W: Write>(&self, config: &ExperimentConfig, out: W) -> Result<()> {
        let mut out = out;
        let mut head = String::new();
        let _ = writeln!(head, "# prake {VERSION}");
        let _ = writeln!(head, "# {} {}", self.name, config.describe());
        out.write_all(head.as_bytes()).map_err(|e| Error::Csv(e.to_string()))?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush().map_err(|e| Error::Csv(e.to_string()))?;
        Ok(())
    }

    pub fn to_csv_string(&self, config: &ExperimentConfig) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(config, &mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Csv(e.to_string()))
    }
}

fn num(x: f64) -> String {
    x.to_string()
}

/// Target SINR against the SI ratio on a log grid from 1 to 1e12.
pub fn run_gamma_curve(config: &ExperimentConfig) -> Result<Table> {
    config.validate()?;
    let mut t = Table::new("gamma-curve", &["si_ratio", "target_sinr", "target_sinr_db"]);
    for i in 0..=240 {
        let s = 10f64.powf(i as f64 * 0.05);
        let g = gamma_star(s, config.utility.total_bits)?;
        t.push(vec![num(s), num(g), num(linear_to_db(g))]);
    }
    Ok(t)
}

/// Relative tap power against normalized excess delay for each `rho`.
pub fn run_apdp(config: &ExperimentConfig) -> Result<Table> {
    config.validate()?;
    let mut t = Table::new("apdp", &["rho_db", "normalized_delay", "relative_power_db"]);
    for &rho_db in &config.rho_db {
        let p = ApdpProfile::from_db(config.paths, rho_db)?;
        let n = config.paths;
        for (l, v) in p.relative_powers().iter().enumerate() {
            let x = if n > 1 { l as f64 / (n - 1) as f64 } else { 0.0 };
            t.push(vec![num(rho_db), num(x), num(linear_to_db(*v))]);
        }
    }
    Ok(t)
}

/// Decay ratios of the `mu`/`nu` curves.
pub const CURVE_RHO_DB: [f64; 3] = [0.0, 10.0, 20.0];
/// Load factors of the `mu`/`nu` curves.
pub const CURVE_LAMBDAS: [f64; 3] = [0.25, 1.0, 4.0];

/// `mu` and `nu` over `beta = 0.02, 0.04, ..., 1` for every combination of
/// [`CURVE_RHO_DB`] and [`CURVE_LAMBDAS`].
pub fn run_mu_nu_curves(config: &ExperimentConfig) -> Result<Table> {
    config.validate()?;
    let mut t = Table::new("mu-nu", &["rho_db", "lambda", "beta", "mu", "nu"]);
    for rho_db in CURVE_RHO_DB {
        let rho = db_to_linear(rho_db);
        for lambda in CURVE_LAMBDAS {
            for i in 1..=50 {
                let beta = i as f64 / 50.0;
                t.push(vec![
                    num(rho_db),
                    num(lambda),
                    num(beta),
                    num(lsa::mu(rho, beta)?),
                    num(lsa::nu(rho, beta, lambda)?),
                ]);
            }
        }
    }
    Ok(t)
}

/// Equilibrium outcome of one channel draw at one frame count.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Clamping {
    clamped: bool,
    converged: bool,
}

/// Probability that some user transmits at `p_max` at equilibrium, against
/// the frame count, for every `(rho, beta)` in the configuration.
///
/// Each trial draws fresh distances and channels; the same draws are reused
/// across the frame grid, so the estimated curve is monotone whenever each
/// trial's clamping is. The analytic columns give the smallest feasible
/// frame count under both target rules.
pub fn run_po_vs_frames(config: &ExperimentConfig) -> Result<Table> {
    config.validate()?;
    let mut t = Table::new(
        "po-frames",
        &[
            "rho_db",
            "beta",
            "frames",
            "po",
            "trials",
            "not_converged",
            "min_frames_finite",
            "min_frames_limit",
        ],
    );
    let seeds = SeedStream::new(config.seed);
    let unit = config.spreading(1)?;
    for &rho_db in &config.rho_db {
        let profile = ApdpProfile::from_db(config.paths, rho_db)?;
        let rho = profile.decay_ratio();
        for &beta in &config.betas {
            let sel = RakeSelector::from_fraction(beta, config.paths)?;
            let lsa_p = config.lsa(rho, beta, config.frames)?;
            let mf_finite = lsa::min_frames(&lsa_p.with_target_rule(TargetRule::Finite))?;
            let mf_limit = lsa::min_frames(&lsa_p.with_target_rule(TargetRule::Limit))?;
            let per_trial: Vec<Result<Vec<Clamping>>> = (0..config.trials as u64)
                .into_par_iter()
                .map(|trial| {
                    let (_, channels) =
                        sample_network(&profile, config.users, config.d_min, config.d_max, &seeds, trial)?;
                    let base = link_gains(&channels, &sel, &unit, config.noise_var)?;
                    config
                        .frame_grid
                        .iter()
                        .map(|&nf| {
                            let g = base.with_gain_factor(nf as f64)?;
                            let out = solve_equilibrium(&g, &config.utility, &config.solver)?;
                            Ok(Clamping {
                                clamped: out.any_clamped(),
                                converged: out.converged,
                            })
                        })
                        .collect()
                })
                .collect();
            let mut clamped = vec![0usize; config.frame_grid.len()];
            let mut stalled = vec![0usize; config.frame_grid.len()];
            for r in per_trial {
                for (i, c) in r?.into_iter().enumerate() {
                    clamped[i] += c.clamped as usize;
                    stalled[i] += !c.converged as usize;
                }
            }
            for (i, &nf) in config.frame_grid.iter().enumerate() {
                t.push(vec![
                    num(rho_db),
                    num(beta),
                    nf.to_string(),
                    num(clamped[i] as f64 / config.trials as f64),
                    config.trials.to_string(),
                    stalled[i].to_string(),
                    mf_finite.to_string(),
                    mf_limit.to_string(),
                ]);
            }
        }
    }
    Ok(t)
}

/// Link gains of one network draw for every `beta` in the configuration.
fn banks_for_draw(
    config: &ExperimentConfig,
    profile: &ApdpProfile,
    seeds: &SeedStream,
    trial: u64,
) -> Result<(Vec<f64>, Vec<LinkGains>)> {
    let (_, channels) = sample_network(profile, config.users, config.d_min, config.d_max, seeds, trial)?;
    let spreading = config.spreading(config.frames)?;
    let energy = channels.iter().map(|c| c.channel_gain()).collect();
    let banks = config
        .betas
        .iter()
        .map(|&b| link_gains(&channels, &RakeSelector::from_fraction(b, config.paths)?, &spreading, config.noise_var))
        .collect::<Result<Vec<_>>>()?;
    Ok((energy, banks))
}

/// Predicted all-Rake utility at channel gain `h`, shifted by the loss of
/// the `beta` receiver.
fn shifted_arake_prediction(p: &LsaParams, h: f64) -> Result<f64> {
    Ok(lsa::predict_utility(&p.all_rake(), h)? / lsa::loss(p)?)
}

/// Simulated and predicted equilibrium utilities of a single network draw
/// (trial 0 of the seed), shared by the receivers of every `beta`. Uses the
/// first entry of `rho_db`.
pub fn run_utility_vs_gain(config: &ExperimentConfig) -> Result<Table> {
    config.validate()?;
    let mut t = Table::new(
        "utility-gain",
        &[
            "beta",
            "user",
            "channel_gain",
            "h_sp",
            "power_w",
            "utility_sim",
            "utility_pred",
            "utility_arake_shifted",
            "clamped",
        ],
    );
    let seeds = SeedStream::new(config.seed);
    let profile = ApdpProfile::from_db(config.paths, config.rho_db[0])?;
    let rho = profile.decay_ratio();
    let (energy, banks) = banks_for_draw(config, &profile, &seeds, 0)?;
    for (&beta, gains) in config.betas.iter().zip(&banks) {
        let p = config.lsa(rho, beta, config.frames)?;
        let out = solve_equilibrium(gains, &config.utility, &config.solver)?;
        for k in 0..config.users {
            let pred = lsa::predict_utility(&p, gains.h_sp(k)).unwrap_or(f64::NAN);
            let shifted = shifted_arake_prediction(&p, energy[k]).unwrap_or(f64::NAN);
            t.push(vec![
                num(beta),
                k.to_string(),
                num(energy[k]),
                num(gains.h_sp(k)),
                num(out.powers[k]),
                num(out.utilities[k]),
                num(pred),
                num(shifted),
                out.clamped[k].to_string(),
            ]);
        }
    }
    Ok(t)
}

/// Normalized mean square error of the loss-shifted all-Rake prediction
/// against the simulated utility, `E[((u_A / loss - u) / u)^2]`, over
/// `trials` draws and all users, for each `beta`. Uses the first entry of
/// `rho_db`.
pub fn run_nmse(config: &ExperimentConfig) -> Result<Table> {
    config.validate()?;
    let mut t = Table::new("nmse", &["beta", "nmse", "std_err", "samples", "clamped_samples"]);
    let seeds = SeedStream::new(config.seed);
    let profile = ApdpProfile::from_db(config.paths, config.rho_db[0])?;
    let rho = profile.decay_ratio();
    let params: Vec<LsaParams> =
        config.betas.iter().map(|&b| config.lsa(rho, b, config.frames)).collect::<Result<_>>()?;
    // Per trial and beta: squared errors and clamp count.
    type TrialErrors = Result<Vec<(Vec<f64>, usize)>>;
    let per_trial: Vec<TrialErrors> = (0..config.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let (energy, banks) = banks_for_draw(config, &profile, &seeds, trial)?;
            banks
                .iter()
                .zip(&params)
                .map(|(gains, p)| {
                    let out = solve_equilibrium(gains, &config.utility, &config.solver)?;
                    let errs = (0..config.users)
                        .map(|k| {
                            let pred = shifted_arake_prediction(p, energy[k])?;
                            let u = out.utilities[k];
                            Ok(((pred - u) / u).powi(2))
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    Ok((errs, out.clamped.iter().filter(|c| **c).count()))
                })
                .collect()
        })
        .collect();
    let mut errs = vec![Vec::new(); config.betas.len()];
    let mut clamped = vec![0usize; config.betas.len()];
    for r in per_trial {
        for (i, (e, c)) in r?.into_iter().enumerate() {
            errs[i].extend(e);
            clamped[i] += c;
        }
    }
    for (i, &beta) in config.betas.iter().enumerate() {
        let e = oracle::Estimate::from_samples(&errs[i]);
        t.push(vec![num(beta), num(e.mean), num(e.std_err), e.samples.to_string(), clamped[i].to_string()]);
    }
    Ok(t)
}

/// Decay ratios of the loss curves.
pub const LOSS_RHO_DB: [f64; 2] = [0.0, 10.0];
/// Chips per frame of the loss curves.
pub const LOSS_CHIPS: [usize; 2] = [50, 200];

/// Loss in dB over `beta = 0.05, 0.10, ..., 1` for each combination of
/// [`LOSS_RHO_DB`] and [`LOSS_CHIPS`]; `users`, `paths` and `frames` come
/// from the configuration. Infeasible points are written as `inf`.
pub fn run_loss_vs_beta(config: &ExperimentConfig) -> Result<Table> {
    config.validate()?;
    let mut t = Table::new("loss-beta", &["rho_db", "chips", "lambda", "beta", "loss_db"]);
    for rho_db in LOSS_RHO_DB {
        for chips in LOSS_CHIPS {
            let cfg = ExperimentConfig {
                chips,
                ..config.clone()
            };
            for i in 1..=20 {
                let beta = i as f64 / 20.0;
                let p = cfg.lsa(db_to_linear(rho_db), beta, cfg.frames)?;
                let db = match lsa::loss_db(&p) {
                    Ok(v) => v,
                    Err(Error::Infeasible { .. }) => f64::INFINITY,
                    Err(e) => return Err(e),
                };
                t.push(vec![num(rho_db), chips.to_string(), num(p.lambda), num(beta), num(db)]);
            }
        }
    }
    Ok(t)
}

/// Finite-sum audit of every closed form at `audit_paths` paths.
pub fn run_validate(config: &ExperimentConfig) -> Result<(Table, bool)> {
    config.validate()?;
    let rows = oracle::full_audit(config.audit_paths)?;
    let ok = rows.iter().all(AuditRow::passes);
    let mut t = Table::new(
        "validate",
        &["name", "rho", "beta", "lambda", "paths", "finite", "closed", "rel_err", "tolerance", "status", "pass"],
    );
    for r in rows {
        t.push(vec![
            r.name.clone(),
            num(r.rho),
            num(r.beta),
            num(r.lambda),
            r.path_count.to_string(),
            num(r.finite),
            num(r.closed),
            num(r.rel_err),
            num(r.tolerance),
            match r.status {
                oracle::AuditStatus::Asserted => "asserted".to_string(),
                oracle::AuditStatus::Informational => "informational".to_string(),
            },
            r.passes().to_string(),
        ]);
    }
    Ok((t, ok))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            trials: 8,
            frame_grid: vec![2, 10, 30],
            audit_paths: 200,
            ..Default::default()
        }
    }

    #[test]
    fn defaults_match_simulation_table() {
        let c = ExperimentConfig::default();
        assert_eq!((c.users, c.paths, c.chips, c.frames), (8, 200, 50, 20));
        assert_eq!(c.utility, UtilityParams::standard());
        assert_eq!(c.noise_var, 5e-16);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn validation_rejects_bad_fields() {
        for c in [
            ExperimentConfig { users: 0, ..small() },
            ExperimentConfig { betas: vec![1.5], ..small() },
            ExperimentConfig { rho_db: vec![-1.0], ..small() },
            ExperimentConfig { trials: 0, ..small() },
            ExperimentConfig { frame_grid: vec![0], ..small() },
            ExperimentConfig { d_min: 5.0, d_max: 4.0, ..small() },
        ] {
            assert!(matches!(c.validate(), Err(Error::Parameter { .. })));
        }
    }

    #[test]
    fn gamma_curve_shape() {
        let t = run_gamma_curve(&small()).unwrap();
        let s = t.values("si_ratio");
        let g = t.values("target_sinr");
        assert!(g.windows(2).all(|w| w[1] >= w[0]));
        assert!(s.iter().zip(&g).all(|(s, g)| g < s));
        assert_eq!(*s.last().unwrap(), 1e12);
        assert!((g.last().unwrap() - 12.95).abs() < 0.01);
    }

    #[test]
    fn apdp_endpoints() {
        let cfg = ExperimentConfig { rho_db: vec![0.0, 20.0], ..small() };
        let t = run_apdp(&cfg).unwrap();
        let p = t.values("relative_power_db");
        assert!(p[..200].iter().all(|v| *v == 0.0));
        assert!((p[399] + 20.0).abs() < 1e-9);
    }

    #[test]
    fn csv_has_comment_and_header() {
        let cfg = small();
        let s = run_gamma_curve(&cfg).unwrap().to_csv_string(&cfg).unwrap();
        let mut lines = s.lines();
        assert!(lines.next().unwrap().starts_with("# prake "));
        assert!(lines.next().unwrap().contains("seed=1"));
        assert_eq!(lines.next().unwrap(), "si_ratio,target_sinr,target_sinr_db");
    }

    #[test]
    fn utility_power_identity() {
        let t = run_utility_vs_gain(&small()).unwrap();
        let (p, u) = (t.values("power_w"), t.values("utility_sim"));
        let cfg = small();
        let sinr_bound = cfg.utility.throughput_scale();
        for (p, u) in p.iter().zip(&u) {
            assert!(u * p <= sinr_bound * (1.0 + 1e-12));
        }
        assert_eq!(t.rows.len(), 4 * 8);
    }

    #[test]
    fn po_curve_small() {
        let cfg = ExperimentConfig {
            betas: vec![0.1],
            ..small()
        };
        let t = run_po_vs_frames(&cfg).unwrap();
        let po = t.values("po");
        assert!(po.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(po[0], 1.0);
        assert_eq!(t.values("min_frames_limit")[0], 9.0);
    }
}
