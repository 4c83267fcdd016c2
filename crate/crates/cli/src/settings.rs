//! Layered settings: built-in defaults, then a `key=value` file, then flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use prake_core::{ExperimentConfig, TargetRule};

/// Flags shared by every subcommand. Each one may also appear in the
/// config file under the same name without the leading dashes.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Number of users K.
    #[arg(long, global = true)]
    pub users: Option<usize>,
    /// Resolvable paths L.
    #[arg(long, global = true)]
    pub paths: Option<usize>,
    /// Chips per frame N_c.
    #[arg(long, global = true)]
    pub chips: Option<usize>,
    /// Frames per symbol N_f.
    #[arg(long, global = true)]
    pub frames: Option<usize>,
    /// Decay ratio in dB; repeat for several curves.
    #[arg(long = "rho-db", global = true, allow_negative_numbers = true)]
    pub rho_db: Vec<f64>,
    /// Finger fraction; repeat for several receivers.
    #[arg(long, global = true)]
    pub beta: Vec<f64>,
    /// Monte Carlo trials.
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Target SINR rule of the closed forms: `finite` or `limit`.
    #[arg(long = "target-rule", global = true)]
    pub target_rule: Option<TargetRule>,
    /// Largest frame count swept by `po-frames`.
    #[arg(long = "max-frames", global = true)]
    pub max_frames: Option<usize>,
    /// Path count of the finite-sum audit.
    #[arg(long = "audit-paths", global = true)]
    pub audit_paths: Option<usize>,
    /// Output CSV path; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// `key=value` settings file; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

impl Overrides {
    /// Reads a settings file. Blank lines and `#` comments are skipped; list
    /// keys take comma-separated values and may repeat.
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut o = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("{}:{}: expected key=value", path.display(), n + 1);
            };
            o.set(key.trim(), value.trim())
                .with_context(|| format!("{}:{}: bad value for `{}`", path.display(), n + 1, key.trim()))?;
        }
        Ok(o)
    }

    fn set(&mut self, key: &str, value: &str) -> anyhow::Result<()> {
        fn list(v: &str) -> anyhow::Result<Vec<f64>> {
            v.split(',').map(|x| Ok(x.trim().parse::<f64>()?)).collect()
        }
        match key.replace('_', "-").as_str() {
            "users" => self.users = Some(value.parse()?),
            "paths" => self.paths = Some(value.parse()?),
            "chips" => self.chips = Some(value.parse()?),
            "frames" => self.frames = Some(value.parse()?),
            "rho-db" => self.rho_db.extend(list(value)?),
            "beta" => self.beta.extend(list(value)?),
            "trials" => self.trials = Some(value.parse()?),
            "seed" => self.seed = Some(value.parse()?),
            "target-rule" => self.target_rule = Some(value.parse()?),
            "max-frames" => self.max_frames = Some(value.parse()?),
            "audit-paths" => self.audit_paths = Some(value.parse()?),
            "out" => self.out = Some(PathBuf::from(value)),
            "config" => bail!("nested config files are not supported"),
            other => bail!("unknown key `{other}`"),
        }
        Ok(())
    }

    /// `self` on top of `base`: scalars replace, non-empty lists replace.
    pub fn over(self, base: Self) -> Self {
        let pick = |a: Vec<f64>, b: Vec<f64>| if a.is_empty() { b } else { a };
        Self {
            users: self.users.or(base.users),
            paths: self.paths.or(base.paths),
            chips: self.chips.or(base.chips),
            frames: self.frames.or(base.frames),
            rho_db: pick(self.rho_db, base.rho_db),
            beta: pick(self.beta, base.beta),
            trials: self.trials.or(base.trials),
            seed: self.seed.or(base.seed),
            target_rule: self.target_rule.or(base.target_rule),
            max_frames: self.max_frames.or(base.max_frames),
            audit_paths: self.audit_paths.or(base.audit_paths),
            out: self.out.or(base.out),
            config: self.config.or(base.config),
        }
    }

    /// Applies the settings to `config`, whose lists hold the subcommand's
    /// defaults.
    pub fn apply(&self, mut config: ExperimentConfig) -> ExperimentConfig {
        macro_rules! set {
            ($($f:ident => $g:ident),*) => {$(if let Some(v) = self.$f { config.$g = v; })*};
        }
        set!(users => users, paths => paths, chips => chips, frames => frames,
             trials => trials, seed => seed, target_rule => target_rule, audit_paths => audit_paths);
        if !self.rho_db.is_empty() {
            config.rho_db = self.rho_db.clone();
        }
        if !self.beta.is_empty() {
            config.betas = self.beta.clone();
        }
        if let Some(m) = self.max_frames {
            config.frame_grid = (1..=m).collect();
        }
        config
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn file_then_flags() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# comment\nusers = 4\nbeta=0.5, 0.2\nrho_db=3\nseed=9 # trailing").unwrap();
        let file = Overrides::from_file(f.path()).unwrap();
        assert_eq!(file.beta, vec![0.5, 0.2]);
        let flags = Overrides {
            users: Some(6),
            ..Default::default()
        };
        let c = flags.over(file).apply(ExperimentConfig::default());
        assert_eq!((c.users, c.seed), (6, 9));
        assert_eq!(c.betas, vec![0.5, 0.2]);
        assert_eq!(c.rho_db, vec![3.0]);
        assert_eq!(c.paths, 200);
    }

    #[test]
    fn bad_file_lines() {
        for body in ["users", "colour=red", "users=many"] {
            let mut f = tempfile::NamedTempFile::new().unwrap();
            writeln!(f, "{body}").unwrap();
            assert!(Overrides::from_file(f.path()).is_err(), "{body}");
        }
    }

    #[test]
    fn max_frames_sets_grid() {
        let o = Overrides {
            max_frames: Some(3),
            ..Default::default()
        };
        assert_eq!(o.apply(ExperimentConfig::default()).frame_grid, vec![1, 2, 3]);
    }
}
