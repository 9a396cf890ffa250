use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::DEFAULT_CAPACITY;
use crate::envs::EnvKind;
use crate::error::{Error, Result};
use crate::numerics::{ExecMode, DEFAULT_HIDDEN};
use crate::policy::LossMode;
use crate::schedule::{
    DiffusionSchedule, DEFAULT_EPS, DEFAULT_K_MAX, DEFAULT_RHO, DEFAULT_SIGMA_DATA, DEFAULT_STEPS,
};

/// Critic family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Algo {
    /// Clipped double-Q critics with sampled next actions.
    #[default]
    Cpql,
    /// Expectile value network; Q targets bootstrap from `V(s')`.
    Cpiql,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Setting {
    #[default]
    Offline,
    Online,
}

impl FromStr for Algo {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cpql" => Ok(Self::Cpql),
            "cpiql" => Ok(Self::Cpiql),
            _ => Err(Error::config(format!("mode must be cpql or cpiql, got {s:?}"))),
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Cpql => "cpql",
            Self::Cpiql => "cpiql",
        })
    }
}

impl FromStr for Setting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "offline" => Ok(Self::Offline),
            "online" => Ok(Self::Online),
            _ => Err(Error::config(format!("setting must be offline or online, got {s:?}"))),
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Offline => "offline",
            Self::Online => "online",
        })
    }
}

/// Every hyperparameter of a run. Keys in config files match the field names.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: Algo,
    pub setting: Setting,
    pub alpha: f64,
    pub eta: f64,
    pub tau: f64,
    pub gamma: f64,
    pub lr_policy: f64,
    pub lr_critic: f64,
    pub rho_polyak: f64,
    pub batch: usize,
    pub loss_mode: LossMode,
    pub m: usize,
    pub eps: f64,
    pub k_max: f64,
    pub rho_karras: f64,
    pub sigma_data: f64,
    pub hidden: usize,
    /// Online warm-up environment steps before the first update.
    pub warmup: usize,
    pub total_iters: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub seed: u64,
    pub dataset_path: Option<PathBuf>,
    pub env_name: String,
    pub capacity: usize,
    pub metrics_path: Option<PathBuf>,
    pub checkpoint_path: Option<PathBuf>,
    /// Write elapsed seconds into the metrics; off by default so that
    /// identical seeds give byte-identical files.
    pub log_wallclock: bool,
    pub exec: ExecMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Algo::Cpql,
            setting: Setting::Offline,
            alpha: 1.0,
            eta: 1.0,
            tau: 0.7,
            gamma: 0.99,
            lr_policy: 3e-4,
            lr_critic: 3e-4,
            rho_polyak: 0.995,
            batch: 256,
            loss_mode: LossMode::Reconstruction,
            m: DEFAULT_STEPS,
            eps: DEFAULT_EPS,
            k_max: DEFAULT_K_MAX,
            rho_karras: DEFAULT_RHO,
            sigma_data: DEFAULT_SIGMA_DATA,
            hidden: DEFAULT_HIDDEN,
            warmup: 1000,
            total_iters: 10_000,
            eval_every: 1000,
            eval_episodes: 10,
            seed: 0,
            dataset_path: None,
            env_name: "bimodal-reach".to_string(),
            capacity: DEFAULT_CAPACITY,
            metrics_path: None,
            checkpoint_path: None,
            log_wallclock: false,
            exec: ExecMode::Parallel,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("invalid value {value:?} for {key}")))
}

fn opt_path(value: &str) -> Option<PathBuf> {
    if value.is_empty() {
        None
    } else {
        Some(PathBuf::from(value))
    }
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl TrainConfig {
    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "mode" => self.mode = v.parse()?,
            "setting" => self.setting = v.parse()?,
            "alpha" => self.alpha = parse(key, v)?,
            "eta" => self.eta = parse(key, v)?,
            "tau" => self.tau = parse(key, v)?,
            "gamma" => self.gamma = parse(key, v)?,
            "lr_policy" => self.lr_policy = parse(key, v)?,
            "lr_critic" => self.lr_critic = parse(key, v)?,
            "rho_polyak" => self.rho_polyak = parse(key, v)?,
            "batch" => self.batch = parse(key, v)?,
            "loss_mode" => self.loss_mode = v.parse()?,
            "m" => self.m = parse(key, v)?,
            "eps" => self.eps = parse(key, v)?,
            "k_max" => self.k_max = parse(key, v)?,
            "rho_karras" => self.rho_karras = parse(key, v)?,
            "sigma_data" => self.sigma_data = parse(key, v)?,
            "hidden" => self.hidden = parse(key, v)?,
            "warmup" => self.warmup = parse(key, v)?,
            "total_iters" => self.total_iters = parse(key, v)?,
            "eval_every" => self.eval_every = parse(key, v)?,
            "eval_episodes" => self.eval_episodes = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "dataset_path" => self.dataset_path = opt_path(v),
            "env_name" => self.env_name = v.to_string(),
            "capacity" => self.capacity = parse(key, v)?,
            "metrics_path" => self.metrics_path = opt_path(v),
            "checkpoint_path" => self.checkpoint_path = opt_path(v),
            "log_wallclock" => self.log_wallclock = parse(key, v)?,
            "exec" => {
                self.exec = match v {
                    "parallel" => ExecMode::Parallel,
                    "sequential" => ExecMode::Sequential,
                    _ => return Err(Error::config(format!("exec must be parallel or sequential, got {v:?}"))),
                }
            }
            other => return Err(Error::config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` (or `key = value`) text.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::config(format!("override {kv:?} is not key=value")))?;
        self.set(k, v)
    }

    /// Parses config text: one `key = value` per line, `#` starts a comment.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            cfg.apply_override(line)
                .map_err(|e| Error::config(format!("line {}: {}", n + 1, strip_prefix(&e))))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse_str(&text).map_err(|e| Error::config(format!("{}: {}", path.display(), strip_prefix(&e))))
    }

    /// All fields as `(key, value)` in a fixed order; `parse_str` of the
    /// joined pairs reproduces the config exactly.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let exec = match self.exec {
            ExecMode::Parallel => "parallel",
            ExecMode::Sequential => "sequential",
        };
        vec![
            ("mode", self.mode.to_string()),
            ("setting", self.setting.to_string()),
            ("alpha", self.alpha.to_string()),
            ("eta", self.eta.to_string()),
            ("tau", self.tau.to_string()),
            ("gamma", self.gamma.to_string()),
            ("lr_policy", self.lr_policy.to_string()),
            ("lr_critic", self.lr_critic.to_string()),
            ("rho_polyak", self.rho_polyak.to_string()),
            ("batch", self.batch.to_string()),
            ("loss_mode", self.loss_mode.to_string()),
            ("m", self.m.to_string()),
            ("eps", self.eps.to_string()),
            ("k_max", self.k_max.to_string()),
            ("rho_karras", self.rho_karras.to_string()),
            ("sigma_data", self.sigma_data.to_string()),
            ("hidden", self.hidden.to_string()),
            ("warmup", self.warmup.to_string()),
            ("total_iters", self.total_iters.to_string()),
            ("eval_every", self.eval_every.to_string()),
            ("eval_episodes", self.eval_episodes.to_string()),
            ("seed", self.seed.to_string()),
            ("dataset_path", show_path(&self.dataset_path)),
            ("env_name", self.env_name.clone()),
            ("capacity", self.capacity.to_string()),
            ("metrics_path", show_path(&self.metrics_path)),
            ("checkpoint_path", show_path(&self.checkpoint_path)),
            ("log_wallclock", self.log_wallclock.to_string()),
            ("exec", exec.to_string()),
        ]
    }

    pub fn to_config_string(&self) -> String {
        self.pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn schedule(&self) -> Result<DiffusionSchedule> {
        DiffusionSchedule::new(self.m, self.eps, self.k_max, self.rho_karras, self.sigma_data)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::config(msg));
        if self.mode == Algo::Cpiql && self.setting == Setting::Online {
            return bad("cpiql is defined for the offline setting only".into());
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be >= 0, got {}", self.eta));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau must be in (0, 1), got {}", self.tau));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.rho_polyak) {
            return bad(format!("rho_polyak must be in [0, 1], got {}", self.rho_polyak));
        }
        for (name, lr) in [("lr_policy", self.lr_policy), ("lr_critic", self.lr_critic)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be positive, got {lr}"));
            }
        }
        for (name, n) in [
            ("batch", self.batch),
            ("hidden", self.hidden),
            ("eval_episodes", self.eval_episodes),
            ("capacity", self.capacity),
        ] {
            if n == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        EnvKind::from_name(&self.env_name)?;
        self.schedule()?;
        Ok(())
    }
}

/// Drops the variant prefix from a config error so nested messages read once.
fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}
