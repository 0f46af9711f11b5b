//! One flat key=value namespace covering every tunable in the pipeline.
//!
//! Values resolve in four layers, each overriding the one before it:
//! built-in defaults, the scenario file, `--set key=value` pairs, then
//! dedicated flags. Environment keys (path geometry, cost weights, limits)
//! are forwarded to the library's scenario parser; everything else lives
//! here. The fully resolved table is stamped into every artifact header so
//! a run can be reproduced from any of its output files.

use std::path::Path;

use dm_mppi::env::{apply_env_override, validate_env};
use dm_mppi::{
    CollectionMode, EnvConfig, Error, FitConfig, Mode, MppiConfig, OfflineConfig, OnlineConfig,
    Result, TrainConfig,
};

#[derive(Debug, Clone)]
pub struct Settings {
    pub env: EnvConfig,

    pub k: usize,
    pub lambda: f64,
    pub sigma_delta: f64,
    pub sigma_a: f64,
    pub rho: f64,
    pub steps: usize,

    pub m: usize,
    pub alpha: f64,
    pub mu: f64,
    pub cd_tolerance: f64,
    pub cd_max_sweeps: usize,

    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub val_fraction: f64,
    pub train_seed: u64,

    pub n: usize,
    pub collection: CollectionMode,
    pub master_seed: u64,
    pub calib_steps: usize,
    pub calib_k: usize,
    pub calib_seed: u64,
    pub calib_quantile: f64,

    /// Pruning threshold; `None` means "use the one stored in the model".
    pub tau: Option<f64>,
    pub r_target: f64,
    pub eta: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub keep_floor: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings::standard()
    }
}

impl Settings {
    pub fn standard() -> Self {
        let off = OfflineConfig::standard(0);
        let online = OnlineConfig::standard(Mode::Standard, 0.0);
        Settings {
            env: EnvConfig::standard(),
            k: off.mppi.k,
            lambda: off.mppi.lambda,
            sigma_delta: off.mppi.sigma[0],
            sigma_a: off.mppi.sigma[1],
            rho: off.mppi.rho,
            steps: 400,
            m: off.fit.m,
            alpha: off.fit.alpha,
            mu: off.fit.mu,
            cd_tolerance: off.fit.cd_tolerance,
            cd_max_sweeps: off.fit.cd_max_sweeps,
            epochs: off.train.epochs,
            lr: off.train.lr,
            beta1: off.train.beta1,
            beta2: off.train.beta2,
            adam_eps: off.train.adam_eps,
            batch_size: off.train.batch_size,
            val_fraction: off.train.val_fraction,
            train_seed: off.train.seed,
            n: off.instances,
            collection: off.mode,
            master_seed: off.master_seed,
            calib_steps: off.calib_steps,
            calib_k: off.calib_k,
            calib_seed: off.calib_seed,
            calib_quantile: off.calib_quantile,
            tau: None,
            r_target: online.r_target,
            eta: online.eta,
            rho_min: online.rho_min,
            rho_max: online.rho_max,
            keep_floor: online.keep_floor_frac,
        }
    }

    /// Apply one override. Keys not known here are tried as environment
    /// keys, so the error for a genuinely unknown key comes back with the
    /// full list of candidates rejected.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "k" => self.k = parse_usize(key, value)?,
            "lambda" => self.lambda = parse_f64(key, value)?,
            "sigma_delta" => self.sigma_delta = parse_f64(key, value)?,
            "sigma_a" => self.sigma_a = parse_f64(key, value)?,
            "rho" => self.rho = parse_f64(key, value)?,
            "steps" => self.steps = parse_usize(key, value)?,
            "m" => self.m = parse_usize(key, value)?,
            "alpha" => self.alpha = parse_f64(key, value)?,
            "mu" => self.mu = parse_f64(key, value)?,
            "cd_tolerance" => self.cd_tolerance = parse_f64(key, value)?,
            "cd_max_sweeps" => self.cd_max_sweeps = parse_usize(key, value)?,
            "epochs" => self.epochs = parse_usize(key, value)?,
            "lr" => self.lr = parse_f64(key, value)?,
            "beta1" => self.beta1 = parse_f64(key, value)?,
            "beta2" => self.beta2 = parse_f64(key, value)?,
            "adam_eps" => self.adam_eps = parse_f64(key, value)?,
            "batch_size" => self.batch_size = parse_usize(key, value)?,
            "val_fraction" => self.val_fraction = parse_f64(key, value)?,
            "train_seed" => self.train_seed = parse_u64(key, value)?,
            "n" => self.n = parse_usize(key, value)?,
            "collection" => self.collection = CollectionMode::parse(value)?,
            "master_seed" => self.master_seed = parse_u64(key, value)?,
            "calib_steps" => self.calib_steps = parse_usize(key, value)?,
            "calib_k" => self.calib_k = parse_usize(key, value)?,
            "calib_seed" => self.calib_seed = parse_u64(key, value)?,
            "calib_quantile" => self.calib_quantile = parse_f64(key, value)?,
            "tau" => {
                self.tau = if value == "auto" {
                    None
                } else {
                    Some(parse_f64(key, value)?)
                }
            }
            "r_target" => self.r_target = parse_f64(key, value)?,
            "eta" => self.eta = parse_f64(key, value)?,
            "rho_min" => self.rho_min = parse_f64(key, value)?,
            "rho_max" => self.rho_max = parse_f64(key, value)?,
            "keep_floor" => self.keep_floor = parse_f64(key, value)?,
            _ => return apply_env_override(&mut self.env, key, value),
        }
        Ok(())
    }

    pub fn apply_lines(&mut self, source: &str, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "{source} line {}: expected key=value, got {raw:?}",
                    lineno + 1
                ))
            })?;
            self.apply(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Resolve the full stack: defaults, scenario file, `--set` pairs,
    /// dedicated flags. The path is rebuilt and everything validated once
    /// at the end so overrides may arrive in any order.
    pub fn resolve(
        scenario: Option<&Path>,
        sets: &[String],
        flags: &[(&'static str, String)],
    ) -> Result<Settings> {
        let mut s = Settings::standard();
        if let Some(path) = scenario {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("cannot read scenario {}: {e}", path.display()))
            })?;
            s.apply_lines(&path.display().to_string(), &text)?;
        }
        for pair in sets {
            let (key, value) = pair.split_once('=').ok_or_else(|| {
                Error::Config(format!("--set {pair:?}: expected key=value"))
            })?;
            s.apply(key.trim(), value.trim())?;
        }
        for (key, value) in flags {
            s.apply(key, value)?;
        }
        s.finish()?;
        Ok(s)
    }

    fn finish(&mut self) -> Result<()> {
        self.env.rebuild_path();
        validate_env(&self.env)?;
        if self.k == 0 {
            return Err(Error::Config("key k: need at least one rollout".into()));
        }
        if self.m == 0 {
            return Err(Error::Config("key m: need at least one subset".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config("key alpha: must be in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.keep_floor) {
            return Err(Error::Config("key keep_floor: must be in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.calib_quantile) {
            return Err(Error::Config("key calib_quantile: must be in [0, 1]".into()));
        }
        Ok(())
    }

    /// Every key with its resolved value, in a fixed order. Float values
    /// use the shortest representation that parses back exactly, so the
    /// emitted header is itself a valid scenario file.
    pub fn resolved_pairs(&self) -> Vec<(String, String)> {
        let e = &self.env;
        let obstacles = e
            .obstacles
            .iter()
            .map(|o| format!("{},{},{}", o.cx, o.cy, o.radius))
            .collect::<Vec<_>>()
            .join(";");
        let pairs: Vec<(&str, String)> = vec![
            ("wheelbase", e.wheelbase.to_string()),
            ("dt", e.dt.to_string()),
            ("horizon", e.horizon.to_string()),
            ("path_radius", e.path_radius.to_string()),
            ("path_straight", e.path_straight.to_string()),
            ("path_ds", e.path_ds.to_string()),
            ("obstacles", obstacles),
            ("r_ctrl", format!("{},{}", e.r_ctrl[0][0], e.r_ctrl[1][1])),
            ("w_pos", e.w_pos.to_string()),
            ("w_head", e.w_head.to_string()),
            ("w_vel", e.w_vel.to_string()),
            ("terminal_scale", e.terminal_scale.to_string()),
            ("v_target", e.v_target.to_string()),
            ("delta_max", e.delta_max.to_string()),
            ("a_max", e.a_max.to_string()),
            ("k", self.k.to_string()),
            ("lambda", self.lambda.to_string()),
            ("sigma_delta", self.sigma_delta.to_string()),
            ("sigma_a", self.sigma_a.to_string()),
            ("rho", self.rho.to_string()),
            ("steps", self.steps.to_string()),
            ("m", self.m.to_string()),
            ("alpha", self.alpha.to_string()),
            ("mu", self.mu.to_string()),
            ("cd_tolerance", self.cd_tolerance.to_string()),
            ("cd_max_sweeps", self.cd_max_sweeps.to_string()),
            ("epochs", self.epochs.to_string()),
            ("lr", self.lr.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("adam_eps", self.adam_eps.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("val_fraction", self.val_fraction.to_string()),
            ("train_seed", self.train_seed.to_string()),
            ("n", self.n.to_string()),
            ("collection", self.collection.label().to_string()),
            ("master_seed", self.master_seed.to_string()),
            ("calib_steps", self.calib_steps.to_string()),
            ("calib_k", self.calib_k.to_string()),
            ("calib_seed", self.calib_seed.to_string()),
            ("calib_quantile", self.calib_quantile.to_string()),
            (
                "tau",
                self.tau.map_or("auto".to_string(), |t| t.to_string()),
            ),
            ("r_target", self.r_target.to_string()),
            ("eta", self.eta.to_string()),
            ("rho_min", self.rho_min.to_string()),
            ("rho_max", self.rho_max.to_string()),
            ("keep_floor", self.keep_floor.to_string()),
        ];
        pairs
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }

    pub fn mppi_config(&self, k: usize, seed: u64) -> MppiConfig {
        MppiConfig {
            k,
            lambda: self.lambda,
            sigma: [self.sigma_delta, self.sigma_a],
            rho: self.rho,
            seed,
        }
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            m: self.m,
            alpha: self.alpha,
            mu: self.mu,
            cd_tolerance: self.cd_tolerance,
            cd_max_sweeps: self.cd_max_sweeps,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            adam_eps: self.adam_eps,
            batch_size: self.batch_size,
            val_fraction: self.val_fraction,
            seed: self.train_seed,
        }
    }

    pub fn offline_config(&self) -> OfflineConfig {
        OfflineConfig {
            instances: self.n,
            mppi: self.mppi_config(self.k, self.master_seed),
            fit: self.fit_config(),
            train: self.train_config(),
            mode: self.collection,
            master_seed: self.master_seed,
            calib_steps: self.calib_steps,
            calib_k: self.calib_k,
            calib_seed: self.calib_seed,
            calib_quantile: self.calib_quantile,
        }
    }

    /// Online controller knobs; `model_tau` fills in when no explicit
    /// threshold override was given.
    pub fn online_config(&self, mode: Mode, model_tau: f64) -> OnlineConfig {
        OnlineConfig {
            mode,
            tau: self.tau.unwrap_or(model_tau),
            r_target: self.r_target,
            eta: self.eta,
            rho_min: self.rho_min,
            rho_max: self.rho_max,
            keep_floor_frac: self.keep_floor,
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("key {key}: cannot parse {value:?} as a number")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("key {key}: cannot parse {value:?} as a count")))
}

fn parse_u64(key: &str, value: &str) -> Result<u64> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("key {key}: cannot parse {value:?} as a seed")))
}

/// Parse a comma-separated list of integers ("0,1,2").
pub fn parse_int_list<T: std::str::FromStr>(what: &str, text: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        out.push(part.parse().map_err(|_| {
            Error::Config(format!("{what}: cannot parse {part:?} as an integer"))
        })?);
    }
    if out.is_empty() {
        return Err(Error::Config(format!("{what}: list is empty")));
    }
    Ok(out)
}
