//! Plain-text key/value run configuration.
//!
//! A config file is `key=value` lines; `#` starts a comment. Parsing is
//! strict (unknown keys are errors) and serialization is canonical: fixed
//! key order, shortest-roundtrip float formatting. Parsing a serialized
//! config reproduces both the struct and the normalized text exactly.

use std::collections::BTreeMap;

use crate::channel::{SiteSpec, SystemConfig};
use crate::error::{Error, Result};
use crate::model::PrecoderMode;
use crate::training::TrainHyper;

/// Which trainer a `train` run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainerKind {
    Mldg,
    DeepAll,
}

impl TrainerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrainerKind::Mldg => "mldg",
            TrainerKind::DeepAll => "deepall",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mldg" => Ok(TrainerKind::Mldg),
            "deepall" => Ok(TrainerKind::DeepAll),
            other => Err(Error::Parse(format!("unknown trainer '{other}'"))),
        }
    }
}

/// Full experiment configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub n_tx: usize,
    pub n_users: usize,
    pub n_rf: usize,
    pub array_rows: usize,
    pub array_cols: usize,
    pub carrier_spacing: f64,
    pub noise_power: f64,
    pub mode: PrecoderMode,
    pub trainer: TrainerKind,
    pub seed: u64,
    /// Target average SNR grid, dB; one transmit power per site per value.
    pub snr_grid_db: Vec<f64>,
    /// Estimation-error levels used for backbone training domains.
    pub beta_backbone: Vec<f64>,
    /// Estimation-error level at the deployment site.
    pub beta_finetune: f64,
    pub samples_per_domain: usize,
    pub eval_samples: usize,
    pub few_shot_samples: usize,
    pub finetune_epochs: usize,
    pub finetune_lr: f64,
    pub freeze_pi: bool,
    pub train_sites: Vec<SiteSpec>,
    pub deploy_sites: Vec<SiteSpec>,
    pub hyper: TrainHyper,
    pub energy_wmmse_iters: usize,
    pub energy_pe_iters: usize,
    pub energy_maml_c_out: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_tx: 8,
            n_users: 2,
            n_rf: 4,
            array_rows: 2,
            array_cols: 4,
            carrier_spacing: 0.5,
            noise_power: 1.0,
            mode: PrecoderMode::Fdp,
            trainer: TrainerKind::Mldg,
            seed: 1,
            snr_grid_db: vec![10.0, 20.0],
            beta_backbone: vec![0.0],
            beta_finetune: 0.0,
            samples_per_domain: 200,
            eval_samples: 200,
            few_shot_samples: 40,
            finetune_epochs: 20,
            finetune_lr: 1e-4,
            freeze_pi: false,
            train_sites: vec![SiteSpec::new("alpha", 101), SiteSpec::new("bravo", 202)],
            deploy_sites: vec![SiteSpec::new("echo", 909)],
            hyper: TrainHyper::desk_scale(),
            energy_wmmse_iters: 15,
            energy_pe_iters: 100,
            energy_maml_c_out: 8,
        }
    }
}

impl RunConfig {
    pub fn system_config(&self) -> SystemConfig {
        SystemConfig {
            n_tx: self.n_tx,
            n_users: self.n_users,
            n_rf: self.n_rf,
            noise_power: self.noise_power,
            array_rows: self.array_rows,
            array_cols: self.array_cols,
            carrier_spacing: self.carrier_spacing,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.system_config().validate()?;
        self.hyper.validate()?;
        if self.train_sites.is_empty() {
            return Err(Error::InvalidArg("at least one train site required".into()));
        }
        if self.snr_grid_db.is_empty() {
            return Err(Error::InvalidArg("snr_grid_db must be nonempty".into()));
        }
        if self.beta_backbone.is_empty() {
            return Err(Error::InvalidArg("beta_backbone must be nonempty".into()));
        }
        for b in self.beta_backbone.iter().chain([&self.beta_finetune]) {
            if !(0.0..=1.0).contains(b) {
                return Err(Error::InvalidArg(format!("beta {b} outside [0, 1]")));
            }
        }
        if self.samples_per_domain == 0 {
            return Err(Error::InvalidArg("samples_per_domain must be >= 1".into()));
        }
        if self.eval_samples == 0 {
            return Err(Error::InvalidArg("eval_samples must be >= 1".into()));
        }
        let mut names: Vec<&str> = self
            .train_sites
            .iter()
            .chain(&self.deploy_sites)
            .map(|s| s.site_id.as_str())
            .collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.train_sites.len() + self.deploy_sites.len() {
            return Err(Error::InvalidArg("duplicate site names".into()));
        }
        for s in self.train_sites.iter().chain(&self.deploy_sites) {
            s.validate()?;
        }
        Ok(())
    }

    /// Canonical key/value serialization.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        kv("n_tx", self.n_tx.to_string());
        kv("n_users", self.n_users.to_string());
        kv("n_rf", self.n_rf.to_string());
        kv("array_rows", self.array_rows.to_string());
        kv("array_cols", self.array_cols.to_string());
        kv("carrier_spacing", self.carrier_spacing.to_string());
        kv("noise_power", self.noise_power.to_string());
        kv("mode", self.mode.as_str().to_string());
        kv("trainer", self.trainer.as_str().to_string());
        kv("seed", self.seed.to_string());
        kv("snr_grid_db", join_floats(&self.snr_grid_db));
        kv("beta_backbone", join_floats(&self.beta_backbone));
        kv("beta_finetune", self.beta_finetune.to_string());
        kv("samples_per_domain", self.samples_per_domain.to_string());
        kv("eval_samples", self.eval_samples.to_string());
        kv("few_shot_samples", self.few_shot_samples.to_string());
        kv("finetune_epochs", self.finetune_epochs.to_string());
        kv("finetune_lr", self.finetune_lr.to_string());
        kv("freeze_pi", self.freeze_pi.to_string());
        kv(
            "train_sites",
            self.train_sites
                .iter()
                .map(|s| s.site_id.clone())
                .collect::<Vec<_>>()
                .join(","),
        );
        kv(
            "deploy_sites",
            self.deploy_sites
                .iter()
                .map(|s| s.site_id.clone())
                .collect::<Vec<_>>()
                .join(","),
        );
        for site in self.train_sites.iter().chain(&self.deploy_sites) {
            let p = format!("site.{}", site.site_id);
            kv(&format!("{p}.seed"), site.seed.to_string());
            kv(
                &format!("{p}.clusters_los"),
                site.n_clusters_los.to_string(),
            );
            kv(
                &format!("{p}.clusters_nlos"),
                site.n_clusters_nlos.to_string(),
            );
            kv(&format!("{p}.angle_spread"), site.angle_spread.to_string());
            kv(&format!("{p}.power_decay"), site.power_decay.to_string());
            kv(&format!("{p}.los_fraction"), site.los_fraction.to_string());
        }
        let h = &self.hyper;
        kv("hyper.alpha_t", h.teacher.alpha.to_string());
        kv("hyper.beta_t", h.teacher.beta.to_string());
        kv("hyper.eps_t", h.teacher.eps.to_string());
        kv("hyper.alpha_f", h.feature.alpha.to_string());
        kv("hyper.beta_f", h.feature.beta.to_string());
        kv("hyper.eps_f", h.feature.eps.to_string());
        kv("hyper.alpha_s", h.student.alpha.to_string());
        kv("hyper.beta_s", h.student.beta.to_string());
        kv("hyper.eps_s", h.student.eps.to_string());
        kv("hyper.warmup_epochs", h.warmup_epochs.to_string());
        kv("hyper.teacher_epochs", h.teacher_epochs.to_string());
        kv("hyper.student_epochs", h.student_epochs.to_string());
        kv("hyper.batch_size", h.batch_size.to_string());
        kv("hyper.lambda0", h.lambda0.to_string());
        kv("hyper.lambda1", h.lambda1.to_string());
        kv("hyper.patience", h.patience.to_string());
        kv("hyper.plateau_tol", h.plateau_tol.to_string());
        kv("hyper.cycle_patience", h.cycle_patience.to_string());
        kv("hyper.max_cycles", h.max_cycles.to_string());
        kv("hyper.val_fraction", h.val_fraction.to_string());
        kv("hyper.finetune_cap", h.finetune_cap.to_string());
        kv("energy.wmmse_iters", self.energy_wmmse_iters.to_string());
        kv("energy.pe_iters", self.energy_pe_iters.to_string());
        kv("energy.maml_c_out", self.energy_maml_c_out.to_string());
        out
    }

    /// Strict parse of the key/value format; unknown keys and malformed
    /// values are errors, missing keys fall back to defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key=value", lineno + 1)))?;
            if map
                .insert(k.trim().to_string(), v.trim().to_string())
                .is_some()
            {
                return Err(Error::Parse(format!("duplicate key '{}'", k.trim())));
            }
        }
        let mut cfg = RunConfig::default();
        let mut take = |key: &str| map.remove(key);

        macro_rules! set {
            ($key:expr, $target:expr, $parse:expr) => {
                if let Some(v) = take($key) {
                    $target =
                        $parse(&v).map_err(|e: Error| Error::Parse(format!("{}: {e}", $key)))?;
                }
            };
        }
        set!("n_tx", cfg.n_tx, parse_usize);
        set!("n_users", cfg.n_users, parse_usize);
        set!("n_rf", cfg.n_rf, parse_usize);
        set!("array_rows", cfg.array_rows, parse_usize);
        set!("array_cols", cfg.array_cols, parse_usize);
        set!("carrier_spacing", cfg.carrier_spacing, parse_f64);
        set!("noise_power", cfg.noise_power, parse_f64);
        set!("mode", cfg.mode, |v: &str| PrecoderMode::parse(v));
        set!("trainer", cfg.trainer, |v: &str| TrainerKind::parse(v));
        set!("seed", cfg.seed, parse_u64);
        set!("snr_grid_db", cfg.snr_grid_db, parse_float_list);
        set!("beta_backbone", cfg.beta_backbone, parse_float_list);
        set!("beta_finetune", cfg.beta_finetune, parse_f64);
        set!("samples_per_domain", cfg.samples_per_domain, parse_usize);
        set!("eval_samples", cfg.eval_samples, parse_usize);
        set!("few_shot_samples", cfg.few_shot_samples, parse_usize);
        set!("finetune_epochs", cfg.finetune_epochs, parse_usize);
        set!("finetune_lr", cfg.finetune_lr, parse_f64);
        set!("freeze_pi", cfg.freeze_pi, parse_bool);

        let train_names = match take("train_sites") {
            Some(v) => split_names(&v),
            None => cfg.train_sites.iter().map(|s| s.site_id.clone()).collect(),
        };
        let deploy_names = match take("deploy_sites") {
            Some(v) => split_names(&v),
            None => cfg.deploy_sites.iter().map(|s| s.site_id.clone()).collect(),
        };
        let mut build_sites = |names: &[String]| -> Result<Vec<SiteSpec>> {
            let mut sites = Vec::with_capacity(names.len());
            for name in names {
                let p = format!("site.{name}");
                let seed = map
                    .remove(&format!("{p}.seed"))
                    .ok_or_else(|| Error::Parse(format!("missing key '{p}.seed'")))?;
                let mut site = SiteSpec::new(name, parse_u64(&seed)?);
                if let Some(v) = map.remove(&format!("{p}.clusters_los")) {
                    site.n_clusters_los = parse_usize(&v)?;
                }
                if let Some(v) = map.remove(&format!("{p}.clusters_nlos")) {
                    site.n_clusters_nlos = parse_usize(&v)?;
                }
                if let Some(v) = map.remove(&format!("{p}.angle_spread")) {
                    site.angle_spread = parse_f64(&v)?;
                }
                if let Some(v) = map.remove(&format!("{p}.power_decay")) {
                    site.power_decay = parse_f64(&v)?;
                }
                if let Some(v) = map.remove(&format!("{p}.los_fraction")) {
                    site.los_fraction = parse_f64(&v)?;
                }
                sites.push(site);
            }
            Ok(sites)
        };
        cfg.train_sites = build_sites(&train_names)?;
        cfg.deploy_sites = build_sites(&deploy_names)?;

        let h = &mut cfg.hyper;
        let mut take2 = |key: &str| map.remove(key);
        macro_rules! seth {
            ($key:expr, $target:expr, $parse:expr) => {
                if let Some(v) = take2($key) {
                    $target =
                        $parse(&v).map_err(|e: Error| Error::Parse(format!("{}: {e}", $key)))?;
                }
            };
        }
        seth!("hyper.alpha_t", h.teacher.alpha, parse_f64);
        seth!("hyper.beta_t", h.teacher.beta, parse_f64);
        seth!("hyper.eps_t", h.teacher.eps, parse_f64);
        seth!("hyper.alpha_f", h.feature.alpha, parse_f64);
        seth!("hyper.beta_f", h.feature.beta, parse_f64);
        seth!("hyper.eps_f", h.feature.eps, parse_f64);
        seth!("hyper.alpha_s", h.student.alpha, parse_f64);
        seth!("hyper.beta_s", h.student.beta, parse_f64);
        seth!("hyper.eps_s", h.student.eps, parse_f64);
        seth!("hyper.warmup_epochs", h.warmup_epochs, parse_usize);
        seth!("hyper.teacher_epochs", h.teacher_epochs, parse_usize);
        seth!("hyper.student_epochs", h.student_epochs, parse_usize);
        seth!("hyper.batch_size", h.batch_size, parse_usize);
        seth!("hyper.lambda0", h.lambda0, parse_f64);
        seth!("hyper.lambda1", h.lambda1, parse_f64);
        seth!("hyper.patience", h.patience, parse_usize);
        seth!("hyper.plateau_tol", h.plateau_tol, parse_f64);
        seth!("hyper.cycle_patience", h.cycle_patience, parse_usize);
        seth!("hyper.max_cycles", h.max_cycles, parse_usize);
        seth!("hyper.val_fraction", h.val_fraction, parse_f64);
        seth!("hyper.finetune_cap", h.finetune_cap, parse_usize);
        seth!("energy.wmmse_iters", cfg.energy_wmmse_iters, parse_usize);
        seth!("energy.pe_iters", cfg.energy_pe_iters, parse_usize);
        seth!("energy.maml_c_out", cfg.energy_maml_c_out, parse_usize);

        if let Some((k, _)) = map.into_iter().next() {
            return Err(Error::Parse(format!("unknown key '{k}'")));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_usize(v: &str) -> Result<usize> {
    v.parse().map_err(|e| Error::Parse(format!("{e}")))
}

fn parse_u64(v: &str) -> Result<u64> {
    v.parse().map_err(|e| Error::Parse(format!("{e}")))
}

fn parse_f64(v: &str) -> Result<f64> {
    let x: f64 = v.parse().map_err(|e| Error::Parse(format!("{e}")))?;
    if !x.is_finite() {
        return Err(Error::Parse(format!("non-finite value '{v}'")));
    }
    Ok(x)
}

fn parse_bool(v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::Parse(format!("expected true/false, got '{other}'"))),
    }
}

fn parse_float_list(v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|p| parse_f64(p.trim()))
        .collect::<Result<Vec<f64>>>()
}

fn join_floats(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn split_names(v: &str) -> Vec<String> {
    v.split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Derives a stream seed from the run seed and a few indices; used for
/// per-domain and per-sample randomness so streams never collide.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut x = base ^ 0x517C_C1B7_2722_0A95;
    for &t in tags {
        x ^= t
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(x << 6)
            .wrapping_add(x >> 2);
        x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x ^= x >> 27;
    }
    x
}
