//! Implementations of the `papp` subcommands: gen-data, train, finetune,
//! eval, energy. The binary in `main.rs` only parses flags and dispatches
//! here; everything below is ordinary library code so tests can drive the
//! same paths. Every command validates its configuration and inputs fully
//! before touching the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use crate::channel::{
    apply_estimation_error, p_tx_for_snr_db, sample_channels, sample_site_eval, ChannelRealization,
    Domain, EstimationErrorSpec, SiteSpec, SystemConfig,
};
use crate::config::{derive_seed, RunConfig, TrainerKind};
use crate::dataio::{
    load_checkpoint, read_dataset, save_checkpoint, write_dataset, write_train_log, CheckpointMeta,
};
use crate::energy::{energy_report, EnergyReportConfig, EnergyUnit};
use crate::error::{Error, Result};
use crate::model::{infer_student, BackboneParams, FeatureConfig, PrecoderMode};
use crate::numerics::CMatrix;
use crate::precoding::{evaluate_rates, pe_altmin, wmmse_default, zf_precoder};
use crate::training::{
    augmented_finetune_set, prepare_samples, train_backbone, train_deepall, DomainDataset,
    TrainOutcome,
};

/// One generated training-domain file.
struct DomainFile {
    site_index: usize,
    domain: Domain,
    file: String,
    seed: u64,
}

/// Deterministic layout of a generated dataset directory.
struct Layout {
    sys: SystemConfig,
    train_sites: Vec<SiteSpec>,
    deploy_sites: Vec<SiteSpec>,
    /// Per deploy site, per SNR grid entry: transmit power.
    deploy_powers: Vec<Vec<f64>>,
    domain_files: Vec<DomainFile>,
}

fn build_layout(cfg: &RunConfig) -> Result<Layout> {
    cfg.validate()?;
    let sys = cfg.system_config();
    let mut train_sites = cfg.train_sites.clone();
    let mut deploy_sites = cfg.deploy_sites.clone();
    for s in train_sites.iter_mut().chain(deploy_sites.iter_mut()) {
        s.calibrate(&sys)?;
    }
    let powers_of = |sites: &[SiteSpec]| -> Vec<Vec<f64>> {
        sites
            .iter()
            .map(|s| {
                cfg.snr_grid_db
                    .iter()
                    .map(|&db| p_tx_for_snr_db(&sys, db, s.sigma_h_sq.expect("calibrated")))
                    .collect()
            })
            .collect()
    };
    let train_powers = powers_of(&train_sites);
    let deploy_powers = powers_of(&deploy_sites);
    let mut domain_files = Vec::new();
    for (si, site) in train_sites.iter().enumerate() {
        for (pi, &p_tx) in train_powers[si].iter().enumerate() {
            for (bi, &beta) in cfg.beta_backbone.iter().enumerate() {
                for los in [true, false] {
                    let domain = Domain {
                        site_id: site.site_id.clone(),
                        p_tx,
                        los,
                        beta,
                    };
                    let file = format!(
                        "train_{}_p{}_{}_b{}.chan",
                        site.site_id,
                        pi,
                        if los { "los" } else { "nlos" },
                        bi
                    );
                    let seed =
                        derive_seed(cfg.seed, &[1, si as u64, pi as u64, bi as u64, los as u64]);
                    domain_files.push(DomainFile {
                        site_index: si,
                        domain,
                        file,
                        seed,
                    });
                }
            }
        }
    }
    Ok(Layout {
        sys,
        train_sites,
        deploy_sites,
        deploy_powers,
        domain_files,
    })
}

fn deploy_file_name(site: &SiteSpec, power_index: usize) -> String {
    format!("deploy_{}_p{}.chan", site.site_id, power_index)
}

/// Generates all per-domain dataset files plus deployment-site evaluation
/// files and a manifest. Rerunning with the same config reproduces every
/// byte.
pub fn cmd_gen_data(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let layout = build_layout(cfg)?;
    fs::create_dir_all(out_dir)?;
    let mut manifest = String::from("format=papp-dataset-manifest-v1\n");
    for line in cfg.to_text().lines() {
        manifest.push_str(&format!("config.{line}\n"));
    }
    for site in layout.train_sites.iter().chain(&layout.deploy_sites) {
        manifest.push_str(&format!(
            "site_sigma.{}={}\n",
            site.site_id,
            site.sigma_h_sq.expect("calibrated")
        ));
    }
    for df in &layout.domain_files {
        let site = &layout.train_sites[df.site_index];
        let samples = sample_channels(
            &layout.sys,
            site,
            &df.domain,
            cfg.samples_per_domain,
            df.seed,
        )?;
        write_dataset(&out_dir.join(&df.file), &samples)?;
        manifest.push_str(&format!(
            "domain file={} site={} p_tx={} los={} beta={} count={} seed={}\n",
            df.file,
            df.domain.site_id,
            df.domain.p_tx,
            df.domain.los as u8,
            df.domain.beta,
            cfg.samples_per_domain,
            df.seed
        ));
    }
    for (si, site) in layout.deploy_sites.iter().enumerate() {
        for (pi, &p_tx) in layout.deploy_powers[si].iter().enumerate() {
            let seed = derive_seed(cfg.seed, &[2, si as u64, pi as u64]);
            let samples = sample_site_eval(
                &layout.sys,
                site,
                p_tx,
                cfg.beta_finetune,
                cfg.eval_samples,
                seed,
            )?;
            let file = deploy_file_name(site, pi);
            write_dataset(&out_dir.join(&file), &samples)?;
            manifest.push_str(&format!(
                "deploy file={} site={} p_tx={} beta={} count={} seed={}\n",
                file, site.site_id, p_tx, cfg.beta_finetune, cfg.eval_samples, seed
            ));
        }
    }
    fs::write(out_dir.join("manifest.txt"), manifest)?;
    Ok(())
}

/// Loads one training domain file and turns it into training samples:
/// estimation noise at the domain's beta level is applied at load time with
/// seeds derived from the run seed, the clean channel is kept for losses.
fn load_domain_dataset(
    cfg: &RunConfig,
    layout: &Layout,
    dir: &Path,
    df: &DomainFile,
    dom_index: usize,
) -> Result<DomainDataset> {
    let clean = read_dataset(&dir.join(&df.file))?;
    let site = &layout.train_sites[df.site_index];
    let pairs = noisy_pairs(cfg, site, &clean, df.domain.beta, &[3, dom_index as u64])?;
    let samples = prepare_samples(&layout.sys, &pairs)?;
    Ok(DomainDataset {
        domain: df.domain.clone(),
        samples,
    })
}

fn noisy_pairs(
    cfg: &RunConfig,
    site: &SiteSpec,
    clean: &[ChannelRealization],
    beta: f64,
    tag: &[u64],
) -> Result<Vec<(ChannelRealization, ChannelRealization)>> {
    let mut pairs = Vec::with_capacity(clean.len());
    if beta == 0.0 {
        for c in clean {
            pairs.push((c.clone(), c.clone()));
        }
        return Ok(pairs);
    }
    let spec = EstimationErrorSpec::for_site(beta, site)?;
    for (i, c) in clean.iter().enumerate() {
        let mut tags = tag.to_vec();
        tags.push(i as u64);
        let noisy = apply_estimation_error(c, &spec, derive_seed(cfg.seed, &tags))?;
        pairs.push((c.clone(), noisy));
    }
    Ok(pairs)
}

fn checkpoint_meta(sys: &SystemConfig, mode: PrecoderMode) -> CheckpointMeta {
    CheckpointMeta {
        mode,
        n_tx: sys.n_tx as u32,
        n_users: sys.n_users as u32,
        n_rf: sys.n_rf as u32,
    }
}

/// Trains the backbone (or the DeepAll baseline) from a generated dataset
/// directory; writes a checkpoint and the training log.
pub fn cmd_train(cfg: &RunConfig, data_dir: &Path, out_dir: &Path) -> Result<()> {
    let layout = build_layout(cfg)?;
    for df in &layout.domain_files {
        let p = data_dir.join(&df.file);
        if !p.is_file() {
            return Err(Error::Io(format!("missing dataset file {}", p.display())));
        }
    }
    let fc = FeatureConfig::for_system(&layout.sys);
    eprintln!(
        "loading {} domains x {} samples (WMMSE references are cached per sample)...",
        layout.domain_files.len(),
        cfg.samples_per_domain
    );
    let mut data = Vec::with_capacity(layout.domain_files.len());
    for (i, df) in layout.domain_files.iter().enumerate() {
        data.push(load_domain_dataset(cfg, &layout, data_dir, df, i)?);
        eprintln!("  domain {}/{} ready", i + 1, layout.domain_files.len());
    }
    let outcome: TrainOutcome = match cfg.trainer {
        TrainerKind::Mldg => {
            train_backbone(&data, &layout.sys, &fc, &cfg.hyper, cfg.mode, cfg.seed)?
        }
        TrainerKind::DeepAll => {
            train_deepall(&data, &layout.sys, &fc, &cfg.hyper, cfg.mode, cfg.seed)?
        }
    };
    fs::create_dir_all(out_dir)?;
    let stem = match cfg.trainer {
        TrainerKind::Mldg => "backbone",
        TrainerKind::DeepAll => "deepall",
    };
    let ckpt = out_dir.join(format!("{stem}_{}.ckpt", cfg.mode.as_str()));
    save_checkpoint(
        &ckpt,
        &checkpoint_meta(&layout.sys, cfg.mode),
        &outcome.params,
    )?;
    write_train_log(
        &out_dir.join(format!("train_log_{stem}_{}.txt", cfg.mode.as_str())),
        &outcome.log,
    )?;
    eprintln!("wrote {}", ckpt.display());
    Ok(())
}

/// Loads deployment-site samples (all powers, round-robin) with the
/// fine-tuning noise level applied.
fn load_deploy_noisy(
    cfg: &RunConfig,
    layout: &Layout,
    dir: &Path,
    site_index: usize,
) -> Result<Vec<ChannelRealization>> {
    let site = &layout.deploy_sites[site_index];
    let mut per_power: Vec<Vec<ChannelRealization>> = Vec::new();
    for pi in 0..layout.deploy_powers[site_index].len() {
        let path = dir.join(deploy_file_name(site, pi));
        let clean = read_dataset(&path)?;
        let pairs = noisy_pairs(
            cfg,
            site,
            &clean,
            cfg.beta_finetune,
            &[4, site_index as u64, pi as u64],
        )?;
        per_power.push(pairs.into_iter().map(|(_, noisy)| noisy).collect());
    }
    let mut out = Vec::new();
    let longest = per_power.iter().map(Vec::len).max().unwrap_or(0);
    for i in 0..longest {
        for pp in &per_power {
            if let Some(c) = pp.get(i) {
                out.push(c.clone());
            }
        }
    }
    Ok(out)
}

/// Self-supervised adaptation on local deployment-site data. Takes the
/// few-shot budget from the config, augments it with user-row combinations
/// (capped), and fine-tunes the checkpoint. The output checkpoint is named
/// `<tag>_<mode>.ckpt`.
pub fn cmd_finetune(
    cfg: &RunConfig,
    data_dir: &Path,
    checkpoint: &Path,
    out_dir: &Path,
    tag: &str,
) -> Result<()> {
    let layout = build_layout(cfg)?;
    if layout.deploy_sites.is_empty() {
        return Err(Error::InvalidArg("config lists no deploy sites".into()));
    }
    let (meta, mut params) = load_checkpoint(checkpoint)?;
    let sys = &layout.sys;
    if meta.n_tx as usize != sys.n_tx
        || meta.n_users as usize != sys.n_users
        || meta.n_rf as usize != sys.n_rf
        || meta.mode != cfg.mode
    {
        return Err(Error::InvalidArg(
            "checkpoint dimensions/mode do not match the config".into(),
        ));
    }
    let fc = FeatureConfig::for_system(sys);
    let local = load_deploy_noisy(cfg, &layout, data_dir, 0)?;
    let few: Vec<ChannelRealization> = local.into_iter().take(cfg.few_shot_samples).collect();
    if few.is_empty() {
        return Err(Error::InvalidArg("no local samples available".into()));
    }
    let augmented =
        augmented_finetune_set(&few, cfg.hyper.finetune_cap, derive_seed(cfg.seed, &[5, 1]))?;
    eprintln!(
        "fine-tuning on {} local samples ({} after augmentation)",
        few.len(),
        augmented.len()
    );
    let losses = crate::training::finetune_site(
        &mut params,
        sys,
        &fc,
        &augmented,
        cfg.finetune_epochs,
        cfg.finetune_lr,
        cfg.freeze_pi,
        cfg.hyper.batch_size,
        derive_seed(cfg.seed, &[5, 2]),
    )?;
    if let (Some(first), Some(last)) = (losses.first(), losses.last()) {
        eprintln!("site loss: {first:.4} -> {last:.4}");
    }
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join(format!("{tag}_{}.ckpt", cfg.mode.as_str()));
    save_checkpoint(&path, &checkpoint_meta(sys, cfg.mode), &params)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

struct EvalModel {
    label: &'static str,
    params: BackboneParams,
}

/// One evaluation table row.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub site: String,
    pub snr_db: f64,
    pub method: String,
    pub mean_rate: f64,
}

fn eval_models(
    models_dir: &Path,
    mode: PrecoderMode,
    sys: &SystemConfig,
) -> Result<Vec<EvalModel>> {
    let candidates = [
        ("backbone", "PaPP zero-shot"),
        ("fewshot", "PaPP few-shot"),
        ("finetuned", "PaPP fine-tuned"),
        ("deepall", "DeepAll"),
    ];
    let mut out = Vec::new();
    for (stem, label) in candidates {
        let path = models_dir.join(format!("{stem}_{}.ckpt", mode.as_str()));
        if !path.is_file() {
            continue;
        }
        let (meta, params) = load_checkpoint(&path)?;
        if meta.mode != mode
            || meta.n_tx as usize != sys.n_tx
            || meta.n_users as usize != sys.n_users
            || meta.n_rf as usize != sys.n_rf
        {
            return Err(Error::InvalidArg(format!(
                "checkpoint {} does not match the config",
                path.display()
            )));
        }
        out.push(EvalModel { label, params });
    }
    Ok(out)
}

/// Evaluates classical baselines and any available model checkpoints on the
/// deployment sites, per SNR grid point. Precoders see the (possibly noisy)
/// CSI; rates are computed on the true channel.
pub fn cmd_eval(
    cfg: &RunConfig,
    data_dir: &Path,
    models_dir: &Path,
    out_dir: &Path,
) -> Result<Vec<EvalRow>> {
    let layout = build_layout(cfg)?;
    if layout.deploy_sites.is_empty() {
        return Err(Error::InvalidArg("config lists no deploy sites".into()));
    }
    let sys = &layout.sys;
    let fc = FeatureConfig::for_system(sys);
    let models = eval_models(models_dir, cfg.mode, sys)?;
    let mut rows: Vec<EvalRow> = Vec::new();
    for (si, site) in layout.deploy_sites.iter().enumerate() {
        for (pi, _p_tx) in layout.deploy_powers[si].iter().enumerate() {
            let snr_db = cfg.snr_grid_db[pi];
            let clean = read_dataset(&data_dir.join(deploy_file_name(site, pi)))?;
            let pairs = noisy_pairs(
                cfg,
                site,
                &clean,
                cfg.beta_finetune,
                &[6, si as u64, pi as u64],
            )?;
            let sigma = sys.sigma();
            // Normalized representations: input (estimated) and true.
            let norm: Vec<(CMatrix, CMatrix)> = pairs
                .iter()
                .map(|(c, n)| {
                    (
                        crate::channel::normalize_input(&c.h, c.domain.p_tx, sigma),
                        crate::channel::normalize_input(&n.h, n.domain.p_tx, sigma),
                    )
                })
                .collect();
            let mean = |rates: Vec<f64>| rates.iter().sum::<f64>() / rates.len() as f64;

            let mut zf_rates = Vec::with_capacity(norm.len());
            let mut wm_rates = Vec::with_capacity(norm.len());
            let mut pe_zf_rates = Vec::with_capacity(norm.len());
            let mut pe_wm_rates = Vec::with_capacity(norm.len());
            for (i, (h_clean, h_input)) in norm.iter().enumerate() {
                let zf = zf_precoder(h_input, 1.0)?;
                zf_rates.push(evaluate_rates(h_clean, &zf.w, 1.0)?.1);
                let (wm, _) = wmmse_default(h_input, 1.0, 1.0)?;
                wm_rates.push(evaluate_rates(h_clean, &wm.w, 1.0)?.1);
                if cfg.mode == PrecoderMode::Hbf {
                    let seed = derive_seed(cfg.seed, &[7, si as u64, pi as u64, i as u64]);
                    let pe_z = pe_altmin(&zf.w, sys.n_rf, cfg.energy_pe_iters, 1.0, seed)?;
                    pe_zf_rates.push(evaluate_rates(h_clean, &pe_z.precoder.compose(), 1.0)?.1);
                    let pe_w = pe_altmin(&wm.w, sys.n_rf, cfg.energy_pe_iters, 1.0, seed ^ 1)?;
                    pe_wm_rates.push(evaluate_rates(h_clean, &pe_w.precoder.compose(), 1.0)?.1);
                }
            }
            rows.push(EvalRow {
                site: site.site_id.clone(),
                snr_db,
                method: "ZF".into(),
                mean_rate: mean(zf_rates),
            });
            rows.push(EvalRow {
                site: site.site_id.clone(),
                snr_db,
                method: "WMMSE".into(),
                mean_rate: mean(wm_rates),
            });
            if cfg.mode == PrecoderMode::Hbf {
                rows.push(EvalRow {
                    site: site.site_id.clone(),
                    snr_db,
                    method: "PE-AltMin(ZF)".into(),
                    mean_rate: mean(pe_zf_rates),
                });
                rows.push(EvalRow {
                    site: site.site_id.clone(),
                    snr_db,
                    method: "PE-AltMin(WMMSE)".into(),
                    mean_rate: mean(pe_wm_rates),
                });
            }
            for model in &models {
                let mut rates = Vec::with_capacity(norm.len());
                for (h_clean, h_input) in &norm {
                    let w_bar = infer_student(&model.params, sys, &fc, h_input)?;
                    rates.push(evaluate_rates(h_clean, &w_bar, 1.0)?.1);
                }
                rows.push(EvalRow {
                    site: site.site_id.clone(),
                    snr_db,
                    method: model.label.into(),
                    mean_rate: mean(rates),
                });
            }
        }
    }
    fs::create_dir_all(out_dir)?;
    let mut csv = String::from("site,snr_db,method,mean_rate\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{:.6}\n",
            r.site, r.snr_db, r.method, r.mean_rate
        ));
    }
    fs::write(out_dir.join("eval.csv"), &csv)?;
    println!("{}", render_eval_table(&rows));
    Ok(rows)
}

fn render_eval_table(rows: &[EvalRow]) -> String {
    let method_w = rows
        .iter()
        .map(|r| r.method.len())
        .max()
        .unwrap_or(6)
        .max(6);
    let site_w = rows.iter().map(|r| r.site.len()).max().unwrap_or(4).max(4);
    let mut out = format!(
        "{:<site_w$}  {:>7}  {:<method_w$}  {:>12}\n",
        "site", "snr_db", "method", "rate b/s/Hz"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<site_w$}  {:>7}  {:<method_w$}  {:>12.4}\n",
            r.site, r.snr_db, r.method, r.mean_rate
        ));
    }
    out
}

/// Emits the energy report as CSV plus an aligned table on stdout.
pub fn cmd_energy(cfg: &RunConfig, out_dir: &Path, unit: EnergyUnit) -> Result<()> {
    cfg.validate()?;
    let mut ecfg = EnergyReportConfig::for_system(&cfg.system_config());
    ecfg.wmmse_iters = cfg.energy_wmmse_iters;
    ecfg.pe_iters = cfg.energy_pe_iters;
    ecfg.maml_c_out = cfg.energy_maml_c_out;
    let report = energy_report(&ecfg)?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("energy.csv"), report.to_csv(unit))?;
    print!("{}", report.to_text(unit));
    Ok(())
}

/// Parsed command-line invocation.
pub struct CliArgs {
    pub command: String,
    pub config: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub models: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub mode: Option<PrecoderMode>,
    pub trainer: Option<TrainerKind>,
    pub units: EnergyUnit,
    pub tag: Option<String>,
}

pub const USAGE: &str = "usage: papp <command> [flags]

commands:
  gen-data   --config <file> --out <dir> [--seed N]
  train      --config <file> --data <dir> --out <dir> [--trainer mldg|deepall] [--mode fdp|hbf] [--seed N]
  finetune   --config <file> --data <dir> --checkpoint <file> --out <dir> [--tag NAME]
  eval       --config <file> --data <dir> --models <dir> --out <dir> [--mode fdp|hbf]
  energy     [--config <file>] --out <dir> [--units uj|pj]
";

impl CliArgs {
    pub fn parse(args: &[String]) -> Result<Self> {
        let command = args
            .first()
            .ok_or_else(|| Error::InvalidArg("missing command".into()))?
            .clone();
        let mut out = CliArgs {
            command,
            config: None,
            data: None,
            models: None,
            checkpoint: None,
            out: None,
            seed: None,
            mode: None,
            trainer: None,
            units: EnergyUnit::MicroJoules,
            tag: None,
        };
        let mut it = args[1..].iter();
        while let Some(flag) = it.next() {
            let mut value = |name: &str| -> Result<String> {
                it.next()
                    .cloned()
                    .ok_or_else(|| Error::InvalidArg(format!("{name} requires a value")))
            };
            match flag.as_str() {
                "--config" => out.config = Some(PathBuf::from(value("--config")?)),
                "--data" => out.data = Some(PathBuf::from(value("--data")?)),
                "--models" => out.models = Some(PathBuf::from(value("--models")?)),
                "--checkpoint" => out.checkpoint = Some(PathBuf::from(value("--checkpoint")?)),
                "--out" => out.out = Some(PathBuf::from(value("--out")?)),
                "--seed" => {
                    out.seed = Some(
                        value("--seed")?
                            .parse()
                            .map_err(|e| Error::InvalidArg(format!("--seed: {e}")))?,
                    )
                }
                "--mode" => out.mode = Some(PrecoderMode::parse(&value("--mode")?)?),
                "--trainer" => out.trainer = Some(TrainerKind::parse(&value("--trainer")?)?),
                "--tag" => out.tag = Some(value("--tag")?),
                "--units" => {
                    out.units = match value("--units")?.as_str() {
                        "uj" => EnergyUnit::MicroJoules,
                        "pj" => EnergyUnit::PicoJoules,
                        other => {
                            return Err(Error::InvalidArg(format!(
                                "--units must be uj or pj, got {other}"
                            )))
                        }
                    }
                }
                other => return Err(Error::InvalidArg(format!("unknown flag '{other}'"))),
            }
        }
        Ok(out)
    }

    fn load_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                RunConfig::parse(&text)?
            }
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(mode) = self.mode {
            cfg.mode = mode;
        }
        if let Some(trainer) = self.trainer {
            cfg.trainer = trainer;
        }
        Ok(cfg)
    }

    fn require<'a>(opt: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
        opt.as_deref()
            .ok_or_else(|| Error::InvalidArg(format!("{name} is required")))
    }

    /// Dispatches the parsed invocation.
    pub fn run(&self) -> Result<()> {
        match self.command.as_str() {
            "gen-data" => {
                let cfg = self.load_config()?;
                cmd_gen_data(&cfg, Self::require(&self.out, "--out")?)
            }
            "train" => {
                let cfg = self.load_config()?;
                cmd_train(
                    &cfg,
                    Self::require(&self.data, "--data")?,
                    Self::require(&self.out, "--out")?,
                )
            }
            "finetune" => {
                let cfg = self.load_config()?;
                cmd_finetune(
                    &cfg,
                    Self::require(&self.data, "--data")?,
                    Self::require(&self.checkpoint, "--checkpoint")?,
                    Self::require(&self.out, "--out")?,
                    self.tag.as_deref().unwrap_or("finetuned"),
                )
            }
            "eval" => {
                let cfg = self.load_config()?;
                cmd_eval(
                    &cfg,
                    Self::require(&self.data, "--data")?,
                    Self::require(&self.models, "--models")?,
                    Self::require(&self.out, "--out")?,
                )
                .map(|_| ())
            }
            "energy" => {
                let cfg = self.load_config()?;
                cmd_energy(&cfg, Self::require(&self.out, "--out")?, self.units)
            }
            other => Err(Error::InvalidArg(format!("unknown command '{other}'"))),
        }
    }
}
