//! A miniature end-to-end run: MLDG backbone training on two sites,
//! zero-shot deployment to a held-out site, and few-shot self-supervised
//! adaptation. Finishes in roughly a minute.
//!
//! ```bash
//! cargo run --example train_and_adapt
//! ```

use papp::channel::{
    p_tx_for_snr_db, sample_channels, sample_site_eval, Domain, SiteSpec, SystemConfig,
};
use papp::model::{infer_student, FeatureConfig, PrecoderMode};
use papp::precoding::{evaluate_rates, zf_precoder};
use papp::training::{
    augmented_finetune_set, finetune_site, prepare_samples, train_backbone, DomainDataset,
    TrainHyper, TrainSample,
};

fn make_site(idx: usize) -> SiteSpec {
    let mut s = SiteSpec::new(&format!("site{idx}"), 500 + 31 * idx as u64);
    s.n_clusters_los = 2 + idx % 2;
    s.n_clusters_nlos = 3 + idx % 3;
    s.angle_spread = 0.06 + 0.03 * (idx % 3) as f64;
    s.power_decay = 0.5 + 0.1 * (idx % 2) as f64;
    s.los_fraction = 0.4 + 0.1 * (idx % 3) as f64;
    s
}

fn main() {
    let cfg = SystemConfig {
        n_tx: 8,
        n_users: 2,
        n_rf: 4,
        noise_power: 1.0,
        array_rows: 2,
        array_cols: 4,
        carrier_spacing: 0.5,
    };
    let fc = FeatureConfig::for_system(&cfg);
    let snrs = [10.0, 20.0];

    // Training domains: 2 sites x 2 powers x LOS/NLOS = 8 domains.
    println!("preparing 8 training domains (WMMSE references cached per sample)...");
    let mut data = Vec::new();
    for idx in 0..2 {
        let mut site = make_site(idx);
        let sigma_h_sq = site.calibrate(&cfg).expect("calibration");
        for (pi, &snr) in snrs.iter().enumerate() {
            let p_tx = p_tx_for_snr_db(&cfg, snr, sigma_h_sq);
            for los in [true, false] {
                let domain = Domain {
                    site_id: site.site_id.clone(),
                    p_tx,
                    los,
                    beta: 0.0,
                };
                let seed = 9_000 + (idx * 8 + pi * 2 + los as usize) as u64;
                let channels = sample_channels(&cfg, &site, &domain, 150, seed).expect("sampling");
                let pairs: Vec<_> = channels.iter().map(|c| (c.clone(), c.clone())).collect();
                let samples = prepare_samples(&cfg, &pairs).expect("preparation");
                data.push(DomainDataset { domain, samples });
            }
        }
    }

    let hyper = TrainHyper {
        max_cycles: 6,
        ..TrainHyper::desk_scale()
    };
    println!("training the backbone with MLDG...");
    let outcome =
        train_backbone(&data, &cfg, &fc, &hyper, PrecoderMode::Fdp, 42).expect("training");
    println!(
        "done after {} logged epochs",
        outcome.log.last().map_or(0, |r| r.epoch)
    );

    // Held-out deployment site.
    let mut held = make_site(9);
    let sigma_h_sq = held.calibrate(&cfg).expect("calibration");
    let mut eval = Vec::new();
    for &snr in &snrs {
        let p_tx = p_tx_for_snr_db(&cfg, snr, sigma_h_sq);
        eval.extend(sample_site_eval(&cfg, &held, p_tx, 0.0, 100, 777).expect("sampling"));
    }
    let eval_pairs: Vec<_> = eval.iter().map(|c| (c.clone(), c.clone())).collect();
    let eval_samples: Vec<TrainSample> = prepare_samples(&cfg, &eval_pairs).expect("preparation");

    let mean_rate = |params| -> f64 {
        let mut acc = 0.0;
        for s in &eval_samples {
            let w = infer_student(params, &cfg, &fc, &s.h_input_norm).expect("inference");
            acc += evaluate_rates(&s.h_clean_norm, &w, 1.0).expect("shapes").1;
        }
        acc / eval_samples.len() as f64
    };
    let wmmse_mean =
        eval_samples.iter().map(|s| s.r_wmmse).sum::<f64>() / eval_samples.len() as f64;
    let zf_mean = eval_samples
        .iter()
        .map(|s| {
            let zf = zf_precoder(&s.h_input_norm, 1.0).expect("full rank");
            evaluate_rates(&s.h_clean_norm, &zf.w, 1.0)
                .expect("shapes")
                .1
        })
        .sum::<f64>()
        / eval_samples.len() as f64;

    let zero_shot = mean_rate(&outcome.params);
    println!(
        "\nheld-out site '{}' mean sum-rates (b/s/Hz):",
        held.site_id
    );
    println!("  WMMSE          {wmmse_mean:.3}");
    println!("  zero forcing   {zf_mean:.3}");
    println!(
        "  PaPP zero-shot {zero_shot:.3}  ({:.1}% of WMMSE)",
        100.0 * zero_shot / wmmse_mean
    );

    // Few-shot adaptation: 40 local samples, user-combination augmentation.
    let few: Vec<_> = eval[..40].to_vec();
    let augmented = augmented_finetune_set(&few, hyper.finetune_cap, 5).expect("augmentation");
    let mut adapted = outcome.params.clone();
    finetune_site(&mut adapted, &cfg, &fc, &augmented, 10, 1e-4, false, 48, 6).expect("finetune");
    let few_shot = mean_rate(&adapted);
    println!(
        "  PaPP few-shot  {few_shot:.3}  ({:.1}% of WMMSE, 40 samples -> {} after augmentation)",
        100.0 * few_shot / wmmse_mean,
        augmented.len()
    );
}
