//! The synthetic multi-site channel pipeline: domain enumeration, CSI
//! estimation error, and transmit-power-aware normalization.
//!
//! ```bash
//! cargo run --example synthetic_channels
//! ```

use papp::channel::{
    apply_estimation_error, denormalize_precoder, enumerate_domains, normalize_input,
    sample_channels, EstimationErrorSpec, SiteSpec, SystemConfig,
};
use papp::numerics::{CMatrix, Complex};
use papp::precoding::evaluate_rates;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

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

    // Domain enumeration: cartesian product with LOS/NLOS doubling.
    let domains = enumerate_domains(&["alpha", "bravo", "charlie"], &[1.0, 2.0], &[0.0, 0.2])
        .expect("nonempty lists");
    println!(
        "3 sites x 2 powers x 2 error levels -> {} domains (2 * 3 * 2 * 2)",
        domains.len()
    );

    // Estimation error preserves total power when sigma_eps^2 = sigma_H^2.
    let mut site = SiteSpec::new("alpha", 5);
    let sigma_h_sq = site.calibrate(&cfg).expect("calibration");
    let domain = domains.domains[0].clone();
    let samples = sample_channels(&cfg, &site, &domain, 400, 9).expect("sampling");
    for beta in [0.0, 0.2, 0.5, 1.0] {
        let spec = EstimationErrorSpec::new(beta, sigma_h_sq).expect("valid spec");
        let (mut clean, mut noisy) = (0.0, 0.0);
        for (i, s) in samples.iter().enumerate() {
            let hat = apply_estimation_error(s, &spec, 100 + i as u64).expect("spec valid");
            clean += s.h.frobenius_sq();
            noisy += hat.h.frobenius_sq();
        }
        println!(
            "beta {beta:.1}: estimated/true channel power = {:.4}",
            noisy / clean
        );
    }

    // Power-scaling invariance: SINR(H, sqrt(P) W_bar, sigma) equals
    // SINR(H_bar, W_bar, 1) per user.
    let p_tx = 3.7;
    let sigma = 1.4;
    let mut rng = StdRng::seed_from_u64(1);
    let raw = CMatrix::from_fn(cfg.n_tx, cfg.n_users, |_, _| {
        Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    let w_bar = raw.scale(1.0 / raw.frobenius_sq().sqrt());
    let w = denormalize_precoder(&w_bar, p_tx).expect("unit power");
    let h = &samples[0].h;
    let h_bar = normalize_input(h, p_tx, sigma);
    let (sinr_raw, _) = evaluate_rates(h, &w, sigma).expect("shapes");
    let (sinr_norm, _) = evaluate_rates(&h_bar, &w_bar, 1.0).expect("shapes");
    println!("\nper-user SINR, physical vs normalized representation:");
    for (k, (a, b)) in sinr_raw.iter().zip(&sinr_norm).enumerate() {
        println!(
            "  user {k}: {a:.12} vs {b:.12} (|diff| = {:.2e})",
            (a - b).abs()
        );
    }
}
