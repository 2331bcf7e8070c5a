//! PE-AltMin: factoring a fully digital precoder into a constant-modulus
//! analog network and a small digital stage.
//!
//! ```bash
//! cargo run --example hybrid_pe_altmin
//! ```

use papp::channel::{sample_channels, Domain, SiteSpec, SystemConfig};
use papp::precoding::{evaluate_rates, pe_altmin, wmmse_default, zf_precoder};

fn main() {
    let cfg = SystemConfig {
        n_tx: 16,
        n_users: 3,
        n_rf: 6,
        noise_power: 1.0,
        array_rows: 4,
        array_cols: 4,
        carrier_spacing: 0.5,
    };
    let site = SiteSpec::new("demo", 19);
    let p_tx = 4.0;
    let domain = Domain {
        site_id: site.site_id.clone(),
        p_tx,
        los: true,
        beta: 0.0,
    };
    let sample = sample_channels(&cfg, &site, &domain, 1, 23)
        .expect("sampling")
        .pop()
        .expect("one sample");

    for (name, target) in [
        ("ZF", zf_precoder(&sample.h, p_tx).expect("full rank").w),
        (
            "WMMSE",
            wmmse_default(&sample.h, cfg.sigma(), p_tx)
                .expect("solver")
                .0
                .w,
        ),
    ] {
        let (_, full_rate) = evaluate_rates(&sample.h, &target, cfg.sigma()).expect("shapes");
        let result = pe_altmin(&target, cfg.n_rf, 100, p_tx, 77).expect("factorization");
        let composite = result.precoder.compose();
        let (_, hybrid_rate) = evaluate_rates(&sample.h, &composite, cfg.sigma()).expect("shapes");
        println!("{name} target:");
        println!("  fully digital rate  {full_rate:.4} b/s/Hz");
        println!(
            "  hybrid rate         {hybrid_rate:.4} b/s/Hz  (N_RF = {})",
            cfg.n_rf
        );
        println!(
            "  frobenius gap        {:.4} -> {:.4} over {} iterations",
            result.gap_trace.first().unwrap(),
            result.gap_trace.last().unwrap(),
            result.gap_trace.len()
        );
        let max_mod_dev = result
            .precoder
            .a
            .entries()
            .iter()
            .map(|z| (z.abs() - 1.0).abs())
            .fold(0.0, f64::max);
        println!("  max |analog entry| deviation from 1: {max_mod_dev:.2e}\n");
    }
}
