//! One pass through the backbone: shared features, teacher auxiliaries and
//! the seeded WMMSE step, both student heads, and the footprint counters.
//!
//! ```bash
//! cargo run --example backbone_forward
//! ```

use papp::channel::{normalize_input, sample_channels, Domain, SiteSpec, SystemConfig};
use papp::model::{
    count_footprint, feature_forward, student_forward, teacher_forward, teacher_precoder,
    BackboneParams, FeatureConfig, PrecoderMode, StudentPrecoder,
};
use papp::precoding::evaluate_rates;

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
    let site = SiteSpec::new("demo", 2);
    let p_tx = 2.0;
    let domain = Domain {
        site_id: site.site_id.clone(),
        p_tx,
        los: false,
        beta: 0.0,
    };
    let sample = sample_channels(&cfg, &site, &domain, 1, 31)
        .expect("sampling")
        .pop()
        .expect("one sample");
    let h_bar = normalize_input(&sample.h, p_tx, cfg.sigma());

    for mode in [PrecoderMode::Fdp, PrecoderMode::Hbf] {
        let params = BackboneParams::init(&cfg, &fc, mode, 7).expect("valid dims");
        println!(
            "{} backbone: |pi| = {}, |theta| = {}, |phi| = {}",
            mode.as_str(),
            params.pi.n_scalars(),
            params.theta.n_scalars(),
            params.phi.n_scalars()
        );
        let feats = feature_forward(&params.pi, &cfg, &fc, &h_bar).expect("forward");
        let aux = teacher_forward(&params.theta, &feats, 1.0).expect("heads");
        println!(
            "  teacher aux at init: v = {:?}, mu = {:.4}",
            aux.v
                .iter()
                .map(|v| (v * 100.0).round() / 100.0)
                .collect::<Vec<_>>(),
            aux.mu
        );
        let w_t = teacher_precoder(&h_bar, &aux).expect("solvable step");
        println!("  teacher precoder power: {:.12}", w_t.frobenius_sq());

        let student = student_forward(&params.phi, &feats, mode, &cfg).expect("head");
        let composite = student.composite().expect("compose");
        let (_, rate) = evaluate_rates(&h_bar, &composite, 1.0).expect("shapes");
        println!(
            "  student composite power: {:.12}",
            composite.frobenius_sq()
        );
        if let StudentPrecoder::Hbf { a, .. } = &student {
            let dev = a
                .entries()
                .iter()
                .map(|z| (z.abs() - 1.0).abs())
                .fold(0.0, f64::max);
            println!("  max analog modulus deviation: {dev:.2e}");
        }
        println!("  untrained student rate on this draw: {rate:.4} b/s/Hz");

        let counts = count_footprint(&cfg, mode);
        println!(
            "  deployed footprint: N_c = {}, N_w = {}, N_a = {}\n",
            counts.n_c, counts.n_w, counts.n_a
        );
    }
}
