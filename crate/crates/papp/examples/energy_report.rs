//! The computation-energy model at the reference configuration
//! (64 antennas, 4 users, 8 RF chains).
//!
//! ```bash
//! cargo run --example energy_report
//! ```

use papp::energy::{energy_report, EnergyReportConfig, EnergyUnit};

fn main() {
    let cfg = EnergyReportConfig::default();
    let report = energy_report(&cfg).expect("valid config");
    print!("{}", report.to_text(EnergyUnit::MicroJoules));

    let wmmse = report.energy_of("WMMSE (").expect("row");
    let papp_fdp = report.energy_of("PaPP-FDP").expect("row");
    let papp_hbf = report.energy_of("PaPP-HBF").expect("row");
    let pe_wmmse = report.energy_of("WMMSE + PE-AltMin").expect("row");
    println!();
    println!(
        "fully digital: WMMSE / PaPP student energy = {:.1}x",
        wmmse / papp_fdp
    );
    println!(
        "hybrid: (WMMSE + PE-AltMin) / PaPP student energy = {:.1}x",
        pe_wmmse / papp_hbf
    );
}
