//! Closed-form computation-energy model for the precoding methods.
//!
//! Counts are real multiplications (MACs), model weights, and activations;
//! energy combines an 0.86 pJ MAC cost with on-chip memory-access costs
//! (`E_M = 2 E_L = 2 E_MAC`) under an effective parallelism factor of 64.
//! DNN-style methods pay for weight and activation traffic; the iterative
//! baselines are billed conservatively at multiplications plus local-buffer
//! operand fetches only. Fractional formula values are rounded to the
//! nearest integer before energy conversion, since counts are
//! multiplicities.

use crate::channel::SystemConfig;
use crate::error::{Error, Result};
use crate::model::PrecoderMode;

/// Energy model constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyConstants {
    /// Energy of one multiply-accumulate, picojoules.
    pub e_mac: f64,
    /// One local-buffer access; equal to `e_mac`.
    pub e_local: f64,
    /// One on-chip main-memory access; `2 * e_mac`.
    pub e_main: f64,
    /// Effective parallelism factor p.
    pub parallelism: f64,
}

impl Default for EnergyConstants {
    fn default() -> Self {
        let e_mac = 0.86;
        Self {
            e_mac,
            e_local: e_mac,
            e_main: 2.0 * e_mac,
            parallelism: 64.0,
        }
    }
}

/// MAC / weight / activation counts for one method at one configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FootprintCounts {
    pub n_c: u64,
    pub n_w: u64,
    pub n_a: u64,
}

impl FootprintCounts {
    pub fn macs_only(n_c: u64) -> Self {
        Self {
            n_c,
            n_w: 0,
            n_a: 0,
        }
    }
}

fn round_count(x: f64) -> u64 {
    debug_assert!(x >= 0.0 && x.is_finite());
    x.round() as u64
}

/// Real multiplications for `iters` iterations of the WMMSE solver.
pub fn counts_wmmse(n_tx: usize, n_users: usize, iters: usize) -> FootprintCounts {
    let (nt, nu, i) = (n_tx as f64, n_users as f64, iters as f64);
    let inner = (2.0 / 3.0) * nt.powi(3) + nt * nt + 2.0 * nt * (2.0 * nu + 1.0) + nu + 14.0 / 3.0;
    FootprintCounts::macs_only(round_count(4.0 * i * nu * inner))
}

/// Real multiplications for the zero-forcing precoder.
pub fn counts_zf(n_tx: usize, n_users: usize) -> FootprintCounts {
    let (nt, nu) = (n_tx as f64, n_users as f64);
    FootprintCounts::macs_only(round_count(8.0 * nu * nu * nt + (8.0 / 3.0) * nu.powi(3)))
}

/// Which fully digital solver feeds the PE-AltMin factorization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PeTarget {
    Zf,
    Wmmse,
}

/// Real multiplications for PE-AltMin over `t` iterations, including the
/// operations of the fully digital target it factors.
pub fn counts_pe_altmin(
    n_tx: usize,
    n_users: usize,
    n_rf: usize,
    t: usize,
    target: PeTarget,
    iters_target: usize,
) -> FootprintCounts {
    let base = match target {
        PeTarget::Zf => counts_zf(n_tx, n_users),
        PeTarget::Wmmse => counts_wmmse(n_tx, n_users, iters_target),
    };
    let (nt, nu, nrf, tf) = (n_tx as f64, n_users as f64, n_rf as f64, t as f64);
    let per_iter = (4.0 / 3.0) * nrf * nrf + 2.0 * nrf * (nt + nu) + nt * (2.0 * nu + 1.0);
    FootprintCounts::macs_only(base.n_c + round_count(4.0 * tf * nrf * per_iter))
}

/// MAC, weight, and activation counts for the deployed PaPP student, with
/// `E = 2 N_T` and the head term selected by the precoder mode.
pub fn counts_papp(
    n_tx: usize,
    n_users: usize,
    n_rf: usize,
    mode: PrecoderMode,
) -> FootprintCounts {
    let (nt, nu, nrf) = (n_tx as f64, n_users as f64, n_rf as f64);
    let e = 2.0 * nt;
    let head_c = match mode {
        PrecoderMode::Fdp => 2.0 * e * nt * nu,
        PrecoderMode::Hbf => 2.0 * e * nrf * (nt + nu),
    };
    let n_c = 864.0 * nt * nu
        + 2.0 * nt * nu * e
        + 4.0 * e * e * (nu + 2.0)
        + 4.0 * e
        + nu * nu * nt * e
        + head_c;
    let head_w = match mode {
        PrecoderMode::Fdp => 2.0 * nt * nu * (e + 1.0),
        PrecoderMode::Hbf => 2.0 * nrf * (nt + nu) * (e + 1.0),
    };
    let n_w = 884.0 + nu * nu * nt * e + 4.0 * e * e * (nu + 2.0) + 10.0 * e + head_w;
    let n_a = 20.0 * nt * nu + nt * nu * nu + 4.0 * e * nu + 10.0 * e;
    FootprintCounts {
        n_c: round_count(n_c),
        n_w: round_count(n_w),
        n_a: round_count(n_a),
    }
}

/// MAC, weight, and activation counts for the MAML-CNN baseline, including
/// its final matrix-inversion stage. `c_out` is the CNN layer's output
/// channel count, which has no reference value; it must be supplied.
pub fn counts_maml_cnn(n_tx: usize, n_users: usize, c_out: usize) -> Result<FootprintCounts> {
    if c_out < 1 {
        return Err(Error::InvalidArg("c_out must be >= 1".into()));
    }
    let (nt, nu, co) = (n_tx as f64, n_users as f64, c_out as f64);
    let inversion =
        8.0 * ((4.0 / 3.0) * nt.powi(3) + nt * nt * (3.0 * nu + 2.0) + nt * (2.0 * nu + 3.0));
    let n_c = 18.0 * co * nt * nu + co * nt * nu * (3.0 * nu + 1.0) + inversion;
    let n_w = 18.0 * co + (co * nt * nu + 1.0) * (3.0 * nu + 1.0);
    let n_a = co * nt * nu + 3.0 * nu + 1.0;
    Ok(FootprintCounts {
        n_c: round_count(n_c),
        n_w: round_count(n_w),
        n_a: round_count(n_a),
    })
}

/// Per-inference energy of a DNN-style method, picojoules.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyBreakdown {
    /// Compute: `E_MAC (N_c + 3 N_a)`.
    pub e_compute: f64,
    /// Weight traffic: `E_M N_w + E_L N_c / sqrt(p)`.
    pub e_weights: f64,
    /// Activation traffic: `2 E_M N_a + E_L N_c / sqrt(p)`.
    pub e_activations: f64,
    pub total: f64,
}

/// Evaluates the DNN energy model on a set of counts.
pub fn dnn_energy(counts: &FootprintCounts, k: &EnergyConstants) -> EnergyBreakdown {
    let (n_c, n_w, n_a) = (counts.n_c as f64, counts.n_w as f64, counts.n_a as f64);
    let spill = k.e_local * n_c / k.parallelism.sqrt();
    let e_compute = k.e_mac * (n_c + 3.0 * n_a);
    let e_weights = k.e_main * n_w + spill;
    let e_activations = 2.0 * k.e_main * n_a + spill;
    EnergyBreakdown {
        e_compute,
        e_weights,
        e_activations,
        total: e_compute + e_weights + e_activations,
    }
}

/// Per-use energy of an iterative baseline, picojoules:
/// `N_c (E_MAC + E_L / sqrt(p))`.
pub fn baseline_energy(n_c: u64, k: &EnergyConstants) -> f64 {
    n_c as f64 * (k.e_mac + k.e_local / k.parallelism.sqrt())
}

/// One row of the energy report.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyRow {
    pub method: String,
    pub counts: FootprintCounts,
    /// Energy in picojoules.
    pub energy_pj: f64,
}

/// Energy report over the five method families at one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyReport {
    pub rows: Vec<EnergyRow>,
}

/// Configuration sweep for [`energy_report`].
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyReportConfig {
    pub n_tx: usize,
    pub n_users: usize,
    pub n_rf: usize,
    pub wmmse_iters: usize,
    pub pe_iters: usize,
    /// CNN output channels assumed for the MAML-CNN row. No reference value
    /// exists for this; the default of 8 is an assumption and the resulting
    /// row is indicative only.
    pub maml_c_out: usize,
    pub constants: EnergyConstants,
}

impl Default for EnergyReportConfig {
    fn default() -> Self {
        Self {
            n_tx: 64,
            n_users: 4,
            n_rf: 8,
            wmmse_iters: 15,
            pe_iters: 100,
            maml_c_out: 8,
            constants: EnergyConstants::default(),
        }
    }
}

impl EnergyReportConfig {
    pub fn for_system(cfg: &SystemConfig) -> Self {
        Self {
            n_tx: cfg.n_tx,
            n_users: cfg.n_users,
            n_rf: cfg.n_rf,
            ..Self::default()
        }
    }
}

/// Builds the per-method energy table: WMMSE, ZF, both PE-AltMin variants,
/// MAML-CNN, and the PaPP student in both precoder modes.
pub fn energy_report(cfg: &EnergyReportConfig) -> Result<EnergyReport> {
    let k = &cfg.constants;
    let mut rows = Vec::new();
    let wm = counts_wmmse(cfg.n_tx, cfg.n_users, cfg.wmmse_iters);
    rows.push(EnergyRow {
        method: format!("WMMSE (I={})", cfg.wmmse_iters),
        counts: wm,
        energy_pj: baseline_energy(wm.n_c, k),
    });
    let maml = counts_maml_cnn(cfg.n_tx, cfg.n_users, cfg.maml_c_out)?;
    rows.push(EnergyRow {
        method: format!("MAML-CNN (c_out={})", cfg.maml_c_out),
        counts: maml,
        energy_pj: dnn_energy(&maml, k).total,
    });
    let papp_fdp = counts_papp(cfg.n_tx, cfg.n_users, cfg.n_rf, PrecoderMode::Fdp);
    rows.push(EnergyRow {
        method: "PaPP-FDP".into(),
        counts: papp_fdp,
        energy_pj: dnn_energy(&papp_fdp, k).total,
    });
    let papp_hbf = counts_papp(cfg.n_tx, cfg.n_users, cfg.n_rf, PrecoderMode::Hbf);
    rows.push(EnergyRow {
        method: format!("PaPP-HBF (N_RF={})", cfg.n_rf),
        counts: papp_hbf,
        energy_pj: dnn_energy(&papp_hbf, k).total,
    });
    let zf = counts_zf(cfg.n_tx, cfg.n_users);
    rows.push(EnergyRow {
        method: "Zero Forcing".into(),
        counts: zf,
        energy_pj: baseline_energy(zf.n_c, k),
    });
    let pe_wm = counts_pe_altmin(
        cfg.n_tx,
        cfg.n_users,
        cfg.n_rf,
        cfg.pe_iters,
        PeTarget::Wmmse,
        cfg.wmmse_iters,
    );
    rows.push(EnergyRow {
        method: format!("WMMSE + PE-AltMin (T={})", cfg.pe_iters),
        counts: pe_wm,
        energy_pj: baseline_energy(pe_wm.n_c, k),
    });
    let pe_zf = counts_pe_altmin(
        cfg.n_tx,
        cfg.n_users,
        cfg.n_rf,
        cfg.pe_iters,
        PeTarget::Zf,
        cfg.wmmse_iters,
    );
    rows.push(EnergyRow {
        method: format!("ZF + PE-AltMin (T={})", cfg.pe_iters),
        counts: pe_zf,
        energy_pj: baseline_energy(pe_zf.n_c, k),
    });
    Ok(EnergyReport { rows })
}

/// Energy units for report rendering.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnergyUnit {
    MicroJoules,
    PicoJoules,
}

impl EnergyReport {
    /// Comma-separated table with a header row.
    pub fn to_csv(&self, unit: EnergyUnit) -> String {
        let (label, div) = match unit {
            EnergyUnit::MicroJoules => ("ec_uj", 1e6),
            EnergyUnit::PicoJoules => ("ec_pj", 1.0),
        };
        let mut out = format!("method,n_c,n_w,n_a,{label}\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:.2}\n",
                r.method,
                r.counts.n_c,
                r.counts.n_w,
                r.counts.n_a,
                r.energy_pj / div
            ));
        }
        out
    }

    /// Aligned plain-text table.
    pub fn to_text(&self, unit: EnergyUnit) -> String {
        let (label, div) = match unit {
            EnergyUnit::MicroJoules => ("EC (uJ)", 1e6),
            EnergyUnit::PicoJoules => ("EC (pJ)", 1.0),
        };
        let width = self
            .rows
            .iter()
            .map(|r| r.method.len())
            .max()
            .unwrap_or(6)
            .max("method".len());
        let mut out = format!(
            "{:<width$}  {:>12}  {:>10}  {:>8}  {:>12}\n",
            "method", "N_c", "N_w", "N_a", label
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<width$}  {:>12}  {:>10}  {:>8}  {:>12.2}\n",
                r.method,
                r.counts.n_c,
                r.counts.n_w,
                r.counts.n_a,
                r.energy_pj / div
            ));
        }
        out
    }

    pub fn energy_of(&self, method_prefix: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.method.starts_with(method_prefix))
            .map(|r| r.energy_pj)
    }
}
