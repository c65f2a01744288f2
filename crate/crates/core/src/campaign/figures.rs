//! Plot-ready datasets for the figures, built from a finished campaign's
//! `packets.csv` plus pulse-level data regenerated from the seed.

use std::path::PathBuf;

use serde::Serialize;

use super::config::CampaignConfig;
use super::output::{keyrate_rows, read_packets_csv, write_csv, PacketRow, FIG8_EXTRA_V_A, PACKETS_CSV};
use super::CampaignError;
use crate::estimation::correct_alice;
use crate::pipeline::{estimate, PipelineConfig};
use crate::polarization::{apply_transform, jones_matrix, stokes_from_params, PolarizationParams};

/// Channel of the single-packet scatter dataset.
pub const FIG1_TRUTH: PolarizationParams = PolarizationParams {
    theta: 0.84,
    phi: 2.28,
    delta: -0.05,
};
pub const FIG1_V_A: f64 = 10.0;
/// Packet id of the scatter packet's random streams, clear of campaign ids.
pub const FIG1_PACKET_ID: u64 = 1 << 40;

#[derive(Serialize)]
struct ScatterRow {
    pulse: usize,
    x_ah_uncorrected: f64,
    x_ah_corrected: f64,
    x_bh: f64,
}

#[derive(Serialize)]
struct IndependenceRow {
    pulse: usize,
    x_h: f64,
    p_h: f64,
    x_v: f64,
    p_v: f64,
}

#[derive(Serialize)]
struct StokesRow {
    packet_id: u64,
    theta_est: f64,
    delta_est: f64,
    s1: f64,
    s2: f64,
    s3: f64,
}

#[derive(Serialize)]
struct R2Row {
    packet_id: u64,
    theta_true: f64,
    theta_est: f64,
    r2_uncorrected: f64,
    r2_corrected: f64,
}

#[derive(Serialize)]
struct NoiseRow {
    packet_id: u64,
    theta_true: f64,
    theta_est: f64,
    v_b_x: f64,
    v_b_p: f64,
    /// `eta * t / 2 * xi`, the excess noise as seen at the detector.
    measured_excess_noise: f64,
    xi_est: f64,
}

#[derive(Serialize)]
struct Fig8Row {
    v_a: f64,
    distance_km: f64,
    transmission: f64,
    i_ab: f64,
    chi_be: f64,
    k_bits_per_pulse: f64,
    k_bits_per_second: f64,
}

/// Scatter packet: the configured link at `V_A = 10` through a fixed channel.
fn fig1_rows(cfg: &CampaignConfig) -> Result<Vec<ScatterRow>, CampaignError> {
    let mut pcfg = cfg.pipeline();
    pcfg.channel.v_a = FIG1_V_A;
    let packet = pcfg.alice_packet(FIG1_PACKET_ID)?;
    let measurements = pcfg.measure_packet(&packet, FIG1_TRUTH);
    let idx = pcfg.reveal_indices(FIG1_PACKET_ID)?;
    let bob = crate::estimation::reveal_measurements(&measurements, &idx);
    let est = estimate(&pcfg, &packet, &idx, &bob)?;
    let corrected = correct_alice(&packet, est.params_hat)?;
    Ok(packet
        .pulses
        .iter()
        .zip(&corrected)
        .zip(&measurements)
        .enumerate()
        .map(|(i, ((raw, cor), m))| ScatterRow {
            pulse: i,
            x_ah_uncorrected: raw.h.x,
            x_ah_corrected: cor.h.x,
            x_bh: m.x_bh,
        })
        .collect())
}

/// Alice's encodings of campaign packet 0 after the packet's channel.
fn fig2_rows(pcfg: &PipelineConfig) -> Result<Vec<IndependenceRow>, CampaignError> {
    let packet = pcfg.alice_packet(0)?;
    let m = jones_matrix(pcfg.channel_truth(0))?;
    packet
        .pulses
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let t = apply_transform(&m, s)?;
            Ok(IndependenceRow {
                pulse: i,
                x_h: t.h.x,
                p_h: t.h.p,
                x_v: t.v.x,
                p_v: t.v.p,
            })
        })
        .collect()
}

/// Reads `packets.csv` from the output directory and writes every figure
/// dataset next to it. Returns the written paths.
pub fn emit_figures(cfg: &CampaignConfig) -> Result<Vec<PathBuf>, CampaignError> {
    let dir = &cfg.output_dir;
    let packets_path = dir.join(PACKETS_CSV);
    if !packets_path.exists() {
        return Err(CampaignError::MissingInput(packets_path));
    }
    let rows: Vec<PacketRow> = read_packets_csv(&packets_path)?;
    let pcfg = cfg.pipeline();
    let mut written = Vec::new();
    let mut emit = |name: &str, f: &dyn Fn(&std::path::Path) -> Result<(), CampaignError>| {
        let p = dir.join(name);
        f(&p)?;
        written.push(p);
        Ok::<_, CampaignError>(())
    };

    emit("fig1_scatter.csv", &|p| write_csv(p, fig1_rows(cfg)?))?;
    emit("fig2_independence.csv", &|p| write_csv(p, fig2_rows(&pcfg)?))?;
    emit("fig5_stokes.csv", &|p| {
        write_csv(
            p,
            rows.iter().filter(|r| r.theta_est.is_finite()).map(|r| {
                let s = stokes_from_params(PolarizationParams {
                    theta: r.theta_est,
                    phi: r.phi_est,
                    delta: r.delta_est,
                });
                StokesRow {
                    packet_id: r.packet_id,
                    theta_est: r.theta_est,
                    delta_est: r.delta_est,
                    s1: s.s1,
                    s2: s.s2,
                    s3: s.s3,
                }
            }),
        )
    })?;
    emit("fig6_r2_vs_theta.csv", &|p| {
        write_csv(
            p,
            rows.iter().map(|r| R2Row {
                packet_id: r.packet_id,
                theta_true: r.theta_true,
                theta_est: r.theta_est,
                r2_uncorrected: r.r2_uncorrected,
                r2_corrected: r.r2_corrected,
            }),
        )
    })?;
    emit("fig7_vb_noise_vs_theta.csv", &|p| {
        write_csv(
            p,
            rows.iter().map(|r| NoiseRow {
                packet_id: r.packet_id,
                theta_true: r.theta_true,
                theta_est: r.theta_est,
                v_b_x: r.v_b_x,
                v_b_p: r.v_b_p,
                measured_excess_noise: cfg.eta * r.t_est / 2.0 * r.xi_est,
                xi_est: r.xi_est,
            }),
        )
    })?;
    emit("fig8_keyrate.csv", &|p| {
        let mut out = Vec::new();
        for v_a in [cfg.v_a, FIG8_EXTRA_V_A] {
            out.extend(keyrate_rows(cfg, v_a)?.into_iter().map(|k| Fig8Row {
                v_a,
                distance_km: k.distance_km,
                transmission: k.transmission,
                i_ab: k.i_ab,
                chi_be: k.chi_be,
                k_bits_per_pulse: k.k_bits_per_pulse,
                k_bits_per_second: k.k_bits_per_second,
            }));
        }
        write_csv(p, out)
    })?;
    Ok(written)
}
