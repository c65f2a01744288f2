//! Campaign datasets: `packets.csv`, `keyrate.csv`, `pulses.csv` and
//! `summary.json`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::CampaignConfig;
use super::run::CampaignRun;
use super::CampaignError;
use crate::keyrate::{bits_per_second, keyrate_curve, r2_bounds, secret_key_rate, v_b, KeyRateInputs};
use crate::pipeline::PacketRecord;
use crate::stats::{mean, std_dev};

pub const PACKETS_CSV: &str = "packets.csv";
pub const KEYRATE_CSV: &str = "keyrate.csv";
pub const PULSES_CSV: &str = "pulses.csv";
pub const SUMMARY_JSON: &str = "summary.json";

/// One row of `packets.csv`. Field order is the column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketRow {
    pub packet_id: u64,
    pub theta_true: f64,
    pub phi_true: f64,
    pub delta_true: f64,
    pub theta_est: f64,
    pub phi_est: f64,
    pub delta_est: f64,
    pub matrix_err_frobenius: f64,
    pub t_est: f64,
    pub xi_est: f64,
    pub r2_uncorrected: f64,
    pub r2_corrected: f64,
    pub v_b_x: f64,
    pub v_b_p: f64,
    pub residual_ms: f64,
    pub converged: bool,
}

pub const PACKET_COLUMNS: [&str; 16] = [
    "packet_id",
    "theta_true",
    "phi_true",
    "delta_true",
    "theta_est",
    "phi_est",
    "delta_est",
    "matrix_err_frobenius",
    "t_est",
    "xi_est",
    "r2_uncorrected",
    "r2_corrected",
    "v_b_x",
    "v_b_p",
    "residual_ms",
    "converged",
];

impl PacketRow {
    pub fn from_record(r: &PacketRecord) -> Self {
        let nan = f64::NAN;
        let (p, t, xi, res) = match r.estimate {
            Some(e) => (e.params_hat, e.t_hat, e.xi_hat, e.residual_ms),
            None => (
                crate::polarization::PolarizationParams {
                    theta: nan,
                    phi: nan,
                    delta: nan,
                },
                nan,
                nan,
                nan,
            ),
        };
        Self {
            packet_id: r.packet_id,
            theta_true: r.truth.theta,
            phi_true: r.truth.phi,
            delta_true: r.truth.delta,
            theta_est: p.theta,
            phi_est: p.phi,
            delta_est: p.delta,
            matrix_err_frobenius: r.matrix_err,
            t_est: t,
            xi_est: xi,
            r2_uncorrected: r.r2_uncorrected,
            r2_corrected: r.r2_corrected,
            v_b_x: r.v_b_x,
            v_b_p: r.v_b_p,
            residual_ms: res,
            converged: r.converged(),
        }
    }

    /// Numeric view of every column, in column order.
    pub fn values(&self) -> [f64; 16] {
        [
            self.packet_id as f64,
            self.theta_true,
            self.phi_true,
            self.delta_true,
            self.theta_est,
            self.phi_est,
            self.delta_est,
            self.matrix_err_frobenius,
            self.t_est,
            self.xi_est,
            self.r2_uncorrected,
            self.r2_corrected,
            self.v_b_x,
            self.v_b_p,
            self.residual_ms,
            if self.converged { 1.0 } else { 0.0 },
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KeyRateRow {
    pub distance_km: f64,
    pub transmission: f64,
    pub i_ab: f64,
    pub chi_be: f64,
    pub k_bits_per_pulse: f64,
    pub k_bits_per_second: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
struct PulseRow {
    packet_id: u64,
    pulse: usize,
    x_ah: f64,
    p_ah: f64,
    x_av: f64,
    p_av: f64,
    x_bh: f64,
    p_bh: f64,
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CampaignError + '_ {
    move |source| CampaignError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), CampaignError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn read_packets_csv(path: &Path) -> Result<Vec<PacketRow>, CampaignError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut r = csv::Reader::from_reader(std::io::BufReader::new(file));
    let headers = r.headers()?.clone();
    if headers.iter().ne(PACKET_COLUMNS) {
        return Err(CampaignError::Schema {
            path: path.to_path_buf(),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// The key-rate inputs at the configured operating point.
pub fn operating_point(cfg: &CampaignConfig) -> KeyRateInputs {
    KeyRateInputs {
        v_a: cfg.v_a,
        t: cfg.t,
        xi: cfg.xi,
        eta: cfg.eta,
        epsilon: cfg.epsilon,
        beta: cfg.beta,
    }
}

pub fn keyrate_rows(cfg: &CampaignConfig, v_a: f64) -> Result<Vec<KeyRateRow>, CampaignError> {
    let inputs = KeyRateInputs {
        v_a,
        ..operating_point(cfg)
    };
    Ok(keyrate_curve(&inputs, cfg.alpha_db_per_km, &cfg.keyrate_distances())?
        .into_iter()
        .map(|p| KeyRateRow {
            distance_km: p.distance_km,
            transmission: p.transmission,
            i_ab: p.result.i_ab,
            chi_be: p.result.chi_be,
            k_bits_per_pulse: p.result.k,
            k_bits_per_second: bits_per_second(p.result.k, cfg.rep_rate_hz, cfg.reveal_fraction),
        })
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct ColumnSummary {
    pub name: &'static str,
    /// Finite entries the statistics are taken over.
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

pub fn column_summaries(rows: &[PacketRow]) -> Vec<ColumnSummary> {
    PACKET_COLUMNS
        .iter()
        .enumerate()
        .map(|(i, &name)| {
            let v: Vec<f64> = rows.iter().map(|r| r.values()[i]).filter(|x| x.is_finite()).collect();
            ColumnSummary {
                name,
                count: v.len(),
                mean: mean(&v),
                std: std_dev(&v),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
struct Summary<'a> {
    software: Software,
    config: &'a CampaignConfig,
    packets: PacketCounts,
    columns: Vec<ColumnSummary>,
    analytic: Analytic,
    measured: Measured,
    keyrate_curves: KeyRateCurves,
}

#[derive(Debug, Clone, Serialize)]
struct Software {
    name: &'static str,
    version: &'static str,
}

#[derive(Debug, Clone, Serialize)]
struct PacketCounts {
    total: usize,
    estimated: usize,
    converged: usize,
}

#[derive(Debug, Clone, Serialize)]
struct Analytic {
    v_b: f64,
    r2_max: f64,
    r2_min: f64,
    i_ab: f64,
    chi_be: f64,
    k_bits_per_pulse: f64,
    k_bits_per_second: f64,
    photon_number_per_mode: f64,
    photon_number_total: f64,
}

#[derive(Debug, Clone, Serialize)]
struct Measured {
    v_b: f64,
    xi: f64,
    r2_corrected: f64,
    r2_uncorrected: f64,
    photon_number_h: f64,
    photon_number_v: f64,
    photon_number_total: f64,
}

#[derive(Debug, Clone, Serialize)]
struct KeyRateCurves {
    /// Modulation variance of `keyrate.csv`.
    keyrate_csv_v_a: f64,
    /// `fig8_keyrate.csv` also carries a curve at this modulation variance.
    fig8_extra_v_a: f64,
}

pub const FIG8_EXTRA_V_A: f64 = 1.0;

fn column_mean(cols: &[ColumnSummary], name: &str) -> f64 {
    cols.iter().find(|c| c.name == name).map_or(f64::NAN, |c| c.mean)
}

fn summary_json(cfg: &CampaignConfig, run: &CampaignRun, rows: &[PacketRow]) -> Result<String, CampaignError> {
    let op = operating_point(cfg);
    let kr = secret_key_rate(&op)?;
    let (r2_max, r2_min) = r2_bounds(&op);
    let columns = column_summaries(rows);
    let n_h = mean(&run.photon_numbers.iter().map(|p| p.0).collect::<Vec<_>>());
    let n_v = mean(&run.photon_numbers.iter().map(|p| p.1).collect::<Vec<_>>());
    let summary = Summary {
        software: Software {
            name: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
        },
        config: cfg,
        packets: PacketCounts {
            total: rows.len(),
            estimated: rows.iter().filter(|r| r.t_est.is_finite()).count(),
            converged: rows.iter().filter(|r| r.converged).count(),
        },
        analytic: Analytic {
            v_b: v_b(&op),
            r2_max,
            r2_min,
            i_ab: kr.i_ab,
            chi_be: kr.chi_be,
            k_bits_per_pulse: kr.k,
            k_bits_per_second: bits_per_second(kr.k, cfg.rep_rate_hz, cfg.reveal_fraction),
            photon_number_per_mode: cfg.v_a / 2.0,
            photon_number_total: cfg.v_a,
        },
        measured: Measured {
            v_b: (column_mean(&columns, "v_b_x") + column_mean(&columns, "v_b_p")) / 2.0,
            xi: column_mean(&columns, "xi_est"),
            r2_corrected: column_mean(&columns, "r2_corrected"),
            r2_uncorrected: column_mean(&columns, "r2_uncorrected"),
            photon_number_h: n_h,
            photon_number_v: n_v,
            photon_number_total: n_h + n_v,
        },
        keyrate_curves: KeyRateCurves {
            keyrate_csv_v_a: cfg.v_a,
            fig8_extra_v_a: FIG8_EXTRA_V_A,
        },
        columns,
    };
    let mut s = serde_json::to_string_pretty(&summary)?;
    s.push('\n');
    Ok(s)
}

fn write_pulses(cfg: &CampaignConfig, path: &Path) -> Result<(), CampaignError> {
    let pcfg = cfg.pipeline();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let ids: Vec<u64> = (0..u64::from(cfg.packets)).collect();
    // bounded memory: simulate a chunk in parallel, then write it in order
    for chunk in ids.chunks(64) {
        let sims = chunk
            .par_iter()
            .map(|&id| pcfg.simulate(id))
            .collect::<Result<Vec<_>, _>>()?;
        for sim in sims {
            for (i, (a, m)) in sim.packet.pulses.iter().zip(&sim.measurements).enumerate() {
                w.serialize(PulseRow {
                    packet_id: sim.packet.packet_id,
                    pulse: i,
                    x_ah: a.h.x,
                    p_ah: a.h.p,
                    x_av: a.v.x,
                    p_av: a.v.p,
                    x_bh: m.x_bh,
                    p_bh: m.p_bh,
                })?;
            }
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Writes the campaign datasets into `cfg.output_dir`; returns the paths.
pub fn write_outputs(cfg: &CampaignConfig, run: &CampaignRun) -> Result<Vec<PathBuf>, CampaignError> {
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let rows: Vec<PacketRow> = run.records.iter().map(PacketRow::from_record).collect();
    let mut written = Vec::new();

    let p = dir.join(PACKETS_CSV);
    write_csv(&p, &rows)?;
    written.push(p);

    let p = dir.join(KEYRATE_CSV);
    write_keyrate(cfg, &p)?;
    written.push(p);

    if cfg.dump_pulses {
        let p = dir.join(PULSES_CSV);
        write_pulses(cfg, &p)?;
        written.push(p);
    }

    let p = dir.join(SUMMARY_JSON);
    let json = summary_json(cfg, run, &rows)?;
    let mut f = File::create(&p).map_err(io_err(&p))?;
    f.write_all(json.as_bytes()).map_err(io_err(&p))?;
    written.push(p);
    Ok(written)
}

pub fn write_keyrate(cfg: &CampaignConfig, path: &Path) -> Result<(), CampaignError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    write_csv(path, keyrate_rows(cfg, cfg.v_a)?)
}
