//! Per-packet pipeline shared by the in-process campaign and the networked
//! session: simulate, reveal, fit, correct, evaluate.
//!
//! The optical link is simulated from the master seed, so Alice's encodings,
//! the channel draw and Bob's measurements for packet `n` can be rebuilt by
//! either party (or by the evaluator) without exchanging them.

use crate::channel::{propagate_unchecked, ChannelConfig};
use crate::encoding::{make_packet, Packet};
use crate::error::{ensure, Result};
use crate::estimation::{
    correct_alice, fit, matrix_error, phase_only, r_squared, reveal_measurements,
    select_reveal_indices, EstimationResult, FitOptions, RevealedSet,
};
use crate::keyrate::{secret_key_rate, KeyRateInputs, KeyRateResult};
use crate::polarization::{canonicalize, h_row_canonicalize, sample_uniform_transform, PolarizationParams};
use crate::receiver::{DetectorConfig, Measurement, NoiseSampler};
use crate::rng::{packet_stream, StreamRole};
use crate::stats::sample_variance;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub channel: ChannelConfig,
    pub detector: DetectorConfig,
    pub pulses_per_packet: usize,
    pub reveal_fraction: f64,
    pub beta: f64,
    pub master_seed: u64,
    /// Pin the rotation angle of every packet's channel (phases stay random).
    pub force_theta: Option<f64>,
    pub fit: FitOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            channel: ChannelConfig::default(),
            detector: DetectorConfig::default(),
            pulses_per_packet: crate::encoding::DEFAULT_PULSES_PER_PACKET,
            reveal_fraction: crate::estimation::DEFAULT_REVEAL_FRACTION,
            beta: 0.95,
            master_seed: 1,
            force_theta: None,
            fit: FitOptions::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.detector.validate()?;
        ensure(self.pulses_per_packet >= 1, || "pulses_per_packet must be at least 1".into())?;
        ensure(self.reveal_fraction > 0.0 && self.reveal_fraction <= 1.0, || {
            format!("reveal_fraction must lie in (0, 1], got {}", self.reveal_fraction)
        })?;
        ensure(self.beta > 0.0 && self.beta <= 1.0, || format!("beta must lie in (0, 1], got {}", self.beta))?;
        if let Some(t) = self.force_theta {
            ensure(t.is_finite(), || "force_theta must be finite".into())?;
        }
        Ok(())
    }

    /// Alice's stored encodings for one packet.
    pub fn alice_packet(&self, packet_id: u64) -> Result<Packet> {
        let mut rng = packet_stream(self.master_seed, packet_id, StreamRole::Encoding);
        make_packet(&mut rng, packet_id, self.channel.v_a, self.pulses_per_packet)
    }

    /// The channel applied to one packet.
    pub fn channel_truth(&self, packet_id: u64) -> PolarizationParams {
        let mut rng = packet_stream(self.master_seed, packet_id, StreamRole::Polarization);
        let mut p = sample_uniform_transform(&mut rng);
        if let Some(theta) = self.force_theta {
            p.theta = theta;
        }
        canonicalize(p)
    }

    pub fn reveal_indices(&self, packet_id: u64) -> Result<Vec<u32>> {
        let mut rng = packet_stream(self.master_seed, packet_id, StreamRole::Reveal);
        select_reveal_indices(&mut rng, self.pulses_per_packet, self.reveal_fraction)
    }

    /// Runs the optical link for one packet.
    pub fn simulate(&self, packet_id: u64) -> Result<SimulatedPacket> {
        let packet = self.alice_packet(packet_id)?;
        let truth = self.channel_truth(packet_id);
        let measurements = self.measure_packet(&packet, truth);
        Ok(SimulatedPacket {
            packet,
            truth,
            measurements,
            reveal: self.reveal_indices(packet_id)?,
        })
    }

    /// Bob's measurements of `packet` sent through the channel `truth`, using
    /// the packet's measurement stream.
    pub fn measure_packet(&self, packet: &Packet, truth: PolarizationParams) -> Vec<Measurement> {
        let mut rng = packet_stream(self.master_seed, packet.packet_id, StreamRole::Measurement);
        let mut sampler = None;
        packet
            .pulses
            .iter()
            .map(|enc| {
                let out = propagate_unchecked(enc, truth, &self.channel);
                let s = sampler.get_or_insert_with(|| NoiseSampler::new(&self.detector, &out));
                s.measure(&out, self.detector.monitor_v, &mut rng)
            })
            .collect()
    }

    /// Key rate implied by one packet's estimates. Non-physical estimates
    /// (`t > 1`, `xi < 0`) are clipped to the physical boundary; a failed fit
    /// gives `NaN` throughout.
    pub fn keyrate_for(&self, t_hat: f64, xi_hat: f64) -> KeyRateSummary {
        if !(t_hat.is_finite() && xi_hat.is_finite()) {
            return KeyRateSummary::nan();
        }
        let inputs = KeyRateInputs {
            v_a: self.channel.v_a,
            t: t_hat.min(1.0),
            xi: xi_hat.max(0.0),
            eta: self.detector.eta,
            epsilon: self.detector.epsilon,
            beta: self.beta,
        };
        match secret_key_rate(&inputs) {
            Ok(KeyRateResult { i_ab, chi_be, k, .. }) => KeyRateSummary { i_ab, chi_be, k },
            Err(_) => KeyRateSummary::nan(),
        }
    }
}

/// The three numbers both parties log per packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateSummary {
    pub i_ab: f64,
    pub chi_be: f64,
    pub k: f64,
}

impl KeyRateSummary {
    pub fn nan() -> Self {
        Self {
            i_ab: f64::NAN,
            chi_be: f64::NAN,
            k: f64::NAN,
        }
    }

    pub fn bits_eq(&self, other: &Self) -> bool {
        self.i_ab.to_bits() == other.i_ab.to_bits()
            && self.chi_be.to_bits() == other.chi_be.to_bits()
            && self.k.to_bits() == other.k.to_bits()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPacket {
    pub packet: Packet,
    pub truth: PolarizationParams,
    pub measurements: Vec<Measurement>,
    pub reveal: Vec<u32>,
}

impl SimulatedPacket {
    /// What Bob publishes: the revealed indices and his `(x_bh, p_bh)` there.
    pub fn bob_reveal(&self) -> (Vec<u32>, Vec<(f64, f64)>) {
        (self.reveal.clone(), reveal_measurements(&self.measurements, &self.reveal))
    }
}

/// Alice's side of parameter estimation given Bob's published data.
pub fn estimate(
    cfg: &PipelineConfig,
    packet: &Packet,
    indices: &[u32],
    bob: &[(f64, f64)],
) -> Result<EstimationResult> {
    let set = RevealedSet::assemble(packet, indices, bob)?;
    fit(&set, &cfg.detector, &cfg.fit)
}

/// One row of per-packet statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketRecord {
    pub packet_id: u64,
    /// Channel truth in the same gauge as the estimate.
    pub truth: PolarizationParams,
    pub estimate: Option<EstimationResult>,
    pub matrix_err: f64,
    pub r2_uncorrected: f64,
    pub r2_corrected: f64,
    pub v_b_x: f64,
    pub v_b_p: f64,
}

impl PacketRecord {
    pub fn converged(&self) -> bool {
        self.estimate.is_some_and(|e| e.converged)
    }
}

/// Full-packet statistics for one packet given Alice's estimate.
pub fn evaluate(sim: &SimulatedPacket, estimate: Option<&EstimationResult>) -> Result<PacketRecord> {
    let bob_x: Vec<f64> = sim.measurements.iter().map(|m| m.x_bh).collect();
    let bob_p: Vec<f64> = sim.measurements.iter().map(|m| m.p_bh).collect();
    let v_b_x = sample_variance(&bob_x);
    let v_b_p = sample_variance(&bob_p);

    let mut record = PacketRecord {
        packet_id: sim.packet.packet_id,
        truth: h_row_canonicalize(sim.truth),
        estimate: estimate.copied(),
        matrix_err: f64::NAN,
        r2_uncorrected: f64::NAN,
        r2_corrected: f64::NAN,
        v_b_x,
        v_b_p,
    };
    let Some(est) = estimate else {
        return Ok(record);
    };
    if bob_x.len() < 2 {
        return Ok(record);
    }
    record.matrix_err = matrix_error(est.params_hat, sim.truth)?;
    let corrected: Vec<f64> = correct_alice(&sim.packet, est.params_hat)?.iter().map(|s| s.h.x).collect();
    let uncorrected: Vec<f64> = correct_alice(&sim.packet, phase_only(est.params_hat))?
        .iter()
        .map(|s| s.h.x)
        .collect();
    record.r2_corrected = r_squared(&corrected, &bob_x, v_b_x, est.gain_hat)?;
    record.r2_uncorrected = r_squared(&uncorrected, &bob_x, v_b_x, est.gain_hat)?;
    Ok(record)
}

/// In-process pipeline for one packet.
pub fn run_packet(cfg: &PipelineConfig, packet_id: u64) -> Result<(SimulatedPacket, PacketRecord)> {
    let sim = cfg.simulate(packet_id)?;
    let (idx, bob) = sim.bob_reveal();
    let est = estimate(cfg, &sim.packet, &idx, &bob).ok();
    let record = evaluate(&sim, est.as_ref())?;
    Ok((sim, record))
}
