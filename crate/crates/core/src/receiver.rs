//! Bob's single-polarization dual-quadrature homodyne receiver.
//!
//! The detector's 50:50 split and efficiency are folded into one amplitude
//! factor `sqrt(eta / 2)` applied to the attenuated field, so measured
//! variances scale as `eta T / 2`. Shot noise (1 SNU), electronic noise
//! `eps` and the output-referred excess noise are added as one independent
//! Gaussian per quadrature.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::{ChannelConfig, ChannelOutput};
use crate::error::{ensure, Result};
use crate::polarization::ComplexAmplitude;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    /// Detector efficiency in `(0, 1]`.
    pub eta: f64,
    /// Electronic noise in SNU.
    pub epsilon: f64,
    /// Also measure the vertical output with a second detector.
    pub monitor_v: bool,
    /// Include the vacuum (shot) noise term. Only switched off by tests that
    /// need exact data.
    pub shot_noise: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            eta: 0.5,
            epsilon: 0.024,
            monitor_v: false,
            shot_noise: true,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.eta > 0.0 && self.eta <= 1.0, || {
            format!("detector efficiency eta must lie in (0, 1], got {}", self.eta)
        })?;
        ensure(self.epsilon >= 0.0 && self.epsilon.is_finite(), || {
            format!("electronic noise epsilon must be non-negative, got {}", self.epsilon)
        })
    }

    /// Noise variance of a signal-free measurement.
    pub fn vacuum_variance(&self) -> f64 {
        let shot = if self.shot_noise { 1.0 } else { 0.0 };
        shot + self.epsilon
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub x_bh: f64,
    pub p_bh: f64,
    /// Present only when the detector monitors the vertical output.
    pub v: Option<ComplexAmplitude>,
}

/// Overall quadrature amplitude gain from Alice to Bob, `sqrt(eta T / 2)`.
pub fn channel_gain(eta: f64, t: f64) -> f64 {
    (eta * t / 2.0).sqrt()
}

pub fn measure<R: Rng + ?Sized>(
    chan_out: &ChannelOutput,
    det: &DetectorConfig,
    cfg: &ChannelConfig,
    rng: &mut R,
) -> Result<Measurement> {
    det.validate()?;
    cfg.validate()?;
    let sampler = NoiseSampler::new(det, chan_out);
    Ok(sampler.measure(chan_out, det.monitor_v, rng))
}

/// Precomputed scale factors for measuring many pulses of one packet.
#[derive(Debug, Clone, Copy)]
pub(crate) struct NoiseSampler {
    amplitude: f64,
    sigma: f64,
}

impl NoiseSampler {
    pub(crate) fn new(det: &DetectorConfig, chan_out: &ChannelOutput) -> Self {
        let variance = det.vacuum_variance() + chan_out.measured_excess_variance(det.eta);
        Self {
            amplitude: (det.eta / 2.0).sqrt(),
            sigma: variance.sqrt(),
        }
    }

    pub(crate) fn measure<R: Rng + ?Sized>(
        &self,
        chan_out: &ChannelOutput,
        monitor_v: bool,
        rng: &mut R,
    ) -> Measurement {
        let a = &chan_out.attenuated;
        let mut noise = || -> f64 {
            let z: f64 = StandardNormal.sample(rng);
            self.sigma * z
        };
        let x_bh = self.amplitude * a.h.x + noise();
        let p_bh = self.amplitude * a.h.p + noise();
        let v = monitor_v.then(|| {
            ComplexAmplitude::new(self.amplitude * a.v.x + noise(), self.amplitude * a.v.p + noise())
        });
        Measurement { x_bh, p_bh, v }
    }
}

/// Sample variance of `n_samples` signal-free (blocked-port) measurements.
pub fn calibrate_shot_noise<R: Rng + ?Sized>(
    det: &DetectorConfig,
    rng: &mut R,
    n_samples: usize,
) -> Result<f64> {
    det.validate()?;
    ensure(n_samples >= 2, || format!("need at least 2 samples, got {n_samples}"))?;
    let sigma = det.vacuum_variance().sqrt();
    let draws: Vec<f64> = (0..n_samples)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        })
        .collect();
    Ok(crate::stats::sample_variance(&draws))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::propagate;
    use crate::encoding::sample_encoding;
    use crate::polarization::{DualPolState, PolarizationParams};
    use crate::stats::sample_variance;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn measured_variance(v_a: f64, cfg: ChannelConfig, det: DetectorConfig, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let params = PolarizationParams::new(0.7, 1.3, 0.4);
        let (mut xs, mut ps) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let enc = if v_a > 0.0 { sample_encoding(&mut rng, v_a).unwrap() } else { DualPolState::default() };
            let out = propagate(&enc, params, &cfg).unwrap();
            let m = measure(&out, &det, &cfg, &mut rng).unwrap();
            xs.push(m.x_bh);
            ps.push(m.p_bh);
        }
        (sample_variance(&xs), sample_variance(&ps))
    }

    #[test]
    fn pure_shot_noise() {
        let cfg = ChannelConfig { t: 1.0, xi: 0.0, v_a: 1.0 };
        let det = DetectorConfig { epsilon: 0.0, ..Default::default() };
        let (vx, vp) = measured_variance(0.0, cfg, det, 100_000, 1);
        assert!((vx - 1.0).abs() < 0.03 && (vp - 1.0).abs() < 0.03);
    }

    #[test]
    fn perfect_detector_variance() {
        // (1/2) * 2 + 1 = 2
        let cfg = ChannelConfig { t: 1.0, xi: 0.0, v_a: 2.0 };
        let det = DetectorConfig { eta: 1.0, epsilon: 0.0, ..Default::default() };
        let (vx, vp) = measured_variance(2.0, cfg, det, 100_000, 2);
        assert!((vx / 2.0 - 1.0).abs() < 0.03 && (vp / 2.0 - 1.0).abs() < 0.03);
    }

    #[test]
    fn bob_variance_follows_model() {
        for (seed, (v_a, t, eta, xi, eps)) in [
            (1.16, 1.0, 0.5, 0.0328, 0.024),
            (5.0, 0.3, 0.8, 0.1, 0.05),
            (0.5, 0.7, 0.6, 0.0, 0.1),
        ]
        .into_iter()
        .enumerate()
        {
            let cfg = ChannelConfig { t, xi, v_a };
            let det = DetectorConfig { eta, epsilon: eps, ..Default::default() };
            let expect = eta * t / 2.0 * (v_a + xi) + 1.0 + eps;
            let (vx, vp) = measured_variance(v_a, cfg, det, 100_000, 10 + seed as u64);
            assert!((vx / expect - 1.0).abs() < 0.03, "{vx} vs {expect}");
            assert!((vp / expect - 1.0).abs() < 0.03, "{vp} vs {expect}");
        }
    }

    #[test]
    fn monitored_vertical_output() {
        let cfg = ChannelConfig::default();
        let det = DetectorConfig { monitor_v: true, ..Default::default() };
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let out = propagate(&DualPolState::default(), PolarizationParams::IDENTITY, &cfg).unwrap();
        assert!(measure(&out, &det, &cfg, &mut rng).unwrap().v.is_some());
        let det = DetectorConfig::default();
        assert!(measure(&out, &det, &cfg, &mut rng).unwrap().v.is_none());
    }

    #[test]
    fn noiseless_hook_reproduces_scaled_field() {
        let cfg = ChannelConfig { t: 0.64, xi: 0.0, v_a: 1.0 };
        let det = DetectorConfig { eta: 0.5, epsilon: 0.0, monitor_v: true, shot_noise: false };
        let enc = DualPolState::from_quadratures(1.0, 2.0, -1.0, 0.5);
        let out = propagate(&enc, PolarizationParams::IDENTITY, &cfg).unwrap();
        let m = measure(&out, &det, &cfg, &mut ChaCha20Rng::seed_from_u64(0)).unwrap();
        let g = channel_gain(0.5, 0.64);
        assert!((m.x_bh - g * 1.0).abs() < 1e-15 && (m.p_bh - g * 2.0).abs() < 1e-15);
    }

    #[test]
    fn calibration() {
        let det = DetectorConfig { epsilon: 0.024, ..Default::default() };
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let v = calibrate_shot_noise(&det, &mut rng, 1_000_000).unwrap();
        assert!((v - 1.024).abs() < 0.005, "{v}");
        let det0 = DetectorConfig { epsilon: 0.0, ..Default::default() };
        let v0 = calibrate_shot_noise(&det0, &mut rng, 1_000_000).unwrap();
        assert!((v0 - 1.0).abs() < 0.005, "{v0}");
        let a = calibrate_shot_noise(&det, &mut ChaCha20Rng::seed_from_u64(8), 100).unwrap();
        let b = calibrate_shot_noise(&det, &mut ChaCha20Rng::seed_from_u64(8), 100).unwrap();
        assert_eq!(a, b);
        assert!(calibrate_shot_noise(&det, &mut rng, 1).is_err());
    }

    #[test]
    fn invalid_detector_rejected() {
        let cfg = ChannelConfig::default();
        let out = propagate(&DualPolState::default(), PolarizationParams::IDENTITY, &cfg).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        for det in [
            DetectorConfig { eta: 0.0, ..Default::default() },
            DetectorConfig { eta: 1.2, ..Default::default() },
            DetectorConfig { epsilon: -0.1, ..Default::default() },
        ] {
            assert!(measure(&out, &det, &cfg, &mut rng).is_err());
        }
    }
}
