//! Alice's Gaussian source and packet assembly.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{ensure, Error, Result};
use crate::polarization::DualPolState;

pub const DEFAULT_PULSES_PER_PACKET: usize = 7800;
pub const DEFAULT_REP_PERIOD_US: f64 = 1.0;

/// Alice's four encoded quadratures for one pulse, `(X_ah, P_ah)` on H and
/// `(X_av, P_av)` on V.
pub type AliceEncoding = DualPolState;

/// A block of pulses sharing one polarization transformation.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub packet_id: u64,
    pub pulses: Vec<AliceEncoding>,
    pub rep_period_us: f64,
}

impl Packet {
    pub fn pulse_count(&self) -> usize {
        self.pulses.len()
    }

    /// Wall-clock span of the packet at its repetition period.
    pub fn duration_us(&self) -> f64 {
        self.pulses.len() as f64 * self.rep_period_us
    }
}

fn quadrature_dist(v_a: f64) -> Result<Normal<f64>> {
    ensure(v_a > 0.0 && v_a.is_finite(), || {
        format!("modulation variance v_a must be positive, got {v_a}")
    })?;
    Normal::new(0.0, v_a.sqrt()).map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Four independent draws from `N(0, v_a)`.
pub fn sample_encoding<R: Rng + ?Sized>(rng: &mut R, v_a: f64) -> Result<AliceEncoding> {
    let dist = quadrature_dist(v_a)?;
    Ok(draw(rng, &dist))
}

fn draw<R: Rng + ?Sized>(rng: &mut R, dist: &Normal<f64>) -> AliceEncoding {
    let x_h = dist.sample(rng);
    let p_h = dist.sample(rng);
    let x_v = dist.sample(rng);
    let p_v = dist.sample(rng);
    DualPolState::from_quadratures(x_h, p_h, x_v, p_v)
}

pub fn make_packet<R: Rng + ?Sized>(
    rng: &mut R,
    packet_id: u64,
    v_a: f64,
    pulse_count: usize,
) -> Result<Packet> {
    ensure(pulse_count >= 1, || "pulse_count must be at least 1".to_string())?;
    let dist = quadrature_dist(v_a)?;
    let pulses = (0..pulse_count).map(|_| draw(rng, &dist)).collect();
    Ok(Packet {
        packet_id,
        pulses,
        rep_period_us: DEFAULT_REP_PERIOD_US,
    })
}

/// Mean photon number `|alpha|^2 = (x^2 + p^2) / 4` of each polarization
/// mode, `(h, v)`. Converges to `V_A / 2` per mode; the two modes together
/// carry `V_A`.
pub fn mean_photon_number_per_mode(pulses: &[AliceEncoding]) -> (f64, f64) {
    let n = pulses.len().max(1) as f64;
    let (h, v) = pulses.iter().fold((0.0, 0.0), |(h, v), e| {
        (h + e.h.norm_sqr() / 4.0, v + e.v.norm_sqr() / 4.0)
    });
    (h / n, v / n)
}
