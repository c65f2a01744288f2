//! Seeded random streams.
//!
//! Every packet owns a fixed set of ChaCha20 streams keyed by the campaign's
//! master seed. The stream number is `packet_id * STREAMS_PER_PACKET + role`,
//! so any packet can be regenerated on its own, in any order, on any thread.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type SimRng = ChaCha20Rng;

/// What a packet stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamRole {
    /// Alice's Gaussian quadratures.
    Encoding = 0,
    /// The per-packet polarization transformation.
    Polarization = 1,
    /// Shot, electronic and excess noise at Bob's detector.
    Measurement = 2,
    /// Choice of the revealed subset.
    Reveal = 3,
}

pub const STREAMS_PER_PACKET: u64 = 4;

pub fn packet_stream(master_seed: u64, packet_id: u64, role: StreamRole) -> SimRng {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(packet_id.wrapping_mul(STREAMS_PER_PACKET).wrapping_add(role as u64));
    rng
}
