//! Alice/Bob choreography over a [`Transport`].
//!
//! ```text
//! Alice                         Bob
//!   HELLO ------------------->     (checked against Bob's config)
//!   per packet:
//!   PACKET_META ------------->
//!               <------------- REVEAL_SET
//!   PARAM_ESTIMATE ---------->
//!               <------------- KEYRATE_REPORT  (Alice checks it against her own)
//!   end of stream ----------->     (Bob returns)
//! ```
//!
//! The optical link is not carried on the wire. Bob regenerates his
//! measurements of packet `n` from the shared master seed, so both endpoints
//! must be built from the same [`PipelineConfig`].

use std::ops::Range;

use thiserror::Error;

use super::frame::{read_frame, write_frame, FrameError, MessageBody, MessageType};
use super::transport::Transport;
use crate::estimation::EstimationResult;
use crate::pipeline::{estimate, KeyRateSummary, PipelineConfig};
use crate::polarization::PolarizationParams;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("packet {packet_id:?}: {source}")]
    Frame {
        packet_id: Option<u32>,
        #[source]
        source: FrameError,
    },
    #[error("packet {packet_id:?}: expected {expected}, got {got:?}")]
    ProtocolOrder {
        packet_id: Option<u32>,
        expected: &'static str,
        got: MessageType,
    },
    #[error("packet {packet_id:?}: peer closed the stream while {expected} was expected")]
    UnexpectedEof {
        packet_id: Option<u32>,
        expected: &'static str,
    },
    #[error("packet {expected}: peer sent a message for packet {got}")]
    PacketMismatch { expected: u32, got: u32 },
    #[error("session parameters differ: {0}")]
    ConfigMismatch(String),
    #[error("packet {packet_id}: peer's key-rate report differs from the local one")]
    KeyRateMismatch { packet_id: u32 },
    #[error("packet {packet_id:?}: {source}")]
    Pipeline {
        packet_id: Option<u32>,
        #[source]
        source: crate::Error,
    },
    #[error("{0} thread panicked")]
    Panicked(&'static str),
}

impl SessionError {
    pub fn packet_id(&self) -> Option<u32> {
        match self {
            Self::Frame { packet_id, .. }
            | Self::ProtocolOrder { packet_id, .. }
            | Self::UnexpectedEof { packet_id, .. }
            | Self::Pipeline { packet_id, .. } => *packet_id,
            Self::PacketMismatch { expected, .. } => Some(*expected),
            Self::KeyRateMismatch { packet_id } => Some(*packet_id),
            Self::ConfigMismatch(_) | Self::Panicked(_) => None,
        }
    }
}

/// Alice's log entry for one packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionRecord {
    pub packet_id: u32,
    /// `None` when the fit failed; NaN estimates were sent in that case.
    pub estimate: Option<EstimationResult>,
    pub keyrate: KeyRateSummary,
}

fn send<T: Transport + ?Sized>(t: &mut T, body: &MessageBody, packet_id: Option<u32>) -> Result<(), SessionError> {
    write_frame(t, body).map_err(|source| SessionError::Frame { packet_id, source })
}

fn recv<T: Transport + ?Sized>(
    t: &mut T,
    packet_id: Option<u32>,
    expected: &'static str,
) -> Result<MessageBody, SessionError> {
    read_frame(t)
        .map_err(|source| SessionError::Frame { packet_id, source })?
        .ok_or(SessionError::UnexpectedEof { packet_id, expected })
}

fn check_id(expected: u32, got: u32) -> Result<(), SessionError> {
    if expected != got {
        return Err(SessionError::PacketMismatch { expected, got });
    }
    Ok(())
}

fn pipeline_err(packet_id: u32) -> impl FnOnce(crate::Error) -> SessionError {
    move |source| SessionError::Pipeline {
        packet_id: Some(packet_id),
        source,
    }
}

fn hello(cfg: &PipelineConfig) -> Result<MessageBody, SessionError> {
    let packet_size = u32::try_from(cfg.pulses_per_packet)
        .map_err(|_| SessionError::ConfigMismatch(format!("packet size {} exceeds u32", cfg.pulses_per_packet)))?;
    Ok(MessageBody::Hello {
        v_a: cfg.channel.v_a,
        packet_size,
        reveal_fraction: cfg.reveal_fraction,
    })
}

/// Alice's endpoint: drives packets `ids` and returns one record per packet.
pub fn run_alice<T: Transport>(
    mut t: T,
    cfg: &PipelineConfig,
    ids: Range<u32>,
) -> Result<Vec<SessionRecord>, SessionError> {
    cfg.validate().map_err(|source| SessionError::Pipeline { packet_id: None, source })?;
    send(&mut t, &hello(cfg)?, None)?;
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let pid = Some(id);
        let packet = cfg.alice_packet(u64::from(id)).map_err(pipeline_err(id))?;
        send(
            &mut t,
            &MessageBody::PacketMeta {
                packet_id: id,
                pulse_count: packet.pulses.len() as u32,
            },
            pid,
        )?;

        let (indices, measurements) = match recv(&mut t, pid, "REVEAL_SET")? {
            MessageBody::RevealSet {
                packet_id,
                indices,
                measurements,
            } => {
                check_id(id, packet_id)?;
                (indices, measurements)
            }
            other => {
                return Err(SessionError::ProtocolOrder {
                    packet_id: pid,
                    expected: "REVEAL_SET",
                    got: other.message_type(),
                })
            }
        };
        let bob: Vec<(f64, f64)> = measurements.chunks_exact(2).map(|c| (c[0], c[1])).collect();
        // a malformed reveal set is the peer's fault, not a fit failure
        let est = match estimate(cfg, &packet, &indices, &bob) {
            Ok(e) => Some(e),
            Err(crate::Error::TooFewPulses { .. } | crate::Error::NumericalDomain(_)) => None,
            Err(e) => return Err(pipeline_err(id)(e)),
        };

        let (p, t_hat, xi_hat) = match est {
            Some(e) => (e.params_hat, e.t_hat, e.xi_hat),
            None => (
                PolarizationParams {
                    theta: f64::NAN,
                    phi: f64::NAN,
                    delta: f64::NAN,
                },
                f64::NAN,
                f64::NAN,
            ),
        };
        send(
            &mut t,
            &MessageBody::ParamEstimate {
                packet_id: id,
                theta: p.theta,
                phi: p.phi,
                delta: p.delta,
                t_hat,
                xi_hat,
            },
            pid,
        )?;
        let local = cfg.keyrate_for(t_hat, xi_hat);

        match recv(&mut t, pid, "KEYRATE_REPORT")? {
            MessageBody::KeyrateReport {
                packet_id,
                i_ab,
                chi_be,
                k,
            } => {
                check_id(id, packet_id)?;
                if !local.bits_eq(&KeyRateSummary { i_ab, chi_be, k }) {
                    return Err(SessionError::KeyRateMismatch { packet_id: id });
                }
            }
            other => {
                return Err(SessionError::ProtocolOrder {
                    packet_id: pid,
                    expected: "KEYRATE_REPORT",
                    got: other.message_type(),
                })
            }
        }
        out.push(SessionRecord {
            packet_id: id,
            estimate: est,
            keyrate: local,
        });
    }
    t.finish()
        .map_err(|e| SessionError::Frame {
            packet_id: None,
            source: e.into(),
        })?;
    Ok(out)
}

/// Bob's endpoint: serves packets until Alice closes the stream. Returns the
/// key-rate reports Bob sent, in order.
pub fn run_bob<T: Transport>(mut t: T, cfg: &PipelineConfig) -> Result<Vec<(u32, KeyRateSummary)>, SessionError> {
    cfg.validate().map_err(|source| SessionError::Pipeline { packet_id: None, source })?;
    let expected = hello(cfg)?;
    match recv(&mut t, None, "HELLO")? {
        body @ MessageBody::Hello { .. } => {
            if !hello_matches(&body, &expected) {
                return Err(SessionError::ConfigMismatch(format!(
                    "Alice announced {body:?}, Bob is configured for {expected:?}"
                )));
            }
        }
        other => {
            return Err(SessionError::ProtocolOrder {
                packet_id: other.packet_id(),
                expected: "HELLO",
                got: other.message_type(),
            })
        }
    }

    let mut reports = Vec::new();
    loop {
        let (id, pulse_count) = match read_frame(&mut t) {
            Ok(None) => break,
            Ok(Some(MessageBody::PacketMeta { packet_id, pulse_count })) => (packet_id, pulse_count),
            Ok(Some(other)) => {
                return Err(SessionError::ProtocolOrder {
                    packet_id: other.packet_id(),
                    expected: "PACKET_META",
                    got: other.message_type(),
                })
            }
            Err(source) => return Err(SessionError::Frame { packet_id: None, source }),
        };
        let pid = Some(id);
        if pulse_count as usize != cfg.pulses_per_packet {
            return Err(SessionError::ConfigMismatch(format!(
                "packet {id} has {pulse_count} pulses, expected {}",
                cfg.pulses_per_packet
            )));
        }
        let sim = cfg.simulate(u64::from(id)).map_err(pipeline_err(id))?;
        let (indices, pairs) = sim.bob_reveal();
        send(
            &mut t,
            &MessageBody::RevealSet {
                packet_id: id,
                indices,
                measurements: pairs.iter().flat_map(|&(x, p)| [x, p]).collect(),
            },
            pid,
        )?;

        let (t_hat, xi_hat) = match recv(&mut t, pid, "PARAM_ESTIMATE")? {
            MessageBody::ParamEstimate {
                packet_id,
                t_hat,
                xi_hat,
                ..
            } => {
                check_id(id, packet_id)?;
                (t_hat, xi_hat)
            }
            other => {
                return Err(SessionError::ProtocolOrder {
                    packet_id: pid,
                    expected: "PARAM_ESTIMATE",
                    got: other.message_type(),
                })
            }
        };
        let kr = cfg.keyrate_for(t_hat, xi_hat);
        send(
            &mut t,
            &MessageBody::KeyrateReport {
                packet_id: id,
                i_ab: kr.i_ab,
                chi_be: kr.chi_be,
                k: kr.k,
            },
            pid,
        )?;
        reports.push((id, kr));
    }
    Ok(reports)
}

fn hello_matches(a: &MessageBody, b: &MessageBody) -> bool {
    match (a, b) {
        (
            MessageBody::Hello {
                v_a: va,
                packet_size: na,
                reveal_fraction: fa,
            },
            MessageBody::Hello {
                v_a: vb,
                packet_size: nb,
                reveal_fraction: fb,
            },
        ) => va.to_bits() == vb.to_bits() && na == nb && fa.to_bits() == fb.to_bits(),
        _ => false,
    }
}

/// Runs both endpoints on scoped threads over a connected transport pair.
pub fn run_session<A: Transport, B: Transport>(
    alice: A,
    bob: B,
    cfg: &PipelineConfig,
    ids: Range<u32>,
) -> Result<Vec<SessionRecord>, SessionError> {
    std::thread::scope(|s| {
        let bob_handle = s.spawn(|| run_bob(bob, cfg));
        let alice_result = run_alice(alice, cfg, ids);
        let bob_result = bob_handle.join().map_err(|_| SessionError::Panicked("bob"));
        let records = alice_result?;
        bob_result??;
        Ok(records)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::transport::loopback_pair;

    fn cfg() -> PipelineConfig {
        PipelineConfig {
            pulses_per_packet: 600,
            ..Default::default()
        }
    }

    #[test]
    fn zero_packets_is_clean() {
        let (a, b) = loopback_pair();
        assert!(run_session(a, b, &cfg(), 0..0).unwrap().is_empty());
    }

    #[test]
    fn matches_direct_calls() {
        let c = cfg();
        let (a, b) = loopback_pair();
        let recs = run_session(a, b, &c, 0..3).unwrap();
        assert_eq!(recs.len(), 3);
        for r in recs {
            let sim = c.simulate(u64::from(r.packet_id)).unwrap();
            let (idx, bob) = sim.bob_reveal();
            let direct = estimate(&c, &sim.packet, &idx, &bob).unwrap();
            assert_eq!(r.estimate, Some(direct));
            assert!(r.keyrate.bits_eq(&c.keyrate_for(direct.t_hat, direct.xi_hat)));
        }
    }

    #[test]
    fn reveal_before_meta_is_an_order_error() {
        let c = cfg();
        let (mut alice, bob) = loopback_pair();
        let bob_thread = std::thread::spawn(move || run_bob(bob, &c));
        write_frame(&mut alice, &hello(&c).unwrap()).unwrap();
        write_frame(
            &mut alice,
            &MessageBody::RevealSet {
                packet_id: 0,
                indices: vec![],
                measurements: vec![],
            },
        )
        .unwrap();
        alice.finish().unwrap();
        let err = bob_thread.join().unwrap().unwrap_err();
        assert!(matches!(
            err,
            SessionError::ProtocolOrder {
                expected: "PACKET_META",
                got: MessageType::RevealSet,
                ..
            }
        ));
        assert_eq!(err.packet_id(), Some(0));
    }

    #[test]
    fn mismatched_hello_is_rejected() {
        let (a, b) = loopback_pair();
        let other = PipelineConfig {
            reveal_fraction: 0.2,
            ..cfg()
        };
        let bob_thread = std::thread::spawn(move || run_bob(b, &other));
        let alice_result = run_alice(a, &cfg(), 0..2);
        assert!(matches!(bob_thread.join().unwrap(), Err(SessionError::ConfigMismatch(_))));
        assert!(alice_result.is_err());
    }
}
