//! Multi-packet campaigns in each execution mode.

use std::net::{TcpListener, TcpStream};

use rayon::prelude::*;

use super::config::{CampaignConfig, Mode};
use super::CampaignError;
use crate::encoding::mean_photon_number_per_mode;
use crate::pipeline::{evaluate, run_packet, PacketRecord, PipelineConfig};
use crate::protocol::{loopback_pair, run_session, SessionRecord};

/// Packets handled by one session when a campaign runs over the protocol.
pub const PACKETS_PER_SESSION: u32 = 50;

#[derive(Debug, Clone)]
pub struct CampaignRun {
    pub records: Vec<PacketRecord>,
    /// Mean photon number of Alice's `(h, v)` modes, per packet.
    pub photon_numbers: Vec<(f64, f64)>,
}

pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignRun, CampaignError> {
    cfg.validate()?;
    let pcfg = cfg.pipeline();
    pcfg.validate()?;
    let rows: Vec<(PacketRecord, (f64, f64))> = match cfg.mode {
        Mode::InProcess => (0..cfg.packets)
            .into_par_iter()
            .map(|id| {
                let (sim, rec) = run_packet(&pcfg, u64::from(id))?;
                Ok((rec, mean_photon_number_per_mode(&sim.packet.pulses)))
            })
            .collect::<Result<_, crate::Error>>()?,
        Mode::SessionLoopback | Mode::SessionTcp => {
            let sessions = session_records(&pcfg, cfg.packets, cfg.mode)?;
            evaluate_session_records(&pcfg, &sessions)?
        }
    };
    let (records, photon_numbers) = rows.into_iter().unzip();
    Ok(CampaignRun { records, photon_numbers })
}

/// Campaign results from session records obtained elsewhere (e.g. a TCP
/// session with a remote Bob).
pub fn campaign_from_sessions(cfg: &CampaignConfig, sessions: &[SessionRecord]) -> Result<CampaignRun, CampaignError> {
    let rows = evaluate_session_records(&cfg.pipeline(), sessions)?;
    let (records, photon_numbers) = rows.into_iter().unzip();
    Ok(CampaignRun { records, photon_numbers })
}

fn shards(packets: u32) -> Vec<std::ops::Range<u32>> {
    (0..packets)
        .step_by(PACKETS_PER_SESSION as usize)
        .map(|start| start..start.saturating_add(PACKETS_PER_SESSION).min(packets))
        .collect()
}

fn tcp_pair() -> std::io::Result<(TcpStream, TcpStream)> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let alice = TcpStream::connect(listener.local_addr()?)?;
    let (bob, _) = listener.accept()?;
    // request/response traffic of small frames stalls under Nagle
    alice.set_nodelay(true)?;
    bob.set_nodelay(true)?;
    Ok((alice, bob))
}

/// Runs the protocol for packets `0..packets`, several sessions in parallel.
pub fn session_records(pcfg: &PipelineConfig, packets: u32, mode: Mode) -> Result<Vec<SessionRecord>, CampaignError> {
    let per_shard: Vec<Vec<SessionRecord>> = shards(packets)
        .into_par_iter()
        .map(|ids| -> Result<_, CampaignError> {
            Ok(match mode {
                Mode::SessionTcp => {
                    let (a, b) = tcp_pair().map_err(|e| CampaignError::Io {
                        path: "127.0.0.1".into(),
                        source: e,
                    })?;
                    run_session(a, b, pcfg, ids)?
                }
                _ => {
                    let (a, b) = loopback_pair();
                    run_session(a, b, pcfg, ids)?
                }
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(per_shard.into_iter().flatten().collect())
}

/// Per-packet statistics for estimates that came over the protocol.
pub fn evaluate_session_records(
    pcfg: &PipelineConfig,
    sessions: &[SessionRecord],
) -> Result<Vec<(PacketRecord, (f64, f64))>, CampaignError> {
    Ok(sessions
        .par_iter()
        .map(|s| {
            let sim = pcfg.simulate(u64::from(s.packet_id))?;
            let rec = evaluate(&sim, s.estimate.as_ref())?;
            Ok((rec, mean_photon_number_per_mode(&sim.packet.pulses)))
        })
        .collect::<Result<_, crate::Error>>()?)
}
