use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use paqkd::campaign::run::campaign_from_sessions;
use paqkd::campaign::{self, CampaignConfig, CampaignError};
use paqkd::protocol::{run_alice, run_bob};

#[derive(Parser)]
#[command(name = "paqkd", version, about = "Polarization-agnostic GMCS CVQKD campaign simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign and write packets.csv, keyrate.csv and summary.json.
    Simulate(ConfigArgs),
    /// Write figure datasets from a finished campaign's packets.csv.
    Figures(ConfigArgs),
    /// Write only the key-rate curve.
    Keyrate(ConfigArgs),
    /// Connect to Bob over TCP, run the campaign packets and write the outputs.
    SessionAlice {
        /// Bob's address, e.g. 127.0.0.1:7400.
        #[arg(long)]
        connect: String,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Listen for one Alice session over TCP and serve it.
    SessionBob {
        /// Address to listen on, e.g. 127.0.0.1:7400.
        #[arg(long)]
        listen: String,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

/// Campaign settings. Each flag overrides the same key in `--config`.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    packets: Option<String>,
    #[arg(long)]
    pulses_per_packet: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    v_a: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    eta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    epsilon: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    xi: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    t: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    reveal_fraction: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    alpha_db_per_km: Option<String>,
    #[arg(long)]
    master_seed: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
    /// in-process, session-loopback or session-tcp.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    dump_pulses: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    force_theta: Option<String>,
    #[arg(long)]
    rep_rate_hz: Option<String>,
    #[arg(long)]
    keyrate_max_km: Option<String>,
    #[arg(long)]
    keyrate_step_km: Option<String>,
}

impl ConfigArgs {
    fn overrides(&self) -> Vec<(String, String)> {
        let pairs = [
            ("packets", &self.packets),
            ("pulses_per_packet", &self.pulses_per_packet),
            ("v_a", &self.v_a),
            ("eta", &self.eta),
            ("epsilon", &self.epsilon),
            ("xi", &self.xi),
            ("t", &self.t),
            ("beta", &self.beta),
            ("reveal_fraction", &self.reveal_fraction),
            ("alpha_db_per_km", &self.alpha_db_per_km),
            ("master_seed", &self.master_seed),
            ("output_dir", &self.output_dir),
            ("mode", &self.mode),
            ("dump_pulses", &self.dump_pulses),
            ("force_theta", &self.force_theta),
            ("rep_rate_hz", &self.rep_rate_hz),
            ("keyrate_max_km", &self.keyrate_max_km),
            ("keyrate_step_km", &self.keyrate_step_km),
        ];
        pairs
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }

    fn load(&self) -> Result<CampaignConfig, Failure> {
        CampaignConfig::load(self.config.as_deref(), &self.overrides()).map_err(|e| Failure::Config(e.to_string()))
    }
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Runtime(String),
}

impl From<CampaignError> for Failure {
    fn from(e: CampaignError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Runtime(e.to_string())
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn print_run(run: &campaign::CampaignRun) {
    let rows: Vec<_> = run.records.iter().map(campaign::PacketRow::from_record).collect();
    let cols = campaign::output::column_summaries(&rows);
    let get = |n: &str| cols.iter().find(|c| c.name == n).map_or(f64::NAN, |c| c.mean);
    println!(
        "packets={} converged={} mean_r2_corrected={:.4} mean_xi={:.4} mean_v_b_x={:.4}",
        rows.len(),
        rows.iter().filter(|r| r.converged).count(),
        get("r2_corrected"),
        get("xi_est"),
        get("v_b_x"),
    );
}

/// Bob may still be starting up; keep trying for a few seconds.
fn connect_with_retry(addr: &str) -> std::io::Result<TcpStream> {
    let mut attempt = 0;
    loop {
        match TcpStream::connect(addr) {
            Err(e) if e.kind() == std::io::ErrorKind::ConnectionRefused && attempt < 50 => {
                attempt += 1;
                std::thread::sleep(Duration::from_millis(100));
            }
            r => return r,
        }
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = args.load()?;
            let (run, paths) = campaign::simulate(&cfg)?;
            print_run(&run);
            print_paths(&paths);
        }
        Command::Figures(args) => {
            let cfg = args.load()?;
            print_paths(&campaign::emit_figures(&cfg)?);
        }
        Command::Keyrate(args) => {
            let cfg = args.load()?;
            let path = cfg.output_dir.join(campaign::output::KEYRATE_CSV);
            campaign::write_keyrate(&cfg, &path)?;
            print_paths(&[path]);
        }
        Command::SessionAlice { connect, config } => {
            let cfg = config.load()?;
            let stream = connect_with_retry(&connect).map_err(runtime)?;
            stream.set_nodelay(true).map_err(runtime)?;
            let records = run_alice(stream, &cfg.pipeline(), 0..cfg.packets).map_err(runtime)?;
            let run = campaign_from_sessions(&cfg, &records)?;
            let paths = campaign::write_outputs(&cfg, &run)?;
            print_run(&run);
            print_paths(&paths);
        }
        Command::SessionBob { listen, config } => {
            let cfg = config.load()?;
            let listener = TcpListener::bind(&listen).map_err(runtime)?;
            eprintln!("listening on {}", listener.local_addr().map_err(runtime)?);
            let (stream, peer) = listener.accept().map_err(runtime)?;
            stream.set_nodelay(true).map_err(runtime)?;
            let reports = run_bob(stream, &cfg.pipeline()).map_err(runtime)?;
            println!("served {} packets for {peer}", reports.len());
        }
    }
    Ok(())
}

fn exit_code(result: &Result<(), Failure>) -> u8 {
    match result {
        Ok(()) => 0,
        Err(Failure::Config(_)) => 2,
        Err(Failure::Runtime(_)) => 3,
    }
}

fn main() -> ExitCode {
    let result = execute(Cli::parse());
    match &result {
        Ok(()) => {}
        Err(Failure::Config(msg)) => eprintln!("config error: {msg}"),
        Err(Failure::Runtime(msg)) => eprintln!("error: {msg}"),
    }
    ExitCode::from(exit_code(&result))
}
