//! Campaign configuration: defaults, flat `key = value` files and overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::channel::{ChannelConfig, DEFAULT_ALPHA_DB_PER_KM};
use crate::estimation::FitOptions;
use crate::pipeline::PipelineConfig;
use crate::receiver::DetectorConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{origin}: unknown key `{key}`")]
    UnknownKey { key: String, origin: String },
    #[error("{origin}: cannot parse `{value}` for `{field}`: {reason}")]
    BadValue {
        field: String,
        value: String,
        reason: String,
        origin: String,
    },
    #[error("{origin}: expected `key = value`, got `{text}`")]
    Syntax { text: String, origin: String },
    #[error("`{field}` out of range: {reason}")]
    OutOfRange { field: &'static str, reason: String },
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    /// The configuration key the error is about, when there is one.
    pub fn field(&self) -> Option<&str> {
        match self {
            Self::UnknownKey { key, .. } => Some(key),
            Self::BadValue { field, .. } => Some(field),
            Self::OutOfRange { field, .. } => Some(field),
            Self::Syntax { .. } | Self::Io { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    InProcess,
    SessionLoopback,
    SessionTcp,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "in-process" => Ok(Self::InProcess),
            "session-loopback" => Ok(Self::SessionLoopback),
            "session-tcp" => Ok(Self::SessionTcp),
            _ => Err("expected in-process, session-loopback or session-tcp".into()),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::InProcess => "in-process",
            Self::SessionLoopback => "session-loopback",
            Self::SessionTcp => "session-tcp",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignConfig {
    pub packets: u32,
    pub pulses_per_packet: usize,
    pub v_a: f64,
    pub eta: f64,
    pub epsilon: f64,
    pub xi: f64,
    pub t: f64,
    pub beta: f64,
    pub reveal_fraction: f64,
    pub alpha_db_per_km: f64,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub mode: Mode,
    /// Also write every pulse of every packet to `pulses.csv`.
    pub dump_pulses: bool,
    /// Pin every packet's rotation angle (test hook).
    pub force_theta: Option<f64>,
    pub rep_rate_hz: f64,
    pub keyrate_max_km: f64,
    pub keyrate_step_km: f64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            packets: 1000,
            pulses_per_packet: p.pulses_per_packet,
            v_a: p.channel.v_a,
            eta: p.detector.eta,
            epsilon: p.detector.epsilon,
            xi: p.channel.xi,
            t: p.channel.t,
            beta: p.beta,
            reveal_fraction: p.reveal_fraction,
            alpha_db_per_km: DEFAULT_ALPHA_DB_PER_KM,
            master_seed: p.master_seed,
            output_dir: PathBuf::from("out"),
            mode: Mode::InProcess,
            dump_pulses: false,
            force_theta: None,
            rep_rate_hz: 1e6,
            keyrate_max_km: 100.0,
            keyrate_step_km: 1.0,
        }
    }
}

pub const KEYS: &[&str] = &[
    "packets",
    "pulses_per_packet",
    "v_a",
    "eta",
    "epsilon",
    "xi",
    "t",
    "beta",
    "reveal_fraction",
    "alpha_db_per_km",
    "master_seed",
    "output_dir",
    "mode",
    "dump_pulses",
    "force_theta",
    "rep_rate_hz",
    "keyrate_max_km",
    "keyrate_step_km",
];

fn parse<T: FromStr>(field: &str, value: &str, origin: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        field: field.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
        origin: origin.to_string(),
    })
}

impl CampaignConfig {
    /// Sets one field from its textual value. `origin` labels errors
    /// (a file and line, or a flag).
    pub fn set(&mut self, key: &str, value: &str, origin: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key {
            "packets" => self.packets = parse(key, v, origin)?,
            "pulses_per_packet" => self.pulses_per_packet = parse(key, v, origin)?,
            "v_a" => self.v_a = parse(key, v, origin)?,
            "eta" => self.eta = parse(key, v, origin)?,
            "epsilon" => self.epsilon = parse(key, v, origin)?,
            "xi" => self.xi = parse(key, v, origin)?,
            "t" => self.t = parse(key, v, origin)?,
            "beta" => self.beta = parse(key, v, origin)?,
            "reveal_fraction" => self.reveal_fraction = parse(key, v, origin)?,
            "alpha_db_per_km" => self.alpha_db_per_km = parse(key, v, origin)?,
            "master_seed" => self.master_seed = parse(key, v, origin)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            "mode" => self.mode = parse(key, v, origin)?,
            "dump_pulses" => self.dump_pulses = parse(key, v, origin)?,
            "force_theta" => {
                self.force_theta = match v {
                    "" | "none" => None,
                    _ => Some(parse(key, v, origin)?),
                }
            }
            "rep_rate_hz" => self.rep_rate_hz = parse(key, v, origin)?,
            "keyrate_max_km" => self.keyrate_max_km = parse(key, v, origin)?,
            "keyrate_step_km" => self.keyrate_step_km = parse(key, v, origin)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    key: key.to_string(),
                    origin: origin.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Applies a flat `key = value` text. Blank lines and `#` comments are
    /// ignored. `name` labels errors.
    pub fn apply_text(&mut self, text: &str, name: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let origin = format!("{name}:{}", n + 1);
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                text: line.to_string(),
                origin: origin.clone(),
            })?;
            self.set(k.trim(), v, &origin)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Defaults, then the optional file, then `overrides` in order. Flags
    /// therefore win over the file.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        if let Some(f) = file {
            cfg.apply_file(f)?;
        }
        for (k, v) in overrides {
            cfg.set(k, v, &format!("--{}", k.replace('_', "-")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn check(ok: bool, field: &'static str, reason: impl FnOnce() -> String) -> Result<(), ConfigError> {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::OutOfRange { field, reason: reason() })
            }
        }
        let unit = |x: f64| x > 0.0 && x <= 1.0;
        check(self.packets >= 1, "packets", || "must be at least 1".into())?;
        check(
            self.pulses_per_packet >= 1 && u32::try_from(self.pulses_per_packet).is_ok(),
            "pulses_per_packet",
            || format!("must lie in [1, 2^32), got {}", self.pulses_per_packet),
        )?;
        check(self.v_a > 0.0 && self.v_a.is_finite(), "v_a", || {
            format!("must be positive, got {}", self.v_a)
        })?;
        check(unit(self.eta), "eta", || format!("must lie in (0, 1], got {}", self.eta))?;
        check(self.epsilon >= 0.0 && self.epsilon.is_finite(), "epsilon", || {
            format!("must be non-negative, got {}", self.epsilon)
        })?;
        check(self.xi >= 0.0 && self.xi.is_finite(), "xi", || {
            format!("must be non-negative, got {}", self.xi)
        })?;
        check(unit(self.t), "t", || format!("must lie in (0, 1], got {}", self.t))?;
        check(unit(self.beta), "beta", || format!("must lie in (0, 1], got {}", self.beta))?;
        check(unit(self.reveal_fraction), "reveal_fraction", || {
            format!("must lie in (0, 1], got {}", self.reveal_fraction)
        })?;
        check(self.alpha_db_per_km >= 0.0 && self.alpha_db_per_km.is_finite(), "alpha_db_per_km", || {
            format!("must be non-negative, got {}", self.alpha_db_per_km)
        })?;
        check(self.force_theta.map_or(true, f64::is_finite), "force_theta", || {
            "must be finite".into()
        })?;
        check(self.rep_rate_hz > 0.0 && self.rep_rate_hz.is_finite(), "rep_rate_hz", || {
            format!("must be positive, got {}", self.rep_rate_hz)
        })?;
        check(self.keyrate_max_km >= 0.0 && self.keyrate_max_km.is_finite(), "keyrate_max_km", || {
            format!("must be non-negative, got {}", self.keyrate_max_km)
        })?;
        check(self.keyrate_step_km > 0.0 && self.keyrate_step_km.is_finite(), "keyrate_step_km", || {
            format!("must be positive, got {}", self.keyrate_step_km)
        })?;
        Ok(())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            channel: ChannelConfig {
                t: self.t,
                xi: self.xi,
                v_a: self.v_a,
            },
            detector: DetectorConfig {
                eta: self.eta,
                epsilon: self.epsilon,
                ..DetectorConfig::default()
            },
            pulses_per_packet: self.pulses_per_packet,
            reveal_fraction: self.reveal_fraction,
            beta: self.beta,
            master_seed: self.master_seed,
            force_theta: self.force_theta,
            fit: FitOptions::default(),
        }
    }

    /// Distances of the key-rate curve, `0, step, 2 step, ..` up to the maximum.
    pub fn keyrate_distances(&self) -> Vec<f64> {
        let n = (self.keyrate_max_km / self.keyrate_step_km + 1e-9).floor() as usize;
        (0..=n).map(|i| i as f64 * self.keyrate_step_km).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let mut c = CampaignConfig::default();
        c.apply_text("", "empty").unwrap();
        assert_eq!(c, CampaignConfig::default());
        assert_eq!(c.packets, 1000);
        assert_eq!(c.pulses_per_packet, 7800);
        assert_eq!((c.v_a, c.eta, c.epsilon, c.xi, c.t, c.beta), (1.16, 0.5, 0.024, 0.0328, 1.0, 0.95));
        assert_eq!(c.reveal_fraction, 0.10);
        assert_eq!(c.alpha_db_per_km, 0.2);
        c.validate().unwrap();
    }

    #[test]
    fn negative_v_a_names_field() {
        let mut c = CampaignConfig::default();
        c.apply_text("v_a = -1", "f").unwrap();
        let e = c.validate().unwrap_err();
        assert_eq!(e.field(), Some("v_a"));
        assert!(e.to_string().contains("v_a"));
    }

    #[test]
    fn unknown_key_names_field() {
        let mut c = CampaignConfig::default();
        let e = c.apply_text("# comment\n\nbogus = 3\n", "cfg.txt").unwrap_err();
        assert_eq!(e.field(), Some("bogus"));
        assert!(e.to_string().contains("cfg.txt:3"));
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        std::fs::write(&path, "packets = 1000\nmode = session-loopback\n").unwrap();
        let c = CampaignConfig::load(Some(&path), &[("packets".into(), "10".into())]).unwrap();
        assert_eq!(c.packets, 10);
        assert_eq!(c.mode, Mode::SessionLoopback);
    }

    #[test]
    fn bad_value_names_field() {
        let mut c = CampaignConfig::default();
        let e = c.apply_text("eta = half", "f").unwrap_err();
        assert_eq!(e.field(), Some("eta"));
        let e = c.apply_text("mode = carrier-pigeon", "f").unwrap_err();
        assert_eq!(e.field(), Some("mode"));
        assert!(c.apply_text("no equals sign", "f").is_err());
    }

    #[test]
    fn distances() {
        let c = CampaignConfig {
            keyrate_max_km: 2.0,
            keyrate_step_km: 0.5,
            ..Default::default()
        };
        assert_eq!(c.keyrate_distances(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    }
}
