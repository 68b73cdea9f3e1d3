//! Command-line surface and experiment presets.

use std::ffi::OsString;
use std::net::{SocketAddr, ToSocketAddrs};
use std::path::PathBuf;

use clap::{Parser, ValueEnum};

use super::summary::{StabilityOptions, DEFAULT_STABILITY_THRESHOLD};
use super::HarnessError;
use crate::knowledge::{AgentId, WeightingMode};
use crate::neural::{LossCoefficients, ShapeSpec};
use crate::runtime::{AgentConfig, GroupConfig, PeerAddr, RunMode, Scheduler, TransportConfig};

pub const DEFAULT_OUT_DIR: &str = "ddal-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Ddal,
    Single,
    Sync,
}

impl From<ModeArg> for RunMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Ddal => RunMode::Ddal,
            ModeArg::Single => RunMode::Single,
            ModeArg::Sync => RunMode::Sync,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransportArg {
    Inproc,
    Tcp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchedulerArg {
    Concurrent,
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightingArg {
    Uniform,
    Experience,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
}

/// Values a preset pins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PresetValues {
    pub mode: RunMode,
    pub agents: u32,
    pub epochs: u64,
    pub threshold: u64,
    pub share_every: u64,
    pub k: usize,
    pub step_cap: u32,
}

impl Preset {
    pub fn values(self) -> PresetValues {
        let base = PresetValues {
            mode: RunMode::Ddal,
            agents: 2,
            epochs: 50_000,
            threshold: 20_000,
            share_every: 100,
            k: 120,
            step_cap: 100,
        };
        match self {
            Preset::Fig1 => base,
            Preset::Fig2 => PresetValues {
                agents: 4,
                epochs: 20_000,
                threshold: 10_000,
                ..base
            },
            Preset::Fig3 => PresetValues {
                agents: 6,
                epochs: 10_000,
                threshold: 5_000,
                ..base
            },
            Preset::Fig4 => PresetValues {
                mode: RunMode::Sync,
                agents: 6,
                epochs: 10_000,
                threshold: 5_000,
                ..base
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ddal",
    version,
    about = "Decentralized asynchronous A2C on CartPole"
)]
pub struct Cli {
    /// Learning scheme (required unless a preset is given).
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub agents: Option<u32>,
    #[arg(long)]
    pub epochs: Option<u64>,
    /// Epochs of local learning before sharing starts.
    #[arg(long)]
    pub threshold: Option<u64>,
    /// Update period during sharing, in epochs.
    #[arg(long = "share-every")]
    pub share_every: Option<u64>,
    /// Transitions per epoch.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long = "step-cap")]
    pub step_cap: Option<u32>,
    #[arg(long, default_value_t = 0.99)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Base seed; agent i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "inproc")]
    pub transport: TransportArg,
    /// Listening address of an agent, as id=host:port. Repeatable.
    #[arg(long = "peer", value_parser = parse_peer)]
    pub peers: Vec<PeerAddr>,
    /// With tcp transport: run only this agent in this process.
    #[arg(long = "agent-id")]
    pub agent_id: Option<u32>,
    #[arg(long, value_enum, default_value = "concurrent")]
    pub scheduler: SchedulerArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long, value_enum, default_value = "uniform")]
    pub weighting: WeightingArg,
    /// Relevance attached to every shared gradient.
    #[arg(long, default_value_t = 1.0)]
    pub relevance: f64,
    /// Hidden width of both networks.
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long = "value-coef", default_value_t = 0.5)]
    pub value_coef: f64,
    #[arg(long = "entropy-coef", default_value_t = 0.0)]
    pub entropy_coef: f64,
    /// Most packets averaged per update.
    #[arg(long = "max-drain")]
    pub max_drain: Option<usize>,
    /// Also apply the own gradient on sharing epochs that are not update epochs.
    #[arg(long = "local-updates-during-sharing")]
    pub local_updates_during_sharing: bool,
    #[arg(long = "stability-threshold", default_value_t = DEFAULT_STABILITY_THRESHOLD)]
    pub stability_threshold: f64,
    /// Epochs skipped after the share epoch before measuring stability.
    #[arg(long = "burn-in")]
    pub burn_in: Option<u64>,
}

fn parse_peer(s: &str) -> Result<PeerAddr, String> {
    let (id, addr) = s
        .split_once('=')
        .ok_or_else(|| format!("expected id=host:port, got {s:?}"))?;
    let id: u32 = id
        .trim()
        .parse()
        .map_err(|_| format!("bad agent id {id:?}"))?;
    let addr: SocketAddr = addr
        .to_socket_addrs()
        .map_err(|e| format!("cannot resolve {addr:?}: {e}"))?
        .next()
        .ok_or_else(|| format!("no address for {addr:?}"))?;
    Ok(PeerAddr {
        id: AgentId(id),
        addr,
    })
}

/// A fully resolved invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRequest {
    pub group: GroupConfig,
    pub out_dir: PathBuf,
    pub stability: StabilityOptions,
}

fn usage(msg: impl Into<String>) -> HarnessError {
    HarnessError::Usage(msg.into())
}

fn pin<T: PartialEq + std::fmt::Display>(
    flag: &str,
    given: Option<T>,
    pinned: T,
    preset: Preset,
) -> Result<T, HarnessError> {
    match given {
        Some(v) if v != pinned => Err(usage(format!(
            "--{flag} {v} contradicts preset {} ({pinned})",
            preset
                .to_possible_value()
                .map(|p| p.get_name().to_owned())
                .unwrap_or_default()
        ))),
        _ => Ok(pinned),
    }
}

/// Parses arguments (including the program name) into a run request.
/// `--help` and `--version` surface as [`HarnessError::Clap`].
pub fn parse_cli<I, T>(args: I) -> Result<RunRequest, HarnessError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    resolve(cli)
}

pub fn resolve(cli: Cli) -> Result<RunRequest, HarnessError> {
    let mode_arg = cli.mode.map(RunMode::from);
    let (mode, agents, epochs, threshold, share_every, k, step_cap) = match cli.preset {
        Some(p) => {
            let v = p.values();
            // The 2-agent preset doubles as the single-agent baseline.
            let mode = match (p, mode_arg) {
                (Preset::Fig1, Some(RunMode::Single)) => RunMode::Single,
                _ => pin("mode", mode_arg.map(ModeLabel), ModeLabel(v.mode), p)?.0,
            };
            let agents = if mode == RunMode::Single && v.mode != RunMode::Single {
                cli.agents.unwrap_or(1)
            } else {
                pin("agents", cli.agents, v.agents, p)?
            };
            (
                mode,
                agents,
                pin("epochs", cli.epochs, v.epochs, p)?,
                pin("threshold", cli.threshold, v.threshold, p)?,
                pin("share-every", cli.share_every, v.share_every, p)?,
                pin("k", cli.k, v.k, p)?,
                pin("step-cap", cli.step_cap, v.step_cap, p)?,
            )
        }
        None => {
            let mode =
                mode_arg.ok_or_else(|| usage("--mode is required unless --preset is given"))?;
            let epochs = cli.epochs.unwrap_or(1000);
            let default_agents = if mode == RunMode::Single { 1 } else { 2 };
            (
                mode,
                cli.agents.unwrap_or(default_agents),
                epochs,
                cli.threshold.unwrap_or(epochs / 2),
                cli.share_every.unwrap_or(100),
                cli.k.unwrap_or(120),
                cli.step_cap.unwrap_or(100),
            )
        }
    };
    if agents == 0 {
        return Err(usage("--agents must be at least 1"));
    }
    if threshold > epochs {
        return Err(usage(format!(
            "--threshold {threshold} exceeds --epochs {epochs}"
        )));
    }

    let transport = match cli.transport {
        TransportArg::Inproc => {
            if !cli.peers.is_empty() || cli.agent_id.is_some() {
                return Err(usage("--peer and --agent-id need --transport tcp"));
            }
            TransportConfig::Inproc
        }
        TransportArg::Tcp => {
            if mode != RunMode::Ddal {
                return Err(usage("--transport tcp only applies to --mode ddal"));
            }
            TransportConfig::Tcp {
                peers: cli.peers.clone(),
                local: cli.agent_id.map(AgentId),
            }
        }
    };

    let shape = cli.hidden.map(ShapeSpec::with_hidden).unwrap_or_default();
    let agents: Vec<AgentConfig> = (1..=agents)
        .map(|i| {
            let mut a = AgentConfig::new(AgentId(i), cli.seed.wrapping_add(u64::from(i)));
            a.total_epochs = epochs;
            a.threshold = threshold;
            a.minibatch = share_every;
            a.k = k;
            a.step_cap = step_cap;
            a.gamma = cli.gamma;
            a.lr = cli.lr;
            a.weighting = match cli.weighting {
                WeightingArg::Uniform => WeightingMode::Uniform,
                WeightingArg::Experience => WeightingMode::Experience,
            };
            a.relevance = cli.relevance;
            a.shape = shape.clone();
            a.coefficients = LossCoefficients {
                value: cli.value_coef,
                entropy: cli.entropy_coef,
            };
            a.max_drain = cli.max_drain;
            a.local_updates_during_sharing = cli.local_updates_during_sharing;
            a
        })
        .collect();

    let out_dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let group = GroupConfig {
        mode,
        scheduler: match cli.scheduler {
            SchedulerArg::Concurrent => Scheduler::Concurrent,
            SchedulerArg::Deterministic => Scheduler::Deterministic,
        },
        transport,
        agents,
        out_dir: Some(out_dir.clone()),
    };
    group.validate().map_err(|e| usage(e.to_string()))?;

    if !(cli.stability_threshold >= 0.0 && cli.stability_threshold <= 1.0) {
        return Err(usage("--stability-threshold must lie in [0, 1]"));
    }
    Ok(RunRequest {
        group,
        out_dir,
        stability: StabilityOptions {
            burn_in: cli.burn_in,
            threshold: cli.stability_threshold,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ModeLabel(RunMode);

impl std::fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self.0 {
            RunMode::Ddal => "ddal",
            RunMode::Single => "single",
            RunMode::Sync => "sync",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<RunRequest, HarnessError> {
        parse_cli(std::iter::once("ddal").chain(args.iter().copied()))
    }

    #[test]
    fn fig1_preset() {
        let r = parse(&["--preset", "fig1"]).unwrap();
        let g = &r.group;
        assert_eq!(g.mode, RunMode::Ddal);
        assert_eq!(g.n(), 2);
        let a = &g.agents[0];
        assert_eq!(
            (a.total_epochs, a.threshold, a.minibatch, a.k, a.step_cap),
            (50_000, 20_000, 100, 120, 100)
        );
        assert_eq!(g.agents[1].seed, 2);
    }

    #[test]
    fn single_mode_defaults_to_one_agent() {
        let r = parse(&["--mode", "single", "--epochs", "10"]).unwrap();
        assert_eq!(r.group.mode, RunMode::Single);
        assert_eq!(r.group.n(), 1);
        assert_eq!(r.group.agents[0].total_epochs, 10);
    }

    #[test]
    fn missing_mode_is_a_usage_error() {
        let err = parse(&["--epochs", "10"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn contradicting_a_preset_is_a_usage_error() {
        assert!(matches!(
            parse(&["--preset", "fig1", "--epochs", "10"]),
            Err(HarnessError::Usage(_))
        ));
        assert!(matches!(
            parse(&["--preset", "fig3", "--mode", "sync"]),
            Err(HarnessError::Usage(_))
        ));
        assert!(parse(&["--preset", "fig1", "--epochs", "50000"]).is_ok());
    }

    #[test]
    fn fig1_single_baseline() {
        let r = parse(&["--preset", "fig1", "--mode", "single"]).unwrap();
        assert_eq!(r.group.mode, RunMode::Single);
        assert_eq!(r.group.n(), 1);
        assert_eq!(r.group.agents[0].total_epochs, 50_000);
    }

    #[test]
    fn peers_parse() {
        let r = parse(&[
            "--mode",
            "ddal",
            "--transport",
            "tcp",
            "--agent-id",
            "1",
            "--peer",
            "1=127.0.0.1:7001",
            "--peer",
            "2=127.0.0.1:7002",
        ])
        .unwrap();
        match r.group.transport {
            TransportConfig::Tcp { peers, local } => {
                assert_eq!(peers.len(), 2);
                assert_eq!(peers[1].addr.port(), 7002);
                assert_eq!(local, Some(AgentId(1)));
            }
            other => panic!("unexpected transport {other:?}"),
        }
        assert!(parse(&["--mode", "ddal", "--peer", "nonsense"]).is_err());
    }

    #[test]
    fn bad_values_are_usage_errors() {
        for args in [
            &["--mode", "ddal", "--epochs", "10", "--threshold", "11"][..],
            &["--mode", "ddal", "--gamma", "0"],
            &["--mode", "ddal", "--agents", "0"],
            &["--mode", "single", "--transport", "tcp"],
        ] {
            assert_eq!(parse(args).unwrap_err().exit_code(), 2, "{args:?}");
        }
    }
}
