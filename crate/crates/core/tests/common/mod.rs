//! Independent reference implementations shared by the integration tests and
//! the acceptance runner. Nothing here calls into the code under test except
//! to obtain inputs.

#![allow(dead_code)]

use std::sync::Arc;

use ddal::environment::{Action, EnvState};
use ddal::knowledge::{AgentId, GradientPacket};
use ddal::neural::{GradientVector, ShapeDescriptor, ShapeSpec};
use ddal::runtime::{
    run_group, AgentConfig, EpochRecord, EpochSink, GroupConfig, GroupOutcome, RunMode, Scheduler,
    TransportConfig,
};
use rand::Rng;

// ---------------------------------------------------------------- physics

/// Cart-pole Euler step written out from the equations of motion.
pub fn reference_step(s: [f64; 4], push_right: bool) -> [f64; 4] {
    let g = 9.8;
    let m_cart = 1.0;
    let m_pole = 0.1;
    let l = 0.5;
    let dt = 0.02;
    let f = if push_right { 10.0 } else { -10.0 };
    let [x, v, th, om] = s;
    let m = m_cart + m_pole;
    let tmp = (f + m_pole * l * om * om * th.sin()) / m;
    let alpha =
        (g * th.sin() - th.cos() * tmp) / (l * (4.0 / 3.0 - m_pole * th.cos() * th.cos() / m));
    let acc = tmp - m_pole * l * alpha * th.cos() / m;
    [x + dt * v, v + dt * acc, th + dt * om, om + dt * alpha]
}

/// Largest absolute deviation between the library integrator and the
/// reference over `trajectories` random `steps`-step rollouts.
pub fn physics_max_error<R: Rng>(rng: &mut R, trajectories: usize, steps: usize) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..trajectories {
        let mut a: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-0.05..=0.05));
        let mut b = EnvState::from_array(a);
        for _ in 0..steps {
            let right = rng.gen_bool(0.5);
            a = reference_step(a, right);
            b = ddal::environment::CartPole::integrate(
                &b,
                if right { Action::Right } else { Action::Left },
            );
            for (x, y) in a.iter().zip(b.to_array()) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    worst
}

/// Whether stepping a mirrored state with the flipped action gives exactly
/// the mirrored successor, over random rollouts.
pub fn mirror_symmetry_holds<R: Rng>(rng: &mut R, trajectories: usize, steps: usize) -> bool {
    for _ in 0..trajectories {
        let mut s = EnvState::from_array(std::array::from_fn(|_| rng.gen_range(-0.05..=0.05)));
        for _ in 0..steps {
            let a = if rng.gen_bool(0.5) {
                Action::Right
            } else {
                Action::Left
            };
            let next = ddal::environment::CartPole::integrate(&s, a);
            let mirrored = ddal::environment::CartPole::integrate(&s.mirrored(), a.flipped());
            if mirrored.to_array() != next.mirrored().to_array() {
                return false;
            }
            s = next;
        }
    }
    true
}

// ---------------------------------------------------------------- networks

/// Single-hidden-layer reference network read straight from the flat
/// parameter layout: policy then value; per layer row-major weights
/// `[out][in]` followed by biases.
pub struct RefNet<'a> {
    pub p: &'a [f64],
    pub h: usize,
}

impl RefNet<'_> {
    fn mlp(&self, base: usize, obs: &[f64; 4], outs: usize) -> Vec<f64> {
        let h = self.h;
        let w1 = &self.p[base..base + 4 * h];
        let b1 = &self.p[base + 4 * h..base + 5 * h];
        let w2 = &self.p[base + 5 * h..base + 5 * h + outs * h];
        let b2 = &self.p[base + 5 * h + outs * h..base + 5 * h + outs * h + outs];
        let hidden: Vec<f64> = (0..h)
            .map(|j| (b1[j] + (0..4).map(|i| w1[j * 4 + i] * obs[i]).sum::<f64>()).tanh())
            .collect();
        (0..outs)
            .map(|o| b2[o] + (0..h).map(|j| w2[o * h + j] * hidden[j]).sum::<f64>())
            .collect()
    }

    pub fn policy_len(&self) -> usize {
        5 * self.h + 2 * self.h + 2
    }

    pub fn len(&self) -> usize {
        self.policy_len() + 5 * self.h + self.h + 1
    }

    pub fn probs(&self, obs: &[f64; 4]) -> [f64; 2] {
        let z = self.mlp(0, obs, 2);
        let m = z[0].max(z[1]);
        let e = [(z[0] - m).exp(), (z[1] - m).exp()];
        let s = e[0] + e[1];
        [e[0] / s, e[1] / s]
    }

    pub fn value(&self, obs: &[f64; 4]) -> f64 {
        self.mlp(self.policy_len(), obs, 1)[0]
    }
}

pub struct RefSample {
    pub obs: [f64; 4],
    pub action: usize,
    pub advantage: f64,
    pub target: f64,
}

pub fn reference_loss(p: &[f64], h: usize, batch: &[RefSample], c_v: f64, c_e: f64) -> f64 {
    let net = RefNet { p, h };
    let n = batch.len() as f64;
    let mut pg = 0.0;
    let mut vl = 0.0;
    let mut ent = 0.0;
    for s in batch {
        let pr = net.probs(&s.obs);
        pg += pr[s.action].ln() * s.advantage;
        let err = s.target - net.value(&s.obs);
        vl += err * err;
        ent -= pr.iter().map(|q| q * q.ln()).sum::<f64>();
    }
    -pg / n + c_v * vl / n - c_e * ent / n
}

/// Central differences of [`reference_loss`].
pub fn finite_difference(
    p: &[f64],
    h: usize,
    batch: &[RefSample],
    c_v: f64,
    c_e: f64,
    step: f64,
) -> Vec<f64> {
    let mut q = p.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = q[i];
            q[i] = orig + step;
            let up = reference_loss(&q, h, batch, c_v, c_e);
            q[i] = orig - step;
            let down = reference_loss(&q, h, batch, c_v, c_e);
            q[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|)` in the Euclidean norm, with a floor for
/// blocks whose gradient vanishes.
pub fn block_relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-6)
}

/// Worst per-block relative error of the analytic gradient over `cases`
/// random networks and batches.
pub fn gradient_check_worst<R: Rng>(rng: &mut R, cases: usize) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let h = rng.gen_range(1..=6);
        let shape = ShapeDescriptor::shared(ShapeSpec::with_hidden(h)).unwrap();
        let values: Vec<f64> = (0..shape.param_count())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let params =
            ddal::neural::ParameterVector::from_values(Arc::clone(&shape), values.clone()).unwrap();
        let batch: Vec<RefSample> = (0..rng.gen_range(1..=6))
            .map(|_| RefSample {
                obs: std::array::from_fn(|_| rng.gen_range(-1.0..1.0)),
                action: rng.gen_range(0..2),
                advantage: rng.gen_range(-2.0..2.0),
                target: rng.gen_range(-2.0..2.0),
            })
            .collect();
        let c_v = rng.gen_range(0.1..1.0);
        let c_e = if rng.gen_bool(0.5) {
            0.0
        } else {
            rng.gen_range(0.0..0.1)
        };
        let samples: Vec<ddal::neural::Sample> = batch
            .iter()
            .map(|s| ddal::neural::Sample {
                obs: s.obs,
                action: Action::from_index(s.action).unwrap(),
                advantage: s.advantage,
                value_target: s.target,
            })
            .collect();
        let analytic = ddal::neural::backward(
            &params,
            &samples,
            ddal::neural::LossCoefficients {
                value: c_v,
                entropy: c_e,
            },
        )
        .unwrap();
        let fd = finite_difference(&values, h, &batch, c_v, c_e, 1e-5);
        let net = RefNet { p: &values, h };
        assert_eq!(net.len(), shape.param_count());
        let split = net.policy_len();
        let a = analytic.grad.as_slice();
        worst = worst
            .max(block_relative_error(&a[..split], &fd[..split]))
            .max(block_relative_error(&a[split..], &fd[split..]));
        let loss_ref = reference_loss(&values, h, &batch, c_v, c_e);
        assert!((analytic.loss - loss_ref).abs() <= 1e-9 * loss_ref.abs().max(1.0));
    }
    worst
}

// ---------------------------------------------------------------- averaging

pub fn shape(h: usize) -> Arc<ShapeDescriptor> {
    ShapeDescriptor::shared(ShapeSpec::with_hidden(h)).unwrap()
}

pub fn packet(
    shape: &Arc<ShapeDescriptor>,
    id: u32,
    t: f64,
    r: f64,
    values: Vec<f64>,
) -> GradientPacket {
    GradientPacket {
        sender_id: AgentId(id),
        sender_epoch: 1,
        experience: t,
        relevance: r,
        grad: GradientVector::from_values(Arc::clone(shape), values).unwrap(),
    }
}

pub fn random_packets<R: Rng>(
    rng: &mut R,
    shape: &Arc<ShapeDescriptor>,
    count: usize,
) -> Vec<GradientPacket> {
    (0..count)
        .map(|i| {
            let values = (0..shape.param_count())
                .map(|_| rng.gen_range(-5.0..5.0))
                .collect();
            packet(
                shape,
                i as u32 + 1,
                rng.gen_range(0.1..100.0),
                rng.gen_range(0.1..10.0),
                values,
            )
        })
        .collect()
}

/// `0.5 * (sum T_j/sum T * g_j + sum R_j/sum R * g_j)`, component by component.
pub fn brute_force_average(packets: &[GradientPacket]) -> Vec<f64> {
    let st: f64 = packets.iter().map(|p| p.experience).sum();
    let sr: f64 = packets.iter().map(|p| p.relevance).sum();
    let len = packets[0].grad.len();
    (0..len)
        .map(|c| {
            let e: f64 = packets
                .iter()
                .map(|p| p.experience / st * p.grad.as_slice()[c])
                .sum();
            let r: f64 = packets
                .iter()
                .map(|p| p.relevance / sr * p.grad.as_slice()[c])
                .sum();
            0.5 * (e + r)
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------- runs

pub fn agent(id: u32, seed: u64, epochs: u64, threshold: u64, minibatch: u64) -> AgentConfig {
    let mut a = AgentConfig::new(AgentId(id), seed + u64::from(id));
    a.total_epochs = epochs;
    a.threshold = threshold;
    a.minibatch = minibatch;
    a
}

pub fn group(mode: RunMode, scheduler: Scheduler, agents: Vec<AgentConfig>) -> GroupConfig {
    GroupConfig {
        mode,
        scheduler,
        transport: TransportConfig::Inproc,
        agents,
        out_dir: None,
    }
}

/// Runs a group with in-memory sinks; returns the outcome and what every
/// sink saw.
pub fn run_collect(g: &GroupConfig) -> (GroupOutcome, Vec<Vec<EpochRecord>>) {
    use std::sync::{Arc as StdArc, Mutex};

    struct Shared(StdArc<Mutex<Vec<EpochRecord>>>);
    impl EpochSink for Shared {
        fn record(&mut self, r: &EpochRecord) {
            self.0.lock().unwrap().push(r.clone());
        }
    }

    let cells: Vec<StdArc<Mutex<Vec<EpochRecord>>>> =
        (0..g.agents.len()).map(|_| StdArc::default()).collect();
    let sinks = cells
        .iter()
        .map(|c| Box::new(Shared(StdArc::clone(c))) as Box<dyn EpochSink + Send>)
        .collect();
    let outcome = run_group(g, sinks).expect("group run");
    let seen = cells.iter().map(|c| c.lock().unwrap().clone()).collect();
    (outcome, seen)
}

pub fn csv_text(records: &[EpochRecord]) -> Vec<u8> {
    ddal::harness::metrics::csv_bytes(records)
}

/// Outcome of the three degenerate-configuration equivalences.
pub struct BranchEquivalence {
    pub ddal_threshold_is_total: bool,
    pub sync_single_worker: bool,
    pub ddal_one_agent_minibatch_one: bool,
}

pub fn branch_equivalences(epochs: u64, seed: u64) -> BranchEquivalence {
    let single = group(
        RunMode::Single,
        Scheduler::Deterministic,
        vec![agent(1, seed, epochs, epochs / 2, 100)],
    );
    let (single_out, single_seen) = run_collect(&single);
    let reference = csv_text(&single_seen[0]);

    let no_share = group(
        RunMode::Ddal,
        Scheduler::Deterministic,
        vec![agent(1, seed, epochs, epochs, 100)],
    );
    let (_, seen) = run_collect(&no_share);
    let ddal_threshold_is_total = csv_text(&seen[0]) == reference;

    let sync = group(
        RunMode::Sync,
        Scheduler::Deterministic,
        vec![agent(1, seed, epochs, epochs / 2, 100)],
    );
    let (_, seen) = run_collect(&sync);
    let sync_single_worker = csv_text(&seen[0]) == reference;

    // Every epoch past the threshold is an update epoch averaging only the
    // agent's own gradient. The bookkeeping columns differ by design, so
    // the learning trajectory is compared instead.
    let solo = group(
        RunMode::Ddal,
        Scheduler::Deterministic,
        vec![agent(1, seed, epochs, epochs / 2, 1)],
    );
    let (solo_out, seen) = run_collect(&solo);
    let trajectory = |r: &[EpochRecord]| -> Vec<(u64, u32, u64)> {
        r.iter()
            .map(|e| (e.epoch, e.episode_return, e.loss.to_bits()))
            .collect()
    };
    let ddal_one_agent_minibatch_one = trajectory(&seen[0]) == trajectory(&single_seen[0])
        && solo_out.agents[0].final_params == single_out.agents[0].final_params;

    BranchEquivalence {
        ddal_threshold_is_total,
        sync_single_worker,
        ddal_one_agent_minibatch_one,
    }
}

// ---------------------------------------------------------------- transport

pub fn random_wire_packet<R: Rng>(rng: &mut R, shape: &Arc<ShapeDescriptor>) -> GradientPacket {
    let values = (0..shape.param_count())
        .map(|_| rng.gen_range(-1e3..1e3))
        .collect();
    GradientPacket {
        sender_id: AgentId(rng.gen_range(1..=u32::MAX)),
        sender_epoch: rng.gen_range(1..=u64::MAX),
        experience: rng.gen_range(1e-3..1e6),
        relevance: rng.gen_range(1e-3..1e3),
        grad: GradientVector::from_values(Arc::clone(shape), values).unwrap(),
    }
}

/// Number of packets whose decoded form differs in any bit from the
/// 32-bit-narrowed original.
pub fn round_trip_mismatches<R: Rng>(rng: &mut R, count: usize) -> usize {
    use ddal::transport::{decode, encode};
    let shape = shape(8);
    (0..count)
        .filter(|_| {
            let p = random_wire_packet(rng, &shape);
            let want = p.narrowed();
            match encode(&p).and_then(|f| decode(&f, &shape)) {
                Ok(got) => {
                    got.sender_id != want.sender_id
                        || got.sender_epoch != want.sender_epoch
                        || got.experience.to_bits() != want.experience.to_bits()
                        || got.relevance.to_bits() != want.relevance.to_bits()
                        || got
                            .grad
                            .as_slice()
                            .iter()
                            .zip(want.grad.as_slice())
                            .any(|(a, b)| a.to_bits() != b.to_bits())
                }
                Err(_) => true,
            }
        })
        .count()
}

/// Fraction of single-bit, single-byte and truncation corruptions rejected.
pub fn corruption_detection_rate<R: Rng>(rng: &mut R, trials: usize) -> f64 {
    use ddal::transport::{decode, encode};
    let shape = shape(8);
    let detected = (0..trials)
        .filter(|i| {
            let mut f = encode(&random_wire_packet(rng, &shape)).unwrap();
            match i % 3 {
                0 => {
                    let bit = rng.gen_range(0..f.len() * 8);
                    f[bit / 8] ^= 1 << (bit % 8);
                }
                1 => {
                    let at = rng.gen_range(0..f.len());
                    f[at] = f[at].wrapping_add(rng.gen_range(1..=255));
                }
                _ => f.truncate(rng.gen_range(0..f.len())),
            }
            decode(&f, &shape).is_err()
        })
        .count();
    detected as f64 / trials as f64
}

/// A sharing agent whose only peer accepts a TCP connection and never
/// reads from it. Returns the number of epochs the sender completed.
pub fn stalled_tcp_receiver_epochs(epochs: u64) -> usize {
    use ddal::transport::tcp::{TcpLink, TcpOptions};
    use ddal::transport::{Mailbox, PeerDirectory, PeerLink};
    use std::time::Duration;

    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hold = std::thread::spawn(move || {
        let conn = listener.accept();
        std::thread::sleep(Duration::from_secs(3));
        drop(conn);
    });
    let mut cfg = agent(1, 0, epochs, 0, 10);
    cfg.k = 8;
    cfg.shape = ShapeSpec::with_hidden(4);
    let sh = ShapeDescriptor::shared(cfg.shape.clone()).unwrap();
    let mut own = Mailbox::new(AgentId(1), sh);
    let opts = TcpOptions {
        write_timeout: Duration::from_secs(1),
        ..TcpOptions::default()
    };
    let links: Vec<Box<dyn PeerLink>> = vec![Box::new(TcpLink::connect(AgentId(2), addr, opts))];
    let dir = PeerDirectory::new(AgentId(1), links).unwrap();
    let out = ddal::runtime::run_agent_ddal(
        cfg,
        ddal::environment::CartPole,
        &mut own,
        &dir,
        &mut ddal::runtime::NullSink,
    )
    .unwrap();
    drop(dir);
    hold.join().unwrap();
    if out.completed() {
        out.records.len()
    } else {
        0
    }
}

/// Deterministic 3-agent runs over both backends give identical records and
/// parameters.
pub fn inproc_matches_loopback_tcp() -> bool {
    let make = |transport: TransportConfig| {
        let agents = (1..=3)
            .map(|i| {
                let mut a = agent(i, 40, 400, 200, 20);
                a.shape = ShapeSpec::with_hidden(16);
                a
            })
            .collect();
        GroupConfig {
            mode: RunMode::Ddal,
            scheduler: Scheduler::Deterministic,
            transport,
            agents,
            out_dir: None,
        }
    };
    let (a, sa) = run_collect(&make(TransportConfig::Inproc));
    let (b, sb) = run_collect(&make(TransportConfig::Tcp {
        peers: Vec::new(),
        local: None,
    }));
    sa == sb
        && a.agents
            .iter()
            .zip(&b.agents)
            .all(|(x, y)| x.final_params == y.final_params)
}

// ---------------------------------------------------------------- faults

/// Three-agent run where agent 2 dies halfway; returns the number of CSV
/// data rows written for each agent.
pub fn fault_run_rows(epochs: u64, scheduler: Scheduler) -> Vec<usize> {
    use ddal::harness::{execute, RunRequest, StabilityOptions};
    let dir = tempfile::tempdir().unwrap();
    let mut agents: Vec<AgentConfig> = (1..=3)
        .map(|i| {
            let mut a = agent(i, 13, epochs, epochs / 4, 50);
            a.shape = ShapeSpec::with_hidden(16);
            a
        })
        .collect();
    agents[1].fail_at_epoch = Some(epochs / 2);
    let req = RunRequest {
        group: GroupConfig {
            out_dir: Some(dir.path().to_path_buf()),
            ..group(RunMode::Ddal, scheduler, agents)
        },
        out_dir: dir.path().to_path_buf(),
        stability: StabilityOptions::default(),
    };
    let summary = execute(&req).unwrap();
    assert!(summary.outcome.agents[1].error.is_some());
    (1..=3)
        .map(|i| {
            let text = std::fs::read_to_string(dir.path().join(format!("agent_{i}.csv"))).unwrap();
            text.lines().count() - 1
        })
        .collect()
}
