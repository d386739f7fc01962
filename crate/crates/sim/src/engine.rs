//! The discrete-event loop.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use morpheus_core::types::{Message, Transaction};
use morpheus_core::{Committee, Keyring, ProcessId, Replica, ReplicaConfig, ReplicaEvent};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adversary::{resolve, Action, Byzantine};
use crate::config::{ConfigInvalid, DelayPolicy, Fault, ScenarioConfig};
use crate::trace::{Detail, MsgId, Record, RecordKind, Trace};

/// Keyring seed used for every run of a configuration, so stored traces
/// can be re-verified from the config alone.
pub fn keyring_seed(cfg: &ScenarioConfig) -> u64 {
    cfg.seed ^ 0x6d6f_7270_6865_7573
}

pub fn committee(cfg: &ScenarioConfig) -> Committee {
    Committee::new(cfg.n, Keyring::new(cfg.n, keyring_seed(cfg)))
}

/// Admissible delivery window `[lo, hi]` for a message sent at `t`.
pub fn window(t: u64, gst: u64, delta_bound: u64, delta_actual: u64) -> (u64, u64) {
    if t >= gst {
        (t + 1, t + delta_actual)
    } else {
        (t + 1, (gst + delta_bound).max(t + 1))
    }
}

/// Picks a delivery tick inside the admissible window.
pub fn adversary_delay(
    policy: &DelayPolicy,
    src: ProcessId,
    dst: ProcessId,
    t: u64,
    cfg: &ScenarioConfig,
    rng: &mut ChaCha8Rng,
) -> u64 {
    let (lo, hi) = window(t, cfg.gst, cfg.delta_bound, cfg.delta_actual);
    match policy {
        DelayPolicy::Uniform => rng.gen_range(lo..=hi),
        DelayPolicy::MaxDelay => hi,
        DelayPolicy::Targeted { victims } => {
            if victims.contains(&src.0) || victims.contains(&dst.0) {
                hi
            } else {
                lo
            }
        }
    }
}

/// The deterministic transaction body for `(issuer, seq)`.
pub fn transaction(issuer: ProcessId, seq: u64, size: usize) -> Transaction {
    let stamp = [issuer.0.to_le_bytes().as_slice(), seq.to_le_bytes().as_slice()].concat();
    let payload = stamp.iter().cycle().take(size).copied().collect();
    Transaction { issuer, seq, payload }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    Crash,
    Start,
    Deliver { id: u64 },
    Payload { txs: usize },
    Timer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Event {
    tick: u64,
    src: u32,
    seq: u64,
    dst: u32,
    kind: EventKind,
}

enum Actor {
    Honest(Replica),
    Byzantine(Box<Byzantine>),
}

impl Actor {
    fn replica(&self) -> &Replica {
        match self {
            Actor::Honest(r) => r,
            Actor::Byzantine(b) => b.replica(),
        }
    }

    fn replica_mut(&mut self) -> &mut Replica {
        match self {
            Actor::Honest(r) => r,
            Actor::Byzantine(b) => b.replica_mut(),
        }
    }
}

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    actors: Vec<Actor>,
    faults: Vec<Fault>,
    heap: BinaryHeap<Reverse<Event>>,
    seqs: Vec<u64>,
    timers: Vec<BTreeSet<u64>>,
    next_tx: Vec<u64>,
    max_tips: Vec<usize>,
    rng: ChaCha8Rng,
    records: Vec<Record>,
    messages: Vec<Message>,
}

/// Executes a scenario to its horizon.
pub fn run(cfg: &ScenarioConfig) -> Result<Trace, ConfigInvalid> {
    cfg.validate()?;
    let committee = committee(cfg);
    let f = cfg.f();
    let mut actors = Vec::with_capacity(cfg.n);
    let mut faults = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n as u32 {
        let id = ProcessId(i);
        let replica = Replica::new(ReplicaConfig {
            id,
            committee: committee.clone(),
            delta: cfg.delta_bound,
            batching: cfg.batching.into(),
        });
        let fault = cfg.fault_of(i);
        actors.push(match &fault {
            Fault::Byzantine { strategy } => {
                let key = committee.keyring.signing_key(id);
                Actor::Byzantine(Box::new(Byzantine::new(*strategy, replica, key, f)))
            }
            _ => Actor::Honest(replica),
        });
        faults.push(fault);
    }
    let mut sim = Sim {
        cfg,
        actors,
        faults,
        heap: BinaryHeap::new(),
        seqs: vec![0; cfg.n],
        timers: vec![BTreeSet::new(); cfg.n],
        next_tx: vec![0; cfg.n],
        max_tips: vec![0; cfg.n],
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        records: vec![Record::new(0, RecordKind::Config, None, Detail::Config(Box::new(cfg.clone())))],
        messages: Vec::new(),
    };
    for i in 0..cfg.n as u32 {
        if let Fault::Crash { at } = sim.faults[i as usize] {
            sim.push(at, i, i, EventKind::Crash);
        }
        sim.push(0, i, i, EventKind::Start);
    }
    for p in &cfg.payloads {
        for t in p.ticks() {
            sim.push(t, p.process, p.process, EventKind::Payload { txs: p.txs });
        }
    }
    sim.run();
    Ok(Trace { config: cfg.clone(), records: sim.records, messages: sim.messages })
}

impl Sim<'_> {
    fn push(&mut self, tick: u64, src: u32, dst: u32, kind: EventKind) {
        let seq = self.seqs[src as usize];
        self.seqs[src as usize] += 1;
        self.heap.push(Reverse(Event { tick, src, seq, dst, kind }));
    }

    fn crashed(&self, p: u32, t: u64) -> bool {
        matches!(self.faults[p as usize], Fault::Crash { at } if at <= t)
    }

    fn run(&mut self) {
        while let Some(Reverse(ev)) = self.heap.pop() {
            if ev.tick > self.cfg.horizon {
                break;
            }
            let p = ev.dst;
            let now = ev.tick;
            if let EventKind::Crash = ev.kind {
                self.records.push(Record::new(now, RecordKind::Crash, Some(ProcessId(p)), Detail::None));
                continue;
            }
            if self.crashed(p, now) {
                continue;
            }
            let local = now + self.cfg.offset(p);
            let actions = match ev.kind {
                EventKind::Crash => unreachable!(),
                EventKind::Start => self.with_actor(p, |a| match a {
                    Actor::Honest(r) => resolve(r.start(local), r.id(), r.committee().n),
                    Actor::Byzantine(b) => b.start(local),
                }),
                EventKind::Deliver { id } => {
                    let msg = self.messages[id as usize].clone();
                    let mut r = Record::new(now, RecordKind::Deliver, Some(ProcessId(ev.src)), Detail::Msg(MsgId(id)));
                    r.dst = Some(ProcessId(p));
                    r.msg_type = Some(msg.type_name());
                    r.bytes = Some(msg.encoded_len());
                    self.records.push(r);
                    self.with_actor(p, |a| match a {
                        Actor::Honest(r) => resolve(r.on_receive(msg, local), r.id(), r.committee().n),
                        Actor::Byzantine(b) => b.on_receive(msg, local),
                    })
                }
                EventKind::Payload { txs } => {
                    let first = self.next_tx[p as usize];
                    self.next_tx[p as usize] += txs as u64;
                    let batch: Vec<Transaction> =
                        (first..first + txs as u64).map(|s| transaction(ProcessId(p), s, self.cfg.tx_size)).collect();
                    for tx in &batch {
                        self.records.push(Record::new(
                            now,
                            RecordKind::Tx,
                            Some(ProcessId(p)),
                            Detail::Tx { seq: tx.seq },
                        ));
                    }
                    self.with_actor(p, |a| match a {
                        Actor::Honest(r) => resolve(r.on_transactions(batch, local), r.id(), r.committee().n),
                        Actor::Byzantine(b) => b.on_transactions(batch, local),
                    })
                }
                EventKind::Timer => {
                    if !self.timers[p as usize].remove(&now) {
                        continue;
                    }
                    self.with_actor(p, |a| match a {
                        Actor::Honest(r) => resolve(r.step(local), r.id(), r.committee().n),
                        Actor::Byzantine(b) => b.step(local),
                    })
                }
            };
            self.after_activation(p, now, actions);
        }
    }

    fn with_actor<F: FnOnce(&mut Actor) -> Vec<Action>>(&mut self, p: u32, f: F) -> Vec<Action> {
        f(&mut self.actors[p as usize])
    }

    fn after_activation(&mut self, p: u32, now: u64, actions: Vec<Action>) {
        let pid = ProcessId(p);
        for ev in self.actors[p as usize].replica_mut().drain_events() {
            let rec = match ev {
                ReplicaEvent::Proposed(b) => Record::new(now, RecordKind::Propose, Some(pid), Detail::Block(b.meta())),
                ReplicaEvent::Finalized(m) => Record::new(now, RecordKind::Final, Some(pid), Detail::Block(m)),
                ReplicaEvent::EnteredView(v) => Record::new(now, RecordKind::View, Some(pid), Detail::View(v)),
            };
            self.records.push(rec);
        }
        let tips = self.actors[p as usize].replica().tip_count();
        if tips > self.max_tips[p as usize] {
            self.max_tips[p as usize] = tips;
            self.records.push(Record::new(now, RecordKind::TipBound, Some(pid), Detail::Tips(tips)));
        }
        let drop_permille = match self.faults[p as usize] {
            Fault::Omission { drop_permille } => drop_permille,
            _ => 0,
        };
        for (msg, to) in actions {
            let id = self.messages.len() as u64;
            let ty = msg.type_name();
            let bytes = msg.encoded_len();
            self.messages.push(msg);
            for dst in to {
                let dropped = drop_permille > 0 && self.rng.gen_range(0..1000) < drop_permille;
                let kind = if dropped { RecordKind::Drop } else { RecordKind::Send };
                let mut r = Record::new(now, kind, Some(pid), Detail::Msg(MsgId(id)));
                r.dst = Some(dst);
                r.msg_type = Some(ty);
                r.bytes = Some(bytes);
                self.records.push(r);
                if !dropped {
                    let at = adversary_delay(&self.cfg.delay, pid, dst, now, self.cfg, &mut self.rng);
                    self.push(at, p, dst.0, EventKind::Deliver { id });
                }
            }
        }
        if let Some(deadline) = self.actors[p as usize].replica().next_deadline() {
            let offset = self.cfg.offset(p);
            let global = deadline.saturating_sub(offset).max(now + 1);
            if self.timers[p as usize].insert(global) {
                self.push(global, p, p, EventKind::Timer);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_examples() {
        // sent before GST: by GST + Delta
        assert_eq!(window(5, 10, 3, 2), (6, 13));
        // sent after GST: within (t, t + delta]
        assert_eq!(window(20, 10, 3, 2), (21, 22));
    }

    #[test]
    fn max_delay_takes_window_edge() {
        let mut cfg = ScenarioConfig::new(4, 4, 4, 100);
        cfg.delay = DelayPolicy::MaxDelay;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(adversary_delay(&cfg.delay, ProcessId(0), ProcessId(1), 12, &cfg, &mut rng), 16);
    }
}
