//! Scripted Byzantine behaviour layered over an honest replica.
//!
//! Each strategy runs the ordinary state machine and rewrites its output.
//! Only the corrupted process's own signing key is available, so every
//! forged message carries a signature the process could really produce.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use morpheus_core::types::{BlockKind, Message, Transaction, Vote};
use morpheus_core::{Outbound, ProcessId, Recipients, Replica, SigningKey};
use serde::{Deserialize, Serialize};

/// A message together with the processes it is sent to.
pub type Action = (Message, Vec<ProcessId>);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Sends two different transaction blocks for each of its slots, one to
    /// each half of the other processes.
    Equivocator,
    /// Sends nothing while it leads the current view.
    SilentLeader,
    /// Withholds its leader blocks from the next f + 1 processes.
    SelectiveWithholder,
    /// 1-votes every transaction block it receives.
    VoteSplitter,
    /// 1- and 2-votes every leader block it receives regardless of view, and
    /// never asks to leave a view.
    StaleViewLagger,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Equivocator,
        Strategy::SilentLeader,
        Strategy::SelectiveWithholder,
        Strategy::VoteSplitter,
        Strategy::StaleViewLagger,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Equivocator => "equivocator",
            Strategy::SilentLeader => "silent-leader",
            Strategy::SelectiveWithholder => "selective-withholder",
            Strategy::VoteSplitter => "vote-splitter",
            Strategy::StaleViewLagger => "stale-view-lagger",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown strategy {0:?}")]
pub struct UnknownStrategy(String);

impl FromStr for Strategy {
    type Err = UnknownStrategy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| UnknownStrategy(s.to_string()))
    }
}

/// Expands replica output into explicit recipient lists.
pub fn resolve(out: Vec<Outbound>, me: ProcessId, n: usize) -> Vec<Action> {
    out.into_iter()
        .map(|o| {
            let to = match o.to {
                Recipients::All => (0..n as u32).map(ProcessId).filter(|&p| p != me).collect(),
                Recipients::One(p) => vec![p],
            };
            (o.msg, to)
        })
        .collect()
}

pub struct Byzantine {
    strategy: Strategy,
    replica: Replica,
    key: SigningKey,
    n: usize,
    f: usize,
    forged: HashSet<(u8, morpheus_core::Digest)>,
}

impl Byzantine {
    pub fn new(strategy: Strategy, replica: Replica, key: SigningKey, f: usize) -> Self {
        let n = replica.committee().n;
        Byzantine { strategy, replica, key, n, f, forged: HashSet::new() }
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn replica(&self) -> &Replica {
        &self.replica
    }

    pub fn replica_mut(&mut self) -> &mut Replica {
        &mut self.replica
    }

    pub fn start(&mut self, now: u64) -> Vec<Action> {
        let out = self.replica.start(now);
        self.rewrite(out, None)
    }

    pub fn on_receive(&mut self, msg: Message, now: u64) -> Vec<Action> {
        let out = self.replica.on_receive(msg.clone(), now);
        self.rewrite(out, Some(&msg))
    }

    pub fn on_transactions(&mut self, txs: Vec<Transaction>, now: u64) -> Vec<Action> {
        let out = self.replica.on_transactions(txs, now);
        self.rewrite(out, None)
    }

    pub fn step(&mut self, now: u64) -> Vec<Action> {
        let out = self.replica.step(now);
        self.rewrite(out, None)
    }

    fn me(&self) -> ProcessId {
        self.key.id()
    }

    fn others(&self) -> Vec<ProcessId> {
        (0..self.n as u32).map(ProcessId).filter(|&p| p != self.me()).collect()
    }

    fn rewrite(&mut self, out: Vec<Outbound>, inbound: Option<&Message>) -> Vec<Action> {
        let me = self.me();
        let mut actions = resolve(out, me, self.n);
        match self.strategy {
            Strategy::Equivocator => {
                let mut extra = Vec::new();
                for (msg, to) in actions.iter_mut() {
                    let Message::Block(b) = msg else { continue };
                    if b.kind != BlockKind::Tr || b.author != Some(me) || to.len() < 2 {
                        continue;
                    }
                    let mut content = b.content();
                    content.txs =
                        vec![Transaction { issuer: me, seq: u64::MAX - b.slot, payload: b"equivocation".to_vec() }];
                    let twin = content.sign(&self.key);
                    let half = to.split_off(to.len() / 2);
                    extra.push((Message::Block(Arc::new(twin)), half));
                }
                actions.extend(extra);
            }
            Strategy::SilentLeader => {
                if self.replica.committee().lead(self.replica.view()) == me {
                    actions.clear();
                }
            }
            Strategy::SelectiveWithholder => {
                let victims: HashSet<ProcessId> = (1..=self.f as u32 + 1)
                    .map(|k| ProcessId((me.0 + k) % self.n as u32))
                    .filter(|&p| p != me)
                    .collect();
                for (msg, to) in actions.iter_mut() {
                    if matches!(msg, Message::Block(b) if b.kind == BlockKind::Lead) {
                        to.retain(|p| !victims.contains(p));
                    }
                }
            }
            Strategy::VoteSplitter => {
                if let Some(Message::Block(b)) = inbound {
                    if b.kind == BlockKind::Tr && b.author != Some(me) && self.forged.insert((1, b.digest())) {
                        let v = Vote::new(1, b.meta(), &self.key);
                        actions.push((Message::Vote(v), self.others()));
                    }
                }
            }
            Strategy::StaleViewLagger => {
                actions.retain(|(m, _)| !matches!(m, Message::EndView(_)));
                if let Some(Message::Block(b)) = inbound {
                    if b.kind == BlockKind::Lead && self.forged.insert((1, b.digest())) {
                        for z in [1u8, 2] {
                            let v = Vote::new(z, b.meta(), &self.key);
                            actions.push((Message::Vote(v), self.others()));
                        }
                    }
                }
            }
        }
        actions.retain(|(_, to)| !to.is_empty());
        actions
    }
}
