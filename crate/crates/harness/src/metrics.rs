//! Latency and communication metrics, derived only from a trace.

use std::collections::{BTreeMap, HashMap, HashSet};

use morpheus_core::types::{BlockKind, Message};
use morpheus_core::{Digest, ProcessId};
use morpheus_sim::{Detail, RecordKind, Trace};
use serde::Serialize;

use crate::checks::{correct, tx_blocks};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockLatency {
    pub author: u32,
    pub slot: u64,
    pub digest: String,
    pub proposed: u64,
    /// Finalization tick according to the author's own messages.
    pub issuer_final: Option<u64>,
    /// Earliest finalization tick at any correct process.
    pub first_final: Option<u64>,
}

impl BlockLatency {
    pub fn issuer_latency(&self) -> Option<u64> {
        self.issuer_final.map(|t| t - self.proposed)
    }

    pub fn first_latency(&self) -> Option<u64> {
        self.first_final.map(|t| t - self.proposed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TxLatency {
    pub issuer: u32,
    pub seq: u64,
    pub issued: u64,
    pub finalized: Option<u64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Traffic {
    pub messages: u64,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub delta: u64,
    pub blocks: Vec<BlockLatency>,
    pub transactions: Vec<TxLatency>,
    /// Sends by correct processes, one per recipient.
    pub by_type: BTreeMap<String, Traffic>,
    pub total: Traffic,
    pub finalized_transactions: u64,
    pub bytes_per_transaction: Option<f64>,
    pub views_entered: i64,
    /// Last tick at which a correct process sent anything.
    pub last_send: Option<u64>,
}

impl MetricsReport {
    /// Issuer-side transaction-block latencies in units of the actual delay.
    pub fn block_latencies_delta(&self) -> Vec<Option<f64>> {
        self.blocks.iter().map(|b| b.issuer_latency().map(|l| l as f64 / self.delta as f64)).collect()
    }
}

/// Builds the report. Latencies are reported in ticks; `delta` is the
/// actual post-GST delay used to express them in delta units.
pub fn measure(trace: &Trace) -> MetricsReport {
    let cfg = &trace.config;
    let correct: HashSet<ProcessId> = correct(trace).into_iter().collect();

    let mut fin: HashMap<(ProcessId, Digest), u64> = HashMap::new();
    let mut first: HashMap<Digest, u64> = HashMap::new();
    for r in trace.of_kind(RecordKind::Final) {
        let (Some(p), Detail::Block(m)) = (r.src, &r.detail) else { continue };
        if !correct.contains(&p) {
            continue;
        }
        fin.entry((p, m.digest)).or_insert(r.tick);
        first.entry(m.digest).or_insert(r.tick);
    }

    let blocks: Vec<BlockLatency> = trace
        .of_kind(RecordKind::Propose)
        .filter_map(|r| match (&r.detail, r.src) {
            (Detail::Block(m), Some(p)) if m.kind == BlockKind::Tr && correct.contains(&p) => Some(BlockLatency {
                author: p.0,
                slot: m.slot,
                digest: m.digest.to_hex(),
                proposed: r.tick,
                issuer_final: fin.get(&(p, m.digest)).copied(),
                first_final: first.get(&m.digest).copied(),
            }),
            _ => None,
        })
        .collect();

    let carriers = tx_blocks(trace);
    let transactions: Vec<TxLatency> = trace
        .of_kind(RecordKind::Tx)
        .filter_map(|r| match (&r.detail, r.src) {
            (Detail::Tx { seq }, Some(p)) if correct.contains(&p) => Some(TxLatency {
                issuer: p.0,
                seq: *seq,
                issued: r.tick,
                finalized: carriers.get(&(p.0, *seq)).and_then(|d| fin.get(&(p, *d)).copied()),
            }),
            _ => None,
        })
        .collect();

    let mut by_type: BTreeMap<String, Traffic> = BTreeMap::new();
    let mut total = Traffic::default();
    let mut last_send = None;
    for r in trace.of_kind(RecordKind::Send) {
        if !r.src.is_some_and(|p| correct.contains(&p)) {
            continue;
        }
        let bytes = r.bytes.unwrap_or(0) as u64;
        let e = by_type.entry(r.msg_type.unwrap_or("-").to_string()).or_default();
        e.messages += 1;
        e.bytes += bytes;
        total.messages += 1;
        total.bytes += bytes;
        last_send = Some(r.tick);
    }
    let finalized_transactions = transactions.iter().filter(|t| t.finalized.is_some()).count() as u64;
    let bytes_per_transaction =
        (finalized_transactions > 0).then(|| total.bytes as f64 / finalized_transactions as f64);
    let views_entered = trace
        .of_kind(RecordKind::View)
        .filter_map(|r| match r.detail {
            Detail::View(v) => Some(v),
            _ => None,
        })
        .max()
        .unwrap_or(0);

    MetricsReport {
        delta: cfg.delta_actual,
        blocks,
        transactions,
        by_type,
        total,
        finalized_transactions,
        bytes_per_transaction,
        views_entered,
        last_send,
    }
}

/// Messages of a given kind sent by correct processes, for ad hoc queries.
pub fn count_sent(trace: &Trace, pred: impl Fn(&Message) -> bool) -> usize {
    let correct: HashSet<ProcessId> = correct(trace).into_iter().collect();
    trace
        .of_kind(RecordKind::Send)
        .filter(|r| r.src.is_some_and(|p| correct.contains(&p)) && pred(trace.message(r.msg_id().unwrap())))
        .count()
}
