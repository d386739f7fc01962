//! Trace checkers. Each one is a pure function of a [`Trace`].

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use morpheus_core::ordering::Extractor;
use morpheus_core::types::{BlockKind, BlockMeta, Message, Qc};
use morpheus_core::{Committee, Digest, Log, ProcessId};
use morpheus_sim::{committee, Detail, MsgId, RecordKind, Trace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

/// Result of one checker on one trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", content = "detail", rename_all = "kebab-case")]
pub enum Outcome {
    Pass,
    Fail(String),
    /// The trace cannot be judged under the checker's policy.
    Inconclusive(String),
}

impl Outcome {
    pub fn is_fail(&self) -> bool {
        matches!(self, Outcome::Fail(_))
    }

    pub fn is_pass(&self) -> bool {
        matches!(self, Outcome::Pass)
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Pass => f.write_str("pass"),
            Outcome::Fail(s) => write!(f, "FAIL: {s}"),
            Outcome::Inconclusive(s) => write!(f, "inconclusive: {s}"),
        }
    }
}

/// Processes whose behaviour is not scripted as faulty.
pub fn correct(trace: &Trace) -> Vec<ProcessId> {
    trace.config.correct_processes().into_iter().map(ProcessId).collect()
}

/// For each process, the messages in its M_i (sent by it or delivered to
/// it) with the tick each entered, in trace order.
pub fn knowledge(trace: &Trace) -> Vec<Vec<(u64, MsgId)>> {
    let n = trace.config.n;
    let mut seen: Vec<HashSet<MsgId>> = vec![HashSet::new(); n];
    let mut out = vec![Vec::new(); n];
    for r in &trace.records {
        let who = match r.kind {
            RecordKind::Send | RecordKind::Drop => r.src,
            RecordKind::Deliver => r.dst,
            _ => None,
        };
        let (Some(p), Some(id)) = (who, r.msg_id()) else { continue };
        if seen[p.index()].insert(id) {
            out[p.index()].push((r.tick, id));
        }
    }
    out
}

/// Which message set a log was extracted from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Source {
    Process(u32),
    /// Union over all correct processes.
    Union,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Sample {
    pub source: Source,
    pub tick: u64,
}

impl fmt::Display for Sample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.source {
            Source::Process(p) => write!(f, "M_{p}({})", self.tick),
            Source::Union => write!(f, "M({})", self.tick),
        }
    }
}

/// Two sampled message sets whose logs contradict consistency.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub first: Sample,
    pub second: Sample,
    /// `first` is contained in `second`; otherwise only compatibility failed.
    pub nested: bool,
    pub first_log: Vec<(u32, u64)>,
    pub second_log: Vec<(u32, u64)>,
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rel = if self.nested { "is contained in" } else { "was compared with" };
        write!(f, "{} {rel} {} but F gives {:?} vs {:?}", self.first, self.second, self.first_log, self.second_log)
    }
}

fn ids(log: &Log) -> Vec<(u32, u64)> {
    log.iter().map(|t| (t.issuer.0, t.seq)).collect()
}

/// Feeds a growing message set and extracts on demand, skipping work when
/// the head is unchanged.
struct Stream {
    x: Extractor,
    head: Option<Digest>,
    log: Log,
}

impl Stream {
    fn new(c: &Committee) -> Self {
        Stream { x: Extractor::new(c.clone()), head: None, log: Log::default() }
    }

    fn log(&mut self) -> &Log {
        let head = self.x.head().map(|q| q.digest());
        if head != self.head {
            self.head = head;
            self.log = self.x.extract();
        }
        &self.log
    }
}

/// Ticks at which message sets are sampled: every finalization tick, 20
/// seeded random ticks, and the horizon.
pub fn sample_ticks(trace: &Trace) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(trace.config.seed ^ 0x5a5a);
    let horizon = trace.config.horizon;
    let mut ticks: BTreeSet<u64> = trace.of_kind(RecordKind::Final).map(|r| r.tick).collect();
    ticks.extend((0..20).map(|_| rng.gen_range(0..=horizon)));
    ticks.insert(horizon);
    ticks.into_iter().collect()
}

/// Samples nested message sets and checks that extraction is monotone
/// under inclusion and that all sampled logs are pairwise compatible.
pub fn check_consistency(trace: &Trace) -> Result<(), Box<Witness>> {
    let c = committee(&trace.config);
    let correct = correct(trace);
    let know = knowledge(trace);
    let ticks = sample_ticks(trace);

    let mut streams: Vec<(Source, Stream, usize)> =
        correct.iter().map(|p| (Source::Process(p.0), Stream::new(&c), 0)).collect();
    let mut union = Stream::new(&c);
    let mut union_seen: HashSet<MsgId> = HashSet::new();
    let mut union_feed: Vec<(u64, MsgId)> = correct.iter().flat_map(|p| know[p.index()].iter().copied()).collect();
    union_feed.sort_by_key(|&(t, id)| (t, id));
    let mut union_at = 0;

    let mut prev: HashMap<Source, (Sample, Log)> = HashMap::new();
    let mut longest: Option<(Sample, Log)> = None;
    let mut all: Vec<(Sample, Log)> = Vec::new();

    let nested = |a: Sample, la: &Log, b: Sample, lb: &Log| -> Result<(), Box<Witness>> {
        if la.is_prefix_of(lb) {
            Ok(())
        } else {
            Err(Box::new(Witness { first: a, second: b, nested: true, first_log: ids(la), second_log: ids(lb) }))
        }
    };

    for &t in &ticks {
        while union_at < union_feed.len() && union_feed[union_at].0 <= t {
            let id = union_feed[union_at].1;
            if union_seen.insert(id) {
                union.x.insert(trace.message(id));
            }
            union_at += 1;
        }
        let us = Sample { source: Source::Union, tick: t };
        let ulog = union.log().clone();
        for (source, s, at) in streams.iter_mut() {
            let Source::Process(p) = *source else { unreachable!() };
            let feed = &know[p as usize];
            while *at < feed.len() && feed[*at].0 <= t {
                s.x.insert(trace.message(feed[*at].1));
                *at += 1;
            }
            let sample = Sample { source: *source, tick: t };
            let log = s.log().clone();
            if let Some((ps, pl)) = prev.get(source) {
                nested(*ps, pl, sample, &log)?;
            }
            nested(sample, &log, us, &ulog)?;
            prev.insert(*source, (sample, log.clone()));
            all.push((sample, log));
        }
        if let Some((ps, pl)) = prev.get(&Source::Union) {
            nested(*ps, pl, us, &ulog)?;
        }
        prev.insert(Source::Union, (us, ulog.clone()));
        all.push((us, ulog));
    }

    // Pairwise compatibility holds iff every log is a prefix of the longest.
    for (s, l) in &all {
        if longest.as_ref().map_or(true, |(_, m)| l.len() > m.len()) {
            longest = Some((*s, l.clone()));
        }
    }
    if let Some((ls, ll)) = longest {
        for (s, l) in &all {
            if !l.is_prefix_of(&ll) {
                return Err(Box::new(Witness {
                    first: *s,
                    second: ls,
                    nested: false,
                    first_log: ids(l),
                    second_log: ids(&ll),
                }));
            }
        }
    }
    Ok(())
}

/// How long after `max(GST, issue tick)` a transaction may take before the
/// run can judge it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LivenessPolicy {
    pub grace: u64,
}

impl LivenessPolicy {
    /// `views` view changes' worth of 12 Delta timers.
    pub fn views(views: u64, delta_bound: u64) -> Self {
        LivenessPolicy { grace: views * 12 * delta_bound }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LivenessError {
    #[error("horizon {horizon} is too short: transaction {issuer}:{seq} issued at {issued} needs until {needed}")]
    HorizonTooShort { issuer: u32, seq: u64, issued: u64, needed: u64, horizon: u64 },
    #[error("{} correct transactions missing from the final log, first {:?}", .0.len(), .0.first())]
    Missing(Vec<(u32, u64)>),
}

/// Every transaction issued by a correct process must be in the log
/// extracted from everything correct processes hold at the horizon.
pub fn check_liveness(trace: &Trace, policy: LivenessPolicy) -> Result<(), LivenessError> {
    let cfg = &trace.config;
    let correct: HashSet<ProcessId> = correct(trace).into_iter().collect();
    let issued: Vec<(ProcessId, u64, u64)> = trace
        .of_kind(RecordKind::Tx)
        .filter(|r| r.src.is_some_and(|p| correct.contains(&p)))
        .filter_map(|r| match r.detail {
            Detail::Tx { seq } => Some((r.src.unwrap(), seq, r.tick)),
            _ => None,
        })
        .collect();
    for &(p, seq, t) in &issued {
        let needed = cfg.gst.max(t) + policy.grace;
        if needed > cfg.horizon {
            return Err(LivenessError::HorizonTooShort { issuer: p.0, seq, issued: t, needed, horizon: cfg.horizon });
        }
    }
    let know = knowledge(trace);
    let mut x = Extractor::new(committee(cfg));
    let mut seen = HashSet::new();
    for p in &correct {
        for &(_, id) in &know[p.index()] {
            if seen.insert(id) {
                x.insert(trace.message(id));
            }
        }
    }
    let have = x.extract().ids();
    let missing: Vec<(u32, u64)> =
        issued.iter().filter(|(p, s, _)| !have.contains(&(*p, *s))).map(|(p, s, _)| (p.0, *s)).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(LivenessError::Missing(missing))
    }
}

/// Two z-QCs with the same view, type and height for different blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QcClash {
    pub z: u8,
    pub a: BlockMeta,
    pub b: BlockMeta,
}

/// Every valid QC in the trace, explicit or formed from a vote quorum.
pub fn all_qcs(trace: &Trace) -> Vec<(u8, BlockMeta)> {
    let c = committee(&trace.config);
    let mut out = BTreeSet::new();
    let mut votes: HashMap<(u8, BlockMeta), BTreeSet<ProcessId>> = HashMap::new();
    let push = |q: &Qc, out: &mut BTreeSet<(u8, BlockMeta)>| {
        if !q.is_genesis() && q.verify(&c) {
            out.insert((q.z, q.block));
        }
    };
    for m in &trace.messages {
        match m {
            Message::Qc(q) => push(q, &mut out),
            Message::Block(b) => {
                for q in b.prev.iter().chain(b.one_qc.iter()) {
                    push(q, &mut out);
                }
                for v in &b.just {
                    push(&v.qc, &mut out);
                }
            }
            Message::ViewMsg(v) => push(&v.qc, &mut out),
            Message::Vote(v) if v.verify(&c) => {
                votes.entry((v.z, v.block)).or_default().insert(v.voter());
            }
            _ => {}
        }
    }
    for (k, voters) in votes {
        if voters.len() >= c.quorum() {
            out.insert(k);
        }
    }
    out.into_iter().collect()
}

/// No two 1-QCs (or 2-QCs) agree on (view, type, height) yet certify
/// different blocks.
pub fn check_qc_uniqueness(trace: &Trace) -> Result<(), QcClash> {
    let mut by_pos: HashMap<(u8, i64, BlockKind, u64), BlockMeta> = HashMap::new();
    for (z, m) in all_qcs(trace) {
        if z == 0 {
            continue;
        }
        if let Some(prev) = by_pos.insert((z, m.view, m.kind, m.height), m) {
            if prev.digest != m.digest {
                return Err(QcClash { z, a: prev, b: m });
            }
        }
    }
    Ok(())
}

/// Largest tip count recorded for any correct process, with the bound 2n.
pub fn check_tip_bound(trace: &Trace) -> Result<usize, (ProcessId, u64, usize)> {
    let bound = 2 * trace.config.n;
    let correct: HashSet<ProcessId> = correct(trace).into_iter().collect();
    let mut max = 0;
    for r in trace.of_kind(RecordKind::TipBound) {
        let (Some(p), Detail::Tips(t)) = (r.src, &r.detail) else { continue };
        if !correct.contains(&p) {
            continue;
        }
        if *t > bound {
            return Err((p, r.tick, *t));
        }
        max = max.max(*t);
    }
    Ok(max)
}

/// The first transaction block sent by its author that carries each
/// transaction, keyed by (issuer, seq).
pub fn tx_blocks(trace: &Trace) -> HashMap<(u32, u64), Digest> {
    let mut out = HashMap::new();
    for r in trace.of_kind(RecordKind::Send) {
        if let Message::Block(b) = trace.message(r.msg_id().unwrap()) {
            if b.kind == BlockKind::Tr && b.author == r.src {
                for t in &b.txs {
                    out.entry((t.issuer.0, t.seq)).or_insert(b.digest());
                }
            }
        }
    }
    out
}

/// Tick at which the last correct-issued transaction became final at every
/// correct process, or the first transaction that never did.
pub fn last_finalization(trace: &Trace) -> Result<u64, (u32, u64)> {
    let correct = correct(trace);
    let cs: HashSet<ProcessId> = correct.iter().copied().collect();
    let blocks = tx_blocks(trace);
    let mut fin: HashMap<(ProcessId, Digest), u64> = HashMap::new();
    for r in trace.of_kind(RecordKind::Final) {
        if let (Some(p), Detail::Block(m)) = (r.src, &r.detail) {
            fin.entry((p, m.digest)).or_insert(r.tick);
        }
    }
    let mut last = 0;
    for r in trace.of_kind(RecordKind::Tx) {
        let (Some(p), Detail::Tx { seq }) = (r.src, &r.detail) else { continue };
        if !cs.contains(&p) {
            continue;
        }
        last = last.max(r.tick);
        let Some(d) = blocks.get(&(p.0, *seq)) else { return Err((p.0, *seq)) };
        for q in &correct {
            match fin.get(&(*q, *d)) {
                Some(&t) => last = last.max(t),
                None => return Err((p.0, *seq)),
            }
        }
    }
    Ok(last)
}

/// After the last correct transaction is final everywhere, the last block
/// any correct process finalizes is final, and no message is in flight,
/// correct processes send nothing more up to the horizon.
///
/// Blocks from Byzantine issuers count: finalizing them may legitimately
/// take complaints and a view change.
///
/// The run is inconclusive unless a quiet stretch of at least 12 Delta
/// (the longest timer) fits before the horizon.
pub fn check_quiescence(trace: &Trace) -> Outcome {
    let cfg = &trace.config;
    let correct: HashSet<ProcessId> = correct(trace).into_iter().collect();
    let last_payload = cfg.payloads.iter().flat_map(|p| p.ticks()).max().unwrap_or(0);
    let last_final = trace
        .of_kind(RecordKind::Final)
        .filter(|r| r.src.is_some_and(|p| correct.contains(&p)))
        .map(|r| r.tick)
        .max()
        .unwrap_or(0);
    let settled = match last_finalization(trace) {
        Ok(t) => t.max(last_payload).max(last_final),
        Err((p, s)) => {
            return Outcome::Inconclusive(format!("transaction {p}:{s} never final at every correct process"))
        }
    };
    let crash: HashMap<ProcessId, u64> =
        trace.of_kind(RecordKind::Crash).filter_map(|r| Some((r.src?, r.tick))).collect();

    // Delivery tick of every send that will be delivered, per (id, dst).
    let mut delivered: HashMap<(MsgId, ProcessId), u64> = HashMap::new();
    for r in trace.of_kind(RecordKind::Deliver) {
        delivered.insert((r.msg_id().unwrap(), r.dst.unwrap()), r.tick);
    }
    // Walk sends in tick order. A send while traffic is still draining
    // extends the drain to its arrival; a correct send after it is chatter.
    let mut quiet = settled;
    let mut chatter = Vec::new();
    for r in trace.of_kind(RecordKind::Send) {
        let dst = r.dst.unwrap();
        let arrival = delivered.get(&(r.msg_id().unwrap(), dst)).copied();
        // Byzantine sends are fresh stimuli rather than chatter.
        if r.tick > quiet && r.src.is_some_and(|p| correct.contains(&p)) {
            chatter.push(r.tick);
            continue;
        }
        let lost = crash.get(&dst).is_some_and(|&c| arrival.map_or(true, |a| a >= c));
        if lost {
            continue;
        }
        quiet = quiet.max(arrival.unwrap_or(cfg.horizon + 1));
    }
    if let Some(first) = chatter.first() {
        return Outcome::Fail(format!(
            "{} sends by correct processes after quiet tick {quiet}, first at {first}",
            chatter.len()
        ));
    }
    if quiet + 12 * cfg.delta_bound > cfg.horizon {
        return Outcome::Inconclusive(format!("traffic settles at {quiet}, too close to horizon {}", cfg.horizon));
    }
    Outcome::Pass
}

/// All checkers at once.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CheckReport {
    pub consistency: Outcome,
    pub liveness: Outcome,
    pub qc_uniqueness: Outcome,
    pub quiescence: Outcome,
    pub tip_bound: Outcome,
}

impl CheckReport {
    pub fn failed(&self) -> bool {
        [&self.consistency, &self.liveness, &self.qc_uniqueness, &self.quiescence, &self.tip_bound]
            .iter()
            .any(|o| o.is_fail())
    }
}

pub fn check_all(trace: &Trace, policy: LivenessPolicy) -> CheckReport {
    CheckReport {
        consistency: match check_consistency(trace) {
            Ok(()) => Outcome::Pass,
            Err(w) => Outcome::Fail(w.to_string()),
        },
        liveness: match check_liveness(trace, policy) {
            Ok(()) => Outcome::Pass,
            Err(e @ LivenessError::HorizonTooShort { .. }) => Outcome::Inconclusive(e.to_string()),
            Err(e) => Outcome::Fail(e.to_string()),
        },
        qc_uniqueness: match check_qc_uniqueness(trace) {
            Ok(()) => Outcome::Pass,
            Err(c) => Outcome::Fail(format!("{}-QCs for {:?} and {:?}", c.z, c.a, c.b)),
        },
        quiescence: check_quiescence(trace),
        tip_bound: match check_tip_bound(trace) {
            Ok(_) => Outcome::Pass,
            Err((p, t, k)) => Outcome::Fail(format!("{p:?} had {k} tips at tick {t}")),
        },
    }
}
