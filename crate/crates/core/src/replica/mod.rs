//! The per-process state machine.
//!
//! A [`Replica`] consumes messages, new transactions and clock readings, and
//! after each input runs its transitions in priority order until none
//! applies. Everything it wants sent comes back as [`Outbound`] actions;
//! messages addressed to itself are processed immediately.

mod observe;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::sync::Arc;

use crate::crypto::{Digest, ProcessId, Signature, SigningKey};
use crate::ordering::BlockStore;
use crate::types::{
    validate_block, Block, BlockContent, BlockKind, BlockMeta, Committee, EndView, Message, Qc, QcKey, Transaction,
    View, ViewCert, ViewMsg, Vote,
};

use observe::Pos;
pub use observe::{key_of, ObservesIndex};

/// When a process with pending transactions may cut a new block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchPolicy {
    /// Minimum queued transactions before a block is produced.
    pub min_batch: usize,
    /// Maximum transactions per block.
    pub max_batch: usize,
    /// Minimum local time between consecutive transaction blocks.
    pub min_gap: u64,
}

impl Default for BatchPolicy {
    fn default() -> Self {
        BatchPolicy { min_batch: 1, max_batch: 1024, min_gap: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct ReplicaConfig {
    pub id: ProcessId,
    pub committee: Committee,
    /// The known delay bound, in ticks.
    pub delta: u64,
    pub batching: BatchPolicy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Recipients {
    /// Every other process.
    All,
    One(ProcessId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outbound {
    pub msg: Message,
    pub to: Recipients,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReplicaEvent {
    Proposed(Arc<Block>),
    /// A block became final according to this replica's messages.
    Finalized(BlockMeta),
    EnteredView(View),
}

struct QcEntry {
    qc: Qc,
    pos: Pos,
    inserted: u64,
}

type VoteKey = (u8, BlockKind, u64, ProcessId);

pub struct Replica {
    id: ProcessId,
    key: SigningKey,
    committee: Committee,
    delta: u64,
    batching: BatchPolicy,
    n: usize,

    blocks: BlockStore,
    qcs: HashMap<QcKey, QcEntry>,
    block_pos: HashMap<Digest, [Option<Pos>; 3]>,
    pos_qcs: Vec<Vec<QcKey>>,
    index: ObservesIndex,
    pointed_by: HashMap<Digest, Vec<Digest>>,
    votes: HashMap<(u8, BlockMeta), BTreeMap<ProcessId, Signature>>,
    end_views: BTreeMap<View, BTreeMap<ProcessId, EndView>>,
    certs: BTreeMap<View, ViewCert>,
    view_msgs: BTreeMap<View, BTreeMap<ProcessId, ViewMsg>>,

    view: View,
    view_entry: u64,
    slot_lead: u64,
    slot_tr: u64,
    voted: HashSet<VoteKey>,
    phase: HashSet<View>,

    lead_blocks: BTreeMap<View, Vec<Arc<Block>>>,
    lead_one_qcs: BTreeMap<View, Vec<Qc>>,
    max_one_qc: Qc,
    max_view_qc: Qc,
    max_height: u64,

    unvoted: VecDeque<Arc<Block>>,
    zero_qc_pending: VecDeque<BlockMeta>,
    zero_qc_sent: HashSet<Digest>,
    certs_formed: HashSet<View>,
    own_tr: BTreeMap<u64, Digest>,
    own_lead: BTreeMap<u64, Digest>,
    lead_views: HashSet<View>,
    queue: VecDeque<Transaction>,
    last_tr_time: Option<u64>,

    unfinal: Vec<QcKey>,
    finalized: HashSet<Digest>,
    complained: HashSet<(View, QcKey)>,
    end_view_sent: HashSet<View>,

    now: u64,
    outbox: Vec<Outbound>,
    events: Vec<ReplicaEvent>,
    invalid: u64,
}

fn by_rank(a: &Qc, b: &Qc) -> Ordering {
    a.block.rank().cmp(&b.block.rank()).then_with(|| crate::codec::encode_qc(b).cmp(&crate::codec::encode_qc(a)))
}

impl Replica {
    pub fn new(cfg: ReplicaConfig) -> Self {
        let n = cfg.committee.n;
        let key = cfg.committee.keyring.signing_key(cfg.id);
        let g = Qc::genesis();
        let mut r = Replica {
            id: cfg.id,
            key,
            committee: cfg.committee,
            delta: cfg.delta,
            batching: cfg.batching,
            n,
            blocks: BlockStore::new(),
            qcs: HashMap::new(),
            block_pos: HashMap::new(),
            pos_qcs: Vec::new(),
            index: ObservesIndex::new(1 + 2 * n),
            pointed_by: HashMap::new(),
            votes: HashMap::new(),
            end_views: BTreeMap::new(),
            certs: BTreeMap::new(),
            view_msgs: BTreeMap::new(),
            view: 0,
            view_entry: 0,
            slot_lead: 0,
            slot_tr: 0,
            voted: HashSet::new(),
            phase: HashSet::new(),
            lead_blocks: BTreeMap::new(),
            lead_one_qcs: BTreeMap::new(),
            max_one_qc: g,
            max_view_qc: g,
            max_height: 0,
            unvoted: VecDeque::new(),
            zero_qc_pending: VecDeque::new(),
            zero_qc_sent: HashSet::new(),
            certs_formed: HashSet::new(),
            own_tr: BTreeMap::new(),
            own_lead: BTreeMap::new(),
            lead_views: HashSet::new(),
            queue: VecDeque::new(),
            last_tr_time: None,
            unfinal: Vec::new(),
            finalized: HashSet::new(),
            complained: HashSet::new(),
            end_view_sent: HashSet::new(),
            now: 0,
            outbox: Vec::new(),
            events: Vec::new(),
            invalid: 0,
        };
        r.add_qc(g);
        r
    }

    pub fn id(&self) -> ProcessId {
        self.id
    }

    pub fn committee(&self) -> &Committee {
        &self.committee
    }

    pub fn view(&self) -> View {
        self.view
    }

    pub fn slot_tr(&self) -> u64 {
        self.slot_tr
    }

    pub fn slot_lead(&self) -> u64 {
        self.slot_lead
    }

    pub fn phase(&self, v: View) -> u8 {
        self.phase.contains(&v) as u8
    }

    pub fn has_voted(&self, z: u8, kind: BlockKind, slot: u64, author: ProcessId) -> bool {
        self.voted.contains(&(z, kind, slot, author))
    }

    pub fn blocks(&self) -> &BlockStore {
        &self.blocks
    }

    pub fn qcs(&self) -> impl Iterator<Item = &Qc> {
        self.qcs.values().map(|e| &e.qc)
    }

    pub fn pending_transactions(&self) -> usize {
        self.queue.len()
    }

    /// Messages dropped because they failed validation.
    pub fn invalid_count(&self) -> u64 {
        self.invalid
    }

    /// Enters view 0: sends the view-0 message to its leader.
    pub fn start(&mut self, now: u64) -> Vec<Outbound> {
        self.now = now;
        self.view_entry = now;
        self.events.push(ReplicaEvent::EnteredView(0));
        let m = ViewMsg::new(0, self.max_one_qc, &self.key);
        self.send(self.committee.lead(0), Message::ViewMsg(m));
        self.step(now)
    }

    pub fn on_receive(&mut self, msg: Message, now: u64) -> Vec<Outbound> {
        self.now = now;
        self.ingest(msg);
        self.step(now)
    }

    pub fn on_transactions(&mut self, txs: impl IntoIterator<Item = Transaction>, now: u64) -> Vec<Outbound> {
        self.now = now;
        self.queue.extend(txs);
        self.step(now)
    }

    pub fn drain_events(&mut self) -> Vec<ReplicaEvent> {
        std::mem::take(&mut self.events)
    }

    /// Runs transitions until none applies.
    pub fn step(&mut self, now: u64) -> Vec<Outbound> {
        self.now = self.now.max(now);
        loop {
            self.sweep_finality();
            let fired = self.update_view()
                || self.zero_votes()
                || self.new_tr_block()
                || self.new_leader_block()
                || self.vote_tr()
                || self.vote_leader()
                || self.complain();
            if !fired {
                break;
            }
        }
        std::mem::take(&mut self.outbox)
    }

    /// Next local time at which a timer could enable a transition.
    pub fn next_deadline(&self) -> Option<u64> {
        let mut best: Option<u64> = None;
        let mut consider = |t: u64| {
            if t > self.now {
                best = Some(best.map_or(t, |b| b.min(t)));
            }
        };
        let ev_sent = self.end_view_sent.contains(&self.view);
        for k in &self.unfinal {
            let e = &self.qcs[k];
            if self.index.is_final(e.pos) {
                continue;
            }
            let trig = e.inserted.max(self.view_entry);
            if !self.complained.contains(&(self.view, *k)) {
                consider(trig + 6 * self.delta);
            }
            if !ev_sent {
                consider(trig + 12 * self.delta);
            }
        }
        if self.queue.len() >= self.batching.min_batch {
            if let Some(t) = self.last_tr_time {
                consider(t + self.batching.min_gap);
            }
        }
        best
    }

    fn broadcast(&mut self, msg: Message) {
        self.outbox.push(Outbound { msg: msg.clone(), to: Recipients::All });
        self.ingest(msg);
    }

    fn send(&mut self, to: ProcessId, msg: Message) {
        if to == self.id {
            self.ingest(msg);
        } else {
            self.outbox.push(Outbound { msg, to: Recipients::One(to) });
        }
    }

    // ---- message intake -------------------------------------------------

    fn ingest(&mut self, msg: Message) {
        match msg {
            Message::Block(b) => self.insert_block(b),
            Message::Vote(v) => self.insert_vote(v),
            Message::Qc(q) => {
                if q.verify(&self.committee) {
                    self.add_qc(q);
                } else {
                    self.invalid += 1;
                }
            }
            Message::EndView(e) => {
                if e.verify(&self.committee) {
                    self.end_views.entry(e.view).or_default().insert(e.sig.signer(), e);
                } else {
                    self.invalid += 1;
                }
            }
            Message::ViewCert(c) => {
                if c.verify(&self.committee) {
                    self.certs.entry(c.view).or_insert(c);
                } else {
                    self.invalid += 1;
                }
            }
            Message::ViewMsg(m) => {
                if m.qc.z != 1 || !m.verify(&self.committee) {
                    self.invalid += 1;
                    return;
                }
                self.add_qc(m.qc);
                if self.committee.lead(m.view) == self.id && m.view >= 0 {
                    self.view_msgs.entry(m.view).or_default().insert(m.signer(), m);
                }
            }
        }
    }

    fn chain_of(&self, meta: &BlockMeta) -> usize {
        match (meta.kind, meta.author) {
            (BlockKind::Lead, Some(a)) => 1 + a.index(),
            (BlockKind::Tr, Some(a)) => 1 + self.n + a.index(),
            _ => 0,
        }
    }

    fn min_pos(&self, d: &Digest) -> Option<Pos> {
        self.block_pos.get(d).and_then(|ps| ps.iter().flatten().next().copied())
    }

    fn max_pos(&self, d: &Digest) -> Option<Pos> {
        self.block_pos.get(d).and_then(|ps| ps.iter().rev().flatten().next().copied())
    }

    fn add_qc(&mut self, q: Qc) {
        let key = q.key();
        if q.z > 2 || self.qcs.contains_key(&key) {
            return;
        }
        let chain = self.chain_of(&q.block);
        let (pos, _) = self.index.insert(chain, key_of(q.z, q.block.slot), q.z == 2);
        if self.pos_qcs.len() <= pos {
            self.pos_qcs.resize(pos + 1, Vec::new());
        }
        self.pos_qcs[pos].push(key);
        self.qcs.insert(key, QcEntry { qc: q, pos, inserted: self.now });
        let d = q.digest();
        self.block_pos.entry(d).or_default()[q.z as usize] = Some(pos);

        if let Some(b) = self.blocks.get(&d).cloned() {
            for p in b.pointees() {
                if let Some(y) = self.max_pos(&p) {
                    self.index.add_edge(pos, y);
                }
            }
        }
        if let Some(parents) = self.pointed_by.get(&d).cloned() {
            for c in parents {
                if let Some(x) = self.min_pos(&c) {
                    self.index.add_edge(x, pos);
                }
            }
        }

        if q.z == 1 {
            if by_rank(&q, &self.max_one_qc) == Ordering::Greater {
                self.max_one_qc = q;
            }
            if q.block.kind == BlockKind::Lead {
                self.lead_one_qcs.entry(q.block.view).or_default().push(q);
            }
        }
        if q.block.view > self.max_view_qc.block.view {
            self.max_view_qc = q;
        }
        self.unfinal.push(key);
    }

    fn insert_block(&mut self, b: Arc<Block>) {
        if b.is_genesis() || self.blocks.contains(&b.digest()) {
            return;
        }
        if !validate_block(&b, &self.committee) {
            self.invalid += 1;
            return;
        }
        for q in b.prev.iter().chain(b.one_qc.iter()) {
            self.add_qc(*q);
        }
        for m in &b.just {
            self.add_qc(m.qc);
        }
        let d = b.digest();
        self.blocks.insert(b.clone());
        let pointees = b.pointees();
        for p in &pointees {
            self.pointed_by.entry(*p).or_default().push(d);
        }
        if let Some(x) = self.min_pos(&d) {
            for p in &pointees {
                if let Some(y) = self.max_pos(p) {
                    self.index.add_edge(x, y);
                }
            }
        }
        self.max_height = self.max_height.max(b.height);
        if b.kind == BlockKind::Lead {
            self.lead_blocks.entry(b.view).or_default().push(b.clone());
        }
        self.unvoted.push_back(b);
    }

    fn insert_vote(&mut self, v: Vote) {
        if v.z > 2 || !v.verify(&self.committee) {
            self.invalid += 1;
            return;
        }
        let quorum = self.committee.quorum();
        let shares = self.votes.entry((v.z, v.block)).or_default();
        if shares.len() >= quorum {
            return;
        }
        shares.insert(v.voter(), v.sig);
        if shares.len() < quorum {
            return;
        }
        let sig = self.committee.keyring.aggregate(shares.values(), quorum as u32).expect("verified distinct shares");
        self.add_qc(Qc { z: v.z, block: v.block, sig });
        if v.z == 0 && v.block.author == Some(self.id) {
            self.zero_qc_pending.push_back(v.block);
        }
    }

    // ---- queries -----------------------------------------------------------

    fn pos_of(&self, q: &Qc) -> Option<Pos> {
        self.qcs.get(&q.key()).map(|e| e.pos)
    }

    /// Whether `q` observes `q2`; both must be in Q.
    pub fn q_observes(&self, q: &Qc, q2: &Qc) -> bool {
        match (self.pos_of(q), self.pos_of(q2)) {
            (Some(a), Some(b)) => self.index.observes(a, b),
            _ => false,
        }
    }

    /// Whether some 2-QC in Q observes `q`.
    pub fn is_final(&self, q: &Qc) -> bool {
        self.pos_of(q).is_some_and(|p| self.index.is_final(p))
    }

    pub fn block_is_final(&self, d: &Digest) -> bool {
        self.block_pos.get(d).is_some_and(|ps| ps.iter().flatten().any(|&p| self.index.is_final(p)))
    }

    fn qcs_at(&self, positions: &[Pos]) -> Vec<Qc> {
        let mut keys: Vec<QcKey> = positions.iter().flat_map(|&p| self.pos_qcs[p].iter().copied()).collect();
        keys.sort();
        keys.dedup();
        keys.iter().map(|k| self.qcs[k].qc).collect()
    }

    pub fn tips(&self) -> Vec<Qc> {
        self.qcs_at(&self.index.tips())
    }

    pub fn tip_count(&self) -> usize {
        self.index.tips().iter().map(|&p| self.pos_qcs[p].len()).sum()
    }

    fn single_tips(&self) -> Vec<Qc> {
        let mut out = self.qcs_at(&self.index.single_tips());
        // Highest level first so that the strongest certificate is used.
        out.sort_by(|a, b| b.z.cmp(&a.z).then_with(|| a.key().cmp(&b.key())));
        out
    }

    pub fn single_tip_q(&self) -> Option<Qc> {
        self.single_tips().into_iter().next()
    }

    pub fn single_tip_m(&self) -> Option<Arc<Block>> {
        for q in self.single_tips() {
            if let Some(ps) = self.pointed_by.get(&q.digest()) {
                if ps.len() == 1 {
                    return self.blocks.get(&ps[0]).cloned();
                }
            }
        }
        None
    }

    /// Highest-level QC held for block `d`.
    fn best_qc_for(&self, d: &Digest) -> Option<Qc> {
        (0..3u8).rev().find_map(|z| self.blocks_meta_for(d, z).map(|m| self.qcs[&(z, m)].qc))
    }

    fn blocks_meta_for(&self, d: &Digest, z: u8) -> Option<BlockMeta> {
        let p = self.block_pos.get(d)?[z as usize]?;
        self.pos_qcs[p].iter().find(|k| k.1.digest == *d).map(|k| k.1)
    }

    fn one_qc_for(&self, d: &Digest) -> Option<Qc> {
        let meta = self.blocks_meta_for(d, 1)?;
        self.qcs.get(&(1, meta)).map(|e| e.qc)
    }

    // ---- transitions -------------------------------------------------------

    fn sweep_finality(&mut self) {
        let mut i = 0;
        while i < self.unfinal.len() {
            let k = self.unfinal[i];
            let pos = self.qcs[&k].pos;
            if self.index.is_final(pos) {
                self.unfinal.swap_remove(i);
                if self.finalized.insert(k.1.digest) {
                    self.events.push(ReplicaEvent::Finalized(k.1));
                }
            } else {
                i += 1;
            }
        }
    }

    fn update_view(&mut self) -> bool {
        let small = self.committee.small_quorum();
        let ready = self.end_views.range(self.view..).rev().find(|(_, s)| s.len() >= small).map(|(v, _)| *v);
        if let Some(v) = ready {
            if !self.certs.contains_key(&(v + 1)) && self.certs_formed.insert(v + 1) {
                let shares: Vec<Signature> = self.end_views[&v].values().map(|e| e.sig).collect();
                let sig = self.committee.keyring.aggregate(shares.iter(), small as u32).expect("verified end-views");
                self.broadcast(Message::ViewCert(ViewCert { view: v + 1, sig }));
                return true;
            }
        }

        let cert_view = self.certs.keys().next_back().copied().unwrap_or(View::MIN);
        let qc_view = self.max_view_qc.block.view;
        let v = cert_view.max(qc_view);
        if v <= self.view {
            return false;
        }
        self.view = v;
        self.view_entry = self.now;
        self.events.push(ReplicaEvent::EnteredView(v));
        let announce = match self.certs.get(&v) {
            Some(c) => Message::ViewCert(*c),
            None => Message::Qc(self.max_view_qc),
        };
        self.broadcast(announce);
        let leader = self.committee.lead(v);
        let mut own: Vec<Qc> = self.tips().into_iter().filter(|q| q.block.author == Some(self.id)).collect();
        own.sort_by_key(|q| q.key());
        for q in own {
            self.send(leader, Message::Qc(q));
        }
        let m = ViewMsg::new(v, self.max_one_qc, &self.key);
        self.send(leader, Message::ViewMsg(m));
        true
    }

    fn zero_votes(&mut self) -> bool {
        while let Some(b) = self.unvoted.pop_front() {
            let author = b.author.expect("non-genesis");
            if self.voted.insert((0, b.kind, b.slot, author)) {
                let v = Vote::new(0, b.meta(), &self.key);
                self.send(author, Message::Vote(v));
                return true;
            }
        }
        while let Some(meta) = self.zero_qc_pending.pop_front() {
            if self.zero_qc_sent.insert(meta.digest) {
                let q = self.qcs[&(0, meta)].qc;
                self.broadcast(Message::Qc(q));
                return true;
            }
        }
        false
    }

    fn payload_ready(&self) -> bool {
        if self.queue.is_empty() || self.queue.len() < self.batching.min_batch {
            return false;
        }
        if self.last_tr_time.is_some_and(|t| self.now < t + self.batching.min_gap) {
            return false;
        }
        self.slot_tr == 0 || self.own_tr.get(&(self.slot_tr - 1)).is_some_and(|d| self.block_pos.contains_key(d))
    }

    fn new_tr_block(&mut self) -> bool {
        if !self.payload_ready() {
            return false;
        }
        let s = self.slot_tr;
        let q1 = if s == 0 {
            Qc::genesis()
        } else {
            self.best_qc_for(&self.own_tr[&(s - 1)]).expect("checked by payload_ready")
        };
        let mut prev = vec![q1];
        if let Some(q2) = self.single_tip_q() {
            if q2.digest() != q1.digest() {
                prev.push(q2);
            }
        }
        let mut height = prev.iter().map(|q| q.block.height).max().unwrap_or(0) + 1;
        // Without a single tip the greatest 1-QC can sit above every pointee,
        // which the validity rule forbids; point to its block as well.
        let q = self.max_one_qc;
        if q.block.height >= height {
            prev.push(q);
            height = q.block.height + 1;
        }
        let take = self.queue.len().min(self.batching.max_batch);
        let txs: Vec<Transaction> = self.queue.drain(..take).collect();
        let b = BlockContent {
            kind: BlockKind::Tr,
            view: self.view,
            height,
            author: Some(self.id),
            slot: s,
            prev,
            one_qc: Some(self.max_one_qc),
            txs,
            just: Vec::new(),
        }
        .sign(&self.key);
        let b = Arc::new(b);
        self.own_tr.insert(s, b.digest());
        self.slot_tr += 1;
        self.last_tr_time = Some(self.now);
        self.events.push(ReplicaEvent::Proposed(b.clone()));
        self.broadcast(Message::Block(b));
        true
    }

    fn leader_ready(&self) -> bool {
        let v = self.view;
        if !self.lead_views.contains(&v) {
            let enough = self.view_msgs.get(&v).is_some_and(|m| m.len() >= self.committee.quorum());
            let prev_ok = self.slot_lead == 0
                || self.own_lead.get(&(self.slot_lead - 1)).is_some_and(|d| self.block_pos.contains_key(d));
            enough && prev_ok
        } else {
            self.own_lead.get(&(self.slot_lead - 1)).is_some_and(|d| self.one_qc_for(d).is_some())
        }
    }

    fn new_leader_block(&mut self) -> bool {
        let v = self.view;
        if self.committee.lead(v) != self.id || self.phase.contains(&v) || !self.leader_ready() {
            return false;
        }
        let first = !self.lead_views.contains(&v);
        // The first block of a view is always produced; it is what allows
        // transaction blocks of the view to be voted on at all.
        if !first && !self.index.single_tips().is_empty() {
            return false;
        }
        let mut prev = self.tips();
        if self.slot_lead > 0 {
            let d = self.own_lead[&(self.slot_lead - 1)];
            if !prev.iter().any(|q| q.digest() == d) {
                prev.push(self.best_qc_for(&d).expect("checked by leader_ready"));
            }
        }
        prev.sort_by(|a, b| b.z.cmp(&a.z).then_with(|| a.key().cmp(&b.key())));
        let mut seen = HashSet::new();
        prev.retain(|q| seen.insert(q.digest()));
        prev.sort_by_key(|q| q.key());
        let height = prev.iter().map(|q| q.block.height).max().unwrap_or(0) + 1;
        let (one_qc, just) = if first {
            let just: Vec<ViewMsg> = self.view_msgs[&v].values().take(self.committee.quorum()).copied().collect();
            (self.max_one_qc, just)
        } else {
            let d = self.own_lead[&(self.slot_lead - 1)];
            (self.one_qc_for(&d).expect("checked by leader_ready"), Vec::new())
        };
        let b = BlockContent {
            kind: BlockKind::Lead,
            view: v,
            height,
            author: Some(self.id),
            slot: self.slot_lead,
            prev,
            one_qc: Some(one_qc),
            txs: Vec::new(),
            just,
        }
        .sign(&self.key);
        let b = Arc::new(b);
        self.own_lead.insert(self.slot_lead, b.digest());
        self.slot_lead += 1;
        self.lead_views.insert(v);
        self.events.push(ReplicaEvent::Proposed(b.clone()));
        self.broadcast(Message::Block(b));
        true
    }

    fn vote(&mut self, z: u8, meta: BlockMeta) {
        let author = meta.author.expect("non-genesis");
        self.voted.insert((z, meta.kind, meta.slot, author));
        self.broadcast(Message::Vote(Vote::new(z, meta, &self.key)));
    }

    fn vote_tr(&mut self) -> bool {
        let v = self.view;
        let Some(leads) = self.lead_blocks.get(&v) else { return false };
        if leads.is_empty() || !leads.iter().all(|b| self.finalized.contains(&b.digest())) {
            return false;
        }
        if let Some(b) = self.single_tip_m() {
            let author = b.author.expect("non-genesis");
            let one_qc = b.one_qc.expect("valid block");
            if b.kind == BlockKind::Tr
                && b.view == v
                && one_qc.block.rank() >= self.max_one_qc.block.rank()
                && !self.voted.contains(&(1, BlockKind::Tr, b.slot, author))
            {
                self.phase.insert(v);
                self.vote(1, b.meta());
                return true;
            }
        }
        for q in self.single_tips() {
            if q.z != 1 || q.block.kind != BlockKind::Tr || q.block.view != v {
                continue;
            }
            let author = q.block.author.expect("non-genesis");
            if self.voted.contains(&(2, BlockKind::Tr, q.block.slot, author)) || self.max_height > q.block.height {
                continue;
            }
            self.phase.insert(v);
            self.vote(2, q.block);
            return true;
        }
        false
    }

    fn vote_leader(&mut self) -> bool {
        let v = self.view;
        if self.phase.contains(&v) {
            return false;
        }
        let block = self.lead_blocks.get(&v).and_then(|bs| {
            bs.iter().find(|b| !self.voted.contains(&(1, BlockKind::Lead, b.slot, b.author.expect("lead author"))))
        });
        if let Some(b) = block {
            let meta = b.meta();
            self.vote(1, meta);
            return true;
        }
        let qc = self.lead_one_qcs.get(&v).and_then(|qs| {
            qs.iter().find(|q| {
                !self.voted.contains(&(2, BlockKind::Lead, q.block.slot, q.block.author.expect("lead author")))
            })
        });
        if let Some(q) = qc {
            let meta = q.block;
            self.vote(2, meta);
            return true;
        }
        false
    }

    fn complain(&mut self) -> bool {
        let v = self.view;
        let trig = |e: &QcEntry| e.inserted.max(self.view_entry);
        let aged: Vec<(QcKey, Pos)> = self
            .unfinal
            .iter()
            .map(|k| (*k, &self.qcs[k]))
            .filter(|(_, e)| self.now >= trig(e) + 6 * self.delta)
            .map(|(k, e)| (k, e.pos))
            .collect();
        let mut maximal: Vec<(QcKey, Pos)> = aged
            .iter()
            .filter(|(_, p)| !aged.iter().any(|(_, o)| self.index.observes(*o, *p) && !self.index.observes(*p, *o)))
            .copied()
            .collect();
        maximal.sort();
        for (k, _) in maximal {
            if self.complained.insert((v, k)) {
                let q = self.qcs[&k].qc;
                self.send(self.committee.lead(v), Message::Qc(q));
                return true;
            }
        }
        if !self.end_view_sent.contains(&v) {
            let late = self.unfinal.iter().any(|k| self.now >= trig(&self.qcs[k]) + 12 * self.delta);
            if late {
                self.end_view_sent.insert(v);
                self.broadcast(Message::EndView(EndView::new(v, &self.key)));
                return true;
            }
        }
        false
    }
}
