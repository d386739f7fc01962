//! Linearization of a block DAG and log extraction.
//!
//! `tau_dagger` orders an arbitrary block set, `tau` follows the 1-QC chain of
//! a block to build a total order over its ancestry, and [`Extractor`] maps a
//! growing message set to the transaction log it determines.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

pub use crate::types::OrderingError;

use crate::codec;
use crate::crypto::{Digest, ProcessId, Signature};
use crate::types::{genesis, validate_block, Block, BlockKind, BlockMeta, Committee, Message, Qc, Transaction};

/// Blocks indexed by digest. Always contains genesis.
#[derive(Clone, Debug)]
pub struct BlockStore {
    blocks: HashMap<Digest, Arc<Block>>,
}

impl Default for BlockStore {
    fn default() -> Self {
        Self::new()
    }
}

impl BlockStore {
    pub fn new() -> Self {
        let g = Arc::new(genesis());
        let mut blocks = HashMap::new();
        blocks.insert(g.digest(), g);
        BlockStore { blocks }
    }

    /// Returns false if the block was already present.
    pub fn insert(&mut self, b: Arc<Block>) -> bool {
        let d = b.digest();
        if self.blocks.contains_key(&d) {
            return false;
        }
        self.blocks.insert(d, b);
        true
    }

    pub fn get(&self, d: &Digest) -> Option<&Arc<Block>> {
        self.blocks.get(d)
    }

    pub fn contains(&self, d: &Digest) -> bool {
        self.blocks.contains_key(d)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<Block>> {
        self.blocks.values()
    }

    pub fn as_map(&self) -> &HashMap<Digest, Arc<Block>> {
        &self.blocks
    }

    /// Digests of every block `b` observes (including `b`).
    pub fn ancestry(&self, b: &Digest) -> Result<HashSet<Digest>, OrderingError> {
        self.ancestry_excluding(b, &HashSet::new())
    }

    /// `[b]` minus `stop`, where `stop` is downward closed.
    fn ancestry_excluding(&self, b: &Digest, stop: &HashSet<Digest>) -> Result<HashSet<Digest>, OrderingError> {
        let mut out = HashSet::new();
        let mut stack = vec![*b];
        while let Some(d) = stack.pop() {
            if stop.contains(&d) || !out.insert(d) {
                continue;
            }
            let block = self.get(&d).ok_or(OrderingError::MissingAncestor(d))?;
            stack.extend(block.prev.iter().map(|q| q.digest()));
        }
        Ok(out)
    }

    /// The largest subset closed under prev pointers and 1-QC references.
    pub fn downward_closed(&self) -> HashSet<Digest> {
        let mut sorted: Vec<&Arc<Block>> = self.blocks.values().collect();
        sorted.sort_by_key(|b| b.height);
        let mut closed = HashSet::new();
        for b in sorted {
            if dependencies(b).all(|d| closed.contains(&d)) {
                closed.insert(b.digest());
            }
        }
        closed
    }
}

/// Blocks that must be present before `b` can be ordered.
fn dependencies(b: &Block) -> impl Iterator<Item = Digest> + '_ {
    b.prev.iter().chain(b.one_qc.iter()).map(|q| q.digest())
}

/// Deterministic ordering key: height, author (genesis first), type, slot, digest.
pub fn tau_dagger_key(b: &Block) -> (u64, Option<ProcessId>, BlockKind, u64, Digest) {
    (b.height, b.author, b.kind, b.slot, b.digest())
}

/// Linearizes a block set so that every block follows the blocks it observes.
///
/// Heights strictly decrease along points-to edges, so ordering by the key
/// (height first) is the least topological order under that key.
pub fn tau_dagger(blocks: &[Arc<Block>]) -> Vec<Arc<Block>> {
    let mut out = blocks.to_vec();
    out.sort_by_key(|b| tau_dagger_key(b));
    out.dedup_by_key(|b| b.digest());
    out
}

/// Total order over the ancestry of `b`.
///
/// Follows the 1-QC chain down to genesis and, walking back up, appends the
/// linearization of whatever each chain block observes that is not already
/// ordered. When every block observes the target of its own 1-QC this is
/// exactly `tau(b') * tau_dagger([b] - [b'])`.
pub fn tau(b: &Digest, store: &BlockStore) -> Result<Vec<Arc<Block>>, OrderingError> {
    let mut chain = Vec::new();
    let mut cur = store.get(b).ok_or(OrderingError::MissingAncestor(*b))?;
    loop {
        chain.push(cur.clone());
        match cur.one_qc {
            Some(q) => {
                let next = store.get(&q.digest()).ok_or(OrderingError::MissingAncestor(q.digest()))?;
                cur = next;
            }
            None => break,
        }
    }
    let mut ordered = HashSet::new();
    let mut out = Vec::new();
    for c in chain.iter().rev() {
        let fresh = store.ancestry_excluding(&c.digest(), &ordered)?;
        let mut blocks: Vec<Arc<Block>> = fresh.iter().map(|d| store.get(d).expect("in ancestry").clone()).collect();
        blocks.sort_by_key(|b| tau_dagger_key(b));
        ordered.extend(fresh);
        out.extend(blocks);
    }
    Ok(out)
}

/// A transaction log.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Log(pub Vec<Transaction>);

impl Log {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transaction> {
        self.0.iter()
    }

    pub fn is_prefix_of(&self, other: &Log) -> bool {
        self.0.len() <= other.0.len() && self.0[..] == other.0[..self.0.len()]
    }

    pub fn compatible(&self, other: &Log) -> bool {
        self.is_prefix_of(other) || other.is_prefix_of(self)
    }

    pub fn ids(&self) -> HashSet<(ProcessId, u64)> {
        self.0.iter().map(|t| t.id()).collect()
    }
}

/// Concatenates the transactions of the Tr blocks in `seq`, keeping only the
/// first occurrence of each transaction id.
pub fn flatten(seq: &[Arc<Block>]) -> Log {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for b in seq.iter().filter(|b| b.kind == BlockKind::Tr) {
        for t in &b.txs {
            if seen.insert(t.id()) {
                out.push(t.clone());
            }
        }
    }
    Log(out)
}

/// Incrementally maintained message set from which a log can be extracted.
///
/// Invalid blocks and badly signed votes or QCs are ignored. QCs are taken
/// from QC messages, from inside blocks, and formed from vote quorums.
pub struct Extractor {
    committee: Committee,
    store: BlockStore,
    closed: HashSet<Digest>,
    waiting: HashMap<Digest, Vec<Digest>>,
    votes: HashMap<(u8, BlockMeta), BTreeMap<ProcessId, Signature>>,
    two_qcs: HashMap<BlockMeta, Qc>,
}

impl Extractor {
    pub fn new(committee: Committee) -> Self {
        let store = BlockStore::new();
        let closed = store.blocks.keys().copied().collect();
        Extractor { committee, store, closed, waiting: HashMap::new(), votes: HashMap::new(), two_qcs: HashMap::new() }
    }

    pub fn store(&self) -> &BlockStore {
        &self.store
    }

    pub fn insert(&mut self, m: &Message) {
        match m {
            Message::Block(b) => self.insert_block(b.clone()),
            Message::Vote(v) => {
                if !v.verify(&self.committee) {
                    return;
                }
                let quorum = self.committee.quorum();
                let shares = self.votes.entry((v.z, v.block)).or_default();
                if shares.len() >= quorum {
                    return;
                }
                shares.insert(v.voter(), v.sig);
                if shares.len() == quorum && v.z == 2 {
                    let sig =
                        self.committee.keyring.aggregate(shares.values(), quorum as u32).expect("verified shares");
                    self.add_qc(Qc { z: 2, block: v.block, sig });
                }
            }
            Message::Qc(q) => {
                if q.verify(&self.committee) {
                    self.add_qc(*q);
                }
            }
            Message::ViewMsg(v) => {
                if v.verify(&self.committee) {
                    self.add_qc(v.qc);
                }
            }
            Message::EndView(_) | Message::ViewCert(_) => {}
        }
    }

    fn add_qc(&mut self, q: Qc) {
        if q.z == 2 {
            self.two_qcs.entry(q.block).or_insert(q);
        }
    }

    fn insert_block(&mut self, b: Arc<Block>) {
        if self.store.contains(&b.digest()) || !validate_block(&b, &self.committee) {
            return;
        }
        // Embedded QCs verified as part of block validity.
        for q in b.prev.iter().chain(b.one_qc.iter()) {
            self.add_qc(*q);
        }
        for m in &b.just {
            self.add_qc(m.qc);
        }
        let d = b.digest();
        self.store.insert(b);
        self.try_close(d);
    }

    fn try_close(&mut self, d: Digest) {
        let mut stack = vec![d];
        while let Some(d) = stack.pop() {
            if self.closed.contains(&d) {
                continue;
            }
            let b = self.store.get(&d).expect("stored").clone();
            if let Some(missing) = dependencies(&b).find(|x| !self.closed.contains(x)) {
                self.waiting.entry(missing).or_default().push(d);
                continue;
            }
            self.closed.insert(d);
            if let Some(ws) = self.waiting.remove(&d) {
                stack.extend(ws);
            }
        }
    }

    /// The 2-QC that determines the log, if any.
    pub fn head(&self) -> Option<Qc> {
        max_two_qc(self.two_qcs.values().filter(|q| self.closed.contains(&q.digest())))
    }

    pub fn extract(&self) -> Log {
        let head = self.head().map_or(genesis_digest(), |q| q.digest());
        let seq = tau(&head, &self.store).expect("downward closed");
        flatten(&seq)
    }
}

fn genesis_digest() -> Digest {
    crate::types::genesis_meta().digest
}

/// Greatest 2-QC under the preorder; equivalent maxima broken by the smallest
/// encoding.
pub fn max_two_qc<'a>(qcs: impl Iterator<Item = &'a Qc>) -> Option<Qc> {
    let mut best: Option<(&Qc, Vec<u8>)> = None;
    for q in qcs {
        let better = match &best {
            None => true,
            Some((b, enc)) => match q.block.rank().cmp(&b.block.rank()) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Less => false,
                std::cmp::Ordering::Equal => codec::encode_qc(q) < *enc,
            },
        };
        if better {
            best = Some((q, codec::encode_qc(q)));
        }
    }
    best.map(|(q, _)| *q)
}

/// The log determined by a message set.
pub fn extract<'a>(messages: impl IntoIterator<Item = &'a Message>, committee: &Committee) -> Log {
    let mut x = Extractor::new(committee.clone());
    for m in messages {
        x.insert(m);
    }
    x.extract()
}
