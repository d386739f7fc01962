//! Protocol messages and their validity predicates.
//!
//! Blocks reference predecessors through embedded quorum certificates, which
//! carry enough block metadata (type, view, height, author, slot) for validity
//! to be checked without holding the predecessors themselves.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::{Arc, OnceLock};

use thiserror::Error;

use crate::codec;
use crate::crypto::{hash_bytes, Digest, Keyring, ProcessId, Signature, SigningKey, ThresholdSignature};

/// View number. The genesis block lives in view -1.
pub type View = i64;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum BlockKind {
    Genesis,
    Lead,
    Tr,
}

impl BlockKind {
    pub fn tag(self) -> u8 {
        match self {
            BlockKind::Genesis => 0,
            BlockKind::Lead => 1,
            BlockKind::Tr => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(BlockKind::Genesis),
            1 => Some(BlockKind::Lead),
            2 => Some(BlockKind::Tr),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BlockKind::Genesis => "gen",
            BlockKind::Lead => "lead",
            BlockKind::Tr => "tr",
        }
    }
}

/// Committee parameters shared by every process.
#[derive(Clone, Debug)]
pub struct Committee {
    pub n: usize,
    pub f: usize,
    pub keyring: Arc<Keyring>,
}

impl Committee {
    /// Builds a committee with `f` the largest integer below `n/3`.
    pub fn new(n: usize, keyring: Arc<Keyring>) -> Self {
        assert_eq!(keyring.n(), n, "keyring size must match committee size");
        Committee { n, f: max_faults(n), keyring }
    }

    pub fn quorum(&self) -> usize {
        self.n - self.f
    }

    pub fn small_quorum(&self) -> usize {
        self.f + 1
    }

    pub fn lead(&self, view: View) -> ProcessId {
        lead(view, self.n)
    }

    pub fn contains(&self, p: ProcessId) -> bool {
        p.index() < self.n
    }
}

/// Largest integer strictly below `n/3`.
pub fn max_faults(n: usize) -> usize {
    if n == 0 {
        0
    } else {
        (n - 1) / 3
    }
}

/// Leader of view `view`: process `view mod n`.
pub fn lead(view: View, n: usize) -> ProcessId {
    assert!(view >= 0, "views below 0 have no leader");
    ProcessId((view as u64 % n as u64) as u32)
}

#[derive(Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct Transaction {
    pub issuer: ProcessId,
    pub seq: u64,
    pub payload: Vec<u8>,
}

impl Transaction {
    pub fn id(&self) -> (ProcessId, u64) {
        (self.issuer, self.seq)
    }
}

/// Block metadata as carried by votes and QCs.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockMeta {
    pub kind: BlockKind,
    pub view: View,
    pub height: u64,
    pub author: Option<ProcessId>,
    pub slot: u64,
    pub digest: Digest,
}

impl fmt::Debug for BlockMeta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let author = self.author.map_or_else(|| "-".to_string(), |a| a.to_string());
        write!(f, "{}(v{} h{} {} s{} {:?})", self.kind.name(), self.view, self.height, author, self.slot, self.digest)
    }
}

impl BlockMeta {
    /// The preorder key: view, then type with lead < Tr, then height.
    pub fn rank(&self) -> (View, BlockKind, u64) {
        (self.view, self.kind, self.height)
    }
}

/// Quorum certificate of level `z` for a block.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Qc {
    pub z: u8,
    pub block: BlockMeta,
    pub sig: ThresholdSignature,
}

/// Key under which a process stores at most one QC.
pub type QcKey = (u8, BlockMeta);

impl Qc {
    pub fn key(&self) -> QcKey {
        (self.z, self.block)
    }

    pub fn digest(&self) -> Digest {
        self.block.digest
    }

    /// The well-known 1-QC for the genesis block.
    pub fn genesis() -> Qc {
        let block = genesis_meta();
        Qc { z: 1, block, sig: ThresholdSignature::genesis(vote_payload(1, &block)) }
    }

    pub fn is_genesis(&self) -> bool {
        self.z == 1 && self.block == genesis_meta()
    }

    pub fn verify(&self, committee: &Committee) -> bool {
        if self.is_genesis() {
            return true;
        }
        if self.z > 2 || !meta_well_formed(&self.block, committee) {
            return false;
        }
        committee.keyring.verify_threshold(&vote_payload(self.z, &self.block), &self.sig, committee.quorum() as u32)
    }
}

/// Compares two QCs under the preorder: view, then type (lead < Tr), then
/// height. QCs with equal keys are equivalent regardless of level.
pub fn qc_compare(a: &Qc, b: &Qc) -> Ordering {
    a.block.rank().cmp(&b.block.rank())
}

fn meta_well_formed(meta: &BlockMeta, committee: &Committee) -> bool {
    match meta.kind {
        BlockKind::Genesis => *meta == genesis_meta(),
        _ => meta.view >= 0 && meta.height > 0 && meta.author.is_some_and(|a| committee.contains(a)),
    }
}

pub fn genesis_meta() -> BlockMeta {
    static META: OnceLock<BlockMeta> = OnceLock::new();
    *META.get_or_init(|| genesis().meta())
}

/// Payload digest signed by a z-vote and certified by a z-QC.
pub fn vote_payload(z: u8, meta: &BlockMeta) -> Digest {
    let mut out = Vec::with_capacity(80);
    out.extend_from_slice(b"vote");
    codec::put_u8(&mut out, z);
    codec::put_meta(&mut out, meta);
    hash_bytes(&out)
}

pub fn end_view_payload(view: View) -> Digest {
    let mut out = Vec::with_capacity(16);
    out.extend_from_slice(b"endview");
    codec::put_i64(&mut out, view);
    hash_bytes(&out)
}

pub fn view_msg_payload(view: View, qc: &Qc) -> Digest {
    let mut out = Vec::with_capacity(128);
    out.extend_from_slice(b"viewmsg");
    codec::put_i64(&mut out, view);
    codec::put_qc(&mut out, qc);
    hash_bytes(&out)
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Vote {
    pub z: u8,
    pub block: BlockMeta,
    pub sig: Signature,
}

impl Vote {
    pub fn new(z: u8, block: BlockMeta, key: &SigningKey) -> Self {
        Vote { z, block, sig: key.sign_digest(vote_payload(z, &block)) }
    }

    pub fn voter(&self) -> ProcessId {
        self.sig.signer()
    }

    pub fn verify(&self, committee: &Committee) -> bool {
        self.z <= 2
            && self.block.kind != BlockKind::Genesis
            && meta_well_formed(&self.block, committee)
            && committee.keyring.verify_any(&vote_payload(self.z, &self.block), &self.sig)
    }
}

/// End-view message: the signer wishes to leave `view`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct EndView {
    pub view: View,
    pub sig: Signature,
}

impl EndView {
    pub fn new(view: View, key: &SigningKey) -> Self {
        EndView { view, sig: key.sign_digest(end_view_payload(view)) }
    }

    pub fn verify(&self, committee: &Committee) -> bool {
        self.view >= 0 && committee.keyring.verify_any(&end_view_payload(self.view), &self.sig)
    }
}

/// Certificate for entering `view`, aggregated from f+1 end-view messages for
/// `view - 1`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct ViewCert {
    pub view: View,
    pub sig: ThresholdSignature,
}

impl ViewCert {
    pub fn verify(&self, committee: &Committee) -> bool {
        self.view >= 1
            && committee.keyring.verify_threshold(
                &end_view_payload(self.view - 1),
                &self.sig,
                committee.small_quorum() as u32,
            )
    }
}

/// View message `(v, q)` sent to the leader on entering view `v`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct ViewMsg {
    pub view: View,
    pub qc: Qc,
    pub sig: Signature,
}

impl ViewMsg {
    pub fn new(view: View, qc: Qc, key: &SigningKey) -> Self {
        ViewMsg { view, qc, sig: key.sign_digest(view_msg_payload(view, &qc)) }
    }

    pub fn signer(&self) -> ProcessId {
        self.sig.signer()
    }

    pub fn verify(&self, committee: &Committee) -> bool {
        self.view >= 0
            && self.qc.z == 1
            && self.qc.verify(committee)
            && committee.keyring.verify_any(&view_msg_payload(self.view, &self.qc), &self.sig)
    }
}

/// Genesis, transaction or leader block.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Block {
    pub kind: BlockKind,
    pub view: View,
    pub height: u64,
    pub author: Option<ProcessId>,
    pub slot: u64,
    pub prev: Vec<Qc>,
    pub one_qc: Option<Qc>,
    pub txs: Vec<Transaction>,
    pub just: Vec<ViewMsg>,
    pub sig: Option<Signature>,
    digest: Digest,
}

/// Everything that determines a block except its signature.
#[derive(Clone, Debug)]
pub struct BlockContent {
    pub kind: BlockKind,
    pub view: View,
    pub height: u64,
    pub author: Option<ProcessId>,
    pub slot: u64,
    pub prev: Vec<Qc>,
    pub one_qc: Option<Qc>,
    pub txs: Vec<Transaction>,
    pub just: Vec<ViewMsg>,
}

impl BlockContent {
    fn into_block(self, sig: Option<Signature>) -> Block {
        let mut block = Block {
            kind: self.kind,
            view: self.view,
            height: self.height,
            author: self.author,
            slot: self.slot,
            prev: self.prev,
            one_qc: self.one_qc,
            txs: self.txs,
            just: self.just,
            sig,
            digest: Digest::ZERO,
        };
        block.digest = hash_block(&block);
        block
    }

    /// Signs with `key`; the author field is taken from the key.
    pub fn sign(mut self, key: &SigningKey) -> Block {
        self.author = Some(key.id());
        let mut block = self.into_block(None);
        block.sig = Some(key.sign_digest(block.digest));
        block
    }

    /// Attaches an already-produced signature (used when decoding).
    pub fn with_signature(self, sig: Option<Signature>) -> Block {
        let mut block = self.into_block(None);
        block.sig = sig.map(|s| Signature::from_parts(s.signer(), block.digest, s.tag()));
        block
    }
}

/// Digest of a block's canonical unsigned encoding.
pub fn hash_block(b: &Block) -> Digest {
    let mut out = Vec::with_capacity(256);
    codec::put_block_body(&mut out, b);
    hash_bytes(&out)
}

/// The unique genesis block.
pub fn genesis() -> Block {
    BlockContent {
        kind: BlockKind::Genesis,
        view: -1,
        height: 0,
        author: None,
        slot: 0,
        prev: Vec::new(),
        one_qc: None,
        txs: Vec::new(),
        just: Vec::new(),
    }
    .into_block(None)
}

impl Block {
    pub fn digest(&self) -> Digest {
        self.digest
    }

    pub fn meta(&self) -> BlockMeta {
        BlockMeta {
            kind: self.kind,
            view: self.view,
            height: self.height,
            author: self.author,
            slot: self.slot,
            digest: self.digest,
        }
    }

    pub fn is_genesis(&self) -> bool {
        self.kind == BlockKind::Genesis
    }

    /// Digests of the blocks this block points to, deduplicated, in prev order.
    pub fn pointees(&self) -> Vec<Digest> {
        let mut seen = HashSet::new();
        self.prev.iter().map(|q| q.digest()).filter(|d| seen.insert(*d)).collect()
    }

    pub fn content(&self) -> BlockContent {
        BlockContent {
            kind: self.kind,
            view: self.view,
            height: self.height,
            author: self.author,
            slot: self.slot,
            prev: self.prev.clone(),
            one_qc: self.one_qc,
            txs: self.txs.clone(),
            just: self.just.clone(),
        }
    }

    fn signed_by_author(&self, committee: &Committee) -> bool {
        match (self.author, self.sig) {
            (Some(a), Some(sig)) => committee.contains(a) && committee.keyring.verify(&self.digest, &sig, a),
            _ => false,
        }
    }

    /// Checks shared by both block kinds: signature, QC validity, pointed
    /// views, and the height rule.
    fn common_rules(&self, committee: &Committee) -> bool {
        if self.view < 0 || self.height == 0 || self.prev.is_empty() {
            return false;
        }
        let Some(one_qc) = self.one_qc else { return false };
        if one_qc.z != 1 || one_qc.block.height >= self.height || !one_qc.verify(committee) {
            return false;
        }
        if !self.signed_by_author(committee) {
            return false;
        }
        let mut max_h = 0;
        for q in &self.prev {
            if q.block.view > self.view || !q.verify(committee) {
                return false;
            }
            max_h = max_h.max(q.block.height);
        }
        self.height == max_h + 1
    }
}

/// Validity of a transaction block.
pub fn validate_transaction_block(b: &Block, committee: &Committee) -> bool {
    if b.kind != BlockKind::Tr || !b.just.is_empty() || !b.common_rules(committee) {
        return false;
    }
    if b.slot > 0 {
        let points_to_own_prev = b
            .prev
            .iter()
            .any(|q| q.block.kind == BlockKind::Tr && q.block.author == b.author && q.block.slot == b.slot - 1);
        if !points_to_own_prev {
            return false;
        }
    }
    true
}

/// Validity of a leader block.
pub fn validate_leader_block(b: &Block, committee: &Committee) -> bool {
    if b.kind != BlockKind::Lead || !b.txs.is_empty() {
        return false;
    }
    if b.author != Some(committee.lead(b.view.max(0))) || !b.common_rules(committee) {
        return false;
    }
    let one_qc = b.one_qc.expect("checked by common rules");
    let predecessor = if b.slot > 0 {
        let candidates: BTreeSet<(Digest, View)> = b
            .prev
            .iter()
            .filter(|q| q.block.kind == BlockKind::Lead && q.block.author == b.author && q.block.slot == b.slot - 1)
            .map(|q| (q.digest(), q.block.view))
            .collect();
        if candidates.len() != 1 {
            return false;
        }
        candidates.into_iter().next()
    } else {
        None
    };
    match predecessor {
        Some((digest, view)) if view == b.view => one_qc.digest() == digest && one_qc.block.kind == BlockKind::Lead,
        _ => justification_ok(b, &one_qc, committee),
    }
}

fn justification_ok(b: &Block, one_qc: &Qc, committee: &Committee) -> bool {
    let mut signers = BTreeSet::new();
    for m in &b.just {
        if m.view != b.view || !m.verify(committee) {
            return false;
        }
        if qc_compare(one_qc, &m.qc) == Ordering::Less {
            return false;
        }
        signers.insert(m.signer());
    }
    signers.len() >= committee.quorum()
}

/// Validity for any non-genesis block, dispatching on kind.
pub fn validate_block(b: &Block, committee: &Committee) -> bool {
    match b.kind {
        BlockKind::Tr => validate_transaction_block(b, committee),
        BlockKind::Lead => validate_leader_block(b, committee),
        BlockKind::Genesis => *b == genesis(),
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OrderingError {
    #[error("block {0:?} not present in store")]
    MissingAncestor(Digest),
}

/// Whether `b` observes `target`: reflexive-transitive closure of points-to,
/// resolving prev digests in `store`.
pub fn observes(b: &Block, target: &Block, store: &HashMap<Digest, Arc<Block>>) -> Result<bool, OrderingError> {
    let goal = target.digest();
    let mut stack = vec![b.digest()];
    let mut seen = HashSet::new();
    while let Some(d) = stack.pop() {
        if d == goal {
            return Ok(true);
        }
        if !seen.insert(d) {
            continue;
        }
        let block = if d == b.digest() {
            b
        } else {
            store.get(&d).map(|x| x.as_ref()).ok_or(OrderingError::MissingAncestor(d))?
        };
        // Heights strictly decrease along prev edges, so prune below the target.
        stack.extend(block.prev.iter().filter(|q| q.block.height >= target.height).map(|q| q.digest()));
    }
    Ok(false)
}

/// Every message type exchanged by processes.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Message {
    Block(Arc<Block>),
    Vote(Vote),
    Qc(Qc),
    EndView(EndView),
    ViewCert(ViewCert),
    ViewMsg(ViewMsg),
}

impl Message {
    pub fn type_name(&self) -> &'static str {
        match self {
            Message::Block(b) => match b.kind {
                BlockKind::Tr => "block-tr",
                BlockKind::Lead => "block-lead",
                BlockKind::Genesis => "block-gen",
            },
            Message::Vote(v) => ["vote0", "vote1", "vote2"][v.z.min(2) as usize],
            Message::Qc(q) => ["qc0", "qc1", "qc2"][q.z.min(2) as usize],
            Message::EndView(_) => "end-view",
            Message::ViewCert(_) => "view-cert",
            Message::ViewMsg(_) => "view-msg",
        }
    }

    pub fn encoded_len(&self) -> usize {
        codec::encode_message(self).len()
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    //! Helpers that build correctly-signed blocks and certificates for tests.
    use super::*;

    pub struct Fixture {
        pub committee: Committee,
    }

    impl Fixture {
        pub fn new(n: usize) -> Self {
            Fixture { committee: Committee::new(n, Keyring::new(n, 42)) }
        }

        pub fn key(&self, i: u32) -> SigningKey {
            self.committee.keyring.signing_key(ProcessId(i))
        }

        pub fn qc(&self, z: u8, block: &Block) -> Qc {
            let meta = block.meta();
            if block.is_genesis() {
                return Qc::genesis();
            }
            let payload = vote_payload(z, &meta);
            let shares: Vec<_> =
                (0..self.committee.quorum() as u32).map(|i| self.key(i).sign_digest(payload)).collect();
            let sig = self.committee.keyring.aggregate(&shares, self.committee.quorum() as u32).unwrap();
            Qc { z, block: meta, sig }
        }

        pub fn tx(&self, issuer: u32, seq: u64) -> Transaction {
            Transaction { issuer: ProcessId(issuer), seq, payload: vec![seq as u8; 4] }
        }

        #[allow(clippy::too_many_arguments)]
        pub fn tr_block(
            &self,
            author: u32,
            view: View,
            slot: u64,
            prev: Vec<Qc>,
            one_qc: Qc,
            txs: Vec<Transaction>,
        ) -> Block {
            let height = prev.iter().map(|q| q.block.height).max().unwrap_or(0) + 1;
            BlockContent {
                kind: BlockKind::Tr,
                view,
                height,
                author: None,
                slot,
                prev,
                one_qc: Some(one_qc),
                txs,
                just: Vec::new(),
            }
            .sign(&self.key(author))
        }

        pub fn lead_block(
            &self,
            author: u32,
            view: View,
            slot: u64,
            prev: Vec<Qc>,
            one_qc: Qc,
            just: Vec<ViewMsg>,
        ) -> Block {
            let height = prev.iter().map(|q| q.block.height).max().unwrap_or(0) + 1;
            BlockContent {
                kind: BlockKind::Lead,
                view,
                height,
                author: None,
                slot,
                prev,
                one_qc: Some(one_qc),
                txs: Vec::new(),
                just,
            }
            .sign(&self.key(author))
        }

        pub fn view_msgs(&self, view: View, qc: Qc, signers: &[u32]) -> Vec<ViewMsg> {
            signers.iter().map(|&i| ViewMsg::new(view, qc, &self.key(i))).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::Fixture;
    use super::*;

    fn with_height(mut b: Block, height: u64, fx: &Fixture) -> Block {
        b.height = height;
        b.content().sign(&fx.key(b.author.unwrap().0))
    }

    #[test]
    fn genesis_fields() {
        let g = genesis();
        assert_eq!((g.kind, g.view, g.height, g.author, g.slot), (BlockKind::Genesis, -1, 0, None, 0));
        assert_eq!(hash_block(&g), hash_block(&genesis()));
        assert!(Qc::genesis().verify(&Fixture::new(4).committee));
    }

    #[test]
    fn slot_zero_tr_block_is_valid() {
        let fx = Fixture::new(4);
        let b = fx.tr_block(1, 0, 0, vec![Qc::genesis()], Qc::genesis(), vec![fx.tx(1, 0)]);
        assert_eq!(b.height, 1);
        assert!(validate_transaction_block(&b, &fx.committee));
    }

    #[test]
    fn tr_block_slot_rule() {
        let fx = Fixture::new(4);
        let b0 = fx.tr_block(2, 0, 0, vec![Qc::genesis()], Qc::genesis(), vec![]);
        let ok = fx.tr_block(2, 0, 1, vec![fx.qc(0, &b0)], Qc::genesis(), vec![]);
        assert!(validate_transaction_block(&ok, &fx.committee));
        // Slot 1 pointing only to another author's block.
        let other = fx.tr_block(3, 0, 0, vec![Qc::genesis()], Qc::genesis(), vec![]);
        let bad = fx.tr_block(2, 0, 1, vec![fx.qc(0, &other)], Qc::genesis(), vec![]);
        assert!(!validate_transaction_block(&bad, &fx.committee));
    }

    #[test]
    fn tr_block_height_and_view_rules() {
        let fx = Fixture::new(4);
        let b = fx.tr_block(1, 0, 0, vec![Qc::genesis()], Qc::genesis(), vec![]);
        let tall = with_height(b.clone(), 2, &fx);
        assert!(!validate_transaction_block(&tall, &fx.committee));
        // Pointing to a block from a later view.
        let later = fx.tr_block(2, 3, 0, vec![Qc::genesis()], Qc::genesis(), vec![]);
        let back = fx.tr_block(1, 2, 0, vec![fx.qc(0, &later)], Qc::genesis(), vec![]);
        assert!(!validate_transaction_block(&back, &fx.committee));
        // Empty prev is rejected.
        let mut empty = b.content();
        empty.prev.clear();
        empty.height = 1;
        assert!(!validate_transaction_block(&empty.sign(&fx.key(1)), &fx.committee));
    }

    #[test]
    fn tr_block_signature_rules() {
        let fx = Fixture::new(4);
        let b = fx.tr_block(1, 0, 0, vec![Qc::genesis()], Qc::genesis(), vec![]);
        let mut forged = b.clone();
        forged.author = Some(ProcessId(2));
        assert!(!validate_transaction_block(&forged, &fx.committee));
        // QC with too few signers.
        let payload = vote_payload(0, &b.meta());
        let shares: Vec<_> = (0..2).map(|i| fx.key(i).sign_digest(payload)).collect();
        let weak = Qc { z: 0, block: b.meta(), sig: fx.committee.keyring.aggregate(&shares, 2).unwrap() };
        let next = fx.tr_block(1, 0, 1, vec![weak], Qc::genesis(), vec![]);
        assert!(!validate_transaction_block(&next, &fx.committee));
    }

    #[test]
    fn first_leader_block_needs_justification() {
        let fx = Fixture::new(4);
        let t = fx.tr_block(2, 0, 0, vec![Qc::genesis()], Qc::genesis(), vec![]);
        let q1 = fx.qc(1, &t);
        let just = vec![
            ViewMsg::new(1, q1, &fx.key(0)),
            ViewMsg::new(1, Qc::genesis(), &fx.key(2)),
            ViewMsg::new(1, Qc::genesis(), &fx.key(3)),
        ];
        let ok = fx.lead_block(1, 1, 0, vec![fx.qc(0, &t)], q1, just.clone());
        assert!(validate_leader_block(&ok, &fx.committee));

        let wrong_author = fx.lead_block(2, 1, 0, vec![fx.qc(0, &t)], q1, just.clone());
        assert!(!validate_leader_block(&wrong_author, &fx.committee));

        let short = fx.lead_block(1, 1, 0, vec![fx.qc(0, &t)], q1, just[..2].to_vec());
        assert!(!validate_leader_block(&short, &fx.committee));

        let low_qc = fx.lead_block(1, 1, 0, vec![fx.qc(0, &t)], Qc::genesis(), just.clone());
        assert!(!validate_leader_block(&low_qc, &fx.committee));

        let dup_signers = vec![just[0], just[0], just[1]];
        let dup = fx.lead_block(1, 1, 0, vec![fx.qc(0, &t)], q1, dup_signers);
        assert!(!validate_leader_block(&dup, &fx.committee));
    }

    #[test]
    fn later_leader_block_needs_qc_for_predecessor() {
        let fx = Fixture::new(4);
        let just = fx.view_msgs(1, Qc::genesis(), &[0, 1, 2]);
        let l0 = fx.lead_block(1, 1, 0, vec![Qc::genesis()], Qc::genesis(), just);
        assert!(validate_leader_block(&l0, &fx.committee));
        let q = fx.qc(1, &l0);
        let l1 = fx.lead_block(1, 1, 1, vec![q], q, vec![]);
        assert!(validate_leader_block(&l1, &fx.committee));
        let bad = fx.lead_block(1, 1, 1, vec![q], Qc::genesis(), vec![]);
        assert!(!validate_leader_block(&bad, &fx.committee));
        // Missing predecessor pointer.
        let t = fx.tr_block(2, 1, 0, vec![Qc::genesis()], Qc::genesis(), vec![]);
        let orphan = fx.lead_block(1, 1, 1, vec![fx.qc(0, &t)], Qc::genesis(), vec![]);
        assert!(!validate_leader_block(&orphan, &fx.committee));
        // Predecessor from an older view needs a fresh justification.
        let v5 = fx.lead_block(1, 5, 1, vec![q], q, vec![]);
        assert!(!validate_leader_block(&v5, &fx.committee));
        let just5 = fx.view_msgs(5, q, &[0, 2, 3]);
        let v5ok = fx.lead_block(1, 5, 1, vec![q], q, just5);
        assert!(validate_leader_block(&v5ok, &fx.committee));
    }

    #[test]
    fn qc_preorder() {
        let fx = Fixture::new(4);
        let mk = |kind, view, height| Qc {
            z: 1,
            block: BlockMeta { kind, view, height, author: Some(ProcessId(0)), slot: 0, digest: Digest::ZERO },
            sig: ThresholdSignature::genesis(Digest::ZERO),
        };
        let _ = &fx;
        assert_eq!(qc_compare(&mk(BlockKind::Lead, 1, 9), &mk(BlockKind::Tr, 1, 2)), Ordering::Less);
        assert_eq!(qc_compare(&mk(BlockKind::Tr, 2, 1), &mk(BlockKind::Lead, 1, 7)), Ordering::Greater);
        let mut a = mk(BlockKind::Tr, 1, 3);
        let b = mk(BlockKind::Tr, 1, 3);
        a.z = 2;
        assert_eq!(qc_compare(&a, &b), Ordering::Equal);
        assert_eq!(qc_compare(&Qc::genesis(), &mk(BlockKind::Lead, 0, 1)), Ordering::Less);
    }

    #[test]
    fn leader_rotation() {
        assert_eq!(lead(0, 4), ProcessId(0));
        assert_eq!(lead(5, 4), ProcessId(1));
        assert_eq!(lead(7, 7), ProcessId(0));
        assert_eq!(max_faults(4), 1);
        assert_eq!(max_faults(7), 2);
        assert_eq!(max_faults(10), 3);
        assert_eq!(max_faults(3), 0);
    }

    #[test]
    fn observes_relation() {
        let fx = Fixture::new(4);
        let g = genesis();
        let b1 = fx.tr_block(0, 0, 0, vec![Qc::genesis()], Qc::genesis(), vec![]);
        let b2 = fx.tr_block(1, 0, 0, vec![Qc::genesis()], Qc::genesis(), vec![]);
        let mut store = HashMap::new();
        for b in [&g, &b1, &b2] {
            store.insert(b.digest(), Arc::new(b.clone()));
        }
        assert!(observes(&g, &g, &store).unwrap());
        assert!(observes(&b1, &g, &store).unwrap());
        assert!(!observes(&b1, &b2, &store).unwrap());
        assert!(!observes(&b2, &b1, &store).unwrap());
        let b3 = fx.tr_block(0, 0, 1, vec![fx.qc(0, &b1)], Qc::genesis(), vec![]);
        let mut partial = HashMap::new();
        partial.insert(g.digest(), Arc::new(g.clone()));
        assert_eq!(observes(&b3, &g, &partial), Err(OrderingError::MissingAncestor(b1.digest())));
    }
}
