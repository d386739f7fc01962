//! Hand-built and random block DAGs with correctly signed certificates.

use std::collections::HashMap;
use std::sync::Arc;

use morpheus_core::types::{lead, vote_payload, Block, BlockContent, BlockKind, Message, Qc, View, ViewMsg, Vote};
use morpheus_core::{Committee, Keyring, ProcessId, SigningKey, Transaction};
use rand::seq::SliceRandom;
use rand::Rng;

/// Signs blocks, votes and certificates on behalf of any process.
pub struct DagBuilder {
    pub committee: Committee,
}

impl DagBuilder {
    pub fn new(n: usize, seed: u64) -> Self {
        DagBuilder { committee: Committee::new(n, Keyring::new(n, seed)) }
    }

    pub fn with_committee(committee: Committee) -> Self {
        DagBuilder { committee }
    }

    pub fn key(&self, p: u32) -> SigningKey {
        self.committee.keyring.signing_key(ProcessId(p))
    }

    /// A z-QC for `b` aggregated from the first n - f processes.
    pub fn qc(&self, z: u8, b: &Block) -> Qc {
        if b.is_genesis() {
            return Qc::genesis();
        }
        let m = self.committee.quorum();
        let payload = vote_payload(z, &b.meta());
        let shares: Vec<_> = (0..m as u32).map(|i| self.key(i).sign_digest(payload)).collect();
        let sig = self.committee.keyring.aggregate(&shares, m as u32).expect("valid shares");
        Qc { z, block: b.meta(), sig }
    }

    /// z-votes for `b` from every listed process.
    pub fn votes(&self, z: u8, b: &Block, voters: impl IntoIterator<Item = u32>) -> Vec<Message> {
        voters.into_iter().map(|p| Message::Vote(Vote::new(z, b.meta(), &self.key(p)))).collect()
    }

    pub fn tx(issuer: u32, seq: u64) -> Transaction {
        Transaction { issuer: ProcessId(issuer), seq, payload: seq.to_le_bytes().to_vec() }
    }

    pub fn tr(
        &self,
        author: u32,
        view: View,
        slot: u64,
        prev: Vec<Qc>,
        one_qc: Qc,
        txs: Vec<Transaction>,
    ) -> Arc<Block> {
        let height = prev.iter().map(|q| q.block.height).max().unwrap_or(0) + 1;
        let content = BlockContent {
            kind: BlockKind::Tr,
            view,
            height,
            author: None,
            slot,
            prev,
            one_qc: Some(one_qc),
            txs,
            just: Vec::new(),
        };
        Arc::new(content.sign(&self.key(author)))
    }

    /// First leader block of `view`, justified by n - f view messages that
    /// all carry `one_qc`.
    pub fn lead_first(&self, view: View, slot: u64, prev: Vec<Qc>, one_qc: Qc) -> Arc<Block> {
        let author = lead(view, self.committee.n);
        let just: Vec<ViewMsg> =
            (0..self.committee.quorum() as u32).map(|p| ViewMsg::new(view, one_qc, &self.key(p))).collect();
        let height = prev.iter().map(|q| q.block.height).max().unwrap_or(0) + 1;
        let content = BlockContent {
            kind: BlockKind::Lead,
            view,
            height,
            author: None,
            slot,
            prev,
            one_qc: Some(one_qc),
            txs: Vec::new(),
            just,
        };
        Arc::new(content.sign(&self.key(author.0)))
    }
}

/// A random valid DAG of at most `max_blocks` blocks over n = 4 processes,
/// rendered as a message set: blocks (occasionally one withheld), 2-vote
/// quorums and QC messages for some of them.
pub fn random_dag<R: Rng>(b: &DagBuilder, rng: &mut R, max_blocks: usize) -> Vec<Message> {
    let n = b.committee.n as u32;
    let genesis = Arc::new(morpheus_core::types::genesis());
    let mut blocks: Vec<Arc<Block>> = vec![genesis.clone()];
    let mut last_tr: HashMap<u32, Arc<Block>> = HashMap::new();
    let mut led: Vec<View> = Vec::new();
    let mut seq = 0;
    let target = rng.gen_range(1..=max_blocks);
    while blocks.len() <= target {
        let max_view = blocks.iter().map(|x| x.view).max().unwrap_or(0).max(0);
        let view = max_view + rng.gen_range(0..=1);
        let k = rng.gen_range(1..=3.min(blocks.len()));
        let mut pointees: Vec<Arc<Block>> = blocks.choose_multiple(rng, k).cloned().collect();
        let lead_ok = (view as u32) < n && !led.contains(&view);
        if lead_ok && rng.gen_bool(0.3) {
            pointees.retain(|x| x.view <= view);
            if pointees.is_empty() {
                pointees.push(genesis.clone());
            }
            let prev: Vec<Qc> = pointees.iter().map(|x| b.qc(rng.gen_range(0..=2), x)).collect();
            let one_qc = pick_one_qc(b, rng, &pointees);
            led.push(view);
            blocks.push(b.lead_first(view, 0, prev, one_qc));
            continue;
        }
        let author = rng.gen_range(0..n);
        let own = last_tr.get(&author).cloned();
        if let Some(o) = &own {
            if !pointees.iter().any(|x| x.digest() == o.digest()) {
                pointees.push(o.clone());
            }
        }
        let view = view.max(pointees.iter().map(|x| x.view).max().unwrap_or(0));
        let prev: Vec<Qc> = pointees.iter().map(|x| b.qc(rng.gen_range(0..=2), x)).collect();
        let one_qc = pick_one_qc(b, rng, &pointees);
        let txs = (0..rng.gen_range(0..=2))
            .map(|_| {
                seq += 1;
                DagBuilder::tx(author, seq)
            })
            .collect();
        let slot = own.map_or(0, |o| o.slot + 1);
        let blk = b.tr(author, view, slot, prev, one_qc, txs);
        last_tr.insert(author, blk.clone());
        blocks.push(blk);
    }

    let withheld = if rng.gen_bool(0.2) { Some(rng.gen_range(1..blocks.len())) } else { None };
    let mut out = Vec::new();
    for (i, blk) in blocks.iter().enumerate().skip(1) {
        if Some(i) != withheld {
            out.push(Message::Block(blk.clone()));
        }
        match rng.gen_range(0..4) {
            0 => out.extend(b.votes(2, blk, 0..b.committee.quorum() as u32)),
            1 => out.push(Message::Qc(b.qc(2, blk))),
            // Not quite a quorum.
            2 => out.extend(b.votes(2, blk, 0..b.committee.quorum() as u32 - 1)),
            _ => {}
        }
    }
    out.shuffle(rng);
    out
}

/// A 1-QC for one of the pointees or one of their own 1-QC targets, so the
/// reference stays below the new block's height.
fn pick_one_qc<R: Rng>(b: &DagBuilder, rng: &mut R, pointees: &[Arc<Block>]) -> Qc {
    let x = pointees.choose(rng).expect("non-empty");
    if rng.gen_bool(0.7) {
        b.qc(1, x)
    } else {
        x.one_qc.unwrap_or_else(Qc::genesis)
    }
}

/// Small named DAGs for the ordering tests, with the log each determines.
pub fn fixtures() -> Vec<(&'static str, Vec<Message>, Vec<(u32, u64)>)> {
    let b = DagBuilder::new(4, 7);
    let gq = Qc::genesis();
    let mut out = Vec::new();

    // A chain of two blocks by one author, the second 2-certified.
    let a0 = b.tr(0, 0, 0, vec![gq], gq, vec![DagBuilder::tx(0, 1)]);
    let a1 = b.tr(0, 0, 1, vec![b.qc(1, &a0)], b.qc(1, &a0), vec![DagBuilder::tx(0, 2)]);
    let mut m = vec![Message::Block(a0.clone()), Message::Block(a1.clone())];
    m.extend(b.votes(2, &a1, 0..3));
    out.push(("chain", m, vec![(0, 1), (0, 2)]));

    // Two concurrent blocks joined by a third; the residual set is ordered
    // by (height, author).
    let x = b.tr(2, 0, 0, vec![gq], gq, vec![DagBuilder::tx(2, 1)]);
    let y = b.tr(1, 0, 0, vec![gq], gq, vec![DagBuilder::tx(1, 1)]);
    let z = b.tr(3, 0, 0, vec![b.qc(0, &x), b.qc(0, &y)], gq, vec![DagBuilder::tx(3, 1)]);
    let mut m = vec![Message::Block(x.clone()), Message::Block(y.clone()), Message::Block(z.clone())];
    m.push(Message::Qc(b.qc(2, &z)));
    out.push(("diamond", m, vec![(1, 1), (2, 1), (3, 1)]));

    // Two incomparable 2-certified blocks at the same rank; the tie goes to
    // the smaller certificate encoding, and the withheld ancestor of a third
    // keeps it out of the closure.
    let p = b.tr(1, 0, 0, vec![gq], gq, vec![DagBuilder::tx(1, 7)]);
    let q = b.tr(2, 0, 0, vec![gq], gq, vec![DagBuilder::tx(2, 7)]);
    let hidden = b.tr(3, 0, 0, vec![gq], gq, vec![DagBuilder::tx(3, 7)]);
    let r = b.tr(3, 1, 1, vec![b.qc(1, &hidden)], b.qc(1, &hidden), vec![DagBuilder::tx(3, 8)]);
    let (qp, qq) = (b.qc(2, &p), b.qc(2, &q));
    let winner =
        if morpheus_core::codec::encode_qc(&qp) < morpheus_core::codec::encode_qc(&qq) { (1, 7) } else { (2, 7) };
    let m = vec![
        Message::Block(p.clone()),
        Message::Block(q.clone()),
        Message::Block(r.clone()),
        Message::Qc(qp),
        Message::Qc(qq),
        Message::Qc(b.qc(2, &r)),
    ];
    out.push(("fork", m, vec![winner]));

    // A leader block collecting two transaction blocks.
    let t0 = b.tr(1, 0, 0, vec![gq], gq, vec![DagBuilder::tx(1, 3)]);
    let t1 = b.tr(2, 0, 0, vec![gq], gq, vec![DagBuilder::tx(2, 3)]);
    let l = b.lead_first(0, 0, vec![b.qc(1, &t0), b.qc(1, &t1)], gq);
    let mut m = vec![Message::Block(t0.clone()), Message::Block(t1.clone()), Message::Block(l.clone())];
    m.extend(b.votes(2, &l, [3, 1, 0]));
    out.push(("leader", m, vec![(1, 3), (2, 3)]));

    out
}
