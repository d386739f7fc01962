//! Canonical byte encoding.
//!
//! Field order is fixed (type, view, height, author, slot, then variant
//! fields). Integers are 8-byte big-endian, enum tags a single byte, sequences
//! length-prefixed with an 8-byte count. Signatures do not repeat the payload
//! digest on the wire; decoding recomputes it from the surrounding message.

use std::sync::Arc;

use thiserror::Error;

use crate::crypto::{Digest, ProcessId, Signature, ThresholdSignature};
use crate::types::{
    end_view_payload, view_msg_payload, vote_payload, Block, BlockContent, BlockKind, BlockMeta, EndView, Message, Qc,
    Transaction, ViewCert, ViewMsg, Vote,
};

const NO_AUTHOR: u64 = u64::MAX;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("unexpected end of input at byte {0}")]
    Truncated(usize),
    #[error("invalid tag {tag} for {what}")]
    BadTag { what: &'static str, tag: u8 },
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("length {0} out of range")]
    BadLength(u64),
}

pub fn put_u8(out: &mut Vec<u8>, v: u8) {
    out.push(v);
}

pub fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_be_bytes());
}

pub fn put_i64(out: &mut Vec<u8>, v: i64) {
    out.extend_from_slice(&v.to_be_bytes());
}

pub fn put_digest(out: &mut Vec<u8>, d: &Digest) {
    out.extend_from_slice(&d.0);
}

fn put_author(out: &mut Vec<u8>, a: Option<ProcessId>) {
    put_u64(out, a.map_or(NO_AUTHOR, |p| p.0 as u64));
}

pub fn put_meta(out: &mut Vec<u8>, m: &BlockMeta) {
    put_u8(out, m.kind.tag());
    put_i64(out, m.view);
    put_u64(out, m.height);
    put_author(out, m.author);
    put_u64(out, m.slot);
    put_digest(out, &m.digest);
}

fn put_sig(out: &mut Vec<u8>, s: &Signature) {
    put_u64(out, s.signer().0 as u64);
    put_u64(out, s.tag());
}

fn put_tsig(out: &mut Vec<u8>, s: &ThresholdSignature) {
    put_u64(out, s.threshold() as u64);
    out.extend_from_slice(&s.signer_mask().to_be_bytes());
    put_u64(out, s.tag());
}

pub fn put_qc(out: &mut Vec<u8>, q: &Qc) {
    put_u8(out, q.z);
    put_meta(out, &q.block);
    put_tsig(out, &q.sig);
}

fn put_view_msg(out: &mut Vec<u8>, m: &ViewMsg) {
    put_i64(out, m.view);
    put_qc(out, &m.qc);
    put_sig(out, &m.sig);
}

fn put_tx(out: &mut Vec<u8>, t: &Transaction) {
    put_u64(out, t.issuer.0 as u64);
    put_u64(out, t.seq);
    put_u64(out, t.payload.len() as u64);
    out.extend_from_slice(&t.payload);
}

/// The unsigned body of a block; its hash is the block digest.
pub fn put_block_body(out: &mut Vec<u8>, b: &Block) {
    put_u8(out, b.kind.tag());
    put_i64(out, b.view);
    put_u64(out, b.height);
    put_author(out, b.author);
    put_u64(out, b.slot);
    put_u64(out, b.prev.len() as u64);
    for q in &b.prev {
        put_qc(out, q);
    }
    match &b.one_qc {
        Some(q) => {
            put_u8(out, 1);
            put_qc(out, q);
        }
        None => put_u8(out, 0),
    }
    put_u64(out, b.txs.len() as u64);
    for t in &b.txs {
        put_tx(out, t);
    }
    put_u64(out, b.just.len() as u64);
    for m in &b.just {
        put_view_msg(out, m);
    }
}

pub fn put_block(out: &mut Vec<u8>, b: &Block) {
    put_block_body(out, b);
    match &b.sig {
        Some(s) => {
            put_u8(out, 1);
            put_sig(out, s);
        }
        None => put_u8(out, 0),
    }
}

pub fn put_message(out: &mut Vec<u8>, m: &Message) {
    match m {
        Message::Block(b) => {
            put_u8(out, 0);
            put_block(out, b);
        }
        Message::Vote(v) => {
            put_u8(out, 1);
            put_u8(out, v.z);
            put_meta(out, &v.block);
            put_sig(out, &v.sig);
        }
        Message::Qc(q) => {
            put_u8(out, 2);
            put_qc(out, q);
        }
        Message::EndView(e) => {
            put_u8(out, 3);
            put_i64(out, e.view);
            put_sig(out, &e.sig);
        }
        Message::ViewCert(c) => {
            put_u8(out, 4);
            put_i64(out, c.view);
            put_tsig(out, &c.sig);
        }
        Message::ViewMsg(v) => {
            put_u8(out, 5);
            put_view_msg(out, v);
        }
    }
}

pub fn encode_message(m: &Message) -> Vec<u8> {
    let mut out = Vec::with_capacity(128);
    put_message(&mut out, m);
    out
}

pub fn encode_qc(q: &Qc) -> Vec<u8> {
    let mut out = Vec::with_capacity(96);
    put_qc(&mut out, q);
    out
}

/// Cursor over an encoded buffer.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() - self.pos < len {
            return Err(DecodeError::Truncated(self.pos));
        }
        let out = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn i64(&mut self) -> Result<i64, DecodeError> {
        Ok(i64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn u128(&mut self) -> Result<u128, DecodeError> {
        Ok(u128::from_be_bytes(self.take(16)?.try_into().expect("16 bytes")))
    }

    pub fn digest(&mut self) -> Result<Digest, DecodeError> {
        Ok(Digest(self.take(32)?.try_into().expect("32 bytes")))
    }

    fn len(&mut self) -> Result<usize, DecodeError> {
        let n = self.u64()?;
        // Every element is at least one byte.
        if n > (self.buf.len() - self.pos) as u64 {
            return Err(DecodeError::BadLength(n));
        }
        Ok(n as usize)
    }

    fn process(&mut self) -> Result<ProcessId, DecodeError> {
        let v = self.u64()?;
        u32::try_from(v).map(ProcessId).map_err(|_| DecodeError::BadLength(v))
    }

    fn author(&mut self) -> Result<Option<ProcessId>, DecodeError> {
        let v = self.u64()?;
        if v == NO_AUTHOR {
            return Ok(None);
        }
        u32::try_from(v).map(|p| Some(ProcessId(p))).map_err(|_| DecodeError::BadLength(v))
    }

    fn kind(&mut self) -> Result<BlockKind, DecodeError> {
        let tag = self.u8()?;
        BlockKind::from_tag(tag).ok_or(DecodeError::BadTag { what: "block kind", tag })
    }

    fn meta(&mut self) -> Result<BlockMeta, DecodeError> {
        Ok(BlockMeta {
            kind: self.kind()?,
            view: self.i64()?,
            height: self.u64()?,
            author: self.author()?,
            slot: self.u64()?,
            digest: self.digest()?,
        })
    }

    fn sig(&mut self, payload: Digest) -> Result<Signature, DecodeError> {
        let signer = self.process()?;
        let tag = self.u64()?;
        Ok(Signature::from_parts(signer, payload, tag))
    }

    fn tsig(&mut self, payload: Digest) -> Result<ThresholdSignature, DecodeError> {
        let threshold = self.u64()?;
        let threshold = u32::try_from(threshold).map_err(|_| DecodeError::BadLength(threshold))?;
        let signers = self.u128()?;
        let tag = self.u64()?;
        Ok(ThresholdSignature::from_parts(threshold, payload, signers, tag))
    }

    pub fn qc(&mut self) -> Result<Qc, DecodeError> {
        let z = self.u8()?;
        let block = self.meta()?;
        let sig = self.tsig(vote_payload(z, &block))?;
        Ok(Qc { z, block, sig })
    }

    fn view_msg(&mut self) -> Result<ViewMsg, DecodeError> {
        let view = self.i64()?;
        let qc = self.qc()?;
        let sig = self.sig(view_msg_payload(view, &qc))?;
        Ok(ViewMsg { view, qc, sig })
    }

    fn tx(&mut self) -> Result<Transaction, DecodeError> {
        let issuer = self.process()?;
        let seq = self.u64()?;
        let len = self.len()?;
        let payload = self.take(len)?.to_vec();
        Ok(Transaction { issuer, seq, payload })
    }

    pub fn block(&mut self) -> Result<Block, DecodeError> {
        let kind = self.kind()?;
        let view = self.i64()?;
        let height = self.u64()?;
        let author = self.author()?;
        let slot = self.u64()?;
        let prev = (0..self.len()?).map(|_| self.qc()).collect::<Result<Vec<_>, _>>()?;
        let one_qc = match self.u8()? {
            0 => None,
            1 => Some(self.qc()?),
            tag => return Err(DecodeError::BadTag { what: "option", tag }),
        };
        let txs = (0..self.len()?).map(|_| self.tx()).collect::<Result<Vec<_>, _>>()?;
        let just = (0..self.len()?).map(|_| self.view_msg()).collect::<Result<Vec<_>, _>>()?;
        let content = BlockContent { kind, view, height, author, slot, prev, one_qc, txs, just };
        // The block digest is only known once the body is assembled.
        let sig = match self.u8()? {
            0 => None,
            1 => Some(self.sig(Digest::ZERO)?),
            tag => return Err(DecodeError::BadTag { what: "option", tag }),
        };
        Ok(content.with_signature(sig))
    }

    pub fn message(&mut self) -> Result<Message, DecodeError> {
        let tag = self.u8()?;
        Ok(match tag {
            0 => Message::Block(Arc::new(self.block()?)),
            1 => {
                let z = self.u8()?;
                let block = self.meta()?;
                let sig = self.sig(vote_payload(z, &block))?;
                Message::Vote(Vote { z, block, sig })
            }
            2 => Message::Qc(self.qc()?),
            3 => {
                let view = self.i64()?;
                let sig = self.sig(end_view_payload(view))?;
                Message::EndView(EndView { view, sig })
            }
            4 => {
                let view = self.i64()?;
                let sig = self.tsig(end_view_payload(view - 1))?;
                Message::ViewCert(ViewCert { view, sig })
            }
            5 => Message::ViewMsg(self.view_msg()?),
            tag => return Err(DecodeError::BadTag { what: "message", tag }),
        })
    }

    pub fn finish(&self) -> Result<(), DecodeError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            extra => Err(DecodeError::Trailing(extra)),
        }
    }
}

pub fn decode_message(bytes: &[u8]) -> Result<Message, DecodeError> {
    let mut r = Reader::new(bytes);
    let m = r.message()?;
    r.finish()?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::fixtures::Fixture;
    use crate::types::{genesis, Committee};
    use proptest::prelude::*;

    fn sample_messages(fx: &Fixture) -> Vec<Message> {
        let b0 = fx.tr_block(1, 0, 0, vec![Qc::genesis()], Qc::genesis(), vec![fx.tx(1, 0), fx.tx(1, 1)]);
        let q0 = fx.qc(0, &b0);
        let just = fx.view_msgs(1, fx.qc(1, &b0), &[0, 2, 3]);
        let l = fx.lead_block(1, 1, 0, vec![q0, Qc::genesis()], fx.qc(1, &b0), just.clone());
        vec![
            Message::Block(Arc::new(genesis())),
            Message::Block(Arc::new(b0.clone())),
            Message::Block(Arc::new(l)),
            Message::Vote(Vote::new(2, b0.meta(), &fx.key(3))),
            Message::Qc(q0),
            Message::Qc(Qc::genesis()),
            Message::EndView(EndView::new(4, &fx.key(2))),
            Message::ViewMsg(just[0]),
        ]
    }

    fn still_verifies(m: &Message, c: &Committee) -> bool {
        match m {
            Message::Block(b) => b.is_genesis() || crate::types::validate_block(b, c),
            Message::Vote(v) => v.verify(c),
            Message::Qc(q) => q.verify(c),
            Message::EndView(e) => e.verify(c),
            Message::ViewCert(v) => v.verify(c),
            Message::ViewMsg(v) => v.verify(c),
        }
    }

    #[test]
    fn decode_preserves_messages_and_signatures() {
        let fx = Fixture::new(4);
        for m in sample_messages(&fx) {
            let bytes = encode_message(&m);
            let back = decode_message(&bytes).unwrap();
            assert_eq!(back, m);
            assert!(still_verifies(&back, &fx.committee), "{}", m.type_name());
        }
    }

    #[test]
    fn truncated_and_trailing_inputs_fail() {
        let fx = Fixture::new(4);
        let bytes = encode_message(&sample_messages(&fx)[2]);
        assert!(matches!(decode_message(&bytes[..bytes.len() - 3]), Err(DecodeError::Truncated(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert_eq!(decode_message(&extra), Err(DecodeError::Trailing(1)));
        assert!(matches!(decode_message(&[9]), Err(DecodeError::BadTag { .. })));
    }

    #[test]
    fn qc_size_is_independent_of_signer_count() {
        let fx4 = Fixture::new(4);
        let fx10 = Fixture::new(10);
        let b4 = fx4.tr_block(0, 0, 0, vec![Qc::genesis()], Qc::genesis(), vec![]);
        let b10 = fx10.tr_block(0, 0, 0, vec![Qc::genesis()], Qc::genesis(), vec![]);
        assert_eq!(encode_qc(&fx4.qc(0, &b4)).len(), encode_qc(&fx10.qc(0, &b10)).len());
    }

    proptest! {
        #[test]
        fn tr_blocks_round_trip(author in 0u32..7, view in 0i64..50, slot in 0u64..5,
                                txs in proptest::collection::vec((0u32..7, any::<u64>(), proptest::collection::vec(any::<u8>(), 0..12)), 0..5)) {
            let fx = Fixture::new(7);
            let txs = txs.into_iter().map(|(i, s, p)| Transaction { issuer: ProcessId(i), seq: s, payload: p }).collect();
            let b = fx.tr_block(author, view, slot, vec![Qc::genesis()], Qc::genesis(), txs);
            let m = Message::Block(Arc::new(b));
            let bytes = encode_message(&m);
            prop_assert_eq!(decode_message(&bytes).unwrap(), m.clone());
            prop_assert_eq!(m.encoded_len(), bytes.len());
        }
    }
}
