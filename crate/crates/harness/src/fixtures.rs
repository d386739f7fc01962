//! Deliberately broken traces for exercising the checkers.

use morpheus_core::types::{Message, Qc};
use morpheus_core::ProcessId;
use morpheus_sim::{committee, Detail, MsgId, Record, RecordKind, Trace};

use crate::dag::DagBuilder;

/// Injects a transaction block that conflicts with everything finalized so
/// far, together with a full quorum of 2-votes for it, delivered to
/// `victim` at tick `at`.
///
/// The votes are signed with every process's key, including correct ones
/// that would never cast them; the point is to check that the consistency
/// checker notices.
pub fn inject_conflict(trace: &Trace, victim: ProcessId, at: u64) -> Trace {
    let b = DagBuilder::with_committee(committee(&trace.config));
    let top_view = trace
        .records
        .iter()
        .filter_map(|r| match r.detail {
            Detail::View(v) => Some(v),
            Detail::Block(m) => Some(m.view),
            _ => None,
        })
        .max()
        .unwrap_or(0);
    let author = victim.0;
    let gq = Qc::genesis();
    let rogue = b.tr(author, top_view + 1, 0, vec![gq], gq, vec![DagBuilder::tx(author, u64::MAX / 2)]);
    let mut injected = vec![Message::Block(rogue.clone())];
    injected.extend(b.votes(2, &rogue, 0..trace.config.n as u32));
    inject(trace, victim, at, injected)
}

/// Adds `msgs` to the trace as sent to and delivered at `victim` at tick
/// `at`. Votes appear to come from their voter, everything else from the
/// victim itself.
pub fn inject(trace: &Trace, victim: ProcessId, at: u64, msgs: Vec<Message>) -> Trace {
    let mut out = trace.clone();
    let pos = out.records.iter().position(|r| r.tick > at).unwrap_or(out.records.len());
    let mut new_records = Vec::new();
    for m in msgs {
        let signer = match &m {
            Message::Vote(v) => v.voter(),
            _ => victim,
        };
        let id = MsgId(out.messages.len() as u64);
        for kind in [RecordKind::Send, RecordKind::Deliver] {
            if signer == victim && kind == RecordKind::Deliver {
                continue;
            }
            let mut r = Record::new(at, kind, Some(signer), Detail::Msg(id));
            r.dst = Some(victim);
            r.msg_type = Some(m.type_name());
            r.bytes = Some(m.encoded_len());
            new_records.push(r);
        }
        out.messages.push(m);
    }
    out.records.splice(pos..pos, new_records);
    out
}
