//! Execution traces and their line-delimited text form.
//!
//! One record per line, seven tab-separated fields in fixed order:
//! `tick kind src dst type bytes detail`, with `-` for an absent field.
//! The first `send` record of each message carries its canonical encoding
//! as hex, so a stored trace is self-contained.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use morpheus_core::codec::{decode_message, encode_message, DecodeError};
use morpheus_core::types::{BlockKind, BlockMeta, Message};
use morpheus_core::{Digest, ProcessId};
use thiserror::Error;

use crate::config::ScenarioConfig;

/// Identifier of a sent message, unique within a trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MsgId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RecordKind {
    Config,
    Tx,
    Send,
    Deliver,
    Drop,
    Propose,
    Final,
    View,
    Crash,
    TipBound,
}

impl RecordKind {
    const ALL: [RecordKind; 10] = [
        RecordKind::Config,
        RecordKind::Tx,
        RecordKind::Send,
        RecordKind::Deliver,
        RecordKind::Drop,
        RecordKind::Propose,
        RecordKind::Final,
        RecordKind::View,
        RecordKind::Crash,
        RecordKind::TipBound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RecordKind::Config => "config",
            RecordKind::Tx => "tx",
            RecordKind::Send => "send",
            RecordKind::Deliver => "deliver",
            RecordKind::Drop => "drop",
            RecordKind::Propose => "propose",
            RecordKind::Final => "final",
            RecordKind::View => "view",
            RecordKind::Crash => "crash",
            RecordKind::TipBound => "tipbound",
        }
    }
}

impl FromStr for RecordKind {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, TraceError> {
        RecordKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| TraceError::Field("kind", s.into()))
    }
}

/// What a record is about, beyond the common columns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Detail {
    None,
    Config(Box<ScenarioConfig>),
    /// A transaction handed to `src`.
    Tx {
        seq: u64,
    },
    Msg(MsgId),
    Block(BlockMeta),
    View(i64),
    Tips(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub tick: u64,
    pub kind: RecordKind,
    pub src: Option<ProcessId>,
    pub dst: Option<ProcessId>,
    pub msg_type: Option<&'static str>,
    pub bytes: Option<usize>,
    pub detail: Detail,
}

impl Record {
    pub fn new(tick: u64, kind: RecordKind, src: Option<ProcessId>, detail: Detail) -> Self {
        Record { tick, kind, src, dst: None, msg_type: None, bytes: None, detail }
    }

    pub fn msg_id(&self) -> Option<MsgId> {
        match self.detail {
            Detail::Msg(id) => Some(id),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Line { line: usize, source: Box<TraceError> },
    #[error("bad {0} field {1:?}")]
    Field(&'static str, String),
    #[error("message {0} is used before its encoding appears")]
    UnknownMessage(u64),
    #[error("undecodable message: {0}")]
    Decode(#[from] DecodeError),
    #[error("config: {0}")]
    Config(#[from] serde_json::Error),
    #[error("trace has no config record")]
    NoConfig,
}

/// A complete run: its configuration, records in event order, and every
/// message that was sent, indexed by [`MsgId`].
#[derive(Clone, Debug)]
pub struct Trace {
    pub config: ScenarioConfig,
    pub records: Vec<Record>,
    pub messages: Vec<Message>,
}

impl Trace {
    pub fn message(&self, id: MsgId) -> &Message {
        &self.messages[id.0 as usize]
    }

    pub fn of_kind(&self, kind: RecordKind) -> impl Iterator<Item = &Record> + '_ {
        self.records.iter().filter(move |r| r.kind == kind)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut shown = vec![false; self.messages.len()];
        for r in &self.records {
            let detail = match &r.detail {
                Detail::Msg(id) if matches!(r.kind, RecordKind::Send | RecordKind::Drop) && !shown[id.0 as usize] => {
                    shown[id.0 as usize] = true;
                    format!("id={} hex={}", id.0, hex::encode(encode_message(self.message(*id))))
                }
                d => DetailDisplay(d).to_string(),
            };
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.tick,
                r.kind.name(),
                opt(r.src.map(|p| p.0)),
                opt(r.dst.map(|p| p.0)),
                r.msg_type.unwrap_or("-"),
                opt(r.bytes),
                detail
            )?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("trace text is ascii")
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Trace, TraceError> {
        let mut config = None;
        let mut records = Vec::new();
        let mut messages: BTreeMap<u64, Message> = BTreeMap::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let rec =
                parse_line(&line, &mut messages).map_err(|e| TraceError::Line { line: i + 1, source: Box::new(e) })?;
            if let Detail::Config(c) = &rec.detail {
                config = Some((**c).clone());
            }
            records.push(rec);
        }
        let messages: Vec<Message> = messages.into_values().collect();
        Ok(Trace { config: config.ok_or(TraceError::NoConfig)?, records, messages })
    }
}

fn opt<T: fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

struct DetailDisplay<'a>(&'a Detail);

impl fmt::Display for DetailDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Detail::None => f.write_str("-"),
            Detail::Config(c) => f.write_str(&serde_json::to_string(c).expect("config serializes")),
            Detail::Tx { seq } => write!(f, "seq={seq}"),
            Detail::Msg(id) => write!(f, "id={}", id.0),
            Detail::Block(m) => write!(
                f,
                "digest={} kind={} author={} slot={} view={} height={}",
                m.digest.to_hex(),
                m.kind.name(),
                opt(m.author.map(|p| p.0)),
                m.slot,
                m.view,
                m.height
            ),
            Detail::View(v) => write!(f, "view={v}"),
            Detail::Tips(t) => write!(f, "tips={t}"),
        }
    }
}

fn kv(detail: &str) -> BTreeMap<&str, &str> {
    detail.split(' ').filter_map(|p| p.split_once('=')).collect()
}

fn num<T: FromStr>(what: &'static str, s: Option<&str>) -> Result<T, TraceError> {
    let s = s.ok_or_else(|| TraceError::Field(what, String::new()))?;
    s.parse().map_err(|_| TraceError::Field(what, s.to_string()))
}

fn opt_num<T: FromStr>(what: &'static str, s: &str) -> Result<Option<T>, TraceError> {
    if s == "-" {
        Ok(None)
    } else {
        num(what, Some(s)).map(Some)
    }
}

fn parse_line(line: &str, messages: &mut BTreeMap<u64, Message>) -> Result<Record, TraceError> {
    let cols: Vec<&str> = line.splitn(7, '\t').collect();
    if cols.len() != 7 {
        return Err(TraceError::Field("line", line.chars().take(40).collect()));
    }
    let tick = num("tick", Some(cols[0]))?;
    let kind: RecordKind = cols[1].parse()?;
    let src = opt_num::<u32>("src", cols[2])?.map(ProcessId);
    let dst = opt_num::<u32>("dst", cols[3])?.map(ProcessId);
    let bytes = opt_num("bytes", cols[5])?;
    let detail_text = cols[6];
    let detail = match kind {
        RecordKind::Config => Detail::Config(Box::new(serde_json::from_str(detail_text)?)),
        RecordKind::Tx => Detail::Tx { seq: num("seq", kv(detail_text).get("seq").copied())? },
        RecordKind::Send | RecordKind::Deliver | RecordKind::Drop => {
            let map = kv(detail_text);
            let id: u64 = num("id", map.get("id").copied())?;
            if let Some(h) = map.get("hex") {
                let raw = hex::decode(h).map_err(|_| TraceError::Field("hex", String::new()))?;
                messages.insert(id, decode_message(&raw)?);
            }
            if !messages.contains_key(&id) {
                return Err(TraceError::UnknownMessage(id));
            }
            Detail::Msg(MsgId(id))
        }
        RecordKind::Propose | RecordKind::Final => Detail::Block(parse_meta(&kv(detail_text))?),
        RecordKind::View => Detail::View(num("view", kv(detail_text).get("view").copied())?),
        RecordKind::Crash => Detail::None,
        RecordKind::TipBound => Detail::Tips(num("tips", kv(detail_text).get("tips").copied())?),
    };
    let msg_type = match (cols[4], &detail) {
        ("-", _) => None,
        (_, Detail::Msg(id)) => Some(messages[&id.0].type_name()),
        (other, _) => return Err(TraceError::Field("type", other.to_string())),
    };
    Ok(Record { tick, kind, src, dst, msg_type, bytes, detail })
}

fn parse_meta(map: &BTreeMap<&str, &str>) -> Result<BlockMeta, TraceError> {
    let d = map.get("digest").copied().unwrap_or("");
    let digest = Digest::from_hex(d).ok_or_else(|| TraceError::Field("digest", d.to_string()))?;
    let k = map.get("kind").copied().unwrap_or("");
    let kind = [BlockKind::Genesis, BlockKind::Lead, BlockKind::Tr]
        .into_iter()
        .find(|x| x.name() == k)
        .ok_or_else(|| TraceError::Field("kind", k.to_string()))?;
    let author = opt_num::<u32>("author", map.get("author").copied().unwrap_or("-"))?.map(ProcessId);
    Ok(BlockMeta {
        kind,
        view: num("view", map.get("view").copied())?,
        height: num("height", map.get("height").copied())?,
        author,
        slot: num("slot", map.get("slot").copied())?,
        digest,
    })
}
