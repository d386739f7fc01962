//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use morpheus_core::codec::encode_qc;
use morpheus_core::types::{genesis, max_faults, validate_block, Block, BlockKind, Message, Qc};
use morpheus_core::{Digest, Log, ProcessId, Transaction};
use morpheus_harness::dag::{random_dag, DagBuilder};
use morpheus_harness::metrics::{measure, MetricsReport};
use morpheus_harness::scenario::{high_throughput, low_throughput, silent_leaders};
use morpheus_harness::sweep::{sweep, tally, CaseResult};
use morpheus_sim::{run, Fault, FaultSpec, ScenarioConfig, Strategy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Actual delay used by the latency scenarios (delta = Delta).
const DELTA: u64 = 10;
/// Transaction blocks per low-throughput run.
const LOW_BLOCKS: u64 = 8;
const RUN_BUDGET: Duration = Duration::from_secs(5);
const SWEEP_SEEDS: u64 = 100;
const ORACLE_DAGS: u64 = 200;
const ORACLE_MAX_BLOCKS: usize = 12;
const TRAFFIC_SPREAD: f64 = 2.0;
/// View-change constant, in ticks at Delta = 10. Measured worst case over
/// delta in {1,2,5,10} and issue ticks 0..=150 was 170, 300 and 430 ticks
/// for f = 1, 2, 3: 13 Delta per silent leader plus 4 Delta, which
/// (f+1)(12 Delta + Delta) covers for every f.
const VIEW_CHANGE_C: u64 = 10;

struct Verdict {
    ok: bool,
    detail: String,
}

fn verdict(ok: bool, detail: impl Into<String>) -> Verdict {
    Verdict { ok, detail: detail.into() }
}

fn timed_run(cfg: &ScenarioConfig) -> (MetricsReport, Duration) {
    let start = Instant::now();
    let trace = run(cfg).expect("valid scenario");
    let m = measure(&trace);
    (m, start.elapsed())
}

/// Producer p1 issues a block every 10 delta from tick 10 delta; p0 leads view 0.
fn low_scenario(n: usize) -> ScenarioConfig {
    low_throughput(n, DELTA, 1, 10 * DELTA, LOW_BLOCKS)
}

fn latencies(m: &MetricsReport) -> Vec<Option<u64>> {
    m.blocks.iter().map(|b| b.issuer_latency()).collect()
}

fn exact_three_delta(cfgs: &[(usize, ScenarioConfig)]) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, cfg) in cfgs {
        let (m, took) = timed_run(cfg);
        let lat = latencies(&m);
        let good = lat.len() as u64 == LOW_BLOCKS && lat.iter().all(|l| *l == Some(3 * DELTA)) && took < RUN_BUDGET;
        ok &= good;
        let shown: Vec<String> = lat.iter().map(|l| l.map_or("-".into(), |t| t.to_string())).collect();
        parts.push(format!("n={n} latencies [{}] ({} ms)", shown.join(" "), took.as_millis()));
    }
    verdict(ok, format!("want {} ticks; {}", 3 * DELTA, parts.join("; ")))
}

fn criterion_1() -> Verdict {
    exact_three_delta(&[(4, low_scenario(4)), (7, low_scenario(7))])
}

fn criterion_2() -> Verdict {
    let cfgs: Vec<(usize, ScenarioConfig)> = [4, 7]
        .into_iter()
        .map(|n| {
            let mut cfg = low_scenario(n);
            cfg.faults.push(FaultSpec { process: 0, fault: Fault::Crash { at: 0 } });
            (n, cfg)
        })
        .collect();
    exact_three_delta(&cfgs)
}

fn criterion_3() -> Verdict {
    let cfg = high_throughput(4, DELTA, 40, 1);
    let (m, _) = timed_run(&cfg);
    let lat = latencies(&m);
    let worst = lat.iter().map(|l| l.unwrap_or(u64::MAX)).max().unwrap_or(u64::MAX);
    let ok = !lat.is_empty() && worst <= 8 * DELTA;
    let unfinal = lat.iter().filter(|l| l.is_none()).count();
    verdict(ok, format!("{} blocks, {unfinal} unfinalized, worst {worst} ticks, bound {}", lat.len(), 8 * DELTA))
}

fn sweep_line(results: &[CaseResult], pick: fn(&morpheus_harness::sweep::Tally) -> usize) -> Verdict {
    let rows = tally(results);
    let runs: usize = rows.iter().map(|(_, t)| t.runs).sum();
    let passed: usize = rows.iter().map(|(_, t)| pick(t)).sum();
    let bad: Vec<String> = rows
        .iter()
        .filter(|(_, t)| pick(t) < t.runs)
        .map(|((n, s), t)| format!("n={n} {}: {}/{}", s.name(), pick(t), t.runs))
        .collect();
    let extra = if bad.is_empty() { String::new() } else { format!("; short: {}", bad.join(", ")) };
    verdict(passed == runs, format!("{passed}/{runs} traces pass{extra}"))
}

fn criterion_9() -> Verdict {
    let mut per_n = Vec::new();
    for n in [4, 7, 10] {
        let (m, _) = timed_run(&high_throughput(n, DELTA, 40, 1));
        per_n.push((n, m.bytes_per_transaction.map(|b| b / n as f64)));
    }
    let vals: Vec<f64> = per_n.iter().filter_map(|(_, v)| *v).collect();
    let (lo, hi) = vals.iter().fold((f64::MAX, 0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let ok = vals.len() == 3 && hi / lo < TRAFFIC_SPREAD;
    let shown: Vec<String> = per_n.iter().map(|(n, v)| format!("n={n} {:.1}", v.unwrap_or(f64::NAN))).collect();
    verdict(ok, format!("bytes/tx/n {}; spread {:.3} < {TRAFFIC_SPREAD}", shown.join(", "), hi / lo))
}

/// Direct evaluation of the log of a message set, sharing nothing with the
/// incremental extractor beyond block validity and signature checks.
mod oracle {
    use super::*;

    type Key = (u64, Option<ProcessId>, BlockKind, u64, Digest);

    fn key(b: &Block) -> Key {
        (b.height, b.author, b.kind, b.slot, b.digest())
    }

    pub fn log(msgs: &[Message], b: &DagBuilder) -> Log {
        let committee = &b.committee;
        let g = Arc::new(genesis());
        let mut blocks: HashMap<Digest, Arc<Block>> = HashMap::from([(g.digest(), g.clone())]);
        let mut two_qcs: Vec<Qc> = Vec::new();
        let mut voters: BTreeMap<Vec<u8>, (Qc, BTreeMap<ProcessId, morpheus_core::Signature>)> = BTreeMap::new();
        for m in msgs {
            match m {
                Message::Block(blk) if validate_block(blk, committee) => {
                    blocks.insert(blk.digest(), blk.clone());
                    for q in blk.prev.iter().chain(blk.one_qc.iter()).chain(blk.just.iter().map(|v| &v.qc)) {
                        two_qcs.push(*q);
                    }
                }
                Message::Qc(q) if q.verify(committee) => two_qcs.push(*q),
                Message::ViewMsg(v) if v.verify(committee) => two_qcs.push(v.qc),
                Message::Vote(v) if v.z == 2 && v.verify(committee) => {
                    let stub = Qc { z: 2, block: v.block, sig: Qc::genesis().sig };
                    voters.entry(encode_qc(&stub)).or_insert((stub, BTreeMap::new())).1.insert(v.voter(), v.sig);
                }
                _ => {}
            }
        }
        let quorum = committee.quorum();
        for (stub, shares) in voters.into_values() {
            if shares.len() >= quorum {
                let sig = committee.keyring.aggregate(shares.values().take(quorum), quorum as u32).expect("verified");
                two_qcs.push(Qc { sig, ..stub });
            }
        }
        two_qcs.retain(|q| q.z == 2);

        // Blocks whose whole prev/1-QC ancestry is present.
        let closed: HashSet<Digest> = blocks
            .keys()
            .filter(|d| {
                let mut seen = HashSet::new();
                let mut queue = VecDeque::from([**d]);
                while let Some(x) = queue.pop_front() {
                    if !seen.insert(x) {
                        continue;
                    }
                    let Some(blk) = blocks.get(&x) else { return false };
                    queue.extend(blk.prev.iter().chain(blk.one_qc.iter()).map(|q| q.digest()));
                }
                true
            })
            .copied()
            .collect();

        let candidates: Vec<&Qc> = two_qcs.iter().filter(|q| closed.contains(&q.digest())).collect();
        let head = candidates
            .iter()
            .filter(|q| candidates.iter().all(|o| o.block.rank() <= q.block.rank()))
            .min_by_key(|q| encode_qc(q))
            .map_or(g.digest(), |q| q.digest());

        let seq = tau(head, &blocks);
        let mut seen = HashSet::new();
        let txs: Vec<Transaction> = seq
            .iter()
            .filter(|b| b.kind == BlockKind::Tr)
            .flat_map(|b| b.txs.iter())
            .filter(|t| seen.insert(t.id()))
            .cloned()
            .collect();
        Log(txs)
    }

    fn observed(d: Digest, blocks: &HashMap<Digest, Arc<Block>>) -> HashSet<Digest> {
        let mut out = HashSet::new();
        let mut queue = VecDeque::from([d]);
        while let Some(x) = queue.pop_front() {
            if out.insert(x) {
                queue.extend(blocks[&x].prev.iter().map(|q| q.digest()));
            }
        }
        out
    }

    fn tau(d: Digest, blocks: &HashMap<Digest, Arc<Block>>) -> Vec<Arc<Block>> {
        let b = &blocks[&d];
        let Some(q) = b.one_qc else { return vec![b.clone()] };
        let mut out = tau(q.digest(), blocks);
        let done: HashSet<Digest> = out.iter().map(|x| x.digest()).collect();
        let rest: HashSet<Digest> = observed(d, blocks).difference(&done).copied().collect();
        out.extend(least_topological(&rest, blocks));
        out
    }

    /// Repeatedly emits the smallest-key block whose pointees in the set are
    /// already emitted.
    fn least_topological(set: &HashSet<Digest>, blocks: &HashMap<Digest, Arc<Block>>) -> Vec<Arc<Block>> {
        let mut left: HashSet<Digest> = set.clone();
        let mut out = Vec::new();
        while !left.is_empty() {
            let next = left
                .iter()
                .map(|d| &blocks[d])
                .filter(|b| b.prev.iter().all(|q| !left.contains(&q.digest())))
                .min_by_key(|b| key(b))
                .expect("acyclic")
                .clone();
            left.remove(&next.digest());
            out.push(next);
        }
        out
    }
}

fn criterion_10() -> Verdict {
    let b = DagBuilder::new(4, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut mismatches = Vec::new();
    let mut nonempty = 0;
    for i in 0..ORACLE_DAGS {
        let msgs = random_dag(&b, &mut rng, ORACLE_MAX_BLOCKS);
        let got = morpheus_core::extract(&msgs, &b.committee);
        let want = oracle::log(&msgs, &b);
        nonempty += !want.is_empty() as usize;
        if got != want {
            mismatches.push(i);
        }
    }
    verdict(
        mismatches.is_empty(),
        format!(
            "{} mismatches over {ORACLE_DAGS} DAGs ({nonempty} with non-empty logs) {mismatches:?}",
            mismatches.len()
        ),
    )
}

fn criterion_11() -> Verdict {
    let bound_delta = 10;
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [4, 7, 10] {
        let f = max_faults(n) as u64;
        let bound = (f + 1) * (12 * bound_delta + VIEW_CHANGE_C);
        let mut worst = 0;
        for delta in [1, 5, 10] {
            for issue in (0..=144).step_by(8) {
                let (m, _) = timed_run(&silent_leaders(n, bound_delta, delta, issue));
                let lat = m.transactions.first().and_then(|t| t.finalized.map(|x| x - t.issued)).unwrap_or(u64::MAX);
                worst = worst.max(lat);
            }
        }
        ok &= worst <= bound;
        parts.push(format!("n={n} worst {worst} <= {bound}"));
    }
    verdict(ok, format!("c={VIEW_CHANGE_C}; {}", parts.join(", ")))
}

fn main() -> ExitCode {
    let mut lines: Vec<(u8, &str, Verdict)> = vec![
        (1, "low-throughput latency", criterion_1()),
        (2, "leader crash at low throughput", criterion_2()),
        (3, "high-throughput latency", criterion_3()),
    ];

    let started = Instant::now();
    let results = sweep(&[4, 7, 10], &Strategy::ALL, SWEEP_SEEDS);
    let took = started.elapsed().as_secs();
    lines.push((4, "consistency sweep", sweep_line(&results, |t| t.consistency)));
    lines.push((5, "liveness sweep", sweep_line(&results, |t| t.liveness)));
    lines.push((6, "certificate uniqueness", sweep_line(&results, |t| t.qc_uniqueness)));
    lines.push((7, "quiescence", sweep_line(&results, |t| t.quiescence)));
    lines.push((8, "tip bound", sweep_line(&results, |t| t.tip_bound)));
    lines[3].2.detail.push_str(&format!(" ({took} s)"));

    lines.push((9, "amortized traffic", criterion_9()));
    lines.push((10, "ordering oracle", criterion_10()));
    lines.push((11, "view-change recovery", criterion_11()));

    let mut failed = 0;
    for (id, name, v) in &lines {
        failed += !v.ok as usize;
        println!("criterion {id:>2} {} {name}: {}", if v.ok { "PASS" } else { "FAIL" }, v.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
