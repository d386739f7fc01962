use std::collections::{HashMap, HashSet};

use morpheus_core::types::{BlockKind, Message};
use morpheus_core::ProcessId;
use morpheus_sim::Strategy;
use morpheus_sim::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn producer(cfg: &mut ScenarioConfig, process: u32, start: u64, every: u64, count: u64) {
    cfg.payloads.push(PayloadSpec { process, start, every, count, txs: 1, at: vec![] });
}

fn send_ticks(trace: &Trace) -> HashMap<(MsgId, ProcessId), u64> {
    trace.of_kind(RecordKind::Send).map(|r| ((r.msg_id().unwrap(), r.dst.unwrap()), r.tick)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn deliveries_respect_the_window(seed in 0u64..1000, gst in 0u64..60, big in 2u64..8, frac in 1u64..=4) {
        let small = (big * frac / 4).max(1);
        let mut cfg = ScenarioConfig::new(4, big, small, gst + 40 * big);
        cfg.gst = gst;
        cfg.seed = seed;
        producer(&mut cfg, 1, 3, 5, 6);
        let trace = run(&cfg).unwrap();
        let sends = send_ticks(&trace);
        for r in trace.of_kind(RecordKind::Deliver) {
            let t = sends[&(r.msg_id().unwrap(), r.dst.unwrap())];
            prop_assert!(r.tick > t);
            prop_assert!(r.tick <= gst.max(t) + big);
            if t >= gst {
                prop_assert!(r.tick <= t + small);
            }
        }
    }

    #[test]
    fn sends_before_the_margin_are_delivered(seed in 0u64..1000, gst in 0u64..30) {
        let mut cfg = ScenarioConfig::new(4, 6, 3, gst + 150);
        cfg.gst = gst;
        cfg.seed = seed;
        producer(&mut cfg, 0, 0, 7, 10);
        let trace = run(&cfg).unwrap();
        let delivered: HashSet<(MsgId, ProcessId)> =
            trace.of_kind(RecordKind::Deliver).map(|r| (r.msg_id().unwrap(), r.dst.unwrap())).collect();
        for (key, t) in send_ticks(&trace) {
            if gst.max(t) + cfg.delta_bound <= cfg.horizon {
                prop_assert!(delivered.contains(&key), "{:?} sent at {} not delivered", key, t);
            }
        }
    }
}

#[test]
fn same_config_same_trace() {
    let mut cfg = ScenarioConfig::new(7, 5, 3, 400);
    cfg.gst = 20;
    cfg.seed = 99;
    cfg.faults.push(FaultSpec { process: 2, fault: Fault::Byzantine { strategy: Strategy::Equivocator } });
    cfg.faults.push(FaultSpec { process: 5, fault: Fault::Omission { drop_permille: 300 } });
    for p in 0..7 {
        producer(&mut cfg, p, p as u64, 11, 8);
    }
    let a = run(&cfg).unwrap().to_text();
    let b = run(&cfg).unwrap().to_text();
    assert!(a == b, "traces differ");
}

#[test]
fn trace_text_round_trips() {
    let mut cfg = ScenarioConfig::new(4, 4, 2, 200);
    cfg.faults.push(FaultSpec { process: 3, fault: Fault::Omission { drop_permille: 200 } });
    producer(&mut cfg, 0, 1, 9, 5);
    let trace = run(&cfg).unwrap();
    let text = trace.to_text();
    let back = Trace::read_from(text.as_bytes()).unwrap();
    assert_eq!(back.config, cfg);
    assert_eq!(back.records, trace.records);
    assert_eq!(back.messages, trace.messages);
    assert_eq!(back.to_text(), text);
}

#[test]
fn uniform_draws_are_seed_deterministic() {
    let cfg = ScenarioConfig::new(4, 50, 50, 100);
    let draw = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..100).map(|t| adversary_delay(&cfg.delay, ProcessId(0), ProcessId(1), t, &cfg, &mut rng)).collect::<Vec<_>>()
    };
    assert_eq!(draw(3), draw(3));
    assert_ne!(draw(3), draw(4));
}

#[test]
fn targeted_policy_splits_by_victim() {
    let mut cfg = ScenarioConfig::new(7, 9, 6, 100);
    cfg.gst = 50;
    cfg.delay = DelayPolicy::Targeted { victims: vec![2, 5] };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut pick = ChaCha8Rng::seed_from_u64(2);
    let mut by_recipient: HashMap<u32, Vec<u64>> = HashMap::new();
    for k in 0..1000u64 {
        use rand::Rng;
        let src = pick.gen_range(0..7u32);
        let dst = (src + pick.gen_range(1..7u32)) % 7;
        let t = k % 100;
        let at = adversary_delay(&cfg.delay, ProcessId(src), ProcessId(dst), t, &cfg, &mut rng);
        let (lo, hi) = window(t, cfg.gst, cfg.delta_bound, cfg.delta_actual);
        let victim = [2, 5].contains(&src) || [2, 5].contains(&dst);
        assert_eq!(at, if victim { hi } else { lo });
        if ![2, 5].contains(&src) {
            by_recipient.entry(dst).or_default().push(at - t);
        }
    }
    for (dst, delays) in by_recipient {
        let late = delays.iter().filter(|&&d| d > 1).count();
        if [2, 5].contains(&dst) {
            assert_eq!(late, delays.len(), "victim {dst} saw an early delivery");
        } else {
            assert_eq!(late, 0, "bystander {dst} saw a delayed delivery");
        }
    }
}

#[test]
fn crashed_process_is_silent() {
    for at in [0, 1, 17, 40] {
        let mut cfg = ScenarioConfig::new(4, 5, 5, 300);
        cfg.faults.push(FaultSpec { process: 1, fault: Fault::Crash { at } });
        producer(&mut cfg, 1, 0, 6, 10);
        producer(&mut cfg, 2, 0, 6, 10);
        let trace = run(&cfg).unwrap();
        for r in &trace.records {
            if r.src == Some(ProcessId(1)) && r.kind != RecordKind::Deliver && r.kind != RecordKind::Crash {
                assert!(r.tick < at, "{:?} at {} after crash at {}", r.kind, r.tick, at);
            }
            if r.kind == RecordKind::Deliver && r.dst == Some(ProcessId(1)) {
                assert!(r.tick < at);
            }
        }
        assert!(trace.of_kind(RecordKind::Crash).any(|r| r.tick == at));
    }
}

#[test]
fn equivocations_get_at_most_one_zero_vote() {
    for seed in 0..10 {
        let mut cfg = ScenarioConfig::new(4, 4, 3, 300);
        cfg.seed = seed;
        cfg.faults.push(FaultSpec { process: 3, fault: Fault::Byzantine { strategy: Strategy::Equivocator } });
        producer(&mut cfg, 3, 0, 10, 5);
        producer(&mut cfg, 0, 5, 10, 5);
        let trace = run(&cfg).unwrap();

        let mut versions: HashMap<u64, HashSet<_>> = HashMap::new();
        for r in trace.of_kind(RecordKind::Send).filter(|r| r.src == Some(ProcessId(3))) {
            if let Message::Block(b) = trace.message(r.msg_id().unwrap()) {
                if b.kind == BlockKind::Tr {
                    versions.entry(b.slot).or_default().insert(b.digest());
                }
            }
        }
        assert!(versions.values().any(|v| v.len() == 2), "no equivocation happened");

        let mut voted: HashMap<(ProcessId, u64), HashSet<_>> = HashMap::new();
        for r in trace.of_kind(RecordKind::Send) {
            if let Message::Vote(v) = trace.message(r.msg_id().unwrap()) {
                if v.z == 0 && v.block.kind == BlockKind::Tr && v.block.author == Some(ProcessId(3)) {
                    voted.entry((v.voter(), v.block.slot)).or_default().insert(v.block.digest);
                }
            }
        }
        for ((voter, slot), ds) in voted {
            assert!(ds.len() <= 1, "{voter:?} 0-voted {} versions of slot {slot}", ds.len());
        }
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = ScenarioConfig::new(4, 4, 5, 100);
    assert!(matches!(run(&cfg), Err(ConfigInvalid::BadDelays { .. })));
    cfg.delta_actual = 2;
    cfg.faults.push(FaultSpec { process: 9, fault: Fault::Crash { at: 3 } });
    assert_eq!(run(&cfg).err(), Some(ConfigInvalid::UnknownProcess(9)));
}

#[test]
fn sole_producer_finalizes_in_three_delta() {
    for n in [4, 7] {
        let d = 10;
        let mut cfg = ScenarioConfig::new(n, d, d, 400);
        cfg.delay = DelayPolicy::MaxDelay;
        producer(&mut cfg, 1, 5 * d, 10 * d, 3);
        let trace = run(&cfg).unwrap();
        let proposed: Vec<_> = trace
            .of_kind(RecordKind::Propose)
            .filter_map(|r| match r.detail {
                Detail::Block(m) if m.kind == BlockKind::Tr => Some((m.digest, r.tick)),
                _ => None,
            })
            .collect();
        assert_eq!(proposed.len(), 3);
        for (digest, t) in proposed {
            let fin = trace
                .of_kind(RecordKind::Final)
                .find(|r| r.src == Some(ProcessId(1)) && matches!(r.detail, Detail::Block(m) if m.digest == digest))
                .expect("finalized");
            assert_eq!(fin.tick - t, 3 * d, "n={n}");
        }
    }
}
