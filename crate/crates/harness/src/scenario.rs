//! Scenario files and the canned scenarios used by experiments.
//!
//! A scenario file is TOML: top-level keys of [`ScenarioConfig`], arrays of
//! tables `[[faults]]` and `[[payloads]]`, optional `[delay]`,
//! `[batching]`, and an `[output]` table naming where results go.

use std::path::{Path, PathBuf};

use morpheus_sim::{DelayPolicy, Fault, FaultSpec, PayloadSpec, ScenarioConfig, Strategy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::HarnessError;

#[derive(Clone, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    pub trace: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
}

pub fn parse_scenario(text: &str) -> Result<(ScenarioConfig, OutputPaths), HarnessError> {
    let mut table: toml::Table = text.parse()?;
    let output = match table.remove("output") {
        Some(v) => v.try_into()?,
        None => OutputPaths::default(),
    };
    let cfg: ScenarioConfig = toml::Value::Table(table).try_into()?;
    cfg.validate()?;
    Ok((cfg, output))
}

pub fn load_scenario(path: &Path) -> Result<(ScenarioConfig, OutputPaths), HarnessError> {
    parse_scenario(&std::fs::read_to_string(path)?)
}

/// One producer handing over a transaction every `10 delta`; all delays
/// equal delta (which equals Delta).
pub fn low_throughput(n: usize, delta: u64, producer: u32, start: u64, blocks: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(n, delta, delta, start + (blocks + 4) * 10 * delta);
    cfg.delay = DelayPolicy::MaxDelay;
    cfg.payloads.push(PayloadSpec { process: producer, start, every: 10 * delta, count: blocks, txs: 1, at: vec![] });
    cfg
}

/// Every process receives `txs` transactions every delta for `rounds`
/// rounds; every message takes exactly delta.
pub fn high_throughput(n: usize, delta: u64, rounds: u64, txs: usize) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(n, delta, delta, (rounds + 30) * delta);
    cfg.delay = DelayPolicy::MaxDelay;
    for p in 0..n as u32 {
        cfg.payloads.push(PayloadSpec { process: p, start: delta, every: delta, count: rounds, txs, at: vec![] });
    }
    cfg
}

/// Leaders of views `0..f` are silent; one transaction is issued at
/// `issue` and must survive the view changes.
pub fn silent_leaders(n: usize, delta_bound: u64, delta: u64, issue: u64) -> ScenarioConfig {
    let f = morpheus_core::types::max_faults(n);
    let horizon = issue + (f as u64 + 3) * 14 * delta_bound;
    let mut cfg = ScenarioConfig::new(n, delta_bound, delta, horizon);
    cfg.delay = DelayPolicy::MaxDelay;
    for p in 0..f as u32 {
        cfg.faults.push(FaultSpec { process: p, fault: Fault::Byzantine { strategy: Strategy::SilentLeader } });
    }
    cfg.payloads.push(PayloadSpec { process: n as u32 - 1, start: issue, every: 0, count: 1, txs: 1, at: vec![] });
    cfg
}

/// Number of 12 Delta view-change timers granted to each transaction in
/// sweep runs.
pub const SWEEP_VIEWS: u64 = 20;

/// A randomized run for the adversarial sweep: f Byzantine processes with a
/// common strategy, random GST and actual delay, uniform delays, scattered
/// payloads at every process.
pub fn sweep_scenario(n: usize, strategy: Strategy, seed: u64) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ n as u64);
    let delta_bound = 4;
    let delta = rng.gen_range(1..=delta_bound);
    let gst = rng.gen_range(0..=10 * delta_bound);
    let f = morpheus_core::types::max_faults(n);
    let first_bad = (seed % n as u64) as u32;
    let mut cfg = ScenarioConfig::new(n, delta_bound, delta, 1);
    cfg.gst = gst;
    cfg.seed = seed;
    for k in 0..f as u32 {
        let process = (first_bad + k) % n as u32;
        cfg.faults.push(FaultSpec { process, fault: Fault::Byzantine { strategy } });
    }
    let mut last = 0;
    for p in 0..n as u32 {
        let at: Vec<u64> = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(0..=30 * delta_bound)).collect();
        last = last.max(*at.iter().max().unwrap());
        cfg.payloads.push(PayloadSpec { process: p, start: 0, every: 0, count: 0, txs: rng.gen_range(1..=3), at });
    }
    cfg.horizon = gst.max(last) + (SWEEP_VIEWS + 2) * 12 * delta_bound;
    cfg
}
