//! Adversarial sweeps over committee sizes, strategies and seeds.

use std::fmt::Write as _;
use std::time::Instant;

use morpheus_sim::{run, Strategy};
use serde::Serialize;

use crate::checks::{check_all, CheckReport, LivenessPolicy};
use crate::scenario::{sweep_scenario, SWEEP_VIEWS};

#[derive(Clone, Debug, Serialize)]
pub struct CaseResult {
    pub n: usize,
    pub strategy: Strategy,
    pub seed: u64,
    pub report: CheckReport,
    pub records: usize,
    pub millis: u128,
}

pub fn run_case(n: usize, strategy: Strategy, seed: u64) -> CaseResult {
    let start = Instant::now();
    let cfg = sweep_scenario(n, strategy, seed);
    let trace = run(&cfg).expect("sweep scenarios are valid");
    let report = check_all(&trace, LivenessPolicy::views(SWEEP_VIEWS, cfg.delta_bound));
    CaseResult { n, strategy, seed, report, records: trace.records.len(), millis: start.elapsed().as_millis() }
}

/// Runs seeds `0..seeds` for every size and strategy.
pub fn sweep(ns: &[usize], strategies: &[Strategy], seeds: u64) -> Vec<CaseResult> {
    let mut out = Vec::new();
    for &n in ns {
        for &s in strategies {
            for seed in 0..seeds {
                out.push(run_case(n, s, seed));
            }
        }
    }
    out
}

/// Counts of passing runs per checker, one row per (n, strategy).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Tally {
    pub runs: usize,
    pub consistency: usize,
    pub liveness: usize,
    pub qc_uniqueness: usize,
    pub quiescence: usize,
    pub tip_bound: usize,
}

impl Tally {
    pub fn add(&mut self, r: &CheckReport) {
        self.runs += 1;
        self.consistency += r.consistency.is_pass() as usize;
        self.liveness += r.liveness.is_pass() as usize;
        self.qc_uniqueness += r.qc_uniqueness.is_pass() as usize;
        self.quiescence += r.quiescence.is_pass() as usize;
        self.tip_bound += r.tip_bound.is_pass() as usize;
    }
}

pub fn tally(results: &[CaseResult]) -> Vec<((usize, Strategy), Tally)> {
    let mut rows: Vec<((usize, Strategy), Tally)> = Vec::new();
    for r in results {
        let key = (r.n, r.strategy);
        match rows.iter_mut().find(|(k, _)| *k == key) {
            Some((_, t)) => t.add(&r.report),
            None => {
                let mut t = Tally::default();
                t.add(&r.report);
                rows.push((key, t));
            }
        }
    }
    rows
}

pub fn table(results: &[CaseResult]) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:>3}  {:<21} {:>5} {:>11} {:>9} {:>9} {:>10} {:>8}",
        "n", "strategy", "runs", "consistency", "liveness", "qc-unique", "quiescent", "tips"
    )
    .unwrap();
    for ((n, strat), t) in tally(results) {
        writeln!(
            s,
            "{:>3}  {:<21} {:>5} {:>11} {:>9} {:>9} {:>10} {:>8}",
            n,
            strat.name(),
            t.runs,
            t.consistency,
            t.liveness,
            t.qc_uniqueness,
            t.quiescence,
            t.tip_bound
        )
        .unwrap();
    }
    s
}
