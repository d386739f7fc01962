//! Scenario configuration.

use std::collections::BTreeSet;

use morpheus_core::replica::BatchPolicy;
use morpheus_core::types::max_faults;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::Strategy;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigInvalid {
    #[error("n = {n} cannot tolerate f = {f} (need n >= 3f + 1)")]
    TooFewProcesses { n: usize, f: usize },
    #[error("n = {0} exceeds the supported maximum of 128")]
    TooManyProcesses(usize),
    #[error("actual delay {small} must satisfy 1 <= delta <= Delta = {big}")]
    BadDelays { small: u64, big: u64 },
    #[error("horizon {horizon} must exceed GST {gst}")]
    HorizonBeforeGst { horizon: u64, gst: u64 },
    #[error("{faulty} faulty processes exceed f = {f}")]
    TooManyFaults { faulty: usize, f: usize },
    #[error("process {0} is out of range")]
    UnknownProcess(u32),
    #[error("process {0} has more than one fault assignment")]
    DuplicateFault(u32),
    #[error("batching needs 1 <= min_batch <= max_batch")]
    BadBatching,
}

/// How the adversary picks delivery times inside the admissible window.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum DelayPolicy {
    #[default]
    Uniform,
    /// Every message arrives at the latest admissible tick.
    MaxDelay,
    /// Messages to or from a victim arrive as late as possible, all others
    /// as early as possible.
    Targeted { victims: Vec<u32> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Fault {
    Correct,
    /// Stops at the given tick: nothing is processed or sent from then on.
    Crash {
        at: u64,
    },
    /// Each outgoing message is dropped with probability `drop_permille / 1000`.
    Omission {
        drop_permille: u32,
    },
    Byzantine {
        strategy: Strategy,
    },
}

impl Fault {
    pub fn is_correct(&self) -> bool {
        matches!(self, Fault::Correct)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub process: u32,
    #[serde(flatten)]
    pub fault: Fault,
}

/// Transactions handed to one process: `txs` at `start + k * every` for
/// `k < count`, plus `txs` at every tick listed in `at`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadSpec {
    pub process: u32,
    #[serde(default)]
    pub start: u64,
    #[serde(default)]
    pub every: u64,
    #[serde(default)]
    pub count: u64,
    #[serde(default = "one")]
    pub txs: usize,
    #[serde(default)]
    pub at: Vec<u64>,
}

fn one() -> usize {
    1
}

impl PayloadSpec {
    pub fn ticks(&self) -> Vec<u64> {
        let mut out: Vec<u64> = (0..self.count).map(|k| self.start + k * self.every).collect();
        out.extend(&self.at);
        out.sort_unstable();
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Batching {
    pub min_batch: usize,
    pub max_batch: usize,
    pub min_gap: u64,
}

impl Default for Batching {
    fn default() -> Self {
        let p = BatchPolicy::default();
        Batching { min_batch: p.min_batch, max_batch: p.max_batch, min_gap: p.min_gap }
    }
}

impl From<Batching> for BatchPolicy {
    fn from(b: Batching) -> Self {
        BatchPolicy { min_batch: b.min_batch, max_batch: b.max_batch, min_gap: b.min_gap }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n: usize,
    /// Overrides the default f = floor((n - 1) / 3).
    #[serde(default)]
    pub f: Option<usize>,
    #[serde(default)]
    pub gst: u64,
    /// Known delay bound (Delta), in ticks.
    pub delta_bound: u64,
    /// Actual post-GST delay bound (delta), in ticks.
    pub delta_actual: u64,
    pub horizon: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub delay: DelayPolicy,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    #[serde(default)]
    pub payloads: Vec<PayloadSpec>,
    #[serde(default)]
    pub batching: Batching,
    /// Local clock offset per process; missing entries are 0.
    #[serde(default)]
    pub clock_offsets: Vec<u64>,
    #[serde(default = "default_tx_size")]
    pub tx_size: usize,
}

fn default_tx_size() -> usize {
    16
}

impl ScenarioConfig {
    /// A fault-free scenario with no payloads.
    pub fn new(n: usize, delta_bound: u64, delta_actual: u64, horizon: u64) -> Self {
        ScenarioConfig {
            n,
            f: None,
            gst: 0,
            delta_bound,
            delta_actual,
            horizon,
            seed: 0,
            delay: DelayPolicy::default(),
            faults: Vec::new(),
            payloads: Vec::new(),
            batching: Batching::default(),
            clock_offsets: Vec::new(),
            tx_size: default_tx_size(),
        }
    }

    pub fn f(&self) -> usize {
        self.f.unwrap_or_else(|| max_faults(self.n))
    }

    pub fn fault_of(&self, p: u32) -> Fault {
        self.faults.iter().find(|s| s.process == p).map_or(Fault::Correct, |s| s.fault.clone())
    }

    pub fn is_correct(&self, p: u32) -> bool {
        self.fault_of(p).is_correct()
    }

    pub fn correct_processes(&self) -> Vec<u32> {
        (0..self.n as u32).filter(|&p| self.is_correct(p)).collect()
    }

    pub fn offset(&self, p: u32) -> u64 {
        self.clock_offsets.get(p as usize).copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), ConfigInvalid> {
        let f = self.f();
        if self.n > 128 {
            return Err(ConfigInvalid::TooManyProcesses(self.n));
        }
        if self.n == 0 || self.n < 3 * f + 1 {
            return Err(ConfigInvalid::TooFewProcesses { n: self.n, f });
        }
        if self.delta_actual == 0 || self.delta_actual > self.delta_bound {
            return Err(ConfigInvalid::BadDelays { small: self.delta_actual, big: self.delta_bound });
        }
        if self.horizon <= self.gst {
            return Err(ConfigInvalid::HorizonBeforeGst { horizon: self.horizon, gst: self.gst });
        }
        let mut seen = BTreeSet::new();
        for s in &self.faults {
            if s.process as usize >= self.n {
                return Err(ConfigInvalid::UnknownProcess(s.process));
            }
            if !seen.insert(s.process) {
                return Err(ConfigInvalid::DuplicateFault(s.process));
            }
        }
        let faulty = self.faults.iter().filter(|s| !s.fault.is_correct()).count();
        if faulty > f {
            return Err(ConfigInvalid::TooManyFaults { faulty, f });
        }
        for p in &self.payloads {
            if p.process as usize >= self.n {
                return Err(ConfigInvalid::UnknownProcess(p.process));
            }
        }
        if let DelayPolicy::Targeted { victims } = &self.delay {
            if let Some(v) = victims.iter().find(|&&v| v as usize >= self.n) {
                return Err(ConfigInvalid::UnknownProcess(*v));
            }
        }
        let b = self.batching;
        if b.min_batch == 0 || b.min_batch > b.max_batch {
            return Err(ConfigInvalid::BadBatching);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_rules() {
        let ok = ScenarioConfig::new(4, 10, 5, 100);
        assert_eq!(ok.validate(), Ok(()));
        assert_eq!(ok.f(), 1);

        let mut c = ok.clone();
        c.f = Some(2);
        assert_eq!(c.validate(), Err(ConfigInvalid::TooFewProcesses { n: 4, f: 2 }));

        let mut c = ok.clone();
        c.delta_actual = 11;
        assert!(matches!(c.validate(), Err(ConfigInvalid::BadDelays { .. })));

        let mut c = ok.clone();
        c.gst = 100;
        assert!(matches!(c.validate(), Err(ConfigInvalid::HorizonBeforeGst { .. })));

        let mut c = ok.clone();
        c.faults = vec![
            FaultSpec { process: 1, fault: Fault::Crash { at: 0 } },
            FaultSpec { process: 2, fault: Fault::Byzantine { strategy: Strategy::Equivocator } },
        ];
        assert_eq!(c.validate(), Err(ConfigInvalid::TooManyFaults { faulty: 2, f: 1 }));
    }

    #[test]
    fn payload_ticks() {
        let p = PayloadSpec { process: 0, start: 5, every: 10, count: 3, txs: 1, at: vec![7] };
        assert_eq!(p.ticks(), vec![5, 7, 15, 25]);
    }
}
