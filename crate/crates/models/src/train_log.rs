//! Per-epoch (or per-checkpoint) training records.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub steps: u64,
    /// Mean per-token training loss over the epoch.
    pub train_loss: f64,
    pub dev_loss: Option<f64>,
    /// Exact-match rate on the training set, when it was measured.
    pub train_acc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

impl TrainLog {
    pub fn train_losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.train_loss).collect()
    }

    pub fn total_steps(&self) -> u64 {
        self.records.last().map_or(0, |r| r.steps)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,steps,train_loss,dev_loss,train_acc\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{:.6},{},{}",
                r.epoch,
                r.steps,
                r.train_loss,
                opt(r.dev_loss),
                opt(r.train_acc)
            );
        }
        out
    }
}
