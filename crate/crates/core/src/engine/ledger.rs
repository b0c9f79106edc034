use serde::{Deserialize, Serialize};

use crate::data::SampleId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Warmup,
    Pcl,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub phase: Phase,
    pub count: usize,
    /// Total spend after this entry.
    pub spent_after: usize,
}

/// Append-only record of annotation spend against a fixed budget.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetLedger {
    budget_total: usize,
    warmup_spent: usize,
    pcl_spent: usize,
    entries: Vec<LedgerEntry>,
}

impl BudgetLedger {
    pub fn new(budget_total: usize) -> Self {
        Self {
            budget_total,
            warmup_spent: 0,
            pcl_spent: 0,
            entries: Vec::new(),
        }
    }

    pub fn budget_total(&self) -> usize {
        self.budget_total
    }

    pub fn warmup_spent(&self) -> usize {
        self.warmup_spent
    }

    pub fn pcl_spent(&self) -> usize {
        self.pcl_spent
    }

    pub fn spent(&self) -> usize {
        self.warmup_spent + self.pcl_spent
    }

    pub fn remaining(&self) -> usize {
        self.budget_total - self.spent()
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    /// Charges one annotation per id. Either the whole charge is recorded or nothing is.
    pub fn charge(&mut self, ids: &[SampleId], phase: Phase) -> Result<()> {
        if ids.is_empty() {
            return Ok(());
        }
        if ids.len() > self.remaining() {
            return Err(Error::BudgetExceeded {
                requested: ids.len(),
                spent: self.spent(),
                total: self.budget_total,
            });
        }
        match phase {
            Phase::Warmup => self.warmup_spent += ids.len(),
            Phase::Pcl => self.pcl_spent += ids.len(),
        }
        self.entries.push(LedgerEntry {
            phase,
            count: ids.len(),
            spent_after: self.spent(),
        });
        Ok(())
    }
}
