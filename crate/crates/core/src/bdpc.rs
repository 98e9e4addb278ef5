//! Bounded Delay Packet Control: a parent watches how many packets from each
//! child arrive late and negotiates cells in the child-to-parent direction.
//!
//! The parent opens the transactions (`InitiatorRx`), so the child
//! transmits on every cell it installs. Windows are keyed by child, which
//! gives one independent controller per incoming path.

use std::collections::{BTreeMap, VecDeque};

use crate::config::BudgetRule;
use crate::rpl::Rank;
use crate::topology::NodeId;
use crate::tsch::Asn;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    OnTime,
    Late,
}

/// Time budget in ms a packet may have used when it reaches a node of rank
/// `own_rank`.
pub fn budget_ms(rule: BudgetRule, max_delay_ms: f64, own_rank: Rank, origin_rank: Rank, step: u32) -> f64 {
    match rule {
        BudgetRule::EndToEnd => max_delay_ms,
        BudgetRule::Proportional => {
            let leaf = origin_rank.max(1) as f64;
            let covered = (leaf - own_rank as f64 + step as f64).clamp(0.0, leaf);
            max_delay_ms * covered / leaf
        }
    }
}

/// Late iff the elapsed time strictly exceeds the budget.
pub fn classify_arrival(elapsed_ms: f64, budget_ms: f64) -> Verdict {
    if elapsed_ms > budget_ms {
        Verdict::Late
    } else {
        Verdict::OnTime
    }
}

/// The last `capacity` verdicts from one child.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LateWindow {
    ring: VecDeque<bool>,
    capacity: usize,
    late: usize,
    pub cooldown_until: Asn,
}

impl LateWindow {
    pub fn new(capacity: usize) -> Self {
        LateWindow {
            ring: VecDeque::with_capacity(capacity),
            capacity,
            late: 0,
            cooldown_until: 0,
        }
    }

    pub fn push(&mut self, v: Verdict) {
        if self.ring.len() == self.capacity && self.ring.pop_front() == Some(true) {
            self.late -= 1;
        }
        let late = v == Verdict::Late;
        self.ring.push_back(late);
        self.late += late as usize;
    }

    pub fn occupancy(&self) -> usize {
        self.ring.len()
    }

    pub fn late_rate(&self) -> Option<f64> {
        (!self.ring.is_empty()).then(|| self.late as f64 / self.ring.len() as f64)
    }

    pub fn reset(&mut self) {
        self.ring.clear();
        self.late = 0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BdpcParams {
    pub sf_max: f64,
    pub sf_min: f64,
    pub min_verdicts: usize,
    pub add_cells: u16,
    pub cooldown_slots: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BdpcAction {
    Add(u16),
    Delete(u16),
}

/// Decision for one child. `owned_cells` counts the cells this function
/// installed toward the child; only those may be deleted.
pub fn evaluate_child(w: &LateWindow, now: Asn, p: &BdpcParams, owned_cells: usize) -> Option<BdpcAction> {
    if w.occupancy() < p.min_verdicts || now < w.cooldown_until {
        return None;
    }
    let rate = w.late_rate()?;
    if rate >= p.sf_max {
        Some(BdpcAction::Add(p.add_cells))
    } else if rate <= p.sf_min && owned_cells > 0 {
        Some(BdpcAction::Delete(1))
    } else {
        None
    }
}

/// Per-child windows held by a parent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BdpcState {
    windows: BTreeMap<NodeId, LateWindow>,
}

impl BdpcState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn window(&self, child: NodeId) -> Option<&LateWindow> {
        self.windows.get(&child)
    }

    pub fn record(&mut self, child: NodeId, v: Verdict, capacity: usize) -> &mut LateWindow {
        let w = self.windows.entry(child).or_insert_with(|| LateWindow::new(capacity));
        w.push(v);
        w
    }

    pub fn record_cooldown(&mut self, child: NodeId, until: Asn) {
        if let Some(w) = self.windows.get_mut(&child) {
            w.cooldown_until = until;
        }
    }

    /// Drops the verdicts collected from `child`; the cooldown is kept.
    pub fn reset(&mut self, child: NodeId) {
        if let Some(w) = self.windows.get_mut(&child) {
            w.reset();
        }
    }
}
