//! Minimal Scheduling Function: demand-driven cells toward each parent.
//!
//! Every elapsed MSF-owned tx cell toward a parent bumps that parent's
//! elapsed counter, and its used counter when a frame was sent. Past
//! [`MAX_NUM_CELLS`] elapsed cells the utilization decides between adding a
//! cell, deleting one, or doing nothing, and both counters restart.

use std::collections::BTreeMap;

use crate::topology::NodeId;

pub const MAX_NUM_CELLS: u32 = 100;
pub const LIM_HIGH: u32 = 75;
pub const LIM_LOW: u32 = 25;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MsfCounters {
    pub nce: u32,
    pub ncu: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsfAction {
    Add(u16),
    Delete(u16),
}

impl MsfCounters {
    /// Accounts one elapsed cell. `cells_held` is the number of MSF cells
    /// toward this parent and guards the last one against deletion.
    pub fn on_cell_elapsed(&mut self, used: bool, cells_held: usize) -> Option<MsfAction> {
        self.nce += 1;
        if used {
            self.ncu += 1;
        }
        if self.nce <= MAX_NUM_CELLS {
            return None;
        }
        let action = if self.ncu > LIM_HIGH {
            Some(MsfAction::Add(1))
        } else if self.ncu < LIM_LOW && cells_held > 1 {
            Some(MsfAction::Delete(1))
        } else {
            None
        };
        *self = MsfCounters::default();
        action
    }
}

/// Per-parent counters for one node.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MsfState {
    counters: BTreeMap<NodeId, MsfCounters>,
}

impl MsfState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn counters(&self, parent: NodeId) -> MsfCounters {
        self.counters.get(&parent).copied().unwrap_or_default()
    }

    pub fn on_cell_elapsed(&mut self, parent: NodeId, used: bool, cells_held: usize) -> Option<MsfAction> {
        self.counters
            .entry(parent)
            .or_default()
            .on_cell_elapsed(used, cells_held)
    }

    /// Fresh counters for `new`; the ones kept for `old` are discarded. Other
    /// parents are untouched.
    pub fn on_parent_change(&mut self, old: Option<NodeId>, new: Option<NodeId>) {
        if old == new {
            return;
        }
        if let Some(o) = old {
            self.counters.remove(&o);
        }
        if let Some(n) = new {
            self.counters.insert(n, MsfCounters::default());
        }
    }
}
