//! Per-node charge accounting by radio state, and lifetime estimation.
//!
//! Each node reports exactly one [`SlotOutcome`] per slot. Charges are in
//! microcoulombs per slot; the default table holds representative values for a
//! 2.4 GHz 802.15.4 radio and is a configuration input, not a measured constant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SECONDS_PER_YEAR: f64 = 365.25 * 24.0 * 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SlotOutcome {
    TxDataRxAck,
    RxDataTxAck,
    TxDataOnly,
    RxDataOnly,
    RxIdle,
    Sleep,
}

impl SlotOutcome {
    pub const ALL: [SlotOutcome; 6] = [
        SlotOutcome::TxDataRxAck,
        SlotOutcome::RxDataTxAck,
        SlotOutcome::TxDataOnly,
        SlotOutcome::RxDataOnly,
        SlotOutcome::RxIdle,
        SlotOutcome::Sleep,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChargeTable {
    pub tx_data_rx_ack_uc: f64,
    pub rx_data_tx_ack_uc: f64,
    pub tx_data_only_uc: f64,
    pub rx_data_only_uc: f64,
    pub rx_idle_uc: f64,
    pub sleep_uc: f64,
    pub battery_c: f64,
}

impl Default for ChargeTable {
    fn default() -> Self {
        ChargeTable {
            tx_data_rx_ack_uc: 54.5,
            rx_data_tx_ack_uc: 32.6,
            tx_data_only_uc: 49.5,
            rx_data_only_uc: 22.6,
            rx_idle_uc: 6.4,
            sleep_uc: 0.0,
            battery_c: 2821.5,
        }
    }
}

impl ChargeTable {
    pub fn charge(&self, outcome: SlotOutcome) -> f64 {
        match outcome {
            SlotOutcome::TxDataRxAck => self.tx_data_rx_ack_uc,
            SlotOutcome::RxDataTxAck => self.rx_data_tx_ack_uc,
            SlotOutcome::TxDataOnly => self.tx_data_only_uc,
            SlotOutcome::RxDataOnly => self.rx_data_only_uc,
            SlotOutcome::RxIdle => self.rx_idle_uc,
            SlotOutcome::Sleep => self.sleep_uc,
        }
    }

    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let all = SlotOutcome::ALL.map(|o| self.charge(o));
        if all.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::config("charge table entries must be finite and >= 0"));
        }
        if !(self.rx_idle_uc < self.rx_data_only_uc && self.rx_data_only_uc < self.tx_data_rx_ack_uc) {
            return Err(Error::config(
                "charge table must satisfy rx_idle < rx_data_only < tx_data_rx_ack",
            ));
        }
        if all.iter().any(|c| self.sleep_uc > *c) {
            return Err(Error::config("sleep charge must not exceed any other outcome"));
        }
        if !(self.battery_c > 0.0) {
            return Err(Error::config("battery_c must be > 0"));
        }
        Ok(())
    }

    /// The same table with every charge multiplied by `k` (battery unchanged).
    pub fn scaled(&self, k: f64) -> ChargeTable {
        ChargeTable {
            tx_data_rx_ack_uc: self.tx_data_rx_ack_uc * k,
            rx_data_tx_ack_uc: self.rx_data_tx_ack_uc * k,
            tx_data_only_uc: self.tx_data_only_uc * k,
            rx_data_only_uc: self.rx_data_only_uc * k,
            rx_idle_uc: self.rx_idle_uc * k,
            sleep_uc: self.sleep_uc * k,
            battery_c: self.battery_c,
        }
    }
}

/// Histogram of slot outcomes for one node.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChargeCounters {
    counts: [u64; 6],
}

impl ChargeCounters {
    pub fn charge_slot(&mut self, outcome: SlotOutcome) {
        self.counts[outcome.index()] += 1;
    }

    pub fn count(&self, outcome: SlotOutcome) -> u64 {
        self.counts[outcome.index()]
    }

    /// Records every slot not otherwise accounted for as sleep.
    pub fn fill_sleep(&mut self, total_slots: u64) {
        let active: u64 = SlotOutcome::ALL
            .iter()
            .filter(|o| **o != SlotOutcome::Sleep)
            .map(|o| self.count(*o))
            .sum();
        self.counts[SlotOutcome::Sleep.index()] = total_slots.saturating_sub(active);
    }

    pub fn total_slots(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn total_uc(&self, table: &ChargeTable) -> f64 {
        SlotOutcome::ALL
            .iter()
            .map(|o| self.count(*o) as f64 * table.charge(*o))
            .sum()
    }

    pub fn slots_tx(&self) -> u64 {
        self.count(SlotOutcome::TxDataRxAck) + self.count(SlotOutcome::TxDataOnly)
    }

    pub fn slots_rx(&self) -> u64 {
        self.count(SlotOutcome::RxDataTxAck) + self.count(SlotOutcome::RxDataOnly)
    }

    pub fn slots_idle(&self) -> u64 {
        self.count(SlotOutcome::RxIdle)
    }

    pub fn slots_sleep(&self) -> u64 {
        self.count(SlotOutcome::Sleep)
    }
}

/// Years until `battery_c` is exhausted when `charge_c` is drawn every `duration_s`.
/// `None` means the node never drew any charge.
pub fn lifetime_years(charge_c: f64, duration_s: f64, battery_c: f64) -> Option<f64> {
    if charge_c <= 0.0 {
        return None;
    }
    let rate = charge_c / duration_s;
    Some(battery_c / rate / SECONDS_PER_YEAR)
}

/// Minimum over the given per-node lifetimes, ignoring infinite ones.
pub fn network_lifetime<I: IntoIterator<Item = Option<f64>>>(per_node: I) -> Option<f64> {
    per_node.into_iter().flatten().reduce(f64::min)
}
