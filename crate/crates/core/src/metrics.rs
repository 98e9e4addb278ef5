//! Run reports, per-packet ledger, delay distributions and cross-seed summaries.

use serde::{Deserialize, Serialize};

use crate::topology::NodeId;
use crate::tsch::Asn;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub node: NodeId,
    pub slots_tx: u64,
    pub slots_rx: u64,
    pub slots_idle: u64,
    pub slots_sleep: u64,
    pub total_c: f64,
    pub lifetime_years: Option<f64>,
    pub rank: Option<u32>,
    pub pp: Option<NodeId>,
    pub ap: Option<NodeId>,
    pub tx_cells: usize,
    pub rx_cells: usize,
}

/// How each unique packet that never reached the root was lost. A packet
/// whose copies met different fates is charged to the last one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossSummary {
    pub queue_full: u64,
    pub retry_exhausted: u64,
    pub no_parent: u64,
    pub eliminated: u64,
    pub in_flight: u64,
}

impl LossSummary {
    pub fn total(&self) -> u64 {
        self.queue_full + self.retry_exhausted + self.no_parent + self.eliminated + self.in_flight
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SixpSummary {
    pub completed: u64,
    pub timed_out: u64,
    pub cells_added: u64,
    pub cells_removed: u64,
    pub orphans_purged: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub pk_period_s: f64,
    pub max_delay_ms: f64,
    pub n_tx: u64,
    pub n_rx: u64,
    pub n_delayed: u64,
    pub duplicates: u64,
    pub queue_drops: u64,
    pub retry_drops: u64,
    pub no_parent_drops: u64,
    /// Copies discarded by a router that had already seen their flow tuple.
    pub eliminated: u64,
    pub losses: LossSummary,
    pub sixp: SixpSummary,
    pub lifetime_years: Option<f64>,
    pub delay_samples_ms: Vec<u64>,
    pub nodes: Vec<NodeReport>,
}

impl RunReport {
    pub fn new(seed: u64, pk_period_s: f64, max_delay_ms: f64) -> Self {
        RunReport {
            seed,
            pk_period_s,
            max_delay_ms,
            n_tx: 0,
            n_rx: 0,
            n_delayed: 0,
            duplicates: 0,
            queue_drops: 0,
            retry_drops: 0,
            no_parent_drops: 0,
            eliminated: 0,
            losses: LossSummary::default(),
            sixp: SixpSummary::default(),
            lifetime_years: None,
            delay_samples_ms: Vec::new(),
            nodes: Vec::new(),
        }
    }

    pub fn record_delivery(&mut self, delay_ms: u64) {
        self.n_rx += 1;
        if delay_ms as f64 > self.max_delay_ms {
            self.n_delayed += 1;
        }
        self.delay_samples_ms.push(delay_ms);
    }

    pub fn pdr_e2e(&self) -> Option<f64> {
        (self.n_tx > 0).then(|| self.n_rx as f64 / self.n_tx as f64)
    }

    pub fn late_rate_e2e(&self) -> Option<f64> {
        (self.n_rx > 0).then(|| self.n_delayed as f64 / self.n_rx as f64)
    }

    pub fn on_time(&self) -> Option<f64> {
        self.late_rate_e2e().map(|l| 1.0 - l)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossCause {
    QueueFull,
    RetryExhausted,
    NoParent,
    Eliminated,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketRecord {
    pub src: NodeId,
    pub created_at: Asn,
    pub live_copies: u32,
    pub root_copies: u32,
    pub transmissions: u32,
    pub last_loss: Option<LossCause>,
}

/// Fate of every unique packet, indexed by uid.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PacketLedger {
    records: Vec<PacketRecord>,
}

impl PacketLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create(&mut self, src: NodeId, created_at: Asn) -> u32 {
        self.records.push(PacketRecord {
            src,
            created_at,
            live_copies: 0,
            root_copies: 0,
            transmissions: 0,
            last_loss: None,
        });
        (self.records.len() - 1) as u32
    }

    pub fn get(&self, uid: u32) -> &PacketRecord {
        &self.records[uid as usize]
    }

    pub fn records(&self) -> &[PacketRecord] {
        &self.records
    }

    /// A copy entered some transmit queue.
    pub fn queued(&mut self, uid: u32) {
        self.records[uid as usize].live_copies += 1;
    }

    /// A copy left a transmit queue. `cause` is set when it was dropped.
    pub fn released(&mut self, uid: u32, cause: Option<LossCause>) {
        let r = &mut self.records[uid as usize];
        r.live_copies = r
            .live_copies
            .checked_sub(1)
            .expect("released a copy that was never queued");
        if cause.is_some() {
            r.last_loss = cause;
        }
    }

    /// A copy was refused before it was queued.
    pub fn refused(&mut self, uid: u32, cause: LossCause) {
        self.records[uid as usize].last_loss = Some(cause);
    }

    pub fn transmitted(&mut self, uid: u32) {
        self.records[uid as usize].transmissions += 1;
    }

    pub fn at_root(&mut self, uid: u32) {
        self.records[uid as usize].root_copies += 1;
    }

    pub fn summary(&self) -> LossSummary {
        let mut s = LossSummary::default();
        for r in self.records.iter().filter(|r| r.root_copies == 0) {
            if r.live_copies > 0 {
                s.in_flight += 1;
                continue;
            }
            match r.last_loss {
                Some(LossCause::QueueFull) => s.queue_full += 1,
                Some(LossCause::RetryExhausted) => s.retry_exhausted += 1,
                Some(LossCause::NoParent) => s.no_parent += 1,
                Some(LossCause::Eliminated) => s.eliminated += 1,
                None => unreachable!("packet vanished without a recorded cause"),
            }
        }
        s
    }
}

/// Empirical CDF: distinct values ascending with the fraction of samples at
/// or below each.
pub fn ecdf(samples: &[u64]) -> Vec<(u64, f64)> {
    let mut v = samples.to_vec();
    v.sort_unstable();
    let n = v.len() as f64;
    let mut out: Vec<(u64, f64)> = Vec::new();
    for (i, x) in v.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *x => last.1 = frac,
            _ => out.push((*x, frac)),
        }
    }
    out
}

/// Fraction of samples `<= x`; `None` when there are no samples.
pub fn fraction_within(samples: &[u64], x: f64) -> Option<f64> {
    (!samples.is_empty()).then(|| samples.iter().filter(|s| **s as f64 <= x).count() as f64 / samples.len() as f64)
}

pub fn mean<I: IntoIterator<Item = f64>>(xs: I) -> Option<f64> {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// One CSV row per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub arm: String,
    pub seed: u64,
    pub pk_period: f64,
    pub n_tx: u64,
    pub n_rx: u64,
    pub n_delayed: u64,
    pub pdr_e2e: Option<f64>,
    pub on_time: Option<f64>,
    pub lifetime_years: Option<f64>,
    pub duplicates: u64,
    pub queue_drops: u64,
    pub retry_drops: u64,
    pub no_parent_drops: u64,
}

impl RunRow {
    pub fn new(arm: &str, r: &RunReport) -> Self {
        RunRow {
            arm: arm.to_string(),
            seed: r.seed,
            pk_period: r.pk_period_s,
            n_tx: r.n_tx,
            n_rx: r.n_rx,
            n_delayed: r.n_delayed,
            pdr_e2e: r.pdr_e2e(),
            on_time: r.on_time(),
            lifetime_years: r.lifetime_years,
            duplicates: r.duplicates,
            queue_drops: r.queue_drops,
            retry_drops: r.retry_drops,
            no_parent_drops: r.no_parent_drops,
        }
    }
}

/// Means across seeds for one arm, either for one period or all of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub arm: String,
    /// Empty when the row pools every period.
    pub pk_period: Option<f64>,
    pub runs: usize,
    pub lifetime_years: Option<f64>,
    pub pdr_e2e: Option<f64>,
    pub on_time: Option<f64>,
}

fn summarize<'a>(arm: &str, pk_period: Option<f64>, rows: impl Iterator<Item = &'a RunRow> + Clone) -> SummaryRow {
    SummaryRow {
        arm: arm.to_string(),
        pk_period,
        runs: rows.clone().count(),
        lifetime_years: mean(rows.clone().filter_map(|r| r.lifetime_years)),
        pdr_e2e: mean(rows.clone().filter_map(|r| r.pdr_e2e)),
        on_time: mean(rows.filter_map(|r| r.on_time)),
    }
}

/// Per-arm means, one pooled row per arm followed by one row per period,
/// in order of first appearance.
pub fn aggregate(rows: &[RunRow]) -> Vec<SummaryRow> {
    let mut arms: Vec<&str> = Vec::new();
    for r in rows {
        if !arms.contains(&r.arm.as_str()) {
            arms.push(&r.arm);
        }
    }
    let mut out = Vec::new();
    for arm in arms {
        let of_arm = rows.iter().filter(move |r| r.arm == arm);
        out.push(summarize(arm, None, of_arm.clone()));
        let mut periods: Vec<f64> = of_arm.clone().map(|r| r.pk_period).collect();
        periods.sort_by(|a, b| a.partial_cmp(b).expect("finite period"));
        periods.dedup();
        for p in periods {
            out.push(summarize(
                arm,
                Some(p),
                of_arm.clone().filter(move |r| r.pk_period == p),
            ));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub comparison: String,
    pub lifetime: Option<f64>,
    pub on_time: Option<f64>,
}

fn ratio(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) if b != 0.0 => Some(a / b),
        _ => None,
    }
}

/// Pooled-row ratios of `target` against every other arm.
pub fn ratios(summary: &[SummaryRow], target: &str) -> Vec<RatioRow> {
    let pooled = |arm: &str| summary.iter().find(|s| s.arm == arm && s.pk_period.is_none());
    let Some(t) = pooled(target) else {
        return Vec::new();
    };
    summary
        .iter()
        .filter(|s| s.pk_period.is_none() && s.arm != target)
        .map(|o| RatioRow {
            comparison: format!("{target} vs {}", o.arm),
            lifetime: ratio(t.lifetime_years, o.lifetime_years),
            on_time: ratio(t.on_time, o.on_time),
        })
        .collect()
}
