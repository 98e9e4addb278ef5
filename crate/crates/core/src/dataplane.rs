//! Label-switched forwarding with packet replication and root-side elimination.
//!
//! A leaf stamps each copy of a packet with a `PP` or `AP` label. Routers
//! switch on the label (see [`select_mac`]) and, depending on the flooding
//! strategy, may spawn a complementary copy toward their other parent. The
//! root keeps the first copy of every `(src, seq)` flow tuple.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::config::Flooding;
use crate::rpl::Rank;
use crate::topology::NodeId;
use crate::tsch::Asn;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Pp,
    Ap,
    None,
}

impl Label {
    pub fn complement(self) -> Label {
        match self {
            Label::Pp => Label::Ap,
            Label::Ap => Label::Pp,
            Label::None => Label::None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Pp => "PP",
            Label::Ap => "AP",
            Label::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowId {
    pub src: NodeId,
    pub seq: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    /// Run-wide index of the original packet; shared by all its copies.
    pub uid: u32,
    pub flow: FlowId,
    pub label: Label,
    pub created_at: Asn,
    pub size: u32,
    pub origin_rank: Rank,
}

/// Next-hop choice for a labeled packet given which parents are available.
///
/// `PP` prefers the preferred parent and falls back to the alternate one,
/// `AP` the other way round; anything else has no next hop.
pub fn select_mac(label: Label, pp: Option<NodeId>, ap: Option<NodeId>) -> Option<NodeId> {
    match label {
        Label::Pp => pp.or(ap),
        Label::Ap => ap.or(pp),
        Label::None => None,
    }
}

/// Next hop under a given strategy. Without replication unlabeled packets
/// simply follow the preferred parent.
pub fn next_hop(strategy: Flooding, label: Label, pp: Option<NodeId>, ap: Option<NodeId>) -> Option<NodeId> {
    match (strategy, label) {
        (Flooding::None, Label::None) => pp,
        _ => select_mac(label, pp, ap),
    }
}

/// Recently seen sequence numbers per source, oldest evicted first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowRegistry {
    window: usize,
    seen: BTreeMap<NodeId, VecDeque<u32>>,
}

impl FlowRegistry {
    pub fn new(window: usize) -> Self {
        FlowRegistry {
            window,
            seen: BTreeMap::new(),
        }
    }

    pub fn contains(&self, flow: FlowId) -> bool {
        self.seen.get(&flow.src).is_some_and(|q| q.contains(&flow.seq))
    }

    /// Records `flow`; returns whether it had been seen before.
    pub fn observe(&mut self, flow: FlowId) -> bool {
        let q = self.seen.entry(flow.src).or_default();
        if q.contains(&flow.seq) {
            return true;
        }
        if q.len() == self.window {
            q.pop_front();
        }
        q.push_back(flow.seq);
        false
    }
}

pub type Output = (Packet, Option<NodeId>);

/// Copies created at the source for one new packet.
pub fn generate(template: Packet, strategy: Flooding, pp: Option<NodeId>, ap: Option<NodeId>) -> Vec<Output> {
    if strategy == Flooding::None {
        let p = Packet {
            label: Label::None,
            ..template
        };
        return vec![(p, pp)];
    }
    let first = Packet {
        label: Label::Pp,
        ..template
    };
    match ap {
        Some(_) if pp.is_some() => {
            let second = Packet {
                label: Label::Ap,
                ..template
            };
            vec![
                (first, select_mac(Label::Pp, pp, ap)),
                (second, select_mac(Label::Ap, pp, ap)),
            ]
        }
        _ => vec![(first, select_mac(Label::Pp, pp, ap))],
    }
}

/// Outputs of a router that received `pkt` from a child. Records the flow in
/// `registry` exactly once.
pub fn forward(
    registry: &mut FlowRegistry,
    pkt: Packet,
    strategy: Flooding,
    pp: Option<NodeId>,
    ap: Option<NodeId>,
) -> Vec<Output> {
    let seen = registry.observe(pkt.flow);
    let honor = |p: Packet| (p, next_hop(strategy, p.label, pp, ap));
    let both_parents = pp.is_some() && ap.is_some();
    let replicate = |p: Packet| {
        let mut v = vec![honor(p)];
        if both_parents && p.label != Label::None {
            let copy = Packet {
                label: p.label.complement(),
                ..p
            };
            v.push(honor(copy));
        }
        v
    };
    match strategy {
        Flooding::None | Flooding::LeafCopy => vec![honor(pkt)],
        Flooding::MidFlood if seen => vec![honor(pkt)],
        Flooding::MidFloodDrop if seen => Vec::new(),
        Flooding::MidFlood | Flooding::MidFloodDrop | Flooding::Flood => replicate(pkt),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootVerdict {
    FirstDelivery { delay_ms: u64 },
    Duplicate,
}

/// Root-side elimination: first copy of each flow tuple wins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootSink {
    registry: FlowRegistry,
    timeslot_ms: u32,
    pub first_deliveries: u64,
    pub duplicates: u64,
    last_rx_asn: Option<Asn>,
}

impl RootSink {
    pub fn new(window: usize, timeslot_ms: u32) -> Self {
        RootSink {
            registry: FlowRegistry::new(window),
            timeslot_ms,
            first_deliveries: 0,
            duplicates: 0,
            last_rx_asn: None,
        }
    }

    pub fn root_receive(&mut self, pkt: &Packet, asn: Asn) -> RootVerdict {
        // one radio, one rx cell per slot
        assert!(
            self.last_rx_asn != Some(asn),
            "two receptions at the root in slot {asn}"
        );
        self.last_rx_asn = Some(asn);
        if self.registry.observe(pkt.flow) {
            self.duplicates += 1;
            RootVerdict::Duplicate
        } else {
            self.first_deliveries += 1;
            RootVerdict::FirstDelivery {
                delay_ms: (asn - pkt.created_at) * self.timeslot_ms as u64,
            }
        }
    }
}

/// Gap in slots until the next packet: `period * (1 + uniform(-var, +var))`,
/// with `u` a uniform draw in `[0, 1)`.
pub fn generation_gap_slots(period_s: f64, variance: f64, u: f64, timeslot_ms: u32) -> u64 {
    let delay_s = period_s * (1.0 + variance * (2.0 * u - 1.0));
    ((delay_s * 1000.0) / timeslot_ms as f64).round().max(1.0) as u64
}
