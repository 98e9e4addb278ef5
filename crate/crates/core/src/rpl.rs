//! DODAG maintenance: rank, DIO processing, preferred and alternate parents.
//!
//! DIOs are extended with the sender's preferred parent and parent-set ids so
//! that a child can evaluate the common-ancestor rules for its alternate
//! parent:
//!
//! * strict: `PP(AP) == PP(PP)`
//! * medium: `PP(AP)` is in `PS(PP)`
//! * soft: `PS(AP)` and `PS(PP)` intersect

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::ApMode;
use crate::topology::NodeId;
use crate::tsch::Asn;

pub type Rank = u32;

/// Maximum number of parent ids advertised in a DIO.
pub const DIO_PARENT_SET_CAP: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dio {
    pub sender: NodeId,
    pub rank: Rank,
    pub sender_pp: Option<NodeId>,
    pub sender_parent_set: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborEntry {
    pub rank: Rank,
    pub pp: Option<NodeId>,
    pub parent_set: Vec<NodeId>,
    pub heard_at: Asn,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NeighborTable {
    entries: BTreeMap<NodeId, NeighborEntry>,
}

impl NeighborTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, n: NodeId, e: NeighborEntry) {
        self.entries.insert(n, e);
    }

    pub fn get(&self, n: NodeId) -> Option<&NeighborEntry> {
        self.entries.get(&n)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &NeighborEntry)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Drops entries not refreshed since `oldest`; returns how many were removed.
    pub fn expire(&mut self, oldest: Asn) -> usize {
        let before = self.entries.len();
        self.entries.retain(|_, e| e.heard_at >= oldest);
        before - self.entries.len()
    }

    fn record(&mut self, dio: &Dio, asn: Asn) {
        self.entries.insert(
            dio.sender,
            NeighborEntry {
                rank: dio.rank,
                pp: dio.sender_pp,
                parent_set: dio.sender_parent_set.clone(),
                heard_at: asn,
            },
        );
    }
}

/// `parent_rank + round(step / pdr_estimate)`.
pub fn compute_rank(parent_rank: Rank, pdr_estimate: f64, step: u32) -> Rank {
    let inc = (step as f64 / pdr_estimate).round() as Rank;
    parent_rank.saturating_add(inc)
}

/// Lowest-rank neighbor below `own_rank` (`None` = not joined), ties by lowest id.
pub fn select_pp(nt: &NeighborTable, own_rank: Option<Rank>) -> Option<NodeId> {
    nt.iter()
        .filter(|(_, e)| own_rank.is_none_or(|r| e.rank < r))
        .min_by_key(|(n, e)| (e.rank, *n))
        .map(|(n, _)| n)
}

/// Whether `candidate` may serve as alternate parent next to `pp` under `mode`.
/// Unknown preferred-parent or parent-set data never qualifies.
pub fn ap_predicate(nt: &NeighborTable, pp: NodeId, candidate: NodeId, mode: ApMode) -> bool {
    let (Some(p), Some(c)) = (nt.get(pp), nt.get(candidate)) else {
        return false;
    };
    match mode {
        ApMode::Strict => matches!((p.pp, c.pp), (Some(a), Some(b)) if a == b),
        ApMode::Medium => c.pp.is_some_and(|cpp| p.parent_set.contains(&cpp)),
        ApMode::Soft => c.parent_set.iter().any(|x| p.parent_set.contains(x)),
    }
}

/// Neighbors other than `pp`, ranked strictly below `own_rank`, that satisfy
/// the `mode` predicate; ordered by (rank, id).
pub fn ap_candidates(nt: &NeighborTable, pp: NodeId, own_rank: Rank, mode: ApMode) -> Vec<NodeId> {
    let mut v: Vec<(Rank, NodeId)> = nt
        .iter()
        .filter(|(n, e)| *n != pp && e.rank < own_rank)
        .filter(|(n, _)| ap_predicate(nt, pp, *n, mode))
        .map(|(n, e)| (e.rank, n))
        .collect();
    v.sort();
    v.into_iter().map(|(_, n)| n).collect()
}

pub fn select_ap(nt: &NeighborTable, pp: NodeId, own_rank: Rank, mode: ApMode) -> Option<NodeId> {
    ap_candidates(nt, pp, own_rank, mode).into_iter().next()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParentState {
    pub pp: Option<NodeId>,
    pub ap: Option<NodeId>,
    pub own_rank: Option<Rank>,
}

/// Parent transitions produced by one RPL update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParentChanges {
    pub pp: Option<(Option<NodeId>, Option<NodeId>)>,
    pub ap: Option<(Option<NodeId>, Option<NodeId>)>,
    pub rank_changed: bool,
}

impl ParentChanges {
    pub fn is_empty(&self) -> bool {
        self.pp.is_none() && self.ap.is_none() && !self.rank_changed
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RplParams {
    pub rank_min: Rank,
    pub rank_step: u32,
    pub pdr_estimate: f64,
    pub ap_mode: ApMode,
    pub ap_enabled: bool,
    pub dio_period: u64,
    pub dio_jitter: u64,
}

impl RplParams {
    pub fn hysteresis(&self) -> Rank {
        self.rank_step / 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RplNode {
    pub id: NodeId,
    pub neighbors: NeighborTable,
    pub parents: ParentState,
    next_dio_frame: Option<u64>,
    ever_joined: bool,
}

impl RplNode {
    pub fn new(id: NodeId, params: &RplParams) -> Self {
        let mut node = RplNode {
            id,
            neighbors: NeighborTable::new(),
            parents: ParentState::default(),
            next_dio_frame: None,
            ever_joined: false,
        };
        if id.is_root() {
            node.parents.own_rank = Some(params.rank_min);
            node.next_dio_frame = Some(0);
            node.ever_joined = true;
        }
        node
    }

    pub fn is_root(&self) -> bool {
        self.id.is_root()
    }

    pub fn is_joined(&self) -> bool {
        self.parents.own_rank.is_some()
    }

    /// Own parent set: neighbors ranked strictly below us, lowest rank first,
    /// capped for advertisement with the preferred parent always kept.
    pub fn parent_set(&self) -> Vec<NodeId> {
        let Some(own) = self.parents.own_rank else {
            return Vec::new();
        };
        let mut v: Vec<(Rank, NodeId)> = self
            .neighbors
            .iter()
            .filter(|(_, e)| e.rank < own)
            .map(|(n, e)| (e.rank, n))
            .collect();
        v.sort();
        let mut ids: Vec<NodeId> = v.into_iter().map(|(_, n)| n).collect();
        if ids.len() > DIO_PARENT_SET_CAP {
            ids.truncate(DIO_PARENT_SET_CAP);
            if let Some(pp) = self.parents.pp {
                if !ids.contains(&pp) {
                    ids[DIO_PARENT_SET_CAP - 1] = pp;
                }
            }
        }
        ids
    }

    pub fn make_dio(&self) -> Option<Dio> {
        let rank = self.parents.own_rank?;
        Some(Dio {
            sender: self.id,
            rank,
            sender_pp: self.parents.pp,
            sender_parent_set: self.parent_set(),
        })
    }

    /// Emits a DIO when the per-node timer fires at `frame`. `jitter` is a
    /// uniform draw in `[0, 1)` used to pick the next period in
    /// `dio_period ± dio_jitter` slotframes.
    pub fn emit_dio(&mut self, frame: u64, params: &RplParams, jitter: f64) -> Option<Dio> {
        let due = self.next_dio_frame?;
        if frame < due {
            return None;
        }
        let dio = self.make_dio()?;
        let span = 2 * params.dio_jitter + 1;
        let offset = ((jitter * span as f64) as u64).min(span - 1);
        self.next_dio_frame = Some(frame + params.dio_period - params.dio_jitter + offset);
        Some(dio)
    }

    pub fn process_dio(&mut self, dio: &Dio, asn: Asn, params: &RplParams) -> ParentChanges {
        if self.is_root() {
            return ParentChanges::default();
        }
        self.neighbors.record(dio, asn);
        self.reselect(params)
    }

    pub fn expire(&mut self, oldest: Asn, params: &RplParams) -> ParentChanges {
        if self.is_root() || self.neighbors.expire(oldest) == 0 {
            return ParentChanges::default();
        }
        self.reselect(params)
    }

    /// Re-runs preferred and alternate parent selection against the current table.
    pub fn reselect(&mut self, params: &RplParams) -> ParentChanges {
        let mut changes = ParentChanges::default();
        if self.is_root() {
            return changes;
        }
        let before = self.parents;
        // Candidates advertising us as their preferred parent would form a loop.
        let mut usable = self.neighbors.clone();
        usable.entries.retain(|_, e| e.pp != Some(self.id));

        let current = self.parents.pp.filter(|p| usable.get(*p).is_some());
        let best = select_pp(&usable, None);
        let pp = match (current, best) {
            (Some(cur), Some(b)) if b != cur => {
                let cur_rank = usable.get(cur).unwrap().rank;
                let b_rank = usable.get(b).unwrap().rank;
                if b_rank + params.hysteresis() <= cur_rank {
                    Some(b)
                } else {
                    Some(cur)
                }
            }
            (Some(cur), _) => Some(cur),
            (None, b) => b,
        };
        self.parents.pp = pp;
        self.parents.own_rank =
            pp.map(|p| compute_rank(usable.get(p).unwrap().rank, params.pdr_estimate, params.rank_step));
        if pp.is_some() {
            self.ever_joined = true;
            // a freshly joined node advertises at the next housekeeping round
            self.next_dio_frame.get_or_insert(0);
        } else {
            self.next_dio_frame = None;
        }

        self.parents.ap = match (pp, self.parents.own_rank) {
            (Some(p), Some(r)) if params.ap_enabled => select_ap(&usable, p, r, params.ap_mode),
            _ => None,
        };
        if let (Some(p), Some(a)) = (self.parents.pp, self.parents.ap) {
            debug_assert!(p != a);
            debug_assert!(ap_predicate(&usable, p, a, params.ap_mode));
        }

        if before.pp != self.parents.pp {
            changes.pp = Some((before.pp, self.parents.pp));
        }
        if before.ap != self.parents.ap {
            changes.ap = Some((before.ap, self.parents.ap));
        }
        changes.rank_changed = before.own_rank != self.parents.own_rank;
        changes
    }

    pub fn ever_joined(&self) -> bool {
        self.ever_joined
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> RplParams {
        RplParams {
            rank_min: 256,
            rank_step: 256,
            pdr_estimate: 0.75,
            ap_mode: ApMode::Strict,
            ap_enabled: true,
            dio_period: 4,
            dio_jitter: 1,
        }
    }

    fn entry(rank: Rank, pp: Option<u16>, ps: &[u16]) -> NeighborEntry {
        NeighborEntry {
            rank,
            pp: pp.map(NodeId),
            parent_set: ps.iter().map(|&i| NodeId(i)).collect(),
            heard_at: 0,
        }
    }

    #[test]
    fn rank_arithmetic() {
        assert_eq!(compute_rank(256, 1.0, 256), 512);
        assert_eq!(compute_rank(256, 0.75, 256), 597);
        let root = RplNode::new(NodeId::ROOT, &params());
        assert_eq!(root.parents.own_rank, Some(256));
    }

    #[test]
    fn pp_is_lowest_rank_then_lowest_id() {
        let mut nt = NeighborTable::new();
        nt.insert(NodeId(5), entry(256, None, &[]));
        nt.insert(NodeId(6), entry(300, None, &[]));
        assert_eq!(select_pp(&nt, None), Some(NodeId(5)));
        let mut nt = NeighborTable::new();
        nt.insert(NodeId(7), entry(300, None, &[]));
        nt.insert(NodeId(6), entry(300, None, &[]));
        assert_eq!(select_pp(&nt, None), Some(NodeId(6)));
        assert_eq!(select_pp(&nt, Some(300)), None);
    }

    #[test]
    fn strict_ap_follows_common_grandparent() {
        // S hears A and B; PP(A) = PP(B) = R
        let (r, a, b) = (1u16, 2u16, 3u16);
        let mut nt = NeighborTable::new();
        nt.insert(NodeId(a), entry(597, Some(r), &[r]));
        nt.insert(NodeId(b), entry(597, Some(r), &[r]));
        assert_eq!(select_ap(&nt, NodeId(a), 938, ApMode::Strict), Some(NodeId(b)));
    }

    #[test]
    fn star_has_no_ap() {
        let mut nt = NeighborTable::new();
        nt.insert(NodeId(0), entry(256, None, &[]));
        assert_eq!(select_ap(&nt, NodeId(0), 597, ApMode::Soft), None);
    }

    #[test]
    fn unknown_ancestry_never_qualifies() {
        let mut nt = NeighborTable::new();
        nt.insert(NodeId(2), entry(597, Some(1), &[1]));
        nt.insert(NodeId(3), entry(597, None, &[]));
        for m in [ApMode::Strict, ApMode::Medium, ApMode::Soft] {
            assert!(!ap_predicate(&nt, NodeId(2), NodeId(3), m));
        }
    }

    #[test]
    fn ap_must_rank_below_self() {
        let mut nt = NeighborTable::new();
        nt.insert(NodeId(2), entry(597, Some(1), &[1]));
        nt.insert(NodeId(3), entry(1000, Some(1), &[1]));
        assert_eq!(select_ap(&nt, NodeId(2), 938, ApMode::Strict), None);
    }

    #[test]
    fn dio_carries_pp_and_parent_set() {
        let p = params();
        let mut root = RplNode::new(NodeId::ROOT, &p);
        let dio = root.emit_dio(0, &p, 0.5).unwrap();
        assert_eq!(
            dio,
            Dio {
                sender: NodeId::ROOT,
                rank: 256,
                sender_pp: None,
                sender_parent_set: vec![]
            }
        );

        let mut n = RplNode::new(NodeId(1), &p);
        assert_eq!(n.emit_dio(0, &p, 0.5), None);
        let ch = n.process_dio(&dio, 10, &p);
        assert_eq!(ch.pp, Some((None, Some(NodeId::ROOT))));
        assert_eq!(n.parents.own_rank, Some(597));
        let d = n.emit_dio(0, &p, 0.0).unwrap();
        assert_eq!(d.sender_pp, Some(NodeId::ROOT));
        assert_eq!(d.sender_parent_set, vec![NodeId::ROOT]);
    }

    #[test]
    fn dio_count_over_100_frames_within_jitter_bounds() {
        let p = params();
        for (i, jitter) in [0.0, 0.999, 0.5].into_iter().enumerate() {
            let mut root = RplNode::new(NodeId::ROOT, &p);
            let count = (0..100).filter(|f| root.emit_dio(*f, &p, jitter).is_some()).count();
            let expected = [34, 20, 25][i];
            assert_eq!(count, expected);
        }
    }

    #[test]
    fn hysteresis_blocks_small_improvements() {
        let p = params();
        let mut n = RplNode::new(NodeId(9), &p);
        let d = |s: u16, rank| Dio {
            sender: NodeId(s),
            rank,
            sender_pp: Some(NodeId(0)),
            sender_parent_set: vec![NodeId(0)],
        };
        n.process_dio(&d(5, 700), 0, &p);
        assert_eq!(n.parents.pp, Some(NodeId(5)));
        n.process_dio(&d(6, 650), 1, &p);
        assert_eq!(n.parents.pp, Some(NodeId(5)));
        let ch = n.process_dio(&d(7, 500), 2, &p);
        assert_eq!(n.parents.pp, Some(NodeId(7)));
        assert_eq!(ch.pp, Some((Some(NodeId(5)), Some(NodeId(7)))));
        assert!(n.parents.own_rank.unwrap() > 500);
    }

    #[test]
    fn parent_set_cap_keeps_pp() {
        let p = params();
        let mut n = RplNode::new(NodeId(50), &p);
        for i in 1..=12u16 {
            let dio = Dio {
                sender: NodeId(i),
                rank: 600 + i as u32,
                sender_pp: Some(NodeId(0)),
                sender_parent_set: vec![NodeId(0)],
            };
            n.process_dio(&dio, 0, &p);
        }
        let ps = n.parent_set();
        assert_eq!(ps.len(), DIO_PARENT_SET_CAP);
        assert!(ps.contains(&n.parents.pp.unwrap()));
    }
}
