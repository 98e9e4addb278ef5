//! Static physical graph: nodes, permitted links and per-link quality.
//!
//! The benchmark builder arranges nodes in groups. Every node of group 1 reaches
//! the root directly, every node of group `g` reaches every node of groups
//! `g - 1` and `g + 1`, and there are no links inside a group. Node ids are
//! assigned group by group, so with four nodes per group ids `1..=4` form
//! group 1, `5..=8` group 2 and so on.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node identifier. Id 0 is always the DODAG root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u16);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    pub fn is_root(self) -> bool {
        self.0 == 0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Per-transmission success probability plus the signal level it was derived from.
///
/// The RSSI is carried as metadata only; delivery decisions use `pdr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkQuality {
    pub pdr: f64,
    pub rssi_dbm: f64,
}

impl LinkQuality {
    pub fn new(pdr: f64, rssi_dbm: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&pdr) {
            return Err(Error::LinkQuality(format!("pdr {pdr} outside [0, 1]")));
        }
        if rssi_dbm.is_nan() || rssi_dbm > 0.0 {
            return Err(Error::LinkQuality(format!("rssi {rssi_dbm} dBm must be <= 0")));
        }
        Ok(LinkQuality { pdr, rssi_dbm })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    adjacency: Vec<BTreeMap<NodeId, LinkQuality>>,
    group_size: Option<usize>,
}

impl Topology {
    /// An empty graph with nodes `0..node_count`.
    pub fn with_nodes(node_count: usize) -> Self {
        Topology {
            adjacency: vec![BTreeMap::new(); node_count],
            group_size: None,
        }
    }

    /// Builds the grouped benchmark graph: `groups * group_size` nodes plus the root.
    pub fn grouped(groups: usize, group_size: usize, quality: LinkQuality) -> Self {
        assert!(
            groups >= 1 && group_size >= 1,
            "grouped topology needs at least one node"
        );
        let mut topo = Topology::with_nodes(groups * group_size + 1);
        topo.group_size = Some(group_size);
        let member = |g: usize, k: usize| NodeId((g * group_size + k + 1) as u16);
        for k in 0..group_size {
            topo.insert(NodeId::ROOT, member(0, k), quality);
        }
        for g in 1..groups {
            for a in 0..group_size {
                for b in 0..group_size {
                    topo.insert(member(g - 1, a), member(g, b), quality);
                }
            }
        }
        topo
    }

    /// A chain `0 - 1 - 2 - ... - (len-1)`.
    pub fn line(len: usize, quality: LinkQuality) -> Self {
        let mut topo = Topology::with_nodes(len);
        for i in 1..len {
            topo.insert(NodeId(i as u16 - 1), NodeId(i as u16), quality);
        }
        topo
    }

    pub fn add_link(&mut self, a: NodeId, b: NodeId, quality: LinkQuality) -> Result<()> {
        if a == b {
            return Err(Error::SelfLink(a));
        }
        self.check(a)?;
        self.check(b)?;
        LinkQuality::new(quality.pdr, quality.rssi_dbm)?;
        self.insert(a, b, quality);
        Ok(())
    }

    fn insert(&mut self, a: NodeId, b: NodeId, quality: LinkQuality) {
        self.adjacency[a.index()].insert(b, quality);
        self.adjacency[b.index()].insert(a, quality);
    }

    fn check(&self, n: NodeId) -> Result<()> {
        if n.index() < self.adjacency.len() {
            Ok(())
        } else {
            Err(Error::UnknownNode(n))
        }
    }

    /// Nodes per group when built by [`Topology::grouped`].
    pub fn group_size(&self) -> Option<usize> {
        self.group_size
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.adjacency.len()).map(|i| NodeId(i as u16))
    }

    /// Neighbors of `n` in ascending id order.
    pub fn neighbors(&self, n: NodeId) -> Result<Vec<NodeId>> {
        self.check(n)?;
        Ok(self.adjacency[n.index()].keys().copied().collect())
    }

    pub(crate) fn neighbor_iter(&self, n: NodeId) -> impl Iterator<Item = (NodeId, LinkQuality)> + '_ {
        self.adjacency[n.index()].iter().map(|(k, v)| (*k, *v))
    }

    pub fn link(&self, a: NodeId, b: NodeId) -> Option<LinkQuality> {
        self.adjacency.get(a.index())?.get(&b).copied()
    }

    pub fn are_neighbors(&self, a: NodeId, b: NodeId) -> bool {
        self.link(a, b).is_some()
    }

    /// Every link once, as `(low, high, quality)` in ascending order.
    pub fn links(&self) -> impl Iterator<Item = (NodeId, NodeId, LinkQuality)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(i, m)| {
            let a = NodeId(i as u16);
            m.iter().filter(move |(b, _)| a < **b).map(move |(b, q)| (a, *b, *q))
        })
    }

    pub fn link_count(&self) -> usize {
        self.links().count()
    }

    /// Group index (1-based) of `n` when built by [`Topology::grouped`]; the root is group 0.
    pub fn group_of(&self, n: NodeId) -> Option<usize> {
        let size = self.group_size?;
        if n.is_root() {
            Some(0)
        } else {
            Some((n.index() - 1) / size + 1)
        }
    }

    pub fn is_connected(&self) -> bool {
        if self.adjacency.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.adjacency.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for b in self.adjacency[i].keys() {
                if !seen[b.index()] {
                    seen[b.index()] = true;
                    stack.push(b.index());
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Writes one `a b pdr rssi` line per link.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (a, b, q) in self.links() {
            writeln!(out, "{a} {b} {} {}", q.pdr, q.rssi_dbm)?;
        }
        Ok(())
    }
}
