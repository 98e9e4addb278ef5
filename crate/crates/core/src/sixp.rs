//! 6P pairwise transactions: ADD, DELETE and CLEAR of negotiated cells.
//!
//! A transaction is keyed by the unordered node pair, so at most one is in
//! flight between two neighbors. Schedules change only when the response
//! reaches the initiator, and both ends are updated together, which keeps the
//! tx/rx pairing invariant intact even when frames are lost.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::topology::NodeId;
use crate::tsch::{Asn, Cell, CellKind, CellOwner, Direction, Schedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Command {
    Add,
    Delete,
    Clear,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Add => "ADD",
            Command::Delete => "DELETE",
            Command::Clear => "CLEAR",
        }
    }
}

/// Which end transmits on the cells a transaction manages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellDirection {
    InitiatorTx,
    InitiatorRx,
}

impl CellDirection {
    /// Direction of the cells as seen from the initiator.
    pub fn at_initiator(self) -> Direction {
        match self {
            CellDirection::InitiatorTx => Direction::Tx,
            CellDirection::InitiatorRx => Direction::Rx,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MessageKind {
    Request,
    Response,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SixpMessage {
    pub txn: u64,
    pub kind: MessageKind,
    pub from: NodeId,
    pub to: NodeId,
    pub command: Command,
    pub count: u16,
    /// Proposed cells in a request, accepted cells in a response.
    pub cells: Vec<(u16, u16)>,
    pub direction: CellDirection,
    pub owner: CellOwner,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub id: u64,
    pub initiator: NodeId,
    pub peer: NodeId,
    pub command: Command,
    pub count: u16,
    pub direction: CellDirection,
    pub owner: CellOwner,
    pub started_at: Asn,
    pub deadline: Asn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    /// Response delivered to the initiator.
    Success,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub asn: Asn,
    pub initiator: NodeId,
    pub peer: NodeId,
    pub cmd: String,
    pub count: u16,
    pub cells: u16,
    pub outcome: Outcome,
}

/// A finished transaction together with the cells it changed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub txn: Transaction,
    pub outcome: Outcome,
    pub cells: Vec<(u16, u16)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairBusy;

fn pair(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Uniform sample of `k` distinct items from `pool`, in draw order.
fn sample<T: Copy>(pool: &[T], k: usize, pick: &mut impl FnMut(usize) -> usize) -> Vec<T> {
    let mut v = pool.to_vec();
    let k = k.min(v.len());
    for i in 0..k {
        let j = i + pick(v.len() - i);
        v.swap(i, j);
    }
    v.truncate(k);
    v
}

#[derive(Debug, Clone, Default)]
pub struct SixpLayer {
    next_id: u64,
    timeout_slots: u64,
    inflight: BTreeMap<(NodeId, NodeId), Transaction>,
    log: Vec<LogEntry>,
}

impl SixpLayer {
    pub fn new(timeout_slots: u64) -> Self {
        SixpLayer {
            timeout_slots,
            ..Default::default()
        }
    }

    pub fn is_busy(&self, a: NodeId, b: NodeId) -> bool {
        self.inflight.contains_key(&pair(a, b))
    }

    pub fn in_flight(&self) -> impl Iterator<Item = &Transaction> + '_ {
        self.inflight.values()
    }

    pub fn transaction(&self, a: NodeId, b: NodeId) -> Option<&Transaction> {
        self.inflight.get(&pair(a, b))
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    /// Opens a transaction and builds its request. ADD proposes up to
    /// `3 * count` cells drawn uniformly from the initiator's free slots that
    /// are not `reserved`; DELETE names `count` of the matching cells.
    #[allow(clippy::too_many_arguments)]
    pub fn request(
        &mut self,
        schedules: &[Schedule],
        reserved: &[u16],
        channels: u16,
        initiator: NodeId,
        peer: NodeId,
        command: Command,
        count: u16,
        direction: CellDirection,
        owner: CellOwner,
        asn: Asn,
        mut pick: impl FnMut(usize) -> usize,
    ) -> Result<SixpMessage, PairBusy> {
        if self.is_busy(initiator, peer) {
            return Err(PairBusy);
        }
        let own = &schedules[initiator.index()];
        let cells = match command {
            Command::Add => {
                let free: Vec<u16> = own.free_slots().filter(|s| !reserved.contains(s)).collect();
                sample(&free, 3 * count as usize, &mut pick)
                    .into_iter()
                    .map(|s| (s, pick(channels as usize) as u16))
                    .collect()
            }
            Command::Delete => {
                let held: Vec<(u16, u16)> = own
                    .cells_with(peer, direction.at_initiator(), Some(owner))
                    .map(|c| (c.slot_offset, c.channel_offset))
                    .collect();
                sample(&held, count as usize, &mut pick)
            }
            Command::Clear => Vec::new(),
        };
        let id = self.next_id;
        self.next_id += 1;
        self.inflight.insert(
            pair(initiator, peer),
            Transaction {
                id,
                initiator,
                peer,
                command,
                count,
                direction,
                owner,
                started_at: asn,
                deadline: asn + self.timeout_slots,
            },
        );
        Ok(SixpMessage {
            txn: id,
            kind: MessageKind::Request,
            from: initiator,
            to: peer,
            command,
            count,
            cells,
            direction,
            owner,
        })
    }

    /// The peer's answer to a request, or `None` if the transaction is no
    /// longer open. ADD accepts the first `count` proposals free on the
    /// peer's side.
    pub fn respond(&self, schedules: &[Schedule], reserved: &[u16], req: &SixpMessage) -> Option<SixpMessage> {
        let txn = self.inflight.get(&pair(req.from, req.to))?;
        if txn.id != req.txn || req.kind != MessageKind::Request {
            return None;
        }
        let own = &schedules[req.to.index()];
        let peer_dir = req.direction.at_initiator().flip();
        let cells = match req.command {
            Command::Add => req
                .cells
                .iter()
                .copied()
                .filter(|(s, _)| own.is_free(*s) && !reserved.contains(s))
                .take(req.count as usize)
                .collect(),
            Command::Delete => req
                .cells
                .iter()
                .copied()
                .filter(|(s, ch)| {
                    matches!(own.cell_at(*s), Some(c) if c.kind == CellKind::Negotiated
                        && c.peer == req.from && c.direction == peer_dir && c.channel_offset == *ch)
                })
                .collect(),
            Command::Clear => Vec::new(),
        };
        Some(SixpMessage {
            kind: MessageKind::Response,
            from: req.to,
            to: req.from,
            cells,
            ..req.clone()
        })
    }

    /// Applies a response delivered to the initiator. Both schedules change
    /// here and only here.
    pub fn complete(&mut self, schedules: &mut [Schedule], resp: &SixpMessage, asn: Asn) -> Option<Completion> {
        let key = pair(resp.from, resp.to);
        match self.inflight.get(&key) {
            Some(t) if t.id == resp.txn && resp.kind == MessageKind::Response && t.initiator == resp.to => {}
            _ => return None,
        }
        let txn = self.inflight.remove(&key).expect("checked above");
        let (a, b) = (txn.initiator, txn.peer);
        let dir_a = txn.direction.at_initiator();
        let mut changed = Vec::new();
        match txn.command {
            Command::Add => {
                for &(s, ch) in &resp.cells {
                    if schedules[a.index()].is_free(s) && schedules[b.index()].is_free(s) {
                        let cell = |peer, direction| Cell {
                            slot_offset: s,
                            channel_offset: ch,
                            kind: CellKind::Negotiated,
                            direction,
                            peer,
                            owner: txn.owner,
                        };
                        schedules[a.index()].add(cell(b, dir_a)).expect("slot checked free");
                        schedules[b.index()]
                            .add(cell(a, dir_a.flip()))
                            .expect("slot checked free");
                        changed.push((s, ch));
                    }
                }
            }
            Command::Delete => {
                for &(s, ch) in &resp.cells {
                    let mine = schedules[a.index()].cell_at(s).copied();
                    if matches!(mine, Some(c) if c.peer == b && c.direction == dir_a && c.kind == CellKind::Negotiated)
                    {
                        schedules[a.index()].remove(s);
                        schedules[b.index()].remove(s);
                        changed.push((s, ch));
                    }
                }
            }
            Command::Clear => {
                let removed = schedules[a.index()].clear_peer(b);
                schedules[b.index()].clear_peer(a);
                changed.extend(removed.into_iter().map(|s| (s, 0)));
            }
        }
        self.record(&txn, asn, changed.len() as u16, Outcome::Success);
        Some(Completion {
            txn,
            outcome: Outcome::Success,
            cells: changed,
        })
    }

    /// Fails every transaction past its deadline. A failed CLEAR still
    /// removes the cells on both ends.
    pub fn expire(&mut self, schedules: &mut [Schedule], asn: Asn) -> Vec<Completion> {
        let due: Vec<_> = self
            .inflight
            .iter()
            .filter(|(_, t)| t.deadline <= asn)
            .map(|(k, _)| *k)
            .collect();
        let mut out = Vec::new();
        for k in due {
            let txn = self.inflight.remove(&k).expect("key listed");
            let mut cells = Vec::new();
            if txn.command == Command::Clear {
                cells.extend(
                    schedules[txn.initiator.index()]
                        .clear_peer(txn.peer)
                        .into_iter()
                        .map(|s| (s, 0)),
                );
                schedules[txn.peer.index()].clear_peer(txn.initiator);
            }
            self.record(&txn, asn, cells.len() as u16, Outcome::Timeout);
            out.push(Completion {
                txn,
                outcome: Outcome::Timeout,
                cells,
            });
        }
        out
    }

    fn record(&mut self, txn: &Transaction, asn: Asn, cells: u16, outcome: Outcome) {
        self.log.push(LogEntry {
            asn,
            initiator: txn.initiator,
            peer: txn.peer,
            cmd: txn.command.as_str().to_string(),
            count: txn.count,
            cells,
            outcome,
        });
    }
}

/// Removes negotiated cells whose mirror is missing on the peer; returns how
/// many were purged.
pub fn purge_orphans(schedules: &mut [Schedule]) -> usize {
    let mut orphans = Vec::new();
    for s in schedules.iter() {
        for c in s.cells().filter(|c| c.kind == CellKind::Negotiated) {
            let mirrored = schedules
                .get(c.peer.index())
                .and_then(|o| o.cell_at(c.slot_offset))
                .is_some_and(|m| {
                    m.kind == CellKind::Negotiated && m.peer == s.owner() && m.direction == c.direction.flip()
                });
            if !mirrored {
                orphans.push((s.owner(), c.slot_offset));
            }
        }
    }
    for (n, slot) in &orphans {
        schedules[n.index()].remove(*slot);
    }
    orphans.len()
}

/// Cell moves owed to the preferred or alternate parent after it changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Relocation {
    pub add_to: NodeId,
    pub add_count: u16,
    pub clear: Option<NodeId>,
}

/// ADD toward `new` as many cells as were held toward `old` (at least one),
/// then CLEAR `old`.
pub fn relocate_on_parent_change(cells_toward_old: usize, old: Option<NodeId>, new: NodeId) -> Option<Relocation> {
    if old == Some(new) {
        return None;
    }
    Some(Relocation {
        add_to: new,
        add_count: cells_toward_old.max(1) as u16,
        clear: old,
    })
}
