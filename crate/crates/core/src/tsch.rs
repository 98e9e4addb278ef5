//! TSCH MAC: cells, per-node schedules, transmit queues and the shared minimal cell.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::dataplane::Packet;
use crate::error::{Error, Result};
use crate::rpl::Dio;
use crate::sixp::SixpMessage;
use crate::topology::NodeId;

/// Absolute slot number.
pub type Asn = u64;

pub const MINIMAL_SLOT: u16 = 0;
pub const MINIMAL_CHANNEL: u16 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellKind {
    MinimalShared,
    Negotiated,
    /// Installed by configuration; never negotiated, never carries traffic.
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Tx,
    Rx,
}

impl Direction {
    pub fn flip(self) -> Direction {
        match self {
            Direction::Tx => Direction::Rx,
            Direction::Rx => Direction::Tx,
        }
    }
}

/// Which scheduling function negotiated a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellOwner {
    Msf,
    Bdpc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub slot_offset: u16,
    pub channel_offset: u16,
    pub kind: CellKind,
    pub direction: Direction,
    pub peer: NodeId,
    pub owner: CellOwner,
}

/// Physical channel index used by a cell at `asn`.
pub fn physical_channel(asn: Asn, channel_offset: u16, channels: u16) -> u16 {
    ((channel_offset as u64 + asn) % channels as u64) as u16
}

/// One node's slotframe: at most one cell per slot offset. Slot 0 is the
/// shared minimal cell and is never handed out.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    owner: NodeId,
    slots: Vec<Option<Cell>>,
}

impl Schedule {
    pub fn new(owner: NodeId, slotframe_length: u16) -> Self {
        Schedule {
            owner,
            slots: vec![None; slotframe_length as usize],
        }
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn slotframe_length(&self) -> u16 {
        self.slots.len() as u16
    }

    pub fn cell_at(&self, slot_offset: u16) -> Option<&Cell> {
        self.slots.get(slot_offset as usize)?.as_ref()
    }

    pub fn is_free(&self, slot_offset: u16) -> bool {
        slot_offset != MINIMAL_SLOT && matches!(self.slots.get(slot_offset as usize), Some(None))
    }

    pub fn add(&mut self, cell: Cell) -> Result<()> {
        if !self.is_free(cell.slot_offset) {
            return Err(Error::SlotBusy {
                node: self.owner,
                slot: cell.slot_offset,
            });
        }
        self.slots[cell.slot_offset as usize] = Some(cell);
        Ok(())
    }

    pub fn remove(&mut self, slot_offset: u16) -> Option<Cell> {
        self.slots.get_mut(slot_offset as usize)?.take()
    }

    pub fn cells(&self) -> impl Iterator<Item = &Cell> + '_ {
        self.slots.iter().flatten()
    }

    pub fn free_slots(&self) -> impl Iterator<Item = u16> + '_ {
        (1..self.slots.len() as u16).filter(|s| self.is_free(*s))
    }

    pub fn cells_with(
        &self,
        peer: NodeId,
        direction: Direction,
        owner: Option<CellOwner>,
    ) -> impl Iterator<Item = &Cell> + '_ {
        self.cells().filter(move |c| {
            c.kind == CellKind::Negotiated
                && c.peer == peer
                && c.direction == direction
                && owner.is_none_or(|o| c.owner == o)
        })
    }

    pub fn count_with(&self, peer: NodeId, direction: Direction, owner: Option<CellOwner>) -> usize {
        self.cells_with(peer, direction, owner).count()
    }

    pub fn has_tx_toward(&self, peer: NodeId) -> bool {
        self.cells_with(peer, Direction::Tx, None).next().is_some()
    }

    /// Removes every negotiated cell shared with `peer`; returns the removed slots.
    pub fn clear_peer(&mut self, peer: NodeId) -> Vec<u16> {
        let mut removed = Vec::new();
        for slot in self.slots.iter_mut() {
            if matches!(slot, Some(c) if c.kind == CellKind::Negotiated && c.peer == peer) {
                removed.push(slot.take().unwrap().slot_offset);
            }
        }
        removed
    }

    pub fn negotiated_count(&self) -> usize {
        self.cells().filter(|c| c.kind == CellKind::Negotiated).count()
    }
}

/// Checks that every negotiated cell has its mirror on the peer's schedule.
pub fn check_pairing(schedules: &[Schedule]) -> std::result::Result<(), String> {
    for s in schedules {
        for c in s.cells().filter(|c| c.kind == CellKind::Negotiated) {
            let Some(other) = schedules.get(c.peer.index()) else {
                return Err(format!("node {} has a cell toward unknown node {}", s.owner, c.peer));
            };
            match other.cell_at(c.slot_offset) {
                Some(m)
                    if m.kind == CellKind::Negotiated
                        && m.peer == s.owner
                        && m.direction == c.direction.flip()
                        && m.channel_offset == c.channel_offset => {}
                _ => {
                    return Err(format!(
                        "cell {:?} {}->{} at slot {} has no mirror",
                        c.direction, s.owner, c.peer, c.slot_offset
                    ))
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    Data(Packet),
    Sixp(SixpMessage),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueuedFrame {
    pub frame: Frame,
    pub dest: NodeId,
    pub retries_left: u8,
    /// The peer already holds this frame; only the ACK went missing.
    pub delivered: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnqueueError {
    QueueFull,
    NoDestination,
}

/// FIFO transmit queue. 6P frames ride in a separate control lane that is
/// served before data and does not count against the data capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct TxQueue {
    control: VecDeque<QueuedFrame>,
    data: VecDeque<QueuedFrame>,
    capacity: usize,
}

/// Position of a frame inside a [`TxQueue`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lane {
    Control(usize),
    Data(usize),
}

impl TxQueue {
    pub fn new(capacity: usize) -> Self {
        TxQueue {
            control: VecDeque::new(),
            data: VecDeque::new(),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty() && self.control.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn enqueue(
        &mut self,
        pkt: Packet,
        dest: Option<NodeId>,
        max_retries: u8,
    ) -> std::result::Result<(), EnqueueError> {
        let dest = dest.ok_or(EnqueueError::NoDestination)?;
        if self.data.len() >= self.capacity {
            return Err(EnqueueError::QueueFull);
        }
        self.data.push_back(QueuedFrame {
            frame: Frame::Data(pkt),
            dest,
            retries_left: max_retries,
            delivered: false,
        });
        Ok(())
    }

    pub fn enqueue_control(&mut self, msg: SixpMessage, dest: NodeId, max_retries: u8) {
        self.control.push_back(QueuedFrame {
            frame: Frame::Sixp(msg),
            dest,
            retries_left: max_retries,
            delivered: false,
        });
    }

    /// The first frame for `peer`, control lane first.
    pub fn head_for(&self, peer: NodeId) -> Option<Lane> {
        if let Some(i) = self.control.iter().position(|f| f.dest == peer) {
            return Some(Lane::Control(i));
        }
        self.data.iter().position(|f| f.dest == peer).map(Lane::Data)
    }

    pub fn get(&self, lane: Lane) -> &QueuedFrame {
        match lane {
            Lane::Control(i) => &self.control[i],
            Lane::Data(i) => &self.data[i],
        }
    }

    pub fn get_mut(&mut self, lane: Lane) -> &mut QueuedFrame {
        match lane {
            Lane::Control(i) => &mut self.control[i],
            Lane::Data(i) => &mut self.data[i],
        }
    }

    pub fn take(&mut self, lane: Lane) -> QueuedFrame {
        match lane {
            Lane::Control(i) => self.control.remove(i),
            Lane::Data(i) => self.data.remove(i),
        }
        .expect("lane index valid")
    }

    pub fn data(&self) -> impl Iterator<Item = &QueuedFrame> + '_ {
        self.data.iter()
    }

    pub fn data_mut(&mut self) -> impl Iterator<Item = &mut QueuedFrame> + '_ {
        self.data.iter_mut()
    }

    /// Removes control frames matching `pred`.
    pub fn drop_control<F: FnMut(&QueuedFrame) -> bool>(&mut self, mut pred: F) {
        self.control.retain(|f| !pred(f));
    }

    /// Keeps the data frames for which `keep` returns true; `keep` may also
    /// rewrite them.
    pub fn retain_data<F: FnMut(&mut QueuedFrame) -> bool>(&mut self, keep: F) {
        self.data.retain_mut(keep);
    }

    pub fn drain_data(&mut self) -> impl Iterator<Item = QueuedFrame> + '_ {
        self.data.drain(..)
    }
}

/// Frames waiting for the shared minimal cell.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MinimalQueue {
    /// Unicast 6P frames; acknowledged and retried like on a dedicated cell.
    pub sixp: VecDeque<QueuedFrame>,
    pub dio: Option<Dio>,
    /// The node has not advertised for long enough that its neighbors risk
    /// forgetting it.
    pub dio_overdue: bool,
}

impl MinimalQueue {
    pub fn contends(&self) -> bool {
        !self.sixp.is_empty() || self.dio.is_some()
    }

    /// Contention tier: overdue DIOs, then 6P traffic, then regular DIOs.
    pub fn tier(&self) -> Option<u8> {
        match (self.dio.is_some(), self.dio_overdue, !self.sixp.is_empty()) {
            (true, true, _) => Some(0),
            (_, _, true) => Some(1),
            (true, false, false) => Some(2),
            (false, _, false) => None,
        }
    }

    /// Whether the winner of the cell sends its DIO rather than a 6P frame.
    pub fn sends_dio(&self) -> bool {
        self.tier() != Some(1)
    }
}

/// Picks the single minimal-cell transmitter for this slotframe. Only nodes of
/// the most urgent tier contend; `pick(n)` returns a uniform index in `0..n`.
pub fn minimal_cell_winner(queues: &[MinimalQueue], mut pick: impl FnMut(usize) -> usize) -> Option<NodeId> {
    let best = queues.iter().filter_map(|q| q.tier()).min()?;
    let contenders: Vec<usize> = queues
        .iter()
        .enumerate()
        .filter(|(_, q)| q.tier() == Some(best))
        .map(|(i, _)| i)
        .collect();
    Some(NodeId(contenders[pick(contenders.len())] as u16))
}

/// Result of one unicast attempt: the data frame reaches the receiver with
/// probability `pdr`, the ACK comes back with probability `pdr` again.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Attempt {
    pub data_ok: bool,
    pub ack_ok: bool,
}

pub fn unicast_attempt(pdr: f64, mut draw: impl FnMut() -> f64) -> Attempt {
    let data_ok = pdr >= 1.0 || draw() < pdr;
    let ack_ok = data_ok && (pdr >= 1.0 || draw() < pdr);
    Attempt { data_ok, ack_ok }
}

/// Neighbors that hear a broadcast, each independently with its link PDR.
pub fn broadcast_receivers(
    neighbors: impl IntoIterator<Item = (NodeId, f64)>,
    mut draw: impl FnMut() -> f64,
) -> Vec<NodeId> {
    neighbors
        .into_iter()
        .filter(|(_, pdr)| *pdr >= 1.0 || draw() < *pdr)
        .map(|(n, _)| n)
        .collect()
}

/// What happens to a frame after an unsuccessful attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetryVerdict {
    Retry,
    Drop,
}

pub fn after_failure(frame: &mut QueuedFrame) -> RetryVerdict {
    if frame.retries_left == 0 {
        RetryVerdict::Drop
    } else {
        frame.retries_left -= 1;
        RetryVerdict::Retry
    }
}
