//! The slot loop: housekeeping at every slotframe boundary, the shared
//! minimal cell in slot 0, negotiated cells everywhere else, and packet
//! generation in between.

use std::collections::BTreeMap;

use crate::bdpc::{self, BdpcAction, BdpcParams, BdpcState};
use crate::config::{RunConfig, SfKind};
use crate::dataplane::{self, FlowId, FlowRegistry, Label, Packet, RootSink, RootVerdict};
use crate::energy::{self, ChargeCounters, SlotOutcome};
use crate::error::{Error, Result};
use crate::metrics::{LossCause, NodeReport, PacketLedger, RunReport};
use crate::msf::{MsfAction, MsfState};
use crate::rng::{Rngs, Stream};
use crate::rpl::{ap_predicate, ParentChanges, ParentState, RplNode, RplParams};
use crate::sixp::{
    self, CellDirection, Command, Completion, LogEntry, MessageKind, Outcome, SixpLayer, SixpMessage, Transaction,
};
use crate::topology::{NodeId, Topology};
use crate::tsch::{
    self, after_failure, minimal_cell_winner, unicast_attempt, Asn, Cell, CellKind, CellOwner, Direction, EnqueueError,
    Frame, MinimalQueue, QueuedFrame, RetryVerdict, Schedule, TxQueue,
};

#[derive(Debug, Clone)]
struct Node {
    rpl: RplNode,
    queue: TxQueue,
    registry: FlowRegistry,
    msf: MsfState,
    bdpc: BdpcState,
    energy: ChargeCounters,
    next_gen: Option<Asn>,
    seq: u32,
    /// Cells to request from a parent that has none yet.
    owed: BTreeMap<NodeId, u16>,
    /// Former parents still holding cells, with the slot they were dropped.
    retired: BTreeMap<NodeId, Asn>,
    /// Slotframe of the last DIO this node put on the air.
    last_dio: u64,
}

/// One simulation run in progress.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: RunConfig,
    topo: Topology,
    rngs: Rngs,
    rpl: RplParams,
    bdpc: BdpcParams,
    nodes: Vec<Node>,
    minimal: Vec<MinimalQueue>,
    schedules: Vec<Schedule>,
    sixp: SixpLayer,
    sink: RootSink,
    ledger: PacketLedger,
    report: RunReport,
    asn: Asn,
    charged: Vec<bool>,
}

impl Simulator {
    pub fn new(cfg: &RunConfig, topo: &Topology) -> Result<Self> {
        cfg.validate()?;
        let n = topo.node_count();
        if n < 2 {
            return Err(Error::TopologyMismatch("need a root and at least one node".into()));
        }
        if n > u16::MAX as usize {
            return Err(Error::TopologyMismatch(format!("{n} nodes exceed the id space")));
        }
        if topo.group_size().is_some() && n != cfg.groups * cfg.group_size + 1 {
            return Err(Error::TopologyMismatch(format!(
                "{} nodes but groups * group_size + 1 = {}",
                n,
                cfg.groups * cfg.group_size + 1
            )));
        }
        for &(node, _) in &cfg.static_listen {
            if node as usize >= n {
                return Err(Error::TopologyMismatch(format!(
                    "static_listen node {node} does not exist"
                )));
            }
        }
        let rpl = RplParams {
            rank_min: cfg.rank_min,
            rank_step: cfg.rank_step,
            pdr_estimate: cfg.pdr_link,
            ap_mode: cfg.ap_mode,
            ap_enabled: cfg.flooding.uses_alternate_parent(),
            dio_period: cfg.dio_period_slotframes,
            dio_jitter: cfg.dio_jitter_slotframes,
        };
        let l = cfg.slotframe_length as u64;
        let bdpc = BdpcParams {
            sf_max: cfg.sf_max,
            sf_min: cfg.sf_min,
            min_verdicts: cfg.bdpc_min_verdicts,
            add_cells: cfg.prehop_add_cells,
            cooldown_slots: l,
        };
        let mut rngs = Rngs::new(cfg.seed);
        let first_gen = cfg.warmup_slotframes * l;
        let nodes = topo
            .nodes()
            .map(|id| Node {
                rpl: RplNode::new(id, &rpl),
                queue: TxQueue::new(cfg.queue_size),
                registry: FlowRegistry::new(cfg.flow_window),
                msf: MsfState::new(),
                bdpc: BdpcState::new(),
                energy: ChargeCounters::default(),
                next_gen: (!id.is_root()).then(|| {
                    let u = rngs.next_random(Stream::Jitter);
                    first_gen + dataplane::generation_gap_slots(cfg.pk_period_s, cfg.pk_variance, u, cfg.timeslot_ms)
                }),
                seq: 0,
                owed: BTreeMap::new(),
                retired: BTreeMap::new(),
                last_dio: 0,
            })
            .collect();
        let mut schedules: Vec<Schedule> = topo.nodes().map(|id| Schedule::new(id, cfg.slotframe_length)).collect();
        for &(node, slot) in &cfg.static_listen {
            schedules[node as usize].add(Cell {
                slot_offset: slot,
                channel_offset: 0,
                kind: CellKind::Static,
                direction: Direction::Rx,
                peer: NodeId(node),
                owner: CellOwner::Msf,
            })?;
        }
        Ok(Simulator {
            cfg: cfg.clone(),
            topo: topo.clone(),
            rngs,
            rpl,
            bdpc,
            nodes,
            minimal: vec![MinimalQueue::default(); n],
            schedules,
            sixp: SixpLayer::new(cfg.sixp_timeout_slotframes * l),
            sink: RootSink::new(cfg.flow_window, cfg.timeslot_ms),
            ledger: PacketLedger::new(),
            report: RunReport::new(cfg.seed, cfg.pk_period_s, cfg.max_delay_ms()),
            asn: 0,
            charged: vec![false; n],
        })
    }

    pub fn asn(&self) -> Asn {
        self.asn
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn schedules(&self) -> &[Schedule] {
        &self.schedules
    }

    pub fn parents(&self, n: NodeId) -> ParentState {
        self.nodes[n.index()].rpl.parents
    }

    pub fn rpl_node(&self, n: NodeId) -> &RplNode {
        &self.nodes[n.index()].rpl
    }

    pub fn queue(&self, n: NodeId) -> &TxQueue {
        &self.nodes[n.index()].queue
    }

    pub fn energy(&self, n: NodeId) -> &ChargeCounters {
        &self.nodes[n.index()].energy
    }

    pub fn ledger(&self) -> &PacketLedger {
        &self.ledger
    }

    pub fn sixp_log(&self) -> &[LogEntry] {
        self.sixp.log()
    }

    /// 6P transactions currently open.
    pub fn transactions(&self) -> impl Iterator<Item = &Transaction> + '_ {
        self.sixp.in_flight()
    }

    /// Counters accumulated so far; per-node and loss fields are filled by [`Simulator::finish`].
    pub fn report(&self) -> &RunReport {
        &self.report
    }

    pub fn total_slots(&self) -> Asn {
        self.cfg.total_slots()
    }

    /// Runs until the configured horizon.
    pub fn run_to_end(&mut self) {
        while self.asn < self.total_slots() {
            self.step();
        }
    }

    pub fn run_frames(&mut self, frames: u64) {
        let end = (self.asn + frames * self.l()).min(self.total_slots());
        while self.asn < end {
            self.step();
        }
    }

    fn l(&self) -> u64 {
        self.cfg.slotframe_length as u64
    }

    /// Advances one timeslot.
    pub fn step(&mut self) {
        let asn = self.asn;
        let slot = (asn % self.l()) as u16;
        if slot == 0 {
            self.housekeeping(asn / self.l());
        }
        self.generate_due(asn);
        if slot == 0 {
            self.minimal_cell(asn);
        } else {
            self.negotiated_cells(asn, slot);
        }
        self.asn += 1;
    }

    /// Structural invariants that must hold between slots.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        tsch::check_pairing(&self.schedules)?;
        for node in &self.nodes {
            let id = node.rpl.id;
            if node.queue.len() > node.queue.capacity() {
                return Err(format!("node {id} queue over capacity"));
            }
            let p = node.rpl.parents;
            if let Some(pp) = p.pp {
                let prank = node
                    .rpl
                    .neighbors
                    .get(pp)
                    .map(|e| e.rank)
                    .ok_or(format!("node {id} lost pp entry"))?;
                if p.own_rank.is_none_or(|r| r <= prank) {
                    return Err(format!("node {id} rank not above its preferred parent"));
                }
            }
            if let (Some(pp), Some(ap)) = (p.pp, p.ap) {
                if pp == ap || !ap_predicate(&node.rpl.neighbors, pp, ap, self.cfg.ap_mode) {
                    return Err(format!("node {id} holds an invalid alternate parent"));
                }
            }
        }
        Ok(())
    }

    /// Closes the run: fills sleep slots and per-node energy, and the loss summary.
    pub fn finish(mut self) -> RunReport {
        let elapsed = self.asn;
        let duration_s = elapsed as f64 * self.cfg.timeslot_ms as f64 / 1000.0;
        let table = self.cfg.charges;
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter_mut().enumerate() {
            node.energy.fill_sleep(elapsed);
            let total_c = node.energy.total_uc(&table) * 1e-6;
            let id = NodeId(i as u16);
            let s = &self.schedules[i];
            nodes.push(NodeReport {
                node: id,
                slots_tx: node.energy.slots_tx(),
                slots_rx: node.energy.slots_rx(),
                slots_idle: node.energy.slots_idle(),
                slots_sleep: node.energy.slots_sleep(),
                total_c,
                lifetime_years: energy::lifetime_years(total_c, duration_s, table.battery_c),
                rank: node.rpl.parents.own_rank,
                pp: node.rpl.parents.pp,
                ap: node.rpl.parents.ap,
                tx_cells: s
                    .cells()
                    .filter(|c| c.kind == CellKind::Negotiated && c.direction == Direction::Tx)
                    .count(),
                rx_cells: s
                    .cells()
                    .filter(|c| c.kind == CellKind::Negotiated && c.direction == Direction::Rx)
                    .count(),
            });
        }
        self.report.lifetime_years =
            energy::network_lifetime(nodes.iter().filter(|n| !n.node.is_root()).map(|n| n.lifetime_years));
        self.report.nodes = nodes;
        self.report.losses = self.ledger.summary();
        debug_assert_eq!(self.report.n_rx, self.sink.first_deliveries);
        debug_assert_eq!(self.report.duplicates, self.sink.duplicates);
        self.report
    }

    // ---- housekeeping ----

    fn housekeeping(&mut self, frame: u64) {
        let asn = frame * self.l();
        for c in self.sixp.expire(&mut self.schedules, asn) {
            self.on_completion(c);
        }
        let horizon = self.cfg.neighbor_staleness_slotframes * self.l();
        if asn > horizon {
            for i in 0..self.nodes.len() {
                let ch = self.nodes[i].rpl.expire(asn - horizon, &self.rpl);
                self.on_parent_changes(NodeId(i as u16), ch);
            }
        }
        let overdue = (self.cfg.neighbor_staleness_slotframes / 8).max(1);
        for i in 0..self.nodes.len() {
            let u = self.rngs.next_random(Stream::Backoff);
            if let Some(dio) = self.nodes[i].rpl.emit_dio(frame, &self.rpl, u) {
                self.minimal[i].dio = Some(dio);
            }
            self.minimal[i].dio_overdue = frame >= self.nodes[i].last_dio + overdue;
        }
        for i in 1..self.nodes.len() {
            self.repair(NodeId(i as u16));
        }
        self.report.sixp.orphans_purged += sixp::purge_orphans(&mut self.schedules) as u64;
    }

    fn active_parents(&self, n: NodeId) -> [Option<NodeId>; 2] {
        let p = self.nodes[n.index()].rpl.parents;
        [p.pp, p.ap]
    }

    fn is_active_parent(&self, n: NodeId, p: NodeId) -> bool {
        self.active_parents(n).contains(&Some(p))
    }

    /// Gives every active parent at least one cell and clears retired ones
    /// once the replacements are in place.
    fn repair(&mut self, n: NodeId) {
        let i = n.index();
        for p in self.active_parents(n).into_iter().flatten() {
            self.nodes[i].retired.remove(&p);
            if self.sixp.is_busy(n, p) {
                continue;
            }
            let count = if self.schedules[i].has_tx_toward(p) {
                self.nodes[i].owed.remove(&p).unwrap_or(0)
            } else {
                let owed = self.nodes[i].owed.remove(&p).unwrap_or(1).max(1);
                owed - self.bootstrap_cell(n, p) as u16
            };
            if count > 0 && !self.open(n, p, Command::Add, count, CellDirection::InitiatorTx, CellOwner::Msf) {
                self.nodes[i].owed.insert(p, count);
            }
        }
        let covered = self
            .active_parents(n)
            .into_iter()
            .flatten()
            .all(|p| self.schedules[i].has_tx_toward(p));
        let patience = 2 * self.cfg.sixp_timeout_slotframes * self.l();
        let retired: Vec<(NodeId, Asn)> = self.nodes[i].retired.iter().map(|(k, v)| (*k, *v)).collect();
        for (old, since) in retired {
            if self.sixp.is_busy(n, old) || !(covered || self.asn >= since + patience) {
                continue;
            }
            self.nodes[i].retired.remove(&old);
            let shared = self.schedules[i]
                .cells()
                .any(|c| c.kind == CellKind::Negotiated && c.peer == old);
            if shared {
                self.open(n, old, Command::Clear, 0, CellDirection::InitiatorTx, CellOwner::Msf);
            }
        }
    }

    // ---- routing events ----

    fn on_parent_changes(&mut self, n: NodeId, ch: ParentChanges) {
        if ch.pp.is_none() && ch.ap.is_none() {
            return;
        }
        let i = n.index();
        if let Some((old, new)) = ch.pp {
            self.nodes[i].msf.on_parent_change(old, new);
            if let Some(p) = new {
                if !self.schedules[i].has_tx_toward(p) {
                    let count = self.relocated_count(n, old, p);
                    self.nodes[i].owed.insert(p, count);
                }
            }
            if let Some(o) = old {
                self.nodes[i].owed.remove(&o);
                self.nodes[i].retired.entry(o).or_insert(self.asn);
            }
        }
        if let Some((old, new)) = ch.ap {
            self.nodes[i].msf.on_parent_change(old, new);
            if let Some(a) = new {
                if !self.schedules[i].has_tx_toward(a) {
                    let count = self.relocated_count(n, old, a);
                    self.nodes[i].owed.entry(a).or_insert(count);
                }
            }
            if let Some(o) = old {
                self.nodes[i].owed.remove(&o);
                self.nodes[i].retired.entry(o).or_insert(self.asn);
            }
        }
        self.reroute(n);
        self.repair(n);
    }

    fn relocated_count(&self, n: NodeId, old: Option<NodeId>, new: NodeId) -> u16 {
        let held = old.map_or(0, |o| {
            self.schedules[n.index()].count_with(o, Direction::Tx, Some(CellOwner::Msf))
        });
        sixp::relocate_on_parent_change(held, old, new).map_or(1, |r| r.add_count)
    }

    /// Installs one cell toward a parent without signaling.
    fn bootstrap_cell(&mut self, n: NodeId, p: NodeId) -> bool {
        let reserved = &self.cfg.reserved_slots;
        let common: Vec<u16> = self.schedules[n.index()]
            .free_slots()
            .filter(|s| self.schedules[p.index()].is_free(*s) && !reserved.contains(s))
            .collect();
        if common.is_empty() {
            return false;
        }
        let slot = common[self.rngs.pick(Stream::Sixp, common.len())];
        let ch = self.rngs.pick(Stream::Sixp, self.cfg.channels as usize) as u16;
        let cell = |peer, direction| Cell {
            slot_offset: slot,
            channel_offset: ch,
            kind: CellKind::Negotiated,
            direction,
            peer,
            owner: CellOwner::Msf,
        };
        self.schedules[n.index()]
            .add(cell(p, Direction::Tx))
            .expect("slot free");
        self.schedules[p.index()]
            .add(cell(n, Direction::Rx))
            .expect("slot free");
        true
    }

    /// Points queued data at the current parents; copies with no next hop are dropped.
    fn reroute(&mut self, n: NodeId) {
        let [pp, ap] = self.active_parents(n);
        let strategy = self.cfg.flooding;
        let mut dropped = Vec::new();
        self.nodes[n.index()].queue.retain_data(|qf| {
            if Some(qf.dest) == pp || Some(qf.dest) == ap {
                return true;
            }
            let Frame::Data(p) = &qf.frame else { return true };
            match dataplane::next_hop(strategy, p.label, pp, ap) {
                Some(d) => {
                    qf.dest = d;
                    qf.delivered = false;
                    true
                }
                None => {
                    dropped.push(p.uid);
                    false
                }
            }
        });
        for uid in dropped {
            self.report.no_parent_drops += 1;
            self.ledger.released(uid, Some(LossCause::NoParent));
        }
    }

    // ---- 6P ----

    fn open(
        &mut self,
        initiator: NodeId,
        peer: NodeId,
        command: Command,
        count: u16,
        direction: CellDirection,
        owner: CellOwner,
    ) -> bool {
        let rngs = &mut self.rngs;
        let req = self.sixp.request(
            &self.schedules,
            &self.cfg.reserved_slots,
            self.cfg.channels,
            initiator,
            peer,
            command,
            count,
            direction,
            owner,
            self.asn,
            |k| rngs.pick(Stream::Sixp, k),
        );
        match req {
            Ok(msg) => {
                self.send_sixp(initiator, msg);
                true
            }
            Err(_) => false,
        }
    }

    /// 6P frames ride a negotiated cell toward the peer if one exists,
    /// otherwise the minimal cell.
    fn send_sixp(&mut self, from: NodeId, msg: SixpMessage) {
        let to = msg.to;
        if self.schedules[from.index()].has_tx_toward(to) {
            self.nodes[from.index()]
                .queue
                .enqueue_control(msg, to, self.cfg.max_retries);
        } else {
            self.minimal[from.index()].sixp.push_back(QueuedFrame {
                frame: Frame::Sixp(msg),
                dest: to,
                retries_left: self.cfg.max_retries,
                delivered: false,
            });
        }
    }

    fn on_sixp(&mut self, at: NodeId, msg: SixpMessage) {
        match msg.kind {
            MessageKind::Request => {
                if let Some(resp) = self.sixp.respond(&self.schedules, &self.cfg.reserved_slots, &msg) {
                    self.send_sixp(at, resp);
                }
            }
            MessageKind::Response => {
                if let Some(c) = self.sixp.complete(&mut self.schedules, &msg, self.asn) {
                    self.on_completion(c);
                }
            }
        }
    }

    fn on_completion(&mut self, c: Completion) {
        let t = &c.txn;
        let s = &mut self.report.sixp;
        match c.outcome {
            Outcome::Success => {
                s.completed += 1;
                match t.command {
                    Command::Add => s.cells_added += c.cells.len() as u64,
                    Command::Delete | Command::Clear => s.cells_removed += c.cells.len() as u64,
                }
            }
            Outcome::Timeout => {
                s.timed_out += 1;
                s.cells_removed += c.cells.len() as u64;
                let id = t.id;
                for n in [t.initiator, t.peer] {
                    self.nodes[n.index()]
                        .queue
                        .drop_control(|f| matches!(&f.frame, Frame::Sixp(m) if m.txn == id));
                    self.minimal[n.index()]
                        .sixp
                        .retain(|f| !matches!(&f.frame, Frame::Sixp(m) if m.txn == id));
                }
            }
        }
        // the next verdicts toward this child reflect the schedule as it is now
        if t.owner == CellOwner::Bdpc {
            let until = self.asn + self.bdpc.cooldown_slots;
            let b = &mut self.nodes[t.initiator.index()].bdpc;
            b.reset(t.peer);
            b.record_cooldown(t.peer, until);
        }
        // an upward ADD that timed out stays owed
        if t.command == Command::Add
            && t.owner == CellOwner::Msf
            && c.outcome == Outcome::Timeout
            && self.is_active_parent(t.initiator, t.peer)
        {
            *self.nodes[t.initiator.index()].owed.entry(t.peer).or_insert(0) += t.count;
        }
        if t.command == Command::Clear {
            let (a, b) = (t.initiator, t.peer);
            self.nodes[a.index()].bdpc.reset(b);
            self.nodes[b.index()].bdpc.reset(a);
            self.reroute(a);
            self.reroute(b);
        }
    }

    // ---- traffic ----

    fn generate_due(&mut self, asn: Asn) {
        for i in 1..self.nodes.len() {
            if self.nodes[i].next_gen != Some(asn) {
                continue;
            }
            let u = self.rngs.next_random(Stream::Jitter);
            let gap =
                dataplane::generation_gap_slots(self.cfg.pk_period_s, self.cfg.pk_variance, u, self.cfg.timeslot_ms);
            self.nodes[i].next_gen = Some(asn + gap);
            if self.nodes[i].rpl.ever_joined() {
                self.generate(NodeId(i as u16), asn);
            }
        }
    }

    fn generate(&mut self, n: NodeId, asn: Asn) {
        let uid = self.ledger.create(n, asn);
        self.report.n_tx += 1;
        let node = &mut self.nodes[n.index()];
        let seq = node.seq;
        node.seq += 1;
        let p = node.rpl.parents;
        let template = Packet {
            uid,
            flow: FlowId { src: n, seq },
            label: Label::None,
            created_at: asn,
            size: self.cfg.pk_size_bytes,
            origin_rank: p.own_rank.unwrap_or(self.cfg.rank_min),
        };
        let outputs = if p.pp.is_none() {
            vec![(template, None)]
        } else {
            dataplane::generate(template, self.cfg.flooding, p.pp, p.ap)
        };
        for (pkt, dest) in outputs {
            self.enqueue_data(n, pkt, dest);
        }
    }

    fn enqueue_data(&mut self, n: NodeId, pkt: Packet, dest: Option<NodeId>) {
        match self.nodes[n.index()].queue.enqueue(pkt, dest, self.cfg.max_retries) {
            Ok(()) => self.ledger.queued(pkt.uid),
            Err(EnqueueError::QueueFull) => {
                self.report.queue_drops += 1;
                self.ledger.refused(pkt.uid, LossCause::QueueFull);
            }
            Err(EnqueueError::NoDestination) => {
                self.report.no_parent_drops += 1;
                self.ledger.refused(pkt.uid, LossCause::NoParent);
            }
        }
    }

    fn on_data(&mut self, at: NodeId, from: NodeId, pkt: Packet, asn: Asn) {
        if self.cfg.sf_kind == SfKind::Bdpc {
            self.bdpc_observe(at, from, &pkt, asn);
        }
        if at.is_root() {
            self.ledger.at_root(pkt.uid);
            match self.sink.root_receive(&pkt, asn) {
                RootVerdict::FirstDelivery { delay_ms } => self.report.record_delivery(delay_ms),
                RootVerdict::Duplicate => self.report.duplicates += 1,
            }
            return;
        }
        let p = self.nodes[at.index()].rpl.parents;
        let outputs = dataplane::forward(&mut self.nodes[at.index()].registry, pkt, self.cfg.flooding, p.pp, p.ap);
        if outputs.is_empty() {
            self.report.eliminated += 1;
            self.ledger.refused(pkt.uid, LossCause::Eliminated);
        }
        for (out, dest) in outputs {
            self.enqueue_data(at, out, dest);
        }
    }

    fn bdpc_observe(&mut self, parent: NodeId, child: NodeId, pkt: &Packet, asn: Asn) {
        let i = parent.index();
        let own_rank = self.nodes[i].rpl.parents.own_rank.unwrap_or(self.cfg.rank_min);
        let budget = bdpc::budget_ms(
            self.cfg.budget_rule,
            self.cfg.max_delay_ms(),
            own_rank,
            pkt.origin_rank,
            self.cfg.rank_step,
        );
        let elapsed = ((asn - pkt.created_at) * self.cfg.timeslot_ms as u64) as f64;
        let verdict = bdpc::classify_arrival(elapsed, budget);
        let owned = self.schedules[i].count_with(child, Direction::Rx, Some(CellOwner::Bdpc));
        let w = self.nodes[i].bdpc.record(child, verdict, self.cfg.bdpc_window);
        let Some(action) = bdpc::evaluate_child(w, asn, &self.bdpc, owned) else {
            return;
        };
        let (cmd, count) = match action {
            BdpcAction::Add(k) => (Command::Add, k),
            BdpcAction::Delete(k) => (Command::Delete, k),
        };
        if self.open(parent, child, cmd, count, CellDirection::InitiatorRx, CellOwner::Bdpc) {
            let cooldown = asn + self.bdpc.cooldown_slots;
            self.nodes[i].bdpc.record_cooldown(child, cooldown);
        }
    }

    // ---- MAC ----

    fn minimal_cell(&mut self, asn: Asn) {
        let rngs = &mut self.rngs;
        let winner = minimal_cell_winner(&self.minimal, |k| rngs.pick(Stream::Backoff, k));
        let mut outcome = vec![SlotOutcome::RxIdle; self.nodes.len()];
        if let Some(w) = winner {
            outcome[w.index()] = SlotOutcome::TxDataOnly;
            let q = &mut self.minimal[w.index()];
            if q.sends_dio() {
                let dio = q.dio.take().expect("dio pending");
                q.dio_overdue = false;
                self.nodes[w.index()].last_dio = asn / self.l();
                let rngs = &mut self.rngs;
                let hearers = tsch::broadcast_receivers(self.topo.neighbor_iter(w).map(|(n, q)| (n, q.pdr)), || {
                    rngs.next_random(Stream::Link)
                });
                for h in hearers {
                    outcome[h.index()] = SlotOutcome::RxDataOnly;
                    let ch = self.nodes[h.index()].rpl.process_dio(&dio, asn, &self.rpl);
                    self.on_parent_changes(h, ch);
                }
            } else {
                let head = q.sixp.front_mut().expect("6P frame pending");
                let dest = head.dest;
                let pdr = self.topo.link(w, dest).map_or(0.0, |lq| lq.pdr);
                let rngs = &mut self.rngs;
                let att = unicast_attempt(pdr, || rngs.next_random(Stream::Link));
                outcome[w.index()] = SlotOutcome::TxDataRxAck;
                if att.data_ok {
                    outcome[dest.index()] = SlotOutcome::RxDataTxAck;
                }
                let fresh = !head.delivered;
                let msg = match &head.frame {
                    Frame::Sixp(m) => m.clone(),
                    Frame::Data(_) => unreachable!("only 6P frames use the minimal queue"),
                };
                if att.ack_ok || after_failure(head) == RetryVerdict::Drop {
                    q.sixp.pop_front();
                } else {
                    head.delivered |= att.data_ok;
                }
                if att.data_ok && fresh {
                    self.on_sixp(dest, msg);
                }
            }
        }
        for (node, o) in self.nodes.iter_mut().zip(outcome) {
            node.energy.charge_slot(o);
        }
    }

    fn negotiated_cells(&mut self, asn: Asn, slot: u16) {
        self.charged.iter_mut().for_each(|c| *c = false);
        for i in 0..self.nodes.len() {
            let Some(cell) = self.schedules[i].cell_at(slot).copied() else {
                continue;
            };
            if cell.kind != CellKind::Negotiated || cell.direction != Direction::Tx {
                continue;
            }
            let n = NodeId(i as u16);
            let peer = cell.peer;
            let lane = self.nodes[i].queue.head_for(peer);
            if let Some(lane) = lane {
                self.charged[i] = true;
                self.charged[peer.index()] = true;
                let pdr = self.topo.link(n, peer).map_or(0.0, |q| q.pdr);
                let rngs = &mut self.rngs;
                let att = unicast_attempt(pdr, || rngs.next_random(Stream::Link));
                self.nodes[i].energy.charge_slot(SlotOutcome::TxDataRxAck);
                self.nodes[peer.index()].energy.charge_slot(if att.data_ok {
                    SlotOutcome::RxDataTxAck
                } else {
                    SlotOutcome::RxIdle
                });

                let queue = &mut self.nodes[i].queue;
                let frame = queue.get(lane).frame.clone();
                if let Frame::Data(p) = &frame {
                    self.ledger.transmitted(p.uid);
                }
                // a retransmission of a frame the peer already holds is discarded there
                let fresh = !queue.get(lane).delivered;
                let (left_queue, cause) = if att.ack_ok {
                    queue.take(lane);
                    (true, None)
                } else if after_failure(queue.get_mut(lane)) == RetryVerdict::Drop {
                    queue.take(lane);
                    (true, Some(LossCause::RetryExhausted))
                } else {
                    queue.get_mut(lane).delivered |= att.data_ok;
                    (false, None)
                };
                if let (Frame::Data(p), true) = (&frame, left_queue) {
                    if cause.is_some() {
                        self.report.retry_drops += 1;
                    }
                    self.ledger.released(p.uid, cause);
                }
                if att.data_ok && fresh {
                    match frame {
                        Frame::Data(p) => self.on_data(peer, n, p, asn),
                        Frame::Sixp(m) => self.on_sixp(peer, m),
                    }
                }
            }
            if cell.owner == CellOwner::Msf && self.is_active_parent(n, peer) {
                let held = self.schedules[i].count_with(peer, Direction::Tx, Some(CellOwner::Msf));
                if let Some(action) = self.nodes[i].msf.on_cell_elapsed(peer, lane.is_some(), held) {
                    let (cmd, count) = match action {
                        MsfAction::Add(k) => (Command::Add, k),
                        MsfAction::Delete(k) => (Command::Delete, k),
                    };
                    self.open(n, peer, cmd, count, CellDirection::InitiatorTx, CellOwner::Msf);
                }
            }
        }
        for i in 0..self.nodes.len() {
            if self.charged[i] {
                continue;
            }
            if let Some(c) = self.schedules[i].cell_at(slot) {
                if c.direction == Direction::Rx {
                    self.nodes[i].energy.charge_slot(SlotOutcome::RxIdle);
                }
            }
        }
    }
}

/// Runs one configuration on `topo` to completion.
pub fn run(cfg: &RunConfig, topo: &Topology) -> Result<RunReport> {
    let mut sim = Simulator::new(cfg, topo)?;
    sim.run_to_end();
    Ok(sim.finish())
}
