//! Checks shared by the acceptance suite and the focused integration tests.
//! Each returns a one-line detail on success and a description of the first
//! violation otherwise.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sixsim::bdpc::{self, BdpcAction, BdpcParams, BdpcState, Verdict};
use sixsim::dataplane::{next_hop, select_mac, Label};
use sixsim::experiment::{self, ExecOptions, ExperimentPlan};
use sixsim::msf::{MsfAction, MsfCounters, MsfState};
use sixsim::rpl::{ap_candidates, NeighborEntry, NeighborTable};
use sixsim::sixp::CellDirection;
use sixsim::tsch::{CellOwner, Frame};
use sixsim::{ApMode, Flooding, LinkQuality, NodeId, RunConfig, SfKind, Simulator, Topology};

pub type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---- forwarding truth table ----

/// Every (label, pp present, ap present) combination against the hand-written table.
pub fn mac_selection_truth_table() -> Check {
    let (pp, ap) = (NodeId(1), NodeId(2));
    let cases = [
        (Label::Pp, true, true, Some(pp)),
        (Label::Pp, true, false, Some(pp)),
        (Label::Pp, false, true, Some(ap)),
        (Label::Pp, false, false, None),
        (Label::Ap, true, true, Some(ap)),
        (Label::Ap, true, false, Some(pp)),
        (Label::Ap, false, true, Some(ap)),
        (Label::Ap, false, false, None),
        (Label::None, true, true, None),
        (Label::None, true, false, None),
        (Label::None, false, true, None),
        (Label::None, false, false, None),
    ];
    for (label, has_pp, has_ap, want) in cases {
        let (p, a) = (has_pp.then_some(pp), has_ap.then_some(ap));
        let got = select_mac(label, p, a);
        ensure(got == want, || {
            format!("{label:?} pp={has_pp} ap={has_ap}: got {got:?}, want {want:?}")
        })?;
        for s in [
            Flooding::LeafCopy,
            Flooding::MidFlood,
            Flooding::MidFloodDrop,
            Flooding::Flood,
        ] {
            ensure(next_hop(s, label, p, a) == want, || {
                format!("{s:?} disagrees on {label:?}")
            })?;
        }
        let plain = next_hop(Flooding::None, Label::None, p, a);
        ensure(plain == p, || format!("unlabeled without replication: got {plain:?}"))?;
    }
    Ok(format!("{} cases match", cases.len()))
}

// ---- MSF ----

pub fn msf_unit_behavior() -> Check {
    // one evaluation per 101 elapsed cells, for every possible use count
    for ncu in 0..=101u32 {
        for held in [1usize, 2, 3] {
            let mut c = MsfCounters::default();
            let actions: Vec<_> = (0..101).filter_map(|i| c.on_cell_elapsed(i < ncu, held)).collect();
            let u = ncu as f64 / 101.0;
            let want = if ncu > 75 {
                vec![MsfAction::Add(1)]
            } else if ncu < 25 && held > 1 {
                vec![MsfAction::Delete(1)]
            } else {
                vec![]
            };
            ensure(actions == want, || format!("ncu {ncu} held {held}: {actions:?}"))?;
            ensure(c == MsfCounters::default(), || {
                "counters not reset after evaluation".into()
            })?;
            if matches!(want.first(), Some(MsfAction::Add(_))) {
                ensure(u > 0.74, || format!("ADD at utilization {u}"))?;
            }
            if matches!(want.first(), Some(MsfAction::Delete(_))) {
                ensure(u < 0.25, || format!("DELETE at utilization {u}"))?;
            }
        }
    }
    // interleaved PP/AP streams stay isolated
    let (pp, ap) = (NodeId(1), NodeId(2));
    let mut s = MsfState::new();
    let mut seen = Vec::new();
    for i in 0..303 {
        seen.extend(s.on_cell_elapsed(pp, true, 1).map(|a| (pp, a)));
        seen.extend(s.on_cell_elapsed(ap, i % 10 == 0, 3).map(|a| (ap, a)));
    }
    let want = vec![
        (pp, MsfAction::Add(1)),
        (ap, MsfAction::Delete(1)),
        (pp, MsfAction::Add(1)),
        (ap, MsfAction::Delete(1)),
        (pp, MsfAction::Add(1)),
        (ap, MsfAction::Delete(1)),
    ];
    ensure(seen == want, || format!("interleaved streams: {seen:?}"))?;
    Ok("ADD iff ncu > 75/101, DELETE iff ncu < 25/101 with >1 cell, per-parent isolation".into())
}

// ---- BDPC ----

/// Drives the per-child controller with scripted verdict streams, one arrival
/// every `gap` slots, opening a transaction whenever it asks for one. The
/// first `warm` verdicts are only recorded.
fn script(stream: &[Verdict], warm: usize, gap: u64, p: &BdpcParams, owned: &mut usize) -> Vec<(u64, BdpcAction)> {
    let child = NodeId(7);
    let mut state = BdpcState::new();
    let mut opened = Vec::new();
    for (k, v) in stream.iter().enumerate() {
        let now = k as u64 * gap;
        let w = state.record(child, *v, 100);
        if k < warm {
            continue;
        }
        if let Some(a) = bdpc::evaluate_child(w, now, p, *owned) {
            opened.push((now, a));
            state.record_cooldown(child, now + p.cooldown_slots);
            match a {
                BdpcAction::Add(k) => *owned += k as usize,
                BdpcAction::Delete(k) => *owned -= k as usize,
            }
        }
    }
    opened
}

pub fn bdpc_scripted_streams() -> Check {
    let p = BdpcParams {
        sf_max: 0.1,
        sf_min: 0.05,
        min_verdicts: 10,
        add_cells: 1,
        cooldown_slots: 101,
    };
    let gap = 7;
    let mut owned = 0;

    let late = vec![Verdict::Late; 300];
    let adds = script(&late, 0, gap, &p, &mut owned);
    ensure(adds.first().map(|a| a.0) == Some(9 * gap), || {
        format!("first ADD at {:?}", adds.first())
    })?;
    ensure(adds.iter().all(|a| a.1 == BdpcAction::Add(1)), || {
        "late stream produced a DELETE".into()
    })?;
    // the first arrival at or after the cooldown deadline opens the next one
    let period = p.cooldown_slots.div_ceil(gap) * gap;
    for w in adds.windows(2) {
        let d = w[1].0 - w[0].0;
        ensure(d == period, || format!("ADDs {d} slots apart, want {period}"))?;
    }
    let span = 299 * gap - adds[0].0;
    ensure(adds.len() as u64 == span / period + 1, || {
        format!("{} ADDs over {span} slots", adds.len())
    })?;

    // 7% late sits between the thresholds
    let mut quiet_owned = 3;
    let mixed: Vec<_> = (0..300)
        .map(|i| if i % 100 < 7 { Verdict::Late } else { Verdict::OnTime })
        .collect();
    let quiet = script(&mixed, 100, gap, &p, &mut quiet_owned);
    ensure(quiet.is_empty(), || format!("7% late triggered {quiet:?}"))?;

    // on-time stream deletes the cells it added, one per cooldown, then stops
    let mut owned_then = 3;
    let on_time = vec![Verdict::OnTime; 300];
    let dels = script(&on_time, 0, gap, &p, &mut owned_then);
    ensure(dels.len() == 3 && owned_then == 0, || format!("DELETEs {dels:?}"))?;
    ensure(dels.iter().all(|a| a.1 == BdpcAction::Delete(1)), || {
        "on-time stream produced an ADD".into()
    })?;
    for w in dels.windows(2) {
        ensure(w[1].0 - w[0].0 >= p.cooldown_slots, || {
            "two DELETEs within one cooldown".into()
        })?;
    }
    Ok(format!(
        "{} ADDs one per cooldown, {} DELETEs down to zero owned, silent at 7% late",
        adds.len(),
        dels.len()
    ))
}

/// Every BDPC transaction in a benchmark run is opened by a parent of its
/// peer, moves cells in the child-to-parent direction, and no pair sees two
/// openings within one cooldown.
pub fn bdpc_engine_direction(frames: u64) -> Check {
    let cfg = RunConfig {
        duration_slotframes: frames,
        sf_kind: SfKind::Bdpc,
        flooding: Flooding::LeafCopy,
        ..Default::default()
    };
    let topo = cfg.topology().map_err(|e| e.to_string())?;
    let mut sim = Simulator::new(&cfg, &topo).map_err(|e| e.to_string())?;
    let l = cfg.slotframe_length as u64;
    let mut seen = BTreeSet::new();
    let mut last_open: BTreeMap<(NodeId, NodeId), u64> = BTreeMap::new();
    let mut count = 0;
    while sim.asn() < sim.total_slots() {
        sim.step();
        for t in sim.transactions().filter(|t| t.owner == CellOwner::Bdpc) {
            if !seen.insert(t.id) {
                continue;
            }
            count += 1;
            let child = sim.parents(t.peer);
            ensure(child.pp == Some(t.initiator) || child.ap == Some(t.initiator), || {
                format!(
                    "txn {} opened by {} which is not a parent of {}",
                    t.id, t.initiator, t.peer
                )
            })?;
            ensure(t.direction == CellDirection::InitiatorRx, || {
                format!("txn {} moves parent-tx cells", t.id)
            })?;
            if let Some(prev) = last_open.insert((t.initiator, t.peer), t.started_at) {
                ensure(t.started_at - prev >= l, || {
                    format!(
                        "{}->{} opened twice within {} slots",
                        t.initiator,
                        t.peer,
                        t.started_at - prev
                    )
                })?;
            }
        }
    }
    ensure(count > 0, || "no BDPC transaction was opened".into())?;
    Ok(format!(
        "{count} BDPC transactions, all parent-initiated, parent-rx, >= one frame apart per pair"
    ))
}

// ---- alternate-parent nesting ----

fn random_table(rng: &mut ChaCha8Rng) -> NeighborTable {
    let ids: Vec<NodeId> = (1..=12).map(NodeId).collect();
    let mut nt = NeighborTable::new();
    let n = rng.gen_range(1..=8);
    for _ in 0..n {
        let me = ids[rng.gen_range(0..ids.len())];
        let pp = rng.gen_bool(0.85).then(|| ids[rng.gen_range(0..ids.len())]);
        let mut parent_set: Vec<NodeId> = ids.iter().copied().filter(|_| rng.gen_bool(0.2)).collect();
        if let Some(p) = pp {
            if !parent_set.contains(&p) {
                parent_set.insert(0, p);
            }
        }
        nt.insert(
            me,
            NeighborEntry {
                rank: 256 * rng.gen_range(1..=4),
                pp,
                parent_set,
                heard_at: 0,
            },
        );
    }
    nt
}

pub fn ap_mode_nesting(tables: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut strict_total = 0;
    let mut soft_total = 0;
    for k in 0..tables {
        let nt = random_table(&mut rng);
        let own = 256 * rng.gen_range(2..=5);
        for (pp, _) in nt.iter() {
            let set = |m| ap_candidates(&nt, pp, own, m).into_iter().collect::<BTreeSet<_>>();
            let (s, m, o) = (set(ApMode::Strict), set(ApMode::Medium), set(ApMode::Soft));
            ensure(s.is_subset(&m) && m.is_subset(&o), || {
                format!("table {k}, pp {pp}: strict {s:?} medium {m:?} soft {o:?}")
            })?;
            strict_total += s.len();
            soft_total += o.len();
        }
    }
    Ok(format!(
        "{tables} tables, {strict_total} strict / {soft_total} soft candidates, all nested"
    ))
}

// ---- replication oracle ----

/// Root, two relays, one leaf linked to both relays.
pub fn lattice() -> Topology {
    let q = LinkQuality::new(1.0, -60.0).unwrap();
    let mut t = Topology::with_nodes(4);
    for (a, b) in [(0, 1), (0, 2), (1, 3), (2, 3)] {
        t.add_link(NodeId(a), NodeId(b), q).unwrap();
    }
    t
}

/// Copies of one packet from `src` that reach the root under `flood`, found by
/// walking every branch of the replication tree.
pub fn brute_force_root_copies(parents: &BTreeMap<NodeId, (Option<NodeId>, Option<NodeId>)>, src: NodeId) -> u32 {
    fn hop(parents: &BTreeMap<NodeId, (Option<NodeId>, Option<NodeId>)>, at: NodeId, via_pp: bool) -> u32 {
        if at.is_root() {
            return 1;
        }
        let (pp, ap) = parents[&at];
        let route = |prefer_pp: bool| if prefer_pp { pp.or(ap) } else { ap.or(pp) };
        let branches: Vec<(Option<NodeId>, bool)> = if pp.is_some() && ap.is_some() {
            vec![(route(via_pp), via_pp), (route(!via_pp), !via_pp)]
        } else {
            vec![(route(via_pp), via_pp)]
        };
        branches
            .into_iter()
            .map(|(n, l)| n.map_or(0, |n| hop(parents, n, l)))
            .sum()
    }
    let (pp, ap) = parents[&src];
    let route = |prefer_pp: bool| if prefer_pp { pp.or(ap) } else { ap.or(pp) };
    let mut total = route(true).map_or(0, |n| hop(parents, n, true));
    if pp.is_some() && ap.is_some() {
        total += route(false).map_or(0, |n| hop(parents, n, false));
    }
    total
}

pub fn flood_dedup_oracle(frames: u64) -> Check {
    let cfg = RunConfig {
        duration_slotframes: frames,
        pdr_link: 1.0,
        rssi_dbm: -60.0,
        flooding: Flooding::Flood,
        ..Default::default()
    };
    let topo = lattice();
    let mut sim = Simulator::new(&cfg, &topo).map_err(|e| e.to_string())?;
    sim.run_frames(cfg.warmup_slotframes);
    let snapshot = |sim: &Simulator| -> BTreeMap<NodeId, (Option<NodeId>, Option<NodeId>)> {
        topo.nodes()
            .filter(|n| !n.is_root())
            .map(|n| (n, (sim.parents(n).pp, sim.parents(n).ap)))
            .collect()
    };
    let parents = snapshot(&sim);
    ensure(parents[&NodeId(3)] == (Some(NodeId(1)), Some(NodeId(2))), || {
        format!("leaf parents {:?}", parents[&NodeId(3)])
    })?;
    while sim.asn() < sim.total_slots() {
        sim.run_frames(1);
        ensure(snapshot(&sim) == parents, || {
            format!("parents changed at asn {}", sim.asn())
        })?;
    }
    let records = sim.ledger().records().to_vec();
    let report = sim.finish();

    let mut want_dups = 0;
    let mut complete = 0;
    for (uid, r) in records.iter().enumerate() {
        if r.live_copies > 0 {
            continue;
        }
        complete += 1;
        let want = brute_force_root_copies(&parents, r.src);
        ensure(r.root_copies == want, || {
            format!(
                "packet {uid} from {} reached the root {} times, tree says {want}",
                r.src, r.root_copies
            )
        })?;
        want_dups += want - 1;
    }
    let in_flight = report.losses.in_flight;
    ensure(report.n_rx + in_flight == report.n_tx, || {
        format!("n_rx {} + in flight {in_flight} != n_tx {}", report.n_rx, report.n_tx)
    })?;
    let dup_in_flight: u64 = records
        .iter()
        .filter(|r| r.live_copies > 0)
        .map(|r| r.root_copies.saturating_sub(1) as u64)
        .sum();
    ensure(report.duplicates == want_dups as u64 + dup_in_flight, || {
        format!(
            "duplicates {} but tree enumeration gives {}",
            report.duplicates,
            want_dups as u64 + dup_in_flight
        )
    })?;
    ensure(report.duplicates > 0, || "flooding produced no duplicates".into())?;
    Ok(format!(
        "{} packets ({complete} settled), {} first deliveries, {} duplicates as enumerated",
        report.n_tx, report.n_rx, report.duplicates
    ))
}

// ---- determinism ----

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Two executions of the same short plan, one serial and one on two
/// workers, write byte-identical files.
pub fn csv_determinism(frames: u64) -> Check {
    let mut plan = ExperimentPlan::benchmark();
    plan.base.duration_slotframes = frames;
    plan.seeds = vec![0, 1];
    plan.periods = vec![5.0];
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for (d, jobs) in dirs.iter().zip([1, 2]) {
        let opts = ExecOptions {
            jobs,
            keep_sixp_log: true,
        };
        let outcomes = experiment::execute(&plan, opts).map_err(|e| e.to_string())?;
        experiment::write_outputs(d.path(), &outcomes, plan.target.as_deref()).map_err(|e| e.to_string())?;
    }
    let (a, b) = (dir_bytes(dirs[0].path()), dir_bytes(dirs[1].path()));
    ensure(a.keys().eq(b.keys()), || "file sets differ".into())?;
    for (k, v) in &a {
        ensure(&b[k] == v, || format!("{k} differs"))?;
    }
    Ok(format!("{} files byte-identical across repeats", a.len()))
}

// ---- conservation ----

/// Runs `cfg` and checks that every unique packet is delivered, lost for a
/// recorded cause, or still queued somewhere.
pub fn ledger_conservation(cfg: &RunConfig) -> Check {
    let topo = cfg.topology().map_err(|e| e.to_string())?;
    let mut sim = Simulator::new(cfg, &topo).map_err(|e| e.to_string())?;
    sim.run_to_end();
    let queued: u64 = topo
        .nodes()
        .map(|n| {
            sim.queue(n)
                .data()
                .filter(|f| matches!(f.frame, Frame::Data(_)))
                .count() as u64
        })
        .sum();
    let records = sim.ledger().records().to_vec();
    let r = sim.finish();
    let l = r.losses;
    ensure(records.len() as u64 == r.n_tx, || {
        format!("ledger {} vs n_tx {}", records.len(), r.n_tx)
    })?;
    let delivered = records.iter().filter(|p| p.root_copies > 0).count() as u64;
    ensure(delivered == r.n_rx, || {
        format!("ledger deliveries {delivered} vs n_rx {}", r.n_rx)
    })?;
    let dups: u64 = records.iter().map(|p| p.root_copies.saturating_sub(1) as u64).sum();
    ensure(dups == r.duplicates, || {
        format!("ledger duplicates {dups} vs {}", r.duplicates)
    })?;
    ensure(r.n_tx == r.n_rx + l.total(), || {
        format!("n_tx {} != n_rx {} + losses {:?}", r.n_tx, r.n_rx, l)
    })?;
    let live: u64 = records.iter().map(|p| p.live_copies as u64).sum();
    ensure(live == queued, || {
        format!("{live} live copies in the ledger, {queued} data frames queued")
    })?;
    ensure(
        l.queue_full <= r.queue_drops && l.retry_exhausted <= r.retry_drops && l.no_parent <= r.no_parent_drops,
        || format!("unique losses {l:?} exceed copy drops"),
    )?;
    Ok(format!(
        "n_tx {} = n_rx {} + queue {} + retry {} + no-parent {} + eliminated {} + in-flight {}",
        r.n_tx, r.n_rx, l.queue_full, l.retry_exhausted, l.no_parent, l.eliminated, l.in_flight
    ))
}

// ---- energy ----

/// One node gets an extra always-idle listen cell in a slot nobody else may
/// use; its charge must grow by exactly frames x idle-listen charge and
/// nothing else may change.
pub fn extra_rx_cell_energy(frames: u64, flooding: Flooding) -> Check {
    let (node, slot) = (6u16, 77u16);
    let base = RunConfig {
        duration_slotframes: frames,
        flooding,
        reserved_slots: vec![slot],
        ..Default::default()
    };
    let extra = RunConfig {
        static_listen: vec![(node, slot)],
        ..base.clone()
    };
    let topo = base.topology().map_err(|e| e.to_string())?;
    let a = sixsim::run(&base, &topo).map_err(|e| e.to_string())?;
    let b = sixsim::run(&extra, &topo).map_err(|e| e.to_string())?;
    let idle_c = base.charges.rx_idle_uc * 1e-6;
    for (x, y) in a.nodes.iter().zip(&b.nodes) {
        if x.node == NodeId(node) {
            ensure(
                y.slots_idle == x.slots_idle + frames && y.slots_sleep + frames == x.slots_sleep,
                || {
                    format!(
                        "idle {} -> {}, sleep {} -> {}",
                        x.slots_idle, y.slots_idle, x.slots_sleep, y.slots_sleep
                    )
                },
            )?;
            ensure((x.slots_tx, x.slots_rx) == (y.slots_tx, y.slots_rx), || {
                "tx/rx slots changed".into()
            })?;
            let diff = y.total_c - x.total_c;
            let want = frames as f64 * idle_c;
            ensure((diff - want).abs() <= 1e-9 * want.max(1.0), || {
                format!("charge grew by {diff} C, want {want} C")
            })?;
        } else {
            ensure(x == y, || format!("node {} changed", x.node))?;
        }
    }
    ensure((a.n_tx, a.n_rx, a.duplicates) == (b.n_tx, b.n_rx, b.duplicates), || {
        "traffic changed".into()
    })?;
    Ok(format!(
        "node {node}: +{frames} idle slots, +{:.6} C exactly",
        frames as f64 * idle_c
    ))
}
