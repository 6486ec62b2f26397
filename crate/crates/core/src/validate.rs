//! Feasibility checking of complete or partial schedules against every
//! constraint family, and analytic constraint counts for the MIP export.
//!
//! Pairwise spacing is checked as a disjunction over the two possible
//! orders of the pair: a pair is feasible when at least one order satisfies
//! all rows of the family. The reported slack is the best order's worst row.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{EdgeId, GateDirection, Instance, NodeId, Time, TrackId, TrainId};
use crate::schedule::{Event, Schedule};

/// How connection constraints between pseudo-trains are read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectionMode {
    /// Successor departs no earlier than predecessor arrival plus turnaround,
    /// on the same route.
    #[default]
    Turnaround,
    /// Successor departs exactly with the predecessor's departure and reaches
    /// its next node exactly turnaround seconds later, on the same route.
    Literal,
}

impl fmt::Display for ConnectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConnectionMode::Turnaround => "turnaround",
            ConnectionMode::Literal => "literal",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GateCategory {
    II,
    IO,
    OI,
    OO,
}

impl GateCategory {
    pub fn from_directions(first: GateDirection, second: GateDirection) -> Self {
        use GateDirection::*;
        match (first, second) {
            (Incoming, Incoming) => GateCategory::II,
            (Incoming, Outgoing) => GateCategory::IO,
            (Outgoing, Incoming) => GateCategory::OI,
            (Outgoing, Outgoing) => GateCategory::OO,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    InitialTime,
    StopBound,
    Speed,
    EdgeSpacing,
    NodeSpacing,
    Connection,
    Gate(GateCategory),
    /// Route missing from the node, not usable on the train's edges, or not
    /// linked to the previous node's outgoing track.
    Route,
    /// Time outside `[0, horizon]`.
    Horizon,
    /// Wrong number of events for a train.
    Malformed,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationKind::Gate(c) => write!(f, "Gate({c:?})"),
            other => write!(f, "{other:?}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Place {
    Node(NodeId),
    /// Leg index within the train's itinerary.
    Leg(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Subject {
    pub train: TrainId,
    pub place: Place,
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.place {
            Place::Node(i) => write!(f, "train {} at node {}", self.train, i),
            Place::Leg(k) => write!(f, "train {} on leg {}", self.train, k),
        }
    }
}

/// A broken constraint. `slack` is negative: the amount by which the
/// constraint is violated.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub subjects: Vec<Subject>,
    pub slack: Time,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} slack {}:", self.kind, self.slack)?;
        for (k, s) in self.subjects.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, " {s}")?;
        }
        Ok(())
    }
}

fn at(train: TrainId, node: NodeId) -> Subject {
    Subject {
        train,
        place: Place::Node(node),
    }
}

fn on_leg(train: TrainId, leg: usize) -> Subject {
    Subject {
        train,
        place: Place::Leg(leg),
    }
}

struct Collector {
    out: Vec<Violation>,
}

impl Collector {
    fn check(&mut self, kind: ViolationKind, slack: Time, mut subjects: Vec<Subject>) {
        if slack < 0 {
            subjects.sort();
            self.out.push(Violation {
                kind,
                subjects,
                slack,
            });
        }
    }
}

/// Returns every violation among the scheduled trains, in canonical order
/// (kind, then subjects, then slack). An empty list means the schedule is
/// feasible.
pub fn validate_schedule(
    inst: &Instance,
    sched: &Schedule,
    mode: ConnectionMode,
) -> Vec<Violation> {
    let mut col = Collector { out: Vec::new() };
    let h = inst.horizon;

    // per-train checks; collect trains well-formed enough for pairwise checks
    let mut ok: Vec<(TrainId, &[Event])> = Vec::new();
    for (c, ev) in sched.scheduled() {
        if c.index() >= inst.num_trains() {
            col.check(ViolationKind::Malformed, -1, vec![]);
            continue;
        }
        let t = inst.train(c);
        if ev.len() != t.len() {
            col.check(ViolationKind::Malformed, -1, vec![at(c, t.itinerary[0])]);
            continue;
        }
        let last = t.len() - 1;
        for (pos, e) in ev.iter().enumerate() {
            let node = t.itinerary[pos];
            let s = vec![at(c, node)];
            // route membership, usability on the train's edges and linkage
            let usable = inst.route_index(node, &e.route).is_some_and(|_| {
                let inc_ok = pos == 0
                    || inst
                        .edge(inst.leg(c, pos - 1).edge)
                        .tracks
                        .contains(&e.route.incoming_track);
                let out_ok = pos == last
                    || inst
                        .edge(inst.leg(c, pos).edge)
                        .tracks
                        .contains(&e.route.outgoing_track);
                inc_ok && out_ok
            });
            let linked = pos == 0 || ev[pos - 1].route.outgoing_track == e.route.incoming_track;
            if !usable || !linked {
                col.check(ViolationKind::Route, -1, s.clone());
            }
            let lo = e.arrival.min(e.departure);
            let hi = e.arrival.max(e.departure);
            col.check(ViolationKind::Horizon, lo.min(0), s.clone());
            col.check(ViolationKind::Horizon, h - hi, s.clone());
            let floor = inst.floor(c, pos);
            col.check(
                ViolationKind::InitialTime,
                e.arrival - floor.arrival,
                s.clone(),
            );
            col.check(
                ViolationKind::InitialTime,
                e.departure - floor.departure,
                s.clone(),
            );
            let sb = t.stop_bounds[pos];
            let dwell = e.departure - e.arrival;
            col.check(ViolationKind::StopBound, dwell - sb.min, s.clone());
            col.check(ViolationKind::StopBound, sb.max - dwell, s);
            if pos < last {
                col.check(
                    ViolationKind::Speed,
                    ev[pos + 1].arrival - e.departure - t.travel_min[pos],
                    vec![on_leg(c, pos)],
                );
            }
        }
        ok.push((c, ev));
    }

    // edge spacing: same edge, same direction, same track
    #[allow(clippy::type_complexity)]
    let mut edge_users: BTreeMap<(EdgeId, bool, TrackId), Vec<(TrainId, usize, Time, Time)>> =
        BTreeMap::new();
    // node spacing: same inside track
    #[allow(clippy::type_complexity)]
    let mut node_users: BTreeMap<(NodeId, TrackId), Vec<(TrainId, Time, Time)>> = BTreeMap::new();
    // gates: one entry per use
    let mut gate_users: BTreeMap<usize, Vec<(TrainId, NodeId, GateDirection, Time)>> =
        BTreeMap::new();
    for &(c, ev) in &ok {
        let t = inst.train(c);
        for (pos, e) in ev.iter().enumerate() {
            let node = t.itinerary[pos];
            if pos + 1 < t.len() {
                let leg = inst.leg(c, pos);
                edge_users
                    .entry((leg.edge, leg.forward, e.route.outgoing_track))
                    .or_default()
                    .push((c, pos, e.departure, ev[pos + 1].arrival));
            }
            node_users
                .entry((node, e.route.inside_track))
                .or_default()
                .push((c, e.arrival, e.departure));
            for (g, dir) in inst.gate_usage(c, pos, &e.route) {
                let time = match dir {
                    GateDirection::Incoming => e.arrival,
                    GateDirection::Outgoing => e.departure,
                };
                gate_users.entry(g).or_default().push((c, node, dir, time));
            }
        }
    }

    for (&(edge, _, _), users) in &edge_users {
        for (k, &(c, lc, d, a)) in users.iter().enumerate() {
            for &(c2, lc2, d2, a2) in &users[k + 1..] {
                let g12 = inst.edge_gamma(c, c2, edge);
                let g21 = inst.edge_gamma(c2, c, edge);
                let first = (d2 - d - g12).min(a2 - a - g12);
                let second = (d - d2 - g21).min(a - a2 - g21);
                col.check(
                    ViolationKind::EdgeSpacing,
                    first.max(second),
                    vec![on_leg(c, lc), on_leg(c2, lc2)],
                );
            }
        }
    }

    for (&(node, _), users) in &node_users {
        for (k, &(c, a, d)) in users.iter().enumerate() {
            for &(c2, a2, d2) in &users[k + 1..] {
                if inst.is_connected_pair_at(c, c2, node) {
                    continue;
                }
                let first = a2 - d - inst.node_gamma(c, c2, node);
                let second = a - d2 - inst.node_gamma(c2, c, node);
                col.check(
                    ViolationKind::NodeSpacing,
                    first.max(second),
                    vec![at(c, node), at(c2, node)],
                );
            }
        }
    }

    for (&g, users) in &gate_users {
        let eps = inst.gates[g].eps;
        for (k, &(c, node, x, t)) in users.iter().enumerate() {
            for &(c2, _, y, t2) in &users[k + 1..] {
                if c == c2 || inst.is_connected_pair_at(c, c2, node) {
                    continue;
                }
                let first = t2 - t - eps.get(x, y);
                let second = t - t2 - eps.get(y, x);
                let cat = if first >= second {
                    GateCategory::from_directions(x, y)
                } else {
                    GateCategory::from_directions(y, x)
                };
                col.check(
                    ViolationKind::Gate(cat),
                    first.max(second),
                    vec![at(c, node), at(c2, node)],
                );
            }
        }
    }

    for conn in &inst.connections {
        let (p, s) = (conn.predecessor, conn.successor);
        let (Some(ep), Some(es)) = (sched.get(p), sched.get(s)) else {
            continue;
        };
        if ep.len() != inst.train(p).len() || es.len() != inst.train(s).len() {
            continue;
        }
        let last = ep[ep.len() - 1];
        let first = es[0];
        let subj = vec![at(p, conn.node), at(s, conn.node)];
        if last.route != first.route {
            col.check(ViolationKind::Connection, -1, subj.clone());
        }
        match mode {
            ConnectionMode::Turnaround => {
                col.check(
                    ViolationKind::Connection,
                    first.departure - last.arrival - conn.turnaround,
                    subj,
                );
            }
            ConnectionMode::Literal => {
                col.check(
                    ViolationKind::Connection,
                    -(first.departure - last.departure).abs(),
                    subj,
                );
                if es.len() > 1 {
                    col.check(
                        ViolationKind::Connection,
                        -(es[1].arrival - first.departure - conn.turnaround).abs(),
                        vec![at(s, conn.node), on_leg(s, 0)],
                    );
                }
            }
        }
    }

    col.out.sort();
    col.out
}

/// Number of constraint rows per family, as emitted by the MIP export.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintCounts {
    pub initial_time: usize,
    pub stop_bound: usize,
    pub speed: usize,
    pub edge_spacing: usize,
    pub node_spacing: usize,
    pub connection: usize,
    pub gate: usize,
}

impl ConstraintCounts {
    pub fn total(&self) -> usize {
        self.initial_time
            + self.stop_bound
            + self.speed
            + self.edge_spacing
            + self.node_spacing
            + self.connection
            + self.gate
    }
}

/// Edge tracks train `c` can use on leg `leg`: outgoing tracks of usable
/// routes at the leg's start that are also incoming tracks of usable routes
/// at its end.
pub(crate) fn usable_edge_tracks(inst: &Instance, c: TrainId, leg: usize) -> BTreeSet<TrackId> {
    let t = inst.train(c);
    let from = inst.node(t.itinerary[leg]);
    let to = inst.node(t.itinerary[leg + 1]);
    let outs: BTreeSet<TrackId> = inst
        .applicable_routes(c, leg)
        .iter()
        .map(|&r| from.routes[r as usize].outgoing_track)
        .collect();
    inst.applicable_routes(c, leg + 1)
        .iter()
        .map(|&r| to.routes[r as usize].incoming_track)
        .filter(|t| outs.contains(t))
        .collect()
}

pub(crate) fn usable_inside_tracks(inst: &Instance, c: TrainId, pos: usize) -> BTreeSet<TrackId> {
    let node = inst.node(inst.train(c).itinerary[pos]);
    inst.applicable_routes(c, pos)
        .iter()
        .map(|&r| node.routes[r as usize].inside_track)
        .collect()
}

/// (gate group, direction) uses train `c` may make at `pos` under some usable route.
pub(crate) fn usable_gates(
    inst: &Instance,
    c: TrainId,
    pos: usize,
) -> BTreeSet<(usize, GateDirection)> {
    let node = inst.node(inst.train(c).itinerary[pos]);
    inst.applicable_routes(c, pos)
        .iter()
        .flat_map(|&r| {
            inst.gate_usage(c, pos, &node.routes[r as usize])
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Analytic count of constraint rows per family for `inst`.
pub fn count_constraints(inst: &Instance, mode: ConnectionMode) -> ConstraintCounts {
    let mut n = ConstraintCounts::default();
    for t in &inst.trains {
        n.initial_time += 2 * t.len();
        n.stop_bound += t.len();
        n.speed += t.len() - 1;
    }

    // users per shared edge track, per inside track, per gate group
    let mut edge_users: BTreeMap<(EdgeId, bool, TrackId), usize> = BTreeMap::new();
    let mut node_users: BTreeMap<(NodeId, TrackId), Vec<TrainId>> = BTreeMap::new();
    let mut gate_users: BTreeMap<usize, Vec<(TrainId, NodeId, usize)>> = BTreeMap::new();
    for t in &inst.trains {
        let c = t.id;
        for pos in 0..t.len() {
            let node = t.itinerary[pos];
            if pos + 1 < t.len() {
                let leg = inst.leg(c, pos);
                for tr in usable_edge_tracks(inst, c, pos) {
                    *edge_users.entry((leg.edge, leg.forward, tr)).or_default() += 1;
                }
            }
            for u in usable_inside_tracks(inst, c, pos) {
                node_users.entry((node, u)).or_default().push(c);
            }
            let mut per_group: BTreeMap<usize, usize> = BTreeMap::new();
            for (g, _) in usable_gates(inst, c, pos) {
                *per_group.entry(g).or_default() += 1;
            }
            for (g, k) in per_group {
                gate_users.entry(g).or_default().push((c, node, k));
            }
        }
    }
    let pairs = |k: usize| k * k.saturating_sub(1) / 2;
    n.edge_spacing = edge_users.values().map(|&k| 4 * pairs(k)).sum();
    for (&(node, _), users) in &node_users {
        let excluded = inst
            .connections
            .iter()
            .filter(|k| {
                k.node == node && users.contains(&k.predecessor) && users.contains(&k.successor)
            })
            .count();
        n.node_spacing += 2 * (pairs(users.len()) - excluded);
    }
    for users in gate_users.values() {
        for (k, &(c, node, uses)) in users.iter().enumerate() {
            for &(c2, _, uses2) in &users[k + 1..] {
                if !inst.is_connected_pair_at(c, c2, node) {
                    n.gate += 2 * uses * uses2;
                }
            }
        }
    }
    for conn in &inst.connections {
        let routes = inst.applicable_routes(conn.successor, 0).len();
        n.connection += match mode {
            ConnectionMode::Turnaround => 1 + routes,
            ConnectionMode::Literal => {
                let next = usize::from(inst.train(conn.successor).len() > 1);
                1 + next + routes
            }
        };
    }
    n
}

/// One violation per line.
pub fn text_report(violations: &[Violation]) -> String {
    let mut s = String::new();
    for v in violations {
        s.push_str(&v.to_string());
        s.push('\n');
    }
    s
}

pub fn json_report(violations: &[Violation]) -> String {
    serde_json::to_string_pretty(violations).expect("violations serialize")
}
