//! Semi-greedy insertion scheduler: maps a permutation of trains to a
//! schedule.
//!
//! Trains are taken from a pending queue (initially the permutation) and
//! inserted node by node. At each node every usable route is tried: arrival
//! and departure start at their floors and are pushed forward until no
//! constraint against already-placed trains is broken. The route giving the
//! earliest departure wins; ties go to the earlier arrival, then to the
//! lowest route index.
//!
//! Pushing forward cannot fix a conflict with a train that already entered
//! the same edge track ahead of the current one and would be overtaken. Such
//! an obstacle is kicked: removed from the schedule and put back at the
//! front of the queue. A train kicked `kick_limit` times can no longer be
//! kicked; the train that needed it removed is left unscheduled instead.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GateDirection, Instance, Route, Time, TrainId};
use crate::schedule::{Event, Schedule};
use crate::validate::ConnectionMode;

/// A priority order over all trains of an instance.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Permutation(Vec<TrainId>);

impl Permutation {
    /// Checks that `order` contains each of the `n` trains exactly once.
    pub fn new(order: Vec<TrainId>, n: usize) -> Result<Self> {
        if order.len() != n {
            return Err(Error::Permutation(format!(
                "expected {n} trains, got {}",
                order.len()
            )));
        }
        let mut seen = vec![false; n];
        for &c in &order {
            if c.index() >= n {
                return Err(Error::Permutation(format!("unknown train {c}")));
            }
            if std::mem::replace(&mut seen[c.index()], true) {
                return Err(Error::Permutation(format!("train {c} appears twice")));
            }
        }
        Ok(Permutation(order))
    }

    pub fn identity(n: usize) -> Self {
        Permutation((0..n).map(TrainId::from).collect())
    }

    /// Internal constructor for orders already known to be valid.
    pub(crate) fn from_vec_unchecked(order: Vec<TrainId>) -> Self {
        Permutation(order)
    }

    pub fn reversed(&self) -> Self {
        Permutation(self.0.iter().rev().copied().collect())
    }

    pub fn as_slice(&self) -> &[TrainId] {
        &self.0
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [TrainId] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Parses one train id per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str, n: usize) -> Result<Self> {
        let mut order = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let id: u32 = line.parse().map_err(|_| Error::Parse {
                line: k + 1,
                column: 1,
                message: format!("expected a train id, found {line:?}"),
            })?;
            order.push(TrainId(id));
        }
        Self::new(order, n)
    }

    pub fn to_text(&self) -> String {
        self.0.iter().map(|c| format!("{c}\n")).collect()
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (k, c) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str("]")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderConfig {
    /// How many times one train may be removed by kicks (or deferred behind
    /// its connection predecessor) during a single decode.
    pub kick_limit: u32,
    pub connection_mode: ConnectionMode,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            kick_limit: 5,
            connection_mode: ConnectionMode::Turnaround,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DecodeResult {
    pub schedule: Schedule,
    /// Scheduled trains in the order they were finally inserted.
    pub realized_order: Vec<TrainId>,
    pub kick_counts: Vec<u32>,
    pub unscheduled: BTreeSet<TrainId>,
    pub complete: bool,
}

impl DecodeResult {
    pub fn fitness(&self, inst: &Instance) -> Time {
        penalized_fitness(self, inst)
    }

    pub fn total_kicks(&self) -> u64 {
        self.kick_counts.iter().map(|&k| u64::from(k)).sum()
    }
}

/// Fitness floor of any incomplete decode: `|C| * max|I(c)| * H`.
pub fn penalty_base(inst: &Instance) -> Time {
    inst.num_trains() as Time * inst.max_itinerary_len() as Time * inst.horizon
}

/// Total arrival delay for complete decodes; otherwise `penalty_base` plus
/// one horizon per unscheduled train, which exceeds any complete value.
pub fn penalized_fitness(result: &DecodeResult, inst: &Instance) -> Time {
    if result.complete {
        result.schedule.total_delay(inst)
    } else {
        penalty_base(inst) + result.unscheduled.len() as Time * inst.horizon
    }
}

/// A lower bound `other + spacing` on the time being placed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ForwardConflict {
    pub other: Time,
    pub spacing: Time,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HorizonExceeded;

/// Smallest time not earlier than `t` satisfying `t >= other + spacing`.
pub fn resolve_forward(
    t: Time,
    conflict: ForwardConflict,
    horizon: Time,
) -> std::result::Result<Time, HorizonExceeded> {
    let t = t.max(conflict.other + conflict.spacing);
    if t > horizon {
        Err(HorizonExceeded)
    } else {
        Ok(t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KickLimitExceeded(pub TrainId);

/// Grants the removal of `obstacle` unless it has already been kicked
/// `limit` times.
pub fn request_kick(
    obstacle: TrainId,
    kick_counts: &[u32],
    limit: u32,
) -> std::result::Result<TrainId, KickLimitExceeded> {
    if kick_counts[obstacle.index()] >= limit {
        Err(KickLimitExceeded(obstacle))
    } else {
        Ok(obstacle)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InsertOutcome {
    /// Events for every itinerary position and the trains that must be
    /// removed to make room, in the order the kicks were decided.
    Placed {
        events: Vec<Event>,
        kicked: Vec<TrainId>,
    },
    /// Some node could only be passed by kicking a train at its kick limit.
    KickBlocked,
    /// Some node has no route admitting times within the horizon.
    Failed,
}

enum RouteEval {
    Ok {
        a: Time,
        d: Time,
        kicks: Vec<TrainId>,
    },
    Blocked,
    Infeasible,
}

/// Partial schedule under construction during a decode.
pub struct DecoderState<'a> {
    inst: &'a Instance,
    cfg: DecoderConfig,
    sched: Schedule,
    kicks: Vec<u32>,
}

const STEP_LIMIT: u64 = 50_000_000;

impl<'a> DecoderState<'a> {
    pub fn new(inst: &'a Instance, cfg: DecoderConfig) -> Self {
        DecoderState {
            inst,
            cfg,
            sched: Schedule::empty(inst.num_trains()),
            kicks: vec![0; inst.num_trains()],
        }
    }

    pub fn schedule(&self) -> &Schedule {
        &self.sched
    }

    pub fn kick_counts(&self) -> &[u32] {
        &self.kicks
    }

    /// Works out where `c` would go given the trains placed so far. The
    /// state is not modified; kicks are returned for the caller to apply.
    pub fn insert_train(&self, c: TrainId) -> InsertOutcome {
        let inst = self.inst;
        let t = inst.train(c);
        let mut removed = vec![false; inst.num_trains()];
        let ancestors = self.ancestors(c);
        let mut events: Vec<Event> = Vec::with_capacity(t.len());
        let mut kicked = Vec::new();

        for pos in 0..t.len() {
            let node = inst.node(t.itinerary[pos]);
            let prev = events.last().copied();
            let pinned = if pos == 0 {
                inst.connection_into(c)
                    .and_then(|k| self.sched.get(k.predecessor))
                    .map(|ev| ev[ev.len() - 1].route)
            } else {
                None
            };
            let mut best: Option<(Time, Time, u16, Vec<TrainId>)> = None;
            let mut blocked = false;
            for &r in inst.applicable_routes(c, pos) {
                let route = node.routes[r as usize];
                if let Some(p) = prev {
                    if p.route.outgoing_track != route.incoming_track {
                        continue;
                    }
                }
                if pinned.is_some_and(|p| p != route) {
                    continue;
                }
                match self.eval_route(c, pos, &route, prev.as_ref(), &removed, &ancestors) {
                    RouteEval::Ok { a, d, kicks } => {
                        if best.as_ref().is_none_or(|b| (d, a) < (b.1, b.0)) {
                            best = Some((a, d, r, kicks));
                        }
                    }
                    RouteEval::Blocked => blocked = true,
                    RouteEval::Infeasible => {}
                }
            }
            let Some((a, d, r, kicks)) = best else {
                return if blocked {
                    InsertOutcome::KickBlocked
                } else {
                    InsertOutcome::Failed
                };
            };
            for k in kicks {
                for x in self.with_successors(k) {
                    removed[x.index()] = true;
                }
                kicked.push(k);
            }
            events.push(Event {
                arrival: a,
                departure: d,
                route: node.routes[r as usize],
            });
        }
        InsertOutcome::Placed { events, kicked }
    }

    /// Predecessor chain of `c` through connections.
    fn ancestors(&self, c: TrainId) -> Vec<TrainId> {
        let mut out = Vec::new();
        let mut cur = c;
        while let Some(k) = self.inst.connection_into(cur) {
            cur = k.predecessor;
            out.push(cur);
        }
        out
    }

    /// `c` followed by its successor chain.
    fn with_successors(&self, c: TrainId) -> Vec<TrainId> {
        let mut out = vec![c];
        let mut cur = c;
        while let Some(k) = self.inst.connection_from(cur) {
            cur = k.successor;
            out.push(cur);
        }
        out
    }

    fn eval_route(
        &self,
        c: TrainId,
        pos: usize,
        route: &Route,
        prev: Option<&Event>,
        removed: &[bool],
        ancestors: &[TrainId],
    ) -> RouteEval {
        let inst = self.inst;
        let h = inst.horizon;
        let t = inst.train(c);
        let last = t.len() - 1;
        let node = t.itinerary[pos];
        let floor = inst.floor(c, pos);
        let sb = t.stop_bounds[pos];
        let mode = self.cfg.connection_mode;
        let pred = inst.connection_into(c).filter(|_| pos <= 1).and_then(|k| {
            self.sched
                .get(k.predecessor)
                .map(|ev| (k, ev[ev.len() - 1]))
        });

        let mut local: Vec<TrainId> = Vec::new();
        let present = |x: TrainId, local: &[TrainId]| {
            x != c && !removed[x.index()] && !local.contains(&x) && self.sched.is_scheduled(x)
        };

        let mut a = floor.arrival;
        if let Some(p) = prev {
            a = a.max(p.departure + t.travel_min[pos - 1]);
        }
        let mut d = floor.departure.max(a + sb.min);
        let gates: Vec<(usize, GateDirection)> = inst.gate_usage(c, pos, route).collect();

        let mut steps: u64 = 0;
        'fix: loop {
            steps += 1;
            debug_assert!(steps < STEP_LIMIT, "fixpoint loop does not converge");
            if a > h || d > h {
                return RouteEval::Infeasible;
            }
            if a < floor.arrival {
                a = floor.arrival;
                continue;
            }
            if d < floor.departure {
                d = floor.departure;
                continue;
            }
            if d < a + sb.min {
                d = a + sb.min;
                continue;
            }
            if d - a > sb.max {
                a = d - sb.max;
                continue;
            }
            if let Some(p) = prev {
                let lo = p.departure + t.travel_min[pos - 1];
                if a < lo {
                    a = lo;
                    continue;
                }
            }

            // arrival row of the incoming leg: the order on the edge is fixed
            // by the departures at the previous node
            if let Some(p) = prev {
                let leg = inst.leg(c, pos - 1);
                let from = t.itinerary[pos - 1];
                for &(c2, p2) in inst.visits(from) {
                    if !present(c2, &local)
                        || p2 + 1 >= inst.train(c2).len()
                        || inst.leg(c2, p2) != leg
                    {
                        continue;
                    }
                    let ev2 = self.sched.get(c2).expect("present");
                    if ev2[p2].route.outgoing_track != route.incoming_track {
                        continue;
                    }
                    let a2 = ev2[p2 + 1].arrival;
                    if ev2[p2].departure <= p.departure {
                        let lo = a2 + inst.edge_gamma(c2, c, leg.edge);
                        if a < lo {
                            a = lo;
                            continue 'fix;
                        }
                    } else if a > a2 - inst.edge_gamma(c, c2, leg.edge) {
                        // c would overtake c2 on the edge
                        if ancestors.contains(&c2) {
                            return RouteEval::Infeasible;
                        }
                        if request_kick(c2, &self.kicks, self.cfg.kick_limit).is_err() {
                            return RouteEval::Blocked;
                        }
                        local.extend(self.with_successors(c2));
                        continue 'fix;
                    }
                }
            }

            // departure row of the outgoing leg: no order yet, move past
            if pos < last {
                let leg = inst.leg(c, pos);
                for &(c2, p2) in inst.visits(node) {
                    if !present(c2, &local)
                        || p2 + 1 >= inst.train(c2).len()
                        || inst.leg(c2, p2) != leg
                    {
                        continue;
                    }
                    let ev2 = self.sched.get(c2).expect("present");
                    if ev2[p2].route.outgoing_track != route.outgoing_track {
                        continue;
                    }
                    let d2 = ev2[p2].departure;
                    let after = d2 + inst.edge_gamma(c2, c, leg.edge);
                    if d2 - inst.edge_gamma(c, c2, leg.edge) < d && d < after {
                        d = after;
                        continue 'fix;
                    }
                }
            }

            for &(c2, p2) in inst.visits(node) {
                if !present(c2, &local) || inst.is_connected_pair_at(c, c2, node) {
                    continue;
                }
                let e2 = self.sched.get(c2).expect("present")[p2];
                if e2.route.inside_track != route.inside_track {
                    continue;
                }
                let after = e2.departure + inst.node_gamma(c2, c, node);
                if a < after && e2.arrival < d + inst.node_gamma(c, c2, node) {
                    a = after;
                    continue 'fix;
                }
            }

            if !gates.is_empty() {
                for &(c2, p2) in inst.visits(node) {
                    if !present(c2, &local) || inst.is_connected_pair_at(c, c2, node) {
                        continue;
                    }
                    let e2 = self.sched.get(c2).expect("present")[p2];
                    for (g2, y) in inst.gate_usage(c2, p2, &e2.route) {
                        let t2 = match y {
                            GateDirection::Incoming => e2.arrival,
                            GateDirection::Outgoing => e2.departure,
                        };
                        for &(g, x) in &gates {
                            if g != g2 {
                                continue;
                            }
                            let eps = inst.gates[g].eps;
                            let mine = match x {
                                GateDirection::Incoming => &mut a,
                                GateDirection::Outgoing => &mut d,
                            };
                            let after = t2 + eps.get(y, x);
                            if *mine < after && t2 < *mine + eps.get(x, y) {
                                *mine = after;
                                continue 'fix;
                            }
                        }
                    }
                }
            }

            if let Some((k, pe)) = pred {
                match (mode, pos) {
                    (ConnectionMode::Turnaround, 0) => {
                        let lo = pe.arrival + k.turnaround;
                        if d < lo {
                            d = lo;
                            continue;
                        }
                    }
                    (ConnectionMode::Literal, 0) => {
                        if d < pe.departure {
                            d = pe.departure;
                            continue;
                        }
                        if d > pe.departure {
                            return RouteEval::Infeasible;
                        }
                    }
                    (ConnectionMode::Literal, 1) => {
                        let target = prev.expect("pos 1").departure + k.turnaround;
                        if a < target {
                            a = target;
                            continue;
                        }
                        if a > target {
                            return RouteEval::Infeasible;
                        }
                    }
                    _ => {}
                }
            }
            break;
        }
        // only kicks that were decided, not their cascaded successors
        let kicks = local
            .iter()
            .copied()
            .filter(|&x| {
                inst.connection_into(x)
                    .is_none_or(|k| !local.contains(&k.predecessor))
            })
            .collect();
        RouteEval::Ok { a, d, kicks }
    }
}

/// Decodes `perm` into a schedule. Never fails: trains that cannot be placed
/// end up in `unscheduled`.
pub fn decode(inst: &Instance, perm: &Permutation, cfg: &DecoderConfig) -> DecodeResult {
    let n = inst.num_trains();
    let mut state = DecoderState::new(inst, *cfg);
    let mut queue: VecDeque<TrainId> = perm.as_slice().iter().copied().collect();
    let mut realized: Vec<TrainId> = Vec::with_capacity(n);
    let mut unscheduled = BTreeSet::new();

    while let Some(c) = queue.pop_front() {
        if state.sched.is_scheduled(c) || unscheduled.contains(&c) {
            continue;
        }
        if let Some(k) = inst.connection_into(c) {
            let p = k.predecessor;
            if !state.sched.is_scheduled(p) {
                if unscheduled.contains(&p) {
                    unscheduled.insert(c);
                    continue;
                }
                state.kicks[c.index()] += 1;
                if state.kicks[c.index()] > cfg.kick_limit {
                    unscheduled.insert(c);
                    continue;
                }
                let at = queue
                    .iter()
                    .position(|&x| x == p)
                    .expect("pending predecessor is queued");
                queue.insert(at + 1, c);
                continue;
            }
        }
        match state.insert_train(c) {
            InsertOutcome::Placed { events, kicked } => {
                let mut front: Vec<TrainId> = Vec::new();
                for k in kicked {
                    if !state.sched.is_scheduled(k) {
                        continue;
                    }
                    state.kicks[k.index()] += 1;
                    for x in state.with_successors(k) {
                        if state.sched.remove(x).is_some() {
                            realized.retain(|&y| y != x);
                            front.push(x);
                        }
                    }
                }
                state.sched.set(c, events);
                realized.push(c);
                for &x in front.iter().rev() {
                    queue.push_front(x);
                }
            }
            InsertOutcome::KickBlocked | InsertOutcome::Failed => {
                unscheduled.insert(c);
            }
        }
    }

    let complete = unscheduled.is_empty();
    DecodeResult {
        schedule: state.sched,
        realized_order: realized,
        kick_counts: state.kicks,
        unscheduled,
        complete,
    }
}
