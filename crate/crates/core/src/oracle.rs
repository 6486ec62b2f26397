//! Exhaustive solvers for tiny instances, used as ground truth.
//!
//! [`best_permutation_exhaustive`] decodes every permutation.
//! [`true_optimum_exhaustive`] ignores the decoder altogether: it enumerates
//! route choices and, for every pair of trains sharing a resource, which of
//! the two goes first. With routes and orders fixed every constraint is a
//! difference bound `x_v >= x_u + w`, so the componentwise least solution
//! (a longest-path computation from the floors) minimises every time at
//! once and hence the total delay.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::decoder::{decode, penalized_fitness, DecoderConfig, Permutation};
use crate::error::{Error, Result};
use crate::model::{GateDirection, Instance, Route, Time, TrainId};
use crate::schedule::{Event, Schedule};
use crate::validate::ConnectionMode;

pub const MAX_PERMUTATION_TRAINS: usize = 8;
pub const MAX_EXACT_TRAINS: usize = 3;
pub const MAX_EXACT_EVENTS: usize = 12;

/// Decodes all `|C|!` permutations in lexicographic order and returns the
/// first one reaching the minimum fitness.
pub fn best_permutation_exhaustive(
    inst: &Instance,
    cfg: &DecoderConfig,
) -> Result<(Permutation, Time)> {
    let n = inst.num_trains();
    if n > MAX_PERMUTATION_TRAINS {
        return Err(Error::TooLarge(format!(
            "{n} trains; exhaustive permutation search is limited to {MAX_PERMUTATION_TRAINS}"
        )));
    }
    let mut best: Option<(Permutation, Time)> = None;
    for order in (0..n).map(TrainId::from).permutations(n) {
        let perm = Permutation::from_vec_unchecked(order);
        let f = penalized_fitness(&decode(inst, &perm, cfg), inst);
        if best.as_ref().is_none_or(|b| f < b.1) {
            best = Some((perm, f));
        }
    }
    Ok(best.expect("at least the empty permutation"))
}

/// How candidate times are chosen by [`true_optimum_exhaustive`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeGrid {
    /// Exact: least solutions of the difference constraints.
    Tight,
    /// Depth-first search over multiples of the step (and the floors). Only
    /// optimal when the optimum lies on the grid.
    Uniform(Time),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactSolution {
    pub schedule: Schedule,
    /// Total arrival delay.
    pub fitness: Time,
}

/// `x[to] >= x[from] + w`
#[derive(Clone, Copy, Debug)]
struct Diff {
    from: usize,
    to: usize,
    w: Time,
}

struct Layout {
    offset: Vec<usize>,
    n_events: usize,
}

impl Layout {
    fn new(inst: &Instance) -> Self {
        let mut offset = Vec::with_capacity(inst.num_trains());
        let mut n = 0;
        for t in &inst.trains {
            offset.push(n);
            n += t.len();
        }
        Layout {
            offset,
            n_events: n,
        }
    }

    fn arr(&self, c: TrainId, pos: usize) -> usize {
        2 * (self.offset[c.index()] + pos)
    }

    fn dep(&self, c: TrainId, pos: usize) -> usize {
        self.arr(c, pos) + 1
    }
}

/// The true minimum total delay over all feasible schedules.
pub fn true_optimum_exhaustive(
    inst: &Instance,
    grid: TimeGrid,
    mode: ConnectionMode,
) -> Result<ExactSolution> {
    let n = inst.num_trains();
    let layout = Layout::new(inst);
    if n > MAX_EXACT_TRAINS || layout.n_events > MAX_EXACT_EVENTS {
        return Err(Error::TooLarge(format!(
            "{n} trains with {} events; exact search is limited to {MAX_EXACT_TRAINS} trains and {MAX_EXACT_EVENTS} events",
            layout.n_events
        )));
    }
    if let TimeGrid::Uniform(step) = grid {
        if step <= 0 {
            return Err(Error::Config("grid step must be positive".into()));
        }
    }

    let mut floors = vec![0; 2 * layout.n_events];
    for c in inst.train_ids() {
        for pos in 0..inst.train(c).len() {
            let f = inst.floor(c, pos);
            floors[layout.arr(c, pos)] = f.arrival;
            floors[layout.dep(c, pos)] = f.departure;
        }
    }
    let fixed = fixed_rows(inst, &layout, mode);
    let base_sum = inst.base_arrival_sum();

    let per_train: Vec<Vec<Vec<Route>>> =
        inst.train_ids().map(|c| route_sequences(inst, c)).collect();
    let mut best: Option<(Time, Vec<Time>, Vec<Vec<Route>>)> = None;
    for choice in per_train.iter().map(|v| v.iter()).multi_cartesian_product() {
        let routes: Vec<Vec<Route>> = choice.into_iter().cloned().collect();
        if !connections_agree(inst, &routes) {
            continue;
        }
        let disj = disjunctions(inst, &layout, &routes);
        let bound = best.as_ref().map(|b| b.0);
        let found = match grid {
            TimeGrid::Tight => {
                let mut search = Tight::new(&fixed, &floors, inst.horizon, &layout, inst, bound);
                search.run(&disj)
            }
            TimeGrid::Uniform(step) => {
                let mut search = Grid::new(
                    &fixed,
                    &disj,
                    &floors,
                    inst.horizon,
                    step,
                    &layout,
                    inst,
                    bound,
                );
                search.run()
            }
        };
        if let Some((obj, x)) = found {
            if best.as_ref().is_none_or(|b| obj < b.0) {
                best = Some((obj, x, routes));
            }
        }
    }
    let (obj, x, routes) = best.ok_or(Error::NoFeasibleSchedule)?;
    let mut schedule = Schedule::empty(n);
    for c in inst.train_ids() {
        let ev = (0..inst.train(c).len())
            .map(|pos| Event {
                arrival: x[layout.arr(c, pos)],
                departure: x[layout.dep(c, pos)],
                route: routes[c.index()][pos],
            })
            .collect();
        schedule.set(c, ev);
    }
    Ok(ExactSolution {
        schedule,
        fitness: obj - base_sum,
    })
}

/// Every linked route sequence usable by train `c`.
fn route_sequences(inst: &Instance, c: TrainId) -> Vec<Vec<Route>> {
    let t = inst.train(c);
    let mut seqs: Vec<Vec<Route>> = vec![Vec::new()];
    for pos in 0..t.len() {
        let node = inst.node(t.itinerary[pos]);
        let mut next = Vec::new();
        for s in &seqs {
            for &r in inst.applicable_routes(c, pos) {
                let route = node.routes[r as usize];
                if s.last()
                    .is_some_and(|p| p.outgoing_track != route.incoming_track)
                {
                    continue;
                }
                let mut s2 = s.clone();
                s2.push(route);
                next.push(s2);
            }
        }
        seqs = next;
    }
    seqs
}

fn connections_agree(inst: &Instance, routes: &[Vec<Route>]) -> bool {
    inst.connections.iter().all(|k| {
        let p = &routes[k.predecessor.index()];
        routes[k.successor.index()][0] == p[p.len() - 1]
    })
}

/// Rows that do not depend on routes or orders.
fn fixed_rows(inst: &Instance, l: &Layout, mode: ConnectionMode) -> Vec<Diff> {
    let mut rows = Vec::new();
    for c in inst.train_ids() {
        let t = inst.train(c);
        for pos in 0..t.len() {
            let sb = t.stop_bounds[pos];
            rows.push(Diff {
                from: l.arr(c, pos),
                to: l.dep(c, pos),
                w: sb.min,
            });
            rows.push(Diff {
                from: l.dep(c, pos),
                to: l.arr(c, pos),
                w: -sb.max,
            });
            if pos + 1 < t.len() {
                rows.push(Diff {
                    from: l.dep(c, pos),
                    to: l.arr(c, pos + 1),
                    w: t.travel_min[pos],
                });
            }
        }
    }
    for k in &inst.connections {
        let (p, s) = (k.predecessor, k.successor);
        let last = inst.train(p).len() - 1;
        match mode {
            ConnectionMode::Turnaround => {
                rows.push(Diff {
                    from: l.arr(p, last),
                    to: l.dep(s, 0),
                    w: k.turnaround,
                });
            }
            ConnectionMode::Literal => {
                rows.push(Diff {
                    from: l.dep(p, last),
                    to: l.dep(s, 0),
                    w: 0,
                });
                rows.push(Diff {
                    from: l.dep(s, 0),
                    to: l.dep(p, last),
                    w: 0,
                });
                if inst.train(s).len() > 1 {
                    rows.push(Diff {
                        from: l.dep(s, 0),
                        to: l.arr(s, 1),
                        w: k.turnaround,
                    });
                    rows.push(Diff {
                        from: l.arr(s, 1),
                        to: l.dep(s, 0),
                        w: -k.turnaround,
                    });
                }
            }
        }
    }
    rows
}

/// For each pair sharing a resource: the rows of "first goes first" and of
/// "second goes first".
fn disjunctions(inst: &Instance, l: &Layout, routes: &[Vec<Route>]) -> Vec<[Vec<Diff>; 2]> {
    let mut out = Vec::new();
    let ids: Vec<TrainId> = inst.train_ids().collect();
    for (i, &c) in ids.iter().enumerate() {
        for &c2 in &ids[i + 1..] {
            let (t, t2) = (inst.train(c), inst.train(c2));
            for p in 0..t.len() {
                for p2 in 0..t2.len() {
                    let node = t.itinerary[p];
                    if t2.itinerary[p2] == node && !inst.is_connected_pair_at(c, c2, node) {
                        let (r, r2) = (routes[c.index()][p], routes[c2.index()][p2]);
                        if r.inside_track == r2.inside_track {
                            out.push([
                                vec![Diff {
                                    from: l.dep(c, p),
                                    to: l.arr(c2, p2),
                                    w: inst.node_gamma(c, c2, node),
                                }],
                                vec![Diff {
                                    from: l.dep(c2, p2),
                                    to: l.arr(c, p),
                                    w: inst.node_gamma(c2, c, node),
                                }],
                            ]);
                        }
                        gate_pairs(inst, l, (c, p, &r), (c2, p2, &r2), &mut out);
                    }
                    if p + 1 < t.len() && p2 + 1 < t2.len() && inst.leg(c, p) == inst.leg(c2, p2) {
                        let (r, r2) = (routes[c.index()][p], routes[c2.index()][p2]);
                        if r.outgoing_track == r2.outgoing_track {
                            let e = inst.leg(c, p).edge;
                            let g12 = inst.edge_gamma(c, c2, e);
                            let g21 = inst.edge_gamma(c2, c, e);
                            out.push([
                                vec![
                                    Diff {
                                        from: l.dep(c, p),
                                        to: l.dep(c2, p2),
                                        w: g12,
                                    },
                                    Diff {
                                        from: l.arr(c, p + 1),
                                        to: l.arr(c2, p2 + 1),
                                        w: g12,
                                    },
                                ],
                                vec![
                                    Diff {
                                        from: l.dep(c2, p2),
                                        to: l.dep(c, p),
                                        w: g21,
                                    },
                                    Diff {
                                        from: l.arr(c2, p2 + 1),
                                        to: l.arr(c, p + 1),
                                        w: g21,
                                    },
                                ],
                            ]);
                        }
                    }
                }
            }
        }
    }
    out
}

fn gate_pairs(
    inst: &Instance,
    l: &Layout,
    (c, p, r): (TrainId, usize, &Route),
    (c2, p2, r2): (TrainId, usize, &Route),
    out: &mut Vec<[Vec<Diff>; 2]>,
) {
    let var = |c: TrainId, p: usize, dir: GateDirection| match dir {
        GateDirection::Incoming => l.arr(c, p),
        GateDirection::Outgoing => l.dep(c, p),
    };
    for (g, x) in inst.gate_usage(c, p, r) {
        for (g2, y) in inst.gate_usage(c2, p2, r2) {
            if g != g2 {
                continue;
            }
            let eps = inst.gates[g].eps;
            let (u, v) = (var(c, p, x), var(c2, p2, y));
            let (first, second) = (eps.get(x, y), eps.get(y, x));
            if first <= 0 && second <= 0 {
                // satisfied by either order
                continue;
            }
            out.push([
                vec![Diff {
                    from: u,
                    to: v,
                    w: first,
                }],
                vec![Diff {
                    from: v,
                    to: u,
                    w: second,
                }],
            ]);
        }
    }
}

fn arrival_sum(x: &[Time], l: &Layout, inst: &Instance) -> Time {
    inst.train_ids()
        .flat_map(|c| (0..inst.train(c).len()).map(move |p| (c, p)))
        .map(|(c, p)| x[l.arr(c, p)])
        .sum()
}

struct Tight<'a> {
    adj: Vec<Vec<(usize, Time)>>,
    x: Vec<Time>,
    horizon: Time,
    layout: &'a Layout,
    inst: &'a Instance,
    best: Option<(Time, Vec<Time>)>,
    bound: Option<Time>,
}

impl<'a> Tight<'a> {
    fn new(
        fixed: &[Diff],
        floors: &[Time],
        horizon: Time,
        layout: &'a Layout,
        inst: &'a Instance,
        bound: Option<Time>,
    ) -> Self {
        let mut adj = vec![Vec::new(); floors.len()];
        for d in fixed {
            adj[d.from].push((d.to, d.w));
        }
        Tight {
            adj,
            x: floors.to_vec(),
            horizon,
            layout,
            inst,
            best: None,
            bound,
        }
    }

    /// Raises `x` to the least solution of the current rows. False when the
    /// rows admit no solution within the horizon.
    fn propagate(
        adj: &[Vec<(usize, Time)>],
        x: &mut [Time],
        horizon: Time,
        start: &[usize],
    ) -> bool {
        let n = x.len();
        let mut updates = vec![0usize; n];
        let mut queue: std::collections::VecDeque<usize> = start.iter().copied().collect();
        while let Some(u) = queue.pop_front() {
            for &(v, w) in &adj[u] {
                if x[v] < x[u] + w {
                    x[v] = x[u] + w;
                    if x[v] > horizon {
                        return false;
                    }
                    updates[v] += 1;
                    // more updates than variables means a positive cycle
                    if updates[v] > n {
                        return false;
                    }
                    queue.push_back(v);
                }
            }
        }
        true
    }

    fn run(&mut self, disj: &[[Vec<Diff>; 2]]) -> Option<(Time, Vec<Time>)> {
        let all: Vec<usize> = (0..self.x.len()).collect();
        if self.x.iter().any(|&v| v > self.horizon)
            || !Self::propagate(&self.adj, &mut self.x, self.horizon, &all)
        {
            return None;
        }
        let x = self.x.clone();
        self.dfs(disj, 0, x);
        self.best.take()
    }

    fn cutoff(&self) -> Option<Time> {
        match (&self.best, self.bound) {
            (Some(b), Some(o)) => Some(b.0.min(o)),
            (Some(b), None) => Some(b.0),
            (None, o) => o,
        }
    }

    fn dfs(&mut self, disj: &[[Vec<Diff>; 2]], k: usize, x: Vec<Time>) {
        let obj = arrival_sum(&x, self.layout, self.inst);
        if self.cutoff().is_some_and(|c| obj >= c) {
            return;
        }
        if k == disj.len() {
            self.best = Some((obj, x));
            return;
        }
        // try the option the current solution already satisfies first
        let holds = |rows: &[Diff]| rows.iter().all(|d| x[d.to] >= x[d.from] + d.w);
        let order = if !holds(&disj[k][0]) && holds(&disj[k][1]) {
            [1, 0]
        } else {
            [0, 1]
        };
        for o in order {
            let rows = &disj[k][o];
            let mut y = x.clone();
            for d in rows {
                self.adj[d.from].push((d.to, d.w));
            }
            let start: Vec<usize> = rows.iter().map(|d| d.from).collect();
            if Self::propagate(&self.adj, &mut y, self.horizon, &start) {
                self.dfs(disj, k + 1, y);
            }
            for d in rows {
                self.adj[d.from].pop();
            }
        }
    }
}

struct Grid<'a> {
    fixed: &'a [Diff],
    disj: &'a [[Vec<Diff>; 2]],
    floors: &'a [Time],
    horizon: Time,
    step: Time,
    layout: &'a Layout,
    inst: &'a Instance,
    best: Option<(Time, Vec<Time>)>,
    bound: Option<Time>,
    is_arrival: Vec<bool>,
}

impl<'a> Grid<'a> {
    #[allow(clippy::too_many_arguments)]
    fn new(
        fixed: &'a [Diff],
        disj: &'a [[Vec<Diff>; 2]],
        floors: &'a [Time],
        horizon: Time,
        step: Time,
        layout: &'a Layout,
        inst: &'a Instance,
        bound: Option<Time>,
    ) -> Self {
        let is_arrival = (0..floors.len()).map(|v| v % 2 == 0).collect();
        Grid {
            fixed,
            disj,
            floors,
            horizon,
            step,
            layout,
            inst,
            best: None,
            bound,
            is_arrival,
        }
    }

    fn run(&mut self) -> Option<(Time, Vec<Time>)> {
        let mut x = vec![Time::MIN; self.floors.len()];
        self.dfs(0, &mut x);
        self.best.take()
    }

    /// Checks every row whose variables are all assigned (`x[v] != MIN`).
    fn consistent(&self, x: &[Time]) -> bool {
        let set = |v: usize| x[v] != Time::MIN;
        let ok = |d: &Diff| !set(d.from) || !set(d.to) || x[d.to] >= x[d.from] + d.w;
        self.fixed.iter().all(ok)
            && self
                .disj
                .iter()
                .all(|opts| opts.iter().any(|rows| rows.iter().all(ok)))
    }

    fn dfs(&mut self, v: usize, x: &mut Vec<Time>) {
        // optimistic bound: unassigned arrivals at their floors
        let lb: Time = (0..x.len())
            .filter(|&u| self.is_arrival[u])
            .map(|u| {
                if x[u] == Time::MIN {
                    self.floors[u]
                } else {
                    x[u]
                }
            })
            .sum();
        let cutoff = match (&self.best, self.bound) {
            (Some(b), Some(o)) => Some(b.0.min(o)),
            (Some(b), None) => Some(b.0),
            (None, o) => o,
        };
        if cutoff.is_some_and(|c| lb >= c) {
            return;
        }
        if v == x.len() {
            let obj = arrival_sum(x, self.layout, self.inst);
            self.best = Some((obj, x.clone()));
            return;
        }
        let floor = self.floors[v];
        let first_mult = (floor + self.step - 1).div_euclid(self.step) * self.step;
        let mut candidates = vec![floor];
        let mut t = first_mult;
        while t <= self.horizon {
            if t != floor {
                candidates.push(t);
            }
            t += self.step;
        }
        for t in candidates {
            x[v] = t;
            if self.consistent(x) {
                self.dfs(v + 1, x);
            }
        }
        x[v] = Time::MIN;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::overtake_motif;
    use crate::model::fixtures::*;
    use crate::model::*;
    use crate::validate::validate_schedule;

    fn lone_train(delay: Time) -> Instance {
        let (nodes, edges) = line(3);
        let ids = [NodeId(0), NodeId(1), NodeId(2)];
        let rs = [nodes[0].routes[0], nodes[1].routes[1], nodes[2].routes[0]];
        let t = line_train(0, &ids, 0, 120, 60, &rs);
        let doc = InstanceDoc {
            nodes,
            edges,
            trains: vec![t],
            spacing: spacing(60, 60),
            gates: vec![],
            connections: vec![],
            perturbation: Some(Perturbation {
                train: TrainId(0),
                location: PerturbationLocation::AtNode(NodeId(0)),
                delay,
            }),
            horizon: 3_000,
        };
        apply_perturbation(&Instance::new(doc).unwrap())
    }

    #[test]
    fn single_train_permutation_oracle() {
        let inst = lone_train(120);
        let (p, f) = best_permutation_exhaustive(&inst, &DecoderConfig::default()).unwrap();
        assert_eq!(p, Permutation::identity(1));
        let direct = decode(&inst, &p, &DecoderConfig::default());
        assert_eq!(f, penalized_fitness(&direct, &inst));
    }

    #[test]
    fn unperturbed_optimum_is_base() {
        let inst = lone_train(0);
        let sol =
            true_optimum_exhaustive(&inst, TimeGrid::Tight, ConnectionMode::Turnaround).unwrap();
        assert_eq!(sol.fitness, 0);
        assert_eq!(sol.schedule, Schedule::base(&inst));
    }

    #[test]
    fn grid_and_tight_agree_on_lattice_instance() {
        let inst = lone_train(120);
        let tight =
            true_optimum_exhaustive(&inst, TimeGrid::Tight, ConnectionMode::Turnaround).unwrap();
        let grid =
            true_optimum_exhaustive(&inst, TimeGrid::Uniform(60), ConnectionMode::Turnaround)
                .unwrap();
        assert_eq!(tight.fitness, grid.fitness);
        assert_eq!(tight.fitness, 240);
    }

    #[test]
    fn overtake_motif_exposes_the_gap() {
        let inst = apply_perturbation(&overtake_motif());
        let (_, decoder_best) =
            best_permutation_exhaustive(&inst, &DecoderConfig::default()).unwrap();
        let exact =
            true_optimum_exhaustive(&inst, TimeGrid::Tight, ConnectionMode::Turnaround).unwrap();
        assert!(validate_schedule(&inst, &exact.schedule, ConnectionMode::Turnaround).is_empty());
        assert_eq!(exact.schedule.total_delay(&inst), exact.fitness);
        // hand-computed: both insertion orders give 1620; letting the fast
        // train overtake at the middle node gives 1440
        assert_eq!(decoder_best, 1620);
        assert!(exact.fitness <= 1440);
        assert!(exact.fitness < decoder_best);
    }

    #[test]
    fn size_guards() {
        use crate::generate::{generate_instance, GeneratorParams};
        let p = GeneratorParams {
            trains: 9,
            ..Default::default()
        };
        let inst = generate_instance(&p).unwrap();
        assert!(matches!(
            best_permutation_exhaustive(&inst, &DecoderConfig::default()),
            Err(Error::TooLarge(_))
        ));
        assert!(matches!(
            true_optimum_exhaustive(&inst, TimeGrid::Tight, ConnectionMode::Turnaround),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn infeasible_window_is_reported() {
        let mut doc = lone_train(0).into_doc();
        doc.perturbation = Some(Perturbation {
            train: TrainId(0),
            location: PerturbationLocation::AtNode(NodeId(0)),
            delay: 2_900,
        });
        let inst = apply_perturbation(&Instance::new(doc).unwrap());
        assert!(matches!(
            true_optimum_exhaustive(&inst, TimeGrid::Tight, ConnectionMode::Turnaround),
            Err(Error::NoFeasibleSchedule)
        ));
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use crate::generate::{generate_instance, GeneratorParams, Topology};
    use crate::model::apply_perturbation;
    use crate::validate::validate_schedule;
    use proptest::prelude::*;

    fn small(seed: u64, trains: usize) -> Instance {
        let p = GeneratorParams {
            topology: Topology::Line,
            nodes: 3,
            trains,
            min_len: 2,
            max_len: 3,
            window: 1_200,
            seed,
            ..Default::default()
        };
        apply_perturbation(&generate_instance(&p).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn exact_never_worse_than_decoder(seed in 0u64..10_000, trains in 1usize..=3) {
            let inst = small(seed, trains);
            let cfg = DecoderConfig::default();
            let (perm, best) = best_permutation_exhaustive(&inst, &cfg).unwrap();
            let res = decode(&inst, &perm, &cfg);
            match true_optimum_exhaustive(&inst, TimeGrid::Tight, ConnectionMode::Turnaround) {
                Ok(sol) => {
                    prop_assert!(validate_schedule(&inst, &sol.schedule, ConnectionMode::Turnaround).is_empty());
                    prop_assert_eq!(sol.schedule.total_delay(&inst), sol.fitness);
                    if res.complete {
                        prop_assert!(sol.fitness <= best);
                    }
                }
                Err(Error::TooLarge(_)) => {}
                Err(e) => prop_assert!(!res.complete, "exact search failed ({e}) but a decode completed"),
            }
        }
    }
}
