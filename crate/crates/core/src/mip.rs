//! Mixed-integer export in LP text format, plus warm starts.
//!
//! Times are integer variables `a_c_i`, `d_c_i` in `[0, H]`. Route choice is
//! one binary `x_c_i_r` per applicable route (r indexes the node's route
//! list). Every pair of trains that may share an edge track, an inside track
//! or a gate gets one ordering binary `y_c_cp_res` per shared resource;
//! `y = 1` means train `c` goes first. Spacing rows are big-M disjunctions
//! switched off unless both trains' routes select the resource.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{GateDirection, Instance, Time, TrackId, TrainId};
use crate::schedule::Schedule;
use crate::validate::{
    usable_edge_tracks, usable_gates, usable_inside_tracks, validate_schedule, ConnectionMode,
    ConstraintCounts,
};

/// Default cap on the number of rows an export may emit.
pub const DEFAULT_ROW_CAP: usize = 2_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MipOptions {
    pub connection_mode: ConnectionMode,
    pub row_cap: usize,
}

impl Default for MipOptions {
    fn default() -> Self {
        MipOptions {
            connection_mode: ConnectionMode::Turnaround,
            row_cap: DEFAULT_ROW_CAP,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowFamily {
    InitialTime,
    StopBound,
    Speed,
    EdgeSpacing,
    NodeSpacing,
    Connection,
    Gate,
    RouteChoice,
    RouteLink,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Integer,
    Binary,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: i64,
    pub upper: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Sense {
    Ge,
    Le,
    Eq,
}

impl Sense {
    fn symbol(self) -> &'static str {
        match self {
            Sense::Ge => ">=",
            Sense::Le => "<=",
            Sense::Eq => "=",
        }
    }

    pub fn holds(self, lhs: i64, rhs: i64) -> bool {
        match self {
            Sense::Ge => lhs >= rhs,
            Sense::Le => lhs <= rhs,
            Sense::Eq => lhs == rhs,
        }
    }
}

/// `Σ coef·var  sense  rhs`; variables are indices into [`MipModel::vars`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Row {
    pub name: String,
    pub family: RowFamily,
    pub terms: Vec<(i64, usize)>,
    pub sense: Sense,
    pub rhs: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MipModel {
    pub big_m: i64,
    pub vars: Vec<Variable>,
    pub rows: Vec<Row>,
    /// Objective is `Σ coef·var + objective_constant`.
    pub objective: Vec<(i64, usize)>,
    pub objective_constant: i64,
}

/// Resource shared by a pair of trains, as used in `y` names.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Resource {
    Edge {
        edge: usize,
        forward: bool,
        track: TrackId,
    },
    Node {
        node: usize,
        track: TrackId,
    },
    Gate {
        group: usize,
        first: GateDirection,
        second: GateDirection,
    },
}

impl Resource {
    fn tag(&self) -> String {
        let dir = |d: GateDirection| match d {
            GateDirection::Incoming => 'i',
            GateDirection::Outgoing => 'o',
        };
        match *self {
            Resource::Edge {
                edge,
                forward,
                track,
            } => {
                format!("e{edge}{}t{track}", if forward { 'f' } else { 'b' })
            }
            Resource::Node { node, track } => format!("n{node}t{track}"),
            Resource::Gate {
                group,
                first,
                second,
            } => format!("g{group}{}{}", dir(first), dir(second)),
        }
    }
}

struct Builder<'a> {
    inst: &'a Instance,
    vars: Vec<Variable>,
    index: HashMap<String, usize>,
    rows: Vec<Row>,
    cap: usize,
}

impl<'a> Builder<'a> {
    fn var(&mut self, name: String, kind: VarKind, lower: i64, upper: i64) -> usize {
        let k = self.vars.len();
        self.index.insert(name.clone(), k);
        self.vars.push(Variable {
            name,
            kind,
            lower,
            upper,
        });
        k
    }

    fn row(
        &mut self,
        name: String,
        family: RowFamily,
        terms: Vec<(i64, usize)>,
        sense: Sense,
        rhs: i64,
    ) -> Result<()> {
        if self.rows.len() >= self.cap {
            return Err(Error::TooLarge(format!(
                "the model exceeds the row cap of {}; raise it or shrink the instance",
                self.cap
            )));
        }
        self.rows.push(Row {
            name,
            family,
            terms,
            sense,
            rhs,
        });
        Ok(())
    }

    fn a(&self, c: TrainId, pos: usize) -> usize {
        self.index[&format!("a_{c}_{pos}")]
    }

    fn d(&self, c: TrainId, pos: usize) -> usize {
        self.index[&format!("d_{c}_{pos}")]
    }

    fn x(&self, c: TrainId, pos: usize, r: u16) -> usize {
        self.index[&format!("x_{c}_{pos}_{r}")]
    }

    /// Route binaries of `c` at `pos` whose routes satisfy `pred`.
    fn x_where(
        &self,
        c: TrainId,
        pos: usize,
        pred: impl Fn(&crate::model::Route) -> bool,
    ) -> Vec<usize> {
        let node = self.inst.node(self.inst.train(c).itinerary[pos]);
        self.inst
            .applicable_routes(c, pos)
            .iter()
            .filter(|&&r| pred(&node.routes[r as usize]))
            .map(|&r| self.x(c, pos, r))
            .collect()
    }

    /// Adds the two big-M rows of one disjunction between event variables.
    /// `u`, `v` belong to `c` and `c2`; the first row enforces
    /// `v >= u + w12` when `y = 1`, the second `u >= v + w21` when `y = 0`.
    #[allow(clippy::too_many_arguments)]
    fn disjunction(
        &mut self,
        family: RowFamily,
        stem: &str,
        y: usize,
        (u, v): (usize, usize),
        (w12, w21): (Time, Time),
        active: &[usize],
        m: i64,
    ) -> Result<()> {
        // v - u - M·y - M·Σactive >= w12 - (1 + groups)·M
        let groups = 2;
        let mut t1 = vec![(1, v), (-1, u), (-m, y)];
        t1.extend(active.iter().map(|&x| (-m, x)));
        self.row(
            format!("{stem}_1"),
            family,
            t1,
            Sense::Ge,
            w12 - (1 + groups) * m,
        )?;
        // u - v + M·y - M·Σactive >= w21 - groups·M
        let mut t2 = vec![(1, u), (-1, v), (m, y)];
        t2.extend(active.iter().map(|&x| (-m, x)));
        self.row(format!("{stem}_2"), family, t2, Sense::Ge, w21 - groups * m)
    }
}

/// M = H + the largest spacing constant.
fn big_m(inst: &Instance) -> i64 {
    let s = &inst.spacing;
    let spacing = s
        .edge
        .iter()
        .map(|e| e.gamma)
        .chain(s.node.iter().map(|e| e.gamma))
        .chain(
            inst.gates
                .iter()
                .flat_map(|g| [g.eps.ii, g.eps.io, g.eps.oi, g.eps.oo]),
        )
        .chain([s.edge_default, s.node_default])
        .max()
        .unwrap_or(0);
    inst.horizon + spacing
}

/// Builds the model. Row order, and hence the LP text, is deterministic.
pub fn build_model(inst: &Instance, opts: &MipOptions) -> Result<MipModel> {
    let h = inst.horizon;
    let m = big_m(inst);
    let mut b = Builder {
        inst,
        vars: Vec::new(),
        index: HashMap::new(),
        rows: Vec::new(),
        cap: opts.row_cap,
    };

    for c in inst.train_ids() {
        let t = inst.train(c);
        for pos in 0..t.len() {
            b.var(format!("a_{c}_{pos}"), VarKind::Integer, 0, h);
            b.var(format!("d_{c}_{pos}"), VarKind::Integer, 0, h);
            let sb = t.stop_bounds[pos];
            b.var(format!("w_{c}_{pos}"), VarKind::Integer, sb.min, sb.max);
            for &r in inst.applicable_routes(c, pos) {
                b.var(format!("x_{c}_{pos}_{r}"), VarKind::Binary, 0, 1);
            }
        }
    }

    // per-train rows
    for c in inst.train_ids() {
        let t = inst.train(c);
        for pos in 0..t.len() {
            let f = inst.floor(c, pos);
            let (a, d) = (b.a(c, pos), b.d(c, pos));
            b.row(
                format!("init_a_{c}_{pos}"),
                RowFamily::InitialTime,
                vec![(1, a)],
                Sense::Ge,
                f.arrival,
            )?;
            b.row(
                format!("init_d_{c}_{pos}"),
                RowFamily::InitialTime,
                vec![(1, d)],
                Sense::Ge,
                f.departure,
            )?;
        }
    }
    for c in inst.train_ids() {
        for pos in 0..inst.train(c).len() {
            let w = b.index[&format!("w_{c}_{pos}")];
            let terms = vec![(1, b.d(c, pos)), (-1, b.a(c, pos)), (-1, w)];
            b.row(
                format!("stop_{c}_{pos}"),
                RowFamily::StopBound,
                terms,
                Sense::Eq,
                0,
            )?;
        }
    }
    for c in inst.train_ids() {
        let t = inst.train(c);
        for pos in 0..t.len() - 1 {
            let terms = vec![(1, b.a(c, pos + 1)), (-1, b.d(c, pos))];
            b.row(
                format!("speed_{c}_{pos}"),
                RowFamily::Speed,
                terms,
                Sense::Ge,
                t.travel_min[pos],
            )?;
        }
    }

    // edge spacing: users per (edge, direction, track)
    let mut edge_users: BTreeMap<(usize, bool, TrackId), Vec<(TrainId, usize)>> = BTreeMap::new();
    let mut node_users: BTreeMap<(usize, TrackId), Vec<(TrainId, usize)>> = BTreeMap::new();
    let mut gate_users: BTreeMap<usize, Vec<(TrainId, usize, Vec<GateDirection>)>> =
        BTreeMap::new();
    for c in inst.train_ids() {
        let t = inst.train(c);
        for pos in 0..t.len() {
            if pos + 1 < t.len() {
                let leg = inst.leg(c, pos);
                for tr in usable_edge_tracks(inst, c, pos) {
                    edge_users
                        .entry((leg.edge.index(), leg.forward, tr))
                        .or_default()
                        .push((c, pos));
                }
            }
            let node = t.itinerary[pos].index();
            for tr in usable_inside_tracks(inst, c, pos) {
                node_users.entry((node, tr)).or_default().push((c, pos));
            }
            let mut per_group: BTreeMap<usize, Vec<GateDirection>> = BTreeMap::new();
            for (g, dir) in usable_gates(inst, c, pos) {
                per_group.entry(g).or_default().push(dir);
            }
            for (g, dirs) in per_group {
                gate_users.entry(g).or_default().push((c, pos, dirs));
            }
        }
    }

    for (&(edge, forward, track), users) in &edge_users {
        for (k, &(c, p)) in users.iter().enumerate() {
            for &(c2, p2) in &users[k + 1..] {
                let res = Resource::Edge {
                    edge,
                    forward,
                    track,
                };
                let y = b.var(format!("y_{c}_{c2}_{}", res.tag()), VarKind::Binary, 0, 1);
                let mut active = b.x_where(c, p, |r| r.outgoing_track == track);
                active.extend(b.x_where(c2, p2, |r| r.outgoing_track == track));
                let e = crate::model::EdgeId::from(edge);
                let g = (inst.edge_gamma(c, c2, e), inst.edge_gamma(c2, c, e));
                let stem = format!("edge_{c}_{c2}_{}", res.tag());
                b.disjunction(
                    RowFamily::EdgeSpacing,
                    &format!("{stem}_dep"),
                    y,
                    (b.d(c, p), b.d(c2, p2)),
                    g,
                    &active,
                    m,
                )?;
                b.disjunction(
                    RowFamily::EdgeSpacing,
                    &format!("{stem}_arr"),
                    y,
                    (b.a(c, p + 1), b.a(c2, p2 + 1)),
                    g,
                    &active,
                    m,
                )?;
            }
        }
    }

    for (&(node, track), users) in &node_users {
        let nid = crate::model::NodeId::from(node);
        for (k, &(c, p)) in users.iter().enumerate() {
            for &(c2, p2) in &users[k + 1..] {
                if inst.is_connected_pair_at(c, c2, nid) {
                    continue;
                }
                let res = Resource::Node { node, track };
                let y = b.var(format!("y_{c}_{c2}_{}", res.tag()), VarKind::Binary, 0, 1);
                let mut active = b.x_where(c, p, |r| r.inside_track == track);
                active.extend(b.x_where(c2, p2, |r| r.inside_track == track));
                // c first: a' >= d + γ; c' first: a >= d' + γ'
                let (g12, g21) = (inst.node_gamma(c, c2, nid), inst.node_gamma(c2, c, nid));
                let stem = format!("node_{c}_{c2}_{}", res.tag());
                let (a, d, a2, d2) = (b.a(c, p), b.d(c, p), b.a(c2, p2), b.d(c2, p2));
                let mut t1 = vec![(1, a2), (-1, d), (-m, y)];
                t1.extend(active.iter().map(|&x| (-m, x)));
                b.row(
                    format!("{stem}_1"),
                    RowFamily::NodeSpacing,
                    t1,
                    Sense::Ge,
                    g12 - 3 * m,
                )?;
                let mut t2 = vec![(1, a), (-1, d2), (m, y)];
                t2.extend(active.iter().map(|&x| (-m, x)));
                b.row(
                    format!("{stem}_2"),
                    RowFamily::NodeSpacing,
                    t2,
                    Sense::Ge,
                    g21 - 2 * m,
                )?;
            }
        }
    }

    for conn in &inst.connections {
        let (p, s) = (conn.predecessor, conn.successor);
        let last = inst.train(p).len() - 1;
        let stem = format!("conn_{p}_{s}");
        match opts.connection_mode {
            ConnectionMode::Turnaround => {
                let terms = vec![(1, b.d(s, 0)), (-1, b.a(p, last))];
                b.row(
                    format!("{stem}_time"),
                    RowFamily::Connection,
                    terms,
                    Sense::Ge,
                    conn.turnaround,
                )?;
            }
            ConnectionMode::Literal => {
                let terms = vec![(1, b.d(s, 0)), (-1, b.d(p, last))];
                b.row(
                    format!("{stem}_time"),
                    RowFamily::Connection,
                    terms,
                    Sense::Eq,
                    0,
                )?;
                if inst.train(s).len() > 1 {
                    let terms = vec![(1, b.a(s, 1)), (-1, b.d(s, 0))];
                    b.row(
                        format!("{stem}_next"),
                        RowFamily::Connection,
                        terms,
                        Sense::Eq,
                        conn.turnaround,
                    )?;
                }
            }
        }
        for &r in inst.applicable_routes(s, 0) {
            let terms = vec![(1, b.x(p, last, r)), (-1, b.x(s, 0, r))];
            b.row(
                format!("{stem}_r{r}"),
                RowFamily::Connection,
                terms,
                Sense::Eq,
                0,
            )?;
        }
    }

    for (&g, users) in &gate_users {
        let eps = inst.gates[g].eps;
        for (k, (c, p, dirs)) in users.iter().enumerate() {
            for (c2, p2, dirs2) in &users[k + 1..] {
                let (c, p, c2, p2) = (*c, *p, *c2, *p2);
                let node = inst.train(c).itinerary[p];
                if c == c2 || inst.is_connected_pair_at(c, c2, node) {
                    continue;
                }
                for &dx in dirs {
                    for &dy in dirs2 {
                        let res = Resource::Gate {
                            group: g,
                            first: dx,
                            second: dy,
                        };
                        let y = b.var(format!("y_{c}_{c2}_{}", res.tag()), VarKind::Binary, 0, 1);
                        let uses = |c: TrainId, p: usize, dir: GateDirection| {
                            move |r: &crate::model::Route| {
                                inst.gate_usage(c, p, r).any(|u| u == (g, dir))
                            }
                        };
                        let mut active = b.x_where(c, p, uses(c, p, dx));
                        active.extend(b.x_where(c2, p2, uses(c2, p2, dy)));
                        let ev = |b: &Builder, c: TrainId, p: usize, dir: GateDirection| match dir {
                            GateDirection::Incoming => b.a(c, p),
                            GateDirection::Outgoing => b.d(c, p),
                        };
                        let (u, v) = (ev(&b, c, p, dx), ev(&b, c2, p2, dy));
                        let w = (eps.get(dx, dy), eps.get(dy, dx));
                        b.disjunction(
                            RowFamily::Gate,
                            &format!("gate_{c}_{c2}_{}", res.tag()),
                            y,
                            (u, v),
                            w,
                            &active,
                            m,
                        )?;
                    }
                }
            }
        }
    }

    for c in inst.train_ids() {
        let t = inst.train(c);
        for pos in 0..t.len() {
            let terms = inst
                .applicable_routes(c, pos)
                .iter()
                .map(|&r| (1, b.x(c, pos, r)))
                .collect();
            b.row(
                format!("route_{c}_{pos}"),
                RowFamily::RouteChoice,
                terms,
                Sense::Eq,
                1,
            )?;
        }
        for pos in 1..t.len() {
            let edge = inst.edge(inst.leg(c, pos - 1).edge);
            for &tr in &edge.tracks {
                let mut terms: Vec<(i64, usize)> = b
                    .x_where(c, pos - 1, |r| r.outgoing_track == tr)
                    .into_iter()
                    .map(|x| (1, x))
                    .collect();
                terms.extend(
                    b.x_where(c, pos, |r| r.incoming_track == tr)
                        .into_iter()
                        .map(|x| (-1, x)),
                );
                if !terms.is_empty() {
                    b.row(
                        format!("link_{c}_{pos}_t{tr}"),
                        RowFamily::RouteLink,
                        terms,
                        Sense::Eq,
                        0,
                    )?;
                }
            }
        }
    }

    let mut objective = Vec::new();
    for c in inst.train_ids() {
        for pos in 0..inst.train(c).len() {
            objective.push((1, b.a(c, pos)));
        }
    }
    Ok(MipModel {
        big_m: m,
        vars: b.vars,
        rows: b.rows,
        objective,
        objective_constant: -inst.base_arrival_sum(),
    })
}

fn push_terms(out: &mut String, terms: &[(i64, usize)], vars: &[Variable]) {
    for (k, &(coef, v)) in terms.iter().enumerate() {
        if k > 0 && k % 8 == 0 {
            out.push_str("\n   ");
        }
        let sign = if coef < 0 { '-' } else { '+' };
        if k == 0 && coef >= 0 {
            let _ = write!(out, " {}", fmt_term(coef, &vars[v].name));
        } else {
            let _ = write!(out, " {sign} {}", fmt_term(coef.abs(), &vars[v].name));
        }
    }
}

fn fmt_term(coef: i64, name: &str) -> String {
    if coef == 1 {
        name.to_string()
    } else {
        format!("{coef} {name}")
    }
}

impl MipModel {
    /// Renders the model in LP text format.
    pub fn to_lp(&self) -> String {
        let mut out = String::new();
        out.push_str("\\ total arrival delay re-timetabling model\n");
        let _ = writeln!(out, "\\ big-M = {}", self.big_m);
        out.push_str("minimize\n obj:");
        push_terms(&mut out, &self.objective, &self.vars);
        if self.objective_constant != 0 {
            let sign = if self.objective_constant < 0 {
                '-'
            } else {
                '+'
            };
            let _ = write!(out, " {sign} {}", self.objective_constant.abs());
        }
        out.push_str("\nsubject to\n");
        for r in &self.rows {
            let _ = write!(out, " {}:", r.name);
            push_terms(&mut out, &r.terms, &self.vars);
            let _ = writeln!(out, " {} {}", r.sense.symbol(), r.rhs);
        }
        out.push_str("bounds\n");
        for v in self.vars.iter().filter(|v| v.kind == VarKind::Integer) {
            let _ = writeln!(out, " {} <= {} <= {}", v.lower, v.name, v.upper);
        }
        let mut section = |title: &str, kind: VarKind| {
            let names: Vec<&str> = self
                .vars
                .iter()
                .filter(|v| v.kind == kind)
                .map(|v| v.name.as_str())
                .collect();
            if names.is_empty() {
                return;
            }
            let _ = writeln!(out, "{title}");
            for chunk in names.chunks(10) {
                let _ = writeln!(out, " {}", chunk.join(" "));
            }
        };
        section("general", VarKind::Integer);
        section("binary", VarKind::Binary);
        out.push_str("end\n");
        out
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn family_count(&self, family: RowFamily) -> usize {
        self.rows.iter().filter(|r| r.family == family).count()
    }

    /// Row counts in the families audited by `count_constraints`.
    pub fn constraint_counts(&self) -> ConstraintCounts {
        ConstraintCounts {
            initial_time: self.family_count(RowFamily::InitialTime),
            stop_bound: self.family_count(RowFamily::StopBound),
            speed: self.family_count(RowFamily::Speed),
            edge_spacing: self.family_count(RowFamily::EdgeSpacing),
            node_spacing: self.family_count(RowFamily::NodeSpacing),
            connection: self.family_count(RowFamily::Connection),
            gate: self.family_count(RowFamily::Gate),
        }
    }

    /// Names of rows and bounds violated by `values` (one value per variable).
    pub fn violated(&self, values: &[i64]) -> Vec<String> {
        let mut bad: Vec<String> = self
            .vars
            .iter()
            .zip(values)
            .filter(|(v, &x)| x < v.lower || x > v.upper)
            .map(|(v, _)| format!("bound {}", v.name))
            .collect();
        for r in &self.rows {
            let lhs: i64 = r.terms.iter().map(|&(c, v)| c * values[v]).sum();
            if !r.sense.holds(lhs, r.rhs) {
                bad.push(r.name.clone());
            }
        }
        bad
    }

    pub fn objective_value(&self, values: &[i64]) -> i64 {
        self.objective
            .iter()
            .map(|&(c, v)| c * values[v])
            .sum::<i64>()
            + self.objective_constant
    }

    /// Variable values encoding `sched`, with each `y` set to whichever
    /// order the schedule satisfies.
    pub fn assignment(&self, inst: &Instance, sched: &Schedule) -> Result<Vec<i64>> {
        let mut values = vec![0i64; self.vars.len()];
        let idx: HashMap<&str, usize> = self
            .vars
            .iter()
            .enumerate()
            .map(|(k, v)| (v.name.as_str(), k))
            .collect();
        for c in inst.train_ids() {
            let ev = sched.get(c).ok_or(Error::IncompleteSchedule(
                inst.num_trains() - sched.scheduled_count(),
            ))?;
            for (pos, e) in ev.iter().enumerate() {
                values[idx[format!("a_{c}_{pos}").as_str()]] = e.arrival;
                values[idx[format!("d_{c}_{pos}").as_str()]] = e.departure;
                values[idx[format!("w_{c}_{pos}").as_str()]] = e.departure - e.arrival;
                let node = inst.train(c).itinerary[pos];
                let r = inst.route_index(node, &e.route).ok_or_else(|| {
                    Error::Invalid(format!("train {c} uses an unknown route at {node}"))
                })?;
                let name = format!("x_{c}_{pos}_{r}");
                let k = *idx.get(name.as_str()).ok_or_else(|| {
                    Error::Invalid(format!(
                        "route {r} is not applicable for train {c} at {node}"
                    ))
                })?;
                values[k] = 1;
            }
        }
        // each y appears in exactly two rows named <stem>_1 and <stem>_2
        let mut y_rows: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (k, r) in self.rows.iter().enumerate() {
            for &(_, v) in &r.terms {
                if self.vars[v].name.starts_with("y_") {
                    y_rows.entry(v).or_default().push(k);
                }
            }
        }
        for (y, rows) in y_rows {
            values[y] = 1;
            let ok = rows.iter().all(|&k| {
                let r = &self.rows[k];
                r.sense
                    .holds(r.terms.iter().map(|&(c, v)| c * values[v]).sum(), r.rhs)
            });
            if !ok {
                values[y] = 0;
            }
        }
        Ok(values)
    }
}

/// LP text for `inst`.
pub fn export_lp(inst: &Instance, opts: &MipOptions) -> Result<String> {
    Ok(build_model(inst, opts)?.to_lp())
}

/// Warm-start text (`name value` per line) for a complete, feasible schedule.
/// The assignment is checked against every row before it is written.
pub fn export_warm_start(inst: &Instance, sched: &Schedule, opts: &MipOptions) -> Result<String> {
    let missing = inst.num_trains() - sched.scheduled_count();
    if missing > 0 {
        return Err(Error::IncompleteSchedule(missing));
    }
    let v = validate_schedule(inst, sched, opts.connection_mode);
    if !v.is_empty() {
        return Err(Error::InfeasibleSchedule(v));
    }
    let model = build_model(inst, opts)?;
    let values = model.assignment(inst, sched)?;
    let bad = model.violated(&values);
    if !bad.is_empty() {
        return Err(Error::Invalid(format!(
            "warm start violates {} row(s), first {}",
            bad.len(),
            bad[0]
        )));
    }
    let mut out = String::new();
    let _ = writeln!(out, "# objective {}", model.objective_value(&values));
    for (v, x) in model.vars.iter().zip(&values) {
        let _ = writeln!(out, "{} {x}", v.name);
    }
    Ok(out)
}

/// Parses warm-start text into `(name, value)` pairs; `#` starts a comment.
pub fn parse_warm_start(text: &str) -> Result<Vec<(String, i64)>> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(name), Some(value), None) = (it.next(), it.next(), it.next()) else {
            return Err(Error::Parse {
                line: k + 1,
                column: 1,
                message: "expected `<name> <value>`".into(),
            });
        };
        let value: i64 = value.parse().map_err(|_| Error::Parse {
            line: k + 1,
            column: name.len() + 2,
            message: format!("`{value}` is not an integer"),
        })?;
        if !seen.insert(name.to_string()) {
            return Err(Error::Parse {
                line: k + 1,
                column: 1,
                message: format!("{name} assigned twice"),
            });
        }
        out.push((name.to_string(), value));
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
