//! Domain data: the railway network, trains with their base timetable, the
//! constraint constant tables, connections between pseudo-trains and the
//! single perturbation that triggers rescheduling.
//!
//! All times are integer seconds from an arbitrary origin. An [`Instance`] is
//! immutable once built; it carries derived lookup tables (route
//! applicability, edge lookup, gate membership) that every other module reads.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::Schedule;
use crate::validate::{self, ConnectionMode};

/// Seconds since the instance's temporal origin.
pub type Time = i64;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl From<usize> for $name {
            fn from(i: usize) -> Self {
                Self(i as u32)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(
    /// Station or switching node.
    NodeId
);
id_type!(
    /// Edge between two nodes.
    EdgeId
);
id_type!(TrainId);
id_type!(
    /// A track, either on an edge or inside a node. Ids share one namespace.
    TrackId
);

/// A physically possible (incoming, inside, outgoing) track triplet at a node.
///
/// At a train's first node the incoming track is not used; at its last node
/// the outgoing track is not used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Route {
    pub incoming_track: TrackId,
    pub inside_track: TrackId,
    pub outgoing_track: TrackId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub routes: Vec<Route>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub id: EdgeId,
    pub from: NodeId,
    pub to: NodeId,
    pub tracks: Vec<TrackId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateDirection {
    Incoming,
    Outgoing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateMember {
    pub track: TrackId,
    pub direction: GateDirection,
}

/// Spacing between two uses of one gate group, indexed by the direction of
/// the first use then the second (`oi`: first train departs, second arrives).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GateSpacing {
    pub ii: Time,
    pub io: Time,
    pub oi: Time,
    pub oo: Time,
}

impl GateSpacing {
    pub fn get(&self, first: GateDirection, second: GateDirection) -> Time {
        use GateDirection::*;
        match (first, second) {
            (Incoming, Incoming) => self.ii,
            (Incoming, Outgoing) => self.io,
            (Outgoing, Incoming) => self.oi,
            (Outgoing, Outgoing) => self.oo,
        }
    }
}

/// Edge tracks attached to one node that share switching gates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateGroup {
    pub node: NodeId,
    pub members: Vec<GateMember>,
    pub eps: GateSpacing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopBounds {
    pub min: Time,
    pub max: Time,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Train {
    pub id: TrainId,
    pub itinerary: Vec<NodeId>,
    pub base_arrivals: Vec<Time>,
    pub base_departures: Vec<Time>,
    /// Routes of the base timetable, one per itinerary position.
    pub base_routes: Vec<Route>,
    pub stop_bounds: Vec<StopBounds>,
    /// Minimum running time per leg (`itinerary.len() - 1` entries).
    pub travel_min: Vec<Time>,
}

impl Train {
    pub fn len(&self) -> usize {
        self.itinerary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.itinerary.is_empty()
    }

    pub fn position_of(&self, node: NodeId) -> Option<usize> {
        self.itinerary.iter().position(|&n| n == node)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSpacingEntry {
    pub first: TrainId,
    pub second: TrainId,
    pub edge: EdgeId,
    pub gamma: Time,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpacingEntry {
    pub first: TrainId,
    pub second: TrainId,
    pub node: NodeId,
    pub gamma: Time,
}

/// Headway constants. Sparse entries keyed by ordered train pair override the
/// per-table default.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpacingTable {
    pub edge_default: Time,
    pub node_default: Time,
    #[serde(default)]
    pub edge: Vec<EdgeSpacingEntry>,
    #[serde(default)]
    pub node: Vec<NodeSpacingEntry>,
}

/// Two pseudo-trains that are one physical train turning around at `node`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Connection {
    pub predecessor: TrainId,
    pub successor: TrainId,
    pub node: NodeId,
    pub turnaround: Time,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationLocation {
    AtNode(NodeId),
    /// Leg index within the train's itinerary (leg `k` runs from position `k` to `k + 1`).
    OnEdge(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Perturbation {
    pub train: TrainId,
    pub location: PerturbationLocation,
    pub delay: Time,
}

/// The serialized form of an instance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceDoc {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub trains: Vec<Train>,
    pub spacing: SpacingTable,
    #[serde(default)]
    pub gates: Vec<GateGroup>,
    #[serde(default)]
    pub connections: Vec<Connection>,
    #[serde(default)]
    pub perturbation: Option<Perturbation>,
    pub horizon: Time,
}

/// Earliest admissible arrival and departure of a train at one itinerary position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Floor {
    pub arrival: Time,
    pub departure: Time,
}

/// One leg of a train's itinerary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Leg {
    pub edge: EdgeId,
    /// True when the train runs from `edge.from` to `edge.to`.
    pub forward: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct GateUse {
    pub track: TrackId,
    pub direction: GateDirection,
    pub group: usize,
}

#[derive(Clone, Debug, Default)]
struct Lookup {
    edge_by_pair: HashMap<(NodeId, NodeId), EdgeId>,
    legs: Vec<Vec<Leg>>,
    applicable: Vec<Vec<Vec<u16>>>,
    route_index: Vec<HashMap<Route, u16>>,
    gate_uses: Vec<Vec<GateUse>>,
    edge_gamma: HashMap<(TrainId, TrainId, EdgeId), Time>,
    node_gamma: HashMap<(TrainId, TrainId, NodeId), Time>,
    predecessor: Vec<Option<usize>>,
    successor: Vec<Option<usize>>,
    visits: Vec<Vec<(TrainId, usize)>>,
    max_constant: Time,
}

/// A validated, immutable rescheduling instance.
///
/// Dereferences to its [`InstanceDoc`]. Floors start at the base timetable;
/// [`apply_perturbation`] raises them.
#[derive(Clone, Debug)]
pub struct Instance {
    doc: InstanceDoc,
    floors: Vec<Vec<Floor>>,
    lookup: Lookup,
}

impl PartialEq for Instance {
    fn eq(&self, other: &Self) -> bool {
        self.doc == other.doc && self.floors == other.floors
    }
}

impl Deref for Instance {
    type Target = InstanceDoc;

    fn deref(&self) -> &InstanceDoc {
        &self.doc
    }
}

impl Instance {
    /// Builds an instance, checking referential integrity and that the
    /// unperturbed base timetable has no violations.
    pub fn new(doc: InstanceDoc) -> Result<Self> {
        let inst = Self::new_unchecked_base(doc)?;
        let base = Schedule::base(&inst);
        let violations = validate::validate_schedule(&inst, &base, ConnectionMode::default());
        if !violations.is_empty() {
            return Err(Error::BaseInfeasible(violations));
        }
        Ok(inst)
    }

    /// Structural checks only; the base timetable is not validated.
    pub fn new_unchecked_base(doc: InstanceDoc) -> Result<Self> {
        check_structure(&doc)?;
        let lookup = build_lookup(&doc)?;
        let floors = base_floors(&doc);
        let inst = Instance {
            doc,
            floors,
            lookup,
        };
        inst.check_horizon()?;
        Ok(inst)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: InstanceDoc = serde_json::from_str(text)?;
        Self::new(doc)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.doc).expect("instance serializes");
        s.push('\n');
        s
    }

    pub fn doc(&self) -> &InstanceDoc {
        &self.doc
    }

    pub fn into_doc(self) -> InstanceDoc {
        self.doc
    }

    pub fn train(&self, c: TrainId) -> &Train {
        &self.doc.trains[c.index()]
    }

    pub fn node(&self, i: NodeId) -> &Node {
        &self.doc.nodes[i.index()]
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.doc.edges[e.index()]
    }

    pub fn num_trains(&self) -> usize {
        self.doc.trains.len()
    }

    pub fn train_ids(&self) -> impl Iterator<Item = TrainId> + '_ {
        (0..self.doc.trains.len()).map(TrainId::from)
    }

    pub fn floor(&self, c: TrainId, pos: usize) -> Floor {
        self.floors[c.index()][pos]
    }

    pub fn floors(&self, c: TrainId) -> &[Floor] {
        &self.floors[c.index()]
    }

    pub fn leg(&self, c: TrainId, leg: usize) -> Leg {
        self.lookup.legs[c.index()][leg]
    }

    pub fn edge_between(&self, a: NodeId, b: NodeId) -> Option<EdgeId> {
        self.lookup.edge_by_pair.get(&(a, b)).copied()
    }

    /// Route indices (into the node's route list) usable by train `c` at
    /// itinerary position `pos`, ignoring linkage with the previous position.
    pub fn applicable_routes(&self, c: TrainId, pos: usize) -> &[u16] {
        &self.lookup.applicable[c.index()][pos]
    }

    pub fn route_index(&self, node: NodeId, route: &Route) -> Option<usize> {
        self.lookup.route_index[node.index()]
            .get(route)
            .map(|&r| r as usize)
    }

    pub(crate) fn gate_uses(&self, node: NodeId) -> &[GateUse] {
        &self.lookup.gate_uses[node.index()]
    }

    /// Gate groups (by index into `gates`) that train `c` at `pos` joins through
    /// `route`, together with the direction of the use.
    pub fn gate_usage(
        &self,
        c: TrainId,
        pos: usize,
        route: &Route,
    ) -> impl Iterator<Item = (usize, GateDirection)> + '_ {
        let last = self.train(c).len() - 1;
        let node = self.train(c).itinerary[pos];
        let inc = route.incoming_track;
        let out = route.outgoing_track;
        self.gate_uses(node)
            .iter()
            .filter_map(move |u| match u.direction {
                GateDirection::Incoming if pos > 0 && u.track == inc => {
                    Some((u.group, u.direction))
                }
                GateDirection::Outgoing if pos < last && u.track == out => {
                    Some((u.group, u.direction))
                }
                _ => None,
            })
    }

    /// Spacing on `edge` when `first` precedes `second`.
    pub fn edge_gamma(&self, first: TrainId, second: TrainId, edge: EdgeId) -> Time {
        if self.lookup.edge_gamma.is_empty() {
            return self.doc.spacing.edge_default;
        }
        self.lookup
            .edge_gamma
            .get(&(first, second, edge))
            .copied()
            .unwrap_or(self.doc.spacing.edge_default)
    }

    /// Spacing inside `node` when `first` precedes `second`.
    pub fn node_gamma(&self, first: TrainId, second: TrainId, node: NodeId) -> Time {
        if self.lookup.node_gamma.is_empty() {
            return self.doc.spacing.node_default;
        }
        self.lookup
            .node_gamma
            .get(&(first, second, node))
            .copied()
            .unwrap_or(self.doc.spacing.node_default)
    }

    /// The connection in which `c` is the successor.
    pub fn connection_into(&self, c: TrainId) -> Option<&Connection> {
        self.lookup.predecessor[c.index()].map(|k| &self.doc.connections[k])
    }

    /// The connection in which `c` is the predecessor.
    pub fn connection_from(&self, c: TrainId) -> Option<&Connection> {
        self.lookup.successor[c.index()].map(|k| &self.doc.connections[k])
    }

    /// True when `a` and `b` are the two halves of a connection at `node`;
    /// pairwise spacing does not apply between them there.
    pub fn is_connected_pair_at(&self, a: TrainId, b: TrainId, node: NodeId) -> bool {
        let linked = |p: TrainId, s: TrainId| {
            self.connection_from(p)
                .is_some_and(|k| k.successor == s && k.node == node)
        };
        linked(a, b) || linked(b, a)
    }

    /// Every (train, position) visiting `node`.
    pub fn visits(&self, node: NodeId) -> &[(TrainId, usize)] {
        &self.lookup.visits[node.index()]
    }

    /// Largest spacing, stop, travel or turnaround constant in the instance.
    pub fn max_constant(&self) -> Time {
        self.lookup.max_constant
    }

    pub fn max_itinerary_len(&self) -> usize {
        self.doc.trains.iter().map(Train::len).max().unwrap_or(0)
    }

    /// Sum of base arrival times, the constant separating the delay objective
    /// from the absolute-arrival objective.
    pub fn base_arrival_sum(&self) -> Time {
        self.doc
            .trains
            .iter()
            .flat_map(|t| t.base_arrivals.iter())
            .sum()
    }

    fn check_horizon(&self) -> Result<()> {
        let h = self.doc.horizon;
        let max_base = self
            .doc
            .trains
            .iter()
            .flat_map(|t| t.base_arrivals.iter().chain(t.base_departures.iter()))
            .copied()
            .max()
            .unwrap_or(0);
        if h <= max_base + self.lookup.max_constant {
            return Err(Error::Invalid(format!(
                "horizon {h} must exceed latest base time {max_base} plus largest constant {}",
                self.lookup.max_constant
            )));
        }
        Ok(())
    }

    pub(crate) fn set_floors(&mut self, floors: Vec<Vec<Floor>>) {
        self.floors = floors;
    }
}

/// Parses and validates an instance document.
pub fn load_instance(text: &str) -> Result<Instance> {
    Instance::from_json(text)
}

pub fn save_instance(inst: &Instance) -> String {
    inst.to_json()
}

/// Returns a copy of `inst` whose earliest-time floors reflect the perturbation.
///
/// `AtNode(i)` raises the departure floor at `i`; `OnEdge(k)` raises the
/// arrival floor at the destination of leg `k`. Base times are untouched.
/// Applying twice gives the same floors as applying once.
pub fn apply_perturbation(inst: &Instance) -> Instance {
    let mut out = inst.clone();
    let mut floors = base_floors(&inst.doc);
    if let Some(p) = inst.doc.perturbation {
        let row = &mut floors[p.train.index()];
        match p.location {
            PerturbationLocation::AtNode(node) => {
                let pos = inst
                    .train(p.train)
                    .position_of(node)
                    .expect("checked at load");
                row[pos].departure += p.delay;
            }
            PerturbationLocation::OnEdge(leg) => {
                row[leg + 1].arrival += p.delay;
            }
        }
    }
    out.set_floors(floors);
    out
}

fn base_floors(doc: &InstanceDoc) -> Vec<Vec<Floor>> {
    doc.trains
        .iter()
        .map(|t| {
            t.base_arrivals
                .iter()
                .zip(&t.base_departures)
                .map(|(&a, &d)| Floor {
                    arrival: a,
                    departure: d,
                })
                .collect()
        })
        .collect()
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}

fn dangling(msg: impl Into<String>) -> Error {
    Error::Reference(msg.into())
}

fn check_structure(doc: &InstanceDoc) -> Result<()> {
    let n_nodes = doc.nodes.len();
    let n_trains = doc.trains.len();
    for (k, n) in doc.nodes.iter().enumerate() {
        if n.id.index() != k {
            return Err(invalid(format!("node at index {k} has id {}", n.id)));
        }
        let mut seen = HashSet::new();
        for r in &n.routes {
            if !seen.insert(*r) {
                return Err(invalid(format!("node {k} lists route {r:?} twice")));
            }
        }
    }
    for (k, e) in doc.edges.iter().enumerate() {
        if e.id.index() != k {
            return Err(invalid(format!("edge at index {k} has id {}", e.id)));
        }
        if e.from.index() >= n_nodes {
            return Err(dangling(format!(
                "edge {k} references unknown node {}",
                e.from
            )));
        }
        if e.to.index() >= n_nodes {
            return Err(dangling(format!(
                "edge {k} references unknown node {}",
                e.to
            )));
        }
        if e.from == e.to {
            return Err(invalid(format!("edge {k} is a self-loop")));
        }
        if e.tracks.is_empty() {
            return Err(invalid(format!("edge {k} has no tracks")));
        }
    }
    for (k, t) in doc.trains.iter().enumerate() {
        if t.id.index() != k {
            return Err(invalid(format!("train at index {k} has id {}", t.id)));
        }
        let len = t.itinerary.len();
        if len == 0 {
            return Err(invalid(format!("train {k} has an empty itinerary")));
        }
        for &i in &t.itinerary {
            if i.index() >= n_nodes {
                return Err(dangling(format!("train {k} references unknown node {i}")));
            }
        }
        let distinct: HashSet<_> = t.itinerary.iter().collect();
        if distinct.len() != len {
            return Err(invalid(format!("train {k} visits a node twice")));
        }
        if t.base_arrivals.len() != len
            || t.base_departures.len() != len
            || t.base_routes.len() != len
            || t.stop_bounds.len() != len
            || t.travel_min.len() != len - 1
        {
            return Err(invalid(format!(
                "train {k}: per-node tables must have {len} entries and travel_min {}",
                len - 1
            )));
        }
        for p in 0..len {
            if t.base_departures[p] < t.base_arrivals[p] {
                return Err(invalid(format!(
                    "train {k} departs before it arrives at position {p}"
                )));
            }
            if t.base_arrivals[p] < 0 {
                return Err(invalid(format!("train {k} has a negative base time")));
            }
            let sb = t.stop_bounds[p];
            if sb.min < 0 || sb.max < sb.min {
                return Err(invalid(format!(
                    "train {k} has bad stop bounds at position {p}"
                )));
            }
        }
        if t.travel_min.iter().any(|&b| b < 0) {
            return Err(invalid(format!("train {k} has a negative travel time")));
        }
    }
    let s = &doc.spacing;
    if s.edge_default < 0 || s.node_default < 0 {
        return Err(invalid("spacing defaults must be non-negative"));
    }
    for e in &s.edge {
        if e.first.index() >= n_trains || e.second.index() >= n_trains {
            return Err(dangling("edge spacing entry references an unknown train"));
        }
        if e.edge.index() >= doc.edges.len() {
            return Err(dangling(format!(
                "edge spacing entry references unknown edge {}",
                e.edge
            )));
        }
        if e.gamma < 0 {
            return Err(invalid("edge spacing must be non-negative"));
        }
    }
    for e in &s.node {
        if e.first.index() >= n_trains || e.second.index() >= n_trains {
            return Err(dangling("node spacing entry references an unknown train"));
        }
        if e.node.index() >= n_nodes {
            return Err(dangling(format!(
                "node spacing entry references unknown node {}",
                e.node
            )));
        }
        if e.gamma < 0 {
            return Err(invalid("node spacing must be non-negative"));
        }
    }
    for (k, g) in doc.gates.iter().enumerate() {
        if g.node.index() >= n_nodes {
            return Err(dangling(format!(
                "gate group {k} references unknown node {}",
                g.node
            )));
        }
        let e = g.eps;
        if e.ii < 0 || e.io < 0 || e.oi < 0 || e.oo < 0 {
            return Err(invalid(format!("gate group {k} has a negative spacing")));
        }
    }
    for (k, c) in doc.connections.iter().enumerate() {
        for t in [c.predecessor, c.successor] {
            if t.index() >= n_trains {
                return Err(dangling(format!(
                    "connection {k} references unknown train {t}"
                )));
            }
        }
        if c.node.index() >= n_nodes {
            return Err(dangling(format!(
                "connection {k} references unknown node {}",
                c.node
            )));
        }
        if c.predecessor == c.successor {
            return Err(invalid(format!("connection {k} links a train to itself")));
        }
        let pred = &doc.trains[c.predecessor.index()];
        let succ = &doc.trains[c.successor.index()];
        if pred.itinerary.last() != Some(&c.node) || succ.itinerary.first() != Some(&c.node) {
            return Err(invalid(format!(
                "connection {k}: node {} must end the predecessor's and start the successor's itinerary",
                c.node
            )));
        }
        if c.turnaround < 0 {
            return Err(invalid(format!("connection {k} has a negative turnaround")));
        }
    }
    if let Some(p) = doc.perturbation {
        if p.train.index() >= n_trains {
            return Err(dangling(format!(
                "perturbation references unknown train {}",
                p.train
            )));
        }
        let t = &doc.trains[p.train.index()];
        match p.location {
            PerturbationLocation::AtNode(i) => {
                if t.position_of(i).is_none() {
                    return Err(invalid(format!(
                        "perturbation node {i} is not on train {}'s itinerary",
                        p.train
                    )));
                }
            }
            PerturbationLocation::OnEdge(leg) => {
                if leg + 1 >= t.len() {
                    return Err(invalid(format!(
                        "perturbation leg {leg} is not on train {}'s itinerary",
                        p.train
                    )));
                }
            }
        }
        if p.delay < 0 {
            return Err(invalid("perturbation delay must be non-negative"));
        }
    }
    Ok(())
}

fn build_lookup(doc: &InstanceDoc) -> Result<Lookup> {
    let n_nodes = doc.nodes.len();
    let n_trains = doc.trains.len();

    let mut edge_by_pair = HashMap::new();
    let mut edge_of_track: HashMap<TrackId, EdgeId> = HashMap::new();
    for e in &doc.edges {
        if edge_by_pair.insert((e.from, e.to), e.id).is_some()
            || edge_by_pair.insert((e.to, e.from), e.id).is_some()
        {
            return Err(invalid(format!(
                "parallel edges between nodes {} and {}",
                e.from, e.to
            )));
        }
        for &t in &e.tracks {
            if edge_of_track.insert(t, e.id).is_some() {
                return Err(invalid(format!("track {t} belongs to more than one edge")));
            }
        }
    }
    let incident = |node: NodeId, t: TrackId| {
        edge_of_track
            .get(&t)
            .is_some_and(|&e| doc.edges[e.index()].from == node || doc.edges[e.index()].to == node)
    };
    for n in &doc.nodes {
        for r in &n.routes {
            for t in [r.incoming_track, r.outgoing_track] {
                if edge_of_track.contains_key(&t) && !incident(n.id, t) {
                    return Err(invalid(format!(
                        "node {}: route {r:?} uses track {t} of an edge not incident to the node",
                        n.id
                    )));
                }
            }
            if edge_of_track.contains_key(&r.inside_track) {
                return Err(invalid(format!(
                    "node {}: inside track {} is an edge track",
                    n.id, r.inside_track
                )));
            }
        }
    }

    let mut legs = Vec::with_capacity(n_trains);
    for t in &doc.trains {
        let mut row = Vec::with_capacity(t.len().saturating_sub(1));
        for w in t.itinerary.windows(2) {
            let e = *edge_by_pair.get(&(w[0], w[1])).ok_or_else(|| {
                invalid(format!(
                    "train {}: no edge between nodes {} and {}",
                    t.id, w[0], w[1]
                ))
            })?;
            row.push(Leg {
                edge: e,
                forward: doc.edges[e.index()].from == w[0],
            });
        }
        legs.push(row);
    }

    let mut predecessor = vec![None; n_trains];
    let mut successor = vec![None; n_trains];
    for (k, c) in doc.connections.iter().enumerate() {
        if predecessor[c.successor.index()].replace(k).is_some() {
            return Err(invalid(format!(
                "train {} is the successor of two connections",
                c.successor
            )));
        }
        if successor[c.predecessor.index()].replace(k).is_some() {
            return Err(invalid(format!(
                "train {} is the predecessor of two connections",
                c.predecessor
            )));
        }
    }
    // chains must be acyclic
    for start in 0..n_trains {
        let mut cur = start;
        let mut steps = 0;
        while let Some(k) = successor[cur] {
            cur = doc.connections[k].successor.index();
            steps += 1;
            if cur == start || steps > n_trains {
                return Err(invalid("connections form a cycle"));
            }
        }
    }

    let edge_tracks = |e: EdgeId| &doc.edges[e.index()].tracks;
    let mut applicable = Vec::with_capacity(n_trains);
    for t in &doc.trains {
        let c = t.id.index();
        let last = t.len() - 1;
        let mut rows = Vec::with_capacity(t.len());
        for pos in 0..t.len() {
            let node = &doc.nodes[t.itinerary[pos].index()];
            let mut inc_edge = (pos > 0).then(|| legs[c][pos - 1].edge);
            let mut out_edge = (pos < last).then(|| legs[c][pos].edge);
            if pos == last {
                if let Some(k) = successor[c] {
                    let s = doc.connections[k].successor.index();
                    out_edge = legs[s].first().map(|l| l.edge);
                }
            }
            if pos == 0 {
                if let Some(k) = predecessor[c] {
                    let p = doc.connections[k].predecessor.index();
                    inc_edge = legs[p].last().map(|l| l.edge);
                }
            }
            let row: Vec<u16> = node
                .routes
                .iter()
                .enumerate()
                .filter(|(_, r)| {
                    inc_edge.is_none_or(|e| edge_tracks(e).contains(&r.incoming_track))
                        && out_edge.is_none_or(|e| edge_tracks(e).contains(&r.outgoing_track))
                })
                .map(|(k, _)| k as u16)
                .collect();
            if row.is_empty() {
                return Err(invalid(format!(
                    "train {} has no applicable route at node {} (position {pos})",
                    t.id, node.id
                )));
            }
            rows.push(row);
        }
        applicable.push(rows);
    }

    let route_index = doc
        .nodes
        .iter()
        .map(|n| {
            n.routes
                .iter()
                .enumerate()
                .map(|(k, r)| (*r, k as u16))
                .collect()
        })
        .collect();

    let mut gate_uses: Vec<Vec<GateUse>> = vec![Vec::new(); n_nodes];
    for (k, g) in doc.gates.iter().enumerate() {
        for m in &g.members {
            if !incident(g.node, m.track) {
                return Err(invalid(format!(
                    "gate group {k}: track {} is not on an edge incident to node {}",
                    m.track, g.node
                )));
            }
            gate_uses[g.node.index()].push(GateUse {
                track: m.track,
                direction: m.direction,
                group: k,
            });
        }
    }

    let edge_gamma = doc
        .spacing
        .edge
        .iter()
        .map(|e| ((e.first, e.second, e.edge), e.gamma))
        .collect();
    let node_gamma = doc
        .spacing
        .node
        .iter()
        .map(|e| ((e.first, e.second, e.node), e.gamma))
        .collect();

    let mut visits = vec![Vec::new(); n_nodes];
    for t in &doc.trains {
        for (pos, &i) in t.itinerary.iter().enumerate() {
            visits[i.index()].push((t.id, pos));
        }
    }

    let mut max_constant = doc.spacing.edge_default.max(doc.spacing.node_default);
    max_constant = max_constant
        .max(doc.spacing.edge.iter().map(|e| e.gamma).max().unwrap_or(0))
        .max(doc.spacing.node.iter().map(|e| e.gamma).max().unwrap_or(0));
    for g in &doc.gates {
        max_constant = max_constant.max(g.eps.ii.max(g.eps.io).max(g.eps.oi).max(g.eps.oo));
    }
    for t in &doc.trains {
        max_constant = max_constant
            .max(t.travel_min.iter().copied().max().unwrap_or(0))
            .max(t.stop_bounds.iter().map(|s| s.min).max().unwrap_or(0));
    }
    for c in &doc.connections {
        max_constant = max_constant.max(c.turnaround);
    }

    Ok(Lookup {
        edge_by_pair,
        legs,
        applicable,
        route_index,
        gate_uses,
        edge_gamma,
        node_gamma,
        predecessor,
        successor,
        visits,
        max_constant,
    })
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn minimal_doc() -> InstanceDoc {
        let (nodes, edges) = line(1);
        let r = nodes[0].routes[0];
        let train = line_train(0, &[NodeId(0)], 10, 0, 0, &[r]);
        InstanceDoc {
            nodes,
            edges,
            trains: vec![train],
            spacing: spacing(60, 30),
            gates: vec![],
            connections: vec![],
            perturbation: None,
            horizon: 10_000,
        }
    }

    #[test]
    fn minimal_document_loads() {
        let doc = minimal_doc();
        let text = serde_json::to_string(&doc).unwrap();
        let inst = load_instance(&text).unwrap();
        assert_eq!(inst.num_trains(), 1);
    }

    #[test]
    fn unknown_node_is_a_reference_error() {
        let mut doc = minimal_doc();
        doc.trains[0].itinerary[0] = NodeId(99);
        let err = Instance::new(doc).unwrap_err();
        assert!(
            matches!(err, Error::Reference(ref m) if m.contains("99")),
            "{err}"
        );
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = load_instance("{\n  \"nodes\": [,]\n}").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn infeasible_base_timetable_is_rejected() {
        let (nodes, edges) = line(2);
        let r0 = nodes[0].routes[0];
        let r1 = nodes[1].routes[0];
        let ids = [NodeId(0), NodeId(1)];
        let t0 = line_train(0, &ids, 0, 100, 0, &[r0, r1]);
        // second train departs 10 s after the first on a 60 s headway
        let t1 = line_train(1, &ids, 10, 100, 0, &[r0, r1]);
        let doc = InstanceDoc {
            nodes,
            edges,
            trains: vec![t0, t1],
            spacing: spacing(60, 0),
            gates: vec![],
            connections: vec![],
            perturbation: None,
            horizon: 10_000,
        };
        let err = Instance::new(doc).unwrap_err();
        assert!(matches!(err, Error::BaseInfeasible(ref v) if !v.is_empty()));
    }

    #[test]
    fn horizon_must_exceed_base_times() {
        let mut doc = minimal_doc();
        doc.horizon = 50;
        assert!(matches!(Instance::new(doc), Err(Error::Invalid(_))));
    }

    fn three_node_doc(loc: PerturbationLocation, delay: Time) -> InstanceDoc {
        let (nodes, edges) = line(3);
        let rs = [nodes[0].routes[0], nodes[1].routes[1], nodes[2].routes[0]];
        let ids = [NodeId(0), NodeId(1), NodeId(2)];
        let t = line_train(0, &ids, 0, 100, 30, &rs);
        InstanceDoc {
            nodes,
            edges,
            trains: vec![t],
            spacing: spacing(60, 30),
            gates: vec![],
            connections: vec![],
            perturbation: Some(Perturbation {
                train: TrainId(0),
                location: loc,
                delay,
            }),
            horizon: 10_000,
        }
    }

    #[test]
    fn zero_delay_keeps_floors() {
        let inst =
            Instance::new(three_node_doc(PerturbationLocation::AtNode(NodeId(1)), 0)).unwrap();
        let p = apply_perturbation(&inst);
        assert_eq!(p.floors(TrainId(0)), inst.floors(TrainId(0)));
    }

    #[test]
    fn at_node_raises_departure_floor_only() {
        let inst =
            Instance::new(three_node_doc(PerturbationLocation::AtNode(NodeId(1)), 600)).unwrap();
        let p = apply_perturbation(&inst);
        let t = inst.train(TrainId(0));
        assert_eq!(p.floor(TrainId(0), 1).departure, t.base_departures[1] + 600);
        assert_eq!(p.floor(TrainId(0), 1).arrival, t.base_arrivals[1]);
        assert_eq!(p.floor(TrainId(0), 2), inst.floor(TrainId(0), 2));
        // base times untouched
        assert_eq!(p.train(TrainId(0)), t);
        // idempotent
        assert_eq!(apply_perturbation(&p), p);
    }

    #[test]
    fn on_edge_raises_arrival_at_leg_destination() {
        let inst = Instance::new(three_node_doc(PerturbationLocation::OnEdge(0), 300)).unwrap();
        let p = apply_perturbation(&inst);
        let t = inst.train(TrainId(0));
        assert_eq!(p.floor(TrainId(0), 1).arrival, t.base_arrivals[1] + 300);
        assert_eq!(p.floor(TrainId(0), 0), inst.floor(TrainId(0), 0));
    }

    #[test]
    fn perturbation_off_itinerary_is_rejected() {
        let doc = three_node_doc(PerturbationLocation::OnEdge(2), 60);
        assert!(Instance::new(doc).is_err());
    }

    #[test]
    fn gate_spacing_lookup_by_direction() {
        let e = GateSpacing {
            ii: 1,
            io: 2,
            oi: 3,
            oo: 4,
        };
        use GateDirection::*;
        assert_eq!(e.get(Incoming, Incoming), 1);
        assert_eq!(e.get(Incoming, Outgoing), 2);
        assert_eq!(e.get(Outgoing, Incoming), 3);
        assert_eq!(e.get(Outgoing, Outgoing), 4);
    }
}
