//! Synthetic instances: line, crossing-lines and star networks with random
//! trains whose base timetable is made feasible by decoding the desired
//! times.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoder::{decode, DecoderConfig, Permutation};
use crate::error::{Error, Result};
use crate::model::*;
use crate::schedule::Schedule;
use crate::validate::ConnectionMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// One chain of nodes.
    Line,
    /// Two lines sharing a central junction.
    Cross,
    /// Spokes joined at a hub.
    Star,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub topology: Topology,
    pub nodes: usize,
    /// Trains including connection successors.
    pub trains: usize,
    pub tracks_per_edge: usize,
    pub inside_tracks: usize,
    pub edge_headway: Time,
    pub node_headway: Time,
    pub gate_eps: GateSpacing,
    /// Mean minimum running time of one leg.
    pub run_time: Time,
    /// Desired first departures are spread over `[0, window]`.
    pub window: Time,
    /// Probability that a train ending at a terminus is continued by a
    /// connected pseudo-train running back.
    pub connection_prob: f64,
    pub turnaround: Time,
    /// Shortest and longest itinerary, in nodes.
    pub min_len: usize,
    pub max_len: usize,
    /// Ordered train pairs that get their own, larger spacing constants.
    pub sparse_entries: usize,
    pub delay: Time,
    /// Horizon beyond the latest base time.
    pub horizon_slack: Time,
    pub seed: u64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            topology: Topology::Line,
            nodes: 6,
            trains: 10,
            tracks_per_edge: 1,
            inside_tracks: 2,
            edge_headway: 120,
            node_headway: 60,
            gate_eps: GateSpacing {
                ii: 60,
                io: 30,
                oi: 30,
                oo: 60,
            },
            run_time: 300,
            window: 7200,
            connection_prob: 0.3,
            turnaround: 300,
            min_len: 2,
            max_len: 8,
            sparse_entries: 4,
            delay: 600,
            horizon_slack: 4 * 3600,
            seed: 0,
        }
    }
}

const RETRIES: u64 = 20;

/// Builds an instance whose base timetable validates clean. Identical
/// parameters give identical documents.
pub fn generate_instance(params: &GeneratorParams) -> Result<Instance> {
    check_params(params)?;
    let mut last_err = None;
    for attempt in 0..RETRIES {
        let seed = params
            .seed
            .wrapping_add(attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        match attempt_generate(params, seed) {
            Ok(inst) => return Ok(inst),
            Err(e) => last_err = Some(e),
        }
    }
    Err(Error::Generator(format!(
        "no feasible base timetable after {RETRIES} attempts: {}",
        last_err.map(|e| e.to_string()).unwrap_or_default()
    )))
}

fn check_params(p: &GeneratorParams) -> Result<()> {
    let bad = |m: &str| Err(Error::Generator(m.to_string()));
    let min_nodes = match p.topology {
        Topology::Line => 2,
        Topology::Cross => 5,
        Topology::Star => 4,
    };
    if p.nodes < min_nodes {
        return bad(&format!(
            "{:?} needs at least {min_nodes} nodes",
            p.topology
        ));
    }
    if p.tracks_per_edge == 0 || p.inside_tracks == 0 {
        return bad("tracks_per_edge and inside_tracks must be positive");
    }
    if p.min_len < 2 || p.max_len < p.min_len {
        return bad("itinerary lengths must satisfy 2 <= min_len <= max_len");
    }
    if p.edge_headway < 0 || p.node_headway < 0 || p.run_time <= 0 || p.window < 0 || p.delay < 0 {
        return bad("times must be non-negative and run_time positive");
    }
    if !(0.0..=1.0).contains(&p.connection_prob) {
        return bad("connection_prob must lie in [0, 1]");
    }
    Ok(())
}

struct Network {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    /// Simple paths trains may run along (either direction).
    lines: Vec<Vec<NodeId>>,
    gates: Vec<GateGroup>,
}

fn build_network(p: &GeneratorParams) -> Network {
    let n = p.nodes;
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let lines: Vec<Vec<usize>> = match p.topology {
        Topology::Line => {
            pairs.extend((0..n - 1).map(|k| (k, k + 1)));
            vec![(0..n).collect()]
        }
        Topology::Cross => {
            // centre 0, four arms; arms 0 and 2 form one line, 1 and 3 the other
            let arms = arm_lengths(n - 1, 4);
            let arm_nodes = build_arms(&arms, &mut pairs);
            let mut a: Vec<usize> = arm_nodes[0].iter().rev().copied().collect();
            a.push(0);
            a.extend(&arm_nodes[2]);
            let mut b: Vec<usize> = arm_nodes[1].iter().rev().copied().collect();
            b.push(0);
            b.extend(&arm_nodes[3]);
            vec![a, b]
        }
        Topology::Star => {
            let spokes = 3.max((n - 1) / 3).min(n - 1);
            let arms = arm_lengths(n - 1, spokes);
            let arm_nodes = build_arms(&arms, &mut pairs);
            let mut lines = Vec::new();
            for i in 0..spokes {
                for j in i + 1..spokes {
                    let mut l: Vec<usize> = arm_nodes[i].iter().rev().copied().collect();
                    l.push(0);
                    l.extend(&arm_nodes[j]);
                    lines.push(l);
                }
            }
            lines
        }
    };

    let mut next_track = 0u32;
    let edges: Vec<Edge> = pairs
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| {
            let tracks = (0..p.tracks_per_edge)
                .map(|_| {
                    next_track += 1;
                    TrackId(next_track - 1)
                })
                .collect();
            Edge {
                id: EdgeId::from(k),
                from: NodeId::from(a),
                to: NodeId::from(b),
                tracks,
            }
        })
        .collect();

    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, &(a, b)) in pairs.iter().enumerate() {
        incident[a].push(k);
        incident[b].push(k);
    }
    let mut nodes = Vec::with_capacity(n);
    let mut gates = Vec::new();
    for (i, inc) in incident.iter().enumerate() {
        let inside: Vec<TrackId> = (0..p.inside_tracks)
            .map(|_| {
                next_track += 1;
                TrackId(next_track - 1)
            })
            .collect();
        let mut routes = Vec::new();
        for &e_in in inc {
            for &e_out in inc {
                // turning back only at termini
                if e_in == e_out && inc.len() > 1 {
                    continue;
                }
                for &ti in &edges[e_in].tracks {
                    for &u in &inside {
                        for &to in &edges[e_out].tracks {
                            routes.push(Route {
                                incoming_track: ti,
                                inside_track: u,
                                outgoing_track: to,
                            });
                        }
                    }
                }
            }
        }
        nodes.push(Node {
            id: NodeId::from(i),
            routes,
        });
        if inc.len() >= 3 {
            let members = inc
                .iter()
                .flat_map(|&e| {
                    let t = edges[e].tracks[0];
                    [GateDirection::Incoming, GateDirection::Outgoing].map(|direction| GateMember {
                        track: t,
                        direction,
                    })
                })
                .collect();
            gates.push(GateGroup {
                node: NodeId::from(i),
                members,
                eps: p.gate_eps,
            });
        }
    }
    let lines = lines
        .into_iter()
        .map(|l| l.into_iter().map(NodeId::from).collect())
        .collect();
    Network {
        nodes,
        edges,
        lines,
        gates,
    }
}

/// Splits `total` nodes into `k` arms as evenly as possible.
fn arm_lengths(total: usize, k: usize) -> Vec<usize> {
    (0..k)
        .map(|i| total / k + usize::from(i < total % k))
        .collect()
}

/// Numbers arm nodes from 1 outward from the hub (node 0), recording edges.
fn build_arms(lengths: &[usize], pairs: &mut Vec<(usize, usize)>) -> Vec<Vec<usize>> {
    let mut next = 1;
    lengths
        .iter()
        .map(|&len| {
            let mut prev = 0;
            (0..len)
                .map(|_| {
                    pairs.push((prev, next));
                    prev = next;
                    next += 1;
                    prev
                })
                .collect()
        })
        .collect()
}

struct Draft {
    itinerary: Vec<NodeId>,
    start: Time,
    travel: Vec<Time>,
    stops: Vec<StopBounds>,
}

fn attempt_generate(p: &GeneratorParams, seed: u64) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = build_network(p);
    let degree = |i: NodeId| {
        net.edges
            .iter()
            .filter(|e| e.from == i || e.to == i)
            .count()
    };
    let long_stop = p.horizon_slack;

    let mut drafts: Vec<Draft> = Vec::with_capacity(p.trains);
    let mut connections = Vec::new();
    while drafts.len() < p.trains {
        let line = net.lines.choose(&mut rng).expect("at least one line");
        let len = rng.gen_range(p.min_len..=p.max_len).min(line.len());
        let from = rng.gen_range(0..=line.len() - len);
        let mut itinerary = line[from..from + len].to_vec();
        if rng.gen_bool(0.5) {
            itinerary.reverse();
        }
        let speed: f64 = if rng.gen_bool(0.5) { 0.75 } else { 1.25 };
        let mut chain_start = rng.gen_range(0..=p.window);
        loop {
            let k = itinerary.len();
            let travel: Vec<Time> = (0..k - 1)
                .map(|_| {
                    let jitter: f64 = rng.gen_range(0.8..1.2);
                    ((p.run_time as f64) * speed * jitter).round().max(1.0) as Time
                })
                .collect();
            let stops = (0..k)
                .map(|pos| {
                    if pos == 0 || pos + 1 == k {
                        StopBounds {
                            min: 0,
                            max: long_stop,
                        }
                    } else {
                        let min = rng.gen_range(30..=90);
                        StopBounds {
                            min,
                            max: min + 900,
                        }
                    }
                })
                .collect::<Vec<_>>();
            let run: Time = travel.iter().sum::<Time>() + stops.iter().map(|s| s.min).sum::<Time>();
            let id = drafts.len();
            drafts.push(Draft {
                itinerary: itinerary.clone(),
                start: chain_start,
                travel,
                stops,
            });
            let end = *itinerary.last().expect("non-empty");
            if drafts.len() >= p.trains || degree(end) != 1 || !rng.gen_bool(p.connection_prob) {
                break;
            }
            connections.push(Connection {
                predecessor: TrainId::from(id),
                successor: TrainId::from(id + 1),
                node: end,
                turnaround: p.turnaround,
            });
            itinerary.reverse();
            chain_start += run + p.turnaround + rng.gen_range(0..=600);
        }
    }

    // desired times become floors of a provisional instance, then decoding
    // in order of desired departure makes them feasible
    let trains: Vec<Train> = drafts
        .iter()
        .enumerate()
        .map(|(k, dr)| desired_train(k, dr, &net))
        .collect();
    let mut sparse_edge = Vec::new();
    let mut sparse_node = Vec::new();
    for _ in 0..p.sparse_entries.min(p.trains * p.trains.saturating_sub(1)) {
        let first = TrainId::from(rng.gen_range(0..p.trains));
        let second = TrainId::from(rng.gen_range(0..p.trains));
        if first == second {
            continue;
        }
        if rng.gen_bool(0.5) {
            sparse_edge.push(EdgeSpacingEntry {
                first,
                second,
                edge: EdgeId::from(rng.gen_range(0..net.edges.len())),
                gamma: p.edge_headway * 2,
            });
        } else {
            sparse_node.push(NodeSpacingEntry {
                first,
                second,
                node: NodeId::from(rng.gen_range(0..net.nodes.len())),
                gamma: p.node_headway * 2,
            });
        }
    }
    let max_desired = trains
        .iter()
        .flat_map(|t| t.base_departures.iter())
        .copied()
        .max()
        .unwrap_or(0);
    let mut doc = InstanceDoc {
        nodes: net.nodes,
        edges: net.edges,
        trains,
        spacing: SpacingTable {
            edge_default: p.edge_headway,
            node_default: p.node_headway,
            edge: sparse_edge,
            node: sparse_node,
        },
        gates: net.gates,
        connections,
        perturbation: None,
        horizon: max_desired + 20 * p.horizon_slack,
    };
    let provisional = Instance::new_unchecked_base(doc.clone())?;
    let mut order: Vec<TrainId> = provisional.train_ids().collect();
    order.sort_by_key(|&c| (provisional.train(c).base_departures[0], c));
    let cfg = DecoderConfig {
        kick_limit: 5,
        connection_mode: ConnectionMode::Turnaround,
    };
    let res = decode(&provisional, &Permutation::from_vec_unchecked(order), &cfg);
    if !res.complete {
        return Err(Error::Generator(format!(
            "{} train(s) could not be placed",
            res.unscheduled.len()
        )));
    }
    adopt_base(&mut doc, &res.schedule);
    let max_base = doc
        .trains
        .iter()
        .flat_map(|t| t.base_departures.iter())
        .copied()
        .max()
        .unwrap_or(0);
    doc.horizon = max_base + p.horizon_slack;

    let c = TrainId::from(rng.gen_range(0..doc.trains.len()));
    let t = &doc.trains[c.index()];
    let location = if t.len() > 1 && rng.gen_bool(0.3) {
        PerturbationLocation::OnEdge(rng.gen_range(0..t.len() - 1))
    } else {
        PerturbationLocation::AtNode(t.itinerary[rng.gen_range(0..t.len())])
    };
    doc.perturbation = Some(Perturbation {
        train: c,
        location,
        delay: p.delay,
    });
    Instance::new(doc)
}

fn desired_train(k: usize, dr: &Draft, net: &Network) -> Train {
    let len = dr.itinerary.len();
    let mut a = Vec::with_capacity(len);
    let mut d = Vec::with_capacity(len);
    let mut t = dr.start;
    for pos in 0..len {
        a.push(t);
        t += dr.stops[pos].min;
        d.push(t);
        if pos + 1 < len {
            t += dr.travel[pos];
        }
    }
    // placeholder routes; replaced by the decoded ones
    let base_routes = dr
        .itinerary
        .iter()
        .map(|&i| net.nodes[i.index()].routes[0])
        .collect();
    Train {
        id: TrainId::from(k),
        itinerary: dr.itinerary.clone(),
        base_arrivals: a,
        base_departures: d,
        base_routes,
        stop_bounds: dr.stops.clone(),
        travel_min: dr.travel.clone(),
    }
}

fn adopt_base(doc: &mut InstanceDoc, sched: &Schedule) {
    for t in &mut doc.trains {
        let ev = sched.get(t.id).expect("complete decode");
        t.base_arrivals = ev.iter().map(|e| e.arrival).collect();
        t.base_departures = ev.iter().map(|e| e.departure).collect();
        t.base_routes = ev.iter().map(|e| e.route).collect();
    }
}

/// A perturbation of `delay` seconds on a random train, at a random node of
/// its itinerary or (with probability 0.3) on a random leg.
pub fn random_perturbation(inst: &Instance, delay: Time, seed: u64) -> Result<Perturbation> {
    if inst.num_trains() == 0 {
        return Err(Error::Invalid("instance has no trains to perturb".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = TrainId::from(rng.gen_range(0..inst.num_trains()));
    let t = inst.train(c);
    let location = if t.len() > 1 && rng.gen_bool(0.3) {
        PerturbationLocation::OnEdge(rng.gen_range(0..t.len() - 1))
    } else {
        PerturbationLocation::AtNode(t.itinerary[rng.gen_range(0..t.len())])
    };
    Ok(Perturbation {
        train: c,
        location,
        delay,
    })
}

/// `inst` with its perturbation replaced (and checked against the network).
pub fn with_perturbation(inst: &Instance, p: Option<Perturbation>) -> Result<Instance> {
    let mut doc = inst.doc().clone();
    doc.perturbation = p;
    Instance::new(doc)
}

/// Three stations in a line with a passing loop in the middle. A slow train
/// is delayed just ahead of a fast one; the best schedule lets the fast train
/// overtake in the loop, which no insertion order produces because the slow
/// train always leaves the loop as early as it can.
pub fn overtake_motif() -> Instance {
    let r = |inc: u32, inside: u32, out: u32| Route {
        incoming_track: TrackId(inc),
        inside_track: TrackId(inside),
        outgoing_track: TrackId(out),
    };
    let nodes = vec![
        Node {
            id: NodeId(0),
            routes: vec![r(0, 100, 0)],
        },
        Node {
            id: NodeId(1),
            routes: vec![r(0, 101, 1), r(0, 201, 1)],
        },
        Node {
            id: NodeId(2),
            routes: vec![r(1, 102, 1)],
        },
    ];
    let edges = vec![
        Edge {
            id: EdgeId(0),
            from: NodeId(0),
            to: NodeId(1),
            tracks: vec![TrackId(0)],
        },
        Edge {
            id: EdgeId(1),
            from: NodeId(1),
            to: NodeId(2),
            tracks: vec![TrackId(1)],
        },
    ];
    let open = StopBounds { min: 0, max: 3_600 };
    let stop = StopBounds {
        min: 60,
        max: 3_600,
    };
    let train = |id: u32, a: [Time; 3], d: [Time; 3], run: Time| Train {
        id: TrainId(id),
        itinerary: vec![NodeId(0), NodeId(1), NodeId(2)],
        base_arrivals: a.to_vec(),
        base_departures: d.to_vec(),
        base_routes: vec![nodes[0].routes[0], nodes[1].routes[0], nodes[2].routes[0]],
        stop_bounds: vec![open, stop, open],
        travel_min: vec![run, run],
    };
    let slow = train(0, [0, 600, 1_260], [0, 660, 1_260], 600);
    let fast = train(1, [700, 1_000, 1_360], [700, 1_060, 1_360], 300);
    let doc = InstanceDoc {
        nodes: nodes.clone(),
        edges,
        trains: vec![slow, fast],
        spacing: SpacingTable {
            edge_default: 60,
            node_default: 30,
            edge: vec![],
            node: vec![],
        },
        gates: vec![],
        connections: vec![],
        perturbation: Some(Perturbation {
            train: TrainId(0),
            location: PerturbationLocation::AtNode(NodeId(0)),
            delay: 500,
        }),
        horizon: 6_000,
    };
    Instance::new(doc).expect("motif base timetable is feasible")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validate::{count_constraints, validate_schedule};

    fn params(topology: Topology, nodes: usize, trains: usize, seed: u64) -> GeneratorParams {
        GeneratorParams {
            topology,
            nodes,
            trains,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn two_trains_on_three_nodes() {
        let inst = generate_instance(&params(Topology::Line, 3, 2, 1)).unwrap();
        assert_eq!(inst.num_trains(), 2);
        let v = validate_schedule(&inst, &Schedule::base(&inst), ConnectionMode::Turnaround);
        assert!(v.is_empty());
    }

    #[test]
    fn random_perturbation_is_seeded_and_valid() {
        let inst = generate_instance(&params(Topology::Star, 10, 8, 2)).unwrap();
        let a = random_perturbation(&inst, 300, 4).unwrap();
        assert_eq!(a, random_perturbation(&inst, 300, 4).unwrap());
        assert_eq!(a.delay, 300);
        let p = with_perturbation(&inst, Some(a)).unwrap();
        assert_eq!(p.perturbation, Some(a));
        let off = with_perturbation(&p, None).unwrap();
        assert_eq!(off.perturbation, None);
    }

    #[test]
    fn same_seed_same_document() {
        for topo in [Topology::Line, Topology::Cross, Topology::Star] {
            let p = params(topo, 13, 12, 5);
            let a = generate_instance(&p).unwrap().to_json();
            let b = generate_instance(&p).unwrap().to_json();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let inst = generate_instance(&params(Topology::Line, 8, 10, 42)).unwrap();
        let back = load_instance(&save_instance(&inst)).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn every_topology_loads_clean() {
        for topo in [Topology::Line, Topology::Cross, Topology::Star] {
            for seed in 0..5 {
                let inst = generate_instance(&params(topo, 13, 15, seed)).unwrap();
                assert!(inst.perturbation.is_some());
                if topo != Topology::Line {
                    assert!(!inst.gates.is_empty());
                }
            }
        }
    }

    #[test]
    fn connections_appear() {
        let mut p = params(Topology::Line, 5, 30, 3);
        p.connection_prob = 1.0;
        let inst = generate_instance(&p).unwrap();
        assert!(!inst.connections.is_empty());
    }

    #[test]
    fn constraint_count_tracks_pair_density() {
        let inst = generate_instance(&params(Topology::Line, 40, 50, 9)).unwrap();
        let total = count_constraints(&inst, ConnectionMode::Turnaround).total() as f64;
        // per visit: 2 floors, 1 stop bound, about 1 speed row; per pair of
        // visits at a node, rows for the shared inside track and edge track,
        // split across the inside tracks
        let visits: Vec<f64> = inst
            .nodes
            .iter()
            .map(|n| inst.visits(n.id).len() as f64)
            .collect();
        let singles: f64 = visits.iter().map(|v| 4.0 * v).sum();
        let pairs: f64 = visits.iter().map(|v| v * (v - 1.0) / 2.0).sum();
        let estimate = singles + pairs * (2.0 + 4.0) / 2.0;
        assert!(
            total <= 10.0 * estimate && total >= estimate / 10.0,
            "{total} vs {estimate}"
        );
    }

    #[test]
    fn bad_params_are_rejected() {
        let mut p = params(Topology::Cross, 3, 2, 0);
        assert!(matches!(generate_instance(&p), Err(Error::Generator(_))));
        p.topology = Topology::Line;
        p.min_len = 1;
        assert!(generate_instance(&p).is_err());
    }
}
