use std::collections::HashMap;

use super::*;
use crate::decoder::{decode, penalized_fitness, DecoderConfig, Permutation};
use crate::generate::{generate_instance, overtake_motif, GeneratorParams, Topology};
use crate::model::fixtures::*;
use crate::model::*;
use crate::oracle::{true_optimum_exhaustive, TimeGrid};
use crate::validate::count_constraints;

/// A deliberately small LP reader, independent of the writer's data
/// structures: it only sees the text.
/// Name, terms, sense and right-hand side.
type ParsedRow = (String, Vec<(i64, String)>, String, i64);

#[derive(Debug, Default)]
struct ParsedLp {
    objective: Vec<(i64, String)>,
    constant: i64,
    rows: Vec<ParsedRow>,
    bounds: HashMap<String, (i64, i64)>,
    general: Vec<String>,
    binary: Vec<String>,
}

fn parse_expr(tokens: &[&str]) -> (Vec<(i64, String)>, i64) {
    let mut terms = Vec::new();
    let mut constant = 0;
    let mut sign = 1;
    let mut coef: Option<i64> = None;
    for &tok in tokens {
        match tok {
            "+" => sign = 1,
            "-" => sign = -1,
            _ => {
                if let Ok(v) = tok.parse::<i64>() {
                    coef = Some(v);
                } else {
                    terms.push((sign * coef.take().unwrap_or(1), tok.to_string()));
                    sign = 1;
                    continue;
                }
            }
        }
    }
    if let Some(v) = coef {
        constant += sign * v;
    }
    (terms, constant)
}

fn parse_lp(text: &str) -> ParsedLp {
    let mut lp = ParsedLp::default();
    let mut section = "";
    let mut pending = String::new();
    let mut statements: Vec<(String, String)> = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.starts_with('\\') || trimmed.is_empty() {
            continue;
        }
        match trimmed {
            "minimize" | "subject to" | "bounds" | "general" | "binary" | "end" => {
                if !pending.is_empty() {
                    statements.push((section.to_string(), std::mem::take(&mut pending)));
                }
                section = match trimmed {
                    "minimize" => "obj",
                    "subject to" => "rows",
                    "bounds" => "bounds",
                    "general" => "general",
                    "binary" => "binary",
                    _ => "end",
                };
                continue;
            }
            _ => {}
        }
        let continuation = line.starts_with("   ");
        if !continuation && !pending.is_empty() {
            statements.push((section.to_string(), std::mem::take(&mut pending)));
        }
        pending.push(' ');
        pending.push_str(trimmed);
    }
    for (section, stmt) in statements {
        let toks: Vec<&str> = stmt.split_whitespace().collect();
        match section.as_str() {
            "obj" => {
                let (terms, c) = parse_expr(&toks[1..]);
                lp.objective = terms;
                lp.constant = c;
            }
            "rows" => {
                let name = toks[0].trim_end_matches(':').to_string();
                let k = toks
                    .iter()
                    .position(|t| [">=", "<=", "="].contains(t))
                    .unwrap();
                let (terms, _) = parse_expr(&toks[1..k]);
                lp.rows.push((
                    name,
                    terms,
                    toks[k].to_string(),
                    toks[k + 1].parse().unwrap(),
                ));
            }
            "bounds" => {
                assert_eq!(toks.len(), 5, "{stmt}");
                lp.bounds.insert(
                    toks[2].to_string(),
                    (toks[0].parse().unwrap(), toks[4].parse().unwrap()),
                );
            }
            "general" => lp.general.extend(toks.iter().map(|s| s.to_string())),
            "binary" => lp.binary.extend(toks.iter().map(|s| s.to_string())),
            _ => {}
        }
    }
    lp
}

/// Returns violated row names and the objective under `values`.
fn evaluate(lp: &ParsedLp, values: &HashMap<String, i64>) -> (Vec<String>, i64) {
    let val = |n: &String| *values.get(n).unwrap_or_else(|| panic!("no value for {n}"));
    let mut bad = Vec::new();
    for (name, terms, sense, rhs) in &lp.rows {
        let lhs: i64 = terms.iter().map(|(c, n)| c * val(n)).sum();
        let ok = match sense.as_str() {
            ">=" => lhs >= *rhs,
            "<=" => lhs <= *rhs,
            _ => lhs == *rhs,
        };
        if !ok {
            bad.push(name.clone());
        }
    }
    for (n, &(lo, hi)) in &lp.bounds {
        if !(lo..=hi).contains(&val(n)) {
            bad.push(format!("bound {n}"));
        }
    }
    for n in &lp.binary {
        if !(0..=1).contains(&val(n)) {
            bad.push(format!("binary {n}"));
        }
    }
    let obj = lp.objective.iter().map(|(c, n)| c * val(n)).sum::<i64>() + lp.constant;
    (bad, obj)
}

fn values_of(text: &str) -> HashMap<String, i64> {
    parse_warm_start(text).unwrap().into_iter().collect()
}

fn families(lp: &ParsedLp, prefix: &str) -> usize {
    lp.rows.iter().filter(|r| r.0.starts_with(prefix)).count()
}

fn one_train_two_nodes() -> Instance {
    let (nodes, edges) = line(2);
    let rs = [nodes[0].routes[0], nodes[1].routes[0]];
    let t = line_train(0, &[NodeId(0), NodeId(1)], 0, 100, 0, &rs);
    Instance::new(InstanceDoc {
        nodes,
        edges,
        trains: vec![t],
        spacing: spacing(60, 30),
        gates: vec![],
        connections: vec![],
        perturbation: None,
        horizon: 1_000,
    })
    .unwrap()
}

fn two_trains_one_track() -> Instance {
    let (mut nodes, edges) = line(2);
    // separate inside tracks so the only shared resource is the edge track
    nodes[0].routes.push(route(0, 200, 0));
    nodes[1].routes.push(route(0, 201, 0));
    let ids = [NodeId(0), NodeId(1)];
    let t0 = line_train(
        0,
        &ids,
        0,
        100,
        0,
        &[nodes[0].routes[0], nodes[1].routes[0]],
    );
    let t1 = line_train(
        1,
        &ids,
        200,
        100,
        0,
        &[nodes[0].routes[1], nodes[1].routes[1]],
    );
    let doc = InstanceDoc {
        nodes,
        edges,
        trains: vec![t0, t1],
        spacing: spacing(60, 30),
        gates: vec![],
        connections: vec![],
        perturbation: None,
        horizon: 1_000,
    };
    Instance::new(doc).unwrap()
}

fn seed7(mode: ConnectionMode) -> (Instance, MipModel) {
    let p = GeneratorParams {
        trains: 20,
        seed: 7,
        ..Default::default()
    };
    let inst = apply_perturbation(&generate_instance(&p).unwrap());
    let model = build_model(
        &inst,
        &MipOptions {
            connection_mode: mode,
            ..Default::default()
        },
    )
    .unwrap();
    (inst, model)
}

#[test]
fn single_train_model_shape() {
    let inst = one_train_two_nodes();
    let lp = parse_lp(&export_lp(&inst, &MipOptions::default()).unwrap());
    let times = lp
        .general
        .iter()
        .filter(|n| n.starts_with("a_") || n.starts_with("d_"))
        .count();
    assert_eq!(times, 4);
    assert_eq!(lp.binary, ["x_0_0_0", "x_0_1_0"]);
    assert_eq!(families(&lp, "route_"), 2);
    assert!(lp.binary.iter().all(|n| !n.starts_with("y_")));
    assert_eq!(families(&lp, "init_"), 4);
    assert_eq!(families(&lp, "stop_"), 2);
    assert_eq!(families(&lp, "speed_"), 1);
}

#[test]
fn shared_edge_track_gives_one_y_and_four_rows() {
    let inst = two_trains_one_track();
    let lp = parse_lp(&export_lp(&inst, &MipOptions::default()).unwrap());
    let edge_ys: Vec<_> = lp.binary.iter().filter(|n| n.contains("_e")).collect();
    assert_eq!(edge_ys, ["y_0_1_e0ft0"]);
    assert_eq!(families(&lp, "edge_"), 4);
}

#[test]
fn counts_match_analytic_audit() {
    for mode in [ConnectionMode::Turnaround, ConnectionMode::Literal] {
        let (inst, model) = seed7(mode);
        assert_eq!(
            model.constraint_counts(),
            count_constraints(&inst, mode),
            "{mode}"
        );
        assert!(!inst.connections.is_empty());
        for topology in [Topology::Cross, Topology::Star] {
            let p = GeneratorParams {
                topology,
                nodes: 13,
                trains: 20,
                seed: 7,
                ..Default::default()
            };
            let inst = apply_perturbation(&generate_instance(&p).unwrap());
            let model = build_model(
                &inst,
                &MipOptions {
                    connection_mode: mode,
                    ..Default::default()
                },
            )
            .unwrap();
            let counts = count_constraints(&inst, mode);
            assert!(counts.gate > 0);
            assert_eq!(model.constraint_counts(), counts, "{topology:?} {mode}");
        }
    }
}

#[test]
fn lp_text_is_deterministic() {
    let (_, a) = seed7(ConnectionMode::Turnaround);
    let (_, b) = seed7(ConnectionMode::Turnaround);
    assert_eq!(a.to_lp(), b.to_lp());
}

#[test]
fn big_m_covers_horizon_and_spacing() {
    let (inst, model) = seed7(ConnectionMode::Turnaround);
    assert!(model.big_m >= inst.horizon + inst.spacing.edge_default);
    assert!(model.big_m >= inst.horizon + inst.spacing.node_default);
}

#[test]
fn base_timetable_warm_start_has_zero_objective() {
    let inst = one_train_two_nodes();
    let text = export_warm_start(&inst, &Schedule::base(&inst), &MipOptions::default()).unwrap();
    let lp = parse_lp(&export_lp(&inst, &MipOptions::default()).unwrap());
    let (bad, obj) = evaluate(&lp, &values_of(&text));
    assert!(bad.is_empty(), "{bad:?}");
    assert_eq!(obj, 0);
}

#[test]
fn decoder_warm_start_satisfies_every_row() {
    let p = GeneratorParams {
        trains: 5,
        nodes: 5,
        seed: 3,
        ..Default::default()
    };
    let inst = apply_perturbation(&generate_instance(&p).unwrap());
    let cfg = DecoderConfig::default();
    let res = decode(&inst, &Permutation::identity(5), &cfg);
    assert!(res.complete);
    let opts = MipOptions::default();
    let text = export_warm_start(&inst, &res.schedule, &opts).unwrap();
    let lp = parse_lp(&export_lp(&inst, &opts).unwrap());
    let values = values_of(&text);
    assert_eq!(values.len(), lp.general.len() + lp.binary.len());
    let (bad, obj) = evaluate(&lp, &values);
    assert!(bad.is_empty(), "{bad:?}");
    assert_eq!(obj, penalized_fitness(&res, &inst));
}

#[test]
fn incomplete_schedule_is_refused() {
    let inst = two_trains_one_track();
    let mut s = Schedule::base(&inst);
    s.remove(TrainId(1));
    assert!(matches!(
        export_warm_start(&inst, &s, &MipOptions::default()),
        Err(Error::IncompleteSchedule(1))
    ));
}

#[test]
fn infeasible_schedule_is_refused() {
    let inst = two_trains_one_track();
    let mut s = Schedule::base(&inst);
    let mut ev = s.get(TrainId(1)).unwrap().to_vec();
    ev[0].departure = 10;
    ev[0].arrival = 10;
    s.set(TrainId(1), ev);
    assert!(matches!(
        export_warm_start(&inst, &s, &MipOptions::default()),
        Err(Error::InfeasibleSchedule(_))
    ));
}

#[test]
fn exact_optimum_is_lp_feasible_with_matching_objective() {
    let inst = apply_perturbation(&overtake_motif());
    let sol = true_optimum_exhaustive(&inst, TimeGrid::Tight, ConnectionMode::Turnaround).unwrap();
    let opts = MipOptions::default();
    let text = export_warm_start(&inst, &sol.schedule, &opts).unwrap();
    let (bad, obj) = evaluate(
        &parse_lp(&export_lp(&inst, &opts).unwrap()),
        &values_of(&text),
    );
    assert!(bad.is_empty(), "{bad:?}");
    assert_eq!(obj, sol.fitness);
}

#[test]
fn row_cap_is_enforced() {
    let (inst, _) = seed7(ConnectionMode::Turnaround);
    let opts = MipOptions {
        row_cap: 10,
        ..Default::default()
    };
    assert!(matches!(export_lp(&inst, &opts), Err(Error::TooLarge(_))));
}

#[test]
fn warm_start_parser() {
    let v = parse_warm_start("# header\na_0_0 5\n\nx_0_0_1 1 # chosen\n").unwrap();
    assert_eq!(v, [("a_0_0".to_string(), 5), ("x_0_0_1".to_string(), 1)]);
    assert!(matches!(
        parse_warm_start("a 1\na 2\n"),
        Err(Error::Parse { line: 2, .. })
    ));
    assert!(matches!(
        parse_warm_start("a x\n"),
        Err(Error::Parse { line: 1, .. })
    ));
    assert!(matches!(
        parse_warm_start("a\n"),
        Err(Error::Parse { line: 1, .. })
    ));
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn complete_decodes_give_valid_warm_starts(
            seed in 0u64..1_000,
            topo in prop_oneof![Just(Topology::Line), Just(Topology::Cross), Just(Topology::Star)],
            literal in any::<bool>(),
            shuffle in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mode = if literal { ConnectionMode::Literal } else { ConnectionMode::Turnaround };
            let p = GeneratorParams { topology: topo, nodes: 9, trains: 8, seed, ..Default::default() };
            let inst = apply_perturbation(&generate_instance(&p).unwrap());
            let mut order: Vec<TrainId> = inst.train_ids().collect();
            order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(shuffle));
            let cfg = DecoderConfig { connection_mode: mode, ..Default::default() };
            let res = decode(&inst, &Permutation::new(order, inst.num_trains()).unwrap(), &cfg);
            prop_assume!(res.complete);
            let opts = MipOptions { connection_mode: mode, ..Default::default() };
            let model = build_model(&inst, &opts).unwrap();
            prop_assert_eq!(model.constraint_counts(), count_constraints(&inst, mode));
            let text = export_warm_start(&inst, &res.schedule, &opts).unwrap();
            let (bad, obj) = evaluate(&parse_lp(&model.to_lp()), &values_of(&text));
            prop_assert!(bad.is_empty(), "{:?}", bad);
            prop_assert_eq!(obj, penalized_fitness(&res, &inst));
        }
    }
}
