use std::path::Path;

use retimer::*;

fn golden(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/golden")
        .join(name);
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn golden_instances_round_trip_byte_for_byte() {
    for name in ["cross.json", "overtake.json"] {
        let text = golden(name);
        let inst = load_instance(&text).unwrap();
        assert_eq!(save_instance(&inst), text, "{name}");
    }
}

#[test]
fn unperturbed_base_timetable_is_clean() {
    let inst = load_instance(&golden("cross.json")).unwrap();
    assert!(inst.doc().perturbation.is_none());
    let base = Schedule::base(&inst);
    assert!(validate_schedule(&inst, &base, ConnectionMode::Turnaround).is_empty());
    // generated turnarounds leave time between the pair, which the literal pins forbid
    let literal = validate_schedule(&inst, &base, ConnectionMode::Literal);
    assert!(!literal.is_empty());
    assert!(literal.iter().all(|v| v.kind == ViolationKind::Connection));
}

#[test]
fn overtake_instance_has_a_positive_optimum() {
    let inst = apply_perturbation(&load_instance(&golden("overtake.json")).unwrap());
    let (_, decoded) = best_permutation_exhaustive(&inst, &DecoderConfig::default()).unwrap();
    let exact =
        true_optimum_exhaustive(&inst, TimeGrid::Tight, ConnectionMode::Turnaround).unwrap();
    assert_eq!((decoded, exact.fitness), (1620, 1440));
}
