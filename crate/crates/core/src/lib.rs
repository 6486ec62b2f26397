//! Train re-timetabling after a single perturbation.
//!
//! A permutation of trains is turned into a schedule by a semi-greedy
//! insertion [`decoder`]; an (μ+λ) evolutionary search in [`evolve`] looks
//! for the permutation whose schedule has the least total arrival delay.
//! [`mip`] writes the same problem as an LP file with a warm start taken
//! from any feasible schedule, and [`oracle`] holds exhaustive solvers for
//! tiny instances.

pub mod decoder;
pub mod diagram;
pub mod error;
pub mod evolve;
pub mod generate;
pub mod mip;
pub mod model;
pub mod oracle;
pub mod schedule;
pub mod validate;

pub use decoder::{decode, penalized_fitness, DecodeResult, DecoderConfig, Permutation};
pub use diagram::{emit_spacetime_svg, DiagramOptions};
pub use error::{Error, Result};
pub use evolve::{run_ea, run_ea_observed, stats_csv, EAConfig, GenerationStats, Individual};
pub use generate::{
    generate_instance, overtake_motif, random_perturbation, with_perturbation, GeneratorParams,
    Topology,
};
pub use mip::{export_lp, export_warm_start, MipOptions};
pub use model::{
    apply_perturbation, load_instance, save_instance, Connection, Edge, EdgeId, Instance,
    InstanceDoc, Node, NodeId, Perturbation, PerturbationLocation, Route, SpacingTable, Time,
    TrackId, Train, TrainId,
};
pub use oracle::{best_permutation_exhaustive, true_optimum_exhaustive, ExactSolution, TimeGrid};
pub use schedule::{Event, Schedule};
pub use validate::{
    count_constraints, validate_schedule, ConnectionMode, Violation, ViolationKind,
};
