use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use retimer::mip::{self, MipOptions};
use retimer::oracle::{self, TimeGrid};
use retimer::validate::{json_report, text_report};
use retimer::*;

/// Train re-timetabling: generate instances, decode and evolve train
/// orders, export MIP models, and draw space/time diagrams.
#[derive(Parser, Debug)]
#[command(name = "retimer", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic instance with a feasible base timetable.
    Generate(GenerateArgs),
    /// Set, replace or clear the perturbation of an instance.
    Perturb(PerturbArgs),
    /// Decode one train permutation into a schedule.
    Decode(DecodeArgs),
    /// Check a schedule against every constraint.
    Validate(ValidateArgs),
    /// Search for a good permutation with the evolutionary algorithm.
    Evolve(EvolveArgs),
    /// Write the instance as an LP-format MIP, optionally with a warm start.
    ExportMip(ExportMipArgs),
    /// Exhaustive optima for tiny instances.
    Oracle(OracleArgs),
    /// Draw a space/time diagram as SVG.
    Diagram(DiagramArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TopologyArg {
    Line,
    Cross,
    Star,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Turnaround,
    Literal,
}

impl From<ModeArg> for ConnectionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Turnaround => ConnectionMode::Turnaround,
            ModeArg::Literal => ConnectionMode::Literal,
        }
    }
}

#[derive(Args, Debug)]
struct DecoderArgs {
    /// How often one train may be kicked out before the kicker gives up.
    #[arg(long, default_value_t = 5)]
    kick_limit: u32,
    #[arg(long, value_enum, default_value = "turnaround")]
    connection_mode: ModeArg,
}

impl DecoderArgs {
    fn config(&self) -> DecoderConfig {
        DecoderConfig {
            kick_limit: self.kick_limit,
            connection_mode: self.connection_mode.into(),
        }
    }
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "line")]
    topology: TopologyArg,
    #[arg(long, default_value_t = 6)]
    nodes: usize,
    #[arg(long, default_value_t = 10)]
    trains: usize,
    #[arg(long, default_value_t = 1)]
    tracks_per_edge: usize,
    #[arg(long, default_value_t = 2)]
    inside_tracks: usize,
    #[arg(long, default_value_t = 120)]
    edge_headway: i64,
    #[arg(long, default_value_t = 60)]
    node_headway: i64,
    #[arg(long, default_value_t = 300)]
    run_time: i64,
    #[arg(long, default_value_t = 7200)]
    window: i64,
    #[arg(long, default_value_t = 0.3)]
    connection_prob: f64,
    #[arg(long, default_value_t = 300)]
    turnaround: i64,
    #[arg(long, default_value_t = 2)]
    min_len: usize,
    #[arg(long, default_value_t = 8)]
    max_len: usize,
    /// Delay of the generated perturbation, in seconds.
    #[arg(long, default_value_t = 600)]
    delay: i64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PerturbArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Perturbed train; chosen at random (from --seed) when omitted.
    #[arg(long)]
    train: Option<u32>,
    #[arg(long, conflicts_with = "on_edge", requires = "train")]
    at_node: Option<u32>,
    /// Leg index along the train's itinerary.
    #[arg(long, requires = "train")]
    on_edge: Option<usize>,
    #[arg(long, default_value_t = 600)]
    delay: i64,
    /// Remove the perturbation instead.
    #[arg(long, conflicts_with_all = ["train", "at_node", "on_edge"])]
    clear: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    #[arg(long)]
    instance: PathBuf,
    /// One train id per line; `#` comments allowed. Defaults to the order of
    /// base first departures.
    #[arg(long)]
    perm: Option<PathBuf>,
    #[command(flatten)]
    decoder: DecoderArgs,
    /// Decode result as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    schedule_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, required_unless_present = "base", conflicts_with = "base")]
    schedule: Option<PathBuf>,
    /// Validate the instance's own base timetable.
    #[arg(long)]
    base: bool,
    #[arg(long, value_enum, default_value = "turnaround")]
    connection_mode: ModeArg,
    /// Print violations as JSON instead of one per line.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct EvolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 10)]
    mu: usize,
    #[arg(long, default_value_t = 70)]
    lambda: usize,
    #[arg(long, default_value_t = 2)]
    tournament: usize,
    #[arg(long, default_value_t = 12)]
    radius: usize,
    #[arg(long, default_value_t = 50.0)]
    t0: f64,
    #[arg(long, default_value_t = 1.0)]
    t_inf: f64,
    #[arg(long, default_value_t = 0)]
    n0: u64,
    #[arg(long, default_value_t = 0.1)]
    decay: f64,
    #[arg(long, default_value_t = 100)]
    generations: u64,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Stop after this many generations without improvement (0 disables).
    #[arg(long, default_value_t = 10)]
    stagnation: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Record elapsed milliseconds in the statistics (breaks byte-identical
    /// reruns).
    #[arg(long)]
    wall_clock: bool,
    #[command(flatten)]
    decoder: DecoderArgs,
    #[arg(long)]
    stats_out: Option<PathBuf>,
    #[arg(long)]
    best_out: Option<PathBuf>,
    #[arg(long)]
    schedule_out: Option<PathBuf>,
    /// Rewritten with the best permutation after every generation.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExportMipArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Schedule to turn into a warm start.
    #[arg(long, requires = "mst_out")]
    warm_start: Option<PathBuf>,
    #[arg(long, requires = "warm_start")]
    mst_out: Option<PathBuf>,
    #[arg(long, default_value_t = mip::DEFAULT_ROW_CAP)]
    row_cap: usize,
    #[arg(long, value_enum, default_value = "turnaround")]
    connection_mode: ModeArg,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long)]
    instance: PathBuf,
    #[command(flatten)]
    decoder: DecoderArgs,
    /// Search a uniform time grid with this step instead of exact bounds.
    #[arg(long)]
    grid: Option<i64>,
    /// Only decode all permutations.
    #[arg(long)]
    skip_exact: bool,
    #[arg(long)]
    schedule_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DiagramArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Reconstructed schedule, drawn over the reference.
    #[arg(long)]
    schedule: Option<PathBuf>,
    /// Reference schedule; defaults to the base timetable.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Comma-separated node chain for the distance axis.
    #[arg(long, value_delimiter = ',')]
    path: Option<Vec<u32>>,
    /// Comma-separated trains to draw (default all).
    #[arg(long, value_delimiter = ',')]
    trains: Option<Vec<u32>>,
    #[arg(long, default_value_t = 1000.0)]
    width: f64,
    #[arg(long, default_value_t = 600.0)]
    height: f64,
    #[arg(long)]
    out: PathBuf,
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Loads an instance with its perturbation applied.
fn instance(path: &Path) -> anyhow::Result<Instance> {
    let inst =
        load_instance(&read(path)?).with_context(|| format!("loading {}", path.display()))?;
    Ok(apply_perturbation(&inst))
}

fn schedule(path: &Path, inst: &Instance) -> anyhow::Result<Schedule> {
    Schedule::from_json(&read(path)?, inst.num_trains())
        .with_context(|| format!("loading {}", path.display()))
}

fn generate(a: GenerateArgs) -> anyhow::Result<()> {
    let params = GeneratorParams {
        topology: match a.topology {
            TopologyArg::Line => Topology::Line,
            TopologyArg::Cross => Topology::Cross,
            TopologyArg::Star => Topology::Star,
        },
        nodes: a.nodes,
        trains: a.trains,
        tracks_per_edge: a.tracks_per_edge,
        inside_tracks: a.inside_tracks,
        edge_headway: a.edge_headway,
        node_headway: a.node_headway,
        run_time: a.run_time,
        window: a.window,
        connection_prob: a.connection_prob,
        turnaround: a.turnaround,
        min_len: a.min_len,
        max_len: a.max_len,
        delay: a.delay,
        seed: a.seed,
        ..Default::default()
    };
    let inst = generate_instance(&params)?;
    write(&a.out, &save_instance(&inst))?;
    println!(
        "{} trains, {} nodes, {} connections, {} gate groups",
        inst.num_trains(),
        inst.nodes.len(),
        inst.connections.len(),
        inst.gates.len()
    );
    Ok(())
}

fn perturb(a: PerturbArgs) -> anyhow::Result<()> {
    let inst = load_instance(&read(&a.instance)?)?;
    let p = if a.clear {
        None
    } else if let Some(train) = a.train {
        let location = match (a.at_node, a.on_edge) {
            (Some(i), None) => PerturbationLocation::AtNode(NodeId(i)),
            (None, Some(leg)) => PerturbationLocation::OnEdge(leg),
            _ => bail!("give exactly one of --at-node and --on-edge with --train"),
        };
        Some(Perturbation {
            train: TrainId(train),
            location,
            delay: a.delay,
        })
    } else {
        Some(random_perturbation(&inst, a.delay, a.seed)?)
    };
    let out = with_perturbation(&inst, p)?;
    write(&a.out, &save_instance(&out))?;
    match p {
        Some(p) => {
            let at = match p.location {
                PerturbationLocation::AtNode(i) => format!("at node {i}"),
                PerturbationLocation::OnEdge(leg) => format!("on leg {leg}"),
            };
            println!("train {} delayed {} s {at}", p.train, p.delay);
        }
        None => println!("perturbation cleared"),
    }
    Ok(())
}

fn decode_cmd(a: DecodeArgs) -> anyhow::Result<()> {
    let inst = instance(&a.instance)?;
    let perm = match &a.perm {
        Some(p) => Permutation::parse(&read(p)?, inst.num_trains())?,
        None => evolve::dispatch_order(&inst),
    };
    let res = decode(&inst, &perm, &a.decoder.config());
    if let Some(p) = &a.out {
        write(p, &(serde_json::to_string_pretty(&res)? + "\n"))?;
    }
    if let Some(p) = &a.schedule_out {
        write(p, &res.schedule.to_json())?;
    }
    println!(
        "fitness {} complete {} unscheduled {} kicks {}",
        res.fitness(&inst),
        res.complete,
        res.unscheduled.len(),
        res.total_kicks()
    );
    Ok(())
}

/// Returns whether the schedule is clean.
fn validate_cmd(a: ValidateArgs) -> anyhow::Result<bool> {
    let inst = instance(&a.instance)?;
    let sched = match &a.schedule {
        Some(p) => schedule(p, &inst)?,
        None => Schedule::base(&inst),
    };
    let v = validate_schedule(&inst, &sched, a.connection_mode.into());
    if a.json {
        println!("{}", json_report(&v));
    } else {
        print!("{}", text_report(&v));
        println!("{} violations", v.len());
    }
    Ok(v.is_empty())
}

fn evolve_cmd(a: EvolveArgs) -> anyhow::Result<()> {
    let inst = instance(&a.instance)?;
    let cfg = EAConfig {
        mu: a.mu,
        lambda: a.lambda,
        tournament_s: a.tournament,
        radius: a.radius,
        t0: a.t0,
        t_inf: a.t_inf,
        n0: a.n0,
        decay: a.decay,
        generations: a.generations,
        time_limit: a.time_limit.map(Duration::from_secs_f64),
        stagnation: (a.stagnation > 0).then_some(a.stagnation),
        seed: a.seed,
        wall_clock: a.wall_clock,
        decoder: a.decoder.config(),
    };
    let interrupted = Arc::new(AtomicBool::new(false));
    {
        let flag = interrupted.clone();
        // a second handler cannot be installed; only the first call matters
        let _ = ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst));
    }
    let mut checkpoint_error = None;
    let out = evolve::run_ea_observed(&inst, &cfg, None, |_, parents| {
        if let Some(path) = &a.checkpoint {
            let tmp = path.with_extension("tmp");
            let res = std::fs::write(&tmp, parents[0].genotype.to_text())
                .and_then(|_| std::fs::rename(&tmp, path));
            if let Err(e) = res {
                checkpoint_error = Some(e);
                return ControlFlow::Break(());
            }
        }
        if interrupted.load(Ordering::SeqCst) {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })?;
    if let Some(e) = checkpoint_error {
        return Err(e).context("writing checkpoint");
    }
    if let Some(p) = &a.stats_out {
        write(p, &stats_csv(&out.stats))?;
    }
    if let Some(p) = &a.best_out {
        write(p, &out.best.genotype.to_text())?;
    }
    if let Some(p) = &a.schedule_out {
        write(p, &out.best_result.schedule.to_json())?;
    }
    let last = out.stats.last().expect("initial generation is recorded");
    println!(
        "generations {} best {} complete {}{}",
        last.generation,
        out.best.fitness,
        out.best.complete,
        if interrupted.load(Ordering::SeqCst) {
            " (interrupted)"
        } else {
            ""
        }
    );
    Ok(())
}

fn export_mip(a: ExportMipArgs) -> anyhow::Result<()> {
    let inst = instance(&a.instance)?;
    let opts = MipOptions {
        connection_mode: a.connection_mode.into(),
        row_cap: a.row_cap,
    };
    let model = mip::build_model(&inst, &opts)?;
    write(&a.out, &model.to_lp())?;
    println!("{} variables, {} rows", model.vars.len(), model.rows.len());
    if let (Some(ws), Some(out)) = (&a.warm_start, &a.mst_out) {
        let sched = schedule(ws, &inst)?;
        write(out, &export_warm_start(&inst, &sched, &opts)?)?;
        println!("warm start written to {}", out.display());
    }
    Ok(())
}

fn oracle_cmd(a: OracleArgs) -> anyhow::Result<()> {
    let inst = instance(&a.instance)?;
    let cfg = a.decoder.config();
    let (perm, best) = oracle::best_permutation_exhaustive(&inst, &cfg)?;
    println!("best permutation {} fitness {best}", perm);
    if a.skip_exact {
        return Ok(());
    }
    let grid = match a.grid {
        Some(step) => TimeGrid::Uniform(step),
        None => TimeGrid::Tight,
    };
    let exact = oracle::true_optimum_exhaustive(&inst, grid, cfg.connection_mode)?;
    println!("exact optimum {}", exact.fitness);
    println!("gap {}", best - exact.fitness);
    if let Some(p) = &a.schedule_out {
        write(p, &exact.schedule.to_json())?;
    }
    Ok(())
}

fn diagram(a: DiagramArgs) -> anyhow::Result<()> {
    let inst = instance(&a.instance)?;
    let reference = match &a.reference {
        Some(p) => schedule(p, &inst)?,
        None => Schedule::base(&inst),
    };
    let other = a
        .schedule
        .as_deref()
        .map(|p| schedule(p, &inst))
        .transpose()?;
    let opts = DiagramOptions {
        path: a.path.map(|v| v.into_iter().map(NodeId).collect()),
        trains: a.trains.map(|v| v.into_iter().map(TrainId).collect()),
        width: a.width,
        height: a.height,
    };
    write(
        &a.out,
        &emit_spacetime_svg(&inst, &reference, other.as_ref(), &opts)?,
    )?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a).map(|_| true),
        Command::Perturb(a) => perturb(a).map(|_| true),
        Command::Decode(a) => decode_cmd(a).map(|_| true),
        Command::Validate(a) => validate_cmd(a),
        Command::Evolve(a) => evolve_cmd(a).map(|_| true),
        Command::ExportMip(a) => export_mip(a).map(|_| true),
        Command::Oracle(a) => oracle_cmd(a).map(|_| true),
        Command::Diagram(a) => diagram(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
