//! (μ+λ) evolutionary search over train permutations.
//!
//! Offspring are produced by tournament selection followed by swap
//! mutation; the number of swaps is binomial around a temperature that
//! decays with the generation count. The μ best of parents and offspring
//! survive.

use std::ops::ControlFlow;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoder::{decode, penalized_fitness, DecodeResult, DecoderConfig, Permutation};
use crate::error::{Error, Result};
use crate::model::{Instance, Time, TrainId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EAConfig {
    pub mu: usize,
    pub lambda: usize,
    pub tournament_s: usize,
    /// Largest distance between the two positions of one swap. Clipped to
    /// `|C| - 1`.
    pub radius: usize,
    pub t0: f64,
    pub t_inf: f64,
    /// Generation at which the temperature starts to decay.
    pub n0: u64,
    /// Rate of the sigmoid decay.
    pub decay: f64,
    pub generations: u64,
    pub time_limit: Option<Duration>,
    /// Stop once the best fitness has not improved for this many generations.
    pub stagnation: Option<u64>,
    pub seed: u64,
    /// Record wall-clock time in the statistics. Off by default so that runs
    /// with equal seeds produce identical statistics.
    pub wall_clock: bool,
    pub decoder: DecoderConfig,
}

impl Default for EAConfig {
    fn default() -> Self {
        EAConfig {
            mu: 10,
            lambda: 70,
            tournament_s: 2,
            radius: 12,
            t0: 50.0,
            t_inf: 1.0,
            n0: 0,
            decay: 0.1,
            generations: 100,
            time_limit: None,
            stagnation: None,
            seed: 0,
            wall_clock: false,
            decoder: DecoderConfig::default(),
        }
    }
}

impl EAConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.mu == 0 || self.lambda == 0 {
            return bad("mu and lambda must be at least 1");
        }
        if self.tournament_s == 0 || self.tournament_s > self.mu {
            return bad("tournament size must lie in [1, mu]");
        }
        if self.radius == 0 {
            return bad("radius must be at least 1");
        }
        if !(self.t_inf >= 0.0 && self.t_inf <= self.t0 && self.t0.is_finite()) {
            return bad("temperatures must satisfy 0 <= t_inf <= t0");
        }
        if !(self.decay > 0.0 && self.decay.is_finite()) {
            return bad("decay must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Individual {
    pub genotype: Permutation,
    pub fitness: Time,
    pub complete: bool,
    pub kicks: u64,
}

impl Individual {
    pub fn evaluate(inst: &Instance, genotype: Permutation, cfg: &DecoderConfig) -> Self {
        let res = decode(inst, &genotype, cfg);
        Individual {
            fitness: penalized_fitness(&res, inst),
            complete: res.complete,
            kicks: res.total_kicks(),
            genotype,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: u64,
    pub best: Time,
    pub median: Time,
    pub worst: Time,
    /// Parents whose decode is incomplete.
    pub infeasible_count: usize,
    pub temperature: f64,
    pub elapsed_ms: u64,
}

#[derive(Clone, Debug)]
pub struct EaOutcome {
    pub best: Individual,
    pub best_result: DecodeResult,
    pub stats: Vec<GenerationStats>,
    /// Parents of the last generation, best first.
    pub population: Vec<Individual>,
}

/// Temperature of generation `n`: `t0` before `n0`, then a sigmoid falling
/// from `t0` to `t_inf`.
pub fn temperature(n: u64, cfg: &EAConfig) -> f64 {
    if n < cfg.n0 {
        return cfg.t0;
    }
    let x = cfg.decay * (n - cfg.n0) as f64;
    cfg.t_inf + 2.0 * (cfg.t0 - cfg.t_inf) * (1.0 - 1.0 / (1.0 + (-x).exp()))
}

/// Number of swaps: Binomial(round(2T), 1/2), mean `t`.
pub fn sample_swap_count<R: Rng + ?Sized>(t: f64, rng: &mut R) -> u64 {
    let trials = (2.0 * t.max(0.0)).round() as u64;
    if trials == 0 {
        return 0;
    }
    Binomial::new(trials, 0.5)
        .expect("p = 1/2 is valid")
        .sample(rng)
}

/// Picks a swap: `p` uniform, `q != p` uniform within `radius` of `p`,
/// clipped to the permutation.
pub fn pick_swap<R: Rng + ?Sized>(
    len: usize,
    radius: usize,
    rng: &mut R,
) -> Option<(usize, usize)> {
    if len < 2 || radius == 0 {
        return None;
    }
    let p = rng.gen_range(0..len);
    let lo = p.saturating_sub(radius);
    let hi = (p + radius).min(len - 1);
    // draw among hi - lo candidates, skipping p
    let mut q = rng.gen_range(lo..hi);
    if q >= p {
        q += 1;
    }
    Some((p, q))
}

/// Applies `t` random swaps within `radius`.
pub fn swap_mutation<R: Rng + ?Sized>(
    perm: &Permutation,
    radius: usize,
    t: u64,
    rng: &mut R,
) -> Permutation {
    let mut out = perm.clone();
    let len = out.len();
    for _ in 0..t {
        if let Some((p, q)) = pick_swap(len, radius, rng) {
            out.as_mut_slice().swap(p, q);
        }
    }
    out
}

/// Best of `s` uniform draws with replacement; ties keep the first draw.
pub fn tournament_select<'p, R: Rng + ?Sized>(
    pop: &'p [Individual],
    s: usize,
    rng: &mut R,
) -> &'p Individual {
    let mut best = &pop[rng.gen_range(0..pop.len())];
    for _ in 1..s {
        let cand = &pop[rng.gen_range(0..pop.len())];
        if cand.fitness < best.fitness {
            best = cand;
        }
    }
    best
}

/// Random stream for one offspring (or initial parent), independent of the
/// evaluation order.
fn stream_rng(seed: u64, generation: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((generation << 32) | index as u64);
    rng
}

/// The default first parent: trains by base first departure, then id.
pub fn dispatch_order(inst: &Instance) -> Permutation {
    let mut order: Vec<TrainId> = inst.train_ids().collect();
    order.sort_by_key(|&c| (inst.train(c).base_departures[0], c));
    Permutation::from_vec_unchecked(order)
}

fn initial_genotypes(inst: &Instance, cfg: &EAConfig) -> Vec<Permutation> {
    let mut out = vec![dispatch_order(inst)];
    for k in 1..cfg.mu {
        let mut v: Vec<TrainId> = inst.train_ids().collect();
        v.shuffle(&mut stream_rng(cfg.seed, 0, k));
        out.push(Permutation::from_vec_unchecked(v));
    }
    out
}

fn stats_of(parents: &[Individual], n: u64, cfg: &EAConfig, start: Instant) -> GenerationStats {
    let mut f: Vec<Time> = parents.iter().map(|i| i.fitness).collect();
    f.sort_unstable();
    GenerationStats {
        generation: n,
        best: f[0],
        median: f[(f.len() - 1) / 2],
        worst: f[f.len() - 1],
        infeasible_count: parents.iter().filter(|i| !i.complete).count(),
        temperature: temperature(n, cfg),
        elapsed_ms: if cfg.wall_clock {
            start.elapsed().as_millis() as u64
        } else {
            0
        },
    }
}

/// Runs the search. `initial`, when given, replaces the default initial
/// parents and must hold exactly `mu` permutations.
pub fn run_ea(
    inst: &Instance,
    cfg: &EAConfig,
    initial: Option<Vec<Permutation>>,
) -> Result<EaOutcome> {
    run_ea_observed(inst, cfg, initial, |_, _| ControlFlow::Continue(()))
}

/// [`run_ea`] with a callback after every generation (including the initial
/// population) receiving the stats row and the sorted parents. Returning
/// `Break` ends the run after that generation.
pub fn run_ea_observed(
    inst: &Instance,
    cfg: &EAConfig,
    initial: Option<Vec<Permutation>>,
    mut observe: impl FnMut(&GenerationStats, &[Individual]) -> ControlFlow<()>,
) -> Result<EaOutcome> {
    cfg.check()?;
    let n_trains = inst.num_trains();
    if n_trains == 0 {
        return Err(Error::Config("instance has no trains".into()));
    }
    let start = Instant::now();
    let radius = cfg.radius.min(n_trains.saturating_sub(1)).max(1);

    let genotypes = match initial {
        Some(g) => {
            if g.len() != cfg.mu {
                return Err(Error::Config(format!(
                    "initial population has {} permutations, mu is {}",
                    g.len(),
                    cfg.mu
                )));
            }
            for p in &g {
                Permutation::new(p.as_slice().to_vec(), n_trains)?;
            }
            g
        }
        None => initial_genotypes(inst, cfg),
    };
    let mut parents: Vec<Individual> = genotypes
        .into_par_iter()
        .map(|g| Individual::evaluate(inst, g, &cfg.decoder))
        .collect();
    parents.sort_by_key(|i| i.fitness);

    let mut stats = vec![stats_of(&parents, 0, cfg, start)];
    let mut stop = observe(&stats[0], &parents).is_break();
    let mut best_fitness = parents[0].fitness;
    let mut since_improvement = 0u64;

    for n in 1..=cfg.generations {
        if stop {
            break;
        }
        if cfg.time_limit.is_some_and(|l| start.elapsed() >= l) {
            break;
        }
        if cfg.stagnation.is_some_and(|s| since_improvement >= s) {
            break;
        }
        let t = temperature(n, cfg);
        let offspring: Vec<Individual> = (0..cfg.lambda)
            .into_par_iter()
            .map(|k| {
                let mut rng = stream_rng(cfg.seed, n, k);
                let parent = tournament_select(&parents, cfg.tournament_s, &mut rng);
                let swaps = sample_swap_count(t, &mut rng);
                let child = swap_mutation(&parent.genotype, radius, swaps, &mut rng);
                Individual::evaluate(inst, child, &cfg.decoder)
            })
            .collect();
        // stable: parents stay ahead of equally fit offspring
        parents.extend(offspring);
        parents.sort_by_key(|i| i.fitness);
        parents.truncate(cfg.mu);

        stats.push(stats_of(&parents, n, cfg, start));
        stop = observe(&stats[stats.len() - 1], &parents).is_break();
        if parents[0].fitness < best_fitness {
            best_fitness = parents[0].fitness;
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
    }

    let best = parents[0].clone();
    let best_result = decode(inst, &best.genotype, &cfg.decoder);
    Ok(EaOutcome {
        best,
        best_result,
        stats,
        population: parents,
    })
}

/// Statistics as CSV with a header row.
pub fn stats_csv(stats: &[GenerationStats]) -> String {
    let mut s = String::from("n,best,median,worst,infeasible_count,T,elapsed_ms\n");
    for g in stats {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            g.generation,
            g.best,
            g.median,
            g.worst,
            g.infeasible_count,
            g.temperature,
            g.elapsed_ms
        ));
    }
    s
}
