//! MAP-Elites driver for the STATIC, GENOME and ES controller schemes.

use std::io::{Read, Write};
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::{Archive, ArchiveError, CellKey, Elite, InsertOutcome};
use crate::config::{ConfigError, RunConfig, Scheme};
use crate::genome::{mutate_controller, mutate_morphology, ControllerGenome, MorphologyGenome};
use crate::phenotype::{check_constraints, expand, features, Constraint, ConstraintReport, FeatureVector, RobotModel};
use crate::seeding::{derive_seed, rng_from_seed};
use crate::simulator::{fitness, LocomotionBackend, ReducedOrder, SimResult, Termination};

/// Stream tag for initial-population seeds; generation `g` uses stream `g`.
const INIT_STREAM: u64 = 0;
const MIN_INIT_BATCH: usize = 256;
pub const METRICS_HEADER_COMMENT: &str = "# legged-elites metrics v1";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("design space looks infeasible: {found} of {needed} feasible individuals after {attempts} attempts")]
    Infeasible { attempts: usize, found: usize, needed: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Outcome of evaluating one morphology under a scheme.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluatedCandidate {
    pub morphology: MorphologyGenome,
    pub controller: ControllerGenome,
    /// Present only when every constraint passed.
    pub fitness: Option<f64>,
    pub features: FeatureVector,
    pub report: ConstraintReport,
    pub distance: f64,
    pub energy: f64,
    pub terminated: bool,
    pub sim_calls: usize,
}

impl EvaluatedCandidate {
    pub fn is_feasible(&self) -> bool {
        self.fitness.is_some()
    }

    pub fn failures(&self) -> Vec<Constraint> {
        self.report.failures()
    }
}

#[derive(Debug, Clone)]
struct Scored {
    fitness: f64,
    report: ConstraintReport,
    sim: SimResult,
}

impl Scored {
    fn feasible(&self) -> bool {
        self.report.passed()
    }
}

fn score<B: LocomotionBackend + ?Sized>(
    backend: &B,
    model: &RobotModel,
    controller: &ControllerGenome,
    cfg: &RunConfig,
) -> Scored {
    let sim = backend.simulate(model, controller, &cfg.sim);
    let report = check_constraints(model, &sim, &cfg.constraints);
    let f = if report.passed() { fitness(&sim, model.total_mass, cfg.sim.gravity) } else { 0.0 };
    Scored { fitness: f, report, sim }
}

/// Result of the inner 1+1 ES.
#[derive(Debug, Clone)]
pub struct EsOutcome {
    pub controller: ControllerGenome,
    /// Best fitness found; infeasible controllers score 0.
    pub fitness: f64,
    /// Parent fitness after each of the `es_iterations` steps, preceded by the start value.
    pub trajectory: Vec<f64>,
    pub sim_calls: usize,
    best: Scored,
}

pub fn es_optimize<B: LocomotionBackend + ?Sized>(
    backend: &B,
    model: &RobotModel,
    cfg: &RunConfig,
    rng: &mut ChaCha8Rng,
) -> EsOutcome {
    let mut parent = cfg.static_controller;
    let mut best = score(backend, model, &parent, cfg);
    let mut trajectory = Vec::with_capacity(cfg.es_iterations + 1);
    trajectory.push(best.fitness);
    for _ in 0..cfg.es_iterations {
        let child = mutate_controller(&parent, rng);
        let s = score(backend, model, &child, cfg);
        if s.fitness > best.fitness {
            parent = child;
            best = s;
        }
        trajectory.push(best.fitness);
    }
    EsOutcome { controller: parent, fitness: best.fitness, trajectory, sim_calls: cfg.es_iterations + 1, best }
}

/// Evaluates `m` under `cfg.scheme`. GENOME uses `genome_controller`; the
/// other schemes ignore it. `seed` drives the ES inner loop.
pub fn evaluate<B: LocomotionBackend + ?Sized>(
    backend: &B,
    m: &MorphologyGenome,
    genome_controller: Option<&ControllerGenome>,
    cfg: &RunConfig,
    seed: u64,
) -> EvaluatedCandidate {
    let model = expand(m, &cfg.phenotype);
    let (controller, scored, sim_calls) = match cfg.scheme {
        Scheme::Static => {
            let c = cfg.static_controller;
            (c, score(backend, &model, &c, cfg), 1)
        }
        Scheme::Genome => {
            let c = *genome_controller.expect("GENOME evaluation needs a controller");
            (c, score(backend, &model, &c, cfg), 1)
        }
        Scheme::Es => {
            let es = es_optimize(backend, &model, cfg, &mut rng_from_seed(seed));
            (es.controller, es.best, es.sim_calls)
        }
    };
    EvaluatedCandidate {
        morphology: m.clone(),
        controller,
        fitness: scored.feasible().then_some(scored.fitness),
        features: features(&model, m),
        report: scored.report,
        distance: scored.sim.distance,
        energy: scored.sim.energy,
        terminated: scored.sim.terminated != Termination::None,
        sim_calls,
    }
}

/// Backend wrapper that counts simulator calls.
#[derive(Debug, Default)]
pub struct CountingBackend<B> {
    pub inner: B,
    calls: AtomicU64,
}

impl<B> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self { inner, calls: AtomicU64::new(0) }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl<B: LocomotionBackend> LocomotionBackend for CountingBackend<B> {
    fn simulate(&self, model: &RobotModel, controller: &ControllerGenome, cfg: &crate::simulator::SimConfig) -> SimResult {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.simulate(model, controller, cfg)
    }
}

/// One row per generation; generation 0 is the initial population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub generation: usize,
    pub evaluated: usize,
    pub feasible: usize,
    pub new_cells: usize,
    pub replaced: usize,
    pub occupied: usize,
    pub coverage: f64,
    pub best: f64,
    pub mean: f64,
    pub min: f64,
    /// Cumulative simulator calls.
    pub sim_calls: u64,
}

/// One archive insertion attempt, in the order applied.
#[derive(Debug, Clone, PartialEq)]
pub struct InsertRecord {
    pub generation: usize,
    pub cell: CellKey,
    pub features: FeatureVector,
    pub fitness: f64,
    pub outcome: InsertOutcome,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub archive: Archive,
    pub metrics: Vec<MetricsRow>,
    pub inserts: Vec<InsertRecord>,
    pub init_attempts: usize,
    pub sim_calls: u64,
}

fn insert_logged(archive: &mut Archive, e: Elite, log: &mut Vec<InsertRecord>) -> Result<InsertOutcome, ArchiveError> {
    let (generation, features, fitness) = (e.generation_born, e.features, e.fitness);
    let cell = archive.spec().bin_index(&features)?;
    let outcome = archive.insert(e)?;
    log.push(InsertRecord { generation, cell, features, fitness, outcome });
    Ok(outcome)
}

#[derive(Default)]
struct BatchStats {
    evaluated: usize,
    feasible: usize,
    new_cells: usize,
    replaced: usize,
}

impl BatchStats {
    fn record(&mut self, outcome: InsertOutcome) {
        self.feasible += 1;
        match outcome {
            InsertOutcome::NewCell => self.new_cells += 1,
            InsertOutcome::Replaced => self.replaced += 1,
            InsertOutcome::RejectedLowerFitness => {}
        }
    }
}

fn metrics_row(generation: usize, stats: &BatchStats, archive: &Archive, sim_calls: u64) -> MetricsRow {
    let s = archive.fitness_summary();
    MetricsRow {
        generation,
        evaluated: stats.evaluated,
        feasible: stats.feasible,
        new_cells: stats.new_cells,
        replaced: stats.replaced,
        occupied: archive.len(),
        coverage: archive.coverage(),
        best: s.map_or(0.0, |s| s.best),
        mean: s.map_or(0.0, |s| s.mean),
        min: s.map_or(0.0, |s| s.min),
        sim_calls,
    }
}

fn to_elite(c: EvaluatedCandidate, generation: usize, seed: u64) -> Option<Elite> {
    Some(Elite {
        cell: [0; 6],
        features: c.features,
        fitness: c.fitness?,
        morphology: c.morphology,
        controller: c.controller,
        generation_born: generation,
        eval_seed: seed,
        inserted_at: 0,
    })
}

pub fn run(cfg: &RunConfig, workers: usize, progress: impl FnMut(&MetricsRow)) -> Result<RunResult, RunError> {
    run_with_backend(cfg, ReducedOrder, workers, progress)
}

/// Full MAP-Elites run. Output depends only on `cfg`, never on `workers`.
pub fn run_with_backend<B: LocomotionBackend>(
    cfg: &RunConfig,
    backend: B,
    workers: usize,
    mut progress: impl FnMut(&MetricsRow),
) -> Result<RunResult, RunError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    let backend = CountingBackend::new(backend);
    let mut archive = Archive::new(cfg.grid);
    let mut metrics = Vec::with_capacity(cfg.generations + 1);
    let mut inserts = Vec::new();

    // Initial population: random designs in attempt order until enough are feasible.
    let needed = cfg.init_population;
    let cap = cfg.init_attempt_factor.saturating_mul(needed);
    let mut attempts = 0;
    let mut stats = BatchStats::default();
    while stats.feasible < needed {
        if attempts >= cap {
            return Err(RunError::Infeasible { attempts, found: stats.feasible, needed });
        }
        let need = needed - stats.feasible;
        let batch = if stats.feasible == 0 {
            (4 * need).max(MIN_INIT_BATCH)
        } else {
            (need as f64 * attempts as f64 / stats.feasible as f64 * 1.25).ceil() as usize + 16
        }
        .min(cap - attempts);
        let results: Vec<(u64, EvaluatedCandidate)> = pool.install(|| {
            (attempts..attempts + batch)
                .into_par_iter()
                .map(|a| {
                    let seed = derive_seed(cfg.master_seed, INIT_STREAM, a as u64);
                    let mut rng = rng_from_seed(seed);
                    let m = MorphologyGenome::random(&mut rng);
                    let c = ControllerGenome::random(&mut rng);
                    let es_seed = rng.gen();
                    (seed, evaluate(&backend, &m, Some(&c), cfg, es_seed))
                })
                .collect()
        });
        attempts += batch;
        stats.evaluated += batch;
        for (seed, cand) in results {
            if stats.feasible == needed {
                break;
            }
            if let Some(e) = to_elite(cand, 0, seed) {
                stats.record(insert_logged(&mut archive, e, &mut inserts)?);
            }
        }
    }
    let row = metrics_row(0, &stats, &archive, backend.calls());
    progress(&row);
    metrics.push(row);

    for generation in 1..=cfg.generations {
        let mut stats = BatchStats::default();
        let mut next_index = 0usize;
        let mut wanted = cfg.offspring_per_generation;
        let budget = cfg.init_attempt_factor.saturating_mul(cfg.offspring_per_generation);
        while wanted > 0 && next_index < budget {
            let first = next_index;
            let count = wanted.min(budget - next_index);
            next_index += count;
            // Parents are drawn from the archive as it stood before this batch.
            let children: Vec<(u64, MorphologyGenome, ControllerGenome, ChaCha8Rng)> = (first..first + count)
                .map(|i| {
                    let seed = derive_seed(cfg.master_seed, generation as u64, i as u64);
                    let mut rng = rng_from_seed(seed);
                    let parent = archive.select_random(&mut rng).expect("archive is non-empty after init");
                    (seed, parent.morphology.clone(), parent.controller, rng)
                })
                .collect();
            let results: Vec<(u64, EvaluatedCandidate)> = pool.install(|| {
                children
                    .into_par_iter()
                    .map(|(seed, pm, pc, mut rng)| {
                        let m = mutate_morphology(&pm, &cfg.mutation, &mut rng);
                        let c = match cfg.scheme {
                            Scheme::Genome => mutate_controller(&pc, &mut rng),
                            Scheme::Static | Scheme::Es => pc,
                        };
                        let es_seed = rng.gen();
                        (seed, evaluate(&backend, &m, Some(&c), cfg, es_seed))
                    })
                    .collect()
            });
            stats.evaluated += count;
            let mut accepted = 0;
            for (seed, cand) in results {
                if let Some(e) = to_elite(cand, generation, seed) {
                    accepted += 1;
                    stats.record(insert_logged(&mut archive, e, &mut inserts)?);
                }
            }
            wanted = if cfg.regenerate_offspring { wanted - accepted } else { 0 };
        }
        let row = metrics_row(generation, &stats, &archive, backend.calls());
        progress(&row);
        metrics.push(row);
    }

    Ok(RunResult { archive, metrics, inserts, init_attempts: attempts, sim_calls: backend.calls() })
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], mut out: W) -> Result<(), csv::Error> {
    writeln!(out, "{METRICS_HEADER_COMMENT}")?;
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv<R: Read>(input: R) -> Result<Vec<MetricsRow>, csv::Error> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input)
        .deserialize()
        .collect()
}
