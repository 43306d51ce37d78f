//! Six-dimensional MAP-Elites grid.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genome::{ControllerGenome, MorphologyGenome};
use crate::phenotype::FeatureVector;

pub const FEATURE_DIMS: usize = 6;

pub type CellKey = [usize; FEATURE_DIMS];

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("feature {0} is NaN")]
    NanFeature(usize),
    #[error("fitness is not a finite number")]
    InvalidFitness,
    #[error("archive is empty")]
    Empty,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: stored cell {stored:?} does not match features (expected {expected:?})")]
    KeyMismatch { line: usize, stored: CellKey, expected: CellKey },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimSpec {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
    /// Integer-valued dimension: value `v` maps to bin `v - lo`.
    #[serde(default)]
    pub integer: bool,
}

impl DimSpec {
    pub fn bin(&self, x: f64) -> usize {
        let last = self.bins - 1;
        if self.integer {
            let offset = (x - self.lo).round();
            return if offset <= 0.0 { 0 } else { (offset as usize).min(last) };
        }
        let i = ((x - self.lo) / (self.hi - self.lo) * self.bins as f64).floor();
        if i <= 0.0 {
            0
        } else {
            (i as usize).min(last)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: [DimSpec; FEATURE_DIMS],
}

impl Default for GridSpec {
    fn default() -> Self {
        let real = |lo, hi| DimSpec { lo, hi, bins: 5, integer: false };
        Self {
            dims: [
                real(2.0, 2.8),
                real(50.0, 75.0),
                DimSpec { lo: 2.0, hi: 6.0, bins: 5, integer: true },
                real(0.001, 0.01),
                real(-0.2, 0.2),
                real(-0.2, 0.2),
            ],
        }
    }
}

impl GridSpec {
    pub fn is_valid(&self) -> bool {
        self.dims.iter().all(|d| d.lo < d.hi && d.bins >= 1)
    }

    pub fn total_cells(&self) -> usize {
        self.dims.iter().map(|d| d.bins).product()
    }

    /// Per dimension `floor((x - lo) / (hi - lo) * bins)`, clamped to the
    /// edge bins.
    pub fn bin_index(&self, f: &FeatureVector) -> Result<CellKey, ArchiveError> {
        let x = f.to_array();
        if let Some(i) = x.iter().position(|v| v.is_nan()) {
            return Err(ArchiveError::NanFeature(i));
        }
        Ok(std::array::from_fn(|i| self.dims[i].bin(x[i])))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Elite {
    pub cell: CellKey,
    pub features: FeatureVector,
    pub fitness: f64,
    pub morphology: MorphologyGenome,
    pub controller: ControllerGenome,
    pub generation_born: usize,
    pub eval_seed: u64,
    /// Archive-wide insertion sequence number; earlier wins fitness ties.
    #[serde(default)]
    pub inserted_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    NewCell,
    Replaced,
    RejectedLowerFitness,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsertCounters {
    pub new_cells: u64,
    pub replaced: u64,
    pub rejected: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitnessSummary {
    pub best: f64,
    pub mean: f64,
    pub min: f64,
}

/// Sparse map from cell key to elite. Single writer.
#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    spec: GridSpec,
    cells: BTreeMap<CellKey, Elite>,
    counters: InsertCounters,
    next_seq: u64,
}

impl Archive {
    pub fn new(spec: GridSpec) -> Self {
        Self { spec, cells: BTreeMap::new(), counters: InsertCounters::default(), next_seq: 0 }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn counters(&self) -> InsertCounters {
        self.counters
    }

    pub fn get(&self, key: &CellKey) -> Option<&Elite> {
        self.cells.get(key)
    }

    /// Elites in cell-key order.
    pub fn elites(&self) -> impl Iterator<Item = &Elite> {
        self.cells.values()
    }

    /// Places `e` in its cell if the cell is empty or `e` is strictly fitter
    /// than the incumbent. The elite's `cell` and `inserted_at` are set here.
    pub fn insert(&mut self, mut e: Elite) -> Result<InsertOutcome, ArchiveError> {
        if !e.fitness.is_finite() {
            return Err(ArchiveError::InvalidFitness);
        }
        let key = self.spec.bin_index(&e.features)?;
        e.cell = key;
        let outcome = match self.cells.get(&key) {
            None => InsertOutcome::NewCell,
            Some(incumbent) if e.fitness > incumbent.fitness => InsertOutcome::Replaced,
            Some(_) => InsertOutcome::RejectedLowerFitness,
        };
        match outcome {
            InsertOutcome::NewCell => self.counters.new_cells += 1,
            InsertOutcome::Replaced => self.counters.replaced += 1,
            InsertOutcome::RejectedLowerFitness => {
                self.counters.rejected += 1;
                return Ok(outcome);
            }
        }
        e.inserted_at = self.next_seq;
        self.next_seq += 1;
        self.cells.insert(key, e);
        Ok(outcome)
    }

    pub fn coverage(&self) -> f64 {
        self.cells.len() as f64 / self.spec.total_cells() as f64
    }

    /// Uniform over occupied cells.
    pub fn select_random<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<&Elite, ArchiveError> {
        if self.cells.is_empty() {
            return Err(ArchiveError::Empty);
        }
        let i = rng.gen_range(0..self.cells.len());
        Ok(self.cells.values().nth(i).expect("index in range"))
    }

    /// The `ceil(q * n)` fittest elites, best first; earlier insertion wins ties.
    pub fn elites_top_fraction(&self, q: f64) -> Vec<&Elite> {
        let mut all: Vec<&Elite> = self.cells.values().collect();
        sort_by_fitness(&mut all);
        let take = ((q * all.len() as f64).ceil() as usize).min(all.len());
        all.truncate(take);
        all
    }

    pub fn fitness_summary(&self) -> Option<FitnessSummary> {
        if self.cells.is_empty() {
            return None;
        }
        let mut best = f64::NEG_INFINITY;
        let mut min = f64::INFINITY;
        let mut sum = 0.0;
        for e in self.cells.values() {
            best = best.max(e.fitness);
            min = min.min(e.fitness);
            sum += e.fitness;
        }
        Some(FitnessSummary { best, mean: sum / self.cells.len() as f64, min })
    }

    /// One JSON object per elite, in cell-key order.
    pub fn write_jsonl<W: Write>(&self, out: &mut W) -> Result<(), ArchiveError> {
        for e in self.cells.values() {
            serde_json::to_writer(&mut *out, e).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Loads elites written by [`Archive::write_jsonl`], checking that every
    /// stored cell key matches its features.
    pub fn read_jsonl<R: BufRead>(spec: GridSpec, input: R) -> Result<Self, ArchiveError> {
        let mut archive = Self::new(spec);
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let number = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let e: Elite = serde_json::from_str(&line)
                .map_err(|err| ArchiveError::Parse { line: number, message: err.to_string() })?;
            let expected = spec.bin_index(&e.features).map_err(|err| ArchiveError::Parse {
                line: number,
                message: err.to_string(),
            })?;
            if expected != e.cell {
                return Err(ArchiveError::KeyMismatch { line: number, stored: e.cell, expected });
            }
            if !e.fitness.is_finite() {
                return Err(ArchiveError::Parse { line: number, message: "fitness is not finite".into() });
            }
            if archive.cells.contains_key(&e.cell) {
                return Err(ArchiveError::Parse { line: number, message: format!("duplicate cell {:?}", e.cell) });
            }
            archive.next_seq = archive.next_seq.max(e.inserted_at + 1);
            archive.counters.new_cells += 1;
            archive.cells.insert(e.cell, e);
        }
        Ok(archive)
    }
}

/// Descending fitness, then ascending insertion sequence.
pub fn sort_by_fitness(elites: &mut [&Elite]) {
    elites.sort_by(|a, b| b.fitness.total_cmp(&a.fitness).then(a.inserted_at.cmp(&b.inserted_at)));
}
