//! Command-line interface: `run`, `rules`, `inspect`, `compare`.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{extract_rules, format_rules, mann_whitney_u, DesignRule, SampleMatrix, FEATURE_LABELS, FEATURE_NAMES};
use crate::archive::{sort_by_fitness, Archive, CellKey, Elite, GridSpec, FEATURE_DIMS};
use crate::config::{ConfigFile, Profile, Scheme};
use crate::evolution::{read_metrics_csv, run, write_metrics_csv, RunError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_EMPTY_CELL: i32 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_ERROR, message)
    }
}

type CliResult = Result<(), CliError>;

#[derive(Debug, Parser)]
#[command(name = "legged-elites", version, about = "MAP-Elites design assist for large legged robots")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evolve an archive.
    Run(RunArgs),
    /// Extract linear design rules from one or more archives.
    Rules(RulesArgs),
    /// Print stored elites.
    Inspect(InspectArgs),
    /// Compare best final fitness of two sets of runs.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML config file; profile defaults apply when omitted.
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, value_enum)]
    pub profile: Option<Profile>,
    #[arg(long)]
    pub scheme: Option<String>,
    /// Suppress per-generation progress lines.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct RulesArgs {
    #[arg(required = true)]
    pub archives: Vec<PathBuf>,
    /// Fraction of fittest elites analysed.
    #[arg(long, default_value_t = 0.10)]
    pub top: f64,
    /// Largest sqrt(eigenvalue) kept as a rule.
    #[arg(long, default_value_t = 0.2)]
    pub threshold: f64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Take the top fraction of each archive before pooling.
    #[arg(long)]
    pub per_archive: bool,
    /// Bins per feature used when the archives were written.
    #[arg(long, default_value_t = 5)]
    pub bins: usize,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub archive: PathBuf,
    /// Six comma-separated bin indices.
    #[arg(long, conflicts_with = "best")]
    pub cell: Option<String>,
    #[arg(long)]
    pub best: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub bins: usize,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long = "a", num_args = 1.., required = true)]
    pub a: Vec<PathBuf>,
    #[arg(long = "b", num_args = 1.., required = true)]
    pub b: Vec<PathBuf>,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(stderr, "{e}") } else { write!(stdout, "{e}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a, stderr),
        Command::Rules(a) => cmd_rules(&a, stdout, stderr),
        Command::Inspect(a) => cmd_inspect(&a, stdout),
        Command::Compare(a) => cmd_compare(&a, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message);
            e.code
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::usage(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

pub fn cmd_run(a: &RunArgs, stderr: &mut dyn Write) -> CliResult {
    let file = match &a.config {
        Some(p) => ConfigFile::load(p).map_err(|e| CliError::usage(e.to_string()))?,
        None => ConfigFile::default(),
    };
    let profile = a.profile.or(file.profile).unwrap_or(Profile::Desk);
    let mut cfg = file.resolve(Some(profile)).map_err(|e| CliError::usage(e.to_string()))?;
    if let Some(s) = &a.scheme {
        cfg.scheme = s.parse::<Scheme>().map_err(|e| CliError::usage(e.to_string()))?;
    }
    if let Some(seed) = a.seed {
        cfg.master_seed = seed;
    }
    let out = a.out.clone().or_else(|| file.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let workers = a
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(CliError::usage("--workers must be at least 1"));
    }
    std::fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;

    let echo = ConfigFile::echo(&cfg, profile, &out);
    std::fs::write(out.join("config.toml"), echo.to_toml()).map_err(|e| io_err(&out, e))?;

    let quiet = a.quiet;
    let result = run(&cfg, workers, |row| {
        if !quiet {
            let _ = writeln!(
                stderr,
                "gen {:>5}  evaluated {:>5}  feasible {:>5}  occupied {:>5}  coverage {:.4}  best {:.4}",
                row.generation, row.evaluated, row.feasible, row.occupied, row.coverage, row.best
            );
        }
    });
    let result = match result {
        Ok(r) => r,
        Err(e @ RunError::Infeasible { .. }) => return Err(CliError::new(EXIT_INFEASIBLE, e.to_string())),
        Err(e) => return Err(CliError::usage(e.to_string())),
    };

    let path = out.join("archive.jsonl");
    let mut w = create(&path)?;
    result.archive.write_jsonl(&mut w).map_err(|e| io_err(&path, e))?;
    w.flush().map_err(|e| io_err(&path, e))?;
    let path = out.join("metrics.csv");
    write_metrics_csv(&result.metrics, create(&path)?).map_err(|e| io_err(&path, e))?;
    Ok(())
}

fn grid_with_bins(bins: usize) -> Result<GridSpec, CliError> {
    let mut g = GridSpec::default();
    for d in g.dims.iter_mut() {
        d.bins = bins;
        if d.integer {
            d.hi = d.lo + bins as f64 - 1.0;
        }
    }
    if !g.is_valid() {
        return Err(CliError::usage("--bins must be at least 1"));
    }
    Ok(g)
}

fn load_archive(path: &Path, grid: GridSpec) -> Result<Archive, CliError> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    Archive::read_jsonl(grid, BufReader::new(f)).map_err(|e| io_err(path, e))
}

#[derive(Serialize)]
struct RulesReport<'a> {
    archives: Vec<String>,
    top_fraction: f64,
    threshold: f64,
    per_archive: bool,
    samples: usize,
    feature_names: [&'a str; FEATURE_DIMS],
    feature_labels: [&'a str; FEATURE_DIMS],
    rules: &'a [DesignRule],
}

pub fn cmd_rules(a: &RulesArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult {
    if !(a.top > 0.0 && a.top <= 1.0) {
        return Err(CliError::usage("--top must lie in (0, 1]"));
    }
    let grid = grid_with_bins(a.bins)?;
    let archives = a.archives.iter().map(|p| load_archive(p, grid)).collect::<Result<Vec<_>, _>>()?;
    let selected: Vec<&Elite> = if a.per_archive {
        archives.iter().flat_map(|ar| ar.elites_top_fraction(a.top)).collect()
    } else {
        let mut all: Vec<&Elite> = archives.iter().flat_map(|ar| ar.elites()).collect();
        sort_by_fitness(&mut all);
        let take = ((a.top * all.len() as f64).ceil() as usize).min(all.len());
        all.truncate(take);
        all
    };
    if selected.len() < 10 {
        let _ = writeln!(stderr, "warning: only {} elites selected; rules may be unreliable", selected.len());
    }
    let rules = if selected.len() < 2 {
        Vec::new()
    } else {
        let s = SampleMatrix::from_elites(&selected).map_err(|e| CliError::usage(e.to_string()))?;
        extract_rules(&s, a.threshold).map_err(|e| CliError::usage(e.to_string()))?
    };

    std::fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
    let text = format_rules(&rules, &FEATURE_NAMES);
    std::fs::write(a.out.join("rules.txt"), &text).map_err(|e| io_err(&a.out, e))?;
    let report = RulesReport {
        archives: a.archives.iter().map(|p| p.display().to_string()).collect(),
        top_fraction: a.top,
        threshold: a.threshold,
        per_archive: a.per_archive,
        samples: selected.len(),
        feature_names: FEATURE_NAMES,
        feature_labels: FEATURE_LABELS,
        rules: &rules,
    };
    let json = serde_json::to_string_pretty(&report).expect("rules serialize");
    std::fs::write(a.out.join("rules.json"), json + "\n").map_err(|e| io_err(&a.out, e))?;
    write!(stdout, "{text}").map_err(|e| CliError::usage(e.to_string()))
}

pub fn parse_cell(text: &str, grid: &GridSpec) -> Result<CellKey, CliError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != FEATURE_DIMS {
        return Err(CliError::usage(format!("--cell needs {FEATURE_DIMS} indices, got {}", parts.len())));
    }
    let mut key = [0usize; FEATURE_DIMS];
    for (k, p) in parts.iter().enumerate() {
        let v: usize = p.parse().map_err(|_| CliError::usage(format!("bad cell index {p:?}")))?;
        if v >= grid.dims[k].bins {
            return Err(CliError::usage(format!("cell index {v} out of range for dimension {k}")));
        }
        key[k] = v;
    }
    Ok(key)
}

pub fn cmd_inspect(a: &InspectArgs, stdout: &mut dyn Write) -> CliResult {
    let grid = grid_with_bins(a.bins)?;
    let archive = load_archive(&a.archive, grid)?;
    let elites: Vec<&Elite> = match (&a.cell, a.best) {
        (Some(c), _) => {
            let key = parse_cell(c, &grid)?;
            match archive.get(&key) {
                Some(e) => vec![e],
                None => return Err(CliError::new(EXIT_EMPTY_CELL, format!("cell {c} is empty"))),
            }
        }
        (None, Some(n)) => {
            let mut all: Vec<&Elite> = archive.elites().collect();
            sort_by_fitness(&mut all);
            all.truncate(n);
            all
        }
        (None, None) => return Err(CliError::usage("inspect needs --cell or --best")),
    };
    for e in elites {
        let json = serde_json::to_string_pretty(e).expect("elite serializes");
        writeln!(stdout, "{json}").map_err(|e| CliError::usage(e.to_string()))?;
    }
    Ok(())
}

fn best_final(path: &Path) -> Result<f64, CliError> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    let rows = read_metrics_csv(BufReader::new(f)).map_err(|e| io_err(path, e))?;
    rows.last().map(|r| r.best).ok_or_else(|| CliError::usage(format!("{}: no metrics rows", path.display())))
}

pub fn cmd_compare(a: &CompareArgs, stdout: &mut dyn Write) -> CliResult {
    let xs = a.a.iter().map(|p| best_final(p)).collect::<Result<Vec<_>, _>>()?;
    let ys = a.b.iter().map(|p| best_final(p)).collect::<Result<Vec<_>, _>>()?;
    let r = mann_whitney_u(&xs, &ys).map_err(|e| CliError::usage(e.to_string()))?;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
    let verdict = if r.p_two_sided < 0.05 { "significant" } else { "not significant" };
    let mode = if r.exact { "exact" } else { "normal approximation" };
    let text = format!(
        "a: {}\nb: {}\nU = {}\np = {:.6} ({mode})\n{verdict} at p < 0.05\n",
        fmt(&xs),
        fmt(&ys),
        r.u,
        r.p_two_sided
    );
    write!(stdout, "{text}").map_err(|e| CliError::usage(e.to_string()))
}
