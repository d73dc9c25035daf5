//! Subcommands of the `careerwalk` binary.

use std::path::{Path, PathBuf};

use careerwalk::classify::{classify_canonical, ClassifierConfig, SweepConfig, sweep_variances};
use careerwalk::distributions::Boundary;
use careerwalk::fitting::{bootstrap_fit, enumerate_change_point_sets, fit_model, FitOptions};
use careerwalk::model::{simulate_ensemble, Trajectory, MAX_CHANGE_POINTS, MAX_CHANGE_YEAR};
use careerwalk::stats::{compare_ensembles, SummaryOptions};
use clap::{Args, Parser, Subcommand};

use crate::data::{self, Career, InclusionRules};
use crate::formats::{self, write_atomic};
use crate::{Error, Result};

/// Random-walk models of career productivity.
#[derive(Debug, Parser)]
#[command(name = "careerwalk", version, about)]
pub struct Cli {
    /// Subcommand to run.
    #[command(subcommand)]
    pub command: Command,
}

/// Available subcommands.
#[derive(Debug, Subcommand)]
pub enum Command {
    /// Adjust and filter publication counts into a trajectory CSV.
    Ingest(IngestArgs),
    /// Fit the multi-stage model by change-point search.
    Fit(FitArgs),
    /// Refit on resampled careers and tabulate change points.
    Bootstrap(BootstrapArgs),
    /// Simulate trajectories from a model file.
    Simulate(SimulateArgs),
    /// Canonical fraction over a grid of early and late scales.
    Sweep(SweepArgs),
    /// Label each trajectory canonical or not.
    Classify(ClassifyArgs),
    /// Compare two trajectory ensembles.
    Compare(CompareArgs),
}

fn parse_boundary(s: &str) -> std::result::Result<Boundary, String> {
    Boundary::parse(s).ok_or_else(|| format!("expected truncate or censor, got {s:?}"))
}

/// Values of a `start:stop:step` argument.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

fn parse_grid(s: &str) -> std::result::Result<Grid, String> {
    parse_range(s).map(Grid)
}

/// Inclusive grid `start:stop:step`, or a single value.
pub fn parse_range(s: &str) -> std::result::Result<Vec<f64>, String> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("invalid number {p:?} in {s:?}")))
        .collect::<std::result::Result<_, _>>()?;
    if parts.iter().any(|x| !x.is_finite()) {
        return Err(format!("non-finite value in {s:?}"));
    }
    match parts[..] {
        [x] => Ok(vec![x]),
        [start, stop, step] => {
            if !(step > 0.0) || stop < start {
                return Err(format!("{s:?}: need step > 0 and stop >= start"));
            }
            let count = ((stop - start) / step + 1e-9).floor() + 1.0;
            if count > 10_000.0 {
                return Err(format!("{s:?} has more than 10000 points"));
            }
            Ok((0..count as usize).map(|i| start + i as f64 * step).collect())
        }
        _ => Err(format!("expected start:stop:step, got {s:?}")),
    }
}

/// Arguments of `ingest`.
#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Publications CSV (person_id,calendar_year,career_age,count), or a
    /// trajectory CSV with --pre-adjusted.
    #[arg(long)]
    pub input: PathBuf,
    /// Adjustment CSV (year,multiplier[,offset]).
    #[arg(long, required_unless_present = "pre_adjusted", conflicts_with = "pre_adjusted")]
    pub adjustment: Option<PathBuf>,
    /// Included trajectories, cut to the span.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the careers observed over the whole span.
    #[arg(long)]
    pub full_out: Option<PathBuf>,
    /// Input is already adjusted; the early check then uses adjusted values.
    #[arg(long)]
    pub pre_adjusted: bool,
    /// Papers required over the early window.
    #[arg(long, default_value_t = 3.0)]
    pub min_early_pubs: f64,
    /// Leading career ages counted as early.
    #[arg(long, default_value_t = 5)]
    pub early_window: usize,
    /// Earliest admissible first year.
    #[arg(long, default_value_t = 1980, allow_negative_numbers = true)]
    pub min_start_year: i32,
    /// Career ages kept.
    #[arg(long, default_value_t = 21)]
    pub span: usize,
}

/// Arguments of `fit`.
#[derive(Debug, Args)]
pub struct FitArgs {
    /// Trajectory CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Fitted model JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Candidate table CSV [default: OUT with extension candidates.csv].
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    /// Largest number of change points considered.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..=3))]
    pub max_changepoints: u32,
    /// Boundary used by the likelihood.
    #[arg(long, default_value = "truncate", value_parser = parse_boundary)]
    pub boundary: Boundary,
}

/// Arguments of `bootstrap`.
#[derive(Debug, Args)]
pub struct BootstrapArgs {
    /// Trajectory CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Change-point frequency CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-replicate parameter CSV.
    #[arg(long)]
    pub draws: Option<PathBuf>,
    /// Number of resamples.
    #[arg(long, default_value_t = 200)]
    pub replicates: usize,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Largest number of change points considered.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..=3))]
    pub max_changepoints: u32,
    /// Boundary used by the likelihood.
    #[arg(long, default_value = "truncate", value_parser = parse_boundary)]
    pub boundary: Boundary,
}

/// Arguments of `simulate`.
#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Model JSON, bare or as written by `fit`.
    #[arg(long)]
    pub model: PathBuf,
    /// Trajectory CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of trajectories.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    /// Ages per trajectory.
    #[arg(long, default_value_t = 21)]
    pub length: usize,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the model's boundary.
    #[arg(long, value_parser = parse_boundary)]
    pub boundary: Option<Boundary>,
}

/// Arguments of `sweep`.
#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Early-career scales, start:stop:step.
    #[arg(long, value_parser = parse_grid)]
    pub alpha1: Grid,
    /// Later-career scales, start:stop:step.
    #[arg(long, value_parser = parse_grid)]
    pub alpha2: Grid,
    /// Fixed increment mode.
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    pub mu: f64,
    /// Trajectories per cell.
    #[arg(long, default_value_t = 400)]
    pub n: usize,
    /// Ages per trajectory.
    #[arg(long, default_value_t = 21)]
    pub length: usize,
    /// First career age of the later stage.
    #[arg(long, default_value_t = 5)]
    pub change_year: u32,
    /// Mean first-year productivity.
    #[arg(long, default_value_t = 4.65)]
    pub lambda0: f64,
    /// Boundary handling.
    #[arg(long, default_value = "censor", value_parser = parse_boundary)]
    pub boundary: Boundary,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sweep CSV.
    #[arg(long)]
    pub out: PathBuf,
}

/// Arguments of `classify`.
#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Trajectory CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Verdict CSV.
    #[arg(long)]
    pub out: PathBuf,
}

/// Arguments of `compare`.
#[derive(Debug, Args)]
pub struct CompareArgs {
    /// The two trajectory CSVs, given as --input A --input B.
    #[arg(long, num_args = 1, required = true)]
    pub input: Vec<PathBuf>,
    /// Report JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for per-ensemble distribution CSVs.
    #[arg(long)]
    pub distributions: Option<PathBuf>,
    /// Master seed for the bootstrap mean curves.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Bootstrap replicates for the mean curves.
    #[arg(long, default_value_t = 1000)]
    pub replicates: usize,
    /// Use every trajectory rather than only full ones.
    #[arg(long)]
    pub all_lengths: bool,
    /// Length of a full trajectory.
    #[arg(long, default_value_t = 21)]
    pub full_length: usize,
    /// Cumulative output is summed through this age.
    #[arg(long, default_value_t = 5)]
    pub cumulative_year: usize,
    /// Values at or below this count as zero years.
    #[arg(long, default_value_t = 0.0)]
    pub zero_threshold: f64,
}

fn require_seed(seed: Option<u64>, command: &str) -> Result<u64> {
    seed.ok_or_else(|| Error::Invalid(format!("{command} is stochastic: --seed is required")))
}

fn resolved(p: &Path) -> PathBuf {
    if let Ok(c) = p.canonicalize() {
        return c;
    }
    match (p.parent(), p.file_name()) {
        (Some(dir), Some(name)) => {
            let dir = if dir.as_os_str().is_empty() { Path::new(".") } else { dir };
            dir.canonicalize().map_or_else(|_| p.to_path_buf(), |d| d.join(name))
        }
        _ => p.to_path_buf(),
    }
}

/// Refuse output paths that name an input or each other.
pub fn check_outputs(inputs: &[&Path], outputs: &[&Path]) -> Result<()> {
    let ins: Vec<PathBuf> = inputs.iter().map(|p| resolved(p)).collect();
    let mut seen: Vec<PathBuf> = Vec::new();
    for out in outputs {
        let r = resolved(out);
        if ins.contains(&r) {
            return Err(Error::Invalid(format!("output {} would overwrite an input", out.display())));
        }
        if seen.contains(&r) {
            return Err(Error::Invalid(format!("output {} given twice", out.display())));
        }
        seen.push(r);
    }
    Ok(())
}

fn write_trajectories(path: &Path, trajs: &[Trajectory]) -> Result<()> {
    let mut buf = Vec::new();
    data::write_trajectories(&mut buf, trajs)?;
    write_atomic(path, &buf)
}

fn nonempty(trajs: Vec<Trajectory>, path: &Path) -> Result<Vec<Trajectory>> {
    if trajs.is_empty() {
        return Err(Error::Invalid(format!("{} contains no trajectories", path.display())));
    }
    Ok(trajs)
}

/// Run one parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Fit(a) => fit(a),
        Command::Bootstrap(a) => bootstrap(a),
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::Classify(a) => classify(a),
        Command::Compare(a) => compare(a),
    }
}

fn ingest(a: &IngestArgs) -> Result<()> {
    let mut inputs = vec![a.input.as_path()];
    inputs.extend(a.adjustment.as_deref());
    let mut outputs = vec![a.out.as_path()];
    outputs.extend(a.full_out.as_deref());
    check_outputs(&inputs, &outputs)?;
    let careers: Vec<Career> = match &a.adjustment {
        Some(adj) => {
            let pubs = data::load_publications(&a.input)?;
            data::apply_adjustment(&pubs, &data::load_adjustments(adj)?)?
        }
        None => data::load_trajectories(&a.input)?.into_iter().map(Career::adjusted_only).collect(),
    };
    let rules = InclusionRules {
        min_early_pubs: a.min_early_pubs,
        early_window: a.early_window,
        min_start_year: a.min_start_year,
        span: a.span,
        early_check_on_adjusted: a.pre_adjusted,
    };
    let inc = data::filter_inclusion(&careers, &rules)?;
    for w in &inc.warnings {
        eprintln!("warning: {w}");
    }
    let share = if inc.included.is_empty() { 0.0 } else { 100.0 * inc.full.len() as f64 / inc.included.len() as f64 };
    eprintln!(
        "ingest: {} careers, {} included, {} full ({share:.1}%)",
        careers.len(),
        inc.included.len(),
        inc.full.len()
    );
    write_trajectories(&a.out, &inc.included)?;
    if let Some(p) = &a.full_out {
        write_trajectories(p, &inc.full)?;
    }
    Ok(())
}

fn candidate_sets(max: u32) -> Result<Vec<careerwalk::model::ChangePointSet>> {
    debug_assert!(max as usize <= MAX_CHANGE_POINTS);
    Ok(enumerate_change_point_sets(1, MAX_CHANGE_YEAR, max as usize)?)
}

fn fit(a: &FitArgs) -> Result<()> {
    let cand_path = a.candidates.clone().unwrap_or_else(|| a.out.with_extension("candidates.csv"));
    check_outputs(&[&a.input], &[&a.out, &cand_path])?;
    let trajs = nonempty(data::load_trajectories(&a.input)?, &a.input)?;
    let cands = candidate_sets(a.max_changepoints)?;
    eprintln!("fit: {} trajectories, {} candidate sets", trajs.len(), cands.len());
    let result = fit_model(&trajs, &cands, &FitOptions { boundary: a.boundary, ..FitOptions::default() })?;
    eprintln!("fit: selected change points {}", result.best_model.change_points().label());
    write_atomic(&a.out, &formats::fit_json(&result, trajs.len()))?;
    write_atomic(&cand_path, &formats::candidates_csv(&result))
}

fn bootstrap(a: &BootstrapArgs) -> Result<()> {
    let seed = require_seed(a.seed, "bootstrap")?;
    let mut outputs = vec![a.out.as_path()];
    outputs.extend(a.draws.as_deref());
    check_outputs(&[&a.input], &outputs)?;
    if a.replicates == 0 {
        return Err(Error::Invalid("--replicates must be at least 1".into()));
    }
    let trajs = nonempty(data::load_trajectories(&a.input)?, &a.input)?;
    let cands = candidate_sets(a.max_changepoints)?;
    eprintln!("bootstrap: {} replicates of {} trajectories", a.replicates, trajs.len());
    let opts = FitOptions { boundary: a.boundary, ..FitOptions::default() };
    let summary = bootstrap_fit(&trajs, &cands, a.replicates, seed, &opts)?;
    for (r, e) in &summary.failures {
        eprintln!("warning: replicate {r} failed: {e}");
    }
    if summary.draws.is_empty() {
        return Err(Error::Core(careerwalk::Error::NoValidCandidate));
    }
    write_atomic(&a.out, &formats::bootstrap_frequencies_csv(&summary))?;
    if let Some(p) = &a.draws {
        write_atomic(p, &formats::bootstrap_draws_csv(&summary))?;
    }
    Ok(())
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let seed = require_seed(a.seed, "simulate")?;
    check_outputs(&[&a.model], &[&a.out])?;
    let text = std::fs::read_to_string(&a.model).map_err(|source| Error::Io { path: a.model.clone(), source })?;
    let mut model = formats::parse_model(&text, &a.model.display().to_string())?;
    if let Some(b) = a.boundary {
        model = model.with_boundary(b);
    }
    if a.n == 0 || a.length == 0 {
        return Err(Error::Invalid("--n and --length must be positive".into()));
    }
    let trajs = simulate_ensemble(&model, a.n, a.length, seed)?;
    write_trajectories(&a.out, &trajs)
}

fn sweep(a: &SweepArgs) -> Result<()> {
    let seed = require_seed(a.seed, "sweep")?;
    let cfg = SweepConfig {
        alpha1: a.alpha1.0.clone(),
        alpha2: a.alpha2.0.clone(),
        mu: a.mu,
        n: a.n,
        change_year: a.change_year,
        length: a.length,
        lambda0: a.lambda0,
        boundary: a.boundary,
        seed,
    };
    if cfg.length < ClassifierConfig::default().min_length() {
        return Err(Error::Invalid(format!(
            "--length must be at least {} for classification",
            ClassifierConfig::default().min_length()
        )));
    }
    eprintln!("sweep: {}x{} cells, {} trajectories each", cfg.alpha1.len(), cfg.alpha2.len(), cfg.n);
    let grid = sweep_variances(&cfg)?;
    write_atomic(&a.out, &formats::sweep_csv(&grid))
}

fn classify(a: &ClassifyArgs) -> Result<()> {
    check_outputs(&[&a.input], &[&a.out])?;
    let trajs = nonempty(data::load_trajectories(&a.input)?, &a.input)?;
    let min = ClassifierConfig::default().min_length();
    let mut verdicts = Vec::new();
    for t in trajs.iter().filter(|t| t.len() >= min) {
        verdicts.push((t.person_id.as_str(), classify_canonical(t)?));
    }
    let canonical = verdicts.iter().filter(|(_, v)| v.is_canonical).count();
    eprintln!(
        "classify: {canonical} of {} canonical; {} shorter than {min} skipped",
        verdicts.len(),
        trajs.len() - verdicts.len()
    );
    write_atomic(&a.out, &formats::verdicts_csv(verdicts.iter().map(|(id, v)| (*id, v))))
}

fn compare(a: &CompareArgs) -> Result<()> {
    let seed = require_seed(a.seed, "compare")?;
    let [pa, pb] = a.input.as_slice() else {
        return Err(Error::Invalid(format!("compare needs exactly two --input files, got {}", a.input.len())));
    };
    let names = ["a", "b"];
    let kinds = ["peak_year", "zeros_per_career", "within_sd", "cumulative", "mean_curve"];
    let dist_paths: Vec<PathBuf> = match &a.distributions {
        Some(dir) => names.iter().flat_map(|n| kinds.iter().map(move |k| dir.join(format!("{n}_{k}.csv")))).collect(),
        None => Vec::new(),
    };
    let mut outputs = vec![a.out.as_path()];
    outputs.extend(dist_paths.iter().map(PathBuf::as_path));
    check_outputs(&[pa, pb], &outputs)?;
    let ta = nonempty(data::load_trajectories(pa)?, pa)?;
    let tb = nonempty(data::load_trajectories(pb)?, pb)?;
    let opts = SummaryOptions {
        full_only: !a.all_lengths,
        full_length: a.full_length,
        zero_threshold: a.zero_threshold,
        cumulative_year: a.cumulative_year,
        bootstrap_replicates: a.replicates,
        level: 0.95,
        seed,
    };
    let report = compare_ensembles(&ta, &tb, &opts)?;
    eprintln!(
        "compare: peak-year KS {:.3} (p={:.3}), max mean difference {:.3}",
        report.peak_year_ks.statistic, report.peak_year_ks.p_value, report.max_mean_difference
    );
    if let Some(dir) = &a.distributions {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.clone(), source })?;
        for ((trajs, s), files) in [(&ta, &report.a), (&tb, &report.b)].into_iter().zip(dist_paths.chunks(kinds.len())) {
            let ids: Vec<&str> = trajs
                .iter()
                .filter(|t| !t.q.is_empty() && (a.all_lengths || t.len() >= a.full_length))
                .map(|t| t.person_id.as_str())
                .collect();
            write_atomic(&files[0], &formats::histogram_csv(&formats::histogram(&s.peak_years)))?;
            write_atomic(&files[1], &formats::histogram_csv(&s.zeros_histogram))?;
            write_atomic(&files[2], &formats::statistic_csv(&ids, &s.within_sd))?;
            write_atomic(&files[3], &formats::statistic_csv(&ids, &s.cumulative))?;
            write_atomic(&files[4], &formats::mean_curve_csv(&s.mean_curve))?;
        }
    }
    write_atomic(&a.out, &formats::comparison_json(&report, &opts))
}
