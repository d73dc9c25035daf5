//! Full-model estimation: change-point enumeration, per-stage maximum
//! likelihood, AIC selection and the faculty-level bootstrap.
//!
//! Each stage is fitted with a fixed three-step alternation:
//!
//! 1. scale at the global mode of all increments,
//! 2. slope `beta` of the productivity-dependent mode at that scale,
//! 3. scale again at mode `beta * q_t`.
//!
//! A stage depends only on the age interval it covers, so stage fits are
//! cached per interval and shared by every candidate containing it.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use libm::{exp, fabs, log, log1p};

use crate::distributions::{
    estimate_mode, fit_exponential, fit_scale_mle, Boundary, ModeRule, SEARCH_TOL,
};
use crate::math::grid_golden_max;
use crate::model::{CareerModel, ChangePointSet, StageParams, Trajectory, MAX_CHANGE_POINTS};
use crate::rng::{self, domain};
use crate::{Error, Result};

/// Lower bound of the slope search.
pub const BETA_MIN: f64 = -2.0;
/// Upper bound of the slope search.
pub const BETA_MAX: f64 = 2.0;
const BETA_GRID: usize = 41;

/// All strictly increasing tuples of `1..=max_points` ages drawn from
/// `min_year..=max_year`, ordered by size and then lexicographically.
pub fn enumerate_change_point_sets(
    min_year: u32,
    max_year: u32,
    max_points: usize,
) -> Result<Vec<ChangePointSet>> {
    if min_year < 1 || min_year > max_year || max_year > crate::model::MAX_CHANGE_YEAR {
        return Err(Error::InvalidChangePoints(alloc::format!(
            "invalid range {min_year}..={max_year}"
        )));
    }
    if max_points == 0 || max_points > MAX_CHANGE_POINTS {
        return Err(Error::InvalidChangePoints(alloc::format!(
            "max_points must be 1..={MAX_CHANGE_POINTS}, got {max_points}"
        )));
    }
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(max_points);
    for size in 1..=max_points {
        push_combinations(min_year, max_year, size, &mut current, &mut out)?;
    }
    Ok(out)
}

fn push_combinations(
    from: u32,
    to: u32,
    remaining: usize,
    current: &mut Vec<u32>,
    out: &mut Vec<ChangePointSet>,
) -> Result<()> {
    if remaining == 0 {
        out.push(ChangePointSet::new(current)?);
        return Ok(());
    }
    for p in from..=to {
        current.push(p);
        push_combinations(p + 1, to, remaining - 1, current, out)?;
        current.pop();
    }
    Ok(())
}

/// Transitions `(q_t, q_{t+1})` of one career stage, pooled over
/// trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct StageData {
    /// Stage index.
    pub stage: usize,
    /// First source age in the stage.
    pub first_age: u32,
    /// Last source age, `None` when open-ended.
    pub last_age: Option<u32>,
    /// Consecutive productivity pairs.
    pub pairs: Vec<(f64, f64)>,
}

impl StageData {
    /// No trajectory reaches this stage.
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Too few pairs to fit (fewer than two).
    pub fn is_degenerate(&self) -> bool {
        self.pairs.len() < 2
    }

    /// Pairs as `(q_t, delta_t)`.
    pub fn increments(&self) -> Vec<(f64, f64)> {
        self.pairs.iter().map(|&(a, b)| (a, b - a)).collect()
    }
}

/// Split every consecutive pair of every trajectory into its stage. Pair
/// `(q_t, q_{t+1})` belongs to the stage containing source age `t`.
pub fn build_stage_data(trajs: &[Trajectory], cps: &ChangePointSet) -> Vec<StageData> {
    let mut stages: Vec<StageData> = (0..cps.stage_count())
        .map(|i| {
            let (first_age, last_age) = cps.stage_range(i);
            StageData { stage: i, first_age, last_age, pairs: Vec::new() }
        })
        .collect();
    for traj in trajs {
        for (t, w) in traj.q.windows(2).enumerate() {
            let s = crate::model::stage_of(t as u32, cps);
            stages[s].pairs.push((w[0], w[1]));
        }
    }
    stages
}

/// Fitted stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageFit {
    /// Final scale and slope.
    pub params: StageParams,
    /// Stage log-likelihood at the final parameters.
    pub log_likelihood: f64,
    /// Scale from the first step (mode fixed at the global mode).
    pub initial_scale: f64,
    /// Number of transitions.
    pub pairs: usize,
    /// Zero-residual data drove the scale to its lower bound.
    pub degenerate: bool,
}

fn slope_log_likelihood(incs: &[(f64, f64)], beta: f64, scale: f64, boundary: Boundary) -> f64 {
    let ln2s = log(2.0 * scale);
    let inv = 1.0 / scale;
    let mut ll = 0.0;
    for &(q, delta) in incs {
        let m = beta * q;
        let d = m + q;
        match boundary {
            Boundary::Truncate => {
                ll -= ln2s + fabs(delta - m) * inv;
                let z = d * inv;
                ll -= if d >= 0.0 {
                    if z > 37.0 {
                        0.0
                    } else {
                        log1p(-0.5 * exp(-z))
                    }
                } else {
                    -core::f64::consts::LN_2 + z
                };
            }
            Boundary::Censor => {
                if delta <= -q {
                    let z = d * inv;
                    ll += if d >= 0.0 {
                        -core::f64::consts::LN_2 - z
                    } else {
                        log1p(-0.5 * exp(z))
                    };
                } else {
                    ll -= ln2s + fabs(delta - m) * inv;
                }
            }
        }
    }
    ll
}

fn fit_increments(incs: &[(f64, f64)], global_mode: f64, boundary: Boundary) -> Result<StageFit> {
    if incs.len() < 2 {
        return Err(Error::TooFewObservations { what: "stage fit", needed: 2, got: incs.len() });
    }
    let first = fit_scale_mle(incs, ModeRule::Fixed(global_mode), boundary)?;
    let slope = grid_golden_max(
        |b| slope_log_likelihood(incs, b, first.scale, boundary),
        BETA_MIN,
        BETA_MAX,
        BETA_GRID,
        SEARCH_TOL,
    );
    if !slope.value.is_finite() {
        return Err(Error::NonFiniteLikelihood);
    }
    let last = fit_scale_mle(incs, ModeRule::Slope(slope.x), boundary)?;
    let all_equal = incs.iter().all(|p| p.1 == incs[0].1);
    Ok(StageFit {
        params: StageParams::new(last.scale, ModeRule::Slope(slope.x))?,
        log_likelihood: last.log_likelihood,
        initial_scale: first.scale,
        pairs: incs.len(),
        degenerate: last.degenerate || all_equal,
    })
}

/// Fit one stage with the three-step alternation. Needs at least two pairs.
pub fn fit_stage(data: &StageData, global_mode: f64, boundary: Boundary) -> Result<StageFit> {
    fit_increments(&data.increments(), global_mode, boundary)
}

/// AIC parameter count `per_stage * stages + per_change_point * points`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParameterCount {
    /// Parameters per stage (scale and slope).
    pub per_stage: u32,
    /// Parameters per change point.
    pub per_change_point: u32,
}

impl Default for ParameterCount {
    fn default() -> Self {
        Self { per_stage: 2, per_change_point: 1 }
    }
}

impl ParameterCount {
    /// Parameter count of a candidate.
    pub fn count(&self, cps: &ChangePointSet) -> u32 {
        self.per_stage * cps.stage_count() as u32 + self.per_change_point * cps.len() as u32
    }
}

/// Estimation settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitOptions {
    /// Boundary used by the likelihood.
    pub boundary: Boundary,
    /// AIC parameter count.
    pub parameters: ParameterCount,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { boundary: Boundary::Truncate, parameters: ParameterCount::default() }
    }
}

/// `2k - 2 lnL`.
pub fn aic(log_likelihood: f64, k: u32) -> f64 {
    2.0 * k as f64 - 2.0 * log_likelihood
}

/// One row of the candidate table.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateFit {
    /// Candidate change points.
    pub change_points: ChangePointSet,
    /// AIC parameter count.
    pub parameters: u32,
    /// Total log-likelihood; `None` for invalid candidates.
    pub log_likelihood: Option<f64>,
    /// AIC; `None` for invalid candidates.
    pub aic: Option<f64>,
}

/// Outcome of [`fit_model`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Minimum-AIC model.
    pub best_model: CareerModel,
    /// Stage fits of the best model.
    pub best_stages: Vec<StageFit>,
    /// Global mode of the pooled increments.
    pub global_mode: f64,
    /// Every candidate, ordered by size then lexicographically.
    pub candidates: Vec<CandidateFit>,
}

impl FitResult {
    /// Name of the selection criterion.
    pub const SELECTION_RULE: &'static str = "AIC";

    /// Row of the selected candidate.
    pub fn best_candidate(&self) -> &CandidateFit {
        let cps = self.best_model.change_points();
        self.candidates.iter().find(|c| &c.change_points == cps).expect("best candidate present")
    }

    /// 1-based AIC rank of each candidate, `None` for invalid ones.
    pub fn ranks(&self) -> Vec<Option<usize>> {
        let mut order: Vec<usize> =
            (0..self.candidates.len()).filter(|&i| self.candidates[i].aic.is_some()).collect();
        order.sort_by(|&a, &b| candidate_order(&self.candidates[a], &self.candidates[b]));
        let mut ranks = alloc::vec![None; self.candidates.len()];
        for (r, &i) in order.iter().enumerate() {
            ranks[i] = Some(r + 1);
        }
        ranks
    }
}

fn canonical_order(a: &ChangePointSet, b: &ChangePointSet) -> core::cmp::Ordering {
    a.len().cmp(&b.len()).then_with(|| a.as_slice().cmp(b.as_slice()))
}

// Lower AIC first; ties to fewer change points, then the smaller tuple.
fn candidate_order(a: &CandidateFit, b: &CandidateFit) -> core::cmp::Ordering {
    let (x, y) = (a.aic.unwrap_or(f64::INFINITY), b.aic.unwrap_or(f64::INFINITY));
    x.total_cmp(&y).then_with(|| canonical_order(&a.change_points, &b.change_points))
}

// Transitions sorted by source age, with offsets for slicing age intervals.
struct PairIndex {
    incs: Vec<(f64, f64)>,
    offsets: Vec<usize>,
}

impl PairIndex {
    fn new(trajs: &[Trajectory]) -> Self {
        let max_pairs = trajs.iter().map(|t| t.q.len().saturating_sub(1)).max().unwrap_or(0);
        let mut by_age: Vec<Vec<(f64, f64)>> = alloc::vec![Vec::new(); max_pairs];
        for traj in trajs {
            for (t, w) in traj.q.windows(2).enumerate() {
                by_age[t].push((w[0], w[1] - w[0]));
            }
        }
        let mut offsets = Vec::with_capacity(max_pairs + 1);
        let mut incs = Vec::new();
        offsets.push(0);
        for group in by_age {
            incs.extend(group);
            offsets.push(incs.len());
        }
        Self { incs, offsets }
    }

    fn interval(&self, first: u32, last: Option<u32>) -> &[(f64, f64)] {
        let ages = self.offsets.len() - 1;
        let lo = (first as usize).min(ages);
        let hi = match last {
            Some(l) => (l as usize + 1).min(ages),
            None => ages,
        };
        if lo >= hi {
            return &[];
        }
        &self.incs[self.offsets[lo]..self.offsets[hi]]
    }
}

// Fits shared across candidates and bootstrap-free refits.
struct StageCache<'a> {
    index: &'a PairIndex,
    global_mode: f64,
    boundary: Boundary,
    fits: BTreeMap<(u32, Option<u32>), Option<StageFit>>,
}

impl StageCache<'_> {
    fn get(&mut self, first: u32, last: Option<u32>) -> Option<StageFit> {
        let key = (first, last);
        if let Some(f) = self.fits.get(&key) {
            return *f;
        }
        let incs = self.index.interval(first, last);
        let fit = fit_increments(incs, self.global_mode, self.boundary)
            .ok()
            .filter(|f| !f.degenerate);
        self.fits.insert(key, fit);
        fit
    }
}

/// Fit every candidate change-point set and select by AIC.
///
/// The exponential start is fitted once from the first-year values and
/// shared by all candidates. A candidate with an empty, single-pair or
/// degenerate stage is reported without likelihood and cannot be selected.
pub fn fit_model(
    trajs: &[Trajectory],
    candidates: &[ChangePointSet],
    opts: &FitOptions,
) -> Result<FitResult> {
    if trajs.is_empty() {
        return Err(Error::EmptyInput("trajectories"));
    }
    if candidates.is_empty() {
        return Err(Error::EmptyInput("candidates"));
    }
    let first_year: Vec<f64> = trajs.iter().filter_map(|t| t.q.first().copied()).collect();
    let init = fit_exponential(&first_year)?;
    let index = PairIndex::new(trajs);
    let deltas: Vec<f64> = index.incs.iter().map(|p| p.1).collect();
    let global_mode = estimate_mode(&deltas)?;

    let mut cands: Vec<ChangePointSet> = candidates.to_vec();
    cands.sort_by(canonical_order);
    cands.dedup();

    let mut cache =
        StageCache { index: &index, global_mode, boundary: opts.boundary, fits: BTreeMap::new() };
    let mut rows = Vec::with_capacity(cands.len());
    let mut best: Option<(usize, Vec<StageFit>)> = None;
    for cps in &cands {
        let k = opts.parameters.count(cps);
        let stages: Option<Vec<StageFit>> = (0..cps.stage_count())
            .map(|i| {
                let (first, last) = cps.stage_range(i);
                cache.get(first, last)
            })
            .collect();
        let row = match &stages {
            Some(fits) => {
                let ll: f64 = fits.iter().map(|f| f.log_likelihood).sum();
                CandidateFit {
                    change_points: *cps,
                    parameters: k,
                    log_likelihood: Some(ll),
                    aic: Some(aic(ll, k)),
                }
            }
            None => CandidateFit { change_points: *cps, parameters: k, log_likelihood: None, aic: None },
        };
        if let Some(fits) = stages {
            let better = match &best {
                None => true,
                Some((b, _)) => candidate_order(&row, &rows[*b]).is_lt(),
            };
            if better {
                best = Some((rows.len(), fits));
            }
        }
        rows.push(row);
    }
    let (best_i, best_stages) = best.ok_or(Error::NoValidCandidate)?;
    let best_model = CareerModel::new(
        init,
        rows[best_i].change_points,
        best_stages.iter().map(|f| f.params).collect(),
        opts.boundary,
    )?;
    Ok(FitResult { best_model, best_stages, global_mode, candidates: rows })
}

/// Parameters of one bootstrap refit.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateDraw {
    /// Replicate index.
    pub replicate: usize,
    /// Selected change points.
    pub change_points: ChangePointSet,
    /// Fitted mean first-year productivity.
    pub lambda0: f64,
    /// Fitted stage laws.
    pub stages: Vec<StageParams>,
}

/// Share of replicates that selected a change-point set.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangePointFrequency {
    /// Change points.
    pub change_points: ChangePointSet,
    /// Replicates selecting them.
    pub count: usize,
    /// `count` over successful replicates.
    pub fraction: f64,
}

/// Outcome of [`bootstrap_fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSummary {
    /// Replicates requested.
    pub replicates: usize,
    /// Successful refits, by replicate index.
    pub draws: Vec<ReplicateDraw>,
    /// Failed refits and their errors.
    pub failures: Vec<(usize, Error)>,
    /// Selected sets, most frequent first (ties by set order).
    pub change_point_frequencies: Vec<ChangePointFrequency>,
}

/// Faculty-level bootstrap: resample trajectories with replacement and
/// refit. Replicate `r` draws its indices from the stream
/// `(seed, [BOOTSTRAP, r])`.
pub fn bootstrap_fit(
    trajs: &[Trajectory],
    candidates: &[ChangePointSet],
    replicates: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<BootstrapSummary> {
    bootstrap_fit_with(trajs, candidates, replicates, opts, |r, n| {
        let mut rng = rng::stream(seed, &[domain::BOOTSTRAP, r as u64]);
        (0..n).map(|_| rng::index(&mut rng, n)).collect()
    })
}

/// [`bootstrap_fit`] with a caller-supplied resampler mapping
/// `(replicate, n)` to `n` trajectory indices.
pub fn bootstrap_fit_with<F>(
    trajs: &[Trajectory],
    candidates: &[ChangePointSet],
    replicates: usize,
    opts: &FitOptions,
    mut resample: F,
) -> Result<BootstrapSummary>
where
    F: FnMut(usize, usize) -> Vec<usize>,
{
    if replicates == 0 {
        return Err(Error::InvalidParameter { name: "replicates", value: 0.0 });
    }
    if trajs.is_empty() {
        return Err(Error::EmptyInput("trajectories"));
    }
    let mut draws = Vec::new();
    let mut failures = Vec::new();
    for r in 0..replicates {
        let idx = resample(r, trajs.len());
        let sample: Vec<Trajectory> = idx.iter().map(|&i| trajs[i].clone()).collect();
        match fit_model(&sample, candidates, opts) {
            Ok(fit) => draws.push(ReplicateDraw {
                replicate: r,
                change_points: *fit.best_model.change_points(),
                lambda0: fit.best_model.init().mean(),
                stages: fit.best_model.stages().to_vec(),
            }),
            Err(e) => failures.push((r, e)),
        }
    }
    let mut counts: BTreeMap<ChangePointSet, usize> = BTreeMap::new();
    for d in &draws {
        *counts.entry(d.change_points).or_default() += 1;
    }
    let total = draws.len() as f64;
    let mut freqs: Vec<ChangePointFrequency> = counts
        .into_iter()
        .map(|(change_points, count)| ChangePointFrequency {
            change_points,
            count,
            fraction: count as f64 / total,
        })
        .collect();
    freqs.sort_by(|a, b| {
        b.count.cmp(&a.count).then_with(|| canonical_order(&a.change_points, &b.change_points))
    });
    Ok(BootstrapSummary { replicates, draws, failures, change_point_frequencies: freqs })
}
