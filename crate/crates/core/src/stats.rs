//! Two-sample tests, binomial intervals and ensemble summaries.

use alloc::vec::Vec;
use libm::sqrt;

use crate::math::{kolmogorov_survival, mean, normal_quantile, population_sd, sample_variance, student_t_two_sided};
use crate::model::{Trajectory, FULL_LENGTH};
use crate::rng::{self, domain};
use crate::{Error, Result};

/// Two-sample Kolmogorov-Smirnov result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    /// Largest ECDF distance.
    pub statistic: f64,
    /// Asymptotic p-value.
    pub p_value: f64,
}

/// Two-sample Kolmogorov-Smirnov test.
///
/// The statistic is exact (ties handled by stepping past equal values in
/// both samples). The p-value uses the asymptotic Kolmogorov law at
/// `sqrt(n m / (n + m)) * D`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("KS sample"));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = if x[i] <= y[j] { x[i] } else { y[j] };
        while i < n && x[i] == v {
            i += 1;
        }
        while j < m && y[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    Ok(KsResult { statistic: d, p_value: kolmogorov_survival(sqrt(ne) * d) })
}

/// Welch's unequal-variance t test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchResult {
    /// t statistic, positive when `a` has the larger mean.
    pub t: f64,
    /// Welch-Satterthwaite degrees of freedom.
    pub df: f64,
    /// Two-sided p-value.
    pub p_value: f64,
}

/// Welch's t test of equal means.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(Error::TooFewObservations { what: "Welch t", needed: 2, got: s.len() });
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_variance(a) / na, sample_variance(b) / nb);
    let se2 = va + vb;
    if !(se2 > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let t = (mean(a) - mean(b)) / sqrt(se2);
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    Ok(WelchResult { t, df, p_value: student_t_two_sided(t, df) })
}

/// Binomial proportion with a confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proportion {
    /// Maximum-likelihood estimate.
    pub estimate: f64,
    /// Lower bound.
    pub lo: f64,
    /// Upper bound.
    pub hi: f64,
}

/// Wald interval `p ± z sqrt(p (1 - p) / n)`, clipped to `[0, 1]`.
pub fn wald_binomial_ci(successes: u64, n: u64, level: f64) -> Result<Proportion> {
    if n == 0 {
        return Err(Error::InvalidParameter { name: "n", value: 0.0 });
    }
    if successes > n {
        return Err(Error::InvalidParameter { name: "successes", value: successes as f64 });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter { name: "level", value: level });
    }
    let p = successes as f64 / n as f64;
    let z = normal_quantile(0.5 + 0.5 * level);
    let half = z * sqrt(p * (1.0 - p) / n as f64);
    Ok(Proportion { estimate: p, lo: (p - half).max(0.0), hi: (p + half).min(1.0) })
}

/// Zero-year rate after discounting unconfirmed zeros: the product of the
/// observed rate and the confirmed share. Both inputs lie in `[0, 1]`.
pub fn corrected_zero_rate(observed_rate: f64, confirmation_rate: f64) -> f64 {
    observed_rate * confirmation_rate
}

/// Standard deviation of a trajectory around its own mean.
pub fn within_career_sd(q: &[f64]) -> f64 {
    population_sd(q)
}

/// Age of the largest value, earliest on ties, and whether a tie occurred.
pub fn peak_year(q: &[f64]) -> Option<(usize, bool)> {
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let first = q.iter().position(|&v| v == max)?;
    let tied = q.iter().filter(|&&v| v == max).count() > 1;
    Some((first, tied))
}

/// Years at or below `threshold`.
pub fn zero_count(q: &[f64], threshold: f64) -> usize {
    q.iter().filter(|&&v| v <= threshold).count()
}

/// Total over ages `0..=year` (or the whole trajectory if shorter).
pub fn cumulative_at(q: &[f64], year: usize) -> f64 {
    q.iter().take(year + 1).sum()
}

/// Empirical quantile with linear interpolation between order statistics.
/// `sorted` must be sorted and nonempty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Settings of [`ensemble_summaries`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryOptions {
    /// Restrict to full trajectories, truncated to `full_length`.
    pub full_only: bool,
    /// Length of a full trajectory.
    pub full_length: usize,
    /// Values at or below this count as zero years.
    pub zero_threshold: f64,
    /// Cumulative output is summed through this age.
    pub cumulative_year: usize,
    /// Bootstrap replicates for the mean curve.
    pub bootstrap_replicates: usize,
    /// Confidence level of intervals.
    pub level: f64,
    /// Seed of the bootstrap streams.
    pub seed: u64,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        Self {
            full_only: true,
            full_length: FULL_LENGTH,
            zero_threshold: 0.0,
            cumulative_year: 5,
            bootstrap_replicates: 1000,
            level: 0.95,
            seed: 0,
        }
    }
}

/// Mean productivity at one career age.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YearMean {
    /// Career age.
    pub year: usize,
    /// Trajectories observed at this age.
    pub n: usize,
    /// Mean.
    pub mean: f64,
    /// Bootstrap percentile lower bound.
    pub lo: f64,
    /// Bootstrap percentile upper bound.
    pub hi: f64,
}

/// Descriptive summaries of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    /// Trajectories used.
    pub trajectories: usize,
    /// Per-age mean with bootstrap interval.
    pub mean_curve: Vec<YearMean>,
    /// Within-career standard deviation, per trajectory.
    pub within_sd: Vec<f64>,
    /// Age of greatest productivity, per trajectory.
    pub peak_years: Vec<usize>,
    /// Trajectories whose maximum was tied.
    pub peak_ties: usize,
    /// Zero years, per trajectory.
    pub zeros_per_career: Vec<usize>,
    /// `zeros_histogram[k]` trajectories have exactly `k` zero years.
    pub zeros_histogram: Vec<usize>,
    /// Every person-year value.
    pub annual_values: Vec<f64>,
    /// Person-years at or below the zero threshold.
    pub zero_years: usize,
    /// Cumulative productivity through the cumulative year, per trajectory.
    pub cumulative: Vec<f64>,
}

impl EnsembleSummary {
    /// Person-years observed.
    pub fn person_years(&self) -> usize {
        self.annual_values.len()
    }

    /// Zero-year rate with its Wald interval.
    pub fn zero_rate(&self, level: f64) -> Result<Proportion> {
        wald_binomial_ci(self.zero_years as u64, self.person_years() as u64, level)
    }
}

fn select<'a>(trajs: &'a [Trajectory], opts: &SummaryOptions) -> Vec<&'a [f64]> {
    trajs
        .iter()
        .filter(|t| !t.q.is_empty())
        .filter(|t| !opts.full_only || t.q.len() >= opts.full_length)
        .map(|t| if opts.full_only { &t.q[..opts.full_length] } else { &t.q[..] })
        .collect()
}

fn year_means(series: &[&[f64]], idx: impl Iterator<Item = usize>, len: usize) -> Vec<f64> {
    let mut sums = alloc::vec![0.0; len];
    let mut counts = alloc::vec![0usize; len];
    for i in idx {
        for (t, &v) in series[i].iter().enumerate() {
            sums[t] += v;
            counts[t] += 1;
        }
    }
    sums.iter().zip(&counts).map(|(s, &c)| if c == 0 { f64::NAN } else { s / c as f64 }).collect()
}

/// Per-age means with percentile bootstrap intervals, resampling whole
/// trajectories. Replicate `r` uses the stream `(seed, [SUMMARY, r])`.
pub fn mean_curve(trajs: &[&[f64]], replicates: usize, level: f64, seed: u64) -> Vec<YearMean> {
    let len = trajs.iter().map(|q| q.len()).max().unwrap_or(0);
    let n = trajs.len();
    let point = year_means(trajs, 0..n, len);
    let mut counts = alloc::vec![0usize; len];
    for q in trajs {
        for c in counts.iter_mut().take(q.len()) {
            *c += 1;
        }
    }
    let mut reps: Vec<Vec<f64>> = alloc::vec![Vec::with_capacity(replicates); len];
    for r in 0..replicates {
        let mut s = rng::stream(seed, &[domain::SUMMARY, r as u64]);
        let idx: Vec<usize> = (0..n).map(|_| rng::index(&mut s, n)).collect();
        let m = year_means(trajs, idx.into_iter(), len);
        for (t, v) in m.into_iter().enumerate() {
            if v.is_finite() {
                reps[t].push(v);
            }
        }
    }
    let tail = 0.5 * (1.0 - level);
    (0..len)
        .map(|t| {
            let mut v = core::mem::take(&mut reps[t]);
            v.sort_by(f64::total_cmp);
            let (lo, hi) = if v.is_empty() {
                (point[t], point[t])
            } else {
                (quantile_sorted(&v, tail), quantile_sorted(&v, 1.0 - tail))
            };
            YearMean { year: t, n: counts[t], mean: point[t], lo, hi }
        })
        .collect()
}

/// Summaries of an ensemble used to compare it against another.
pub fn ensemble_summaries(trajs: &[Trajectory], opts: &SummaryOptions) -> Result<EnsembleSummary> {
    let series = select(trajs, opts);
    if series.is_empty() {
        return Err(Error::EmptyInput("ensemble"));
    }
    let mut peak_years = Vec::with_capacity(series.len());
    let mut peak_ties = 0;
    let mut zeros_per_career = Vec::with_capacity(series.len());
    for q in &series {
        let (peak, tied) = peak_year(q).expect("nonempty trajectory");
        peak_years.push(peak);
        peak_ties += tied as usize;
        zeros_per_career.push(zero_count(q, opts.zero_threshold));
    }
    let max_zeros = zeros_per_career.iter().copied().max().unwrap_or(0);
    let mut zeros_histogram = alloc::vec![0; max_zeros + 1];
    for &z in &zeros_per_career {
        zeros_histogram[z] += 1;
    }
    let annual_values: Vec<f64> = series.iter().flat_map(|q| q.iter().copied()).collect();
    let zero_years = zero_count(&annual_values, opts.zero_threshold);
    Ok(EnsembleSummary {
        trajectories: series.len(),
        mean_curve: mean_curve(&series, opts.bootstrap_replicates, opts.level, opts.seed),
        within_sd: series.iter().map(|q| within_career_sd(q)).collect(),
        peak_years,
        peak_ties,
        zeros_per_career,
        zeros_histogram,
        annual_values,
        zero_years,
        cumulative: series.iter().map(|q| cumulative_at(q, opts.cumulative_year)).collect(),
    })
}

/// Statistical comparison of two ensembles.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    /// Summaries of the first ensemble.
    pub a: EnsembleSummary,
    /// Summaries of the second ensemble.
    pub b: EnsembleSummary,
    /// KS test on the age of greatest productivity.
    pub peak_year_ks: KsResult,
    /// KS test on within-career standard deviations.
    pub within_sd_ks: KsResult,
    /// Welch test on cumulative productivity.
    pub cumulative_welch: WelchResult,
    /// Zero-year rate of `a`.
    pub zero_rate_a: Proportion,
    /// Zero-year rate of `b`.
    pub zero_rate_b: Proportion,
    /// Largest absolute difference of per-age means over shared ages.
    pub max_mean_difference: f64,
}

fn as_f64(xs: &[usize]) -> Vec<f64> {
    xs.iter().map(|&x| x as f64).collect()
}

/// Run the full comparison battery on two ensembles.
pub fn compare_ensembles(
    a: &[Trajectory],
    b: &[Trajectory],
    opts: &SummaryOptions,
) -> Result<ComparisonReport> {
    let sa = ensemble_summaries(a, opts)?;
    let sb = ensemble_summaries(b, opts)?;
    let max_mean_difference = sa
        .mean_curve
        .iter()
        .zip(&sb.mean_curve)
        .map(|(x, y)| (x.mean - y.mean).abs())
        .fold(0.0, f64::max);
    Ok(ComparisonReport {
        peak_year_ks: ks_two_sample(&as_f64(&sa.peak_years), &as_f64(&sb.peak_years))?,
        within_sd_ks: ks_two_sample(&sa.within_sd, &sb.within_sd)?,
        cumulative_welch: welch_t(&sa.cumulative, &sb.cumulative)?,
        zero_rate_a: sa.zero_rate(opts.level)?,
        zero_rate_b: sb.zero_rate(opts.level)?,
        max_mean_difference,
        a: sa,
        b: sb,
    })
}
