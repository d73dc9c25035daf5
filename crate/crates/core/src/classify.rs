//! Canonical-trajectory classifier and the two-stage variance sweep.
//!
//! A trajectory is regressed on a straight line and on a continuous
//! two-piece line for each breakpoint in 3..=17. Models are compared by
//! AICc under a Gaussian likelihood with profiled variance. The trajectory
//! is canonical when a piecewise model wins with a rising first piece, a
//! falling second piece, and a first slope at least twice as steep.

use alloc::vec::Vec;
use libm::{fabs, log};

use crate::distributions::Boundary;
use crate::model::{simulate_trajectory, CareerModel, Trajectory};
use crate::rng::{self, domain};
use crate::stats::{wald_binomial_ci, Proportion};
use crate::{Error, Result};

/// `2k - 2 lnL`.
pub fn aic(log_likelihood: f64, k: u32) -> f64 {
    crate::fitting::aic(log_likelihood, k)
}

/// Small-sample corrected AIC: `AIC + 2k(k+1)/(n-k-1)`.
pub fn aicc(log_likelihood: f64, k: u32, n: usize) -> f64 {
    let kf = k as f64;
    aic(log_likelihood, k) + 2.0 * kf * (kf + 1.0) / (n as f64 - kf - 1.0)
}

/// Gaussian log-likelihood of `n` residuals with sum of squares `rss`, at
/// the maximum-likelihood variance `rss / n`.
pub fn gaussian_profile_log_likelihood(rss: f64, n: usize) -> f64 {
    let nf = n as f64;
    -0.5 * nf * (log(2.0 * core::f64::consts::PI * rss / nf) + 1.0)
}

/// Classifier settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassifierConfig {
    /// First breakpoint tried.
    pub first_breakpoint: u32,
    /// Last breakpoint tried.
    pub last_breakpoint: u32,
    /// AICc parameter count of the line (intercept, slope, variance).
    pub k_linear: u32,
    /// AICc parameter count of the hinge (intercept, two slopes, variance).
    pub k_piecewise: u32,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { first_breakpoint: 3, last_breakpoint: 17, k_linear: 3, k_piecewise: 4 }
    }
}

impl ClassifierConfig {
    /// Shortest trajectory the classifier accepts.
    pub fn min_length(&self) -> usize {
        self.last_breakpoint as usize + 2
    }
}

/// Selected regression model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BestModel {
    /// Straight line.
    Linear,
    /// Continuous two-piece line with the given breakpoint.
    Piecewise {
        /// Career age of the hinge.
        breakpoint: u32,
    },
}

/// Classification of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalVerdict {
    /// Piecewise model wins and the slope criteria hold.
    pub is_canonical: bool,
    /// Minimum-AICc model.
    pub best_model: BestModel,
    /// Slope of the line, or of the first piece.
    pub slope1: f64,
    /// Slope of the second piece.
    pub slope2: Option<f64>,
    /// AICc of the line.
    pub aicc_linear: f64,
    /// AICc of each piecewise model, by breakpoint.
    pub aicc_piecewise: Vec<(u32, f64)>,
}

/// Least-squares fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    /// Coefficients.
    pub coef: [f64; 3],
    /// Residual sum of squares.
    pub rss: f64,
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| fabs(a[i][col]).total_cmp(&fabs(a[j][col])))?;
        if fabs(a[pivot][col]) < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut s = b[row];
        for k in (row + 1)..3 {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

fn least_squares(rows: &[[f64; 3]], y: &[f64], dims: usize) -> Option<LinearFit> {
    let mut ata = [[0.0; 3]; 3];
    let mut aty = [0.0; 3];
    for (r, &v) in rows.iter().zip(y) {
        for i in 0..dims {
            aty[i] += r[i] * v;
            for j in 0..dims {
                ata[i][j] += r[i] * r[j];
            }
        }
    }
    for i in dims..3 {
        ata[i][i] = 1.0;
    }
    let coef = solve3(ata, aty)?;
    let rss = rows
        .iter()
        .zip(y)
        .map(|(r, &v)| {
            let fit: f64 = (0..dims).map(|i| r[i] * coef[i]).sum();
            (v - fit) * (v - fit)
        })
        .sum();
    Some(LinearFit { coef, rss })
}

/// Ordinary least-squares line `y = a + b t` over `t = 0, 1, ...`.
/// Returns `[a, b, 0]`.
pub fn fit_line(y: &[f64]) -> Option<LinearFit> {
    let rows: Vec<[f64; 3]> = (0..y.len()).map(|t| [1.0, t as f64, 0.0]).collect();
    least_squares(&rows, y, 2)
}

/// Continuous hinge `y = a + s1 min(t, b) + s2 max(t - b, 0)`.
/// Returns `[a, s1, s2]`.
pub fn fit_hinge(y: &[f64], breakpoint: u32) -> Option<LinearFit> {
    let b = breakpoint as f64;
    let rows: Vec<[f64; 3]> = (0..y.len())
        .map(|t| {
            let t = t as f64;
            [1.0, t.min(b), (t - b).max(0.0)]
        })
        .collect();
    least_squares(&rows, y, 3)
}

/// Classify with the default configuration.
pub fn classify_canonical(traj: &Trajectory) -> Result<CanonicalVerdict> {
    classify_with(traj, &ClassifierConfig::default())
}

/// Classify a trajectory.
pub fn classify_with(traj: &Trajectory, cfg: &ClassifierConfig) -> Result<CanonicalVerdict> {
    let y = &traj.q;
    let n = y.len();
    if n < cfg.min_length() {
        return Err(Error::TooFewObservations {
            what: "canonical classifier",
            needed: cfg.min_length(),
            got: n,
        });
    }
    // Residuals below 1e-6 of the data's RMS count as an exact fit, so
    // perfect fits compare by parameter count alone.
    let floor = 1e-12 * y.iter().map(|v| v * v).sum::<f64>() + f64::MIN_POSITIVE;
    let score = |rss: f64, k: u32| aicc(gaussian_profile_log_likelihood(rss.max(floor), n), k, n);

    let line = fit_line(y).ok_or(Error::NonFiniteLikelihood)?;
    let aicc_linear = score(line.rss, cfg.k_linear);
    let mut aicc_piecewise = Vec::new();
    let mut best_piece: Option<(u32, LinearFit, f64)> = None;
    for b in cfg.first_breakpoint..=cfg.last_breakpoint {
        let hinge = fit_hinge(y, b).ok_or(Error::NonFiniteLikelihood)?;
        let s = score(hinge.rss, cfg.k_piecewise);
        aicc_piecewise.push((b, s));
        if best_piece.as_ref().is_none_or(|(_, _, best)| s < *best) {
            best_piece = Some((b, hinge, s));
        }
    }
    let verdict = match best_piece {
        Some((b, hinge, s)) if s < aicc_linear => {
            let (s1, s2) = (hinge.coef[1], hinge.coef[2]);
            CanonicalVerdict {
                is_canonical: s1 > 0.0 && s2 < 0.0 && fabs(s1) >= 2.0 * fabs(s2),
                best_model: BestModel::Piecewise { breakpoint: b },
                slope1: s1,
                slope2: Some(s2),
                aicc_linear,
                aicc_piecewise,
            }
        }
        _ => CanonicalVerdict {
            is_canonical: false,
            best_model: BestModel::Linear,
            slope1: line.coef[1],
            slope2: None,
            aicc_linear,
            aicc_piecewise,
        },
    };
    Ok(verdict)
}

/// Fraction of canonical trajectories with its 95% Wald interval.
pub fn canonical_fraction(ensemble: &[Trajectory]) -> Result<Proportion> {
    if ensemble.is_empty() {
        return Err(Error::EmptyInput("ensemble"));
    }
    let mut hits = 0;
    for t in ensemble {
        if classify_canonical(t)?.is_canonical {
            hits += 1;
        }
    }
    wald_binomial_ci(hits, ensemble.len() as u64, 0.95)
}

/// Settings of [`sweep_variances`].
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Early-career scales.
    pub alpha1: Vec<f64>,
    /// Later-career scales.
    pub alpha2: Vec<f64>,
    /// Fixed increment mode.
    pub mu: f64,
    /// Trajectories per cell.
    pub n: usize,
    /// First age governed by `alpha2`'s increments.
    pub change_year: u32,
    /// Ages per trajectory.
    pub length: usize,
    /// Mean first-year productivity.
    pub lambda0: f64,
    /// Boundary handling.
    pub boundary: Boundary,
    /// Master seed.
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            alpha1: Vec::new(),
            alpha2: Vec::new(),
            mu: -1.0,
            n: 400,
            change_year: 5,
            length: crate::model::FULL_LENGTH,
            lambda0: 4.65,
            boundary: Boundary::Censor,
            seed: 0,
        }
    }
}

/// One cell of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    /// Early-career scale.
    pub alpha1: f64,
    /// Later-career scale.
    pub alpha2: f64,
    /// Trajectories simulated.
    pub n: usize,
    /// Canonical fraction with its Wald interval.
    pub fraction: Proportion,
}

/// Canonical fraction over a rectangular grid of scales.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    /// Early-career scales.
    pub alpha1: Vec<f64>,
    /// Later-career scales.
    pub alpha2: Vec<f64>,
    /// Fixed mode.
    pub mu: f64,
    /// Trajectories per cell.
    pub n: usize,
    /// Cells in `alpha1`-major order.
    pub cells: Vec<SweepCell>,
}

/// Simulate `n` trajectories of one simplified-model cell. Trajectory `k`
/// of cell `(i, j)` draws from the stream `(seed, [SWEEP, i, j, k])`.
pub fn simulate_sweep_cell(
    cfg: &SweepConfig,
    i: usize,
    j: usize,
    alpha1: f64,
    alpha2: f64,
) -> Result<Vec<Trajectory>> {
    let model =
        CareerModel::simplified(cfg.lambda0, alpha1, alpha2, cfg.mu, cfg.change_year, cfg.boundary)?;
    (0..cfg.n)
        .map(|k| {
            let mut rng = rng::stream(cfg.seed, &[domain::SWEEP, i as u64, j as u64, k as u64]);
            simulate_trajectory(&model, cfg.length, &mut rng)
        })
        .collect()
}

/// Canonical fraction for every `(alpha1, alpha2)` pair of the grid.
pub fn sweep_variances(cfg: &SweepConfig) -> Result<SweepGrid> {
    if cfg.alpha1.is_empty() || cfg.alpha2.is_empty() {
        return Err(Error::EmptyInput("sweep grid"));
    }
    if let Some(&bad) = cfg.alpha1.iter().chain(&cfg.alpha2).find(|a| !(**a > 0.0)) {
        return Err(Error::InvalidParameter { name: "alpha", value: bad });
    }
    if cfg.n == 0 {
        return Err(Error::InvalidParameter { name: "n", value: 0.0 });
    }
    let mut cells = Vec::with_capacity(cfg.alpha1.len() * cfg.alpha2.len());
    for (i, &a1) in cfg.alpha1.iter().enumerate() {
        for (j, &a2) in cfg.alpha2.iter().enumerate() {
            let ens = simulate_sweep_cell(cfg, i, j, a1, a2)?;
            cells.push(SweepCell { alpha1: a1, alpha2: a2, n: cfg.n, fraction: canonical_fraction(&ens)? });
        }
    }
    Ok(SweepGrid {
        alpha1: cfg.alpha1.clone(),
        alpha2: cfg.alpha2.clone(),
        mu: cfg.mu,
        n: cfg.n,
        cells,
    })
}
