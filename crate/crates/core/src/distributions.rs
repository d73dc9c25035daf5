//! Exponential initialization and the boundary-respecting Laplace increment.
//!
//! The increment `delta = q_{t+1} - q_t` follows a Laplace law with mode
//! `location` and scale `scale`. Productivity cannot go negative, so
//! `delta >= -q_t`. Two ways of enforcing this are supported:
//!
//! * [`Boundary::Truncate`] renormalizes the density on `[-q_t, inf)`.
//! * [`Boundary::Censor`] keeps the unconstrained law and moves the mass
//!   below `-q_t` onto an atom at `-q_t`, so the walk can sit at exactly
//!   zero.

use alloc::vec::Vec;
use libm::{exp, fabs, log, log1p};
use rand_core::RngCore;

use crate::math::{grid_golden_max, mean};
use crate::rng::uniform_open;
use crate::{Error, Result};

/// Lower search bound for the scale MLE.
pub const SCALE_MIN: f64 = 1e-3;
/// Upper search bound for the scale MLE.
pub const SCALE_MAX: f64 = 1e3;
/// Relative tolerance of all scalar likelihood searches.
pub const SEARCH_TOL: f64 = 1e-6;

/// How the nonnegativity constraint on productivity is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Boundary {
    /// Renormalize the increment density above `-q`.
    Truncate,
    /// Clamp at `-q`, creating an atom at zero productivity.
    Censor,
}

impl Boundary {
    /// Lowercase name used in file formats.
    pub fn as_str(self) -> &'static str {
        match self {
            Boundary::Truncate => "truncate",
            Boundary::Censor => "censor",
        }
    }

    /// Inverse of [`Boundary::as_str`].
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "truncate" => Some(Boundary::Truncate),
            "censor" => Some(Boundary::Censor),
            _ => None,
        }
    }
}

/// How the mode of the increment depends on current productivity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModeRule {
    /// Constant mode `mu`.
    Fixed(f64),
    /// Productivity-dependent mode `beta * q_t`.
    Slope(f64),
}

impl ModeRule {
    /// Mode of the increment at productivity `q`.
    #[inline]
    pub fn location(self, q: f64) -> f64 {
        match self {
            ModeRule::Fixed(mu) => mu,
            ModeRule::Slope(beta) => beta * q,
        }
    }

    /// The parameter value, whichever rule this is.
    pub fn value(self) -> f64 {
        match self {
            ModeRule::Fixed(v) | ModeRule::Slope(v) => v,
        }
    }
}

/// CDF of an unconstrained Laplace law.
#[inline]
pub fn laplace_cdf(x: f64, location: f64, scale: f64) -> f64 {
    if x < location {
        0.5 * exp((x - location) / scale)
    } else {
        1.0 - 0.5 * exp(-(x - location) / scale)
    }
}

/// `ln P(X >= lower)` for `X ~ Laplace(location, scale)`.
#[inline]
fn ln_upper_mass(lower: f64, location: f64, scale: f64) -> f64 {
    let d = location - lower;
    if d >= 0.0 {
        log1p(-0.5 * exp(-d / scale))
    } else {
        -core::f64::consts::LN_2 + d / scale
    }
}

/// `ln P(X <= lower)` for `X ~ Laplace(location, scale)`.
#[inline]
fn ln_lower_mass(lower: f64, location: f64, scale: f64) -> f64 {
    let d = location - lower;
    if d >= 0.0 {
        -core::f64::consts::LN_2 - d / scale
    } else {
        log1p(-0.5 * exp(d / scale))
    }
}

/// Laplace increment conditioned on the current productivity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceIncrement {
    location: f64,
    scale: f64,
    boundary: Boundary,
    current_q: f64,
}

impl LaplaceIncrement {
    /// Validates `scale > 0`, `current_q >= 0` and finiteness.
    pub fn new(location: f64, scale: f64, boundary: Boundary, current_q: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidParameter { name: "scale", value: scale });
        }
        if !(current_q >= 0.0) || !current_q.is_finite() {
            return Err(Error::InvalidParameter { name: "current_q", value: current_q });
        }
        if !location.is_finite() {
            return Err(Error::InvalidParameter { name: "location", value: location });
        }
        Ok(Self { location, scale, boundary, current_q })
    }

    /// Mode of the unconstrained law.
    pub fn location(&self) -> f64 {
        self.location
    }

    /// Scale of the unconstrained law.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Boundary handling.
    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Conditioning productivity.
    pub fn current_q(&self) -> f64 {
        self.current_q
    }

    /// Smallest admissible increment, `-current_q`.
    pub fn lower(&self) -> f64 {
        -self.current_q
    }

    /// Mass the unconstrained law puts below the boundary. Under censoring
    /// this is the size of the atom at `-current_q`.
    pub fn boundary_mass(&self) -> f64 {
        laplace_cdf(self.lower(), self.location, self.scale)
    }

    /// Log-likelihood contribution of one observed increment.
    ///
    /// Truncated: the renormalized log-density. Censored: the log-density of
    /// the continuous part above the boundary, or the log atom mass for an
    /// increment sitting exactly on the boundary.
    pub fn log_likelihood(&self, delta: f64) -> Result<f64> {
        let lower = self.lower();
        if delta < lower {
            return Err(Error::OutOfSupport { delta, lower });
        }
        let r = fabs(delta - self.location);
        match self.boundary {
            Boundary::Truncate => Ok(-log(2.0 * self.scale)
                - r / self.scale
                - ln_upper_mass(lower, self.location, self.scale)),
            Boundary::Censor => {
                if delta <= lower {
                    Ok(ln_lower_mass(lower, self.location, self.scale))
                } else {
                    Ok(-log(2.0 * self.scale) - r / self.scale)
                }
            }
        }
    }

    /// CDF of the boundary-respecting law.
    pub fn cdf(&self, x: f64) -> f64 {
        let lower = self.lower();
        if x < lower {
            return 0.0;
        }
        let f = laplace_cdf(x, self.location, self.scale);
        match self.boundary {
            Boundary::Censor => f,
            Boundary::Truncate => {
                let f0 = laplace_cdf(lower, self.location, self.scale);
                ((f - f0) / (1.0 - f0)).clamp(0.0, 1.0)
            }
        }
    }

    /// Mean of the boundary-respecting law (closed form).
    pub fn mean(&self) -> f64 {
        let (m, b, lower) = (self.location, self.scale, self.lower());
        let a = lower - m;
        // E[max(X, lower)] for X ~ Laplace(m, b).
        let clamped = if a <= 0.0 {
            m + 0.5 * b * exp(a / b)
        } else {
            lower + 0.5 * b * exp(-a / b)
        };
        match self.boundary {
            Boundary::Censor => clamped,
            Boundary::Truncate => {
                let below = laplace_cdf(lower, m, b);
                (clamped - lower * below) / (1.0 - below)
            }
        }
    }

    /// Draw one increment.
    ///
    /// Truncated draws use the inverse CDF restricted to the admissible
    /// quantile range. When the mode lies below the boundary the admissible
    /// part is a pure exponential tail and is sampled as such, which stays
    /// accurate however far the boundary sits in the tail.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        let (m, b, lower) = (self.location, self.scale, self.lower());
        let u = uniform_open(rng);
        match self.boundary {
            Boundary::Censor => {
                let x = if u < 0.5 {
                    m + b * log(2.0 * u)
                } else {
                    m - b * log(2.0 * (1.0 - u))
                };
                x.max(lower)
            }
            Boundary::Truncate => {
                if lower >= m {
                    lower - b * log(u)
                } else {
                    // Survival probability of the draw within the admissible range.
                    let upper_mass = 1.0 - 0.5 * exp((lower - m) / b);
                    let s = u * upper_mass;
                    let x = if s > 0.5 {
                        m + b * log(2.0 * (1.0 - s))
                    } else {
                        m - b * log(2.0 * s)
                    };
                    x.max(lower)
                }
            }
        }
    }
}

/// Log-density of a truncated increment.
///
/// Errors when `inc` is not in truncate mode or `delta < -current_q`.
pub fn trunc_laplace_logpdf(delta: f64, inc: &LaplaceIncrement) -> Result<f64> {
    if inc.boundary != Boundary::Truncate {
        return Err(Error::InvalidParameter { name: "boundary", value: f64::NAN });
    }
    inc.log_likelihood(delta)
}

/// Exponential law of first-year productivity, parameterized by its mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialInit {
    mean: f64,
}

impl ExponentialInit {
    /// Requires a finite, positive mean.
    pub fn new(mean: f64) -> Result<Self> {
        if !(mean > 0.0) || !mean.is_finite() {
            return Err(Error::InvalidParameter { name: "mean", value: mean });
        }
        Ok(Self { mean })
    }

    /// Mean first-year productivity.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Draw a first-year productivity.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        -self.mean * log(uniform_open(rng))
    }
}

/// Maximum-likelihood exponential fit: the arithmetic mean.
pub fn fit_exponential(first_year_values: &[f64]) -> Result<ExponentialInit> {
    if first_year_values.is_empty() {
        return Err(Error::EmptyInput("first-year values"));
    }
    if let Some(&bad) = first_year_values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameter { name: "first-year value", value: bad });
    }
    ExponentialInit::new(mean(first_year_values))
}

/// Minimum sample size for [`estimate_mode`].
pub const MODE_MIN_OBSERVATIONS: usize = 8;

/// Half-sample mode of a sample.
///
/// Repeatedly keeps the shortest window holding half of the sorted sample
/// (ties go to the leftmost window) until at most three points remain.
pub fn estimate_mode(deltas: &[f64]) -> Result<f64> {
    if deltas.len() < MODE_MIN_OBSERVATIONS {
        return Err(Error::TooFewObservations {
            what: "mode estimate",
            needed: MODE_MIN_OBSERVATIONS,
            got: deltas.len(),
        });
    }
    if let Some(&bad) = deltas.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter { name: "delta", value: bad });
    }
    let mut xs: Vec<f64> = deltas.to_vec();
    xs.sort_by(f64::total_cmp);
    let mut w: &[f64] = &xs;
    while w.len() > 3 {
        let h = w.len().div_ceil(2);
        let mut best = 0;
        let mut best_width = f64::INFINITY;
        for i in 0..=(w.len() - h) {
            let width = w[i + h - 1] - w[i];
            if width < best_width {
                best_width = width;
                best = i;
            }
        }
        w = &w[best..best + h];
    }
    Ok(match w.len() {
        3 => {
            let left = w[1] - w[0];
            let right = w[2] - w[1];
            if left < right {
                0.5 * (w[0] + w[1])
            } else if right < left {
                0.5 * (w[1] + w[2])
            } else {
                w[1]
            }
        }
        2 => 0.5 * (w[0] + w[1]),
        _ => w[0],
    })
}

/// Result of a scale MLE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleFit {
    /// Estimated scale.
    pub scale: f64,
    /// Maximized log-likelihood.
    pub log_likelihood: f64,
    /// The estimate sits on the lower search bound (zero-residual data).
    pub degenerate: bool,
}

/// Summed log-likelihood of `(q, delta)` pairs for a fixed mode rule and
/// scale. Fails on pairs outside the support.
pub fn pairs_log_likelihood(
    pairs: &[(f64, f64)],
    rule: ModeRule,
    scale: f64,
    boundary: Boundary,
) -> Result<f64> {
    let mut total = 0.0;
    for &(q, delta) in pairs {
        let inc = LaplaceIncrement::new(rule.location(q), scale, boundary, q)?;
        total += inc.log_likelihood(delta)?;
    }
    Ok(total)
}

// Per-pair quantities that do not depend on the scale.
struct Residuals {
    // Sum of |delta - mode| over the continuous observations.
    abs_sum: f64,
    // Number of observations contributing -ln(2 scale).
    n_density: f64,
    // Mode minus boundary for each pair whose likelihood needs a mass term.
    mass_terms: Vec<(f64, bool)>,
}

impl Residuals {
    fn new(pairs: &[(f64, f64)], rule: ModeRule, boundary: Boundary) -> Result<Self> {
        let mut abs_sum = 0.0;
        let mut n_density = 0.0;
        let mut mass_terms = Vec::with_capacity(pairs.len());
        for &(q, delta) in pairs {
            if !(q >= 0.0) || !q.is_finite() || !delta.is_finite() {
                return Err(Error::InvalidParameter { name: "pair", value: q });
            }
            let lower = -q;
            if delta < lower {
                return Err(Error::OutOfSupport { delta, lower });
            }
            let m = rule.location(q);
            match boundary {
                Boundary::Truncate => {
                    abs_sum += fabs(delta - m);
                    n_density += 1.0;
                    // true: ln P(X >= lower) term.
                    mass_terms.push((m - lower, true));
                }
                Boundary::Censor => {
                    if delta <= lower {
                        // false: ln P(X <= lower) atom.
                        mass_terms.push((m - lower, false));
                    } else {
                        abs_sum += fabs(delta - m);
                        n_density += 1.0;
                    }
                }
            }
        }
        Ok(Self { abs_sum, n_density, mass_terms })
    }

    fn log_likelihood(&self, scale: f64) -> f64 {
        let mut ll = -self.n_density * log(2.0 * scale) - self.abs_sum / scale;
        for &(d, upper) in &self.mass_terms {
            let z = d / scale;
            ll += match (upper, d >= 0.0) {
                // Truncation divides by the admissible mass; negligible
                // beyond ~37 scales.
                (true, true) if z > 37.0 => 0.0,
                (true, true) => -log1p(-0.5 * exp(-z)),
                (true, false) => core::f64::consts::LN_2 - z,
                (false, true) => -core::f64::consts::LN_2 - z,
                (false, false) => log1p(-0.5 * exp(z)),
            };
        }
        ll
    }
}

/// Maximum-likelihood scale for `(q, delta)` pairs under a fixed mode rule.
///
/// Searches `ln(scale)` over `[SCALE_MIN, SCALE_MAX]` with a coarse grid and
/// golden-section refinement to [`SEARCH_TOL`].
pub fn fit_scale_mle(pairs: &[(f64, f64)], rule: ModeRule, boundary: Boundary) -> Result<ScaleFit> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("scale fit pairs"));
    }
    let res = Residuals::new(pairs, rule, boundary)?;
    let lo = log(SCALE_MIN);
    let hi = log(SCALE_MAX);
    let m = grid_golden_max(|ls| res.log_likelihood(exp(ls)), lo, hi, 25, SEARCH_TOL);
    if !m.value.is_finite() {
        return Err(Error::NonFiniteLikelihood);
    }
    Ok(ScaleFit { scale: exp(m.x), log_likelihood: m.value, degenerate: m.at_lower })
}
