//! Career models and trajectory simulation.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand_core::RngCore;

use crate::distributions::{Boundary, ExponentialInit, LaplaceIncrement};
pub use crate::distributions::ModeRule;
use crate::rng::{self, domain};
use crate::{Error, Result};

/// Largest career age allowed as a change point.
pub const MAX_CHANGE_YEAR: u32 = 19;
/// Most change points a model may carry.
pub const MAX_CHANGE_POINTS: usize = 3;
/// Observations in a full trajectory (career ages 0 through 20).
pub const FULL_LENGTH: usize = 21;

/// Ordered career ages at which the increment law switches stage.
///
/// Stage `i` covers the ages `t` with `c_i < t <= c_{i+1}`, with stage 0
/// starting at age 0 and the last stage running to infinity, so the set
/// `(2, 5)` gives stages 0-2, 3-5 and 6 onwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChangePointSet {
    points: [u32; MAX_CHANGE_POINTS],
    len: u8,
}

impl ChangePointSet {
    /// One to three strictly increasing ages in `1..=19`.
    pub fn new(points: &[u32]) -> Result<Self> {
        if points.is_empty() || points.len() > MAX_CHANGE_POINTS {
            return Err(Error::InvalidChangePoints(format!(
                "expected 1 to {MAX_CHANGE_POINTS} points, got {}",
                points.len()
            )));
        }
        Self::build(points)
    }

    /// The empty set: a single-stage model. Only used for generative models;
    /// candidate enumeration always has at least one change point.
    pub fn none() -> Self {
        Self { points: [0; MAX_CHANGE_POINTS], len: 0 }
    }

    fn build(points: &[u32]) -> Result<Self> {
        let mut arr = [0; MAX_CHANGE_POINTS];
        for (i, &p) in points.iter().enumerate() {
            if !(1..=MAX_CHANGE_YEAR).contains(&p) {
                return Err(Error::InvalidChangePoints(format!(
                    "change point {p} outside 1..={MAX_CHANGE_YEAR}"
                )));
            }
            if i > 0 && p <= points[i - 1] {
                return Err(Error::InvalidChangePoints(format!(
                    "change points must be strictly increasing: {points:?}"
                )));
            }
            arr[i] = p;
        }
        Ok(Self { points: arr, len: points.len() as u8 })
    }

    /// Same as [`ChangePointSet::new`] but also accepts an empty slice.
    pub fn from_slice(points: &[u32]) -> Result<Self> {
        if points.is_empty() {
            Ok(Self::none())
        } else {
            Self::new(points)
        }
    }

    /// The change points.
    pub fn as_slice(&self) -> &[u32] {
        &self.points[..self.len as usize]
    }

    /// Number of change points.
    pub fn len(&self) -> usize {
        self.len as usize
    }

    /// True for the single-stage set.
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of stages, one more than the number of change points.
    pub fn stage_count(&self) -> usize {
        self.len() + 1
    }

    /// Inclusive source-age range `(first, last)` of stage `i`; `last` is
    /// `None` for the open-ended final stage.
    pub fn stage_range(&self, i: usize) -> (u32, Option<u32>) {
        let pts = self.as_slice();
        let first = if i == 0 { 0 } else { pts[i - 1] + 1 };
        (first, pts.get(i).copied())
    }

    /// Points joined with `-`, e.g. `4-7-13`. Empty set renders as `none`.
    pub fn label(&self) -> String {
        if self.is_empty() {
            return String::from("none");
        }
        let parts: Vec<String> = self.as_slice().iter().map(|p| format!("{p}")).collect();
        parts.join("-")
    }
}

/// Stage containing career age `t`.
pub fn stage_of(t: u32, cps: &ChangePointSet) -> usize {
    cps.as_slice().iter().filter(|&&c| t > c).count()
}

/// Increment law of one career stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageParams {
    /// Laplace scale.
    pub scale: f64,
    /// Mode of the increment.
    pub mode: ModeRule,
}

impl StageParams {
    /// Validates `scale > 0`.
    pub fn new(scale: f64, mode: ModeRule) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidParameter { name: "scale", value: scale });
        }
        if !mode.value().is_finite() {
            return Err(Error::InvalidParameter { name: "mode", value: mode.value() });
        }
        Ok(Self { scale, mode })
    }

    /// Increment law at productivity `q`.
    pub fn increment(&self, q: f64, boundary: Boundary) -> Result<LaplaceIncrement> {
        LaplaceIncrement::new(self.mode.location(q), self.scale, boundary, q)
    }
}

/// Exponential start, change points and one increment law per stage.
#[derive(Debug, Clone, PartialEq)]
pub struct CareerModel {
    init: ExponentialInit,
    change_points: ChangePointSet,
    stages: Vec<StageParams>,
    boundary: Boundary,
}

impl CareerModel {
    /// Requires exactly one stage per change point plus one.
    pub fn new(
        init: ExponentialInit,
        change_points: ChangePointSet,
        stages: Vec<StageParams>,
        boundary: Boundary,
    ) -> Result<Self> {
        if stages.len() != change_points.stage_count() {
            return Err(Error::InvalidModel(format!(
                "{} change points need {} stages, got {}",
                change_points.len(),
                change_points.stage_count(),
                stages.len()
            )));
        }
        for s in &stages {
            StageParams::new(s.scale, s.mode)?;
        }
        Ok(Self { init, change_points, stages, boundary })
    }

    /// Two-stage model with a shared fixed mode: scale `alpha1` for the
    /// increments out of ages `0..change_year`, `alpha2` afterwards.
    pub fn simplified(
        lambda0: f64,
        alpha1: f64,
        alpha2: f64,
        mu: f64,
        change_year: u32,
        boundary: Boundary,
    ) -> Result<Self> {
        if change_year < 2 {
            return Err(Error::InvalidChangePoints(format!(
                "change year must be at least 2, got {change_year}"
            )));
        }
        Self::new(
            ExponentialInit::new(lambda0)?,
            ChangePointSet::new(&[change_year - 1])?,
            alloc::vec![
                StageParams::new(alpha1, ModeRule::Fixed(mu))?,
                StageParams::new(alpha2, ModeRule::Fixed(mu))?,
            ],
            boundary,
        )
    }

    /// First-year law.
    pub fn init(&self) -> ExponentialInit {
        self.init
    }

    /// Stage boundaries.
    pub fn change_points(&self) -> &ChangePointSet {
        &self.change_points
    }

    /// Stage laws, in order.
    pub fn stages(&self) -> &[StageParams] {
        &self.stages
    }

    /// Boundary handling used for simulation.
    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Copy with a different boundary.
    pub fn with_boundary(&self, boundary: Boundary) -> Self {
        Self { boundary, ..self.clone() }
    }

    /// Law of the increment out of age `t` at productivity `q`.
    pub fn increment_at(&self, t: u32, q: f64) -> Result<LaplaceIncrement> {
        self.stages[stage_of(t, &self.change_points)].increment(q, self.boundary)
    }
}

/// One researcher's adjusted productivity, indexed by career age.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Opaque identifier.
    pub person_id: String,
    /// Productivity at ages 0, 1, 2, ...
    pub q: Vec<f64>,
}

impl Trajectory {
    /// Validates that every value is finite and nonnegative.
    pub fn new(person_id: impl Into<String>, q: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = q.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter { name: "q", value: bad });
        }
        Ok(Self { person_id: person_id.into(), q })
    }

    /// Number of observed ages.
    pub fn len(&self) -> usize {
        self.q.len()
    }

    /// True when nothing was observed.
    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Observed for all of ages 0-20.
    pub fn is_full(&self) -> bool {
        self.q.len() >= FULL_LENGTH
    }

    /// Consecutive `(q_t, q_{t+1} - q_t)` pairs with their source age.
    pub fn increments(&self) -> impl Iterator<Item = (u32, f64, f64)> + '_ {
        self.q.windows(2).enumerate().map(|(t, w)| (t as u32, w[0], w[1] - w[0]))
    }
}

/// Simulate one trajectory of `length` ages.
pub fn simulate_trajectory<R: RngCore + ?Sized>(
    model: &CareerModel,
    length: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    if length == 0 {
        return Err(Error::InvalidParameter { name: "length", value: 0.0 });
    }
    let mut q = Vec::with_capacity(length);
    let mut current = model.init.sample(rng);
    q.push(current);
    for t in 1..length {
        let inc = model.increment_at((t - 1) as u32, current)?;
        current = (current + inc.sample(rng)).max(0.0);
        q.push(current);
    }
    Ok(Trajectory { person_id: String::new(), q })
}

/// Identifier given to the `i`-th simulated trajectory.
pub fn simulated_id(i: usize) -> String {
    format!("sim{i:06}")
}

/// Simulate `n` independent trajectories. Trajectory `i` draws from the
/// stream `(seed, [SIMULATE, i])`, so the result does not depend on the
/// order in which trajectories are generated.
pub fn simulate_ensemble(
    model: &CareerModel,
    n: usize,
    length: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    if n == 0 {
        return Err(Error::InvalidParameter { name: "n", value: 0.0 });
    }
    (0..n)
        .map(|i| {
            let mut rng = rng::stream(seed, &[domain::SIMULATE, i as u64]);
            let mut traj = simulate_trajectory(model, length, &mut rng)?;
            traj.person_id = simulated_id(i);
            Ok(traj)
        })
        .collect()
}
