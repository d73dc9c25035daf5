//! JSON and CSV artifacts written by the command-line tool, and the model
//! JSON reader.

use std::io::Write;
use std::path::Path;

use careerwalk::classify::{BestModel, CanonicalVerdict, SweepGrid};
use careerwalk::distributions::{Boundary, ExponentialInit, ModeRule};
use careerwalk::fitting::{BootstrapSummary, FitResult};
use careerwalk::math;
use careerwalk::model::{CareerModel, ChangePointSet, StageParams};
use careerwalk::stats::{quantile_sorted, ComparisonReport, EnsembleSummary, KsResult, Proportion, SummaryOptions, YearMean};
use serde::{Deserialize, Serialize};

use crate::data::fmt_real;
use crate::{Error, Result};

/// Write `bytes` to `path` through a temporary file in the same directory,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| Error::Io { path: path.to_path_buf(), source };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut builder = tempfile::Builder::new();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        builder.permissions(std::fs::Permissions::from_mode(0o644));
    }
    let mut tmp = builder.tempfile_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable artifact");
    out.push(b'\n');
    out
}

/// Mode rule as stored in model files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "lowercase")]
pub enum ModeRuleJson {
    /// Constant mode.
    Fixed(f64),
    /// Mode proportional to current productivity.
    Slope(f64),
}

/// One stage of a model file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageJson {
    /// Laplace scale.
    pub alpha: f64,
    /// Mode rule.
    pub mode_rule: ModeRuleJson,
}

/// Serialized [`CareerModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelJson {
    /// Mean first-year productivity.
    pub lambda0: f64,
    /// `truncate` or `censor`.
    pub boundary_mode: String,
    /// Change points, possibly empty.
    pub change_points: Vec<u32>,
    /// One entry per stage.
    pub stages: Vec<StageJson>,
}

impl From<&CareerModel> for ModelJson {
    fn from(m: &CareerModel) -> Self {
        Self {
            lambda0: m.init().mean(),
            boundary_mode: m.boundary().as_str().to_string(),
            change_points: m.change_points().as_slice().to_vec(),
            stages: m
                .stages()
                .iter()
                .map(|s| StageJson {
                    alpha: s.scale,
                    mode_rule: match s.mode {
                        ModeRule::Fixed(v) => ModeRuleJson::Fixed(v),
                        ModeRule::Slope(v) => ModeRuleJson::Slope(v),
                    },
                })
                .collect(),
        }
    }
}

impl ModelJson {
    /// Validate and convert to a model.
    pub fn to_model(&self) -> Result<CareerModel> {
        let boundary = Boundary::parse(&self.boundary_mode)
            .ok_or_else(|| Error::Invalid(format!("unknown boundary_mode {:?}", self.boundary_mode)))?;
        let stages = self
            .stages
            .iter()
            .map(|s| {
                let rule = match s.mode_rule {
                    ModeRuleJson::Fixed(v) => ModeRule::Fixed(v),
                    ModeRuleJson::Slope(v) => ModeRule::Slope(v),
                };
                StageParams::new(s.alpha, rule)
            })
            .collect::<careerwalk::Result<Vec<_>>>()?;
        Ok(CareerModel::new(
            ExponentialInit::new(self.lambda0)?,
            ChangePointSet::from_slice(&self.change_points)?,
            stages,
            boundary,
        )?)
    }
}

/// Read a model from JSON text: either a bare model object or a fit
/// result carrying one under `model`.
pub fn parse_model(text: &str, file: &str) -> Result<CareerModel> {
    let bad = |e: serde_json::Error| Error::parse(file, e.line() as u64, e.to_string());
    let mut value: serde_json::Value = serde_json::from_str(text).map_err(bad)?;
    if let Some(inner) = value.get_mut("model") {
        value = inner.take();
    }
    let json: ModelJson = serde_json::from_value(value).map_err(bad)?;
    json.to_model()
}

/// Model file contents.
pub fn model_json(model: &CareerModel) -> Vec<u8> {
    to_json(&ModelJson::from(model))
}

#[derive(Serialize)]
struct StageFitJson {
    first_age: u32,
    last_age: Option<u32>,
    pairs: usize,
    log_likelihood: f64,
    initial_alpha: f64,
    degenerate: bool,
}

#[derive(Serialize)]
struct FitJson {
    model: ModelJson,
    selection: &'static str,
    global_mode: f64,
    log_likelihood: Option<f64>,
    aic: Option<f64>,
    parameters: u32,
    trajectories: usize,
    candidates_evaluated: usize,
    candidates_valid: usize,
    stages: Vec<StageFitJson>,
}

/// Fit result file: the selected model plus diagnostics.
pub fn fit_json(fit: &FitResult, trajectories: usize) -> Vec<u8> {
    let best = fit.best_candidate();
    let cps = fit.best_model.change_points();
    to_json(&FitJson {
        model: ModelJson::from(&fit.best_model),
        selection: FitResult::SELECTION_RULE,
        global_mode: fit.global_mode,
        log_likelihood: best.log_likelihood,
        aic: best.aic,
        parameters: best.parameters,
        trajectories,
        candidates_evaluated: fit.candidates.len(),
        candidates_valid: fit.candidates.iter().filter(|c| c.aic.is_some()).count(),
        stages: fit
            .best_stages
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let (first_age, last_age) = cps.stage_range(i);
                StageFitJson {
                    first_age,
                    last_age,
                    pairs: s.pairs,
                    log_likelihood: s.log_likelihood,
                    initial_alpha: s.initial_scale,
                    degenerate: s.degenerate,
                }
            })
            .collect(),
    })
}

struct Table {
    w: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new<const N: usize>(header: [&str; N]) -> Self {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        Self { w }
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) {
        self.w.write_record(fields).expect("in-memory write");
    }

    fn finish(self) -> Vec<u8> {
        self.w.into_inner().expect("in-memory flush")
    }
}

fn opt_real(x: Option<f64>) -> String {
    x.map_or_else(String::new, fmt_real)
}

/// `change_points,loglik,aic,rank`, invalid candidates with empty fields.
pub fn candidates_csv(fit: &FitResult) -> Vec<u8> {
    let mut t = Table::new(["change_points", "loglik", "aic", "rank"]);
    for (c, rank) in fit.candidates.iter().zip(fit.ranks()) {
        t.row([c.change_points.label(), opt_real(c.log_likelihood), opt_real(c.aic), rank.map_or_else(String::new, |r| r.to_string())]);
    }
    t.finish()
}

/// `alpha1,alpha2,n,fraction_canonical,ci_lo,ci_hi`.
pub fn sweep_csv(grid: &SweepGrid) -> Vec<u8> {
    let mut t = Table::new(["alpha1", "alpha2", "n", "fraction_canonical", "ci_lo", "ci_hi"]);
    for c in &grid.cells {
        t.row([
            fmt_real(c.alpha1),
            fmt_real(c.alpha2),
            c.n.to_string(),
            fmt_real(c.fraction.estimate),
            fmt_real(c.fraction.lo),
            fmt_real(c.fraction.hi),
        ]);
    }
    t.finish()
}

/// `person_id,is_canonical,model,breakpoint,slope1,slope2`.
pub fn verdicts_csv<'a>(verdicts: impl IntoIterator<Item = (&'a str, &'a CanonicalVerdict)>) -> Vec<u8> {
    let mut t = Table::new(["person_id", "is_canonical", "model", "breakpoint", "slope1", "slope2"]);
    for (id, v) in verdicts {
        let (model, bp) = match v.best_model {
            BestModel::Linear => ("linear", String::new()),
            BestModel::Piecewise { breakpoint } => ("piecewise", breakpoint.to_string()),
        };
        t.row([id.to_string(), v.is_canonical.to_string(), model.to_string(), bp, fmt_real(v.slope1), opt_real(v.slope2)]);
    }
    t.finish()
}

/// `change_points,count,fraction`, most frequent first.
pub fn bootstrap_frequencies_csv(summary: &BootstrapSummary) -> Vec<u8> {
    let mut t = Table::new(["change_points", "count", "fraction"]);
    for f in &summary.change_point_frequencies {
        t.row([f.change_points.label(), f.count.to_string(), fmt_real(f.fraction)]);
    }
    t.finish()
}

/// `replicate,change_points,lambda0,stage,alpha,mode_rule,mode_value`,
/// one row per replicate stage.
pub fn bootstrap_draws_csv(summary: &BootstrapSummary) -> Vec<u8> {
    let mut t = Table::new(["replicate", "change_points", "lambda0", "stage", "alpha", "mode_rule", "mode_value"]);
    for d in &summary.draws {
        for (i, s) in d.stages.iter().enumerate() {
            let rule = match s.mode {
                ModeRule::Fixed(_) => "fixed",
                ModeRule::Slope(_) => "slope",
            };
            t.row([
                d.replicate.to_string(),
                d.change_points.label(),
                fmt_real(d.lambda0),
                i.to_string(),
                fmt_real(s.scale),
                rule.to_string(),
                fmt_real(s.mode.value()),
            ]);
        }
    }
    t.finish()
}

/// `value,count` for a histogram indexed by value.
pub fn histogram_csv(counts: &[usize]) -> Vec<u8> {
    let mut t = Table::new(["value", "count"]);
    for (v, c) in counts.iter().enumerate() {
        t.row([v.to_string(), c.to_string()]);
    }
    t.finish()
}

/// `person_id,statistic`.
pub fn statistic_csv(ids: &[&str], values: &[f64]) -> Vec<u8> {
    let mut t = Table::new(["person_id", "statistic"]);
    for (id, v) in ids.iter().zip(values) {
        t.row([id.to_string(), fmt_real(*v)]);
    }
    t.finish()
}

/// `year,n,mean,lo,hi`.
pub fn mean_curve_csv(curve: &[YearMean]) -> Vec<u8> {
    let mut t = Table::new(["year", "n", "mean", "lo", "hi"]);
    for y in curve {
        t.row([y.year.to_string(), y.n.to_string(), fmt_real(y.mean), fmt_real(y.lo), fmt_real(y.hi)]);
    }
    t.finish()
}

/// Histogram of small nonnegative integers.
pub fn histogram(values: &[usize]) -> Vec<usize> {
    let mut h = vec![0; values.iter().copied().max().map_or(0, |m| m + 1)];
    for &v in values {
        h[v] += 1;
    }
    h
}

#[derive(Serialize)]
struct Distribution {
    n: usize,
    mean: f64,
    sd: f64,
    min: f64,
    q25: f64,
    median: f64,
    q75: f64,
    max: f64,
}

impl Distribution {
    fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p| if v.is_empty() { f64::NAN } else { quantile_sorted(&v, p) };
        Self {
            n: v.len(),
            mean: math::mean(&v),
            sd: if v.len() > 1 { math::sample_variance(&v).sqrt() } else { f64::NAN },
            min: q(0.0),
            q25: q(0.25),
            median: q(0.5),
            q75: q(0.75),
            max: q(1.0),
        }
    }
}

#[derive(Serialize)]
struct ProportionJson {
    estimate: f64,
    lo: f64,
    hi: f64,
}

impl From<Proportion> for ProportionJson {
    fn from(p: Proportion) -> Self {
        Self { estimate: p.estimate, lo: p.lo, hi: p.hi }
    }
}

#[derive(Serialize)]
struct KsJson {
    statistic: f64,
    p_value: f64,
}

impl From<KsResult> for KsJson {
    fn from(k: KsResult) -> Self {
        Self { statistic: k.statistic, p_value: k.p_value }
    }
}

#[derive(Serialize)]
struct WelchJson {
    t: f64,
    df: f64,
    p_value: f64,
}

#[derive(Serialize)]
struct YearMeanJson {
    year: usize,
    n: usize,
    mean: f64,
    lo: f64,
    hi: f64,
}

impl From<&YearMean> for YearMeanJson {
    fn from(y: &YearMean) -> Self {
        Self { year: y.year, n: y.n, mean: y.mean, lo: y.lo, hi: y.hi }
    }
}

#[derive(Serialize)]
struct EnsembleJson {
    trajectories: usize,
    person_years: usize,
    zero_years: usize,
    zero_rate: ProportionJson,
    peak_year_histogram: Vec<usize>,
    peak_ties: usize,
    zeros_per_career_histogram: Vec<usize>,
    within_sd: Distribution,
    cumulative: Distribution,
    annual_values: Distribution,
    mean_curve: Vec<YearMeanJson>,
}

impl EnsembleJson {
    fn new(s: &EnsembleSummary, zero_rate: Proportion) -> Self {
        Self {
            trajectories: s.trajectories,
            person_years: s.person_years(),
            zero_years: s.zero_years,
            zero_rate: zero_rate.into(),
            peak_year_histogram: histogram(&s.peak_years),
            peak_ties: s.peak_ties,
            zeros_per_career_histogram: s.zeros_histogram.clone(),
            within_sd: Distribution::of(&s.within_sd),
            cumulative: Distribution::of(&s.cumulative),
            annual_values: Distribution::of(&s.annual_values),
            mean_curve: s.mean_curve.iter().map(YearMeanJson::from).collect(),
        }
    }
}

#[derive(Serialize)]
struct OptionsJson {
    full_only: bool,
    full_length: usize,
    zero_threshold: f64,
    cumulative_year: usize,
    bootstrap_replicates: usize,
    level: f64,
    seed: u64,
}

#[derive(Serialize)]
struct ComparisonJson {
    options: OptionsJson,
    peak_year_ks: KsJson,
    within_sd_ks: KsJson,
    cumulative_welch: WelchJson,
    max_mean_difference: f64,
    a: EnsembleJson,
    b: EnsembleJson,
}

/// Comparison report file.
pub fn comparison_json(r: &ComparisonReport, opts: &SummaryOptions) -> Vec<u8> {
    to_json(&ComparisonJson {
        options: OptionsJson {
            full_only: opts.full_only,
            full_length: opts.full_length,
            zero_threshold: opts.zero_threshold,
            cumulative_year: opts.cumulative_year,
            bootstrap_replicates: opts.bootstrap_replicates,
            level: opts.level,
            seed: opts.seed,
        },
        peak_year_ks: r.peak_year_ks.into(),
        within_sd_ks: r.within_sd_ks.into(),
        cumulative_welch: WelchJson { t: r.cumulative_welch.t, df: r.cumulative_welch.df, p_value: r.cumulative_welch.p_value },
        max_mean_difference: r.max_mean_difference,
        a: EnsembleJson::new(&r.a, r.zero_rate_a),
        b: EnsembleJson::new(&r.b, r.zero_rate_b),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> CareerModel {
        CareerModel::new(
            ExponentialInit::new(4.65).unwrap(),
            ChangePointSet::new(&[4, 7, 13]).unwrap(),
            vec![
                StageParams::new(4.5, ModeRule::Slope(-0.2)).unwrap(),
                StageParams::new(4.3, ModeRule::Slope(-0.1)).unwrap(),
                StageParams::new(3.8, ModeRule::Fixed(-1.0)).unwrap(),
                StageParams::new(0.1 + 0.2, ModeRule::Slope(1e-17)).unwrap(),
            ],
            Boundary::Censor,
        )
        .unwrap()
    }

    #[test]
    fn model_json_round_trips_exactly() {
        let m = model();
        let text = String::from_utf8(model_json(&m)).unwrap();
        assert!(text.contains("\"change_points\""));
        assert_eq!(parse_model(&text, "m.json").unwrap(), m);
        let wrapped = format!("{{\"model\": {text}, \"aic\": 1.0}}");
        assert_eq!(parse_model(&wrapped, "m.json").unwrap(), m);
    }

    #[test]
    fn model_json_schema() {
        let text = r#"{"lambda0": 2, "boundary_mode": "truncate", "change_points": [],
            "stages": [{"alpha": 1.5, "mode_rule": {"type": "fixed", "value": -1}}]}"#;
        let m = parse_model(text, "m").unwrap();
        assert!(m.change_points().is_empty());
        assert_eq!(m.stages()[0].mode, ModeRule::Fixed(-1.0));
        let bad_boundary = text.replace("truncate", "reflect");
        assert!(matches!(parse_model(&bad_boundary, "m"), Err(Error::Invalid(_))));
        let wrong_count = text.replace("[]", "[3]");
        assert!(parse_model(&wrong_count, "m").is_err());
        assert!(matches!(parse_model("{", "m"), Err(Error::Parse { .. })));
    }

    #[test]
    fn histogram_counts() {
        assert_eq!(histogram(&[0, 2, 2, 5]), vec![1, 0, 2, 0, 0, 1]);
        assert!(histogram(&[]).is_empty());
        assert_eq!(String::from_utf8(histogram_csv(&[1, 0])).unwrap(), "value,count\n0,1\n1,0\n");
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            assert_eq!(std::fs::metadata(&p).unwrap().permissions().mode() & 0o777, 0o644);
        }
    }
}
