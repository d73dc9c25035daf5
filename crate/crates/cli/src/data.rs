//! Trajectory ingestion: long CSV files, raw publication tables, per-year
//! adjustment and cohort filtering.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use careerwalk::model::Trajectory;

use crate::{Error, Result};

/// Largest career age accepted from a file.
pub const MAX_AGE: u32 = 10_000;

const TRAJECTORY_HEADER: [&str; 3] = ["person_id", "career_year", "q"];
const PUBLICATION_HEADER: [&str; 4] = ["person_id", "calendar_year", "career_age", "count"];

/// Shortest decimal form that reads back to the same value.
pub fn fmt_real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else {
        String::new()
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn file_name(path: &Path) -> String {
    path.display().to_string()
}

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input)
}

fn csv_error(file: &str, err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line());
    Error::parse(file, line, err.to_string())
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, file: &str, allowed: &[&[&str]]) -> Result<usize> {
    let header = rdr.headers().map_err(|e| csv_error(file, e))?;
    let got: Vec<&str> = header.iter().collect();
    allowed
        .iter()
        .find(|h| **h == got.as_slice())
        .map(|h| h.len())
        .ok_or_else(|| Error::parse(file, 1, format!("expected header {}, found {}", allowed[0].join(","), got.join(","))))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str, file: &str, line: u64) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse().map_err(|_| Error::parse(file, line, format!("invalid {name} {raw:?}")))
}

fn real(rec: &csv::StringRecord, i: usize, name: &str, file: &str, line: u64) -> Result<f64> {
    let v: f64 = field(rec, i, name, file, line)?;
    if !v.is_finite() {
        return Err(Error::parse(file, line, format!("{name} must be finite")));
    }
    Ok(v)
}

fn person(rec: &csv::StringRecord, file: &str, line: u64) -> Result<String> {
    match rec.get(0) {
        Some(id) if !id.is_empty() => Ok(id.to_string()),
        _ => Err(Error::parse(file, line, "empty person_id")),
    }
}

fn age(rec: &csv::StringRecord, i: usize, name: &str, file: &str, line: u64) -> Result<u32> {
    let a: u32 = field(rec, i, name, file, line)?;
    if a > MAX_AGE {
        return Err(Error::parse(file, line, format!("{name} {a} exceeds {MAX_AGE}")));
    }
    Ok(a)
}

/// Per-person rows keyed by age, in order of first appearance.
struct Grouped<V> {
    order: Vec<String>,
    rows: HashMap<String, BTreeMap<u32, (V, u64)>>,
}

impl<V> Grouped<V> {
    fn new() -> Self {
        Self { order: Vec::new(), rows: HashMap::new() }
    }

    fn insert(&mut self, id: String, age: u32, value: V, file: &str, line: u64) -> Result<()> {
        if !self.rows.contains_key(&id) {
            self.order.push(id.clone());
        }
        let entry = self.rows.entry(id.clone()).or_default();
        if let Some((_, first)) = entry.get(&age) {
            return Err(Error::parse(file, line, format!("duplicate ({id}, {age}); first seen on line {first}")));
        }
        entry.insert(age, (value, line));
        Ok(())
    }

    fn into_people(mut self) -> impl Iterator<Item = (String, BTreeMap<u32, (V, u64)>)> {
        self.order.into_iter().map(move |id| {
            let rows = self.rows.remove(&id).expect("grouped person");
            (id, rows)
        })
    }
}

fn dense<V>(rows: &BTreeMap<u32, (V, u64)>, value: impl Fn(&V) -> f64) -> Vec<f64> {
    let len = rows.keys().next_back().map_or(0, |&a| a as usize + 1);
    let mut q = vec![0.0; len];
    for (&a, (v, _)) in rows {
        q[a as usize] = value(v);
    }
    q
}

/// Parse a long trajectory CSV (`person_id,career_year,q`).
///
/// Missing ages up to each person's last row become explicit zeros.
pub fn read_trajectories<R: Read>(input: R, file: &str) -> Result<Vec<Trajectory>> {
    let mut rdr = csv_reader(input);
    check_header(&mut rdr, file, &[&TRAJECTORY_HEADER])?;
    let mut grouped = Grouped::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(file, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = person(&rec, file, line)?;
        let a = age(&rec, 1, "career_year", file, line)?;
        let q = real(&rec, 2, "q", file, line)?;
        if q < 0.0 {
            return Err(Error::parse(file, line, format!("negative q {q}")));
        }
        grouped.insert(id, a, q, file, line)?;
    }
    grouped.into_people().map(|(id, rows)| Ok(Trajectory::new(id, dense(&rows, |&q| q))?)).collect()
}

/// Load a long trajectory CSV from disk.
pub fn load_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    read_trajectories(open(path)?, &file_name(path))
}

/// Write trajectories in the long CSV format, one row per person-age.
pub fn write_trajectories<W: Write>(out: W, trajs: &[Trajectory]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Invalid(format!("writing trajectories: {e}"));
    w.write_record(TRAJECTORY_HEADER).map_err(io)?;
    for t in trajs {
        for (a, q) in t.q.iter().enumerate() {
            w.write_record([t.person_id.as_str(), &a.to_string(), &fmt_real(*q)]).map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::Invalid(format!("writing trajectories: {e}")))
}

/// One row of a raw publication table.
#[derive(Debug, Clone, PartialEq)]
pub struct PublicationRow {
    /// Opaque person identifier.
    pub person_id: String,
    /// Calendar year of the count.
    pub calendar_year: i32,
    /// Years since the first faculty appointment.
    pub career_age: u32,
    /// Papers that year, raw or pre-adjusted.
    pub count: f64,
    line: u64,
}

/// Raw publication counts per person and year.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PublicationTable {
    /// Rows in file order.
    pub rows: Vec<PublicationRow>,
}

impl PublicationTable {
    /// Build a table from in-memory rows, validated as if read from a file.
    pub fn from_rows(rows: impl IntoIterator<Item = (String, i32, u32, f64)>) -> Result<Self> {
        let mut table = PublicationTable::default();
        for (i, (person_id, calendar_year, career_age, count)) in rows.into_iter().enumerate() {
            let row = PublicationRow { person_id, calendar_year, career_age, count, line: i as u64 + 2 };
            if !(count >= 0.0) || !count.is_finite() {
                return Err(Error::parse("<rows>", row.line, format!("invalid count {count}")));
            }
            table.rows.push(row);
        }
        table.validate("<rows>")?;
        Ok(table)
    }

    fn validate(&self, file: &str) -> Result<()> {
        let mut grouped = Grouped::new();
        let mut starts: HashMap<&str, (i32, u64)> = HashMap::new();
        for r in &self.rows {
            grouped.insert(r.person_id.clone(), r.career_age, (), file, r.line)?;
            let start = r.calendar_year - r.career_age as i32;
            match starts.get(r.person_id.as_str()) {
                Some(&(s, first)) if s != start => {
                    return Err(Error::parse(
                        file,
                        r.line,
                        format!("career_age inconsistent with line {first} for {}", r.person_id),
                    ))
                }
                Some(_) => {}
                None => {
                    starts.insert(&r.person_id, (start, r.line));
                }
            }
        }
        Ok(())
    }
}

/// Parse a publication CSV (`person_id,calendar_year,career_age,count`).
pub fn read_publications<R: Read>(input: R, file: &str) -> Result<PublicationTable> {
    let mut rdr = csv_reader(input);
    check_header(&mut rdr, file, &[&PUBLICATION_HEADER])?;
    let mut table = PublicationTable::default();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(file, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let count = real(&rec, 3, "count", file, line)?;
        if count < 0.0 {
            return Err(Error::parse(file, line, format!("negative count {count}")));
        }
        table.rows.push(PublicationRow {
            person_id: person(&rec, file, line)?,
            calendar_year: field(&rec, 1, "calendar_year", file, line)?,
            career_age: age(&rec, 2, "career_age", file, line)?,
            count,
            line,
        });
    }
    table.validate(file)?;
    Ok(table)
}

/// Load a publication CSV from disk.
pub fn load_publications(path: &Path) -> Result<PublicationTable> {
    read_publications(open(path)?, &file_name(path))
}

/// Linear adjustment for one calendar year.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adjustment {
    /// Factor applied to the count.
    pub multiplier: f64,
    /// Added to nonzero counts only.
    pub offset: f64,
}

impl Adjustment {
    /// Adjusted productivity for a raw count. Zero stays zero.
    pub fn apply(&self, count: f64) -> f64 {
        if count == 0.0 {
            0.0
        } else {
            self.multiplier * count + self.offset
        }
    }
}

/// Per-calendar-year adjustments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdjustmentTable {
    /// Adjustment by calendar year.
    pub years: BTreeMap<i32, Adjustment>,
}

/// Parse an adjustment CSV (`year,multiplier[,offset]`).
pub fn read_adjustments<R: Read>(input: R, file: &str) -> Result<AdjustmentTable> {
    let mut rdr = csv_reader(input);
    let width = check_header(&mut rdr, file, &[&["year", "multiplier", "offset"], &["year", "multiplier"]])?;
    let mut table = AdjustmentTable::default();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(file, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let year: i32 = field(&rec, 0, "year", file, line)?;
        let multiplier = real(&rec, 1, "multiplier", file, line)?;
        if multiplier <= 0.0 {
            return Err(Error::parse(file, line, format!("multiplier must be positive, got {multiplier}")));
        }
        let offset = if width == 3 { real(&rec, 2, "offset", file, line)? } else { 0.0 };
        if table.years.insert(year, Adjustment { multiplier, offset }).is_some() {
            return Err(Error::parse(file, line, format!("duplicate year {year}")));
        }
    }
    Ok(table)
}

/// Load an adjustment CSV from disk.
pub fn load_adjustments(path: &Path) -> Result<AdjustmentTable> {
    read_adjustments(open(path)?, &file_name(path))
}

/// A career ready for cohort filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct Career {
    /// Adjusted productivity by career age.
    pub trajectory: Trajectory,
    /// Raw counts by career age, when known.
    pub raw: Option<Vec<f64>>,
    /// Calendar year of career age 0, when known.
    pub start_year: Option<i32>,
}

impl Career {
    /// A career known only through its adjusted trajectory.
    pub fn adjusted_only(trajectory: Trajectory) -> Self {
        Self { trajectory, raw: None, start_year: None }
    }
}

/// Adjust every count by its calendar year's entry and assemble careers.
pub fn apply_adjustment(pubs: &PublicationTable, adj: &AdjustmentTable) -> Result<Vec<Career>> {
    let mut grouped = Grouped::new();
    let mut starts = HashMap::new();
    for r in &pubs.rows {
        let a = adj
            .years
            .get(&r.calendar_year)
            .ok_or_else(|| Error::Invalid(format!("no adjustment for calendar year {}", r.calendar_year)))?;
        let q = a.apply(r.count);
        if q < 0.0 {
            return Err(Error::Invalid(format!(
                "adjusted value {q} for {} in {} is negative",
                r.person_id, r.calendar_year
            )));
        }
        starts.entry(r.person_id.clone()).or_insert(r.calendar_year - r.career_age as i32);
        grouped.insert(r.person_id.clone(), r.career_age, (r.count, q), "<publications>", r.line)?;
    }
    grouped
        .into_people()
        .map(|(id, rows)| {
            Ok(Career {
                raw: Some(dense(&rows, |v| v.0)),
                start_year: starts.get(&id).copied(),
                trajectory: Trajectory::new(id, dense(&rows, |v| v.1))?,
            })
        })
        .collect()
}

/// Cohort inclusion thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InclusionRules {
    /// Papers required in the early window.
    pub min_early_pubs: f64,
    /// Number of leading career ages counted as early.
    pub early_window: usize,
    /// Earliest admissible start year.
    pub min_start_year: i32,
    /// Ages kept per trajectory.
    pub span: usize,
    /// Use adjusted values for the early check when raw counts are missing.
    pub early_check_on_adjusted: bool,
}

impl Default for InclusionRules {
    fn default() -> Self {
        Self { min_early_pubs: 3.0, early_window: 5, min_start_year: 1980, span: 21, early_check_on_adjusted: false }
    }
}

/// Outcome of [`filter_inclusion`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Inclusion {
    /// Careers meeting the thresholds, cut to the span.
    pub included: Vec<Trajectory>,
    /// Included careers observed for the whole span.
    pub full: Vec<Trajectory>,
    /// Notes about relaxed checks.
    pub warnings: Vec<String>,
}

/// Apply the early-productivity and start-year rules.
pub fn filter_inclusion(careers: &[Career], rules: &InclusionRules) -> Result<Inclusion> {
    let mut out = Inclusion::default();
    let (mut adjusted_early, mut unknown_start) = (false, false);
    for c in careers {
        let early: &[f64] = match (&c.raw, rules.early_check_on_adjusted) {
            (Some(raw), _) => raw,
            (None, true) => {
                adjusted_early = true;
                &c.trajectory.q
            }
            (None, false) => {
                return Err(Error::Invalid(format!(
                    "raw counts unavailable for {}; enable the adjusted early check",
                    c.trajectory.person_id
                )))
            }
        };
        let early_total: f64 = early.iter().take(rules.early_window).sum();
        let start_ok = match c.start_year {
            Some(y) => y >= rules.min_start_year,
            None => {
                unknown_start = true;
                true
            }
        };
        if early_total < rules.min_early_pubs || !start_ok {
            continue;
        }
        let q = &c.trajectory.q;
        let kept = Trajectory::new(c.trajectory.person_id.clone(), q[..q.len().min(rules.span)].to_vec())?;
        if q.len() >= rules.span {
            out.full.push(kept.clone());
        }
        out.included.push(kept);
    }
    if adjusted_early {
        out.warnings.push("early-productivity check used adjusted values".to_string());
    }
    if unknown_start {
        out.warnings.push("start year unknown for some careers; start-year rule not applied to them".to_string());
    }
    Ok(out)
}
