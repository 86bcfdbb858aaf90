//! Mission summaries: rendering, reading them back from a log, and
//! replaying a log to recompute verdicts and duty utilisation.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::assay::{AssayKind, AssayResult};
use crate::conf::Num;
use crate::life::{verdict_from_results, LifeClass, RockType};
use crate::mechanism::{DutyBudget, Interval};

use super::log::{parse_log, LogError, LogRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissionStatus {
    Complete,
    Aborted,
}

impl MissionStatus {
    pub fn name(&self) -> &'static str {
        match self {
            MissionStatus::Complete => "complete",
            MissionStatus::Aborted => "aborted",
        }
    }
}

impl FromStr for MissionStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "complete" => Ok(MissionStatus::Complete),
            "aborted" => Ok(MissionStatus::Aborted),
            other => Err(format!("unknown status `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetLine {
    pub name: String,
    /// `None` when the target was skipped.
    pub verdict: Option<LifeClass>,
    pub contaminated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssayLine {
    pub target: String,
    pub depth_cm: f64,
    pub kind: AssayKind,
    pub detected: bool,
    pub bin: usize,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RockLine {
    pub name: String,
    pub rock_id: String,
    /// `None` when the rock could not be classified.
    pub rock_type: Option<RockType>,
    pub fossil: bool,
    pub classifier: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DutyLine {
    pub actuator: String,
    pub on_ms: u64,
    pub peak_window_ms: u64,
    pub budget_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub targets: Vec<TargetLine>,
    pub assays: Vec<AssayLine>,
    pub rocks: Vec<RockLine>,
    pub duty: Vec<DutyLine>,
    pub status: MissionStatus,
}

impl Summary {
    /// Machine-readable lines, one fact per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for t in &self.targets {
            let verdict = t.verdict.map_or("skipped", |v| v.name());
            let _ = writeln!(
                out,
                "target name={} verdict={verdict} contaminated={}",
                t.name, t.contaminated
            );
        }
        for a in &self.assays {
            let _ = writeln!(
                out,
                "assay target={} depth_cm={} kind={} detected={} bin={} elapsed_ms={}",
                a.target,
                Num(a.depth_cm),
                a.kind,
                a.detected,
                a.bin,
                a.elapsed_ms
            );
        }
        for r in &self.rocks {
            let _ = writeln!(
                out,
                "rock name={} id={} type={} fossil={} classifier={}",
                r.name,
                r.rock_id,
                r.rock_type.map_or("error", |t| t.name()),
                r.fossil,
                r.classifier
            );
        }
        for d in &self.duty {
            let _ = writeln!(
                out,
                "duty actuator={} on_ms={} peak_window_ms={} budget_ms={}",
                d.actuator, d.on_ms, d.peak_window_ms, d.budget_ms
            );
        }
        let _ = writeln!(out, "status value={}", self.status.name());
        out
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

fn inconsistent(rec: &LogRecord, message: impl Into<String>) -> LogError {
    LogError::Inconsistent {
        line: rec.seq as usize + 1,
        message: message.into(),
    }
}

fn field<T: FromStr>(rec: &LogRecord, key: &str) -> Result<T, LogError> {
    let raw = rec.get(key).ok_or_else(|| LogError::Malformed {
        line: rec.seq as usize + 1,
        message: format!("`{}` record lacks `{key}`", rec.event),
    })?;
    raw.parse().map_err(|_| LogError::Malformed {
        line: rec.seq as usize + 1,
        message: format!("bad `{key}` value `{raw}`"),
    })
}

fn framing(records: &[LogRecord]) -> Result<(), LogError> {
    let first = records.first().ok_or(LogError::Truncated { line: 0 })?;
    if first.event != "mission_start" {
        return Err(inconsistent(first, "log must open with mission_start"));
    }
    let last = records.last().expect("non-empty");
    if last.event != "mission_end" {
        return Err(LogError::Truncated {
            line: records.len(),
        });
    }
    let claimed: usize = field(last, "records")?;
    if claimed != records.len() {
        return Err(inconsistent(last, "record count does not match"));
    }
    Ok(())
}

/// Target, assay and rock lines plus status, shared by both readers.
struct Reader {
    summary: Summary,
    /// Assays of each target's current attempt.
    pending: BTreeMap<String, Vec<(AssayLine, AssayResult)>>,
}

impl Reader {
    fn new() -> Self {
        Self {
            summary: Summary {
                targets: Vec::new(),
                assays: Vec::new(),
                rocks: Vec::new(),
                duty: Vec::new(),
                status: MissionStatus::Aborted,
            },
            pending: BTreeMap::new(),
        }
    }

    /// Consume one record. Returns the pending assays when a verdict record
    /// closes a target.
    fn feed(&mut self, rec: &LogRecord) -> Result<Option<Vec<AssayResult>>, LogError> {
        match rec.event.as_str() {
            "target_start" => {
                self.pending.insert(field(rec, "target")?, Vec::new());
            }
            "assay" => {
                let target: String = field(rec, "target")?;
                let line = AssayLine {
                    target: target.clone(),
                    depth_cm: field(rec, "depth_cm")?,
                    kind: field(rec, "kind")?,
                    detected: field(rec, "detected")?,
                    bin: field(rec, "bin")?,
                    elapsed_ms: field(rec, "elapsed_ms")?,
                };
                let result = AssayResult {
                    kind: line.kind,
                    detected: line.detected,
                    bin_index: line.bin,
                    elapsed_ms: line.elapsed_ms,
                    contaminated_input: field(rec, "contaminated")?,
                };
                self.pending
                    .get_mut(&target)
                    .ok_or_else(|| inconsistent(rec, "assay outside a target attempt"))?
                    .push((line, result));
            }
            "verdict" => {
                let name: String = field(rec, "target")?;
                let done = self
                    .pending
                    .remove(&name)
                    .ok_or_else(|| inconsistent(rec, "verdict outside a target attempt"))?;
                self.summary.targets.push(TargetLine {
                    name,
                    verdict: Some(field(rec, "verdict")?),
                    contaminated: field(rec, "contaminated")?,
                });
                let (lines, results): (Vec<_>, Vec<_>) = done.into_iter().unzip();
                self.summary.assays.extend(lines);
                return Ok(Some(results));
            }
            "target_skipped" => {
                let name: String = field(rec, "target")?;
                self.pending.remove(&name);
                self.summary.targets.push(TargetLine {
                    name,
                    verdict: None,
                    contaminated: false,
                });
            }
            "rock" | "rock_error" => {
                let ok = rec.event == "rock";
                self.summary.rocks.push(RockLine {
                    name: field(rec, "name")?,
                    rock_id: field(rec, "id")?,
                    rock_type: if ok { Some(field(rec, "type")?) } else { None },
                    fossil: if ok { field(rec, "fossil")? } else { false },
                    classifier: field(rec, "classifier")?,
                });
            }
            "mission_end" => {
                self.summary.status = field(rec, "status")?;
            }
            _ => {}
        }
        Ok(None)
    }
}

fn logged_duty(rec: &LogRecord) -> Result<DutyLine, LogError> {
    Ok(DutyLine {
        actuator: field(rec, "actuator")?,
        on_ms: field(rec, "on_ms")?,
        peak_window_ms: field(rec, "peak_window_ms")?,
        budget_ms: field(rec, "budget_ms")?,
    })
}

/// The summary as recorded in the log: logged verdicts and duty lines.
pub fn summary_from_log(text: &str) -> Result<Summary, LogError> {
    let records = parse_log(text)?;
    framing(&records)?;
    let mut reader = Reader::new();
    for rec in &records {
        reader.feed(rec)?;
        if rec.event == "duty" {
            reader.summary.duty.push(logged_duty(rec)?);
        }
    }
    Ok(reader.summary)
}

/// Recompute the summary from primitive records: verdicts from assay
/// outcomes and duty utilisation from actuator intervals. Any disagreement
/// with what the log itself claims is an error.
pub fn replay(text: &str) -> Result<Summary, LogError> {
    let records = parse_log(text)?;
    framing(&records)?;
    let start = &records[0];
    let budget = DutyBudget {
        window_ms: field(start, "window_ms")?,
        max_on_ms: field(start, "max_on_ms")?,
    };
    let mut reader = Reader::new();
    let mut intervals: BTreeMap<String, Vec<Interval>> = BTreeMap::new();
    for rec in &records {
        if let Some(results) = reader.feed(rec)? {
            let recomputed = verdict_from_results(&results);
            let logged = reader.summary.targets.last().expect("just pushed");
            if logged.verdict != Some(recomputed.class)
                || logged.contaminated != recomputed.contaminated_evidence
            {
                return Err(inconsistent(
                    rec,
                    format!(
                        "logged verdict {:?} disagrees with assays ({})",
                        logged.verdict, recomputed.class
                    ),
                ));
            }
        }
        match rec.event.as_str() {
            "actuator_on" => {
                let iv = Interval::new(field(rec, "start_ms")?, field(rec, "end_ms")?);
                intervals
                    .entry(field(rec, "actuator")?)
                    .or_default()
                    .push(iv);
            }
            "duty" => {
                let logged = logged_duty(rec)?;
                let ivs = intervals.remove(&logged.actuator).unwrap_or_default();
                let line = DutyLine {
                    on_ms: ivs.iter().map(Interval::len).sum(),
                    peak_window_ms: budget.peak_on_time(&ivs),
                    budget_ms: budget.max_on_ms,
                    actuator: logged.actuator.clone(),
                };
                if line != logged {
                    return Err(inconsistent(
                        rec,
                        format!("duty for `{}` does not match intervals", line.actuator),
                    ));
                }
                reader.summary.duty.push(line);
            }
            _ => {}
        }
    }
    if let Some(name) = intervals.keys().next() {
        return Err(LogError::Inconsistent {
            line: records.len(),
            message: format!("no duty record for `{name}`"),
        });
    }
    Ok(reader.summary)
}
