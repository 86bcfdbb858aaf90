//! Mission plan files.
//!
//! ```text
//! [mission]
//! site = site.conf
//! seed = 7
//! classifier = baseline
//! telemetry = 127.0.0.1:7700
//!
//! [target north]
//! position = 1.5 2.0
//! depths = 2 6
//! assays = protein,carbohydrate,ammonia
//!
//! [rock r1]
//! id = shale-1
//! ```

use std::collections::BTreeSet;

use thiserror::Error;

use crate::assay::AssayKind;
use crate::conf::{ConfError, Document, Override, Section};
use crate::geom::Point2;
use crate::life::BASELINE;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error(transparent)]
    Conf(#[from] ConfError),
    #[error("line {line}: {message}")]
    Semantic { line: usize, message: String },
}

fn semantic(line: usize, message: impl Into<String>) -> PlanError {
    PlanError::Semantic {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleTarget {
    pub name: String,
    pub position: Point2,
    pub depths_cm: Vec<f64>,
    pub assays: Vec<AssayKind>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RockTarget {
    pub name: String,
    pub rock_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionPlan {
    pub site: Option<String>,
    pub seed: u64,
    pub classifier_id: String,
    pub telemetry: Option<String>,
    pub targets: Vec<SampleTarget>,
    pub rocks: Vec<RockTarget>,
    /// Keys given more than once; the last value was used.
    pub warnings: Vec<Override>,
}

fn parse_assay_list(s: &Section) -> Result<Vec<AssayKind>, PlanError> {
    let e = s.require("assays")?;
    let mut out = Vec::new();
    for name in e.value.split(',').map(str::trim) {
        if name.is_empty() {
            continue;
        }
        let kind: AssayKind = name
            .parse()
            .map_err(|err| semantic(e.line, format!("{err}")))?;
        if out.contains(&kind) {
            return Err(semantic(e.line, format!("assay `{name}` listed twice")));
        }
        out.push(kind);
    }
    if out.is_empty() {
        return Err(semantic(e.line, "target needs at least one assay"));
    }
    Ok(out)
}

fn parse_target(s: &Section) -> Result<SampleTarget, PlanError> {
    s.check_keys(&["position", "depths", "assays"])?;
    let name = s
        .name
        .clone()
        .ok_or_else(|| semantic(s.line, "[target] needs a name"))?;
    let [x, y] = s.require("position")?.parse_array::<f64, 2>()?;
    if !x.is_finite() || !y.is_finite() {
        return Err(semantic(
            s.require("position")?.line,
            "position must be finite",
        ));
    }
    let de = s.require("depths")?;
    let depths_cm: Vec<f64> = de.parse_list()?;
    if depths_cm.is_empty() {
        return Err(semantic(de.line, "target needs at least one depth"));
    }
    if depths_cm.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
        return Err(semantic(de.line, "depths must be positive"));
    }
    Ok(SampleTarget {
        name,
        position: Point2::new(x, y),
        depths_cm,
        assays: parse_assay_list(s)?,
    })
}

pub fn parse_plan(text: &str) -> Result<MissionPlan, PlanError> {
    let doc = Document::parse(text)?;
    doc.check_kinds(&["mission", "target", "rock"])?;
    let mut plan = MissionPlan {
        site: None,
        seed: 0,
        classifier_id: BASELINE.to_string(),
        telemetry: None,
        targets: Vec::new(),
        rocks: Vec::new(),
        warnings: Vec::new(),
    };
    if let Some(m) = doc.singleton("mission")? {
        if m.name.is_some() {
            return Err(semantic(m.line, "[mission] takes no name"));
        }
        m.check_keys(&["site", "seed", "classifier", "telemetry"])?;
        plan.site = m.get("site")?;
        plan.seed = m.get_or("seed", 0)?;
        plan.classifier_id = m.get_or("classifier", plan.classifier_id)?;
        plan.telemetry = m.get("telemetry")?;
        if let Some(e) = m.last("telemetry") {
            if !e.value.contains(':') {
                return Err(semantic(e.line, "telemetry must be host:port"));
            }
        }
        plan.warnings.extend(m.overrides(&[]));
    }
    let mut names = BTreeSet::new();
    for s in &doc.sections {
        match s.kind.as_str() {
            "target" => {
                let t = parse_target(s)?;
                if !names.insert(t.name.clone()) {
                    return Err(semantic(s.line, format!("duplicate name `{}`", t.name)));
                }
                plan.warnings.extend(s.overrides(&[]));
                plan.targets.push(t);
            }
            "rock" => {
                s.check_keys(&["id"])?;
                let name = s
                    .name
                    .clone()
                    .ok_or_else(|| semantic(s.line, "[rock] needs a name"))?;
                if !names.insert(name.clone()) {
                    return Err(semantic(s.line, format!("duplicate name `{name}`")));
                }
                plan.warnings.extend(s.overrides(&[]));
                plan.rocks.push(RockTarget {
                    name,
                    rock_id: s.req("id")?,
                });
            }
            _ => {}
        }
    }
    if plan.targets.is_empty() && plan.rocks.is_empty() {
        return Err(semantic(0, "plan has no targets or rocks"));
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[target a]\nposition = 1 1\ndepths = 6\nassays = protein\n";

    #[test]
    fn minimal_plan() {
        let p = parse_plan(MINIMAL).unwrap();
        assert_eq!(p.targets.len(), 1);
        assert_eq!(p.targets[0].assays, vec![AssayKind::Protein]);
        assert_eq!(p.classifier_id, BASELINE);
        assert_eq!(p.seed, 0);
        assert!(p.warnings.is_empty());
    }

    #[test]
    fn parse_is_idempotent() {
        assert_eq!(parse_plan(MINIMAL), parse_plan(MINIMAL));
    }

    #[test]
    fn lipid_is_not_an_assay() {
        let text = MINIMAL.replace("protein", "protein, lipid");
        assert!(matches!(
            parse_plan(&text),
            Err(PlanError::Semantic { line: 4, .. })
        ));
    }

    #[test]
    fn duplicate_seed_is_last_wins_with_warning() {
        let text = format!("[mission]\nseed = 1\nseed = 9\n{MINIMAL}");
        let p = parse_plan(&text).unwrap();
        assert_eq!(p.seed, 9);
        assert_eq!(p.warnings.len(), 1);
        assert_eq!(p.warnings[0].key, "seed");
        assert_eq!(p.warnings[0].line, 2);
    }

    #[test]
    fn semantic_errors() {
        assert!(parse_plan("[mission]\nseed = 1\n").is_err());
        assert!(parse_plan(&MINIMAL.replace("depths = 6", "depths = 0")).is_err());
        assert!(parse_plan(&MINIMAL.replace("depths = 6", "depths =")).is_err());
        assert!(parse_plan(&MINIMAL.replace("protein", "")).is_err());
        assert!(parse_plan(&MINIMAL.replace("protein", "protein,protein")).is_err());
        assert!(parse_plan(&format!("{MINIMAL}[rock a]\nid = x\n")).is_err());
        assert!(matches!(
            parse_plan(&format!("{MINIMAL}[drill]\n")),
            Err(PlanError::Conf(ConfError::UnknownSection { .. }))
        ));
    }

    #[test]
    fn all_keys() {
        let text =
            "[mission]\nsite = s.conf\nseed = 42\nclassifier = other\ntelemetry = localhost:9\n\
                    [target t]\nposition = 2 3\ndepths = 2 6\nassays = ammonia , carbohydrate\n\
                    [rock r]\nid = basalt-1\n";
        let p = parse_plan(text).unwrap();
        assert_eq!(p.site.as_deref(), Some("s.conf"));
        assert_eq!(p.seed, 42);
        assert_eq!(p.classifier_id, "other");
        assert_eq!(p.telemetry.as_deref(), Some("localhost:9"));
        assert_eq!(p.targets[0].depths_cm, vec![2.0, 6.0]);
        assert_eq!(
            p.targets[0].assays,
            vec![AssayKind::Ammonia, AssayKind::Carbohydrate]
        );
        assert_eq!(p.rocks[0].rock_id, "basalt-1");
    }
}
