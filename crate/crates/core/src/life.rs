//! Life verdicts from assay outcomes, and rock classification behind a
//! registry of named classifiers.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::assay::{AssayKind, AssayResult};
use crate::conf::{ConfError, Section};
use crate::sensors::ImageCapture;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LifeClass {
    Extant,
    Extinct,
    NoPresenceOfLife,
}

impl LifeClass {
    pub fn name(&self) -> &'static str {
        match self {
            LifeClass::Extant => "Extant",
            LifeClass::Extinct => "Extinct",
            LifeClass::NoPresenceOfLife => "NPL",
        }
    }
}

impl fmt::Display for LifeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LifeClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Extant" => Ok(LifeClass::Extant),
            "Extinct" => Ok(LifeClass::Extinct),
            "NPL" => Ok(LifeClass::NoPresenceOfLife),
            other => Err(format!("unknown verdict `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LifeVerdict {
    pub class: LifeClass,
    pub contaminated_evidence: bool,
}

/// Three-level decision tree: protein means extant life; carbohydrate
/// without protein means extinct life; ammonia alone is inconclusive and
/// counts as no life.
pub fn classify_life(protein: bool, carbohydrate: bool, _ammonia: bool) -> LifeClass {
    if protein {
        LifeClass::Extant
    } else if carbohydrate {
        LifeClass::Extinct
    } else {
        LifeClass::NoPresenceOfLife
    }
}

/// Combine any number of assay results. An analyte counts as present if any
/// result for it detected it; assays that were not run count as absent.
pub fn verdict_from_results<'a>(results: impl IntoIterator<Item = &'a AssayResult>) -> LifeVerdict {
    let mut found = BTreeMap::new();
    let mut contaminated = false;
    for r in results {
        *found.entry(r.kind).or_insert(false) |= r.detected;
        contaminated |= r.contaminated_input;
    }
    let has = |k| found.get(&k).copied().unwrap_or(false);
    LifeVerdict {
        class: classify_life(
            has(AssayKind::Protein),
            has(AssayKind::Carbohydrate),
            has(AssayKind::Ammonia),
        ),
        contaminated_evidence: contaminated,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RockType {
    IgneousMetamorphic,
    Shale,
}

impl RockType {
    pub fn name(&self) -> &'static str {
        match self {
            RockType::IgneousMetamorphic => "igneous_metamorphic",
            RockType::Shale => "shale",
        }
    }
}

impl FromStr for RockType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "igneous_metamorphic" => Ok(RockType::IgneousMetamorphic),
            "shale" => Ok(RockType::Shale),
            other => Err(format!("unknown rock type `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RockClass {
    pub rock_type: RockType,
    pub fossil_prediction: bool,
    pub classifier_id: String,
}

/// Surface gas evidence sampled over a rock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasEvidence {
    pub alcohol: bool,
    /// `None` when the formaldehyde channel faulted.
    pub formaldehyde_ppm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown classifier `{0}`")]
pub struct UnknownClassifier(pub String);

/// Inclusive per-channel colour box and gas threshold for the baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub shale_r: (u8, u8),
    pub shale_g: (u8, u8),
    pub shale_b: (u8, u8),
    pub formaldehyde_threshold_ppm: f64,
}

impl BaselineConfig {
    pub fn from_section(s: &Section) -> Result<Self, ConfError> {
        s.check_keys(&[
            "shale_r",
            "shale_g",
            "shale_b",
            "formaldehyde_threshold_ppm",
        ])?;
        let range = |key: &str| -> Result<(u8, u8), ConfError> {
            let e = s.require(key)?;
            let [lo, hi] = e.parse_array::<u8, 2>()?;
            if lo > hi {
                return Err(e.error("range needs min <= max"));
            }
            Ok((lo, hi))
        };
        let threshold: f64 = s.req("formaldehyde_threshold_ppm")?;
        if !(threshold >= 0.0) {
            return Err(s
                .require("formaldehyde_threshold_ppm")?
                .error("must be >= 0"));
        }
        Ok(Self {
            shale_r: range("shale_r")?,
            shale_g: range("shale_g")?,
            shale_b: range("shale_b")?,
            formaldehyde_threshold_ppm: threshold,
        })
    }

    fn in_box(&self, capture: &ImageCapture) -> bool {
        let c = capture.mean_color;
        let within = |v: u8, (lo, hi): (u8, u8)| v >= lo && v <= hi;
        within(c.r, self.shale_r) && within(c.g, self.shale_g) && within(c.b, self.shale_b)
    }

    /// Shale iff layered and inside the colour box; a fossil is predicted
    /// only for shale with alcohol or formaldehyde at or above threshold.
    pub fn classify(&self, capture: &ImageCapture, gas: &GasEvidence) -> (RockType, bool) {
        let shale = capture.layered && self.in_box(capture);
        let gas_hit = gas.alcohol
            || gas
                .formaldehyde_ppm
                .is_some_and(|ppm| ppm >= self.formaldehyde_threshold_ppm);
        if shale {
            (RockType::Shale, gas_hit)
        } else {
            (RockType::IgneousMetamorphic, false)
        }
    }
}

pub type ClassifierFn = dyn Fn(&ImageCapture, &GasEvidence) -> (RockType, bool) + Send + Sync;

pub const BASELINE: &str = "baseline";

/// Named pure rock classifiers. The baseline is always registered.
#[derive(Clone)]
pub struct ClassifierRegistry {
    entries: BTreeMap<String, Arc<ClassifierFn>>,
}

impl fmt::Debug for ClassifierRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClassifierRegistry")
            .field("ids", &self.entries.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl ClassifierRegistry {
    pub fn with_baseline(config: BaselineConfig) -> Self {
        let mut entries: BTreeMap<String, Arc<ClassifierFn>> = BTreeMap::new();
        entries.insert(
            BASELINE.to_string(),
            Arc::new(move |cap: &ImageCapture, gas: &GasEvidence| config.classify(cap, gas)),
        );
        Self { entries }
    }

    /// Add or replace a classifier. The baseline id cannot be replaced.
    pub fn register<F>(&mut self, id: &str, f: F) -> bool
    where
        F: Fn(&ImageCapture, &GasEvidence) -> (RockType, bool) + Send + Sync + 'static,
    {
        if id == BASELINE {
            return false;
        }
        self.entries.insert(id.to_string(), Arc::new(f));
        true
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn classify_rock(
        &self,
        capture: &ImageCapture,
        gas: &GasEvidence,
        classifier_id: &str,
    ) -> Result<RockClass, UnknownClassifier> {
        let f = self
            .entries
            .get(classifier_id)
            .ok_or_else(|| UnknownClassifier(classifier_id.to_string()))?;
        let (rock_type, fossil_prediction) = f(capture, gas);
        Ok(RockClass {
            rock_type,
            fossil_prediction,
            classifier_id: classifier_id.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rgb;

    #[test]
    fn decision_tree_precedence() {
        for c in [false, true] {
            for a in [false, true] {
                assert_eq!(classify_life(true, c, a), LifeClass::Extant);
            }
        }
        assert_eq!(classify_life(false, true, false), LifeClass::Extinct);
        assert_eq!(classify_life(false, true, true), LifeClass::Extinct);
        assert_eq!(
            classify_life(false, false, true),
            LifeClass::NoPresenceOfLife
        );
        assert_eq!(
            classify_life(false, false, false),
            LifeClass::NoPresenceOfLife
        );
    }

    #[test]
    fn combining_results_or_s_detections_and_contamination() {
        let r = |kind, detected, contaminated| AssayResult {
            kind,
            detected,
            bin_index: usize::from(detected),
            elapsed_ms: 0,
            contaminated_input: contaminated,
        };
        let v = verdict_from_results(&[
            r(AssayKind::Protein, false, false),
            r(AssayKind::Carbohydrate, true, false),
            r(AssayKind::Protein, true, true),
        ]);
        assert_eq!(v.class, LifeClass::Extant);
        assert!(v.contaminated_evidence);
        assert_eq!(verdict_from_results(&[]).class, LifeClass::NoPresenceOfLife);
    }

    fn baseline() -> BaselineConfig {
        BaselineConfig {
            shale_r: (100, 200),
            shale_g: (90, 180),
            shale_b: (70, 160),
            formaldehyde_threshold_ppm: 0.5,
        }
    }

    fn capture(color: Rgb, layered: bool) -> ImageCapture {
        ImageCapture {
            rock_id: "r".into(),
            mean_color: color,
            layered,
            t_ms: 0,
        }
    }

    const NO_GAS: GasEvidence = GasEvidence {
        alcohol: false,
        formaldehyde_ppm: Some(0.0),
    };

    #[test]
    fn baseline_rules() {
        let reg = ClassifierRegistry::with_baseline(baseline());
        // (150,130,110) is inside all three channel ranges.
        let tan = capture(Rgb::new(150, 130, 110), true);
        let c = reg.classify_rock(&tan, &NO_GAS, BASELINE).unwrap();
        assert_eq!((c.rock_type, c.fossil_prediction), (RockType::Shale, false));
        // Basalt: r = 40 < 100 puts it outside the box.
        let basalt = capture(Rgb::new(40, 40, 45), false);
        let c = reg.classify_rock(&basalt, &NO_GAS, BASELINE).unwrap();
        assert_eq!(c.rock_type, RockType::IgneousMetamorphic);
        // In the box but not layered.
        let c = reg
            .classify_rock(&capture(Rgb::new(150, 130, 110), false), &NO_GAS, BASELINE)
            .unwrap();
        assert_eq!(c.rock_type, RockType::IgneousMetamorphic);
        let gas = GasEvidence {
            alcohol: false,
            formaldehyde_ppm: Some(0.5),
        };
        let c = reg.classify_rock(&tan, &gas, BASELINE).unwrap();
        assert_eq!((c.rock_type, c.fossil_prediction), (RockType::Shale, true));
        // Gas over igneous rock never predicts a fossil.
        let c = reg.classify_rock(&basalt, &gas, BASELINE).unwrap();
        assert!(!c.fossil_prediction);
    }

    #[test]
    fn registry_lookup_and_isolation() {
        let mut reg = ClassifierRegistry::with_baseline(baseline());
        let tan = capture(Rgb::new(150, 130, 110), true);
        let before = reg.classify_rock(&tan, &NO_GAS, BASELINE).unwrap();
        assert!(reg.register("always-igneous", |_, _| (
            RockType::IgneousMetamorphic,
            false
        )));
        assert!(!reg.register(BASELINE, |_, _| (RockType::IgneousMetamorphic, true)));
        assert_eq!(reg.classify_rock(&tan, &NO_GAS, BASELINE).unwrap(), before);
        let other = reg.classify_rock(&tan, &NO_GAS, "always-igneous").unwrap();
        assert_eq!(other.rock_type, RockType::IgneousMetamorphic);
        assert_eq!(other.classifier_id, "always-igneous");
        assert_eq!(
            reg.classify_rock(&tan, &NO_GAS, "vgg16"),
            Err(UnknownClassifier("vgg16".into()))
        );
    }
}
