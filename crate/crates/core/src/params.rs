//! Mission parameter file: assay protocols, mechanism, rover motion and the
//! baseline rock classifier.

use thiserror::Error;

use crate::assay::{parse_assays, AssayError, AssayKind, AssayProtocolParams, ColorChart};
use crate::conf::{ConfError, Document};
use crate::life::BaselineConfig;
use crate::mechanism::{MechanismConfig, MechanismError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamsError {
    #[error(transparent)]
    Conf(#[from] ConfError),
    #[error(transparent)]
    Assay(#[from] AssayError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error("[{section}] {message}")]
    Invalid { section: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoverParams {
    pub speed_m_per_s: f64,
    pub max_attempts: u32,
}

impl Default for RoverParams {
    fn default() -> Self {
        Self {
            speed_m_per_s: 0.1,
            max_attempts: 3,
        }
    }
}

impl RoverParams {
    /// Travel time between two points, rounded up to whole milliseconds.
    pub fn travel_ms(&self, distance_m: f64) -> u64 {
        (distance_m * 1000.0 / self.speed_m_per_s).ceil() as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionParams {
    pub assays: AssayProtocolParams,
    pub chart: ColorChart,
    pub mechanism: MechanismConfig,
    pub rover: RoverParams,
    pub classifier: BaselineConfig,
}

impl MissionParams {
    pub fn parse(text: &str) -> Result<Self, ParamsError> {
        let doc = Document::parse(text)?;
        let mut kinds: Vec<&str> = AssayKind::ALL.iter().map(|k| k.reagent_name()).collect();
        kinds.extend(["mechanism", "rover", "classifier"]);
        doc.check_kinds(&kinds)?;
        let (assays, chart) = parse_assays(&doc)?;
        let mechanism = match doc.singleton("mechanism")? {
            Some(s) => MechanismConfig::from_section(s)?,
            None => MechanismConfig::default(),
        };
        mechanism.validate()?;
        let mut rover = RoverParams::default();
        if let Some(s) = doc.singleton("rover")? {
            s.check_keys(&["speed_m_per_s", "max_attempts"])?;
            rover.speed_m_per_s = s.get_or("speed_m_per_s", rover.speed_m_per_s)?;
            rover.max_attempts = s.get_or("max_attempts", rover.max_attempts)?;
            if !(rover.speed_m_per_s > 0.0)
                || !rover.speed_m_per_s.is_finite()
                || rover.max_attempts == 0
            {
                return Err(ParamsError::Invalid {
                    section: "rover".into(),
                    message: "speed_m_per_s and max_attempts must be positive".into(),
                });
            }
        }
        let classifier = match doc.singleton("classifier")? {
            Some(s) => BaselineConfig::from_section(s)?,
            None => {
                return Err(ParamsError::Invalid {
                    section: "classifier".into(),
                    message: "section is missing".into(),
                })
            }
        };
        Ok(Self {
            assays,
            chart,
            mechanism,
            rover,
            classifier,
        })
    }

    pub fn shipped() -> Self {
        Self::parse(crate::defaults::PARAMS).expect("shipped parameters are valid")
    }
}
