//! Physical sample path: three linear actuators that place the suction pump,
//! the pump itself, the funnel-fed turntable, the reagent and water lines,
//! and the pH probe. Every actuator and the pump share one duty budget
//! rule.

pub mod duty;
pub mod turntable;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::assay::AssayKind;
use crate::conf::{ConfError, Section};
use crate::env::{SiteError, SiteModel, SoilComposition};
use crate::geom::Point2;
use crate::sensors::ProbeState;

pub use duty::{DutyBudget, DutyDecision, Interval};
pub use turntable::{BeakerSlot, DispenseRecord, PumpLine, Turntable, TurntableGeometry};

/// Linear actuator stroke.
pub const STROKE_MM: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MechanismError {
    #[error("request of {requested_ms} ms exceeds the {max_ms} ms duty budget")]
    RequestTooLong { requested_ms: u64, max_ms: u64 },
    #[error("actuator `{actuator}`: target {target_mm} mm is outside the 0..=100 mm stroke")]
    StrokeOutOfRange { actuator: String, target_mm: f64 },
    #[error("depth {depth_cm} cm is beyond the {max_cm} cm reach")]
    DepthBeyondReach { depth_cm: f64, max_cm: f64 },
    #[error("suction duration must be positive")]
    ZeroDuration,
    #[error("pump is not positioned over the soil")]
    PumpNotPositioned,
    #[error("slot {slot} is not under the funnel (current slot {current})")]
    Misaligned { slot: usize, current: usize },
    #[error("slot {0} already holds a sample")]
    SlotOccupied(usize),
    #[error("slot {0} has no beaker")]
    NoBeaker(usize),
    #[error("slot {0} holds no sample")]
    NoSample(usize),
    #[error("no slot {0}")]
    InvalidSlot(usize),
    #[error("{line} reservoir holds {available_ml} ml, {requested_ml} ml requested")]
    ReservoirEmpty {
        line: &'static str,
        available_ml: f64,
        requested_ml: f64,
    },
    #[error("dispense volume must be positive")]
    InvalidVolume,
    #[error("advance must be at least one slot")]
    NonPositiveAdvance,
    #[error("mechanism busy until {until_ms} ms")]
    Busy { until_ms: u64 },
    #[error("turntable geometry does not give an integer number of steps per slot")]
    Geometry,
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Site(#[from] SiteError),
}

/// A soil sample as it leaves the suction pump.
#[derive(Debug, Clone, PartialEq)]
pub struct SoilSample {
    pub mass_g: f64,
    pub source_position: Point2,
    pub depth_cm: f64,
    pub composition: SoilComposition,
    pub sterile_chain: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Actuator {
    id: String,
    position_mm: f64,
    on_intervals: Vec<Interval>,
    budget: DutyBudget,
}

impl Actuator {
    pub fn new(id: impl Into<String>, budget: DutyBudget) -> Self {
        Self {
            id: id.into(),
            position_mm: 0.0,
            on_intervals: Vec::new(),
            budget,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn position_mm(&self) -> f64 {
        self.position_mm
    }

    pub fn on_intervals(&self) -> &[Interval] {
        &self.on_intervals
    }

    pub fn budget(&self) -> DutyBudget {
        self.budget
    }

    pub fn total_on_ms(&self) -> u64 {
        self.on_intervals.iter().map(Interval::len).sum()
    }

    pub fn duty_check(
        &self,
        now_ms: u64,
        requested_ms: u64,
    ) -> Result<DutyDecision, MechanismError> {
        if requested_ms > self.budget.max_on_ms {
            return Err(MechanismError::RequestTooLong {
                requested_ms,
                max_ms: self.budget.max_on_ms,
            });
        }
        Ok(self.budget.check(&self.on_intervals, now_ms, requested_ms))
    }

    /// Switch on for `duration_ms` starting at `now_ms` if the budget allows.
    pub fn run(&mut self, now_ms: u64, duration_ms: u64) -> Result<DutyDecision, MechanismError> {
        let decision = self.duty_check(now_ms, duration_ms)?;
        if decision == DutyDecision::Allowed && duration_ms > 0 {
            self.on_intervals
                .push(Interval::new(now_ms, now_ms + duration_ms));
        }
        Ok(decision)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MechanismConfig {
    pub actuator_speed_mm_per_s: f64,
    /// Per-axis actuator targets that put the pump on the soil.
    pub pump_target_mm: [f64; 3],
    pub collection_rate_g_per_s: f64,
    pub max_reach_cm: f64,
    pub suction_ms: u64,
    pub turntable: TurntableGeometry,
    pub dispense_ml_per_s: f64,
    pub reagent_reservoir_ml: f64,
    pub water_reservoir_ml: f64,
    pub water_ml: f64,
    pub budget: DutyBudget,
}

impl Default for MechanismConfig {
    fn default() -> Self {
        Self {
            actuator_speed_mm_per_s: 10.0,
            pump_target_mm: [50.0, 50.0, 80.0],
            collection_rate_g_per_s: 0.5,
            max_reach_cm: 8.0,
            suction_ms: 20_000,
            turntable: TurntableGeometry::default(),
            dispense_ml_per_s: 2.0,
            reagent_reservoir_ml: 500.0,
            water_reservoir_ml: 1000.0,
            water_ml: 10.0,
            budget: DutyBudget::default(),
        }
    }
}

impl MechanismConfig {
    pub const KEYS: &'static [&'static str] = &[
        "actuator_speed_mm_per_s",
        "pump_target_mm",
        "collection_rate_g_per_s",
        "max_reach_cm",
        "suction_ms",
        "slot_count",
        "step_angle_deg",
        "reduction",
        "steps_per_s",
        "dispense_ml_per_s",
        "reagent_reservoir_ml",
        "water_reservoir_ml",
        "water_ml",
        "duty_window_ms",
        "duty_max_on_ms",
    ];

    pub fn from_section(s: &Section) -> Result<Self, ConfError> {
        s.check_keys(Self::KEYS)?;
        let d = Self::default();
        let pump_target_mm = match s.last("pump_target_mm") {
            Some(e) => e.parse_array::<f64, 3>()?,
            None => d.pump_target_mm,
        };
        Ok(Self {
            actuator_speed_mm_per_s: s
                .get_or("actuator_speed_mm_per_s", d.actuator_speed_mm_per_s)?,
            pump_target_mm,
            collection_rate_g_per_s: s
                .get_or("collection_rate_g_per_s", d.collection_rate_g_per_s)?,
            max_reach_cm: s.get_or("max_reach_cm", d.max_reach_cm)?,
            suction_ms: s.get_or("suction_ms", d.suction_ms)?,
            turntable: TurntableGeometry {
                slot_count: s.get_or("slot_count", d.turntable.slot_count)?,
                step_angle_deg: s.get_or("step_angle_deg", d.turntable.step_angle_deg)?,
                reduction: s.get_or("reduction", d.turntable.reduction)?,
                steps_per_s: s.get_or("steps_per_s", d.turntable.steps_per_s)?,
            },
            dispense_ml_per_s: s.get_or("dispense_ml_per_s", d.dispense_ml_per_s)?,
            reagent_reservoir_ml: s.get_or("reagent_reservoir_ml", d.reagent_reservoir_ml)?,
            water_reservoir_ml: s.get_or("water_reservoir_ml", d.water_reservoir_ml)?,
            water_ml: s.get_or("water_ml", d.water_ml)?,
            budget: DutyBudget {
                window_ms: s.get_or("duty_window_ms", d.budget.window_ms)?,
                max_on_ms: s.get_or("duty_max_on_ms", d.budget.max_on_ms)?,
            },
        })
    }

    pub fn validate(&self) -> Result<(), MechanismError> {
        let bad = |m: &str| Err(MechanismError::Config(m.to_string()));
        if !(self.actuator_speed_mm_per_s > 0.0) {
            return bad("actuator_speed_mm_per_s must be positive");
        }
        if self
            .pump_target_mm
            .iter()
            .any(|t| !(0.0..=STROKE_MM).contains(t))
        {
            return bad("pump_target_mm must lie within the 0..=100 mm stroke");
        }
        if !(self.collection_rate_g_per_s > 0.0) {
            return bad("collection_rate_g_per_s must be positive");
        }
        if !(self.max_reach_cm > 5.0) || !self.max_reach_cm.is_finite() {
            return bad("max_reach_cm must exceed 5 cm");
        }
        if self.suction_ms == 0 || self.suction_ms > self.budget.max_on_ms {
            return bad("suction_ms must be positive and within the duty budget");
        }
        if self.turntable.steps_per_slot().is_none() {
            return Err(MechanismError::Geometry);
        }
        if !(self.dispense_ml_per_s > 0.0) {
            return bad("dispense_ml_per_s must be positive");
        }
        if !(self.reagent_reservoir_ml >= 0.0
            && self.water_reservoir_ml >= 0.0
            && self.water_ml >= 0.0)
        {
            return bad("reservoir and water volumes must be non-negative");
        }
        if self.budget.max_on_ms == 0 || self.budget.max_on_ms > self.budget.window_ms {
            return bad("duty budget needs 0 < max_on_ms <= window_ms");
        }
        Ok(())
    }
}

/// Result of a motion or pump request under the duty budget.
#[derive(Debug, Clone, PartialEq)]
pub enum Motion<T> {
    Done(T),
    WaitUntil(u64),
}

/// Per-axis moves of one pump positioning request.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionPlan {
    pub moves: Vec<(String, Interval)>,
    pub finished_ms: u64,
}

pub const AXIS_IDS: [&str; 3] = ["act-x", "act-y", "act-z"];
pub const PUMP_ID: &str = "pump";

#[derive(Debug, Clone, PartialEq)]
pub struct Mechanism {
    config: MechanismConfig,
    axes: [Actuator; 3],
    pump: Actuator,
    pump_positioned: bool,
    turntable: Turntable,
    reservoirs: BTreeMap<PumpLine, f64>,
    probe: ProbeState,
    sterile: bool,
}

impl Mechanism {
    pub fn new(config: MechanismConfig) -> Result<Self, MechanismError> {
        config.validate()?;
        let budget = config.budget;
        let mut reservoirs = BTreeMap::new();
        for kind in AssayKind::ALL {
            reservoirs.insert(PumpLine::Reagent(kind), config.reagent_reservoir_ml);
        }
        reservoirs.insert(PumpLine::Water, config.water_reservoir_ml);
        Ok(Self {
            turntable: Turntable::new(config.turntable)?,
            axes: AXIS_IDS.map(|id| Actuator::new(id, budget)),
            pump: Actuator::new(PUMP_ID, budget),
            pump_positioned: false,
            reservoirs,
            probe: ProbeState::Retracted,
            sterile: true,
            config,
        })
    }

    pub fn config(&self) -> &MechanismConfig {
        &self.config
    }

    pub fn axes(&self) -> &[Actuator; 3] {
        &self.axes
    }

    pub fn pump(&self) -> &Actuator {
        &self.pump
    }

    /// All duty-governed actuators, axes first.
    pub fn actuators(&self) -> impl Iterator<Item = &Actuator> {
        self.axes.iter().chain(std::iter::once(&self.pump))
    }

    pub fn turntable(&self) -> &Turntable {
        &self.turntable
    }

    pub fn turntable_mut(&mut self) -> &mut Turntable {
        &mut self.turntable
    }

    pub fn pump_positioned(&self) -> bool {
        self.pump_positioned
    }

    pub fn reservoir_ml(&self, line: PumpLine) -> f64 {
        self.reservoirs.get(&line).copied().unwrap_or(0.0)
    }

    pub fn set_reservoir_ml(&mut self, line: PumpLine, ml: f64) {
        self.reservoirs.insert(line, ml);
    }

    pub fn probe(&self) -> ProbeState {
        self.probe
    }

    pub fn deploy_probe(&mut self, depth_cm: f64) {
        self.probe = ProbeState::Deployed { depth_cm };
    }

    pub fn retract_probe(&mut self) {
        self.probe = ProbeState::Retracted;
    }

    pub fn sterile(&self) -> bool {
        self.sterile
    }

    /// Mark the sterilization chain as broken; later samples carry the flag.
    pub fn break_sterility(&mut self) {
        self.sterile = false;
    }

    pub fn restore_sterility(&mut self) {
        self.sterile = true;
    }

    fn travel_ms(&self, from: f64, to: f64) -> u64 {
        let ms = (to - from).abs() * 1000.0 / self.config.actuator_speed_mm_per_s;
        ms.ceil() as u64
    }

    /// Drive the three actuators to `targets_mm`. All axes start together at
    /// `now_ms`; nothing moves unless every axis has budget for its travel.
    pub fn position_pump(
        &mut self,
        targets_mm: [f64; 3],
        now_ms: u64,
    ) -> Result<Motion<MotionPlan>, MechanismError> {
        for (axis, target) in self.axes.iter().zip(targets_mm) {
            if !(0.0..=STROKE_MM).contains(&target) {
                return Err(MechanismError::StrokeOutOfRange {
                    actuator: axis.id.clone(),
                    target_mm: target,
                });
            }
        }
        let durations: Vec<u64> = self
            .axes
            .iter()
            .zip(targets_mm)
            .map(|(a, t)| self.travel_ms(a.position_mm, t))
            .collect();
        let mut wait = None;
        for (axis, &d) in self.axes.iter().zip(&durations) {
            if d == 0 {
                continue;
            }
            if let DutyDecision::WaitUntil(t) = axis.duty_check(now_ms, d)? {
                wait = Some(wait.map_or(t, |w: u64| w.max(t)));
            }
        }
        if let Some(t) = wait {
            return Ok(Motion::WaitUntil(t));
        }
        let mut plan = MotionPlan {
            moves: Vec::new(),
            finished_ms: now_ms,
        };
        for ((axis, target), d) in self.axes.iter_mut().zip(targets_mm).zip(durations) {
            if d > 0 {
                axis.run(now_ms, d)?;
                plan.moves
                    .push((axis.id.clone(), Interval::new(now_ms, now_ms + d)));
                plan.finished_ms = plan.finished_ms.max(now_ms + d);
            }
            axis.position_mm = target;
        }
        self.pump_positioned = targets_mm.iter().any(|&t| t > 0.0);
        Ok(Motion::Done(plan))
    }

    /// Collect soil by suction at `depth_cm` for `duration_ms`.
    pub fn run_suction(
        &mut self,
        site: &SiteModel,
        position: Point2,
        depth_cm: f64,
        duration_ms: u64,
        now_ms: u64,
    ) -> Result<Motion<(SoilSample, Interval)>, MechanismError> {
        if !(depth_cm >= 0.0) || depth_cm > self.config.max_reach_cm {
            return Err(MechanismError::DepthBeyondReach {
                depth_cm,
                max_cm: self.config.max_reach_cm,
            });
        }
        if duration_ms == 0 {
            return Err(MechanismError::ZeroDuration);
        }
        if !self.pump_positioned {
            return Err(MechanismError::PumpNotPositioned);
        }
        let composition = site.soil_at(position, depth_cm)?;
        match self.pump.run(now_ms, duration_ms)? {
            DutyDecision::WaitUntil(t) => Ok(Motion::WaitUntil(t)),
            DutyDecision::Allowed => {
                let mass_g = self.config.collection_rate_g_per_s * duration_ms as f64 / 1000.0;
                let sample = SoilSample {
                    mass_g,
                    source_position: position,
                    depth_cm,
                    composition,
                    sterile_chain: self.sterile,
                };
                Ok(Motion::Done((
                    sample,
                    Interval::new(now_ms, now_ms + duration_ms),
                )))
            }
        }
    }

    pub fn deposit_sample(
        &mut self,
        sample: SoilSample,
        slot_index: usize,
        now_ms: u64,
    ) -> Result<(), MechanismError> {
        self.turntable.deposit(sample, slot_index, now_ms)
    }

    pub fn advance_turntable(
        &mut self,
        n_slots: usize,
        now_ms: u64,
    ) -> Result<u64, MechanismError> {
        self.turntable.advance(n_slots, now_ms)
    }

    /// Pump `volume_ml` from `line` into the aligned beaker at `slot_index`.
    pub fn dispense(
        &mut self,
        line: PumpLine,
        volume_ml: f64,
        slot_index: usize,
        now_ms: u64,
    ) -> Result<DispenseRecord, MechanismError> {
        if !(volume_ml > 0.0) || !volume_ml.is_finite() {
            return Err(MechanismError::InvalidVolume);
        }
        self.turntable.check_dispense_target(slot_index, now_ms)?;
        let available = self.reservoir_ml(line);
        if available < volume_ml {
            return Err(MechanismError::ReservoirEmpty {
                line: line.name(),
                available_ml: available,
                requested_ml: volume_ml,
            });
        }
        let duration = (volume_ml * 1000.0 / self.config.dispense_ml_per_s).ceil() as u64;
        let record = DispenseRecord {
            line,
            volume_ml,
            start_ms: now_ms,
            end_ms: now_ms + duration,
        };
        self.reservoirs.insert(line, available - volume_ml);
        self.turntable.record_dispense(slot_index, record.clone())?;
        Ok(record)
    }
}
