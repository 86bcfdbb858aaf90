//! Stepper-driven sample plate with one beaker per slot.

use super::{MechanismError, SoilSample};
use crate::assay::AssayKind;

/// Plate geometry. With a 1.8° full step and a 3:1 motor-to-plate
/// reduction one plate revolution is 600 full steps, so each of three
/// slots is exactly 200 steps apart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurntableGeometry {
    pub slot_count: usize,
    pub step_angle_deg: f64,
    pub reduction: u32,
    pub steps_per_s: u32,
}

impl Default for TurntableGeometry {
    fn default() -> Self {
        Self {
            slot_count: 3,
            step_angle_deg: 1.8,
            reduction: 3,
            steps_per_s: 400,
        }
    }
}

impl TurntableGeometry {
    /// Full steps between adjacent slots, or `None` when the geometry does
    /// not give an integer step count.
    pub fn steps_per_slot(&self) -> Option<u64> {
        if self.slot_count == 0 || self.reduction == 0 || !(self.step_angle_deg > 0.0) {
            return None;
        }
        let per_rev = 360.0 / self.step_angle_deg;
        let per_rev_int = per_rev.round();
        if (per_rev - per_rev_int).abs() > 1e-9 {
            return None;
        }
        let plate = per_rev_int as u64 * u64::from(self.reduction);
        plate
            .is_multiple_of(self.slot_count as u64)
            .then(|| plate / self.slot_count as u64)
    }
}

/// Which supply line a dispense drew from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PumpLine {
    Reagent(AssayKind),
    Water,
}

impl PumpLine {
    pub fn name(&self) -> &'static str {
        match self {
            PumpLine::Reagent(k) => k.reagent_name(),
            PumpLine::Water => "water",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispenseRecord {
    pub line: PumpLine,
    pub volume_ml: f64,
    pub start_ms: u64,
    pub end_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeakerSlot {
    pub occupied: bool,
    pub sample: Option<SoilSample>,
    pub funnel_cover_open: bool,
    /// Sticky until the beaker is replaced.
    pub contaminated: bool,
    /// The funnel cover was open when this slot reached the funnel.
    pub exposed_at_alignment: bool,
    pub prep: Vec<DispenseRecord>,
}

impl BeakerSlot {
    fn fresh() -> Self {
        Self {
            occupied: true,
            sample: None,
            funnel_cover_open: false,
            contaminated: false,
            exposed_at_alignment: false,
            prep: Vec::new(),
        }
    }

    /// Total volume dispensed into this beaker from `line`.
    pub fn dispensed(&self, line: PumpLine) -> f64 {
        self.prep
            .iter()
            .filter(|d| d.line == line)
            .map(|d| d.volume_ml)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Turntable {
    geometry: TurntableGeometry,
    steps_per_slot: u64,
    motor_steps_taken: u64,
    current_slot: usize,
    slots: Vec<BeakerSlot>,
    busy_until_ms: u64,
}

impl Turntable {
    pub fn new(geometry: TurntableGeometry) -> Result<Self, MechanismError> {
        let steps_per_slot = geometry.steps_per_slot().ok_or(MechanismError::Geometry)?;
        Ok(Self {
            geometry,
            steps_per_slot,
            motor_steps_taken: 0,
            current_slot: 0,
            slots: (0..geometry.slot_count)
                .map(|_| BeakerSlot::fresh())
                .collect(),
            busy_until_ms: 0,
        })
    }

    pub fn geometry(&self) -> &TurntableGeometry {
        &self.geometry
    }

    pub fn steps_per_slot(&self) -> u64 {
        self.steps_per_slot
    }

    pub fn motor_steps_taken(&self) -> u64 {
        self.motor_steps_taken
    }

    pub fn current_slot(&self) -> usize {
        self.current_slot
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    pub fn slot(&self, index: usize) -> Result<&BeakerSlot, MechanismError> {
        self.slots
            .get(index)
            .ok_or(MechanismError::InvalidSlot(index))
    }

    fn slot_mut(&mut self, index: usize) -> Result<&mut BeakerSlot, MechanismError> {
        self.slots
            .get_mut(index)
            .ok_or(MechanismError::InvalidSlot(index))
    }

    pub fn busy_until_ms(&self) -> u64 {
        self.busy_until_ms
    }

    fn ensure_idle(&self, now_ms: u64) -> Result<(), MechanismError> {
        if now_ms < self.busy_until_ms {
            Err(MechanismError::Busy {
                until_ms: self.busy_until_ms,
            })
        } else {
            Ok(())
        }
    }

    fn ensure_aligned(&self, index: usize) -> Result<(), MechanismError> {
        self.slot(index)?;
        if self.current_slot != index {
            return Err(MechanismError::Misaligned {
                slot: index,
                current: self.current_slot,
            });
        }
        Ok(())
    }

    /// Rotate the plate by `n_slots`. Returns the instant the motion ends.
    pub fn advance(&mut self, n_slots: usize, now_ms: u64) -> Result<u64, MechanismError> {
        if n_slots == 0 {
            return Err(MechanismError::NonPositiveAdvance);
        }
        self.ensure_idle(now_ms)?;
        let steps = n_slots as u64 * self.steps_per_slot;
        self.motor_steps_taken += steps;
        self.current_slot = (self.current_slot + n_slots) % self.slots.len();
        let slot = &mut self.slots[self.current_slot];
        if slot.funnel_cover_open {
            slot.exposed_at_alignment = true;
        }
        let travel_ms = (steps * 1000).div_ceil(u64::from(self.geometry.steps_per_s.max(1)));
        self.busy_until_ms = now_ms + travel_ms;
        Ok(self.busy_until_ms)
    }

    /// Slots to advance so that `index` sits under the funnel.
    pub fn distance_to(&self, index: usize) -> usize {
        let n = self.slots.len();
        (index + n - self.current_slot % n) % n
    }

    pub fn set_cover(&mut self, index: usize, open: bool) -> Result<(), MechanismError> {
        self.slot_mut(index)?.funnel_cover_open = open;
        Ok(())
    }

    pub fn deposit(
        &mut self,
        mut sample: SoilSample,
        index: usize,
        now_ms: u64,
    ) -> Result<(), MechanismError> {
        self.ensure_aligned(index)?;
        self.ensure_idle(now_ms)?;
        let slot = self.slot_mut(index)?;
        if !slot.occupied {
            return Err(MechanismError::NoBeaker(index));
        }
        if slot.sample.is_some() {
            return Err(MechanismError::SlotOccupied(index));
        }
        if slot.exposed_at_alignment || !sample.sterile_chain {
            slot.contaminated = true;
        }
        if slot.contaminated {
            sample.sterile_chain = false;
        }
        slot.sample = Some(sample);
        Ok(())
    }

    pub(super) fn record_dispense(
        &mut self,
        index: usize,
        record: DispenseRecord,
    ) -> Result<(), MechanismError> {
        self.busy_until_ms = self.busy_until_ms.max(record.end_ms);
        self.slot_mut(index)?.prep.push(record);
        Ok(())
    }

    pub(super) fn check_dispense_target(
        &self,
        index: usize,
        now_ms: u64,
    ) -> Result<(), MechanismError> {
        self.ensure_aligned(index)?;
        self.ensure_idle(now_ms)?;
        let slot = self.slot(index)?;
        if slot.sample.is_none() {
            return Err(MechanismError::NoSample(index));
        }
        Ok(())
    }

    /// Swap in a clean, empty beaker. This is the only way to clear
    /// contamination.
    pub fn replace_beaker(&mut self, index: usize) -> Result<(), MechanismError> {
        let slot = self.slot_mut(index)?;
        let cover = slot.funnel_cover_open;
        *slot = BeakerSlot::fresh();
        slot.funnel_cover_open = cover;
        Ok(())
    }

    /// Remove the beaker entirely, leaving the slot empty.
    pub fn remove_beaker(&mut self, index: usize) -> Result<(), MechanismError> {
        let slot = self.slot_mut(index)?;
        slot.occupied = false;
        slot.sample = None;
        slot.prep.clear();
        Ok(())
    }
}
