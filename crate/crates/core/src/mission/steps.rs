//! The eighteen mission steps as a transition table.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Step {
    Deploy = 1,
    Survey,
    SelectRegion,
    InitExtraction,
    InitialPh,
    Suction,
    Deposit,
    IterateDepth,
    RotatePlate,
    Reposition,
    TransportToAnalysis,
    Dispense,
    CaptureColor,
    ClassifySample,
    PositionOverRock,
    RockSensing,
    RockClassification,
    TransmitSummary,
}

impl Step {
    pub const ALL: [Step; 18] = [
        Step::Deploy,
        Step::Survey,
        Step::SelectRegion,
        Step::InitExtraction,
        Step::InitialPh,
        Step::Suction,
        Step::Deposit,
        Step::IterateDepth,
        Step::RotatePlate,
        Step::Reposition,
        Step::TransportToAnalysis,
        Step::Dispense,
        Step::CaptureColor,
        Step::ClassifySample,
        Step::PositionOverRock,
        Step::RockSensing,
        Step::RockClassification,
        Step::TransmitSummary,
    ];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn from_number(n: u8) -> Option<Step> {
        Step::ALL.get(usize::from(n).checked_sub(1)?).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Step::Deploy => "deploy",
            Step::Survey => "survey",
            Step::SelectRegion => "select_region",
            Step::InitExtraction => "init_extraction",
            Step::InitialPh => "initial_ph",
            Step::Suction => "suction",
            Step::Deposit => "deposit",
            Step::IterateDepth => "iterate_depth",
            Step::RotatePlate => "rotate_plate",
            Step::Reposition => "reposition",
            Step::TransportToAnalysis => "transport",
            Step::Dispense => "dispense",
            Step::CaptureColor => "capture_color",
            Step::ClassifySample => "classify_sample",
            Step::PositionOverRock => "position_over_rock",
            Step::RockSensing => "rock_sensing",
            Step::RockClassification => "rock_classification",
            Step::TransmitSummary => "transmit_summary",
        }
    }

    /// Steps reachable by an ordinary forward event.
    pub fn successors(self) -> &'static [Step] {
        use Step::*;
        match self {
            Deploy => &[Survey],
            Survey => &[SelectRegion, PositionOverRock, TransmitSummary],
            SelectRegion => &[InitExtraction],
            InitExtraction => &[InitialPh],
            InitialPh => &[Suction],
            Suction => &[Deposit],
            Deposit => &[RotatePlate],
            IterateDepth => &[Suction],
            RotatePlate => &[Suction, TransportToAnalysis],
            Reposition => &[SelectRegion, PositionOverRock, TransmitSummary],
            TransportToAnalysis => &[Dispense],
            Dispense => &[TransportToAnalysis, CaptureColor],
            CaptureColor => &[CaptureColor, IterateDepth, ClassifySample],
            ClassifySample => &[Reposition, PositionOverRock, TransmitSummary],
            PositionOverRock => &[RockSensing],
            RockSensing => &[RockClassification],
            RockClassification => &[PositionOverRock, TransmitSummary],
            TransmitSummary => &[],
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.number(), self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StepEvent {
    Deploy,
    Survey,
    SelectRegion,
    InitExtraction,
    MeasurePh,
    Suction,
    Deposit,
    NextDepth,
    RotatePlate,
    Reposition,
    Transport,
    Dispense,
    CaptureColor,
    ClassifySample,
    PositionOverRock,
    SenseRock,
    ClassifyRock,
    TransmitSummary,
    /// Abandon the current target attempt and reposition.
    Recover,
    /// Give up on the current rock.
    SkipRock,
    Abort,
    Finish,
}

impl StepEvent {
    pub const ALL: [StepEvent; 22] = [
        StepEvent::Deploy,
        StepEvent::Survey,
        StepEvent::SelectRegion,
        StepEvent::InitExtraction,
        StepEvent::MeasurePh,
        StepEvent::Suction,
        StepEvent::Deposit,
        StepEvent::NextDepth,
        StepEvent::RotatePlate,
        StepEvent::Reposition,
        StepEvent::Transport,
        StepEvent::Dispense,
        StepEvent::CaptureColor,
        StepEvent::ClassifySample,
        StepEvent::PositionOverRock,
        StepEvent::SenseRock,
        StepEvent::ClassifyRock,
        StepEvent::TransmitSummary,
        StepEvent::Recover,
        StepEvent::SkipRock,
        StepEvent::Abort,
        StepEvent::Finish,
    ];

    /// Step an ordinary event moves to.
    pub fn target(self) -> Option<Step> {
        use StepEvent as E;
        Some(match self {
            E::Deploy => Step::Deploy,
            E::Survey => Step::Survey,
            E::SelectRegion => Step::SelectRegion,
            E::InitExtraction => Step::InitExtraction,
            E::MeasurePh => Step::InitialPh,
            E::Suction => Step::Suction,
            E::Deposit => Step::Deposit,
            E::NextDepth => Step::IterateDepth,
            E::RotatePlate => Step::RotatePlate,
            E::Reposition => Step::Reposition,
            E::Transport => Step::TransportToAnalysis,
            E::Dispense => Step::Dispense,
            E::CaptureColor => Step::CaptureColor,
            E::ClassifySample => Step::ClassifySample,
            E::PositionOverRock => Step::PositionOverRock,
            E::SenseRock => Step::RockSensing,
            E::ClassifyRock => Step::RockClassification,
            E::TransmitSummary => Step::TransmitSummary,
            E::Recover => Step::Reposition,
            E::SkipRock => Step::RockClassification,
            E::Abort | E::Finish => return None,
        })
    }
}

impl fmt::Display for StepEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum MissionState {
    #[default]
    Idle,
    At(Step),
    Aborted,
    Complete,
}

impl fmt::Display for MissionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MissionState::Idle => f.write_str("idle"),
            MissionState::At(s) => write!(f, "step {s}"),
            MissionState::Aborted => f.write_str("aborted"),
            MissionState::Complete => f.write_str("complete"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("event {event} is illegal at {state}")]
pub struct IllegalTransition {
    pub state: MissionState,
    pub event: StepEvent,
}

/// Pure transition function. Illegal events leave the caller's state alone.
pub fn step(state: MissionState, event: StepEvent) -> Result<MissionState, IllegalTransition> {
    let illegal = Err(IllegalTransition { state, event });
    let next = match (state, event) {
        (MissionState::Aborted | MissionState::Complete, _) => return illegal,
        (_, StepEvent::Abort) => MissionState::Aborted,
        (MissionState::At(Step::TransmitSummary), StepEvent::Finish) => MissionState::Complete,
        (_, StepEvent::Finish) => return illegal,
        (MissionState::Idle, StepEvent::Deploy) => MissionState::At(Step::Deploy),
        (MissionState::Idle, _) => return illegal,
        (MissionState::At(cur), StepEvent::Recover) => {
            if (Step::SelectRegion..=Step::ClassifySample).contains(&cur) {
                MissionState::At(Step::Reposition)
            } else {
                return illegal;
            }
        }
        (MissionState::At(cur), StepEvent::SkipRock) => {
            if matches!(cur, Step::PositionOverRock | Step::RockSensing) {
                MissionState::At(Step::RockClassification)
            } else {
                return illegal;
            }
        }
        (MissionState::At(cur), ev) => {
            let to = ev.target().expect("ordinary event");
            if cur.successors().contains(&to) {
                MissionState::At(to)
            } else {
                return illegal;
            }
        }
    };
    Ok(next)
}
