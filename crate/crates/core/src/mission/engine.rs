//! Deterministic mission sequencer.

use thiserror::Error;

use crate::assay::{result_ready_ms, run_assay, AssayKind, AssayResult};
use crate::clock::VirtualClock;
use crate::conf::Num;
use crate::env::SiteModel;
use crate::fields;
use crate::geom::Point2;
use crate::life::{verdict_from_results, ClassifierRegistry, GasEvidence, LifeVerdict};
use crate::mechanism::{Mechanism, MechanismError, Motion, PumpLine, AXIS_IDS};
use crate::params::MissionParams;
use crate::sensors::{
    capture_image, ProbeState, Reading, RoverPose, SensorCalibration, SensorFault, SensorFrame,
    SensorPoller,
};

use super::log::{LogRecord, MissionLog};
use super::plan::{MissionPlan, RockTarget, SampleTarget};
use super::steps::{step, MissionState, StepEvent};
use super::summary::{AssayLine, DutyLine, MissionStatus, RockLine, Summary, TargetLine};

/// Hooks into a running mission. Every method has a no-op default.
pub trait MissionObserver {
    fn on_record(&mut self, _record: &LogRecord) {}
    fn on_frame(&mut self, _frame: &SensorFrame) {}
    fn on_assay(&mut self, _target: &str, _depth_cm: f64, _result: &AssayResult, _t_ms: u64) {}
    fn on_verdict(&mut self, _target: &str, _verdict: &LifeVerdict, _t_ms: u64) {}
    /// Polled between steps; `Some(reason)` stops the mission.
    fn should_abort(&mut self) -> Option<String> {
        None
    }
}

/// Observer that ignores everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoObserver;

impl MissionObserver for NoObserver {}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MissionError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
}

/// Everything a mission run depends on.
#[derive(Debug, Clone)]
pub struct MissionInputs {
    pub plan: MissionPlan,
    pub site: SiteModel,
    pub calibration: SensorCalibration,
    pub params: MissionParams,
    pub registry: ClassifierRegistry,
}

impl MissionInputs {
    pub fn new(
        plan: MissionPlan,
        site: SiteModel,
        calibration: SensorCalibration,
        params: MissionParams,
    ) -> Self {
        let registry = ClassifierRegistry::with_baseline(params.classifier.clone());
        Self {
            plan,
            site,
            calibration,
            params,
            registry,
        }
    }

    fn validate(&self) -> Result<(), MissionError> {
        let cfg = |m: String| Err(MissionError::Config(m));
        if !self.registry.contains(&self.plan.classifier_id) {
            return cfg(format!("unknown classifier `{}`", self.plan.classifier_id));
        }
        for t in &self.plan.targets {
            if !self.site.extent.contains(t.position) {
                return cfg(format!("target `{}` lies outside the site", t.name));
            }
            if t.assays.len() > self.params.mechanism.turntable.slot_count {
                return cfg(format!(
                    "target `{}` needs more assays than the plate has slots",
                    t.name
                ));
            }
        }
        for r in &self.plan.rocks {
            if self.site.rock_at(&r.rock_id).is_err() {
                return cfg(format!(
                    "rock `{}`: site has no rock `{}`",
                    r.name, r.rock_id
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MissionOutcome {
    pub log: MissionLog,
    pub summary: Summary,
}

impl MissionOutcome {
    pub fn status(&self) -> MissionStatus {
        self.summary.status
    }
}

enum Halt {
    Abort(String),
    Fail(String),
}

type Res<T> = Result<T, Halt>;

fn fail(e: impl std::fmt::Display) -> Halt {
    Halt::Fail(e.to_string())
}

fn reading(r: &Reading) -> String {
    match r {
        Reading::Value(v) => Num(*v).to_string(),
        Reading::Fault(SensorFault::SignalOutOfRange) => "fault:signal".into(),
        Reading::Fault(SensorFault::ProbeNotDeployed) => "fault:probe".into(),
    }
}

struct Runner<'a> {
    inp: &'a MissionInputs,
    obs: &'a mut dyn MissionObserver,
    clock: VirtualClock,
    poller: Option<SensorPoller>,
    mech: Mechanism,
    state: MissionState,
    log: MissionLog,
    pose: Point2,
    targets: Vec<TargetLine>,
    assays: Vec<AssayLine>,
    rocks: Vec<RockLine>,
}

impl Runner<'_> {
    fn record(&mut self, event: &str, fields: Vec<(String, String)>) {
        let rec = self.log.push(self.clock.now_ms(), event, fields);
        self.obs.on_record(rec);
    }

    fn fire(&mut self, event: StepEvent) -> Res<()> {
        if let Some(reason) = self.obs.should_abort() {
            return Err(Halt::Abort(reason));
        }
        self.state = step(self.state, event).map_err(fail)?;
        if let MissionState::At(s) = self.state {
            self.record("step", fields![("n", s.number()), ("name", s.name())]);
        }
        Ok(())
    }

    fn travel(&mut self, to: Point2, label: &str) {
        let distance = self.pose.distance(&to);
        let ms = self.inp.params.rover.travel_ms(distance);
        self.record(
            "travel",
            fields![
                ("to", label),
                ("x", Num(to.x)),
                ("y", Num(to.y)),
                ("ms", ms)
            ],
        );
        self.clock.advance_by(ms);
        self.pose = to;
    }

    fn poll(&mut self, pose: &RoverPose) -> Res<SensorFrame> {
        let poller = self.poller.as_mut().expect("sensors started at deploy");
        let frame = poller
            .poll(&self.inp.site, pose, &self.inp.calibration, &mut self.clock)
            .map_err(fail)?;
        self.record(
            "frame",
            fields![
                ("frame_t", frame.t_ms),
                ("rgb", frame.rgb),
                ("alcohol", frame.alcohol_detected),
                ("co2_ppm", reading(&frame.co2_ppm)),
                ("formaldehyde_ppm", reading(&frame.formaldehyde_ppm)),
                ("humidity_pct", Num(frame.humidity_pct)),
                ("ammonia_ppm", reading(&frame.ammonia_ppm)),
                ("moisture_pct", Num(frame.soil_moisture_pct)),
                ("ph", reading(&frame.ph)),
            ],
        );
        self.obs.on_frame(&frame);
        Ok(frame)
    }

    fn actuator_on(&mut self, id: &str, start_ms: u64, end_ms: u64) {
        self.record(
            "actuator_on",
            fields![("actuator", id), ("start_ms", start_ms), ("end_ms", end_ms)],
        );
    }

    fn position(&mut self, targets: [f64; 3]) -> Res<()> {
        loop {
            match self
                .mech
                .position_pump(targets, self.clock.now_ms())
                .map_err(fail)?
            {
                Motion::Done(plan) => {
                    for (id, iv) in &plan.moves {
                        self.actuator_on(id, iv.start_ms, iv.end_ms);
                    }
                    self.clock.advance_to(plan.finished_ms);
                    return Ok(());
                }
                Motion::WaitUntil(t) => {
                    self.record("duty_wait", fields![("actuator", "axes"), ("until_ms", t)]);
                    self.clock.advance_to(t);
                }
            }
        }
    }

    fn stow(&mut self) -> Res<()> {
        self.mech.retract_probe();
        self.position([0.0; 3])
    }

    fn replace_beakers(&mut self) -> Res<()> {
        for i in 0..self.mech.turntable().slot_count() {
            self.mech.turntable_mut().replace_beaker(i).map_err(fail)?;
        }
        self.record("beakers_replaced", vec![]);
        Ok(())
    }

    fn rotate(&mut self, n: usize) -> Res<()> {
        let end = self
            .mech
            .advance_turntable(n, self.clock.now_ms())
            .map_err(fail)?;
        let tt = self.mech.turntable();
        let (slot, steps) = (tt.current_slot(), tt.motor_steps_taken());
        self.record(
            "rotate",
            fields![
                ("slots", n),
                ("slot", slot),
                ("motor_steps", steps),
                ("until_ms", end)
            ],
        );
        self.clock.advance_to(end);
        Ok(())
    }

    fn suction(
        &mut self,
        target: &SampleTarget,
        depth_cm: f64,
    ) -> Res<crate::mechanism::SoilSample> {
        let ms = self.inp.params.mechanism.suction_ms;
        loop {
            let now = self.clock.now_ms();
            match self
                .mech
                .run_suction(&self.inp.site, target.position, depth_cm, ms, now)
                .map_err(fail)?
            {
                Motion::Done((sample, iv)) => {
                    self.actuator_on(crate::mechanism::PUMP_ID, iv.start_ms, iv.end_ms);
                    self.clock.advance_to(iv.end_ms);
                    self.record(
                        "sample",
                        fields![
                            ("target", target.name),
                            ("depth_cm", Num(depth_cm)),
                            ("mass_g", Num(sample.mass_g)),
                            ("sterile", sample.sterile_chain),
                        ],
                    );
                    return Ok(sample);
                }
                Motion::WaitUntil(t) => {
                    self.record(
                        "duty_wait",
                        fields![("actuator", crate::mechanism::PUMP_ID), ("until_ms", t)],
                    );
                    self.clock.advance_to(t);
                }
            }
        }
    }

    fn dispense(&mut self, line: PumpLine, volume_ml: f64, slot: usize) -> Res<()> {
        let rec = self
            .mech
            .dispense(line, volume_ml, slot, self.clock.now_ms())
            .map_err(fail)?;
        self.record(
            "dispense",
            fields![
                ("slot", slot),
                ("line", line.name()),
                ("ml", Num(volume_ml)),
                ("end_ms", rec.end_ms),
            ],
        );
        self.clock.advance_to(rec.end_ms);
        Ok(())
    }

    /// One attempt at a soil target. Returns each assay with its depth.
    fn sample_target(&mut self, t: &SampleTarget) -> Res<Vec<(f64, AssayResult)>> {
        let inp = self.inp;
        let params = &inp.params;
        self.fire(StepEvent::SelectRegion)?;
        self.travel(t.position, &t.name);

        self.fire(StepEvent::InitExtraction)?;
        self.replace_beakers()?;
        self.position(params.mechanism.pump_target_mm)?;

        self.fire(StepEvent::MeasurePh)?;
        let first = t.depths_cm[0];
        self.mech.deploy_probe(first);
        let pose = RoverPose {
            position: t.position,
            rock: None,
            probe: ProbeState::Deployed { depth_cm: first },
        };
        let frame = self.poll(&pose)?;
        self.mech.retract_probe();
        self.record(
            "ph",
            fields![
                ("target", t.name),
                ("depth_cm", Num(first)),
                ("value", reading(&frame.ph))
            ],
        );

        let mut results = Vec::new();
        for (di, &depth) in t.depths_cm.iter().enumerate() {
            if di > 0 {
                self.fire(StepEvent::NextDepth)?;
                self.replace_beakers()?;
            }
            let mut slots: Vec<(AssayKind, usize)> = Vec::new();
            for &kind in &t.assays {
                self.fire(StepEvent::Suction)?;
                let sample = self.suction(t, depth)?;

                self.fire(StepEvent::Deposit)?;
                let slot = self.mech.turntable().current_slot();
                let now = self.clock.now_ms();
                let tt = self.mech.turntable_mut();
                tt.set_cover(slot, true).map_err(fail)?;
                let deposited = self.mech.deposit_sample(sample, slot, now);
                self.mech
                    .turntable_mut()
                    .set_cover(slot, false)
                    .map_err(fail)?;
                deposited.map_err(fail)?;
                let contaminated = self.mech.turntable().slot(slot).map_err(fail)?.contaminated;
                self.record(
                    "deposit",
                    fields![
                        ("slot", slot),
                        ("kind", kind),
                        ("contaminated", contaminated)
                    ],
                );
                slots.push((kind, slot));

                self.fire(StepEvent::RotatePlate)?;
                self.rotate(1)?;
            }

            for &(kind, slot) in &slots {
                self.fire(StepEvent::Transport)?;
                let n = self.mech.turntable().distance_to(slot);
                if n > 0 {
                    self.rotate(n)?;
                }
                self.fire(StepEvent::Dispense)?;
                self.dispense(
                    PumpLine::Reagent(kind),
                    params.assays.get(kind).reagent_ml,
                    slot,
                )?;
                if params.mechanism.water_ml > 0.0 {
                    self.dispense(PumpLine::Water, params.mechanism.water_ml, slot)?;
                }
            }

            let mut order = Vec::new();
            for &(kind, slot) in &slots {
                let beaker = self.mech.turntable().slot(slot).map_err(fail)?;
                order.push((
                    result_ready_ms(kind, beaker, &params.assays).map_err(fail)?,
                    slot,
                    kind,
                ));
            }
            order.sort();
            for (_, slot, kind) in order {
                self.fire(StepEvent::CaptureColor)?;
                let beaker = self.mech.turntable().slot(slot).map_err(fail)?;
                let r = run_assay(kind, beaker, &params.assays, &params.chart, &mut self.clock)
                    .map_err(fail)?;
                self.record(
                    "assay",
                    fields![
                        ("target", t.name),
                        ("depth_cm", Num(depth)),
                        ("slot", slot),
                        ("kind", kind),
                        ("detected", r.detected),
                        ("bin", r.bin_index),
                        ("elapsed_ms", r.elapsed_ms),
                        ("contaminated", r.contaminated_input),
                    ],
                );
                self.obs.on_assay(&t.name, depth, &r, self.clock.now_ms());
                results.push((depth, r));
            }
        }
        Ok(results)
    }

    fn run_target(&mut self, t: &SampleTarget) -> Res<()> {
        let max = self.inp.params.rover.max_attempts;
        for attempt in 1..=max {
            self.record(
                "target_start",
                fields![("target", t.name), ("attempt", attempt)],
            );
            match self.sample_target(t) {
                Ok(results) => {
                    self.fire(StepEvent::ClassifySample)?;
                    let verdict = verdict_from_results(results.iter().map(|(_, r)| r));
                    self.record(
                        "verdict",
                        fields![
                            ("target", t.name),
                            ("verdict", verdict.class),
                            ("contaminated", verdict.contaminated_evidence),
                        ],
                    );
                    self.obs.on_verdict(&t.name, &verdict, self.clock.now_ms());
                    self.targets.push(TargetLine {
                        name: t.name.clone(),
                        verdict: Some(verdict.class),
                        contaminated: verdict.contaminated_evidence,
                    });
                    self.assays
                        .extend(results.into_iter().map(|(depth_cm, r)| AssayLine {
                            target: t.name.clone(),
                            depth_cm,
                            kind: r.kind,
                            detected: r.detected,
                            bin: r.bin_index,
                            elapsed_ms: r.elapsed_ms,
                        }));
                    self.fire(StepEvent::Reposition)?;
                    return self.stow();
                }
                Err(Halt::Fail(message)) => {
                    self.record(
                        "target_error",
                        fields![("target", t.name), ("attempt", attempt), ("error", message)],
                    );
                    self.fire(StepEvent::Recover)?;
                    self.stow()?;
                }
                Err(abort) => return Err(abort),
            }
        }
        self.record(
            "target_skipped",
            fields![("target", t.name), ("attempts", max)],
        );
        self.targets.push(TargetLine {
            name: t.name.clone(),
            verdict: None,
            contaminated: false,
        });
        Ok(())
    }

    fn rock_error(&mut self, r: &RockTarget, message: String) {
        let classifier = self.inp.plan.classifier_id.clone();
        self.record(
            "rock_error",
            fields![
                ("name", r.name),
                ("id", r.rock_id),
                ("classifier", classifier),
                ("error", message)
            ],
        );
        self.rocks.push(RockLine {
            name: r.name.clone(),
            rock_id: r.rock_id.clone(),
            rock_type: None,
            fossil: false,
            classifier,
        });
    }

    fn run_rock(&mut self, r: &RockTarget) -> Res<()> {
        let inp = self.inp;
        let site = &inp.site;
        self.fire(StepEvent::PositionOverRock)?;
        let position = site.rock_at(&r.rock_id).map_err(fail)?.position;
        self.travel(position, &r.name);

        self.fire(StepEvent::SenseRock)?;
        let sensed = capture_image(site, &r.rock_id, self.clock.now_ms())
            .map_err(fail)
            .and_then(|capture| {
                let pose = RoverPose {
                    position,
                    rock: Some(r.rock_id.clone()),
                    probe: ProbeState::Retracted,
                };
                self.poll(&pose).map(|frame| (capture, frame))
            });
        let (capture, frame) = match sensed {
            Ok(v) => v,
            Err(Halt::Fail(message)) => {
                self.fire(StepEvent::SkipRock)?;
                self.rock_error(r, message);
                return Ok(());
            }
            Err(abort) => return Err(abort),
        };
        let gas = GasEvidence {
            alcohol: frame.alcohol_detected,
            formaldehyde_ppm: frame.formaldehyde_ppm.value(),
        };

        self.fire(StepEvent::ClassifyRock)?;
        match inp
            .registry
            .classify_rock(&capture, &gas, &inp.plan.classifier_id)
        {
            Ok(class) => {
                self.record(
                    "rock",
                    fields![
                        ("name", r.name),
                        ("id", r.rock_id),
                        ("type", class.rock_type.name()),
                        ("fossil", class.fossil_prediction),
                        ("classifier", class.classifier_id),
                        ("color", capture.mean_color),
                        ("layered", capture.layered),
                    ],
                );
                self.rocks.push(RockLine {
                    name: r.name.clone(),
                    rock_id: r.rock_id.clone(),
                    rock_type: Some(class.rock_type),
                    fossil: class.fossil_prediction,
                    classifier: class.classifier_id,
                });
            }
            Err(e) => self.rock_error(r, e.to_string()),
        }
        Ok(())
    }

    fn execute(&mut self) -> Res<()> {
        let inp = self.inp;
        let plan = &inp.plan;
        self.fire(StepEvent::Deploy)?;
        self.poller = Some(SensorPoller::start(plan.seed, &mut self.clock));

        self.fire(StepEvent::Survey)?;
        self.poll(&RoverPose::at(self.pose))?;

        for t in &plan.targets {
            self.run_target(t)?;
        }
        for r in &plan.rocks {
            self.run_rock(r)?;
        }
        self.fire(StepEvent::TransmitSummary)
    }

    fn duty_lines(&self) -> Vec<DutyLine> {
        self.mech
            .actuators()
            .map(|a| DutyLine {
                actuator: a.id().to_string(),
                on_ms: a.total_on_ms(),
                peak_window_ms: a.budget().peak_on_time(a.on_intervals()),
                budget_ms: a.budget().max_on_ms,
            })
            .collect()
    }
}

/// Run the plan against the site. The log and summary are a pure function
/// of the inputs; only the observer sees anything as it happens.
pub fn run_mission(
    inputs: &MissionInputs,
    observer: &mut dyn MissionObserver,
) -> Result<MissionOutcome, MissionError> {
    inputs.validate()?;
    let mech = Mechanism::new(inputs.params.mechanism.clone())?;
    let extent = inputs.site.extent;
    let mut run = Runner {
        inp: inputs,
        obs: observer,
        clock: VirtualClock::new(),
        poller: None,
        mech,
        state: MissionState::Idle,
        log: MissionLog::new(),
        pose: Point2::new(extent.x0, extent.y0),
        targets: Vec::new(),
        assays: Vec::new(),
        rocks: Vec::new(),
    };
    let plan = &inputs.plan;
    let budget = inputs.params.mechanism.budget;
    run.record(
        "mission_start",
        fields![
            ("site", inputs.site.name),
            ("seed", plan.seed),
            ("classifier", plan.classifier_id),
            ("targets", plan.targets.len()),
            ("rocks", plan.rocks.len()),
            ("window_ms", budget.window_ms),
            ("max_on_ms", budget.max_on_ms),
        ],
    );
    for w in &plan.warnings {
        run.record(
            "plan_warning",
            fields![("section", w.section), ("key", w.key), ("line", w.line)],
        );
    }

    let status = match run.execute() {
        Ok(()) => MissionStatus::Complete,
        Err(Halt::Abort(reason)) | Err(Halt::Fail(reason)) => {
            let at = run.state;
            run.state = MissionState::Aborted;
            let step_no = match at {
                MissionState::At(s) => s.number(),
                _ => 0,
            };
            run.record("aborted", fields![("reason", reason), ("step", step_no)]);
            MissionStatus::Aborted
        }
    };
    let duty = run.duty_lines();
    for d in &duty {
        run.record(
            "duty",
            fields![
                ("actuator", d.actuator),
                ("on_ms", d.on_ms),
                ("peak_window_ms", d.peak_window_ms),
                ("budget_ms", d.budget_ms),
            ],
        );
    }
    if status == MissionStatus::Complete {
        run.state = step(run.state, StepEvent::Finish).expect("finish follows transmit");
    }
    let count = run.log.len() + 1;
    run.record(
        "mission_end",
        fields![("status", status.name()), ("records", count)],
    );

    debug_assert_eq!(AXIS_IDS.len() + 1, duty.len());
    Ok(MissionOutcome {
        summary: Summary {
            targets: run.targets,
            assays: run.assays,
            rocks: run.rocks,
            duty,
            status,
        },
        log: run.log,
    })
}
