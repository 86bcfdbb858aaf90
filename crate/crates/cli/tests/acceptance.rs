//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use astrolab_core::assay::AssayKind;
use astrolab_core::defaults;
use astrolab_core::env::{load_site, SiteModel};
use astrolab_core::geom::{Point2, Rgb};
use astrolab_core::life::{classify_life, LifeClass};
use astrolab_core::mechanism::duty::{DutyBudget, DutyDecision, Interval};
use astrolab_core::mechanism::turntable::{Turntable, TurntableGeometry};
use astrolab_core::mechanism::{Actuator, Mechanism, MechanismError, Motion};
use astrolab_core::mission::{
    parse_log, parse_plan, replay, run_mission, summary_from_log, LogRecord, MissionInputs,
    MissionOutcome, MissionStatus, NoObserver,
};
use astrolab_core::params::MissionParams;
use astrolab_core::sensors::{
    gas_ppm, map_color_raw, ColorCalibration, GasCalibration, Reading, SensorCalibration,
    SensorFault, SensorFrame,
};
use astrolab_telemetry::{
    decode, encode, AssayResultMsg, DecodeError, LifeVerdictMsg, Message, StreamDecoder,
};
use rand::distributions::Alphanumeric;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SITE: &str = include_str!("../../../demo/site.conf");
const PLAN: &str = include_str!("../../../demo/mission.plan");

type Outcome = Result<(), String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn demo_site() -> SiteModel {
    load_site(SITE).expect("demo site")
}

fn mission(plan: &str, site: SiteModel, params: MissionParams) -> MissionOutcome {
    let inputs = MissionInputs::new(
        parse_plan(plan).expect("plan"),
        site,
        SensorCalibration::shipped(),
        params,
    );
    run_mission(&inputs, &mut NoObserver).expect("mission")
}

fn assay_records<'a>(records: &'a [LogRecord], target: &str, kind: &str) -> Vec<&'a LogRecord> {
    records
        .iter()
        .filter(|r| {
            r.event == "assay" && r.get("target") == Some(target) && r.get("kind") == Some(kind)
        })
        .collect()
}

fn within(start: Instant, limit: Duration) -> Outcome {
    let took = start.elapsed();
    check!(took < limit, "took {took:?}, limit {limit:?}");
    Ok(())
}

// 1 ------------------------------------------------------------------------

fn truth_table() -> Outcome {
    let start = Instant::now();
    for bits in 0u8..8 {
        let (p, c, a) = (bits & 4 != 0, bits & 2 != 0, bits & 1 != 0);
        // Protein means life now; carbohydrate without protein means life
        // once; ammonia alone decides nothing.
        let expected = match (p, c) {
            (true, _) => LifeClass::Extant,
            (false, true) => LifeClass::Extinct,
            (false, false) => LifeClass::NoPresenceOfLife,
        };
        let got = classify_life(p, c, a);
        check!(
            got == expected,
            "protein={p} carbohydrate={c} ammonia={a}: {got}, want {expected}"
        );
    }
    within(start, Duration::from_secs(1))
}

// 2 ------------------------------------------------------------------------

fn bio_load_mission() -> Outcome {
    let start = Instant::now();
    let out = mission(PLAN, demo_site(), MissionParams::shipped());
    check!(
        out.status() == MissionStatus::Complete,
        "status {:?}",
        out.status()
    );
    for (target, want) in [
        ("dextrose", LifeClass::Extinct),
        ("albumin", LifeClass::Extant),
        ("ammonia", LifeClass::NoPresenceOfLife),
    ] {
        let got = out
            .summary
            .targets
            .iter()
            .find(|t| t.name == target)
            .and_then(|t| t.verdict);
        check!(got == Some(want), "{target}: {got:?}, want {want}");
    }
    let records = out.log.records();
    for (kind, ms) in [("protein", "300000"), ("ammonia", "180000")] {
        let recs: Vec<_> = records
            .iter()
            .filter(|r| r.event == "assay" && r.get("kind") == Some(kind))
            .collect();
        check!(!recs.is_empty(), "no {kind} assay records");
        check!(
            recs.iter().all(|r| r.get("elapsed_ms") == Some(ms)),
            "{kind} assay durations differ from {ms} ms"
        );
    }
    within(start, Duration::from_secs(10))
}

// 3 ------------------------------------------------------------------------

const SMALL_SITE: &str = "[ambient]\nextent = 0 0 10 10\nco2_ppm = 420\nhumidity_pct = 20\n\n[patch p]\nregion = 0 0 10 10\nlayer = 0 1.0 0 0 10 7\n";
const SMALL_PLAN: &str =
    "[mission]\nseed = 1\n\n[target t]\nposition = 5 5\ndepths = 3\nassays = protein,ammonia\n";

fn assay_timing() -> Outcome {
    // Nominal: the albumin patch at 10 g with 20 ml of ninhydrin.
    let demo = mission(PLAN, demo_site(), MissionParams::shipped());
    let records = demo.log.records();
    for r in assay_records(records, "albumin", "protein") {
        check!(
            r.get("detected") == Some("true"),
            "albumin protein negative: {r}"
        );
        check!(
            r.get("elapsed_ms") == Some("300000"),
            "albumin protein: {r}"
        );
    }
    for r in assay_records(records, "ammonia", "ammonia") {
        check!(r.get("detected") == Some("true"), "ammonia negative: {r}");
        check!(r.get("elapsed_ms") == Some("180000"), "ammonia: {r}");
    }
    let dispensed: Vec<_> = records
        .iter()
        .filter(|r| r.event == "dispense" && r.get("line") == Some("ninhydrin"))
        .collect();
    check!(
        !dispensed.is_empty() && dispensed.iter().all(|r| r.get("ml") == Some("20")),
        "ninhydrin dispenses are not 20 ml"
    );

    // 1.0 mg/g protein: a 10 g sample holds 10 mg, a 3 g sample 3 mg. The
    // ninhydrin limit is 2 mg, or 8 mg below the nominal mass.
    let site = load_site(SMALL_SITE).map_err(|e| e.to_string())?;
    let nominal = mission(SMALL_PLAN, site.clone(), MissionParams::shipped());
    let r = assay_records(nominal.log.records(), "t", "protein");
    check!(
        r.len() == 1
            && r[0].get("elapsed_ms") == Some("300000")
            && r[0].get("detected") == Some("true"),
        "10 g sample: {r:?}"
    );
    let collection_rate = 0.5;
    let suction_ms = (3.0 / collection_rate * 1000.0) as u64;
    let params_text =
        defaults::PARAMS.replace("suction_ms = 20000", &format!("suction_ms = {suction_ms}"));
    check!(
        params_text != defaults::PARAMS,
        "shipped suction time changed"
    );
    let params = MissionParams::parse(&params_text).map_err(|e| e.to_string())?;
    check!(
        params.mechanism.collection_rate_g_per_s == collection_rate,
        "collection rate changed"
    );
    let small = mission(SMALL_PLAN, site, params);
    let recs = small.log.records();
    let sample = recs
        .iter()
        .find(|r| r.event == "sample")
        .ok_or("no sample record")?;
    check!(sample.get("mass_g") == Some("3"), "sample mass: {sample}");
    let r = assay_records(recs, "t", "protein");
    check!(
        r.len() == 1
            && r[0].get("elapsed_ms") == Some("420000")
            && r[0].get("detected") == Some("false"),
        "3 g sample: {r:?}"
    );
    Ok(())
}

// 4 ------------------------------------------------------------------------

/// Largest on-time in any window. A best window can always be moved to
/// start at an interval start: out of a gap by sliding right, out of an
/// interval by sliding left, neither of which loses on-time.
fn brute_force_peak(intervals: &[Interval], window_ms: u64) -> u64 {
    intervals
        .iter()
        .map(|w| {
            let (lo, hi) = (w.start_ms, w.start_ms + window_ms);
            intervals
                .iter()
                .map(|iv| iv.end_ms.min(hi).saturating_sub(iv.start_ms.max(lo)))
                .sum::<u64>()
        })
        .max()
        .unwrap_or(0)
}

fn duty_cycle() -> Outcome {
    let start = Instant::now();
    let budget = DutyBudget::default();
    check!(
        budget.window_ms == 1_200_000 && budget.max_on_ms == 120_000,
        "budget {budget:?}"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut waits = 0;
    for schedule in 0..10_000 {
        let mut act = Actuator::new("a", budget);
        let mut now = 0u64;
        for _ in 0..rng.gen_range(1..40) {
            now += rng.gen_range(0..600_000);
            let d = rng.gen_range(1..=budget.max_on_ms);
            match act.run(now, d).map_err(|e| e.to_string())? {
                DutyDecision::Allowed => {}
                DutyDecision::WaitUntil(t) => {
                    check!(t > now, "schedule {schedule}: wait until {t} at {now}");
                    waits += 1;
                    now = t;
                    let again = act.run(now, d).map_err(|e| e.to_string())?;
                    check!(
                        again == DutyDecision::Allowed,
                        "schedule {schedule}: refused at its own wait time"
                    );
                }
            }
        }
        let ivs = act.on_intervals();
        check!(
            ivs.windows(2).all(|w| w[0].end_ms <= w[1].start_ms),
            "schedule {schedule}: overlapping intervals"
        );
        let peak = brute_force_peak(ivs, budget.window_ms);
        check!(
            peak <= budget.max_on_ms,
            "schedule {schedule}: {peak} ms on in one window"
        );
    }
    check!(waits > 1000, "only {waits} requests were ever deferred");
    within(start, Duration::from_secs(30))
}

// 5 ------------------------------------------------------------------------

fn depth_capability() -> Outcome {
    let site = demo_site();
    let params = MissionParams::shipped();
    let cfg = params.mechanism.clone();
    check!(cfg.max_reach_cm > 5.0, "reach {} cm", cfg.max_reach_cm);
    let at = Point2::new(9.5, 2.5);
    let just_beyond = f64::from_bits(cfg.max_reach_cm.to_bits() + 1);
    for (depth, ok) in [
        (6.0, true),
        (cfg.max_reach_cm, true),
        (just_beyond, false),
        (9.0, false),
    ] {
        let mut m = Mechanism::new(cfg.clone()).map_err(|e| e.to_string())?;
        let now = match m
            .position_pump(cfg.pump_target_mm, 0)
            .map_err(|e| e.to_string())?
        {
            Motion::Done(plan) => plan.finished_ms,
            Motion::WaitUntil(t) => return Err(format!("positioning waits until {t}")),
        };
        let got = m.run_suction(&site, at, depth, cfg.suction_ms, now);
        match (ok, got) {
            (true, Ok(Motion::Done((sample, _)))) => {
                check!(sample.depth_cm == depth, "sample depth {}", sample.depth_cm)
            }
            (false, Err(MechanismError::DepthBeyondReach { .. })) => {}
            (_, other) => return Err(format!("depth {depth} cm: {other:?}")),
        }
    }
    // Through a whole mission: 6 cm is sampled, an unreachable depth fails
    // every attempt and the target is skipped.
    let plan = PLAN.replace(
        "depths = 2 6\nassays = protein,carbohydrate,ammonia\n\n[target ammonia]",
        "depths = 9\nassays = protein\n\n[target ammonia]",
    );
    check!(plan != PLAN, "demo plan layout changed");
    let out = mission(&plan, site, params);
    let recs = out.log.records();
    check!(
        out.status() == MissionStatus::Complete,
        "status {:?}",
        out.status()
    );
    check!(
        recs.iter()
            .any(|r| r.event == "sample" && r.get("depth_cm") == Some("6")),
        "no 6 cm sample"
    );
    check!(
        recs.iter()
            .any(|r| r.event == "target_skipped" && r.get("target") == Some("albumin")),
        "unreachable target not skipped"
    );
    Ok(())
}

// 6 ------------------------------------------------------------------------

fn turntable_geometry() -> Outcome {
    // 360 / 1.8 = 200 motor steps per turn, 3:1 reduction gives 600 per
    // plate turn, shared by three slots.
    let steps_per_slot = (360.0f64 / 1.8).round() as u64 * 3 / 3;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..1000 {
        let mut tt = Turntable::new(TurntableGeometry::default()).map_err(|e| e.to_string())?;
        let mut n = 0usize;
        let mut now = 0;
        for _ in 0..rng.gen_range(0..50) {
            let k = rng.gen_range(1..=5);
            now = tt.advance(k, now).map_err(|e| e.to_string())?;
            n += k;
        }
        check!(
            tt.current_slot() == n % 3,
            "case {case}: slot {} after {n}",
            tt.current_slot()
        );
        check!(
            tt.motor_steps_taken() == steps_per_slot * n as u64,
            "case {case}: {} steps after {n} slots",
            tt.motor_steps_taken()
        );
    }
    Ok(())
}

// 7 ------------------------------------------------------------------------

fn text(rng: &mut ChaCha8Rng, max: usize) -> String {
    let pool = [
        'a', 'Z', '0', ' ', '=', '%', '\n', '\t', 'é', '火', '🚀', '"', '\\',
    ];
    (0..rng.gen_range(0..=max))
        .map(|_| pool[rng.gen_range(0..pool.len())])
        .collect()
}

fn ident(rng: &mut ChaCha8Rng) -> String {
    let mut s = String::from("k");
    s.extend((0..rng.gen_range(0..8)).map(|_| char::from(rng.sample(Alphanumeric))));
    s
}

fn value(rng: &mut ChaCha8Rng) -> f64 {
    match rng.gen_range(0..4) {
        0 => 0.0,
        1 => -0.0,
        2 => rng.gen_range(-1e6..1e6),
        _ => f64::from_bits(rng.gen::<u64>() & !(0x7FFu64 << 52)),
    }
}

fn reading(rng: &mut ChaCha8Rng) -> Reading {
    match rng.gen_range(0..3) {
        0 => Reading::Fault(SensorFault::SignalOutOfRange),
        1 => Reading::Fault(SensorFault::ProbeNotDeployed),
        _ => Reading::Value(value(rng)),
    }
}

fn random_message(rng: &mut ChaCha8Rng) -> Message {
    let kinds = AssayKind::ALL;
    let classes = [
        LifeClass::Extant,
        LifeClass::Extinct,
        LifeClass::NoPresenceOfLife,
    ];
    match rng.gen_range(0..7) {
        0 => Message::SensorFrame(SensorFrame {
            t_ms: rng.gen(),
            rgb: Rgb::new(rng.gen(), rng.gen(), rng.gen()),
            alcohol_detected: rng.gen(),
            co2_ppm: reading(rng),
            formaldehyde_ppm: reading(rng),
            humidity_pct: value(rng),
            ammonia_ppm: reading(rng),
            soil_moisture_pct: value(rng),
            ph: reading(rng),
        }),
        1 => Message::AssayResult(AssayResultMsg {
            t_ms: rng.gen(),
            target: text(rng, 12),
            depth_cm: value(rng),
            kind: kinds[rng.gen_range(0..3)],
            detected: rng.gen(),
            bin: rng.gen(),
            elapsed_ms: rng.gen(),
            contaminated: rng.gen(),
        }),
        2 => Message::LifeVerdict(LifeVerdictMsg {
            t_ms: rng.gen(),
            target: text(rng, 12),
            verdict: classes[rng.gen_range(0..3)],
            contaminated: rng.gen(),
        }),
        3 => Message::LogEvent(LogRecord {
            t_ms: rng.gen(),
            seq: rng.gen(),
            event: ident(rng),
            fields: (0..rng.gen_range(0..6))
                .map(|_| (ident(rng), text(rng, 10)))
                .collect(),
        }),
        4 => Message::Ack { seq: rng.gen() },
        5 => Message::CmdStart,
        _ => Message::CmdAbort {
            reason: text(rng, 30),
        },
    }
}

fn telemetry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..5000 {
        let msg = random_message(&mut rng);
        let bytes = encode(&msg).map_err(|e| e.to_string())?;
        match decode(&bytes) {
            Ok((back, used)) if back == msg && used == bytes.len() => {}
            other => return Err(format!("message {i}: {msg:?} came back as {other:?}")),
        }
    }

    let frame = encode(&Message::LifeVerdict(LifeVerdictMsg {
        t_ms: 900_000,
        target: "albumin".into(),
        verdict: LifeClass::Extant,
        contaminated: false,
    }))
    .map_err(|e| e.to_string())?;
    // Trailing zeros let a damaged length field be judged instead of
    // waiting for more input.
    let pad = vec![0u8; 65_536 + 12];
    for bit in 0..frame.len() * 8 {
        let mut bad = frame.clone();
        bad[bit / 8] ^= 1 << (bit % 8);
        bad.extend_from_slice(&pad);
        match decode(&bad) {
            Err(DecodeError::Incomplete { .. }) | Ok(_) => {
                return Err(format!("flip of bit {bit} went unnoticed"))
            }
            Err(_) => {}
        }
    }

    for case in 0..500 {
        let msgs: Vec<Message> = (0..rng.gen_range(1..20))
            .map(|_| random_message(&mut rng))
            .collect();
        let mut stream = Vec::new();
        for m in &msgs {
            stream.extend(encode(m).map_err(|e| e.to_string())?);
        }
        let mut dec = StreamDecoder::new();
        let mut out = Vec::new();
        let mut at = 0;
        while at < stream.len() {
            let end = (at + rng.gen_range(0..=64)).min(stream.len());
            dec.push(&stream[at..end]);
            at = end;
            for item in dec.by_ref() {
                out.push(item.map_err(|e| format!("case {case}: {e}"))?);
            }
        }
        check!(
            out == msgs && dec.buffered() == 0,
            "case {case}: sequence changed by chunking"
        );
    }
    Ok(())
}

// 8 ------------------------------------------------------------------------

fn determinism() -> Outcome {
    let a = mission(PLAN, demo_site(), MissionParams::shipped());
    let b = mission(PLAN, demo_site(), MissionParams::shipped());
    let (ta, tb) = (a.log.to_text(), b.log.to_text());
    check!(ta == tb, "logs differ");
    let report = summary_from_log(&ta).map_err(|e| e.to_string())?;
    let replayed = replay(&ta).map_err(|e| e.to_string())?;
    check!(
        report.render() == replayed.render(),
        "report and replay differ"
    );
    check!(
        report.render() == a.summary.render(),
        "report differs from the live summary"
    );
    check!(
        parse_log(&ta).map_err(|e| e.to_string())?.len() == a.log.len(),
        "record count"
    );
    Ok(())
}

// 9 ------------------------------------------------------------------------

fn random_gas(rng: &mut ChaCha8Rng) -> GasCalibration {
    GasCalibration {
        vc_volts: rng.gen_range(3.0..12.0),
        rl_ohms: rng.gen_range(1e3..1e5),
        ro_ohms: rng.gen_range(1e3..1e5),
        curve_a: rng.gen_range(0.1..1000.0),
        curve_b: rng.gen_range(-5.0..-0.1),
        noise: 0.0,
    }
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn sensor_transfer() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..1000 {
        let cal = random_gas(&mut rng);
        let mut volts: Vec<f64> = (0..200)
            .map(|_| rng.gen_range(0.001..0.999) * cal.vc_volts)
            .collect();
        volts.sort_by(f64::total_cmp);
        let ppm: Vec<f64> = volts
            .iter()
            .map(|&v| gas_ppm(v, &cal))
            .collect::<Result<_, _>>()
            .map_err(|e| format!("case {case}: {e:?}"))?;
        check!(
            ppm.windows(2).all(|w| w[0] <= w[1]),
            "case {case}: not monotone for {cal:?}"
        );

        for &v in volts.iter().step_by(20) {
            let c = gas_ppm(v, &cal).unwrap();
            if !(c.is_finite() && c > 0.0) {
                continue;
            }
            let v2 = cal.output_voltage(c);
            let c2 = gas_ppm(v2, &cal).map_err(|e| format!("case {case}: {e:?}"))?;
            check!(
                relative(v2, v) <= 1e-9,
                "case {case}: {v} V -> {c} ppm -> {v2} V"
            );
            check!(relative(c2, c) <= 1e-9, "case {case}: {c} ppm -> {c2} ppm");
        }

        let lo: [f64; 3] = std::array::from_fn(|_| rng.gen_range(100.0..5000.0));
        let hi: [f64; 3] = std::array::from_fn(|i| lo[i] + rng.gen_range(1.0..20000.0));
        let color = ColorCalibration {
            f_min: lo,
            f_max: hi,
            noise: 0.0,
        };
        check!(
            map_color_raw(lo, &color) == Rgb::new(0, 0, 0),
            "case {case}: low end"
        );
        check!(
            map_color_raw(hi, &color) == Rgb::new(255, 255, 255),
            "case {case}: high end"
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("life classification truth table", truth_table),
        ("bio-load demo mission", bio_load_mission),
        ("assay timing", assay_timing),
        ("duty-cycle safety", duty_cycle),
        ("depth capability", depth_capability),
        ("turntable geometry", turntable_geometry),
        ("telemetry codec", telemetry),
        ("determinism", determinism),
        ("sensor transfer functions", sensor_transfer),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(()) => println!("PASS {} {name} ({secs:.2} s)", i + 1),
            Err(e) => {
                failed += 1;
                println!("FAIL {} {name} ({secs:.2} s): {e}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
