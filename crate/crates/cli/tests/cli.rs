use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::thread;

use astrolab_core::mission::{parse_log, replay};
use astrolab_telemetry::{encode, Message, StreamDecoder};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_astrolab"));
    c.env_remove("ASTROLAB_CONFIG_DIR").env_remove("RUST_LOG");
    c
}

fn demo(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../demo")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn run_demo(log: &Path, extra: &[&str]) -> Output {
    let plan = demo("mission.plan");
    let site = demo("site.conf");
    let mut args = vec![
        "run",
        "--plan",
        plan.to_str().unwrap(),
        "--site",
        site.to_str().unwrap(),
        "--log",
        log.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn demo_run_succeeds_and_writes_its_log() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_demo(dir.path(), &[]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(dir.path().join("mission.log")).unwrap();
    assert!(parse_log(&text).is_ok());
    let summary = stdout(&out);
    for line in [
        "target name=dextrose verdict=Extinct contaminated=false",
        "target name=albumin verdict=Extant contaminated=false",
        "target name=ammonia verdict=NPL contaminated=false",
        "status value=complete",
    ] {
        assert!(summary.lines().any(|l| l == line), "missing `{line}`");
    }
}

#[test]
fn site_defaults_to_the_plan_entry() {
    let dir = tempfile::tempdir().unwrap();
    let plan = demo("mission.plan");
    let out = run(&[
        "run",
        "--plan",
        plan.to_str().unwrap(),
        "--log",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), stdout(&run_demo(dir.path(), &[])));
}

#[test]
fn seed_override_changes_the_log() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_demo(a.path(), &[]);
    run_demo(b.path(), &["--seed", "7"]);
    let la = fs::read_to_string(a.path().join("mission.log")).unwrap();
    let lb = fs::read_to_string(b.path().join("mission.log")).unwrap();
    assert!(lb.lines().next().unwrap().contains("seed=7"));
    assert_ne!(la, lb);
}

#[test]
fn missing_site_file_is_a_config_error() {
    let plan = demo("mission.plan");
    let out = run(&[
        "run",
        "--plan",
        plan.to_str().unwrap(),
        "--site",
        "/nonexistent/site.conf",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(!out.stderr.is_empty());
}

#[test]
fn bad_config_dir_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("calibration.conf"), "[nonsense]\n").unwrap();
    let plan = demo("mission.plan");
    let out = bin()
        .args(["run", "--plan", plan.to_str().unwrap()])
        .env("ASTROLAB_CONFIG_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_is_repeatable_and_equals_replay() {
    let dir = tempfile::tempdir().unwrap();
    let live = stdout(&run_demo(dir.path(), &[]));
    let log = dir.path().to_str().unwrap();
    let r1 = run(&["report", "--log", log]);
    let r2 = run(&["report", "--log", log]);
    let rp = run(&["replay", "--log", log]);
    assert_eq!(r1.status.code(), Some(0));
    assert_eq!(rp.status.code(), Some(0));
    assert_eq!(stdout(&r1), stdout(&r2));
    assert_eq!(stdout(&r1), stdout(&rp));
    assert_eq!(stdout(&r1), live);
}

#[test]
fn empty_or_malformed_logs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().to_str().unwrap();
    assert_eq!(run(&["report", "--log", log]).status.code(), Some(2));
    fs::write(dir.path().join("mission.log"), "").unwrap();
    assert_eq!(run(&["replay", "--log", log]).status.code(), Some(2));
    fs::write(
        dir.path().join("mission.log"),
        "t=0 seq=1 ev=mission_start\n",
    )
    .unwrap();
    assert_eq!(run(&["report", "--log", log]).status.code(), Some(2));
}

struct Station {
    child: Child,
    addr: String,
}

fn start_station(store: &Path) -> Station {
    let mut child = bin()
        .args([
            "groundstation",
            "--listen",
            "127.0.0.1:0",
            "--store",
            store.to_str().unwrap(),
        ])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut err = BufReader::new(child.stderr.take().unwrap());
    let mut line = String::new();
    err.read_line(&mut line).unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on ")
        .expect("banner")
        .to_string();
    thread::spawn(move || std::io::copy(&mut err, &mut std::io::sink()));
    Station { child, addr }
}

fn interrupt(mut st: Station) -> (Option<i32>, String) {
    unsafe {
        libc::kill(st.child.id() as libc::pid_t, libc::SIGINT);
    }
    let status = st.child.wait().unwrap();
    let mut out = String::new();
    st.child
        .stdout
        .take()
        .unwrap()
        .read_to_string(&mut out)
        .unwrap();
    (status.code(), out)
}

#[test]
fn groundstation_stores_a_rover_run() {
    let store = tempfile::tempdir().unwrap();
    let log = tempfile::tempdir().unwrap();
    let st = start_station(store.path());
    let out = run_demo(log.path(), &["--telemetry", &st.addr.clone()]);
    assert_eq!(out.status.code(), Some(0));
    let (code, stats) = interrupt(st);
    assert_eq!(code, Some(0));
    let stored = parse_log(&fs::read_to_string(store.path().join("conn-0.log")).unwrap()).unwrap();
    let mission = parse_log(&fs::read_to_string(log.path().join("mission.log")).unwrap()).unwrap();
    let mirrored = stored.iter().filter(|r| r.event == "log_event").count();
    assert_eq!(mirrored, mission.len() + 1);
    assert!(stored.iter().any(|r| r.event == "sensor_frame"));
    assert!(stats.starts_with("connection id=0 "));
    assert!(stats.contains(&format!("accepted={} rejected=0", stored.len())));
}

#[test]
fn idle_groundstation_stops_cleanly() {
    let store = tempfile::tempdir().unwrap();
    let st = start_station(store.path());
    let (code, stats) = interrupt(st);
    assert_eq!(code, Some(0));
    assert!(stats.is_empty());
    assert_eq!(fs::read_dir(store.path()).unwrap().count(), 0);
}

#[test]
fn groundstation_port_in_use() {
    let busy = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = busy.local_addr().unwrap().to_string();
    let store = tempfile::tempdir().unwrap();
    let out = run(&[
        "groundstation",
        "--listen",
        &addr,
        "--store",
        store.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn abort_file_aborts_the_run() {
    let store = tempfile::tempdir().unwrap();
    fs::write(store.path().join("ABORT"), "sandstorm\n").unwrap();
    let log = tempfile::tempdir().unwrap();
    let st = start_station(store.path());
    let out = run_demo(log.path(), &["--telemetry", &st.addr.clone()]);
    interrupt(st);
    assert_eq!(out.status.code(), Some(3));
    assert!(stdout(&out).ends_with("status value=aborted\n"));
    let text = fs::read_to_string(log.path().join("mission.log")).unwrap();
    assert!(text.contains("ev=aborted reason=sandstorm"));
    assert!(replay(&text).is_ok());
}

/// A station that starts the rover, waits for `frames` more frames and
/// then orders an abort. With `frames == 0` the abort follows the start
/// command directly, so the outcome does not depend on thread timing.
fn scripted_station(frames: usize) -> (String, thread::JoinHandle<usize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let handle = thread::spawn(move || {
        let (mut s, _) = listener.accept().unwrap();
        let mut dec = StreamDecoder::new();
        let mut seen = 0;
        let mut buf = [0u8; 4096];
        let mut started = false;
        loop {
            let n = s.read(&mut buf).unwrap();
            if n == 0 {
                return seen;
            }
            dec.push(&buf[..n]);
            while let Some(m) = dec.next_message() {
                m.unwrap();
                seen += 1;
                if !started {
                    started = true;
                    s.write_all(&encode(&Message::CmdStart).unwrap()).unwrap();
                }
                if seen == frames + 1 {
                    let abort = Message::CmdAbort {
                        reason: "scripted".into(),
                    };
                    s.write_all(&encode(&abort).unwrap()).unwrap();
                }
            }
        }
    });
    (addr, handle)
}

#[test]
fn scripted_abort_command_leaves_a_partial_log() {
    let (addr, station) = scripted_station(0);
    let log = tempfile::tempdir().unwrap();
    let out = run_demo(log.path(), &["--telemetry", &addr]);
    assert!(station.join().unwrap() >= 1);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(log.path().join("mission.log")).unwrap();
    let records = parse_log(&text).unwrap();
    assert_eq!(records.last().unwrap().event, "mission_end");
    assert!(records
        .iter()
        .any(|r| r.event == "aborted" && r.get("reason") == Some("scripted")));
    assert!(replay(&text).is_ok());
}
