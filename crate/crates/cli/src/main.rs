//! `astrolab`: run simulated life-detection missions, report on their logs
//! and host the ground station.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration or input error,
//! 3 mission aborted.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use astrolab_core::env::load_site;
use astrolab_core::mission::{
    parse_plan, replay, run_mission, summary_from_log, MissionError, MissionInputs,
    MissionObserver, MissionStatus, NoObserver,
};
use astrolab_core::params::MissionParams;
use astrolab_core::sensors::SensorCalibration;
use astrolab_telemetry::{GroundStation, TelemetryLink, TelemetryObserver};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

const CONFIG_DIR_ENV: &str = "ASTROLAB_CONFIG_DIR";
const LOG_FILE: &str = "mission.log";
const CONNECT_TIMEOUT: Duration = Duration::from_secs(10);
const LINGER: Duration = Duration::from_secs(10);

#[derive(Debug, Parser)]
#[command(name = "astrolab", version, about = "Rover life-detection bench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a mission and write its log.
    Run(RunArgs),
    /// Print the summary recorded in a mission log.
    Report(LogArgs),
    /// Recompute the summary from a mission log's primary records.
    Replay(LogArgs),
    /// Receive rover telemetry until interrupted.
    Groundstation(StationArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    plan: PathBuf,
    /// Site description; defaults to the plan's `site` key.
    #[arg(long)]
    site: Option<PathBuf>,
    /// Replaces the plan's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    log: Option<PathBuf>,
    /// Ground station endpoint; defaults to the plan's `telemetry` key.
    #[arg(long, value_name = "HOST:PORT")]
    telemetry: Option<String>,
    /// Sensor calibration file.
    #[arg(long)]
    calib: Option<PathBuf>,
    /// Assay, mechanism and rover parameters.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LogArgs {
    #[arg(long, value_name = "DIR")]
    log: PathBuf,
}

#[derive(Debug, Args)]
struct StationArgs {
    #[arg(long, value_name = "HOST:PORT")]
    listen: String,
    #[arg(long, value_name = "DIR")]
    store: PathBuf,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

fn config(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn io_failure(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))
}

/// Explicit flag, then `$ASTROLAB_CONFIG_DIR/<name>`, then nothing.
fn config_path(flag: Option<&PathBuf>, name: &str) -> Option<PathBuf> {
    flag.cloned()
        .or_else(|| std::env::var_os(CONFIG_DIR_ENV).map(|d| Path::new(&d).join(name)))
}

fn load_inputs(args: &RunArgs) -> Result<MissionInputs, Failure> {
    let mut plan = parse_plan(&read(&args.plan)?)
        .map_err(|e| config(format!("{}: {e}", args.plan.display())))?;
    if let Some(seed) = args.seed {
        plan.seed = seed;
    }
    let site_path = match (&args.site, &plan.site) {
        (Some(p), _) => p.clone(),
        (None, Some(s)) => args.plan.parent().unwrap_or(Path::new("")).join(s),
        (None, None) => {
            return Err(config(
                "no site given: pass --site or set `site` in the plan",
            ))
        }
    };
    let site = load_site(&read(&site_path)?)
        .map_err(|e| config(format!("{}: {e}", site_path.display())))?;
    let calibration = match config_path(args.calib.as_ref(), "calibration.conf") {
        Some(p) => SensorCalibration::parse(&read(&p)?)
            .map_err(|e| config(format!("{}: {e}", p.display())))?,
        None => SensorCalibration::shipped(),
    };
    let params = match config_path(args.params.as_ref(), "params.conf") {
        Some(p) => {
            MissionParams::parse(&read(&p)?).map_err(|e| config(format!("{}: {e}", p.display())))?
        }
        None => MissionParams::shipped(),
    };
    for w in &plan.warnings {
        warn!("{}: {w}", args.plan.display());
    }
    Ok(MissionInputs::new(plan, site, calibration, params))
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let inputs = load_inputs(args)?;
    let endpoint = args
        .telemetry
        .clone()
        .or_else(|| inputs.plan.telemetry.clone());
    let link = match &endpoint {
        Some(addr) => Some(
            TelemetryLink::connect(addr, CONNECT_TIMEOUT)
                .map_err(|e| config(format!("{addr}: {e}")))?,
        ),
        None => None,
    };
    let mut quiet = NoObserver;
    let mut relay = link.as_ref().map(TelemetryObserver::new);
    let observer: &mut dyn MissionObserver = match relay.as_mut() {
        Some(r) => r,
        None => &mut quiet,
    };
    let outcome = run_mission(&inputs, observer).map_err(|e| match e {
        MissionError::Config(m) => config(m),
        other => io_failure(other.to_string()),
    })?;
    if let Some(link) = link {
        let report = link.finish(LINGER);
        info!(
            "telemetry: {} frames sent, {} acknowledged",
            report.frames_sent, report.acks_received
        );
        if report.acks_received < report.frames_sent {
            warn!("telemetry: some frames were not acknowledged");
        }
    }
    if let Some(dir) = &args.log {
        fs::create_dir_all(dir).map_err(|e| io_failure(format!("{}: {e}", dir.display())))?;
        let path = dir.join(LOG_FILE);
        fs::write(&path, outcome.log.to_text())
            .map_err(|e| io_failure(format!("{}: {e}", path.display())))?;
    }
    print!("{}", outcome.summary.render());
    match outcome.status() {
        MissionStatus::Complete => Ok(()),
        MissionStatus::Aborted => Err(Failure {
            code: 3,
            message: "mission aborted".into(),
        }),
    }
}

fn read_log(dir: &Path) -> Result<String, Failure> {
    let path = dir.join(LOG_FILE);
    let text = read(&path)?;
    if text.is_empty() {
        return Err(config(format!("{}: empty log", path.display())));
    }
    Ok(text)
}

fn cmd_report(args: &LogArgs, recompute: bool) -> Result<(), Failure> {
    let text = read_log(&args.log)?;
    let summary = if recompute {
        replay(&text)
    } else {
        summary_from_log(&text)
    }
    .map_err(|e| config(format!("{}: {e}", args.log.join(LOG_FILE).display())))?;
    print!("{}", summary.render());
    Ok(())
}

fn cmd_groundstation(args: &StationArgs) -> Result<(), Failure> {
    let station = GroundStation::spawn(&args.listen, &args.store)
        .map_err(|e| config(format!("{}: {e}", args.listen)))?;
    let stop = station.stopper();
    ctrlc::set_handler(move || stop.store(true, std::sync::atomic::Ordering::SeqCst))
        .map_err(|e| io_failure(format!("signal handler: {e}")))?;
    eprintln!("listening on {}", station.local_addr());
    for s in station.wait() {
        println!(
            "connection id={} peer={} accepted={} rejected={} abort_sent={}",
            s.id, s.peer, s.accepted, s.rejected, s.abort_sent
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Report(a) => cmd_report(a, false),
        Command::Replay(a) => cmd_report(a, true),
        Command::Groundstation(a) => cmd_groundstation(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("astrolab: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
