//! Ground-station service: accepts rover connections, stores every valid
//! frame, acknowledges it and relays operator commands.
//!
//! Each connection `n` is stored in `<store>/conn-<n>.log` in mission-log
//! line format, with `seq` equal to the Ack id. Dropping a file named
//! `ABORT` into the store directory sends `CmdAbort` (with the file's first
//! line as reason) to every connected rover that has not yet been told.

use std::fs::{self, File};
use std::io::{self, BufWriter, ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use astrolab_core::conf::Num;
use astrolab_core::fields;
use astrolab_core::mission::LogRecord;
use astrolab_core::sensors::{Reading, SensorFault};
use log::{info, warn};

use crate::codec::{encode, Message};
use crate::stream::StreamDecoder;

const POLL: Duration = Duration::from_millis(20);

pub const ABORT_FILE: &str = "ABORT";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConnectionStats {
    pub id: u64,
    pub peer: String,
    pub accepted: u64,
    pub rejected: u64,
    pub abort_sent: bool,
    /// Why the connection ended early, if it did.
    pub error: Option<String>,
}

fn reading(r: &Reading) -> String {
    match r {
        Reading::Value(v) => Num(*v).to_string(),
        Reading::Fault(SensorFault::SignalOutOfRange) => "fault:signal".into(),
        Reading::Fault(SensorFault::ProbeNotDeployed) => "fault:probe".into(),
    }
}

/// Store form of a received message.
pub fn store_record(msg: &Message, seq: u64, last_t_ms: u64) -> LogRecord {
    let (t_ms, event, fields) = match msg {
        Message::SensorFrame(f) => (
            f.t_ms,
            "sensor_frame",
            fields![
                ("rgb", f.rgb),
                ("alcohol", f.alcohol_detected),
                ("co2_ppm", reading(&f.co2_ppm)),
                ("formaldehyde_ppm", reading(&f.formaldehyde_ppm)),
                ("humidity_pct", Num(f.humidity_pct)),
                ("ammonia_ppm", reading(&f.ammonia_ppm)),
                ("moisture_pct", Num(f.soil_moisture_pct)),
                ("ph", reading(&f.ph)),
            ],
        ),
        Message::AssayResult(a) => (
            a.t_ms,
            "assay_result",
            fields![
                ("target", a.target),
                ("depth_cm", Num(a.depth_cm)),
                ("kind", a.kind),
                ("detected", a.detected),
                ("bin", a.bin),
                ("elapsed_ms", a.elapsed_ms),
                ("contaminated", a.contaminated),
            ],
        ),
        Message::LifeVerdict(v) => (
            v.t_ms,
            "life_verdict",
            fields![
                ("target", v.target),
                ("verdict", v.verdict),
                ("contaminated", v.contaminated)
            ],
        ),
        Message::LogEvent(r) => {
            let mut f = fields![("rover_seq", r.seq), ("event", r.event)];
            f.extend(r.fields.iter().cloned());
            (r.t_ms, "log_event", f)
        }
        Message::Ack { seq } => (last_t_ms, "ack", fields![("id", seq)]),
        Message::CmdStart => (last_t_ms, "cmd_start", vec![]),
        Message::CmdAbort { reason } => (last_t_ms, "cmd_abort", fields![("reason", reason)]),
    };
    LogRecord {
        t_ms: t_ms.max(last_t_ms),
        seq,
        event: event.to_string(),
        fields,
    }
}

fn abort_request(store: &Path) -> Option<String> {
    let text = fs::read_to_string(store.join(ABORT_FILE)).ok()?;
    let reason = text.lines().next().unwrap_or("").trim();
    Some(if reason.is_empty() {
        "operator abort".to_string()
    } else {
        reason.to_string()
    })
}

struct Connection {
    stream: TcpStream,
    store: BufWriter<File>,
    store_dir: PathBuf,
    decoder: StreamDecoder,
    next_ack: u32,
    last_t_ms: u64,
    started: bool,
    stats: Arc<Mutex<ConnectionStats>>,
}

impl Connection {
    fn send(&mut self, msg: &Message) -> io::Result<()> {
        let bytes = encode(msg).map_err(|e| io::Error::new(ErrorKind::InvalidData, e))?;
        self.stream.write_all(&bytes)
    }

    fn send_abort(&mut self) -> io::Result<()> {
        if self.stats.lock().expect("stats").abort_sent {
            return Ok(());
        }
        if let Some(reason) = abort_request(&self.store_dir) {
            self.send(&Message::CmdAbort { reason })?;
            self.stats.lock().expect("stats").abort_sent = true;
        }
        Ok(())
    }

    fn handle(&mut self, msg: Message) -> io::Result<()> {
        let seq = self.next_ack;
        let rec = store_record(&msg, u64::from(seq), self.last_t_ms);
        self.last_t_ms = rec.t_ms;
        writeln!(self.store, "{rec}")?;
        self.store.flush()?;
        self.next_ack += 1;
        self.stats.lock().expect("stats").accepted += 1;
        self.send(&Message::Ack { seq })?;
        if !self.started {
            self.started = true;
            self.send_abort()?;
            if !self.stats.lock().expect("stats").abort_sent {
                self.send(&Message::CmdStart)?;
            }
        }
        Ok(())
    }

    fn serve(&mut self, shutdown: &AtomicBool) -> io::Result<()> {
        let mut buf = [0u8; 8192];
        while !shutdown.load(Ordering::SeqCst) {
            match self.stream.read(&mut buf) {
                Ok(0) => break,
                Ok(n) => self.decoder.push(&buf[..n]),
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
                Err(e) if e.kind() == ErrorKind::Interrupted => continue,
                Err(e) => return Err(e),
            }
            while let Some(item) = self.decoder.next_message() {
                match item {
                    Ok(msg) => self.handle(msg)?,
                    Err(e) => {
                        warn!(
                            "connection {}: rejected frame: {e}",
                            self.stats.lock().expect("stats").id
                        );
                        self.stats.lock().expect("stats").rejected += 1;
                    }
                }
            }
            if self.started {
                self.send_abort()?;
            }
        }
        Ok(())
    }
}

/// Handle to a running ground station.
pub struct GroundStation {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    accept: Option<JoinHandle<Vec<JoinHandle<()>>>>,
    stats: Arc<Mutex<Vec<Arc<Mutex<ConnectionStats>>>>>,
}

impl GroundStation {
    /// Bind `listen` and start serving. The store directory is created if
    /// missing.
    pub fn spawn(listen: &str, store: &Path) -> io::Result<Self> {
        fs::create_dir_all(store)?;
        let listener = TcpListener::bind(listen)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let stats: Arc<Mutex<Vec<Arc<Mutex<ConnectionStats>>>>> = Arc::default();
        let store = store.to_path_buf();
        let accept = {
            let shutdown = Arc::clone(&shutdown);
            let stats = Arc::clone(&stats);
            thread::spawn(move || accept_loop(listener, store, shutdown, stats))
        };
        info!("ground station listening on {addr}");
        Ok(Self {
            addr,
            shutdown,
            accept: Some(accept),
            stats,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Snapshot of per-connection counters, in connection order.
    pub fn stats(&self) -> Vec<ConnectionStats> {
        self.stats
            .lock()
            .expect("stats")
            .iter()
            .map(|s| s.lock().expect("stats").clone())
            .collect()
    }

    /// A handle that can stop the station from another thread.
    pub fn stopper(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.shutdown)
    }

    /// Stop accepting, close every connection and wait for the threads.
    pub fn shutdown(mut self) -> Vec<ConnectionStats> {
        self.stop();
        self.stats()
    }

    /// Block until the station is stopped through [`GroundStation::stopper`].
    pub fn wait(mut self) -> Vec<ConnectionStats> {
        if let Some(h) = self.accept.take() {
            for c in h.join().unwrap_or_default() {
                let _ = c.join();
            }
        }
        self.stats()
    }

    fn stop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(h) = self.accept.take() {
            for c in h.join().unwrap_or_default() {
                let _ = c.join();
            }
        }
    }
}

impl Drop for GroundStation {
    fn drop(&mut self) {
        self.stop();
    }
}

fn accept_loop(
    listener: TcpListener,
    store: PathBuf,
    shutdown: Arc<AtomicBool>,
    stats: Arc<Mutex<Vec<Arc<Mutex<ConnectionStats>>>>>,
) -> Vec<JoinHandle<()>> {
    let next_id = AtomicU64::new(0);
    let mut workers = Vec::new();
    while !shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let id = next_id.fetch_add(1, Ordering::SeqCst);
                let conn_stats = Arc::new(Mutex::new(ConnectionStats {
                    id,
                    peer: peer.to_string(),
                    ..ConnectionStats::default()
                }));
                stats.lock().expect("stats").push(Arc::clone(&conn_stats));
                let store = store.clone();
                let shutdown = Arc::clone(&shutdown);
                workers.push(thread::spawn(move || {
                    if let Err(e) = run_connection(stream, &store, id, &shutdown, &conn_stats) {
                        warn!("connection {id} dropped: {e}");
                        conn_stats.lock().expect("stats").error = Some(e.to_string());
                    }
                }));
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => {
                warn!("accept failed: {e}");
                thread::sleep(POLL);
            }
        }
    }
    workers
}

fn run_connection(
    stream: TcpStream,
    store_dir: &Path,
    id: u64,
    shutdown: &AtomicBool,
    stats: &Arc<Mutex<ConnectionStats>>,
) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(POLL))?;
    stream.set_nodelay(true)?;
    let file = File::create(store_dir.join(format!("conn-{id}.log")))?;
    let mut conn = Connection {
        stream,
        store: BufWriter::new(file),
        store_dir: store_dir.to_path_buf(),
        decoder: StreamDecoder::new(),
        next_ack: 0,
        last_t_ms: 0,
        started: false,
        stats: Arc::clone(stats),
    };
    let result = conn.serve(shutdown);
    let _ = conn.stream.shutdown(std::net::Shutdown::Both);
    result
}
