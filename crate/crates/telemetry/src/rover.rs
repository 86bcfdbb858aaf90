//! Rover side of the link: a queued, non-blocking sender and a mission
//! observer that mirrors mission events onto the wire.

use std::io::{self, ErrorKind, Read, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use astrolab_core::assay::AssayResult;
use astrolab_core::fields;
use astrolab_core::life::LifeVerdict;
use astrolab_core::mission::{LogRecord, MissionObserver};
use astrolab_core::sensors::SensorFrame;
use log::warn;
use thiserror::Error;

use crate::codec::{encode, AssayResultMsg, EncodeError, LifeVerdictMsg, Message};
use crate::stream::StreamDecoder;

const READ_POLL: Duration = Duration::from_millis(50);

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("telemetry link: {0}")]
    Io(#[from] io::Error),
    #[error("telemetry link: {0}")]
    Encode(#[from] EncodeError),
    #[error("telemetry link: no address for `{0}`")]
    Resolve(String),
    #[error("telemetry link: {0}")]
    Handshake(String),
}

#[derive(Debug, Default)]
struct Shared {
    abort: Mutex<Option<String>>,
    acks: AtomicU64,
    closing: AtomicBool,
}

impl Shared {
    fn on_message(&self, msg: Message) {
        match msg {
            Message::Ack { .. } => {
                self.acks.fetch_add(1, Ordering::SeqCst);
            }
            Message::CmdAbort { reason } => {
                let mut slot = self.abort.lock().expect("abort");
                slot.get_or_insert(reason);
            }
            _ => {}
        }
    }
}

/// Totals after the link is closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkReport {
    pub frames_sent: u64,
    pub acks_received: u64,
}

pub struct TelemetryLink {
    tx: Option<mpsc::Sender<Message>>,
    writer: Option<JoinHandle<u64>>,
    reader: Option<JoinHandle<()>>,
    shared: Arc<Shared>,
    stream: TcpStream,
}

fn connect_any(addr: &str, timeout: Duration) -> Result<TcpStream, LinkError> {
    let mut last = None;
    for a in addr.to_socket_addrs()? {
        match TcpStream::connect_timeout(&a, timeout) {
            Ok(s) => return Ok(s),
            Err(e) => last = Some(e),
        }
    }
    Err(last.map_or_else(|| LinkError::Resolve(addr.to_string()), LinkError::Io))
}

impl TelemetryLink {
    /// Connect, announce ourselves and wait for the station's start or abort
    /// command. An abort at this point is remembered, not returned as an
    /// error, so the mission can record it.
    pub fn connect(addr: &str, timeout: Duration) -> Result<Self, LinkError> {
        let mut stream = connect_any(addr, timeout)?;
        stream.set_nodelay(true)?;
        let hello = Message::LogEvent(LogRecord {
            t_ms: 0,
            seq: 0,
            event: "hello".into(),
            fields: fields![("client", "astrolab")],
        });
        stream.write_all(&encode(&hello)?)?;

        let shared = Arc::new(Shared::default());
        shared.acks.store(0, Ordering::SeqCst);
        let mut decoder = StreamDecoder::new();
        let deadline = Instant::now() + timeout;
        stream.set_read_timeout(Some(READ_POLL))?;
        let mut buf = [0u8; 4096];
        let mut started = false;
        while !started {
            if Instant::now() > deadline {
                return Err(LinkError::Handshake(
                    "no start command from the station".into(),
                ));
            }
            match stream.read(&mut buf) {
                Ok(0) => return Err(LinkError::Handshake("station closed the connection".into())),
                Ok(n) => decoder.push(&buf[..n]),
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                    continue
                }
                Err(e) => return Err(e.into()),
            }
            while let Some(item) = decoder.next_message() {
                match item {
                    Ok(Message::CmdStart) => started = true,
                    Ok(m @ Message::CmdAbort { .. }) => {
                        shared.on_message(m);
                        started = true;
                    }
                    Ok(m) => shared.on_message(m),
                    Err(e) => warn!("telemetry: bad frame from station: {e}"),
                }
            }
        }

        let (tx, rx) = mpsc::channel::<Message>();
        let mut out = stream.try_clone()?;
        let writer = thread::spawn(move || {
            let mut sent = 1;
            for msg in rx {
                let bytes = match encode(&msg) {
                    Ok(b) => b,
                    Err(e) => {
                        warn!("telemetry: dropped unencodable message: {e}");
                        continue;
                    }
                };
                if let Err(e) = out.write_all(&bytes) {
                    warn!("telemetry: send failed: {e}");
                    break;
                }
                sent += 1;
            }
            sent
        });
        let mut input = stream.try_clone()?;
        let reader = {
            let shared = Arc::clone(&shared);
            thread::spawn(move || read_loop(&mut input, decoder, &shared))
        };
        Ok(Self {
            tx: Some(tx),
            writer: Some(writer),
            reader: Some(reader),
            shared,
            stream,
        })
    }

    /// Queue a message. Never blocks on the network.
    pub fn send(&self, msg: Message) {
        if let Some(tx) = &self.tx {
            let _ = tx.send(msg);
        }
    }

    /// Reason given by the station's abort command, once one has arrived.
    pub fn abort_reason(&self) -> Option<String> {
        self.shared.abort.lock().expect("abort").clone()
    }

    /// Flush the queue, half-close the connection and wait up to `linger`
    /// for the remaining acknowledgements.
    pub fn finish(mut self, linger: Duration) -> LinkReport {
        self.tx.take();
        let frames_sent = self.writer.take().map_or(0, |h| h.join().unwrap_or(0));
        let _ = self.stream.shutdown(Shutdown::Write);
        let deadline = Instant::now() + linger;
        while self.shared.acks.load(Ordering::SeqCst) < frames_sent && Instant::now() < deadline {
            thread::sleep(Duration::from_millis(5));
        }
        self.shared.closing.store(true, Ordering::SeqCst);
        let _ = self.stream.shutdown(Shutdown::Both);
        if let Some(h) = self.reader.take() {
            let _ = h.join();
        }
        LinkReport {
            frames_sent,
            acks_received: self.shared.acks.load(Ordering::SeqCst),
        }
    }
}

fn read_loop(stream: &mut TcpStream, mut decoder: StreamDecoder, shared: &Shared) {
    let mut buf = [0u8; 4096];
    loop {
        match stream.read(&mut buf) {
            Ok(0) => return,
            Ok(n) => decoder.push(&buf[..n]),
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                if shared.closing.load(Ordering::SeqCst) {
                    return;
                }
                continue;
            }
            Err(e) if e.kind() == ErrorKind::Interrupted => continue,
            Err(_) => return,
        }
        while let Some(item) = decoder.next_message() {
            match item {
                Ok(m) => shared.on_message(m),
                Err(e) => warn!("telemetry: bad frame from station: {e}"),
            }
        }
    }
}

/// Mirrors a mission onto a telemetry link and relays its abort command.
pub struct TelemetryObserver<'a> {
    link: &'a TelemetryLink,
}

impl<'a> TelemetryObserver<'a> {
    pub fn new(link: &'a TelemetryLink) -> Self {
        Self { link }
    }
}

impl MissionObserver for TelemetryObserver<'_> {
    fn on_record(&mut self, record: &LogRecord) {
        self.link.send(Message::LogEvent(record.clone()));
    }

    fn on_frame(&mut self, frame: &SensorFrame) {
        self.link.send(Message::SensorFrame(frame.clone()));
    }

    fn on_assay(&mut self, target: &str, depth_cm: f64, result: &AssayResult, t_ms: u64) {
        self.link.send(Message::AssayResult(AssayResultMsg {
            t_ms,
            target: target.to_string(),
            depth_cm,
            kind: result.kind,
            detected: result.detected,
            bin: u16::try_from(result.bin_index).unwrap_or(u16::MAX),
            elapsed_ms: result.elapsed_ms,
            contaminated: result.contaminated_input,
        }));
    }

    fn on_verdict(&mut self, target: &str, verdict: &LifeVerdict, t_ms: u64) {
        self.link.send(Message::LifeVerdict(LifeVerdictMsg {
            t_ms,
            target: target.to_string(),
            verdict: verdict.class,
            contaminated: verdict.contaminated_evidence,
        }));
    }

    fn should_abort(&mut self) -> Option<String> {
        self.link.abort_reason()
    }
}
