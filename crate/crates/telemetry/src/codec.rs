//! Frame layout and message payloads. See `docs/wire.md` for the byte
//! tables.

use astrolab_core::assay::AssayKind;
use astrolab_core::conf::is_identifier;
use astrolab_core::geom::Rgb;
use astrolab_core::life::LifeClass;
use astrolab_core::mission::LogRecord;
use astrolab_core::sensors::{Reading, SensorFault, SensorFrame};
use thiserror::Error;

pub const MAGIC: [u8; 2] = [0x4D, 0x52];
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 8;
pub const CRC_LEN: usize = 4;
pub const MAX_PAYLOAD: usize = 65_536;

pub mod msg_type {
    pub const SENSOR_FRAME: u8 = 0x01;
    pub const ASSAY_RESULT: u8 = 0x02;
    pub const LIFE_VERDICT: u8 = 0x03;
    pub const LOG_EVENT: u8 = 0x04;
    pub const ACK: u8 = 0x05;
    pub const CMD_START: u8 = 0x81;
    pub const CMD_ABORT: u8 = 0x82;
}

/// CRC-32/IEEE: reflected, initial value and final xor all ones.
pub fn crc32(bytes: &[u8]) -> u32 {
    crc32fast::hash(bytes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssayResultMsg {
    pub t_ms: u64,
    pub target: String,
    pub depth_cm: f64,
    pub kind: AssayKind,
    pub detected: bool,
    pub bin: u16,
    pub elapsed_ms: u64,
    pub contaminated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifeVerdictMsg {
    pub t_ms: u64,
    pub target: String,
    pub verdict: LifeClass,
    pub contaminated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    SensorFrame(SensorFrame),
    AssayResult(AssayResultMsg),
    LifeVerdict(LifeVerdictMsg),
    LogEvent(LogRecord),
    Ack { seq: u32 },
    CmdStart,
    CmdAbort { reason: String },
}

impl Message {
    pub fn msg_type(&self) -> u8 {
        match self {
            Message::SensorFrame(_) => msg_type::SENSOR_FRAME,
            Message::AssayResult(_) => msg_type::ASSAY_RESULT,
            Message::LifeVerdict(_) => msg_type::LIFE_VERDICT,
            Message::LogEvent(_) => msg_type::LOG_EVENT,
            Message::Ack { .. } => msg_type::ACK,
            Message::CmdStart => msg_type::CMD_START,
            Message::CmdAbort { .. } => msg_type::CMD_ABORT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("payload of {0} bytes exceeds the 65536 byte limit")]
    TooLarge(usize),
    #[error("string of {0} bytes does not fit a u16 length prefix")]
    StringTooLong(usize),
    #[error("{0} fields do not fit a u16 count")]
    TooManyFields(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    /// Not an error: the frame is not complete yet.
    #[error("need at least {needed} bytes")]
    Incomplete { needed: usize },
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0:#04x}")]
    BadVersion(u8),
    #[error("declared payload of {0} bytes exceeds the limit")]
    TooLarge(u32),
    #[error("crc mismatch: frame says {expected:#010x}, computed {computed:#010x}")]
    CrcMismatch {
        expected: u32,
        computed: u32,
        frame_len: usize,
    },
    #[error("unknown message type {msg_type:#04x}")]
    UnknownType { msg_type: u8, frame_len: usize },
    #[error("malformed payload: {message}")]
    Malformed { message: String, frame_len: usize },
}

impl DecodeError {
    /// Length of the frame the error belongs to, when the header was sound.
    pub fn frame_len(&self) -> Option<usize> {
        match self {
            DecodeError::CrcMismatch { frame_len, .. }
            | DecodeError::UnknownType { frame_len, .. }
            | DecodeError::Malformed { frame_len, .. } => Some(*frame_len),
            _ => None,
        }
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn bool(&mut self, v: bool) {
        self.0.push(u8::from(v));
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn str(&mut self, s: &str) -> Result<(), EncodeError> {
        let len = u16::try_from(s.len()).map_err(|_| EncodeError::StringTooLong(s.len()))?;
        self.u16(len);
        self.0.extend_from_slice(s.as_bytes());
        Ok(())
    }
    fn reading(&mut self, r: &Reading) {
        let (status, value) = match r {
            Reading::Value(v) => (0, *v),
            Reading::Fault(SensorFault::SignalOutOfRange) => (1, 0.0),
            Reading::Fault(SensorFault::ProbeNotDeployed) => (2, 0.0),
        };
        self.u8(status);
        self.f64(value);
    }
}

fn kind_code(k: AssayKind) -> u8 {
    match k {
        AssayKind::Protein => 0,
        AssayKind::Carbohydrate => 1,
        AssayKind::Ammonia => 2,
    }
}

fn verdict_code(v: LifeClass) -> u8 {
    match v {
        LifeClass::Extant => 0,
        LifeClass::Extinct => 1,
        LifeClass::NoPresenceOfLife => 2,
    }
}

fn payload(msg: &Message) -> Result<Vec<u8>, EncodeError> {
    let mut w = Writer(Vec::new());
    match msg {
        Message::SensorFrame(f) => {
            w.u64(f.t_ms);
            for c in f.rgb.channels() {
                w.u8(c);
            }
            w.bool(f.alcohol_detected);
            w.reading(&f.co2_ppm);
            w.reading(&f.formaldehyde_ppm);
            w.f64(f.humidity_pct);
            w.reading(&f.ammonia_ppm);
            w.f64(f.soil_moisture_pct);
            w.reading(&f.ph);
        }
        Message::AssayResult(a) => {
            w.u64(a.t_ms);
            w.str(&a.target)?;
            w.f64(a.depth_cm);
            w.u8(kind_code(a.kind));
            w.bool(a.detected);
            w.u16(a.bin);
            w.u64(a.elapsed_ms);
            w.bool(a.contaminated);
        }
        Message::LifeVerdict(v) => {
            w.u64(v.t_ms);
            w.str(&v.target)?;
            w.u8(verdict_code(v.verdict));
            w.bool(v.contaminated);
        }
        Message::LogEvent(r) => {
            w.u64(r.t_ms);
            w.u64(r.seq);
            w.str(&r.event)?;
            let n = u16::try_from(r.fields.len())
                .map_err(|_| EncodeError::TooManyFields(r.fields.len()))?;
            w.u16(n);
            for (k, v) in &r.fields {
                w.str(k)?;
                w.str(v)?;
            }
        }
        Message::Ack { seq } => w.u32(*seq),
        Message::CmdStart => {}
        Message::CmdAbort { reason } => w.str(reason)?,
    }
    Ok(w.0)
}

/// Canonical frame bytes for `msg`.
pub fn encode(msg: &Message) -> Result<Vec<u8>, EncodeError> {
    let body = payload(msg)?;
    if body.len() > MAX_PAYLOAD {
        return Err(EncodeError::TooLarge(body.len()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + body.len() + CRC_LEN);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(msg.msg_type());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    let crc = crc32(&out);
    out.extend_from_slice(&crc.to_be_bytes());
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    frame_len: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, message: impl Into<String>) -> DecodeError {
        DecodeError::Malformed {
            message: message.into(),
            frame_len: self.frame_len,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| self.err("payload ends early"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }
    fn bool(&mut self) -> Result<bool, DecodeError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(self.err(format!("boolean byte {b}"))),
        }
    }
    fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_be_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }
    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
    fn f64(&mut self) -> Result<f64, DecodeError> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn str(&mut self) -> Result<String, DecodeError> {
        let n = usize::from(self.u16()?);
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| self.err("string is not UTF-8"))
    }
    fn ident(&mut self) -> Result<String, DecodeError> {
        let s = self.str()?;
        if is_identifier(&s) {
            Ok(s)
        } else {
            Err(self.err(format!("`{s}` is not an identifier")))
        }
    }
    fn reading(&mut self) -> Result<Reading, DecodeError> {
        let status = self.u8()?;
        let bits = self.u64()?;
        let fault = |f| {
            if bits == 0 {
                Ok(Reading::Fault(f))
            } else {
                Err(self.err("fault reading carries a value"))
            }
        };
        match status {
            0 => Ok(Reading::Value(f64::from_bits(bits))),
            1 => fault(SensorFault::SignalOutOfRange),
            2 => fault(SensorFault::ProbeNotDeployed),
            s => Err(self.err(format!("reading status {s}"))),
        }
    }
}

fn parse_payload(msg_type: u8, body: &[u8], frame_len: usize) -> Result<Message, DecodeError> {
    let mut r = Reader {
        buf: body,
        pos: 0,
        frame_len,
    };
    let msg = match msg_type {
        msg_type::SENSOR_FRAME => {
            let t_ms = r.u64()?;
            let rgb = Rgb::new(r.u8()?, r.u8()?, r.u8()?);
            Message::SensorFrame(SensorFrame {
                t_ms,
                rgb,
                alcohol_detected: r.bool()?,
                co2_ppm: r.reading()?,
                formaldehyde_ppm: r.reading()?,
                humidity_pct: r.f64()?,
                ammonia_ppm: r.reading()?,
                soil_moisture_pct: r.f64()?,
                ph: r.reading()?,
            })
        }
        msg_type::ASSAY_RESULT => {
            let t_ms = r.u64()?;
            let target = r.str()?;
            let depth_cm = r.f64()?;
            let kind = match r.u8()? {
                0 => AssayKind::Protein,
                1 => AssayKind::Carbohydrate,
                2 => AssayKind::Ammonia,
                k => return Err(r.err(format!("assay kind {k}"))),
            };
            Message::AssayResult(AssayResultMsg {
                t_ms,
                target,
                depth_cm,
                kind,
                detected: r.bool()?,
                bin: r.u16()?,
                elapsed_ms: r.u64()?,
                contaminated: r.bool()?,
            })
        }
        msg_type::LIFE_VERDICT => {
            let t_ms = r.u64()?;
            let target = r.str()?;
            let verdict = match r.u8()? {
                0 => LifeClass::Extant,
                1 => LifeClass::Extinct,
                2 => LifeClass::NoPresenceOfLife,
                v => return Err(r.err(format!("verdict {v}"))),
            };
            Message::LifeVerdict(LifeVerdictMsg {
                t_ms,
                target,
                verdict,
                contaminated: r.bool()?,
            })
        }
        msg_type::LOG_EVENT => {
            let t_ms = r.u64()?;
            let seq = r.u64()?;
            let event = r.ident()?;
            let n = r.u16()?;
            let mut fields = Vec::with_capacity(usize::from(n));
            for _ in 0..n {
                let k = r.ident()?;
                fields.push((k, r.str()?));
            }
            Message::LogEvent(LogRecord {
                t_ms,
                seq,
                event,
                fields,
            })
        }
        msg_type::ACK => Message::Ack { seq: r.u32()? },
        msg_type::CMD_START => Message::CmdStart,
        msg_type::CMD_ABORT => Message::CmdAbort { reason: r.str()? },
        other => {
            return Err(DecodeError::UnknownType {
                msg_type: other,
                frame_len,
            })
        }
    };
    if r.pos != body.len() {
        return Err(r.err(format!("{} trailing payload bytes", body.len() - r.pos)));
    }
    Ok(msg)
}

/// Decode the frame at the start of `bytes`. On success returns the message
/// and the number of bytes it occupied; anything after is left alone.
pub fn decode(bytes: &[u8]) -> Result<(Message, usize), DecodeError> {
    for (i, &m) in MAGIC.iter().enumerate() {
        match bytes.get(i) {
            None => return Err(DecodeError::Incomplete { needed: HEADER_LEN }),
            Some(&b) if b != m => return Err(DecodeError::BadMagic),
            Some(_) => {}
        }
    }
    match bytes.get(2) {
        None => return Err(DecodeError::Incomplete { needed: HEADER_LEN }),
        Some(&v) if v != VERSION => return Err(DecodeError::BadVersion(v)),
        Some(_) => {}
    }
    if bytes.len() < HEADER_LEN {
        return Err(DecodeError::Incomplete { needed: HEADER_LEN });
    }
    let msg_type = bytes[3];
    let len = u32::from_be_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if len as usize > MAX_PAYLOAD {
        return Err(DecodeError::TooLarge(len));
    }
    let frame_len = HEADER_LEN + len as usize + CRC_LEN;
    if bytes.len() < frame_len {
        return Err(DecodeError::Incomplete { needed: frame_len });
    }
    let crc_at = frame_len - CRC_LEN;
    let expected = u32::from_be_bytes(bytes[crc_at..frame_len].try_into().expect("4 bytes"));
    let computed = crc32(&bytes[..crc_at]);
    if expected != computed {
        return Err(DecodeError::CrcMismatch {
            expected,
            computed,
            frame_len,
        });
    }
    let msg = parse_payload(msg_type, &bytes[HEADER_LEN..crc_at], frame_len)?;
    Ok((msg, frame_len))
}
