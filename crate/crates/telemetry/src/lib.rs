//! Framed rover/ground-station wire protocol, the ground-station service
//! and the rover-side link.

pub mod codec;
pub mod rover;
pub mod station;
pub mod stream;

pub use codec::{
    crc32, decode, encode, AssayResultMsg, DecodeError, EncodeError, LifeVerdictMsg, Message,
};
pub use rover::{LinkError, LinkReport, TelemetryLink, TelemetryObserver};
pub use station::{ConnectionStats, GroundStation};
pub use stream::StreamDecoder;
