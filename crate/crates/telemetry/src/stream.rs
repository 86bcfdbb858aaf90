//! Incremental decoding of a byte stream into frames.

use crate::codec::{decode, DecodeError, Message, MAGIC};

/// Buffers arbitrary chunks and yields frames as they complete.
///
/// A frame with a sound header but a bad body (CRC, type or payload error)
/// is skipped whole. Garbage before a frame is skipped up to the next magic
/// byte and reported once.
#[derive(Debug, Default)]
pub struct StreamDecoder {
    buf: Vec<u8>,
}

impl StreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Bytes received but not yet part of a complete frame.
    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// Next message or error, or `None` when more bytes are needed.
    pub fn next_message(&mut self) -> Option<Result<Message, DecodeError>> {
        if self.buf.is_empty() {
            return None;
        }
        match decode(&self.buf) {
            Ok((msg, n)) => {
                self.buf.drain(..n);
                Some(Ok(msg))
            }
            Err(DecodeError::Incomplete { .. }) => None,
            Err(e) => {
                let skip = match e.frame_len() {
                    Some(n) => n,
                    None => self.buf[1..]
                        .iter()
                        .position(|&b| b == MAGIC[0])
                        .map_or(self.buf.len(), |i| i + 1),
                };
                self.buf.drain(..skip);
                Some(Err(e))
            }
        }
    }
}

impl Iterator for StreamDecoder {
    type Item = Result<Message, DecodeError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_message()
    }
}
