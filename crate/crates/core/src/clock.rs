//! Virtual mission clock. Time only moves when the sequencer says so, so a
//! run never observes the host's wall clock.

/// Milliseconds of virtual time since deployment.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VirtualClock {
    now_ms: u64,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn starting_at(ms: u64) -> Self {
        Self { now_ms: ms }
    }

    pub fn now_ms(&self) -> u64 {
        self.now_ms
    }

    pub fn advance_by(&mut self, delta_ms: u64) -> u64 {
        self.now_ms += delta_ms;
        self.now_ms
    }

    /// Move forward to `t_ms`. Targets in the past leave the clock alone.
    pub fn advance_to(&mut self, t_ms: u64) -> u64 {
        self.now_ms = self.now_ms.max(t_ms);
        self.now_ms
    }
}
