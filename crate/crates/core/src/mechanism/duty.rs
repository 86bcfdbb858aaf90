//! Rolling-window actuator duty budget: at most `max_on_ms` of on-time in
//! any window of `window_ms`. The default (120 s per 1200 s) matches the
//! "2 minutes on, 18 minutes off" operating cycle and is stricter than it,
//! since it also bounds partial runs.

/// Half-open on-interval `[start_ms, end_ms)` in virtual time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Interval {
    pub start_ms: u64,
    pub end_ms: u64,
}

impl Interval {
    pub fn new(start_ms: u64, end_ms: u64) -> Self {
        debug_assert!(start_ms <= end_ms);
        Self { start_ms, end_ms }
    }

    pub fn len(&self) -> u64 {
        self.end_ms - self.start_ms
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Length of the overlap with `[from, to]`.
    pub fn overlap(&self, from: u64, to: u64) -> u64 {
        let lo = self.start_ms.max(from);
        let hi = self.end_ms.min(to);
        hi.saturating_sub(lo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DutyBudget {
    pub window_ms: u64,
    pub max_on_ms: u64,
}

impl Default for DutyBudget {
    fn default() -> Self {
        Self {
            window_ms: 1_200_000,
            max_on_ms: 120_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DutyDecision {
    Allowed,
    WaitUntil(u64),
}

/// Total on-time inside the window that ends at `t_ms`.
pub fn on_time_before(intervals: &[Interval], window_ms: u64, t_ms: u64) -> u64 {
    let from = t_ms.saturating_sub(window_ms);
    intervals.iter().map(|iv| iv.overlap(from, t_ms)).sum()
}

impl DutyBudget {
    /// Decide whether `requested_ms` of on-time may start at `now_ms`.
    ///
    /// `intervals` must be ordered and disjoint. A request made while the
    /// actuator is still running waits at least until the running interval
    /// ends. The caller guarantees `requested_ms <= max_on_ms`.
    pub fn check(&self, intervals: &[Interval], now_ms: u64, requested_ms: u64) -> DutyDecision {
        debug_assert!(requested_ms <= self.max_on_ms);
        let allowance = self.max_on_ms - requested_ms;
        let last_end = intervals.last().map_or(0, |iv| iv.end_ms);
        let admits = |t: u64| on_time_before(intervals, self.window_ms, t) <= allowance;
        if now_ms >= last_end && admits(now_ms) {
            return DutyDecision::Allowed;
        }
        // For t >= last_end the windowed on-time only decreases, and at
        // last_end + window it is zero, so a binary search finds the first
        // admissible instant.
        let mut lo = now_ms.max(last_end);
        let mut hi = last_end + self.window_ms;
        if admits(lo) {
            return DutyDecision::WaitUntil(lo);
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if admits(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        DutyDecision::WaitUntil(hi)
    }

    /// Largest on-time found in any window over the given intervals.
    ///
    /// Windowed on-time is piecewise linear in the window end, with kinks at
    /// interval starts and ends and at those instants plus the window
    /// length, so checking those candidates is exact.
    pub fn peak_on_time(&self, intervals: &[Interval]) -> u64 {
        let mut peak = 0;
        for iv in intervals {
            for t in [
                iv.start_ms,
                iv.end_ms,
                iv.start_ms + self.window_ms,
                iv.end_ms + self.window_ms,
            ] {
                peak = peak.max(on_time_before(intervals, self.window_ms, t));
            }
        }
        peak
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_actuator_gets_the_full_budget() {
        let b = DutyBudget::default();
        assert_eq!(b.check(&[], 0, 120_000), DutyDecision::Allowed);
        assert_eq!(b.check(&[], 5_000_000, 120_000), DutyDecision::Allowed);
    }

    #[test]
    fn exhausted_budget_waits_until_the_interval_slides_out() {
        let b = DutyBudget::default();
        let t = 2_000_000;
        let ran = [Interval::new(t - 120_000, t)];
        // The window [x - 1_200_000, x] keeps 120_000 - (x - t - 1_080_000)
        // ms of the old run; adding 1 ms fits once that is <= 119_999.
        assert_eq!(
            b.check(&ran, t, 1),
            DutyDecision::WaitUntil(t + 1_080_000 + 1)
        );
        assert_eq!(on_time_before(&ran, b.window_ms, t + 1_080_001), 119_999);
        assert_eq!(on_time_before(&ran, b.window_ms, t + 1_080_000), 120_000);
    }

    #[test]
    fn partial_budget_allows_the_remainder() {
        let b = DutyBudget::default();
        let ran = [Interval::new(0, 60_000)];
        assert_eq!(b.check(&ran, 60_000, 60_000), DutyDecision::Allowed);
        assert!(matches!(
            b.check(&ran, 60_000, 60_001),
            DutyDecision::WaitUntil(_)
        ));
    }

    #[test]
    fn running_actuator_waits_for_its_current_interval() {
        let b = DutyBudget::default();
        let ran = [Interval::new(0, 10_000)];
        assert_eq!(b.check(&ran, 5_000, 1_000), DutyDecision::WaitUntil(10_000));
    }

    #[test]
    fn peak_matches_hand_computation() {
        let b = DutyBudget::default();
        // Two 60 s runs 1000 s apart: both fit in one 1200 s window.
        let ivs = [
            Interval::new(0, 60_000),
            Interval::new(1_000_000, 1_060_000),
        ];
        assert_eq!(b.peak_on_time(&ivs), 120_000);
        // Spread them beyond the window and the peak halves.
        let ivs = [
            Interval::new(0, 60_000),
            Interval::new(1_300_000, 1_360_000),
        ];
        assert_eq!(b.peak_on_time(&ivs), 60_000);
    }
}
