//! Row counters and the gate that orders consecutive stages of a chain.

use std::hint;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::thread;
use std::time::Duration;

use crate::kernel::{Aborted, RowSync};

/// Rows of the upstream stage that must be published before output row
/// `row` of an image with `height` rows may be computed.
///
/// Producing row `row` consumes input rows up to `row + 1`; requiring
/// `row + 2` published rows keeps the upstream stage off every row we read.
#[inline]
pub fn rows_required(row: usize, height: usize) -> usize {
    (row + 2).min(height)
}

/// Whether stage `stage` (1-based) may compute output row `row`, given the
/// number of rows its predecessor has published. The head of a chain never
/// waits.
#[inline]
pub fn row_gate(stage: usize, row: usize, height: usize, upstream_rows: usize) -> bool {
    stage <= 1 || upstream_rows >= rows_required(row, height)
}

/// Single-writer, multi-reader count of finished rows.
#[derive(Debug, Default)]
pub struct RowCounter(AtomicUsize);

impl RowCounter {
    pub fn new() -> Self {
        RowCounter(AtomicUsize::new(0))
    }

    #[inline]
    pub fn get(&self) -> usize {
        self.0.load(Ordering::Acquire)
    }

    /// Publish a new count. Everything written before this call is visible
    /// to a reader that observes the new value.
    #[inline]
    pub fn publish(&self, rows: usize) {
        debug_assert!(rows >= self.0.load(Ordering::Relaxed), "row counters never decrease");
        self.0.store(rows, Ordering::Release);
    }

    pub fn reset(&self) {
        self.0.store(0, Ordering::Release);
    }
}

/// Exponential spin, then yield to the scheduler, then short sleeps.
pub(crate) struct Backoff {
    step: u32,
}

impl Backoff {
    const SPIN_LIMIT: u32 = 6;
    const YIELD_LIMIT: u32 = 16;

    pub(crate) fn new() -> Self {
        Backoff { step: 0 }
    }

    pub(crate) fn snooze(&mut self) {
        if self.step < Self::SPIN_LIMIT {
            for _ in 0..(1 << self.step) {
                hint::spin_loop();
            }
        } else if self.step < Self::YIELD_LIMIT {
            thread::yield_now();
        } else {
            thread::sleep(Duration::from_micros(20));
        }
        self.step = self.step.saturating_add(1);
    }
}

/// Row synchronization of one stage of a running chain.
///
/// Counters are cumulative per slot: the `k`-th stage instance that owns a
/// slot publishes `k * height + rows`, so a slot never has to be reset while
/// a neighbour may still be reading it.
pub(crate) struct StageSync<'a> {
    pub upstream: Option<(&'a RowCounter, usize)>,
    pub own: &'a RowCounter,
    pub own_base: usize,
    pub height: usize,
    pub abort: &'a AtomicBool,
    pub observed: Option<&'a parking::ObservationLog>,
    pub stage: usize,
}

impl RowSync for StageSync<'_> {
    fn wait_for(&self, row: usize) -> Result<(), Aborted> {
        let Some((counter, base)) = self.upstream else {
            return Ok(());
        };
        let needed = base + rows_required(row, self.height);
        let mut backoff = Backoff::new();
        loop {
            let seen = counter.get();
            if seen >= needed {
                if let Some(log) = self.observed {
                    log.record(self.stage, row, seen - base);
                }
                return Ok(());
            }
            if self.abort.load(Ordering::Relaxed) {
                return Err(Aborted);
            }
            backoff.snooze();
        }
    }

    #[inline]
    fn publish(&self, rows_done: usize) {
        self.own.publish(self.own_base + rows_done);
    }
}

pub(crate) mod parking {
    use std::sync::Mutex;

    /// What a stage saw when its gate opened.
    #[derive(Clone, Copy, Debug, PartialEq, Eq)]
    pub struct GateObservation {
        pub stage: usize,
        pub row: usize,
        pub upstream_rows: usize,
    }

    #[derive(Debug, Default)]
    pub struct ObservationLog(Mutex<Vec<GateObservation>>);

    impl ObservationLog {
        pub fn record(&self, stage: usize, row: usize, upstream_rows: usize) {
            self.0.lock().unwrap().push(GateObservation {
                stage,
                row,
                upstream_rows,
            });
        }

        pub fn take(&self) -> Vec<GateObservation> {
            std::mem::take(&mut self.0.lock().unwrap())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_examples() {
        // Y=100, stage 2, row 5: needs 7 published rows
        assert!(!row_gate(2, 5, 100, 6));
        assert!(row_gate(2, 5, 100, 7));
        // last row clamps at Y
        assert!(!row_gate(2, 99, 100, 99));
        assert!(row_gate(2, 99, 100, 100));
        // head of chain
        assert!(row_gate(1, 50, 100, 0));
        // single-row image
        assert_eq!(rows_required(0, 1), 1);
    }

    #[test]
    fn counter_publish_is_monotone() {
        let c = RowCounter::new();
        c.publish(3);
        c.publish(5);
        assert_eq!(c.get(), 5);
        c.reset();
        assert_eq!(c.get(), 0);
    }

    #[test]
    fn stage_sync_honours_base_and_abort() {
        let up = RowCounter::new();
        let own = RowCounter::new();
        let abort = AtomicBool::new(false);
        let sync = StageSync {
            upstream: Some((&up, 10)),
            own: &own,
            own_base: 20,
            height: 10,
            abort: &abort,
            observed: None,
            stage: 2,
        };
        up.publish(12);
        assert!(sync.wait_for(0).is_ok());
        sync.publish(1);
        assert_eq!(own.get(), 21);
        abort.store(true, Ordering::Relaxed);
        assert_eq!(sync.wait_for(5), Err(Aborted));
    }

    #[test]
    fn waiter_wakes_when_upstream_publishes() {
        let up = RowCounter::new();
        let own = RowCounter::new();
        let abort = AtomicBool::new(false);
        thread::scope(|s| {
            s.spawn(|| {
                for r in 1..=8 {
                    thread::sleep(Duration::from_millis(1));
                    up.publish(r);
                }
            });
            let sync = StageSync {
                upstream: Some((&up, 0)),
                own: &own,
                own_base: 0,
                height: 8,
                abort: &abort,
                observed: None,
                stage: 2,
            };
            for row in 0..8 {
                sync.wait_for(row).unwrap();
                assert!(up.get() >= rows_required(row, 8));
                sync.publish(row + 1);
            }
        });
        assert_eq!(own.get(), 8);
    }
}
