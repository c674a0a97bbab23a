use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

/// Counted homomorphic operation kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Add,
    AddPlain,
    MultCt,
    MultPlain,
    Rotate,
    Rescale,
    Relinearize,
}

const KINDS: usize = 7;

impl OpKind {
    fn index(self) -> usize {
        match self {
            OpKind::Add => 0,
            OpKind::AddPlain => 1,
            OpKind::MultCt => 2,
            OpKind::MultPlain => 3,
            OpKind::Rotate => 4,
            OpKind::Rescale => 5,
            OpKind::Relinearize => 6,
        }
    }
}

/// Snapshot of operation counts over some scope.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OpProfile {
    pub add: u64,
    pub add_plain: u64,
    pub mult_ct: u64,
    pub mult_plain: u64,
    pub rotate: u64,
    pub rescale: u64,
    pub relinearize: u64,
    pub max_depth_consumed: usize,
    pub wall_time_ms: f64,
}

impl OpProfile {
    /// Counter-wise difference `self - earlier`; depth and time are taken from `self`.
    pub fn since(&self, earlier: &OpProfile) -> OpProfile {
        OpProfile {
            add: self.add - earlier.add,
            add_plain: self.add_plain - earlier.add_plain,
            mult_ct: self.mult_ct - earlier.mult_ct,
            mult_plain: self.mult_plain - earlier.mult_plain,
            rotate: self.rotate - earlier.rotate,
            rescale: self.rescale - earlier.rescale,
            relinearize: self.relinearize - earlier.relinearize,
            max_depth_consumed: self.max_depth_consumed,
            wall_time_ms: self.wall_time_ms,
        }
    }

    pub fn total_ops(&self) -> u64 {
        self.add + self.add_plain + self.mult_ct + self.mult_plain + self.rotate
    }
}

/// Thread-safe operation counter owned by a backend.
///
/// Depth is measured as the largest input level seen minus the smallest
/// output level produced since the last [`Profiler::reset`].
#[derive(Debug)]
pub struct Profiler {
    counts: [AtomicU64; KINDS],
    max_in_level: AtomicUsize,
    min_out_level: AtomicUsize,
    started: Mutex<Instant>,
}

impl Default for Profiler {
    fn default() -> Self {
        Profiler {
            counts: Default::default(),
            max_in_level: AtomicUsize::new(0),
            min_out_level: AtomicUsize::new(usize::MAX),
            started: Mutex::new(Instant::now()),
        }
    }
}

impl Profiler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self, kind: OpKind) {
        self.counts[kind.index()].fetch_add(1, Ordering::Relaxed);
    }

    /// Records the level transition of one operation.
    pub fn levels(&self, input: usize, output: usize) {
        self.max_in_level.fetch_max(input, Ordering::Relaxed);
        self.min_out_level.fetch_min(output, Ordering::Relaxed);
    }

    pub fn reset(&self) {
        for c in &self.counts {
            c.store(0, Ordering::Relaxed);
        }
        self.max_in_level.store(0, Ordering::Relaxed);
        self.min_out_level.store(usize::MAX, Ordering::Relaxed);
        *self.started.lock().unwrap() = Instant::now();
    }

    pub fn snapshot(&self) -> OpProfile {
        let c = |k: OpKind| self.counts[k.index()].load(Ordering::Relaxed);
        let max_in = self.max_in_level.load(Ordering::Relaxed);
        let min_out = self.min_out_level.load(Ordering::Relaxed);
        OpProfile {
            add: c(OpKind::Add),
            add_plain: c(OpKind::AddPlain),
            mult_ct: c(OpKind::MultCt),
            mult_plain: c(OpKind::MultPlain),
            rotate: c(OpKind::Rotate),
            rescale: c(OpKind::Rescale),
            relinearize: c(OpKind::Relinearize),
            max_depth_consumed: if min_out == usize::MAX {
                0
            } else {
                max_in.saturating_sub(min_out)
            },
            wall_time_ms: self.started.lock().unwrap().elapsed().as_secs_f64() * 1e3,
        }
    }

    /// Resets the counters and returns a guard whose [`ProfileScope::finish`]
    /// yields everything recorded since.
    pub fn scope(&self) -> ProfileScope<'_> {
        self.reset();
        ProfileScope { profiler: self }
    }
}

pub struct ProfileScope<'a> {
    profiler: &'a Profiler,
}

impl ProfileScope<'_> {
    pub fn snapshot(&self) -> OpProfile {
        self.profiler.snapshot()
    }

    pub fn finish(self) -> OpProfile {
        self.profiler.snapshot()
    }
}
