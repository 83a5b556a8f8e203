//! Filter chains executed by a pool of pinned workers.
//!
//! Stage `j` of a chain (1-based) runs on worker `(j - 1) mod T` (0-based
//! worker ids). All stages work in place on one image; a stage may compute
//! output row `row` once its predecessor has published
//! `min(row + 2, Y)` rows, see [`row_gate`]. Convergent stages that changed
//! the image requeue themselves at the front of their worker's queue as
//! stage `j + T`, so a chain of `T` convergent stages keeps sweeping until a
//! sweep changes nothing.

mod gate;
mod pool;
pub mod topology;

use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};

pub use gate::parking::GateObservation;
pub use gate::{row_gate, rows_required, RowCounter};
pub use pool::PinningReport;
pub use topology::PinningMode;

use crate::error::{Error, Result};
use crate::image::{Image, Pixel};
use crate::kernel::{run_stage, KernelKind, LaneConfig, QdtState, RowCache, StageIo};
use gate::parking::ObservationLog;
use gate::StageSync;
use pool::{Job, WorkerCtx, WorkerPool};

/// 0-based worker that executes 1-based stage `stage`.
pub fn worker_for_stage(stage: usize, threads: usize) -> usize {
    assert!(stage >= 1 && threads >= 1);
    (stage - 1) % threads
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PipelineConfig {
    pub threads: usize,
    pub pinning: PinningMode,
    /// `None` picks the widest lane group for each element type.
    pub lanes: Option<LaneConfig>,
    /// Record what every stage saw when its row gate opened.
    pub validate: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            threads: 1,
            pinning: PinningMode::Auto,
            lanes: None,
            validate: false,
        }
    }
}

impl PipelineConfig {
    pub fn new(threads: usize) -> Self {
        PipelineConfig {
            threads,
            ..Default::default()
        }
    }

    pub fn pinning(mut self, pinning: PinningMode) -> Self {
        self.pinning = pinning;
        self
    }

    pub fn lanes(mut self, lanes: Option<LaneConfig>) -> Self {
        self.lanes = lanes;
        self
    }

    pub fn validate(mut self, on: bool) -> Self {
        self.validate = on;
        self
    }
}

/// One stage of a chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FilterTask {
    pub kind: KernelKind,
    /// Stage index written into the distance image by
    /// [`KernelKind::QdtErodeStep`]; ignored otherwise.
    pub qdt_index: u16,
}

impl FilterTask {
    pub fn new(kind: KernelKind) -> Self {
        FilterTask { kind, qdt_index: 0 }
    }
}

/// An ordered list of stages plus the images they read besides `f`.
pub struct Chain<'a, T: Pixel> {
    tasks: Vec<FilterTask>,
    mask: Option<&'a Image<T>>,
    qdt: Option<&'a mut QdtState<T>>,
    fail_at: Option<usize>,
}

impl<'a, T: Pixel> Chain<'a, T> {
    pub fn new() -> Self {
        Chain {
            tasks: Vec::new(),
            mask: None,
            qdt: None,
            fail_at: None,
        }
    }

    /// `n` stages of `kind`.
    pub fn repeat(kind: KernelKind, n: usize) -> Self {
        let mut c = Self::new();
        c.push_n(kind, n);
        c
    }

    pub fn push(&mut self, kind: KernelKind) -> &mut Self {
        self.tasks.push(FilterTask::new(kind));
        self
    }

    pub fn push_n(&mut self, kind: KernelKind, n: usize) -> &mut Self {
        self.tasks.extend(std::iter::repeat_n(FilterTask::new(kind), n));
        self
    }

    pub fn push_task(&mut self, task: FilterTask) -> &mut Self {
        self.tasks.push(task);
        self
    }

    pub fn with_mask(mut self, mask: &'a Image<T>) -> Self {
        self.mask = Some(mask);
        self
    }

    pub fn with_qdt(mut self, state: &'a mut QdtState<T>) -> Self {
        self.qdt = Some(state);
        self
    }

    pub fn tasks(&self) -> &[FilterTask] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Make stage `stage` panic. Exercises the abort path.
    #[doc(hidden)]
    pub fn fail_at(mut self, stage: usize) -> Self {
        self.fail_at = Some(stage);
        self
    }
}

impl<T: Pixel> Default for Chain<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

/// One executed stage instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StageExecution {
    pub stage: usize,
    pub worker: usize,
    pub changed: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ChainReport {
    /// Stage instances executed, requeues included.
    pub stages_executed: usize,
    pub requeues: usize,
    /// For convergent chains, whether the last sweep changed nothing.
    /// Always true for other chains.
    pub converged: bool,
    /// Row-buffer elements held by one stage.
    pub aux_per_stage: usize,
    /// Most row-buffer elements alive at once.
    pub peak_aux_elements: usize,
    /// In stage order.
    pub executions: Vec<StageExecution>,
    /// Gate openings, only recorded by validating pipelines.
    pub observations: Vec<GateObservation>,
}

pub struct Pipeline {
    pool: WorkerPool,
    config: PipelineConfig,
    run_lock: Mutex<()>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        if config.threads == 0 {
            return Err(Error::InvalidParameter("thread count must be at least 1".into()));
        }
        let allowed = topology::allowed_cpus();
        let topo = match config.pinning {
            PinningMode::Auto => topology::discover(),
            _ => None,
        };
        let plan = topology::plan_pinning(&config.pinning, config.threads, allowed.as_deref(), topo.as_ref())?;
        let pool = WorkerPool::spawn(plan)?;
        if let PinningMode::Explicit(_) = config.pinning {
            if let Some(w) = pool.pinning().applied.iter().position(|ok| !ok) {
                return Err(Error::Pinning(format!(
                    "could not pin worker {w} to PU {}",
                    pool.pinning().planned[w].unwrap_or_default()
                )));
            }
        }
        Ok(Pipeline {
            pool,
            config,
            run_lock: Mutex::new(()),
        })
    }

    /// `threads` workers pinned per `pinning`.
    pub fn build_pool(threads: usize, pinning: PinningMode) -> Result<Self> {
        Self::new(PipelineConfig::new(threads).pinning(pinning))
    }

    pub fn threads(&self) -> usize {
        self.pool.threads()
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn pinning(&self) -> &PinningReport {
        self.pool.pinning()
    }

    /// Affinity system calls issued by this pool's workers.
    pub fn affinity_calls(&self) -> usize {
        self.pool.affinity_calls()
    }

    pub fn lanes_for<T: Pixel>(&self) -> LaneConfig {
        self.config.lanes.unwrap_or_else(LaneConfig::widest::<T>)
    }

    /// Run `chain` over `f` in place and block until it finishes.
    ///
    /// A chain containing convergent stages must consist of exactly
    /// [`threads`](Self::threads) convergent stages.
    pub fn run_chain<T: Pixel>(&self, chain: Chain<'_, T>, f: &mut Image<T>) -> Result<ChainReport> {
        let Chain {
            tasks,
            mask,
            qdt,
            fail_at,
        } = chain;
        let n = tasks.len();
        let threads = self.threads();
        let lanes = self.lanes_for::<T>();
        let aux_per_stage = RowCache::<T>::new(f.width(), lanes).aux_elements();
        if n == 0 {
            return Ok(ChainReport {
                converged: true,
                aux_per_stage,
                ..Default::default()
            });
        }

        let mut io = StageIo::new(f);
        if tasks.iter().any(|t| t.kind.needs_mask()) {
            let m = mask.ok_or_else(|| Error::InvalidParameter("chain needs a mask image".into()))?;
            f.check_shape(m)?;
            io.mask = m.as_ptr();
        }
        if tasks.iter().any(|t| t.kind.needs_qdt()) {
            let q = qdt.ok_or_else(|| Error::InvalidParameter("chain needs QDT state".into()))?;
            f.check_shape(&q.residual)?;
            f.check_shape(&q.distance)?;
            if tasks.iter().any(|t| t.kind.needs_qdt() && t.qdt_index == 0) {
                return Err(Error::InvalidParameter("QDT stage index starts at 1".into()));
            }
            io.residual = q.residual.as_mut_ptr();
            io.distance = q.distance.as_mut_ptr();
        }
        let convergent = tasks.iter().filter(|t| t.kind.is_convergent()).count();
        if convergent > 0 && (convergent != n || n != threads) {
            return Err(Error::InvalidParameter(format!(
                "a convergent chain needs exactly {threads} convergent stages (got {convergent} of {n})"
            )));
        }

        let _guard = self.run_lock.lock().unwrap_or_else(|e| e.into_inner());
        let run = Arc::new(ChainRun {
            tasks,
            io,
            lanes,
            height: f.height(),
            requeue: convergent > 0,
            counters: (0..n).map(|_| RowCounter::new()).collect(),
            abort: AtomicBool::new(false),
            pending: Mutex::new(n),
            done: Condvar::new(),
            failure: Mutex::new(None),
            executions: Mutex::new(Vec::new()),
            live_aux: AtomicUsize::new(0),
            peak_aux: AtomicUsize::new(0),
            requeues: AtomicUsize::new(0),
            log: self.config.validate.then(ObservationLog::default),
            fail_at,
        });
        let shared = self.pool.shared();
        for stage in 1..=n {
            shared.push_back(worker_for_stage(stage, threads), run.clone().job(stage));
        }
        {
            let mut pending = run.pending.lock().unwrap();
            while *pending > 0 {
                pending = run.done.wait(pending).unwrap();
            }
        }

        if let Some((stage, message)) = run.failure.lock().unwrap().take() {
            return Err(Error::StageFailed { stage, message });
        }
        let mut executions = std::mem::take(&mut *run.executions.lock().unwrap());
        executions.sort_by_key(|e| e.stage);
        let converged = !run.requeue || executions.last().is_some_and(|e| !e.changed);
        Ok(ChainReport {
            stages_executed: executions.len(),
            requeues: run.requeues.load(Ordering::Relaxed),
            converged,
            aux_per_stage,
            peak_aux_elements: run.peak_aux.load(Ordering::Relaxed),
            executions,
            observations: run.log.as_ref().map(ObservationLog::take).unwrap_or_default(),
        })
    }
}

/// Shared state of one `run_chain` call.
struct ChainRun<T> {
    tasks: Vec<FilterTask>,
    io: StageIo<T>,
    lanes: LaneConfig,
    height: usize,
    requeue: bool,
    /// One per chain slot. Instance `k` of a slot publishes `k * height + rows`.
    counters: Vec<RowCounter>,
    abort: AtomicBool,
    pending: Mutex<usize>,
    done: Condvar,
    failure: Mutex<Option<(usize, String)>>,
    executions: Mutex<Vec<StageExecution>>,
    live_aux: AtomicUsize,
    peak_aux: AtomicUsize,
    requeues: AtomicUsize,
    log: Option<ObservationLog>,
    fail_at: Option<usize>,
}

// SAFETY: the raw pointers in `io` address images borrowed by `run_chain`,
// which blocks until every job has finished touching them. Row access is
// ordered by the counters.
unsafe impl<T: Send> Send for ChainRun<T> {}
unsafe impl<T: Sync> Sync for ChainRun<T> {}

impl<T: Pixel> ChainRun<T> {
    fn job(self: Arc<Self>, stage: usize) -> Job {
        Box::new(move |ctx: &WorkerCtx| self.execute(stage, ctx))
    }

    fn slot(&self, stage: usize) -> (usize, usize) {
        let n = self.tasks.len();
        ((stage - 1) % n, (stage - 1) / n * self.height)
    }

    fn execute(self: Arc<Self>, stage: usize, ctx: &WorkerCtx) {
        if !self.abort.load(Ordering::Acquire) {
            self.run_instance(stage, ctx);
        }
        self.finish_one();
    }

    fn run_instance(self: &Arc<Self>, stage: usize, ctx: &WorkerCtx) {
        let n = self.tasks.len();
        let (slot, own_base) = self.slot(stage);
        let task = self.tasks[slot];
        let mut io = self.io;
        io.qdt_index = task.qdt_index;
        let upstream = (stage > 1).then(|| {
            let (up_slot, up_base) = self.slot(stage - 1);
            (&self.counters[up_slot], up_base)
        });
        let sync = StageSync {
            upstream,
            own: &self.counters[slot],
            own_base,
            height: self.height,
            abort: &self.abort,
            observed: self.log.as_ref(),
            stage,
        };

        let mut cache = RowCache::new(io.f.width, self.lanes);
        let aux = cache.aux_elements();
        let live = self.live_aux.fetch_add(aux, Ordering::Relaxed) + aux;
        self.peak_aux.fetch_max(live, Ordering::Relaxed);

        let outcome = panic::catch_unwind(AssertUnwindSafe(|| {
            if self.fail_at == Some(stage) {
                panic!("injected failure");
            }
            // SAFETY: `io` was built from live borrows of matching shape and
            // `sync` orders row access against the neighbouring stages.
            unsafe { run_stage(task.kind, &io, &mut cache, self.lanes, &sync) }
        }));
        drop(cache);
        self.live_aux.fetch_sub(aux, Ordering::Relaxed);

        match outcome {
            Ok(Ok(stats)) => {
                self.executions.lock().unwrap().push(StageExecution {
                    stage,
                    worker: ctx.id,
                    changed: stats.changed,
                });
                if self.requeue && stats.changed {
                    // The successor instance's predecessor always exists: an
                    // instance can only change the image if the one before it did.
                    *self.pending.lock().unwrap() += 1;
                    self.requeues.fetch_add(1, Ordering::Relaxed);
                    let next = stage + n;
                    let worker = worker_for_stage(next, ctx.shared.threads());
                    ctx.shared.push_front(worker, self.clone().job(next));
                }
            }
            Ok(Err(_aborted)) => {}
            Err(payload) => {
                let message = payload
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| payload.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "stage panicked".into());
                self.failure.lock().unwrap().get_or_insert((stage, message));
                self.abort.store(true, Ordering::Release);
            }
        }
    }

    fn finish_one(&self) {
        let mut pending = self.pending.lock().unwrap();
        *pending -= 1;
        if *pending == 0 {
            self.done.notify_all();
        }
    }
}
