//! Long-lived workers, each draining its own task queue.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};

use super::topology::pin_current_thread;

pub(crate) type Job = Box<dyn FnOnce(&WorkerCtx) + Send + 'static>;

#[derive(Default)]
struct WorkerQueue {
    tasks: Mutex<VecDeque<Job>>,
    ready: Condvar,
}

pub(crate) struct Shared {
    queues: Vec<WorkerQueue>,
    shutdown: AtomicBool,
    affinity_calls: AtomicUsize,
}

impl Shared {
    pub(crate) fn threads(&self) -> usize {
        self.queues.len()
    }

    pub(crate) fn push_back(&self, worker: usize, job: Job) {
        let q = &self.queues[worker];
        q.tasks.lock().unwrap().push_back(job);
        q.ready.notify_one();
    }

    pub(crate) fn push_front(&self, worker: usize, job: Job) {
        let q = &self.queues[worker];
        q.tasks.lock().unwrap().push_front(job);
        q.ready.notify_one();
    }
}

/// Handed to a running job.
pub(crate) struct WorkerCtx {
    pub id: usize,
    pub shared: Arc<Shared>,
}

/// What pinning actually did.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PinningReport {
    /// Requested PU per worker.
    pub planned: Vec<Option<usize>>,
    /// Whether each worker's affinity call succeeded.
    pub applied: Vec<bool>,
}

pub(crate) struct WorkerPool {
    shared: Arc<Shared>,
    handles: Vec<JoinHandle<()>>,
    pinning: PinningReport,
}

impl WorkerPool {
    pub(crate) fn spawn(plan: Vec<Option<usize>>) -> std::io::Result<Self> {
        let threads = plan.len();
        let shared = Arc::new(Shared {
            queues: (0..threads).map(|_| WorkerQueue::default()).collect(),
            shutdown: AtomicBool::new(false),
            affinity_calls: AtomicUsize::new(0),
        });
        let (tx, rx) = mpsc::channel();
        let mut pool = WorkerPool {
            shared: shared.clone(),
            handles: Vec::with_capacity(threads),
            pinning: PinningReport {
                planned: plan.clone(),
                applied: vec![false; threads],
            },
        };
        for (id, pu) in plan.into_iter().enumerate() {
            let shared = shared.clone();
            let tx = tx.clone();
            let handle = thread::Builder::new()
                .name(format!("geomorph-{id}"))
                .spawn(move || {
                    let pinned = pu.is_some_and(|pu| {
                        shared.affinity_calls.fetch_add(1, Ordering::Relaxed);
                        pin_current_thread(pu).is_ok()
                    });
                    let _ = tx.send((id, pinned));
                    drop(tx);
                    worker_loop(WorkerCtx { id, shared });
                })?;
            pool.handles.push(handle);
        }
        drop(tx);
        for (id, pinned) in rx {
            pool.pinning.applied[id] = pinned;
        }
        Ok(pool)
    }

    pub(crate) fn threads(&self) -> usize {
        self.shared.queues.len()
    }

    pub(crate) fn shared(&self) -> &Arc<Shared> {
        &self.shared
    }

    pub(crate) fn pinning(&self) -> &PinningReport {
        &self.pinning
    }

    pub(crate) fn affinity_calls(&self) -> usize {
        self.shared.affinity_calls.load(Ordering::Relaxed)
    }
}

fn worker_loop(ctx: WorkerCtx) {
    let queue = &ctx.shared.queues[ctx.id];
    loop {
        let job = {
            let mut tasks = queue.tasks.lock().unwrap();
            loop {
                if let Some(job) = tasks.pop_front() {
                    break job;
                }
                if ctx.shared.shutdown.load(Ordering::Acquire) {
                    return;
                }
                tasks = queue.ready.wait(tasks).unwrap();
            }
        };
        job(&ctx);
    }
}

impl Drop for WorkerPool {
    fn drop(&mut self) {
        self.shared.shutdown.store(true, Ordering::Release);
        for q in &self.shared.queues {
            // take the lock so a worker between its check and wait sees the flag
            let _guard = q.tasks.lock().unwrap();
            q.ready.notify_all();
        }
        for h in self.handles.drain(..) {
            let _ = h.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jobs_run_on_their_worker_in_order() {
        let pool = WorkerPool::spawn(vec![None; 3]).unwrap();
        let (tx, rx) = mpsc::channel();
        for i in 0..9 {
            let tx = tx.clone();
            pool.shared().push_back(i % 3, Box::new(move |ctx: &WorkerCtx| tx.send((i, ctx.id)).unwrap()));
        }
        drop(tx);
        let mut got: Vec<(usize, usize)> = rx.iter().collect();
        got.sort_unstable();
        assert!(got.iter().all(|&(i, w)| w == i % 3));
        assert_eq!(pool.affinity_calls(), 0);
    }

    #[test]
    fn front_insertion_runs_next() {
        let pool = WorkerPool::spawn(vec![None]).unwrap();
        let (tx, rx) = mpsc::channel();
        let gate = Arc::new((Mutex::new(false), Condvar::new()));
        {
            let gate = gate.clone();
            pool.shared().push_back(
                0,
                Box::new(move |_: &WorkerCtx| {
                    let (m, cv) = &*gate;
                    let mut open = m.lock().unwrap();
                    while !*open {
                        open = cv.wait(open).unwrap();
                    }
                }),
            );
        }
        for (i, front) in [(1, false), (2, true)] {
            let tx = tx.clone();
            let job: Job = Box::new(move |_: &WorkerCtx| tx.send(i).unwrap());
            if front {
                pool.shared().push_front(0, job);
            } else {
                pool.shared().push_back(0, job);
            }
        }
        *gate.0.lock().unwrap() = true;
        gate.1.notify_all();
        drop(tx);
        assert_eq!(rx.iter().collect::<Vec<_>>(), vec![2, 1]);
    }
}
