//! Scoped worker pool for the verification battery. Thread count comes from
//! `REPS_THREADS` (default: available parallelism, capped by the task
//! count); results keep task order, so the output is independent of the
//! thread count.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

pub fn thread_count(tasks: usize) -> usize {
    let configured = std::env::var("REPS_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0);
    let available = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    configured.unwrap_or(available).min(tasks.max(1))
}

/// Run every task, in parallel when the pool has more than one worker,
/// returning the results in task order.
pub fn run_all<T: Send, F>(tasks: Vec<F>) -> Vec<T>
where
    F: FnOnce() -> T + Send,
{
    let workers = thread_count(tasks.len());
    if workers <= 1 {
        return tasks.into_iter().map(|f| f()).collect();
    }
    let n = tasks.len();
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<F>>> =
        tasks.into_iter().map(|f| Mutex::new(Some(f))).collect();
    let mut out: Vec<Option<T>> = (0..n).map(|_| None).collect();
    let results: Vec<Mutex<&mut Option<T>>> =
        out.iter_mut().map(Mutex::new).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let task = slots[i].lock().expect("task slot").take().expect("task taken once");
                let value = task();
                **results[i].lock().expect("result slot") = Some(value);
            });
        }
    });
    drop(results);
    out.into_iter().map(|v| v.expect("every task ran")).collect()
}
