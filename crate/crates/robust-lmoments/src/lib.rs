//! Command-line front end, file formats, equivalence audits and the Monte
//! Carlo harness for `robust-lmoments-core`.

pub mod audit;
pub mod cli;
pub mod io;
pub mod simulate;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "ROBUST_LMOMENTS_THREADS";

/// Run `f` on a dedicated pool when `ROBUST_LMOMENTS_THREADS` is set, and on
/// rayon's global pool otherwise.
pub fn with_workers<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    let pool = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build().ok());
    match pool {
        Some(pool) => pool.install(f),
        None => f(),
    }
}
