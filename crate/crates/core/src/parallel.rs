use crate::error::{Error, Result};

/// Run `f` on a dedicated pool of `workers` threads. With one worker the
/// closure runs on the calling thread.
pub(crate) fn with_workers<T, F>(workers: usize, f: F) -> Result<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    if workers == 0 {
        return Err(Error::param("workers must be at least 1"));
    }
    if workers == 1 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::param(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}
