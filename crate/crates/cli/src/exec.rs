use std::thread;

use seat_core::eval::Executor;
use seat_core::Result;

use crate::error::CliError;

pub const THREADS_ENV: &str = "SEAT_THREADS";

/// Fans decode jobs over scoped threads in contiguous index blocks; results
/// come back in job order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Threaded {
    pub threads: usize,
}

impl Threaded {
    /// Reads `SEAT_THREADS`; unset means one thread.
    pub fn from_env() -> Result<Self, CliError> {
        match std::env::var(THREADS_ENV) {
            Err(_) => Ok(Self { threads: 1 }),
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) if n >= 1 => Ok(Self { threads: n }),
                _ => Err(CliError::Usage(format!(
                    "{THREADS_ENV} must be a positive integer, got {v:?}"
                ))),
            },
        }
    }
}

impl Executor for Threaded {
    fn map_decode(
        &self,
        jobs: usize,
        job: &(dyn Fn(usize) -> Result<Vec<u32>> + Sync),
    ) -> Vec<Result<Vec<u32>>> {
        let threads = self.threads.min(jobs).max(1);
        if threads == 1 {
            return (0..jobs).map(job).collect();
        }
        let block = jobs.div_ceil(threads);
        thread::scope(|s| {
            let handles: Vec<_> = (0..jobs)
                .step_by(block)
                .map(|start| {
                    let end = (start + block).min(jobs);
                    s.spawn(move || (start..end).map(job).collect::<Vec<_>>())
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("decode worker panicked"))
                .collect()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_keep_job_order() {
        let job = |i: usize| Ok(vec![i as u32]);
        for threads in 1..6 {
            let out = Threaded { threads }.map_decode(11, &job);
            let flat: Vec<u32> = out.into_iter().map(|r| r.unwrap()[0]).collect();
            assert_eq!(flat, (0..11).collect::<Vec<_>>());
        }
    }
}
