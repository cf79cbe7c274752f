//! Deterministic parallel replica orchestration.
//!
//! Replicas are indexed; each replica derives its randomness from
//! `(master_seed, replica_index)` alone, and merging happens in replica
//! order, so the merged result is byte-identical for every worker count and
//! completion order. A panicking or failing replica is recorded instead of
//! crashing the experiment, and the caller receives the exact set of
//! missing indices for the partial-result manifest.

use std::panic::{catch_unwind, AssertUnwindSafe};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Outcome of an orchestrated run over replicas `0..replicas`.
#[derive(Debug, Clone)]
pub struct Orchestrated<T> {
    /// Successful results in replica order.
    pub complete: Vec<(u64, T)>,
    /// Failed replicas with error descriptions, in replica order.
    pub failed: Vec<(u64, String)>,
}

impl<T> Orchestrated<T> {
    pub fn missing_replicas(&self) -> Vec<u64> {
        self.failed.iter().map(|(r, _)| *r).collect()
    }

    pub fn values(&self) -> impl Iterator<Item = &T> {
        self.complete.iter().map(|(_, v)| v)
    }

    /// Fail unless every replica completed.
    pub fn into_complete(self) -> Result<Vec<T>> {
        if let Some((replica, err)) = self.failed.first() {
            return Err(Error::Config(format!(
                "replica {replica} failed: {err} ({} replicas failed in total)",
                self.failed.len()
            )));
        }
        Ok(self.complete.into_iter().map(|(_, v)| v).collect())
    }
}

/// Manifest of a partial result, written next to the outputs when workers
/// fail.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialManifest {
    pub missing_replicas: Vec<u64>,
    pub errors: Vec<String>,
}

/// Run `f` over replica indices on `workers` threads. Results come back in
/// replica order regardless of scheduling; panics are converted to failed
/// replicas.
pub fn orchestrate<T, F>(replicas: u64, workers: usize, f: F) -> Result<Orchestrated<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    if replicas == 0 {
        return Err(Error::Config("orchestration needs replicas >= 1".into()));
    }
    if workers == 0 {
        return Err(Error::Config("orchestration needs workers >= 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<(u64, std::result::Result<T, String>)> = pool.install(|| {
        (0..replicas)
            .into_par_iter()
            .map(|replica| {
                let out = catch_unwind(AssertUnwindSafe(|| f(replica)));
                let flat = match out {
                    Ok(Ok(v)) => Ok(v),
                    Ok(Err(e)) => Err(e.to_string()),
                    Err(panic) => {
                        let msg = panic
                            .downcast_ref::<&str>()
                            .map(|s| s.to_string())
                            .or_else(|| panic.downcast_ref::<String>().cloned())
                            .unwrap_or_else(|| "panic".to_string());
                        Err(format!("worker panicked: {msg}"))
                    }
                };
                (replica, flat)
            })
            .collect()
    });
    // rayon's collect preserves index order for indexed iterators, but sort
    // anyway so the merge contract does not depend on that detail
    let mut outcomes = outcomes;
    outcomes.sort_by_key(|(r, _)| *r);
    let mut complete = Vec::new();
    let mut failed = Vec::new();
    for (replica, res) in outcomes {
        match res {
            Ok(v) => complete.push((replica, v)),
            Err(e) => failed.push((replica, e)),
        }
    }
    Ok(Orchestrated { complete, failed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_is_independent_of_worker_count() {
        let f = |r: u64| -> Result<u64> { Ok(r * r) };
        let one = orchestrate(100, 1, f).unwrap();
        let four = orchestrate(100, 4, f).unwrap();
        assert_eq!(one.complete, four.complete);
        assert!(one.failed.is_empty());
    }

    #[test]
    fn zero_replicas_and_zero_workers_are_config_errors() {
        let f = |_: u64| -> Result<()> { Ok(()) };
        assert!(matches!(orchestrate(0, 1, f), Err(Error::Config(_))));
        assert!(matches!(orchestrate(1, 0, f), Err(Error::Config(_))));
    }

    #[test]
    fn failed_replicas_are_listed_exactly() {
        let f = |r: u64| -> Result<u64> {
            if r == 3 {
                Err(Error::Numeric("injected".into()))
            } else if r == 7 {
                panic!("injected panic");
            } else {
                Ok(r)
            }
        };
        let out = orchestrate(10, 4, f).unwrap();
        assert_eq!(out.missing_replicas(), vec![3, 7]);
        assert_eq!(out.complete.len(), 8);
        assert!(out.failed[1].1.contains("panicked"));
        assert!(out.into_complete().is_err());
    }
}
