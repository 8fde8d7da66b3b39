use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use super::{Executor, HarnessError, LoadCheck, RunResult};
use crate::literal::TestInput;

/// Memoizes runs of deterministic programs. Environment errors are never
/// cached.
pub struct CachedExecutor<E> {
    inner: E,
    runs: Mutex<HashMap<[u8; 32], RunResult>>,
    loads: Mutex<HashMap<[u8; 32], LoadCheck>>,
    misses: AtomicUsize,
}

impl<E: Executor> CachedExecutor<E> {
    pub fn new(inner: E) -> Self {
        CachedExecutor { inner, runs: Mutex::default(), loads: Mutex::default(), misses: AtomicUsize::new(0) }
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    /// Number of calls that reached the wrapped executor.
    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }
}

fn key(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

impl<E: Executor> Executor for CachedExecutor<E> {
    fn run(&self, source: &str, function_name: &str, input: &TestInput) -> Result<RunResult, HarnessError> {
        let input_json = serde_json::to_vec(input).expect("literals serialize");
        let k = key(&[source.as_bytes(), function_name.as_bytes(), &input_json]);
        if let Some(hit) = self.runs.lock().unwrap().get(&k) {
            return Ok(hit.clone());
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let result = self.inner.run(source, function_name, input)?;
        self.runs.lock().unwrap().insert(k, result.clone());
        Ok(result)
    }

    fn load(&self, source: &str, function_name: &str) -> Result<LoadCheck, HarnessError> {
        let k = key(&[source.as_bytes(), function_name.as_bytes()]);
        if let Some(hit) = self.loads.lock().unwrap().get(&k) {
            return Ok(hit.clone());
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let result = self.inner.load(source, function_name)?;
        self.loads.lock().unwrap().insert(k, result.clone());
        Ok(result)
    }

    fn parallelism(&self) -> usize {
        self.inner.parallelism()
    }
}
