//! Block-structured Monte Carlo replication.
//!
//! Replicas are grouped in fixed-size blocks. Block `b` of an arm with stream
//! base `s` always draws from `RngStream::new(seed, (s << 32) | b)`, so the
//! output is independent of worker count and of which blocks were restored
//! from a cache.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::stats::SampleSet;

/// Persistent storage for finished blocks, used to resume long runs.
pub trait BlockCache: Send + Sync {
    fn load(&self, key: &str) -> Option<Vec<Vec<f64>>>;
    fn store(&self, key: &str, block: &[Vec<f64>]);
}

#[derive(Clone)]
pub struct McRunner {
    pub seed: u64,
    pub block_size: usize,
    pub workers: usize,
    cache: Option<Arc<dyn BlockCache>>,
}

impl std::fmt::Debug for McRunner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("McRunner")
            .field("seed", &self.seed)
            .field("block_size", &self.block_size)
            .field("workers", &self.workers)
            .field("cached", &self.cache.is_some())
            .finish()
    }
}

impl McRunner {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            block_size: 4096,
            workers: 0,
            cache: None,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_cache(mut self, cache: Arc<dyn BlockCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn reseeded(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    /// Runs `n` replicas. Each replica writes `width` values into its slot;
    /// the result is one column per output coordinate.
    pub fn columns<F>(&self, tag: &str, stream_base: u32, n: usize, width: usize, f: F) -> Result<Vec<Vec<f64>>>
    where
        F: Fn(&mut RngStream, &mut [f64]) -> Result<()> + Sync,
    {
        if self.block_size == 0 {
            return Err(Error::Parameter("block size must be positive".into()));
        }
        let n_blocks = n.div_ceil(self.block_size);
        let run_block = |b: usize| -> Result<Vec<Vec<f64>>> {
            let len = self.block_size.min(n - b * self.block_size);
            let key = format!("{tag}-seed{}-s{stream_base}-b{b}-n{len}-w{width}", self.seed);
            if let Some(cache) = &self.cache {
                if let Some(block) = cache.load(&key) {
                    if block.len() == width && block.iter().all(|c| c.len() == len) {
                        return Ok(block);
                    }
                }
            }
            let mut rng = RngStream::new(self.seed, ((stream_base as u64) << 32) | b as u64);
            let mut cols = vec![Vec::with_capacity(len); width];
            let mut row = vec![0.0; width];
            for _ in 0..len {
                f(&mut rng, &mut row)?;
                for (c, v) in cols.iter_mut().zip(&row) {
                    c.push(*v);
                }
            }
            if let Some(cache) = &self.cache {
                cache.store(&key, &cols);
            }
            Ok(cols)
        };
        let blocks: Vec<Result<Vec<Vec<f64>>>> = if self.workers == 1 {
            (0..n_blocks).map(run_block).collect()
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(self.workers)
                .build()
                .map_err(|e| Error::Parameter(format!("worker pool: {e}")))?;
            pool.install(|| (0..n_blocks).into_par_iter().map(run_block).collect())
        };
        let mut out = vec![Vec::with_capacity(n); width];
        for block in blocks {
            for (o, c) in out.iter_mut().zip(block?) {
                o.extend(c);
            }
        }
        Ok(out)
    }

    /// Like [`McRunner::columns`] but wraps each column in a labelled SampleSet.
    pub fn samples<F>(&self, tag: &str, stream_base: u32, n: usize, labels: &[String], f: F) -> Result<Vec<SampleSet>>
    where
        F: Fn(&mut RngStream, &mut [f64]) -> Result<()> + Sync,
    {
        let cols = self.columns(tag, stream_base, n, labels.len(), f)?;
        cols.into_iter()
            .zip(labels)
            .map(|(c, l)| Ok(SampleSet::new(l.clone(), c)?.with_provenance(self.seed, stream_base as u64)))
            .collect()
    }

    /// Single-column convenience.
    pub fn sample<F>(&self, tag: &str, stream_base: u32, n: usize, f: F) -> Result<SampleSet>
    where
        F: Fn(&mut RngStream) -> Result<f64> + Sync,
    {
        let mut v = self.samples(tag, stream_base, n, &[tag.to_string()], |r, out| {
            out[0] = f(r)?;
            Ok(())
        })?;
        Ok(v.remove(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;
    use std::sync::Mutex;

    #[derive(Default)]
    struct MemCache(Mutex<HashMap<String, Vec<Vec<f64>>>>);

    impl BlockCache for MemCache {
        fn load(&self, key: &str) -> Option<Vec<Vec<f64>>> {
            self.0.lock().unwrap().get(key).cloned()
        }
        fn store(&self, key: &str, block: &[Vec<f64>]) {
            self.0.lock().unwrap().insert(key.to_string(), block.to_vec());
        }
    }

    fn draw(r: &mut RngStream, out: &mut [f64]) -> Result<()> {
        out[0] = r.uniform_open();
        out[1] = r.standard_normal();
        Ok(())
    }

    #[test]
    fn worker_count_does_not_matter() {
        let mut a = McRunner::new(3).with_workers(1);
        a.block_size = 100;
        let mut b = a.clone().with_workers(3);
        b.block_size = 100;
        assert_eq!(a.columns("x", 1, 1050, 2, draw).unwrap(), b.columns("x", 1, 1050, 2, draw).unwrap());
    }

    #[test]
    fn cache_resumes_identically() {
        let cache = Arc::new(MemCache::default());
        let mut r = McRunner::new(3).with_workers(1).with_cache(cache.clone());
        r.block_size = 64;
        let first = r.columns("x", 2, 300, 2, draw).unwrap();
        assert_eq!(cache.0.lock().unwrap().len(), 5);
        let second = r.columns("x", 2, 300, 2, |_, _| panic!("should be cached")).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn arms_are_independent_streams() {
        let r = McRunner::new(3).with_workers(1);
        let a = r.columns("x", 1, 10, 2, draw).unwrap();
        let b = r.columns("x", 2, 10, 2, draw).unwrap();
        assert_ne!(a, b);
    }
}
