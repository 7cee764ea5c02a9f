use std::sync::mpsc::sync_channel;

use rayon::prelude::*;

use super::batching::{BatchCaps, DynamicBatcher, ItemSize};
use crate::error::{Error, Result};

/// Producer settings. Items are built in parallel but emitted in index
/// order, so the batch sequence does not depend on `workers`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineConfig {
    pub workers: usize,
    /// Bounded queue depth between producer and trainer, in batches.
    pub queue: usize,
    /// Items built per parallel round.
    pub chunk: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { workers: 1, queue: 4, chunk: 64 }
    }
}

/// Consecutive oversize items tolerated before the stream is declared
/// unusable.
const MAX_CONSECUTIVE_SKIPS: usize = 1000;

/// Runs `make(0), make(1), ...` on a producer thread, dynamic-batches the
/// items under `caps` and hands each batch to `consume` until it returns
/// `false`.
pub fn run_pipeline<I, M, C>(cfg: PipelineConfig, caps: BatchCaps, make: M, mut consume: C) -> Result<()>
where
    I: Send,
    M: Fn(u64) -> Result<(I, ItemSize)> + Sync,
    C: FnMut(Vec<I>) -> Result<bool>,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build producer pool: {e}")))?;
    let chunk = cfg.chunk.max(1) as u64;
    let (tx, rx) = sync_channel::<Result<Vec<I>>>(cfg.queue.max(1));
    std::thread::scope(|scope| {
        let make = &make;
        scope.spawn(move || {
            let mut batcher = DynamicBatcher::new(caps);
            let mut skips = 0usize;
            for round in 0.. {
                let lo = round * chunk;
                let built: Result<Vec<(I, ItemSize)>> = pool.install(|| (lo..lo + chunk).into_par_iter().map(make).collect());
                let built = match built {
                    Ok(b) => b,
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        return;
                    }
                };
                for (k, (item, size)) in built.into_iter().enumerate() {
                    match batcher.push(item, size) {
                        Ok(closed) => {
                            skips = 0;
                            if let Some(batch) = closed {
                                if tx.send(Ok(batch)).is_err() {
                                    return;
                                }
                            }
                        }
                        Err(e) => {
                            log::warn!("skipping item {}: {e}", lo + k as u64);
                            skips += 1;
                            if skips >= MAX_CONSECUTIVE_SKIPS {
                                let _ = tx.send(Err(Error::input(format!("{skips} consecutive items exceed the batch caps"))));
                                return;
                            }
                        }
                    }
                }
            }
        });
        let mut result = Ok(());
        for batch in rx.iter() {
            match batch.and_then(&mut consume) {
                Ok(true) => {}
                Ok(false) => break,
                Err(e) => {
                    result = Err(e);
                    break;
                }
            }
        }
        drop(rx);
        result
    })
}
