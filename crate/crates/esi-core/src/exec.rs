//! Deterministic, chunked Monte-Carlo execution.
//!
//! Every stochastic estimate in this library flows through [`mc_multi`]:
//! the total sample budget is split into fixed chunks, each chunk draws from
//! its own counter-derived ChaCha substream, and chunk statistics are reduced
//! in chunk-index order. Worker threads only decide *who* computes a chunk,
//! never *what* it contains or *when* it is merged, so results are
//! byte-identical for a fixed `(seed, sample_count, chunk_count)` across
//! runs and across worker counts.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV_VAR: &str = "ESI_LAB_THREADS";

/// Evaluation budget shared by every stochastic operation.
///
/// `seed`, `mc_samples`, and `mc_chunks` together form the determinism key:
/// fixing all three fixes every Monte-Carlo result bit-for-bit, regardless
/// of `threads`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalBudget {
    /// Root seed for substream derivation.
    pub seed: u64,
    /// Total Monte-Carlo draws (rounded up to a multiple of `mc_chunks`).
    pub mc_samples: u64,
    /// Number of independent substream chunks.
    pub mc_chunks: u32,
    /// Width of the verdict band in standard errors.
    pub k_sigma: f64,
    /// Worker-thread cap; `None` defers to `ESI_LAB_THREADS`, then to the
    /// machine parallelism.
    pub threads: Option<usize>,
}

impl Default for EvalBudget {
    fn default() -> Self {
        EvalBudget { seed: 0, mc_samples: 100_000, mc_chunks: 64, k_sigma: 3.0, threads: None }
    }
}

impl EvalBudget {
    /// Budget with a specific seed and the default sample counts.
    pub fn with_seed(seed: u64) -> Self {
        EvalBudget { seed, ..EvalBudget::default() }
    }

    /// Effective number of draws after rounding up to whole chunks.
    pub fn effective_samples(&self) -> u64 {
        let chunks = self.mc_chunks.max(1) as u64;
        self.mc_samples.div_ceil(chunks) * chunks
    }
}

/// A Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
    pub n: u64,
}

/// Derive the RNG for chunk `chunk` of stream `seed`.
///
/// The (seed, chunk, domain-tag) triple is written into distinct bytes of
/// the 256-bit ChaCha key, so substreams never collide across chunks or
/// across nested uses with different tags.
pub fn substream(seed: u64, chunk: u64, tag: u64) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&chunk.to_le_bytes());
    key[16..24].copy_from_slice(&tag.to_le_bytes());
    key[24..32].copy_from_slice(&0x4553_495f_4c41_4221u64.to_le_bytes());
    ChaCha12Rng::from_seed(key)
}

/// Resolve the worker count: explicit budget override, then the
/// `ESI_LAB_THREADS` environment variable, then machine parallelism.
pub fn worker_count(budget: &EvalBudget) -> usize {
    if let Some(t) = budget.threads {
        return t.max(1);
    }
    if let Ok(s) = std::env::var(THREADS_ENV_VAR) {
        if let Ok(t) = s.trim().parse::<usize>() {
            if t >= 1 {
                return t;
            }
        }
    }
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Per-chunk accumulator: running sum and sum of squares per statistic.
#[derive(Clone)]
struct ChunkSums {
    sum: Vec<f64>,
    sumsq: Vec<f64>,
}

/// Estimate `n_stats` statistics simultaneously.
///
/// `fill` receives a chunk-local RNG and a scratch slice of length
/// `n_stats`; it must overwrite every entry with the statistics of one
/// draw. Returns one estimate per statistic, each with a standard error
/// from the pooled sample variance.
pub fn mc_multi<F>(budget: &EvalBudget, tag: u64, n_stats: usize, fill: F) -> Vec<McEstimate>
where
    F: Fn(&mut ChaCha12Rng, &mut [f64]) + Sync,
{
    let chunks = budget.mc_chunks.max(1) as usize;
    let per_chunk = budget.mc_samples.div_ceil(chunks as u64).max(1);
    let n_total = per_chunk * chunks as u64;

    let run_chunk = |ci: usize| -> ChunkSums {
        let mut rng = substream(budget.seed, ci as u64, tag);
        let mut sums = ChunkSums { sum: vec![0.0; n_stats], sumsq: vec![0.0; n_stats] };
        let mut scratch = vec![0.0; n_stats];
        for _ in 0..per_chunk {
            fill(&mut rng, &mut scratch);
            for (k, &v) in scratch.iter().enumerate() {
                sums.sum[k] += v;
                sums.sumsq[k] += v * v;
            }
        }
        sums
    };

    let workers = worker_count(budget).min(chunks);
    let mut per_chunk_out: Vec<Option<ChunkSums>> = vec![None; chunks];
    if workers <= 1 {
        for (ci, slot) in per_chunk_out.iter_mut().enumerate() {
            *slot = Some(run_chunk(ci));
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let results: Vec<Vec<(usize, ChunkSums)>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|_| {
                    s.spawn(|| {
                        let mut local = Vec::new();
                        loop {
                            let ci = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                            if ci >= chunks {
                                break;
                            }
                            local.push((ci, run_chunk(ci)));
                        }
                        local
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("mc worker panicked")).collect()
        });
        for worker_out in results {
            for (ci, sums) in worker_out {
                per_chunk_out[ci] = Some(sums);
            }
        }
    }

    // Reduce in chunk-index order: the floating-point summation order is a
    // function of the budget alone, never of scheduling.
    let mut sum = vec![0.0; n_stats];
    let mut sumsq = vec![0.0; n_stats];
    for slot in per_chunk_out {
        let s = slot.expect("chunk never ran");
        for k in 0..n_stats {
            sum[k] += s.sum[k];
            sumsq[k] += s.sumsq[k];
        }
    }

    (0..n_stats)
        .map(|k| {
            let n = n_total as f64;
            let mean = sum[k] / n;
            let var = if n_total > 1 { ((sumsq[k] - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
            McEstimate { mean, se: (var / n).sqrt(), n: n_total }
        })
        .collect()
}

/// Single-statistic convenience wrapper over [`mc_multi`].
pub fn mc_mean<F>(budget: &EvalBudget, tag: u64, draw: F) -> McEstimate
where
    F: Fn(&mut ChaCha12Rng) -> f64 + Sync,
{
    mc_multi(budget, tag, 1, |rng, out| out[0] = draw(rng))[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_budget_is_bitwise_reproducible() {
        let budget = EvalBudget { seed: 7, mc_samples: 10_000, mc_chunks: 16, ..EvalBudget::default() };
        let a = mc_mean(&budget, 1, |rng| rng.gen::<f64>());
        let b = mc_mean(&budget, 1, |rng| rng.gen::<f64>());
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.se.to_bits(), b.se.to_bits());
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let mut b1 = EvalBudget { seed: 42, mc_samples: 50_000, mc_chunks: 32, ..EvalBudget::default() };
        let mut b4 = b1;
        b1.threads = Some(1);
        b4.threads = Some(4);
        let e1 = mc_mean(&b1, 9, |rng| rng.gen::<f64>() * 2.0 - 1.0);
        let e4 = mc_mean(&b4, 9, |rng| rng.gen::<f64>() * 2.0 - 1.0);
        assert_eq!(e1.mean.to_bits(), e4.mean.to_bits());
        assert_eq!(e1.se.to_bits(), e4.se.to_bits());
    }

    #[test]
    fn uniform_mean_within_se_band() {
        let budget = EvalBudget { seed: 11, mc_samples: 200_000, mc_chunks: 64, ..EvalBudget::default() };
        let est = mc_mean(&budget, 2, |rng| rng.gen::<f64>());
        assert!((est.mean - 0.5).abs() < 4.0 * est.se, "mean {} se {}", est.mean, est.se);
    }

    #[test]
    fn distinct_tags_give_distinct_streams() {
        let budget = EvalBudget { seed: 3, mc_samples: 1_000, mc_chunks: 4, ..EvalBudget::default() };
        let a = mc_mean(&budget, 100, |rng| rng.gen::<f64>());
        let b = mc_mean(&budget, 101, |rng| rng.gen::<f64>());
        assert_ne!(a.mean.to_bits(), b.mean.to_bits());
    }
}
