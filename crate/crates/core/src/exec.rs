//! Deterministic work distribution and seed derivation.
//!
//! Every random stream is keyed by a master seed plus a counter tuple, never
//! by scheduling order, so parallel and sequential runs draw identical numbers.

/// SplitMix64 finalizer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-seed for the stream identified by `counters` under `master`.
///
/// Folds each counter into the state with one SplitMix64 round, so
/// `derive_seed(s, &[a, b])` differs from `derive_seed(s, &[b, a])`.
pub fn derive_seed(master: u64, counters: &[u64]) -> u64 {
    counters.iter().fold(mix64(master), |acc, &c| mix64(acc ^ mix64(c.wrapping_add(0xD1B5_4A32_D192_ED03))))
}

/// Maps `f` over `items`, in parallel when requested and compiled in. The
/// output order always matches the input order.
pub fn par_map<T, R, F>(items: &[T], parallel: bool, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = parallel;
    items.iter().map(f).collect()
}
