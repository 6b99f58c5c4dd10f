//! Runtime multiply-accumulate counter.
//!
//! Every forward op adds its cost under the MAC convention: one multiply-accumulate
//! is one FLOP, element-wise ops cost one per output entry, pooling costs its window
//! size per output entry, bilinear resampling costs four per output entry.
//! Reshapes, concatenation and dropout are free.

use std::cell::Cell;

thread_local! {
    static MACS: Cell<u64> = const { Cell::new(0) };
}

pub(crate) fn record(macs: usize) {
    MACS.with(|m| m.set(m.get() + macs as u64));
}

/// Runs `f` and returns its result together with the MACs its ops recorded.
pub fn count_macs<R>(f: impl FnOnce() -> R) -> (R, u64) {
    let before = MACS.with(|m| m.get());
    let out = f();
    let after = MACS.with(|m| m.get());
    (out, after - before)
}
