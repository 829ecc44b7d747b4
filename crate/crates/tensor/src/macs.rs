//! Multiply-accumulate instrumentation.
//!
//! When enabled, every matrix product records its MAC count (m*k*n per GEMM)
//! under the innermost active tag. The cost accountant uses this to check its
//! closed-form attention/projection terms against the real implementation.

use std::cell::RefCell;
use std::collections::BTreeMap;

thread_local! {
    static STATE: RefCell<MacState> = RefCell::new(MacState::default());
}

#[derive(Default)]
struct MacState {
    enabled: bool,
    tag_stack: Vec<&'static str>,
    counts: BTreeMap<&'static str, u128>,
}

/// Enable counting on this thread and clear previous totals.
pub fn enable() {
    STATE.with(|s| {
        let mut s = s.borrow_mut();
        s.enabled = true;
        s.counts.clear();
        s.tag_stack.clear();
    });
}

/// Disable counting; totals remain readable.
pub fn disable() {
    STATE.with(|s| s.borrow_mut().enabled = false);
}

pub fn is_enabled() -> bool {
    STATE.with(|s| s.borrow().enabled)
}

/// Record `n` MACs under the current tag. Called by the GEMM wrapper.
pub fn record(n: u128) {
    STATE.with(|s| {
        let mut s = s.borrow_mut();
        if !s.enabled {
            return;
        }
        let tag = s.tag_stack.last().copied().unwrap_or("untagged");
        *s.counts.entry(tag).or_insert(0) += n;
    });
}

/// Run `f` with `tag` as the innermost MAC tag.
pub fn with_tag<R>(tag: &'static str, f: impl FnOnce() -> R) -> R {
    STATE.with(|s| s.borrow_mut().tag_stack.push(tag));
    let out = f();
    STATE.with(|s| {
        s.borrow_mut().tag_stack.pop();
    });
    out
}

/// MACs recorded under `tag` since the last `enable()`.
pub fn by_tag(tag: &str) -> u128 {
    STATE.with(|s| s.borrow().counts.get(tag).copied().unwrap_or(0))
}

/// Total MACs across all tags since the last `enable()`.
pub fn total() -> u128 {
    STATE.with(|s| s.borrow().counts.values().sum())
}

/// Snapshot of (tag, count) pairs, sorted by tag.
pub fn snapshot() -> Vec<(String, u128)> {
    STATE.with(|s| {
        s.borrow()
            .counts
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect()
    })
}
