//! Counting global allocator used as the benchmark's allocation probe.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};

use gwt_core::AllocProbe;

/// Wraps the system allocator and tracks live and peak heap bytes.
pub struct CountingAlloc {
    live: AtomicUsize,
    peak: AtomicUsize,
    baseline: AtomicUsize,
}

impl CountingAlloc {
    pub const fn new() -> Self {
        Self {
            live: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            baseline: AtomicUsize::new(0),
        }
    }

    fn grow(&self, bytes: usize) {
        let now = self.live.fetch_add(bytes, Ordering::Relaxed) + bytes;
        self.peak.fetch_max(now, Ordering::Relaxed);
    }
}

impl Default for CountingAlloc {
    fn default() -> Self {
        Self::new()
    }
}

unsafe impl GlobalAlloc for CountingAlloc {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            self.grow(layout.size());
        }
        p
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc_zeroed(layout);
        if !p.is_null() {
            self.grow(layout.size());
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        self.live.fetch_sub(layout.size(), Ordering::Relaxed);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = System.realloc(ptr, layout, new_size);
        if !p.is_null() {
            self.live.fetch_sub(layout.size(), Ordering::Relaxed);
            self.grow(new_size);
        }
        p
    }
}

impl AllocProbe for CountingAlloc {
    /// Peak is measured relative to the live bytes at reset time.
    fn reset(&self) {
        let live = self.live.load(Ordering::Relaxed);
        self.baseline.store(live, Ordering::Relaxed);
        self.peak.store(live, Ordering::Relaxed);
    }

    fn peak_bytes(&self) -> Option<u64> {
        let peak = self.peak.load(Ordering::Relaxed);
        Some(peak.saturating_sub(self.baseline.load(Ordering::Relaxed)) as u64)
    }
}
