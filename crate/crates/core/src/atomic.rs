use std::sync::atomic::{AtomicU64, Ordering};

/// f64 stored as bits in an `AtomicU64`.
#[derive(Debug, Default)]
pub struct AtomicF64(AtomicU64);

impl AtomicF64 {
    pub fn new(v: f64) -> Self {
        AtomicF64(AtomicU64::new(v.to_bits()))
    }

    #[inline]
    pub fn load(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::Relaxed))
    }

    #[inline]
    pub fn store(&self, v: f64) {
        self.0.store(v.to_bits(), Ordering::Relaxed)
    }

    /// Applies `f` atomically (compare-and-swap loop); returns the new value.
    #[inline]
    pub fn update(&self, f: impl Fn(f64) -> f64) -> f64 {
        let mut current = self.0.load(Ordering::Relaxed);
        loop {
            let new = f(f64::from_bits(current));
            match self.0.compare_exchange_weak(current, new.to_bits(), Ordering::Relaxed, Ordering::Relaxed) {
                Ok(_) => return new,
                Err(actual) => current = actual,
            }
        }
    }
}

impl Clone for AtomicF64 {
    fn clone(&self) -> Self {
        AtomicF64::new(self.load())
    }
}

/// One step of the temporal-difference running average:
/// `(1−α)·value + α·target`, written so that `α = 1` yields `target` exactly
/// and a value already equal to the target stays put.
#[inline]
pub fn blend(value: f64, target: f64, alpha: f64) -> f64 {
    if alpha >= 1.0 {
        target
    } else {
        (value + alpha * (target - value)).max(0.0)
    }
}
