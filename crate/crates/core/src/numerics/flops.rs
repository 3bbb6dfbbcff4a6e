//! Deterministic FLOP and live-value instrumentation.
//!
//! Conventions: one real multiply or add is 1 FLOP, a complex multiply is
//! [`COMPLEX_MUL_FLOPS`] and a complex add is [`COMPLEX_ADD_FLOPS`].
//! Softmax work (max subtraction and exponentials) and other transcendental
//! evaluations are tallied in their own categories and excluded from
//! [`Tally::flops`].
//!
//! The counter is thread-local: instrumented code must run on the thread
//! that enabled it.

use std::cell::RefCell;

use crate::error::{Error, Result};

pub const COMPLEX_MUL_FLOPS: u64 = 6;
pub const COMPLEX_ADD_FLOPS: u64 = 2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Tally {
    pub real: u64,
    pub complex_mul: u64,
    pub complex_add: u64,
    pub softmax: u64,
    pub nonlinear: u64,
    /// Largest number of simultaneously live tracked values.
    pub peak_live: u64,
}

impl Tally {
    /// Arithmetic FLOPs under the complex-operation conventions.
    pub fn flops(&self) -> u64 {
        self.real + COMPLEX_MUL_FLOPS * self.complex_mul + COMPLEX_ADD_FLOPS * self.complex_add
    }

    fn absorb(&mut self, inner: &Tally, live_before: u64) {
        self.real += inner.real;
        self.complex_mul += inner.complex_mul;
        self.complex_add += inner.complex_add;
        self.softmax += inner.softmax;
        self.nonlinear += inner.nonlinear;
        self.peak_live = self.peak_live.max(live_before + inner.peak_live);
    }
}

#[derive(Debug, Default)]
pub struct FlopCounter {
    tally: Tally,
    live: u64,
    enabled: bool,
}

thread_local! {
    static COUNTER: RefCell<FlopCounter> = RefCell::new(FlopCounter::default());
}

impl FlopCounter {
    pub fn enable() {
        COUNTER.with(|c| c.borrow_mut().enabled = true);
    }

    pub fn disable() {
        COUNTER.with(|c| c.borrow_mut().enabled = false);
    }

    pub fn is_enabled() -> bool {
        COUNTER.with(|c| c.borrow().enabled)
    }

    pub fn reset() {
        COUNTER.with(|c| {
            let mut c = c.borrow_mut();
            c.tally = Tally::default();
            c.tally.peak_live = c.live;
        });
    }

    pub fn snapshot() -> Tally {
        COUNTER.with(|c| c.borrow().tally)
    }

    /// Errors unless the counter is enabled.
    pub fn require_enabled() -> Result<()> {
        if Self::is_enabled() {
            Ok(())
        } else {
            Err(Error::State("FLOP counter is disabled".into()))
        }
    }

    /// Runs `f` with counting enabled and returns what it alone consumed.
    /// The outer tally still receives the counts afterwards.
    pub fn measure<R>(f: impl FnOnce() -> R) -> (R, Tally) {
        let (outer, was_enabled, live_before) = COUNTER.with(|c| {
            let mut c = c.borrow_mut();
            let saved = (c.tally, c.enabled, c.live);
            c.tally = Tally {
                peak_live: 0,
                ..Tally::default()
            };
            c.live = 0;
            c.enabled = true;
            saved
        });
        let out = f();
        let inner = COUNTER.with(|c| {
            let mut c = c.borrow_mut();
            let inner = c.tally;
            let mut restored = outer;
            if was_enabled {
                restored.absorb(&inner, live_before);
            }
            c.tally = restored;
            c.live = live_before;
            c.enabled = was_enabled;
            inner
        });
        (out, inner)
    }
}

#[inline]
fn bump(f: impl FnOnce(&mut Tally)) {
    COUNTER.with(|c| {
        let mut c = c.borrow_mut();
        if c.enabled {
            f(&mut c.tally);
        }
    });
}

pub(crate) fn add_real(n: usize) {
    bump(|t| t.real += n as u64);
}

pub(crate) fn add_complex_mul(n: usize) {
    bump(|t| t.complex_mul += n as u64);
}

pub(crate) fn add_complex_add(n: usize) {
    bump(|t| t.complex_add += n as u64);
}

pub(crate) fn add_softmax(n: usize) {
    bump(|t| t.softmax += n as u64);
}

pub(crate) fn add_nonlinear(n: usize) {
    bump(|t| t.nonlinear += n as u64);
}

/// Marks `n` values live until the guard drops.
#[must_use]
pub(crate) struct LiveValues(u64);

impl LiveValues {
    pub(crate) fn hold(n: usize) -> Self {
        let n = n as u64;
        COUNTER.with(|c| {
            let mut c = c.borrow_mut();
            if c.enabled {
                c.live += n;
                c.tally.peak_live = c.tally.peak_live.max(c.live);
                LiveValues(n)
            } else {
                LiveValues(0)
            }
        })
    }
}

impl Drop for LiveValues {
    fn drop(&mut self) {
        COUNTER.with(|c| {
            let mut c = c.borrow_mut();
            c.live = c.live.saturating_sub(self.0);
        });
    }
}
