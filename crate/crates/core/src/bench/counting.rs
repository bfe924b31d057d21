//! Flop-counting scalar. Every arithmetic operation bumps a thread-local
//! tally and forwards to `f64`, so running any kernel with this type in place
//! of `f64` counts exactly the operations that kernel performs. Counting and
//! timing never share a run: the counting type is a separate monomorphization,
//! so `f64` builds carry no counting overhead at all.

use std::cell::Cell;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use crate::scalar::Scalar;

/// Tally of operations since the last reset. A fused multiply-add is one
/// event but two flops.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlopCounts {
    pub additions: u64,
    pub multiplications: u64,
    pub fused_multiply_adds: u64,
    pub divisions: u64,
}

impl FlopCounts {
    pub fn total_flops(&self) -> u64 {
        self.additions + self.multiplications + 2 * self.fused_multiply_adds + self.divisions
    }
}

impl std::ops::Add for FlopCounts {
    type Output = FlopCounts;
    fn add(self, o: FlopCounts) -> FlopCounts {
        FlopCounts {
            additions: self.additions + o.additions,
            multiplications: self.multiplications + o.multiplications,
            fused_multiply_adds: self.fused_multiply_adds + o.fused_multiply_adds,
            divisions: self.divisions + o.divisions,
        }
    }
}

thread_local! {
    static COUNTS: Cell<FlopCounts> = const { Cell::new(FlopCounts {
        additions: 0,
        multiplications: 0,
        fused_multiply_adds: 0,
        divisions: 0,
    }) };
}

pub fn reset_flop_counts() {
    COUNTS.with(|c| c.set(FlopCounts::default()));
}

pub fn read_flop_counts() -> FlopCounts {
    COUNTS.with(|c| c.get())
}

/// Reads and clears the tally in one step.
pub fn take_flop_counts() -> FlopCounts {
    COUNTS.with(|c| c.replace(FlopCounts::default()))
}

#[inline]
fn bump(update: impl FnOnce(&mut FlopCounts)) {
    COUNTS.with(|c| {
        let mut counts = c.get();
        update(&mut counts);
        c.set(counts);
    });
}

/// `f64` wrapper whose arithmetic is tallied. Sign flips are free; they move
/// no data through an arithmetic port worth charging for.
#[derive(Debug, Clone, Copy, Default, PartialEq, PartialOrd)]
pub struct CountingScalar(pub f64);

impl Add for CountingScalar {
    type Output = CountingScalar;
    #[inline]
    fn add(self, o: CountingScalar) -> CountingScalar {
        bump(|c| c.additions += 1);
        CountingScalar(self.0 + o.0)
    }
}

impl Sub for CountingScalar {
    type Output = CountingScalar;
    #[inline]
    fn sub(self, o: CountingScalar) -> CountingScalar {
        bump(|c| c.additions += 1);
        CountingScalar(self.0 - o.0)
    }
}

impl Mul for CountingScalar {
    type Output = CountingScalar;
    #[inline]
    fn mul(self, o: CountingScalar) -> CountingScalar {
        bump(|c| c.multiplications += 1);
        CountingScalar(self.0 * o.0)
    }
}

impl Div for CountingScalar {
    type Output = CountingScalar;
    #[inline]
    fn div(self, o: CountingScalar) -> CountingScalar {
        bump(|c| c.divisions += 1);
        CountingScalar(self.0 / o.0)
    }
}

impl Neg for CountingScalar {
    type Output = CountingScalar;
    #[inline]
    fn neg(self) -> CountingScalar {
        CountingScalar(-self.0)
    }
}

impl AddAssign for CountingScalar {
    #[inline]
    fn add_assign(&mut self, o: CountingScalar) {
        bump(|c| c.additions += 1);
        self.0 += o.0;
    }
}

impl SubAssign for CountingScalar {
    #[inline]
    fn sub_assign(&mut self, o: CountingScalar) {
        bump(|c| c.additions += 1);
        self.0 -= o.0;
    }
}

impl Scalar for CountingScalar {
    #[inline]
    fn zero() -> Self {
        CountingScalar(0.0)
    }

    #[inline]
    fn from_f64(x: f64) -> Self {
        CountingScalar(x)
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self.0
    }

    #[inline]
    fn mul_add_acc(self, b: Self, acc: Self) -> Self {
        bump(|c| c.fused_multiply_adds += 1);
        CountingScalar(self.0 * b.0 + acc.0)
    }
}
