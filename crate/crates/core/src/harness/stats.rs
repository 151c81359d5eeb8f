use statrs::distribution::{Binomial, DiscreteCDF};
use std::fmt;

/// `1/FER`, or a lower bound when no frame error was seen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FerInverse {
    Value(f64),
    /// No errors in this many frames: `1/FER > frames`.
    AtLeast(usize),
}

impl FerInverse {
    /// Point value, with the lower bound standing in for the zero-error case.
    pub fn as_f64(self) -> f64 {
        match self {
            Self::Value(v) => v,
            Self::AtLeast(n) => n as f64,
        }
    }
}

impl fmt::Display for FerInverse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Value(v) => write!(f, "{v:.6e}"),
            Self::AtLeast(n) => write!(f, "> {n}"),
        }
    }
}

/// Frame and bit error counts with derived rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FerStats {
    pub frames: usize,
    pub frame_errors: usize,
    pub bit_errors: usize,
    /// Code length, for the bit error rate.
    pub n: usize,
}

impl FerStats {
    pub fn new(frames: usize, frame_errors: usize, bit_errors: usize, n: usize) -> Self {
        Self {
            frames,
            frame_errors,
            bit_errors,
            n,
        }
    }

    pub fn fer(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.frame_errors as f64 / self.frames as f64
        }
    }

    pub fn ber(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.bit_errors as f64 / (self.frames * self.n) as f64
        }
    }

    pub fn fer_inverse(&self) -> FerInverse {
        if self.frame_errors == 0 {
            FerInverse::AtLeast(self.frames)
        } else {
            FerInverse::Value(self.frames as f64 / self.frame_errors as f64)
        }
    }

    /// 95% Wilson score interval for the FER.
    pub fn wilson_95(&self) -> (f64, f64) {
        wilson_interval(self.frame_errors, self.frames, 1.959_963_984_540_054)
    }
}

/// Wilson score interval for `successes / trials` at normal quantile `z`.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Discordant-pair counts of two paired error indicators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairedCounts {
    /// `a` failed where `b` succeeded.
    pub a_only: usize,
    /// `b` failed where `a` succeeded.
    pub b_only: usize,
    pub both: usize,
    pub frames: usize,
}

impl PairedCounts {
    pub fn from_outcomes(a: &[bool], b: &[bool]) -> Self {
        assert_eq!(a.len(), b.len(), "paired outcomes must have equal length");
        let mut c = Self {
            a_only: 0,
            b_only: 0,
            both: 0,
            frames: a.len(),
        };
        for (&x, &y) in a.iter().zip(b) {
            match (x, y) {
                (true, false) => c.a_only += 1,
                (false, true) => c.b_only += 1,
                (true, true) => c.both += 1,
                _ => {}
            }
        }
        c
    }

    /// One-sided exact McNemar p-value for "`a` errs more often than `b`".
    pub fn p_value_a_worse(&self) -> f64 {
        mcnemar_one_sided(self.a_only, self.b_only)
    }
}

/// `P(X ≥ a_only)` for `X ~ Binomial(a_only + b_only, 1/2)`.
pub fn mcnemar_one_sided(a_only: usize, b_only: usize) -> f64 {
    let m = (a_only + b_only) as u64;
    if m == 0 || a_only == 0 {
        return 1.0;
    }
    let dist = Binomial::new(0.5, m).expect("valid binomial");
    (1.0 - dist.cdf(a_only as u64 - 1)).clamp(0.0, 1.0)
}
