//! Exact rational scores in [0, 1]. Rankings are consensus-critical, so no
//! floating point is allowed anywhere near them.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::codec::{Canon, Enc};

/// Reduced rational in [0, 1]. Serialized as a (numerator, denominator)
/// pair.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Score {
    pub num: u64,
    pub den: u64,
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Score {
    /// `correct / total`, reduced. `total` must be positive.
    pub fn new(correct: u64, total: u64) -> Score {
        assert!(total > 0 && correct <= total, "score out of range");
        let g = gcd(correct as u128, total as u128) as u64;
        if g == 0 {
            return Score { num: 0, den: 1 };
        }
        Score {
            num: correct / g,
            den: total / g,
        }
    }

    pub const ZERO: Score = Score { num: 0, den: 1 };
    pub const ONE: Score = Score { num: 1, den: 1 };

    /// Exact mean of a non-empty slice of scores.
    pub fn mean(scores: &[Score]) -> Score {
        assert!(!scores.is_empty());
        // Sum as an exact fraction, reducing at every step.
        let (mut num, mut den): (u128, u128) = (0, 1);
        for s in scores {
            num = num * s.den as u128 + s.num as u128 * den;
            den *= s.den as u128;
            let g = gcd(num, den);
            num /= g;
            den /= g;
        }
        den *= scores.len() as u128;
        let g = gcd(num, den);
        num /= g;
        den /= g;
        Score {
            num: u64::try_from(num).expect("score numerator overflow"),
            den: u64::try_from(den).expect("score denominator overflow"),
        }
    }
}

impl Ord for Score {
    fn cmp(&self, other: &Score) -> Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }
}

impl PartialOrd for Score {
    fn partial_cmp(&self, other: &Score) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl std::fmt::Display for Score {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl Canon for Score {
    fn encode(&self, e: &mut Enc) {
        e.u64(self.num);
        e.u64(self.den);
    }
}
