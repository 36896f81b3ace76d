//! Reflected mixed-radix Gray codes.
//!
//! Consecutive configurations differ in exactly one coordinate, by one step up or down
//! its alphabet. Coordinate 0 is the fastest-moving digit. The code at any index can be
//! computed directly, which lets enumeration be split into independent blocks.

/// One step of the code: coordinate `coord` moved from digit `from` to digit `to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GrayStep {
    pub coord: usize,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone)]
pub struct MixedRadixGray {
    radices: Vec<usize>,
    counter: Vec<usize>,
    digits: Vec<usize>,
    up: Vec<bool>,
    index: u64,
    total: u64,
}

impl MixedRadixGray {
    /// Total number of configurations, saturating at `u64::MAX`.
    pub fn count(radices: &[usize]) -> u64 {
        radices
            .iter()
            .try_fold(1u64, |acc, &r| acc.checked_mul(r as u64))
            .unwrap_or(u64::MAX)
    }

    pub fn new(radices: &[usize]) -> Self {
        Self::starting_at(radices, 0)
    }

    /// Positions the code at configuration number `index`.
    pub fn starting_at(radices: &[usize], index: u64) -> Self {
        assert!(radices.iter().all(|&r| r >= 1), "radices must be positive");
        let total = Self::count(radices);
        let mut counter = vec![0; radices.len()];
        let mut digits = vec![0; radices.len()];
        let mut up = vec![true; radices.len()];
        let mut rest = index;
        for (k, &r) in radices.iter().enumerate() {
            let r = r as u64;
            counter[k] = (rest % r) as usize;
            rest /= r;
            // Digit k runs backwards whenever the number formed by the higher digits is odd.
            up[k] = rest.is_multiple_of(2);
            digits[k] = if up[k] {
                counter[k]
            } else {
                radices[k] - 1 - counter[k]
            };
        }
        MixedRadixGray {
            radices: radices.to_vec(),
            counter,
            digits,
            up,
            index,
            total,
        }
    }

    pub fn digits(&self) -> &[usize] {
        &self.digits
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    /// Advances to the next configuration; `None` once the last one has been reached.
    pub fn advance(&mut self) -> Option<GrayStep> {
        if self.index + 1 >= self.total {
            return None;
        }
        let mut k = 0;
        while self.counter[k] + 1 == self.radices[k] {
            // This digit sits at an end of its range; it stays put and reverses direction.
            self.counter[k] = 0;
            self.up[k] = !self.up[k];
            k += 1;
        }
        self.counter[k] += 1;
        let from = self.digits[k];
        let to = if self.up[k] { from + 1 } else { from - 1 };
        self.digits[k] = to;
        self.index += 1;
        Some(GrayStep { coord: k, from, to })
    }
}
