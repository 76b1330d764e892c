use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use super::EvalResult;

/// Solution correctness (exact match) against trace correctness.
///
/// `tp`: both correct. `fp`: correct solution, incorrect trace.
/// `fn`: incorrect solution, correct trace. `tn`: both incorrect.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadrantPercent {
    pub tp: f64,
    pub fp: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
    pub tn: f64,
}

impl ConfusionMatrix {
    pub fn record(&mut self, solution_correct: bool, trace_correct: bool) {
        match (solution_correct, trace_correct) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Percentage of the total in hundredths, rounded half-up with integer
    /// arithmetic. Zero when the matrix is empty.
    pub fn hundredths(&self, count: u64) -> u64 {
        let n = self.total();
        if n == 0 {
            return 0;
        }
        (count * 20_000 + n) / (2 * n)
    }

    pub fn percentages(&self) -> QuadrantPercent {
        let pct = |c| self.hundredths(c) as f64 / 100.0;
        QuadrantPercent { tp: pct(self.tp), fp: pct(self.fp), fn_: pct(self.fn_), tn: pct(self.tn) }
    }
}

impl Add for ConfusionMatrix {
    type Output = ConfusionMatrix;
    fn add(self, o: ConfusionMatrix) -> ConfusionMatrix {
        ConfusionMatrix { tp: self.tp + o.tp, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_, tn: self.tn + o.tn }
    }
}

impl AddAssign for ConfusionMatrix {
    fn add_assign(&mut self, o: ConfusionMatrix) {
        *self = *self + o;
    }
}

pub fn confusion<'a>(results: impl IntoIterator<Item = &'a EvalResult>) -> ConfusionMatrix {
    let mut m = ConfusionMatrix::default();
    for r in results {
        m.record(r.answer.exact_match, r.steps.trace_correct);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_per_quadrant() {
        let mut m = ConfusionMatrix::default();
        m.record(true, true);
        m.record(true, false);
        m.record(false, true);
        m.record(false, false);
        assert_eq!(m, ConfusionMatrix { tp: 1, fp: 1, fn_: 1, tn: 1 });
        let p = m.percentages();
        assert_eq!((p.tp, p.fp, p.fn_, p.tn), (25.0, 25.0, 25.0, 25.0));
    }

    #[test]
    fn empty_is_zero() {
        let m = ConfusionMatrix::default();
        assert_eq!(m.total(), 0);
        assert_eq!(m.percentages().tp, 0.0);
    }

    #[test]
    fn half_up() {
        // 1/8 = 12.5% exactly; 1/3 = 33.333..%; 2/3 = 66.666..%
        let m = ConfusionMatrix { tp: 1, fp: 7, fn_: 0, tn: 0 };
        assert_eq!(m.hundredths(1), 1250);
        let m = ConfusionMatrix { tp: 1, fp: 2, fn_: 0, tn: 0 };
        assert_eq!(m.hundredths(1), 3333);
        assert_eq!(m.hundredths(2), 6667);
        // 1/16 = 6.25%, 1/32 = 3.125% -> 3.13
        let m = ConfusionMatrix { tp: 1, fp: 31, fn_: 0, tn: 0 };
        assert_eq!(m.hundredths(1), 313);
    }

    proptest! {
        #[test]
        fn counts_merge_and_percent_sum(a in any::<[u8; 4]>(), b in any::<[u8; 4]>()) {
            let ma = ConfusionMatrix { tp: a[0] as u64, fp: a[1] as u64, fn_: a[2] as u64, tn: a[3] as u64 };
            let mb = ConfusionMatrix { tp: b[0] as u64, fp: b[1] as u64, fn_: b[2] as u64, tn: b[3] as u64 };
            let m = ma + mb;
            prop_assert_eq!(m.total(), ma.total() + mb.total());
            if m.total() > 0 {
                let s: u64 = [m.tp, m.fp, m.fn_, m.tn].iter().map(|&c| m.hundredths(c)).sum();
                prop_assert!(s.abs_diff(10_000) <= 2);
            }
        }
    }
}
