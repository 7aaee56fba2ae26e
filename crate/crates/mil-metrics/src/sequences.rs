use crate::error::{MetricsError, Result};
use serde::{Deserialize, Serialize};

/// Non-overlapping, sorted set of inclusive [start, end] index ranges.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceSet {
    ranges: Vec<(usize, usize)>,
}

impl SequenceSet {
    pub fn new(mut ranges: Vec<(usize, usize)>) -> Result<Self> {
        ranges.sort_unstable();
        for &(s, e) in &ranges {
            if e < s {
                return Err(MetricsError::InvalidArgument(format!(
                    "empty range [{s}, {e}]"
                )));
            }
        }
        for w in ranges.windows(2) {
            if w[1].0 <= w[0].1 {
                return Err(MetricsError::InvalidArgument(format!(
                    "overlapping ranges {:?} and {:?}",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self { ranges })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn ranges(&self) -> &[(usize, usize)] {
        &self.ranges
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.ranges.iter().any(|&(s, e)| s <= index && index <= e)
    }

    pub fn max_end(&self) -> Option<usize> {
        self.ranges.iter().map(|&(_, e)| e).max()
    }
}

/// Maximal runs of consecutive positive flags with length >= `min_len`.
pub fn extract_sequences(flags: &[bool], min_len: usize) -> SequenceSet {
    assert!(min_len >= 1, "minimal sequence length must be positive");
    let mut ranges = Vec::new();
    let mut start = None;
    for (i, &f) in flags.iter().enumerate() {
        match (f, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if i - s >= min_len {
                    ranges.push((s, i - 1));
                }
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        if flags.len() - s >= min_len {
            ranges.push((s, flags.len() - 1));
        }
    }
    SequenceSet { ranges }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn short_runs_are_dropped() {
        let flags = [false, true, true, true, false, true];
        let set = extract_sequences(&flags, 2);
        assert_eq!(set.ranges(), &[(1, 3)]);
    }

    #[test]
    fn all_ones_is_one_run() {
        let set = extract_sequences(&[true; 5], 1);
        assert_eq!(set.ranges(), &[(0, 4)]);
    }

    #[test]
    fn trailing_run_honors_min_len() {
        let flags = [true, true, false, true, true, true];
        let set = extract_sequences(&flags, 3);
        assert_eq!(set.ranges(), &[(3, 5)]);
    }

    #[test]
    fn rejects_overlap_and_empty_ranges() {
        assert!(SequenceSet::new(vec![(0, 2), (2, 4)]).is_err());
        assert!(SequenceSet::new(vec![(3, 2)]).is_err());
        assert!(SequenceSet::new(vec![(0, 2), (4, 4)]).is_ok());
    }

    proptest! {
        /// Returned runs are maximal: extending any range by one index in
        /// either direction hits a 0-flag or exits bounds.
        #[test]
        fn runs_are_maximal(flags in proptest::collection::vec(any::<bool>(), 0..64),
                            min_len in 1usize..4) {
            let set = extract_sequences(&flags, min_len);
            for &(s, e) in set.ranges() {
                prop_assert!(e - s + 1 >= min_len);
                prop_assert!(flags[s..=e].iter().all(|&f| f));
                prop_assert!(s == 0 || !flags[s - 1]);
                prop_assert!(e == flags.len() - 1 || !flags[e + 1]);
            }
        }
    }
}
