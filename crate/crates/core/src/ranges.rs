// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::ops::Range;

/// Set of disjoint, non-adjacent half-open `u64` ranges.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RangeSet {
    // start -> end
    map: BTreeMap<u64, u64>,
}

impl RangeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = Range<u64>> + '_ {
        self.map.iter().map(|(s, e)| *s..*e)
    }

    /// Total number of covered values.
    pub fn covered(&self) -> u64 {
        self.map.iter().map(|(s, e)| e - s).sum()
    }

    /// Inserts `r`, merging with neighbours. Returns how many values were
    /// not covered before.
    pub fn insert(&mut self, r: Range<u64>) -> u64 {
        if r.start >= r.end {
            return 0;
        }
        let (mut start, mut end) = (r.start, r.end);
        let before = self.covered_in(start..end);
        // absorb a range starting before us that touches us
        if let Some((&s, &e)) = self.map.range(..=start).next_back() {
            if e >= start {
                start = s;
                end = end.max(e);
                self.map.remove(&s);
            }
        }
        let absorbed: Vec<u64> = self.map.range(start..=end).map(|(s, _)| *s).collect();
        for s in absorbed {
            let e = self.map.remove(&s).expect("present");
            end = end.max(e);
        }
        self.map.insert(start, end);
        (r.end - r.start) - before
    }

    fn covered_in(&self, r: Range<u64>) -> u64 {
        let mut n = 0;
        let lo = self
            .map
            .range(..r.start)
            .next_back()
            .map(|(s, _)| *s)
            .unwrap_or(r.start);
        for (&s, &e) in self.map.range(lo..r.end) {
            let a = s.max(r.start);
            let b = e.min(r.end);
            if b > a {
                n += b - a;
            }
        }
        n
    }

    pub fn contains(&self, v: u64) -> bool {
        self.map.range(..=v).next_back().is_some_and(|(_, e)| v < *e)
    }

    /// End of the contiguous run containing `from`, or `from` if uncovered.
    pub fn contiguous_end(&self, from: u64) -> u64 {
        match self.map.range(..=from).next_back() {
            Some((_, &e)) if e > from => e,
            _ => from,
        }
    }

    /// Removes everything below `v`.
    pub fn trim_below(&mut self, v: u64) {
        let below: Vec<u64> = self.map.range(..v).map(|(s, _)| *s).collect();
        for s in below {
            let e = self.map.remove(&s).expect("present");
            if e > v {
                self.map.insert(v, e);
            }
        }
    }
}
