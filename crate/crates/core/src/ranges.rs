//! A set of disjoint half-open `u64` ranges, used for received packet numbers
//! and for acknowledged/received stream offsets.

use std::collections::BTreeMap;
use std::ops::Range;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RangeSet {
    // start -> end (exclusive); ranges never overlap nor touch
    map: BTreeMap<u64, u64>,
}

impl RangeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Number of disjoint ranges.
    pub fn len(&self) -> usize {
        self.map.len()
    }

    /// Inserts `range`, returning the number of values that were not already
    /// present.
    pub fn insert(&mut self, range: Range<u64>) -> u64 {
        if range.is_empty() {
            return 0;
        }
        let mut start = range.start;
        let mut end = range.end;
        let mut covered = 0;

        // Merge with a predecessor that overlaps or touches.
        if let Some((&s, &e)) = self.map.range(..=start).next_back() {
            if e >= start {
                if e >= end {
                    return 0;
                }
                covered += e - start;
                start = s;
                self.map.remove(&s);
            }
        }
        // Absorb successors starting inside (or touching) the new range.
        while let Some((&s, &e)) = self.map.range(start..).next().filter(|(&s, _)| s <= end) {
            self.map.remove(&s);
            covered += e.min(end) - s;
            end = end.max(e);
        }
        self.map.insert(start, end);
        (range.end - range.start) - covered
    }

    /// Removes every value in `range`.
    pub fn remove(&mut self, range: Range<u64>) {
        if range.is_empty() {
            return;
        }
        if let Some((&s, &e)) = self.map.range(..range.start).next_back() {
            if e > range.start {
                self.map.insert(s, range.start);
                if e > range.end {
                    self.map.insert(range.end, e);
                    return;
                }
            }
        }
        while let Some((&s, &e)) = self.map.range(range.start..range.end).next() {
            self.map.remove(&s);
            if e > range.end {
                self.map.insert(range.end, e);
                break;
            }
        }
    }

    /// Takes up to `max_len` values from the front of the lowest range.
    pub fn pop_front(&mut self, max_len: u64) -> Option<Range<u64>> {
        let (&s, &e) = self.map.iter().next()?;
        let end = e.min(s + max_len);
        self.remove(s..end);
        Some(s..end)
    }

    /// Total number of values in the set.
    pub fn total(&self) -> u64 {
        self.map.iter().map(|(s, e)| e - s).sum()
    }

    pub fn insert_one(&mut self, value: u64) -> bool {
        self.insert(value..value + 1) == 1
    }

    pub fn contains(&self, value: u64) -> bool {
        self.map
            .range(..=value)
            .next_back()
            .is_some_and(|(_, &e)| value < e)
    }

    /// End of the range that starts at or before `base` and covers it, i.e.
    /// the first value >= `base` that is missing.
    pub fn contiguous_end(&self, base: u64) -> u64 {
        match self.map.range(..=base).next_back() {
            Some((_, &e)) if e > base => e,
            _ => base,
        }
    }

    pub fn max(&self) -> Option<u64> {
        self.map.iter().next_back().map(|(_, &e)| e - 1)
    }

    pub fn min(&self) -> Option<u64> {
        self.map.keys().next().copied()
    }

    /// Iterates ranges in ascending order.
    pub fn iter(&self) -> impl DoubleEndedIterator<Item = Range<u64>> + '_ {
        self.map.iter().map(|(&s, &e)| s..e)
    }

    /// Drops the lowest ranges so that at most `max_ranges` remain.
    pub fn retain_highest(&mut self, max_ranges: usize) {
        while self.map.len() > max_ranges {
            self.map.pop_first();
        }
    }

    /// Parts of `range` not covered by the set, ascending.
    pub fn gaps_within(&self, range: Range<u64>) -> Vec<Range<u64>> {
        let mut out = Vec::new();
        let mut cursor = range.start;
        if let Some((_, &e)) = self.map.range(..=cursor).next_back() {
            cursor = cursor.max(e);
        }
        for (&s, &e) in self.map.range(range.start..range.end) {
            if s > cursor {
                out.push(cursor..s.min(range.end));
            }
            cursor = cursor.max(e);
        }
        if cursor < range.end {
            out.push(cursor..range.end);
        }
        out
    }

    pub fn covers(&self, range: Range<u64>) -> bool {
        range.is_empty() || self.contiguous_end(range.start) >= range.end
    }
}
