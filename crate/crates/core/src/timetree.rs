//! Decomposition times.
//!
//! A time is a finite word over `{1, 2}`; the empty word is the root time.
//! Times are ordered by the in-order rule of the binary tree whose node `v`
//! has children `v1` (before `v`) and `v2` (after `v`). Prepending a letter
//! realizes the inverses of the shift bijections `A_1`, `A_2`.
//!
//! Words are packed into an integer (first letter most significant, `1 -> 0`,
//! `2 -> 1`) which also gives each time a level-order heap index.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deepest supported level.
pub const MAX_DEPTH: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Letter {
    One,
    Two,
}

impl Letter {
    fn bit(self) -> u64 {
        match self {
            Letter::One => 0,
            Letter::Two => 1,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeIndex {
    level: u8,
    bits: u64,
}

impl TimeIndex {
    pub const ROOT: TimeIndex = TimeIndex { level: 0, bits: 0 };

    pub fn root() -> Self {
        Self::ROOT
    }

    pub fn level(&self) -> usize {
        self.level as usize
    }

    pub fn is_root(&self) -> bool {
        self.level == 0
    }

    /// The `i`-th letter, counted from the front.
    pub fn letter(&self, i: usize) -> Letter {
        debug_assert!(i < self.level());
        if (self.bits >> (self.level() - 1 - i)) & 1 == 0 {
            Letter::One
        } else {
            Letter::Two
        }
    }

    pub fn letters(&self) -> impl Iterator<Item = Letter> + '_ {
        (0..self.level()).map(move |i| self.letter(i))
    }

    /// `self` followed by `c`: a child in the tree.
    pub fn append(&self, c: Letter) -> Self {
        Self {
            level: self.level + 1,
            bits: (self.bits << 1) | c.bit(),
        }
    }

    /// `c` followed by `self`.
    pub fn prepend(&self, c: Letter) -> Self {
        Self {
            level: self.level + 1,
            bits: (c.bit() << self.level) | self.bits,
        }
    }

    /// Strips the leading letter, returning it with the remainder.
    pub fn split_first(&self) -> Option<(Letter, TimeIndex)> {
        if self.is_root() {
            return None;
        }
        let first = self.letter(0);
        let rest = Self {
            level: self.level - 1,
            bits: self.bits & ((1u64 << (self.level - 1)) - 1),
        };
        Some((first, rest))
    }

    /// Level-order position: root 0, then `1`, `2`, `11`, `12`, `21`, `22`, ...
    pub fn heap_index(&self) -> usize {
        ((1usize << self.level) - 1) + self.bits as usize
    }

    pub fn from_heap_index(index: usize) -> Self {
        let level = usize::BITS - 1 - (index + 1).leading_zeros();
        Self {
            level: level as u8,
            bits: (index + 1 - (1usize << level)) as u64,
        }
    }

    pub fn path(&self) -> String {
        self.letters()
            .map(|c| match c {
                Letter::One => '1',
                Letter::Two => '2',
            })
            .collect()
    }
}

impl fmt::Debug for TimeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "\"{}\"", self.path())
    }
}

impl fmt::Display for TimeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.path())
    }
}

impl FromStr for TimeIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() > MAX_DEPTH {
            return Err(Error::Depth {
                level: s.len(),
                depth: MAX_DEPTH,
            });
        }
        s.chars().try_fold(TimeIndex::ROOT, |acc, ch| match ch {
            '1' => Ok(acc.append(Letter::One)),
            '2' => Ok(acc.append(Letter::Two)),
            other => Err(Error::Parse(format!("time index letter {other:?} is not 1 or 2"))),
        })
    }
}

impl Ord for TimeIndex {
    /// The in-order rule: below a common prefix `v`, a word continuing with
    /// `1` comes before `v` and one continuing with `2` after it; otherwise
    /// the first differing letter decides.
    fn cmp(&self, other: &Self) -> Ordering {
        let common = self.level.min(other.level) as usize;
        for i in 0..common {
            match (self.letter(i), other.letter(i)) {
                (Letter::One, Letter::Two) => return Ordering::Less,
                (Letter::Two, Letter::One) => return Ordering::Greater,
                _ => {}
            }
        }
        match self.level.cmp(&other.level) {
            Ordering::Equal => Ordering::Equal,
            // self is a proper prefix of other
            Ordering::Less => match other.letter(common) {
                Letter::One => Ordering::Greater,
                Letter::Two => Ordering::Less,
            },
            Ordering::Greater => match self.letter(common) {
                Letter::One => Ordering::Less,
                Letter::Two => Ordering::Greater,
            },
        }
    }
}

impl PartialOrd for TimeIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The in-order comparison of two times.
pub fn compare(a: &TimeIndex, b: &TimeIndex) -> Ordering {
    a.cmp(b)
}

impl Serialize for TimeIndex {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.path())
    }
}

impl<'de> Deserialize<'de> for TimeIndex {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The set `T^(n)` of all words of length at most `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionTimes {
    depth: usize,
}

impl DecompositionTimes {
    pub fn new(depth: usize) -> Result<Self> {
        if depth > MAX_DEPTH {
            return Err(Error::Depth {
                level: depth,
                depth: MAX_DEPTH,
            });
        }
        Ok(Self { depth })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// `2^(n+1) - 1`.
    pub fn len(&self) -> usize {
        (1usize << (self.depth + 1)) - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, tau: &TimeIndex) -> bool {
        tau.level() <= self.depth
    }

    /// All times in heap (level) order.
    pub fn iter(&self) -> impl Iterator<Item = TimeIndex> {
        (0..self.len()).map(TimeIndex::from_heap_index)
    }

    /// The times of level `i`.
    pub fn level(&self, i: usize) -> impl Iterator<Item = TimeIndex> {
        let start = (1usize << i) - 1;
        (start..start + (1usize << i)).map(TimeIndex::from_heap_index)
    }

    /// All times from greatest (`2...2`) to least (`1...1`).
    pub fn enumerate_descending(&self) -> Vec<TimeIndex> {
        let mut out = Vec::with_capacity(self.len());
        self.push_descending(TimeIndex::ROOT, &mut out);
        out
    }

    fn push_descending(&self, v: TimeIndex, out: &mut Vec<TimeIndex>) {
        if v.level() < self.depth {
            self.push_descending(v.append(Letter::Two), out);
            out.push(v);
            self.push_descending(v.append(Letter::One), out);
        } else {
            out.push(v);
        }
    }

    /// All `w >= tau`, in descending order.
    pub fn suffix_set(&self, tau: &TimeIndex) -> Result<Vec<TimeIndex>> {
        self.check(tau)?;
        let mut all = self.enumerate_descending();
        let pos = all.iter().position(|w| w == tau).expect("tau is a member");
        all.truncate(pos + 1);
        Ok(all)
    }

    fn check(&self, tau: &TimeIndex) -> Result<()> {
        if !self.contains(tau) {
            return Err(Error::Depth {
                level: tau.level(),
                depth: self.depth,
            });
        }
        Ok(())
    }

    /// `A_1^{-1}(w) = 1w`.
    pub fn a1_inverse(&self, w: &TimeIndex) -> Result<TimeIndex> {
        self.shift_inverse(Letter::One, w)
    }

    /// `A_2^{-1}(w) = 2w`.
    pub fn a2_inverse(&self, w: &TimeIndex) -> Result<TimeIndex> {
        self.shift_inverse(Letter::Two, w)
    }

    fn shift_inverse(&self, c: Letter, w: &TimeIndex) -> Result<TimeIndex> {
        if w.level() + 1 > self.depth {
            return Err(Error::Depth {
                level: w.level() + 1,
                depth: self.depth,
            });
        }
        Ok(w.prepend(c))
    }

    /// `A_1`: defined on times before the root.
    pub fn a1(&self, tau: &TimeIndex) -> Option<TimeIndex> {
        match tau.split_first() {
            Some((Letter::One, rest)) => Some(rest),
            _ => None,
        }
    }

    /// `A_2`: defined on times after the root.
    pub fn a2(&self, tau: &TimeIndex) -> Option<TimeIndex> {
        match tau.split_first() {
            Some((Letter::Two, rest)) => Some(rest),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> TimeIndex {
        s.parse().unwrap()
    }

    /// Independent model: the in-order position of a word as a dyadic
    /// rational, letter 1 stepping left and 2 stepping right.
    fn dyadic(w: &TimeIndex) -> i64 {
        let mut pos = 0i64;
        for (i, c) in w.letters().enumerate() {
            let step = 1i64 << (40 - i);
            pos += if c == Letter::One { -step } else { step };
        }
        pos
    }

    fn all_words(n: usize) -> Vec<TimeIndex> {
        DecompositionTimes::new(n).unwrap().iter().collect()
    }

    #[test]
    fn axioms_on_root() {
        assert_eq!(compare(&t("1"), &t("")), Ordering::Less);
        assert_eq!(compare(&t(""), &t("2")), Ordering::Less);
        assert_eq!(compare(&t("21"), &t("2")), Ordering::Less);
        assert_eq!(compare(&t("12"), &t("1")), Ordering::Greater);
    }

    #[test]
    fn order_agrees_with_dyadic_positions() {
        let words = all_words(4);
        for a in &words {
            for b in &words {
                assert_eq!(a.cmp(b), dyadic(a).cmp(&dyadic(b)), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn order_is_total_and_transitive() {
        let words = all_words(4);
        for a in &words {
            for b in &words {
                assert_eq!(a.cmp(b), b.cmp(a).reverse());
                assert_eq!(a.cmp(b) == Ordering::Equal, a == b);
                for c in &words {
                    if a < b && b < c {
                        assert!(a < c);
                    }
                }
            }
        }
    }

    #[test]
    fn descending_enumeration() {
        let names = |n| -> Vec<String> {
            DecompositionTimes::new(n)
                .unwrap()
                .enumerate_descending()
                .iter()
                .map(|w| w.path())
                .collect()
        };
        assert_eq!(names(1), ["2", "", "1"]);
        assert_eq!(names(2), ["22", "2", "21", "", "12", "1", "11"]);
        for n in 0..6 {
            let times = DecompositionTimes::new(n).unwrap();
            let desc = times.enumerate_descending();
            assert_eq!(desc.len(), (1 << (n + 1)) - 1);
            let mut sorted: Vec<_> = times.iter().collect();
            sorted.sort();
            sorted.reverse();
            assert_eq!(desc, sorted);
        }
    }

    #[test]
    fn suffix_sets() {
        let times = DecompositionTimes::new(2).unwrap();
        let names: Vec<_> = times.suffix_set(&t("")).unwrap().iter().map(|w| w.path()).collect();
        assert_eq!(names, ["22", "2", "21", ""]);
        assert_eq!(times.suffix_set(&t("22")).unwrap(), vec![t("22")]);
        assert_eq!(times.suffix_set(&t("11")).unwrap(), times.enumerate_descending());
        assert!(times.suffix_set(&t("111")).is_err());
        let all = DecompositionTimes::new(4).unwrap();
        for tau in all.iter() {
            let filtered: Vec<_> = all.enumerate_descending().into_iter().filter(|w| *w >= tau).collect();
            assert_eq!(all.suffix_set(&tau).unwrap(), filtered);
        }
    }

    #[test]
    fn shift_bijections_preserve_order() {
        let times = DecompositionTimes::new(4).unwrap();
        assert_eq!(times.a1_inverse(&TimeIndex::root()).unwrap(), t("1"));
        assert_eq!(times.a1(&t("1")), Some(TimeIndex::root()));
        let words = all_words(3);
        for v in &words {
            for w in &words {
                let (v1, w1) = (times.a1_inverse(v).unwrap(), times.a1_inverse(w).unwrap());
                let (v2, w2) = (times.a2_inverse(v).unwrap(), times.a2_inverse(w).unwrap());
                assert_eq!(v.cmp(w), v1.cmp(&w1));
                assert_eq!(v.cmp(w), v2.cmp(&w2));
            }
        }
        assert!(matches!(times.a2_inverse(&t("1111")), Err(Error::Depth { .. })));
    }

    #[test]
    fn shifts_are_bijections_onto_smaller_tree() {
        for n in 1..=5 {
            let times = DecompositionTimes::new(n).unwrap();
            let smaller: Vec<_> = DecompositionTimes::new(n - 1).unwrap().iter().collect();
            let root = TimeIndex::root();
            let mut before: Vec<_> = times.iter().filter(|w| *w < root).map(|w| times.a1(&w).unwrap()).collect();
            let mut after: Vec<_> = times.iter().filter(|w| *w > root).map(|w| times.a2(&w).unwrap()).collect();
            before.sort_by_key(|w| w.heap_index());
            after.sort_by_key(|w| w.heap_index());
            assert_eq!(before, smaller);
            assert_eq!(after, smaller);
            // levels partition the set with 2^i members each
            for i in 0..=n {
                assert_eq!(times.level(i).count(), 1 << i);
                assert!(times.level(i).all(|w| w.level() == i));
            }
            assert_eq!(times.level(0).collect::<Vec<_>>(), vec![root]);
        }
    }

    #[test]
    fn heap_index_round_trip_and_paths() {
        for i in 0..200 {
            assert_eq!(TimeIndex::from_heap_index(i).heap_index(), i);
        }
        assert_eq!(t("21").heap_index(), 5);
        assert_eq!(t("2").prepend(Letter::One), t("12"));
        assert_eq!(serde_json::to_string(&t("21")).unwrap(), "\"21\"");
        assert_eq!(serde_json::from_str::<TimeIndex>("\"\"").unwrap(), TimeIndex::root());
        assert!("13".parse::<TimeIndex>().is_err());
    }
}
