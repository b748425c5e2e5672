//! Finite multisets under the Dershowitz–Manna ordering.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

/// Multiset over a totally ordered base; `Ord` is the multiset extension.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Multiset<T: Ord> {
    counts: BTreeMap<T, usize>,
}

impl<T: Ord> Default for Multiset<T> {
    fn default() -> Self {
        Multiset { counts: BTreeMap::new() }
    }
}

impl<T: Ord + Clone> Multiset<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, x: T) {
        *self.counts.entry(x).or_insert(0) += 1;
    }

    /// Removes one copy; `false` if absent.
    pub fn remove_one(&mut self, x: &T) -> bool {
        match self.counts.get_mut(x) {
            Some(c) if *c > 1 => {
                *c -= 1;
                true
            }
            Some(_) => {
                self.counts.remove(x);
                true
            }
            None => false,
        }
    }

    pub fn count(&self, x: &T) -> usize {
        self.counts.get(x).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Elements with multiplicity, ascending.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.counts.iter().flat_map(|(k, &c)| std::iter::repeat_n(k, c))
    }

    /// `self <_m other` by the definition: the multisets differ and every
    /// element in excess in `self` is dominated by an element in excess in
    /// `other`.
    pub fn dm_less(&self, other: &Self) -> bool {
        if self == other {
            return false;
        }
        self.counts.iter().all(|(x, &c)| {
            c <= other.count(x) || other.counts.iter().any(|(y, &d)| y > x && d > self.count(y))
        })
    }
}

impl<T: Ord + Clone> FromIterator<T> for Multiset<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut m = Multiset::new();
        for x in iter {
            m.insert(x);
        }
        m
    }
}

impl<T: Ord + Clone> PartialOrd for Multiset<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Ord + Clone> Ord for Multiset<T> {
    // Over a total order the multiset extension compares the descending
    // enumerations lexicographically, a proper prefix being smaller.
    fn cmp(&self, other: &Self) -> Ordering {
        let mut a = self.counts.iter().rev();
        let mut b = other.counts.iter().rev();
        loop {
            match (a.next(), b.next()) {
                (None, None) => return Ordering::Equal,
                (None, Some(_)) => return Ordering::Less,
                (Some(_), None) => return Ordering::Greater,
                (Some((ka, ca)), Some((kb, cb))) => {
                    if ka != kb {
                        return ka.cmp(kb);
                    }
                    if ca != cb {
                        return ca.cmp(cb);
                    }
                }
            }
        }
    }
}

impl<T: Ord + Clone + fmt::Display> fmt::Display for Multiset<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, x) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{x}")?;
        }
        f.write_str("}")
    }
}
