//! Points-to set storage.
//!
//! Two interchangeable backends hold sets of dense `u32` keys: a chunked
//! sparse bitvector (word-addressed blocks) and a sorted vector. Both are
//! insert-only, iterate in ascending order, and expose the same interface, so
//! one can serve as the oracle for the other.
//!
//! Every set additionally keeps an append-only journal of its elements in
//! insertion order. Difference propagation snapshots a position in that
//! journal ([`SnapshotToken`]) and later absorbs only the elements recorded
//! after it.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

pub type Key = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SetBackendKind {
    SparseBitVector,
    SortedVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum TokenError {
    #[error("snapshot token belongs to a different set")]
    ForeignToken,
}

/// Position in a set's journal, tied to the set that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SnapshotToken {
    set_id: u64,
    pos: usize,
}

static NEXT_SET_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_set_id() -> u64 {
    NEXT_SET_ID.fetch_add(1, Ordering::Relaxed)
}

/// An insert-only set of `u32` keys over a chosen backend.
///
/// Cloning copies the journal and keeps the identity, so tokens issued by the
/// original remain valid on the clone.
#[derive(Debug, Clone)]
pub struct PointsToSet {
    backend: Backend,
    journal: Vec<Key>,
    id: u64,
}

#[derive(Debug, Clone)]
enum Backend {
    Bits(WordSet),
    Sorted(Vec<Key>),
}

impl PointsToSet {
    pub fn new(kind: SetBackendKind) -> Self {
        let backend = match kind {
            SetBackendKind::SparseBitVector => Backend::Bits(WordSet::new()),
            SetBackendKind::SortedVector => Backend::Sorted(Vec::new()),
        };
        PointsToSet { backend, journal: Vec::new(), id: fresh_set_id() }
    }

    pub fn kind(&self) -> SetBackendKind {
        match self.backend {
            Backend::Bits(_) => SetBackendKind::SparseBitVector,
            Backend::Sorted(_) => SetBackendKind::SortedVector,
        }
    }

    /// Insert a key; true iff it was not present.
    pub fn insert(&mut self, k: Key) -> bool {
        let added = match &mut self.backend {
            Backend::Bits(w) => w.insert(k),
            Backend::Sorted(v) => match v.binary_search(&k) {
                Ok(_) => false,
                Err(i) => {
                    v.insert(i, k);
                    true
                }
            },
        };
        if added {
            self.journal.push(k);
        }
        added
    }

    pub fn contains(&self, k: Key) -> bool {
        match &self.backend {
            Backend::Bits(w) => w.contains(k),
            Backend::Sorted(v) => v.binary_search(&k).is_ok(),
        }
    }

    pub fn len(&self) -> usize {
        self.journal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.journal.is_empty()
    }

    /// Ascending iteration, identical across backends.
    pub fn iter(&self) -> Box<dyn Iterator<Item = Key> + '_> {
        match &self.backend {
            Backend::Bits(w) => Box::new(w.iter()),
            Backend::Sorted(v) => Box::new(v.iter().copied()),
        }
    }

    pub fn to_vec(&self) -> Vec<Key> {
        self.iter().collect()
    }

    /// `self ∪= src`; true iff `self` changed. Same-backend pairs take bulk
    /// paths, mixed pairs fall back to element insertion.
    pub fn union_into(&mut self, src: &PointsToSet) -> bool {
        match (&mut self.backend, &src.backend) {
            (Backend::Bits(dst), Backend::Bits(s)) => {
                let added = dst.union_collecting(s);
                let changed = !added.is_empty();
                self.journal.extend(added);
                changed
            }
            (Backend::Sorted(_), Backend::Sorted(s)) => {
                // Insertion keeps the vector sorted; a merge would avoid the
                // shifting but complicates journal upkeep for little gain at
                // the set sizes seen here.
                let src_elems: Vec<Key> = s.clone();
                let mut changed = false;
                for k in src_elems {
                    changed |= self.insert(k);
                }
                changed
            }
            _ => {
                let mut changed = false;
                for k in src.iter().collect::<Vec<_>>() {
                    changed |= self.insert(k);
                }
                changed
            }
        }
    }

    /// Current snapshot position of this set's journal.
    pub fn snapshot(&self) -> SnapshotToken {
        SnapshotToken { set_id: self.id, pos: self.journal.len() }
    }

    /// Elements recorded after `token` (insertion order).
    pub fn since(&self, token: SnapshotToken) -> Result<&[Key], TokenError> {
        if token.set_id != self.id {
            return Err(TokenError::ForeignToken);
        }
        Ok(&self.journal[token.pos.min(self.journal.len())..])
    }

    /// Absorb only the elements `src` gained after `since`; returns whether
    /// `self` changed together with a fresh token positioned at `src`'s
    /// current end.
    pub fn diff_union_into(
        &mut self,
        src: &PointsToSet,
        since: SnapshotToken,
    ) -> Result<(bool, SnapshotToken), TokenError> {
        let delta: Vec<Key> = src.since(since)?.to_vec();
        let mut changed = false;
        for k in delta {
            changed |= self.insert(k);
        }
        Ok((changed, src.snapshot()))
    }

    /// Journal suffix from `pos` onward; positions come from [`Self::len`].
    /// Internal solvers track plain positions instead of tokens when source
    /// and cursor live in the same structure.
    pub fn journal_from(&self, pos: usize) -> &[Key] {
        &self.journal[pos.min(self.journal.len())..]
    }
}

/// Chunked sparse bitvector: a map from 64-bit word index to word. Ordered
/// map keys give ascending iteration for free.
#[derive(Debug, Clone, Default)]
pub struct WordSet {
    words: BTreeMap<u32, u64>,
    len: usize,
}

impl WordSet {
    pub fn new() -> Self {
        WordSet::default()
    }

    #[inline]
    fn split(k: Key) -> (u32, u64) {
        (k >> 6, 1u64 << (k & 63))
    }

    pub fn insert(&mut self, k: Key) -> bool {
        let (w, bit) = Self::split(k);
        let word = self.words.entry(w).or_insert(0);
        if *word & bit == 0 {
            *word |= bit;
            self.len += 1;
            true
        } else {
            false
        }
    }

    pub fn contains(&self, k: Key) -> bool {
        let (w, bit) = Self::split(k);
        self.words.get(&w).is_some_and(|word| word & bit != 0)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = Key> + '_ {
        self.words.iter().flat_map(|(&w, &word)| {
            (0..64).filter_map(move |b| (word & (1u64 << b) != 0).then_some((w << 6) | b))
        })
    }

    /// `self ∪= other`, returning the newly added keys in ascending order.
    pub fn union_collecting(&mut self, other: &WordSet) -> Vec<Key> {
        let mut added = Vec::new();
        for (&w, &oword) in &other.words {
            let word = self.words.entry(w).or_insert(0);
            let new_bits = oword & !*word;
            if new_bits != 0 {
                *word |= new_bits;
                for b in 0..64 {
                    if new_bits & (1u64 << b) != 0 {
                        added.push((w << 6) | b);
                        self.len += 1;
                    }
                }
            }
        }
        added
    }

    /// Plain union; true iff `self` changed.
    pub fn union(&mut self, other: &WordSet) -> bool {
        !self.union_collecting(other).is_empty()
    }
}
