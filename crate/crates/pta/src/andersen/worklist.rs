//! Worklist scheduling policies for the subset solver.
//!
//! All policies deduplicate by presence: pushing an id that is already
//! pending is a no-op and does not reorder it. Popped ids may be stale
//! (merged away since they were pushed); the solver resolves
//! representatives after popping.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use super::WorklistKind;

pub struct Worklist {
    kind: WorklistKind,
    present: Vec<bool>,
    queue: VecDeque<u32>,
    stack: Vec<u32>,
    /// Min-heap on (last fired tick, id) for LRF flavors, or
    /// (topological index, id) for TOPO.
    heap: BinaryHeap<Reverse<(u64, u32)>>,
    /// Deferred activations for the two-phase policy.
    next: Vec<u32>,
}

impl Worklist {
    pub fn new(kind: WorklistKind, id_space: usize) -> Self {
        Worklist {
            kind,
            present: vec![false; id_space],
            queue: VecDeque::new(),
            stack: Vec::new(),
            heap: BinaryHeap::new(),
            next: Vec::new(),
        }
    }

    /// `priority` is the policy-specific key of `n` at push time: the last
    /// fired tick for LRF flavors, the topological index for TOPO, ignored
    /// otherwise.
    pub fn push(&mut self, n: u32, priority: u64) {
        if self.present[n as usize] {
            return;
        }
        self.present[n as usize] = true;
        match self.kind {
            WorklistKind::Fifo => self.queue.push_back(n),
            WorklistKind::Lifo => self.stack.push(n),
            WorklistKind::Lrf | WorklistKind::Topo => self.heap.push(Reverse((priority, n))),
            WorklistKind::TwoLrf => self.next.push(n),
        }
    }

    pub fn pop(&mut self, last_fired: &[u64]) -> Option<u32> {
        let n = match self.kind {
            WorklistKind::Fifo => self.queue.pop_front(),
            WorklistKind::Lifo => self.stack.pop(),
            WorklistKind::Lrf | WorklistKind::Topo => self.heap.pop().map(|Reverse((_, n))| n),
            WorklistKind::TwoLrf => loop {
                if let Some(Reverse((_, n))) = self.heap.pop() {
                    break Some(n);
                }
                if self.next.is_empty() {
                    break None;
                }
                for n in self.next.drain(..) {
                    self.heap.push(Reverse((last_fired[n as usize], n)));
                }
            },
        }?;
        self.present[n as usize] = false;
        Some(n)
    }

    /// Rebuild the TOPO heap after a refresh of topological indices. Pending
    /// ids keep their presence; only priorities change.
    pub fn rebuild_topo(&mut self, topo_index: impl Fn(u32) -> u64) {
        debug_assert!(matches!(self.kind, WorklistKind::Topo));
        let pending: Vec<u32> = self.heap.drain().map(|Reverse((_, n))| n).collect();
        for n in pending {
            self.heap.push(Reverse((topo_index(n), n)));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifo_orders_and_deduplicates() {
        let mut wl = Worklist::new(WorklistKind::Fifo, 8);
        wl.push(3, 0);
        wl.push(1, 0);
        wl.push(3, 0);
        wl.push(2, 0);
        let ticks = vec![0u64; 8];
        assert_eq!(wl.pop(&ticks), Some(3));
        assert_eq!(wl.pop(&ticks), Some(1));
        assert_eq!(wl.pop(&ticks), Some(2));
        assert_eq!(wl.pop(&ticks), None);
    }

    #[test]
    fn lifo_pops_most_recent() {
        let mut wl = Worklist::new(WorklistKind::Lifo, 8);
        wl.push(1, 0);
        wl.push(2, 0);
        wl.push(1, 0);
        let ticks = vec![0u64; 8];
        assert_eq!(wl.pop(&ticks), Some(2));
        assert_eq!(wl.pop(&ticks), Some(1));
        assert_eq!(wl.pop(&ticks), None);
    }

    #[test]
    fn lrf_prefers_least_recently_fired() {
        let mut wl = Worklist::new(WorklistKind::Lrf, 8);
        // Node 5 fired at tick 7, node 2 never fired, node 4 fired at tick 3.
        wl.push(5, 7);
        wl.push(2, 0);
        wl.push(4, 3);
        let ticks = vec![0u64; 8];
        assert_eq!(wl.pop(&ticks), Some(2));
        assert_eq!(wl.pop(&ticks), Some(4));
        assert_eq!(wl.pop(&ticks), Some(5));
    }

    #[test]
    fn two_phase_defers_new_activations() {
        let mut wl = Worklist::new(WorklistKind::TwoLrf, 8);
        let mut ticks = vec![0u64; 8];
        wl.push(1, 0);
        wl.push(2, 0);
        // First phase drains {1, 2}; pushes during the drain go to `next`.
        assert_eq!(wl.pop(&ticks), Some(1));
        ticks[1] = 10;
        wl.push(3, ticks[3]);
        assert_eq!(wl.pop(&ticks), Some(2));
        ticks[2] = 11;
        wl.push(1, ticks[1]);
        // Swap: {3, 1} ordered by last-fired tick, so 3 (never fired) first.
        assert_eq!(wl.pop(&ticks), Some(3));
        assert_eq!(wl.pop(&ticks), Some(1));
        assert_eq!(wl.pop(&ticks), None);
    }

    #[test]
    fn topo_rebuild_reorders_pending() {
        let mut wl = Worklist::new(WorklistKind::Topo, 8);
        wl.push(1, 5);
        wl.push(2, 6);
        // New indices invert the order.
        wl.rebuild_topo(|n| if n == 1 { 9 } else { 0 });
        let ticks = vec![0u64; 8];
        assert_eq!(wl.pop(&ticks), Some(2));
        assert_eq!(wl.pop(&ticks), Some(1));
    }
}
