//! Dominator trees and dominance frontiers over dense node indices.
//!
//! Callers flatten their graph (a per-function CFG, or its reverse with a
//! virtual exit appended) into adjacency lists and get back immediate
//! dominators in the iterative style of Cooper, Harvey, and Kennedy. The
//! same machinery serves forward dominance for memory-SSA phi placement and
//! post-dominance for control dependence.

use std::collections::BTreeSet;

/// Immediate-dominator table of one rooted graph. `idom[root] == Some(root)`;
/// nodes unreachable from the root stay `None` and carry no dominance facts.
#[derive(Debug)]
pub(crate) struct DomTree {
    pub idom: Vec<Option<usize>>,
}

#[cfg(test)]
impl DomTree {
    /// Does `a` dominate `b`? Every node dominates itself.
    fn dominates(&self, a: usize, b: usize) -> bool {
        let mut n = b;
        loop {
            if n == a {
                return true;
            }
            match self.idom[n] {
                Some(p) if p != n => n = p,
                _ => return false,
            }
        }
    }
}

fn intersect(idom: &[Option<usize>], po_num: &[usize], mut a: usize, mut b: usize) -> usize {
    while a != b {
        while po_num[a] < po_num[b] {
            a = idom[a].expect("processed node");
        }
        while po_num[b] < po_num[a] {
            b = idom[b].expect("processed node");
        }
    }
    a
}

/// Build the dominator tree of the graph rooted at `entry`.
pub(crate) fn dominator_tree(succs: &[Vec<usize>], entry: usize) -> DomTree {
    let n = succs.len();

    // Iterative postorder DFS from the root.
    let mut state = vec![0u8; n]; // 0 unvisited, 1 open, 2 finished
    let mut post = Vec::new();
    let mut stack = vec![(entry, 0usize)];
    state[entry] = 1;
    while let Some((u, i)) = stack.last_mut() {
        let u = *u;
        if *i < succs[u].len() {
            let v = succs[u][*i];
            *i += 1;
            if state[v] == 0 {
                state[v] = 1;
                stack.push((v, 0));
            }
        } else {
            state[u] = 2;
            post.push(u);
            stack.pop();
        }
    }
    let mut po_num = vec![usize::MAX; n];
    for (i, &u) in post.iter().enumerate() {
        po_num[u] = i;
    }
    let rpo: Vec<usize> = post.into_iter().rev().collect();

    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (u, ss) in succs.iter().enumerate() {
        for &v in ss {
            preds[v].push(u);
        }
    }

    let mut idom: Vec<Option<usize>> = vec![None; n];
    idom[entry] = Some(entry);
    let mut changed = true;
    while changed {
        changed = false;
        for &u in &rpo {
            if u == entry {
                continue;
            }
            let mut new = None;
            for &p in &preds[u] {
                if idom[p].is_none() {
                    continue;
                }
                new = Some(match new {
                    None => p,
                    Some(q) => intersect(&idom, &po_num, p, q),
                });
            }
            if new.is_some() && new != idom[u] {
                idom[u] = new;
                changed = true;
            }
        }
    }

    DomTree { idom }
}

/// Dominance frontiers of every reachable node: `df[n]` holds the joins
/// where n's dominance ends, the places phi nodes go.
pub(crate) fn dominance_frontiers(succs: &[Vec<usize>], dt: &DomTree) -> Vec<BTreeSet<usize>> {
    let n = succs.len();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (u, ss) in succs.iter().enumerate() {
        if dt.idom[u].is_none() {
            continue;
        }
        for &v in ss {
            preds[v].push(u);
        }
    }

    let mut df = vec![BTreeSet::new(); n];
    for b in 0..n {
        let Some(ib) = dt.idom[b] else { continue };
        if preds[b].len() < 2 {
            continue;
        }
        for &p in &preds[b] {
            let mut runner = p;
            while runner != ib {
                df[runner].insert(b);
                runner = dt.idom[runner].expect("dominator chain");
            }
        }
    }
    df
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(edges: &[(usize, usize)], n: usize) -> DomTree {
        let mut succs = vec![Vec::new(); n];
        for &(a, b) in edges {
            succs[a].push(b);
        }
        dominator_tree(&succs, 0)
    }

    #[test]
    fn diamond_joins_at_the_fork() {
        // 0 -> {1, 2} -> 3
        let dt = tree(&[(0, 1), (0, 2), (1, 3), (2, 3)], 4);
        assert_eq!(dt.idom[1], Some(0));
        assert_eq!(dt.idom[2], Some(0));
        assert_eq!(dt.idom[3], Some(0));
        assert!(dt.dominates(0, 3));
        assert!(!dt.dominates(1, 3));

        let mut succs = vec![Vec::new(); 4];
        for (a, b) in [(0, 1), (0, 2), (1, 3), (2, 3)] {
            succs[a].push(b);
        }
        let df = dominance_frontiers(&succs, &dt);
        assert!(df[1].contains(&3) && df[2].contains(&3));
        assert!(df[0].is_empty());
    }

    #[test]
    fn loops_keep_the_header_on_its_own_frontier() {
        // 0 -> 1 -> 2 -> 1, 2 -> 3
        let edges = [(0, 1), (1, 2), (2, 1), (2, 3)];
        let dt = tree(&edges, 4);
        assert_eq!(dt.idom[1], Some(0));
        assert_eq!(dt.idom[2], Some(1));
        assert_eq!(dt.idom[3], Some(2));
        let mut succs = vec![Vec::new(); 4];
        for (a, b) in edges {
            succs[a].push(b);
        }
        let df = dominance_frontiers(&succs, &dt);
        assert!(df[2].contains(&1), "back edge source has the header on its frontier");
        assert!(df[1].contains(&1), "the header's own frontier includes itself");
    }

    #[test]
    fn dominance_matches_exhaustive_path_checks() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.gen_range(2..9);
            let mut succs: Vec<Vec<usize>> = vec![Vec::new(); n];
            for u in 0..n {
                for _ in 0..rng.gen_range(0..3) {
                    let v = rng.gen_range(0..n);
                    if !succs[u].contains(&v) {
                        succs[u].push(v);
                    }
                }
            }
            let dt = dominator_tree(&succs, 0);

            // v dominates u iff every simple path 0 -> u passes v. A path
            // with a cycle reduces to a simple path over a subset of its
            // nodes, so simple paths decide the "every path" quantifier.
            let mut paths_to: Vec<Vec<Vec<usize>>> = vec![Vec::new(); n];
            let mut stack = vec![vec![0usize]];
            while let Some(path) = stack.pop() {
                let last = *path.last().unwrap();
                paths_to[last].push(path.clone());
                for &s in &succs[last] {
                    if !path.contains(&s) {
                        let mut p = path.clone();
                        p.push(s);
                        stack.push(p);
                    }
                }
            }
            for u in 0..n {
                if paths_to[u].is_empty() {
                    assert_eq!(dt.idom[u], None, "unreachable node has no dominator");
                    continue;
                }
                for v in 0..n {
                    let all = paths_to[u].iter().all(|p| p.contains(&v));
                    assert_eq!(dt.dominates(v, u), all, "dom({v}, {u}) in {succs:?}");
                }
            }
        }
    }
}
