//! Iterative Tarjan strongly connected components.
//!
//! Components are returned in completion order: every edge leaving a
//! component points into an earlier entry, so iterating the result in
//! reverse visits sources before their targets. Callers rely on that for
//! wave scheduling, topological worklist indices, and offline labeling.

/// Compute the strongly connected components of the subgraph induced by
/// `nodes`. Ids must be below `id_space`; `succs` pushes the successors of a
/// node into the scratch vector (duplicates and self loops are fine).
pub fn tarjan_sccs(
    id_space: usize,
    nodes: &[u32],
    mut succs: impl FnMut(u32, &mut Vec<u32>),
) -> Vec<Vec<u32>> {
    const UNSET: u32 = u32::MAX;
    let mut index = vec![UNSET; id_space];
    let mut lowlink = vec![UNSET; id_space];
    let mut on_stack = vec![false; id_space];
    let mut stack: Vec<u32> = Vec::new();
    let mut next_index = 0u32;
    let mut components = Vec::new();

    struct Frame {
        v: u32,
        succs: Vec<u32>,
        i: usize,
    }
    let mut frames: Vec<Frame> = Vec::new();
    let mut scratch = Vec::new();

    for &root in nodes {
        if index[root as usize] != UNSET {
            continue;
        }
        let mut open = |v: u32,
                        index: &mut Vec<u32>,
                        lowlink: &mut Vec<u32>,
                        stack: &mut Vec<u32>,
                        on_stack: &mut Vec<bool>,
                        scratch: &mut Vec<u32>,
                        next_index: &mut u32| {
            index[v as usize] = *next_index;
            lowlink[v as usize] = *next_index;
            *next_index += 1;
            stack.push(v);
            on_stack[v as usize] = true;
            scratch.clear();
            succs(v, scratch);
            Frame {
                v,
                succs: scratch.clone(),
                i: 0,
            }
        };
        frames.push(open(
            root,
            &mut index,
            &mut lowlink,
            &mut stack,
            &mut on_stack,
            &mut scratch,
            &mut next_index,
        ));
        while let Some(frame) = frames.last_mut() {
            let v = frame.v;
            if frame.i < frame.succs.len() {
                let w = frame.succs[frame.i];
                frame.i += 1;
                if index[w as usize] == UNSET {
                    let f = open(
                        w,
                        &mut index,
                        &mut lowlink,
                        &mut stack,
                        &mut on_stack,
                        &mut scratch,
                        &mut next_index,
                    );
                    frames.push(f);
                } else if on_stack[w as usize] {
                    let low = lowlink[v as usize].min(index[w as usize]);
                    lowlink[v as usize] = low;
                }
            } else {
                frames.pop();
                if lowlink[v as usize] == index[v as usize] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w as usize] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    components.push(comp);
                }
                if let Some(parent) = frames.last_mut() {
                    let low = lowlink[parent.v as usize].min(lowlink[v as usize]);
                    lowlink[parent.v as usize] = low;
                }
            }
        }
    }
    components
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn run(n: u32, edges: &[(u32, u32)]) -> Vec<Vec<u32>> {
        let nodes: Vec<u32> = (0..n).collect();
        tarjan_sccs(n as usize, &nodes, |v, out| {
            out.extend(edges.iter().filter(|(a, _)| *a == v).map(|(_, b)| *b))
        })
    }

    /// Mutual-reachability partition computed by brute force.
    fn oracle(n: u32, edges: &[(u32, u32)]) -> BTreeSet<Vec<u32>> {
        let mut reach = vec![vec![false; n as usize]; n as usize];
        for v in 0..n as usize {
            reach[v][v] = true;
        }
        for &(a, b) in edges {
            reach[a as usize][b as usize] = true;
        }
        for k in 0..n as usize {
            for i in 0..n as usize {
                for j in 0..n as usize {
                    if reach[i][k] && reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
        let mut out = BTreeSet::new();
        for v in 0..n as usize {
            let comp: Vec<u32> = (0..n as usize)
                .filter(|&w| reach[v][w] && reach[w][v])
                .map(|w| w as u32)
                .collect();
            out.insert(comp);
        }
        out
    }

    #[test]
    fn loop_plus_tail() {
        let comps = run(5, &[(0, 1), (1, 2), (2, 0), (2, 3), (3, 4)]);
        let as_set: BTreeSet<Vec<u32>> = comps.iter().cloned().collect();
        assert!(as_set.contains(&vec![0, 1, 2]));
        assert!(as_set.contains(&vec![3]));
        assert!(as_set.contains(&vec![4]));
    }

    #[test]
    fn completion_order_is_reverse_topological() {
        // 0 -> 1 -> 2 with a cycle {1, 3}.
        let comps = run(4, &[(0, 1), (1, 2), (1, 3), (3, 1)]);
        let pos = |needle: u32| {
            comps
                .iter()
                .position(|c| c.contains(&needle))
                .expect("missing node")
        };
        // Targets complete before their sources.
        assert!(pos(2) < pos(1));
        assert!(pos(1) < pos(0));
    }

    #[test]
    fn matches_reachability_oracle_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5CC5);
        for _ in 0..200 {
            let n = rng.gen_range(1..=12u32);
            let m = rng.gen_range(0..=30usize);
            let edges: Vec<(u32, u32)> = (0..m)
                .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n)))
                .collect();
            let got: BTreeSet<Vec<u32>> = run(n, &edges).into_iter().collect();
            assert_eq!(got, oracle(n, &edges), "n={n} edges={edges:?}");
        }
    }

    #[test]
    fn skips_nodes_outside_the_induced_subgraph() {
        // Only even nodes participate; odd ids stay untouched.
        let nodes = [0u32, 2, 4];
        let comps = tarjan_sccs(6, &nodes, |v, out| {
            if v < 4 {
                out.push(v + 2);
            }
            if v == 4 {
                out.push(0);
            }
        });
        assert_eq!(comps, vec![vec![0, 2, 4]]);
    }
}
