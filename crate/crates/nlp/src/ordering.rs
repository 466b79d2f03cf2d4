//! Fill-reducing symmetric ordering.
//!
//! Plain minimum-degree elimination on an explicit elimination graph. The
//! KKT systems this crate factors are block-sparse with small blocks hanging
//! off a banded backbone, so the explicit graph stays small and the ordering
//! is computed once per problem structure.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// A symmetric permutation. `perm[k]` is the original index placed at
/// position `k`; `iperm` is its inverse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    pub perm: Vec<usize>,
    pub iperm: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        let perm: Vec<usize> = (0..n).collect();
        Self {
            iperm: perm.clone(),
            perm,
        }
    }

    pub fn from_perm(perm: Vec<usize>) -> Self {
        let mut iperm = vec![0; perm.len()];
        for (k, &p) in perm.iter().enumerate() {
            iperm[p] = k;
        }
        Self { perm, iperm }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }
}

fn merge_into(target: &mut Vec<usize>, extra: &[usize], skip_a: usize, skip_b: usize) {
    let mut merged = Vec::with_capacity(target.len() + extra.len());
    let (mut i, mut j) = (0, 0);
    while i < target.len() || j < extra.len() {
        let next = match (target.get(i), extra.get(j)) {
            (Some(&a), Some(&b)) if a < b => {
                i += 1;
                a
            }
            (Some(&a), Some(&b)) if a > b => {
                j += 1;
                b
            }
            (Some(&a), Some(_)) => {
                i += 1;
                j += 1;
                a
            }
            (Some(&a), None) => {
                i += 1;
                a
            }
            (None, Some(&b)) => {
                j += 1;
                b
            }
            (None, None) => unreachable!(),
        };
        if next != skip_a && next != skip_b {
            merged.push(next);
        }
    }
    *target = merged;
}

/// Minimum-degree ordering of the graph with `n` nodes and the given
/// undirected edges. Self loops and duplicates are ignored. Ties are broken
/// by the smaller node index so the result is deterministic.
pub fn minimum_degree(n: usize, edges: &[(usize, usize)]) -> Permutation {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in edges {
        if a != b {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }

    let mut eliminated = vec![false; n];
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> =
        (0..n).map(|i| Reverse((adj[i].len(), i))).collect();
    let mut perm = Vec::with_capacity(n);

    while let Some(Reverse((degree, p))) = heap.pop() {
        if eliminated[p] || degree != adj[p].len() {
            continue;
        }
        eliminated[p] = true;
        perm.push(p);
        let neighbours = std::mem::take(&mut adj[p]);
        for &u in &neighbours {
            merge_into(&mut adj[u], &neighbours, u, p);
            heap.push(Reverse((adj[u].len(), u)));
        }
    }
    debug_assert_eq!(perm.len(), n);
    Permutation::from_perm(perm)
}
