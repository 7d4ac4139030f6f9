//! Fill-reducing orderings for the sparse Cholesky factorization.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingChoice {
    /// Approximate minimum degree on the quotient graph.
    #[default]
    Amd,
    /// Identity permutation, mainly for debugging.
    Natural,
}

/// Compute an elimination order. The returned vector maps elimination step
/// to original node: `perm[k]` is the node eliminated at step `k`.
pub fn compute_ordering(adj: &[Vec<usize>], choice: OrderingChoice) -> Vec<usize> {
    match choice {
        OrderingChoice::Natural => (0..adj.len()).collect(),
        OrderingChoice::Amd => approximate_minimum_degree(adj),
    }
}

/// Quotient-graph minimum degree with element absorption and approximate
/// external degrees, in the spirit of AMD. Ties break on the lowest node
/// index, so the result is deterministic.
pub fn approximate_minimum_degree(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut is_elem = vec![false; n];
    let mut alive_elem = vec![false; n];
    let mut vadj: Vec<Vec<usize>> = adj
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mut a: Vec<usize> = a.iter().copied().filter(|&j| j != i).collect();
            a.sort_unstable();
            a.dedup();
            a
        })
        .collect();
    let mut velem: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut evars: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut degree: Vec<usize> = vadj.iter().map(Vec::len).collect();
    let mut heap: BTreeSet<(usize, usize)> = (0..n).map(|i| (degree[i], i)).collect();

    let mut mark = vec![0usize; n];
    let mut wstamp = vec![0usize; n];
    let mut w = vec![0usize; n];
    let mut stamp = 0usize;
    let mut order = Vec::with_capacity(n);

    while let Some((_, p)) = heap.pop_first() {
        order.push(p);
        stamp += 1;
        mark[p] = stamp;

        // Pattern of the new element: variable neighbours plus every variable
        // of the adjacent elements, which are absorbed into p.
        let mut lp = Vec::new();
        for &j in &vadj[p] {
            if !is_elem[j] && mark[j] != stamp {
                mark[j] = stamp;
                lp.push(j);
            }
        }
        for &e in &velem[p] {
            if !alive_elem[e] {
                continue;
            }
            for &j in &evars[e] {
                if !is_elem[j] && mark[j] != stamp {
                    mark[j] = stamp;
                    lp.push(j);
                }
            }
            alive_elem[e] = false;
            evars[e] = Vec::new();
        }
        is_elem[p] = true;
        alive_elem[p] = true;
        vadj[p] = Vec::new();
        velem[p] = Vec::new();

        // w[e] = |Le \ Lp| for every live element touching Lp.
        for &i in &lp {
            for &e in &velem[i] {
                if !alive_elem[e] {
                    continue;
                }
                if wstamp[e] != stamp {
                    evars[e].retain(|&j| !is_elem[j]);
                    w[e] = evars[e].len();
                    wstamp[e] = stamp;
                }
                w[e] -= 1;
            }
        }

        let remaining = n - order.len();
        for &i in &lp {
            let mut ext = 0usize;
            velem[i].retain(|&e| {
                if !alive_elem[e] {
                    return false;
                }
                if w[e] == 0 {
                    // Le is a subset of Lp: absorb.
                    alive_elem[e] = false;
                    return false;
                }
                ext += w[e];
                true
            });
            velem[i].push(p);
            vadj[i].retain(|&j| !is_elem[j] && mark[j] != stamp);
            let d = (vadj[i].len() + lp.len() - 1 + ext).min(remaining.saturating_sub(1));
            heap.remove(&(degree[i], i));
            degree[i] = d;
            heap.insert((d, i));
        }
        evars[p] = lp;
    }
    order
}
