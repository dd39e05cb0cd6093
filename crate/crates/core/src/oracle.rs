//! Brute-force references and seeded instance generation.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::hypergraph::{Hyperedge, Hypergraph};

/// Largest edge count accepted by [`oracle_helly_berge`].
pub const BERGE_MAX_EDGES: usize = 12;

/// `w(u, v) = min { w(e) : u, v in e }` for `u != v`, 1-based.
pub fn clique_weights(h: &Hypergraph) -> Vec<Vec<Option<u64>>> {
    let n = h.n_v();
    let mut w = vec![vec![None; n + 1]; n + 1];
    for e in h.edges() {
        for &u in &e.vertices {
            for &v in &e.vertices {
                if u != v {
                    let cur: &mut Option<u64> = &mut w[u][v];
                    *cur = Some(cur.map_or(e.weight, |c| c.min(e.weight)));
                }
            }
        }
    }
    w
}

/// Binary-heap Dijkstra on the clique expansion. Unreachable vertices get
/// `omega`; `prev` starts as the identity and ties go to the smaller index.
pub fn oracle_dijkstra_clique(h: &Hypergraph, start: usize, omega: u64) -> (Vec<u64>, Vec<usize>) {
    let n = h.n_v();
    let w = clique_weights(h);
    let mut dist: Vec<Option<u64>> = vec![None; n + 1];
    let mut prev: Vec<usize> = (0..=n).collect();
    let mut done = vec![false; n + 1];
    let mut heap = BinaryHeap::new();
    dist[start] = Some(0);
    heap.push(Reverse((0u64, start)));
    while let Some(Reverse((d, u))) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        for v in 1..=n {
            if let Some(wv) = w[u][v] {
                let nd = d + wv;
                if !done[v] && dist[v].is_none_or(|cur| nd < cur) {
                    dist[v] = Some(nd);
                    prev[v] = u;
                    heap.push(Reverse((nd, v)));
                }
            }
        }
    }
    (
        dist[1..].iter().map(|d| d.unwrap_or(omega)).collect(),
        prev[1..].to_vec(),
    )
}

/// First index of the smallest value (1-based) and the value.
pub fn oracle_minimum(values: &[u64]) -> Option<(usize, u64)> {
    let mut best: Option<(usize, u64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i + 1, v));
        }
    }
    best
}

/// For every vertex, the lightest edge it shares with `node`, or `omega`.
pub fn oracle_shared_edges(h: &Hypergraph, node: usize, omega: u64) -> Vec<u64> {
    (1..=h.n_v())
        .map(|v| {
            h.edges()
                .iter()
                .filter(|e| e.vertices.contains(&node) && e.vertices.contains(&v))
                .map(|e| e.weight)
                .min()
                .unwrap_or(omega)
        })
        .collect()
}

/// Whether every pairwise-intersecting subfamily of edges has a common
/// vertex.
pub fn oracle_helly_berge(h: &Hypergraph) -> Result<bool> {
    let m = h.n_e();
    if m > BERGE_MAX_EDGES {
        return Err(Error::TooLarge(format!(
            "{m} edges, exhaustive check supports at most {BERGE_MAX_EDGES}"
        )));
    }
    let sets: Vec<u64> = h
        .edges()
        .iter()
        .map(|e| e.vertices.iter().fold(0u64, |acc, &v| acc | 1 << (v % 64)))
        .collect();
    let wide = h.n_v() >= 64;
    let meet = |a: usize, b: usize| -> bool {
        if wide {
            h.edges()[a]
                .vertices
                .iter()
                .any(|v| h.edges()[b].vertices.contains(v))
        } else {
            sets[a] & sets[b] != 0
        }
    };
    for family in 1u32..(1 << m) {
        if family.count_ones() < 2 {
            continue;
        }
        let members: Vec<usize> = (0..m).filter(|&i| family >> i & 1 == 1).collect();
        let pairwise = members
            .iter()
            .enumerate()
            .all(|(i, &a)| members[i + 1..].iter().all(|&b| meet(a, b)));
        if !pairwise {
            continue;
        }
        let common =
            (1..=h.n_v()).any(|v| members.iter().all(|&e| h.edges()[e].vertices.contains(&v)));
        if !common {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Deterministic instance from `seed`: `n_v` and `n_e` uniform in their
/// ranges, edge sizes uniform in `1..=n_v`, weights uniform in `1..=w_max`.
pub fn random_hypergraph(seed: u64, n_v_max: usize, n_e_max: usize, w_max: u64) -> Hypergraph {
    assert!(
        n_v_max >= 1 && n_e_max >= 1 && w_max >= 1,
        "bounds must be at least 1"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_v = rng.gen_range(1..=n_v_max);
    let n_e = rng.gen_range(1..=n_e_max);
    random_edges(&mut rng, n_v, n_e, w_max)
}

/// Like [`random_hypergraph`] with exactly `n_v` vertices and `n_e` edges.
pub fn random_hypergraph_sized(seed: u64, n_v: usize, n_e: usize, w_max: u64) -> Hypergraph {
    assert!(
        n_v >= 1 && n_e >= 1 && w_max >= 1,
        "sizes must be at least 1"
    );
    random_edges(&mut ChaCha8Rng::seed_from_u64(seed), n_v, n_e, w_max)
}

fn random_edges(rng: &mut ChaCha8Rng, n_v: usize, n_e: usize, w_max: u64) -> Hypergraph {
    let edges = (0..n_e)
        .map(|_| {
            let size = rng.gen_range(1..=n_v);
            let mut vertices: Vec<usize> =
                sample(rng, n_v, size).into_iter().map(|v| v + 1).collect();
            vertices.sort_unstable();
            Hyperedge {
                weight: rng.gen_range(1..=w_max),
                vertices,
            }
        })
        .collect();
    Hypergraph::new(n_v, edges).expect("generated instances are valid")
}

/// Whether every vertex is reachable from `start` through shared edges.
pub fn is_connected_from(h: &Hypergraph, start: usize) -> bool {
    let w = clique_weights(h);
    let mut seen = vec![false; h.n_v() + 1];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(u) = stack.pop() {
        for v in 1..=h.n_v() {
            if w[u][v].is_some() && !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen[1..].iter().all(|&s| s)
}

/// Every hypergraph with `n_v` in `1..=max_v` and `n_e` in `1..=max_e`,
/// edges drawn (with repetition, in order) from the nonempty vertex subsets,
/// all of weight 1.
pub fn enumerate_hypergraphs(max_v: usize, max_e: usize) -> Vec<Hypergraph> {
    let mut out = Vec::new();
    for n_v in 1..=max_v {
        let subsets: Vec<Vec<usize>> = (1u32..(1 << n_v))
            .map(|s| (1..=n_v).filter(|&v| s >> (v - 1) & 1 == 1).collect())
            .collect();
        for n_e in 1..=max_e {
            let mut idx = vec![0usize; n_e];
            loop {
                let edges = idx
                    .iter()
                    .map(|&i| Hyperedge {
                        weight: 1,
                        vertices: subsets[i].clone(),
                    })
                    .collect();
                out.push(Hypergraph::new(n_v, edges).expect("subsets are valid edges"));
                let mut j = 0;
                while j < n_e {
                    idx[j] += 1;
                    if idx[j] < subsets.len() {
                        break;
                    }
                    idx[j] = 0;
                    j += 1;
                }
                if j == n_e {
                    break;
                }
            }
        }
    }
    out
}
