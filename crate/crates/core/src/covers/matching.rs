//! Bipartite matching under a distance threshold and bottleneck distances.

use crate::{Error, Result};

/// Point norm used by the transport distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Norm {
    #[default]
    L2,
    LInf,
}

impl Norm {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
        match self {
            Norm::L2 => diffs.map(|v| v * v).sum::<f64>().sqrt(),
            Norm::LInf => diffs.fold(0.0, f64::max),
        }
    }
}

/// Largest point-set size accepted by [`w_inf`].
pub const MAX_POINTS: usize = 2000;

/// Maximum-cardinality matching (Hopcroft–Karp) in the bipartite graph
/// given by adjacency lists from the left side to `right` vertices.
pub fn max_matching(adj: &[Vec<usize>], right: usize) -> usize {
    const FREE: usize = usize::MAX;
    let left = adj.len();
    let mut match_l = vec![FREE; left];
    let mut match_r = vec![FREE; right];
    let mut dist = vec![0usize; left];
    let mut size = 0;
    loop {
        // layered BFS from free left vertices
        let mut queue: Vec<usize> = (0..left).filter(|&u| match_l[u] == FREE).collect();
        for u in 0..left {
            dist[u] = if match_l[u] == FREE { 0 } else { usize::MAX };
        }
        let mut found = false;
        let mut head = 0;
        while head < queue.len() {
            let u = queue[head];
            head += 1;
            for &v in &adj[u] {
                let w = match_r[v];
                if w == FREE {
                    found = true;
                } else if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push(w);
                }
            }
        }
        if !found {
            return size;
        }
        let mut next = vec![0usize; left];
        for u in 0..left {
            if match_l[u] == FREE && augment(u, adj, &mut match_l, &mut match_r, &mut dist, &mut next) {
                size += 1;
            }
        }
    }
}

fn augment(
    u: usize,
    adj: &[Vec<usize>],
    match_l: &mut [usize],
    match_r: &mut [usize],
    dist: &mut [usize],
    next: &mut [usize],
) -> bool {
    while next[u] < adj[u].len() {
        let v = adj[u][next[u]];
        next[u] += 1;
        let w = match_r[v];
        if w == usize::MAX || (dist[w] == dist[u] + 1 && augment(w, adj, match_l, match_r, dist, next)) {
            match_l[u] = v;
            match_r[v] = u;
            return true;
        }
    }
    dist[u] = usize::MAX;
    false
}

fn pairwise(p: &[Vec<f64>], q: &[Vec<f64>], norm: Norm) -> Vec<Vec<f64>> {
    p.iter().map(|a| q.iter().map(|b| norm.distance(a, b)).collect()).collect()
}

fn matching_within(dist: &[Vec<f64>], right: usize, r: f64) -> usize {
    let adj: Vec<Vec<usize>> = dist
        .iter()
        .map(|row| (0..right).filter(|&j| row[j] <= r).collect())
        .collect();
    max_matching(&adj, right)
}

/// Size of a maximum matching between `p` and `q` using only pairs at
/// distance at most `r`.
pub fn matching_size_within(p: &[Vec<f64>], q: &[Vec<f64>], r: f64, norm: Norm) -> usize {
    matching_within(&pairwise(p, q, norm), q.len(), r)
}

/// `W_inf` between the uniform empirical measures on `p` and `q`: the
/// smallest `r` admitting a perfect matching with every pair within `r`,
/// found by binary search over the sorted pairwise distances.
pub fn w_inf(p: &[Vec<f64>], q: &[Vec<f64>], norm: Norm) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch { expected: p.len(), found: q.len() });
    }
    if p.len() > MAX_POINTS {
        return Err(Error::InvalidArgument(format!("at most {MAX_POINTS} points supported")));
    }
    let n = p.len();
    if n == 0 {
        return Ok(0.0);
    }
    let dist = pairwise(p, q, norm);
    let mut cands: Vec<f64> = dist.iter().flatten().copied().collect();
    cands.sort_by(f64::total_cmp);
    cands.dedup();
    let (mut lo, mut hi) = (0, cands.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if matching_within(&dist, n, cands[mid]) == n {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(cands[lo])
}

/// Brute-force `W_inf` over all `n!` matchings (small `n` only).
pub fn w_inf_brute_force(p: &[Vec<f64>], q: &[Vec<f64>], norm: Norm) -> f64 {
    fn go(i: usize, dist: &[Vec<f64>], used: &mut [bool], cur: f64, best: &mut f64) {
        if cur >= *best {
            return;
        }
        if i == dist.len() {
            *best = cur;
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                go(i + 1, dist, used, cur.max(dist[i][j]), best);
                used[j] = false;
            }
        }
    }
    if p.is_empty() {
        return 0.0;
    }
    let dist = pairwise(p, q, norm);
    let mut best = f64::INFINITY;
    go(0, &dist, &mut vec![false; q.len()], 0.0, &mut best);
    best
}
