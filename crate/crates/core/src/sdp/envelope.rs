//! Profile (envelope) Cholesky for banded symmetric systems, with
//! reverse Cuthill-McKee ordering to keep the profile small.

use std::collections::VecDeque;

/// Lower triangle of a symmetric matrix stored row by row from the first
/// structurally nonzero column up to the diagonal.
#[derive(Clone, Debug)]
pub struct Envelope {
    first: Vec<usize>,
    start: Vec<usize>,
    vals: Vec<f64>,
}

impl Envelope {
    /// Zero matrix whose row `i` spans columns `first[i]..=i`.
    pub fn zeros(first: Vec<usize>) -> Self {
        let mut start = Vec::with_capacity(first.len() + 1);
        let mut acc = 0;
        for (i, &f) in first.iter().enumerate() {
            assert!(f <= i, "envelope row starts past the diagonal");
            start.push(acc);
            acc += i - f + 1;
        }
        start.push(acc);
        Self {
            first,
            start,
            vals: vec![0.0; acc],
        }
    }

    /// Envelope wide enough for the given symmetric sparsity (pairs in any order).
    pub fn from_pattern(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut first: Vec<usize> = (0..n).collect();
        for (i, j) in pairs {
            let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
            first[hi] = first[hi].min(lo);
        }
        Self::zeros(first)
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn profile(&self) -> usize {
        self.vals.len()
    }

    pub fn first(&self, i: usize) -> usize {
        self.first[i]
    }

    pub fn clear(&mut self) {
        self.vals.iter_mut().for_each(|v| *v = 0.0);
    }

    fn idx(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if j < self.first[i] {
            None
        } else {
            Some(self.start[i] + j - self.first[i])
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.idx(i, j).map_or(0.0, |k| self.vals[k])
    }

    /// Adds `v` to entry `(i, j)` (and implicitly `(j, i)`).
    ///
    /// Panics if the entry lies outside the envelope.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j).expect("entry outside envelope");
        self.vals[k] += v;
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.vals[self.start[i]..self.start[i + 1]]
    }
}

/// `L L^T` factor. Rows whose pivot collapses relative to their diagonal are
/// treated as linearly dependent: they are dropped and their solution
/// component is fixed to zero.
#[derive(Clone, Debug)]
pub struct EnvelopeCholesky {
    l: Envelope,
    dropped: Vec<bool>,
}

impl EnvelopeCholesky {
    pub fn factor(mut a: Envelope, rel_drop: f64) -> Self {
        let n = a.dim();
        let mut dropped = vec![false; n];
        let diag0: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
        for i in 0..n {
            let fi = a.first[i];
            for j in fi..i {
                let k = a.start[i] + j - fi;
                if dropped[j] {
                    a.vals[k] = 0.0;
                    continue;
                }
                let fj = a.first[j];
                let lo = fi.max(fj);
                let (ri, rj) = (a.row(i), a.row(j));
                let mut s = 0.0;
                for c in lo..j {
                    s += ri[c - fi] * rj[c - fj];
                }
                let ljj = rj[j - fj];
                a.vals[k] = (a.vals[k] - s) / ljj;
            }
            let ri = a.row(i);
            let s: f64 = ri[..i - fi].iter().map(|v| v * v).sum();
            let k = a.start[i] + i - fi;
            let piv = a.vals[k] - s;
            if piv <= rel_drop * diag0[i].abs() || piv <= f64::MIN_POSITIVE || !piv.is_finite() {
                dropped[i] = true;
                a.vals[a.start[i]..a.start[i + 1]].iter_mut().for_each(|v| *v = 0.0);
                a.vals[k] = 1.0;
            } else {
                a.vals[k] = piv.sqrt();
            }
        }
        Self { l: a, dropped }
    }

    pub fn dropped(&self) -> &[bool] {
        &self.dropped
    }

    pub fn n_dropped(&self) -> usize {
        self.dropped.iter().filter(|&&d| d).count()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.dim();
        let mut z = b.to_vec();
        for i in 0..n {
            if self.dropped[i] {
                z[i] = 0.0;
                continue;
            }
            let fi = self.l.first[i];
            let r = self.l.row(i);
            let mut s = z[i];
            for c in fi..i {
                s -= r[c - fi] * z[c];
            }
            z[i] = s / r[i - fi];
        }
        for i in (0..n).rev() {
            if self.dropped[i] {
                z[i] = 0.0;
                continue;
            }
            let fi = self.l.first[i];
            let r = self.l.row(i);
            z[i] /= r[i - fi];
            let zi = z[i];
            for c in fi..i {
                z[c] -= r[c - fi] * zi;
            }
        }
        z
    }
}

/// Reverse Cuthill-McKee ordering; `perm[k]` is the original index placed at
/// position `k`.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let deg: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (deg[i], i));
    for &root in &by_degree {
        if seen[root] {
            continue;
        }
        let start = pseudo_peripheral(adj, root);
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nb: Vec<usize> = adj[v].iter().copied().filter(|&u| !seen[u]).collect();
            nb.sort_by_key(|&u| (deg[u], u));
            nb.dedup();
            for u in nb {
                seen[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(adj: &[Vec<usize>], root: usize) -> (usize, usize) {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[root] = 0;
    let mut queue = VecDeque::from([root]);
    let mut far = (0, root);
    while let Some(v) = queue.pop_front() {
        for &u in &adj[v] {
            if dist[u] == usize::MAX {
                dist[u] = dist[v] + 1;
                if dist[u] > far.0 || (dist[u] == far.0 && adj[u].len() < adj[far.1].len()) {
                    far = (dist[u], u);
                }
                queue.push_back(u);
            }
        }
    }
    far
}

fn pseudo_peripheral(adj: &[Vec<usize>], root: usize) -> usize {
    let (mut ecc, mut far) = bfs_levels(adj, root);
    let mut cur = root;
    for _ in 0..16 {
        let (e, next) = bfs_levels(adj, far);
        cur = far;
        if e <= ecc {
            break;
        }
        ecc = e;
        far = next;
    }
    cur
}
