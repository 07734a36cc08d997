//! Indexing of the upper-triangular pairs (i ≤ j) of an N×N Gram matrix.
//!
//! Pairs are enumerated row-major: (0,0), (0,1), …, (0,N−1), (1,1), …

/// M = N(N+1)/2.
pub fn n_pairs(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Index of pair `(i, j)`; arguments may be given in either order.
#[inline]
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

/// All pairs in index order.
pub fn pair_list(n: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::with_capacity(n_pairs(n));
    for i in 0..n {
        for j in i..n {
            v.push((i, j));
        }
    }
    v
}

/// Pairs touching at least one index in `set`.
pub fn strip_pairs(n: usize, set: &[usize]) -> Vec<usize> {
    let mut mark = vec![false; n];
    for &i in set {
        mark[i] = true;
    }
    pair_list(n)
        .into_iter()
        .enumerate()
        .filter(|(_, (i, j))| mark[*i] || mark[*j])
        .map(|(p, _)| p)
        .collect()
}

/// Pairs with both indices in `set`.
pub fn block_pairs(n: usize, set: &[usize]) -> Vec<usize> {
    let mut mark = vec![false; n];
    for &i in set {
        mark[i] = true;
    }
    pair_list(n)
        .into_iter()
        .enumerate()
        .filter(|(_, (i, j))| mark[*i] && mark[*j])
        .map(|(p, _)| p)
        .collect()
}
