//! Bipartite matching primitives used by the metrics.

/// Maximum-cardinality matching on a bipartite graph given as a left×right adjacency
/// matrix. Returns `(left, right)` pairs. Augmenting paths (Kuhn); left vertices are tried
/// in index order so the result is deterministic.
pub fn max_bipartite_matching(adj: &[Vec<bool>], right_len: usize) -> Vec<(usize, usize)> {
    let mut match_right: Vec<Option<usize>> = vec![None; right_len];
    for left in 0..adj.len() {
        let mut seen = vec![false; right_len];
        augment(left, adj, &mut seen, &mut match_right);
    }
    let mut pairs: Vec<(usize, usize)> = match_right
        .iter()
        .enumerate()
        .filter_map(|(r, l)| l.map(|l| (l, r)))
        .collect();
    pairs.sort_unstable();
    pairs
}

fn augment(left: usize, adj: &[Vec<bool>], seen: &mut [bool], match_right: &mut [Option<usize>]) -> bool {
    for right in 0..match_right.len() {
        if adj[left][right] && !seen[right] {
            seen[right] = true;
            let free = match match_right[right] {
                None => true,
                Some(other) => augment(other, adj, seen, match_right),
            };
            if free {
                match_right[right] = Some(left);
                return true;
            }
        }
    }
    false
}

/// Maximum-weight assignment between rows and columns of a (possibly rectangular) score
/// matrix. Returns `assignment[row] = Some(col)`; each column is used at most once.
/// Hungarian method with potentials on the zero-padded square matrix.
pub fn max_weight_assignment(scores: &[Vec<i64>], cols: usize) -> Vec<Option<usize>> {
    let rows = scores.len();
    let n = rows.max(cols);
    if n == 0 {
        return Vec::new();
    }
    let max = scores.iter().flatten().copied().max().unwrap_or(0).max(0);
    // Minimise cost = max - score; padding cells cost `max` (score 0).
    let cost = |i: usize, j: usize| -> i64 {
        if i < rows && j < cols {
            max - scores[i][j]
        } else {
            max
        }
    };

    // 1-based arrays, column 0 is the virtual start.
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![None; rows];
    for (j, &i) in p.iter().enumerate().take(n + 1).skip(1) {
        if i >= 1 && i <= rows && j <= cols {
            assignment[i - 1] = Some(j - 1);
        }
    }
    assignment
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kuhn_finds_augmenting_path() {
        // Greedy would pair 0-0 and leave 1 unmatched.
        let adj = vec![vec![true, true], vec![true, false]];
        let m = max_bipartite_matching(&adj, 2);
        assert_eq!(m, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn kuhn_empty() {
        assert!(max_bipartite_matching(&[], 3).is_empty());
        assert!(max_bipartite_matching(&[vec![]], 0).is_empty());
    }

    fn total(scores: &[Vec<i64>], a: &[Option<usize>]) -> i64 {
        a.iter()
            .enumerate()
            .filter_map(|(i, j)| j.map(|j| scores[i][j]))
            .sum()
    }

    fn brute(scores: &[Vec<i64>], cols: usize) -> i64 {
        fn go(i: usize, scores: &[Vec<i64>], used: &mut Vec<bool>) -> i64 {
            if i == scores.len() {
                return 0;
            }
            let mut best = go(i + 1, scores, used);
            for j in 0..used.len() {
                if !used[j] {
                    used[j] = true;
                    best = best.max(scores[i][j] + go(i + 1, scores, used));
                    used[j] = false;
                }
            }
            best
        }
        go(0, scores, &mut vec![false; cols])
    }

    #[test]
    fn hungarian_square() {
        let s = vec![vec![4, 1, 3], vec![2, 0, 5], vec![3, 2, 2]];
        let a = max_weight_assignment(&s, 3);
        assert_eq!(total(&s, &a), brute(&s, 3));
    }

    #[test]
    fn hungarian_rectangular() {
        let wide = vec![vec![1, 7, 2, 0]];
        let a = max_weight_assignment(&wide, 4);
        assert_eq!(a, vec![Some(1)]);
        let tall = vec![vec![1], vec![9], vec![3]];
        let a = max_weight_assignment(&tall, 1);
        assert_eq!(a, vec![None, Some(0), None]);
    }

    #[test]
    fn hungarian_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let rows = rng.random_range(0..6);
            let cols = rng.random_range(0..6);
            let s: Vec<Vec<i64>> = (0..rows)
                .map(|_| (0..cols).map(|_| rng.random_range(0..6)).collect())
                .collect();
            let a = max_weight_assignment(&s, cols);
            let mut used = vec![false; cols];
            for j in a.iter().flatten() {
                assert!(!used[*j]);
                used[*j] = true;
            }
            assert_eq!(total(&s, &a), brute(&s, cols));
        }
    }
}
