//! Square assignment by shortest augmenting paths (Hungarian method with
//! potentials), `O(n³)` on integer costs.

/// Minimum-cost perfect matching for the `n × n` row-major `cost`.
/// Returns `perm` with row `i` assigned to column `perm[i]`.
pub fn solve_assignment(n: usize, cost: &[i64]) -> Vec<usize> {
    assert_eq!(cost.len(), n * n, "cost matrix must be n × n");
    if n == 0 {
        return Vec::new();
    }
    const INF: i64 = i64::MAX / 4;
    // 1-based internally; column 0 is the virtual start.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![INF; n + 1];
    let mut used = vec![false; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = INF);
        used.iter_mut().for_each(|b| *b = false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let ui = u[i0];
            let crow = &cost[(i0 - 1) * n..i0 * n];
            let mut delta = INF;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = crow[j - 1] - ui - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[owner[j] - 1] = j - 1;
    }
    perm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(n: usize, cost: &[i64]) -> i64 {
        fn rec(n: usize, row: usize, used: &mut Vec<bool>, cost: &[i64]) -> i64 {
            if row == n {
                return 0;
            }
            let mut best = i64::MAX;
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost[row * n + j] + rec(n, row + 1, used, cost));
                    used[j] = false;
                }
            }
            best
        }
        rec(n, 0, &mut vec![false; n], cost)
    }

    #[test]
    fn matches_brute_force() {
        let mut state = 12345u64;
        for n in 1..=7 {
            for _ in 0..20 {
                let cost: Vec<i64> = (0..n * n)
                    .map(|_| {
                        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        ((state >> 33) % 1000) as i64
                    })
                    .collect();
                let perm = solve_assignment(n, &cost);
                let mut seen = vec![false; n];
                perm.iter().for_each(|&j| seen[j] = true);
                assert!(seen.iter().all(|&s| s));
                let got: i64 = perm.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
                assert_eq!(got, brute(n, &cost));
            }
        }
    }
}
