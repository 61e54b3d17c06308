//! Primal network simplex for the balanced transportation problem with equal
//! supplies on one side and equal demands on the other.
//!
//! The initial basis routes everything through an artificial root with big-M
//! arcs. Leaving arcs follow the last-blocking-arc rule, which keeps the basis
//! strongly feasible and rules out cycling. Tree bookkeeping is rebuilt by a
//! traversal after every pivot; with at most about a thousand nodes that is
//! cheaper than the pricing scan anyway.

use std::collections::HashMap;

struct Tree {
    parent: Vec<usize>,
    parent_arc: Vec<usize>,
    depth: Vec<usize>,
    pi: Vec<i128>,
    adj: Vec<Vec<usize>>,
    flow: HashMap<usize, i128>,
    stack: Vec<usize>,
}

struct Network<'a> {
    np: usize,
    nq: usize,
    cost: &'a [i64],
    big_m: i128,
}

impl Network<'_> {
    fn real_arcs(&self) -> usize {
        self.np * self.nq
    }

    fn root(&self) -> usize {
        self.np + self.nq
    }

    fn ends(&self, arc: usize) -> (usize, usize) {
        let e = self.real_arcs();
        if arc < e {
            (arc / self.nq, self.np + arc % self.nq)
        } else if arc < e + self.np {
            (arc - e, self.root())
        } else {
            (self.root(), self.np + (arc - e - self.np))
        }
    }

    fn arc_cost(&self, arc: usize) -> i128 {
        if arc < self.real_arcs() {
            self.cost[arc] as i128
        } else {
            self.big_m
        }
    }
}

impl Tree {
    fn rebuild(&mut self, net: &Network) {
        let root = net.root();
        self.parent[root] = usize::MAX;
        self.depth[root] = 0;
        self.pi[root] = 0;
        self.stack.clear();
        self.stack.push(root);
        while let Some(x) = self.stack.pop() {
            for k in 0..self.adj[x].len() {
                let a = self.adj[x][k];
                if a == self.parent_arc[x] && x != root {
                    continue;
                }
                let (s, t) = net.ends(a);
                let y = if s == x { t } else { s };
                self.parent[y] = x;
                self.parent_arc[y] = a;
                self.depth[y] = self.depth[x] + 1;
                // tree arcs have zero reduced cost: cost + π(src) − π(dst) = 0
                self.pi[y] = if s == x {
                    self.pi[x] + net.arc_cost(a)
                } else {
                    self.pi[x] - net.arc_cost(a)
                };
                self.stack.push(y);
            }
        }
    }

    fn remove_adj(&mut self, node: usize, arc: usize) {
        let list = &mut self.adj[node];
        let pos = list.iter().position(|&a| a == arc).expect("tree arc present");
        list.swap_remove(pos);
    }
}

/// Optimal flows `(i, j, f)` with `f > 0`, given integer `cost` (row-major
/// `np × nq`), supply `s` at every P-node and demand `t` at every Q-node
/// (`np·s = nq·t`).
pub fn solve_transport(np: usize, nq: usize, cost: &[i64], s: i128, t: i128) -> Vec<(usize, usize, i128)> {
    assert_eq!(cost.len(), np * nq, "cost matrix must be np × nq");
    assert_eq!(np as i128 * s, nq as i128 * t, "unbalanced transportation problem");
    if np == 0 || nq == 0 {
        return Vec::new();
    }
    let max_c = cost.iter().copied().max().unwrap_or(0).max(0) as i128;
    let total = np as i128 * s;
    let net = Network {
        np,
        nq,
        cost,
        big_m: total * (max_c + 1) + 1,
    };
    let v = np + nq + 1;
    let e = net.real_arcs();
    let root = net.root();
    let mut tree = Tree {
        parent: vec![usize::MAX; v],
        parent_arc: vec![usize::MAX; v],
        depth: vec![0; v],
        pi: vec![0; v],
        adj: vec![Vec::new(); v],
        flow: HashMap::with_capacity(v),
        stack: Vec::with_capacity(v),
    };
    for node in 0..np + nq {
        let a = e + node;
        tree.adj[node].push(a);
        tree.adj[root].push(a);
        tree.flow.insert(a, if node < np { s } else { t });
    }
    tree.rebuild(&net);

    let block = ((e as f64).sqrt().ceil() as usize).max(16).min(e);
    let mut next = 0usize;
    let mut path_u: Vec<usize> = Vec::with_capacity(v);
    let mut path_v: Vec<usize> = Vec::with_capacity(v);
    loop {
        // block pricing
        let mut entering = None;
        let mut best = 0i128;
        let mut scanned = 0usize;
        while scanned < e {
            let stop = (scanned + block).min(e);
            while scanned < stop {
                let a = next;
                next += 1;
                if next == e {
                    next = 0;
                }
                scanned += 1;
                let i = a / nq;
                let j = np + a % nq;
                let rc = cost[a] as i128 + tree.pi[i] - tree.pi[j];
                if rc < best {
                    best = rc;
                    entering = Some(a);
                }
            }
            if entering.is_some() {
                break;
            }
        }
        let Some(ent) = entering else { break };

        let (u, w) = net.ends(ent);
        // climb to the apex
        path_u.clear();
        path_v.clear();
        let (mut x, mut y) = (u, w);
        while tree.depth[x] > tree.depth[y] {
            path_u.push(x);
            x = tree.parent[x];
        }
        while tree.depth[y] > tree.depth[x] {
            path_v.push(y);
            y = tree.parent[y];
        }
        while x != y {
            path_u.push(x);
            path_v.push(y);
            x = tree.parent[x];
            y = tree.parent[y];
        }

        // cycle orientation: apex → … → u → w → … → apex; `true` = against flow
        let backward_u = |c: usize| -> bool {
            let (src, _) = net.ends(tree.parent_arc[c]);
            src == c
        };
        let backward_v = |c: usize| -> bool {
            let (src, _) = net.ends(tree.parent_arc[c]);
            src != c
        };
        let mut delta = i128::MAX;
        let mut leave: Option<usize> = None; // child node whose parent arc leaves
        for &c in path_u.iter().rev() {
            if backward_u(c) {
                let f = tree.flow[&tree.parent_arc[c]];
                if f <= delta {
                    delta = f;
                    leave = Some(c);
                }
            }
        }
        for &c in path_v.iter() {
            if backward_v(c) {
                let f = tree.flow[&tree.parent_arc[c]];
                if f <= delta {
                    delta = f;
                    leave = Some(c);
                }
            }
        }
        let leave = leave.expect("uncapacitated cycle cannot be unbounded with nonnegative big-M costs");

        for &c in &path_u {
            let a = tree.parent_arc[c];
            let f = tree.flow.get_mut(&a).unwrap();
            if backward_u(c) {
                *f -= delta;
            } else {
                *f += delta;
            }
        }
        for &c in &path_v {
            let a = tree.parent_arc[c];
            let f = tree.flow.get_mut(&a).unwrap();
            if backward_v(c) {
                *f -= delta;
            } else {
                *f += delta;
            }
        }
        let out_arc = tree.parent_arc[leave];
        let out_parent = tree.parent[leave];
        tree.flow.remove(&out_arc);
        tree.remove_adj(leave, out_arc);
        tree.remove_adj(out_parent, out_arc);
        tree.flow.insert(ent, delta);
        tree.adj[u].push(ent);
        tree.adj[w].push(ent);
        tree.rebuild(&net);
    }

    let mut out: Vec<(usize, usize, i128)> = tree
        .flow
        .iter()
        .filter(|&(&a, &f)| f > 0 && a < e)
        .map(|(&a, &f)| (a / nq, a % nq, f))
        .collect();
    debug_assert!(tree.flow.iter().all(|(&a, &f)| a < e || f == 0), "artificial flow left");
    out.sort_unstable();
    out
}
