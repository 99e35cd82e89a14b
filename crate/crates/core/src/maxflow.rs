//! Dinic's maximum flow on integer capacities, used for maximum-weight
//! closure.

use std::collections::VecDeque;

pub const INF_CAP: i64 = i64::MAX / 4;

#[derive(Clone, Debug, Default)]
pub struct FlowNetwork {
    adj: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<i64>,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        FlowNetwork {
            adj: vec![Vec::new(); nodes],
            to: Vec::new(),
            cap: Vec::new(),
        }
    }

    pub fn add_edge(&mut self, u: usize, v: usize, cap: i64) {
        self.adj[u].push(self.to.len());
        self.to.push(v);
        self.cap.push(cap);
        self.adj[v].push(self.to.len());
        self.to.push(u);
        self.cap.push(0);
    }

    fn levels(&self, s: usize) -> Vec<i32> {
        let mut level = vec![-1; self.adj.len()];
        level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let v = self.to[e];
                if self.cap[e] > 0 && level[v] < 0 {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        level
    }

    fn augment(&mut self, u: usize, t: usize, pushed: i64, level: &[i32], iter: &mut [usize]) -> i64 {
        if u == t {
            return pushed;
        }
        while iter[u] < self.adj[u].len() {
            let e = self.adj[u][iter[u]];
            let v = self.to[e];
            if self.cap[e] > 0 && level[v] == level[u] + 1 {
                let got = self.augment(v, t, pushed.min(self.cap[e]), level, iter);
                if got > 0 {
                    self.cap[e] -= got;
                    self.cap[e ^ 1] += got;
                    return got;
                }
            }
            iter[u] += 1;
        }
        0
    }

    pub fn max_flow(&mut self, s: usize, t: usize) -> i64 {
        let mut flow = 0i64;
        loop {
            let level = self.levels(s);
            if level[t] < 0 {
                return flow;
            }
            let mut iter = vec![0; self.adj.len()];
            loop {
                let f = self.augment(s, t, INF_CAP, &level, &mut iter);
                if f == 0 {
                    break;
                }
                flow = flow.saturating_add(f);
            }
        }
    }

    /// Nodes reachable from `s` in the residual graph; after `max_flow` this
    /// is the smallest source side of a minimum cut.
    pub fn source_side(&self, s: usize) -> Vec<bool> {
        self.levels(s).into_iter().map(|l| l >= 0).collect()
    }
}

/// Maximum-weight closure: picks a set closed under `u -> v` implications
/// (`u` chosen forces `v`) maximizing the total weight. Returns the smallest
/// optimal set.
pub fn max_weight_closure(weights: &[i64], implications: &[(usize, usize)]) -> Vec<bool> {
    let k = weights.len();
    let (s, t) = (k, k + 1);
    let mut net = FlowNetwork::new(k + 2);
    for (u, &w) in weights.iter().enumerate() {
        if w > 0 {
            net.add_edge(s, u, w);
        } else if w < 0 {
            net.add_edge(u, t, -w);
        }
    }
    for &(u, v) in implications {
        net.add_edge(u, v, INF_CAP);
    }
    net.max_flow(s, t);
    let side = net.source_side(s);
    side[..k].to_vec()
}
