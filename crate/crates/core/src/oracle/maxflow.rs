//! Dinic's algorithm on real-valued capacities.

use std::collections::VecDeque;

/// Residual capacities at or below this fraction of the largest capacity
/// are treated as exhausted.
const RESIDUAL_EPS: f64 = 1e-15;

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    cap: f64,
    residual: f64,
}

#[derive(Debug, Clone)]
pub struct FlowNetwork {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
    level: Vec<i64>,
    cursor: Vec<usize>,
    eps: f64,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        Self {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
            level: vec![-1; nodes],
            cursor: vec![0; nodes],
            eps: 0.0,
        }
    }

    /// Adds a directed edge and returns its handle for [`FlowNetwork::flow`].
    pub fn add_edge(&mut self, from: usize, to: usize, cap: f64) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge { to, cap, residual: cap });
        self.edges.push(Edge {
            to: from,
            cap: 0.0,
            residual: 0.0,
        });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }

    pub fn flow(&self, edge: usize) -> f64 {
        let e = &self.edges[edge];
        (e.cap - e.residual).max(0.0)
    }

    fn bfs(&mut self, source: usize, sink: usize) -> bool {
        self.level.fill(-1);
        self.level[source] = 0;
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            for &id in &self.adj[u] {
                let e = &self.edges[id];
                if e.residual > self.eps && self.level[e.to] < 0 {
                    self.level[e.to] = self.level[u] + 1;
                    queue.push_back(e.to);
                }
            }
        }
        self.level[sink] >= 0
    }

    fn dfs(&mut self, u: usize, sink: usize, pushed: f64) -> f64 {
        if u == sink {
            return pushed;
        }
        while self.cursor[u] < self.adj[u].len() {
            let id = self.adj[u][self.cursor[u]];
            let (to, residual) = (self.edges[id].to, self.edges[id].residual);
            if residual > self.eps && self.level[to] == self.level[u] + 1 {
                let got = self.dfs(to, sink, pushed.min(residual));
                if got > 0.0 {
                    self.edges[id].residual -= got;
                    self.edges[id ^ 1].residual += got;
                    return got;
                }
            }
            self.cursor[u] += 1;
        }
        0.0
    }

    /// Pushes the maximum flow from `source` to `sink` and returns its value.
    pub fn run(&mut self, source: usize, sink: usize) -> f64 {
        let scale = self.edges.iter().map(|e| e.cap).fold(0.0, f64::max);
        self.eps = RESIDUAL_EPS * scale;
        let mut total = 0.0;
        while self.bfs(source, sink) {
            self.cursor.fill(0);
            loop {
                let got = self.dfs(source, sink, f64::INFINITY);
                if got <= 0.0 {
                    break;
                }
                total += got;
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classic_network() {
        // CLRS figure 26.1, max flow 23
        let mut net = FlowNetwork::new(6);
        for (u, v, c) in [
            (0, 1, 16.0),
            (0, 2, 13.0),
            (1, 3, 12.0),
            (2, 1, 4.0),
            (2, 4, 14.0),
            (3, 2, 9.0),
            (3, 5, 20.0),
            (4, 3, 7.0),
            (4, 5, 4.0),
        ] {
            net.add_edge(u, v, c);
        }
        assert_eq!(net.run(0, 5), 23.0);
    }

    #[test]
    fn disconnected_sink() {
        let mut net = FlowNetwork::new(3);
        net.add_edge(0, 1, 5.0);
        assert_eq!(net.run(0, 2), 0.0);
    }
}
