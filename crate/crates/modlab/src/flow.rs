//! Highest-label push-relabel max-flow with deterministic scan order,
//! used by the min-weight cut oracle.

const EPS_SCALE: f64 = 1e-14;

struct Arc {
    to: usize,
    rev: usize,
    cap: f64,
}

pub struct FlowNetwork {
    n: usize,
    arcs: Vec<Vec<Arc>>,
    eps: f64,
}

impl FlowNetwork {
    pub fn new(n: usize) -> Self {
        FlowNetwork {
            n,
            arcs: (0..n).map(|_| Vec::new()).collect(),
            eps: 0.0,
        }
    }

    /// Directed edge with capacity `cap` and a zero-capacity reverse arc.
    pub fn add_edge(&mut self, u: usize, v: usize, cap: f64) {
        debug_assert!(cap >= 0.0);
        let iu = self.arcs[u].len();
        let iv = self.arcs[v].len();
        self.arcs[u].push(Arc { to: v, rev: iv, cap });
        self.arcs[v].push(Arc { to: u, rev: iu, cap: 0.0 });
        self.eps = self.eps.max(cap * EPS_SCALE);
    }

    /// Undirected edge: both arcs carry the full capacity.
    pub fn add_undirected(&mut self, u: usize, v: usize, cap: f64) {
        debug_assert!(cap >= 0.0);
        let iu = self.arcs[u].len();
        let iv = self.arcs[v].len();
        self.arcs[u].push(Arc { to: v, rev: iv, cap });
        self.arcs[v].push(Arc { to: u, rev: iu, cap });
        self.eps = self.eps.max(cap * EPS_SCALE);
    }

    /// Max-flow value from `s` to `t`; afterwards `source_side` gives the
    /// min-cut partition.
    pub fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let n = self.n;
        if self.eps == 0.0 {
            self.eps = 1e-18;
        }
        let eps = self.eps;
        let mut excess = vec![0.0f64; n];
        let mut height = vec![0usize; n];
        height[s] = n;

        let max_h = 2 * n + 1;
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); max_h + 1];
        let mut in_bucket = vec![false; n];
        let mut highest = 0usize;
        let mut count = vec![0usize; max_h + 1];
        for &h in height.iter() {
            count[h] += 1;
        }

        // Saturate source arcs.
        for i in 0..self.arcs[s].len() {
            let cap = self.arcs[s][i].cap;
            if cap > 0.0 {
                let to = self.arcs[s][i].to;
                let rev = self.arcs[s][i].rev;
                self.arcs[s][i].cap = 0.0;
                self.arcs[to][rev].cap += cap;
                excess[to] += cap;
                excess[s] -= cap;
                if to != t && to != s && !in_bucket[to] {
                    buckets[0].push(to);
                    in_bucket[to] = true;
                }
            }
        }

        let mut cur = vec![0usize; n];
        loop {
            // Highest active vertex; deterministic LIFO within a level.
            while highest > 0 && buckets[highest].is_empty() {
                highest -= 1;
            }
            let Some(u) = buckets[highest].pop() else {
                break;
            };
            in_bucket[u] = false;
            if excess[u] <= eps || height[u] >= max_h {
                continue;
            }

            // Discharge u.
            while excess[u] > eps && height[u] < max_h {
                if cur[u] == self.arcs[u].len() {
                    // Relabel to one above the lowest residual neighbor.
                    let old = height[u];
                    let mut min_h = usize::MAX;
                    for a in &self.arcs[u] {
                        if a.cap > eps {
                            min_h = min_h.min(height[a.to]);
                        }
                    }
                    if min_h == usize::MAX {
                        height[u] = max_h;
                        break;
                    }
                    count[old] -= 1;
                    // Gap heuristic: levels above a newly empty one are cut
                    // off from the sink.
                    if count[old] == 0 && old < n {
                        for h in height.iter_mut() {
                            if *h > old && *h < n {
                                count[*h] -= 1;
                                *h = n + 1;
                                count[n + 1] += 1;
                            }
                        }
                        if height[u] > old {
                            // u itself may have been lifted by the gap pass.
                        }
                    }
                    let new_h = (min_h + 1).max(height[u]).min(max_h);
                    height[u] = new_h;
                    count[new_h] += 1;
                    cur[u] = 0;
                    continue;
                }
                let (to, cap) = {
                    let a = &self.arcs[u][cur[u]];
                    (a.to, a.cap)
                };
                if cap > eps && height[u] == height[to] + 1 {
                    let delta = excess[u].min(cap);
                    let rev = self.arcs[u][cur[u]].rev;
                    self.arcs[u][cur[u]].cap -= delta;
                    self.arcs[to][rev].cap += delta;
                    excess[u] -= delta;
                    excess[to] += delta;
                    if to != s && to != t && !in_bucket[to] && excess[to] > eps {
                        buckets[height[to]].push(to);
                        in_bucket[to] = true;
                    }
                } else {
                    cur[u] += 1;
                }
            }
            if excess[u] > eps && height[u] < max_h && !in_bucket[u] {
                buckets[height[u]].push(u);
                in_bucket[u] = true;
            }
            highest = highest.max(height[u].min(max_h));
        }
        excess[t]
    }

    /// Vertices reachable from `s` in the residual graph after `max_flow`.
    pub fn source_side(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        let mut queue = std::collections::VecDeque::new();
        seen[s] = true;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for a in &self.arcs[u] {
                if a.cap > self.eps && !seen[a.to] {
                    seen[a.to] = true;
                    queue.push_back(a.to);
                }
            }
        }
        seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_diamond() {
        let mut net = FlowNetwork::new(4);
        net.add_edge(0, 1, 3.0);
        net.add_edge(0, 2, 2.0);
        net.add_edge(1, 3, 2.0);
        net.add_edge(2, 3, 3.0);
        net.add_edge(1, 2, 1.0);
        let f = net.max_flow(0, 3);
        assert!((f - 5.0).abs() < 1e-12);
        let side = net.source_side(0);
        assert!(side[0] && !side[3]);
    }

    #[test]
    fn bottleneck_path() {
        let mut net = FlowNetwork::new(5);
        net.add_edge(0, 1, 10.0);
        net.add_edge(1, 2, 0.25);
        net.add_edge(2, 3, 10.0);
        net.add_edge(3, 4, 10.0);
        let f = net.max_flow(0, 4);
        assert!((f - 0.25).abs() < 1e-12);
        let side = net.source_side(0);
        assert_eq!(side, vec![true, true, false, false, false]);
    }

    #[test]
    fn undirected_grid_cut() {
        let mut net = FlowNetwork::new(6);
        let s = 4;
        let t = 5;
        let big = 100.0;
        net.add_edge(s, 0, big);
        net.add_edge(s, 1, big);
        net.add_undirected(0, 2, 0.5);
        net.add_undirected(1, 3, 0.5);
        net.add_undirected(0, 1, 0.5);
        net.add_undirected(2, 3, 0.5);
        net.add_edge(2, t, big);
        net.add_edge(3, t, big);
        let f = net.max_flow(s, t);
        assert!((f - 1.0).abs() < 1e-12, "flow {f}");
        let side = net.source_side(s);
        assert!(side[0] && side[1] && !side[2] && !side[3]);
    }

    #[test]
    fn random_networks_match_brute_force() {
        // Compare against min cut by subset enumeration on small graphs.
        let mut state = 12345u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) as f64 / (1u64 << 31) as f64
        };
        for trial in 0..30 {
            let n = 6usize;
            let mut caps = vec![vec![0.0f64; n]; n];
            let mut net = FlowNetwork::new(n);
            for u in 0..n {
                for v in (u + 1)..n {
                    if next() < 0.7 {
                        let c = (next() * 4.0 * 8.0).round() / 8.0;
                        caps[u][v] = c;
                        caps[v][u] = c;
                        net.add_undirected(u, v, c);
                    }
                }
            }
            let flow = net.max_flow(0, n - 1);
            let mut best = f64::INFINITY;
            for mask in 0..(1u32 << (n - 2)) {
                let mut side = vec![false; n];
                side[0] = true;
                for b in 0..(n - 2) {
                    side[b + 1] = mask >> b & 1 == 1;
                }
                let mut cut = 0.0;
                for u in 0..n {
                    for v in 0..n {
                        if side[u] && !side[v] {
                            cut += caps[u][v];
                        }
                    }
                }
                best = best.min(cut);
            }
            assert!((flow - best).abs() < 1e-9, "trial {trial}: {flow} vs {best}");
        }
    }
}
