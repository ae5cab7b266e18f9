//! Small dense digraph with deterministic topological ordering and
//! per-component cycle extraction.

/// Edge `u -> v` means "u depends on v": v must come first in the order.
#[derive(Debug, Clone)]
pub(crate) struct DepGraph {
    deps: Vec<Vec<usize>>,
}

impl DepGraph {
    pub fn new(n: usize) -> Self {
        DepGraph {
            deps: vec![Vec::new(); n],
        }
    }

    pub fn add_edge(&mut self, from: usize, to: usize) {
        if !self.deps[from].contains(&to) {
            self.deps[from].push(to);
        }
    }

    #[cfg(test)]
    pub fn deps(&self, node: usize) -> &[usize] {
        &self.deps[node]
    }

    /// Dependencies-first order over `nodes` (roots visited in the given
    /// order, dependencies in insertion order). On failure returns one
    /// cycle per strongly connected component that contains a cycle.
    pub fn topo_order(&self, nodes: &[usize]) -> Result<Vec<usize>, Vec<Vec<usize>>> {
        let cycles = self.cycles();
        if !cycles.is_empty() {
            return Err(cycles);
        }
        let mut done = vec![false; self.deps.len()];
        let mut order = Vec::with_capacity(nodes.len());
        for &root in nodes {
            self.post_order(root, &mut done, &mut order);
        }
        Ok(order)
    }

    fn post_order(&self, node: usize, done: &mut [bool], order: &mut Vec<usize>) {
        if done[node] {
            return;
        }
        done[node] = true;
        for &d in &self.deps[node] {
            self.post_order(d, done, order);
        }
        order.push(node);
    }

    /// Tarjan SCC; for each cyclic component, a simple cycle starting at its
    /// lowest-numbered member.
    pub fn cycles(&self) -> Vec<Vec<usize>> {
        let n = self.deps.len();
        let mut state = Tarjan {
            graph: self,
            index: vec![usize::MAX; n],
            low: vec![0; n],
            on_stack: vec![false; n],
            stack: Vec::new(),
            next: 0,
            components: Vec::new(),
        };
        for v in 0..n {
            if state.index[v] == usize::MAX {
                state.connect(v);
            }
        }
        let mut out: Vec<Vec<usize>> = state
            .components
            .into_iter()
            .filter(|c| c.len() > 1 || self.deps[c[0]].contains(&c[0]))
            .map(|c| self.cycle_within(&c))
            .collect();
        out.sort();
        out
    }

    fn cycle_within(&self, component: &[usize]) -> Vec<usize> {
        let start = *component.iter().min().unwrap();
        let in_comp = |v: usize| component.contains(&v);
        // BFS from start back to start inside the component.
        let mut prev = vec![usize::MAX; self.deps.len()];
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &v in &self.deps[u] {
                if !in_comp(v) {
                    continue;
                }
                if v == start {
                    let mut path = vec![u];
                    let mut cur = u;
                    while cur != start {
                        cur = prev[cur];
                        path.push(cur);
                    }
                    path.reverse();
                    return path;
                }
                if prev[v] == usize::MAX {
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        vec![start]
    }
}

struct Tarjan<'a> {
    graph: &'a DepGraph,
    index: Vec<usize>,
    low: Vec<usize>,
    on_stack: Vec<bool>,
    stack: Vec<usize>,
    next: usize,
    components: Vec<Vec<usize>>,
}

impl Tarjan<'_> {
    fn connect(&mut self, v: usize) {
        self.index[v] = self.next;
        self.low[v] = self.next;
        self.next += 1;
        self.stack.push(v);
        self.on_stack[v] = true;
        for &w in &self.graph.deps[v] {
            if self.index[w] == usize::MAX {
                self.connect(w);
                self.low[v] = self.low[v].min(self.low[w]);
            } else if self.on_stack[w] {
                self.low[v] = self.low[v].min(self.index[w]);
            }
        }
        if self.low[v] == self.index[v] {
            let mut comp = Vec::new();
            loop {
                let w = self.stack.pop().unwrap();
                self.on_stack[w] = false;
                comp.push(w);
                if w == v {
                    break;
                }
            }
            self.components.push(comp);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_dependencies_first() {
        let mut g = DepGraph::new(4);
        g.add_edge(0, 2);
        g.add_edge(2, 1);
        g.add_edge(3, 0);
        assert_eq!(g.topo_order(&[0, 1, 2, 3]).unwrap(), vec![1, 2, 0, 3]);
    }

    #[test]
    fn reports_two_cycle() {
        let mut g = DepGraph::new(3);
        g.add_edge(0, 1);
        g.add_edge(1, 0);
        g.add_edge(2, 2);
        assert_eq!(g.topo_order(&[0, 1, 2]).unwrap_err(), vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn cycle_follows_true_edges() {
        let mut g = DepGraph::new(5);
        for (a, b) in [(0, 1), (1, 2), (2, 3), (3, 0), (1, 4)] {
            g.add_edge(a, b);
        }
        let c = &g.cycles()[0];
        assert_eq!(c, &vec![0, 1, 2, 3]);
        for w in c.windows(2) {
            assert!(g.deps(w[0]).contains(&w[1]));
        }
    }
}
