use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopologyError {
    #[error("cannot build a connected graph of {agents} agents with {peers} peers each")]
    InfeasibleTopology { agents: usize, peers: usize },
}

/// Symmetric peer graph over agent indices `0..len`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    adj: Vec<Vec<usize>>,
}

const MAX_ATTEMPTS: usize = 1000;

/// Every agent picks `peers` distinct random neighbours; links are made
/// symmetric, so degrees are at least `peers`. Resampled until connected.
pub fn build_topology(agents: usize, peers: usize, rng: &mut impl Rng) -> Result<Topology, TopologyError> {
    let err = TopologyError::InfeasibleTopology { agents, peers };
    if peers == 0 || peers >= agents {
        return Err(err);
    }
    for _ in 0..MAX_ATTEMPTS {
        let mut adj = vec![Vec::new(); agents];
        for a in 0..agents {
            for pick in sample(rng, agents - 1, peers) {
                let b = if pick >= a { pick + 1 } else { pick };
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        let topo = Topology { adj };
        if topo.is_connected() {
            return Ok(topo);
        }
    }
    Err(err)
}

impl Topology {
    pub fn from_edges(agents: usize, edges: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); agents];
        for &(a, b) in edges {
            if a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Self { adj }
    }

    pub fn complete(agents: usize) -> Self {
        Self { adj: (0..agents).map(|a| (0..agents).filter(|&b| b != a).collect()).collect() }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn peers(&self, agent: usize) -> &[usize] {
        &self.adj[agent]
    }

    pub fn degree(&self, agent: usize) -> usize {
        self.adj[agent].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adj.iter().map(Vec::len).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn is_connected(&self) -> bool {
        if self.adj.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.adj.len()];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(a) = queue.pop_front() {
            for &b in &self.adj[a] {
                if !seen[b] {
                    seen[b] = true;
                    count += 1;
                    queue.push_back(b);
                }
            }
        }
        count == self.adj.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.adj
            .iter()
            .enumerate()
            .all(|(a, list)| list.iter().all(|&b| b != a && self.adj[b].binary_search(&a).is_ok()))
    }
}
