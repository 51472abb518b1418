use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::SimError;

/// An undirected simple graph whose vertices carry unique positive IDs.
///
/// Vertices are addressed by index `0..n`; the IDs are what protocols see.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    adj: Vec<Vec<usize>>,
    ids: Vec<u64>,
    edge_count: usize,
    connected: bool,
    complete: bool,
}

/// On-disk form: `{"n": 3, "edges": [[0,1],[1,2]], "ids": [5,7,9]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologyFile {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ids: Option<Vec<u64>>,
}

impl Topology {
    /// Builds a graph with IDs 1..=n in index order.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self, SimError> {
        Self::with_ids(n, edges, (1..=n as u64).collect())
    }

    pub fn with_ids(n: usize, edges: &[(usize, usize)], ids: Vec<u64>) -> Result<Self, SimError> {
        if ids.len() != n {
            return Err(SimError::Topology(format!(
                "{} ids for {n} vertices",
                ids.len()
            )));
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if sorted.first() == Some(&0) {
            return Err(SimError::Topology("ids must be positive".into()));
        }
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(SimError::Topology("ids must be unique".into()));
        }
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(SimError::Topology(format!("edge ({u},{v}) out of range")));
            }
            if u == v {
                return Err(SimError::Topology(format!("self-loop at {u}")));
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut edge_count = 0;
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            edge_count += list.len();
        }
        edge_count /= 2;
        let complete = n <= 1 || edge_count == n * (n - 1) / 2;
        let mut t = Topology {
            adj,
            ids,
            edge_count,
            connected: false,
            complete,
        };
        t.connected = t.reachable_from(0) == n;
        Ok(t)
    }

    fn reachable_from(&self, s: usize) -> usize {
        if self.adj.is_empty() {
            return 0;
        }
        let mut seen = vec![false; self.n()];
        let mut queue = VecDeque::from([s]);
        seen[s] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn id(&self, v: usize) -> u64 {
        self.ids[v]
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn max_id(&self) -> u64 {
        self.ids.iter().copied().max().unwrap_or(0)
    }

    pub fn index_of_id(&self, id: u64) -> Option<usize> {
        self.ids.iter().position(|&x| x == id)
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn is_connected(&self) -> bool {
        self.connected
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    /// Edges as (u, v) with u < v, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count);
        for (u, list) in self.adj.iter().enumerate() {
            out.extend(list.iter().filter(|&&v| v > u).map(|&v| (u, v)));
        }
        out
    }

    pub fn to_file(&self) -> TopologyFile {
        TopologyFile {
            n: self.n(),
            edges: self.edges().into_iter().map(|(u, v)| [u, v]).collect(),
            ids: Some(self.ids.clone()),
        }
    }

    pub fn from_file(file: &TopologyFile) -> Result<Self, SimError> {
        let edges: Vec<(usize, usize)> = file.edges.iter().map(|e| (e[0], e[1])).collect();
        match &file.ids {
            Some(ids) => Self::with_ids(file.n, &edges, ids.clone()),
            None => Self::new(file.n, &edges),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("topology serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, SimError> {
        let file: TopologyFile =
            serde_json::from_str(s).map_err(|e| SimError::Topology(e.to_string()))?;
        Self::from_file(&file)
    }

    /// Complete graph on n vertices.
    pub fn clique(n: usize) -> Self {
        let mut edges = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for u in 0..n {
            for v in u + 1..n {
                edges.push((u, v));
            }
        }
        Self::new(n, &edges).expect("clique is valid")
    }

    /// Path 0 - 1 - … - (n−1).
    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|v| (v - 1, v)).collect();
        Self::new(n, &edges).expect("path is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_shapes() {
        let k4 = Topology::clique(4);
        assert_eq!(k4.edge_count(), 6);
        assert!(k4.is_complete() && k4.is_connected());
        let p = Topology::path(5);
        assert_eq!(p.edge_count(), 4);
        assert!(!p.is_complete());
        assert_eq!(p.neighbors(2), &[1, 3]);
    }

    #[test]
    fn validation() {
        assert!(Topology::new(2, &[(0, 0)]).is_err());
        assert!(Topology::new(2, &[(0, 2)]).is_err());
        assert!(Topology::with_ids(2, &[], vec![3, 3]).is_err());
        assert!(Topology::with_ids(2, &[], vec![0, 3]).is_err());
        let t = Topology::new(3, &[(0, 1), (1, 0)]).unwrap();
        assert_eq!(t.edge_count(), 1);
        assert!(!t.is_connected());
    }

    #[test]
    fn json_round_trip() {
        let t = Topology::with_ids(3, &[(0, 1), (1, 2)], vec![9, 4, 6]).unwrap();
        let back = Topology::from_json(&t.to_json()).unwrap();
        assert_eq!(back, t);
        let plain = Topology::from_json(r#"{"n":2,"edges":[[0,1]]}"#).unwrap();
        assert_eq!(plain.ids(), &[1, 2]);
    }
}
