//! Undirected sBS adjacency.

use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    neighbors: Vec<Vec<usize>>,
}

impl Topology {
    /// Builds from adjacency lists. Lists are sorted; the graph must be
    /// symmetric and free of self-loops.
    pub fn new(mut neighbors: Vec<Vec<usize>>) -> Result<Self> {
        let n = neighbors.len();
        if n == 0 {
            return Err(Error::validation("topology needs at least one sBS"));
        }
        for (b, list) in neighbors.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            if let Some(&bad) = list.iter().find(|&&x| x >= n) {
                return Err(Error::validation(format!(
                    "sBS {b} lists neighbor {bad} but there are only {n} sBSs"
                )));
            }
            if list.contains(&b) {
                return Err(Error::validation(format!("sBS {b} has a self-loop")));
            }
        }
        for b in 0..n {
            for &nb in &neighbors[b] {
                if neighbors[nb].binary_search(&b).is_err() {
                    return Err(Error::validation(format!(
                        "asymmetric link: {b} -> {nb} without {nb} -> {b}"
                    )));
                }
            }
        }
        Ok(Topology { neighbors })
    }

    pub fn from_edges(n_sbs: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut lists = vec![Vec::new(); n_sbs];
        for &(a, b) in edges {
            if a >= n_sbs || b >= n_sbs {
                return Err(Error::validation(format!(
                    "edge {a}-{b} out of range for {n_sbs} sBSs"
                )));
            }
            lists[a].push(b);
            lists[b].push(a);
        }
        Topology::new(lists)
    }

    /// Five sBSs linked 1-2-3, 3-4-5 and 5-1 (zero-based here).
    pub fn five_ring() -> Self {
        Topology::ring(5)
    }

    pub fn ring(n: usize) -> Self {
        let edges: Vec<_> = match n {
            0 | 1 => vec![],
            2 => vec![(0, 1)],
            _ => (0..n).map(|b| (b, (b + 1) % n)).collect(),
        };
        Topology::from_edges(n.max(1), &edges).expect("ring is valid")
    }

    pub fn line(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|b| (b - 1, b)).collect();
        Topology::from_edges(n.max(1), &edges).expect("line is valid")
    }

    pub fn complete(n: usize) -> Self {
        let lists = (0..n.max(1))
            .map(|b| (0..n).filter(|&x| x != b).collect())
            .collect();
        Topology::new(lists).expect("complete graph is valid")
    }

    pub fn isolated(n: usize) -> Self {
        Topology::new(vec![Vec::new(); n.max(1)]).expect("isolated graph is valid")
    }

    pub fn n_sbs(&self) -> usize {
        self.neighbors.len()
    }

    /// Neighbors of `b` in ascending index order.
    pub fn neighbors(&self, b: usize) -> &[usize] {
        &self.neighbors[b]
    }

    /// Position of `other` in `b`'s neighbor list.
    pub fn neighbor_slot(&self, b: usize, other: usize) -> Option<usize> {
        self.neighbors[b].binary_search(&other).ok()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (b, list) in self.neighbors.iter().enumerate() {
            out.extend(list.iter().filter(|&&x| x > b).map(|&x| (b, x)));
        }
        out
    }
}

/// Accepted forms: `five-ring`, `ring:N`, `line:N`, `complete:N`, `isolated:N`,
/// or `edges:N:a-b,c-d,...`.
impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "five-ring" {
            return Ok(Topology::five_ring());
        }
        let mut parts = s.splitn(3, ':');
        let kind = parts.next().unwrap_or_default();
        let n: usize = parts
            .next()
            .and_then(|x| x.trim().parse().ok())
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::validation(format!("bad topology spec '{s}'")))?;
        match kind {
            "ring" => Ok(Topology::ring(n)),
            "line" => Ok(Topology::line(n)),
            "complete" => Ok(Topology::complete(n)),
            "isolated" => Ok(Topology::isolated(n)),
            "edges" => {
                let mut edges = Vec::new();
                for e in parts.next().unwrap_or_default().split(',') {
                    let e = e.trim();
                    if e.is_empty() {
                        continue;
                    }
                    let (a, b) = e
                        .split_once('-')
                        .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)))
                        .ok_or_else(|| Error::validation(format!("bad edge '{e}'")))?;
                    edges.push((a, b));
                }
                Topology::from_edges(n, &edges)
            }
            _ => Err(Error::validation(format!("unknown topology kind '{kind}'"))),
        }
    }
}
