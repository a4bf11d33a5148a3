use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyKind {
    Ring,
    Complete,
    Star,
    Custom,
}

impl TopologyKind {
    pub fn name(&self) -> &'static str {
        match self {
            TopologyKind::Ring => "ring",
            TopologyKind::Complete => "complete",
            TopologyKind::Star => "star",
            TopologyKind::Custom => "custom",
        }
    }

    /// Smallest worker count for which the shape is non-degenerate.
    pub fn min_workers(&self) -> usize {
        match self {
            TopologyKind::Ring => 3,
            TopologyKind::Star => 2,
            TopologyKind::Complete | TopologyKind::Custom => 1,
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TopologyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ring" => Ok(TopologyKind::Ring),
            "complete" => Ok(TopologyKind::Complete),
            "star" => Ok(TopologyKind::Star),
            "custom" => Ok(TopologyKind::Custom),
            other => Err(Error::InvalidArgument(format!("unknown topology kind {other:?}"))),
        }
    }
}

/// Undirected connected communication graph over `n` workers.
///
/// Edges are stored once as `(i, j)` with `i < j`. Self-loops are never
/// stored; the weight a worker puts on its own model is decided by the
/// mixing scheme.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TopologyDump", into = "TopologyDump")]
pub struct Topology {
    n: usize,
    kind: TopologyKind,
    edges: BTreeSet<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyDump {
    n: usize,
    kind: TopologyKind,
    edges: Vec<(usize, usize)>,
}

impl TryFrom<TopologyDump> for Topology {
    type Error = Error;

    fn try_from(d: TopologyDump) -> Result<Self> {
        let t = Topology::custom(d.n, d.edges)?;
        if d.kind != TopologyKind::Custom {
            let expected = match d.kind {
                TopologyKind::Ring => d.n,
                TopologyKind::Star => d.n - 1,
                _ => d.n * (d.n - 1) / 2,
            };
            if t.edges.len() != expected {
                return Err(Error::InvalidTopology(format!(
                    "a {} topology on {} workers has {expected} edges, got {}",
                    d.kind,
                    d.n,
                    t.edges.len()
                )));
            }
            let canonical = Topology::build(d.kind, d.n)?;
            if canonical.edges != t.edges {
                return Err(Error::InvalidTopology(format!(
                    "edge list does not match a {} topology on {} workers",
                    d.kind, d.n
                )));
            }
            return Ok(canonical);
        }
        Ok(t)
    }
}

impl From<Topology> for TopologyDump {
    fn from(t: Topology) -> Self {
        TopologyDump {
            n: t.n,
            kind: t.kind,
            edges: t.edges.into_iter().collect(),
        }
    }
}

impl Topology {
    /// Ring connects `i` to `i ± 1 (mod n)`, complete connects every pair and
    /// star connects worker 0 to everyone else.
    pub fn build(kind: TopologyKind, n: usize) -> Result<Self> {
        if n < kind.min_workers() {
            return Err(Error::TopologyTooSmall {
                kind: kind.name(),
                min: kind.min_workers(),
                n,
            });
        }
        let mut edges = BTreeSet::new();
        match kind {
            TopologyKind::Ring => {
                for i in 0..n {
                    edges.insert(ordered(i, (i + 1) % n));
                }
            }
            TopologyKind::Complete => {
                for i in 0..n {
                    for j in i + 1..n {
                        edges.insert((i, j));
                    }
                }
            }
            TopologyKind::Star => {
                for j in 1..n {
                    edges.insert((0, j));
                }
            }
            TopologyKind::Custom => {
                return Err(Error::InvalidArgument(
                    "custom topologies are built from an edge list".into(),
                ))
            }
        }
        Ok(Self { n, kind, edges })
    }

    pub fn custom(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::TopologyTooSmall {
                kind: "custom",
                min: 1,
                n,
            });
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidTopology(format!(
                    "edge ({i}, {j}) references a worker outside 0..{n}"
                )));
            }
            if i == j {
                return Err(Error::InvalidTopology(format!("self-loop on worker {i}")));
            }
            set.insert(ordered(i, j));
        }
        let t = Self {
            n,
            kind: TopologyKind::Custom,
            edges: set,
        };
        // fewer than n - 1 edges cannot connect n workers; checked first so
        // a huge n with a short edge list is rejected without allocating
        if t.edges.len() + 1 < n || !t.is_connected() {
            return Err(Error::InvalidTopology("graph is not connected".into()));
        }
        Ok(t)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.edges.contains(&ordered(i, j))
    }

    /// Neighbors of `i` in increasing index order.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.has_edge(i, j)).collect()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == i || b == i).count()
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        let mut adj = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    reached += 1;
                    queue.push_back(v);
                }
            }
        }
        reached == self.n
    }
}

fn ordered(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}
