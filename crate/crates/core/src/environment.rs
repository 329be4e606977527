//! Spatial and relational topologies.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvError {
    #[error("id {id} out of range (size {size})")]
    IdOutOfRange { id: usize, size: usize },
    #[error("coordinates ({x}, {y}) out of range for a {width}x{height} lattice")]
    CoordsOutOfRange {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
    #[error("lattice dimensions must be positive, got {width}x{height}")]
    EmptyLattice { width: usize, height: usize },
    #[error("network is static; edges cannot be changed")]
    StaticNetwork,
    #[error("edge list line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("reading edge list: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Neighborhood {
    VonNeumann4,
    Moore8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Clamp,
    Wrap,
}

/// Anything that can answer "who are the neighbours of `id`".
pub trait Topology {
    fn size(&self) -> usize;
    fn neighbors(&self, id: usize) -> Result<Vec<usize>, EnvError>;
}

/// A rectangular grid of cells, numbered row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeEnv {
    pub width: usize,
    pub height: usize,
    pub neighborhood: Neighborhood,
    pub boundary: Boundary,
}

impl LatticeEnv {
    pub fn new(
        width: usize,
        height: usize,
        neighborhood: Neighborhood,
        boundary: Boundary,
    ) -> Result<Self, EnvError> {
        if width == 0 || height == 0 {
            return Err(EnvError::EmptyLattice { width, height });
        }
        Ok(Self {
            width,
            height,
            neighborhood,
            boundary,
        })
    }

    pub fn index(&self, x: usize, y: usize) -> Result<usize, EnvError> {
        if x >= self.width || y >= self.height {
            return Err(EnvError::CoordsOutOfRange {
                x,
                y,
                width: self.width,
                height: self.height,
            });
        }
        Ok(y * self.width + x)
    }

    pub fn coords(&self, id: usize) -> Result<(usize, usize), EnvError> {
        self.check(id)?;
        Ok((id % self.width, id / self.width))
    }

    fn check(&self, id: usize) -> Result<(), EnvError> {
        if id >= self.size() {
            Err(EnvError::IdOutOfRange {
                id,
                size: self.size(),
            })
        } else {
            Ok(())
        }
    }

    fn offsets(&self) -> &'static [(i64, i64)] {
        match self.neighborhood {
            Neighborhood::VonNeumann4 => &[(0, -1), (-1, 0), (1, 0), (0, 1)],
            Neighborhood::Moore8 => &[
                (-1, -1),
                (0, -1),
                (1, -1),
                (-1, 0),
                (1, 0),
                (-1, 1),
                (0, 1),
                (1, 1),
            ],
        }
    }

    /// Neighbour table for every cell, indexed by cell id.
    pub fn neighbor_table(&self) -> Vec<Vec<usize>> {
        (0..self.size())
            .map(|id| self.neighbors(id).expect("id in range"))
            .collect()
    }
}

impl Topology for LatticeEnv {
    fn size(&self) -> usize {
        self.width * self.height
    }

    /// Sorted ascending, without duplicates and never containing `id`.
    fn neighbors(&self, id: usize) -> Result<Vec<usize>, EnvError> {
        self.check(id)?;
        let (x, y) = ((id % self.width) as i64, (id / self.width) as i64);
        let (w, h) = (self.width as i64, self.height as i64);
        let mut out = BTreeSet::new();
        for &(dx, dy) in self.offsets() {
            let (mut nx, mut ny) = (x + dx, y + dy);
            match self.boundary {
                Boundary::Clamp => {
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                }
                Boundary::Wrap => {
                    nx = nx.rem_euclid(w);
                    ny = ny.rem_euclid(h);
                }
            }
            let n = (ny * w + nx) as usize;
            if n != id {
                out.insert(n);
            }
        }
        Ok(out.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutability {
    Static,
    Dynamic,
}

/// A relational environment: agents are nodes, links are edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkEnv {
    n_nodes: usize,
    directed: bool,
    mutability: Mutability,
    adjacency: Vec<BTreeSet<usize>>,
}

impl NetworkEnv {
    pub fn new(
        n_nodes: usize,
        edges: &[(usize, usize)],
        directed: bool,
        mutability: Mutability,
    ) -> Result<Self, EnvError> {
        let mut net = Self {
            n_nodes,
            directed,
            mutability,
            adjacency: vec![BTreeSet::new(); n_nodes],
        };
        for &(u, v) in edges {
            net.link(u, v)?;
        }
        Ok(net)
    }

    /// Parses an edge list: one `u v` pair per line; blank lines and lines
    /// starting with `#` are skipped. Node count is one past the largest id
    /// unless `n_nodes` is given.
    pub fn parse_edge_list(
        text: &str,
        n_nodes: Option<usize>,
        directed: bool,
        mutability: Mutability,
    ) -> Result<Self, EnvError> {
        let mut edges = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| EnvError::Parse {
                line: i + 1,
                message,
            };
            let mut parts = line.split_whitespace();
            let mut node = || -> Result<usize, EnvError> {
                let tok = parts
                    .next()
                    .ok_or_else(|| parse_err("expected two node ids".into()))?;
                tok.parse()
                    .map_err(|_| parse_err(format!("`{tok}` is not a node id")))
            };
            let (u, v) = (node()?, node()?);
            if parts.next().is_some() {
                return Err(parse_err("expected exactly two node ids".into()));
            }
            edges.push((u, v));
        }
        let n = n_nodes.unwrap_or_else(|| {
            edges
                .iter()
                .map(|&(u, v)| u.max(v) + 1)
                .max()
                .unwrap_or(0)
        });
        Self::new(n, &edges, directed, mutability)
    }

    pub fn load_edge_list(
        path: &Path,
        n_nodes: Option<usize>,
        directed: bool,
        mutability: Mutability,
    ) -> Result<Self, EnvError> {
        let text = std::fs::read_to_string(path).map_err(|e| EnvError::Io(e.to_string()))?;
        Self::parse_edge_list(&text, n_nodes, directed, mutability)
    }

    pub fn directed(&self) -> bool {
        self.directed
    }

    pub fn n_edges(&self) -> usize {
        let arcs: usize = self.adjacency.iter().map(BTreeSet::len).sum();
        if self.directed {
            arcs
        } else {
            let loops = (0..self.n_nodes)
                .filter(|&u| self.adjacency[u].contains(&u))
                .count();
            (arcs + loops) / 2
        }
    }

    fn check(&self, id: usize) -> Result<(), EnvError> {
        if id >= self.n_nodes {
            Err(EnvError::IdOutOfRange {
                id,
                size: self.n_nodes,
            })
        } else {
            Ok(())
        }
    }

    fn link(&mut self, u: usize, v: usize) -> Result<(), EnvError> {
        self.check(u)?;
        self.check(v)?;
        self.adjacency[u].insert(v);
        if !self.directed {
            self.adjacency[v].insert(u);
        }
        Ok(())
    }

    pub fn add_edge(&mut self, u: usize, v: usize) -> Result<(), EnvError> {
        if self.mutability == Mutability::Static {
            return Err(EnvError::StaticNetwork);
        }
        self.link(u, v)
    }

    /// Returns whether the edge existed.
    pub fn remove_edge(&mut self, u: usize, v: usize) -> Result<bool, EnvError> {
        if self.mutability == Mutability::Static {
            return Err(EnvError::StaticNetwork);
        }
        self.check(u)?;
        self.check(v)?;
        let existed = self.adjacency[u].remove(&v);
        if !self.directed {
            self.adjacency[v].remove(&u);
        }
        Ok(existed)
    }
}

impl Topology for NetworkEnv {
    fn size(&self) -> usize {
        self.n_nodes
    }

    /// Out-neighbours, sorted ascending.
    fn neighbors(&self, id: usize) -> Result<Vec<usize>, EnvError> {
        self.check(id)?;
        Ok(self.adjacency[id].iter().copied().collect())
    }
}
