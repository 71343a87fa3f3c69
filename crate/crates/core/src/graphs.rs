//! Finite graphs standing in for infinite transitive graphs.
//!
//! Adjacency is stored in compressed-row form so that every directed edge
//! `(y, x)` has a stable integer id; the event log keys its infection
//! streams by that id.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vertex index. The origin is always vertex 0.
pub type Vertex = usize;

/// Index of a directed edge `(source, target)` in [`Graph::edge`].
pub type EdgeId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphKind {
    /// Periodic box `(Z / side Z)^dim`.
    Torus { dim: usize, side: usize },
    /// Ball of radius `depth` around the root of the `degree`-regular tree.
    TreeBall { degree: usize, depth: usize },
    Cycle { n: usize },
    Complete { n: usize },
    /// Two vertices joined by one edge.
    EdgePair,
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            GraphKind::Torus { dim, side } => write!(f, "torus(d={dim},L={side})"),
            GraphKind::TreeBall { degree, depth } => {
                write!(f, "tree_ball(degree={degree},depth={depth})")
            }
            GraphKind::Cycle { n } => write!(f, "cycle({n})"),
            GraphKind::Complete { n } => write!(f, "complete({n})"),
            GraphKind::EdgePair => write!(f, "edge_pair"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Graph {
    kind: GraphKind,
    offsets: Vec<usize>,
    targets: Vec<Vertex>,
    degree: usize,
    boundary: Vec<Vertex>,
    is_boundary: Vec<bool>,
    distance: Vec<usize>,
    growth_constant: f64,
}

impl Graph {
    pub fn build(kind: GraphKind) -> Result<Self> {
        let (lists, degree, boundary) = match kind {
            GraphKind::Torus { dim, side } => {
                if dim == 0 {
                    return Err(Error::invalid("torus dimension must be at least 1"));
                }
                if side < 3 {
                    return Err(Error::invalid(format!(
                        "torus side L={side} must be at least 3"
                    )));
                }
                (torus_lists(dim, side)?, 2 * dim, Vec::new())
            }
            GraphKind::TreeBall { degree, depth } => {
                if degree < 2 {
                    return Err(Error::invalid(format!(
                        "tree degree {degree} must be at least 2"
                    )));
                }
                let (lists, boundary) = tree_lists(degree, depth)?;
                (lists, degree, boundary)
            }
            GraphKind::Cycle { n } => {
                if n < 3 {
                    return Err(Error::invalid(format!("cycle length {n} must be at least 3")));
                }
                let lists = (0..n).map(|v| vec![(v + 1) % n, (v + n - 1) % n]).collect();
                (lists, 2, Vec::new())
            }
            GraphKind::Complete { n } => {
                if n == 0 {
                    return Err(Error::invalid("complete graph needs at least one vertex"));
                }
                let lists = (0..n)
                    .map(|v| (0..n).filter(|&w| w != v).collect())
                    .collect();
                (lists, n - 1, Vec::new())
            }
            GraphKind::EdgePair => (vec![vec![1], vec![0]], 1, Vec::new()),
        };
        Ok(Self::from_lists(kind, lists, degree, boundary))
    }

    fn from_lists(
        kind: GraphKind,
        lists: Vec<Vec<Vertex>>,
        degree: usize,
        boundary: Vec<Vertex>,
    ) -> Self {
        let n = lists.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::with_capacity(lists.iter().map(Vec::len).sum());
        offsets.push(0);
        for list in &lists {
            targets.extend_from_slice(list);
            offsets.push(targets.len());
        }
        let mut is_boundary = vec![false; n];
        for &v in &boundary {
            is_boundary[v] = true;
        }
        let mut g = Graph {
            kind,
            offsets,
            targets,
            degree,
            boundary,
            is_boundary,
            distance: Vec::new(),
            growth_constant: 0.0,
        };
        g.distance = g.bfs_distances(0);
        g.growth_constant = growth_from_distances(&g.distance);
        g
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn vertex_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Nominal degree `D` (the degree of the infinite graph being approximated).
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn origin(&self) -> Vertex {
        0
    }

    /// Neighbors of `v` in stable construction order.
    ///
    /// Panics if `v` is out of range.
    pub fn neighbors(&self, v: Vertex) -> &[Vertex] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    /// Ids of directed edges leaving `v`; the id of `(v, neighbors(v)[k])` is
    /// `out_edges(v).start + k`.
    pub fn out_edges(&self, v: Vertex) -> std::ops::Range<EdgeId> {
        self.offsets[v]..self.offsets[v + 1]
    }

    pub fn directed_edge_count(&self) -> usize {
        self.targets.len()
    }

    /// `(source, target)` of a directed edge.
    pub fn edge(&self, e: EdgeId) -> (Vertex, Vertex) {
        // partition_point gives the first vertex whose range starts after e
        let source = self.offsets.partition_point(|&o| o <= e) - 1;
        (source, self.targets[e])
    }

    /// Flat `(source, target)` table for all directed edges, indexed by id.
    pub fn edge_table(&self) -> Vec<(Vertex, Vertex)> {
        (0..self.vertex_count())
            .flat_map(|v| self.neighbors(v).iter().map(move |&w| (v, w)))
            .collect()
    }

    pub fn boundary_vertices(&self) -> &[Vertex] {
        &self.boundary
    }

    pub fn is_boundary(&self, v: Vertex) -> bool {
        self.is_boundary[v]
    }

    /// Graph distance from the origin.
    pub fn distance_from_origin(&self, v: Vertex) -> usize {
        self.distance[v]
    }

    /// Largest distance from the origin.
    pub fn radius(&self) -> usize {
        self.distance.iter().copied().max().unwrap_or(0)
    }

    /// `max_n n^{-1} log |sphere_n(origin)|` over the realized radii.
    ///
    /// On tori this is a pre-asymptotic number; treat it as a diagnostic.
    pub fn growth_constant(&self) -> f64 {
        self.growth_constant
    }

    /// Sizes of the spheres around the origin, index = radius.
    pub fn sphere_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.radius() + 1];
        for &d in &self.distance {
            if d != usize::MAX {
                sizes[d] += 1;
            }
        }
        sizes
    }

    pub fn is_regular(&self) -> bool {
        (0..self.vertex_count()).all(|v| self.neighbors(v).len() == self.degree)
    }

    fn bfs_distances(&self, from: Vertex) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.vertex_count()];
        let mut queue = VecDeque::new();
        dist[from] = 0;
        queue.push_back(from);
        while let Some(v) = queue.pop_front() {
            for &w in self.neighbors(v) {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }
}

fn growth_from_distances(dist: &[usize]) -> f64 {
    let radius = dist.iter().copied().filter(|&d| d != usize::MAX).max().unwrap_or(0);
    let mut sizes = vec![0usize; radius + 1];
    for &d in dist {
        if d != usize::MAX {
            sizes[d] += 1;
        }
    }
    sizes
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, &s)| s > 0)
        .map(|(n, &s)| (s as f64).ln() / n as f64)
        .fold(0.0, f64::max)
}

fn torus_lists(dim: usize, side: usize) -> Result<Vec<Vec<Vertex>>> {
    let count = side
        .checked_pow(dim as u32)
        .filter(|&c| c <= 50_000_000)
        .ok_or_else(|| Error::invalid(format!("torus with L={side}, d={dim} is too large")))?;
    let mut lists = Vec::with_capacity(count);
    for v in 0..count {
        let mut list = Vec::with_capacity(2 * dim);
        let mut stride = 1;
        for _ in 0..dim {
            let coord = (v / stride) % side;
            let up = (coord + 1) % side;
            let down = (coord + side - 1) % side;
            list.push(v - coord * stride + up * stride);
            list.push(v - coord * stride + down * stride);
            stride *= side;
        }
        lists.push(list);
    }
    Ok(lists)
}

/// Breadth-first labelling: root 0, then each generation in order.
fn tree_lists(degree: usize, depth: usize) -> Result<(Vec<Vec<Vertex>>, Vec<Vertex>)> {
    let total = tree_ball_size(degree, depth)
        .filter(|&c| c <= 50_000_000)
        .ok_or_else(|| Error::invalid("tree ball is too large"))?;
    let mut lists: Vec<Vec<Vertex>> = vec![Vec::new(); total];
    let mut frontier = vec![0usize];
    let mut next_id = 1;
    for level in 0..depth {
        let mut next = Vec::new();
        for &parent in &frontier {
            let children = if level == 0 { degree } else { degree - 1 };
            for _ in 0..children {
                let child = next_id;
                next_id += 1;
                lists[parent].push(child);
                lists[child].push(parent);
                next.push(child);
            }
        }
        frontier = next;
    }
    debug_assert_eq!(next_id, total);
    let boundary = if depth == 0 { Vec::new() } else { frontier };
    Ok((lists, boundary))
}

/// `1 + D * sum_{k=1}^{depth} (D-1)^{k-1}`, or `None` on overflow.
pub fn tree_ball_size(degree: usize, depth: usize) -> Option<usize> {
    let mut total: usize = 1;
    let mut layer: usize = degree;
    for _ in 0..depth {
        total = total.checked_add(layer)?;
        layer = layer.checked_mul(degree - 1)?;
    }
    Some(total)
}
