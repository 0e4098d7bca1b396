//! Spatial domains signals live on.
//!
//! Two concrete domains are provided:
//!
//! * [`GridDomain`] — a regular 1-D or 2-D grid with spacing `h`, used by the
//!   finite-difference operators. Nodes are stored row-major and coordinates
//!   are cell-centred: node `(ix, iy)` sits at `((ix + 1/2) h, (iy + 1/2) h)`.
//! * [`WeightedGraph`] — an undirected weighted graph, used by the graph
//!   functionals. Each edge is stored exactly once with `i < j`.
//!
//! Every domain instance carries a unique [`DomainId`]; signals remember the
//! id of the domain they were created on, and operations refuse to mix
//! signals from unrelated domains. A graph built *from* a grid (see
//! [`WeightedGraph::from_grid`]) shares the grid's id on purpose: the two
//! views describe the same node set, and signals must flow freely between
//! stencil code and graph-functional code.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

static NEXT_DOMAIN_ID: AtomicU64 = AtomicU64::new(1);

/// Identity token for a domain instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DomainId(u64);

impl DomainId {
    fn fresh() -> Self {
        DomainId(NEXT_DOMAIN_ID.fetch_add(1, Ordering::Relaxed))
    }
}

/// Anything a [`crate::signal::Signal`] can be attached to.
pub trait Domain {
    /// Number of nodes.
    fn node_count(&self) -> usize;
    /// Identity token shared with signals built on this domain.
    fn domain_id(&self) -> DomainId;
}

/// Regular grid with uniform spacing, 1-D (`height == 1`) or 2-D.
#[derive(Debug, Clone)]
pub struct GridDomain {
    width: usize,
    height: usize,
    spacing: f64,
    id: DomainId,
}

impl GridDomain {
    /// A 2-D grid of `width x height` nodes with spacing `h > 0`.
    pub fn new(width: usize, height: usize, spacing: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(
                "grid dimensions must be positive".into(),
            ));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "grid spacing must be positive and finite, got {spacing}"
            )));
        }
        Ok(GridDomain {
            width,
            height,
            spacing,
            id: DomainId::fresh(),
        })
    }

    /// A 1-D grid of `n` nodes.
    pub fn line(n: usize, spacing: f64) -> Result<Self> {
        GridDomain::new(n, 1, spacing)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// True for `n x 1` (or `1 x n`) grids.
    pub fn is_line(&self) -> bool {
        self.width == 1 || self.height == 1
    }

    /// Row-major node index of `(ix, iy)`.
    pub fn node(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(ix < self.width && iy < self.height);
        iy * self.width + ix
    }

    /// Cell-centred coordinates of node `i`.
    pub fn coords(&self, i: usize) -> (f64, f64) {
        let ix = i % self.width;
        let iy = i / self.width;
        (
            (ix as f64 + 0.5) * self.spacing,
            (iy as f64 + 0.5) * self.spacing,
        )
    }

    /// Physical extent `(width * h, height * h)`.
    pub fn extent(&self) -> (f64, f64) {
        (
            self.width as f64 * self.spacing,
            self.height as f64 * self.spacing,
        )
    }
}

impl Domain for GridDomain {
    fn node_count(&self) -> usize {
        self.width * self.height
    }

    fn domain_id(&self) -> DomainId {
        self.id
    }
}

/// One undirected edge, stored with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Undirected weighted graph with each edge stored exactly once.
///
/// The constructor normalises edge orientation to `i < j` and rejects
/// self-loops, duplicate edges and negative or non-finite weights.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    node_count: usize,
    edges: Vec<Edge>,
    // CSR adjacency: for node v, neighbors are adj[adj_off[v]..adj_off[v+1]],
    // each entry (neighbor node, index into `edges`).
    adj_off: Vec<usize>,
    adj: Vec<(usize, usize)>,
    id: DomainId,
}

impl WeightedGraph {
    /// Build from raw node count and `(i, j, weight)` triples.
    pub fn new(node_count: usize, raw_edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        Self::with_id(node_count, raw_edges, DomainId::fresh())
    }

    fn with_id(
        node_count: usize,
        raw_edges: Vec<(usize, usize, f64)>,
        id: DomainId,
    ) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidParameter("graph needs at least one node".into()));
        }
        let mut edges = Vec::with_capacity(raw_edges.len());
        for (a, b, w) in raw_edges {
            if a == b {
                return Err(Error::InvalidParameter(format!("self-loop at node {a}")));
            }
            if a >= node_count || b >= node_count {
                return Err(Error::InvalidParameter(format!(
                    "edge ({a}, {b}) out of range for {node_count} nodes"
                )));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "edge ({a}, {b}) has invalid weight {w}"
                )));
            }
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            edges.push(Edge { i, j, weight: w });
        }
        edges.sort_by(|e, f| (e.i, e.j).cmp(&(f.i, f.j)));
        for pair in edges.windows(2) {
            if pair[0].i == pair[1].i && pair[0].j == pair[1].j {
                return Err(Error::InvalidParameter(format!(
                    "duplicate edge ({}, {})",
                    pair[0].i, pair[0].j
                )));
            }
        }

        // CSR adjacency over both directions.
        let mut degree = vec![0usize; node_count];
        for e in &edges {
            degree[e.i] += 1;
            degree[e.j] += 1;
        }
        let mut adj_off = Vec::with_capacity(node_count + 1);
        let mut acc = 0usize;
        adj_off.push(0);
        for d in &degree {
            acc += d;
            adj_off.push(acc);
        }
        let mut cursor = adj_off.clone();
        let mut adj = vec![(0usize, 0usize); 2 * edges.len()];
        for (idx, e) in edges.iter().enumerate() {
            adj[cursor[e.i]] = (e.j, idx);
            cursor[e.i] += 1;
            adj[cursor[e.j]] = (e.i, idx);
            cursor[e.j] += 1;
        }

        Ok(WeightedGraph {
            node_count,
            edges,
            adj_off,
            adj,
            id,
        })
    }

    /// 4-neighbourhood graph of a grid, all edges sharing one `weight`.
    ///
    /// The result inherits the grid's [`DomainId`], so signals built on the
    /// grid are valid on the graph and vice versa. A `w x h` grid yields
    /// `2wh - w - h` edges.
    pub fn from_grid(grid: &GridDomain, weight: f64) -> Result<Self> {
        let (w, h) = (grid.width(), grid.height());
        let mut raw = Vec::with_capacity(2 * w * h);
        for iy in 0..h {
            for ix in 0..w {
                let n = grid.node(ix, iy);
                if ix + 1 < w {
                    raw.push((n, grid.node(ix + 1, iy), weight));
                }
                if iy + 1 < h {
                    raw.push((n, grid.node(ix, iy + 1), weight));
                }
            }
        }
        Self::with_id(grid.node_count(), raw, grid.domain_id())
    }

    /// Symmetrised k-nearest-neighbour graph with Gaussian weights
    /// `w_ij = exp(-d_ij^2 / (2 sigma^2))`.
    ///
    /// An edge is present when either endpoint ranks the other among its `k`
    /// nearest neighbours. Pass `sigma = None` to use the mean k-NN distance
    /// of the cloud as the kernel width.
    pub fn knn(points: &PointCloud, k: usize, sigma: Option<f64>) -> Result<Self> {
        let n = points.len();
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if n < k + 1 {
            return Err(Error::InvalidParameter(format!(
                "k-NN graph needs at least k + 1 = {} points, got {n}",
                k + 1
            )));
        }
        let sigma = match sigma {
            Some(s) => {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "sigma must be positive and finite, got {s}"
                    )));
                }
                s
            }
            None => {
                let s = mean_knn_distance(points, k)?;
                if s == 0.0 {
                    return Err(Error::DegenerateInput(
                        "all k-NN distances are zero; pass sigma explicitly".into(),
                    ));
                }
                s
            }
        };

        let mut raw: Vec<(usize, usize, f64)> = Vec::with_capacity(n * k);
        let mut seen = std::collections::HashSet::with_capacity(n * k);
        for a in 0..n {
            for (b, d2) in nearest(points, a, k) {
                let key = if a < b { (a, b) } else { (b, a) };
                if seen.insert(key) {
                    let w = (-d2 / (2.0 * sigma * sigma)).exp();
                    raw.push((key.0, key.1, w));
                }
            }
        }
        Self::new(n, raw)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Neighbours of `v` as `(node, edge index)` pairs.
    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adj[self.adj_off[v]..self.adj_off[v + 1]]
    }

    /// Raw CSR adjacency `(offsets, entries)`; entries are
    /// `(neighbor, edge index)` and the group of node `v` occupies
    /// `entries[offsets[v]..offsets[v + 1]]`.
    pub(crate) fn adjacency(&self) -> (&[usize], &[(usize, usize)]) {
        (&self.adj_off, &self.adj)
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj_off[v + 1] - self.adj_off[v]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.node_count).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    /// Largest weighted degree `max_i sum_j w_ij`.
    pub fn max_weighted_degree(&self) -> f64 {
        let mut wdeg = vec![0.0f64; self.node_count];
        for e in &self.edges {
            wdeg[e.i] += e.weight;
            wdeg[e.j] += e.weight;
        }
        wdeg.into_iter().fold(0.0, f64::max)
    }

    /// Sum of all edge weights.
    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).sum()
    }
}

impl Domain for WeightedGraph {
    fn node_count(&self) -> usize {
        self.node_count
    }

    fn domain_id(&self) -> DomainId {
        self.id
    }
}

/// Dense point cloud in `dim`-dimensional space, stored row-major.
#[derive(Debug, Clone)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("point dimension must be positive".into()));
        }
        if coords.is_empty() || coords.len() % dim != 0 {
            return Err(Error::InvalidParameter(format!(
                "coordinate buffer of length {} is not a multiple of dim {dim}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("point cloud coordinates"));
        }
        Ok(PointCloud { dim, coords })
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn squared_distance(&self, a: usize, b: usize) -> f64 {
        self.point(a)
            .iter()
            .zip(self.point(b))
            .map(|(x, y)| (x - y) * (x - y))
            .sum()
    }
}

/// `k` nearest neighbours of `a` (excluding `a`), as `(index, squared distance)`.
fn nearest(points: &PointCloud, a: usize, k: usize) -> Vec<(usize, f64)> {
    let mut d: Vec<(usize, f64)> = (0..points.len())
        .filter(|&b| b != a)
        .map(|b| (b, points.squared_distance(a, b)))
        .collect();
    d.sort_by(|x, y| x.1.partial_cmp(&y.1).unwrap().then(x.0.cmp(&y.0)));
    d.truncate(k);
    d
}

/// Mean distance from each point to its `k` nearest neighbours.
///
/// This is the default kernel width for [`WeightedGraph::knn`].
pub fn mean_knn_distance(points: &PointCloud, k: usize) -> Result<f64> {
    let n = points.len();
    if n < k + 1 {
        return Err(Error::InvalidParameter(format!(
            "mean k-NN distance needs at least k + 1 = {} points, got {n}",
            k + 1
        )));
    }
    let mut acc = 0.0;
    for a in 0..n {
        for (_, d2) in nearest(points, a, k) {
            acc += d2.sqrt();
        }
    }
    Ok(acc / (n * k) as f64)
}

/// Classic interleaved two-moons sample with `n_per_moon` points per arc and
/// isotropic Gaussian jitter of standard deviation `noise_std`.
///
/// Returns the cloud together with `+1 / -1` arc labels. Angles are evenly
/// spaced, so two calls with the same arguments produce identical clouds.
pub fn two_moons(n_per_moon: usize, noise_std: f64, seed: u64) -> Result<(PointCloud, Vec<f64>)> {
    if n_per_moon < 2 {
        return Err(Error::InvalidParameter(
            "two_moons needs at least 2 points per moon".into(),
        ));
    }
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise_std must be non-negative, got {noise_std}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut coords = Vec::with_capacity(4 * n_per_moon);
    let mut labels = Vec::with_capacity(2 * n_per_moon);
    let step = std::f64::consts::PI / (n_per_moon - 1) as f64;
    for m in 0..2 {
        for i in 0..n_per_moon {
            let t = i as f64 * step;
            let (x, y) = if m == 0 {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            };
            coords.push(x + noise_std * normal.sample(&mut rng));
            coords.push(y + noise_std * normal.sample(&mut rng));
            labels.push(if m == 0 { 1.0 } else { -1.0 });
        }
    }
    Ok((PointCloud::new(2, coords)?, labels))
}
