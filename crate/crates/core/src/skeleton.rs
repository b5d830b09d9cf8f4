//! From a combined affinity matrix to a rooted parent-child tree.
//!
//! The stages run in order: [`binarize_affinity`], [`all_pairs_hops`],
//! [`select_root`], [`ensure_connected`], [`refine_graph`] and
//! [`assign_parents`]. [`extract_skeleton`] chains them and attaches
//! canonical bone offsets. Every argmin/argmax breaks ties toward the lowest
//! index.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::affinity::Matrix;
use crate::keypoints::KeypointTracks;
use crate::{Error, Result, Vec3};

/// Hop distance standing in for "no path".
pub const UNREACHABLE: f64 = 1e4;

/// Smallest affinity used when turning affinities into edge lengths.
const MIN_AFFINITY: f64 = 1e-12;

/// Relative tolerance under which two weighted distances share a rank.
const RANK_TOLERANCE: f64 = 1e-9;

/// Symmetric boolean adjacency with an empty diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyBinary {
    k: usize,
    edges: Vec<bool>,
}

impl AdjacencyBinary {
    pub fn empty(k: usize) -> Self {
        Self {
            k,
            edges: vec![false; k * k],
        }
    }

    pub fn from_edges(k: usize, edges: &[(usize, usize)]) -> Self {
        let mut adj = Self::empty(k);
        for &(i, j) in edges {
            adj.connect(i, j);
        }
        adj
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges[i * self.k + j]
    }

    pub fn connect(&mut self, i: usize, j: usize) {
        if i != j {
            self.edges[i * self.k + j] = true;
            self.edges[j * self.k + i] = true;
        }
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.k).filter(move |&j| self.has_edge(i, j))
    }

    /// Undirected edges `(i, j)` with `i < j`.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.k {
            for j in (i + 1)..self.k {
                if self.has_edge(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Nodes reachable from `start`, in BFS order.
    pub fn component_of(&self, start: usize) -> Vec<usize> {
        let mut seen = vec![false; self.k];
        let mut order = vec![start];
        seen[start] = true;
        let mut head = 0;
        while head < order.len() {
            let u = order[head];
            head += 1;
            for v in self.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    order.push(v);
                }
            }
        }
        order
    }

    pub fn is_connected(&self) -> bool {
        self.k == 0 || self.component_of(0).len() == self.k
    }
}

/// Square matrix of path lengths; [`UNREACHABLE`] where no path exists.
#[derive(Debug, Clone, PartialEq)]
pub struct HopDistances {
    k: usize,
    d: Vec<f64>,
}

impl HopDistances {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.k + j]
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.d[i * self.k..(i + 1) * self.k].iter().sum()
    }
}

/// Keeps the `n` largest off-diagonal entries of each row (ties to the lower
/// column), then symmetrizes with a logical OR.
pub fn binarize_affinity(a: &Matrix, n: usize) -> Result<AdjacencyBinary> {
    let k = a.size();
    if k < 2 || n == 0 || n >= k {
        return Err(Error::InvalidParameter(format!(
            "binarize needs K ≥ 2 and 1 ≤ N < K (K={k}, N={n})"
        )));
    }
    let mut adj = AdjacencyBinary::empty(k);
    for i in 0..k {
        let mut cols: Vec<usize> = (0..k).filter(|&j| j != i).collect();
        // Stable sort keeps lower columns first among equal values.
        cols.sort_by(|&x, &y| a.get(i, y).partial_cmp(&a.get(i, x)).unwrap_or(Ordering::Equal));
        for &j in cols.iter().take(n) {
            adj.connect(i, j);
        }
    }
    Ok(adj)
}

/// Unweighted shortest-path hop counts between all pairs.
pub fn all_pairs_hops(adj: &AdjacencyBinary) -> HopDistances {
    let k = adj.k();
    let mut d = vec![UNREACHABLE; k * k];
    for s in 0..k {
        d[s * k + s] = 0.0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            let du = d[s * k + u];
            for v in adj.neighbors(u) {
                if d[s * k + v] == UNREACHABLE {
                    d[s * k + v] = du + 1.0;
                    queue.push_back(v);
                }
            }
        }
    }
    HopDistances { k, d }
}

/// Node with the smallest row sum of distances.
pub fn select_root(dists: &HopDistances) -> usize {
    let mut best = 0;
    for i in 1..dists.k() {
        if dists.row_sum(i) < dists.row_sum(best) {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct Connected {
    pub adjacency: AdjacencyBinary,
    pub hops: HopDistances,
    pub root: usize,
    pub added_edges: Vec<(usize, usize)>,
}

/// Links components to the root's component until the graph is connected.
///
/// Each pass picks the node outside the root's component with the smallest
/// distance sum, connects it to the root, then recomputes distances and the
/// root.
pub fn ensure_connected(adj: AdjacencyBinary, hops: HopDistances, root: usize) -> Connected {
    let mut adjacency = adj;
    let mut hops = hops;
    let mut root = root;
    let mut added_edges = Vec::new();
    loop {
        let mut in_root = vec![false; adjacency.k()];
        for v in adjacency.component_of(root) {
            in_root[v] = true;
        }
        let Some(other) = (0..adjacency.k())
            .filter(|&i| !in_root[i])
            .min_by(|&x, &y| {
                hops.row_sum(x)
                    .partial_cmp(&hops.row_sum(y))
                    .unwrap_or(Ordering::Equal)
                    .then(x.cmp(&y))
            })
        else {
            break;
        };
        adjacency.connect(root, other);
        added_edges.push((root, other));
        hops = all_pairs_hops(&adjacency);
        root = select_root(&hops);
    }
    Connected {
        adjacency,
        hops,
        root,
        added_edges,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap_or(Ordering::Equal)
            .then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Edge length derived from affinity: `−ln(clamp(a, ε, 1))`.
pub fn affinity_edge_length(a: f64) -> f64 {
    -(a.clamp(MIN_AFFINITY, 1.0)).ln()
}

fn dijkstra(a: &Matrix, adj: &AdjacencyBinary, source: usize) -> Vec<f64> {
    let k = adj.k();
    let mut dist = vec![f64::INFINITY; k];
    dist[source] = 0.0;
    let mut heap = BinaryHeap::from([HeapItem {
        dist: 0.0,
        node: source,
    }]);
    while let Some(HeapItem { dist: du, node: u }) = heap.pop() {
        if du > dist[u] {
            continue;
        }
        for v in adj.neighbors(u) {
            let nd = du + affinity_edge_length(a.get(u, v));
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(HeapItem { dist: nd, node: v });
            }
        }
    }
    dist
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refined {
    /// Weighted shortest-path lengths; entry `(i, j)` follows edges from `i`
    /// toward `j` using `a_uv` for the step `u → v`.
    pub weighted: Vec<Vec<f64>>,
    /// Dense rank by weighted distance from the root; the root alone has
    /// rank 1.
    pub rank: Vec<usize>,
}

/// Re-weights the connected graph by affinity and ranks nodes by their
/// weighted distance from `root`.
pub fn refine_graph(a: &Matrix, adj: &AdjacencyBinary, root: usize) -> Result<Refined> {
    if a.size() != adj.k() {
        return Err(Error::ShapeMismatch("affinity and adjacency differ in size".into()));
    }
    if !adj.is_connected() {
        return Err(Error::Disconnected);
    }
    let k = adj.k();
    let weighted: Vec<Vec<f64>> = (0..k).map(|s| dijkstra(a, adj, s)).collect();
    let from_root = &weighted[root];

    let mut order: Vec<usize> = (0..k).filter(|&i| i != root).collect();
    order.sort_by(|&x, &y| {
        from_root[x]
            .partial_cmp(&from_root[y])
            .unwrap_or(Ordering::Equal)
            .then(x.cmp(&y))
    });
    let mut rank = vec![0usize; k];
    rank[root] = 1;
    let mut current = 1;
    let mut group_start = f64::NEG_INFINITY;
    for &i in &order {
        let d = from_root[i];
        let tol = RANK_TOLERANCE * d.abs().max(group_start.abs()).max(f64::MIN_POSITIVE);
        if current == 1 || (d - group_start).abs() > tol {
            current += 1;
            group_start = d;
        }
        rank[i] = current;
    }
    Ok(Refined { weighted, rank })
}

fn higher_rank_neighbors(i: usize, rank: &[usize], adj: &AdjacencyBinary) -> Vec<usize> {
    adj.neighbors(i).filter(|&j| rank[j] < rank[i]).collect()
}

fn same_rank_neighbors(i: usize, rank: &[usize], adj: &AdjacencyBinary) -> Vec<usize> {
    adj.neighbors(i).filter(|&j| rank[j] == rank[i]).collect()
}

/// First node on a parent cycle, if any.
fn find_cycle(parents: &[usize], root: usize) -> Option<Vec<usize>> {
    let k = parents.len();
    for start in 0..k {
        let mut seen = vec![false; k];
        let mut path = Vec::new();
        let mut v = start;
        while v != root && !seen[v] {
            seen[v] = true;
            path.push(v);
            v = parents[v];
        }
        if v != root {
            let pos = path.iter().position(|&u| u == v).unwrap_or(0);
            return Some(path[pos..].to_vec());
        }
    }
    None
}

/// Chooses each node's parent from its ranked neighbors.
///
/// A node's parent is normally its higher-rank neighbor with the smallest
/// rank gap. When a same-rank neighbor `j` exists and the highest-ranked
/// node `l` shared by both higher-rank sets has `a_lj > a_li`, `j` becomes
/// the parent instead (first such `j` in index order). If same-rank choices
/// close a cycle, the lowest-index node on it reverts to its higher-rank
/// choice.
pub fn assign_parents(
    rank: &[usize],
    adj: &AdjacencyBinary,
    a: &Matrix,
    root: usize,
) -> Result<Vec<usize>> {
    let k = adj.k();
    let mut parents = vec![usize::MAX; k];
    let mut fallback = vec![usize::MAX; k];
    for i in 0..k {
        if i == root {
            parents[i] = root;
            fallback[i] = root;
            continue;
        }
        let higher = higher_rank_neighbors(i, rank, adj);
        let normal = higher
            .iter()
            .copied()
            .min_by_key(|&j| (rank[i] - rank[j], j));
        let mut choice = normal;
        for j in same_rank_neighbors(i, rank, adj) {
            let higher_j = higher_rank_neighbors(j, rank, adj);
            let shared = higher.iter().copied().filter(|l| higher_j.contains(l));
            let Some(l) = shared.max_by_key(|&l| (rank[i] - rank[l], std::cmp::Reverse(l))) else {
                continue;
            };
            if a.get(l, j) > a.get(l, i) {
                choice = Some(j);
                break;
            }
        }
        match (choice, normal) {
            (Some(c), Some(n)) => {
                parents[i] = c;
                fallback[i] = n;
            }
            (Some(c), None) => {
                parents[i] = c;
                fallback[i] = c;
            }
            (None, _) => return Err(Error::RankInversion(i)),
        }
    }
    while let Some(cycle) = find_cycle(&parents, root) {
        let v = *cycle.iter().min().expect("cycle is non-empty");
        if parents[v] == fallback[v] {
            return Err(Error::RankInversion(v));
        }
        parents[v] = fallback[v];
    }
    Ok(parents)
}

/// How canonical unit offsets are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OffsetMode {
    /// Random unit directions drawn from the seed.
    Random,
    /// Directions of the bones observed in the first frame.
    Observed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SkeletonConfig {
    pub n: usize,
    pub offset_mode: OffsetMode,
    pub seed: u64,
}

impl Default for SkeletonConfig {
    fn default() -> Self {
        Self {
            n: 2,
            offset_mode: OffsetMode::Random,
            seed: 0,
        }
    }
}

/// A rooted tree with canonical bone offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonTree {
    root: usize,
    parents: Vec<usize>,
    /// Unit direction of each bone; zero for the root.
    pub unit_offsets: Vec<Vec3>,
    /// Bone vectors from parent to child; zero for the root.
    pub offsets: Vec<Vec3>,
    pub intensities: Vec<f64>,
    order: Vec<usize>,
}

impl SkeletonTree {
    /// Builds a tree after checking that `parents` has exactly one
    /// self-parent and no cycles.
    pub fn new(
        root: usize,
        parents: Vec<usize>,
        unit_offsets: Vec<Vec3>,
        offsets: Vec<Vec3>,
        intensities: Vec<f64>,
    ) -> Result<Self> {
        let k = parents.len();
        if unit_offsets.len() != k || offsets.len() != k || intensities.len() != k {
            return Err(Error::ShapeMismatch(format!(
                "skeleton arrays disagree on K={k}"
            )));
        }
        let order = topological_order(root, &parents)?;
        Ok(Self {
            root,
            parents,
            unit_offsets,
            offsets,
            intensities,
            order,
        })
    }

    /// Tree whose unit offsets are the directions of `offsets`.
    pub fn from_offsets(root: usize, parents: Vec<usize>, offsets: Vec<Vec3>) -> Result<Self> {
        let unit = offsets
            .iter()
            .map(|d| {
                let n = d.norm();
                if n > 0.0 {
                    d / n
                } else {
                    Vec3::zeros()
                }
            })
            .collect();
        let k = parents.len();
        Self::new(root, parents, unit, offsets, vec![1.0; k])
    }

    pub fn k(&self) -> usize {
        self.parents.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parents(&self) -> &[usize] {
        &self.parents
    }

    pub fn parent(&self, k: usize) -> usize {
        self.parents[k]
    }

    /// Nodes ordered so that every parent precedes its children.
    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    pub fn children(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.k()).filter(move |&c| c != self.root && self.parents[c] == k)
    }

    /// Undirected bone list `(min, max)` sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = (0..self.k())
            .filter(|&c| c != self.root)
            .map(|c| (c.min(self.parents[c]), c.max(self.parents[c])))
            .collect();
        e.sort_unstable();
        e
    }

    pub fn bone_lengths(&self) -> Vec<f64> {
        self.offsets.iter().map(|d| d.norm()).collect()
    }

    /// Number of bones on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.k()];
        for &v in &self.order {
            if v != self.root {
                depth[v] = depth[self.parents[v]] + 1;
            }
        }
        depth.into_iter().max().unwrap_or(0)
    }
}

/// Parent-before-child order; fails unless `parents` is a tree rooted at
/// `root`.
pub fn topological_order(root: usize, parents: &[usize]) -> Result<Vec<usize>> {
    let k = parents.len();
    if root >= k {
        return Err(Error::NotATree(format!("root {root} out of range for K={k}")));
    }
    if parents[root] != root {
        return Err(Error::NotATree(format!("root {root} is not its own parent")));
    }
    if let Some(i) = parents.iter().position(|&p| p >= k) {
        return Err(Error::NotATree(format!("parent of {i} is out of range")));
    }
    if let Some(i) = (0..k).find(|&i| i != root && parents[i] == i) {
        return Err(Error::NotATree(format!("node {i} is a second root")));
    }
    let mut children = vec![Vec::new(); k];
    for i in 0..k {
        if i != root {
            children[parents[i]].push(i);
        }
    }
    let mut order = vec![root];
    let mut head = 0;
    while head < order.len() {
        let u = order[head];
        head += 1;
        order.extend(children[u].iter().copied());
    }
    if order.len() != k {
        return Err(Error::NotATree("parents contain a cycle".into()));
    }
    Ok(order)
}

/// Topology extraction output with the intermediate graph products.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub skeleton: SkeletonTree,
    pub adjacency: AdjacencyBinary,
    pub added_edges: Vec<(usize, usize)>,
    pub rank: Vec<usize>,
}

/// Parents array from a combined affinity matrix.
pub fn affinity_to_parents(a: &Matrix, n: usize) -> Result<(usize, Vec<usize>, Connected, Refined)> {
    let adj = binarize_affinity(a, n)?;
    let hops = all_pairs_hops(&adj);
    let root = select_root(&hops);
    let connected = ensure_connected(adj, hops, root);
    let refined = refine_graph(a, &connected.adjacency, connected.root)?;
    let parents = assign_parents(&refined.rank, &connected.adjacency, a, connected.root)?;
    Ok((connected.root, parents, connected, refined))
}

/// Full skeleton extraction from the combined affinity and keypoint tracks.
pub fn extract_skeleton(
    a: &Matrix,
    tracks: &KeypointTracks,
    config: &SkeletonConfig,
) -> Result<Extraction> {
    let k = a.size();
    if tracks.k() != k {
        return Err(Error::ShapeMismatch(format!(
            "affinity is {k}×{k}, tracks have K={}",
            tracks.k()
        )));
    }
    if tracks.t() == 0 {
        return Err(Error::TooFew {
            what: "frames",
            needed: 1,
            got: 0,
        });
    }
    let (root, parents, connected, refined) = affinity_to_parents(a, config.n)?;

    let first = tracks.frame(0);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut unit = vec![Vec3::zeros(); k];
    let mut offsets = vec![Vec3::zeros(); k];
    for i in 0..k {
        // Draw for every node so the sequence of directions depends only on
        // the seed and K.
        let random: [f64; 3] = UnitSphere.sample(&mut rng);
        if i == root {
            continue;
        }
        let observed = first[i].mu - first[parents[i]].mu;
        let length = observed.norm();
        unit[i] = match config.offset_mode {
            OffsetMode::Random => Vec3::from(random),
            OffsetMode::Observed if length > 0.0 => observed / length,
            OffsetMode::Observed => Vec3::x(),
        };
        offsets[i] = unit[i] * length;
    }
    let intensities = (0..k)
        .map(|i| (0..tracks.t()).map(|t| tracks.intensity(t, i)).sum::<f64>() / tracks.t() as f64)
        .collect();
    let skeleton = SkeletonTree::new(root, parents, unit, offsets, intensities)?;
    Ok(Extraction {
        skeleton,
        adjacency: connected.adjacency,
        added_edges: connected.added_edges,
        rank: refined.rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keypoints::Keypoint;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn binarize_example() {
        let a = m(&[&[0.0, 0.9, 0.1], &[0.9, 0.0, 0.8], &[0.1, 0.8, 0.0]]);
        let adj = binarize_affinity(&a, 1).unwrap();
        assert_eq!(adj.edge_list(), vec![(0, 1), (1, 2)]);
        assert!(binarize_affinity(&a, 3).is_err());
    }

    #[test]
    fn hops_chain_and_isolated() {
        let adj = AdjacencyBinary::from_edges(3, &[(0, 1), (1, 2)]);
        let h = all_pairs_hops(&adj);
        assert_eq!(
            (0..3).map(|j| h.get(0, j)).collect::<Vec<_>>(),
            vec![0.0, 1.0, 2.0]
        );
        assert_eq!(select_root(&h), 1);
        let h = all_pairs_hops(&AdjacencyBinary::empty(2));
        assert_eq!(h.get(0, 1), UNREACHABLE);
        assert_eq!(h.get(1, 1), 0.0);
    }

    #[test]
    fn complete_graph_root_is_zero() {
        let edges: Vec<_> = (0..4).flat_map(|i| ((i + 1)..4).map(move |j| (i, j))).collect();
        let h = all_pairs_hops(&AdjacencyBinary::from_edges(4, &edges));
        assert_eq!(select_root(&h), 0);
    }

    #[test]
    fn connect_two_chains() {
        let adj = AdjacencyBinary::from_edges(4, &[(0, 1), (2, 3)]);
        let hops = all_pairs_hops(&adj);
        let root = select_root(&hops);
        let c = ensure_connected(adj, hops, root);
        assert_eq!(c.added_edges.len(), 1);
        assert!(c.adjacency.is_connected());

        let chain = AdjacencyBinary::from_edges(3, &[(0, 1), (1, 2)]);
        let hops = all_pairs_hops(&chain);
        let c = ensure_connected(chain.clone(), hops, 1);
        assert!(c.added_edges.is_empty());
        assert_eq!(c.adjacency, chain);
    }

    #[test]
    fn refine_uniform_matches_hops() {
        let adj = AdjacencyBinary::from_edges(5, &[(0, 1), (1, 2), (2, 3), (1, 4)]);
        let mut a = Matrix::zeros(5);
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    a.set(i, j, 0.5);
                }
            }
        }
        let r = refine_graph(&a, &adj, 1).unwrap();
        let hops = all_pairs_hops(&adj);
        for i in 0..5 {
            for j in 0..5 {
                if hops.get(1, i) < hops.get(1, j) {
                    assert!(r.rank[i] < r.rank[j]);
                }
            }
        }
        assert_eq!(r.rank[1], 1);
        assert_eq!(r.rank[0], r.rank[2]);
    }

    #[test]
    fn refine_weak_edge_is_longer() {
        let adj = AdjacencyBinary::from_edges(3, &[(0, 1), (1, 2)]);
        let a = m(&[&[0.0, 0.9, 0.0], &[0.9, 0.0, 0.2], &[0.0, 0.2, 0.0]]);
        let r = refine_graph(&a, &adj, 1).unwrap();
        assert!(r.weighted[1][2] > r.weighted[1][0]);
        assert!(r.rank[2] > r.rank[0]);
        assert!(matches!(
            refine_graph(&a, &AdjacencyBinary::empty(3), 0),
            Err(Error::Disconnected)
        ));
    }

    #[test]
    fn parents_chain_and_star() {
        let adj = AdjacencyBinary::from_edges(3, &[(0, 1), (1, 2)]);
        let a = m(&[&[0.0, 0.9, 0.1], &[0.5, 0.0, 0.5], &[0.1, 0.9, 0.0]]);
        let r = refine_graph(&a, &adj, 1).unwrap();
        assert_eq!(assign_parents(&r.rank, &adj, &a, 1).unwrap(), vec![1, 1, 1]);

        let adj = AdjacencyBinary::from_edges(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        let mut a = Matrix::zeros(5);
        for i in 1..5 {
            a.set(0, i, 0.25);
            a.set(i, 0, 1.0);
        }
        let r = refine_graph(&a, &adj, 0).unwrap();
        assert_eq!(assign_parents(&r.rank, &adj, &a, 0).unwrap(), vec![0; 5]);
    }

    /// Hand trace: root 0 links to 1 and 2; 1–2 are linked and share rank 2;
    /// 3 hangs off 2. Row 0 prefers 2 over 1, so for i = 1 the same-rank
    /// neighbor j = 2 has shared higher neighbor l = 0 with a_02 > a_01 and
    /// becomes the parent. For i = 2, a_01 < a_02 so it keeps the root.
    #[test]
    fn same_rank_trace() {
        let adj = AdjacencyBinary::from_edges(4, &[(0, 1), (0, 2), (1, 2), (2, 3)]);
        let a = m(&[
            &[0.0, 0.4, 0.6, 0.0],
            &[0.5, 0.0, 0.5, 0.0],
            &[0.5, 0.3, 0.0, 0.2],
            &[0.0, 0.0, 1.0, 0.0],
        ]);
        let rank = vec![1, 2, 2, 3];
        assert_eq!(assign_parents(&rank, &adj, &a, 0).unwrap(), vec![0, 2, 0, 2]);
    }

    #[test]
    fn topological_order_rejects_cycles() {
        assert!(topological_order(0, &[0, 2, 1]).is_err());
        assert!(topological_order(0, &[0, 1, 0]).is_err());
        assert_eq!(topological_order(1, &[1, 1, 0]).unwrap(), vec![1, 0, 2]);
    }

    fn chain_tracks() -> KeypointTracks {
        KeypointTracks::new(
            (0..4)
                .map(|t| {
                    (0..3)
                        .map(|k| Keypoint::new(Vec3::new(k as f64 * 0.2, 0.05 * t as f64, 0.0), 0.9))
                        .collect()
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn extract_offsets_scale_to_first_frame() {
        let a = m(&[&[0.0, 0.9, 0.1], &[0.5, 0.0, 0.5], &[0.1, 0.9, 0.0]]);
        let tracks = chain_tracks();
        let cfg = SkeletonConfig {
            n: 1,
            offset_mode: OffsetMode::Random,
            seed: 42,
        };
        let e = extract_skeleton(&a, &tracks, &cfg).unwrap();
        let s = &e.skeleton;
        assert_eq!(s.parents(), &[1, 1, 1]);
        for i in [0, 2] {
            assert!((s.offsets[i].norm() - 0.2).abs() < 1e-12);
            assert!((s.unit_offsets[i].norm() - 1.0).abs() < 1e-12);
        }
        let again = extract_skeleton(&a, &tracks, &cfg).unwrap();
        assert_eq!(again.skeleton.unit_offsets, s.unit_offsets);

        let obs = extract_skeleton(
            &a,
            &tracks,
            &SkeletonConfig {
                offset_mode: OffsetMode::Observed,
                ..cfg
            },
        )
        .unwrap();
        assert!((obs.skeleton.offsets[2] - Vec3::new(0.2, 0.0, 0.0)).norm() < 1e-12);
        assert!((obs.skeleton.intensities[0] - 0.9).abs() < 1e-15);
    }
}
