//! Finite rooted trees, their shells and radii, and the augmentations that
//! glue detector chains onto terminal vertices.

use std::collections::VecDeque;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub usize);

impl VertexId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<usize> for VertexId {
    fn from(v: usize) -> Self {
        VertexId(v)
    }
}

/// A finite tree with a distinguished root.
///
/// Parents point towards the root, children are kept in ascending id order
/// and `norm(v)` is the graph distance from `v` to the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootedTree {
    root: VertexId,
    parent: Vec<Option<VertexId>>,
    children: Vec<Vec<VertexId>>,
    norm: Vec<usize>,
    labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Radii {
    pub inner: usize,
    pub outer: usize,
    pub spherical: bool,
}

/// Builds a tree from an undirected edge list over ids `0..n`, where `n` is
/// one past the largest id mentioned.
pub fn build_tree(edges: &[(usize, usize)], root: usize) -> Result<RootedTree> {
    let n = edges.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(1);
    RootedTree::from_edges(n, edges, root)
}

impl RootedTree {
    /// Orients `edges` away from `root`. Rejects cycles, duplicate edges,
    /// self loops and disconnected vertex sets.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], root: usize) -> Result<Self> {
        if root >= n {
            return Err(Error::UnknownVertex(root));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in edges {
            for x in [a, b] {
                if x >= n {
                    return Err(Error::UnknownVertex(x));
                }
            }
            if a == b {
                return Err(Error::NotATree(format!("self loop at {a}")));
            }
            if adjacency[a].contains(&b) {
                return Err(Error::NotATree(format!("duplicate edge {a}-{b}")));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        if edges.len() + 1 != n {
            return Err(Error::NotATree(format!(
                "{} edges cannot span {} vertices without a cycle or a gap",
                edges.len(),
                n
            )));
        }

        let mut parent = vec![None; n];
        let mut norm = vec![usize::MAX; n];
        norm[root] = 0;
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &v in &adjacency[u] {
                if norm[v] == usize::MAX {
                    norm[v] = norm[u] + 1;
                    parent[v] = Some(VertexId(u));
                    queue.push_back(v);
                } else if parent[u] != Some(VertexId(v)) {
                    return Err(Error::NotATree(format!("cycle through edge {u}-{v}")));
                }
            }
        }
        if let Some(v) = norm.iter().position(|&d| d == usize::MAX) {
            return Err(Error::NotATree(format!("vertex {v} is not connected to the root")));
        }
        Ok(Self::from_parents(VertexId(root), parent))
    }

    /// Builds from a parent array already known to describe a tree rooted
    /// at `root`.
    fn from_parents(root: VertexId, parent: Vec<Option<VertexId>>) -> Self {
        let n = parent.len();
        let mut children = vec![Vec::new(); n];
        for (v, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                children[p.0].push(VertexId(v));
            }
        }
        // ids are visited in ascending order, so children are already sorted
        let mut norm = vec![0; n];
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &c in &children[u.0] {
                norm[c.0] = norm[u.0] + 1;
                queue.push_back(c);
            }
        }
        RootedTree { root, parent, children, norm, labels: None }
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        assert_eq!(labels.len(), self.vertex_count());
        self.labels = Some(labels);
        self
    }

    pub fn vertex_count(&self) -> usize {
        self.parent.len()
    }

    pub fn root(&self) -> VertexId {
        self.root
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.vertex_count()).map(VertexId)
    }

    pub fn contains(&self, v: VertexId) -> bool {
        v.0 < self.vertex_count()
    }

    pub fn parent(&self, v: VertexId) -> Option<VertexId> {
        self.parent[v.0]
    }

    pub fn children(&self, v: VertexId) -> &[VertexId] {
        &self.children[v.0]
    }

    pub fn norm(&self, v: VertexId) -> usize {
        self.norm[v.0]
    }

    pub fn label(&self, v: VertexId) -> Option<&str> {
        self.labels.as_ref().map(|l| l[v.0].as_str())
    }

    /// Neighbors in ascending id order.
    pub fn neighbors(&self, v: VertexId) -> Vec<VertexId> {
        let mut out: Vec<VertexId> = self.parent(v).into_iter().collect();
        out.extend_from_slice(self.children(v));
        out.sort_unstable();
        out
    }

    pub fn degree(&self, v: VertexId) -> usize {
        self.children(v).len() + usize::from(self.parent(v).is_some())
    }

    pub fn is_adjacent(&self, a: VertexId, b: VertexId) -> bool {
        self.parent(a) == Some(b) || self.parent(b) == Some(a)
    }

    /// Degree-one vertices other than the root.
    pub fn is_terminal(&self, v: VertexId) -> bool {
        v != self.root && self.children(v).is_empty()
    }

    pub fn terminals(&self) -> Vec<VertexId> {
        self.vertices().filter(|&v| self.is_terminal(v)).collect()
    }

    /// Undirected edges as (parent, child), ordered by child id.
    pub fn edges(&self) -> Vec<(VertexId, VertexId)> {
        self.vertices().filter_map(|v| self.parent(v).map(|p| (p, v))).collect()
    }

    /// Shells `V_0, V_1, ...`: a partition of the vertices by norm.
    pub fn shells(&self) -> Vec<Vec<VertexId>> {
        let depth = self.norm.iter().copied().max().unwrap_or(0);
        let mut shells = vec![Vec::new(); depth + 1];
        for v in self.vertices() {
            shells[self.norm(v)].push(v);
        }
        shells
    }

    pub fn shell(&self, k: usize) -> Vec<VertexId> {
        self.vertices().filter(|&v| self.norm(v) == k).collect()
    }

    /// Outer radius is the largest norm; inner radius the smallest norm of a
    /// terminal vertex (0 for a single vertex).
    pub fn radii(&self) -> Radii {
        let outer = self.norm.iter().copied().max().unwrap_or(0);
        let inner = self.terminals().iter().map(|&v| self.norm(v)).min().unwrap_or(0);
        Radii { inner, outer, spherical: inner == outer }
    }

    /// Vertices from `v` up to and including the root.
    pub fn path_to_root(&self, v: VertexId) -> Vec<VertexId> {
        let mut path = vec![v];
        let mut cur = v;
        while let Some(p) = self.parent(cur) {
            path.push(p);
            cur = p;
        }
        path
    }

    pub fn is_ancestor_or_self(&self, ancestor: VertexId, v: VertexId) -> bool {
        let mut cur = Some(v);
        while let Some(c) = cur {
            if self.norm(c) < self.norm(ancestor) {
                return false;
            }
            if c == ancestor {
                return true;
            }
            cur = self.parent(c);
        }
        false
    }

    /// Descendants of `v`, including `v`, in breadth-first order.
    pub fn subtree(&self, v: VertexId) -> Vec<VertexId> {
        let mut out = vec![v];
        let mut i = 0;
        while i < out.len() {
            out.extend_from_slice(self.children(out[i]));
            i += 1;
        }
        out
    }

    /// The unique path between two vertices, both endpoints included.
    pub fn path_between(&self, a: VertexId, b: VertexId) -> Vec<VertexId> {
        let up_a = self.path_to_root(a);
        let up_b = self.path_to_root(b);
        let (mut i, mut j) = (up_a.len(), up_b.len());
        while i > 1 && j > 1 && up_a[i - 2] == up_b[j - 2] {
            i -= 1;
            j -= 1;
        }
        // up_a[i - 1] is the lowest common ancestor
        let mut path = up_a[..i].to_vec();
        path.extend(up_b[..j - 1].iter().rev());
        path
    }

    /// Glues a chain of `l` fresh vertices onto the terminal vertex `v`. New
    /// ids are appended in chain order; the root does not change.
    pub fn l_augment_at(&self, v: VertexId, l: usize) -> Result<RootedTree> {
        if l == 0 {
            return Err(Error::InvalidParameter("augmentation length must be >= 1".into()));
        }
        if !self.contains(v) {
            return Err(Error::UnknownVertex(v.0));
        }
        if !self.is_terminal(v) {
            return Err(Error::NotTerminal(v));
        }
        let mut parent = self.parent.clone();
        let mut prev = v;
        for _ in 0..l {
            let id = VertexId(parent.len());
            parent.push(Some(prev));
            prev = id;
        }
        Ok(Self::from_parents(self.root, parent))
    }
}

/// The `(-k, l)` segment: integers `-k..=l` joined consecutively, rooted at 0.
///
/// Id 0 is label 0, ids `1..=l` are labels `1..=l`, and ids `l+1..=l+k` are
/// labels `-1..=-k`.
pub fn segment(k: usize, l: usize) -> Result<RootedTree> {
    if l == 0 {
        return Err(Error::InvalidParameter("segment needs l >= 1".into()));
    }
    let mut edges = Vec::with_capacity(k + l);
    for i in 0..l {
        edges.push((i, i + 1));
    }
    for j in 1..=k {
        let prev = if j == 1 { 0 } else { l + j - 1 };
        edges.push((prev, l + j));
    }
    let labels = (0..=l as i64).chain((1..=k as i64).map(|j| -j)).map(|x| x.to_string()).collect();
    Ok(RootedTree::from_edges(k + l + 1, &edges, 0)?.with_labels(labels))
}

/// The `(l, n)` star: `n` copies of the `l` segment glued at their roots.
///
/// Vertices are numbered shell by shell: arm `j` (1-based) owns ids
/// `j, n + j, 2n + j, ...`.
pub fn star(l: usize, n: usize) -> Result<RootedTree> {
    if l == 0 || n == 0 {
        return Err(Error::InvalidParameter("star needs l >= 1 and n >= 1".into()));
    }
    let mut edges = Vec::with_capacity(l * n);
    for depth in 1..=l {
        for j in 1..=n {
            let id = (depth - 1) * n + j;
            let up = if depth == 1 { 0 } else { id - n };
            edges.push((up, id));
        }
    }
    RootedTree::from_edges(l * n + 1, &edges, 0)
}

/// A reproducible random tree with outer radius exactly `rout` and between
/// `rout + 1` and `max_vertices` vertices.
///
/// A spine `0 - 1 - ... - rout` fixes the radius; every further vertex hangs
/// from a uniformly chosen vertex of norm below `rout`.
pub fn random_tree(rout: usize, max_vertices: usize, seed: u64) -> Result<RootedTree> {
    if rout == 0 || max_vertices <= rout {
        return Err(Error::InvalidParameter(format!(
            "need rout >= 1 and max_vertices > rout, got rout {rout}, max_vertices {max_vertices}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(rout + 1..=max_vertices);
    let mut norm: Vec<usize> = (0..=rout).collect();
    let mut edges: Vec<(usize, usize)> = (0..rout).map(|i| (i, i + 1)).collect();
    let mut hangers: Vec<usize> = (0..rout).collect();
    for v in rout + 1..n {
        let p = hangers[rng.random_range(0..hangers.len())];
        edges.push((p, v));
        norm.push(norm[p] + 1);
        if norm[v] < rout {
            hangers.push(v);
        }
    }
    RootedTree::from_edges(n, &edges, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Original,
    Added,
}

/// A base tree embedded in its `l`-spherical augmentation, with the two
/// detector layers marked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedTree {
    base: RootedTree,
    full: RootedTree,
    origin: Vec<Origin>,
    hull_radius: usize,
    aug_len: usize,
    inner_layer: Vec<VertexId>,
    outer_layer: Vec<VertexId>,
}

/// Extends every terminal vertex `v` by a chain of length
/// `R_out - |v| + l`, so that all terminals of the result sit at
/// `R_out + l`.
///
/// Added vertices are numbered level by level: all first chain vertices in
/// ascending order of their terminal, then all second ones, and so on.
pub fn spherical_augmentation(tree: &RootedTree, l: usize) -> Result<AugmentedTree> {
    if l == 0 {
        return Err(Error::InvalidParameter("augmentation length must be >= 1".into()));
    }
    if tree.vertex_count() < 2 {
        return Err(Error::InvalidParameter("tree must have at least one edge".into()));
    }
    let r = tree.radii().outer;
    let terminals = tree.terminals();
    let lengths: Vec<usize> = terminals.iter().map(|&v| r - tree.norm(v) + l).collect();
    let depth = lengths.iter().copied().max().unwrap_or(0);

    let mut parent = tree.parent.clone();
    let mut tips = terminals.clone();
    for d in 1..=depth {
        for (tip, &len) in tips.iter_mut().zip(&lengths) {
            if len >= d {
                let id = VertexId(parent.len());
                parent.push(Some(*tip));
                *tip = id;
            }
        }
    }
    let full = RootedTree::from_parents(tree.root, parent);
    let mut origin = vec![Origin::Original; tree.vertex_count()];
    origin.resize(full.vertex_count(), Origin::Added);
    Ok(AugmentedTree::assemble(tree.clone(), full, origin, r, l))
}

impl AugmentedTree {
    fn assemble(base: RootedTree, full: RootedTree, origin: Vec<Origin>, r: usize, l: usize) -> Self {
        let outer_layer = full.shell(r + l);
        let inner_layer = full.shell(r + l - 1);
        AugmentedTree { base, full, origin, hull_radius: r, aug_len: l, inner_layer, outer_layer }
    }

    /// Rebuilds an augmented tree from its full tree and origin flags, as
    /// read from a file, and checks that it is exactly the spherical
    /// augmentation of its original part.
    pub fn from_full(full: RootedTree, origin: Vec<Origin>) -> Result<Self> {
        if origin.len() != full.vertex_count() {
            return Err(Error::InvalidParameter("one origin flag per vertex required".into()));
        }
        let n_base = origin.iter().take_while(|&&o| o == Origin::Original).count();
        if origin[n_base..].contains(&Origin::Original) {
            return Err(Error::InvalidParameter("original vertices must carry the lowest ids".into()));
        }
        let mut base_parent = Vec::with_capacity(n_base);
        for v in 0..n_base {
            let p = full.parent(VertexId(v));
            if matches!(p, Some(p) if p.0 >= n_base) {
                return Err(Error::InvalidParameter(format!("original vertex {v} hangs below an added vertex")));
            }
            base_parent.push(p);
        }
        if full.root().0 >= n_base {
            return Err(Error::InvalidParameter("root must be an original vertex".into()));
        }
        let base = RootedTree::from_parents(full.root(), base_parent);
        let r = base.radii().outer;
        let total = full.radii().outer;
        if total <= r {
            return Err(Error::InvalidParameter("no augmentation chain present".into()));
        }
        let expected = spherical_augmentation(&base, total - r)?;
        if expected.full.parent != full.parent {
            return Err(Error::InvalidParameter(
                "tree is not the spherical augmentation of its original vertices".into(),
            ));
        }
        Ok(AugmentedTree { full, ..expected })
    }

    pub fn base(&self) -> &RootedTree {
        &self.base
    }

    pub fn full(&self) -> &RootedTree {
        &self.full
    }

    pub fn origin(&self, v: VertexId) -> Origin {
        self.origin[v.0]
    }

    /// `R = R_out` of the base tree.
    pub fn hull_radius(&self) -> usize {
        self.hull_radius
    }

    pub fn aug_len(&self) -> usize {
        self.aug_len
    }

    pub fn inner_layer(&self) -> &[VertexId] {
        &self.inner_layer
    }

    pub fn outer_layer(&self) -> &[VertexId] {
        &self.outer_layer
    }

    pub fn in_lambda(&self, v: VertexId) -> bool {
        self.origin[v.0] == Origin::Original
    }

    /// Non-terminal vertex of the base tree (a degree-one root counts as
    /// internal).
    pub fn is_internal_lambda(&self, v: VertexId) -> bool {
        self.in_lambda(v) && !self.base.is_terminal(v)
    }

    pub fn is_outer(&self, v: VertexId) -> bool {
        self.full.norm(v) == self.hull_radius + self.aug_len
    }

    pub fn is_inner(&self, v: VertexId) -> bool {
        self.full.norm(v) + 1 == self.hull_radius + self.aug_len
    }

    pub fn vertex_count(&self) -> usize {
        self.full.vertex_count()
    }

    pub fn root(&self) -> VertexId {
        self.full.root()
    }
}
