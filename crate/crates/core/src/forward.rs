//! Exact first-hitting distributions of the killed walk and probabilities of
//! constrained path classes.
//!
//! Everything here is forward dynamic programming over sub-probability
//! vectors: mass is pushed along kernel rows one step at a time and harvested
//! when it steps onto the target set. All sums are of nonnegative terms.

use crate::error::{Error, Result};
use crate::kernel::{convert_scalar, validate_kernel, TransitionKernel};
use crate::scalar::Scalar;
use crate::tree::{AugmentedTree, VertexId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Layer {
    Inner,
    Outer,
}

impl Layer {
    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Inner => "inner",
            Layer::Outer => "outer",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "inner" | "in" => Some(Layer::Inner),
            "outer" | "out" => Some(Layer::Outer),
            _ => None,
        }
    }
}

/// Joint law of first hitting time and place of one boundary layer, for
/// times `0..=t_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct HittingDistribution<S> {
    layer: Layer,
    start: VertexId,
    vertices: Vec<VertexId>,
    /// `mass[t][i]` is the probability of first hitting at time `t` at `vertices[i]`.
    mass: Vec<Vec<S>>,
}

impl<S: Scalar> HittingDistribution<S> {
    pub fn zeros(layer: Layer, start: VertexId, vertices: Vec<VertexId>, t_max: usize) -> Self {
        let width = vertices.len();
        HittingDistribution { layer, start, vertices, mass: vec![vec![S::zero(); width]; t_max + 1] }
    }

    pub fn layer(&self) -> Layer {
        self.layer
    }

    pub fn start(&self) -> VertexId {
        self.start
    }

    pub fn t_max(&self) -> usize {
        self.mass.len() - 1
    }

    /// Layer vertices, ascending.
    pub fn vertices(&self) -> &[VertexId] {
        &self.vertices
    }

    fn slot(&self, v: VertexId) -> Option<usize> {
        self.vertices.binary_search(&v).ok()
    }

    /// Mass at `(t, v)`; zero outside the layer or beyond `t_max`.
    pub fn get(&self, t: usize, v: VertexId) -> S {
        match (self.mass.get(t), self.slot(v)) {
            (Some(row), Some(i)) => row[i].clone(),
            _ => S::zero(),
        }
    }

    /// Sets `(t, v)`. Panics if `v` is not a layer vertex or `t > t_max`.
    pub fn set(&mut self, t: usize, v: VertexId, value: S) {
        let i = self.slot(v).expect("vertex of the layer");
        self.mass[t][i] = value;
    }

    pub(crate) fn add(&mut self, t: usize, v: VertexId, value: S) {
        let i = self.slot(v).expect("vertex of the layer");
        let cell = &mut self.mass[t][i];
        *cell = cell.clone() + value;
    }

    /// Total mass at times `<= t`.
    pub fn total_up_to(&self, t: usize) -> S {
        let mut acc = S::zero();
        for row in self.mass.iter().take(t + 1) {
            for m in row {
                acc = acc + m.clone();
            }
        }
        acc
    }

    pub fn total(&self) -> S {
        self.total_up_to(self.t_max())
    }

    /// All cells `(t, v, mass)` in time-then-vertex order, zeros included.
    pub fn cells(&self) -> impl Iterator<Item = (usize, VertexId, &S)> + '_ {
        self.mass
            .iter()
            .enumerate()
            .flat_map(move |(t, row)| row.iter().zip(&self.vertices).map(move |(m, v)| (t, *v, m)))
    }

    /// Copy restricted to times `<= t_max`.
    pub fn truncated(&self, t_max: usize) -> Self {
        let mut out = self.clone();
        out.mass.truncate(t_max + 1);
        out
    }

    /// Applies `f` to every cell.
    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> HittingDistribution<T> {
        HittingDistribution {
            layer: self.layer,
            start: self.start,
            vertices: self.vertices.clone(),
            mass: self.mass.iter().map(|r| r.iter().map(&f).collect()).collect(),
        }
    }

    pub fn convert<T: Scalar>(&self) -> HittingDistribution<T> {
        HittingDistribution {
            layer: self.layer,
            start: self.start,
            vertices: self.vertices.clone(),
            mass: self.mass.iter().map(|r| r.iter().map(convert_scalar::<S, T>).collect()).collect(),
        }
    }
}

fn layer_vertices(aug: &AugmentedTree, layer: Layer) -> Vec<VertexId> {
    match layer {
        Layer::Inner => aug.inner_layer().to_vec(),
        Layer::Outer => aug.outer_layer().to_vec(),
    }
}

/// Joint distribution of the first hitting time and place of `layer` for
/// the walk started at the root and killed on the outer layer.
pub fn first_hitting_joint<S: Scalar>(
    aug: &AugmentedTree,
    kernel: &TransitionKernel<S>,
    layer: Layer,
    t_max: usize,
) -> Result<HittingDistribution<S>> {
    let diagnostics = validate_kernel(aug, kernel);
    if !diagnostics.is_empty() {
        return Err(Error::InvalidKernel(diagnostics));
    }
    let tree = aug.full();
    let n = tree.vertex_count();
    let mut is_target = vec![false; n];
    let targets = layer_vertices(aug, layer);
    for v in &targets {
        is_target[v.0] = true;
    }
    let root = tree.root();
    let mut dist = HittingDistribution::zeros(layer, root, targets, t_max);

    let mut current = vec![S::zero(); n];
    current[root.0] = S::one();
    for t in 1..=t_max {
        let mut next = vec![S::zero(); n];
        for z in tree.vertices() {
            let here = &current[z.0];
            if here.is_zero() {
                continue;
            }
            for (y, p) in kernel.row(z).expect("validated") {
                let flow = here.clone() * p.clone();
                if is_target[y.0] {
                    dist.add(t, *y, flow);
                } else if !aug.is_outer(*y) {
                    next[y.0] = next[y.0].clone() + flow;
                }
            }
        }
        current = next;
    }
    Ok(dist)
}

/// A constrained class of walks: start at `start`, first visit `target` at
/// exactly `exact_hit_time`, and before that stay within
/// `min_shell <= |z| < max_shell_strict` (and inside the subtree of
/// `restrict_to_subtree` when set).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathClassQuery {
    pub start: VertexId,
    pub target: Vec<VertexId>,
    pub exact_hit_time: usize,
    pub min_shell: usize,
    pub max_shell_strict: usize,
    pub restrict_to_subtree: Option<VertexId>,
}

impl PathClassQuery {
    /// Query without shell bounds.
    pub fn new(start: VertexId, target: Vec<VertexId>, exact_hit_time: usize) -> Self {
        PathClassQuery {
            start,
            target,
            exact_hit_time,
            min_shell: 0,
            max_shell_strict: usize::MAX,
            restrict_to_subtree: None,
        }
    }

    pub fn shells(mut self, min_shell: usize, max_shell_strict: usize) -> Self {
        self.min_shell = min_shell;
        self.max_shell_strict = max_shell_strict;
        self
    }

    pub fn within_subtree(mut self, v: VertexId) -> Self {
        self.restrict_to_subtree = Some(v);
        self
    }
}

/// Probability of the path class described by `query`.
///
/// Only rows of vertices inside the shell bounds are read; a blank row there
/// is reported as [`Error::MissingKnownRow`].
pub fn path_class_prob<S: Scalar>(
    aug: &AugmentedTree,
    kernel: &TransitionKernel<S>,
    query: &PathClassQuery,
) -> Result<S> {
    let mut profile = path_class_profile(aug, kernel, query, query.exact_hit_time)?;
    Ok(profile.swap_remove(query.exact_hit_time))
}

/// Probabilities of the class of `query` for every hit time `0..=horizon`
/// (the query's own `exact_hit_time` is ignored).
pub fn path_class_profile<S: Scalar>(
    aug: &AugmentedTree,
    kernel: &TransitionKernel<S>,
    query: &PathClassQuery,
    horizon: usize,
) -> Result<Vec<S>> {
    let tree = aug.full();
    let n = tree.vertex_count();
    if query.target.is_empty() {
        return Err(Error::InvalidQuery("empty target".into()));
    }
    if query.min_shell >= query.max_shell_strict {
        return Err(Error::InvalidQuery(format!(
            "shell bounds {} .. {} are empty",
            query.min_shell, query.max_shell_strict
        )));
    }
    for &v in query.target.iter().chain([&query.start]).chain(query.restrict_to_subtree.iter()) {
        if !tree.contains(v) {
            return Err(Error::InvalidQuery(format!("vertex {v} not in tree")));
        }
    }
    if kernel.vertex_count() != n {
        return Err(Error::InvalidQuery("kernel does not match tree".into()));
    }

    let mut is_target = vec![false; n];
    for v in &query.target {
        is_target[v.0] = true;
    }
    let allowed: Vec<bool> = tree
        .vertices()
        .map(|z| {
            let d = tree.norm(z);
            query.min_shell <= d
                && d < query.max_shell_strict
                && query.restrict_to_subtree.is_none_or(|s| tree.is_ancestor_or_self(s, z))
        })
        .collect();

    let mut hits = vec![S::zero(); horizon + 1];
    if is_target[query.start.0] {
        hits[0] = S::one();
        return Ok(hits);
    }
    if !allowed[query.start.0] {
        return Ok(hits);
    }
    let mut current = vec![S::zero(); n];
    current[query.start.0] = S::one();
    for hit in hits.iter_mut().skip(1) {
        let mut next = vec![S::zero(); n];
        for z in tree.vertices() {
            let here = &current[z.0];
            if here.is_zero() {
                continue;
            }
            let row = kernel.row(z).ok_or(Error::MissingKnownRow(z))?;
            for (y, p) in row {
                let flow = here.clone() * p.clone();
                if is_target[y.0] {
                    *hit = hit.clone() + flow;
                } else if allowed[y.0] {
                    next[y.0] = next[y.0].clone() + flow;
                }
            }
        }
        current = next;
    }
    Ok(hits)
}

/// Size limits for [`brute_force_hitting`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleCaps {
    pub max_time: usize,
    pub max_vertices: usize,
}

impl Default for OracleCaps {
    fn default() -> Self {
        OracleCaps { max_time: 16, max_vertices: 12 }
    }
}

/// Same contract as [`first_hitting_joint`], computed by enumerating every
/// walk from the root of length `<= t_max` and summing path products.
pub fn brute_force_hitting<S: Scalar>(
    aug: &AugmentedTree,
    kernel: &TransitionKernel<S>,
    layer: Layer,
    t_max: usize,
) -> Result<HittingDistribution<S>> {
    brute_force_hitting_with(aug, kernel, layer, t_max, OracleCaps::default())
}

pub fn brute_force_hitting_with<S: Scalar>(
    aug: &AugmentedTree,
    kernel: &TransitionKernel<S>,
    layer: Layer,
    t_max: usize,
    caps: OracleCaps,
) -> Result<HittingDistribution<S>> {
    if t_max > caps.max_time || aug.vertex_count() > caps.max_vertices {
        return Err(Error::TooLarge(format!(
            "t_max {t_max} / {} vertices exceed caps {} / {}",
            aug.vertex_count(),
            caps.max_time,
            caps.max_vertices
        )));
    }
    let diagnostics = validate_kernel(aug, kernel);
    if !diagnostics.is_empty() {
        return Err(Error::InvalidKernel(diagnostics));
    }
    let targets = layer_vertices(aug, layer);
    let root = aug.root();
    let mut dist = HittingDistribution::zeros(layer, root, targets.clone(), t_max);

    // (position, length so far, product of transitions along the path)
    let mut stack = vec![(root, 0usize, S::one())];
    while let Some((z, len, weight)) = stack.pop() {
        if len == t_max {
            continue;
        }
        for (y, p) in kernel.row(z).expect("validated") {
            let w = weight.clone() * p.clone();
            if targets.contains(y) {
                dist.add(len + 1, *y, w);
            } else if !aug.is_outer(*y) {
                stack.push((*y, len + 1, w));
            }
        }
    }
    Ok(dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{default_augmented_kernel, Provenance};
    use crate::scalar::Rational;
    use crate::tree::{segment, spherical_augmentation, star};

    fn edge_fixture(p: f64) -> (AugmentedTree, TransitionKernel<f64>) {
        let aug = spherical_augmentation(&segment(0, 1).unwrap(), 2).unwrap();
        let mut base = TransitionKernel::blank(aug.vertex_count());
        base.set_row(VertexId(1), vec![(VertexId(0), 1.0 - p), (VertexId(2), p)], Provenance::Unknown);
        (aug.clone(), default_augmented_kernel(&aug, &base).unwrap())
    }

    fn symmetric_star() -> (AugmentedTree, TransitionKernel<Rational>) {
        let aug = spherical_augmentation(&star(1, 2).unwrap(), 2).unwrap();
        let half = Rational::from_ratio(1, 2);
        let mut base = TransitionKernel::blank(aug.vertex_count());
        base.set_row(VertexId(0), vec![(VertexId(1), half.clone()), (VertexId(2), half.clone())], Provenance::Unknown);
        for j in [1, 2] {
            base.set_row(
                VertexId(j),
                vec![(VertexId(0), half.clone()), (VertexId(j + 2), half.clone())],
                Provenance::Unknown,
            );
        }
        (aug.clone(), default_augmented_kernel(&aug, &base).unwrap())
    }

    #[test]
    fn edge_fixture_masses() {
        let (aug, k) = edge_fixture(0.7);
        let inner = first_hitting_joint(&aug, &k, Layer::Inner, 8).unwrap();
        let outer = first_hitting_joint(&aug, &k, Layer::Outer, 8).unwrap();
        assert!((inner.get(2, VertexId(2)) - 0.7).abs() < 1e-15);
        assert!((outer.get(3, VertexId(3)) - 0.35).abs() < 1e-15);
        assert_eq!(inner.get(3, VertexId(2)), 0.0);
        assert_eq!(inner.get(0, VertexId(2)), 0.0);
        // off-layer and out-of-range lookups are zero
        assert_eq!(inner.get(2, VertexId(3)), 0.0);
        assert_eq!(inner.get(99, VertexId(2)), 0.0);
    }

    #[test]
    fn symmetric_star_masses_are_exact() {
        let (aug, k) = symmetric_star();
        let inner = first_hitting_joint(&aug, &k, Layer::Inner, 5).unwrap();
        let outer = first_hitting_joint(&aug, &k, Layer::Outer, 5).unwrap();
        for j in 1..=2 {
            let (vin, vout) = (VertexId(2 + j), VertexId(4 + j));
            assert_eq!(inner.get(2, vin), Rational::from_ratio(1, 4));
            assert_eq!(outer.get(3, vout), Rational::from_ratio(1, 8));
            assert_eq!(inner.get(4, vin), Rational::from_ratio(1, 8));
            assert_eq!(outer.get(5, vout), Rational::from_ratio(3, 32));
        }
    }

    #[test]
    fn oracle_agrees_on_edge_fixture() {
        let (aug, k) = edge_fixture(0.7);
        for layer in [Layer::Inner, Layer::Outer] {
            let dp = first_hitting_joint(&aug, &k, layer, 8).unwrap();
            let bf = brute_force_hitting(&aug, &k, layer, 8).unwrap();
            for ((t, v, a), (_, _, b)) in dp.cells().zip(bf.cells()) {
                assert!((a - b).abs() <= 1e-12, "{layer:?} t={t} v={v}");
            }
        }
    }

    #[test]
    fn oracle_agrees_on_star_exactly() {
        let (aug, k) = symmetric_star();
        for layer in [Layer::Inner, Layer::Outer] {
            assert_eq!(
                first_hitting_joint(&aug, &k, layer, 5).unwrap(),
                brute_force_hitting(&aug, &k, layer, 5).unwrap()
            );
        }
    }

    #[test]
    fn oracle_caps() {
        let aug = spherical_augmentation(&star(3, 4).unwrap(), 2).unwrap();
        let k = crate::kernel::random_kernel::<f64>(&aug, 1, 0.05, crate::kernel::KernelScope::LambdaOnly).unwrap();
        assert!(aug.vertex_count() >= 12);
        assert!(matches!(brute_force_hitting(&aug, &k, Layer::Outer, 40), Err(Error::TooLarge(_))));
        let (aug, k) = edge_fixture(0.5);
        assert!(matches!(brute_force_hitting(&aug, &k, Layer::Outer, 17), Err(Error::TooLarge(_))));
    }

    #[test]
    fn path_class_examples() {
        let (aug, k) = edge_fixture(0.7);
        let q = PathClassQuery::new(VertexId(2), vec![VertexId(3)], 1).shells(2, usize::MAX);
        assert_eq!(path_class_prob(&aug, &k, &q).unwrap(), 0.5);
        let q = PathClassQuery::new(VertexId(2), vec![VertexId(3)], 3).shells(2, usize::MAX);
        assert_eq!(path_class_prob(&aug, &k, &q).unwrap(), 0.0);
        let q = PathClassQuery::new(VertexId(1), vec![VertexId(1)], 0);
        assert_eq!(path_class_prob(&aug, &k, &q).unwrap(), 1.0);
        let q = PathClassQuery::new(VertexId(1), vec![VertexId(1)], 2);
        assert_eq!(path_class_prob(&aug, &k, &q).unwrap(), 0.0);
    }

    #[test]
    fn path_class_rejects_bad_queries() {
        let (aug, k) = edge_fixture(0.7);
        let q = PathClassQuery::new(VertexId(2), vec![], 1);
        assert!(matches!(path_class_prob(&aug, &k, &q), Err(Error::InvalidQuery(_))));
        let q = PathClassQuery::new(VertexId(2), vec![VertexId(3)], 1).shells(3, 3);
        assert!(matches!(path_class_prob(&aug, &k, &q), Err(Error::InvalidQuery(_))));
        let q = PathClassQuery::new(VertexId(9), vec![VertexId(3)], 1);
        assert!(matches!(path_class_prob(&aug, &k, &q), Err(Error::InvalidQuery(_))));
    }

    #[test]
    fn path_class_reads_only_rows_in_bounds() {
        let (aug, k) = edge_fixture(0.7);
        let mut partial = k.clone();
        partial.clear_row(VertexId(0));
        partial.clear_row(VertexId(1));
        let q = PathClassQuery::new(VertexId(2), vec![VertexId(3)], 5).shells(2, 3);
        assert_eq!(path_class_prob(&aug, &partial, &q).unwrap(), 0.0);
        // widening the bounds needs the row of vertex 1
        let q = q.shells(1, 3);
        assert!(matches!(path_class_prob(&aug, &partial, &q), Err(Error::MissingKnownRow(VertexId(1)))));
    }

    #[test]
    fn unbounded_classes_reproduce_hitting_distribution() {
        let (aug, k) = symmetric_star();
        let outer = first_hitting_joint(&aug, &k, Layer::Outer, 9).unwrap();
        let q = PathClassQuery::new(aug.root(), vec![VertexId(5)], 0);
        let profile = path_class_profile(&aug, &k, &q, 9).unwrap();
        for (t, p) in profile.iter().enumerate() {
            assert_eq!(*p, outer.get(t, VertexId(5)));
        }
    }
}
