//! Transition kernels of simple nondegenerate Markov chains on an augmented
//! tree, with per-row provenance (known, unknown, recovered).

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::{self, ArithmeticMode, Scalar};
use crate::tree::{AugmentedTree, VertexId};

/// One row of a kernel: `(neighbor, probability)` pairs sorted by neighbor.
pub type Row<S> = Vec<(VertexId, S)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Known,
    Unknown,
    Recovered,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Known => "known",
            Provenance::Unknown => "unknown",
            Provenance::Recovered => "recovered",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "known" => Some(Provenance::Known),
            "unknown" => Some(Provenance::Unknown),
            "recovered" => Some(Provenance::Recovered),
            _ => None,
        }
    }
}

/// Transition probabilities `t(u, v)` indexed by the vertices of the full
/// augmented tree. A blank row (`None`) is a row not known yet; outer-layer
/// vertices carry an empty row since the walk is absorbed there.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel<S> {
    rows: Vec<Option<Row<S>>>,
    provenance: Vec<Provenance>,
}

impl<S: Scalar> TransitionKernel<S> {
    /// A kernel with every row blank and unknown.
    pub fn blank(vertex_count: usize) -> Self {
        TransitionKernel { rows: vec![None; vertex_count], provenance: vec![Provenance::Unknown; vertex_count] }
    }

    pub fn vertex_count(&self) -> usize {
        self.rows.len()
    }

    pub fn mode(&self) -> ArithmeticMode {
        S::MODE
    }

    pub fn row(&self, v: VertexId) -> Option<&[(VertexId, S)]> {
        self.rows.get(v.0)?.as_deref()
    }

    pub fn provenance(&self, v: VertexId) -> Provenance {
        self.provenance[v.0]
    }

    /// `t(u, v)`, or `None` when the row of `u` is blank or has no such entry.
    pub fn prob(&self, u: VertexId, v: VertexId) -> Option<&S> {
        self.row(u)?.iter().find(|(n, _)| *n == v).map(|(_, p)| p)
    }

    pub fn set_row(&mut self, v: VertexId, mut row: Row<S>, provenance: Provenance) {
        row.sort_by_key(|(n, _)| *n);
        self.rows[v.0] = Some(row);
        self.provenance[v.0] = provenance;
    }

    pub fn clear_row(&mut self, v: VertexId) {
        self.rows[v.0] = None;
        self.provenance[v.0] = Provenance::Unknown;
    }

    pub fn set_provenance(&mut self, v: VertexId, provenance: Provenance) {
        self.provenance[v.0] = provenance;
    }

    pub fn vertices_with(&self, provenance: Provenance) -> Vec<VertexId> {
        (0..self.vertex_count()).map(VertexId).filter(|&v| self.provenance(v) == provenance).collect()
    }

    /// The kernel as handed to the inversion: unknown rows blanked.
    pub fn known_part(&self) -> Self {
        let mut out = self.clone();
        for v in self.vertices_with(Provenance::Unknown) {
            out.rows[v.0] = None;
        }
        out
    }

    /// Re-flags the unknown rows of terminal base vertices as known, giving
    /// the setting where only internal base vertices are unknown.
    pub fn restrict_unknowns(&mut self, aug: &AugmentedTree, scope: UnknownScope) {
        if scope == UnknownScope::InternalOnly {
            for v in aug.base().terminals() {
                if self.provenance(v) == Provenance::Unknown && self.rows[v.0].is_some() {
                    self.provenance[v.0] = Provenance::Known;
                }
            }
        }
    }

    /// Converts every probability to another scalar type.
    pub fn convert<T: Scalar>(&self) -> TransitionKernel<T> {
        let rows = self
            .rows
            .iter()
            .map(|r| r.as_ref().map(|r| r.iter().map(|(n, p)| (*n, convert_scalar::<S, T>(p))).collect()))
            .collect();
        TransitionKernel { rows, provenance: self.provenance.clone() }
    }

    /// Applies `f` to every entry.
    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> TransitionKernel<T> {
        let rows = self.rows.iter().map(|r| r.as_ref().map(|r| r.iter().map(|(n, p)| (*n, f(p))).collect())).collect();
        TransitionKernel { rows, provenance: self.provenance.clone() }
    }

    /// Largest `|t(u, v) - t'(u, v)|` over the rows of `vertices`; infinite if
    /// a row is missing on either side or the supports differ.
    pub fn max_abs_error(&self, reference: &Self, vertices: &[VertexId]) -> f64 {
        let mut worst: f64 = 0.0;
        for &v in vertices {
            match (self.row(v), reference.row(v)) {
                (Some(a), Some(b)) if a.len() == b.len() => {
                    for ((na, pa), (nb, pb)) in a.iter().zip(b) {
                        if na != nb {
                            return f64::INFINITY;
                        }
                        worst = worst.max((pa.to_f64() - pb.to_f64()).abs());
                    }
                }
                _ => return f64::INFINITY,
            }
        }
        worst
    }
}

pub(crate) fn convert_scalar<S: Scalar, T: Scalar>(x: &S) -> T {
    if S::MODE == T::MODE {
        if let Some(t) = T::parse_text(&x.to_text()) {
            return t;
        }
    }
    T::from_f64(x.to_f64())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Violation {
    MissingRow,
    /// Row support differs from the neighbor set.
    Support,
    /// An entry is not strictly positive.
    Nondegenerate,
    RowSum {
        sum: f64,
    },
    /// Outer-layer vertex with outgoing entries.
    NotAbsorbing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostic {
    pub vertex: VertexId,
    pub violation: Violation,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.violation {
            Violation::MissingRow => write!(f, "vertex {}: missing row", self.vertex),
            Violation::Support => write!(f, "vertex {}: row support differs from neighbors", self.vertex),
            Violation::Nondegenerate => write!(f, "vertex {}: nonpositive entry", self.vertex),
            Violation::RowSum { sum } => write!(f, "vertex {}: row sums to {sum}", self.vertex),
            Violation::NotAbsorbing => write!(f, "vertex {}: outer vertex has outgoing entries", self.vertex),
        }
    }
}

/// Row-sum tolerance for the scalar type (zero for exact arithmetic).
pub fn row_sum_tolerance<S: Scalar>() -> f64 {
    if S::is_exact() {
        0.0
    } else if std::mem::size_of::<S>() <= 4 {
        1e-6
    } else {
        1e-12
    }
}

/// Lists every violated invariant; an empty list means the kernel defines a
/// simple nondegenerate chain killed on the outer layer.
pub fn validate_kernel<S: Scalar>(aug: &AugmentedTree, kernel: &TransitionKernel<S>) -> Vec<Diagnostic> {
    let tree = aug.full();
    let mut out = Vec::new();
    if kernel.vertex_count() != tree.vertex_count() {
        out.push(Diagnostic {
            vertex: VertexId(kernel.vertex_count().min(tree.vertex_count())),
            violation: Violation::MissingRow,
        });
        return out;
    }
    for v in tree.vertices() {
        let mut push = |violation| out.push(Diagnostic { vertex: v, violation });
        let Some(row) = kernel.row(v) else {
            push(Violation::MissingRow);
            continue;
        };
        if aug.is_outer(v) {
            if !row.is_empty() {
                push(Violation::NotAbsorbing);
            }
            continue;
        }
        let support: Vec<VertexId> = row.iter().map(|(n, _)| *n).collect();
        if support != tree.neighbors(v) {
            push(Violation::Support);
        }
        if row.iter().any(|(_, p)| !scalar::is_positive(p)) {
            push(Violation::Nondegenerate);
        }
        let total = scalar::sum(row.iter().map(|(_, p)| p.clone()));
        if !total.close_to(&S::one(), row_sum_tolerance::<S>()) {
            push(Violation::RowSum { sum: total.to_f64() });
        }
    }
    out
}

/// Which vertices receive freshly drawn rows in [`random_kernel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelScope {
    /// Base-tree vertices only; the rest walk symmetrically.
    LambdaOnly,
    /// Every non-absorbing vertex.
    AllVertices,
}

/// Which base-tree rows count as unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnknownScope {
    #[default]
    AllLambda,
    InternalOnly,
}

fn symmetric_row<S: Scalar>(aug: &AugmentedTree, v: VertexId) -> Result<Row<S>> {
    let neighbors = aug.full().neighbors(v);
    if neighbors.len() != 2 {
        return Err(Error::DegreeMismatch { vertex: v, degree: neighbors.len() });
    }
    Ok(neighbors.into_iter().map(|n| (n, S::from_ratio(1, 2))).collect())
}

/// Completes `base` (rows on the internal base vertices, optionally also on
/// terminal ones) into a kernel on the whole augmented tree.
///
/// Supplied base rows are flagged unknown. Every other non-absorbing vertex
/// gets the symmetric `(1/2, 1/2)` row and is flagged known. A root of degree
/// one is forced to its single neighbor.
pub fn default_augmented_kernel<S: Scalar>(
    aug: &AugmentedTree,
    base: &TransitionKernel<S>,
) -> Result<TransitionKernel<S>> {
    let tree = aug.full();
    let mut kernel = TransitionKernel::blank(tree.vertex_count());
    for v in tree.vertices() {
        if aug.is_outer(v) {
            kernel.set_row(v, Vec::new(), Provenance::Known);
        } else if v == tree.root() && tree.degree(v) == 1 {
            kernel.set_row(v, vec![(tree.children(v)[0], S::one())], Provenance::Known);
        } else if aug.is_internal_lambda(v) {
            let row = base.row(v).ok_or(Error::MissingRow(v))?;
            kernel.set_row(v, row.to_vec(), Provenance::Unknown);
        } else if let (true, Some(row)) = (aug.in_lambda(v), base.row(v)) {
            kernel.set_row(v, row.to_vec(), Provenance::Unknown);
        } else {
            kernel.set_row(v, symmetric_row(aug, v)?, Provenance::Known);
        }
    }
    let diagnostics = validate_kernel(aug, &kernel);
    if !diagnostics.is_empty() {
        return Err(Error::InvalidKernel(diagnostics));
    }
    Ok(kernel)
}

/// The rows an observer knows without probing: symmetric rows on the added
/// vertices and empty rows on the absorbing layer. Base rows stay blank.
pub fn known_rows<S: Scalar>(aug: &AugmentedTree) -> Result<TransitionKernel<S>> {
    let tree = aug.full();
    let mut kernel = TransitionKernel::blank(tree.vertex_count());
    for v in tree.vertices() {
        if aug.is_outer(v) {
            kernel.set_row(v, Vec::new(), Provenance::Known);
        } else if !aug.in_lambda(v) {
            kernel.set_row(v, symmetric_row(aug, v)?, Provenance::Known);
        }
    }
    Ok(kernel)
}

/// Lattice resolution of generated probabilities: every entry is a multiple
/// of `2^-20`, exact in both float and rational arithmetic.
const LATTICE: u64 = 1 << 20;

/// Draws `degree` probabilities, each at least `floor`, uniformly from the
/// simplex lattice of resolution [`LATTICE`].
fn lattice_row(rng: &mut ChaCha8Rng, degree: usize, floor_units: u64) -> Vec<u64> {
    let free = LATTICE - degree as u64 * floor_units;
    let slots = free as usize + degree - 1;
    let mut bars = rand::seq::index::sample(rng, slots, degree - 1).into_vec();
    bars.sort_unstable();
    let mut parts = Vec::with_capacity(degree);
    let mut prev: isize = -1;
    for &b in &bars {
        parts.push((b as isize - prev - 1) as u64);
        prev = b as isize;
    }
    parts.push((slots as isize - prev - 1) as u64);
    parts.into_iter().map(|c| floor_units + c).collect()
}

/// A reproducible random kernel: the same `(aug, seed, floor, scope)` always
/// gives the same kernel, in every scalar type.
///
/// Rows on scoped vertices are drawn uniformly from `{p : sum p = 1,
/// min p >= floor}`. Base vertices are flagged unknown except a degree-one
/// root, whose row is forced.
pub fn random_kernel<S: Scalar>(
    aug: &AugmentedTree,
    seed: u64,
    floor: f64,
    scope: KernelScope,
) -> Result<TransitionKernel<S>> {
    let tree = aug.full();
    let drawn = |v: VertexId| -> bool {
        !aug.is_outer(v) && (scope == KernelScope::AllVertices || aug.in_lambda(v)) && tree.degree(v) > 1
    };
    let max_degree = tree.vertices().filter(|&v| drawn(v)).map(|v| tree.degree(v)).max().unwrap_or(1);
    if !(floor > 0.0 && floor * (max_degree as f64) < 1.0) {
        return Err(Error::InvalidParameter(format!("floor {floor} must lie in (0, 1/{max_degree})")));
    }
    let floor_units = (floor * LATTICE as f64).ceil() as u64;
    if floor_units * max_degree as u64 > LATTICE {
        return Err(Error::InvalidParameter(format!("floor {floor} too close to 1/{max_degree}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kernel = TransitionKernel::blank(tree.vertex_count());
    for v in tree.vertices() {
        let neighbors = tree.neighbors(v);
        if aug.is_outer(v) {
            kernel.set_row(v, Vec::new(), Provenance::Known);
        } else if drawn(v) {
            let units = lattice_row(&mut rng, neighbors.len(), floor_units);
            let row = neighbors.into_iter().zip(units).map(|(n, u)| (n, S::from_ratio(u, LATTICE))).collect();
            let provenance = if aug.in_lambda(v) { Provenance::Unknown } else { Provenance::Known };
            kernel.set_row(v, row, provenance);
        } else if neighbors.len() == 1 {
            let provenance = if aug.in_lambda(v) && v != tree.root() { Provenance::Unknown } else { Provenance::Known };
            kernel.set_row(v, vec![(neighbors[0], S::one())], provenance);
        } else {
            kernel.set_row(v, symmetric_row(aug, v)?, Provenance::Known);
        }
    }
    Ok(kernel)
}
