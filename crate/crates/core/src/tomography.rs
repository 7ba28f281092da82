//! Recovery of transition probabilities from the first-hitting laws of the
//! two detector layers of a 2-spherical augmentation.
//!
//! Rows are recovered shell by shell from the outside in. For a base vertex
//! `u` at norm `k` and a child `w`, let `S` be the outer vertices below `w`
//! and `T_w = 3R + 4 - 2k`. Walks that first reach `S` at time `T_w` split by
//! their first visit to the inner layer:
//!
//! * a walk whose first inner visit is below `w` at time `s` and which then
//!   stays at norm `> k` contributes `P_in(s, v*) * chi(v*, T_w - s)`, where
//!   `chi` only involves rows at norm `> k`;
//! * every other walk reaches the inner layer ballistically at time `R + 1`
//!   somewhere below `u`, returns straight to `u`, steps to `w` and descends
//!   straight to `S`. Their total probability is `t(u, w) * D`, with `D`
//!   built from `P_in(R + 1, .)` and known rows.
//!
//! Solving the balance for `t(u, w)` only reads distribution times up to
//! `T_w`, hence at most `3R + 4` overall.

use std::cell::Cell;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::forward::{path_class_profile, HittingDistribution, Layer, PathClassQuery};
use crate::kernel::{Provenance, Row, TransitionKernel};
use crate::scalar::{self, Scalar};
use crate::tree::{AugmentedTree, VertexId};

/// Everything needed to solve for one unknown edge probability `t(u, w)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeRecoveryPlan {
    /// Norm of `u`.
    pub k: usize,
    pub u: VertexId,
    pub w: VertexId,
    /// `R = R_out` of the base tree.
    pub hull_radius: usize,
    /// `3R + 4 - 2k`: the outer hitting time whose mass is decomposed.
    pub t_w: usize,
    /// `R + 2 - k`: number of inner hitting times `T_w - (2l - 1)` involved.
    pub l_max: usize,
    /// Outer vertices below `w`.
    pub term_w: Vec<VertexId>,
    /// Inner vertices below `w` (the parents of `term_w`).
    pub term_star_w: Vec<VertexId>,
    /// Inner vertices below `u`: where the walks carrying `t(u, w)` first
    /// meet the inner layer before turning back to `u`.
    pub turnaround: Vec<VertexId>,
}

impl EdgeRecoveryPlan {
    /// Inner hitting time paired with index `l`.
    pub fn inner_time(&self, l: usize) -> usize {
        self.t_w - (2 * l - 1)
    }
}

fn require_two_spherical(aug: &AugmentedTree) -> Result<()> {
    if aug.aug_len() != 2 {
        return Err(Error::InvalidParameter(format!(
            "inversion needs the 2-spherical augmentation, got l = {}",
            aug.aug_len()
        )));
    }
    Ok(())
}

pub fn make_plan(aug: &AugmentedTree, u: VertexId, w: VertexId) -> Result<EdgeRecoveryPlan> {
    require_two_spherical(aug)?;
    let tree = aug.full();
    for v in [u, w] {
        if !tree.contains(v) {
            return Err(Error::UnknownVertex(v.0));
        }
    }
    if !aug.in_lambda(u) {
        return Err(Error::NotInLambda(u));
    }
    if tree.parent(w) != Some(u) {
        return Err(Error::NotAChild { parent: u, child: w });
    }
    let r = aug.hull_radius();
    let k = tree.norm(u);
    let below = |v: VertexId, pick: fn(&AugmentedTree, VertexId) -> bool| -> Vec<VertexId> {
        let mut out: Vec<VertexId> = tree.subtree(v).into_iter().filter(|&z| pick(aug, z)).collect();
        out.sort_unstable();
        out
    };
    Ok(EdgeRecoveryPlan {
        k,
        u,
        w,
        hull_radius: r,
        t_w: 3 * r + 4 - 2 * k,
        l_max: r + 2 - k,
        term_w: below(w, AugmentedTree::is_outer),
        term_star_w: below(w, AugmentedTree::is_inner),
        turnaround: below(u, AugmentedTree::is_inner),
    })
}

/// Records the largest time index read from the hitting distributions.
#[derive(Debug, Default)]
pub struct AccessLog {
    max_time: Cell<Option<usize>>,
}

impl AccessLog {
    pub fn read<S: Scalar>(&self, dist: &HittingDistribution<S>, t: usize, v: VertexId) -> S {
        self.max_time.set(Some(self.max_time.get().map_or(t, |m| m.max(t))));
        dist.get(t, v)
    }

    pub fn max_time(&self) -> Option<usize> {
        self.max_time.get()
    }
}

fn known_prob<S: Scalar>(kernel: &TransitionKernel<S>, from: VertexId, to: VertexId) -> Result<S> {
    kernel.row(from).ok_or(Error::MissingKnownRow(from))?;
    kernel.prob(from, to).cloned().ok_or(Error::MissingKnownRow(from))
}

/// `chi(v*, l)` for every `v*` in `term_star_w` and `l = 1..=l_max`: the
/// probability of walking from `v*` to `term_w`, first arriving there at
/// time `2l - 1`, while staying at norms `k + 1 ..= R + 1`.
///
/// Reads kernel rows at norm `> k` only.
pub fn chi_values<S: Scalar>(
    aug: &AugmentedTree,
    kernel: &TransitionKernel<S>,
    plan: &EdgeRecoveryPlan,
) -> Result<BTreeMap<(VertexId, usize), S>> {
    let horizon = 2 * plan.l_max - 1;
    let mut out = BTreeMap::new();
    for &start in &plan.term_star_w {
        let query = PathClassQuery::new(start, plan.term_w.clone(), horizon).shells(plan.k + 1, plan.hull_radius + 2);
        let profile = path_class_profile(aug, kernel, &query, horizon)?;
        for l in 1..=plan.l_max {
            out.insert((start, l), profile[2 * l - 1].clone());
        }
    }
    Ok(out)
}

/// Probability carried by the walks that pass through `u` on their way to
/// `term_w`, divided by the unknown `t(u, w)`:
///
/// `D = sum_{v1 in turnaround} P_in(R+1, v1) * prod(up-steps v1 -> u)
///      * sum_{v in term_w} prod(down-steps w -> v)`.
pub fn gamma_star_denominator<S: Scalar>(
    aug: &AugmentedTree,
    kernel: &TransitionKernel<S>,
    plan: &EdgeRecoveryPlan,
    p_in: &HittingDistribution<S>,
) -> Result<S> {
    denominator(aug, kernel, plan, p_in, &AccessLog::default())
}

fn denominator<S: Scalar>(
    aug: &AugmentedTree,
    kernel: &TransitionKernel<S>,
    plan: &EdgeRecoveryPlan,
    p_in: &HittingDistribution<S>,
    log: &AccessLog,
) -> Result<S> {
    let tree = aug.full();
    let mut descend = Vec::with_capacity(plan.term_w.len());
    for &v in &plan.term_w {
        let path = tree.path_between(plan.w, v);
        let mut weight = S::one();
        for pair in path.windows(2) {
            weight = weight * known_prob(kernel, pair[0], pair[1])?;
        }
        descend.push(weight);
    }
    let mut ascend = Vec::with_capacity(plan.turnaround.len());
    for &v1 in &plan.turnaround {
        let path = tree.path_between(v1, plan.u);
        let mut weight = log.read(p_in, plan.hull_radius + 1, v1);
        for pair in path.windows(2) {
            weight = weight * known_prob(kernel, pair[0], pair[1])?;
        }
        ascend.push(weight);
    }
    Ok(scalar::sum(ascend) * scalar::sum(descend))
}

/// The balance behind the recovery of `t(u, w)`:
/// `observed = chi_part + t(u, w) * denominator`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeBalance<S> {
    /// `sum_{v in term_w} P_out(T_w, v)`.
    pub observed: S,
    /// `sum_l sum_{v*} P_in(T_w - (2l - 1), v*) * chi(v*, l)`.
    pub chi_part: S,
    pub denominator: S,
}

impl<S: Scalar> EdgeBalance<S> {
    pub fn solve(&self) -> Option<S> {
        if self.denominator.is_zero() {
            return None;
        }
        Some((self.observed.clone() - self.chi_part.clone()) / self.denominator.clone())
    }
}

pub fn edge_balance<S: Scalar>(
    aug: &AugmentedTree,
    kernel: &TransitionKernel<S>,
    plan: &EdgeRecoveryPlan,
    p_in: &HittingDistribution<S>,
    p_out: &HittingDistribution<S>,
) -> Result<EdgeBalance<S>> {
    edge_balance_logged(aug, kernel, plan, p_in, p_out, &AccessLog::default())
}

fn edge_balance_logged<S: Scalar>(
    aug: &AugmentedTree,
    kernel: &TransitionKernel<S>,
    plan: &EdgeRecoveryPlan,
    p_in: &HittingDistribution<S>,
    p_out: &HittingDistribution<S>,
    log: &AccessLog,
) -> Result<EdgeBalance<S>> {
    check_layer(p_in, Layer::Inner)?;
    check_layer(p_out, Layer::Outer)?;
    check_range(p_in, plan.t_w)?;
    check_range(p_out, plan.t_w)?;
    let observed = scalar::sum(plan.term_w.iter().map(|&v| log.read(p_out, plan.t_w, v)));
    let chi = chi_values(aug, kernel, plan)?;
    let mut terms = Vec::new();
    for l in 1..=plan.l_max {
        for &v in &plan.term_star_w {
            let c = &chi[&(v, l)];
            if !c.is_zero() {
                terms.push(log.read(p_in, plan.inner_time(l), v) * c.clone());
            }
        }
    }
    let chi_part = scalar::sum(terms);
    let denominator = denominator(aug, kernel, plan, p_in, log)?;
    Ok(EdgeBalance { observed, chi_part, denominator })
}

fn check_layer<S: Scalar>(dist: &HittingDistribution<S>, layer: Layer) -> Result<()> {
    if dist.layer() != layer {
        return Err(Error::InvalidParameter(format!(
            "expected the {} distribution, got {}",
            layer.as_str(),
            dist.layer().as_str()
        )));
    }
    Ok(())
}

fn check_range<S: Scalar>(dist: &HittingDistribution<S>, needed: usize) -> Result<()> {
    if dist.t_max() < needed {
        return Err(Error::InsufficientTimeRange { needed, available: dist.t_max() });
    }
    Ok(())
}

/// Solves for `t(u, w)`. Needs rows at every norm `> k` and distributions
/// up to `T_w`.
pub fn recover_edge<S: Scalar>(
    aug: &AugmentedTree,
    kernel: &TransitionKernel<S>,
    plan: &EdgeRecoveryPlan,
    p_in: &HittingDistribution<S>,
    p_out: &HittingDistribution<S>,
) -> Result<S> {
    let value =
        edge_balance(aug, kernel, plan, p_in, p_out)?.solve().ok_or(Error::ZeroDenominator { u: plan.u, w: plan.w })?;
    if value < S::zero() || value > S::one() {
        return Err(Error::OutOfRange { u: plan.u, w: plan.w, value: value.to_f64() });
    }
    Ok(value)
}

/// What to do with recovered values outside the probability simplex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RangePolicy {
    /// Fail with `OutOfRange` / `RowSumViolation`.
    Strict,
    /// Clamp to `[eps, 1 - eps]` and renormalize the row, flagging it.
    Clamp { eps: f64 },
}

impl RangePolicy {
    pub const DEFAULT_CLAMP: RangePolicy = RangePolicy::Clamp { eps: 1e-6 };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlagCode {
    /// An edge estimate fell outside `[0, 1]` and was clamped.
    Clamped,
    /// A row left the simplex and was projected back onto it.
    Renormalized,
    /// The recovered root row did not sum to one.
    RootSum,
}

impl FlagCode {
    pub fn as_str(self) -> &'static str {
        match self {
            FlagCode::Clamped => "clamped",
            FlagCode::Renormalized => "renormalized",
            FlagCode::RootSum => "root_sum",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "clamped" => Some(FlagCode::Clamped),
            "renormalized" => Some(FlagCode::Renormalized),
            "root_sum" => Some(FlagCode::RootSum),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Flag {
    pub code: FlagCode,
    pub vertex: VertexId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryReport<S> {
    /// Completed kernel; solved rows carry provenance `Recovered`.
    pub kernel: TransitionKernel<S>,
    /// Solved rows before any projection onto the simplex.
    pub raw: TransitionKernel<S>,
    /// `sum(raw row) - 1` per solved vertex.
    pub residuals: BTreeMap<VertexId, f64>,
    pub max_error: Option<f64>,
    /// Largest time index read from either distribution.
    pub max_time_read: usize,
    /// Largest time index read while solving each shell `k`.
    pub shell_time_read: BTreeMap<usize, usize>,
    pub flags: Vec<Flag>,
}

impl<S: Scalar> RecoveryReport<S> {
    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> RecoveryReport<T> {
        RecoveryReport {
            kernel: self.kernel.map(&f),
            raw: self.raw.map(&f),
            residuals: self.residuals.clone(),
            max_error: self.max_error,
            max_time_read: self.max_time_read,
            shell_time_read: self.shell_time_read.clone(),
            flags: self.flags.clone(),
        }
    }

    pub fn recovered_vertices(&self) -> Vec<VertexId> {
        self.kernel.vertices_with(Provenance::Recovered)
    }

    /// Sets `max_error` to the largest absolute entry error over the solved
    /// rows.
    pub fn compare_with(&mut self, truth: &TransitionKernel<S>) -> f64 {
        let err = self.kernel.max_abs_error(truth, &self.recovered_vertices());
        self.max_error = Some(err);
        err
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryOptions {
    pub policy: RangePolicy,
    /// Allowed `|sum - 1|` of the recovered root row in float modes.
    pub root_tolerance: f64,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        RecoveryOptions { policy: RangePolicy::Strict, root_tolerance: 1e-9 }
    }
}

/// Recovers every blank row of `known` from the two hitting laws, with the
/// default (strict) options.
pub fn recover_all<S: Scalar>(
    aug: &AugmentedTree,
    known: &TransitionKernel<S>,
    p_in: &HittingDistribution<S>,
    p_out: &HittingDistribution<S>,
) -> Result<RecoveryReport<S>> {
    recover_all_with(aug, known, p_in, p_out, &RecoveryOptions::default())
}

/// Runs in [`Scalar::Wide`] and rounds the result back to `S`.
pub fn recover_all_with<S: Scalar>(
    aug: &AugmentedTree,
    known: &TransitionKernel<S>,
    p_in: &HittingDistribution<S>,
    p_out: &HittingDistribution<S>,
    options: &RecoveryOptions,
) -> Result<RecoveryReport<S>> {
    let report = recover_all_in(aug, &known.map(S::widen), &p_in.map(S::widen), &p_out.map(S::widen), options)?;
    Ok(report.map(S::narrow))
}

fn recover_all_in<S: Scalar>(
    aug: &AugmentedTree,
    known: &TransitionKernel<S>,
    p_in: &HittingDistribution<S>,
    p_out: &HittingDistribution<S>,
    options: &RecoveryOptions,
) -> Result<RecoveryReport<S>> {
    require_two_spherical(aug)?;
    let tree = aug.full();
    if known.vertex_count() != tree.vertex_count() {
        return Err(Error::InvalidParameter("kernel does not match the tree".into()));
    }
    let r = aug.hull_radius();
    check_layer(p_in, Layer::Inner)?;
    check_layer(p_out, Layer::Outer)?;
    check_range(p_in, 3 * r + 4)?;
    check_range(p_out, 3 * r + 4)?;

    let mut kernel = known.clone();
    let mut unknown = Vec::new();
    for v in tree.vertices() {
        if known.row(v).is_some() {
            continue;
        }
        if aug.is_outer(v) {
            kernel.set_row(v, Vec::new(), Provenance::Known);
        } else if aug.in_lambda(v) {
            unknown.push(v);
        } else {
            return Err(Error::MissingRow(v));
        }
    }
    let mut raw = kernel.clone();
    let mut report_flags = Vec::new();
    let mut residuals = BTreeMap::new();
    let mut shell_time_read = BTreeMap::new();

    for k in (0..=r).rev() {
        let log = AccessLog::default();
        for &u in unknown.iter().filter(|&&u| tree.norm(u) == k) {
            let mut children = Vec::new();
            for &w in tree.children(u) {
                let plan = make_plan(aug, u, w)?;
                let value = edge_balance_logged(aug, &kernel, &plan, p_in, p_out, &log)?
                    .solve()
                    .ok_or(Error::ZeroDenominator { u, w })?;
                children.push((w, value));
            }
            let solved = complete_row(u, tree.parent(u), children, options, &mut report_flags)?;
            residuals.insert(u, solved.residual);
            raw.set_row(u, solved.raw, Provenance::Recovered);
            kernel.set_row(u, solved.row, Provenance::Recovered);
        }
        if let Some(t) = log.max_time() {
            shell_time_read.insert(k, t);
        }
    }

    Ok(RecoveryReport {
        kernel,
        raw,
        residuals,
        max_error: None,
        max_time_read: shell_time_read.values().copied().max().unwrap_or(0),
        shell_time_read,
        flags: report_flags,
    })
}

struct SolvedRow<S> {
    raw: Row<S>,
    row: Row<S>,
    residual: f64,
}

/// Turns the recovered child entries of `u` into a full row: the parent
/// entry is the complement, and the root row must already sum to one.
fn complete_row<S: Scalar>(
    u: VertexId,
    parent: Option<VertexId>,
    children: Vec<(VertexId, S)>,
    options: &RecoveryOptions,
    flags: &mut Vec<Flag>,
) -> Result<SolvedRow<S>> {
    let child_sum = scalar::sum(children.iter().map(|(_, p)| p.clone()));
    let mut raw = children.clone();
    if let Some(p) = parent {
        raw.push((p, S::one() - child_sum.clone()));
    }
    raw.sort_by_key(|(n, _)| *n);
    let raw_sum = scalar::sum(raw.iter().map(|(_, p)| p.clone()));
    let residual = raw_sum.to_f64() - 1.0;

    let in_unit = |x: &S| *x >= S::zero() && *x <= S::one();
    let root_ok =
        parent.is_some() || S::one().close_to(&child_sum, if S::is_exact() { 0.0 } else { options.root_tolerance });

    match options.policy {
        RangePolicy::Strict => {
            if let Some((w, value)) = children.iter().find(|(_, x)| !in_unit(x)) {
                return Err(Error::OutOfRange { u, w: *w, value: value.to_f64() });
            }
            if parent.is_some() {
                let complement = S::one() - child_sum;
                if complement <= S::zero() || complement >= S::one() {
                    return Err(Error::RowSumViolation { vertex: u, complement: complement.to_f64() });
                }
            } else if !root_ok {
                return Err(Error::RowSumViolation { vertex: u, complement: 1.0 - child_sum.to_f64() });
            }
            Ok(SolvedRow { row: raw.clone(), raw, residual })
        }
        RangePolicy::Clamp { eps } => {
            let lo = S::from_f64(eps);
            let hi = S::one() - lo.clone();
            let clamp = |x: &S| {
                if *x < lo {
                    lo.clone()
                } else if *x > hi {
                    hi.clone()
                } else {
                    x.clone()
                }
            };
            let mut row: Row<S> = Vec::with_capacity(raw.len());
            let mut clamped = false;
            for (w, x) in &children {
                // a single-child root row is exactly one
                if parent.is_none() && children.len() == 1 {
                    row.push((*w, S::one()));
                    clamped |= !in_unit(x);
                    continue;
                }
                let c = clamp(x);
                clamped |= !in_unit(x);
                row.push((*w, c));
            }
            if clamped {
                flags.push(Flag { code: FlagCode::Clamped, vertex: u });
            }
            if !root_ok {
                flags.push(Flag { code: FlagCode::RootSum, vertex: u });
            }
            let mut projected = false;
            if let Some(p) = parent {
                let complement = S::one() - scalar::sum(row.iter().map(|(_, x)| x.clone()));
                if complement < lo {
                    row.push((p, lo.clone()));
                    projected = true;
                } else {
                    row.push((p, complement));
                }
            } else if children.len() > 1 {
                projected = !root_ok || clamped;
            }
            if projected {
                let total = scalar::sum(row.iter().map(|(_, x)| x.clone()));
                for (_, x) in row.iter_mut() {
                    *x = x.clone() / total.clone();
                }
                flags.push(Flag { code: FlagCode::Renormalized, vertex: u });
            }
            row.sort_by_key(|(n, _)| *n);
            Ok(SolvedRow { raw, row, residual })
        }
    }
}

/// Closed-form inversion on the 2-spherical augmentation of the `(1, m)`
/// star, with arms `j = 1..=m`, inner vertices `m + j` and outer vertices
/// `2m + j`:
///
/// `t(j, m+j) = [P_out(5, 2m+j) / P_out(3, 2m+j) - P_in(4, m+j) / P_in(2, m+j)] / t(m+j, j)`,
/// then `t(0, j) = P_in(2, m+j) / t(j, m+j)` and `t(j, 0) = 1 - t(j, m+j)`.
pub fn recover_star<S: Scalar>(
    aug: &AugmentedTree,
    known: &TransitionKernel<S>,
    p_in: &HittingDistribution<S>,
    p_out: &HittingDistribution<S>,
) -> Result<TransitionKernel<S>> {
    require_two_spherical(aug)?;
    let tree = aug.full();
    let base = aug.base();
    let m = base.vertex_count() - 1;
    let is_star = m >= 1 && base.children(base.root()).len() == m && base.root() == VertexId(0);
    if !is_star || tree.vertex_count() != 3 * m + 1 {
        return Err(Error::InvalidParameter("tree is not an augmented (1, m) star".into()));
    }
    check_layer(p_in, Layer::Inner)?;
    check_layer(p_out, Layer::Outer)?;
    check_range(p_in, 5)?;
    check_range(p_out, 5)?;

    let ratio = |num: S, den: S, u: usize, w: usize| -> Result<S> {
        if den.is_zero() {
            return Err(Error::ZeroDenominator { u: VertexId(u), w: VertexId(w) });
        }
        Ok(num / den)
    };
    let mut kernel = known.clone();
    let mut root_row = Vec::with_capacity(m);
    for j in 1..=m {
        let (arm, inner, outer) = (VertexId(j), VertexId(m + j), VertexId(2 * m + j));
        let back = known_prob(known, inner, arm)?;
        let out_ratio = ratio(p_out.get(5, outer), p_out.get(3, outer), j, m + j)?;
        let in_ratio = ratio(p_in.get(4, inner), p_in.get(2, inner), j, m + j)?;
        let forward = ratio(out_ratio - in_ratio, back, j, m + j)?;
        let entry = ratio(p_in.get(2, inner), forward.clone(), 0, j)?;
        for (u, w, x) in [(j, m + j, &forward), (0, j, &entry)] {
            if *x < S::zero() || *x > S::one() {
                return Err(Error::OutOfRange { u: VertexId(u), w: VertexId(w), value: x.to_f64() });
            }
        }
        kernel.set_row(arm, vec![(VertexId(0), S::one() - forward.clone()), (inner, forward)], Provenance::Recovered);
        root_row.push((arm, entry));
    }
    kernel.set_row(VertexId(0), root_row, Provenance::Recovered);
    for v in aug.outer_layer() {
        if kernel.row(*v).is_none() {
            kernel.set_row(*v, Vec::new(), Provenance::Known);
        }
    }
    Ok(kernel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::first_hitting_joint;
    use crate::kernel::default_augmented_kernel;
    use crate::scalar::Rational;
    use crate::tree::{segment, spherical_augmentation, star};

    fn edge_fixture() -> (AugmentedTree, TransitionKernel<f64>) {
        let aug = spherical_augmentation(&segment(0, 1).unwrap(), 2).unwrap();
        let mut base = TransitionKernel::blank(aug.vertex_count());
        base.set_row(VertexId(1), vec![(VertexId(0), 0.3), (VertexId(2), 0.7)], Provenance::Unknown);
        (aug.clone(), default_augmented_kernel(&aug, &base).unwrap())
    }

    fn laws<S: Scalar>(
        aug: &AugmentedTree,
        k: &TransitionKernel<S>,
        t: usize,
    ) -> (HittingDistribution<S>, HittingDistribution<S>) {
        (first_hitting_joint(aug, k, Layer::Inner, t).unwrap(), first_hitting_joint(aug, k, Layer::Outer, t).unwrap())
    }

    #[test]
    fn plan_for_edge_fixture() {
        let (aug, _) = edge_fixture();
        let plan = make_plan(&aug, VertexId(1), VertexId(2)).unwrap();
        assert_eq!((plan.k, plan.t_w, plan.l_max), (1, 5, 2));
        assert_eq!(plan.term_w, vec![VertexId(3)]);
        assert_eq!(plan.term_star_w, vec![VertexId(2)]);
        assert_eq!(plan.inner_time(1), 4);
        assert_eq!(plan.inner_time(2), 2);
    }

    #[test]
    fn plan_for_star_root() {
        let aug = spherical_augmentation(&star(1, 2).unwrap(), 2).unwrap();
        let plan = make_plan(&aug, VertexId(0), VertexId(1)).unwrap();
        assert_eq!((plan.t_w, plan.l_max), (7, 3));
        assert_eq!(plan.term_w, vec![VertexId(5)]);
        assert_eq!(plan.turnaround, vec![VertexId(3), VertexId(4)]);
        // terminal shell: T = R + 4
        let plan = make_plan(&aug, VertexId(1), VertexId(3)).unwrap();
        assert_eq!(plan.t_w, 1 + 4);
    }

    #[test]
    fn plan_errors() {
        let aug = spherical_augmentation(&star(1, 2).unwrap(), 2).unwrap();
        assert!(matches!(make_plan(&aug, VertexId(3), VertexId(5)), Err(Error::NotInLambda(_))));
        assert!(matches!(make_plan(&aug, VertexId(1), VertexId(4)), Err(Error::NotAChild { .. })));
        let aug3 = spherical_augmentation(&star(1, 2).unwrap(), 3).unwrap();
        assert!(matches!(make_plan(&aug3, VertexId(0), VertexId(1)), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn chi_for_edge_fixture() {
        let (aug, k) = edge_fixture();
        let plan = make_plan(&aug, VertexId(1), VertexId(2)).unwrap();
        let chi = chi_values(&aug, &k, &plan).unwrap();
        assert_eq!(chi[&(VertexId(2), 1)], 0.5);
        assert_eq!(chi[&(VertexId(2), 2)], 0.0);
    }

    #[test]
    fn chi_ignores_rows_at_or_inside_shell_k() {
        let (aug, k) = edge_fixture();
        let mut partial = k.clone();
        partial.clear_row(VertexId(0));
        partial.clear_row(VertexId(1));
        let plan = make_plan(&aug, VertexId(1), VertexId(2)).unwrap();
        assert_eq!(chi_values(&aug, &partial, &plan).unwrap(), chi_values(&aug, &k, &plan).unwrap());
    }

    #[test]
    fn denominator_for_edge_fixture() {
        let (aug, k) = edge_fixture();
        let (p_in, _) = laws(&aug, &k, 5);
        let plan = make_plan(&aug, VertexId(1), VertexId(2)).unwrap();
        let d = gamma_star_denominator(&aug, &k, &plan, &p_in).unwrap();
        assert!((d - 0.175).abs() < 1e-15);
    }

    #[test]
    fn recover_edge_fixture() {
        let (aug, k) = edge_fixture();
        let (p_in, p_out) = laws(&aug, &k, 5);
        let plan = make_plan(&aug, VertexId(1), VertexId(2)).unwrap();
        let balance = edge_balance(&aug, &k, &plan, &p_in, &p_out).unwrap();
        assert!((balance.observed - 0.2275).abs() < 1e-15);
        assert!((balance.chi_part - 0.105).abs() < 1e-15);
        let t = recover_edge(&aug, &k, &plan, &p_in, &p_out).unwrap();
        assert!((t - 0.7).abs() < 1e-14);
    }

    #[test]
    fn recover_edge_needs_time_range() {
        let (aug, k) = edge_fixture();
        let (p_in, p_out) = laws(&aug, &k, 4);
        let plan = make_plan(&aug, VertexId(1), VertexId(2)).unwrap();
        assert!(matches!(
            recover_edge(&aug, &k, &plan, &p_in, &p_out),
            Err(Error::InsufficientTimeRange { needed: 5, available: 4 })
        ));
        assert!(matches!(recover_edge(&aug, &k, &plan, &p_out, &p_in), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn recover_all_edge_fixture() {
        let (aug, k) = edge_fixture();
        let (p_in, p_out) = laws(&aug, &k, 7);
        let report = recover_all(&aug, &k.known_part(), &p_in, &p_out).unwrap();
        let out = &report.kernel;
        assert!((out.prob(VertexId(1), VertexId(2)).unwrap() - 0.7).abs() < 1e-12);
        assert!((out.prob(VertexId(1), VertexId(0)).unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(out.prob(VertexId(0), VertexId(1)), Some(&1.0));
        assert_eq!(report.max_time_read, 5);
        assert!(report.flags.is_empty());
    }

    #[test]
    fn recover_all_exact_on_random_star() {
        let aug = spherical_augmentation(&star(1, 2).unwrap(), 2).unwrap();
        let k =
            crate::kernel::random_kernel::<Rational>(&aug, 9, 0.05, crate::kernel::KernelScope::LambdaOnly).unwrap();
        let (p_in, p_out) = laws(&aug, &k, 7);
        let mut report = recover_all(&aug, &k.known_part(), &p_in, &p_out).unwrap();
        assert_eq!(report.compare_with(&k), 0.0);
        for v in report.recovered_vertices() {
            assert_eq!(report.kernel.row(v), k.row(v));
        }
        assert_eq!(report.max_time_read, 7);
        assert_eq!(report.shell_time_read[&1], 5);
        assert_eq!(report.shell_time_read[&0], 7);
    }

    #[test]
    fn star_closed_form_symmetric() {
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
        let k = default_augmented_kernel(&aug, &base).unwrap();
        let (p_in, p_out) = laws(&aug, &k, 5);
        let out = recover_star(&aug, &k.known_part(), &p_in, &p_out).unwrap();
        assert_eq!(out.prob(VertexId(1), VertexId(3)), Some(&half));
        assert_eq!(out.prob(VertexId(0), VertexId(1)), Some(&half));
        assert_eq!(out, {
            let mut expect = k.clone();
            for v in [0, 1, 2] {
                expect.set_provenance(VertexId(v), Provenance::Recovered);
            }
            expect
        });
        // D at the terminal shell: P_in(2, 3) t(3, 1) t(3, 5) = P_out(3, 5) t(3, 1) = 1/16
        let plan = make_plan(&aug, VertexId(1), VertexId(3)).unwrap();
        assert_eq!(gamma_star_denominator(&aug, &k, &plan, &p_in).unwrap(), Rational::from_ratio(1, 16));
        let chi = chi_values(&aug, &k, &make_plan(&aug, VertexId(0), VertexId(1)).unwrap()).unwrap();
        assert_eq!(chi[&(VertexId(3), 1)], half);
        assert_eq!(recover_edge(&aug, &k, &plan, &p_in, &p_out).unwrap(), half);
    }

    #[test]
    fn clamp_policy_projects_rows() {
        let mut flags = Vec::new();
        let opts = RecoveryOptions { policy: RangePolicy::DEFAULT_CLAMP, ..Default::default() };
        let solved =
            complete_row(VertexId(1), Some(VertexId(0)), vec![(VertexId(2), 1.2f64)], &opts, &mut flags).unwrap();
        assert!(solved.row.iter().all(|(_, p)| *p > 0.0 && *p < 1.0));
        let total: f64 = solved.row.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(solved.raw, vec![(VertexId(0), 1.0 - 1.2), (VertexId(2), 1.2)]);
        assert_eq!(flags.iter().map(|f| f.code).collect::<Vec<_>>(), vec![FlagCode::Clamped]);

        let strict = complete_row(
            VertexId(1),
            Some(VertexId(0)),
            vec![(VertexId(2), 1.2f64)],
            &RecoveryOptions::default(),
            &mut flags,
        );
        assert!(matches!(strict, Err(Error::OutOfRange { .. })));
        let strict = complete_row(
            VertexId(0),
            None,
            vec![(VertexId(1), 0.5f64), (VertexId(2), 0.6)],
            &RecoveryOptions::default(),
            &mut flags,
        );
        assert!(matches!(strict, Err(Error::RowSumViolation { .. })));
    }
}
