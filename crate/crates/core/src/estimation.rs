//! Monte Carlo probing: simulate walks from the root, tabulate the first
//! hitting times and places of both layers, and feed the empirical laws to
//! the exact inversion.
//!
//! Walk `i` of a batch draws from its own ChaCha8 stream `i` under the batch
//! seed, so a batch is bit-identical whatever the number of worker threads.

use std::collections::BTreeMap;
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::forward::{HittingDistribution, Layer};
use crate::kernel::{validate_kernel, Provenance, TransitionKernel};
use crate::scalar::Scalar;
use crate::tomography::{recover_all_with, RangePolicy, RecoveryOptions, RecoveryReport};
use crate::tree::{AugmentedTree, VertexId};

/// Walks longer than this are taken as evidence of a broken kernel.
pub const STEP_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WalkSample {
    pub tau_in: usize,
    pub place_in: VertexId,
    pub tau_out: usize,
    pub place_out: VertexId,
}

/// The random stream of walk `index` in a batch seeded with `seed`.
pub fn walk_stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Outcome of a walk simulated up to a time horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Truncated {
    inner: Option<(usize, VertexId)>,
    outer: Option<(usize, VertexId)>,
}

/// Cumulative transition tables of a validated kernel.
#[derive(Debug, Clone)]
pub struct WalkSimulator {
    root: VertexId,
    cumulative: Vec<Vec<(VertexId, f64)>>,
    is_inner: Vec<bool>,
    is_outer: Vec<bool>,
}

impl WalkSimulator {
    pub fn new<S: Scalar>(aug: &AugmentedTree, kernel: &TransitionKernel<S>) -> Result<Self> {
        let diagnostics = validate_kernel(aug, kernel);
        if !diagnostics.is_empty() {
            return Err(Error::InvalidKernel(diagnostics));
        }
        let tree = aug.full();
        let cumulative = tree
            .vertices()
            .map(|v| {
                let mut acc = 0.0;
                kernel
                    .row(v)
                    .unwrap_or(&[])
                    .iter()
                    .map(|(n, p)| {
                        acc += p.to_f64();
                        (*n, acc)
                    })
                    .collect()
            })
            .collect();
        Ok(WalkSimulator {
            root: tree.root(),
            cumulative,
            is_inner: tree.vertices().map(|v| aug.is_inner(v)).collect(),
            is_outer: tree.vertices().map(|v| aug.is_outer(v)).collect(),
        })
    }

    fn step<R: Rng>(&self, from: VertexId, rng: &mut R) -> VertexId {
        let row = &self.cumulative[from.0];
        let x: f64 = rng.random::<f64>() * row.last().map_or(1.0, |(_, c)| *c);
        row.iter().find(|(_, c)| x < *c).unwrap_or(row.last().expect("non-absorbing row")).0
    }

    fn run<R: Rng>(&self, rng: &mut R, horizon: u64) -> Truncated {
        let mut at = self.root;
        let mut inner = None;
        let mut t = 0usize;
        while (t as u64) < horizon {
            at = self.step(at, rng);
            t += 1;
            if inner.is_none() && self.is_inner[at.0] {
                inner = Some((t, at));
            }
            if self.is_outer[at.0] {
                return Truncated { inner, outer: Some((t, at)) };
            }
        }
        Truncated { inner, outer: None }
    }

    /// Runs one walk to absorption.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<WalkSample> {
        match self.run(rng, STEP_CAP) {
            Truncated { inner: Some((tau_in, place_in)), outer: Some((tau_out, place_out)) } => {
                Ok(WalkSample { tau_in, place_in, tau_out, place_out })
            }
            _ => Err(Error::NonTermination(STEP_CAP)),
        }
    }
}

/// Simulates one probe walk until it is absorbed on the outer layer.
pub fn sample_walk<S: Scalar, R: Rng>(
    aug: &AugmentedTree,
    kernel: &TransitionKernel<S>,
    rng: &mut R,
) -> Result<WalkSample> {
    WalkSimulator::new(aug, kernel)?.sample(rng)
}

/// Counts of first hitting `(time, place)` pairs over `n` walks. Walks not
/// absorbed by `t_cap` land in `overflow`; their inner hit still counts when
/// it happened by `t_cap`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleBatch {
    pub n: u64,
    pub seed: u64,
    pub t_cap: usize,
    pub counts_in: BTreeMap<(usize, VertexId), u64>,
    pub counts_out: BTreeMap<(usize, VertexId), u64>,
    pub overflow: u64,
}

impl SampleBatch {
    fn empty(n: u64, seed: u64, t_cap: usize) -> Self {
        SampleBatch { n, seed, t_cap, counts_in: BTreeMap::new(), counts_out: BTreeMap::new(), overflow: 0 }
    }

    fn merge(&mut self, other: SampleBatch) {
        for (key, c) in other.counts_in {
            *self.counts_in.entry(key).or_default() += c;
        }
        for (key, c) in other.counts_out {
            *self.counts_out.entry(key).or_default() += c;
        }
        self.overflow += other.overflow;
    }

    pub fn absorbed(&self) -> u64 {
        self.counts_out.values().sum()
    }
}

/// Default time cap for a batch on `aug`: `max(3R + 4, 64)`.
pub fn default_t_cap(aug: &AugmentedTree) -> usize {
    (3 * aug.hull_radius() + 4).max(64)
}

/// Simulates `n` walks with the default time cap.
pub fn collect_batch<S: Scalar>(
    aug: &AugmentedTree,
    kernel: &TransitionKernel<S>,
    n: u64,
    seed: u64,
    workers: usize,
) -> Result<SampleBatch> {
    collect_batch_capped(aug, kernel, n, seed, workers, default_t_cap(aug))
}

pub fn collect_batch_capped<S: Scalar>(
    aug: &AugmentedTree,
    kernel: &TransitionKernel<S>,
    n: u64,
    seed: u64,
    workers: usize,
    t_cap: usize,
) -> Result<SampleBatch> {
    if n == 0 {
        return Err(Error::InvalidParameter("batch needs at least one walk".into()));
    }
    if workers == 0 {
        return Err(Error::InvalidParameter("at least one worker is required".into()));
    }
    let simulator = WalkSimulator::new(aug, kernel)?;
    let workers = (workers as u64).min(n);
    let chunk = n.div_ceil(workers);

    let run_range = |lo: u64, hi: u64| {
        let mut part = SampleBatch::empty(n, seed, t_cap);
        for index in lo..hi {
            let mut rng = walk_stream(seed, index);
            let walk = simulator.run(&mut rng, t_cap as u64);
            if let Some(key) = walk.inner {
                *part.counts_in.entry(key).or_default() += 1;
            }
            match walk.outer {
                Some(key) => *part.counts_out.entry(key).or_default() += 1,
                None => part.overflow += 1,
            }
        }
        part
    };

    let mut batch = SampleBatch::empty(n, seed, t_cap);
    if workers == 1 {
        batch.merge(run_range(0, n));
        return Ok(batch);
    }
    let parts: Vec<SampleBatch> = thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|i| {
                let (lo, hi) = (i * chunk, ((i + 1) * chunk).min(n));
                let run_range = &run_range;
                scope.spawn(move || run_range(lo, hi))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sampling worker panicked")).collect()
    });
    for part in parts {
        batch.merge(part);
    }
    Ok(batch)
}

/// Empirical hitting laws `count(t, v) / n` for `t <= t_max`.
pub fn empirical_joint<S: Scalar>(
    aug: &AugmentedTree,
    batch: &SampleBatch,
    t_max: usize,
) -> Result<(HittingDistribution<S>, HittingDistribution<S>)> {
    if t_max > batch.t_cap {
        return Err(Error::InvalidParameter(format!("t_max {t_max} exceeds the batch time cap {}", batch.t_cap)));
    }
    let root = aug.root();
    let mut p_in = HittingDistribution::zeros(Layer::Inner, root, aug.inner_layer().to_vec(), t_max);
    let mut p_out = HittingDistribution::zeros(Layer::Outer, root, aug.outer_layer().to_vec(), t_max);
    for (counts, dist, layer) in
        [(&batch.counts_in, &mut p_in, aug.inner_layer()), (&batch.counts_out, &mut p_out, aug.outer_layer())]
    {
        for (&(t, v), &c) in counts {
            if t > t_max {
                continue;
            }
            if !layer.contains(&v) {
                return Err(Error::InvalidParameter(format!("batch vertex {v} is not on the layer")));
            }
            dist.set(t, v, S::from_ratio(c, batch.n));
        }
    }
    Ok((p_in, p_out))
}

/// Plug-in estimate: the exact inversion applied to the empirical laws, with
/// out-of-simplex rows clamped and projected.
pub fn estimate_kernel<S: Scalar>(
    aug: &AugmentedTree,
    known: &TransitionKernel<S>,
    batch: &SampleBatch,
) -> Result<RecoveryReport<S>> {
    let t_needed = 3 * aug.hull_radius() + 4;
    if batch.t_cap < t_needed {
        return Err(Error::InsufficientTimeRange { needed: t_needed, available: batch.t_cap });
    }
    let (p_in, p_out) = empirical_joint(aug, batch, t_needed)?;
    estimate_from_laws(aug, known, &p_in, &p_out)
}

/// The plug-in estimator on given laws; on exact laws it is the exact
/// inversion.
pub fn estimate_from_laws<S: Scalar>(
    aug: &AugmentedTree,
    known: &TransitionKernel<S>,
    p_in: &HittingDistribution<S>,
    p_out: &HittingDistribution<S>,
) -> Result<RecoveryReport<S>> {
    let options = RecoveryOptions { policy: RangePolicy::DEFAULT_CLAMP, ..Default::default() };
    recover_all_with(aug, known, p_in, p_out, &options).map_err(|e| match e {
        Error::ZeroDenominator { u, w } => {
            Error::InsufficientData(format!("no walks observed that determine t({u},{w})"))
        }
        other => other,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyRow {
    pub n: u64,
    pub seed: u64,
    pub max_error: f64,
}

/// Sample, estimate, and score against `truth` for every `(n, seed)` pair.
/// The error is the largest absolute entry error over the unknown rows.
pub fn consistency_curve<S: Scalar>(
    aug: &AugmentedTree,
    truth: &TransitionKernel<S>,
    n_grid: &[u64],
    seeds: &[u64],
    workers: usize,
) -> Result<Vec<ConsistencyRow>> {
    let known = truth.known_part();
    let unknown = truth.vertices_with(Provenance::Unknown);
    let mut rows = Vec::with_capacity(n_grid.len() * seeds.len());
    for &n in n_grid {
        for &seed in seeds {
            let batch = collect_batch(aug, truth, n, seed, workers)?;
            let report = estimate_kernel(aug, &known, &batch)?;
            rows.push(ConsistencyRow { n, seed, max_error: report.kernel.max_abs_error(truth, &unknown) });
        }
    }
    Ok(rows)
}

/// Median of `max_error` over the rows with sample size `n`.
pub fn median_error(rows: &[ConsistencyRow], n: u64) -> Option<f64> {
    let mut errors: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.max_error).collect();
    if errors.is_empty() {
        return None;
    }
    errors.sort_by(f64::total_cmp);
    let mid = errors.len() / 2;
    Some(if errors.len() % 2 == 1 { errors[mid] } else { 0.5 * (errors[mid - 1] + errors[mid]) })
}

pub fn consistency_tsv(rows: &[ConsistencyRow]) -> String {
    let mut out = String::from("n\tseed\tmax_error\n");
    for r in rows {
        out.push_str(&format!("{}\t{}\t{:.16e}\n", r.n, r.seed, r.max_error));
    }
    out
}
