//! Random walks on rooted trees observed at two detector layers.
//!
//! A base tree is embedded in its 2-spherical augmentation, a simple
//! nondegenerate walk is started at the root and killed on the outer layer,
//! and the joint laws of first hitting time and place of the inner and outer
//! layers are recorded. This crate computes those laws exactly
//! ([`forward`]), inverts them back to every transition probability of the
//! base tree ([`tomography`]), and does the same from simulated probe walks
//! ([`estimation`]).
//!
//! All numerical code is generic over [`Scalar`]: `f64` by default, `f32`, or
//! exact [`Rational`] arithmetic.

pub mod error;
pub mod estimation;
pub mod format;
pub mod forward;
pub mod kernel;
pub mod scalar;
pub mod tomography;
pub mod tree;

pub use error::{Error, Result};
pub use estimation::{collect_batch, estimate_kernel, SampleBatch, WalkSample};
pub use forward::{
    brute_force_hitting, first_hitting_joint, path_class_prob, HittingDistribution, Layer, PathClassQuery,
};
pub use kernel::{
    default_augmented_kernel, known_rows, random_kernel, validate_kernel, KernelScope, Provenance, TransitionKernel,
    UnknownScope,
};
pub use scalar::{ArithmeticMode, Rational, Scalar};
pub use tomography::{
    chi_values, gamma_star_denominator, make_plan, recover_all, recover_all_with, recover_edge, recover_star,
    EdgeRecoveryPlan, RangePolicy, RecoveryOptions, RecoveryReport,
};
pub use tree::{
    build_tree, random_tree, segment, spherical_augmentation, star, AugmentedTree, Origin, RootedTree, VertexId,
};

pub type FloatKernel = TransitionKernel<f64>;
pub type RationalKernel = TransitionKernel<Rational>;
pub type FloatDistribution = HittingDistribution<f64>;
pub type RationalDistribution = HittingDistribution<Rational>;
pub type FloatReport = RecoveryReport<f64>;
pub type RationalReport = RecoveryReport<Rational>;
