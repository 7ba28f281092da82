use num_traits::{One, Zero};
use proptest::prelude::*;
use treetomo::format;
use treetomo::{
    collect_batch, first_hitting_joint, random_kernel, random_tree, recover_all, spherical_augmentation, AugmentedTree,
    KernelScope, Layer, Provenance, Rational,
};

fn small_tree(rout: usize, size: usize, seed: u64) -> AugmentedTree {
    let tree = random_tree(rout, rout + 1 + size, seed).unwrap();
    spherical_augmentation(&tree, 2).unwrap()
}

fn scope(all: bool) -> KernelScope {
    if all {
        KernelScope::AllVertices
    } else {
        KernelScope::LambdaOnly
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exact_inversion_recovers_every_base_row(rout in 1usize..4, size in 0usize..6, seed in any::<u64>(), all: bool) {
        let aug = small_tree(rout, size, seed);
        let truth = random_kernel::<Rational>(&aug, seed, 0.05, scope(all)).unwrap();
        let t = 3 * aug.hull_radius() + 4;
        let p_in = first_hitting_joint(&aug, &truth, Layer::Inner, t).unwrap();
        let p_out = first_hitting_joint(&aug, &truth, Layer::Outer, t).unwrap();
        let report = recover_all(&aug, &truth.known_part(), &p_in, &p_out).unwrap();
        for v in truth.vertices_with(Provenance::Unknown) {
            prop_assert_eq!(report.kernel.row(v), truth.row(v));
        }
    }

    #[test]
    fn hitting_laws_are_sub_probabilities(rout in 1usize..4, size in 0usize..6, seed in any::<u64>(), all: bool) {
        let aug = small_tree(rout, size, seed);
        let kernel = random_kernel::<Rational>(&aug, seed, 0.05, scope(all)).unwrap();
        let t = 3 * aug.hull_radius() + 6;
        for layer in [Layer::Inner, Layer::Outer] {
            let law = first_hitting_joint(&aug, &kernel, layer, t).unwrap();
            prop_assert!(law.cells().all(|(_, _, p)| *p >= Rational::zero()));
            prop_assert!(law.total() <= Rational::one());
            let short = first_hitting_joint(&aug, &kernel, layer, t - 3).unwrap();
            prop_assert_eq!(&law.truncated(t - 3), &short);
        }
        // the walk starts at the root and has to cross the inner layer first
        let inner = first_hitting_joint(&aug, &kernel, Layer::Inner, t).unwrap();
        let outer = first_hitting_joint(&aug, &kernel, Layer::Outer, t).unwrap();
        for s in 0..=t {
            prop_assert!(outer.total_up_to(s) <= inner.total_up_to(s));
        }
    }

    #[test]
    fn files_round_trip(rout in 1usize..4, size in 0usize..6, seed in any::<u64>()) {
        let aug = small_tree(rout, size, seed);
        prop_assert_eq!(&format::parse_tree(&format::write_tree(aug.base())).unwrap(), aug.base());
        prop_assert_eq!(&format::parse_augmented(&format::write_augmented(&aug)).unwrap(), &aug);

        let exact = random_kernel::<Rational>(&aug, seed, 0.05, KernelScope::AllVertices).unwrap();
        let text = format::write_kernel(&exact);
        prop_assert_eq!(&format::parse_kernel::<Rational>(&text, aug.vertex_count()).unwrap(), &exact);

        let float = random_kernel::<f64>(&aug, seed, 0.05, KernelScope::LambdaOnly).unwrap();
        let law = first_hitting_joint(&aug, &float, Layer::Outer, 3 * aug.hull_radius() + 4).unwrap();
        let back = format::parse_distribution::<f64>(&format::write_distribution(&law), &aug, Layer::Outer).unwrap();
        prop_assert_eq!(back, law);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn batches_do_not_depend_on_worker_count(seed in any::<u64>(), workers in 2usize..6, n in 1u64..400) {
        let aug = small_tree(2, 3, seed);
        let kernel = random_kernel::<f64>(&aug, seed, 0.05, KernelScope::LambdaOnly).unwrap();
        let one = collect_batch(&aug, &kernel, n, seed, 1).unwrap();
        let many = collect_batch(&aug, &kernel, n, seed, workers).unwrap();
        prop_assert_eq!(&one, &many);
        prop_assert_eq!(one.absorbed() + one.overflow, n);
    }
}
