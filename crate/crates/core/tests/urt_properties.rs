//! Descendant-count laws: normalization, exact vs float agreement, and
//! agreement with sampled trees.

use icnsim::urt::{
    descendant_counts, descendants_pmf, descendants_pmf_exact, sample_urt, subtree_size_distribution,
    subtree_size_distribution_exact, tail_probability, to_f64,
};
use num_rational::BigRational;
use num_traits::{One, Zero};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn n_and_k(max_n: u64) -> impl Strategy<Value = (u64, u64)> {
    (2..=max_n).prop_flat_map(|n| (Just(n), 2..=n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_law_sums_to_one((n, k) in n_and_k(200)) {
        let sum = descendants_pmf_exact(n, k).unwrap().into_iter().fold(BigRational::zero(), |a, p| a + p);
        prop_assert_eq!(sum, BigRational::one());
    }

    #[test]
    fn float_law_tracks_exact((n, k) in n_and_k(120)) {
        let exact = to_f64(&descendants_pmf_exact(n, k).unwrap());
        for (a, b) in descendants_pmf(n, k).unwrap().iter().zip(exact) {
            prop_assert!((a - b).abs() <= 1e-12 * b.max(1e-300) + 1e-15, "{} vs {}", a, b);
        }
    }

    #[test]
    fn support_ends_at_n_minus_k((n, k) in n_and_k(60)) {
        let p = descendants_pmf(n, k).unwrap();
        prop_assert!(p[(n - k) as usize] > 0.0);
        prop_assert!(p[(n - k + 1) as usize..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn mixture_is_normalized(n in 2u64..80, with_root in any::<bool>()) {
        let sum = subtree_size_distribution_exact(n, with_root)
            .unwrap()
            .into_iter()
            .fold(BigRational::zero(), |a, p| a + p);
        prop_assert_eq!(sum, BigRational::one());
    }

    #[test]
    fn tail_is_non_increasing(n in 2u64..300) {
        let p = subtree_size_distribution(n, true).unwrap();
        let tails: Vec<f64> = (0..p.len()).map(|t| tail_probability(&p, t)).collect();
        prop_assert!(tails.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn descendant_counts_add_up(n in 1usize..200, seed in any::<u64>()) {
        let parents = sample_urt(n, &mut ChaCha8Rng::seed_from_u64(seed));
        let d = descendant_counts(&parents);
        prop_assert_eq!(d[0], n - 1);
        // every non-root node is counted once per ancestor
        let depth_sum: usize = (1..n)
            .map(|mut v| {
                let mut depth = 0;
                while v != 0 {
                    v = parents[v];
                    depth += 1;
                }
                depth
            })
            .sum();
        prop_assert_eq!(d.iter().sum::<usize>(), depth_sum);
    }
}
