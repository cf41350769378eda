//! Descendant counts in uniform recursive trees, exact and sampled.
//!
//! Node 1 is the root; node `i > 1` attaches to a parent drawn uniformly
//! from `1..i`. For node `k >= 2` of an `N`-node tree,
//!
//! ```text
//! P(D_N(k) = j) = (k-1) (N-k-j+1)^(j) / ((N-j-1) (N-j)^(j)),   0 <= j <= N-k
//! ```
//!
//! where `x^(j)` is the rising factorial `x (x+1) ... (x+j-1)`. The
//! denominator's rising factorial `(N-j)^(j)` equals the falling factorial
//! `(N-1)(N-2)...(N-j)`.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;

use crate::error::ConfigError;
use crate::kernel::global_rng;

/// `n (n+1) ... (n+j-1)`, and 1 for `j = 0`.
pub fn rising_factorial(n: u64, j: u64) -> BigUint {
    (0..j).fold(BigUint::one(), |acc, i| acc * BigUint::from(n + i))
}

fn check_domain(n: u64, k: u64) -> Result<(), ConfigError> {
    if n < 2 || k < 2 || k > n {
        return Err(ConfigError::Invalid(format!(
            "descendant law needs 2 <= k <= N (got N={n}, k={k})"
        )));
    }
    Ok(())
}

/// Exact law of the descendant count of node `k`, indexed by `j`.
/// Entries beyond `N-k` are zero; the vector has length `N`.
pub fn descendants_pmf_exact(n: u64, k: u64) -> Result<Vec<BigRational>, ConfigError> {
    check_domain(n, k)?;
    let mut out = vec![BigRational::zero(); n as usize];
    for j in 0..=(n - k) {
        let num = BigUint::from(k - 1) * rising_factorial(n - k - j + 1, j);
        let den = BigUint::from(n - j - 1) * rising_factorial(n - j, j);
        out[j as usize] = BigRational::new(num.into(), den.into());
    }
    Ok(out)
}

/// Floating-point version of [`descendants_pmf_exact`], built from the
/// ratio recurrence so nothing overflows.
pub fn descendants_pmf(n: u64, k: u64) -> Result<Vec<f64>, ConfigError> {
    check_domain(n, k)?;
    let mut out = vec![0.0; n as usize];
    // ratio of the two rising factorials, updated per j
    let mut ratio = 1.0f64;
    for j in 0..=(n - k) {
        if j > 0 {
            ratio *= (n - k - j + 1) as f64 / (n - j) as f64;
        }
        out[j as usize] = (k - 1) as f64 / (n - j - 1) as f64 * ratio;
    }
    Ok(out)
}

/// Descendant count of a uniformly chosen node. With `include_root` the
/// root (always `N-1` descendants) takes part with weight `1/N`; without
/// it the mixture is over nodes `2..=N`.
pub fn subtree_size_distribution(n: u64, include_root: bool) -> Result<Vec<f64>, ConfigError> {
    if n < 2 {
        return Err(ConfigError::Invalid("subtree distribution needs N >= 2".into()));
    }
    let mut out = vec![0.0; n as usize];
    for k in 2..=n {
        for (o, p) in out.iter_mut().zip(descendants_pmf(n, k)?) {
            *o += p;
        }
    }
    let weight = if include_root {
        out[(n - 1) as usize] += 1.0;
        n as f64
    } else {
        (n - 1) as f64
    };
    out.iter_mut().for_each(|p| *p /= weight);
    Ok(out)
}

/// Exact counterpart of [`subtree_size_distribution`].
pub fn subtree_size_distribution_exact(n: u64, include_root: bool) -> Result<Vec<BigRational>, ConfigError> {
    if n < 2 {
        return Err(ConfigError::Invalid("subtree distribution needs N >= 2".into()));
    }
    let mut out = vec![BigRational::zero(); n as usize];
    for k in 2..=n {
        for (o, p) in out.iter_mut().zip(descendants_pmf_exact(n, k)?) {
            *o += p;
        }
    }
    let weight = if include_root {
        out[(n - 1) as usize] += BigRational::one();
        n
    } else {
        n - 1
    };
    let w = BigRational::from_integer(weight.into());
    Ok(out.into_iter().map(|p| p / &w).collect())
}

/// Parent of each node, 0-based: `parents[0]` is the root (its own parent),
/// `parents[i]` is uniform over `0..i`.
pub fn sample_urt<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut parents = vec![0; n];
    for (i, p) in parents.iter_mut().enumerate().skip(1) {
        *p = rng.gen_range(0..i);
    }
    parents
}

/// Descendant count of every node of a tree given as a parent array in
/// which parents precede children.
pub fn descendant_counts(parents: &[usize]) -> Vec<usize> {
    let mut d = vec![0; parents.len()];
    for i in (1..parents.len()).rev() {
        d[parents[i]] += d[i] + 1;
    }
    d
}

/// Empirical descendant-count law. Every iteration grows one tree and
/// counts every node in it (the root only with `include_root`), which
/// estimates the law of a uniformly chosen node.
pub fn monte_carlo_distribution(n: usize, iterations: u64, seed: u64, include_root: bool) -> Vec<f64> {
    let mut rng = global_rng(seed);
    let mut hist = vec![0u64; n.max(1)];
    let first = usize::from(!include_root);
    for _ in 0..iterations {
        let parents = sample_urt(n, &mut rng);
        for &d in &descendant_counts(&parents)[first..] {
            hist[d] += 1;
        }
    }
    let total: u64 = hist.iter().sum();
    hist.into_iter()
        .map(|c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
        .collect()
}

/// `sum_{j > t} pmf[j]`.
pub fn tail_probability(pmf: &[f64], threshold: usize) -> f64 {
    pmf.iter().skip(threshold + 1).sum()
}

/// Exact tail.
pub fn tail_probability_exact(pmf: &[BigRational], threshold: usize) -> BigRational {
    pmf.iter().skip(threshold + 1).fold(BigRational::zero(), |a, p| a + p)
}

/// Half the L1 distance; the shorter vector is padded with zeros.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    0.5 * (0..n)
        .map(|i| (p.get(i).copied().unwrap_or(0.0) - q.get(i).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

pub fn to_f64(p: &[BigRational]) -> Vec<f64> {
    p.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect()
}

/// Rows `j, analytic_p, empirical_p` for the CLI. With `node_inclusive`
/// the first column is the subtree size `j + 1`.
pub fn distribution_csv(analytic: &[f64], empirical: &[f64], node_inclusive: bool) -> String {
    let mut out = String::from(if node_inclusive {
        "size,analytic_p,empirical_p\n"
    } else {
        "j,analytic_p,empirical_p\n"
    });
    for (j, (a, e)) in analytic.iter().zip(empirical).enumerate() {
        let label = if node_inclusive { j + 1 } else { j };
        out.push_str(&format!("{label},{a:.12e},{e:.12e}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn q(a: i64, b: i64) -> BigRational {
        BigRational::new(BigInt::from(a), BigInt::from(b))
    }

    /// Enumerates every attachment history and counts descendants.
    fn brute_force(n: usize) -> Vec<Vec<BigRational>> {
        let mut counts = vec![vec![0u64; n]; n];
        let mut total = 0u64;
        let mut parents = vec![0usize; n];
        fn rec(i: usize, parents: &mut Vec<usize>, counts: &mut Vec<Vec<u64>>, total: &mut u64) {
            if i == parents.len() {
                *total += 1;
                let mut d = vec![0usize; parents.len()];
                for v in (1..parents.len()).rev() {
                    d[parents[v]] += d[v] + 1;
                }
                for (node, &c) in d.iter().enumerate() {
                    counts[node][c] += 1;
                }
                return;
            }
            for p in 0..i {
                parents[i] = p;
                rec(i + 1, parents, counts, total);
            }
        }
        rec(1, &mut parents, &mut counts, &mut total);
        counts
            .into_iter()
            .map(|row| row.into_iter().map(|c| q(c as i64, total as i64)).collect())
            .collect()
    }

    #[test]
    fn rising_factorial_examples() {
        assert_eq!(rising_factorial(5, 0), BigUint::from(1u32));
        assert_eq!(rising_factorial(2, 3), BigUint::from(24u32));
        let five_fact: u64 = (1..=5).product();
        assert_eq!(rising_factorial(1, 5), BigUint::from(five_fact));
    }

    #[test]
    fn small_cases() {
        assert_eq!(descendants_pmf_exact(2, 2).unwrap(), vec![q(1, 1), q(0, 1)]);
        assert_eq!(descendants_pmf_exact(3, 2).unwrap(), vec![q(1, 2), q(1, 2), q(0, 1)]);
        assert!(descendants_pmf_exact(5, 1).is_err());
        assert!(descendants_pmf(5, 6).is_err());
    }

    #[test]
    fn exact_law_matches_enumeration() {
        for n in 2..=7usize {
            let bf = brute_force(n);
            for k in 2..=n {
                assert_eq!(
                    descendants_pmf_exact(n as u64, k as u64).unwrap(),
                    bf[k - 1],
                    "N={n} k={k}"
                );
            }
        }
    }

    #[test]
    fn float_law_tracks_exact() {
        for n in [5u64, 17, 40] {
            for k in 2..=n {
                let e = to_f64(&descendants_pmf_exact(n, k).unwrap());
                let f = descendants_pmf(n, k).unwrap();
                for (a, b) in e.iter().zip(&f) {
                    assert!((a - b).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn exact_sums_are_one() {
        for n in [2u64, 3, 9, 30, 64] {
            for k in 2..=n {
                let s = descendants_pmf_exact(n, k)
                    .unwrap()
                    .into_iter()
                    .fold(BigRational::zero(), |a, b| a + b);
                assert_eq!(s, BigRational::one(), "N={n} k={k}");
            }
        }
    }

    #[test]
    fn mixture_two_nodes() {
        let p = subtree_size_distribution_exact(2, true).unwrap();
        assert_eq!(p, vec![q(1, 2), q(1, 2)]);
        let p = subtree_size_distribution(2, false).unwrap();
        assert_eq!(p, vec![1.0, 0.0]);
    }

    #[test]
    fn mixture_matches_enumeration_with_root() {
        let n = 6;
        let bf = brute_force(n);
        let got = subtree_size_distribution_exact(n as u64, true).unwrap();
        for j in 0..n {
            let want = bf.iter().fold(BigRational::zero(), |a, row| a + &row[j]) / q(n as i64, 1);
            assert_eq!(got[j], want);
        }
    }

    #[test]
    fn mixture_decays_after_zero() {
        for n in [20u64, 100] {
            let p = subtree_size_distribution(n, true).unwrap();
            for j in 1..(n as usize - 2) {
                assert!(p[j + 1] <= p[j] + 1e-15, "N={n} j={j}");
            }
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sampled_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_urt(2, &mut rng), vec![0, 0]);
        for _ in 0..50 {
            let p = sample_urt(30, &mut rng);
            assert!(p.iter().enumerate().skip(1).all(|(i, &x)| x < i));
            assert_eq!(descendant_counts(&p)[0], 29);
        }
    }

    #[test]
    fn monte_carlo_converges() {
        let exact = subtree_size_distribution(60, true).unwrap();
        let coarse = total_variation(&monte_carlo_distribution(60, 1_000, 9, true), &exact);
        let fine = total_variation(&monte_carlo_distribution(60, 100_000, 9, true), &exact);
        assert!(fine < coarse, "{fine} vs {coarse}");
        assert!(fine < 0.01);
    }

    #[test]
    fn tails() {
        assert_eq!(tail_probability(&[0.5, 0.5], 0), 0.5);
        let p = subtree_size_distribution(30, true).unwrap();
        assert_eq!(tail_probability(&p, 29), 0.0);
    }

    #[test]
    fn csv_rows() {
        let s = distribution_csv(&[0.5, 0.5], &[0.25, 0.75], false);
        assert!(s.starts_with("j,analytic_p,empirical_p\n0,"));
        let s = distribution_csv(&[0.5, 0.5], &[0.25, 0.75], true);
        assert!(s.lines().nth(1).unwrap().starts_with("1,"));
    }
}
