use std::collections::HashMap;
use std::hash::Hash;

use serde::Serialize;

/// Precision, recall and F1.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_counts(overlap: usize, candidate: usize, reference: usize) -> Self {
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let precision = ratio(overlap, candidate);
        let recall = ratio(overlap, reference);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct RougeScores {
    pub rouge1: Prf,
    pub rouge2: Prf,
    pub rouge_l: Prf,
}

impl RougeScores {
    pub fn compute<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> Self {
        Self {
            rouge1: rouge_n(candidate, reference, 1),
            rouge2: rouge_n(candidate, reference, 2),
            rouge_l: rouge_l(candidate, reference),
        }
    }
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram overlap.
///
/// # Panics
/// If `n` is zero.
pub fn rouge_n<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> Prf {
    assert!(n >= 1, "n-gram order must be positive");
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let overlap = cand
        .iter()
        .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
        .sum();
    Prf::from_counts(
        overlap,
        candidate.len().saturating_sub(n - 1),
        reference.len().saturating_sub(n - 1),
    )
}

/// Longest common subsequence length.
pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

pub fn rouge_l<T: Eq>(candidate: &[T], reference: &[T]) -> Prf {
    Prf::from_counts(
        lcs_len(candidate, reference),
        candidate.len(),
        reference.len(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identity_and_disjoint() {
        let a = toks("the cat sat on the mat");
        for n in [1, 2] {
            let s = rouge_n(&a, &a, n);
            assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        }
        let s = rouge_n(&toks("a b"), &toks("c d"), 1);
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        assert_eq!(rouge_l(&a, &a).f1, 1.0);
    }

    #[test]
    fn hand_unigram_counts() {
        let s = rouge_n(&toks("the cat sat"), &toks("the cat sat on the mat"), 1);
        assert_eq!(s.precision, 1.0);
        assert_eq!(s.recall, 0.5);
        assert_eq!(s.f1, 2.0 / 3.0);
    }

    #[test]
    fn counts_are_clipped() {
        let s = rouge_n(&toks("the the the"), &toks("the cat"), 1);
        assert_eq!(s.precision, 1.0 / 3.0);
        assert_eq!(s.recall, 0.5);
    }

    #[test]
    fn hand_lcs() {
        let s = rouge_l(&toks("a b c d"), &toks("a c b d"));
        assert_eq!(lcs_len(&toks("a b c d"), &toks("a c b d")), 3);
        assert_eq!((s.precision, s.recall, s.f1), (0.75, 0.75, 0.75));
    }

    #[test]
    fn empty_side_scores_zero() {
        let empty: Vec<&str> = vec![];
        let a = toks("a b");
        for s in [
            rouge_l(&empty, &a),
            rouge_l(&a, &empty),
            rouge_n(&empty, &a, 1),
            rouge_n(&a, &toks("a"), 2),
        ] {
            assert_eq!(s.f1, 0.0);
        }
    }

    fn is_subsequence(small: &[u8], big: &[u8]) -> bool {
        let mut it = big.iter();
        small.iter().all(|x| it.any(|y| y == x))
    }

    fn brute_lcs(a: &[u8], b: &[u8]) -> usize {
        (0u32..1 << a.len())
            .map(|mask| {
                (0..a.len())
                    .filter(|i| mask >> i & 1 == 1)
                    .map(|i| a[i])
                    .collect::<Vec<_>>()
            })
            .filter(|s| is_subsequence(s, b))
            .map(|s| s.len())
            .max()
            .unwrap_or(0)
    }

    #[test]
    fn lcs_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let mut draw = || -> Vec<u8> {
                let n = rng.gen_range(0..=8);
                (0..n).map(|_| rng.gen_range(0..4)).collect()
            };
            let (a, b) = (draw(), draw());
            assert_eq!(lcs_len(&a, &b), brute_lcs(&a, &b), "{a:?} {b:?}");
        }
    }

    proptest! {
        #[test]
        fn swap_exchanges_precision_and_recall(
            a in prop::collection::vec(0u8..5, 0..12),
            b in prop::collection::vec(0u8..5, 0..12),
        ) {
            for (x, y) in [
                (rouge_n(&a, &b, 1), rouge_n(&b, &a, 1)),
                (rouge_n(&a, &b, 2), rouge_n(&b, &a, 2)),
                (rouge_l(&a, &b), rouge_l(&b, &a)),
            ] {
                prop_assert_eq!(x.precision, y.recall);
                prop_assert_eq!(x.recall, y.precision);
                prop_assert_eq!(x.f1, y.f1);
            }
        }

        #[test]
        fn lcs_covers_longest_common_run(
            a in prop::collection::vec(0u8..3, 0..10),
            b in prop::collection::vec(0u8..3, 0..10),
        ) {
            let mut run = 0;
            for i in 0..a.len() {
                for j in 0..b.len() {
                    let k = a[i..].iter().zip(&b[j..]).take_while(|(x, y)| x == y).count();
                    run = run.max(k);
                }
            }
            prop_assert!(lcs_len(&a, &b) >= run);
        }
    }

    #[test]
    fn fuzzed_scores_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let mut draw = || -> Vec<u8> {
                let n = rng.gen_range(0..20);
                (0..n).map(|_| rng.gen_range(0..6)).collect()
            };
            let (a, b) = (draw(), draw());
            let s = RougeScores::compute(&a, &b);
            for p in [s.rouge1, s.rouge2, s.rouge_l] {
                for v in [p.precision, p.recall, p.f1] {
                    assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }
}
