use serde::Serialize;

use super::TrainError;
use crate::corpus::{TokenId, PAD};
use crate::model::{dot, log_sum_exp, ForwardTrace};

/// Guard added to the norm product in [`cosine_similarity`].
pub const COSINE_EPS: f64 = 1e-8;

/// Per-step loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBreakdown {
    /// Mean negative log-likelihood per target token, in nats.
    pub l_gen: f64,
    pub l_comp: f64,
    pub lambda: f64,
    /// `l_gen + lambda * l_comp`.
    pub l_stage: f64,
    pub token_count: usize,
}

fn check_rows(trace: &ForwardTrace, targets: &[TokenId]) -> Result<(), TrainError> {
    if trace.logits.len() != targets.len() {
        return Err(TrainError::LengthMismatch {
            logits: trace.logits.len(),
            targets: targets.len(),
        });
    }
    Ok(())
}

/// Mean cross-entropy of `targets` under the trace's logit rows, skipping PAD.
pub fn generation_loss(trace: &ForwardTrace, targets: &[TokenId]) -> Result<f64, TrainError> {
    check_rows(trace, targets)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for (row, &t) in trace.logits.iter().zip(targets) {
        if t == PAD {
            continue;
        }
        total += log_sum_exp(row) - row[t as usize];
        count += 1;
    }
    Ok(if count == 0 {
        0.0
    } else {
        total / count as f64
    })
}

/// Gradient of [`generation_loss`] with respect to each logit row, plus the
/// counted token total.
pub(crate) fn generation_loss_grad(
    trace: &ForwardTrace,
    targets: &[TokenId],
) -> Result<(Vec<Vec<f64>>, usize), TrainError> {
    check_rows(trace, targets)?;
    let count = targets.iter().filter(|&&t| t != PAD).count();
    let norm = if count == 0 { 0.0 } else { 1.0 / count as f64 };
    let grads = trace
        .probs
        .iter()
        .zip(targets)
        .map(|(p, &t)| {
            if t == PAD {
                return vec![0.0; p.len()];
            }
            let mut g: Vec<f64> = p.iter().map(|&pi| pi * norm).collect();
            g[t as usize] -= norm;
            g
        })
        .collect();
    Ok((grads, count))
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<(), TrainError> {
    if a.len() != b.len() {
        return Err(TrainError::ShapeMismatch(format!(
            "vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// `a . b / (|a| |b| + 1e-8)`; zero when either vector is zero.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, TrainError> {
    check_dims(a, b)?;
    Ok(dot(a, b) / (norm(a) * norm(b) + COSINE_EPS))
}

/// Partial derivatives of [`cosine_similarity`] with respect to `a` and `b`.
/// Taken as zero where either norm vanishes.
pub(crate) fn cosine_grad(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return (vec![0.0; a.len()], vec![0.0; b.len()]);
    }
    let denom = na * nb + COSINE_EPS;
    let ab = dot(a, b);
    let k = ab / (denom * denom);
    let da = a
        .iter()
        .zip(b)
        .map(|(x, y)| y / denom - k * nb * x / na)
        .collect();
    let db = a
        .iter()
        .zip(b)
        .map(|(x, y)| x / denom - k * na * y / nb)
        .collect();
    (da, db)
}

/// `-sum_i log softmax(sims)_i`, i.e. `n * logsumexp(sims) - sum(sims)`.
pub fn comparative_loss_from_similarities(sims: &[f64]) -> Result<f64, TrainError> {
    comparative_loss_with_negatives(sims, &[])
}

/// Like [`comparative_loss_from_similarities`] with `negatives` joining the
/// normalizer only: `n * logsumexp(sims ++ negatives) - sum(sims)`.
pub fn comparative_loss_with_negatives(sims: &[f64], negatives: &[f64]) -> Result<f64, TrainError> {
    if sims.is_empty() {
        return Err(TrainError::EmptySet);
    }
    let lse = if negatives.is_empty() {
        log_sum_exp(sims)
    } else {
        let all: Vec<f64> = sims.iter().chain(negatives).copied().collect();
        log_sum_exp(&all)
    };
    Ok(sims.iter().map(|s| lse - s).sum())
}

/// Gradient of [`comparative_loss_from_similarities`]: `n * p_i - 1`.
#[cfg(test)]
pub(crate) fn comparative_sim_grad(sims: &[f64]) -> Vec<f64> {
    comparative_grad_with_negatives(sims, &[]).0
}

/// Gradients of [`comparative_loss_with_negatives`] for the positive and the
/// negative similarities.
pub(crate) fn comparative_grad_with_negatives(
    sims: &[f64],
    negatives: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = sims.len() as f64;
    let all: Vec<f64> = sims.iter().chain(negatives).copied().collect();
    let p = crate::model::softmax(&all);
    let ds = p[..sims.len()].iter().map(|p| n * p - 1.0).collect();
    let dn = p[sims.len()..].iter().map(|p| n * p).collect();
    (ds, dn)
}

/// Contrastive loss of insight encodings against the reference encoding,
/// using cosine similarity.
pub fn comparative_loss(insight_vecs: &[Vec<f64>], ref_vec: &[f64]) -> Result<f64, TrainError> {
    if insight_vecs.is_empty() {
        return Err(TrainError::EmptySet);
    }
    let sims = insight_vecs
        .iter()
        .map(|c| cosine_similarity(c, ref_vec))
        .collect::<Result<Vec<_>, _>>()?;
    comparative_loss_from_similarities(&sims)
}

/// Combines the stage terms as `l_gen + lambda * l_comp`.
pub fn stage_loss(l_gen: f64, l_comp: f64, lambda: f64, token_count: usize) -> LossBreakdown {
    let l_stage = if lambda == 0.0 {
        l_gen
    } else {
        l_gen + lambda * l_comp
    };
    LossBreakdown {
        l_gen,
        l_comp,
        lambda,
        l_stage,
        token_count,
    }
}

/// Aggregate over both stages: `l_pretrain + l_comparative`.
pub fn total_loss(l_pretrain: f64, l_comparative: f64) -> f64 {
    l_pretrain + l_comparative
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::softmax;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trace_with_logits(rows: Vec<Vec<f64>>) -> ForwardTrace {
        let vocab = rows[0].len();
        ForwardTrace {
            tokens: vec![0; rows.len()],
            segments: std::iter::once(0..rows.len()).collect(),
            steps: vec![],
            segment_memory: vec![None],
            memory_updates: vec![None],
            first_prediction: 0,
            probs: rows.iter().map(|r| softmax(r)).collect(),
            logits: rows,
            flags: Default::default(),
            d: 1,
            vocab,
        }
    }

    #[test]
    fn uniform_logits_cost_ln_v() {
        let t = trace_with_logits(vec![vec![0.0; 20]; 3]);
        let l = generation_loss(&t, &[7, 8, 9]).unwrap();
        assert!((l - 20f64.ln()).abs() < 1e-12);
        assert!((l - 2.9957).abs() < 1e-4);
    }

    #[test]
    fn saturated_target_costs_nothing() {
        let mut row = vec![0.0; 20];
        row[5] = 1000.0;
        let t = trace_with_logits(vec![row]);
        assert!(generation_loss(&t, &[5]).unwrap() < 1e-9);
    }

    #[test]
    fn hand_cross_entropy() {
        // Row 1 targets id 1, row 2 targets id 2; evaluated by hand.
        let t = trace_with_logits(vec![vec![1.0, 2.0, 0.5], vec![0.0, -1.0, 3.0]]);
        let l = generation_loss(&t, &[1, 2]).unwrap();
        assert!((l - 0.26512634393268697).abs() < 1e-14);
    }

    #[test]
    fn pad_positions_are_skipped() {
        let t = trace_with_logits(vec![vec![1.0, 2.0, 0.5], vec![0.0, -1.0, 3.0]]);
        let l = generation_loss(&t, &[PAD, 2]).unwrap();
        assert!((l - 0.06588390375742925).abs() < 1e-14);
        let (g, count) = generation_loss_grad(&t, &[PAD, 2]).unwrap();
        assert_eq!(count, 1);
        assert!(g[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn length_mismatch() {
        let t = trace_with_logits(vec![vec![0.0; 4]]);
        assert!(matches!(
            generation_loss(&t, &[1, 2]),
            Err(TrainError::LengthMismatch {
                logits: 1,
                targets: 2
            })
        ));
    }

    #[test]
    fn cosine_cases() {
        assert!((cosine_similarity(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-7);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[3.0, 1.0]).unwrap(), 0.0);
        assert!(cosine_similarity(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn cosine_grad_matches_central_differences() {
        let a = [0.3, -1.2, 0.8];
        let b = [1.1, 0.4, -0.5];
        let (da, db) = cosine_grad(&a, &b);
        let eps = 1e-6;
        for i in 0..3 {
            let (mut ap, mut am) = (a, a);
            ap[i] += eps;
            am[i] -= eps;
            let num = (cosine_similarity(&ap, &b).unwrap() - cosine_similarity(&am, &b).unwrap())
                / (2.0 * eps);
            assert!((num - da[i]).abs() < 1e-8);
            let (mut bp, mut bm) = (b, b);
            bp[i] += eps;
            bm[i] -= eps;
            let num = (cosine_similarity(&a, &bp).unwrap() - cosine_similarity(&a, &bm).unwrap())
                / (2.0 * eps);
            assert!((num - db[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn comparative_closed_forms() {
        assert_eq!(comparative_loss_from_similarities(&[0.37]).unwrap(), 0.0);
        let l = comparative_loss_from_similarities(&[0.2, 0.2, 0.2]).unwrap();
        assert!((l - 3.0 * 3f64.ln()).abs() < 1e-12);
        assert!((l - 3.29584).abs() < 1e-5);
        // -ln(e/(e+1)) - ln(1/(e+1)), evaluated by hand.
        let l = comparative_loss_from_similarities(&[1.0, 0.0]).unwrap();
        assert!((l - 1.6265233750364456).abs() < 1e-14);
        assert!((l - 1.62652).abs() < 1e-5);
        assert!(matches!(
            comparative_loss_from_similarities(&[]),
            Err(TrainError::EmptySet)
        ));
        assert!(matches!(
            comparative_loss(&[], &[1.0]),
            Err(TrainError::EmptySet)
        ));
    }

    #[test]
    fn comparative_from_vectors() {
        let r = vec![1.0, 0.0];
        let l = comparative_loss(&[vec![2.0, 0.0], vec![0.0, 5.0]], &r).unwrap();
        // cosines are (1 - tiny) and 0.
        assert!((l - 1.6265233750364456).abs() < 1e-7);
    }

    #[test]
    fn minimum_at_uniform_similarities() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let bound = 4.0 * 4f64.ln();
        for _ in 0..1000 {
            let sims: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            assert!(comparative_loss_from_similarities(&sims).unwrap() >= bound - 1e-9);
        }
        let uniform = comparative_loss_from_similarities(&[0.3; 4]).unwrap();
        assert!((uniform - bound).abs() < 1e-9);
    }

    #[test]
    fn sim_grad_matches_differences() {
        let sims = [0.4, -0.2, 0.9];
        let g = comparative_sim_grad(&sims);
        for i in 0..3 {
            let (mut p, mut m) = (sims, sims);
            p[i] += 1e-6;
            m[i] -= 1e-6;
            let num = (comparative_loss_from_similarities(&p).unwrap()
                - comparative_loss_from_similarities(&m).unwrap())
                / 2e-6;
            assert!((num - g[i]).abs() < 1e-8);
        }
        assert!(g.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn stage_and_total() {
        assert_eq!(stage_loss(2.0, 3.0, 1.0, 1).l_stage, 5.0);
        assert_eq!(stage_loss(0.5, 2.0, 0.25, 1).l_stage, 1.0);
        let l_gen = 0.1 + 0.2;
        assert_eq!(
            stage_loss(l_gen, 123.456, 0.0, 1).l_stage.to_bits(),
            l_gen.to_bits()
        );
        assert_eq!(
            stage_loss(l_gen, f64::INFINITY, 0.0, 1).l_stage.to_bits(),
            l_gen.to_bits()
        );
        assert_eq!(total_loss(1.2, 0.8), 2.0);
        assert_eq!(total_loss(0.0, 0.7), 0.7);
        assert_eq!(
            total_loss(0.5, 0.25) + total_loss(1.5, 0.75),
            total_loss(2.0, 1.0)
        );
    }

    proptest! {
        #[test]
        fn comparative_lower_bound(sims in prop::collection::vec(-1.0f64..1.0, 1..8)) {
            let n = sims.len() as f64;
            let l = comparative_loss_from_similarities(&sims).unwrap();
            prop_assert!(l >= n * n.ln() - 1e-9);
            prop_assert!(l >= 0.0);
        }

        #[test]
        fn stage_monotone_in_lambda(l_gen in 0.0f64..10.0, l_comp in 0.0f64..10.0, a in 0.0f64..5.0, b in 0.0f64..5.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(stage_loss(l_gen, l_comp, lo, 1).l_stage <= stage_loss(l_gen, l_comp, hi, 1).l_stage);
        }
    }
}
