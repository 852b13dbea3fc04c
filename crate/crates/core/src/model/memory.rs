use super::tensor::{dot, sigmoid, softmax};
use super::{ModelError, ModelParams};

/// The cross-chunk memory vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryState(pub Vec<f64>);

impl MemoryState {
    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Intermediate values of one memory update, kept for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryUpdate {
    pub prev: Vec<f64>,
    pub query: Vec<f64>,
    pub keys: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
    /// Attention distribution over the previous chunk's positions.
    pub weights: Vec<f64>,
    pub attended: Vec<f64>,
    pub gate: Vec<f64>,
    pub next: Vec<f64>,
}

pub(crate) fn memory_step(
    params: &ModelParams,
    prev: &[f64],
    hiddens: &[&[f64]],
) -> Result<MemoryUpdate, ModelError> {
    if hiddens.is_empty() {
        return Err(ModelError::EmptyChunk);
    }
    let d = params.d();
    let scale = (d as f64).sqrt();
    let query = params.w_q.matvec(prev);
    let keys: Vec<Vec<f64>> = hiddens.iter().map(|h| params.w_k.matvec(h)).collect();
    let values: Vec<Vec<f64>> = hiddens.iter().map(|h| params.w_v.matvec(h)).collect();
    let scores: Vec<f64> = keys.iter().map(|k| dot(&query, k) / scale).collect();
    let weights = softmax(&scores);

    let mut attended = vec![0.0; d];
    for (w, v) in weights.iter().zip(&values) {
        for (a, vi) in attended.iter_mut().zip(v) {
            *a += w * vi;
        }
    }

    let mut joined = prev.to_vec();
    joined.extend_from_slice(&attended);
    let mut gate = params.b_g.data().to_vec();
    params.w_g.matvec_add(&joined, &mut gate);
    for g in &mut gate {
        *g = sigmoid(*g);
    }
    let next = prev
        .iter()
        .zip(&attended)
        .zip(&gate)
        .map(|((m, a), g)| (1.0 - g) * m + g * a)
        .collect();
    Ok(MemoryUpdate {
        prev: prev.to_vec(),
        query,
        keys,
        values,
        weights,
        attended,
        gate,
        next,
    })
}

/// Refreshes the memory from the hidden states of the chunk just completed.
///
/// A single query `W_q mem` attends over keys `W_k h_j` with scaled dot
/// products; the attended value `sum_j alpha_j W_v h_j` is blended into the
/// old memory through the gate `sigmoid(W_g [mem; attended] + b_g)`.
pub fn memory_update(
    params: &ModelParams,
    mem_prev: &MemoryState,
    prev_chunk_hiddens: &[Vec<f64>],
) -> Result<MemoryState, ModelError> {
    let d = params.d();
    if mem_prev.0.len() != d || prev_chunk_hiddens.iter().any(|h| h.len() != d) {
        return Err(ModelError::DimensionMismatch(format!(
            "memory update expects vectors of length {d}"
        )));
    }
    let hs: Vec<&[f64]> = prev_chunk_hiddens.iter().map(Vec::as_slice).collect();
    Ok(MemoryState(memory_step(params, &mem_prev.0, &hs)?.next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Tensor;
    use proptest::prelude::*;

    fn d2_params() -> ModelParams {
        let mut p = ModelParams::zeros(2, 7);
        p.w_q = Tensor::from_rows(&[&[0.5, 0.1], &[-0.2, 0.8]]);
        p.w_k = Tensor::from_rows(&[&[1.0, -0.5], &[0.3, 0.4]]);
        p.w_v = Tensor::from_rows(&[&[0.2, 0.7], &[-0.6, 0.1]]);
        p.w_g = Tensor::from_rows(&[&[0.1, -0.2, 0.3, 0.05], &[-0.1, 0.4, 0.2, -0.3]]);
        p.b_g = Tensor::from_vec(2, 1, vec![0.0, 0.2]);
        p
    }

    #[test]
    fn matches_hand_attention_d2() {
        let p = d2_params();
        let hs: [&[f64]; 2] = [&[0.5, 0.9], &[-0.3, 0.6]];
        let up = memory_step(&p, &[0.4, -0.2], &hs).unwrap();
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-14);
        assert!(close(
            &up.weights,
            &[0.5054091558395087, 0.49459084416049126]
        ));
        assert!(close(
            &up.attended,
            &[0.5470013876606182, 0.012565879872221075]
        ));
        assert!(close(&up.gate, &[0.5608786344577121, 0.5462748238369534]));
        assert!(close(
            &up.next,
            &[0.48244993757447635, -0.08388061141905545]
        ));
    }

    #[test]
    fn identical_states_attend_to_their_value() {
        let p = ModelParams::init(3, 7, 5);
        let h = vec![0.3, -0.1, 0.7];
        let hs: Vec<&[f64]> = vec![&h; 4];
        let up = memory_step(&p, &[0.2, 0.2, -0.5], &hs).unwrap();
        let expected = p.w_v.matvec(&h);
        for (a, e) in up.attended.iter().zip(&expected) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn singleton_weight_is_one() {
        let p = ModelParams::init(3, 7, 6);
        let up = memory_step(&p, &[0.1, 0.0, 0.4], &[&[1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(up.weights, vec![1.0]);
    }

    #[test]
    fn empty_chunk_rejected() {
        let p = ModelParams::zeros(2, 7);
        assert!(matches!(
            memory_update(&p, &MemoryState::zeros(2), &[]),
            Err(ModelError::EmptyChunk)
        ));
    }

    proptest! {
        #[test]
        fn weights_sum_to_one_and_gate_blends(
            seed in 0u64..500,
            prev in prop::collection::vec(-3.0f64..3.0, 4),
            hs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 1..10),
        ) {
            let mut p = ModelParams::init(4, 7, seed);
            for (_, t) in p.tensors_mut() { t.scale(10.0); }
            let refs: Vec<&[f64]> = hs.iter().map(Vec::as_slice).collect();
            let up = memory_step(&p, &prev, &refs).unwrap();
            prop_assert!((up.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(up.weights.iter().all(|&w| w >= 0.0));
            for ((n, m), a) in up.next.iter().zip(&up.prev).zip(&up.attended) {
                let (lo, hi) = (m.min(*a), m.max(*a));
                prop_assert!(*n >= lo - 1e-12 && *n <= hi + 1e-12);
            }
        }
    }
}
