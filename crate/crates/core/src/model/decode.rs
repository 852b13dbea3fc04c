use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::forward::{check_tokens, output_logits, run_segments};
use super::{cell_step, memory_step, AblationFlags, ModelError, ModelParams};
use crate::corpus::{Chunk, TokenId, BOS, EOS, PAD};

/// Recurrent state after the context, ready to emit summary tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeState {
    pub h: Vec<f64>,
    /// Memory used for the summary segment; `None` when memory is off.
    pub memory: Option<Vec<f64>>,
    pub logits: Vec<f64>,
}

impl DecodeState {
    /// Runs the context and refreshes the memory from its last chunk, matching
    /// what [`super::forward`] feeds the teacher-forced summary.
    pub fn after_context(
        params: &ModelParams,
        context: &[Chunk],
        flags: AblationFlags,
    ) -> Result<Self, ModelError> {
        if context.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let tokens: Vec<TokenId> = context
            .iter()
            .flat_map(|c| c.tokens.iter().copied())
            .collect();
        let mut segments = Vec::with_capacity(context.len());
        let mut start = 0;
        for c in context {
            if c.tokens.is_empty() {
                return Err(ModelError::InvalidChunks(format!(
                    "chunk {} is empty",
                    c.index
                )));
            }
            segments.push(start..start + c.tokens.len());
            start += c.tokens.len();
        }
        let trace = run_segments(params, &tokens, segments, 0, 0, flags)?;
        let last = trace.segments.len() - 1;
        let h = trace.steps.last().expect("non-empty context").h.clone();
        let memory = if flags.disable_memory {
            None
        } else {
            let prev = trace.segment_memory[last]
                .clone()
                .unwrap_or_else(|| vec![0.0; params.d()]);
            let hiddens: Vec<&[f64]> = trace.steps[trace.segments[last].clone()]
                .iter()
                .map(|s| s.h.as_slice())
                .collect();
            Some(memory_step(params, &prev, &hiddens)?.next)
        };
        let logits = output_logits(params, &h);
        Ok(Self { h, memory, logits })
    }

    /// Feeds `token` and recomputes the next-token logits.
    pub fn advance(&mut self, params: &ModelParams, token: TokenId) -> Result<(), ModelError> {
        check_tokens(params, &[token])?;
        let mut x = params.embedding.row(token as usize).to_vec();
        if let Some(m) = &self.memory {
            for (xi, mi) in x.iter_mut().zip(m) {
                *xi += mi;
            }
        }
        self.h = cell_step(params, &self.h, x).h;
        self.logits = output_logits(params, &self.h);
        Ok(())
    }
}

fn emittable(id: usize) -> bool {
    id != PAD as usize && id != BOS as usize
}

/// Highest logit among emittable tokens, ties to the lowest id.
fn argmax(logits: &[f64]) -> TokenId {
    let mut best = None::<(usize, f64)>;
    for (i, &l) in logits.iter().enumerate().filter(|(i, _)| emittable(*i)) {
        if best.is_none_or(|(_, b)| l > b) {
            best = Some((i, l));
        }
    }
    best.map_or(EOS, |(i, _)| i as TokenId)
}

fn sample(logits: &[f64], temperature: f64, rng: &mut ChaCha8Rng) -> TokenId {
    let scaled: Vec<(usize, f64)> = logits
        .iter()
        .enumerate()
        .filter(|(i, _)| emittable(*i))
        .map(|(i, &l)| (i, l / temperature))
        .collect();
    let max = scaled
        .iter()
        .map(|&(_, l)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scaled.iter().map(|&(_, l)| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (&(i, _), w) in scaled.iter().zip(&weights) {
        if u < *w {
            return i as TokenId;
        }
        u -= w;
    }
    // Rounding left u past the last bucket.
    scaled
        .iter()
        .zip(&weights)
        .rev()
        .find(|(_, &w)| w > 0.0)
        .map_or(EOS, |(&(i, _), _)| i as TokenId)
}

fn decode_with(
    params: &ModelParams,
    context: &[Chunk],
    max_len: usize,
    flags: AblationFlags,
    mut choose: impl FnMut(&[f64]) -> TokenId,
) -> Result<Vec<TokenId>, ModelError> {
    let mut state = DecodeState::after_context(params, context, flags)?;
    let mut out = Vec::new();
    while out.len() < max_len {
        let next = choose(&state.logits);
        if next == EOS {
            break;
        }
        out.push(next);
        if out.len() < max_len {
            state.advance(params, next)?;
        }
    }
    Ok(out)
}

/// Emits the argmax token until EOS (excluded) or `max_len` tokens.
/// PAD and BOS are never emitted.
pub fn greedy_decode(
    params: &ModelParams,
    context: &[Chunk],
    max_len: usize,
    flags: AblationFlags,
) -> Result<Vec<TokenId>, ModelError> {
    decode_with(params, context, max_len, flags, argmax)
}

/// Samples from `softmax(logits / temperature)` with a seeded generator.
pub fn sample_decode(
    params: &ModelParams,
    context: &[Chunk],
    max_len: usize,
    temperature: f64,
    seed: u64,
    flags: AblationFlags,
) -> Result<Vec<TokenId>, ModelError> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(ModelError::InvalidTarget(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    decode_with(params, context, max_len, flags, |l| {
        sample(l, temperature, &mut rng)
    })
}
