//! Reverse-mode differentiation through the recurrent cell, the chunk memory
//! and both loss terms.

use super::loss::{
    comparative_grad_with_negatives, comparative_loss_with_negatives, cosine_grad,
    cosine_similarity, generation_loss, generation_loss_grad, stage_loss, LossBreakdown,
};
use super::TrainError;
use crate::corpus::{
    assemble_context, chunk, Chunk, ContextOptions, PaperSet, TokenId, Vocabulary,
};
use crate::model::{
    encode_traced, forward, forward_stream, AblationFlags, CellStep, ForwardTrace, MemoryUpdate,
    ModelParams, Tensor,
};

/// One tensor per parameter tensor, same shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub ModelParams);

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self(ModelParams::zeros(params.d(), params.vocab_size()))
    }

    pub fn global_norm(&self) -> f64 {
        self.0
            .tensors()
            .iter()
            .map(|(_, t)| t.sum_sq())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.0.tensors_mut() {
            t.scale(factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.tensors().iter().all(|(_, t)| t.is_finite())
    }

    /// Rescales to `max_norm` when the global L2 norm exceeds it; returns
    /// whether clipping happened.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> bool {
        let n = self.global_norm();
        if n > max_norm {
            self.scale(max_norm / n);
            true
        } else {
            false
        }
    }

    pub fn max_abs_diff(&self, other: &Gradients) -> f64 {
        self.0
            .tensors()
            .iter()
            .zip(other.0.tensors().iter())
            .flat_map(|((_, a), (_, b))| a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn axpy(dst: &mut [f64], alpha: f64, x: &[f64]) {
    for (d, v) in dst.iter_mut().zip(x) {
        *d += alpha * v;
    }
}

fn add_bias(bias: &mut Tensor, g: &[f64]) {
    add_into(bias.data_mut(), g);
}

/// Backpropagates `dh` through one cell step; accumulates into `dx` and
/// `dh_prev`.
fn cell_backward(
    params: &ModelParams,
    step: &CellStep,
    dh: &[f64],
    grads: &mut ModelParams,
    dx: &mut [f64],
    dh_prev: &mut [f64],
) {
    let d = dh.len();
    let mut dpz = vec![0.0; d];
    let mut dpc = vec![0.0; d];
    for i in 0..d {
        let (z, c, hp) = (step.z[i], step.candidate[i], step.h_prev[i]);
        dh_prev[i] += dh[i] * (1.0 - z);
        dpz[i] = dh[i] * (c - hp) * z * (1.0 - z);
        dpc[i] = dh[i] * z * (1.0 - c * c);
    }

    let gated: Vec<f64> = step
        .r
        .iter()
        .zip(&step.h_prev)
        .map(|(r, h)| r * h)
        .collect();
    grads.w_h.add_outer(&dpc, &step.x);
    grads.u_h.add_outer(&dpc, &gated);
    add_bias(&mut grads.b_h, &dpc);
    params.w_h.matvec_t_add(&dpc, dx);
    let mut dgated = vec![0.0; d];
    params.u_h.matvec_t_add(&dpc, &mut dgated);

    let mut dpr = vec![0.0; d];
    for i in 0..d {
        let r = step.r[i];
        dh_prev[i] += dgated[i] * r;
        dpr[i] = dgated[i] * step.h_prev[i] * r * (1.0 - r);
    }

    grads.w_z.add_outer(&dpz, &step.x);
    grads.u_z.add_outer(&dpz, &step.h_prev);
    add_bias(&mut grads.b_z, &dpz);
    params.w_z.matvec_t_add(&dpz, dx);
    params.u_z.matvec_t_add(&dpz, dh_prev);

    grads.w_r.add_outer(&dpr, &step.x);
    grads.u_r.add_outer(&dpr, &step.h_prev);
    add_bias(&mut grads.b_r, &dpr);
    params.w_r.matvec_t_add(&dpr, dx);
    params.u_r.matvec_t_add(&dpr, dh_prev);
}

/// Backpropagates `dnext` through one memory update; accumulates into
/// `dprev` and the per-position `dhiddens`.
fn memory_backward(
    params: &ModelParams,
    up: &MemoryUpdate,
    hiddens: &[&[f64]],
    dnext: &[f64],
    grads: &mut ModelParams,
    dprev: &mut [f64],
    dhiddens: &mut [Vec<f64>],
) {
    let d = dnext.len();
    let mut dpg = vec![0.0; d];
    let mut da = vec![0.0; d];
    for i in 0..d {
        let g = up.gate[i];
        dprev[i] += dnext[i] * (1.0 - g);
        da[i] += dnext[i] * g;
        dpg[i] = dnext[i] * (up.attended[i] - up.prev[i]) * g * (1.0 - g);
    }
    let mut joined = up.prev.clone();
    joined.extend_from_slice(&up.attended);
    grads.w_g.add_outer(&dpg, &joined);
    add_bias(&mut grads.b_g, &dpg);
    let mut djoined = vec![0.0; 2 * d];
    params.w_g.matvec_t_add(&dpg, &mut djoined);
    add_into(dprev, &djoined[..d]);
    add_into(&mut da, &djoined[d..]);

    let scale = (d as f64).sqrt();
    let dweights: Vec<f64> = up
        .values
        .iter()
        .map(|v| crate::model::dot(&da, v))
        .collect();
    let mean: f64 = up.weights.iter().zip(&dweights).map(|(a, g)| a * g).sum();
    let mut dq = vec![0.0; d];
    for (j, h) in hiddens.iter().enumerate() {
        let alpha = up.weights[j];
        let dv: Vec<f64> = da.iter().map(|g| alpha * g).collect();
        grads.w_v.add_outer(&dv, h);
        params.w_v.matvec_t_add(&dv, &mut dhiddens[j]);

        let ds = alpha * (dweights[j] - mean) / scale;
        for (q, k) in dq.iter_mut().zip(&up.keys[j]) {
            *q += ds * k;
        }
        let dk: Vec<f64> = up.query.iter().map(|q| ds * q).collect();
        grads.w_k.add_outer(&dk, h);
        params.w_k.matvec_t_add(&dk, &mut dhiddens[j]);
    }
    grads.w_q.add_outer(&dq, &up.prev);
    params.w_q.matvec_t_add(&dq, dprev);
}

/// Full backpropagation through a trace, seeded by logit-row gradients and
/// optional direct gradients on each position's hidden state.
pub(crate) fn backprop_trace(
    params: &ModelParams,
    trace: &ForwardTrace,
    dlogits: &[Vec<f64>],
    dhidden: Option<&[Vec<f64>]>,
    grads: &mut ModelParams,
) -> Result<(), TrainError> {
    if trace.d != params.d() || trace.vocab != params.vocab_size() {
        return Err(TrainError::StaleTrace(format!(
            "trace built for d={} V={}, params have d={} V={}",
            trace.d,
            trace.vocab,
            params.d(),
            params.vocab_size()
        )));
    }
    let d = trace.d;
    let n = trace.len();
    let mut dh_extra = match dhidden {
        Some(seed) => seed.to_vec(),
        None => vec![vec![0.0; d]; n],
    };
    for (j, dl) in dlogits.iter().enumerate() {
        let t = trace.prediction_position(j);
        grads.w_o.add_outer(dl, &trace.steps[t].h);
        add_bias(&mut grads.b_o, dl);
        params.w_o.matvec_t_add(dl, &mut dh_extra[t]);
    }

    let mut dmem: Vec<Vec<f64>> = vec![vec![0.0; d]; trace.segments.len()];
    let mut dh_carry = vec![0.0; d];
    for i in (0..trace.segments.len()).rev() {
        let seg = trace.segments[i].clone();
        let has_memory = trace.segment_memory[i].is_some();
        for t in seg.rev() {
            let mut dh = std::mem::take(&mut dh_extra[t]);
            add_into(&mut dh, &dh_carry);
            let mut dx = vec![0.0; d];
            let mut dh_prev = vec![0.0; d];
            cell_backward(params, &trace.steps[t], &dh, grads, &mut dx, &mut dh_prev);
            add_into(grads.embedding.row_mut(trace.tokens[t] as usize), &dx);
            if has_memory {
                add_into(&mut dmem[i], &dx);
            }
            dh_carry = dh_prev;
        }
        if let Some(up) = &trace.memory_updates[i] {
            let prev_seg = trace.segments[i - 1].clone();
            let hiddens: Vec<&[f64]> = trace.steps[prev_seg.clone()]
                .iter()
                .map(|s| s.h.as_slice())
                .collect();
            let mut dprev = vec![0.0; d];
            let mut dhid = vec![vec![0.0; d]; hiddens.len()];
            let dnext = std::mem::take(&mut dmem[i]);
            memory_backward(params, up, &hiddens, &dnext, grads, &mut dprev, &mut dhid);
            // Segment 0 starts from a constant zero memory.
            if trace.segment_memory[i - 1].is_some() {
                add_into(&mut dmem[i - 1], &dprev);
            }
            for (t, g) in prev_seg.zip(dhid) {
                add_into(&mut dh_extra[t], &g);
            }
        }
    }
    Ok(())
}

/// Token-level inputs for one training step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub id: String,
    pub context: Vec<Chunk>,
    /// Reference summary, EOS-terminated; also the contrastive reference.
    pub target: Vec<TokenId>,
    /// Non-empty insight sequences.
    pub insights: Vec<Vec<TokenId>>,
}

impl TrainingExample {
    pub fn from_paper_set(
        set: &PaperSet,
        vocab: &Vocabulary,
        options: ContextOptions,
        l_chunk: usize,
    ) -> Result<Self, TrainError> {
        let context = assemble_context(set, vocab.id("."), options);
        Ok(Self {
            id: set.id.clone(),
            context: chunk(&context, l_chunk)?,
            target: set.ref_summary.clone(),
            insights: set.insights().map(<[TokenId]>::to_vec).collect(),
        })
    }

    /// Context followed by the summary, for next-token training.
    pub fn stream(&self) -> Vec<TokenId> {
        let mut s = crate::corpus::concat_chunks(&self.context);
        s.extend_from_slice(&self.target);
        s
    }
}

/// Encodings and similarities behind the contrastive term.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparativeTrace {
    pub insights: Vec<(Vec<f64>, ForwardTrace)>,
    pub reference: (Vec<f64>, ForwardTrace),
    pub similarities: Vec<f64>,
    /// Another example's reference, used only in the normalizer.
    pub negative: Option<(Vec<f64>, ForwardTrace)>,
    pub negative_similarities: Vec<f64>,
}

/// All forward state of one training step.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleTrace {
    pub generation: ForwardTrace,
    pub targets: Vec<TokenId>,
    pub comparative: Option<ComparativeTrace>,
}

/// Which scalar to differentiate: `scale * (g * l_gen + lambda * l_comp)`
/// with `g` 1 or 0 depending on `generation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub generation: bool,
    pub lambda: f64,
    pub scale: f64,
}

impl LossSpec {
    pub fn stage(lambda: f64) -> Self {
        Self {
            generation: true,
            lambda,
            scale: 1.0,
        }
    }
}

fn comparative_trace(
    params: &ModelParams,
    insights: &[Vec<TokenId>],
    reference: &[TokenId],
    negative: Option<&[TokenId]>,
) -> Result<Option<ComparativeTrace>, TrainError> {
    if insights.is_empty() {
        return Ok(None);
    }
    let reference = encode_traced(params, reference)?;
    let insights = insights
        .iter()
        .map(|i| encode_traced(params, i))
        .collect::<Result<Vec<_>, _>>()?;
    let similarities = insights
        .iter()
        .map(|(v, _)| cosine_similarity(v, &reference.0))
        .collect::<Result<Vec<_>, _>>()?;
    let negative = negative.map(|n| encode_traced(params, n)).transpose()?;
    let negative_similarities = match &negative {
        Some((nv, _)) => insights
            .iter()
            .map(|(v, _)| cosine_similarity(v, nv))
            .collect::<Result<Vec<_>, _>>()?,
        None => Vec::new(),
    };
    Ok(Some(ComparativeTrace {
        insights,
        reference,
        similarities,
        negative,
        negative_similarities,
    }))
}

/// Teacher-forced summary pass plus, when `with_comparative` and the example
/// has insights, the contrastive encodings.
pub fn trace_example(
    params: &ModelParams,
    example: &TrainingExample,
    flags: AblationFlags,
    with_comparative: bool,
) -> Result<ExampleTrace, TrainError> {
    trace_example_with_negative(params, example, flags, with_comparative, None)
}

/// [`trace_example`] with an extra reference sequence whose encoding serves as
/// a negative in the contrastive normalizer.
pub fn trace_example_with_negative(
    params: &ModelParams,
    example: &TrainingExample,
    flags: AblationFlags,
    with_comparative: bool,
    negative: Option<&[TokenId]>,
) -> Result<ExampleTrace, TrainError> {
    let generation = forward(params, &example.context, &example.target, flags)?;
    let comparative = if with_comparative {
        comparative_trace(params, &example.insights, &example.target, negative)?
    } else {
        None
    };
    Ok(ExampleTrace {
        generation,
        targets: example.target.clone(),
        comparative,
    })
}

/// Next-token pass over a whole stream.
pub fn trace_stream(
    params: &ModelParams,
    stream: &[TokenId],
    l_chunk: usize,
    flags: AblationFlags,
) -> Result<ExampleTrace, TrainError> {
    Ok(ExampleTrace {
        generation: forward_stream(params, stream, l_chunk, flags)?,
        targets: stream[1..].to_vec(),
        comparative: None,
    })
}

impl ExampleTrace {
    pub fn losses(&self, lambda: f64) -> Result<LossBreakdown, TrainError> {
        let l_gen = generation_loss(&self.generation, &self.targets)?;
        let l_comp = match &self.comparative {
            Some(c) => comparative_loss_with_negatives(&c.similarities, &c.negative_similarities)?,
            None => 0.0,
        };
        let count = self
            .targets
            .iter()
            .filter(|&&t| t != crate::corpus::PAD)
            .count();
        Ok(stage_loss(l_gen, l_comp, lambda, count))
    }

    /// Scalar selected by `spec`.
    pub fn objective(&self, spec: &LossSpec) -> Result<f64, TrainError> {
        let b = self.losses(spec.lambda)?;
        let gen = if spec.generation { b.l_gen } else { 0.0 };
        let comp = if spec.lambda == 0.0 {
            0.0
        } else {
            spec.lambda * b.l_comp
        };
        Ok(spec.scale * (gen + comp))
    }
}

/// Exact gradients of the scalar selected by `spec`.
///
/// A zero `lambda` skips the contrastive term entirely, so its contribution is
/// exactly zero rather than zero-scaled.
pub fn backward(
    trace: &ExampleTrace,
    params: &ModelParams,
    spec: &LossSpec,
) -> Result<Gradients, TrainError> {
    let mut grads = Gradients::zeros_like(params);
    if spec.generation {
        let (mut dlogits, _) = generation_loss_grad(&trace.generation, &trace.targets)?;
        if spec.scale != 1.0 {
            for row in &mut dlogits {
                for v in row {
                    *v *= spec.scale;
                }
            }
        }
        backprop_trace(params, &trace.generation, &dlogits, None, &mut grads.0)?;
    }
    if spec.lambda != 0.0 {
        let comp = trace
            .comparative
            .as_ref()
            .ok_or_else(|| TrainError::MissingInsights("trace has no comparative term".into()))?;
        let (dsims, dnegs) =
            comparative_grad_with_negatives(&comp.similarities, &comp.negative_similarities);
        let weight = spec.scale * spec.lambda;
        let (ref_vec, ref_trace) = &comp.reference;
        let d = ref_vec.len();
        let mut dref = vec![0.0; d];
        let mut dneg = vec![0.0; d];
        for (j, (vec, enc_trace)) in comp.insights.iter().enumerate() {
            let mut dc = vec![0.0; d];
            let (a, r) = cosine_grad(vec, ref_vec);
            axpy(&mut dc, dsims[j] * weight, &a);
            axpy(&mut dref, dsims[j] * weight, &r);
            if let Some((neg_vec, _)) = &comp.negative {
                let (a, r) = cosine_grad(vec, neg_vec);
                axpy(&mut dc, dnegs[j] * weight, &a);
                axpy(&mut dneg, dnegs[j] * weight, &r);
            }
            backprop_mean(params, enc_trace, &dc, &mut grads.0)?;
        }
        backprop_mean(params, ref_trace, &dref, &mut grads.0)?;
        if let Some((_, neg_trace)) = &comp.negative {
            backprop_mean(params, neg_trace, &dneg, &mut grads.0)?;
        }
    }
    Ok(grads)
}

/// Gradient through an encoding, which is the mean of the trace's hidden states.
fn backprop_mean(
    params: &ModelParams,
    trace: &ForwardTrace,
    dmean: &[f64],
    grads: &mut ModelParams,
) -> Result<(), TrainError> {
    let n = trace.len() as f64;
    let per: Vec<f64> = dmean.iter().map(|g| g / n).collect();
    let seed = vec![per; trace.len()];
    backprop_trace(params, trace, &[], Some(&seed), grads)
}
