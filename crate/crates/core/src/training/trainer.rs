use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    backward, optimizer_step, trace_example_with_negative, trace_stream, AdamState, LossSpec,
    Stage, TrainConfig, TrainError, TrainingExample,
};
use crate::corpus::{ContextOptions, PaperSet, Vocabulary};
use crate::model::{Checkpoint, ModelParams};

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub epoch: usize,
    pub l_gen: f64,
    pub l_comp: f64,
    pub lambda: f64,
    pub l_stage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<LogRecord>,
    /// Mean stage loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub clipped_steps: usize,
}

impl TrainOutcome {
    /// Mean stage loss of the last epoch, zero when no epoch ran.
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(0.0)
    }
}

/// Encodes each paper set into chunked training inputs.
pub fn build_examples(
    sets: &[PaperSet],
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> Result<Vec<TrainingExample>, TrainError> {
    let options = ContextOptions {
        key_k: config.key_k,
        use_key_elements: !config.flags.disable_key_extraction,
    };
    sets.iter()
        .map(|s| {
            s.validate(vocab.len())
                .map_err(|m| TrainError::InvalidConfig(format!("example {}: {m}", s.id)))?;
            TrainingExample::from_paper_set(s, vocab, options, config.l_chunk)
        })
        .collect()
}

fn check_stage(config: &TrainConfig, stage: Stage) -> Result<(), TrainError> {
    config.validate()?;
    if config.stage != stage {
        return Err(TrainError::InvalidConfig(format!(
            "stage is {:?}, expected {stage:?}",
            config.stage
        )));
    }
    Ok(())
}

/// Runs the shared loop; `step_trace` produces the trace and loss selection
/// for the example at `index`, given the previously visited index.
fn run_loop<F>(
    mut params: ModelParams,
    count: usize,
    config: &TrainConfig,
    mut step_trace: F,
) -> Result<(ModelParams, Vec<LogRecord>, Vec<f64>, usize), TrainError>
where
    F: FnMut(
        &ModelParams,
        usize,
        Option<usize>,
    ) -> Result<(super::ExampleTrace, LossSpec), TrainError>,
{
    let adam = config.adam();
    let mut state = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..count).collect();
    let mut log = Vec::new();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut clipped = 0;
    let mut previous = None;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for &i in &order {
            let (trace, spec) = step_trace(&params, i, previous)?;
            let losses = trace.losses(spec.lambda)?;
            let mut grads = backward(&trace, &params, &spec)?;
            if !grads.is_finite() {
                return Err(TrainError::Model(crate::model::ModelError::NonFinite(
                    "gradients",
                )));
            }
            if grads.clip_global_norm(config.clip_norm) {
                clipped += 1;
                log::debug!(
                    "step {}: gradient clipped to norm {}",
                    state.step + 1,
                    config.clip_norm
                );
            }
            optimizer_step(&mut params, &grads, &mut state, &adam)?;
            sum += losses.l_stage;
            log.push(LogRecord {
                step: state.step,
                epoch,
                l_gen: losses.l_gen,
                l_comp: losses.l_comp,
                lambda: losses.lambda,
                l_stage: losses.l_stage,
            });
            previous = Some(i);
        }
        let mean = sum / count as f64;
        log::info!("epoch {epoch}: mean loss {mean:.6}");
        epoch_losses.push(mean);
    }
    Ok((params, log, epoch_losses, clipped))
}

/// Next-token training over each example's context followed by its summary,
/// from a seeded initialization.
pub fn train_pretrain(
    corpus: &[PaperSet],
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    check_stage(config, Stage::Pretrain)?;
    if corpus.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let streams: Vec<_> = build_examples(corpus, vocab, config)?
        .iter()
        .map(TrainingExample::stream)
        .collect();
    let init = ModelParams::init(config.d, vocab.len(), config.seed);
    let spec = LossSpec::stage(0.0);
    let (params, log, epoch_losses, clipped_steps) =
        run_loop(init, streams.len(), config, |p, i, _| {
            Ok((
                trace_stream(p, &streams[i], config.l_chunk, config.flags)?,
                spec,
            ))
        })?;
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            params,
            l_chunk: config.l_chunk,
            flags: config.flags,
        },
        log,
        epoch_losses,
        clipped_steps,
    })
}

/// Fine-tunes `init` one example at a time on the summary likelihood plus
/// `lambda` times the contrastive insight loss.
pub fn train_comparative(
    dataset: &[PaperSet],
    vocab: &Vocabulary,
    init: &Checkpoint,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    check_stage(config, Stage::Comparative)?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    init.params.validate()?;
    if init.params.vocab_size() != vocab.len() || init.params.d() != config.d {
        return Err(TrainError::InvalidConfig(format!(
            "checkpoint has d={} V={}, config d={} and vocabulary {}",
            init.params.d(),
            init.params.vocab_size(),
            config.d,
            vocab.len()
        )));
    }
    let examples = build_examples(dataset, vocab, config)?;
    let lambda = config.effective_lambda();
    let with_comp = lambda != 0.0;
    if with_comp {
        if let Some(e) = examples.iter().find(|e| e.insights.is_empty()) {
            return Err(TrainError::MissingInsights(e.id.clone()));
        }
    }
    let spec = LossSpec::stage(lambda);
    let (params, log, epoch_losses, clipped_steps) =
        run_loop(init.params.clone(), examples.len(), config, |p, i, prev| {
            let negative = match prev {
                Some(j) if config.in_batch_negatives && j != i => {
                    Some(examples[j].target.as_slice())
                }
                _ => None,
            };
            let trace =
                trace_example_with_negative(p, &examples[i], config.flags, with_comp, negative)?;
            Ok((trace, spec))
        })?;
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            params,
            l_chunk: config.l_chunk,
            flags: config.flags,
        },
        log,
        epoch_losses,
        clipped_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, encode_record, generate_synthetic_corpus, token_streams};

    fn corpus(seed: u64, count: usize) -> (Vec<PaperSet>, Vocabulary) {
        let records = generate_synthetic_corpus(seed, count, 2..=3);
        let vocab = build_vocab(&token_streams(&records), 1);
        let sets = records.iter().map(|r| encode_record(r, &vocab)).collect();
        (sets, vocab)
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let (sets, vocab) = corpus(1, 3);
        let config = TrainConfig {
            epochs: 0,
            d: 8,
            seed: 9,
            ..Default::default()
        };
        let out = train_pretrain(&sets, &vocab, &config).unwrap();
        assert_eq!(out.checkpoint.params, ModelParams::init(8, vocab.len(), 9));
        assert!(out.log.is_empty());
    }

    #[test]
    fn empty_corpus_rejected() {
        let (_, vocab) = corpus(1, 1);
        let config = TrainConfig::default();
        assert!(matches!(
            train_pretrain(&[], &vocab, &config),
            Err(TrainError::EmptyCorpus)
        ));
    }

    #[test]
    fn memorizes_a_single_example() {
        let (sets, vocab) = corpus(2, 1);
        let config = TrainConfig {
            epochs: 500,
            d: 16,
            learning_rate: 0.05,
            ..Default::default()
        };
        let out = train_pretrain(&sets[..1], &vocab, &config).unwrap();
        assert!(out.final_loss() < 0.1, "{}", out.final_loss());
    }

    #[test]
    fn pretraining_is_reproducible() {
        let (sets, vocab) = corpus(3, 4);
        let config = TrainConfig {
            epochs: 2,
            d: 8,
            ..Default::default()
        };
        let a = train_pretrain(&sets, &vocab, &config).unwrap();
        let b = train_pretrain(&sets, &vocab, &config).unwrap();
        assert_eq!(a, b);
    }

    fn comparative_config(d: usize) -> TrainConfig {
        TrainConfig {
            stage: Stage::Comparative,
            epochs: 2,
            d,
            ..Default::default()
        }
    }

    #[test]
    fn disabled_comparative_equals_zero_lambda() {
        let (sets, vocab) = corpus(4, 4);
        let init = Checkpoint {
            params: ModelParams::init(8, vocab.len(), 1),
            l_chunk: 16,
            flags: Default::default(),
        };
        let mut off = comparative_config(8);
        off.flags.disable_comparative = true;
        let zero = TrainConfig {
            lambda: 0.0,
            ..comparative_config(8)
        };
        let a = train_comparative(&sets, &vocab, &init, &off).unwrap();
        let b = train_comparative(&sets, &vocab, &init, &zero).unwrap();
        assert_eq!(a.checkpoint.params, b.checkpoint.params);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn missing_insights_rejected_when_lambda_positive() {
        let (mut sets, vocab) = corpus(5, 2);
        for d in &mut sets[1].docs {
            d.insight.clear();
        }
        let init = Checkpoint {
            params: ModelParams::init(8, vocab.len(), 1),
            l_chunk: 16,
            flags: Default::default(),
        };
        assert!(matches!(
            train_comparative(&sets, &vocab, &init, &comparative_config(8)),
            Err(TrainError::MissingInsights(_))
        ));
        let zero = TrainConfig {
            lambda: 0.0,
            ..comparative_config(8)
        };
        assert!(train_comparative(&sets, &vocab, &init, &zero).is_ok());
    }

    #[test]
    fn comparative_losses_stay_nonnegative_and_finite() {
        for seed in 0..10 {
            let (sets, vocab) = corpus(100 + seed, 10);
            let init = Checkpoint {
                params: ModelParams::init(8, vocab.len(), seed),
                l_chunk: 16,
                flags: Default::default(),
            };
            let config = TrainConfig {
                seed,
                in_batch_negatives: seed % 2 == 1,
                ..comparative_config(8)
            };
            let out = train_comparative(&sets, &vocab, &init, &config).unwrap();
            for r in &out.log {
                for v in [r.l_gen, r.l_comp, r.l_stage] {
                    assert!(v.is_finite() && v >= 0.0, "seed {seed}: {r:?}");
                }
            }
        }
    }

    #[test]
    fn wrong_stage_rejected() {
        let (sets, vocab) = corpus(6, 2);
        let config = comparative_config(8);
        assert!(matches!(
            train_pretrain(&sets, &vocab, &config),
            Err(TrainError::InvalidConfig(_))
        ));
    }
}
