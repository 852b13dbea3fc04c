use compsum::corpus::{build_vocab, encode_record, generate_synthetic_corpus, token_streams};
use compsum::model::{Checkpoint, ModelParams};
use compsum::training::{train_comparative, train_pretrain, Stage, TrainConfig};
use compsum::{PaperSet, Vocabulary};

fn synthetic(seed: u64, count: usize) -> (Vec<PaperSet>, Vocabulary) {
    let records = generate_synthetic_corpus(seed, count, 2..=3);
    let vocab = build_vocab(&token_streams(&records), 1);
    let sets = records.iter().map(|r| encode_record(r, &vocab)).collect();
    (sets, vocab)
}

#[test]
fn comparative_epoch_loss_decreases() {
    let (sets, vocab) = synthetic(21, 100);
    let config = TrainConfig {
        stage: Stage::Comparative,
        d: 32,
        epochs: 3,
        seed: 4,
        ..Default::default()
    };
    let init = Checkpoint {
        params: ModelParams::init(32, vocab.len(), 4),
        l_chunk: config.l_chunk,
        flags: config.flags,
    };
    let out = train_comparative(&sets, &vocab, &init, &config).unwrap();
    let l = &out.epoch_losses;
    assert_eq!(l.len(), 3);
    assert!(l[0] > l[1] && l[1] > l[2], "{l:?}");
    assert!(out.log.iter().all(|r| r.l_comp >= 0.0 && r.l_gen >= 0.0));
}

#[test]
fn two_stage_runs_are_bitwise_reproducible() {
    let (sets, vocab) = synthetic(22, 8);
    let pre = TrainConfig {
        d: 8,
        epochs: 1,
        ..Default::default()
    };
    let run = || {
        let a = train_pretrain(&sets, &vocab, &pre).unwrap();
        let comp = TrainConfig {
            stage: Stage::Comparative,
            ..pre.clone()
        };
        let b = train_comparative(&sets, &vocab, &a.checkpoint, &comp).unwrap();
        (a.log, b.checkpoint.to_bytes().unwrap())
    };
    assert_eq!(run(), run());
}
