use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DatasetRecord, PaperRecord};

/// Words that open the key-fact sentence, both in the first paper and at the
/// start of every reference summary. The two tokens that follow are the fact.
pub const KEY_FACT_PREFIX: [&str; 4] = ["the", "key", "fact", "is"];

const PREFIXES: [&str; 12] = [
    "graph", "deep", "sparse", "neural", "fast", "robust", "joint", "latent", "meta", "hyper",
    "cross", "dual",
];
const SUFFIXES: [&str; 8] = [
    "net", "former", "gen", "flow", "fusion", "search", "rank", "match",
];
const TASKS: [&str; 8] = [
    "summarization",
    "retrieval",
    "translation",
    "parsing",
    "captioning",
    "classification",
    "segmentation",
    "tagging",
];
const METRICS: [&str; 6] = ["accuracy", "recall", "precision", "bleu", "rouge", "f1"];
const COMPONENTS: [&str; 10] = [
    "attention",
    "convolution",
    "recurrence",
    "pooling",
    "distillation",
    "pruning",
    "augmentation",
    "regularization",
    "hashing",
    "sampling",
];
const DATASETS: [&str; 6] = ["arxiv", "pubmed", "wiki", "news", "patents", "reviews"];
const QUALITIES: [&str; 6] = [
    "stable",
    "efficient",
    "simple",
    "scalable",
    "accurate",
    "compact",
];
const KEY_COLORS: [&str; 16] = [
    "amber", "cobalt", "violet", "scarlet", "ivory", "jade", "onyx", "coral", "azure", "saffron",
    "teal", "crimson", "olive", "pearl", "slate", "umber",
];
const KEY_ANIMALS: [&str; 16] = [
    "falcon", "otter", "heron", "lynx", "panda", "raven", "tiger", "viper", "bison", "crane",
    "gecko", "moose", "koala", "yak", "wolf", "ibis",
];

struct Paper {
    method: String,
    score: u32,
}

/// Generates `count` templated examples, deterministic in `seed`.
///
/// Each paper is a pseudo-abstract with a method name unique within its
/// example and a numeric score. The first paper opens with a key-fact
/// sentence (`the key fact is <color> <animal> .`) that the reference summary
/// repeats as its first sentence. The summary then gives one score sentence
/// per paper followed by each paper's comparative insight.
pub fn generate_synthetic_corpus(
    seed: u64,
    count: usize,
    n_papers: RangeInclusive<usize>,
) -> Vec<DatasetRecord> {
    assert!(count >= 1, "count must be positive");
    assert!(*n_papers.start() >= 1, "examples need at least one paper");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| generate_one(&mut rng, format!("synth-{seed}-{i:04}"), n_papers.clone()))
        .collect()
}

fn pick<'a>(rng: &mut impl Rng, pool: &[&'a str]) -> &'a str {
    pool.choose(rng).expect("pools are non-empty")
}

fn generate_one(
    rng: &mut ChaCha8Rng,
    id: String,
    n_papers: RangeInclusive<usize>,
) -> DatasetRecord {
    let n = rng.gen_range(n_papers);
    let task = pick(rng, &TASKS);
    let metric = pick(rng, &METRICS);
    let key = format!("{} {}", pick(rng, &KEY_COLORS), pick(rng, &KEY_ANIMALS));

    let mut names: Vec<String> = PREFIXES
        .iter()
        .flat_map(|p| SUFFIXES.iter().map(move |s| format!("{p}{s}")))
        .collect();
    names.shuffle(rng);
    let mut scores: Vec<u32> = (60..99).collect();
    scores.shuffle(rng);
    let papers: Vec<Paper> = (0..n)
        .map(|j| Paper {
            method: names[j].clone(),
            score: scores[j],
        })
        .collect();

    // Rank by score, best first; scores are distinct.
    let mut ranked: Vec<usize> = (0..n).collect();
    ranked.sort_by(|&a, &b| papers[b].score.cmp(&papers[a].score));
    let insight = |j: usize| -> String {
        let m = &papers[j].method;
        if n == 1 {
            return format!("{m} outperforms the baseline on {metric}");
        }
        let rank = ranked.iter().position(|&r| r == j).unwrap();
        if rank + 1 < n {
            let lower = &papers[ranked[rank + 1]].method;
            format!("{m} outperforms {lower} on {metric}")
        } else {
            let higher = &papers[ranked[rank - 1]].method;
            format!("{m} is worse than {higher} on {metric}")
        }
    };

    let records: Vec<PaperRecord> = papers
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let m = &p.method;
            let (c1, c2) = {
                let mut cs = COMPONENTS.to_vec();
                cs.shuffle(rng);
                (cs[0], cs[1])
            };
            let data = pick(rng, &DATASETS);
            let samples = rng.gen_range(2..10) * 1000;
            let quality = pick(rng, &QUALITIES);
            let mut text = String::new();
            if j == 0 {
                text.push_str(&format!("{} {key} . ", KEY_FACT_PREFIX.join(" ")));
            }
            text.push_str(&format!(
                "we propose {m} for {task} . {m} combines {c1} with {c2} . \
                 we evaluate on {data} with {samples} samples . \
                 {m} reaches {metric} of {score} . the results show {m} is {quality} .",
                score = p.score
            ));
            PaperRecord {
                id: format!("{id}-p{}", j + 1),
                title: format!("{m} : {c1} for {task}"),
                text,
                insight: insight(j),
            }
        })
        .collect();

    let mut summary = format!("{} {key} .", KEY_FACT_PREFIX.join(" "));
    for p in &papers {
        summary.push_str(&format!(" {} reaches {metric} of {} .", p.method, p.score));
    }
    for j in 0..n {
        summary.push_str(&format!(" {} .", insight(j)));
    }

    DatasetRecord {
        id,
        papers: records,
        ref_summary: summary,
    }
}
