use serde::Serialize;

use super::rouge::rouge_l;

/// Connectives that mark a sentence as comparative.
pub const COMPARATIVE_LEXICON: [&str; 12] = [
    "outperforms",
    "compared",
    "whereas",
    "however",
    "unlike",
    "both",
    "more",
    "less",
    "better",
    "worse",
    "similar",
    "contrast",
];

pub const DEFAULT_TAU: f64 = 0.5;

/// Comparative quality on a 0-100 scale.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct GScore {
    pub value: f64,
    /// Fraction of insight units matched by some candidate sentence.
    pub coverage: f64,
    /// Fraction of candidate sentences with a comparative connective.
    pub density: f64,
}

impl GScore {
    pub fn from_parts(coverage: f64, density: f64) -> Self {
        let value = if coverage + density > 0.0 {
            100.0 * (2.0 * coverage * density) / (coverage + density)
        } else {
            0.0
        };
        Self {
            value,
            coverage,
            density,
        }
    }
}

/// Splits on "." tokens, dropping the separators and empty sentences.
pub fn sentences<S: AsRef<str>>(tokens: &[S]) -> Vec<&[S]> {
    tokens
        .split(|t| t.as_ref() == ".")
        .filter(|s| !s.is_empty())
        .collect()
}

/// # Panics
/// If `tau` is outside `(0, 1]`.
pub fn g_score<S: AsRef<str>, U: AsRef<[S]>>(
    candidate: &[S],
    insight_units: &[U],
    tau: f64,
) -> GScore {
    assert!(tau > 0.0 && tau <= 1.0, "tau must lie in (0, 1]");
    let sents = sentences(candidate);
    fn as_str<S: AsRef<str>>(s: &[S]) -> Vec<&str> {
        s.iter().map(AsRef::as_ref).collect()
    }
    let cand: Vec<Vec<&str>> = sents.iter().map(|s| as_str(s)).collect();

    let covered = insight_units
        .iter()
        .filter(|unit| {
            let unit = as_str(unit.as_ref());
            cand.iter().any(|s| rouge_l(s, &unit).f1 >= tau)
        })
        .count();
    let coverage = if insight_units.is_empty() {
        0.0
    } else {
        covered as f64 / insight_units.len() as f64
    };

    let dense = cand
        .iter()
        .filter(|s| s.iter().any(|t| COMPARATIVE_LEXICON.contains(t)))
        .count();
    let density = if cand.is_empty() {
        0.0
    } else {
        dense as f64 / cand.len() as f64
    };
    GScore::from_parts(coverage, density)
}
