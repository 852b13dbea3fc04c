use std::collections::HashMap;
use std::ops::Range;

use super::{PaperDocument, TokenId};

/// Splits `body` into sentence spans. A sentence ends at (and includes) each
/// `period` token; trailing tokens after the last period form a final span.
pub fn sentence_spans(body: &[TokenId], period: Option<TokenId>) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start = 0;
    if let Some(p) = period {
        for (i, &t) in body.iter().enumerate() {
            if t == p {
                spans.push(start..i + 1);
                start = i + 1;
            }
        }
    }
    if start < body.len() {
        spans.push(start..body.len());
    }
    spans
}

/// Selects the `k` highest-scoring sentences of a paper.
///
/// A sentence scores the sum over its distinct tokens of
/// `(count / sentence_len) * ln(sentences / sentences_containing_token)`,
/// with document frequencies counted over the sentences of this paper only.
/// Ties go to the earlier sentence. The result is in document order.
pub fn extract_key_elements(
    doc: &PaperDocument,
    k: usize,
    period: Option<TokenId>,
) -> Vec<Range<usize>> {
    let spans = sentence_spans(&doc.body, period);
    if k == 0 || spans.is_empty() {
        return Vec::new();
    }
    if k >= spans.len() {
        return spans;
    }

    let counts: Vec<HashMap<TokenId, usize>> = spans
        .iter()
        .map(|s| {
            let mut m = HashMap::new();
            for &t in &doc.body[s.clone()] {
                *m.entry(t).or_insert(0) += 1;
            }
            m
        })
        .collect();
    let mut df: HashMap<TokenId, usize> = HashMap::new();
    for m in &counts {
        for &t in m.keys() {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    let n = spans.len() as f64;

    let scores: Vec<f64> = spans
        .iter()
        .zip(&counts)
        .map(|(span, m)| {
            let len = span.len() as f64;
            // Sorted so the floating-point sum is independent of hash order.
            let mut terms: Vec<(TokenId, usize)> = m.iter().map(|(&t, &c)| (t, c)).collect();
            terms.sort_unstable();
            terms
                .iter()
                .map(|&(t, c)| (c as f64 / len) * (n / df[&t] as f64).ln())
                .sum()
        })
        .collect();

    let mut order: Vec<usize> = (0..spans.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut picked: Vec<usize> = order.into_iter().take(k).collect();
    picked.sort_unstable();
    picked.into_iter().map(|i| spans[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const DOT: TokenId = 9;

    fn doc(body: Vec<TokenId>) -> PaperDocument {
        PaperDocument {
            id: "d".into(),
            title: String::new(),
            body,
            insight: vec![],
        }
    }

    #[test]
    fn spans_cover_body() {
        assert_eq!(
            sentence_spans(&[1, 2, DOT, 3, DOT, 4], Some(DOT)),
            vec![0..3, 3..5, 5..6]
        );
        assert_eq!(sentence_spans(&[1, 2, DOT], None), vec![0..3]);
    }

    #[test]
    fn rare_terms_win() {
        // Sentences: "a b c ." / "a b x y ." / "a b c ."  (a=1 b=2 c=3 x=4 y=5).
        // idf(a)=idf(b)=idf(.)=0, idf(c)=ln(3/2), idf(x)=idf(y)=ln 3.
        // Scores: ln(1.5)/4 = 0.1014, 2 ln(3)/5 = 0.4394, 0.1014.
        let body = vec![1, 2, 3, DOT, 1, 2, 4, 5, DOT, 1, 2, 3, DOT];
        let picked = extract_key_elements(&doc(body), 1, Some(DOT));
        assert_eq!(picked, vec![4..9]);
    }

    #[test]
    fn ties_prefer_earlier_and_output_in_document_order() {
        let body = vec![1, 2, 3, DOT, 1, 2, 4, 5, DOT, 1, 2, 3, DOT];
        // k=2: the 0.4394 sentence plus the earlier of the two tied at 0.1014.
        let picked = extract_key_elements(&doc(body), 2, Some(DOT));
        assert_eq!(picked, vec![0..4, 4..9]);
    }

    #[test]
    fn k_exhausts_or_is_zero() {
        let body = vec![1, DOT, 2, DOT, 3];
        let d = doc(body);
        assert_eq!(
            extract_key_elements(&d, 3, Some(DOT)),
            vec![0..2, 2..4, 4..5]
        );
        assert_eq!(extract_key_elements(&d, 10, Some(DOT)).len(), 3);
        assert!(extract_key_elements(&d, 0, Some(DOT)).is_empty());
    }

    proptest! {
        #[test]
        fn disjoint_and_sorted(body in prop::collection::vec(0u32..12, 1..60), k in 0usize..6) {
            let picked = extract_key_elements(&doc(body.clone()), k, Some(DOT));
            let total = sentence_spans(&body, Some(DOT)).len();
            prop_assert_eq!(picked.len(), k.min(total));
            for w in picked.windows(2) {
                prop_assert!(w[0].end <= w[1].start);
            }
            for s in &picked {
                prop_assert!(s.end <= body.len() && s.start < s.end);
            }
        }
    }
}
