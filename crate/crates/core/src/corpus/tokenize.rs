/// Splits text into lowercase word tokens.
///
/// Whitespace separates tokens, and every maximal run of punctuation (any
/// character that is neither alphanumeric nor whitespace) becomes a token of
/// its own.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut in_punct = false;

    let flush = |current: &mut String, tokens: &mut Vec<String>| {
        if !current.is_empty() {
            tokens.push(std::mem::take(current));
        }
    };

    for ch in text.chars() {
        if ch.is_whitespace() {
            flush(&mut current, &mut tokens);
            continue;
        }
        let punct = !ch.is_alphanumeric();
        if punct != in_punct {
            flush(&mut current, &mut tokens);
            in_punct = punct;
        }
        current.extend(ch.to_lowercase());
    }
    flush(&mut current, &mut tokens);
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_trailing_period() {
        assert_eq!(tokenize("The cat sat."), ["the", "cat", "sat", "."]);
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("").is_empty());
        assert!(tokenize(" \t\n").is_empty());
    }

    #[test]
    fn comparative_phrase() {
        assert_eq!(
            tokenize("Paper 1 outperforms Paper 2"),
            ["paper", "1", "outperforms", "paper", "2"]
        );
    }

    #[test]
    fn punctuation_runs_stay_together() {
        assert_eq!(tokenize("wait...what?!"), ["wait", "...", "what", "?!"]);
        assert_eq!(tokenize("(a, b)"), ["(", "a", ",", "b", ")"]);
        assert_eq!(tokenize("3.5"), ["3", ".", "5"]);
    }
}
