//! Word tokenization with byte offsets into the original text.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub start: usize,
    pub end: usize,
    pub lower: String,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '-' || c == '\''
}

/// Splits `text` into maximal runs of word characters; punctuation and
/// whitespace separate tokens and are dropped.
pub fn tokens(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (is_word_char(c), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push(Token {
                    start: s,
                    end: i,
                    lower: text[s..i].to_lowercase(),
                });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(Token {
            start: s,
            end: text.len(),
            lower: text[s..].to_lowercase(),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_punctuation() {
        let t = tokens("A red cat, a dog.");
        let words: Vec<_> = t.iter().map(|t| t.lower.as_str()).collect();
        assert_eq!(words, ["a", "red", "cat", "a", "dog"]);
        assert_eq!(&"A red cat, a dog."[t[2].start..t[2].end], "cat");
    }

    #[test]
    fn keeps_hyphens_and_apostrophes() {
        let t = tokens("a t-shirt's");
        assert_eq!(t.len(), 2);
        assert_eq!(t[1].lower, "t-shirt's");
    }
}
