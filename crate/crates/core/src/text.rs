//! Caption tokenization shared by every loader and encoder.

/// Lowercase, split on anything that is not alphanumeric, drop empty pieces.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|piece| !piece.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// True when `needle` occurs as a contiguous run inside `haystack`.
pub fn contains_span(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty()
        && haystack.len() >= needle.len()
        && haystack.windows(needle.len()).any(|w| w == needle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_punctuation_and_lowercases() {
        assert_eq!(
            tokenize("A Dog, on the couch!  (Hot-dog)"),
            vec!["a", "dog", "on", "the", "couch", "hot", "dog"]
        );
        assert!(tokenize("  ... ").is_empty());
    }

    #[test]
    fn span_search() {
        let caption = tokenize("a traffic light near a car");
        assert!(contains_span(&caption, &tokenize("traffic light")));
        assert!(!contains_span(&caption, &tokenize("light traffic")));
        assert!(!contains_span(&caption, &[]));
    }
}
