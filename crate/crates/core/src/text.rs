//! Tokenization: lowercase, split on non-alphanumeric runs, stop, s-stem.

/// Built-in English stoplist. Single letters are kept as terms.
const STOPWORDS: &[&str] = &[
    "about", "after", "all", "also", "an", "and", "any", "are", "as", "at", "be", "been", "but",
    "by", "can", "could", "did", "do", "does", "for", "from", "had", "has", "have", "he", "her",
    "his", "how", "if", "in", "into", "is", "it", "its", "more", "my", "no", "not", "of", "on",
    "or", "other", "our", "she", "so", "some", "such", "than", "that", "the", "their", "them",
    "then", "there", "these", "they", "this", "those", "to", "up", "was", "we", "were", "what",
    "when", "which", "who", "will", "with", "would", "you", "your",
];

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

/// Harman-style s-stemmer.
///
/// `ies` -> `y` (unless preceded by `a`/`e`), `es` -> `e` (unless preceded by
/// `a`/`e`/`o`), trailing `s` dropped (unless preceded by `u`/`s`). Tokens of
/// three characters or fewer are left alone.
pub fn s_stem(token: &str) -> String {
    if token.len() <= 3 || !token.is_ascii() {
        return token.to_string();
    }
    let bytes = token.as_bytes();
    let n = bytes.len();
    if token.ends_with("ies") && !matches!(bytes[n - 4], b'a' | b'e') {
        return format!("{}y", &token[..n - 3]);
    }
    if token.ends_with("es") && !matches!(bytes[n - 3], b'a' | b'e' | b'o') {
        return token[..n - 1].to_string();
    }
    if token.ends_with('s') && !matches!(bytes[n - 2], b'u' | b's') {
        return token[..n - 1].to_string();
    }
    token.to_string()
}

/// Full analysis chain used for both documents and queries.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .filter(|t| !is_stopword(t))
        .map(|t| s_stem(&t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stoplist_is_sorted() {
        assert!(STOPWORDS.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn splits_lowercases_and_stops() {
        assert_eq!(tokenize("The Cat, and the HAT!"), vec!["cat", "hat"]);
        assert_eq!(tokenize("a b"), vec!["a", "b"]);
        assert!(tokenize("  ,,; ").is_empty());
    }

    #[test]
    fn s_stemmer_rules() {
        assert_eq!(s_stem("queries"), "query");
        assert_eq!(s_stem("keies"), "keie");
        assert_eq!(s_stem("horses"), "horse");
        assert_eq!(s_stem("does"), "doe");
        assert_eq!(s_stem("cats"), "cat");
        assert_eq!(s_stem("corpus"), "corpus");
        assert_eq!(s_stem("glass"), "glass");
        assert_eq!(s_stem("bus"), "bus");
    }
}
