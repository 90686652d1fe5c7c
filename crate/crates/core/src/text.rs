//! Token normalization shared by linking, metrics, and statistics.

use std::collections::{BTreeSet, HashSet};
use std::sync::OnceLock;

const STOPWORDS_FILE: &str = include_str!("../data/stopwords_en.txt");

/// The shipped English stopword list (179 entries).
pub fn stopwords() -> &'static HashSet<String> {
    static SET: OnceLock<HashSet<String>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_FILE
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_owned)
            .collect()
    })
}

pub fn is_stopword(word: &str) -> bool {
    stopwords().contains(word)
}

/// A token with no letters or digits, e.g. `,` or `--` or `''`.
pub fn is_punct(token: &str) -> bool {
    !token.chars().any(char::is_alphanumeric)
}

/// Lowercases and trims leading/trailing non-alphanumeric characters.
/// Returns `None` for bare punctuation.
pub fn normalize(token: &str) -> Option<String> {
    let trimmed = token.trim_matches(|c: char| !c.is_alphanumeric());
    if trimmed.is_empty() {
        None
    } else {
        Some(trimmed.to_lowercase())
    }
}

/// Normalized, non-stopword tokens of `text` in order (duplicates kept).
pub fn content_words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(normalize)
        .filter(|w| !is_stopword(w))
        .collect()
}

/// Distinct normalized non-stopword tokens of `text`.
pub fn content_word_set(text: &str) -> BTreeSet<String> {
    content_words(text).into_iter().collect()
}

/// Whitespace token count.
pub fn token_len(text: &str) -> usize {
    text.split_whitespace().count()
}
