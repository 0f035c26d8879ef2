//! Small text helpers shared by the hashing embedder and the contamination
//! probes.

use std::collections::HashSet;

/// Lowercased alphanumeric word tokens. Any non-alphanumeric character
/// separates tokens; accents are kept.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Set of word n-grams. Texts shorter than `n` words yield one shorter gram
/// so that short descriptions still compare.
pub fn word_ngrams(text: &str, n: usize) -> HashSet<Vec<String>> {
    let w = words(text);
    if w.is_empty() || n == 0 {
        return HashSet::new();
    }
    if w.len() < n {
        return std::iter::once(w).collect();
    }
    w.windows(n).map(|g| g.to_vec()).collect()
}

/// Share of `reference` n-grams that also occur in `candidate`.
pub fn ngram_overlap(candidate: &str, reference: &str, n: usize) -> f64 {
    let reference = word_ngrams(reference, n);
    if reference.is_empty() {
        return 0.0;
    }
    let candidate = word_ngrams(candidate, n);
    let shared = reference.iter().filter(|g| candidate.contains(*g)).count();
    shared as f64 / reference.len() as f64
}

/// 64-bit FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Rough token count (about four characters per token, never less than the
/// word count). Used for prompt-size reporting and rate limiting only.
pub fn estimate_tokens(text: &str) -> usize {
    let by_chars = text.chars().count().div_ceil(4);
    by_chars.max(words(text).len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizes_unicode() {
        assert_eq!(words("Rénovation du parc, Wrocław-Krzyki!"), vec![
            "rénovation", "du", "parc", "wrocław", "krzyki"
        ]);
    }

    #[test]
    fn overlap_extremes() {
        let t = "plant trees along the river bank for shade";
        assert_eq!(ngram_overlap(t, t, 3), 1.0);
        assert_eq!(ngram_overlap("", t, 3), 0.0);
        assert_eq!(ngram_overlap("completely different words here now", t, 3), 0.0);
        assert_eq!(ngram_overlap("two words", "two words", 3), 1.0);
    }

    #[test]
    fn fnv_known_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }
}
