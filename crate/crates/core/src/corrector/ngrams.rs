use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use unicode_normalization::UnicodeNormalization;

/// Character n-gram counts of `text`.
///
/// The text is NFC-normalized and lower-cased, then a window of `n` scalar
/// values slides over it, interior spaces included. Text shorter than `n`
/// yields no n-grams. `n = 0` is treated as 1.
pub fn extract_ngrams(text: &str, n: usize) -> BTreeMap<String, u32> {
    let n = n.max(1);
    let folded: Vec<char> = text.nfc().flat_map(char::to_lowercase).collect();
    let mut out = BTreeMap::new();
    if folded.len() < n {
        return out;
    }
    for w in folded.windows(n) {
        let gram: String = w.iter().collect();
        *out.entry(gram).or_insert(0) += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grams(text: &str, n: usize) -> Vec<(String, u32)> {
        extract_ngrams(text, n).into_iter().collect()
    }

    #[test]
    fn case_folded_single_trigram() {
        assert_eq!(grams("Das", 3), alloc::vec![("das".into(), 1)]);
    }

    #[test]
    fn sliding_window() {
        assert_eq!(grams("abcd", 3), alloc::vec![("abc".into(), 1), ("bcd".into(), 1)]);
    }

    #[test]
    fn too_short() {
        assert!(extract_ngrams("ab", 3).is_empty());
        assert!(extract_ngrams("", 1).is_empty());
    }

    #[test]
    fn spaces_and_repeats_count() {
        let g = extract_ngrams("aa aa", 2);
        assert_eq!(g["aa"], 2);
        assert_eq!(g["a "], 1);
        assert_eq!(g[" a"], 1);
    }

    #[test]
    fn counts_scalar_values_not_bytes() {
        // three scalars, six bytes
        assert_eq!(grams("অআই", 3), alloc::vec![("অআই".into(), 1)]);
    }
}
