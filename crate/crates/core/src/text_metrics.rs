//! Character/word error rates and corpus BLEU.
//!
//! Strings are NFC-normalized and compared per Unicode scalar value; words are
//! whitespace-separated tokens. Corpus CER/WER are micro-averaged: total edits
//! over total reference length.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::doc_model::FieldKind;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("reference is empty; error rate is undefined")]
    EmptyReference,
    #[error("{references} references but {hypotheses} hypotheses")]
    LengthMismatch { references: usize, hypotheses: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Character,
    Word,
}

/// Decomposition of a minimal edit script.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EditOps {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub reference_length: usize,
}

impl EditOps {
    pub fn distance(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    /// `(S + D + I) / N`.
    pub fn rate(&self) -> Result<f64, MetricsError> {
        if self.reference_length == 0 {
            return Err(MetricsError::EmptyReference);
        }
        Ok(self.distance() as f64 / self.reference_length as f64)
    }

    fn merge(self, other: EditOps) -> EditOps {
        EditOps {
            substitutions: self.substitutions + other.substitutions,
            deletions: self.deletions + other.deletions,
            insertions: self.insertions + other.insertions,
            reference_length: self.reference_length + other.reference_length,
        }
    }
}

/// Minimal edit script between two sequences, with no emptiness requirement.
///
/// Cells hold `(distance, insertions + deletions)` and are minimized
/// lexicographically, so among all minimal scripts the one with the most
/// substitutions wins. S, D and I are then recovered from
/// `D - I = |reference| - |hypothesis|`.
pub fn align<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditOps {
    let n = reference.len();
    let m = hypothesis.len();
    let mut prev: Vec<(usize, usize)> = (0..=m).map(|j| (j, j)).collect();
    let mut cur = prev.clone();
    for i in 1..=n {
        cur[0] = (i, i);
        for j in 1..=m {
            let diag = if reference[i - 1] == hypothesis[j - 1] {
                prev[j - 1]
            } else {
                (prev[j - 1].0 + 1, prev[j - 1].1)
            };
            let del = (prev[j].0 + 1, prev[j].1 + 1);
            let ins = (cur[j - 1].0 + 1, cur[j - 1].1 + 1);
            cur[j] = diag.min(del).min(ins);
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    let (dist, indels) = prev[m];
    // indels = D + I and D - I = n - m
    let deletions = (indels + n - m) / 2;
    EditOps {
        substitutions: dist - indels,
        deletions,
        insertions: indels - deletions,
        reference_length: n,
    }
}

fn nfc(text: &str, case_insensitive: bool) -> String {
    let s: String = text.nfc().collect();
    if case_insensitive {
        s.to_lowercase()
    } else {
        s
    }
}

fn edit_ops_folded(reference: &str, hypothesis: &str, unit: Unit, fold: bool) -> EditOps {
    let r = nfc(reference, fold);
    let h = nfc(hypothesis, fold);
    match unit {
        Unit::Character => {
            let rc: Vec<char> = r.chars().collect();
            let hc: Vec<char> = h.chars().collect();
            align(&rc, &hc)
        }
        Unit::Word => {
            let rw: Vec<&str> = r.split_whitespace().collect();
            let hw: Vec<&str> = h.split_whitespace().collect();
            align(&rw, &hw)
        }
    }
}

/// Edit operations turning `reference` into `hypothesis`. Fails when the
/// reference has no units, since the resulting rate would be undefined.
pub fn edit_ops(reference: &str, hypothesis: &str, unit: Unit) -> Result<EditOps, MetricsError> {
    let ops = edit_ops_folded(reference, hypothesis, unit, false);
    if ops.reference_length == 0 {
        return Err(MetricsError::EmptyReference);
    }
    Ok(ops)
}

pub fn cer(reference: &str, hypothesis: &str) -> Result<f64, MetricsError> {
    edit_ops(reference, hypothesis, Unit::Character)?.rate()
}

pub fn wer(reference: &str, hypothesis: &str) -> Result<f64, MetricsError> {
    edit_ops(reference, hypothesis, Unit::Word)?.rate()
}

pub const BLEU_MAX_ORDER: usize = 4;

/// Clipped n-gram statistics of one corpus, the sufficient statistics for BLEU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
struct BleuStats {
    matches: [usize; BLEU_MAX_ORDER],
    totals: [usize; BLEU_MAX_ORDER],
    hyp_len: usize,
    ref_len: usize,
}

fn ngram_counts<'a>(tokens: &'a [&'a str], n: usize) -> BTreeMap<&'a [&'a str], usize> {
    let mut counts = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

impl BleuStats {
    fn add_pair(&mut self, reference: &str, hypothesis: &str, fold: bool) {
        let r = nfc(reference, fold);
        let h = nfc(hypothesis, fold);
        let rt: Vec<&str> = r.split_whitespace().collect();
        let ht: Vec<&str> = h.split_whitespace().collect();
        self.ref_len += rt.len();
        self.hyp_len += ht.len();
        for n in 1..=BLEU_MAX_ORDER {
            let rc = ngram_counts(&rt, n);
            let hc = ngram_counts(&ht, n);
            for (gram, &count) in &hc {
                self.totals[n - 1] += count;
                self.matches[n - 1] += count.min(rc.get(gram).copied().unwrap_or(0));
            }
        }
    }

    fn score(&self) -> f64 {
        if self.hyp_len == 0 || self.matches[0] == 0 {
            return 0.0;
        }
        let longest = (0..BLEU_MAX_ORDER)
            .rev()
            .find(|&i| self.matches[i] > 0)
            .unwrap_or(0);
        let mut log_sum = 0.0;
        for i in 0..BLEU_MAX_ORDER {
            let p = if i <= longest {
                self.matches[i] as f64 / self.totals[i] as f64
            } else {
                (self.matches[i] + 1) as f64 / (self.totals[i] + 1) as f64
            };
            log_sum += libm::log(p);
        }
        let bp = if self.hyp_len > self.ref_len {
            1.0
        } else {
            libm::exp(1.0 - self.ref_len as f64 / self.hyp_len as f64)
        };
        (bp * libm::exp(log_sum / BLEU_MAX_ORDER as f64)).clamp(0.0, 1.0)
    }
}

/// Corpus BLEU over whitespace tokens: orders 1 to 4 with uniform weights and
/// the standard brevity penalty. Orders above the longest order with any
/// match use add-one smoothing, so short field values are not zeroed just for
/// being shorter than four tokens. No unigram match at all scores 0.
pub fn bleu<R, H>(references: &[R], hypotheses: &[H]) -> Result<f64, MetricsError>
where
    R: AsRef<str>,
    H: AsRef<str>,
{
    bleu_folded(references, hypotheses, false)
}

fn bleu_folded<R, H>(references: &[R], hypotheses: &[H], fold: bool) -> Result<f64, MetricsError>
where
    R: AsRef<str>,
    H: AsRef<str>,
{
    if references.len() != hypotheses.len() {
        return Err(MetricsError::LengthMismatch {
            references: references.len(),
            hypotheses: hypotheses.len(),
        });
    }
    if references.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let mut stats = BleuStats::default();
    for (r, h) in references.iter().zip(hypotheses) {
        stats.add_pair(r.as_ref(), h.as_ref(), fold);
    }
    Ok(stats.score())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextScore {
    pub cer: f64,
    pub wer: f64,
    pub bleu: f64,
}

/// One row of an OCR evaluation table, with the raw totals behind the rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldTextScore {
    pub pairs: usize,
    pub cer: f64,
    pub wer: f64,
    pub bleu: f64,
    pub char_edits: EditOps,
    pub word_edits: EditOps,
}

impl FieldTextScore {
    pub fn score(&self) -> TextScore {
        TextScore {
            cer: self.cer,
            wer: self.wer,
            bleu: self.bleu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrTable {
    pub fields: BTreeMap<FieldKind, FieldTextScore>,
    pub overall: FieldTextScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvalOptions {
    pub case_insensitive: bool,
}

#[derive(Default)]
struct Accumulator {
    pairs: usize,
    chars: EditOps,
    words: EditOps,
    bleu: BleuStats,
}

impl Accumulator {
    fn add(&mut self, reference: &str, hypothesis: &str, fold: bool) -> Result<(), MetricsError> {
        let chars = edit_ops_folded(reference, hypothesis, Unit::Character, fold);
        let words = edit_ops_folded(reference, hypothesis, Unit::Word, fold);
        if chars.reference_length == 0 || words.reference_length == 0 {
            return Err(MetricsError::EmptyReference);
        }
        self.pairs += 1;
        self.chars = self.chars.merge(chars);
        self.words = self.words.merge(words);
        self.bleu.add_pair(reference, hypothesis, fold);
        Ok(())
    }

    fn finish(&self) -> FieldTextScore {
        FieldTextScore {
            pairs: self.pairs,
            cer: self.chars.rate().unwrap_or(0.0),
            wer: self.words.rate().unwrap_or(0.0),
            bleu: self.bleu.score(),
            char_edits: self.chars,
            word_edits: self.words,
        }
    }
}

/// Per-field and overall CER, WER and BLEU for `(field, reference, hypothesis)`
/// triples. Every reference must be non-blank.
pub fn evaluate_ocr<S: AsRef<str>>(
    pairs: &[(FieldKind, S, S)],
    options: EvalOptions,
) -> Result<OcrTable, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let fold = options.case_insensitive;
    let mut per_field: BTreeMap<FieldKind, Accumulator> = BTreeMap::new();
    let mut overall = Accumulator::default();
    for (kind, reference, hypothesis) in pairs {
        let (r, h) = (reference.as_ref(), hypothesis.as_ref());
        per_field.entry(kind.clone()).or_default().add(r, h, fold)?;
        overall.add(r, h, fold)?;
    }
    Ok(OcrTable {
        fields: per_field.into_iter().map(|(k, a)| (k, a.finish())).collect(),
        overall: overall.finish(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn ops(s: usize, d: usize, i: usize, n: usize) -> EditOps {
        EditOps {
            substitutions: s,
            deletions: d,
            insertions: i,
            reference_length: n,
        }
    }

    #[test]
    fn identity() {
        assert_eq!(edit_ops("2019", "2019", Unit::Character).unwrap(), ops(0, 0, 0, 4));
        assert_eq!(cer("2019", "2019").unwrap(), 0.0);
    }

    #[test]
    fn kitten_sitting() {
        assert_eq!(edit_ops("kitten", "sitting", Unit::Character).unwrap(), ops(2, 0, 1, 6));
        assert_eq!(cer("kitten", "sitting").unwrap(), 0.5);
    }

    #[test]
    fn single_digit_substitution() {
        assert_eq!(edit_ops("379", "319", Unit::Character).unwrap(), ops(1, 0, 0, 3));
    }

    #[test]
    fn word_error_rate_on_names() {
        assert_eq!(wer("Amar Prakash", "Amar Prakesh").unwrap(), 0.5);
        assert_eq!(
            edit_ops("Amar Prakash", "Amar", Unit::Word).unwrap(),
            ops(0, 1, 0, 2)
        );
    }

    #[test]
    fn prefers_substitution_over_indel_pair() {
        // "ab" -> "ba" has minimal cost 2 as two substitutions or one
        // deletion plus one insertion; substitutions win.
        assert_eq!(align(&['a', 'b'], &['b', 'a']), ops(2, 0, 0, 2));
    }

    #[test]
    fn empty_reference() {
        assert_eq!(cer("", "x"), Err(MetricsError::EmptyReference));
        assert_eq!(wer("   ", "x"), Err(MetricsError::EmptyReference));
        assert_eq!(align::<char>(&[], &['a', 'b']), ops(0, 0, 2, 0));
    }

    #[test]
    fn rates_can_exceed_one() {
        assert_eq!(cer("ab", "abcdef").unwrap(), 2.0);
    }

    #[test]
    fn nfc_equivalent_strings_are_equal() {
        // "é" precomposed vs e + combining acute
        assert_eq!(cer("caf\u{e9}", "cafe\u{301}").unwrap(), 0.0);
    }

    #[test]
    fn bleu_identical_and_empty() {
        assert_eq!(bleu(&["a b c d"], &["a b c d"]).unwrap(), 1.0);
        assert_eq!(bleu(&["2019", "NDPS Act"], &["2019", "NDPS Act"]).unwrap(), 1.0);
        assert_eq!(bleu(&["a b c d"], &[""]).unwrap(), 0.0);
        assert_eq!(bleu(&["a b"], &["x y"]).unwrap(), 0.0);
        assert_eq!(bleu::<&str, &str>(&[], &[]), Err(MetricsError::EmptyCorpus));
        assert!(matches!(
            bleu(&["a"], &["a", "b"]),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn bleu_one_wrong_token_hand_computed() {
        // p1 = 3/4, p2 = 2/3, p3 = 1/2, p4 = 0/1 smoothed to 1/2, BP = 1
        // BLEU = (3/4 * 2/3 * 1/2 * 1/2)^(1/4) = (1/8)^(1/4)
        let got = bleu(&["a b c d"], &["a b c x"]).unwrap();
        assert!((got - 0.594_603_557_501_360_5).abs() < 1e-12, "{got}");
    }

    #[test]
    fn bleu_brevity_penalty_hand_computed() {
        // hyp "a b" vs ref "a b c d": p1 = p2 = 1, p3 and p4 have no
        // hypothesis n-grams so smooth to (0+1)/(0+1); BP = exp(1 - 4/2)
        let got = bleu(&["a b c d"], &["a b"]).unwrap();
        assert!((got - libm::exp(-1.0)).abs() < 1e-12, "{got}");
    }

    #[test]
    fn evaluate_ocr_rows() {
        let pairs = vec![
            (FieldKind::Year, "2019", "2019"),
            (FieldKind::Year, "2020", "2020"),
            (FieldKind::Statute, "NDPS Act", "xxxxxxxx"),
        ];
        let t = evaluate_ocr(&pairs, EvalOptions::default()).unwrap();
        let year = &t.fields[&FieldKind::Year];
        assert_eq!((year.cer, year.wer, year.bleu), (0.0, 0.0, 1.0));
        let st = &t.fields[&FieldKind::Statute];
        assert_eq!(st.cer, 1.0);
        assert_eq!(st.wer, 1.0);
        assert_eq!(st.bleu, 0.0);
        // 8 char edits over 16 reference chars
        assert_eq!(t.overall.cer, 0.5);
        assert!(t.overall.cer > year.cer && t.overall.cer < st.cer);
        assert_eq!(t.fields.len(), 2);
    }

    #[test]
    fn evaluate_ocr_case_option() {
        let pairs = vec![(FieldKind::PoliceStation, "Newtown", "NEWTOWN")];
        let sensitive = evaluate_ocr(&pairs, EvalOptions::default()).unwrap();
        let folded = evaluate_ocr(&pairs, EvalOptions { case_insensitive: true }).unwrap();
        assert!(sensitive.overall.cer > 0.0);
        assert_eq!(folded.overall.cer, 0.0);
    }

    #[test]
    fn evaluate_ocr_rejects_blank_reference() {
        let pairs = vec![(FieldKind::Year, " ".to_string(), "2019".to_string())];
        assert_eq!(
            evaluate_ocr(&pairs, EvalOptions::default()),
            Err(MetricsError::EmptyReference)
        );
    }

    fn short_string() -> impl Strategy<Value = String> {
        proptest::collection::vec(prop_oneof![Just('a'), Just('b'), Just('c'), Just(' ')], 0..10)
            .prop_map(|v| v.into_iter().collect())
    }

    proptest! {
        #[test]
        fn self_alignment_is_free(a in "\\PC{0,16}") {
            let chars: Vec<char> = a.chars().collect();
            prop_assert_eq!(align(&chars, &chars), ops(0, 0, 0, chars.len()));
        }

        #[test]
        fn swap_exchanges_deletions_and_insertions(a in short_string(), b in short_string()) {
            let ac: Vec<char> = a.chars().collect();
            let bc: Vec<char> = b.chars().collect();
            let fwd = align(&ac, &bc);
            let back = align(&bc, &ac);
            prop_assert_eq!(fwd.distance(), back.distance());
            prop_assert_eq!(fwd.substitutions, back.substitutions);
            prop_assert_eq!(fwd.deletions, back.insertions);
            prop_assert_eq!(fwd.insertions, back.deletions);
            prop_assert!(fwd.substitutions + fwd.deletions <= fwd.reference_length);
        }

        #[test]
        fn aligned_repetition_keeps_cer(
            pairs in proptest::collection::vec((0u8..3, any::<bool>()), 1..6),
            k in 1usize..4,
        ) {
            // mismatches use a symbol absent from the reference, so every one
            // costs at least one edit in any alignment and the position-wise
            // alignment stays optimal after repetition
            let a: String = pairs.iter().map(|p| (b'a' + p.0) as char).collect();
            let b: String = pairs
                .iter()
                .map(|p| if p.1 { 'z' } else { (b'a' + p.0) as char })
                .collect();
            let hamming = pairs.iter().filter(|p| p.1).count();
            prop_assert_eq!(edit_ops(&a, &b, Unit::Character).unwrap().distance(), hamming);
            prop_assert_eq!(cer(&a.repeat(k), &b.repeat(k)).unwrap(), cer(&a, &b).unwrap());
        }

        #[test]
        fn bleu_is_one_exactly_for_identical_corpora(
            corpus in proptest::collection::vec(
                (
                    proptest::collection::vec(0u8..4, 1..5),
                    proptest::collection::vec(0u8..4, 1..5),
                ),
                1..4,
            )
        ) {
            let render = |v: &Vec<u8>| -> String {
                let words: Vec<String> = v.iter().map(|t| alloc::format!("w{t}")).collect();
                words.join(" ")
            };
            let refs: Vec<String> = corpus.iter().map(|(r, _)| render(r)).collect();
            let hyps: Vec<String> = corpus.iter().map(|(_, h)| render(h)).collect();
            let score = bleu(&refs, &hyps).unwrap();
            prop_assert!((0.0..=1.0).contains(&score));
            prop_assert_eq!(score == 1.0, refs == hyps);
            prop_assert_eq!(bleu(&refs, &refs).unwrap(), 1.0);
        }
    }
}
