use docforge_core::corrector::{
    build_index, correct_field, correct_field_traced, CorrectionPolicy, GazetteerRecord, IndexSet,
};
use docforge_core::{FieldKind, RecognizedField};
use proptest::prelude::*;

const NAMES: &[&str] = &[
    "Anamul", "Shyam", "Barnali", "Rasida", "Amar", "Prakash", "Haque", "Das", "Pramanik",
    "Begam", "Lian", "Min", "Thang", "Subhas", "Pradhan", "Mondal",
];
const STATIONS: &[&str] = &["Baguiati", "Airport", "Newtown", "Saltlake", "Bidhannagar North"];

fn indexes() -> IndexSet {
    let mut set = IndexSet::new();
    for (kind, entries) in [
        (FieldKind::ComplainantName, NAMES),
        (FieldKind::PoliceStation, STATIONS),
    ] {
        let recs: Vec<GazetteerRecord> = entries
            .iter()
            .map(|e| GazetteerRecord::new(kind.clone(), *e))
            .collect();
        set.insert(kind, build_index(&recs, 3).unwrap());
    }
    set
}

fn corrupt(s: &str, edits: &[(usize, u8)]) -> String {
    let mut chars: Vec<char> = s.chars().collect();
    for &(pos, c) in edits {
        if chars.is_empty() {
            break;
        }
        let p = pos % chars.len();
        chars[p] = (b'a' + c % 26) as char;
    }
    chars.into_iter().collect()
}

fn arb_field() -> impl Strategy<Value = RecognizedField> {
    (
        any::<bool>(),
        0usize..64,
        0usize..64,
        proptest::collection::vec((0usize..40, any::<u8>()), 0..3),
        0.0..1.0f64,
    )
        .prop_map(|(is_name, a, b, edits, conf)| {
            if is_name {
                let text = format!("{} {}", NAMES[a % NAMES.len()], NAMES[b % NAMES.len()]);
                RecognizedField::new(FieldKind::ComplainantName, corrupt(&text, &edits), conf)
            } else {
                let text = STATIONS[a % STATIONS.len()];
                RecognizedField::new(FieldKind::PoliceStation, corrupt(text, &edits), conf)
            }
        })
}

fn policy(ocr: f64, accept: f64) -> CorrectionPolicy {
    CorrectionPolicy {
        ocr_confidence_threshold: ocr,
        knn_accept_threshold: accept,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn correction_is_idempotent(rec in arb_field(), accept in 0.3..0.95f64) {
        let set = indexes();
        let p = policy(0.7, accept);
        let once = correct_field(&rec, &set, &p).unwrap();
        let twice = correct_field(&once, &set, &p).unwrap();
        prop_assert_eq!(&twice, &once);
        prop_assert!(once.is_consistent());
    }

    #[test]
    fn raising_accept_threshold_never_adds_replacements(
        rec in arb_field(),
        lo in 0.2..0.9f64,
        delta in 0.0..0.1f64,
    ) {
        let set = indexes();
        let loose = correct_field_traced(&rec, &set, &policy(0.7, lo)).unwrap();
        let strict = correct_field_traced(&rec, &set, &policy(0.7, lo + delta)).unwrap();
        for (i, _) in strict.replaced_units() {
            prop_assert!(loose.units[i].replaced);
        }
    }

    #[test]
    fn raising_ocr_threshold_never_drops_considered_fields(
        rec in arb_field(),
        lo in 0.0..0.9f64,
        delta in 0.0..0.1f64,
    ) {
        let set = indexes();
        let low = correct_field_traced(&rec, &set, &policy(lo, 0.9)).unwrap();
        let high = correct_field_traced(&rec, &set, &policy(lo + delta, 0.9)).unwrap();
        prop_assert!(!low.considered || high.considered);
    }

    #[test]
    fn similarities_are_symmetric_and_bounded(a in 0usize..16, b in 0usize..16) {
        // cosine over a two-entry index built from both strings
        let recs = [
            GazetteerRecord::new(FieldKind::ComplainantName, NAMES[a]),
            GazetteerRecord::new(FieldKind::ComplainantName, NAMES[b]),
        ];
        let idx = build_index(&recs, 3).unwrap();
        let find = |q: &str, target: &str| {
            idx.knn_search(q, 2)
                .into_iter()
                .find(|m| m.entry == target)
                .map(|m| m.similarity)
                .unwrap_or(0.0)
        };
        let ab = find(NAMES[a], NAMES[b]);
        let ba = find(NAMES[b], NAMES[a]);
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
    }
}

#[test]
fn confident_fields_pass_through() {
    let set = indexes();
    for rec in [
        RecognizedField::new(FieldKind::Year, "2019", 0.89),
        RecognizedField::new(FieldKind::ComplainantName, "Lian Min Thang", 0.77),
        RecognizedField::new(FieldKind::PoliceStation, "Nscbi Airport", 0.79),
        RecognizedField::new(FieldKind::Other("379".into()), "379", 0.96),
    ] {
        assert_eq!(correct_field(&rec, &set, &CorrectionPolicy::default()).unwrap(), rec);
    }
}

#[test]
fn long_station_name_with_one_typo_is_corrected() {
    let set = indexes();
    let rec = RecognizedField::new(FieldKind::PoliceStation, "Bidhannagar Narth", 0.41);
    let t = correct_field_traced(&rec, &set, &CorrectionPolicy::default()).unwrap();
    let best = t.units[0].best.clone().unwrap();
    assert_eq!(best.entry, "Bidhannagar North");
    assert!(best.similarity > 0.7);
}
