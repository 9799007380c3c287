use chrono::Days;
use invoice_lifecycle::ingest::{
    days_since_open, parse_case_manifest_str, parse_invoice_str, validate_items,
    write_case_manifest, write_invoice_rows, Case, CaseHeader, Decimal2, FlagKind, ParsedFile,
};
use invoice_lifecycle::synth::{gen_corpus, CorpusSpec};
use proptest::prelude::*;

fn parsed(name: &str, text: &str) -> ParsedFile {
    ParsedFile {
        path: name.into(),
        records: parse_invoice_str(name, text).unwrap(),
    }
}

#[test]
fn generated_corpus_survives_the_pipe_format() {
    let corpus = gen_corpus(&CorpusSpec {
        n_cases: 30,
        seed: 3,
        ..CorpusSpec::default()
    })
    .unwrap();
    let headers: Vec<CaseHeader> = corpus.cases.iter().map(Case::header).collect();
    let manifest = parse_case_manifest_str("cases", &write_case_manifest(&headers)).unwrap();
    assert_eq!(manifest, headers);
    let text = write_invoice_rows(corpus.cases.iter().flat_map(|c| &c.items));
    let (back, flags) = validate_items(&[parsed("all.txt", &text)], &manifest, None).unwrap();
    assert_eq!(back.cases, corpus.cases);
    assert!(flags.iter().all(|f| f.flag == FlagKind::MathMismatch));
    for case in &back.cases {
        for it in &case.items {
            assert!(it.service_date >= case.open_date);
            let _ = days_since_open(it, case).unwrap();
        }
    }
}

#[test]
fn records_split_into_accepted_and_rejected() {
    let corpus = gen_corpus(&CorpusSpec {
        n_cases: 12,
        seed: 9,
        ..CorpusSpec::default()
    })
    .unwrap();
    let mut items: Vec<_> = corpus.cases.iter().flat_map(|c| c.items.clone()).collect();
    let mut shifted = 0;
    for (i, it) in items.iter_mut().enumerate() {
        if i % 37 == 0 {
            let open = corpus.case(&it.case_id).unwrap().open_date;
            it.service_date = open - Days::new(1 + i as u64 % 5);
            shifted += 1;
        }
    }
    let half = items.len() / 2;
    let files = [
        parsed("a.txt", &write_invoice_rows(&items[..half])),
        parsed("b.txt", &write_invoice_rows(&items[half..])),
    ];
    let headers: Vec<CaseHeader> = corpus.cases.iter().map(Case::header).collect();
    let (back, flags) = validate_items(&files, &headers, Some("cases.txt")).unwrap();
    let counts = &back.ingest_manifest.files;
    for c in counts {
        assert_eq!(c.records, c.accepted + c.rejected);
    }
    assert_eq!(counts.iter().map(|c| c.rejected).sum::<usize>(), shifted);
    assert_eq!(back.item_count(), items.len() - shifted);
    assert_eq!(
        flags
            .iter()
            .filter(|f| f.flag == FlagKind::DateBeforeOpen)
            .count(),
        shifted
    );
}

#[test]
fn duplicate_and_unknown_references_are_hard_errors() {
    let header = "line_id|invoice_id|case_id|service_date|item_type|task_code|activity_code|expense_code|timekeeper_id|timekeeper_role|hours|rate|total|description\n";
    let line = "LN1|INV001|CASE42|2020-03-15|FEE|L240|A103||TK07|ASSOCIATE|2.5|350.00|875.00|Draft motion\n";
    let cases = parse_case_manifest_str(
        "c",
        "case_id|category|open_date\nCASE42|Litigation|2020-01-01\n",
    )
    .unwrap();
    let dup = parsed("d.txt", &format!("{header}{line}{line}"));
    assert!(validate_items(&[dup], &cases, None)
        .unwrap_err()
        .to_string()
        .contains("LN1"));
    let unknown = parsed(
        "u.txt",
        &format!("{header}{}", line.replace("CASE42", "CASE43")),
    );
    let err = validate_items(&[unknown], &cases, None)
        .unwrap_err()
        .to_string();
    assert!(err.contains("CASE43"), "{err}");
}

proptest! {
    #[test]
    fn decimals_round_trip_through_text(hundredths in 0i64..1_000_000_000) {
        let d = Decimal2::from_hundredths(hundredths);
        prop_assert_eq!(d.to_string().parse::<Decimal2>().unwrap(), d);
    }

    #[test]
    fn signed_decimals_are_rejected(v in 1i64..100_000) {
        let text = format!("-{}", v);
        prop_assert!(text.parse::<Decimal2>().is_err());
    }

    #[test]
    fn parsing_is_deterministic_and_order_preserving(seed in 0u64..500) {
        let corpus = gen_corpus(&CorpusSpec { n_cases: 4, seed, ..CorpusSpec::default() }).unwrap();
        let items: Vec<_> = corpus.cases.iter().flat_map(|c| c.items.clone()).collect();
        let text = write_invoice_rows(&items);
        let a = parse_invoice_str("f", &text).unwrap();
        prop_assert_eq!(&a, &parse_invoice_str("f", &text).unwrap());
        let back: Vec<_> = a.into_iter().map(|r| r.item).collect();
        prop_assert_eq!(back, items);
    }
}
