//! CSV parsing, validation errors, lenient mode and round trips.

use nestemb::data::{parse_csv, parse_csv_bytes, write_csv, DataError, ParseOptions, Rows};
use nestemb_core::dataset::{NliLabel, PairClassRow, PairRow, Schema, ScoredPair, TripletRow};
use proptest::prelude::*;

fn parse(text: &str, schema: Schema) -> Result<Rows, DataError> {
    parse_csv_bytes(text.as_bytes(), schema, &ParseOptions::default()).map(|p| p.rows)
}

#[test]
fn pair_file_with_three_rows() {
    let rows = parse(
        "anchor,positive\nا,ب\nكتاب,قلم\n\"a, b\",\"say \"\"hi\"\"\"\n",
        Schema::Pair,
    )
    .unwrap();
    assert_eq!(
        rows,
        Rows::Pair(vec![
            PairRow {
                anchor: "ا".into(),
                positive: "ب".into()
            },
            PairRow {
                anchor: "كتاب".into(),
                positive: "قلم".into()
            },
            PairRow {
                anchor: "a, b".into(),
                positive: "say \"hi\"".into()
            },
        ])
    );
}

#[test]
fn renamed_column_names_the_missing_one() {
    match parse("anchor,pos\nا,ب\n", Schema::Pair) {
        Err(DataError::Schema { column, .. }) => assert_eq!(column, "positive"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn label_out_of_range_is_a_row_error() {
    match parse(
        "premise,hypothesis,label\nا,ب,0\nا,ب,3\n",
        Schema::PairClass,
    ) {
        Err(DataError::Row { line, message }) => {
            assert_eq!(line, 3);
            assert!(message.contains("label"), "{message}");
        }
        other => panic!("{other:?}"),
    }
    let ok = parse("premise,hypothesis,label\nا,ب,2\n", Schema::PairClass).unwrap();
    assert_eq!(
        ok,
        Rows::PairClass(vec![PairClassRow {
            premise: "ا".into(),
            hypothesis: "ب".into(),
            label: NliLabel::Contradiction
        }])
    );
}

#[test]
fn invalid_utf8_reports_byte_offset() {
    let mut bytes = b"anchor,positive\nab,".to_vec();
    bytes.push(0xC3);
    bytes.extend_from_slice(b"(\n");
    match parse_csv_bytes(&bytes, Schema::Pair, &ParseOptions::default()) {
        Err(DataError::Decode { offset }) => assert_eq!(offset, 19),
        other => panic!("{other:?}"),
    }
}

#[test]
fn wrong_field_count_reports_line() {
    match parse("anchor,positive,negative\nا,ب,ج\nا,ب\n", Schema::Triplet) {
        Err(DataError::Row { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn crlf_and_quoted_newlines() {
    let rows = parse("anchor,positive\r\n\"سطر\nثان\",ب\r\nج,د\r\n", Schema::Pair).unwrap();
    assert_eq!(rows.len(), 2);
    let Rows::Pair(r) = rows else { unreachable!() };
    assert_eq!(r[0].anchor, "سطر\nثان");
}

#[test]
fn lenient_mode_quarantines_bad_rows() {
    let text = "anchor,positive,negative\nا,ب,ج\nا,ب\nا,ب,ب\nد,ه,و\n";
    let parsed = parse_csv_bytes(
        text.as_bytes(),
        Schema::Triplet,
        &ParseOptions {
            lenient: true,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(parsed.rows.len(), 2);
    assert_eq!(
        parsed.quarantine.iter().map(|q| q.line).collect::<Vec<_>>(),
        vec![3, 4]
    );
    assert!(parse(text, Schema::Triplet).is_err());
}

#[test]
fn sts_scores_are_normalized() {
    let rows = parse(
        "sentence1,sentence2,similarity score\nا,ب,2.6\nا,ج,5\n",
        Schema::Sts,
    )
    .unwrap();
    let Rows::Scored(r) = rows else {
        unreachable!()
    };
    assert!((r[0].gold - 0.52).abs() < 1e-12);
    assert_eq!(r[1].gold, 1.0);
    let custom = parse_csv_bytes(
        b"sentence1,sentence2,score\na,b,3\n",
        Schema::Sts,
        &ParseOptions {
            score_range: Some((1.0, 5.0)),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(custom.rows.into_scored().unwrap()[0].gold, 0.5);
    assert!(matches!(
        parse("sentence1,sentence2,score\na,b,1.5\n", Schema::PairScore),
        Err(DataError::Row { .. })
    ));
}

#[test]
fn header_only_and_empty_files() {
    assert_eq!(parse("anchor,positive\n", Schema::Pair).unwrap().len(), 0);
    assert!(matches!(
        parse("", Schema::Pair),
        Err(DataError::MissingHeader)
    ));
}

#[test]
fn reads_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    std::fs::write(&path, "anchor,positive\nا,ب\n").unwrap();
    assert_eq!(
        parse_csv(&path, Schema::Pair, &ParseOptions::default())
            .unwrap()
            .rows
            .len(),
        1
    );
    assert!(matches!(
        parse_csv(
            &dir.path().join("missing.csv"),
            Schema::Pair,
            &ParseOptions::default()
        ),
        Err(DataError::Io { .. })
    ));
}

fn text() -> impl Strategy<Value = String> {
    // Letters that survive normalization unchanged, plus CSV-special characters.
    proptest::collection::vec(
        prop_oneof![
            "[a-z]",
            "[بتثجحخ]",
            Just(",".to_owned()),
            Just("\"".to_owned()),
            Just("\n".to_owned())
        ],
        1..12,
    )
    .prop_map(|parts| format!("x{}", parts.concat()))
}

fn round_trip(rows: &Rows, schema: Schema) -> Rows {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).unwrap();
    parse_csv_bytes(&buf, schema, &ParseOptions::default())
        .unwrap()
        .rows
}

proptest! {
    #[test]
    fn triplets_round_trip(rows in proptest::collection::vec((text(), text(), text()), 0..8)) {
        let rows: Vec<TripletRow> = rows
            .into_iter()
            .map(|(a, p, n)| TripletRow { anchor: a, negative: format!("{n}n"), positive: format!("{p}p") })
            .collect();
        let rows = Rows::Triplet(rows);
        prop_assert_eq!(round_trip(&rows, Schema::Triplet), rows);
    }

    #[test]
    fn scored_pairs_round_trip(rows in proptest::collection::vec((text(), text(), 0.0f64..=1.0), 0..8)) {
        let rows = Rows::Scored(rows.into_iter().map(|(a, b, g)| ScoredPair { sentence1: a, sentence2: b, gold: g }).collect());
        prop_assert_eq!(round_trip(&rows, Schema::PairScore), rows);
    }

    #[test]
    fn pair_class_round_trip(rows in proptest::collection::vec((text(), text(), 0u8..3), 0..8)) {
        let rows = Rows::PairClass(rows.into_iter().map(|(a, b, l)| PairClassRow { premise: a, hypothesis: b, label: NliLabel::from_id(l).unwrap() }).collect());
        prop_assert_eq!(round_trip(&rows, Schema::PairClass), rows);
    }
}
