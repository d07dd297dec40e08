use figtab::export::{self, ExportFormat, ExportOptions};
use figtab::metrics::{self, Tolerance};
use figtab::table::{CellEdit, DataTable};
use proptest::prelude::*;

fn cell() -> impl Strategy<Value = String> {
    prop_oneof![
        Just(String::new()),
        (-1e6f64..1e6).prop_map(|v| format!("{v:.3}")),
        (1u32..999, 0u32..1000).prop_map(|(a, b)| format!("{a},{b:03}")),
        (0.1f64..99.0, prop::sample::select(vec!["k", "M", "%", " million", " bn"])).prop_map(|(v, s)| format!("{v:.1}{s}")),
        "[a-zA-Z ,\"'é∑=+-]{0,12}",
    ]
}

fn table() -> impl Strategy<Value = DataTable> {
    (1usize..6)
        .prop_flat_map(|w| (prop::collection::vec("[A-Za-z ,]{0,8}", w), prop::collection::vec(prop::collection::vec(cell(), w), 0..8)))
        .prop_map(|(header, rows)| DataTable::from_raw(header, rows))
}

fn column() -> impl Strategy<Value = Vec<Option<f64>>> {
    prop::collection::vec(prop::option::weighted(0.85, (0u32..6).prop_map(|k| 100.0 * 1.03f64.powi(k as i32))), 1..5)
}

fn matrix() -> impl Strategy<Value = Vec<Vec<Option<f64>>>> {
    prop::collection::vec(column(), 1..5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn text_formats_round_trip(t in table()) {
        let opts = ExportOptions::default();
        for (format, import) in [
            (ExportFormat::Csv, export::import_csv as fn(&[u8]) -> _),
            (ExportFormat::Tsv, export::import_tsv),
            (ExportFormat::Json, export::import_json),
        ] {
            let back = import(&export::export_table(&t, format, &opts).unwrap()).unwrap();
            prop_assert_eq!(&back.header, &t.header);
            prop_assert_eq!(&back.rows, &t.rows);
            prop_assert_eq!(&back.row_confidence, &t.row_confidence);
        }
    }

    #[test]
    fn edits_touch_one_cell(t in table(), r in 0usize..8, c in 0usize..6, raw in cell()) {
        let edit = CellEdit { row_index: r, col_index: c, new_raw: raw.clone() };
        match t.apply_edit(&edit) {
            Ok(e) => {
                prop_assert!(r < t.height() && c < t.width());
                for (i, (a, b)) in t.raw_rows().iter().zip(e.raw_rows()).enumerate() {
                    for (j, (x, y)) in a.iter().zip(&b).enumerate() {
                        if (i, j) == (r, c) { prop_assert_eq!(y, &raw); } else { prop_assert_eq!(x, y); }
                    }
                }
            }
            Err(_) => prop_assert!(r >= t.height() || c >= t.width()),
        }
    }

    #[test]
    fn rmsf1_counts_are_bounded(pred in matrix(), gt in matrix()) {
        let tol = Tolerance::default();
        prop_assume!(gt.iter().flatten().any(Option::is_some));
        let m = metrics::rmsf1(&pred, &gt, &tol).unwrap();
        prop_assert!(m.matched <= m.pred_total.min(m.gt_total));
        prop_assert!((0.0..=1.0).contains(&m.f1));
        for (p, g) in &m.matched_pairs {
            let pv = pred[p.col][p.row].unwrap();
            let gv = gt[g.col][g.row].unwrap();
            prop_assert!(metrics::value_match(pv, gv, &tol));
        }
    }

    #[test]
    fn wider_tolerance_never_matches_less(pred in matrix(), gt in matrix()) {
        prop_assume!(gt.iter().flatten().any(Option::is_some));
        let narrow = metrics::rmsf1(&pred, &gt, &Tolerance::relative(0.02)).unwrap();
        let wide = metrics::rmsf1(&pred, &gt, &Tolerance::relative(0.05)).unwrap();
        prop_assert!(wide.matched >= narrow.matched);
    }

    #[test]
    fn self_match_is_perfect(gt in matrix()) {
        prop_assume!(gt.iter().flatten().any(Option::is_some));
        let m = metrics::rmsf1(&gt, &gt, &Tolerance::default()).unwrap();
        prop_assert_eq!(m.f1, 1.0);
    }
}
