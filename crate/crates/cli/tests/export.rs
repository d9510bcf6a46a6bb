//! Attention-export formats: stable columns, round trips, and a golden file
//! from a fixed toy model.

use credtrans_cli::export;
use credtrans_core::data::{Column, Dataset};
use credtrans_core::explain;
use credtrans_core::tokenizer::{CovariateSpec, Schema};
use credtrans_core::{CtModel, Error, ModelConfig, StreamRng};

/// Toy model with zeroed K/Q/V maps: attention is exactly uniform, so every
/// export value is known in closed form.
fn toy_model_and_data() -> (CtModel, Dataset) {
    let n = 6;
    let columns = vec![
        Column::categorical(
            "g",
            vec![0, 1, 0, 1, 0, 1],
            vec!["a".into(), "b".into()],
        ),
        Column::continuous("u", vec![-1.0, -0.5, 0.0, 0.5, 1.0, 1.5]),
    ];
    let ds = Dataset::new(columns, vec![1.0; n], vec![0.0, 1.0, 0.0, 0.0, 2.0, 0.0]).unwrap();
    let schema =
        Schema::new(vec![CovariateSpec::categorical("g"), CovariateSpec::continuous("u")], 2)
            .unwrap();
    let rows: Vec<usize> = (0..n).collect();
    let mut model = CtModel::new(
        ModelConfig { embed_dim: 2, ffn_hidden: 4, decoder_hidden: 4, ..ModelConfig::base(2) },
        schema,
        &ds,
        &rows,
        123,
    )
    .unwrap();
    for name in ["key", "query", "value"] {
        for part in ["w", "b"] {
            let id = model.store.find(&format!("layer0.{name}.{part}")).unwrap();
            model.store.value_mut(id).fill(0.0);
        }
    }
    (model, ds)
}

#[test]
fn golden_summary_export_from_the_toy_model() {
    let (model, ds) = toy_model_and_data();
    let layers = explain::extract_attention(&model, &ds).unwrap();
    let names = explain::token_names(&model);
    let summary = explain::summarize(&layers[0].records, &names).unwrap();
    // Uniform attention over T+1 = 3 tokens: every mean is exactly 1/3 and
    // every P lands in the [0.330, 0.335) histogram bin.
    let csv = export::summary_csv(&summary);
    let golden = "token_name,mean_attention\n\
                  g,0.3333333333333333\n\
                  u,0.3333333333333333\n\
                  CLS,0.3333333333333333\n";
    assert_eq!(csv, golden);
    let hist = export::histogram_csv(&summary);
    let golden_hist = "bin_lo,bin_hi,count\n0.33,0.335,6\n";
    assert_eq!(hist, golden_hist);
}

#[test]
fn summary_round_trip_through_csv() {
    let (model, ds) = toy_model_and_data();
    let layers = explain::extract_attention(&model, &ds).unwrap();
    let names = explain::token_names(&model);
    let summary = explain::summarize(&layers[0].records, &names).unwrap();
    let csv = export::summary_csv(&summary);
    let (parsed_names, parsed_values) = export::parse_summary_csv(&csv).unwrap();
    assert_eq!(parsed_names, summary.token_names);
    assert_eq!(parsed_values, summary.mean_attention);
    let bins = export::parse_histogram_csv(&export::histogram_csv(&summary)).unwrap();
    assert_eq!(bins, summary.p_histogram);
}

#[test]
fn scatter_and_triples_have_stable_columns() {
    let (model, ds) = toy_model_and_data();
    let layers = explain::extract_attention(&model, &ds).unwrap();
    let points = explain::scatter(&layers[0].records, &ds, &model, "u").unwrap();
    let csv = export::scatter_csv(&points);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("value,attention"));
    let first = lines.next().unwrap();
    assert!(first.starts_with("-1,"), "{first}");
    // Categorical scatter carries level names.
    let points_g = explain::scatter(&layers[0].records, &ds, &model, "g").unwrap();
    let csv_g = export::scatter_csv(&points_g);
    assert!(csv_g.lines().nth(1).unwrap().starts_with("a,"));

    let triples = explain::triples(&layers[0].records, &ds, "u").unwrap();
    let tcsv = export::triples_csv(&triples);
    assert_eq!(tcsv.lines().next(), Some("value,mu,p"));
    assert_eq!(tcsv.lines().count(), 1 + ds.len());
}

#[test]
fn unknown_covariate_is_named_in_the_error() {
    let (model, ds) = toy_model_and_data();
    let layers = explain::extract_attention(&model, &ds).unwrap();
    let err = explain::scatter(&layers[0].records, &ds, &model, "velocity").unwrap_err();
    assert_eq!(err, Error::UnknownCovariate { name: "velocity".into() });
}

#[test]
fn records_csv_carries_one_row_per_instance() {
    let (model, ds) = toy_model_and_data();
    let layers = explain::extract_attention(&model, &ds).unwrap();
    let names = explain::token_names(&model);
    let csv = export::records_csv(&layers[0].records, &names);
    assert_eq!(csv.lines().count(), 1 + ds.len());
    assert_eq!(csv.lines().next(), Some("instance,a_g,a_u,a_CLS,p,mu"));
}
