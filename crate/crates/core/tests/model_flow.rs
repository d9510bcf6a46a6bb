//! Assembled-model behavior: parameter counts at the reference
//! configuration, attention extraction, the credibility decomposition on
//! real forward passes, and prediction determinism.

use credtrans_core::autodiff::{Phase, Tape};
use credtrans_core::credibility::decompose_cls_attention;
use credtrans_core::data::{Column, Dataset};
use credtrans_core::explain;
use credtrans_core::tensor::Tensor2;
use credtrans_core::tokenizer::{CovariateSpec, Schema};
use credtrans_core::{CtModel, ModelConfig, PredictMode, StreamRng};

fn mtpl_like(n: usize, seed: u64) -> (Dataset, Schema) {
    let mut rng = StreamRng::from_seed(seed).stream("data");
    let mut columns = Vec::new();
    let mut specs = Vec::new();
    for (name, levels) in [("c1", 6usize), ("c2", 2), ("c3", 11), ("c4", 22)] {
        columns.push(Column::categorical(
            name,
            (0..n).map(|i| (i % levels) as u32).collect(),
            (0..levels).map(|i| format!("v{i}")).collect(),
        ));
        specs.push(CovariateSpec::categorical(name));
    }
    for name in ["x1", "x2", "x3", "x4", "x5"] {
        columns.push(Column::continuous(name, (0..n).map(|_| rng.uniform_in(-1.0, 3.0)).collect()));
        specs.push(CovariateSpec::continuous(name));
    }
    let exposure: Vec<f64> = (0..n).map(|_| rng.uniform_in(0.5, 1.0)).collect();
    let counts: Vec<f64> = (0..n).map(|_| rng.poisson(0.1) as f64).collect();
    let ds = Dataset::new(columns, exposure, counts).unwrap();
    let schema = Schema::new(specs, 5).unwrap();
    (ds, schema)
}

fn reference_model(n: usize) -> (CtModel, Dataset) {
    let (ds, schema) = mtpl_like(n, 42);
    let rows: Vec<usize> = (0..n).collect();
    let model = CtModel::new(ModelConfig::base(5), schema, &ds, &rows, 1).unwrap();
    (model, ds)
}

#[test]
fn parameter_counts_match_the_architecture_table() {
    let (model, _) = reference_model(66);
    let report = model.parameter_counts();
    assert_eq!(report.tokenizer, 405, "feature tokenizer");
    assert_eq!(report.positional, 45, "positional encoding");
    assert_eq!(report.cls, 10, "CLS token");
    assert_eq!(report.input_norm, 20, "time-distributed input normalization");
    assert_eq!(report.decoder, 193, "decoder");
    // Enumerating the transformer block gives 1,052 weights: 330 K/Q/V +
    // 352 FNN1 + 330 FNN2 + 2 x 20 layer norms. The reference table lists
    // 1,073 for this block; the 21-weight gap is not explained there and
    // the enumerated count is what this implementation reports.
    assert_eq!(report.transformer, 330 + 352 + 330 + 40);
    assert_eq!(report.gates, 0);
    assert_eq!(
        report.total,
        405 + 45 + 10 + 20 + 1052 + 193,
        "total enumerated weights"
    );
}

#[test]
fn improved_config_registers_gates_scales_and_ple() {
    let (ds, _) = mtpl_like(66, 43);
    let schema = Schema::new(
        vec![
            CovariateSpec::categorical("c1"),
            CovariateSpec::categorical("c2"),
            CovariateSpec::continuous_ple("x1", 8),
            CovariateSpec::continuous_ple("x2", 8),
        ],
        4,
    )
    .unwrap();
    let rows: Vec<usize> = (0..66).collect();
    let model =
        CtModel::new(ModelConfig::improved(4, 2, 2), schema, &ds, &rows, 3).unwrap();
    let report = model.parameter_counts();
    assert_eq!(report.gates, 4);
    // PLE per continuous covariate: 8 log lengths + 8x4 weights + 4 biases.
    let expected_tok = 4 * (6 + 2) + 2 * (8 + 8 * 4 + 4);
    assert_eq!(report.tokenizer, expected_tok);
    // Two layers, two heads with scaling: per layer 3 maps of 8->4 per head
    // plus two alphas, an 8x8 output projection, SwiGLU FFN1 and FFN2, and
    // two norms.
    let per_layer = 2 * 3 * (8 * 4 + 4) + 2 + 8 * 8 + 2 * (8 * 32 + 32) + (32 * 8 + 8) + 2 * 16;
    assert_eq!(report.transformer, 2 * per_layer);
}

#[test]
fn uniform_attention_when_kqv_weights_vanish() {
    let (mut model, ds) = reference_model(66);
    for name in ["key", "query", "value"] {
        for part in ["w", "b"] {
            let id = model.store.find(&format!("layer0.{name}.{part}")).unwrap();
            model.store.value_mut(id).fill(0.0);
        }
    }
    let layers = explain::extract_attention(&model, &ds).unwrap();
    assert_eq!(layers.len(), 1);
    let records = &layers[0].records;
    assert_eq!(records.len(), ds.len());
    let seq = model.seq_len() as f64;
    for r in records {
        for &w in &r.attention {
            assert!((w - 1.0 / seq).abs() < 1e-12);
        }
        let total: f64 = r.attention.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!((r.p - 1.0 / seq).abs() < 1e-12);
    }
}

#[test]
fn attention_records_always_sum_to_one() {
    let (model, ds) = reference_model(66);
    let layers = explain::extract_attention(&model, &ds).unwrap();
    for r in &layers[0].records {
        let total: f64 = r.attention.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert_eq!(r.attention.len(), model.seq_len());
        assert!(r.mu > 0.0);
    }
}

#[test]
fn credibility_decomposition_holds_on_model_forward_passes() {
    // 100 instances through the real model at T = 9, 2b = 10: the CLS row
    // of A V reconstructs from (P, v_cls, v_covariate) to 1e-10.
    let (model, ds) = reference_model(100);
    let encoded = model.encode(&ds).unwrap();
    let mut rng = StreamRng::from_seed(9).stream("fwd");
    let rows: Vec<usize> = (0..100).collect();
    let mut tape = Tape::new();
    let fwd = model
        .forward_batch(&mut tape, &encoded, &rows, Phase::Predict, PredictMode::Trans, &mut rng)
        .unwrap();
    let seq = model.seq_len();
    let a_all = tape.value(fwd.attention[0][0]).clone();
    let v_all = tape.value(fwd.values[0][0]).clone();
    for i in 0..rows.len() {
        let a = Tensor2::new(
            seq,
            seq,
            (0..seq).flat_map(|t| a_all.row(i * seq + t).to_vec()).collect(),
        );
        let v = Tensor2::new(
            seq,
            seq,
            (0..seq).flat_map(|t| v_all.row(i * seq + t).to_vec()).collect(),
        );
        let d = decompose_cls_attention(&a, &v).unwrap();
        assert!(d.identity_gap(&v) < 1e-10, "instance {i}: gap {}", d.identity_gap(&v));
        assert!(d.p > 0.0 && d.p < 1.0);
    }
}

#[test]
fn prior_prediction_is_constant_across_inputs() {
    // The prior path never sees covariates: with Z = 0 the prediction is
    // the same value for every instance, exactly.
    let (model, ds) = reference_model(100);
    let mu = model.predict_dataset(&ds, PredictMode::Prior).unwrap();
    let first = mu[0];
    assert!(first > 0.0);
    for (i, &m) in mu.iter().enumerate() {
        assert!((m - first).abs() < 1e-12, "instance {i}: {m} vs {first}");
    }
    // The transformer-path prediction does vary.
    let mu_trans = model.predict_dataset(&ds, PredictMode::Trans).unwrap();
    let spread = mu_trans.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - mu_trans.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread > 0.0);
}

#[test]
fn deterministic_mix_interpolates_predictions() {
    let (model, ds) = reference_model(50);
    let trans = model.predict_dataset(&ds, PredictMode::Trans).unwrap();
    let prior = model.predict_dataset(&ds, PredictMode::Prior).unwrap();
    let mix = model.predict_dataset(&ds, PredictMode::Mix(1.0)).unwrap();
    for (a, b) in mix.iter().zip(trans.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
    let mix0 = model.predict_dataset(&ds, PredictMode::Mix(0.0)).unwrap();
    for (a, b) in mix0.iter().zip(prior.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn prediction_is_bit_identical_across_calls_and_threads() {
    let (model, ds) = reference_model(64);
    let a = model.predict_dataset(&ds, PredictMode::Trans).unwrap();
    let b = model.predict_dataset(&ds, PredictMode::Trans).unwrap();
    for (x, y) in a.iter().zip(b.iter()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
    // Parameters are read-only at inference and shareable across threads.
    let shared = &model;
    let ds_ref = &ds;
    let results: Vec<Vec<f64>> = std::thread::scope(|scope| {
        (0..4)
            .map(|_| scope.spawn(move || shared.predict_dataset(ds_ref, PredictMode::Trans).unwrap()))
            .collect::<Vec<_>>()
            .into_iter()
            .map(|h| h.join().unwrap())
            .collect()
    });
    for r in &results {
        for (x, y) in r.iter().zip(a.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

#[test]
fn batch_size_does_not_change_predictions() {
    let (model, ds) = reference_model(33);
    let encoded = model.encode(&ds).unwrap();
    let full = model.predict_encoded(&encoded, PredictMode::Trans).unwrap();
    // Forward one row at a time.
    let mut rng = StreamRng::from_seed(0).stream("one");
    for i in 0..ds.len() {
        let mut tape = Tape::new();
        let fwd = model
            .forward_batch(&mut tape, &encoded, &[i], Phase::Predict, PredictMode::Trans, &mut rng)
            .unwrap();
        let single = tape.value(fwd.mu).scalar();
        assert!(
            (single - full[i]).abs() < 1e-12,
            "row {i}: batched {} vs single {single}",
            full[i]
        );
    }
}
