//! Tokenizer contracts: embeddings, PLE, robust scaling, the augmented
//! tensor, and parameter counts.

use credtrans_core::autodiff::{gradcheck, ParamStore, Tape};
use credtrans_core::data::{Column, Dataset};
use credtrans_core::tensor::Tensor2;
use credtrans_core::tokenizer::{
    count_input_parameters, ple_boundaries, ple_encode_value, quantile_sorted, CovariateSpec,
    RobustScaler, Schema, Tokenizer,
};
use credtrans_core::{Error, StreamRng};

fn cycling_codes(n: usize, levels: usize) -> Vec<u32> {
    (0..n).map(|i| (i % levels) as u32).collect()
}

fn level_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("v{i}")).collect()
}

/// Dataset shaped like the motor portfolio: 4 categorical covariates with
/// 6/2/11/22 levels and 5 continuous ones.
fn mtpl_shaped_dataset(n: usize) -> Dataset {
    let mut rng = StreamRng::from_seed(100).stream("data");
    let mut columns = Vec::new();
    for (name, levels) in [("c1", 6), ("c2", 2), ("c3", 11), ("c4", 22)] {
        columns.push(Column::categorical(name, cycling_codes(n, levels), level_names(levels)));
    }
    for name in ["x1", "x2", "x3", "x4", "x5"] {
        columns.push(Column::continuous(
            name,
            (0..n).map(|_| rng.uniform_in(-2.0, 5.0)).collect(),
        ));
    }
    let exposure = vec![1.0; n];
    let counts = vec![0.0; n];
    Dataset::new(columns, exposure, counts).unwrap()
}

fn mtpl_shaped_schema(b: usize) -> Schema {
    Schema::new(
        vec![
            CovariateSpec::categorical("c1"),
            CovariateSpec::categorical("c2"),
            CovariateSpec::categorical("c3"),
            CovariateSpec::categorical("c4"),
            CovariateSpec::continuous("x1"),
            CovariateSpec::continuous("x2"),
            CovariateSpec::continuous("x3"),
            CovariateSpec::continuous("x4"),
            CovariateSpec::continuous("x5"),
        ],
        b,
    )
    .unwrap()
}

fn fit_tokenizer(ds: &Dataset, schema: Schema) -> (Tokenizer, ParamStore) {
    let mut store = ParamStore::new();
    let rows: Vec<usize> = (0..ds.len()).collect();
    let rng = StreamRng::from_seed(7);
    let tok = Tokenizer::fit(schema, ds, &rows, false, &mut store, &rng).unwrap();
    (tok, store)
}

// ── entity embeddings ────────────────────────────────────────────────

#[test]
fn zero_initialized_table_embeds_to_zero() {
    let ds = mtpl_shaped_dataset(66);
    let (tok, mut store) = fit_tokenizer(&ds, mtpl_shaped_schema(5));
    let table = store.find("tokenizer.c1.table").unwrap();
    store.value_mut(table).fill(0.0);
    let encoded = tok.encode(&ds).unwrap();
    let mut tape = Tape::new();
    let emb = tok.embed_covariate(&mut tape, &store, &encoded, 0, &[0, 1, 2]).unwrap();
    assert!(tape.value(emb).data().iter().all(|&v| v == 0.0));
}

#[test]
fn distinct_levels_use_distinct_rows() {
    let ds = mtpl_shaped_dataset(66);
    let (tok, mut store) = fit_tokenizer(&ds, mtpl_shaped_schema(5));
    let encoded = tok.encode(&ds).unwrap();
    // Rows 0 and 1 carry levels v0 and v1 of c1.
    let before = {
        let mut tape = Tape::new();
        let emb = tok.embed_covariate(&mut tape, &store, &encoded, 0, &[0, 1]).unwrap();
        tape.value(emb).clone()
    };
    // Perturb the table row of level v0 only.
    let table = store.find("tokenizer.c1.table").unwrap();
    let row0 = tok.level_index(0, "v0").unwrap();
    for c in 0..5 {
        *store.value_mut(table).at_mut(row0, c) += 0.5;
    }
    let after = {
        let mut tape = Tape::new();
        let emb = tok.embed_covariate(&mut tape, &store, &encoded, 0, &[0, 1]).unwrap();
        tape.value(emb).clone()
    };
    assert_ne!(before.row(0), after.row(0));
    assert_eq!(before.row(1), after.row(1));
}

#[test]
fn embedding_gradient_is_one_hot_rows() {
    let ds = mtpl_shaped_dataset(66);
    let (tok, mut store) = fit_tokenizer(&ds, mtpl_shaped_schema(3));
    let encoded = tok.encode(&ds).unwrap();
    let mut tape = Tape::new();
    // One batch row carrying level v1 of c2 (rows alternate v0/v1).
    let emb = tok.embed_covariate(&mut tape, &store, &encoded, 1, &[1]).unwrap();
    let loss = tape.sum_all(emb).unwrap();
    tape.backward(loss).unwrap();
    store.zero_grad();
    tape.apply_grads(&mut store).unwrap();
    let table = store.find("tokenizer.c2.table").unwrap();
    let grad = store.grad(table);
    let hot = tok.level_index(1, "v1").unwrap();
    for r in 0..grad.rows() {
        for c in 0..grad.cols() {
            let expect = if r == hot { 1.0 } else { 0.0 };
            assert_eq!(grad.at(r, c), expect);
        }
    }
    // And it matches finite differences.
    let report = gradcheck::check_grads(&store, |s| {
        let mut t = Tape::new();
        let e = tok.embed_covariate(&mut t, s, &encoded, 1, &[1]).unwrap();
        let l = t.sum_all(e).unwrap();
        t.value(l).scalar()
    });
    assert!(report.ok(), "worst rel {:.2e}", report.worst_rel);
}

#[test]
fn unseen_level_is_a_hard_error() {
    let ds = mtpl_shaped_dataset(66);
    let (tok, _) = fit_tokenizer(&ds, mtpl_shaped_schema(3));
    let err = tok.level_index(0, "never-seen").unwrap_err();
    assert!(matches!(err, Error::UnknownLevel { .. }));
}

#[test]
fn reserved_other_level_absorbs_unseen_levels() {
    let ds = mtpl_shaped_dataset(66);
    let mut schema = mtpl_shaped_schema(3);
    schema.covariates[0].reserve_other = true;
    let (tok, _) = fit_tokenizer(&ds, schema);
    let idx = tok.level_index(0, "never-seen").unwrap();
    assert_eq!(idx, 6, "the reserved slot sits after the 6 fitted levels");
}

// ── continuous FNN embedding ─────────────────────────────────────────

#[test]
fn fnn_embedding_matches_direct_formula_and_range() {
    let ds = mtpl_shaped_dataset(66);
    let (tok, store) = fit_tokenizer(&ds, mtpl_shaped_schema(5));
    let encoded = tok.encode(&ds).unwrap();
    let mut tape = Tape::new();
    let emb = tok.embed_covariate(&mut tape, &store, &encoded, 4, &[3]).unwrap();
    let got = tape.value(emb).row(0).to_vec();
    // Two-line independent reimplementation: tanh(W2 (W1 x + b1) + b2).
    let x = match &encoded.columns[4] {
        credtrans_core::tokenizer::EncodedColumn::Continuous(v) => v[3],
        _ => unreachable!(),
    };
    let w1 = store.value(store.find("tokenizer.x1.w1").unwrap()).clone();
    let b1 = store.value(store.find("tokenizer.x1.b1").unwrap()).clone();
    let w2 = store.value(store.find("tokenizer.x1.w2").unwrap()).clone();
    let b2 = store.value(store.find("tokenizer.x1.b2").unwrap()).clone();
    let b = 5;
    let mut hidden = vec![0.0; b];
    for j in 0..b {
        hidden[j] = x * w1.at(0, j) + b1.at(0, j);
    }
    for (j, &g) in got.iter().enumerate() {
        let mut pre = b2.at(0, j);
        for (k, &h) in hidden.iter().enumerate() {
            pre += h * w2.at(k, j);
        }
        let expect = pre.tanh();
        assert!((g - expect).abs() < 1e-12, "{g} vs {expect}");
        assert!(g > -1.0 && g < 1.0);
    }
}

#[test]
fn zero_weight_fnn_embeds_to_zero() {
    let ds = mtpl_shaped_dataset(66);
    let (tok, mut store) = fit_tokenizer(&ds, mtpl_shaped_schema(4));
    for name in ["w1", "b1", "w2", "b2"] {
        let id = store.find(&format!("tokenizer.x2.{name}")).unwrap();
        store.value_mut(id).fill(0.0);
    }
    let encoded = tok.encode(&ds).unwrap();
    let mut tape = Tape::new();
    let emb = tok.embed_covariate(&mut tape, &store, &encoded, 5, &[0, 7]).unwrap();
    assert!(tape.value(emb).data().iter().all(|&v| v == 0.0));
}

// ── PLE ──────────────────────────────────────────────────────────────

#[test]
fn ple_hand_example_boundaries_0_1_2_4() {
    // Boundaries (0,1,2,4): deltas (1,1,2). x = 3 interpolates the third
    // bin: (1, 1, 0.5).
    let log_deltas = [0.0, 0.0, (2.0f64).ln()];
    let enc = ple_encode_value(3.0, &log_deltas, 0.0, 1e-6);
    assert_eq!(enc, vec![1.0, 1.0, 0.5]);
    // Below the first boundary: all zero. At or above the last: all one.
    assert_eq!(ple_encode_value(-0.5, &log_deltas, 0.0, 1e-6), vec![0.0, 0.0, 0.0]);
    assert_eq!(ple_encode_value(4.0, &log_deltas, 0.0, 1e-6), vec![1.0, 1.0, 1.0]);
    assert_eq!(ple_encode_value(7.0, &log_deltas, 0.0, 1e-6), vec![1.0, 1.0, 1.0]);
}

#[test]
fn ple_tape_op_agrees_with_reference_encoding() {
    let mut rng = StreamRng::from_seed(21).stream("ple");
    for _ in 0..50 {
        let nbins = 1 + rng.index(6);
        let log_deltas: Vec<f64> = (0..nbins).map(|_| rng.uniform_in(-2.0, 1.0)).collect();
        let start = rng.uniform_in(-1.0, 1.0);
        let x = rng.uniform_in(start - 1.0, start + 6.0);
        let mut tape = Tape::new();
        let xn = tape.input(Tensor2::filled(1, 1, x)).unwrap();
        let ld = tape.input(Tensor2::row_vector(log_deltas.clone())).unwrap();
        let enc = tape.ple_encode(xn, ld, start, 1e-6, "p").unwrap();
        let reference = ple_encode_value(x, &log_deltas, start, 1e-6);
        for (a, b) in tape.value(enc).data().iter().zip(reference.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn ple_boundaries_examples() {
    // exp(0) = 1 per bin.
    assert_eq!(ple_boundaries(&[0.0, 0.0, 0.0], 0.0, 1e-6).unwrap(), vec![0.0, 1.0, 2.0, 3.0]);
    // Collapsed middle bin: exp(-40) < eps.
    assert_eq!(ple_boundaries(&[0.0, -40.0, 0.0], 0.0, 1e-6).unwrap(), vec![0.0, 1.0, 2.0]);
    // Everything collapsed is degenerate.
    assert!(matches!(
        ple_boundaries(&[-40.0, -40.0], 0.0, 1e-6).unwrap_err(),
        Error::DegeneratePle { .. }
    ));
}

#[test]
fn ple_reconstruction_monotonicity_and_range() {
    let mut rng = StreamRng::from_seed(22).stream("ple2");
    for _ in 0..100 {
        let nbins = 2 + rng.index(8);
        let log_deltas: Vec<f64> = (0..nbins).map(|_| rng.uniform_in(-3.0, 1.0)).collect();
        let start = rng.uniform_in(-2.0, 2.0);
        let deltas: Vec<f64> =
            log_deltas.iter().map(|&l| if l.exp() < 1e-6 { 0.0 } else { l.exp() }).collect();
        let total: f64 = deltas.iter().sum();
        if total == 0.0 {
            continue;
        }
        let x = rng.uniform_in(start, start + total);
        let enc = ple_encode_value(x, &log_deltas, start, 1e-6);
        // Losslessness inside the covered range.
        let reconstructed: f64 =
            start + deltas.iter().zip(enc.iter()).map(|(&d, &e)| d * e).sum::<f64>();
        assert!((reconstructed - x).abs() < 1e-9, "{reconstructed} vs {x}");
        // Components live in [0,1] and are nonincreasing in the bin index.
        for w in enc.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!(enc.iter().all(|&e| (0.0..=1.0).contains(&e)));
        // Monotonicity in x.
        let x2 = rng.uniform_in(x, start + total);
        let enc2 = ple_encode_value(x2, &log_deltas, start, 1e-6);
        for (a, b) in enc.iter().zip(enc2.iter()) {
            assert!(a <= b || (a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn ple_gradient_wrt_x_is_inverse_bin_length() {
    // Away from boundaries the encoding has slope 1/delta_j in the active
    // bin and 0 elsewhere.
    let log_deltas = [0.0, 0.0, (2.0f64).ln()];
    let x = 2.9;
    let mut tape = Tape::new();
    let xn = tape.input(Tensor2::filled(1, 1, x)).unwrap();
    let ld = tape.input(Tensor2::row_vector(log_deltas.to_vec())).unwrap();
    let enc = tape.ple_encode(xn, ld, 0.0, 1e-6, "p").unwrap();
    // Pick out the active component (bin 3) via a weight vector.
    let w = tape.input(Tensor2::col_vector(vec![0.0, 0.0, 1.0])).unwrap();
    let picked = tape.matmul(enc, w).unwrap();
    let loss = tape.sum_all(picked).unwrap();
    tape.backward(loss).unwrap();
    let dx = tape.grad(xn).unwrap().scalar();
    assert!((dx - 0.5).abs() < 1e-12, "slope {dx}");
    // Central differences agree.
    let numeric = gradcheck::central_diff(
        |v| {
            let e = ple_encode_value(v, &log_deltas, 0.0, 1e-6);
            e[2]
        },
        x,
        1e-5,
    );
    assert!((numeric - 0.5).abs() < 1e-6);
}

#[test]
fn quantile_initialized_bins_match_empirical_quartiles() {
    // 1000 uniform samples, B = 4: boundaries sit near the quartiles
    // (after robust scaling).
    let n = 1000;
    let mut rng = StreamRng::from_seed(23).stream("q");
    let raw: Vec<f64> = (0..n).map(|_| rng.uniform_in(0.0, 1.0)).collect();
    let ds = Dataset::new(
        vec![Column::continuous("x", raw.clone())],
        vec![1.0; n],
        vec![0.0; n],
    )
    .unwrap();
    let schema = Schema::new(vec![CovariateSpec::continuous_ple("x", 4)], 3).unwrap();
    let (tok, store) = fit_tokenizer(&ds, schema);
    let credtrans_core::tokenizer::CovariateState::ContinuousPle {
        scaler, start, min_len, log_deltas, ..
    } = &tok.states[0]
    else {
        panic!("expected a PLE state");
    };
    let boundaries =
        ple_boundaries(store.value(*log_deltas).data(), *start, *min_len).unwrap();
    assert_eq!(boundaries.len(), 5);
    // Sort-based quantile oracle on the scaled axis.
    let mut scaled: Vec<f64> = raw.iter().map(|&x| scaler.scale(x)).collect();
    scaled.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for (k, p) in [(1, 0.25), (2, 0.5), (3, 0.75)] {
        let expect = quantile_sorted(&scaled, p);
        assert!(
            (boundaries[k] - expect).abs() < 1e-9,
            "boundary {k}: {} vs quartile {expect}",
            boundaries[k]
        );
    }
}

// ── robust scaling ───────────────────────────────────────────────────

#[test]
fn robust_scaler_on_one_to_hundred() {
    let values: Vec<f64> = (1..=100).map(|i| i as f64).collect();
    let scaler = RobustScaler::fit(&values).unwrap();
    assert_eq!(scaler.median, 50.5);
    // Brute-force type-7 quantile oracle.
    let q = |p: f64| -> f64 {
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let h = (sorted.len() - 1) as f64 * p;
        let lo = h.floor() as usize;
        sorted[lo] + (h - lo as f64) * (sorted[(lo + 1).min(sorted.len() - 1)] - sorted[lo])
    };
    let iqr = q(0.75) - q(0.25);
    assert_eq!(scaler.iqr, iqr);
    assert!((scaler.scale(75.0) - (75.0 - 50.5) / iqr).abs() < 1e-15);
    // Fixed points of the affine map.
    assert_eq!(scaler.scale(scaler.median), 0.0);
    assert!((scaler.scale(scaler.median + scaler.iqr) - 1.0).abs() < 1e-15);
}

#[test]
fn degenerate_iqr_falls_back_to_one() {
    let scaler = RobustScaler::fit(&[3.0, 3.0, 3.0, 3.0]).unwrap();
    assert!(scaler.degenerate);
    assert_eq!(scaler.iqr, 1.0);
    assert_eq!(scaler.scale(4.0), 1.0);
}

// ── augmented tensor ─────────────────────────────────────────────────

#[test]
fn augmented_tensor_has_paper_shape() {
    // T = 9 covariates at b = 5: one instance is a 10 x 10 block.
    let ds = mtpl_shaped_dataset(66);
    let (tok, store) = fit_tokenizer(&ds, mtpl_shaped_schema(5));
    let encoded = tok.encode(&ds).unwrap();
    let mut tape = Tape::new();
    let x = tok.augmented_tensor(&mut tape, &store, &encoded, &[0]).unwrap();
    assert_eq!(tape.value(x).shape(), (10, 10));
    // Batched: blocks stack vertically.
    let mut tape2 = Tape::new();
    let xb = tok.augmented_tensor(&mut tape2, &store, &encoded, &[0, 1, 2]).unwrap();
    assert_eq!(tape2.value(xb).shape(), (30, 10));
}

#[test]
fn cls_row_is_identical_across_instances() {
    let ds = mtpl_shaped_dataset(66);
    let (tok, store) = fit_tokenizer(&ds, mtpl_shaped_schema(5));
    let encoded = tok.encode(&ds).unwrap();
    let mut tape = Tape::new();
    let x = tok.augmented_tensor(&mut tape, &store, &encoded, &[0, 5, 11]).unwrap();
    let t = tape.value(x);
    let seq = 10;
    let first = t.row(seq - 1).to_vec();
    for i in 1..3 {
        assert_eq!(t.row(i * seq + seq - 1), &first[..]);
    }
}

#[test]
fn perturbing_one_covariate_changes_only_its_row() {
    let n = 66;
    let ds = mtpl_shaped_dataset(n);
    let (tok, store) = fit_tokenizer(&ds, mtpl_shaped_schema(5));
    // Two synthetic rows that differ only in continuous covariate x3
    // (schema position 6).
    let mut columns = Vec::new();
    for c in ds.columns() {
        let mut col = c.clone();
        if col.name == "x3" {
            if let credtrans_core::data::ColumnData::Continuous(v) = &mut col.data {
                v[1] = v[0] + 1.0;
            }
        } else {
            match &mut col.data {
                credtrans_core::data::ColumnData::Continuous(v) => v[1] = v[0],
                credtrans_core::data::ColumnData::Categorical(v) => v[1] = v[0],
            }
        }
        columns.push(col);
    }
    let ds2 = Dataset::new(columns, vec![1.0; n], vec![0.0; n]).unwrap();
    let encoded = tok.encode(&ds2).unwrap();
    let mut tape = Tape::new();
    let x = tok.augmented_tensor(&mut tape, &store, &encoded, &[0, 1]).unwrap();
    let t = tape.value(x);
    let seq = 10;
    for row in 0..seq {
        let same = t.row(row) == t.row(seq + row);
        if row == 6 {
            assert!(!same, "row 6 should differ");
        } else {
            assert!(same, "row {row} should match");
        }
    }
}

// ── parameter counts ─────────────────────────────────────────────────

#[test]
fn input_parameter_count_matches_paper_config() {
    // b = 5, categorical levels (6, 2, 11, 22), T2 = 5 gives 405 weights.
    let schema = mtpl_shaped_schema(5);
    assert_eq!(count_input_parameters(&schema, &[6, 2, 11, 22]), 405);
    // Degenerate case: a single one-level categorical at b = 1.
    let tiny = Schema::new(vec![CovariateSpec::categorical("c")], 1).unwrap();
    assert_eq!(count_input_parameters(&tiny, &[1]), 1);
}

#[test]
fn formula_count_matches_parameter_enumeration() {
    let mut rng = StreamRng::from_seed(31).stream("schema");
    for trial in 0..5 {
        let n = 60;
        let b = 1 + rng.index(6);
        let t1 = 1 + rng.index(3);
        let t2 = rng.index(3);
        let mut columns = Vec::new();
        let mut specs = Vec::new();
        for k in 0..t1 {
            let levels = 1 + rng.index(7);
            let name = format!("c{k}");
            // Cycling codes guarantee every level appears in the fit rows.
            columns.push(Column::categorical(&name, cycling_codes(n, levels), level_names(levels)));
            specs.push(CovariateSpec::categorical(name));
        }
        for k in 0..t2 {
            let name = format!("x{k}");
            columns.push(Column::continuous(
                &name,
                (0..n).map(|_| rng.uniform_in(0.0, 1.0)).collect(),
            ));
            specs.push(CovariateSpec::continuous(name));
        }
        let ds = Dataset::new(columns, vec![1.0; n], vec![0.0; n]).unwrap();
        let schema = Schema::new(specs, b).unwrap();
        let (tok, store) = fit_tokenizer(&ds, schema.clone());
        let enumerated: usize = store
            .iter()
            .filter(|(_, p)| p.name.starts_with("tokenizer."))
            .map(|(_, p)| p.value.len())
            .sum();
        assert_eq!(
            enumerated,
            count_input_parameters(&schema, &tok.cardinalities()),
            "trial {trial}: b={b} t1={t1} t2={t2}"
        );
    }
}

#[test]
fn feature_gate_stays_in_unit_interval() {
    // sigmoid keeps the gate in (0, 1] across the whole f64 range where a
    // positive value is representable (exp underflows below about -745).
    use credtrans_core::autodiff::Activation;
    for raw in [-700.0, -50.0, -3.0, 0.0, 3.0, 50.0, 700.0, 1e6] {
        let g = Activation::Sigmoid.apply(raw);
        assert!(g > 0.0 && g <= 1.0, "gate({raw}) = {g}");
    }
}
