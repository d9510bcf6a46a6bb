//! Credibility gate, exponential decoder, and the linear-credibility
//! decomposition of the CLS attention row.

use alloc::vec::Vec;

use crate::autodiff::{Activation, NodeId, ParamStore, Phase, Tape};
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::tensor::Tensor2;
use crate::transformer::LinearParams;

/// Credibility gate between the transformer CLS token and the prior CLS
/// token.
///
/// In train mode a single `Z ~ Bernoulli(alpha)` per gradient step selects
/// the forwarded token for the whole batch: the transformer token with
/// probability `alpha`, the prior token otherwise. In predict mode `Z = 1`.
/// Returns the forwarded `B x 2b` node and the sampled `Z`.
pub fn credibility_gate(
    tape: &mut Tape,
    c_trans: NodeId,
    c_prior: NodeId,
    alpha: f64,
    phase: Phase,
    rng: &mut StreamRng,
) -> Result<(NodeId, bool)> {
    validate_alpha(alpha)?;
    let batch = tape.value(c_trans).rows();
    let z = match phase {
        Phase::Predict => true,
        Phase::Train => rng.bernoulli(alpha),
    };
    let forwarded = if z { c_trans } else { tape.repeat_row(c_prior, batch)? };
    Ok((forwarded, z))
}

/// Deterministic mix `z * c_trans + (1 - z) * c_prior` used as a diagnostic
/// predict variant.
pub fn deterministic_mix(
    tape: &mut Tape,
    c_trans: NodeId,
    c_prior: NodeId,
    z: f64,
) -> Result<NodeId> {
    if !(0.0..=1.0).contains(&z) {
        return Err(Error::InvalidAlpha(z));
    }
    let batch = tape.value(c_trans).rows();
    let prior = tape.repeat_row(c_prior, batch)?;
    let a = tape.scale(c_trans, z)?;
    let b = tape.scale(prior, 1.0 - z)?;
    tape.add(a, b)
}

/// The credibility parameter is a probability; `alpha = 0` is accepted so a
/// run can train the prior path alone.
pub fn validate_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) || !alpha.is_finite() {
        return Err(Error::InvalidAlpha(alpha));
    }
    Ok(())
}

/// FNN decoder `2b -> hidden (GELU) -> 1` with an exponential output map,
/// producing a strictly positive frequency.
#[derive(Clone, Debug)]
pub struct DecoderParams {
    pub hidden: LinearParams,
    pub output: LinearParams,
}

impl DecoderParams {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut StreamRng,
        model_dim: usize,
        hidden_dim: usize,
    ) -> Self {
        DecoderParams {
            hidden: LinearParams::new(store, rng, "decoder.hidden", model_dim, hidden_dim, true),
            output: LinearParams::new(store, rng, "decoder.output", hidden_dim, 1, false),
        }
    }

    /// Set the output bias so the untrained decoder starts at the given
    /// frequency (the homogeneous portfolio predictor).
    pub fn set_output_bias(&self, store: &mut ParamStore, log_rate: f64) {
        *store.value_mut(self.output.b).at_mut(0, 0) = log_rate;
    }

    /// `mu = exp(FNN(c))`, one strictly positive value per row.
    pub fn decode(&self, tape: &mut Tape, store: &ParamStore, c: NodeId) -> Result<NodeId> {
        let h = self.hidden.apply_activated(tape, store, c, Activation::Gelu)?;
        let z = self.output.apply(tape, store, h)?;
        tape.activation(z, Activation::Exp)
    }
}

/// The CLS attention row read as a linear credibility formula.
#[derive(Clone, Debug)]
pub struct CredibilityDecomposition {
    /// Credibility factor: attention mass the CLS row assigns to itself.
    pub p: f64,
    /// Full attention row `a_{T+1,.}`.
    pub attention_row: Vec<f64>,
    /// Covariate information: attention-weighted values, renormalized by
    /// `1 - P`.
    pub v_covariate: Vec<f64>,
    /// CLS row of `A V`, which equals `P v_{T+1} + (1-P) v_covariate`.
    pub v_trans: Vec<f64>,
}

/// Decompose the CLS row of one instance's attention matrix `A` (row
/// stochastic, `(T+1) x (T+1)`) against its value matrix `V`.
pub fn decompose_cls_attention(a: &Tensor2, v: &Tensor2) -> Result<CredibilityDecomposition> {
    let seq = a.rows();
    if a.cols() != seq || v.rows() != seq {
        return Err(Error::ShapeMismatch {
            op: "decompose_cls_attention",
            detail: alloc::format!(
                "A {}x{} with V {}x{}",
                a.rows(),
                a.cols(),
                v.rows(),
                v.cols()
            ),
        });
    }
    let cls = seq - 1;
    let attention_row = a.row(cls).to_vec();
    let p = attention_row[cls];
    if p >= 1.0 - 1e-12 {
        return Err(Error::DegenerateDecomposition { p });
    }
    let dim = v.cols();
    let mut v_covariate = alloc::vec![0.0; dim];
    for j in 0..cls {
        let w = attention_row[j] / (1.0 - p);
        for (acc, &value) in v_covariate.iter_mut().zip(v.row(j).iter()) {
            *acc += w * value;
        }
    }
    let mut v_trans = alloc::vec![0.0; dim];
    for j in 0..seq {
        for (acc, &value) in v_trans.iter_mut().zip(v.row(j).iter()) {
            *acc += attention_row[j] * value;
        }
    }
    Ok(CredibilityDecomposition { p, attention_row, v_covariate, v_trans })
}

impl CredibilityDecomposition {
    /// Largest deviation of `P v_cls + (1-P) v_covariate` from the CLS row
    /// of `A V`; the linear credibility identity holds when this is ~0.
    pub fn identity_gap(&self, v: &Tensor2) -> f64 {
        let cls = v.rows() - 1;
        let mut worst: f64 = 0.0;
        for (c, (&vt, &vc)) in self.v_trans.iter().zip(self.v_covariate.iter()).enumerate() {
            let reconstructed = self.p * v.at(cls, c) + (1.0 - self.p) * vc;
            worst = worst.max((reconstructed - vt).abs());
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ParamStore;
    use crate::rng::StreamRng;

    #[test]
    fn gate_validates_alpha() {
        assert!(validate_alpha(0.0).is_ok());
        assert!(validate_alpha(1.0).is_ok());
        assert_eq!(validate_alpha(1.5), Err(Error::InvalidAlpha(1.5)));
        assert_eq!(validate_alpha(-0.1), Err(Error::InvalidAlpha(-0.1)));
    }

    fn gate_once(alpha: f64, phase: Phase, rng: &mut StreamRng) -> (Vec<f64>, bool) {
        let mut tape = Tape::new();
        let trans = tape.input(Tensor2::new(2, 4, (0..8).map(|i| i as f64).collect())).unwrap();
        let prior = tape.input(Tensor2::row_vector(alloc::vec![9.0, 8.0, 7.0, 6.0])).unwrap();
        let (out, z) = credibility_gate(&mut tape, trans, prior, alpha, phase, rng).unwrap();
        (tape.value(out).data().to_vec(), z)
    }

    #[test]
    fn predict_mode_forwards_transformer_token() {
        let mut rng = StreamRng::from_seed(1).stream("gate");
        for alpha in [0.0, 0.4, 1.0] {
            let (out, z) = gate_once(alpha, Phase::Predict, &mut rng);
            assert!(z);
            assert_eq!(out, (0..8).map(|i| i as f64).collect::<Vec<_>>());
        }
    }

    #[test]
    fn alpha_one_always_selects_transformer_token() {
        let mut rng = StreamRng::from_seed(2).stream("gate");
        for _ in 0..100 {
            let (_, z) = gate_once(1.0, Phase::Train, &mut rng);
            assert!(z);
        }
    }

    #[test]
    fn alpha_zero_always_selects_prior_token() {
        let mut rng = StreamRng::from_seed(3).stream("gate");
        let (out, z) = gate_once(0.0, Phase::Train, &mut rng);
        assert!(!z);
        assert_eq!(out, alloc::vec![9.0, 8.0, 7.0, 6.0, 9.0, 8.0, 7.0, 6.0]);
    }

    #[test]
    fn gate_frequency_matches_binomial() {
        // 10^4 draws at alpha = 0.9: fraction of Z = 1 within 0.9 +/- 0.01.
        let mut rng = StreamRng::from_seed(4).stream("gate");
        let n = 10_000;
        let mut ones = 0;
        for _ in 0..n {
            let (_, z) = gate_once(0.9, Phase::Train, &mut rng);
            if z {
                ones += 1;
            }
        }
        let fraction = ones as f64 / n as f64;
        assert!((fraction - 0.9).abs() < 0.01, "fraction {fraction}");
    }

    #[test]
    fn decoder_zero_weights_gives_one() {
        let mut store = ParamStore::new();
        let mut rng = StreamRng::from_seed(5).stream("init");
        let decoder = DecoderParams::new(&mut store, &mut rng, 4, 3);
        // Zero all decoder weights: mu = exp(0) = 1.
        for id in store.ids().collect::<Vec<_>>() {
            store.value_mut(id).fill(0.0);
        }
        let mut tape = Tape::new();
        let c = tape.input(Tensor2::filled(2, 4, 0.3)).unwrap();
        let mu = decoder.decode(&mut tape, &store, c).unwrap();
        assert_eq!(tape.value(mu).data(), &[1.0, 1.0]);
    }

    #[test]
    fn decoder_bias_only_network_reproduces_rate() {
        let mut store = ParamStore::new();
        let mut rng = StreamRng::from_seed(6).stream("init");
        let decoder = DecoderParams::new(&mut store, &mut rng, 4, 3);
        for id in store.ids().collect::<Vec<_>>() {
            store.value_mut(id).fill(0.0);
        }
        decoder.set_output_bias(&mut store, crate::num::ln(0.0735));
        let mut tape = Tape::new();
        let c = tape.input(Tensor2::filled(1, 4, -1.2)).unwrap();
        let mu = decoder.decode(&mut tape, &store, c).unwrap();
        assert!((tape.value(mu).scalar() - 0.0735).abs() < 1e-12);
    }

    #[test]
    fn decoder_matches_direct_composition() {
        let mut store = ParamStore::new();
        let mut rng = StreamRng::from_seed(7).stream("init");
        let decoder = DecoderParams::new(&mut store, &mut rng, 3, 2);
        let c = [0.4, -0.9, 1.1];
        let mut tape = Tape::new();
        let cn = tape.input(Tensor2::row_vector(c.to_vec())).unwrap();
        let mu = decoder.decode(&mut tape, &store, cn).unwrap();
        // Direct two-layer composition oracle.
        let wh = store.value(decoder.hidden.w);
        let bh = store.value(decoder.hidden.b);
        let wo = store.value(decoder.output.w);
        let bo = store.value(decoder.output.b);
        let mut z = bo.at(0, 0);
        for h in 0..2 {
            let mut pre = bh.at(0, h);
            for (i, &ci) in c.iter().enumerate() {
                pre += ci * wh.at(i, h);
            }
            z += Activation::Gelu.apply(pre) * wo.at(h, 0);
        }
        let expect = crate::num::exp(z);
        assert!((tape.value(mu).scalar() - expect).abs() < 1e-12);
        assert!(tape.value(mu).scalar() > 0.0);
    }

    #[test]
    fn decompose_uniform_attention() {
        // Uniform row over 10 tokens: P = 0.1 and v_covariate is the plain
        // mean of the first 9 value rows.
        let seq = 10;
        let dim = 4;
        let mut rng = StreamRng::from_seed(8).stream("v");
        let v = Tensor2::new(seq, dim, (0..seq * dim).map(|_| rng.normal()).collect());
        let a = Tensor2::filled(seq, seq, 1.0 / seq as f64);
        let d = decompose_cls_attention(&a, &v).unwrap();
        assert!((d.p - 0.1).abs() < 1e-15);
        for c in 0..dim {
            let mean: f64 = (0..seq - 1).map(|j| v.at(j, c)).sum::<f64>() / (seq - 1) as f64;
            assert!((d.v_covariate[c] - mean).abs() < 1e-12);
        }
        assert!(d.identity_gap(&v) < 1e-12);
    }

    #[test]
    fn decompose_rejects_all_mass_on_cls() {
        let seq = 3;
        let mut a = Tensor2::zeros(seq, seq);
        for i in 0..seq {
            *a.at_mut(i, seq - 1) = 1.0;
        }
        let v = Tensor2::filled(seq, 2, 0.5);
        let err = decompose_cls_attention(&a, &v).unwrap_err();
        assert!(matches!(err, Error::DegenerateDecomposition { .. }));
    }

    #[test]
    fn decomposition_identity_on_random_attention() {
        // T = 9, 2b = 10: the identity holds to 1e-12 for row-stochastic A.
        let mut rng = StreamRng::from_seed(9).stream("rand");
        for _ in 0..100 {
            let seq = 10;
            let dim = 10;
            let mut logits = Tensor2::new(
                seq,
                seq,
                (0..seq * seq).map(|_| rng.normal_scaled(0.0, 2.0)).collect(),
            );
            // Row-stochastic via softmax.
            logits = crate::autodiff::softmax_rows_value(&logits);
            let v = Tensor2::new(seq, dim, (0..seq * dim).map(|_| rng.normal()).collect());
            let d = decompose_cls_attention(&logits, &v).unwrap();
            assert!(d.identity_gap(&v) < 1e-12);
            let sum: f64 = d.attention_row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            // The covariate weights complement P.
            let cov_mass: f64 = d.attention_row[..seq - 1].iter().sum();
            assert!((cov_mass - (1.0 - d.p)).abs() < 1e-12);
        }
    }
}
