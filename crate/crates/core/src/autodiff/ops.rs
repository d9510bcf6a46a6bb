//! Recorded operations and their vector-Jacobian products.

use alloc::vec::Vec;

use super::{Activation, NodeId};
use crate::tensor::Tensor2;

pub(crate) enum TapeOp {
    MatMul { a: NodeId, b: NodeId, out: NodeId },
    Transpose { a: NodeId, out: NodeId },
    Add { a: NodeId, b: NodeId, out: NodeId },
    Sub { a: NodeId, b: NodeId, out: NodeId },
    Hadamard { a: NodeId, b: NodeId, out: NodeId },
    ScaleConst { a: NodeId, factor: f64, out: NodeId },
    MulScalar { a: NodeId, s: NodeId, out: NodeId },
    AddRowBcast { m: NodeId, row: NodeId, out: NodeId },
    RepeatRow { row: NodeId, out: NodeId },
    Act { a: NodeId, f: Activation, out: NodeId },
    Ln { a: NodeId, out: NodeId },
    SoftmaxRows { a: NodeId, out: NodeId },
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        out: NodeId,
        inv_sigma: Vec<f64>,
        xhat: Tensor2,
    },
    Dropout { a: NodeId, mask: Tensor2, out: NodeId },
    ConcatRows { parts: Vec<NodeId>, out: NodeId },
    ConcatCols { parts: Vec<NodeId>, out: NodeId },
    GatherRows { a: NodeId, indices: Vec<usize>, out: NodeId },
    SumAll { a: NodeId, out: NodeId },
    MeanAll { a: NodeId, out: NodeId },
    Attention {
        q: NodeId,
        k: NodeId,
        v: NodeId,
        block: usize,
        scale: f64,
        h: NodeId,
        attn: NodeId,
    },
    AssembleTokens {
        tokens: Vec<NodeId>,
        pos: Vec<NodeId>,
        cls: NodeId,
        batch: usize,
        width: usize,
        out: NodeId,
    },
    PleEncode {
        x: NodeId,
        log_deltas: NodeId,
        out: NodeId,
        deltas: Vec<f64>,
        boundaries: Vec<f64>,
        active: Vec<Option<usize>>,
    },
    PoissonDeviance { mu: NodeId, exposures: Vec<f64>, counts: Vec<f64>, out: NodeId },
}

fn accumulate(grads: &mut [Option<Tensor2>], id: NodeId, delta: &Tensor2) {
    match &mut grads[id.0] {
        Some(g) => g.add_in_place(delta),
        slot @ None => *slot = Some(delta.clone()),
    }
}

/// Accumulate into a single entry without allocating a full tensor first.
fn accumulate_with(
    grads: &mut [Option<Tensor2>],
    id: NodeId,
    shape: (usize, usize),
    fill: impl FnOnce(&mut Tensor2),
) {
    if grads[id.0].is_none() {
        grads[id.0] = Some(Tensor2::zeros(shape.0, shape.1));
    }
    fill(grads[id.0].as_mut().unwrap());
}

impl TapeOp {
    pub(crate) fn backward(&self, nodes: &[Tensor2], grads: &mut [Option<Tensor2>]) {
        match self {
            TapeOp::MatMul { a, b, out } => {
                let Some(g) = grads[out.0].clone() else { return };
                // dA = G B^T, dB = A^T G
                accumulate(grads, *a, &g.matmul_transpose_b(&nodes[b.0]));
                accumulate(grads, *b, &nodes[a.0].transpose().matmul(&g));
            }
            TapeOp::Transpose { a, out } => {
                let Some(g) = grads[out.0].as_ref() else { return };
                let gt = g.transpose();
                accumulate(grads, *a, &gt);
            }
            TapeOp::Add { a, b, out } => {
                let Some(g) = grads[out.0].clone() else { return };
                accumulate(grads, *a, &g);
                accumulate(grads, *b, &g);
            }
            TapeOp::Sub { a, b, out } => {
                let Some(g) = grads[out.0].clone() else { return };
                accumulate(grads, *a, &g);
                accumulate(grads, *b, &g.map(|v| -v));
            }
            TapeOp::Hadamard { a, b, out } => {
                let Some(g) = grads[out.0].clone() else { return };
                accumulate(grads, *a, &g.zip_map(&nodes[b.0], |gv, bv| gv * bv));
                accumulate(grads, *b, &g.zip_map(&nodes[a.0], |gv, av| gv * av));
            }
            TapeOp::ScaleConst { a, factor, out } => {
                let Some(g) = grads[out.0].as_ref() else { return };
                let d = g.map(|v| v * factor);
                accumulate(grads, *a, &d);
            }
            TapeOp::MulScalar { a, s, out } => {
                let Some(g) = grads[out.0].clone() else { return };
                let sval = nodes[s.0].scalar();
                accumulate(grads, *a, &g.map(|v| v * sval));
                let ds: f64 = g
                    .data()
                    .iter()
                    .zip(nodes[a.0].data().iter())
                    .map(|(&gv, &av)| gv * av)
                    .sum();
                accumulate(grads, *s, &Tensor2::filled(1, 1, ds));
            }
            TapeOp::AddRowBcast { m, row, out } => {
                let Some(g) = grads[out.0].clone() else { return };
                accumulate(grads, *m, &g);
                let (rows, cols) = g.shape();
                accumulate_with(grads, *row, (1, cols), |acc| {
                    for i in 0..rows {
                        for (j, &gv) in g.row(i).iter().enumerate() {
                            *acc.at_mut(0, j) += gv;
                        }
                    }
                });
            }
            TapeOp::RepeatRow { row, out } => {
                let Some(g) = grads[out.0].clone() else { return };
                let (rows, cols) = g.shape();
                accumulate_with(grads, *row, (1, cols), |acc| {
                    for i in 0..rows {
                        for (j, &gv) in g.row(i).iter().enumerate() {
                            *acc.at_mut(0, j) += gv;
                        }
                    }
                });
            }
            TapeOp::Act { a, f, out } => {
                let Some(g) = grads[out.0].clone() else { return };
                accumulate(grads, *a, &g.zip_map(&nodes[a.0], |gv, x| gv * f.derivative(x)));
            }
            TapeOp::Ln { a, out } => {
                let Some(g) = grads[out.0].clone() else { return };
                accumulate(grads, *a, &g.zip_map(&nodes[a.0], |gv, x| gv / x));
            }
            TapeOp::SoftmaxRows { a, out } => {
                let Some(g) = grads[out.0].clone() else { return };
                let y = &nodes[out.0];
                let (rows, cols) = y.shape();
                let mut d = Tensor2::zeros(rows, cols);
                for i in 0..rows {
                    let dot: f64 =
                        g.row(i).iter().zip(y.row(i).iter()).map(|(&gv, &yv)| gv * yv).sum();
                    for j in 0..cols {
                        *d.at_mut(i, j) = y.at(i, j) * (g.at(i, j) - dot);
                    }
                }
                accumulate(grads, *a, &d);
            }
            TapeOp::LayerNorm { x, gamma, beta, out, inv_sigma, xhat } => {
                let Some(g) = grads[out.0].clone() else { return };
                let (rows, d) = g.shape();
                let gam = &nodes[gamma.0];
                let mut dx = Tensor2::zeros(rows, d);
                for i in 0..rows {
                    // dgamma/dbeta accumulate over rows; dx uses the
                    // standard layer-norm VJP with population variance.
                    let mut mean_gxhat = 0.0;
                    let mut mean_gxhat_xhat = 0.0;
                    for j in 0..d {
                        let gx = g.at(i, j) * gam.at(0, j);
                        mean_gxhat += gx;
                        mean_gxhat_xhat += gx * xhat.at(i, j);
                    }
                    mean_gxhat /= d as f64;
                    mean_gxhat_xhat /= d as f64;
                    for j in 0..d {
                        let gx = g.at(i, j) * gam.at(0, j);
                        *dx.at_mut(i, j) =
                            inv_sigma[i] * (gx - mean_gxhat - xhat.at(i, j) * mean_gxhat_xhat);
                    }
                }
                accumulate(grads, *x, &dx);
                accumulate_with(grads, *gamma, (1, d), |acc| {
                    for i in 0..rows {
                        for j in 0..d {
                            *acc.at_mut(0, j) += g.at(i, j) * xhat.at(i, j);
                        }
                    }
                });
                accumulate_with(grads, *beta, (1, d), |acc| {
                    for i in 0..rows {
                        for j in 0..d {
                            *acc.at_mut(0, j) += g.at(i, j);
                        }
                    }
                });
            }
            TapeOp::Dropout { a, mask, out } => {
                let Some(g) = grads[out.0].clone() else { return };
                accumulate(grads, *a, &g.zip_map(mask, |gv, m| gv * m));
            }
            TapeOp::ConcatRows { parts, out } => {
                let Some(g) = grads[out.0].clone() else { return };
                let cols = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let prows = nodes[p.0].rows();
                    let slice = Tensor2::new(
                        prows,
                        cols,
                        g.data()[offset * cols..(offset + prows) * cols].to_vec(),
                    );
                    accumulate(grads, p, &slice);
                    offset += prows;
                }
            }
            TapeOp::ConcatCols { parts, out } => {
                let Some(g) = grads[out.0].clone() else { return };
                let rows = g.rows();
                let mut offset = 0;
                for &p in parts {
                    let pcols = nodes[p.0].cols();
                    let mut slice = Tensor2::zeros(rows, pcols);
                    for i in 0..rows {
                        slice.row_mut(i).copy_from_slice(&g.row(i)[offset..offset + pcols]);
                    }
                    accumulate(grads, p, &slice);
                    offset += pcols;
                }
            }
            TapeOp::GatherRows { a, indices, out } => {
                let Some(g) = grads[out.0].clone() else { return };
                let shape = nodes[a.0].shape();
                accumulate_with(grads, *a, shape, |acc| {
                    for (j, &idx) in indices.iter().enumerate() {
                        for (av, &gv) in acc.row_mut(idx).iter_mut().zip(g.row(j).iter()) {
                            *av += gv;
                        }
                    }
                });
            }
            TapeOp::SumAll { a, out } => {
                let Some(g) = grads[out.0].as_ref() else { return };
                let gv = g.scalar();
                let (r, c) = nodes[a.0].shape();
                accumulate(grads, *a, &Tensor2::filled(r, c, gv));
            }
            TapeOp::MeanAll { a, out } => {
                let Some(g) = grads[out.0].as_ref() else { return };
                let (r, c) = nodes[a.0].shape();
                let gv = g.scalar() / (r * c) as f64;
                accumulate(grads, *a, &Tensor2::filled(r, c, gv));
            }
            TapeOp::Attention { q, k, v, block, scale, h, attn } => {
                let block = *block;
                let gh = grads[h.0].clone();
                let ga_direct = grads[attn.0].clone();
                if gh.is_none() && ga_direct.is_none() {
                    return;
                }
                let (rows, _) = nodes[q.0].shape();
                let vc = nodes[v.0].cols();
                let kc = nodes[k.0].cols();
                let a_val = &nodes[attn.0];
                let mut dq = Tensor2::zeros(rows, kc);
                let mut dk = Tensor2::zeros(rows, kc);
                let mut dv = Tensor2::zeros(rows, vc);
                let nblocks = rows / block;
                for bi in 0..nblocks {
                    let base = bi * block;
                    for i in 0..block {
                        // total dA row = dH row * V^T + any direct dA
                        let mut ga_row = alloc::vec![0.0; block];
                        if let Some(gh) = gh.as_ref() {
                            for j in 0..block {
                                let vrow = nodes[v.0].row(base + j);
                                let ghrow = gh.row(base + i);
                                let dot: f64 =
                                    ghrow.iter().zip(vrow.iter()).map(|(&a, &b)| a * b).sum();
                                ga_row[j] = dot;
                                // dV[j] += A[i,j] * dH[i]
                                let aij = a_val.at(base + i, j);
                                for (dvv, &ghv) in
                                    dv.row_mut(base + j).iter_mut().zip(ghrow.iter())
                                {
                                    *dvv += aij * ghv;
                                }
                            }
                        }
                        if let Some(ga) = ga_direct.as_ref() {
                            for j in 0..block {
                                ga_row[j] += ga.at(base + i, j);
                            }
                        }
                        // softmax VJP to logits, then to Q and K.
                        let dot: f64 = (0..block)
                            .map(|j| ga_row[j] * a_val.at(base + i, j))
                            .sum();
                        for j in 0..block {
                            let glog = a_val.at(base + i, j) * (ga_row[j] - dot) * scale;
                            if glog == 0.0 {
                                continue;
                            }
                            let krow = nodes[k.0].row(base + j);
                            let qrow = nodes[q.0].row(base + i);
                            for c in 0..kc {
                                *dq.at_mut(base + i, c) += glog * krow[c];
                                *dk.at_mut(base + j, c) += glog * qrow[c];
                            }
                        }
                    }
                }
                accumulate(grads, *q, &dq);
                accumulate(grads, *k, &dk);
                accumulate(grads, *v, &dv);
            }
            TapeOp::AssembleTokens { tokens, pos, cls, batch, width, out } => {
                let Some(g) = grads[out.0].clone() else { return };
                let seq = tokens.len() + 1;
                let width = *width;
                for (t, (&tok, &p)) in tokens.iter().zip(pos.iter()).enumerate() {
                    accumulate_with(grads, tok, (*batch, width), |acc| {
                        for i in 0..*batch {
                            let grow = g.row(i * seq + t);
                            for (av, &gv) in acc.row_mut(i).iter_mut().zip(grow[..width].iter()) {
                                *av += gv;
                            }
                        }
                    });
                    accumulate_with(grads, p, (1, width), |acc| {
                        for i in 0..*batch {
                            let grow = g.row(i * seq + t);
                            for (av, &gv) in acc.row_mut(0).iter_mut().zip(grow[width..].iter()) {
                                *av += gv;
                            }
                        }
                    });
                }
                accumulate_with(grads, *cls, (1, 2 * width), |acc| {
                    for i in 0..*batch {
                        let grow = g.row(i * seq + seq - 1);
                        for (av, &gv) in acc.row_mut(0).iter_mut().zip(grow.iter()) {
                            *av += gv;
                        }
                    }
                });
            }
            TapeOp::PleEncode { x, log_deltas, out, deltas, boundaries, active } => {
                let Some(g) = grads[out.0].clone() else { return };
                let batch = nodes[x.0].rows();
                let nbins = deltas.len();
                let mut dx = Tensor2::zeros(batch, 1);
                let mut dlog = Tensor2::zeros(1, nbins);
                for i in 0..batch {
                    // Only the bin containing x contributes: saturated
                    // components are constants and the collapse mask carries
                    // no gradient.
                    let Some(j) = active[i] else { continue };
                    let gij = g.at(i, j);
                    if gij == 0.0 {
                        continue;
                    }
                    let e = nodes[out.0].at(i, j);
                    *dx.at_mut(i, 0) += gij / deltas[j];
                    // d e_j / d log delta_j = -e_j ; for k < j (unmasked):
                    // d e_j / d log delta_k = -delta_k / delta_j.
                    *dlog.at_mut(0, j) += -gij * e;
                    let _ = boundaries;
                    for k in 0..j {
                        if deltas[k] > 0.0 {
                            *dlog.at_mut(0, k) += -gij * deltas[k] / deltas[j];
                        }
                    }
                }
                accumulate(grads, *x, &dx);
                accumulate(grads, *log_deltas, &dlog);
            }
            TapeOp::PoissonDeviance { mu, exposures, counts, out } => {
                let Some(g) = grads[out.0].as_ref() else { return };
                let gv = g.scalar();
                let n = exposures.len();
                let mut dmu = Tensor2::zeros(n, 1);
                for i in 0..n {
                    let m = nodes[mu.0].at(i, 0);
                    *dmu.at_mut(i, 0) = gv * (2.0 / n as f64) * (exposures[i] - counts[i] / m);
                }
                accumulate(grads, *mu, &dmu);
            }
        }
    }
}
