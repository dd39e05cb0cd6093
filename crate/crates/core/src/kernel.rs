//! Exact forward execution: hardmax attention with incidence-incorporated
//! heads, the four-matrix ReLU MLP, layer/model composition and the looped
//! driver.
//!
//! All arithmetic is `f64`. The only tolerance is in hardmax argmax
//! detection: scores within [`TIE_TOLERANCE`] of the row maximum are tied.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::PaddedIncidence;
use crate::matrix::Matrix;

/// Two scores closer than this are treated as tied by the hardmax.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Query/key width of every head.
pub const HEAD_DIM: usize = 2;

/// Number of MLP weight matrices per layer.
pub const MLP_DEPTH: usize = 4;

/// Maximum number of heads per layer.
pub const MAX_HEADS: usize = 3;

/// Which matrix multiplies a head's output from the left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// `A~ sigma(..) X W_V`
    Incidence,
    /// `A~^T sigma(..) X W_V`
    IncidenceTranspose,
    /// `sigma(..) X W_V`
    Identity,
}

/// One attention head: `M sigma(X W_Q W_K^T X^T) X W_V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionHead {
    pub kind: HeadKind,
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
}

impl AttentionHead {
    pub fn zeros(kind: HeadKind, d: usize) -> Self {
        Self {
            kind,
            w_q: Matrix::zeros(d, HEAD_DIM),
            w_k: Matrix::zeros(d, HEAD_DIM),
            w_v: Matrix::zeros(d, d),
        }
    }

    fn check(&self, d: usize) -> Result<()> {
        let ok = self.w_q.rows() == d
            && self.w_q.cols() == HEAD_DIM
            && self.w_k.rows() == d
            && self.w_k.cols() == HEAD_DIM
            && self.w_v.rows() == d
            && self.w_v.cols() == d;
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "head weights do not match width {d}: W_Q {}x{}, W_K {}x{}, W_V {}x{}",
                self.w_q.rows(),
                self.w_q.cols(),
                self.w_k.rows(),
                self.w_k.cols(),
                self.w_v.rows(),
                self.w_v.cols()
            )))
        }
    }
}

/// `f_mlp(X) = phi(phi(phi(X W1) W2) W3) W4 + X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub w: [Matrix; MLP_DEPTH],
}

impl Mlp {
    pub fn zeros(d: usize) -> Self {
        Self {
            w: std::array::from_fn(|_| Matrix::zeros(d, d)),
        }
    }
}

/// Weights of one transformer layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub heads: Vec<AttentionHead>,
    pub mlp: Mlp,
}

impl LayerWeights {
    /// The all-zero layer, an exact identity thanks to both residuals.
    pub fn zeros(d: usize) -> Self {
        Self {
            heads: Vec::new(),
            mlp: Mlp::zeros(d),
        }
    }

    pub fn width(&self) -> usize {
        self.mlp.w[0].rows()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.width();
        if self.heads.len() > MAX_HEADS {
            return Err(Error::Dimension(format!(
                "{} heads exceed the limit of {MAX_HEADS}",
                self.heads.len()
            )));
        }
        for h in &self.heads {
            h.check(d)?;
        }
        for w in &self.mlp.w {
            if w.rows() != d || w.cols() != d {
                return Err(Error::Dimension(format!("MLP matrix is not {d}x{d}")));
            }
        }
        Ok(())
    }
}

/// A looped program: layers applied in order each pass, until the scalar in
/// `termination_column` (top row) becomes nonzero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerProgram {
    pub layers: Vec<LayerWeights>,
    pub termination_column: usize,
    pub max_passes: usize,
}

/// Averages, per row, the standard basis vectors of the (tolerant) argmax set.
pub fn hardmax_rows(scores: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(scores.rows(), scores.cols());
    for i in 0..scores.rows() {
        let row = scores.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let winners: Vec<usize> = (0..row.len())
            .filter(|&j| row[j] >= max - TIE_TOLERANCE)
            .collect();
        let share = 1.0 / winners.len() as f64;
        for j in winners {
            out[(i, j)] = share;
        }
    }
    out
}

/// Weights stored as nonzero lists. Every product below accumulates its
/// terms in increasing inner index, exactly like [`Matrix::matmul`], so the
/// prepared route is bit-identical to the dense definition.
#[derive(Debug, Clone)]
struct PreparedHead {
    kind: HeadKind,
    q: Vec<(usize, usize, f64)>,
    k: Vec<(usize, usize, f64)>,
    // (destination column, [(source column, weight)])
    v: Vec<(usize, Vec<(usize, f64)>)>,
}

impl PreparedHead {
    fn new(h: &AttentionHead) -> Self {
        let mut v: Vec<(usize, Vec<(usize, f64)>)> = Vec::new();
        for j in 0..h.w_v.cols() {
            let col: Vec<(usize, f64)> = (0..h.w_v.rows())
                .map(|s| (s, h.w_v[(s, j)]))
                .filter(|&(_, w)| w != 0.0)
                .collect();
            if !col.is_empty() {
                v.push((j, col));
            }
        }
        Self {
            kind: h.kind,
            q: h.w_q.nonzeros(),
            k: h.w_k.nonzeros(),
            v,
        }
    }

    fn project(w: &[(usize, usize, f64)], row: &[f64]) -> [f64; HEAD_DIM] {
        let mut out = [0.0; HEAD_DIM];
        for &(c, t, coef) in w {
            let a = row[c];
            if a != 0.0 {
                out[t] += a * coef;
            }
        }
        out
    }

    /// Per destination column, the head's contribution to every row.
    fn contributions(&self, x: &Matrix, a: &PaddedIncidence) -> Vec<(usize, Vec<f64>)> {
        let n = x.rows();
        let q: Vec<_> = (0..n).map(|i| Self::project(&self.q, x.row(i))).collect();
        let k: Vec<_> = (0..n).map(|i| Self::project(&self.k, x.row(i))).collect();

        let mut winners: Vec<Vec<usize>> = Vec::with_capacity(n);
        let mut scores = vec![0.0; n];
        for qi in &q {
            for (s, kj) in scores.iter_mut().zip(&k) {
                let mut acc = 0.0;
                for t in 0..HEAD_DIM {
                    if qi[t] != 0.0 {
                        acc += qi[t] * kj[t];
                    }
                }
                *s = acc;
            }
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            winners.push(
                (0..n)
                    .filter(|&j| scores[j] >= max - TIE_TOLERANCE)
                    .collect(),
            );
        }

        let mut out = Vec::with_capacity(self.v.len());
        for (dst, src) in &self.v {
            let values: Vec<f64> = (0..n)
                .map(|r| {
                    let row = x.row(r);
                    let mut acc = 0.0;
                    for &(s, w) in src {
                        if row[s] != 0.0 {
                            acc += row[s] * w;
                        }
                    }
                    acc
                })
                .collect();
            let attended: Vec<f64> = winners
                .iter()
                .map(|win| {
                    let share = 1.0 / win.len() as f64;
                    let mut acc = 0.0;
                    for &j in win {
                        acc += share * values[j];
                    }
                    acc
                })
                .collect();
            let col = match self.kind {
                HeadKind::Identity => attended,
                HeadKind::Incidence | HeadKind::IncidenceTranspose => {
                    let transpose = self.kind == HeadKind::IncidenceTranspose;
                    (0..n)
                        .map(|i| {
                            let mut acc = 0.0;
                            for &(j, w) in a.row_nonzeros(i, transpose) {
                                acc += w * attended[j];
                            }
                            acc
                        })
                        .collect()
                }
            };
            out.push((*dst, col));
        }
        out
    }
}

/// A layer with sparse weights, ready for repeated execution.
#[derive(Debug, Clone)]
pub struct PreparedLayer {
    d: usize,
    heads: Vec<PreparedHead>,
    mlp: [Vec<(usize, usize, f64)>; MLP_DEPTH],
}

impl PreparedLayer {
    pub fn new(layer: &LayerWeights) -> Result<Self> {
        layer.validate()?;
        Ok(Self {
            d: layer.width(),
            heads: layer.heads.iter().map(PreparedHead::new).collect(),
            mlp: std::array::from_fn(|i| layer.mlp.w[i].nonzeros()),
        })
    }

    fn check(&self, x: &Matrix, a: &PaddedIncidence) -> Result<()> {
        if x.cols() != self.d {
            return Err(Error::Dimension(format!(
                "state width {} does not match layer width {}",
                x.cols(),
                self.d
            )));
        }
        if a.k() != x.rows() {
            return Err(Error::Dimension(format!(
                "incidence is {}x{} but state has {} rows",
                a.k(),
                a.k(),
                x.rows()
            )));
        }
        Ok(())
    }

    /// `f_mlp(f_attn(X, A~))`.
    pub fn apply(&self, x: &Matrix, a: &PaddedIncidence) -> Result<Matrix> {
        self.check(x, a)?;
        let mut y = x.clone();
        for head in &self.heads {
            for (dst, col) in head.contributions(x, a) {
                for (i, v) in col.into_iter().enumerate() {
                    y[(i, dst)] += v;
                }
            }
        }
        let d = self.d;
        let mut cur = vec![0.0; d];
        let mut next = vec![0.0; d];
        for i in 0..y.rows() {
            cur.copy_from_slice(y.row(i));
            for (level, w) in self.mlp.iter().enumerate() {
                next.iter_mut().for_each(|v| *v = 0.0);
                for &(k, j, coef) in w {
                    let a = cur[k];
                    if a != 0.0 {
                        next[j] += a * coef;
                    }
                }
                if level + 1 < MLP_DEPTH {
                    next.iter_mut().for_each(|v| *v = relu(*v));
                }
                std::mem::swap(&mut cur, &mut next);
            }
            for (o, delta) in y.row_mut(i).iter_mut().zip(&cur) {
                *o += delta;
            }
        }
        Ok(y)
    }
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// One head's contribution `M sigma(X W_Q W_K^T X^T) X W_V`.
pub fn apply_attention_head(
    x: &Matrix,
    head: &AttentionHead,
    a: &PaddedIncidence,
) -> Result<Matrix> {
    head.check(x.cols())?;
    if a.k() != x.rows() {
        return Err(Error::Dimension(
            "incidence and state row counts differ".into(),
        ));
    }
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for (dst, col) in PreparedHead::new(head).contributions(x, a) {
        out.set_column(dst, &col);
    }
    Ok(out)
}

/// Dense reference evaluation of one layer, straight from the definitions.
pub fn apply_layer_dense(x: &Matrix, layer: &LayerWeights, a: &PaddedIncidence) -> Result<Matrix> {
    layer.validate()?;
    let mut y = x.clone();
    for h in &layer.heads {
        let scores = x.matmul(&h.w_q).matmul(&x.matmul(&h.w_k).transpose());
        let attended = hardmax_rows(&scores).matmul(&x.matmul(&h.w_v));
        let out = match h.kind {
            HeadKind::Identity => attended,
            HeadKind::Incidence => a.matrix().matmul(&attended),
            HeadKind::IncidenceTranspose => a.matrix().transpose().matmul(&attended),
        };
        y.add_assign(&out);
    }
    let mut z = y.clone();
    for w in &layer.mlp.w[..MLP_DEPTH - 1] {
        z = z.matmul(w).map(relu);
    }
    let mut out = z.matmul(&layer.mlp.w[MLP_DEPTH - 1]);
    out.add_assign(&y);
    Ok(out)
}

/// Applies one layer.
pub fn apply_layer(x: &Matrix, layer: &LayerWeights, a: &PaddedIncidence) -> Result<Matrix> {
    PreparedLayer::new(layer)?.apply(x, a)
}

/// One body pass: every layer in order.
pub fn apply_model(x: &Matrix, layers: &[LayerWeights], a: &PaddedIncidence) -> Result<Matrix> {
    let prepared = prepare(layers)?;
    apply_prepared(x, &prepared, a)
}

pub fn prepare(layers: &[LayerWeights]) -> Result<Vec<PreparedLayer>> {
    layers.iter().map(PreparedLayer::new).collect()
}

pub fn apply_prepared(x: &Matrix, layers: &[PreparedLayer], a: &PaddedIncidence) -> Result<Matrix> {
    let mut cur = x.clone();
    for l in layers {
        cur = l.apply(&cur, a)?;
    }
    Ok(cur)
}

/// Runs the body while the top-row termination scalar is zero. `observe` is
/// called after every pass with the 1-based pass index and the new state.
/// Returns the final state and the number of passes.
pub fn looped_run(
    x0: &Matrix,
    prog: &TransformerProgram,
    a: &PaddedIncidence,
    mut observe: impl FnMut(usize, &Matrix),
) -> Result<(Matrix, usize)> {
    let term = prog.termination_column;
    if term >= x0.cols() {
        return Err(Error::Dimension(format!(
            "termination column {term} out of range"
        )));
    }
    let layers = prepare(&prog.layers)?;
    let mut x = x0.clone();
    let mut passes = 0;
    while x[(0, term)] == 0.0 {
        if passes == prog.max_passes {
            return Err(Error::NonTermination { passes });
        }
        x = apply_prepared(&x, &layers, a)?;
        passes += 1;
        observe(passes, &x);
    }
    Ok((x, passes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hardmax_examples() {
        let s = Matrix::from_rows(&[
            vec![2.0, 5.0, 5.0],
            vec![7.0, 1.0, 0.0],
            vec![3.0, 3.0, 3.0],
        ]);
        let h = hardmax_rows(&s);
        assert_eq!(h.row(0), &[0.0, 0.5, 0.5]);
        assert_eq!(h.row(1), &[1.0, 0.0, 0.0]);
        let third = 1.0 / 3.0;
        assert_eq!(h.row(2), &[third, third, third]);
    }

    #[test]
    fn zero_layer_is_identity() {
        let x = Matrix::from_rows(&[vec![1.0, -2.5, 3.0], vec![0.0, 4.0, 1e-3]]);
        let a = PaddedIncidence::from_matrix(Matrix::zeros(2, 2)).unwrap();
        let out = apply_layer(&x, &LayerWeights::zeros(3), &a).unwrap();
        assert_eq!(out, x);
        assert_eq!(apply_model(&x, &[], &a).unwrap(), x);
        let two = vec![LayerWeights::zeros(3), LayerWeights::zeros(3)];
        assert_eq!(apply_model(&x, &two, &a).unwrap(), x);
    }

    #[test]
    fn zero_head_contributes_nothing() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let a = PaddedIncidence::from_matrix(Matrix::identity(2)).unwrap();
        let out =
            apply_attention_head(&x, &AttentionHead::zeros(HeadKind::Incidence, 2), &a).unwrap();
        assert!(out.is_zero());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let x = Matrix::zeros(2, 3);
        let a = PaddedIncidence::from_matrix(Matrix::zeros(3, 3)).unwrap();
        assert!(matches!(
            apply_layer(&x, &LayerWeights::zeros(3), &a),
            Err(Error::Dimension(_))
        ));
        let a = PaddedIncidence::from_matrix(Matrix::zeros(2, 2)).unwrap();
        assert!(apply_layer(&x, &LayerWeights::zeros(4), &a).is_err());
    }

    #[test]
    fn terminated_state_runs_zero_passes() {
        let mut x = Matrix::zeros(2, 2);
        x[(0, 1)] = 1.0;
        let prog = TransformerProgram {
            layers: vec![LayerWeights::zeros(2)],
            termination_column: 1,
            max_passes: 5,
        };
        let a = PaddedIncidence::from_matrix(Matrix::zeros(2, 2)).unwrap();
        let (out, passes) = looped_run(&x, &prog, &a, |_, _| {}).unwrap();
        assert_eq!((out, passes), (x, 0));
    }

    #[test]
    fn budget_exhaustion_is_non_termination() {
        let x = Matrix::zeros(2, 2);
        let prog = TransformerProgram {
            layers: vec![LayerWeights::zeros(2)],
            termination_column: 1,
            max_passes: 3,
        };
        let a = PaddedIncidence::from_matrix(Matrix::zeros(2, 2)).unwrap();
        assert!(matches!(
            looped_run(&x, &prog, &a, |_, _| {}),
            Err(Error::NonTermination { passes: 3 })
        ));
    }
}
