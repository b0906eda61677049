//! Recording tape for reverse-mode differentiation.
//!
//! Forward operations append nodes holding the computed value and enough
//! structure to replay the computation backward. Values on the tape are flat
//! vectors (scalars are length-1); matrices enter only through parameter
//! references, so matrix payloads are never copied onto the tape.

use rand::Rng;

use super::params::{ParamId, ParamSet};
use super::{DiffError, DropoutMode};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueId(usize);

enum Op {
    Input,
    Param(ParamId),
    EmbedCol {
        param: ParamId,
        col: usize,
        cols: usize,
    },
    MatVec {
        param: ParamId,
        x: ValueId,
        rows: usize,
        cols: usize,
    },
    Add(ValueId, ValueId),
    Mul(ValueId, ValueId),
    Tanh(ValueId),
    Sigmoid(ValueId),
    Concat(ValueId, ValueId),
    Softmax(ValueId),
    CrossEntropy {
        probs: ValueId,
        target: usize,
    },
    Dot(ValueId, ValueId),
    /// `out[i] = keys[i] . query`
    ScoresAgainst {
        keys: Vec<ValueId>,
        query: ValueId,
    },
    /// `out = sum_i weights[i] * values[i]`
    WeightedSum {
        weights: ValueId,
        values: Vec<ValueId>,
    },
    Dropout {
        x: ValueId,
        mask: Vec<f64>,
    },
    Mean(Vec<ValueId>),
}

struct Node {
    op: Op,
    value: Vec<f64>,
}

/// Deterministic dot product with fixed accumulation order.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in chunks * 4..n {
        sum += a[j] * b[j];
    }
    sum
}

fn axpy(k: f64, xs: &[f64], out: &mut [f64]) {
    debug_assert_eq!(xs.len(), out.len());
    for (o, &x) in out.iter_mut().zip(xs) {
        *o += k * x;
    }
}

/// A single-threaded computation record.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// The computed value of a recorded node.
    pub fn value(&self, id: ValueId) -> &[f64] {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Vec<f64>) -> ValueId {
        self.nodes.push(Node { op, value });
        ValueId(self.nodes.len() - 1)
    }

    fn input_value(&self, id: ValueId, op: &'static str) -> Result<&[f64], DiffError> {
        self.nodes
            .get(id.0)
            .map(|n| n.value.as_slice())
            .ok_or(DiffError::Graph {
                reason: format!("{op}: value id {} is not on this tape", id.0),
            })
    }

    /// Records a constant input (no gradient flows into it).
    pub fn input(&mut self, value: Vec<f64>) -> ValueId {
        self.push(Op::Input, value)
    }

    /// Records an all-zero constant of the given length.
    pub fn zeros(&mut self, len: usize) -> ValueId {
        self.input(vec![0.0; len])
    }

    /// Brings a parameter tensor onto the tape as a flat vector.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> ValueId {
        let value = params.value(id).data().to_vec();
        self.push(Op::Param(id), value)
    }

    /// Reads one column of a matrix parameter (an embedding lookup).
    pub fn embed_col(
        &mut self,
        params: &ParamSet,
        id: ParamId,
        col: usize,
    ) -> Result<ValueId, DiffError> {
        let tensor = params.value(id);
        let (rows, cols) = match tensor.shape() {
            [r, c] => (*r, *c),
            other => {
                return Err(DiffError::Shape {
                    op: "embed_col",
                    detail: format!("expected a matrix, got shape {other:?}"),
                })
            }
        };
        if col >= cols {
            return Err(DiffError::Index {
                op: "embed_col",
                index: col,
                len: cols,
            });
        }
        let data = tensor.data();
        let value = (0..rows).map(|r| data[r * cols + col]).collect();
        Ok(self.push(
            Op::EmbedCol {
                param: id,
                col,
                cols,
            },
            value,
        ))
    }

    /// Matrix-vector product with a matrix parameter.
    pub fn matvec(
        &mut self,
        params: &ParamSet,
        w: ParamId,
        x: ValueId,
    ) -> Result<ValueId, DiffError> {
        let tensor = params.value(w);
        let (rows, cols) = match tensor.shape() {
            [r, c] => (*r, *c),
            other => {
                return Err(DiffError::Shape {
                    op: "matvec",
                    detail: format!("expected a matrix, got shape {other:?}"),
                })
            }
        };
        let xv = self.input_value(x, "matvec")?;
        if xv.len() != cols {
            return Err(DiffError::Shape {
                op: "matvec",
                detail: format!("matrix is {rows}x{cols} but vector has length {}", xv.len()),
            });
        }
        let data = tensor.data();
        let mut out = vec![0.0; rows];
        for (r, slot) in out.iter_mut().enumerate() {
            *slot = dot(&data[r * cols..(r + 1) * cols], xv);
        }
        Ok(self.push(
            Op::MatVec {
                param: w,
                x,
                rows,
                cols,
            },
            out,
        ))
    }

    /// `W x + b`; the bias is optional.
    pub fn affine(
        &mut self,
        params: &ParamSet,
        w: ParamId,
        x: ValueId,
        bias: Option<ParamId>,
    ) -> Result<ValueId, DiffError> {
        let wx = self.matvec(params, w, x)?;
        match bias {
            Some(b) => {
                let bv = self.param(params, b);
                self.add(wx, bv)
            }
            None => Ok(wx),
        }
    }

    fn binary_same_len(
        &mut self,
        a: ValueId,
        b: ValueId,
        op_name: &'static str,
    ) -> Result<(Vec<f64>, Vec<f64>), DiffError> {
        let av = self.input_value(a, op_name)?.to_vec();
        let bv = self.input_value(b, op_name)?.to_vec();
        if av.len() != bv.len() {
            return Err(DiffError::Shape {
                op: op_name,
                detail: format!("lengths {} and {} differ", av.len(), bv.len()),
            });
        }
        Ok((av, bv))
    }

    /// Elementwise sum.
    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId, DiffError> {
        let (av, bv) = self.binary_same_len(a, b, "add")?;
        let out = av.iter().zip(&bv).map(|(x, y)| x + y).collect();
        Ok(self.push(Op::Add(a, b), out))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId, DiffError> {
        let (av, bv) = self.binary_same_len(a, b, "mul")?;
        let out = av.iter().zip(&bv).map(|(x, y)| x * y).collect();
        Ok(self.push(Op::Mul(a, b), out))
    }

    /// Elementwise hyperbolic tangent.
    pub fn tanh(&mut self, x: ValueId) -> Result<ValueId, DiffError> {
        let out = self.input_value(x, "tanh")?.iter().map(|v| v.tanh()).collect();
        Ok(self.push(Op::Tanh(x), out))
    }

    /// Elementwise logistic sigmoid.
    pub fn sigmoid(&mut self, x: ValueId) -> Result<ValueId, DiffError> {
        let out = self
            .input_value(x, "sigmoid")?
            .iter()
            .map(|v| 1.0 / (1.0 + (-v).exp()))
            .collect();
        Ok(self.push(Op::Sigmoid(x), out))
    }

    /// Concatenation `[a; b]`.
    pub fn concat(&mut self, a: ValueId, b: ValueId) -> Result<ValueId, DiffError> {
        let mut out = self.input_value(a, "concat")?.to_vec();
        out.extend_from_slice(self.input_value(b, "concat")?);
        Ok(self.push(Op::Concat(a, b), out))
    }

    /// Numerically stable softmax over the whole vector.
    pub fn softmax(&mut self, x: ValueId) -> Result<ValueId, DiffError> {
        let xv = self.input_value(x, "softmax")?;
        if xv.is_empty() {
            return Err(DiffError::Shape {
                op: "softmax",
                detail: "input is empty".to_owned(),
            });
        }
        let max = xv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut out: Vec<f64> = xv.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = out.iter().sum();
        for o in &mut out {
            *o /= sum;
        }
        Ok(self.push(Op::Softmax(x), out))
    }

    /// `-log(probs[target])`, clamping probabilities at 1e-12.
    pub fn cross_entropy(&mut self, probs: ValueId, target: usize) -> Result<ValueId, DiffError> {
        let pv = self.input_value(probs, "cross_entropy")?;
        if target >= pv.len() {
            return Err(DiffError::Index {
                op: "cross_entropy",
                index: target,
                len: pv.len(),
            });
        }
        let p = pv[target].max(1e-12);
        Ok(self.push(Op::CrossEntropy { probs, target }, vec![-p.ln()]))
    }

    /// Inner product producing a scalar.
    pub fn dot_product(&mut self, a: ValueId, b: ValueId) -> Result<ValueId, DiffError> {
        let (av, bv) = self.binary_same_len(a, b, "dot")?;
        let out = vec![dot(&av, &bv)];
        Ok(self.push(Op::Dot(a, b), out))
    }

    /// One score per key vector: `out[i] = keys[i] . query`.
    pub fn scores_against(
        &mut self,
        keys: &[ValueId],
        query: ValueId,
    ) -> Result<ValueId, DiffError> {
        if keys.is_empty() {
            return Err(DiffError::Shape {
                op: "scores_against",
                detail: "no key vectors".to_owned(),
            });
        }
        let qv = self.input_value(query, "scores_against")?.to_vec();
        let mut out = Vec::with_capacity(keys.len());
        for &k in keys {
            let kv = self.input_value(k, "scores_against")?;
            if kv.len() != qv.len() {
                return Err(DiffError::Shape {
                    op: "scores_against",
                    detail: format!("key length {} vs query length {}", kv.len(), qv.len()),
                });
            }
            out.push(dot(kv, &qv));
        }
        Ok(self.push(
            Op::ScoresAgainst {
                keys: keys.to_vec(),
                query,
            },
            out,
        ))
    }

    /// Convex-style combination `sum_i weights[i] * values[i]`.
    pub fn weighted_sum(
        &mut self,
        weights: ValueId,
        values: &[ValueId],
    ) -> Result<ValueId, DiffError> {
        let wv = self.input_value(weights, "weighted_sum")?.to_vec();
        if wv.len() != values.len() || values.is_empty() {
            return Err(DiffError::Shape {
                op: "weighted_sum",
                detail: format!("{} weights for {} vectors", wv.len(), values.len()),
            });
        }
        let first_len = self.input_value(values[0], "weighted_sum")?.len();
        let mut out = vec![0.0; first_len];
        for (&w, &v) in wv.iter().zip(values) {
            let vv = self.input_value(v, "weighted_sum")?;
            if vv.len() != first_len {
                return Err(DiffError::Shape {
                    op: "weighted_sum",
                    detail: "value vectors have mixed lengths".to_owned(),
                });
            }
            axpy(w, vv, &mut out);
        }
        Ok(self.push(
            Op::WeightedSum {
                weights,
                values: values.to_vec(),
            },
            out,
        ))
    }

    /// Inverted dropout: in training mode each entry is zeroed with
    /// probability `p` and survivors are scaled by `1/(1-p)`; in inference
    /// mode (or at `p == 0`) the input passes through untouched.
    pub fn dropout(
        &mut self,
        x: ValueId,
        p: f64,
        mode: DropoutMode,
        rng: &mut impl Rng,
    ) -> Result<ValueId, DiffError> {
        if !(0.0..1.0).contains(&p) {
            return Err(DiffError::Shape {
                op: "dropout",
                detail: format!("rate {p} outside [0, 1)"),
            });
        }
        if mode == DropoutMode::Inference || p == 0.0 {
            self.input_value(x, "dropout")?;
            return Ok(x);
        }
        let keep_scale = 1.0 / (1.0 - p);
        let xv = self.input_value(x, "dropout")?;
        let mask: Vec<f64> = (0..xv.len())
            .map(|_| {
                if rng.random::<f64>() < p {
                    0.0
                } else {
                    keep_scale
                }
            })
            .collect();
        let out = xv.iter().zip(&mask).map(|(v, m)| v * m).collect();
        Ok(self.push(Op::Dropout { x, mask }, out))
    }

    /// Mean of scalar nodes, itself a scalar.
    pub fn mean(&mut self, xs: &[ValueId]) -> Result<ValueId, DiffError> {
        if xs.is_empty() {
            return Err(DiffError::Shape {
                op: "mean",
                detail: "no inputs".to_owned(),
            });
        }
        let mut total = 0.0;
        for &x in xs {
            let v = self.input_value(x, "mean")?;
            if v.len() != 1 {
                return Err(DiffError::Shape {
                    op: "mean",
                    detail: format!("expected scalars, found length {}", v.len()),
                });
            }
            total += v[0];
        }
        Ok(self.push(Op::Mean(xs.to_vec()), vec![total / xs.len() as f64]))
    }

    /// Propagates d(loss)/d(parameter) into every parameter's gradient
    /// accumulator, summing with whatever is already there.
    pub fn backward(&self, loss: ValueId, params: &mut ParamSet) -> Result<(), DiffError> {
        let loss_node = self.nodes.get(loss.0).ok_or_else(|| DiffError::Graph {
            reason: "loss value is not recorded on this tape".to_owned(),
        })?;
        if loss_node.value.len() != 1 {
            return Err(DiffError::Graph {
                reason: format!("loss must be scalar, found length {}", loss_node.value.len()),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            match &self.nodes[idx].op {
                Op::Input => {}
                Op::Param(pid) => {
                    axpy(1.0, &g, params.grad_mut(*pid));
                }
                Op::EmbedCol {
                    param, col, cols, ..
                } => {
                    let grad = params.grad_mut(*param);
                    for (r, gr) in g.iter().enumerate() {
                        grad[r * cols + col] += gr;
                    }
                }
                Op::MatVec {
                    param,
                    x,
                    rows,
                    cols,
                } => {
                    let xv = &self.nodes[x.0].value;
                    {
                        let wval = params.value(*param).data();
                        let dx = Self::grad_slot(&mut grads, *x, xv.len());
                        for r in 0..*rows {
                            axpy(g[r], &wval[r * cols..(r + 1) * cols], dx);
                        }
                    }
                    let wgrad = params.grad_mut(*param);
                    for r in 0..*rows {
                        axpy(g[r], xv, &mut wgrad[r * cols..(r + 1) * cols]);
                    }
                }
                Op::Add(a, b) => {
                    let len = g.len();
                    axpy(1.0, &g, Self::grad_slot(&mut grads, *a, len));
                    axpy(1.0, &g, Self::grad_slot(&mut grads, *b, len));
                }
                Op::Mul(a, b) => {
                    let av = self.nodes[a.0].value.clone();
                    let bv = &self.nodes[b.0].value;
                    let da = Self::grad_slot(&mut grads, *a, g.len());
                    for ((d, gg), bb) in da.iter_mut().zip(&g).zip(bv) {
                        *d += gg * bb;
                    }
                    let db = Self::grad_slot(&mut grads, *b, g.len());
                    for ((d, gg), aa) in db.iter_mut().zip(&g).zip(&av) {
                        *d += gg * aa;
                    }
                }
                Op::Tanh(x) => {
                    let y = &self.nodes[idx].value;
                    let dx = Self::grad_slot(&mut grads, *x, g.len());
                    for ((d, gg), yy) in dx.iter_mut().zip(&g).zip(y) {
                        *d += gg * (1.0 - yy * yy);
                    }
                }
                Op::Sigmoid(x) => {
                    let y = &self.nodes[idx].value;
                    let dx = Self::grad_slot(&mut grads, *x, g.len());
                    for ((d, gg), yy) in dx.iter_mut().zip(&g).zip(y) {
                        *d += gg * yy * (1.0 - yy);
                    }
                }
                Op::Concat(a, b) => {
                    let a_len = self.nodes[a.0].value.len();
                    axpy(1.0, &g[..a_len], Self::grad_slot(&mut grads, *a, a_len));
                    let b_len = g.len() - a_len;
                    axpy(1.0, &g[a_len..], Self::grad_slot(&mut grads, *b, b_len));
                }
                Op::Softmax(x) => {
                    let y = &self.nodes[idx].value;
                    let inner = dot(&g, y);
                    let dx = Self::grad_slot(&mut grads, *x, g.len());
                    for ((d, yy), gg) in dx.iter_mut().zip(y).zip(&g) {
                        *d += yy * (gg - inner);
                    }
                }
                Op::CrossEntropy { probs, target } => {
                    let p = self.nodes[probs.0].value[*target].max(1e-12);
                    let len = self.nodes[probs.0].value.len();
                    let dp = Self::grad_slot(&mut grads, *probs, len);
                    dp[*target] -= g[0] / p;
                }
                Op::Dot(a, b) => {
                    let av = self.nodes[a.0].value.clone();
                    let bv = self.nodes[b.0].value.clone();
                    axpy(g[0], &bv, Self::grad_slot(&mut grads, *a, av.len()));
                    axpy(g[0], &av, Self::grad_slot(&mut grads, *b, bv.len()));
                }
                Op::ScoresAgainst { keys, query } => {
                    let qv = self.nodes[query.0].value.clone();
                    for (&k, &gk) in keys.iter().zip(&g) {
                        axpy(gk, &qv, Self::grad_slot(&mut grads, k, qv.len()));
                    }
                    let mut dq = vec![0.0; qv.len()];
                    for (&k, &gk) in keys.iter().zip(&g) {
                        axpy(gk, &self.nodes[k.0].value, &mut dq);
                    }
                    axpy(1.0, &dq, Self::grad_slot(&mut grads, *query, qv.len()));
                }
                Op::WeightedSum { weights, values } => {
                    let wv = self.nodes[weights.0].value.clone();
                    for (&v, &w) in values.iter().zip(&wv) {
                        let len = g.len();
                        axpy(w, &g, Self::grad_slot(&mut grads, v, len));
                    }
                    let mut dw = vec![0.0; values.len()];
                    for (slot, &v) in dw.iter_mut().zip(values) {
                        *slot = dot(&g, &self.nodes[v.0].value);
                    }
                    axpy(
                        1.0,
                        &dw,
                        Self::grad_slot(&mut grads, *weights, values.len()),
                    );
                }
                Op::Dropout { x, mask } => {
                    let dx = Self::grad_slot(&mut grads, *x, g.len());
                    for ((d, gg), m) in dx.iter_mut().zip(&g).zip(mask) {
                        *d += gg * m;
                    }
                }
                Op::Mean(xs) => {
                    let share = g[0] / xs.len() as f64;
                    for &x in xs {
                        Self::grad_slot(&mut grads, x, 1)[0] += share;
                    }
                }
            }
        }
        Ok(())
    }

    fn grad_slot(grads: &mut [Option<Vec<f64>>], id: ValueId, len: usize) -> &mut Vec<f64> {
        grads[id.0].get_or_insert_with(|| vec![0.0; len])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::TensorValue;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn param_vec(set: &mut ParamSet, name: &str, data: Vec<f64>) -> ParamId {
        set.register(name, TensorValue::vector(data)).expect("registers")
    }

    #[test]
    fn matvec_and_affine_compute_known_values() {
        let mut set = ParamSet::new();
        let w = set
            .register("w", TensorValue::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap())
            .unwrap();
        let b = param_vec(&mut set, "b", vec![0.5, -0.5]);
        let mut tape = Tape::new();
        let x = tape.input(vec![5.0, 6.0]);
        let wx = tape.matvec(&set, w, x).expect("shapes agree");
        assert_eq!(tape.value(wx), &[17.0, 39.0]);
        let y = tape.affine(&set, w, x, Some(b)).expect("shapes agree");
        assert_eq!(tape.value(y), &[17.5, 38.5]);

        let zero = tape.zeros(2);
        let z = tape.matvec(&set, w, zero).expect("shapes agree");
        assert_eq!(tape.value(z), &[0.0, 0.0]);
    }

    #[test]
    fn shape_errors_are_reported() {
        let mut set = ParamSet::new();
        let w = set
            .register("w", TensorValue::matrix(2, 3, vec![0.0; 6]).unwrap())
            .unwrap();
        let mut tape = Tape::new();
        let x = tape.input(vec![1.0, 2.0]);
        assert!(matches!(
            tape.matvec(&set, w, x),
            Err(DiffError::Shape { .. })
        ));
        let a = tape.input(vec![1.0]);
        let b = tape.input(vec![1.0, 2.0]);
        assert!(tape.add(a, b).is_err());
        assert!(tape.mul(a, b).is_err());
    }

    #[test]
    fn elementwise_basics() {
        let mut tape = Tape::new();
        let zero = tape.input(vec![0.0]);
        let t = tape.tanh(zero).unwrap();
        assert_eq!(tape.value(t), &[0.0]);
        let s = tape.sigmoid(zero).unwrap();
        assert_eq!(tape.value(s), &[0.5]);
        let one = tape.input(vec![1.0]);
        let two = tape.input(vec![2.0]);
        let c = tape.concat(one, two).unwrap();
        assert_eq!(tape.value(c), &[1.0, 2.0]);
    }

    #[test]
    fn softmax_matches_uniform_and_is_stable() {
        let mut tape = Tape::new();
        let x = tape.input(vec![0.0, 0.0]);
        let y = tape.softmax(x).unwrap();
        assert_eq!(tape.value(y), &[0.5, 0.5]);

        let big = tape.input(vec![1000.0, 0.0]);
        let yb = tape.softmax(big).unwrap();
        let v = tape.value(yb);
        assert!(v.iter().all(|p| p.is_finite()));
        assert!(v[0] > 1.0 - 1e-12 && v[1] < 1e-12);
    }

    #[test]
    fn softmax_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let xs: Vec<f64> = (0..64).map(|_| rng.random_range(-30.0..30.0)).collect();
            let naive: Vec<f64> = {
                let sum: f64 = xs.iter().map(|v| v.exp()).sum();
                xs.iter().map(|v| v.exp() / sum).collect()
            };
            let mut tape = Tape::new();
            let x = tape.input(xs);
            let y = tape.softmax(x).unwrap();
            let got = tape.value(y);
            let sum: f64 = got.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            for (a, b) in got.iter().zip(&naive) {
                assert!((a - b).abs() < 1e-12, "softmax {a} vs naive {b}");
            }
        }
    }

    #[test]
    fn cross_entropy_known_values_and_index_error() {
        let mut tape = Tape::new();
        let certain = tape.input(vec![1.0, 0.0]);
        let l0 = tape.cross_entropy(certain, 0).unwrap();
        assert_eq!(tape.value(l0), &[0.0]);

        let even = tape.input(vec![0.5, 0.5]);
        let l1 = tape.cross_entropy(even, 1).unwrap();
        assert!((tape.value(l1)[0] - std::f64::consts::LN_2).abs() < 1e-15);

        assert!(matches!(
            tape.cross_entropy(even, 2),
            Err(DiffError::Index { .. })
        ));
    }

    #[test]
    fn product_gradient_is_the_other_factor() {
        let mut set = ParamSet::new();
        let x = param_vec(&mut set, "x", vec![3.0]);
        let y = param_vec(&mut set, "y", vec![7.0]);
        let unused = param_vec(&mut set, "unused", vec![1.0]);
        let mut tape = Tape::new();
        let xv = tape.param(&set, x);
        let yv = tape.param(&set, y);
        let prod = tape.mul(xv, yv).unwrap();
        tape.backward(prod, &mut set).expect("backward");
        assert_eq!(set.get(x).grad().data(), &[7.0]);
        assert_eq!(set.get(y).grad().data(), &[3.0]);
        assert_eq!(set.get(unused).grad().data(), &[0.0]);
    }

    #[test]
    fn backward_accumulates_across_calls() {
        let mut set = ParamSet::new();
        let x = param_vec(&mut set, "x", vec![2.0]);
        for _ in 0..2 {
            let mut tape = Tape::new();
            let xv = tape.param(&set, x);
            let sq = tape.mul(xv, xv).unwrap();
            tape.backward(sq, &mut set).expect("backward");
        }
        // d(x^2)/dx = 4 per pass, summed over two passes.
        assert_eq!(set.get(x).grad().data(), &[8.0]);
    }

    #[test]
    fn backward_rejects_bad_losses() {
        let mut set = ParamSet::new();
        let mut tape = Tape::new();
        let v = tape.input(vec![1.0, 2.0]);
        assert!(matches!(
            tape.backward(v, &mut set),
            Err(DiffError::Graph { .. })
        ));
        let other_tape = Tape::new();
        let scalar = {
            let mut t = Tape::new();
            t.input(vec![0.0]);
            t.input(vec![1.0])
        };
        assert!(other_tape.backward(scalar, &mut set).is_err());
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tape = Tape::new();
        let x = tape.input(vec![1.0, 2.0, 3.0]);
        let same = tape
            .dropout(x, 0.0, DropoutMode::Training, &mut rng)
            .unwrap();
        assert_eq!(same, x);
        let inf = tape
            .dropout(x, 0.5, DropoutMode::Inference, &mut rng)
            .unwrap();
        assert_eq!(inf, x);
        assert!(tape.dropout(x, 1.0, DropoutMode::Training, &mut rng).is_err());
    }

    #[test]
    fn dropout_keep_rate_and_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut tape = Tape::new();
        let x = tape.input(vec![2.0; n]);
        let y = tape
            .dropout(x, 0.5, DropoutMode::Training, &mut rng)
            .unwrap();
        let out = tape.value(y);
        let kept = out.iter().filter(|&&v| v != 0.0).count();
        let rate = kept as f64 / n as f64;
        assert!((rate - 0.5).abs() < 0.01, "keep rate {rate}");
        assert!(out.iter().all(|&v| v == 0.0 || (v - 4.0).abs() < 1e-15));
    }

    #[test]
    fn attention_primitives_compute_expected_values() {
        let mut tape = Tape::new();
        let k1 = tape.input(vec![1.0, 0.0]);
        let k2 = tape.input(vec![0.0, 1.0]);
        let q = tape.input(vec![2.0, 3.0]);
        let scores = tape.scores_against(&[k1, k2], q).unwrap();
        assert_eq!(tape.value(scores), &[2.0, 3.0]);

        let w = tape.input(vec![0.25, 0.75]);
        let mix = tape.weighted_sum(w, &[k1, k2]).unwrap();
        assert_eq!(tape.value(mix), &[0.25, 0.75]);

        let a = tape.input(vec![1.0]);
        let b = tape.input(vec![3.0]);
        let m = tape.mean(&[a, b]).unwrap();
        assert_eq!(tape.value(m), &[2.0]);
    }
}
