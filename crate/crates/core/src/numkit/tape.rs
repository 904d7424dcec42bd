//! Recorded computations and their reverse-mode gradients.
//!
//! A [`Tape`] owns one forward computation. Primitive ops panic on shape
//! errors (programmer mistakes); the layer helpers at the bottom validate
//! their inputs and return [`NumError`] instead.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::linalg::{axpy, dot, matmul_nn, matmul_nt, matmul_tn};
use super::optim::ParamStore;
use super::{NumError, Tensor};

/// Number of attention scores evaluated since the last reset. Used by the
/// scaling instrumentation.
static ATTN_SCORE_EVALS: AtomicU64 = AtomicU64::new(0);

pub fn reset_attention_score_evals() {
    ATTN_SCORE_EVALS.store(0, Ordering::Relaxed);
}

pub fn attention_score_evals() -> u64 {
    ATTN_SCORE_EVALS.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Constant sparse matrix in CSR form, used for per-relation message
/// passing. Not differentiable.
#[derive(Debug, Clone)]
pub struct SparseMat {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseMat {
    /// rows[i] = list of (col, weight) for output row i.
    pub fn from_rows(n_rows: usize, n_cols: usize, rows: &[Vec<(usize, f64)>]) -> Self {
        assert_eq!(rows.len(), n_rows);
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for r in rows {
            for &(c, w) in r {
                assert!(c < n_cols);
                col_idx.push(c as u32);
                values.push(w);
            }
            row_ptr.push(col_idx.len());
        }
        SparseMat { n_rows, n_cols, row_ptr, col_idx, values }
    }
}

enum Op {
    Leaf,
    Param(String),
    /// a[n,k] * b[m,k]^T
    MatMulNT(Var, Var),
    /// a[n,k] * b[k,m]
    MatMulNN(Var, Var),
    /// x[n, blocks*ib] with w[blocks, ob, ib] -> [n, blocks*ob]
    BlockMatMulNT(Var, Var),
    /// adj[n_rows, n_cols] * x[n_cols, d]
    SpMM(Arc<SparseMat>, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// x[n,d] + b[1,d] per row
    AddRowBroadcast(Var, Var),
    /// x[n,d] * v[1,d] per row
    MulRowBroadcast(Var, Var),
    /// x[n,d] * s[n,1] scaling each row by a scalar
    MulColBroadcast(Var, Var),
    /// a*x + b elementwise
    Affine(Var, f64, f64),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    /// row-wise softmax over the first `key_len` columns, zeros elsewhere
    SoftmaxRows(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize, usize),
    SliceRows(Var, usize, usize),
    /// same data, new shape
    Reshape(Var),
    /// x[L,c] -> valid windows of size k against w[k,co,ci], bias [1,co]
    Conv1d { x: Var, w: Var, b: Var, k: usize },
    MaxPool1d { x: Var, k: usize, argmax: Vec<u32> },
    /// mean over rows [0, len) -> [1, d]
    MeanRows(Var, usize),
    SumRows(Var, usize),
    MaxRows(Var, usize, Vec<u32>),
    MeanAll(Var),
    Dropout(Var, Arc<Vec<f64>>),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Trainable input; backward deposits its gradient under `name`.
    pub fn param(&mut self, name: &str, store: &ParamStore) -> Var {
        let t = store.value(name).expect("registered parameter");
        self.push(t, Op::Param(name.to_string()), true)
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        let (n, k) = (ta.rows(), ta.cols());
        let (m, kb) = (tb.rows(), tb.cols());
        assert_eq!(k, kb, "matmul_nt inner dims {k} vs {kb}");
        let mut out = vec![0.0; n * m];
        matmul_nt(ta.data(), n, k, tb.data(), m, &mut out);
        let needs = self.needs(a) || self.needs(b);
        self.push(
            Tensor { shape: vec![n, m], data: Arc::new(out) },
            Op::MatMulNT(a, b),
            needs,
        )
    }

    pub fn matmul_nn(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        let (n, k) = (ta.rows(), ta.cols());
        let (kb, m) = (tb.rows(), tb.cols());
        assert_eq!(k, kb, "matmul_nn inner dims {k} vs {kb}");
        let mut out = vec![0.0; n * m];
        matmul_nn(ta.data(), n, k, tb.data(), m, &mut out);
        let needs = self.needs(a) || self.needs(b);
        self.push(
            Tensor { shape: vec![n, m], data: Arc::new(out) },
            Op::MatMulNN(a, b),
            needs,
        )
    }

    /// Block-diagonal dense: w has shape [blocks, ob, ib]; the i-th column
    /// block of x (width ib) is multiplied by w[i]^T.
    pub fn block_matmul_nt(&mut self, x: Var, w: Var) -> Var {
        let (tx, tw) = (self.value(x), self.value(w));
        let ws = tw.shape().to_vec();
        assert_eq!(ws.len(), 3, "block weight must be [blocks, ob, ib]");
        let (blocks, ob, ib) = (ws[0], ws[1], ws[2]);
        let (n, d_in) = (tx.rows(), tx.cols());
        assert_eq!(d_in, blocks * ib, "block input width");
        let d_out = blocks * ob;
        let mut out = vec![0.0; n * d_out];
        let (xd, wd) = (tx.data(), tw.data());
        for i in 0..n {
            let x_row = &xd[i * d_in..(i + 1) * d_in];
            let out_row = &mut out[i * d_out..(i + 1) * d_out];
            for bl in 0..blocks {
                let xb = &x_row[bl * ib..(bl + 1) * ib];
                for o in 0..ob {
                    let wrow = &wd[((bl * ob) + o) * ib..((bl * ob) + o + 1) * ib];
                    out_row[bl * ob + o] = dot(xb, wrow);
                }
            }
        }
        let needs = self.needs(x) || self.needs(w);
        self.push(
            Tensor { shape: vec![n, d_out], data: Arc::new(out) },
            Op::BlockMatMulNT(x, w),
            needs,
        )
    }

    pub fn spmm(&mut self, adj: Arc<SparseMat>, x: Var) -> Var {
        let tx = self.value(x);
        let (n, d) = (tx.rows(), tx.cols());
        assert_eq!(n, adj.n_cols, "spmm: adj cols vs x rows");
        let mut out = vec![0.0; adj.n_rows * d];
        let xd = tx.data();
        for r in 0..adj.n_rows {
            let out_row = &mut out[r * d..(r + 1) * d];
            for e in adj.row_ptr[r]..adj.row_ptr[r + 1] {
                let c = adj.col_idx[e] as usize;
                axpy(out_row, adj.values[e], &xd[c * d..(c + 1) * d]);
            }
        }
        let needs = self.needs(x);
        let rows = adj.n_rows;
        self.push(
            Tensor { shape: vec![rows, d], data: Arc::new(out) },
            Op::SpMM(adj, x),
            needs,
        )
    }

    fn zip_elementwise(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "elementwise shape mismatch");
        let data: Vec<f64> = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let shape = ta.shape().to_vec();
        let needs = self.needs(a) || self.needs(b);
        self.push(Tensor { shape, data: Arc::new(data) }, op, needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_elementwise(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_elementwise(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_elementwise(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn add_row_broadcast(&mut self, x: Var, b: Var) -> Var {
        let (tx, tb) = (self.value(x), self.value(b));
        let (n, d) = (tx.rows(), tx.cols());
        assert_eq!(tb.numel(), d, "row broadcast width");
        let bd = tb.data().to_vec();
        let mut data = tx.data().to_vec();
        for i in 0..n {
            for j in 0..d {
                data[i * d + j] += bd[j];
            }
        }
        let needs = self.needs(x) || self.needs(b);
        self.push(
            Tensor { shape: vec![n, d], data: Arc::new(data) },
            Op::AddRowBroadcast(x, b),
            needs,
        )
    }

    pub fn mul_row_broadcast(&mut self, x: Var, v: Var) -> Var {
        let (tx, tv) = (self.value(x), self.value(v));
        let (n, d) = (tx.rows(), tx.cols());
        assert_eq!(tv.numel(), d, "row broadcast width");
        let vd = tv.data().to_vec();
        let mut data = tx.data().to_vec();
        for i in 0..n {
            for j in 0..d {
                data[i * d + j] *= vd[j];
            }
        }
        let needs = self.needs(x) || self.needs(v);
        self.push(
            Tensor { shape: vec![n, d], data: Arc::new(data) },
            Op::MulRowBroadcast(x, v),
            needs,
        )
    }

    pub fn mul_col_broadcast(&mut self, x: Var, s: Var) -> Var {
        let (tx, ts) = (self.value(x), self.value(s));
        let (n, d) = (tx.rows(), tx.cols());
        assert_eq!(ts.numel(), n, "column broadcast height");
        let sd = ts.data().to_vec();
        let mut data = tx.data().to_vec();
        for i in 0..n {
            for j in 0..d {
                data[i * d + j] *= sd[i];
            }
        }
        let needs = self.needs(x) || self.needs(s);
        self.push(
            Tensor { shape: vec![n, d], data: Arc::new(data) },
            Op::MulColBroadcast(x, s),
            needs,
        )
    }

    pub fn affine(&mut self, x: Var, a: f64, b: f64) -> Var {
        let tx = self.value(x);
        let data: Vec<f64> = tx.data().iter().map(|&v| a * v + b).collect();
        let shape = tx.shape().to_vec();
        let needs = self.needs(x);
        self.push(Tensor { shape, data: Arc::new(data) }, Op::Affine(x, a, b), needs)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let tx = self.value(x);
        let data: Vec<f64> = tx
            .data()
            .iter()
            .map(|&v| if v >= 0.0 { v } else { slope * v })
            .collect();
        let shape = tx.shape().to_vec();
        let needs = self.needs(x);
        self.push(Tensor { shape, data: Arc::new(data) }, Op::LeakyRelu(x, slope), needs)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let data: Vec<f64> = tx.data().iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect();
        let shape = tx.shape().to_vec();
        let needs = self.needs(x);
        self.push(Tensor { shape, data: Arc::new(data) }, Op::Sigmoid(x), needs)
    }

    /// Row-wise softmax over columns [0, key_len); columns beyond get weight
    /// zero. key_len == 0 yields all-zero rows rather than NaN.
    pub fn softmax_rows(&mut self, x: Var, key_len: usize) -> Var {
        let tx = self.value(x);
        let (n, d) = (tx.rows(), tx.cols());
        assert!(key_len <= d, "key_len {key_len} beyond width {d}");
        let xd = tx.data();
        let mut data = vec![0.0; n * d];
        for i in 0..n {
            if key_len == 0 {
                continue;
            }
            let row = &xd[i * d..i * d + key_len];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..key_len {
                let e = (row[j] - max).exp();
                data[i * d + j] = e;
                sum += e;
            }
            for j in 0..key_len {
                data[i * d + j] /= sum;
            }
        }
        let needs = self.needs(x);
        self.push(
            Tensor { shape: vec![n, d], data: Arc::new(data) },
            Op::SoftmaxRows(x, key_len),
            needs,
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let n = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; n * total];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let t = self.value(p);
            assert_eq!(t.rows(), n, "concat_cols row mismatch");
            let td = t.data();
            for i in 0..n {
                data[i * total + offset..i * total + offset + w]
                    .copy_from_slice(&td[i * w..(i + 1) * w]);
            }
            offset += w;
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(
            Tensor { shape: vec![n, total], data: Arc::new(data) },
            Op::ConcatCols(parts.to_vec()),
            needs,
        )
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let d = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.cols(), d, "concat_rows width mismatch");
            data.extend_from_slice(t.data());
            rows += t.rows();
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(
            Tensor { shape: vec![rows, d], data: Arc::new(data) },
            Op::ConcatRows(parts.to_vec()),
            needs,
        )
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Var {
        let tx = self.value(x);
        let (n, d) = (tx.rows(), tx.cols());
        assert!(start < end && end <= n);
        let data = tx.data()[start * d..end * d].to_vec();
        let needs = self.needs(x);
        self.push(
            Tensor { shape: vec![end - start, d], data: Arc::new(data) },
            Op::SliceRows(x, start, end),
            needs,
        )
    }

    /// Same buffer under a new shape with equal element count.
    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Var {
        let tx = self.value(x);
        assert_eq!(tx.numel(), shape.iter().product::<usize>(), "reshape numel");
        let data = tx.data.clone();
        let needs = self.needs(x);
        self.push(Tensor { shape, data }, Op::Reshape(x), needs)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Var {
        let tx = self.value(x);
        let (n, d) = (tx.rows(), tx.cols());
        assert!(start < end && end <= d);
        let w = end - start;
        let mut data = vec![0.0; n * w];
        for i in 0..n {
            data[i * w..(i + 1) * w].copy_from_slice(&tx.data()[i * d + start..i * d + end]);
        }
        let needs = self.needs(x);
        self.push(
            Tensor { shape: vec![n, w], data: Arc::new(data) },
            Op::SliceCols(x, start, end),
            needs,
        )
    }

    /// Valid 1-d convolution, stride 1: x[L, ci], w[k, co, ci], b[1, co]
    /// -> [L-k+1, co].
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, k: usize) -> Var {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        let (l, ci) = (tx.rows(), tx.cols());
        let ws = tw.shape().to_vec();
        assert_eq!(ws.len(), 3);
        let (wk, co, wci) = (ws[0], ws[1], ws[2]);
        assert_eq!(wk, k);
        assert_eq!(wci, ci);
        assert_eq!(tb.numel(), co);
        assert!(l >= k, "conv input shorter than kernel");
        let lo = l - k + 1;
        let mut out = vec![0.0; lo * co];
        for i in 0..lo {
            let out_row = &mut out[i * co..(i + 1) * co];
            out_row.copy_from_slice(tb.data());
        }
        for dt in 0..k {
            // out += x[dt .. dt+lo] * w[dt]^T
            let xs = &tx.data()[dt * ci..(dt + lo) * ci];
            let wslice = &tw.data()[dt * co * ci..(dt + 1) * co * ci];
            matmul_nt(xs, lo, ci, wslice, co, &mut out);
        }
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        self.push(
            Tensor { shape: vec![lo, co], data: Arc::new(out) },
            Op::Conv1d { x, w, b, k },
            needs,
        )
    }

    /// Max pooling over row windows of size k, stride 1, per channel.
    pub fn max_pool1d(&mut self, x: Var, k: usize) -> Var {
        let tx = self.value(x);
        let (l, d) = (tx.rows(), tx.cols());
        assert!(l >= k, "pool input shorter than kernel");
        let lo = l - k + 1;
        let xd = tx.data();
        let mut out = vec![f64::NEG_INFINITY; lo * d];
        let mut argmax = vec![0u32; lo * d];
        for i in 0..lo {
            for dt in 0..k {
                let row = &xd[(i + dt) * d..(i + dt + 1) * d];
                for j in 0..d {
                    if row[j] > out[i * d + j] {
                        out[i * d + j] = row[j];
                        argmax[i * d + j] = (i + dt) as u32;
                    }
                }
            }
        }
        let needs = self.needs(x);
        self.push(
            Tensor { shape: vec![lo, d], data: Arc::new(out) },
            Op::MaxPool1d { x, k, argmax },
            needs,
        )
    }

    /// Mean over rows [0, len) -> [1, d]. Rows beyond len are padding and do
    /// not contribute.
    pub fn mean_rows(&mut self, x: Var, len: usize) -> Var {
        let tx = self.value(x);
        let (n, d) = (tx.rows(), tx.cols());
        assert!(len >= 1 && len <= n, "mean_rows len {len} of {n}");
        let xd = tx.data();
        let mut out = vec![0.0; d];
        for i in 0..len {
            axpy(&mut out, 1.0 / len as f64, &xd[i * d..(i + 1) * d]);
        }
        let needs = self.needs(x);
        self.push(
            Tensor { shape: vec![1, d], data: Arc::new(out) },
            Op::MeanRows(x, len),
            needs,
        )
    }

    pub fn sum_rows(&mut self, x: Var, len: usize) -> Var {
        let tx = self.value(x);
        let (n, d) = (tx.rows(), tx.cols());
        assert!(len >= 1 && len <= n);
        let xd = tx.data();
        let mut out = vec![0.0; d];
        for i in 0..len {
            axpy(&mut out, 1.0, &xd[i * d..(i + 1) * d]);
        }
        let needs = self.needs(x);
        self.push(
            Tensor { shape: vec![1, d], data: Arc::new(out) },
            Op::SumRows(x, len),
            needs,
        )
    }

    pub fn max_rows(&mut self, x: Var, len: usize) -> Var {
        let tx = self.value(x);
        let (n, d) = (tx.rows(), tx.cols());
        assert!(len >= 1 && len <= n);
        let xd = tx.data();
        let mut out = vec![f64::NEG_INFINITY; d];
        let mut argmax = vec![0u32; d];
        for i in 0..len {
            for j in 0..d {
                if xd[i * d + j] > out[j] {
                    out[j] = xd[i * d + j];
                    argmax[j] = i as u32;
                }
            }
        }
        let needs = self.needs(x);
        self.push(
            Tensor { shape: vec![1, d], data: Arc::new(out) },
            Op::MaxRows(x, len, argmax),
            needs,
        )
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let n = tx.numel() as f64;
        let mean = tx.data().iter().sum::<f64>() / n;
        let needs = self.needs(x);
        self.push(Tensor::scalar(mean), Op::MeanAll(x), needs)
    }

    /// Inverted dropout: at train time each element is zeroed with
    /// probability `rate` and survivors are scaled by 1/(1-rate). Identity
    /// when `rate == 0`.
    pub fn dropout(&mut self, x: Var, rate: f64, rng: &mut ChaCha8Rng) -> Var {
        if rate <= 0.0 {
            return x;
        }
        let tx = self.value(x);
        let scale = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..tx.numel())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { scale })
            .collect();
        let data: Vec<f64> = tx.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let shape = tx.shape().to_vec();
        let needs = self.needs(x);
        self.push(
            Tensor { shape, data: Arc::new(data) },
            Op::Dropout(x, Arc::new(mask)),
            needs,
        )
    }

    /// Reverse-mode sweep from a scalar loss. Gradients of every parameter
    /// node are accumulated into `store` under their names.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<(), NumError> {
        if loss.0 >= self.nodes.len() {
            return Err(NumError::DetachedGraph);
        }
        assert_eq!(self.nodes[loss.0].value.numel(), 1, "loss must be scalar");
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads, store);
        }
        Ok(())
    }

    fn add_grad(&self, grads: &mut [Option<Vec<f64>>], v: Var, delta: &[f64]) {
        if !self.needs(v) {
            return;
        }
        let slot = &mut grads[v.0];
        match slot {
            Some(g) => axpy(g, 1.0, delta),
            None => *slot = Some(delta.to_vec()),
        }
    }

    fn grad_buf<'a>(&self, grads: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
        if !self.needs(v) {
            return None;
        }
        let numel = self.value(v).numel();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; numel]))
    }

    #[allow(clippy::too_many_lines)]
    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>], store: &mut ParamStore) {
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Param(name) => store.accumulate_grad(name, g),
            Op::MatMulNT(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (n, k, m) = (ta.rows(), ta.cols(), tb.rows());
                if let Some(ga) = self.grad_buf(grads, *a) {
                    matmul_nn(g, n, m, tb.data(), k, ga); // dA = G * B
                }
                if let Some(gb) = self.grad_buf(grads, *b) {
                    matmul_tn(g, n, m, ta.data(), k, gb); // dB = G^T * A
                }
            }
            Op::MatMulNN(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (n, k, m) = (ta.rows(), ta.cols(), tb.cols());
                if let Some(ga) = self.grad_buf(grads, *a) {
                    matmul_nt(g, n, m, tb.data(), k, ga); // dA = G * B^T
                }
                if let Some(gb) = self.grad_buf(grads, *b) {
                    matmul_tn(ta.data(), n, k, g, m, gb); // dB = A^T * G
                }
            }
            Op::BlockMatMulNT(x, w) => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let ws = tw.shape();
                let (blocks, ob, ib) = (ws[0], ws[1], ws[2]);
                let n = tx.rows();
                let (d_in, d_out) = (blocks * ib, blocks * ob);
                let (xd, wd) = (tx.data(), tw.data());
                if self.needs(*x) {
                    let gx = self.grad_buf(grads, *x).unwrap();
                    for i in 0..n {
                        for bl in 0..blocks {
                            let go = &g[i * d_out + bl * ob..i * d_out + (bl + 1) * ob];
                            let gxb = &mut gx[i * d_in + bl * ib..i * d_in + (bl + 1) * ib];
                            for o in 0..ob {
                                let wrow = &wd[((bl * ob) + o) * ib..((bl * ob) + o + 1) * ib];
                                axpy(gxb, go[o], wrow);
                            }
                        }
                    }
                }
                if self.needs(*w) {
                    let gw = self.grad_buf(grads, *w).unwrap();
                    for i in 0..n {
                        for bl in 0..blocks {
                            let go = &g[i * d_out + bl * ob..i * d_out + (bl + 1) * ob];
                            let xb = &xd[i * d_in + bl * ib..i * d_in + (bl + 1) * ib];
                            for o in 0..ob {
                                let gwrow =
                                    &mut gw[((bl * ob) + o) * ib..((bl * ob) + o + 1) * ib];
                                axpy(gwrow, go[o], xb);
                            }
                        }
                    }
                }
            }
            Op::SpMM(adj, x) => {
                if self.needs(*x) {
                    let d = self.value(*x).cols();
                    let gx = self.grad_buf(grads, *x).unwrap();
                    for r in 0..adj.n_rows {
                        let grow = &g[r * d..(r + 1) * d];
                        for e in adj.row_ptr[r]..adj.row_ptr[r + 1] {
                            let c = adj.col_idx[e] as usize;
                            axpy(&mut gx[c * d..(c + 1) * d], adj.values[e], grow);
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                self.add_grad(grads, *a, g);
                self.add_grad(grads, *b, g);
            }
            Op::Sub(a, b) => {
                self.add_grad(grads, *a, g);
                if self.needs(*b) {
                    let neg: Vec<f64> = g.iter().map(|&v| -v).collect();
                    self.add_grad(grads, *b, &neg);
                }
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    let tb = self.value(*b);
                    let da: Vec<f64> = g.iter().zip(tb.data()).map(|(&gv, &bv)| gv * bv).collect();
                    self.add_grad(grads, *a, &da);
                }
                if self.needs(*b) {
                    let ta = self.value(*a);
                    let db: Vec<f64> = g.iter().zip(ta.data()).map(|(&gv, &av)| gv * av).collect();
                    self.add_grad(grads, *b, &db);
                }
            }
            Op::AddRowBroadcast(x, b) => {
                self.add_grad(grads, *x, g);
                if self.needs(*b) {
                    let d = self.value(*b).numel();
                    let n = self.value(*x).rows();
                    let mut db = vec![0.0; d];
                    for i in 0..n {
                        axpy(&mut db, 1.0, &g[i * d..(i + 1) * d]);
                    }
                    self.add_grad(grads, *b, &db);
                }
            }
            Op::MulRowBroadcast(x, v) => {
                let (tx, tv) = (self.value(*x), self.value(*v));
                let (n, d) = (tx.rows(), tx.cols());
                if self.needs(*x) {
                    let vd = tv.data();
                    let mut dx = vec![0.0; n * d];
                    for i in 0..n {
                        for j in 0..d {
                            dx[i * d + j] = g[i * d + j] * vd[j];
                        }
                    }
                    self.add_grad(grads, *x, &dx);
                }
                if self.needs(*v) {
                    let xd = tx.data();
                    let mut dv = vec![0.0; d];
                    for i in 0..n {
                        for j in 0..d {
                            dv[j] += g[i * d + j] * xd[i * d + j];
                        }
                    }
                    self.add_grad(grads, *v, &dv);
                }
            }
            Op::MulColBroadcast(x, s) => {
                let (tx, ts) = (self.value(*x), self.value(*s));
                let (n, d) = (tx.rows(), tx.cols());
                if self.needs(*x) {
                    let sd = ts.data();
                    let mut dx = vec![0.0; n * d];
                    for i in 0..n {
                        for j in 0..d {
                            dx[i * d + j] = g[i * d + j] * sd[i];
                        }
                    }
                    self.add_grad(grads, *x, &dx);
                }
                if self.needs(*s) {
                    let xd = tx.data();
                    let mut ds = vec![0.0; n];
                    for i in 0..n {
                        ds[i] = dot(&g[i * d..(i + 1) * d], &xd[i * d..(i + 1) * d]);
                    }
                    self.add_grad(grads, *s, &ds);
                }
            }
            Op::Affine(x, a, _) => {
                if self.needs(*x) {
                    let dx: Vec<f64> = g.iter().map(|&v| a * v).collect();
                    self.add_grad(grads, *x, &dx);
                }
            }
            Op::LeakyRelu(x, slope) => {
                if self.needs(*x) {
                    let tx = self.value(*x);
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(tx.data())
                        .map(|(&gv, &xv)| if xv >= 0.0 { gv } else { slope * gv })
                        .collect();
                    self.add_grad(grads, *x, &dx);
                }
            }
            Op::Sigmoid(x) => {
                if self.needs(*x) {
                    let ty = &self.nodes[idx].value;
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(ty.data())
                        .map(|(&gv, &yv)| gv * yv * (1.0 - yv))
                        .collect();
                    self.add_grad(grads, *x, &dx);
                }
            }
            Op::SoftmaxRows(x, key_len) => {
                if self.needs(*x) {
                    let ty = &self.nodes[idx].value;
                    let (n, d) = (ty.rows(), ty.cols());
                    let yd = ty.data();
                    let mut dx = vec![0.0; n * d];
                    for i in 0..n {
                        let y = &yd[i * d..i * d + key_len];
                        let gr = &g[i * d..i * d + key_len];
                        let inner = dot(gr, y);
                        for j in 0..*key_len {
                            dx[i * d + j] = y[j] * (gr[j] - inner);
                        }
                    }
                    self.add_grad(grads, *x, &dx);
                }
            }
            Op::ConcatCols(parts) => {
                let n = self.nodes[idx].value.rows();
                let total = self.nodes[idx].value.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.needs(p) {
                        let mut dp = vec![0.0; n * w];
                        for i in 0..n {
                            dp[i * w..(i + 1) * w]
                                .copy_from_slice(&g[i * total + offset..i * total + offset + w]);
                        }
                        self.add_grad(grads, p, &dp);
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let d = self.nodes[idx].value.cols();
                let mut offset = 0;
                for &p in parts {
                    let r = self.value(p).rows();
                    if self.needs(p) {
                        self.add_grad(grads, p, &g[offset * d..(offset + r) * d]);
                    }
                    offset += r;
                }
            }
            Op::SliceRows(x, start, end) => {
                if self.needs(*x) {
                    let d = self.value(*x).cols();
                    let gx = self.grad_buf(grads, *x).unwrap();
                    axpy(&mut gx[start * d..end * d], 1.0, g);
                }
            }
            Op::Reshape(x) => {
                self.add_grad(grads, *x, g);
            }
            Op::SliceCols(x, start, end) => {
                if self.needs(*x) {
                    let tx = self.value(*x);
                    let (n, d) = (tx.rows(), tx.cols());
                    let w = end - start;
                    let mut dx = vec![0.0; n * d];
                    for i in 0..n {
                        dx[i * d + start..i * d + end].copy_from_slice(&g[i * w..(i + 1) * w]);
                    }
                    self.add_grad(grads, *x, &dx);
                }
            }
            Op::Conv1d { x, w, b, k } => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let (l, ci) = (tx.rows(), tx.cols());
                let co = tw.shape()[1];
                let lo = l - k + 1;
                if self.needs(*x) {
                    let gx = self.grad_buf(grads, *x).unwrap();
                    for dt in 0..*k {
                        // dX[dt..dt+lo] += G * W[dt]
                        let wslice = &tw.data()[dt * co * ci..(dt + 1) * co * ci];
                        matmul_nn(g, lo, co, wslice, ci, &mut gx[dt * ci..(dt + lo) * ci]);
                    }
                }
                if self.needs(*w) {
                    let gw = self.grad_buf(grads, *w).unwrap();
                    for dt in 0..*k {
                        // dW[dt] += G^T * X[dt..dt+lo]
                        let xs = &tx.data()[dt * ci..(dt + lo) * ci];
                        matmul_tn(g, lo, co, xs, ci, &mut gw[dt * co * ci..(dt + 1) * co * ci]);
                    }
                }
                if self.needs(*b) {
                    let mut db = vec![0.0; co];
                    for i in 0..lo {
                        axpy(&mut db, 1.0, &g[i * co..(i + 1) * co]);
                    }
                    self.add_grad(grads, *b, &db);
                }
            }
            Op::MaxPool1d { x, argmax, .. } => {
                if self.needs(*x) {
                    let d = self.value(*x).cols();
                    let gx = self.grad_buf(grads, *x).unwrap();
                    for (o, &src_row) in argmax.iter().enumerate() {
                        let j = o % d;
                        gx[src_row as usize * d + j] += g[o];
                    }
                }
            }
            Op::MeanRows(x, len) => {
                if self.needs(*x) {
                    let d = self.value(*x).cols();
                    let gx = self.grad_buf(grads, *x).unwrap();
                    for i in 0..*len {
                        axpy(&mut gx[i * d..(i + 1) * d], 1.0 / *len as f64, g);
                    }
                }
            }
            Op::SumRows(x, len) => {
                if self.needs(*x) {
                    let d = self.value(*x).cols();
                    let gx = self.grad_buf(grads, *x).unwrap();
                    for i in 0..*len {
                        axpy(&mut gx[i * d..(i + 1) * d], 1.0, g);
                    }
                }
            }
            Op::MaxRows(x, _, argmax) => {
                if self.needs(*x) {
                    let d = self.value(*x).cols();
                    let gx = self.grad_buf(grads, *x).unwrap();
                    for (j, &src_row) in argmax.iter().enumerate() {
                        gx[src_row as usize * d + j] += g[j];
                    }
                }
            }
            Op::MeanAll(x) => {
                if self.needs(*x) {
                    let n = self.value(*x).numel();
                    let dx = vec![g[0] / n as f64; n];
                    self.add_grad(grads, *x, &dx);
                }
            }
            Op::Dropout(x, mask) => {
                if self.needs(*x) {
                    let dx: Vec<f64> = g.iter().zip(mask.iter()).map(|(&gv, &m)| gv * m).collect();
                    self.add_grad(grads, *x, &dx);
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// layer helpers

/// Affine map `x * w^T + b`. `w` is [out, in]; `b` optional [1, out].
pub fn dense(t: &mut Tape, x: Var, w: Var, b: Option<Var>) -> Result<Var, NumError> {
    let (xc, wc) = (t.value(x).cols(), t.value(w).cols());
    if xc != wc {
        return Err(NumError::ShapeMismatch {
            op: "dense",
            details: format!("input width {xc} vs weight width {wc}"),
        });
    }
    let y = t.matmul_nt(x, w);
    match b {
        Some(b) => {
            if t.value(b).numel() != t.value(w).rows() {
                return Err(NumError::ShapeMismatch {
                    op: "dense",
                    details: "bias width".into(),
                });
            }
            Ok(t.add_row_broadcast(y, b))
        }
        None => Ok(y),
    }
}

/// Parameters of one multi-head attention block. The q/k/v projections are
/// bias-free (a key bias would be cancelled by the softmax anyway); the
/// output projection carries the bias.
#[derive(Debug, Clone)]
pub struct AttnParams {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub wo: Var,
    pub bo: Var,
}

/// Scaled dot-product attention with `heads` heads. Keys and values beyond
/// `key_len` rows are padding: they receive zero attention weight. With
/// `key_len == 0` the output is all zeros.
pub fn multi_head_attention(
    t: &mut Tape,
    q: Var,
    k: Var,
    v: Var,
    p: &AttnParams,
    heads: usize,
    key_len: usize,
) -> Result<Var, NumError> {
    let d = t.value(q).cols();
    if d != t.value(k).cols() || d != t.value(v).cols() {
        return Err(NumError::ShapeMismatch {
            op: "multi_head_attention",
            details: "q/k/v widths differ".into(),
        });
    }
    if t.value(k).rows() != t.value(v).rows() {
        return Err(NumError::ShapeMismatch {
            op: "multi_head_attention",
            details: "k/v row counts differ".into(),
        });
    }
    if key_len > t.value(k).rows() {
        return Err(NumError::ShapeMismatch {
            op: "multi_head_attention",
            details: format!("key_len {key_len} beyond {} rows", t.value(k).rows()),
        });
    }
    if heads == 0 || d % heads != 0 {
        return Err(NumError::BadHeadCount { dim: d, heads });
    }
    let dh = d / heads;
    let qp = dense(t, q, p.wq, None)?;
    let kp = dense(t, k, p.wk, None)?;
    let vp = dense(t, v, p.wv, None)?;

    let q_rows = t.value(q).rows();
    ATTN_SCORE_EVALS.fetch_add((heads * q_rows * key_len) as u64, Ordering::Relaxed);

    let mut head_outputs = Vec::with_capacity(heads);
    for h in 0..heads {
        let (s, e) = (h * dh, (h + 1) * dh);
        let qh = t.slice_cols(qp, s, e);
        let kh = t.slice_cols(kp, s, e);
        let vh = t.slice_cols(vp, s, e);
        let scores = t.matmul_nt(qh, kh);
        let scaled = t.affine(scores, 1.0 / (dh as f64).sqrt(), 0.0);
        let probs = t.softmax_rows(scaled, key_len);
        head_outputs.push(t.matmul_nn(probs, vh));
    }
    let ctx = t.concat_cols(&head_outputs);
    dense(t, ctx, p.wo, Some(p.bo))
}

/// One convolution + max-pooling stage, both stride 1: the sequence loses
/// `conv_k + pool_k - 2` rows.
pub fn conv_pool_block(
    t: &mut Tape,
    x: Var,
    w: Var,
    b: Var,
    conv_k: usize,
    pool_k: usize,
    slope: f64,
) -> Result<Var, NumError> {
    let l = t.value(x).rows();
    if l == 0 {
        return Err(NumError::EmptySequence);
    }
    if l < conv_k + pool_k - 1 {
        return Err(NumError::ShapeMismatch {
            op: "conv_pool_block",
            details: format!("length {l} below conv {conv_k} + pool {pool_k} - 1"),
        });
    }
    let c = t.conv1d(x, w, b, conv_k);
    let a = t.leaky_relu(c, slope);
    Ok(t.max_pool1d(a, pool_k))
}

/// Mean of squared differences.
pub fn mse(t: &mut Tape, pred: Var, target: Var) -> Result<Var, NumError> {
    if t.value(pred).shape() != t.value(target).shape() {
        return Err(NumError::ShapeMismatch {
            op: "mse",
            details: format!(
                "{:?} vs {:?}",
                t.value(pred).shape(),
                t.value(target).shape()
            ),
        });
    }
    let diff = t.sub(pred, target);
    let sq = t.mul(diff, diff);
    Ok(t.mean_all(sq))
}

/// Mean-pooling matrix for memory initialization: stride `s = floor(L/M)`,
/// kernel `k = L - (M-1)*s`, block i averages rows [i*s, i*s+k). With
/// L < M the stride degenerates to 0 and every block is the global mean.
pub fn mem_init_matrix(l: usize, m: usize) -> SparseMat {
    assert!(l >= 1 && m >= 1);
    let s = l / m;
    let k = l - (m - 1) * s;
    let rows: Vec<Vec<(usize, f64)>> = (0..m)
        .map(|i| (i * s..i * s + k).map(|r| (r, 1.0 / k as f64)).collect())
        .collect();
    SparseMat::from_rows(m, l, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::optim::ParamStore;
    use crate::rng::stream;

    fn store_with(pairs: &[(&str, Tensor)]) -> ParamStore {
        let mut s = ParamStore::new();
        for (n, t) in pairs {
            s.register(n, t.clone());
        }
        s
    }

    #[test]
    fn dense_identity_passthrough() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
        let w = t.constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let b = t.constant(Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap());
        let y = dense(&mut t, x, w, Some(b)).unwrap();
        assert_eq!(t.value(y).data(), &[1.0, 2.0]);
    }

    #[test]
    fn dense_hand_example() {
        // x=[1,2], W=[[1,1],[0,1]], b=0 -> [3,2]
        let mut t = Tape::new();
        let x = t.constant(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
        let w = t.constant(Tensor::matrix(2, 2, vec![1.0, 1.0, 0.0, 1.0]).unwrap());
        let y = dense(&mut t, x, w, None).unwrap();
        assert_eq!(t.value(y).data(), &[3.0, 2.0]);
    }

    #[test]
    fn mse_values() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::matrix(1, 1, vec![1.0]).unwrap());
        let b = t.constant(Tensor::matrix(1, 1, vec![3.0]).unwrap());
        let l = mse(&mut t, a, b).unwrap();
        assert_eq!(t.value(l).item(), 4.0);
        let same = mse(&mut t, a, a).unwrap();
        assert_eq!(t.value(same).item(), 0.0);
    }

    #[test]
    fn mse_gradient_matches_closed_form() {
        let mut store = store_with(&[("p", Tensor::matrix(1, 2, vec![1.0, -2.0]).unwrap())]);
        let mut t = Tape::new();
        let p = t.param("p", &store);
        let target = t.constant(Tensor::matrix(1, 2, vec![0.5, 0.5]).unwrap());
        let l = mse(&mut t, p, target).unwrap();
        t.backward(l, &mut store).unwrap();
        let g = store.grad("p").unwrap();
        // d/dp mean((p - t)^2) = 2 (p - t) / n
        assert!((g[0] - 2.0 * 0.5 / 2.0).abs() < 1e-12);
        assert!((g[1] - 2.0 * (-2.5) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn loss_independent_of_param_leaves_zero_grad() {
        let mut store = store_with(&[
            ("used", Tensor::matrix(1, 1, vec![2.0]).unwrap()),
            ("unused", Tensor::matrix(1, 1, vec![5.0]).unwrap()),
        ]);
        let mut t = Tape::new();
        let p = t.param("used", &store);
        let l = t.mean_all(p);
        t.backward(l, &mut store).unwrap();
        assert_eq!(store.grad("unused").unwrap(), &[0.0]);
        assert_eq!(store.grad("used").unwrap(), &[1.0]);
    }

    #[test]
    fn sum_of_losses_sums_gradients() {
        let mut store = store_with(&[("p", Tensor::matrix(1, 1, vec![1.0]).unwrap())]);
        let mut t = Tape::new();
        let p = t.param("p", &store);
        let a = t.affine(p, 2.0, 0.0);
        let b = t.affine(p, 3.0, 0.0);
        let s = t.add(a, b);
        let l = t.mean_all(s);
        t.backward(l, &mut store).unwrap();
        assert_eq!(store.grad("p").unwrap(), &[5.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_mask_zeroes() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::matrix(2, 3, vec![0.3, -1.0, 9.0, 2.0, 2.0, 2.0]).unwrap());
        let y = t.softmax_rows(x, 2);
        let v = t.value(y).data().to_vec();
        assert!((v[0] + v[1] - 1.0).abs() < 1e-12);
        assert_eq!(v[2], 0.0);
        let z = t.softmax_rows(x, 0);
        assert!(t.value(z).data().iter().all(|&e| e == 0.0));
    }

    #[test]
    fn attention_with_single_key_returns_projected_value() {
        let d = 4;
        let mut rng = stream(1, "attn", 0);
        let mut store = ParamStore::new();
        for n in ["wq", "wk", "wv", "wo"] {
            store.register(n, Tensor::randn(&mut rng, vec![d, d], 0.4));
        }
        store.register("bo", Tensor::zeros(vec![1, d]));
        let mut t = Tape::new();
        let p = AttnParams {
            wq: t.param("wq", &store),
            wk: t.param("wk", &store),
            wv: t.param("wv", &store),
            wo: t.param("wo", &store),
            bo: t.param("bo", &store),
        };
        let q = t.constant(Tensor::randn(&mut rng, vec![3, d], 1.0));
        let kv = t.constant(Tensor::randn(&mut rng, vec![1, d], 1.0));
        let out = multi_head_attention(&mut t, q, kv, kv, &p, 2, 1).unwrap();
        // softmax over a single key gives weight 1: output = Wo (Wv kv) + bo
        let vp = dense(&mut t, kv, p.wv, None).unwrap();
        let want = dense(&mut t, vp, p.wo, Some(p.bo)).unwrap();
        let (got, want) = (t.value(out).data(), t.value(want).data());
        for i in 0..d {
            for r in 0..3 {
                assert!((got[r * d + i] - want[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fully_masked_attention_outputs_zero_context() {
        let d = 4;
        let mut rng = stream(2, "attn", 0);
        let mut store = ParamStore::new();
        for n in ["wq", "wk", "wv", "wo"] {
            store.register(n, Tensor::randn(&mut rng, vec![d, d], 0.4));
        }
        store.register("bo", Tensor::zeros(vec![1, d]));
        let mut t = Tape::new();
        let p = AttnParams {
            wq: t.param("wq", &store),
            wk: t.param("wk", &store),
            wv: t.param("wv", &store),
            wo: t.param("wo", &store),
            bo: t.param("bo", &store),
        };
        let q = t.constant(Tensor::randn(&mut rng, vec![2, d], 1.0));
        let kv = t.constant(Tensor::randn(&mut rng, vec![3, d], 1.0));
        let out = multi_head_attention(&mut t, q, kv, kv, &p, 2, 0).unwrap();
        // zero context, so the output reduces to the output bias (zero here)
        assert!(t.value(out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_pool_lengths() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::matrix(5, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap());
        let w = t.constant(Tensor::new(vec![2, 1, 1], vec![0.5, 0.5]).unwrap());
        let b = t.constant(Tensor::zeros(vec![1, 1]));
        let y = conv_pool_block(&mut t, x, w, b, 2, 2, 0.01).unwrap();
        assert_eq!(t.value(y).rows(), 3);
        // conv averages neighbours -> [1.5, 2.5, 3.5, 4.5]; maxpool k=2 keeps
        // the right neighbour
        assert_eq!(t.value(y).data(), &[2.5, 3.5, 4.5]);
    }

    #[test]
    fn constant_conv_kernel_keeps_constant_input() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::matrix(6, 1, vec![3.0; 6]).unwrap());
        let w = t.constant(Tensor::new(vec![3, 1, 1], vec![0.25, 0.5, 0.25]).unwrap());
        let b = t.constant(Tensor::zeros(vec![1, 1]));
        let y = conv_pool_block(&mut t, x, w, b, 3, 2, 0.01).unwrap();
        assert!(t.value(y).data().iter().all(|&v| (v - 3.0).abs() < 1e-12));
    }

    #[test]
    fn mem_init_windows_match_formula() {
        let m = mem_init_matrix(10, 4);
        // s = 2, k = 4: windows [0..4), [2..6), [4..8), [6..10)
        let starts: Vec<usize> = (0..4).map(|i| m.col_idx[m.row_ptr[i]] as usize).collect();
        assert_eq!(starts, vec![0, 2, 4, 6]);
        assert_eq!(m.row_ptr[1] - m.row_ptr[0], 4);

        let id = mem_init_matrix(4, 4);
        for i in 0..4 {
            assert_eq!(id.row_ptr[i + 1] - id.row_ptr[i], 1);
            assert_eq!(id.col_idx[i] as usize, i);
        }

        let degenerate = mem_init_matrix(3, 4);
        for i in 0..4 {
            assert_eq!(degenerate.row_ptr[i + 1] - degenerate.row_ptr[i], 3);
        }
    }

    #[test]
    fn dropout_zero_rate_is_identity_and_scales_training() {
        let mut rng = stream(3, "drop", 0);
        let mut t = Tape::new();
        let x = t.constant(Tensor::matrix(1, 4, vec![1.0; 4]).unwrap());
        let same = t.dropout(x, 0.0, &mut rng);
        assert_eq!(same, x);
        let dropped = t.dropout(x, 0.5, &mut rng);
        for &v in t.value(dropped).data() {
            assert!(v == 0.0 || (v - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_score_counter_tracks_evals() {
        reset_attention_score_evals();
        let d = 4;
        let mut rng = stream(4, "attn", 0);
        let mut store = ParamStore::new();
        for n in ["wq", "wk", "wv", "wo"] {
            store.register(n, Tensor::randn(&mut rng, vec![d, d], 0.4));
        }
        store.register("bo", Tensor::zeros(vec![1, d]));
        let mut t = Tape::new();
        let p = AttnParams {
            wq: t.param("wq", &store),
            wk: t.param("wk", &store),
            wv: t.param("wv", &store),
            wo: t.param("wo", &store),
            bo: t.param("bo", &store),
        };
        let q = t.constant(Tensor::randn(&mut rng, vec![3, d], 1.0));
        let kv = t.constant(Tensor::randn(&mut rng, vec![5, d], 1.0));
        multi_head_attention(&mut t, q, kv, kv, &p, 2, 5).unwrap();
        assert_eq!(attention_score_evals(), 2 * 3 * 5);
    }
}
