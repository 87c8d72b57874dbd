//! Reverse-mode automatic differentiation over a define-by-run tape.
//!
//! A [`Graph`] records primitive operations as they execute; [`Graph::backward`]
//! replays them in reverse to accumulate adjoints. The op set is deliberately
//! small: dense layers (`linear`), leaky-ReLU, row-wise softmax /
//! log-softmax, elementwise arithmetic, reductions and the broadcast /
//! concatenation plumbing the compression losses need. Everything is 64-bit.
//!
//! Tapes are cheap and rebuilt per training step. A tape is single-threaded;
//! the row-level kernels inside `linear` fan out through [`crate::parallel`]
//! but write disjoint rows with order-fixed inner loops, so results do not
//! depend on the thread count.
//!
//! Any op producing a non-finite value aborts with [`Error::NonFinite`]
//! instead of letting a NaN propagate into the optimizer.

use crate::parallel::for_rows;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ValueId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf { needs_grad: bool },
    /// `out = x . w^T + b`, with `x: (m,k)`, `w: (n,k)`, `b: (1,n)`.
    Linear { x: ValueId, w: ValueId, b: ValueId },
    LeakyRelu { x: ValueId, slope: f64 },
    LogSoftmaxRows { x: ValueId },
    SoftmaxRows { x: ValueId },
    Add { a: ValueId, b: ValueId },
    Sub { a: ValueId, b: ValueId },
    Mul { a: ValueId, b: ValueId },
    Scale { x: ValueId, c: f64 },
    Square { x: ValueId },
    Mean { x: ValueId },
    SumRows { x: ValueId },
    ConcatCols { parts: Vec<ValueId> },
    BroadcastRow { x: ValueId },
    BroadcastCol { x: ValueId },
    Reshape { x: ValueId },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf { .. } => "leaf",
            Op::Linear { .. } => "linear",
            Op::LeakyRelu { .. } => "leaky_relu",
            Op::LogSoftmaxRows { .. } => "log_softmax",
            Op::SoftmaxRows { .. } => "softmax",
            Op::Add { .. } => "add",
            Op::Sub { .. } => "sub",
            Op::Mul { .. } => "mul",
            Op::Scale { .. } => "scale",
            Op::Square { .. } => "square",
            Op::Mean { .. } => "mean",
            Op::SumRows { .. } => "sum_rows",
            Op::ConcatCols { .. } => "concat_cols",
            Op::BroadcastRow { .. } => "broadcast_row",
            Op::BroadcastCol { .. } => "broadcast_col",
            Op::Reshape { .. } => "reshape",
        }
    }
}

struct Node {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    op: Op,
    /// Whether any differentiable leaf feeds this node (computed at
    /// creation); the reverse pass skips nodes without it.
    needs_grad: bool,
}

/// Define-by-run tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Adjoints per tape node, produced by [`Graph::backward`]. Nodes the output
/// does not depend on have gradient zero.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient slice for `id`, if any flowed to it.
    pub fn get(&self, id: ValueId) -> Option<&[f64]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    /// Gradient for `id` as an owned vector, zeros when nothing flowed.
    pub fn get_or_zeros(&self, id: ValueId, len: usize) -> Vec<f64> {
        match self.get(id) {
            Some(g) => g.to_vec(),
            None => vec![0.0; len],
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// (rows, cols) of a node; rank-1 leaves are single rows.
    pub fn shape(&self, id: ValueId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, id: ValueId) -> &[f64] {
        &self.nodes[id.0].values
    }

    /// Value of a 1x1 node.
    pub fn scalar_value(&self, id: ValueId) -> Result<f64> {
        let n = &self.nodes[id.0];
        if n.values.len() != 1 {
            return Err(Error::shape(
                "scalar_value",
                "1 element",
                format!("{} elements", n.values.len()),
            ));
        }
        Ok(n.values[0])
    }

    fn push(&mut self, rows: usize, cols: usize, values: Vec<f64>, op: Op) -> Result<ValueId> {
        debug_assert_eq!(rows * cols, values.len());
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("graph op '{}' (node {})", op.name(), self.nodes.len()),
            });
        }
        let needs_grad = match &op {
            Op::Leaf { needs_grad } => *needs_grad,
            Op::Linear { x, w, b } => {
                self.wants_grad(*x) || self.wants_grad(*w) || self.wants_grad(*b)
            }
            Op::LeakyRelu { x, .. }
            | Op::LogSoftmaxRows { x }
            | Op::SoftmaxRows { x }
            | Op::Scale { x, .. }
            | Op::Square { x }
            | Op::Mean { x }
            | Op::SumRows { x }
            | Op::BroadcastRow { x }
            | Op::BroadcastCol { x }
            | Op::Reshape { x } => self.wants_grad(*x),
            Op::Add { a, b } | Op::Sub { a, b } | Op::Mul { a, b } => {
                self.wants_grad(*a) || self.wants_grad(*b)
            }
            Op::ConcatCols { parts } => parts.iter().any(|&p| self.wants_grad(p)),
        };
        self.nodes.push(Node {
            rows,
            cols,
            values,
            op,
            needs_grad,
        });
        Ok(ValueId(self.nodes.len() - 1))
    }

    /// Register a tensor as a differentiable leaf (a parameter).
    pub fn leaf(&mut self, t: &Tensor) -> ValueId {
        let (r, c) = t.rows_cols();
        // Tensors are finite by construction.
        self.nodes.push(Node {
            rows: r,
            cols: c,
            values: t.values().to_vec(),
            op: Op::Leaf { needs_grad: true },
            needs_grad: true,
        });
        ValueId(self.nodes.len() - 1)
    }

    /// Register raw row-major data as a differentiable leaf.
    pub fn leaf_raw(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> Result<ValueId> {
        if rows * cols != values.len() {
            return Err(Error::shape(
                "leaf_raw",
                format!("{rows}x{cols}"),
                format!("{} values", values.len()),
            ));
        }
        self.push(rows, cols, values, Op::Leaf { needs_grad: true })
    }

    /// Register a tensor as a constant: the reverse pass will not compute or
    /// store an adjoint for it (inputs, noise, one-hot blocks).
    pub fn constant(&mut self, t: &Tensor) -> ValueId {
        let (r, c) = t.rows_cols();
        self.nodes.push(Node {
            rows: r,
            cols: c,
            values: t.values().to_vec(),
            op: Op::Leaf { needs_grad: false },
            needs_grad: false,
        });
        ValueId(self.nodes.len() - 1)
    }

    /// Register raw row-major data as a constant.
    pub fn constant_raw(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> Result<ValueId> {
        if rows * cols != values.len() {
            return Err(Error::shape(
                "constant_raw",
                format!("{rows}x{cols}"),
                format!("{} values", values.len()),
            ));
        }
        self.push(rows, cols, values, Op::Leaf { needs_grad: false })
    }

    /// Whether the reverse pass should propagate into this node.
    fn wants_grad(&self, id: ValueId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Dense layer: `x . w^T + b` with `x: (m,k)`, `w: (n,k)`, `b: (n)`.
    pub fn linear(&mut self, x: ValueId, w: ValueId, b: ValueId) -> Result<ValueId> {
        let (m, k) = self.shape(x);
        let (n, kw) = self.shape(w);
        let (br, bc) = self.shape(b);
        if kw != k {
            return Err(Error::shape(
                "linear weights",
                format!("(_, {k})"),
                format!("({n}, {kw})"),
            ));
        }
        if br != 1 || bc != n {
            return Err(Error::shape("linear bias", format!("(1, {n})"), format!("({br}, {bc})")));
        }
        let xv = &self.nodes[x.0].values;
        let wv = &self.nodes[w.0].values;
        let bv = &self.nodes[b.0].values;
        let mut out = vec![0.0; m * n];
        for_rows(&mut out, n, |i, row| {
            let xr = &xv[i * k..(i + 1) * k];
            for (j, o) in row.iter_mut().enumerate() {
                let wr = &wv[j * k..(j + 1) * k];
                *o = crate::parallel::dot(xr, wr) + bv[j];
            }
        });
        self.push(m, n, out, Op::Linear { x, w, b })
    }

    /// Elementwise `max(x, slope * x)`.
    pub fn leaky_relu(&mut self, x: ValueId, slope: f64) -> Result<ValueId> {
        if !(0.0 < slope && slope < 1.0) {
            return Err(Error::invalid(format!("leaky_relu slope {slope} not in (0, 1)")));
        }
        let (r, c) = self.shape(x);
        let out: Vec<f64> = self.nodes[x.0]
            .values
            .iter()
            .map(|&v| if v > 0.0 { v } else { slope * v })
            .collect();
        self.push(r, c, out, Op::LeakyRelu { x, slope })
    }

    /// Row-wise log-softmax, stabilized by max subtraction.
    pub fn log_softmax_rows(&mut self, x: ValueId) -> Result<ValueId> {
        let (r, c) = self.shape(x);
        if c == 0 {
            return Err(Error::invalid("log_softmax of empty row"));
        }
        let xv = &self.nodes[x.0].values;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &xv[i * c..(i + 1) * c];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            // Work on the shifted row throughout so the result is exactly
            // invariant to adding a constant to the logits.
            let lse = row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            for j in 0..c {
                out[i * c + j] = (row[j] - m) - lse;
            }
        }
        self.push(r, c, out, Op::LogSoftmaxRows { x })
    }

    /// Row-wise softmax.
    pub fn softmax_rows(&mut self, x: ValueId) -> Result<ValueId> {
        let (r, c) = self.shape(x);
        if c == 0 {
            return Err(Error::invalid("softmax of empty row"));
        }
        let xv = &self.nodes[x.0].values;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &xv[i * c..(i + 1) * c];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..c {
                let e = (row[j] - m).exp();
                out[i * c + j] = e;
                sum += e;
            }
            for j in 0..c {
                out[i * c + j] /= sum;
            }
        }
        self.push(r, c, out, Op::SoftmaxRows { x })
    }

    fn same_shape(&self, a: ValueId, b: ValueId, ctx: &str) -> Result<(usize, usize)> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(Error::shape(ctx, format!("{sa:?}"), format!("{sb:?}")));
        }
        Ok(sa)
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (r, c) = self.same_shape(a, b, "add")?;
        let out: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x + y)
            .collect();
        self.push(r, c, out, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (r, c) = self.same_shape(a, b, "sub")?;
        let out: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x - y)
            .collect();
        self.push(r, c, out, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (r, c) = self.same_shape(a, b, "mul")?;
        let out: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x * y)
            .collect();
        self.push(r, c, out, Op::Mul { a, b })
    }

    pub fn scale(&mut self, x: ValueId, c: f64) -> Result<ValueId> {
        let (r, cc) = self.shape(x);
        let out: Vec<f64> = self.nodes[x.0].values.iter().map(|v| v * c).collect();
        self.push(r, cc, out, Op::Scale { x, c })
    }

    pub fn square(&mut self, x: ValueId) -> Result<ValueId> {
        let (r, c) = self.shape(x);
        let out: Vec<f64> = self.nodes[x.0].values.iter().map(|v| v * v).collect();
        self.push(r, c, out, Op::Square { x })
    }

    /// Mean of all entries, as a 1x1 node.
    pub fn mean(&mut self, x: ValueId) -> Result<ValueId> {
        let v = &self.nodes[x.0].values;
        if v.is_empty() {
            return Err(Error::invalid("mean of empty tensor"));
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        self.push(1, 1, vec![m], Op::Mean { x })
    }

    /// Row sums: `(m,n) -> (m,1)`.
    pub fn sum_rows(&mut self, x: ValueId) -> Result<ValueId> {
        let (r, c) = self.shape(x);
        let xv = &self.nodes[x.0].values;
        let out: Vec<f64> = (0..r).map(|i| xv[i * c..(i + 1) * c].iter().sum()).collect();
        self.push(r, 1, out, Op::SumRows { x })
    }

    /// Column-wise concatenation of same-height nodes.
    pub fn concat_cols(&mut self, parts: &[ValueId]) -> Result<ValueId> {
        if parts.is_empty() {
            return Err(Error::invalid("concat_cols of nothing"));
        }
        let (m, _) = self.shape(parts[0]);
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let (r, c) = self.shape(p);
                if r != m {
                    return Err(Error::shape("concat_cols", format!("{m} rows"), format!("{r} rows")));
                }
                Ok(c)
            })
            .collect::<Result<_>>()?;
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; m * total];
        for i in 0..m {
            let mut off = 0;
            for (&p, &w) in parts.iter().zip(&widths) {
                let pv = &self.nodes[p.0].values;
                out[i * total + off..i * total + off + w].copy_from_slice(&pv[i * w..(i + 1) * w]);
                off += w;
            }
        }
        self.push(m, total, out, Op::ConcatCols { parts: parts.to_vec() })
    }

    /// Repeat a `(1,n)` row `m` times.
    pub fn broadcast_row(&mut self, x: ValueId, m: usize) -> Result<ValueId> {
        let (r, c) = self.shape(x);
        if r != 1 {
            return Err(Error::shape("broadcast_row", "(1, n)", format!("({r}, {c})")));
        }
        let xv = &self.nodes[x.0].values;
        let mut out = Vec::with_capacity(m * c);
        for _ in 0..m {
            out.extend_from_slice(xv);
        }
        self.push(m, c, out, Op::BroadcastRow { x })
    }

    /// Repeat a `(m,1)` column across `cols` columns.
    pub fn broadcast_col(&mut self, x: ValueId, cols: usize) -> Result<ValueId> {
        let (r, c) = self.shape(x);
        if c != 1 {
            return Err(Error::shape("broadcast_col", "(m, 1)", format!("({r}, {c})")));
        }
        let xv = &self.nodes[x.0].values;
        let mut out = vec![0.0; r * cols];
        for i in 0..r {
            out[i * cols..(i + 1) * cols].fill(xv[i]);
        }
        self.push(r, cols, out, Op::BroadcastCol { x })
    }

    /// Reinterpret the buffer with a new shape of equal length.
    pub fn reshape(&mut self, x: ValueId, rows: usize, cols: usize) -> Result<ValueId> {
        let (r, c) = self.shape(x);
        if r * c != rows * cols {
            return Err(Error::shape("reshape", format!("{} elements", r * c), format!("{rows}x{cols}")));
        }
        let out = self.nodes[x.0].values.clone();
        self.push(rows, cols, out, Op::Reshape { x })
    }

    /// Smallest `|input|` feeding any leaky-ReLU on the tape (infinity when
    /// none). Finite-difference checks are only valid when the perturbation
    /// cannot cross the activation kink, i.e. when this margin comfortably
    /// exceeds the step size.
    pub fn activation_kink_margin(&self) -> f64 {
        let mut margin = f64::INFINITY;
        for node in &self.nodes {
            if let Op::LeakyRelu { x, .. } = &node.op {
                for &v in &self.nodes[x.0].values {
                    margin = margin.min(v.abs());
                }
            }
        }
        margin
    }

    /// Reverse pass from a scalar output. Returns adjoints for every node the
    /// output depends on; other nodes report zero.
    pub fn backward(&self, target: ValueId) -> Result<Gradients> {
        let tn = &self.nodes[target.0];
        if tn.values.len() != 1 {
            return Err(Error::invalid(format!(
                "backward target must be scalar, got {}x{}",
                tn.rows, tn.cols
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        let mut out: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        adj[target.0] = Some(vec![1.0]);

        for idx in (0..=target.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            self.backward_op(idx, &g, &mut adj);
            out[idx] = Some(g);
        }
        Ok(Gradients { grads: out })
    }

    fn backward_op(&self, idx: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        fn acc<'a>(adj: &'a mut [Option<Vec<f64>>], id: ValueId, len: usize) -> &'a mut [f64] {
            adj[id.0].get_or_insert_with(|| vec![0.0; len])
        }
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf { .. } => {}
            Op::Linear { x, w, b } => {
                let (m, k) = self.shape(*x);
                let (n, _) = self.shape(*w);
                let xv = &self.nodes[x.0].values;
                let wv = &self.nodes[w.0].values;
                if self.wants_grad(*x) {
                    let dx = acc(adj, *x, m * k);
                    for_rows(dx, k, |i, row| {
                        for j in 0..n {
                            let c = g[i * n + j];
                            if c != 0.0 {
                                let wr = &wv[j * k..(j + 1) * k];
                                for l in 0..k {
                                    row[l] += c * wr[l];
                                }
                            }
                        }
                    });
                }
                if self.wants_grad(*w) {
                    let dw = acc(adj, *w, n * k);
                    for_rows(dw, k, |j, row| {
                        for i in 0..m {
                            let c = g[i * n + j];
                            if c != 0.0 {
                                let xr = &xv[i * k..(i + 1) * k];
                                for l in 0..k {
                                    row[l] += c * xr[l];
                                }
                            }
                        }
                    });
                }
                if self.wants_grad(*b) {
                    let db = acc(adj, *b, n);
                    for j in 0..n {
                        let mut s = 0.0;
                        for i in 0..m {
                            s += g[i * n + j];
                        }
                        db[j] += s;
                    }
                }
            }
            Op::LeakyRelu { x, slope } => {
                if self.wants_grad(*x) {
                    let xv = &self.nodes[x.0].values;
                    let dx = acc(adj, *x, xv.len());
                    for (i, d) in dx.iter_mut().enumerate() {
                        *d += g[i] * if xv[i] > 0.0 { 1.0 } else { *slope };
                    }
                }
            }
            Op::LogSoftmaxRows { x } => {
                if self.wants_grad(*x) {
                    let (r, c) = (node.rows, node.cols);
                    let logp = &node.values;
                    let dx = acc(adj, *x, r * c);
                    for i in 0..r {
                        let gr = &g[i * c..(i + 1) * c];
                        let sum_g: f64 = gr.iter().sum();
                        for j in 0..c {
                            dx[i * c + j] += gr[j] - logp[i * c + j].exp() * sum_g;
                        }
                    }
                }
            }
            Op::SoftmaxRows { x } => {
                if self.wants_grad(*x) {
                    let (r, c) = (node.rows, node.cols);
                    let p = &node.values;
                    let dx = acc(adj, *x, r * c);
                    for i in 0..r {
                        let gr = &g[i * c..(i + 1) * c];
                        let pr = &p[i * c..(i + 1) * c];
                        let dot: f64 = gr.iter().zip(pr).map(|(a, b)| a * b).sum();
                        for j in 0..c {
                            dx[i * c + j] += pr[j] * (gr[j] - dot);
                        }
                    }
                }
            }
            Op::Add { a, b } => {
                let len = g.len();
                if self.wants_grad(*a) {
                    let da = acc(adj, *a, len);
                    for (d, gi) in da.iter_mut().zip(g) {
                        *d += gi;
                    }
                }
                if self.wants_grad(*b) {
                    let db = acc(adj, *b, len);
                    for (d, gi) in db.iter_mut().zip(g) {
                        *d += gi;
                    }
                }
            }
            Op::Sub { a, b } => {
                let len = g.len();
                if self.wants_grad(*a) {
                    let da = acc(adj, *a, len);
                    for (d, gi) in da.iter_mut().zip(g) {
                        *d += gi;
                    }
                }
                if self.wants_grad(*b) {
                    let db = acc(adj, *b, len);
                    for (d, gi) in db.iter_mut().zip(g) {
                        *d -= gi;
                    }
                }
            }
            Op::Mul { a, b } => {
                if self.wants_grad(*a) {
                    let bv = &self.nodes[b.0].values;
                    let da = acc(adj, *a, g.len());
                    for i in 0..g.len() {
                        da[i] += g[i] * bv[i];
                    }
                }
                if self.wants_grad(*b) {
                    let av = &self.nodes[a.0].values;
                    let db = acc(adj, *b, g.len());
                    for i in 0..g.len() {
                        db[i] += g[i] * av[i];
                    }
                }
            }
            Op::Scale { x, c } => {
                if self.wants_grad(*x) {
                    let dx = acc(adj, *x, g.len());
                    for (d, gi) in dx.iter_mut().zip(g) {
                        *d += c * gi;
                    }
                }
            }
            Op::Square { x } => {
                if self.wants_grad(*x) {
                    let xv = &self.nodes[x.0].values;
                    let dx = acc(adj, *x, g.len());
                    for i in 0..g.len() {
                        dx[i] += 2.0 * xv[i] * g[i];
                    }
                }
            }
            Op::Mean { x } => {
                if self.wants_grad(*x) {
                    let len = self.nodes[x.0].values.len();
                    let c = g[0] / len as f64;
                    let dx = acc(adj, *x, len);
                    for d in dx.iter_mut() {
                        *d += c;
                    }
                }
            }
            Op::SumRows { x } => {
                if self.wants_grad(*x) {
                    let (r, c) = self.shape(*x);
                    let dx = acc(adj, *x, r * c);
                    for i in 0..r {
                        for j in 0..c {
                            dx[i * c + j] += g[i];
                        }
                    }
                }
            }
            Op::ConcatCols { parts } => {
                let m = node.rows;
                let total = node.cols;
                let mut off = 0;
                for &p in parts {
                    let (_, w) = self.shape(p);
                    if self.wants_grad(p) {
                        let dp = acc(adj, p, m * w);
                        for i in 0..m {
                            for j in 0..w {
                                dp[i * w + j] += g[i * total + off + j];
                            }
                        }
                    }
                    off += w;
                }
            }
            Op::BroadcastRow { x } => {
                if self.wants_grad(*x) {
                    let (m, c) = (node.rows, node.cols);
                    let dx = acc(adj, *x, c);
                    for i in 0..m {
                        for j in 0..c {
                            dx[j] += g[i * c + j];
                        }
                    }
                }
            }
            Op::BroadcastCol { x } => {
                if self.wants_grad(*x) {
                    let (r, c) = (node.rows, node.cols);
                    let dx = acc(adj, *x, r);
                    for i in 0..r {
                        let mut s = 0.0;
                        for j in 0..c {
                            s += g[i * c + j];
                        }
                        dx[i] += s;
                    }
                }
            }
            Op::Reshape { x } => {
                if self.wants_grad(*x) {
                    let dx = acc(adj, *x, g.len());
                    for (d, gi) in dx.iter_mut().zip(g) {
                        *d += gi;
                    }
                }
            }
        }
    }
}

/// Compare the analytic gradient of `loss_fn` against central finite
/// differences, coordinate by coordinate.
///
/// `loss_fn` receives a fresh graph plus the leaf ids of `params` (in order)
/// and must return a scalar node. Any noise must be frozen inside the
/// closure; the check evaluates the base point twice and rejects a loss that
/// is not bitwise reproducible. Returns the worst relative error with
/// denominator `max(|analytic|, |numeric|, 1e-12)`.
pub fn grad_check<F>(loss_fn: F, params: &[Tensor], epsilon: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[ValueId]) -> Result<ValueId>,
{
    if !(epsilon > 0.0 && epsilon <= 1e-3) {
        return Err(Error::invalid(format!("grad_check epsilon {epsilon} not in (0, 1e-3]")));
    }

    let eval = |ps: &[Tensor]| -> Result<(Graph, Vec<ValueId>, ValueId, f64)> {
        let mut g = Graph::new();
        let ids: Vec<ValueId> = ps.iter().map(|p| g.leaf(p)).collect();
        let out = loss_fn(&mut g, &ids)?;
        let v = g.scalar_value(out)?;
        Ok((g, ids, out, v))
    };

    let (graph, ids, out, v0) = eval(params)?;
    let (_, _, _, v1) = eval(params)?;
    if v0.to_bits() != v1.to_bits() {
        return Err(Error::invalid(
            "loss is not deterministic under frozen noise; cannot finite-difference",
        ));
    }
    let grads = graph.backward(out)?;

    let mut worst = 0.0f64;
    let mut work: Vec<Tensor> = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        let analytic = grads.get_or_zeros(ids[pi], p.len());
        for ci in 0..p.len() {
            let orig = p.values()[ci];
            work[pi].values_mut()[ci] = orig + epsilon;
            let (_, _, _, fp) = eval(&work)?;
            work[pi].values_mut()[ci] = orig - epsilon;
            let (_, _, _, fm) = eval(&work)?;
            work[pi].values_mut()[ci] = orig;
            let numeric = (fp - fm) / (2.0 * epsilon);
            let denom = analytic[ci].abs().max(numeric.abs()).max(1e-12);
            let rel = (analytic[ci] - numeric).abs() / denom;
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}
