use rand::Rng;

use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Concat { parts: Vec<Var>, axis: usize },
    Gather { src: Var, idx: Vec<u32> },
    SegmentSum { src: Var, ids: Vec<u32> },
    Relu(Var),
    Tanh(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Tensor<T>, rstd: Vec<T> },
    Dropout { x: Var, mask: Vec<T> },
    SoftmaxCe { logits: Var, labels: Vec<usize>, probs: Tensor<T> },
    Mae { pred: Var, target: Tensor<T> },
    Cosine { a: Var, b: Var, norm_a: Vec<T>, norm_b: Vec<T>, floor: T },
    Sum(Var),
    Mean(Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Append-only record of primitive applications. Backward visits nodes in
/// exact reverse append order.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_str<T: Real>(t: &Tensor<T>) -> String {
    format!("[{}x{}]", t.rows(), t.cols())
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Trainable leaf: gradients are reported for it.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-trainable input.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(Error::shape("matmul", format!("{} x {}", shape_str(av), shape_str(bv))));
        }
        let out = Tensor::matmul_t(av, false, bv, false);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape(op, format!("{} vs {}", shape_str(av), shape_str(bv))));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (av, bv) = (self.value(a), self.value(b));
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(av.rows(), av.cols(), data).expect("shape checked")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_with(a, b, |x, y| x + y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_with(a, b, |x, y| x - y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Sub(a, b), ng))
    }

    pub fn multiply(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("multiply", a, b)?;
        let out = self.zip_with(a, b, |x, y| x * y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    /// Adds a `1 x k` row to every row of an `n x k` matrix.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (xv, rv) = (self.value(x), self.value(row));
        if rv.rows() != 1 || rv.cols() != xv.cols() {
            return Err(Error::shape("add_row", format!("{} + {}", shape_str(xv), shape_str(rv))));
        }
        let mut out = xv.clone();
        let r = rv.data().to_vec();
        for i in 0..out.rows() {
            for (o, &b) in out.row_mut(i).iter_mut().zip(&r) {
                *o += b;
            }
        }
        let ng = self.ng(x) || self.ng(row);
        Ok(self.push(out, Op::AddRow(x, row), ng))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let out = self.value(a).map(|x| x * s);
        let ng = self.ng(a);
        self.push(out, Op::Scale(a, s), ng)
    }

    /// Concatenation along `axis` 0 (stack rows) or 1 (join columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat", "no inputs"));
        }
        let out = match axis {
            0 => {
                let cols = self.value(parts[0]).cols();
                let mut data = Vec::new();
                let mut rows = 0;
                for &p in parts {
                    let v = self.value(p);
                    if v.cols() != cols {
                        return Err(Error::shape("concat", format!("axis 0: {} has {} cols, expected {cols}", shape_str(v), v.cols())));
                    }
                    rows += v.rows();
                    data.extend_from_slice(v.data());
                }
                Tensor::from_vec(rows, cols, data)?
            }
            1 => {
                let rows = self.value(parts[0]).rows();
                let mut cols = 0;
                for &p in parts {
                    let v = self.value(p);
                    if v.rows() != rows {
                        return Err(Error::shape("concat", format!("axis 1: {} has {} rows, expected {rows}", shape_str(v), v.rows())));
                    }
                    cols += v.cols();
                }
                let mut out = Tensor::zeros(rows, cols);
                let mut off = 0;
                for &p in parts {
                    let v = self.value(p);
                    let w = v.cols();
                    for r in 0..rows {
                        out.row_mut(r)[off..off + w].copy_from_slice(v.row(r));
                    }
                    off += w;
                }
                out
            }
            _ => return Err(Error::shape("concat", format!("axis {axis} out of range for rank-2 tensors"))),
        };
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(out, Op::Concat { parts: parts.to_vec(), axis }, ng))
    }

    /// Selects rows `idx` of `src` (with repetition).
    pub fn gather(&mut self, src: Var, idx: &[u32]) -> Result<Var> {
        let sv = self.value(src);
        let cols = sv.cols();
        let mut out = Tensor::zeros(idx.len(), cols);
        for (r, &i) in idx.iter().enumerate() {
            let i = i as usize;
            if i >= sv.rows() {
                return Err(Error::shape("gather", format!("row index {i} out of range for {}", shape_str(sv))));
            }
            out.row_mut(r).copy_from_slice(sv.row(i));
        }
        let ng = self.ng(src);
        Ok(self.push(out, Op::Gather { src, idx: idx.to_vec() }, ng))
    }

    /// Sums rows of `src` into `num_segments` output rows by segment id.
    /// Accumulation runs in ascending input-row order.
    pub fn segment_sum(&mut self, src: Var, ids: &[u32], num_segments: usize) -> Result<Var> {
        let sv = self.value(src);
        if ids.len() != sv.rows() {
            return Err(Error::shape("segment_sum", format!("{} ids for {}", ids.len(), shape_str(sv))));
        }
        let mut out = Tensor::zeros(num_segments, sv.cols());
        for (r, &s) in ids.iter().enumerate() {
            let s = s as usize;
            if s >= num_segments {
                return Err(Error::shape("segment_sum", format!("segment id {s} >= {num_segments}")));
            }
            for (o, &x) in out.row_mut(s).iter_mut().zip(sv.row(r)) {
                *o += x;
            }
        }
        let ng = self.ng(src);
        Ok(self.push(out, Op::SegmentSum { src, ids: ids.to_vec() }, ng))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        let ng = self.ng(a);
        self.push(out, Op::Relu(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.tanh());
        let ng = self.ng(a);
        self.push(out, Op::Tanh(a), ng)
    }

    /// Row-wise normalisation to zero mean and unit variance followed by a
    /// learnable `1 x k` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: T) -> Result<Var> {
        let xv = self.value(x);
        let k = xv.cols();
        for (name, p) in [("gain", gain), ("bias", bias)] {
            let pv = self.value(p);
            if pv.shape() != (1, k) {
                return Err(Error::shape("layer_norm", format!("{name} {} for input {}", shape_str(pv), shape_str(xv))));
            }
        }
        let n = xv.rows();
        let mut xhat = Tensor::zeros(n, k);
        let mut rstd = Vec::with_capacity(n);
        let kf = T::lit(k as f64);
        for r in 0..n {
            let row = xv.row(r);
            let mean = row.iter().copied().sum::<T>() / kf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / kf;
            let rs = T::one() / (var + eps).sqrt();
            for (h, &v) in xhat.row_mut(r).iter_mut().zip(row) {
                *h = (v - mean) * rs;
            }
            rstd.push(rs);
        }
        let g = self.value(gain).data().to_vec();
        let b = self.value(bias).data().to_vec();
        let mut out = xhat.clone();
        for r in 0..n {
            for ((o, &gi), &bi) in out.row_mut(r).iter_mut().zip(&g).zip(&b) {
                *o = *o * gi + bi;
            }
        }
        let ng = self.ng(x) || self.ng(gain) || self.ng(bias);
        Ok(self.push(out, Op::LayerNorm { x, gain, bias, xhat, rstd }, ng))
    }

    /// Inverted dropout: survivors are scaled by `1 / (1 - p)`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::input(format!("dropout probability {p} outside [0, 1)")));
        }
        if p == 0.0 {
            return Ok(x);
        }
        let keep = T::lit(1.0 / (1.0 - p));
        let xv = self.value(x);
        let mask: Vec<T> = (0..xv.len())
            .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
            .collect();
        let data = xv.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let out = Tensor::from_vec(xv.rows(), xv.cols(), data)?;
        let ng = self.ng(x);
        Ok(self.push(out, Op::Dropout { x, mask }, ng))
    }

    /// Mean over rows of the softmax cross-entropy against integer labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        if labels.len() != lv.rows() || lv.rows() == 0 {
            return Err(Error::shape("softmax_cross_entropy", format!("{} labels for logits {}", labels.len(), shape_str(lv))));
        }
        let c = lv.cols();
        let mut probs = Tensor::zeros(lv.rows(), c);
        let mut total = T::zero();
        for (r, &y) in labels.iter().enumerate() {
            if y >= c {
                return Err(Error::shape("softmax_cross_entropy", format!("label {y} >= {c} classes")));
            }
            let row = lv.row(r);
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for (p, &v) in probs.row_mut(r).iter_mut().zip(row) {
                *p = (v - m).exp();
                z += *p;
            }
            for p in probs.row_mut(r) {
                *p = *p / z;
            }
            total += z.ln() + m - row[y];
        }
        let loss = total / T::lit(labels.len() as f64);
        let ng = self.ng(logits);
        Ok(self.push(Tensor::scalar(loss), Op::SoftmaxCe { logits, labels: labels.to_vec(), probs }, ng))
    }

    /// Mean absolute error against a constant target of the same shape.
    /// The subgradient at zero residual is zero.
    pub fn mean_absolute_error(&mut self, pred: Var, target: &Tensor<T>) -> Result<Var> {
        let pv = self.value(pred);
        if pv.shape() != target.shape() || pv.is_empty() {
            return Err(Error::shape("mean_absolute_error", format!("{} vs {}", shape_str(pv), shape_str(target))));
        }
        let total: T = pv.data().iter().zip(target.data()).map(|(&p, &t)| (p - t).abs()).sum();
        let loss = total / T::lit(pv.len() as f64);
        let ng = self.ng(pred);
        Ok(self.push(Tensor::scalar(loss), Op::Mae { pred, target: target.clone() }, ng))
    }

    /// Row-wise cosine similarity, `n x k` with `n x k` giving `n x 1`.
    /// Norms are floored at `floor` so zero vectors yield zero similarity.
    pub fn cosine_similarity(&mut self, a: Var, b: Var, floor: T) -> Result<Var> {
        self.same_shape("cosine_similarity", a, b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let n = av.rows();
        let mut out = Tensor::zeros(n, 1);
        let mut norm_a = Vec::with_capacity(n);
        let mut norm_b = Vec::with_capacity(n);
        for r in 0..n {
            let (ra, rb) = (av.row(r), bv.row(r));
            let na = ra.iter().map(|&x| x * x).sum::<T>().sqrt();
            let nb = rb.iter().map(|&x| x * x).sum::<T>().sqrt();
            let dot: T = ra.iter().zip(rb).map(|(&x, &y)| x * y).sum();
            out.set(r, 0, dot / (na.max(floor) * nb.max(floor)));
            norm_a.push(na);
            norm_b.push(nb);
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Cosine { a, b, norm_a, norm_b, floor }, ng))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum();
        let ng = self.ng(a);
        self.push(Tensor::scalar(s), Op::Sum(a), ng)
    }

    /// Mean over all entries; an empty input yields zero.
    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s: T = v.data().iter().copied().sum();
        let m = if v.is_empty() { T::zero() } else { s / T::lit(v.len() as f64) };
        let ng = self.ng(a);
        self.push(Tensor::scalar(m), Op::Mean(a), ng)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::input(format!("backward needs a scalar loss, got {}", shape_str(lv))));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if let Op::Leaf = node.op {
                grads[i] = Some(g);
                continue;
            }
            self.pullback(node, &g, &mut grads);
        }
        let leaf_grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| if matches!(n.op, Op::Leaf) { g } else { None })
            .collect();
        Ok(Gradients { grads: leaf_grads })
    }

    fn acc(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn pullback(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.ng(*a) {
                    let da = Tensor::matmul_t(g, false, self.value(*b), true);
                    self.acc(grads, *a, da);
                }
                if self.ng(*b) {
                    let db = Tensor::matmul_t(self.value(*a), true, g, false);
                    self.acc(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.map(|x| -x));
            }
            Op::AddRow(x, row) => {
                self.acc(grads, *x, g.clone());
                if self.ng(*row) {
                    let mut db = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, &v) in db.data_mut().iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    self.acc(grads, *row, db);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.ng(*a) {
                    let d = g.data().iter().zip(bv.data()).map(|(&x, &y)| x * y).collect();
                    self.acc(grads, *a, Tensor::from_vec(g.rows(), g.cols(), d).unwrap());
                }
                if self.ng(*b) {
                    let d = g.data().iter().zip(av.data()).map(|(&x, &y)| x * y).collect();
                    self.acc(grads, *b, Tensor::from_vec(g.rows(), g.cols(), d).unwrap());
                }
            }
            Op::Scale(a, s) => {
                let s = *s;
                self.acc(grads, *a, g.map(|x| x * s));
            }
            Op::Concat { parts, axis } => {
                let mut off = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let (pr, pc) = pv.shape();
                    if self.ng(p) {
                        let d = if *axis == 0 {
                            Tensor::from_vec(pr, pc, g.data()[off * pc..(off + pr) * pc].to_vec()).unwrap()
                        } else {
                            let mut d = Tensor::zeros(pr, pc);
                            for r in 0..pr {
                                d.row_mut(r).copy_from_slice(&g.row(r)[off..off + pc]);
                            }
                            d
                        };
                        self.acc(grads, p, d);
                    }
                    off += if *axis == 0 { pr } else { pc };
                }
            }
            Op::Gather { src, idx } => {
                let sv = self.value(*src);
                let mut d = Tensor::zeros(sv.rows(), sv.cols());
                for (r, &i) in idx.iter().enumerate() {
                    for (o, &v) in d.row_mut(i as usize).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                self.acc(grads, *src, d);
            }
            Op::SegmentSum { src, ids } => {
                let sv = self.value(*src);
                let mut d = Tensor::zeros(sv.rows(), sv.cols());
                for (r, &s) in ids.iter().enumerate() {
                    d.row_mut(r).copy_from_slice(g.row(s as usize));
                }
                self.acc(grads, *src, d);
            }
            Op::Relu(a) => {
                let out = &node.value;
                let d = g
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(&gv, &y)| if y > T::zero() { gv } else { T::zero() })
                    .collect();
                self.acc(grads, *a, Tensor::from_vec(g.rows(), g.cols(), d).unwrap());
            }
            Op::Tanh(a) => {
                let out = &node.value;
                let d = g.data().iter().zip(out.data()).map(|(&gv, &y)| gv * (T::one() - y * y)).collect();
                self.acc(grads, *a, Tensor::from_vec(g.rows(), g.cols(), d).unwrap());
            }
            Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                let (n, k) = xhat.shape();
                let gv = self.value(*gain).data().to_vec();
                if self.ng(*gain) || self.ng(*bias) {
                    let mut dg = Tensor::zeros(1, k);
                    let mut db = Tensor::zeros(1, k);
                    for r in 0..n {
                        for c in 0..k {
                            let gr = g.get(r, c);
                            dg.data_mut()[c] += gr * xhat.get(r, c);
                            db.data_mut()[c] += gr;
                        }
                    }
                    self.acc(grads, *gain, dg);
                    self.acc(grads, *bias, db);
                }
                if self.ng(*x) {
                    let kf = T::lit(k as f64);
                    let mut dx = Tensor::zeros(n, k);
                    for r in 0..n {
                        let dxhat: Vec<T> = g.row(r).iter().zip(&gv).map(|(&a, &b)| a * b).collect();
                        let mean_d = dxhat.iter().copied().sum::<T>() / kf;
                        let mean_dx = dxhat.iter().zip(xhat.row(r)).map(|(&a, &b)| a * b).sum::<T>() / kf;
                        for ((o, &dh), &xh) in dx.row_mut(r).iter_mut().zip(&dxhat).zip(xhat.row(r)) {
                            *o = rstd[r] * (dh - mean_d - xh * mean_dx);
                        }
                    }
                    self.acc(grads, *x, dx);
                }
            }
            Op::Dropout { x, mask } => {
                let d = g.data().iter().zip(mask).map(|(&a, &m)| a * m).collect();
                self.acc(grads, *x, Tensor::from_vec(g.rows(), g.cols(), d).unwrap());
            }
            Op::SoftmaxCe { logits, labels, probs } => {
                let scale = g.item() / T::lit(labels.len() as f64);
                let mut d = probs.clone();
                for (r, &y) in labels.iter().enumerate() {
                    let row = d.row_mut(r);
                    row[y] -= T::one();
                    for v in row.iter_mut() {
                        *v *= scale;
                    }
                }
                self.acc(grads, *logits, d);
            }
            Op::Mae { pred, target } => {
                let pv = self.value(*pred);
                let scale = g.item() / T::lit(pv.len() as f64);
                let d = pv
                    .data()
                    .iter()
                    .zip(target.data())
                    .map(|(&p, &t)| {
                        let r = p - t;
                        if r > T::zero() {
                            scale
                        } else if r < T::zero() {
                            -scale
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                self.acc(grads, *pred, Tensor::from_vec(pv.rows(), pv.cols(), d).unwrap());
            }
            Op::Cosine { a, b, norm_a, norm_b, floor } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (n, k) = av.shape();
                let mut da = Tensor::zeros(n, k);
                let mut db = Tensor::zeros(n, k);
                for r in 0..n {
                    let gr = g.get(r, 0);
                    let (na, nb) = (norm_a[r], norm_b[r]);
                    let (fa, fb) = (na.max(*floor), nb.max(*floor));
                    let c = node.value.get(r, 0);
                    // Floored norms are locally constant.
                    let ca = if na > *floor { c / (na * na) } else { T::zero() };
                    let cb = if nb > *floor { c / (nb * nb) } else { T::zero() };
                    let inv = T::one() / (fa * fb);
                    let (ra, rb) = (av.row(r), bv.row(r));
                    for j in 0..k {
                        da.set(r, j, gr * (rb[j] * inv - ca * ra[j]));
                        db.set(r, j, gr * (ra[j] * inv - cb * rb[j]));
                    }
                }
                self.acc(grads, *a, da);
                self.acc(grads, *b, db);
            }
            Op::Sum(a) => {
                let av = self.value(*a);
                self.acc(grads, *a, Tensor::filled(av.rows(), av.cols(), g.item()));
            }
            Op::Mean(a) => {
                let av = self.value(*a);
                if !av.is_empty() {
                    let v = g.item() / T::lit(av.len() as f64);
                    self.acc(grads, *a, Tensor::filled(av.rows(), av.cols(), v));
                }
            }
        }
    }
}

/// Gradients of a scalar loss with respect to the tape's leaves.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient for a leaf; `None` when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}
