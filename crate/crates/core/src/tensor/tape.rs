use super::{ParamGrads, ParamId, ParamStore, Real, Shape, Tensor, TensorError};
use alloc::vec;
use alloc::vec::Vec;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<F> {
    Constant,
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddGrouped { x: Var, g: Var, group: usize },
    Mul(Var, Var),
    Scale(Var, F),
    Sigmoid(Var),
    Tanh(Var),
    ConcatCols(Vec<Var>),
    SliceCols { x: Var, start: usize },
    StackRows(Vec<Var>),
    GatherRows { x: Var, index: Vec<usize> },
    Conv1d(Conv1dSaved<F>),
    Sum(Var),
    Bce(LossSaved<F>),
    SqErr(LossSaved<F>),
}

struct Conv1dSaved<F> {
    x: Var,
    kernel: Var,
    bias: Var,
    signal_len: usize,
    width: usize,
    columns: Vec<F>,
}

struct LossSaved<F> {
    pred: Var,
    target: Vec<F>,
    weight: Vec<F>,
    denom: F,
}

struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
    needs_grad: bool,
}

/// Probabilities inside BCE are clamped to `[PROB_EPS, 1 - PROB_EPS]`.
pub const PROB_EPS: f64 = 1e-7;

/// Ordered record of primitive applications.
///
/// Nodes are appended in evaluation order, so the vector is already
/// topologically sorted and `backward` is a single reverse sweep.
pub struct Tape<F> {
    nodes: Vec<Node<F>>,
    checked: bool,
}

impl<F: Real> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

fn mismatch(op: &'static str, lhs: Shape, rhs: Shape) -> TensorError {
    TensorError::ShapeMismatch { op, lhs, rhs }
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            checked: false,
        }
    }

    /// A tape that asserts every recorded value is finite.
    pub fn checked() -> Self {
        Self {
            nodes: Vec::new(),
            checked: true,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>, needs_grad: bool) -> Var {
        if self.checked {
            assert!(value.is_finite(), "non-finite value recorded on checked tape");
        }
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// A leaf whose gradient can be read back with [`Tape::grad_of`].
    pub fn input(&mut self, value: Tensor<F>) -> Var {
        self.push(value, Op::Input, true)
    }

    pub fn param(&mut self, store: &ParamStore<F>, id: ParamId) -> Var {
        self.push(store.get(id).clone(), Op::Param(id), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.value(a).matmul(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(mismatch("add", sa, sb));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let out = Tensor::from_vec(sa.rows, sa.cols, data)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    /// Adds row `r / group` of `g` to row `r` of `x`.
    ///
    /// With a single-row `g` and `group == rows(x)` this is the usual
    /// broadcast of a row vector across all rows.
    pub fn add_grouped(&mut self, x: Var, g: Var, group: usize) -> Result<Var, TensorError> {
        let (sx, sg) = (self.shape(x), self.shape(g));
        if sx.cols != sg.cols || group == 0 || sx.rows != sg.rows * group {
            return Err(mismatch("add_grouped", sx, sg));
        }
        let mut out = self.value(x).clone();
        let gv = self.value(g);
        for r in 0..sx.rows {
            let grow = gv.row(r / group);
            let start = r * sx.cols;
            for (o, &v) in out.data_mut()[start..start + sx.cols].iter_mut().zip(grow) {
                *o += v;
            }
        }
        let ng = self.ng(x) || self.ng(g);
        Ok(self.push(out, Op::AddGrouped { x, g, group }, ng))
    }

    /// Broadcast add of a 1×C row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var, TensorError> {
        let rows = self.shape(x).rows;
        if self.shape(row).rows != 1 || rows == 0 {
            return Err(mismatch("add_row", self.shape(x), self.shape(row)));
        }
        self.add_grouped(x, row, rows)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(mismatch("mul", sa, sb));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let out = Tensor::from_vec(sa.rows, sa.cols, data)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, x: Var, factor: F) -> Var {
        let out = self.value(x).map(|v| v * factor);
        let ng = self.ng(x);
        self.push(out, Op::Scale(x, factor), ng)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(Real::sigmoid);
        let ng = self.ng(x);
        self.push(out, Op::Sigmoid(x), ng)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(Real::tanh);
        let ng = self.ng(x);
        self.push(out, Op::Tanh(x), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let Some(&first) = parts.first() else {
            return Err(TensorError::Invalid("concat of zero tensors"));
        };
        let rows = self.shape(first).rows;
        let mut cols = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.rows != rows {
                return Err(mismatch("concat_cols", self.shape(first), s));
            }
            cols += s.cols;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::from_vec(rows, cols, data)?;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let s = self.shape(x);
        if start + len > s.cols {
            return Err(mismatch("slice_cols", s, Shape::new(s.rows, start + len)));
        }
        let v = self.value(x);
        let mut data = Vec::with_capacity(s.rows * len);
        for r in 0..s.rows {
            data.extend_from_slice(&v.row(r)[start..start + len]);
        }
        let out = Tensor::from_vec(s.rows, len, data)?;
        let ng = self.ng(x);
        Ok(self.push(out, Op::SliceCols { x, start }, ng))
    }

    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let Some(&first) = parts.first() else {
            return Err(TensorError::Invalid("stack of zero tensors"));
        };
        let cols = self.shape(first).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.cols != cols {
                return Err(mismatch("stack_rows", self.shape(first), s));
            }
            rows += s.rows;
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::from_vec(rows, cols, data)?;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(out, Op::StackRows(parts.to_vec()), ng))
    }

    /// Output row `i` is row `index[i]` of `x`.
    pub fn gather_rows(&mut self, x: Var, index: Vec<usize>) -> Result<Var, TensorError> {
        let s = self.shape(x);
        if let Some(&bad) = index.iter().find(|&&i| i >= s.rows) {
            return Err(mismatch("gather_rows", s, Shape::new(bad + 1, s.cols)));
        }
        let v = self.value(x);
        let mut data = Vec::with_capacity(index.len() * s.cols);
        for &i in &index {
            data.extend_from_slice(v.row(i));
        }
        let out = Tensor::from_vec(index.len(), s.cols, data)?;
        let ng = self.ng(x);
        Ok(self.push(out, Op::GatherRows { x, index }, ng))
    }

    /// Same-padded 1-D convolution along rows.
    ///
    /// `x` stacks independent signals of `signal_len` rows each, one channel
    /// per column. `kernel` is `(width * C_in) × C_out` where row
    /// `k * C_in + c` weighs channel `c` at row offset `k - width / 2`.
    /// Rows beyond either end of a signal read as zero.
    pub fn conv1d(
        &mut self,
        x: Var,
        kernel: Var,
        bias: Var,
        signal_len: usize,
        width: usize,
    ) -> Result<Var, TensorError> {
        let sx = self.shape(x);
        let sk = self.shape(kernel);
        let sb = self.shape(bias);
        let c_in = sx.cols;
        if width.is_multiple_of(2) || signal_len == 0 || !sx.rows.is_multiple_of(signal_len) {
            return Err(TensorError::Invalid(
                "conv1d needs an odd width and whole signals",
            ));
        }
        if sk.rows != width * c_in {
            return Err(mismatch("conv1d kernel", sx, sk));
        }
        if sb.rows != 1 || sb.cols != sk.cols {
            return Err(mismatch("conv1d bias", sk, sb));
        }
        let pad = width / 2;
        let rows = sx.rows;
        let span = width * c_in;
        let mut columns = vec![F::ZERO; rows * span];
        let xv = self.value(x);
        for r in 0..rows {
            let base = r - r % signal_len;
            let i = r % signal_len;
            for k in 0..width {
                let j = i + k;
                if j < pad || j - pad >= signal_len {
                    continue;
                }
                let src = xv.row(base + j - pad);
                columns[r * span + k * c_in..r * span + (k + 1) * c_in].copy_from_slice(src);
            }
        }
        let c_out = sk.cols;
        let mut out = Tensor::zeros(rows, c_out);
        for r in 0..rows {
            out.data_mut()[r * c_out..(r + 1) * c_out].copy_from_slice(self.value(bias).data());
        }
        F::gemm(
            rows,
            span,
            c_out,
            F::ONE,
            &columns,
            (span as isize, 1),
            self.value(kernel).data(),
            (c_out as isize, 1),
            F::ONE,
            out.data_mut(),
            (c_out as isize, 1),
        );
        let ng = self.ng(x) || self.ng(kernel) || self.ng(bias);
        Ok(self.push(
            out,
            Op::Conv1d(Conv1dSaved {
                x,
                kernel,
                bias,
                signal_len,
                width,
                columns,
            }),
            ng,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self
            .value(x)
            .data()
            .iter()
            .fold(F::ZERO, |acc, &v| acc + v);
        let ng = self.ng(x);
        self.push(Tensor::scalar(total), Op::Sum(x), ng)
    }

    fn check_loss(
        &self,
        op: &'static str,
        pred: Var,
        target: &[F],
        weight: &[F],
    ) -> Result<(), TensorError> {
        let s = self.shape(pred);
        if target.len() != s.len() {
            return Err(mismatch(op, s, Shape::new(1, target.len())));
        }
        if weight.len() != s.len() {
            return Err(mismatch(op, s, Shape::new(1, weight.len())));
        }
        Ok(())
    }

    /// `Σ w·BCE(p, t) / denom`, with `p` clamped away from 0 and 1.
    /// Cells with zero weight contribute exactly nothing. A zero `denom`
    /// yields a zero loss.
    pub fn bce(
        &mut self,
        pred: Var,
        target: Vec<F>,
        weight: Vec<F>,
        denom: F,
    ) -> Result<Var, TensorError> {
        self.check_loss("bce", pred, &target, &weight)?;
        let mut total = F::ZERO;
        if denom != F::ZERO {
            let lo = F::from_f64(PROB_EPS);
            let hi = F::ONE - lo;
            for ((&p, &t), &w) in self.value(pred).data().iter().zip(&target).zip(&weight) {
                if w == F::ZERO {
                    continue;
                }
                let p = p.max(lo).min(hi);
                total += w * -(t * p.ln() + (F::ONE - t) * (F::ONE - p).ln());
            }
            total = total / denom;
        }
        let ng = self.ng(pred);
        Ok(self.push(
            Tensor::scalar(total),
            Op::Bce(LossSaved {
                pred,
                target,
                weight,
                denom,
            }),
            ng,
        ))
    }

    /// `Σ w·(t - p)² / denom`; zero when `denom` is zero.
    pub fn sq_err(
        &mut self,
        pred: Var,
        target: Vec<F>,
        weight: Vec<F>,
        denom: F,
    ) -> Result<Var, TensorError> {
        self.check_loss("sq_err", pred, &target, &weight)?;
        let mut total = F::ZERO;
        if denom != F::ZERO {
            for ((&p, &t), &w) in self.value(pred).data().iter().zip(&target).zip(&weight) {
                if w == F::ZERO {
                    continue;
                }
                let d = t - p;
                total += w * d * d;
            }
            total = total / denom;
        }
        let ng = self.ng(pred);
        Ok(self.push(
            Tensor::scalar(total),
            Op::SqErr(LossSaved {
                pred,
                target,
                weight,
                denom,
            }),
            ng,
        ))
    }

    /// Gradients of `loss` with respect to every parameter in `store`.
    pub fn backward(&self, loss: Var, store: &ParamStore<F>) -> Result<ParamGrads<F>, TensorError> {
        let mut grads = ParamGrads::zeros_like(store);
        self.sweep(loss, |_, node, g| {
            if let Op::Param(id) = node.op {
                let dst = grads.get_mut(id);
                for (d, &v) in dst.data_mut().iter_mut().zip(g) {
                    *d += v;
                }
            }
        })?;
        Ok(grads)
    }

    /// Gradients of `loss` with respect to arbitrary recorded values.
    /// Entries for values off the loss path are zero.
    pub fn grad_of(&self, loss: Var, wrt: &[Var]) -> Result<Vec<Tensor<F>>, TensorError> {
        let mut out: Vec<Tensor<F>> = wrt
            .iter()
            .map(|&v| {
                let s = self.shape(v);
                Tensor::zeros(s.rows, s.cols)
            })
            .collect();
        self.sweep(loss, |idx, _, g| {
            for (slot, &w) in out.iter_mut().zip(wrt) {
                if w.0 == idx {
                    slot.data_mut().copy_from_slice(g);
                }
            }
        })?;
        Ok(out)
    }

    fn sweep(&self, loss: Var, mut visit: impl FnMut(usize, &Node<F>, &[F])) -> Result<(), TensorError> {
        let s = self.shape(loss);
        if s.rows != 1 || s.cols != 1 {
            return Err(TensorError::NotScalarLoss(s));
        }
        let mut grads: Vec<Option<Vec<F>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![F::ONE]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            visit(i, node, &g);
            self.propagate(node, &g, &mut grads);
        }
        Ok(())
    }

    fn propagate(&self, node: &Node<F>, g: &[F], grads: &mut [Option<Vec<F>>]) {
        let cols = node.value.cols();
        match &node.op {
            Op::Constant | Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if self.ng(*a) {
                    // dA = dC · Bᵀ
                    let da = slot(grads, *a, m * k);
                    F::gemm(
                        m,
                        n,
                        k,
                        F::ONE,
                        g,
                        (n as isize, 1),
                        bv.data(),
                        (1, n as isize),
                        F::ONE,
                        da,
                        (k as isize, 1),
                    );
                }
                if self.ng(*b) {
                    // dB = Aᵀ · dC
                    let db = slot(grads, *b, k * n);
                    F::gemm(
                        k,
                        m,
                        n,
                        F::ONE,
                        av.data(),
                        (1, k as isize),
                        g,
                        (n as isize, 1),
                        F::ONE,
                        db,
                        (n as isize, 1),
                    );
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if self.ng(v) {
                        axpy(slot(grads, v, g.len()), g);
                    }
                }
            }
            Op::AddGrouped { x, g: gv, group } => {
                if self.ng(*x) {
                    axpy(slot(grads, *x, g.len()), g);
                }
                if self.ng(*gv) {
                    let len = self.shape(*gv).len();
                    let dg = slot(grads, *gv, len);
                    for (r, row) in g.chunks(cols).enumerate() {
                        let gr = r / group;
                        axpy(&mut dg[gr * cols..(gr + 1) * cols], row);
                    }
                }
            }
            Op::Mul(a, b) => {
                if self.ng(*a) {
                    let bv = self.value(*b).data();
                    let da = slot(grads, *a, g.len());
                    for ((d, &gi), &bi) in da.iter_mut().zip(g).zip(bv) {
                        *d += gi * bi;
                    }
                }
                if self.ng(*b) {
                    let av = self.value(*a).data();
                    let db = slot(grads, *b, g.len());
                    for ((d, &gi), &ai) in db.iter_mut().zip(g).zip(av) {
                        *d += gi * ai;
                    }
                }
            }
            Op::Scale(x, factor) => {
                let dx = slot(grads, *x, g.len());
                for (d, &gi) in dx.iter_mut().zip(g) {
                    *d += gi * *factor;
                }
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                let dx = slot(grads, *x, g.len());
                for ((d, &gi), &yi) in dx.iter_mut().zip(g).zip(y) {
                    *d += gi * yi * (F::ONE - yi);
                }
            }
            Op::Tanh(x) => {
                let y = node.value.data();
                let dx = slot(grads, *x, g.len());
                for ((d, &gi), &yi) in dx.iter_mut().zip(g).zip(y) {
                    *d += gi * (F::ONE - yi * yi);
                }
            }
            Op::ConcatCols(parts) => {
                let rows = node.value.rows();
                let mut offset = 0;
                for &p in parts {
                    let pc = self.shape(p).cols;
                    if self.ng(p) {
                        let dp = slot(grads, p, rows * pc);
                        for r in 0..rows {
                            axpy(
                                &mut dp[r * pc..(r + 1) * pc],
                                &g[r * cols + offset..r * cols + offset + pc],
                            );
                        }
                    }
                    offset += pc;
                }
            }
            Op::SliceCols { x, start } => {
                let sx = self.shape(*x);
                let dx = slot(grads, *x, sx.len());
                for (r, row) in g.chunks(cols).enumerate() {
                    let base = r * sx.cols + start;
                    axpy(&mut dx[base..base + cols], row);
                }
            }
            Op::StackRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.shape(p).len();
                    if self.ng(p) {
                        axpy(slot(grads, p, len), &g[offset..offset + len]);
                    }
                    offset += len;
                }
            }
            Op::GatherRows { x, index } => {
                let len = self.shape(*x).len();
                let dx = slot(grads, *x, len);
                for (row, &src) in g.chunks(cols).zip(index) {
                    axpy(&mut dx[src * cols..(src + 1) * cols], row);
                }
            }
            Op::Conv1d(c) => self.conv1d_backward(c, g, cols, grads),
            Op::Sum(x) => {
                let len = self.shape(*x).len();
                let dx = slot(grads, *x, len);
                for d in dx.iter_mut() {
                    *d += g[0];
                }
            }
            Op::Bce(l) => {
                if l.denom == F::ZERO {
                    return;
                }
                let lo = F::from_f64(PROB_EPS);
                let hi = F::ONE - lo;
                let scale = g[0] / l.denom;
                let p = self.value(l.pred).data();
                let dp = slot(grads, l.pred, p.len());
                for i in 0..p.len() {
                    let w = l.weight[i];
                    if w == F::ZERO || p[i] < lo || p[i] > hi {
                        continue;
                    }
                    let t = l.target[i];
                    dp[i] += scale * w * (-t / p[i] + (F::ONE - t) / (F::ONE - p[i]));
                }
            }
            Op::SqErr(l) => {
                if l.denom == F::ZERO {
                    return;
                }
                let two = F::ONE + F::ONE;
                let scale = g[0] / l.denom;
                let p = self.value(l.pred).data();
                let dp = slot(grads, l.pred, p.len());
                for i in 0..p.len() {
                    let w = l.weight[i];
                    if w == F::ZERO {
                        continue;
                    }
                    dp[i] += scale * w * two * (p[i] - l.target[i]);
                }
            }
        }
    }

    fn conv1d_backward(&self, c: &Conv1dSaved<F>, g: &[F], c_out: usize, grads: &mut [Option<Vec<F>>]) {
        let sx = self.shape(c.x);
        let rows = sx.rows;
        let c_in = sx.cols;
        let span = c.width * c_in;
        if self.ng(c.kernel) {
            let dk = slot(grads, c.kernel, span * c_out);
            F::gemm(
                span,
                rows,
                c_out,
                F::ONE,
                &c.columns,
                (1, span as isize),
                g,
                (c_out as isize, 1),
                F::ONE,
                dk,
                (c_out as isize, 1),
            );
        }
        if self.ng(c.bias) {
            let db = slot(grads, c.bias, c_out);
            for row in g.chunks(c_out) {
                axpy(db, row);
            }
        }
        if self.ng(c.x) {
            let mut dcols = vec![F::ZERO; rows * span];
            F::gemm(
                rows,
                c_out,
                span,
                F::ONE,
                g,
                (c_out as isize, 1),
                self.value(c.kernel).data(),
                (1, c_out as isize),
                F::ZERO,
                &mut dcols,
                (span as isize, 1),
            );
            let pad = c.width / 2;
            let dx = slot(grads, c.x, sx.len());
            for r in 0..rows {
                let base = r - r % c.signal_len;
                let i = r % c.signal_len;
                for k in 0..c.width {
                    let j = i + k;
                    if j < pad || j - pad >= c.signal_len {
                        continue;
                    }
                    let dst = (base + j - pad) * c_in;
                    axpy(
                        &mut dx[dst..dst + c_in],
                        &dcols[r * span + k * c_in..r * span + (k + 1) * c_in],
                    );
                }
            }
        }
    }
}

fn slot<F: Real>(grads: &mut [Option<Vec<F>>], v: Var, len: usize) -> &mut [F] {
    grads[v.0].get_or_insert_with(|| vec![F::ZERO; len])
}

fn axpy<F: Real>(dst: &mut [F], src: &[F]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
