//! Tape-based reverse-mode differentiation over [`DenseArray`] values.
//!
//! Every operation appends a node holding its forward value and the indices
//! of its operands. Because operands always precede their results on the
//! tape, a single reverse sweep in index order visits each node after all of
//! its consumers, so gradients of shared subexpressions are summed before
//! they are propagated further.
//!
//! ```
//! use dagnn::numeric::{DenseArray, Tape};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(DenseArray::vector(vec![1.0, 2.0]));
//! let y = tape.dot(x, x).unwrap();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0]);
//! ```

use super::{DenseArray, NumericError, Shape};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    /// vector * scalar-valued var
    ScaleBy(Var, Var),
    /// vector + scalar-valued var on every entry
    AddBroadcast(Var, Var),
    /// `x^T W`
    VecMat(Var, Var),
    /// `W x`
    MatVec(Var, Var),
    MatMul(Var, Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    StackRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    Sum(Var),
    Dot(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    /// operands and, per coordinate, the position of the winning operand
    MaxPool(Vec<Var>, Vec<usize>),
    MeanPool(Vec<Var>),
    /// logits, target class, softmax probabilities
    CrossEntropy(Var, usize, Vec<f64>),
}

#[derive(Debug, Clone)]
struct Node {
    value: DenseArray,
    op: Op,
}

/// Records a computation for one forward/backward pass.
///
/// A tape is owned by a single thread for the duration of a pass; build a
/// fresh one per sample or data batch.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(msg: String) -> NumericError {
    NumericError::Shape(msg)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: DenseArray, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &DenseArray {
        &self.nodes[v.0].value
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    pub fn leaf(&mut self, value: DenseArray) -> Var {
        self.push(value, Op::Leaf)
    }

    fn vector_len(&self, v: Var, what: &str) -> Result<usize, NumericError> {
        match self.value(v).shape() {
            Shape::Vector(n) => Ok(n),
            s => Err(shape_err(format!("{what}: expected a vector, got {s}"))),
        }
    }

    fn matrix_dims(&self, v: Var, what: &str) -> Result<(usize, usize), NumericError> {
        match self.value(v).shape() {
            Shape::Matrix(r, c) => Ok((r, c)),
            s => Err(shape_err(format!("{what}: expected a matrix, got {s}"))),
        }
    }

    fn scalar_of(&self, v: Var, what: &str) -> Result<f64, NumericError> {
        match self.data(v) {
            [x] => Ok(*x),
            d => Err(shape_err(format!("{what}: expected a scalar, got {} values", d.len()))),
        }
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<Shape, NumericError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(shape_err(format!("{what}: {sa} vs {sb}")));
        }
        Ok(sa)
    }

    fn zip_map(
        &mut self,
        a: Var,
        b: Var,
        what: &str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, NumericError> {
        let shape = self.same_shape(a, b, what)?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| f(x, y)).collect();
        Ok(self.push(DenseArray::new(shape, data)?, op))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let shape = self.value(a).shape();
        let data = self.data(a).iter().map(|&x| f(x)).collect();
        self.push(DenseArray::new(shape, data).expect("same length"), op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.zip_map(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.zip_map(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.zip_map(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |x| c * x, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |x| x + c, Op::AddScalar(a))
    }

    /// `c - a` elementwise.
    pub fn rsub_scalar(&mut self, c: f64, a: Var) -> Var {
        let neg = self.scale(a, -1.0);
        self.add_scalar(neg, c)
    }

    /// Multiplies every entry of `a` by the single value held in `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var, NumericError> {
        let c = self.scalar_of(s, "scale_by")?;
        Ok(self.map(a, |x| c * x, Op::ScaleBy(a, s)))
    }

    /// Adds the single value held in `s` to every entry of `a`.
    pub fn add_broadcast(&mut self, a: Var, s: Var) -> Result<Var, NumericError> {
        let c = self.scalar_of(s, "add_broadcast")?;
        Ok(self.map(a, |x| x + c, Op::AddBroadcast(a, s)))
    }

    /// `x^T W` for a vector `x` of length `r` and an `r x c` matrix.
    pub fn vecmat(&mut self, x: Var, w: Var) -> Result<Var, NumericError> {
        let n = self.vector_len(x, "vecmat")?;
        let (r, c) = self.matrix_dims(w, "vecmat")?;
        if n != r {
            return Err(shape_err(format!("vecmat: vector of {n} against ({r}, {c})")));
        }
        let (xs, ws) = (self.data(x), self.data(w));
        let mut out = vec![0.0; c];
        for (i, &xi) in xs.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, &wij) in out.iter_mut().zip(&ws[i * c..(i + 1) * c]) {
                *o += xi * wij;
            }
        }
        Ok(self.push(DenseArray::vector(out), Op::VecMat(x, w)))
    }

    /// `W x` for an `r x c` matrix and a vector of length `c`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var, NumericError> {
        let (r, c) = self.matrix_dims(w, "matvec")?;
        let n = self.vector_len(x, "matvec")?;
        if n != c {
            return Err(shape_err(format!("matvec: ({r}, {c}) against vector of {n}")));
        }
        let (ws, xs) = (self.data(w), self.data(x));
        let out = (0..r).map(|i| dot(&ws[i * c..(i + 1) * c], xs)).collect();
        Ok(self.push(DenseArray::vector(out), Op::MatVec(w, x)))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let (m, k) = self.matrix_dims(a, "matmul")?;
        let (k2, n) = self.matrix_dims(b, "matmul")?;
        if k != k2 {
            return Err(shape_err(format!("matmul: ({m}, {k}) x ({k2}, {n})")));
        }
        let (av, bv) = (self.data(a), self.data(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = av[i * k + p];
                for j in 0..n {
                    out[i * n + j] += aip * bv[p * n + j];
                }
            }
        }
        Ok(self.push(DenseArray::matrix(m, n, out)?, Op::MatMul(a, b)))
    }

    /// Concatenates vectors.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NumericError> {
        let mut out = Vec::new();
        for &p in parts {
            self.vector_len(p, "concat")?;
            out.extend_from_slice(self.data(p));
        }
        Ok(self.push(DenseArray::vector(out), Op::Concat(parts.to_vec())))
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NumericError> {
        let n = self.vector_len(a, "slice")?;
        if start + len > n {
            return Err(shape_err(format!("slice: [{start}, {}) of {n}", start + len)));
        }
        let out = self.data(a)[start..start + len].to_vec();
        Ok(self.push(DenseArray::vector(out), Op::Slice(a, start)))
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var, NumericError> {
        let first = rows.first().ok_or_else(|| shape_err("stack_rows: no rows".into()))?;
        let c = self.vector_len(*first, "stack_rows")?;
        let mut out = Vec::with_capacity(rows.len() * c);
        for &r in rows {
            if self.vector_len(r, "stack_rows")? != c {
                return Err(shape_err("stack_rows: ragged rows".into()));
            }
            out.extend_from_slice(self.data(r));
        }
        Ok(self.push(DenseArray::matrix(rows.len(), c, out)?, Op::StackRows(rows.to_vec())))
    }

    /// Selects rows of a matrix, with repetition allowed.
    pub fn gather_rows(&mut self, m: Var, idx: &[usize]) -> Result<Var, NumericError> {
        let (r, c) = self.matrix_dims(m, "gather_rows")?;
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= r {
                return Err(shape_err(format!("gather_rows: row {i} of {r}")));
            }
            out.extend_from_slice(self.value(m).row(i));
        }
        Ok(self.push(DenseArray::matrix(idx.len(), c, out)?, Op::GatherRows(m, idx.to_vec())))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.data(a).iter().sum();
        self.push(DenseArray::scalar(s), Op::Sum(a))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.same_shape(a, b, "dot")?;
        let s = dot(self.data(a), self.data(b));
        Ok(self.push(DenseArray::scalar(s), Op::Dot(a, b)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    /// Softmax of a vector, computed after subtracting the maximum logit.
    pub fn softmax(&mut self, a: Var) -> Result<Var, NumericError> {
        self.vector_len(a, "softmax")?;
        let out = softmax(self.data(a));
        Ok(self.push(DenseArray::vector(out), Op::Softmax(a)))
    }

    /// Coordinatewise maximum over equal-shape vectors. Ties go to the
    /// earliest operand, which also receives the gradient.
    pub fn max_pool(&mut self, parts: &[Var]) -> Result<Var, NumericError> {
        let first = *parts.first().ok_or_else(|| shape_err("max_pool: empty set".into()))?;
        let n = self.vector_len(first, "max_pool")?;
        let mut out = self.data(first).to_vec();
        let mut arg = vec![0; n];
        for (k, &p) in parts.iter().enumerate().skip(1) {
            if self.vector_len(p, "max_pool")? != n {
                return Err(shape_err("max_pool: ragged vectors".into()));
            }
            for (j, &x) in self.data(p).iter().enumerate() {
                if x > out[j] {
                    out[j] = x;
                    arg[j] = k;
                }
            }
        }
        Ok(self.push(DenseArray::vector(out), Op::MaxPool(parts.to_vec(), arg)))
    }

    /// Coordinatewise mean over equal-shape vectors.
    pub fn mean_pool(&mut self, parts: &[Var]) -> Result<Var, NumericError> {
        let first = *parts.first().ok_or_else(|| shape_err("mean_pool: empty set".into()))?;
        let n = self.vector_len(first, "mean_pool")?;
        let mut out = vec![0.0; n];
        for &p in parts {
            if self.vector_len(p, "mean_pool")? != n {
                return Err(shape_err("mean_pool: ragged vectors".into()));
            }
            for (o, x) in out.iter_mut().zip(self.data(p)) {
                *o += x;
            }
        }
        let k = parts.len() as f64;
        out.iter_mut().for_each(|o| *o /= k);
        Ok(self.push(DenseArray::vector(out), Op::MeanPool(parts.to_vec())))
    }

    /// `-log softmax(logits)[class]`.
    pub fn cross_entropy(&mut self, logits: Var, class: usize) -> Result<Var, NumericError> {
        let k = self.vector_len(logits, "cross_entropy")?;
        if class >= k {
            return Err(shape_err(format!("cross_entropy: class {class} of {k}")));
        }
        let z = self.data(logits);
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        let loss = lse - z[class];
        let probs = softmax(z);
        Ok(self.push(DenseArray::scalar(loss), Op::CrossEntropy(logits, class, probs)))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients, NumericError> {
        if self.value(output).len() != 1 {
            return Err(NumericError::NotScalar(self.value(output).len()));
        }
        let mut grads: Vec<Option<DenseArray>> = vec![None; output.0 + 1];
        grads[output.0] = Some(DenseArray::new(self.value(output).shape(), vec![1.0])?);

        for i in (0..=output.0).rev() {
            let Some(g_arr) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let g = g_arr.data();
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    self.acc(&mut grads, *a, |d| axpy(d, 1.0, g));
                    self.acc(&mut grads, *b, |d| axpy(d, 1.0, g));
                }
                Op::Sub(a, b) => {
                    self.acc(&mut grads, *a, |d| axpy(d, 1.0, g));
                    self.acc(&mut grads, *b, |d| axpy(d, -1.0, g));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.data(*a), self.data(*b));
                    self.acc(&mut grads, *a, |d| {
                        d.iter_mut().zip(g).zip(bv).for_each(|((d, g), b)| *d += g * b)
                    });
                    self.acc(&mut grads, *b, |d| {
                        d.iter_mut().zip(g).zip(av).for_each(|((d, g), a)| *d += g * a)
                    });
                }
                Op::Scale(a, c) => self.acc(&mut grads, *a, |d| axpy(d, *c, g)),
                Op::AddScalar(a) => self.acc(&mut grads, *a, |d| axpy(d, 1.0, g)),
                Op::ScaleBy(a, s) => {
                    let c = self.data(*s)[0];
                    let av = self.data(*a);
                    self.acc(&mut grads, *a, |d| axpy(d, c, g));
                    self.acc(&mut grads, *s, |d| d[0] += dot(g, av));
                }
                Op::AddBroadcast(a, s) => {
                    self.acc(&mut grads, *a, |d| axpy(d, 1.0, g));
                    self.acc(&mut grads, *s, |d| d[0] += g.iter().sum::<f64>());
                }
                Op::VecMat(x, w) => {
                    let (xv, wv) = (self.data(*x), self.data(*w));
                    let c = g.len();
                    self.acc(&mut grads, *x, |d| {
                        for (i, di) in d.iter_mut().enumerate() {
                            *di += dot(&wv[i * c..(i + 1) * c], g);
                        }
                    });
                    self.acc(&mut grads, *w, |d| {
                        for (i, &xi) in xv.iter().enumerate() {
                            if xi != 0.0 {
                                axpy(&mut d[i * c..(i + 1) * c], xi, g);
                            }
                        }
                    });
                }
                Op::MatVec(w, x) => {
                    let (wv, xv) = (self.data(*w), self.data(*x));
                    let c = xv.len();
                    self.acc(&mut grads, *x, |d| {
                        for (i, &gi) in g.iter().enumerate() {
                            axpy(d, gi, &wv[i * c..(i + 1) * c]);
                        }
                    });
                    self.acc(&mut grads, *w, |d| {
                        for (i, &gi) in g.iter().enumerate() {
                            axpy(&mut d[i * c..(i + 1) * c], gi, xv);
                        }
                    });
                }
                Op::MatMul(a, b) => {
                    let (m, k) = self.value(*a).dims();
                    let n = self.value(*b).dims().1;
                    let (av, bv) = (self.data(*a), self.data(*b));
                    self.acc(&mut grads, *a, |d| {
                        for i in 0..m {
                            for p in 0..k {
                                d[i * k + p] += dot(&g[i * n..(i + 1) * n], &bv[p * n..(p + 1) * n]);
                            }
                        }
                    });
                    self.acc(&mut grads, *b, |d| {
                        for i in 0..m {
                            for p in 0..k {
                                axpy(&mut d[p * n..(p + 1) * n], av[i * k + p], &g[i * n..(i + 1) * n]);
                            }
                        }
                    });
                }
                Op::Concat(parts) | Op::StackRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        self.acc(&mut grads, p, |d| axpy(d, 1.0, &g[offset..offset + n]));
                        offset += n;
                    }
                }
                Op::Slice(a, start) => {
                    self.acc(&mut grads, *a, |d| axpy(&mut d[*start..*start + g.len()], 1.0, g));
                }
                Op::GatherRows(m, idx) => {
                    let c = self.value(*m).dims().1;
                    self.acc(&mut grads, *m, |d| {
                        for (k, &i) in idx.iter().enumerate() {
                            axpy(&mut d[i * c..(i + 1) * c], 1.0, &g[k * c..(k + 1) * c]);
                        }
                    });
                }
                Op::Sum(a) => self.acc(&mut grads, *a, |d| d.iter_mut().for_each(|x| *x += g[0])),
                Op::Dot(a, b) => {
                    let (av, bv) = (self.data(*a), self.data(*b));
                    self.acc(&mut grads, *a, |d| axpy(d, g[0], bv));
                    self.acc(&mut grads, *b, |d| axpy(d, g[0], av));
                }
                Op::Sigmoid(a) => {
                    let y = node.value.data();
                    self.acc(&mut grads, *a, |d| {
                        d.iter_mut()
                            .zip(g)
                            .zip(y)
                            .for_each(|((d, g), y)| *d += g * y * (1.0 - y))
                    });
                }
                Op::Tanh(a) => {
                    let y = node.value.data();
                    self.acc(&mut grads, *a, |d| {
                        d.iter_mut()
                            .zip(g)
                            .zip(y)
                            .for_each(|((d, g), y)| *d += g * (1.0 - y * y))
                    });
                }
                Op::Softmax(a) => {
                    let y = node.value.data();
                    let gy = dot(g, y);
                    self.acc(&mut grads, *a, |d| {
                        d.iter_mut().zip(g).zip(y).for_each(|((d, g), y)| *d += y * (g - gy))
                    });
                }
                Op::MaxPool(parts, arg) => {
                    for (k, &p) in parts.iter().enumerate() {
                        if !arg.contains(&k) {
                            continue;
                        }
                        self.acc(&mut grads, p, |d| {
                            for (j, &winner) in arg.iter().enumerate() {
                                if winner == k {
                                    d[j] += g[j];
                                }
                            }
                        });
                    }
                }
                Op::MeanPool(parts) => {
                    let c = 1.0 / parts.len() as f64;
                    for &p in parts {
                        self.acc(&mut grads, p, |d| axpy(d, c, g));
                    }
                }
                Op::CrossEntropy(logits, class, probs) => {
                    self.acc(&mut grads, *logits, |d| {
                        for (j, (dj, pj)) in d.iter_mut().zip(probs).enumerate() {
                            let onehot = if j == *class { 1.0 } else { 0.0 };
                            *dj += g[0] * (pj - onehot);
                        }
                    });
                }
            }
            grads[i] = Some(g_arr);
        }
        Ok(Gradients { grads })
    }

    fn acc(&self, grads: &mut [Option<DenseArray>], v: Var, f: impl FnOnce(&mut [f64])) {
        let slot = &mut grads[v.0];
        let d = slot.get_or_insert_with(|| DenseArray::zeros(self.nodes[v.0].value.shape()));
        f(d.data_mut());
    }
}

/// Gradients of one scalar output with respect to every value on the tape.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<DenseArray>>,
}

impl Gradients {
    /// `None` when `v` does not influence the output.
    pub fn get(&self, v: Var) -> Option<&DenseArray> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Like [`Gradients::get`] but materializes zeros of the right shape.
    pub fn get_or_zeros(&self, tape: &Tape, v: Var) -> DenseArray {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| DenseArray::zeros(tape.value(v).shape()))
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-shifted softmax of a slice.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}
