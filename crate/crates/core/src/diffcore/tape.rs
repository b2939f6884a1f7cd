use std::collections::HashMap;

use super::{sigmoid, DiffError, ParameterStore, Shape, COSINE_NORM_FLOOR, LOG_FLOOR};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(usize),
    /// Produced while recording was off; not differentiable.
    Detached,
    Linear { w: Var, b: Var, x: Var },
    MatVec { w: Var, x: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Concat(Vec<Var>),
    Sum(Vec<Var>),
    Mean(Vec<Var>),
    SumElements(Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var),
    Dot(Var, Var),
    Cosine(Var, Var),
    Index(Var, usize),
    WeightedSum { weights: Var, vectors: Vec<Var> },
    Row { matrix: Var, row: usize },
    Reshape(Var),
    Bce { logits: Var, targets: Vec<f64> },
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    shape: Shape,
    op: Op,
}

/// Record of executed ops for one forward/backward pass.
#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    recording: bool,
    param_leaves: HashMap<usize, Var>,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

/// `∂loss/∂p` for every parameter of a store, in store order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    names: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros(store: &ParameterStore) -> Gradients {
        Gradients {
            names: store.iter().map(|p| p.name.clone()).collect(),
            values: store.iter().map(|p| vec![0.0; p.values.len()]).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i].as_slice())
    }

    pub fn by_index(&self, idx: usize) -> &[f64] {
        &self.values[idx]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.names.iter().map(String::as_str).zip(self.values.iter().map(Vec::as_slice))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

fn check_finite(op: &'static str, values: &[f64]) -> Result<(), DiffError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(DiffError::NumericalError { op })
    }
}

impl Tape {
    /// A tape that records ops for [`Tape::backward`].
    pub fn new() -> Tape {
        Tape { nodes: Vec::new(), recording: true, param_leaves: HashMap::new() }
    }

    /// A tape that only evaluates; `backward` fails with `NoTape`.
    pub fn inference() -> Tape {
        Tape { recording: false, ..Tape::new() }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].shape
    }

    /// Scalar value of a length-1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    fn push(&mut self, op: &'static str, value: Vec<f64>, shape: Shape, rec: Op) -> Result<Var, DiffError> {
        debug_assert_eq!(value.len(), shape.len());
        check_finite(op, &value)?;
        let op = if self.recording { rec } else { Op::Detached };
        self.nodes.push(Node { value, shape, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Vec<f64>, shape: Shape) -> Result<Var, DiffError> {
        if value.len() != shape.len() {
            return Err(DiffError::shape("constant", format!("{} values for shape {shape}", value.len())));
        }
        self.push("constant", value, shape, Op::Constant)
    }

    pub fn vector(&mut self, value: Vec<f64>) -> Result<Var, DiffError> {
        let n = value.len();
        self.constant(value, Shape::Vector(n))
    }

    pub fn zeros(&mut self, n: usize) -> Var {
        self.nodes.push(Node { value: vec![0.0; n], shape: Shape::Vector(n), op: Op::Constant });
        Var(self.nodes.len() - 1)
    }

    /// Leaf for a named parameter. Repeated calls return the same leaf so
    /// gradients accumulate in one place.
    pub fn param(&mut self, store: &ParameterStore, name: &str) -> Result<Var, DiffError> {
        let idx = store.index_of(name)?;
        if let Some(v) = self.param_leaves.get(&idx) {
            return Ok(*v);
        }
        let p = store.by_index(idx);
        let v = self.push("param", p.values.clone(), p.shape, Op::Param(idx))?;
        self.param_leaves.insert(idx, v);
        Ok(v)
    }

    fn vec_len(&self, op: &'static str, v: Var) -> Result<usize, DiffError> {
        match self.shape(v) {
            Shape::Vector(n) => Ok(n),
            s => Err(DiffError::shape(op, format!("expected a vector, got {s}"))),
        }
    }

    fn mat_dims(&self, op: &'static str, v: Var) -> Result<(usize, usize), DiffError> {
        match self.shape(v) {
            Shape::Matrix(r, c) => Ok((r, c)),
            s => Err(DiffError::shape(op, format!("expected a matrix, got {s}"))),
        }
    }

    fn matvec_values(&self, w: Var, x: Var, cols: usize) -> Vec<f64> {
        let wv = self.value(w);
        let xv = self.value(x);
        wv.chunks_exact(cols).map(|row| row.iter().zip(xv).map(|(a, b)| a * b).sum()).collect()
    }

    /// `w·x + b`.
    pub fn linear(&mut self, w: Var, b: Var, x: Var) -> Result<Var, DiffError> {
        let (r, c) = self.mat_dims("linear", w)?;
        let n = self.vec_len("linear", x)?;
        let bn = self.vec_len("linear", b)?;
        if n != c || bn != r {
            return Err(DiffError::shape("linear", format!("W {r}x{c}, b {bn}, x {n}")));
        }
        let mut out = self.matvec_values(w, x, c);
        for (o, bi) in out.iter_mut().zip(self.value(b)) {
            *o += bi;
        }
        self.push("linear", out, Shape::Vector(r), Op::Linear { w, b, x })
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var, DiffError> {
        let (r, c) = self.mat_dims("matvec", w)?;
        let n = self.vec_len("matvec", x)?;
        if n != c {
            return Err(DiffError::shape("matvec", format!("W {r}x{c}, x {n}")));
        }
        let out = self.matvec_values(w, x, c);
        self.push("matvec", out, Shape::Vector(r), Op::MatVec { w, x })
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<Shape, DiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(DiffError::shape(op, format!("{sa} vs {sb}")));
        }
        Ok(sa)
    }

    fn zip_with(&mut self, op: &'static str, a: Var, b: Var, f: fn(f64, f64) -> f64, rec: Op) -> Result<Var, DiffError> {
        let shape = self.same_shape(op, a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| f(*x, *y)).collect();
        self.push(op, out, shape, rec)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, DiffError> {
        let out = self.value(a).iter().map(|x| x * c).collect();
        let shape = self.shape(a);
        self.push("scale", out, shape, Op::Scale(a, c))
    }

    /// Concatenates vectors.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var, DiffError> {
        let mut out = Vec::new();
        for &x in xs {
            self.vec_len("concat", x)?;
            out.extend_from_slice(self.value(x));
        }
        let n = out.len();
        self.push("concat", out, Shape::Vector(n), Op::Concat(xs.to_vec()))
    }

    fn accumulate(&self, op: &'static str, xs: &[Var]) -> Result<(Vec<f64>, Shape), DiffError> {
        let Some(&first) = xs.first() else {
            return Err(DiffError::shape(op, "empty input list"));
        };
        let shape = self.shape(first);
        let mut out = self.value(first).to_vec();
        for &x in &xs[1..] {
            if self.shape(x) != shape {
                return Err(DiffError::shape(op, format!("{} vs {shape}", self.shape(x))));
            }
            for (o, v) in out.iter_mut().zip(self.value(x)) {
                *o += v;
            }
        }
        Ok((out, shape))
    }

    /// Elementwise sum of equally shaped values.
    pub fn sum(&mut self, xs: &[Var]) -> Result<Var, DiffError> {
        let (out, shape) = self.accumulate("sum", xs)?;
        self.push("sum", out, shape, Op::Sum(xs.to_vec()))
    }

    /// Elementwise mean of equally shaped values.
    pub fn mean(&mut self, xs: &[Var]) -> Result<Var, DiffError> {
        let (mut out, shape) = self.accumulate("mean", xs)?;
        let n = xs.len() as f64;
        out.iter_mut().for_each(|v| *v /= n);
        self.push("mean", out, shape, Op::Mean(xs.to_vec()))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum_elements(&mut self, a: Var) -> Result<Var, DiffError> {
        let s = self.value(a).iter().sum();
        self.push("sum_elements", vec![s], Shape::Vector(1), Op::SumElements(a))
    }

    fn map(&mut self, op: &'static str, a: Var, f: fn(f64) -> f64, rec: Op) -> Result<Var, DiffError> {
        let out = self.value(a).iter().map(|x| f(*x)).collect();
        let shape = self.shape(a);
        self.push(op, out, shape, rec)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, DiffError> {
        self.map("relu", a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, DiffError> {
        self.map("tanh", a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, DiffError> {
        self.map("sigmoid", a, sigmoid, Op::Sigmoid(a))
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var, DiffError> {
        let n = self.vec_len("softmax", a)?;
        if n == 0 {
            return Err(DiffError::shape("softmax", "empty vector"));
        }
        let x = self.value(a);
        let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let out = exps.into_iter().map(|e| e / total).collect();
        self.push("softmax", out, Shape::Vector(n), Op::Softmax(a))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.same_shape("dot", a, b)?;
        let d = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).sum();
        self.push("dot", vec![d], Shape::Vector(1), Op::Dot(a, b))
    }

    /// Cosine similarity with norms floored at `1e-12`.
    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.vec_len("cosine", a)?;
        self.same_shape("cosine", a, b)?;
        let s = super::cosine(self.value(a), self.value(b));
        self.push("cosine", vec![s], Shape::Vector(1), Op::Cosine(a, b))
    }

    pub fn index(&mut self, a: Var, i: usize) -> Result<Var, DiffError> {
        let n = self.shape(a).len();
        if i >= n {
            return Err(DiffError::shape("index", format!("index {i} out of {n}")));
        }
        let v = self.value(a)[i];
        self.push("index", vec![v], Shape::Vector(1), Op::Index(a, i))
    }

    /// `Σ_j weights[j] · vectors[j]`.
    pub fn weighted_sum(&mut self, weights: Var, vectors: &[Var]) -> Result<Var, DiffError> {
        let k = self.vec_len("weighted_sum", weights)?;
        if k != vectors.len() || k == 0 {
            return Err(DiffError::shape("weighted_sum", format!("{k} weights for {} vectors", vectors.len())));
        }
        let shape = self.shape(vectors[0]);
        let mut out = vec![0.0; shape.len()];
        for (j, &v) in vectors.iter().enumerate() {
            if self.shape(v) != shape {
                return Err(DiffError::shape("weighted_sum", format!("{} vs {shape}", self.shape(v))));
            }
            let w = self.value(weights)[j];
            for (o, x) in out.iter_mut().zip(self.value(v)) {
                *o += w * x;
            }
        }
        self.push("weighted_sum", out, shape, Op::WeightedSum { weights, vectors: vectors.to_vec() })
    }

    /// Row `row` of a matrix, as a vector.
    pub fn row(&mut self, matrix: Var, row: usize) -> Result<Var, DiffError> {
        let (r, c) = self.mat_dims("row", matrix)?;
        if row >= r {
            return Err(DiffError::shape("row", format!("row {row} out of {r}")));
        }
        let out = self.value(matrix)[row * c..(row + 1) * c].to_vec();
        self.push("row", out, Shape::Vector(c), Op::Row { matrix, row })
    }

    pub fn reshape(&mut self, a: Var, shape: Shape) -> Result<Var, DiffError> {
        if self.shape(a).len() != shape.len() {
            return Err(DiffError::shape("reshape", format!("{} to {shape}", self.shape(a))));
        }
        let out = self.value(a).to_vec();
        self.push("reshape", out, shape, Op::Reshape(a))
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against `targets`,
    /// logs floored at `1e-12`.
    pub fn bce_mean(&mut self, logits: Var, targets: &[f64]) -> Result<Var, DiffError> {
        let n = self.shape(logits).len();
        if n != targets.len() || n == 0 {
            return Err(DiffError::shape("bce", format!("{n} logits, {} targets", targets.len())));
        }
        let total: f64 = self.value(logits).iter().zip(targets).map(|(s, y)| super::bce_term(*s, *y)).sum();
        self.push("bce", vec![total / n as f64], Shape::Vector(1), Op::Bce { logits, targets: targets.to_vec() })
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var, store: &ParameterStore) -> Result<Gradients, DiffError> {
        if !self.recording {
            return Err(DiffError::NoTape);
        }
        let shape = self.shape(loss);
        if !shape.is_scalar() {
            return Err(DiffError::NonScalarLoss(shape));
        }
        let mut out = Gradients::zeros(store);
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); loss.0 + 1];
        grads[loss.0] = vec![1.0];

        for i in (0..=loss.0).rev() {
            if grads[i].is_empty() {
                continue;
            }
            let g = std::mem::take(&mut grads[i]);
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant | Op::Detached => {}
                Op::Param(idx) => {
                    let slot = &mut out.values[*idx];
                    if slot.len() != g.len() {
                        return Err(DiffError::shape("backward", format!("parameter {idx} changed shape")));
                    }
                    for (s, v) in slot.iter_mut().zip(&g) {
                        *s += v;
                    }
                }
                Op::Linear { w, b, x } => {
                    self.backprop_matvec(&mut grads, *w, *x, &g);
                    self.acc(&mut grads, *b, |gb| add_into(gb, &g));
                }
                Op::MatVec { w, x } => self.backprop_matvec(&mut grads, *w, *x, &g),
                Op::Add(a, b) => {
                    self.acc(&mut grads, *a, |ga| add_into(ga, &g));
                    self.acc(&mut grads, *b, |gb| add_into(gb, &g));
                }
                Op::Sub(a, b) => {
                    self.acc(&mut grads, *a, |ga| add_into(ga, &g));
                    self.acc(&mut grads, *b, |gb| gb.iter_mut().zip(&g).for_each(|(s, v)| *s -= v));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    self.acc(&mut grads, *a, |ga| {
                        ga.iter_mut().zip(g.iter().zip(vb)).for_each(|(s, (gi, y))| *s += gi * y)
                    });
                    self.acc(&mut grads, *b, |gb| {
                        gb.iter_mut().zip(g.iter().zip(va)).for_each(|(s, (gi, x))| *s += gi * x)
                    });
                }
                Op::Scale(a, c) => {
                    self.acc(&mut grads, *a, |ga| ga.iter_mut().zip(&g).for_each(|(s, v)| *s += c * v));
                }
                Op::Concat(xs) => {
                    let mut offset = 0;
                    for &x in xs {
                        let n = self.shape(x).len();
                        self.acc(&mut grads, x, |gx| add_into(gx, &g[offset..offset + n]));
                        offset += n;
                    }
                }
                Op::Sum(xs) => {
                    for &x in xs {
                        self.acc(&mut grads, x, |gx| add_into(gx, &g));
                    }
                }
                Op::Mean(xs) => {
                    let n = xs.len() as f64;
                    for &x in xs {
                        self.acc(&mut grads, x, |gx| gx.iter_mut().zip(&g).for_each(|(s, v)| *s += v / n));
                    }
                }
                Op::SumElements(a) => {
                    let g0 = g[0];
                    self.acc(&mut grads, *a, |ga| ga.iter_mut().for_each(|s| *s += g0));
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    self.acc(&mut grads, *a, |ga| {
                        for ((s, gi), xi) in ga.iter_mut().zip(&g).zip(x) {
                            if *xi > 0.0 {
                                *s += gi;
                            }
                        }
                    });
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    self.acc(&mut grads, *a, |ga| {
                        for ((s, gi), yi) in ga.iter_mut().zip(&g).zip(y) {
                            *s += gi * (1.0 - yi * yi);
                        }
                    });
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    self.acc(&mut grads, *a, |ga| {
                        for ((s, gi), yi) in ga.iter_mut().zip(&g).zip(y) {
                            *s += gi * yi * (1.0 - yi);
                        }
                    });
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let gy: f64 = g.iter().zip(y).map(|(gi, yi)| gi * yi).sum();
                    self.acc(&mut grads, *a, |ga| {
                        for ((s, gi), yi) in ga.iter_mut().zip(&g).zip(y) {
                            *s += yi * (gi - gy);
                        }
                    });
                }
                Op::Dot(a, b) => {
                    let g0 = g[0];
                    let (va, vb) = (self.value(*a), self.value(*b));
                    self.acc(&mut grads, *a, |ga| ga.iter_mut().zip(vb).for_each(|(s, y)| *s += g0 * y));
                    self.acc(&mut grads, *b, |gb| gb.iter_mut().zip(va).for_each(|(s, x)| *s += g0 * x));
                }
                Op::Cosine(a, b) => {
                    let g0 = g[0];
                    let s = node.value[0];
                    let (u, v) = (self.value(*a), self.value(*b));
                    let (nu_raw, nv_raw) = (super::norm(u), super::norm(v));
                    let (nu, nv) = (nu_raw.max(COSINE_NORM_FLOOR), nv_raw.max(COSINE_NORM_FLOOR));
                    // d s/d u = v/(|u||v|) - s u/|u|^2, the second term vanishes where the norm is floored
                    let cu = if nu_raw >= COSINE_NORM_FLOOR { s / (nu * nu) } else { 0.0 };
                    let cv = if nv_raw >= COSINE_NORM_FLOOR { s / (nv * nv) } else { 0.0 };
                    let inv = 1.0 / (nu * nv);
                    self.acc(&mut grads, *a, |ga| {
                        for ((s_, ui), vi) in ga.iter_mut().zip(u).zip(v) {
                            *s_ += g0 * (vi * inv - cu * ui);
                        }
                    });
                    self.acc(&mut grads, *b, |gb| {
                        for ((s_, ui), vi) in gb.iter_mut().zip(u).zip(v) {
                            *s_ += g0 * (ui * inv - cv * vi);
                        }
                    });
                }
                Op::Index(a, idx) => {
                    let g0 = g[0];
                    self.acc(&mut grads, *a, |ga| ga[*idx] += g0);
                }
                Op::WeightedSum { weights, vectors } => {
                    let w = self.value(*weights);
                    let dw: Vec<f64> = vectors
                        .iter()
                        .map(|&v| self.value(v).iter().zip(&g).map(|(x, gi)| x * gi).sum())
                        .collect();
                    self.acc(&mut grads, *weights, |gw| add_into(gw, &dw));
                    for (j, &v) in vectors.iter().enumerate() {
                        let wj = w[j];
                        self.acc(&mut grads, v, |gv| gv.iter_mut().zip(&g).for_each(|(s, gi)| *s += wj * gi));
                    }
                }
                Op::Row { matrix, row } => {
                    let c = g.len();
                    self.acc(&mut grads, *matrix, |gm| add_into(&mut gm[row * c..(row + 1) * c], &g));
                }
                Op::Reshape(a) => self.acc(&mut grads, *a, |ga| add_into(ga, &g)),
                Op::Bce { logits, targets } => {
                    let g0 = g[0];
                    let n = targets.len() as f64;
                    let s = self.value(*logits);
                    self.acc(&mut grads, *logits, |gl| {
                        for ((acc, si), y) in gl.iter_mut().zip(s).zip(targets) {
                            *acc += g0 * bce_grad(*si, *y) / n;
                        }
                    });
                }
            }
        }
        Ok(out)
    }

    fn acc(&self, grads: &mut [Vec<f64>], v: Var, f: impl FnOnce(&mut [f64])) {
        let slot = &mut grads[v.0];
        if slot.is_empty() {
            *slot = vec![0.0; self.nodes[v.0].value.len()];
        }
        f(slot)
    }

    fn backprop_matvec(&self, grads: &mut [Vec<f64>], w: Var, x: Var, g: &[f64]) {
        let (_, c) = self.shape(w).dims();
        let wv = self.value(w);
        let xv = self.value(x);
        self.acc(grads, w, |gw| {
            for (gi, grow) in g.iter().zip(gw.chunks_exact_mut(c)) {
                if *gi != 0.0 {
                    for (s, xj) in grow.iter_mut().zip(xv) {
                        *s += gi * xj;
                    }
                }
            }
        });
        self.acc(grads, x, |gx| {
            for (gi, wrow) in g.iter().zip(wv.chunks_exact(c)) {
                if *gi != 0.0 {
                    for (s, wij) in gx.iter_mut().zip(wrow) {
                        *s += gi * wij;
                    }
                }
            }
        });
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Derivative of `bce_term(s, y)` with respect to `s`; zero where a log
/// floor is active.
fn bce_grad(s: f64, y: f64) -> f64 {
    let p = sigmoid(s);
    let pos = if p > LOG_FLOOR { -y * (1.0 - p) } else { 0.0 };
    let neg = if 1.0 - p > LOG_FLOOR { (1.0 - y) * p } else { 0.0 };
    pos + neg
}
