//! Append-only computation tape for reverse-mode differentiation.
//!
//! Every operation evaluates eagerly and records a node holding its output
//! plus whatever the backward rule needs. Nodes are pushed in evaluation
//! order, so the tape is topologically sorted by construction and the
//! backward pass is a single reverse sweep (see `backward.rs`).

use std::borrow::Cow;
use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::scalar::{sigmoid, softplus, Scalar};
use crate::tensor::params::{ParamId, ParamStore};
use crate::tensor::tensor::{dims2, Tensor};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a node on a specific tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    pub(crate) id: usize,
    pub(crate) tape: u64,
}

#[derive(Clone, Debug)]
pub(crate) enum Op<T> {
    Leaf,
    Param,
    MatMul(usize, usize),
    MatMulBt(usize, usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    Tanh(usize),
    Sigmoid(usize),
    SliceCols { src: usize, start: usize },
    ConcatCols(Vec<usize>),
    SliceRows { src: usize, start: usize },
    StackRows(Vec<usize>),
    Sum(usize),
    Embedding { table: usize, ids: Vec<usize>, pad: Option<usize> },
    Conv { input: usize, kernels: usize, bias: usize, width: usize },
    MaxOverTime { src: usize, argmax: Vec<usize> },
    MaskedSoftmax { src: usize, mask: Vec<bool> },
    Dropout { src: usize, factors: Vec<T> },
    Blend { a: usize, b: usize, take_a: Vec<bool> },
    BceLogits { logit: usize, target: T },
    NegSampling { logits: usize, target: usize, noise: Vec<usize> },
    SoftmaxXent { logits: usize, mask: Vec<bool>, target: usize },
}

pub(crate) struct Node<'p, T: Scalar> {
    pub(crate) value: Cow<'p, [T]>,
    pub(crate) shape: Vec<usize>,
    pub(crate) op: Op<T>,
    pub(crate) requires_grad: bool,
}

/// The tape. Parameters are borrowed from their store for the lifetime `'p`,
/// so building a graph never copies weights.
pub struct Graph<'p, T: Scalar> {
    pub(crate) tape: u64,
    pub(crate) nodes: Vec<Node<'p, T>>,
    params: HashMap<ParamId, Var>,
    branches: Vec<usize>,
}

impl<'p, T: Scalar> Default for Graph<'p, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p, T: Scalar> Graph<'p, T> {
    pub fn new() -> Self {
        Self {
            tape: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            params: HashMap::new(),
            branches: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.id].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.id].shape
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        dims2(&self.nodes[v.id].shape)
    }

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.id].value[0]
    }

    pub fn tensor(&self, v: Var) -> Tensor<T> {
        Tensor::new(self.nodes[v.id].shape.clone(), self.nodes[v.id].value.to_vec()).expect("node shape")
    }

    /// Argmax positions chosen by every non-smooth op so far, in order.
    /// Two evaluations with equal signatures lie on the same smooth piece.
    pub fn branch_signature(&self) -> &[usize] {
        &self.branches
    }

    fn push(&mut self, value: Cow<'p, [T]>, shape: Vec<usize>, op: Op<T>, requires_grad: bool) -> Var {
        debug_assert_eq!(value.len(), shape.iter().product::<usize>());
        let id = self.nodes.len();
        self.nodes.push(Node { value, shape, op, requires_grad });
        Var { id, tape: self.tape }
    }

    fn rg(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].requires_grad)
    }

    fn check(&self, v: Var) -> usize {
        assert_eq!(v.tape, self.tape, "variable belongs to a different tape");
        v.id
    }

    /// Constant input.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        let shape = t.shape().to_vec();
        self.push(Cow::Owned(t.into_data()), shape, Op::Leaf, false)
    }

    /// Input leaf; gradients are reported for it when `t.requires_grad` is set.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        let rg = t.requires_grad;
        let shape = t.shape().to_vec();
        self.push(Cow::Owned(t.into_data()), shape, Op::Leaf, rg)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.constant(Tensor::zeros(&[rows, cols]))
    }

    /// Leaf view of a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, store: &'p ParamStore<T>, id: ParamId) -> Var {
        if let Some(v) = self.params.get(&id) {
            return *v;
        }
        let t = store.get(id);
        let v = self.push(Cow::Borrowed(t.data()), t.shape().to_vec(), Op::Param, true);
        self.params.insert(id, v);
        v
    }

    pub(crate) fn param_nodes(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.params.iter().map(|(k, v)| (*k, *v))
    }

    /// `a [r,k] x b [k,c]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a), self.check(b));
        let (r, k) = self.dims(a);
        let (k2, c) = self.dims(b);
        if k != k2 {
            return Err(Error::Shape(format!("matmul {r}x{k} by {k2}x{c}")));
        }
        let out = matmul_raw(&self.nodes[ia].value, &self.nodes[ib].value, r, k, c);
        let rg = self.rg(&[ia, ib]);
        Ok(self.push(Cow::Owned(out), vec![r, c], Op::MatMul(ia, ib), rg))
    }

    /// `a [r,k] x b[c,k]^T`; with `b` a weight matrix `[out,in]` this is a linear layer over rows of `a`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a), self.check(b));
        let (r, k) = self.dims(a);
        let (c, k2) = self.dims(b);
        if k != k2 {
            return Err(Error::Shape(format!("matmul_bt {r}x{k} by ({c}x{k2})^T")));
        }
        let out = matmul_bt_raw(&self.nodes[ia].value, &self.nodes[ib].value, r, k, c);
        let rg = self.rg(&[ia, ib]);
        Ok(self.push(Cow::Owned(out), vec![r, c], Op::MatMulBt(ia, ib), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a), self.check(b));
        self.same_len(ia, ib, "add")?;
        let out = zip_map(&self.nodes[ia].value, &self.nodes[ib].value, |x, y| x + y);
        let shape = self.nodes[ia].shape.clone();
        let rg = self.rg(&[ia, ib]);
        Ok(self.push(Cow::Owned(out), shape, Op::Add(ia, ib), rg))
    }

    /// Adds the row vector `v [c]` to every row of `m [r,c]`.
    pub fn add_row(&mut self, m: Var, v: Var) -> Result<Var> {
        let (im, iv) = (self.check(m), self.check(v));
        let (r, c) = self.dims(m);
        if self.nodes[iv].value.len() != c {
            return Err(Error::Shape(format!("add_row: {r}x{c} + {}", self.nodes[iv].value.len())));
        }
        let mv = &self.nodes[im].value;
        let vv = &self.nodes[iv].value;
        let out: Vec<T> = (0..r * c).map(|i| mv[i] + vv[i % c]).collect();
        let rg = self.rg(&[im, iv]);
        Ok(self.push(Cow::Owned(out), vec![r, c], Op::AddRow(im, iv), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a), self.check(b));
        self.same_len(ia, ib, "mul")?;
        let out = zip_map(&self.nodes[ia].value, &self.nodes[ib].value, |x, y| x * y);
        let shape = self.nodes[ia].shape.clone();
        let rg = self.rg(&[ia, ib]);
        Ok(self.push(Cow::Owned(out), shape, Op::Mul(ia, ib), rg))
    }

    /// Multiplication by a constant.
    pub fn scale(&mut self, a: Var, k: T) -> Var {
        let ia = self.check(a);
        let out = self.nodes[ia].value.iter().map(|&x| x * k).collect();
        let shape = self.nodes[ia].shape.clone();
        let rg = self.rg(&[ia]);
        self.push(Cow::Owned(out), shape, Op::Scale(ia, k), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let ia = self.check(a);
        let out = self.nodes[ia].value.iter().map(|x| x.tanh()).collect();
        let shape = self.nodes[ia].shape.clone();
        let rg = self.rg(&[ia]);
        self.push(Cow::Owned(out), shape, Op::Tanh(ia), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let ia = self.check(a);
        let out = self.nodes[ia].value.iter().map(|&x| sigmoid(x)).collect();
        let shape = self.nodes[ia].shape.clone();
        let rg = self.rg(&[ia]);
        self.push(Cow::Owned(out), shape, Op::Sigmoid(ia), rg)
    }

    /// Columns `start..start+len` of every row.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ia = self.check(a);
        let (r, c) = self.dims(a);
        if start + len > c {
            return Err(Error::Shape(format!("slice_cols {start}+{len} of {c}")));
        }
        let v = &self.nodes[ia].value;
        let out: Vec<T> = (0..r).flat_map(|i| v[i * c + start..i * c + start + len].iter().copied()).collect();
        let rg = self.rg(&[ia]);
        Ok(self.push(Cow::Owned(out), vec![r, len], Op::SliceCols { src: ia, start }, rg))
    }

    /// Row-wise concatenation `[a : b : ...]`; all parts need the same row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let ids: Vec<usize> = parts.iter().map(|&p| self.check(p)).collect();
        let r = self.dims(parts[0]).0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pr, pc) = self.dims(p);
            if pr != r {
                return Err(Error::Shape(format!("concat_cols rows {pr} vs {r}")));
            }
            widths.push(pc);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for (&id, &w) in ids.iter().zip(&widths) {
                out.extend_from_slice(&self.nodes[id].value[i * w..(i + 1) * w]);
            }
        }
        let rg = self.rg(&ids);
        Ok(self.push(Cow::Owned(out), vec![r, total], Op::ConcatCols(ids), rg))
    }

    /// Rows `start..start+len`.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ia = self.check(a);
        let (r, c) = self.dims(a);
        if start + len > r {
            return Err(Error::Shape(format!("slice_rows {start}+{len} of {r}")));
        }
        let out = self.nodes[ia].value[start * c..(start + len) * c].to_vec();
        let rg = self.rg(&[ia]);
        Ok(self.push(Cow::Owned(out), vec![len, c], Op::SliceRows { src: ia, start }, rg))
    }

    /// Vertical stack; all parts need the same column count.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let ids: Vec<usize> = parts.iter().map(|&p| self.check(p)).collect();
        let c = self.dims(parts[0]).1;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (pr, pc) = self.dims(p);
            if pc != c {
                return Err(Error::Shape(format!("stack_rows cols {pc} vs {c}")));
            }
            rows += pr;
            out.extend_from_slice(&self.nodes[p.id].value);
        }
        let rg = self.rg(&ids);
        Ok(self.push(Cow::Owned(out), vec![rows, c], Op::StackRows(ids), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let ia = self.check(a);
        let s: T = self.nodes[ia].value.iter().copied().sum();
        let rg = self.rg(&[ia]);
        self.push(Cow::Owned(vec![s]), vec![1], Op::Sum(ia), rg)
    }

    /// Adds any number of equal-length terms.
    pub fn add_all(&mut self, terms: &[Var]) -> Result<Var> {
        let mut acc = terms[0];
        for &t in &terms[1..] {
            acc = self.add(acc, t)?;
        }
        Ok(acc)
    }

    /// Gathers rows of `table [V,d]`; rows for `pad` are zero and receive no gradient.
    pub fn embedding(&mut self, table: Var, ids: &[usize], pad: Option<usize>) -> Result<Var> {
        let it = self.check(table);
        let (v, d) = self.dims(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            if i >= v {
                return Err(Error::Shape(format!("embedding id {i} outside table of {v} rows")));
            }
            if Some(i) == pad {
                out.extend(std::iter::repeat_n(T::zero(), d));
            } else {
                out.extend_from_slice(&self.nodes[it].value[i * d..(i + 1) * d]);
            }
        }
        let rg = self.rg(&[it]);
        Ok(self.push(Cow::Owned(out), vec![ids.len(), d], Op::Embedding { table: it, ids: ids.to_vec(), pad }, rg))
    }

    /// Narrow temporal convolution of `input [n,d]` with a bank of kernels
    /// `[F, width*d]` (each row a flattened `width x d` kernel) and biases `[F]`,
    /// followed by `tanh`. Output is `[n-width+1, F]`.
    pub fn conv_narrow(&mut self, input: Var, kernels: Var, bias: Var, width: usize) -> Result<Var> {
        let (ix, ik, ib) = (self.check(input), self.check(kernels), self.check(bias));
        let (n, d) = self.dims(input);
        let (f, kw) = self.dims(kernels);
        if width == 0 || kw != width * d {
            return Err(Error::Shape(format!("kernel bank {f}x{kw} for width {width}, dim {d}")));
        }
        if self.nodes[ib].value.len() != f {
            return Err(Error::Shape(format!("conv bias len {} for {f} kernels", self.nodes[ib].value.len())));
        }
        if n < width {
            return Err(Error::KernelExceedsLength { width, len: n });
        }
        let out = conv_raw(&self.nodes[ix].value, &self.nodes[ik].value, &self.nodes[ib].value, n, d, f, width);
        let rg = self.rg(&[ix, ik, ib]);
        Ok(self.push(Cow::Owned(out), vec![n - width + 1, f], Op::Conv { input: ix, kernels: ik, bias: ib, width }, rg))
    }

    /// Column-wise max over rows of `[L,F]`, giving `[1,F]`. Ties go to the lowest row.
    pub fn max_over_time(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a);
        let (l, f) = self.dims(a);
        if l == 0 || f == 0 {
            return Err(Error::EmptyPool);
        }
        let v = &self.nodes[ia].value;
        let mut out = Vec::with_capacity(f);
        let mut argmax = Vec::with_capacity(f);
        for col in 0..f {
            let mut best = 0;
            for row in 1..l {
                if v[row * f + col] > v[best * f + col] {
                    best = row;
                }
            }
            out.push(v[best * f + col]);
            argmax.push(best);
        }
        self.branches.extend_from_slice(&argmax);
        let rg = self.rg(&[ia]);
        Ok(self.push(Cow::Owned(out), vec![1, f], Op::MaxOverTime { src: ia, argmax }, rg))
    }

    /// Softmax over all entries of `a`; masked (`false`) entries are exactly zero.
    pub fn masked_softmax(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        let ia = self.check(a);
        let out = masked_softmax(&self.nodes[ia].value, mask)?;
        let shape = self.nodes[ia].shape.clone();
        let rg = self.rg(&[ia]);
        Ok(self.push(Cow::Owned(out), shape, Op::MaskedSoftmax { src: ia, mask: mask.to_vec() }, rg))
    }

    /// Multiplies by fixed per-entry factors (a sampled dropout mask).
    pub fn dropout_mask(&mut self, a: Var, factors: Vec<T>) -> Result<Var> {
        let ia = self.check(a);
        if factors.len() != self.nodes[ia].value.len() {
            return Err(Error::Shape("dropout mask length".into()));
        }
        let out = zip_map(&self.nodes[ia].value, &factors, |x, m| x * m);
        let shape = self.nodes[ia].shape.clone();
        let rg = self.rg(&[ia]);
        Ok(self.push(Cow::Owned(out), shape, Op::Dropout { src: ia, factors }, rg))
    }

    /// Row-wise select: row `i` comes from `a` when `take_a[i]`, else from `b`.
    pub fn blend_rows(&mut self, a: Var, b: Var, take_a: &[bool]) -> Result<Var> {
        let (ia, ib) = (self.check(a), self.check(b));
        self.same_len(ia, ib, "blend_rows")?;
        let (r, c) = self.dims(a);
        if take_a.len() != r {
            return Err(Error::Shape(format!("blend_rows mask {} for {r} rows", take_a.len())));
        }
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        let out: Vec<T> = (0..r * c).map(|i| if take_a[i / c] { va[i] } else { vb[i] }).collect();
        let shape = self.nodes[ia].shape.clone();
        let rg = self.rg(&[ia, ib]);
        Ok(self.push(Cow::Owned(out), shape, Op::Blend { a: ia, b: ib, take_a: take_a.to_vec() }, rg))
    }

    /// Binary cross-entropy of `sigmoid(logit)` against `target` in `[0,1]`.
    pub fn bce_with_logits(&mut self, logit: Var, target: T) -> Result<Var> {
        let il = self.check(logit);
        if self.nodes[il].value.len() != 1 {
            return Err(Error::Shape("bce expects a single logit".into()));
        }
        let z = self.nodes[il].value[0];
        let loss = softplus(z) - target * z;
        let rg = self.rg(&[il]);
        Ok(self.push(Cow::Owned(vec![loss]), vec![1], Op::BceLogits { logit: il, target }, rg))
    }

    /// Negative-sampling objective: `-ln s(u_t) - sum_k ln s(-u_k)` over noise indices.
    pub fn neg_sampling(&mut self, logits: Var, target: usize, noise: &[usize]) -> Result<Var> {
        let il = self.check(logits);
        let u = &self.nodes[il].value;
        if target >= u.len() || noise.iter().any(|&k| k >= u.len()) {
            return Err(Error::Shape("negative sampling index out of range".into()));
        }
        let mut loss = softplus(-u[target]);
        for &k in noise {
            loss = loss + softplus(u[k]);
        }
        let rg = self.rg(&[il]);
        Ok(self.push(
            Cow::Owned(vec![loss]),
            vec![1],
            Op::NegSampling { logits: il, target, noise: noise.to_vec() },
            rg,
        ))
    }

    /// Full softmax cross-entropy over the unmasked logits.
    pub fn softmax_xent(&mut self, logits: Var, mask: &[bool], target: usize) -> Result<Var> {
        let il = self.check(logits);
        let u = &self.nodes[il].value;
        if target >= u.len() || !mask.get(target).copied().unwrap_or(false) {
            return Err(Error::Shape("softmax target outside support".into()));
        }
        let p = masked_softmax(u, mask)?;
        let loss = -p[target].max(T::min_positive_value()).ln();
        let rg = self.rg(&[il]);
        Ok(self.push(Cow::Owned(vec![loss]), vec![1], Op::SoftmaxXent { logits: il, mask: mask.to_vec(), target }, rg))
    }

    fn same_len(&self, a: usize, b: usize, what: &str) -> Result<()> {
        if self.nodes[a].value.len() != self.nodes[b].value.len() {
            return Err(Error::Shape(format!("{what}: {:?} vs {:?}", self.nodes[a].shape, self.nodes[b].shape)));
        }
        Ok(())
    }
}

fn zip_map<T: Scalar>(a: &[T], b: &[T], f: impl Fn(T, T) -> T) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

pub(crate) fn matmul_raw<T: Scalar>(a: &[T], b: &[T], r: usize, k: usize, c: usize) -> Vec<T> {
    let mut out = vec![T::zero(); r * c];
    for i in 0..r {
        let orow = &mut out[i * c..(i + 1) * c];
        for p in 0..k {
            let x = a[i * k + p];
            if x == T::zero() {
                continue;
            }
            let brow = &b[p * c..(p + 1) * c];
            for (o, &y) in orow.iter_mut().zip(brow) {
                *o = *o + x * y;
            }
        }
    }
    out
}

pub(crate) fn matmul_bt_raw<T: Scalar>(a: &[T], b: &[T], r: usize, k: usize, c: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..c {
            out.push(dot(arow, &b[j * k..(j + 1) * k]));
        }
    }
    out
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn conv_raw<T: Scalar>(x: &[T], k: &[T], b: &[T], n: usize, d: usize, f: usize, width: usize) -> Vec<T> {
    let len = n - width + 1;
    let span = width * d;
    let mut out = Vec::with_capacity(len * f);
    for j in 0..len {
        // rows j..j+width of a row-major [n,d] matrix are contiguous
        let window = &x[j * d..j * d + span];
        for q in 0..f {
            out.push((dot(window, &k[q * span..(q + 1) * span]) + b[q]).tanh());
        }
    }
    out
}

/// Numerically stable softmax restricted to `mask`.
pub fn masked_softmax<T: Scalar>(scores: &[T], mask: &[bool]) -> Result<Vec<T>> {
    if scores.len() != mask.len() {
        return Err(Error::Shape(format!("softmax mask {} for {} scores", mask.len(), scores.len())));
    }
    let max = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&s, _)| s)
        .fold(None, |acc: Option<T>, s| Some(acc.map_or(s, |a| a.max(s))))
        .ok_or(Error::EmptySupport)?;
    let exps: Vec<T> = scores.iter().zip(mask).map(|(&s, &m)| if m { (s - max).exp() } else { T::zero() }).collect();
    let z: T = exps.iter().copied().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}
