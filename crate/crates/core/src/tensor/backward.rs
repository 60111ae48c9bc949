use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};
use crate::tensor::graph::{dot, masked_softmax, matmul_raw, Graph, Op, Var};
use crate::tensor::params::{ParamGrads, ParamStore};
use crate::tensor::tensor::dims2;

/// Gradients of one backward sweep, indexed by node.
pub struct Gradients<T> {
    tape: u64,
    grads: Vec<Option<Vec<T>>>,
    params: Vec<(crate::tensor::ParamId, usize)>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient with respect to `v`; zeros when `v` did not influence the loss.
    pub fn wrt(&self, v: Var, len: usize) -> Vec<T> {
        assert_eq!(v.tape, self.tape, "variable belongs to a different tape");
        self.grads[v.id].clone().unwrap_or_else(|| vec![T::zero(); len])
    }

    pub fn get(&self, v: Var) -> Option<&[T]> {
        assert_eq!(v.tape, self.tape, "variable belongs to a different tape");
        self.grads[v.id].as_deref()
    }

    /// Dense per-parameter gradients; parameters absent from the tape get zeros.
    pub fn params(&self, store: &ParamStore<T>) -> ParamGrads<T> {
        let mut out = ParamGrads::zeros_like(store);
        for &(pid, node) in &self.params {
            if let Some(g) = &self.grads[node] {
                out.grads[pid.0].copy_from_slice(g);
            }
        }
        out
    }
}

fn acc<T: Scalar>(slot: &mut Option<Vec<T>>, len: usize) -> &mut Vec<T> {
    slot.get_or_insert_with(|| vec![T::zero(); len])
}

impl<'p, T: Scalar> Graph<'p, T> {
    /// Reverse sweep from a scalar `loss`. Each node is visited once, in
    /// reverse push order; fan-out contributions add up in the input slots.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if loss.tape != self.tape || loss.id >= self.nodes.len() {
            return Err(Error::DetachedLoss("loss variable was not recorded on this tape".into()));
        }
        if self.nodes[loss.id].value.len() != 1 {
            return Err(Error::DetachedLoss(format!("loss must be scalar, shape {:?}", self.nodes[loss.id].shape)));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<T>>> = vec![None; n];
        grads[loss.id] = Some(vec![T::one()]);

        for id in (0..=loss.id).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(gout) = grads[id].take() else { continue };
            self.propagate(id, &gout, &mut grads);
            grads[id] = Some(gout);
        }

        let params = self.param_nodes().map(|(p, v)| (p, v.id)).collect();
        Ok(Gradients { tape: self.tape, grads, params })
    }

    fn propagate(&self, id: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[id];
        let val = |i: usize| -> &[T] { &self.nodes[i].value };
        let needs = |i: usize| self.nodes[i].requires_grad;
        let len = |i: usize| self.nodes[i].value.len();
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let (r, k) = dims2(&self.nodes[*a].shape);
                let c = dims2(&self.nodes[*b].shape).1;
                if needs(*a) {
                    // dA = dC B^T
                    let ga = acc(&mut grads[*a], r * k);
                    let bv = val(*b);
                    for i in 0..r {
                        for p in 0..k {
                            ga[i * k + p] = ga[i * k + p] + dot(&g[i * c..(i + 1) * c], &bv[p * c..(p + 1) * c]);
                        }
                    }
                }
                if needs(*b) {
                    // dB = A^T dC
                    let gb = acc(&mut grads[*b], k * c);
                    let av = val(*a);
                    for i in 0..r {
                        for p in 0..k {
                            let x = av[i * k + p];
                            if x == T::zero() {
                                continue;
                            }
                            for j in 0..c {
                                gb[p * c + j] = gb[p * c + j] + x * g[i * c + j];
                            }
                        }
                    }
                }
            }
            Op::MatMulBt(a, b) => {
                let (r, k) = dims2(&self.nodes[*a].shape);
                let c = dims2(&self.nodes[*b].shape).0;
                if needs(*a) {
                    // dA = dC B
                    let d = matmul_raw(g, val(*b), r, c, k);
                    add_into(acc(&mut grads[*a], r * k), &d);
                }
                if needs(*b) {
                    // dB = dC^T A
                    let gb = acc(&mut grads[*b], c * k);
                    let av = val(*a);
                    for i in 0..r {
                        let arow = &av[i * k..(i + 1) * k];
                        for j in 0..c {
                            let s = g[i * c + j];
                            if s == T::zero() {
                                continue;
                            }
                            for (o, &x) in gb[j * k..(j + 1) * k].iter_mut().zip(arow) {
                                *o = *o + s * x;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for i in [*a, *b] {
                    if needs(i) {
                        add_into(acc(&mut grads[i], g.len()), g);
                    }
                }
            }
            Op::AddRow(m, v) => {
                let c = len(*v);
                if needs(*m) {
                    add_into(acc(&mut grads[*m], g.len()), g);
                }
                if needs(*v) {
                    let gv = acc(&mut grads[*v], c);
                    for (i, &x) in g.iter().enumerate() {
                        gv[i % c] = gv[i % c] + x;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                if needs(*a) {
                    let ga = acc(&mut grads[*a], g.len());
                    for i in 0..g.len() {
                        ga[i] = ga[i] + g[i] * bv[i];
                    }
                }
                if needs(*b) {
                    let gb = acc(&mut grads[*b], g.len());
                    for i in 0..g.len() {
                        gb[i] = gb[i] + g[i] * av[i];
                    }
                }
            }
            Op::Scale(a, k) => {
                let ga = acc(&mut grads[*a], g.len());
                for i in 0..g.len() {
                    ga[i] = ga[i] + g[i] * *k;
                }
            }
            Op::Tanh(a) => {
                let y = &node.value;
                let ga = acc(&mut grads[*a], g.len());
                for i in 0..g.len() {
                    ga[i] = ga[i] + g[i] * (T::one() - y[i] * y[i]);
                }
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                let ga = acc(&mut grads[*a], g.len());
                for i in 0..g.len() {
                    ga[i] = ga[i] + g[i] * y[i] * (T::one() - y[i]);
                }
            }
            Op::SliceCols { src, start } => {
                let (r, c) = dims2(&self.nodes[*src].shape);
                let w = dims2(&node.shape).1;
                let gs = acc(&mut grads[*src], r * c);
                for i in 0..r {
                    add_into(&mut gs[i * c + start..i * c + start + w], &g[i * w..(i + 1) * w]);
                }
            }
            Op::ConcatCols(parts) => {
                let (r, total) = dims2(&node.shape);
                let mut off = 0;
                for &p in parts {
                    let w = dims2(&self.nodes[p].shape).1;
                    if needs(p) {
                        let gp = acc(&mut grads[p], r * w);
                        for i in 0..r {
                            add_into(&mut gp[i * w..(i + 1) * w], &g[i * total + off..i * total + off + w]);
                        }
                    }
                    off += w;
                }
            }
            Op::SliceRows { src, start } => {
                let c = dims2(&self.nodes[*src].shape).1;
                let n = len(*src);
                let gs = acc(&mut grads[*src], n);
                add_into(&mut gs[start * c..start * c + g.len()], g);
            }
            Op::StackRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let l = len(p);
                    if needs(p) {
                        add_into(acc(&mut grads[p], l), &g[off..off + l]);
                    }
                    off += l;
                }
            }
            Op::Sum(a) => {
                let ga = acc(&mut grads[*a], len(*a));
                for x in ga.iter_mut() {
                    *x = *x + g[0];
                }
            }
            Op::Embedding { table, ids, pad } => {
                let d = dims2(&self.nodes[*table].shape).1;
                let gt = acc(&mut grads[*table], len(*table));
                for (row, &i) in ids.iter().enumerate() {
                    if Some(i) == *pad {
                        continue;
                    }
                    add_into(&mut gt[i * d..(i + 1) * d], &g[row * d..(row + 1) * d]);
                }
            }
            Op::Conv { input, kernels, bias, width } => {
                let (n, d) = dims2(&self.nodes[*input].shape);
                let f = dims2(&self.nodes[*kernels].shape).0;
                let span = width * d;
                let out_len = n - width + 1;
                let y = &node.value;
                let dz: Vec<T> = (0..y.len()).map(|i| g[i] * (T::one() - y[i] * y[i])).collect();
                if needs(*bias) {
                    let gb = acc(&mut grads[*bias], f);
                    for j in 0..out_len {
                        add_into(gb, &dz[j * f..(j + 1) * f]);
                    }
                }
                if needs(*kernels) {
                    let xv = val(*input);
                    let gk = acc(&mut grads[*kernels], f * span);
                    for j in 0..out_len {
                        let window = &xv[j * d..j * d + span];
                        for q in 0..f {
                            let s = dz[j * f + q];
                            for (o, &x) in gk[q * span..(q + 1) * span].iter_mut().zip(window) {
                                *o = *o + s * x;
                            }
                        }
                    }
                }
                if needs(*input) {
                    let kv = val(*kernels);
                    let gx = acc(&mut grads[*input], n * d);
                    for j in 0..out_len {
                        for q in 0..f {
                            let s = dz[j * f + q];
                            for (o, &k) in gx[j * d..j * d + span].iter_mut().zip(&kv[q * span..(q + 1) * span]) {
                                *o = *o + s * k;
                            }
                        }
                    }
                }
            }
            Op::MaxOverTime { src, argmax } => {
                let f = argmax.len();
                let gs = acc(&mut grads[*src], len(*src));
                for (col, &row) in argmax.iter().enumerate() {
                    gs[row * f + col] = gs[row * f + col] + g[col];
                }
            }
            Op::MaskedSoftmax { src, mask } => {
                let y = &node.value;
                let inner: T = y.iter().zip(g).map(|(&p, &d)| p * d).sum();
                let gs = acc(&mut grads[*src], y.len());
                for i in 0..y.len() {
                    if mask[i] {
                        gs[i] = gs[i] + y[i] * (g[i] - inner);
                    }
                }
            }
            Op::Dropout { src, factors } => {
                let gs = acc(&mut grads[*src], g.len());
                for i in 0..g.len() {
                    gs[i] = gs[i] + g[i] * factors[i];
                }
            }
            Op::Blend { a, b, take_a } => {
                let c = dims2(&node.shape).1;
                for (i, from_a) in [*a, *b].into_iter().zip([true, false]) {
                    if !needs(i) {
                        continue;
                    }
                    let gi = acc(&mut grads[i], g.len());
                    for (r, &t) in take_a.iter().enumerate() {
                        if t == from_a {
                            add_into(&mut gi[r * c..(r + 1) * c], &g[r * c..(r + 1) * c]);
                        }
                    }
                }
            }
            Op::BceLogits { logit, target } => {
                let z = val(*logit)[0];
                let gl = acc(&mut grads[*logit], 1);
                gl[0] = gl[0] + g[0] * (sigmoid(z) - *target);
            }
            Op::NegSampling { logits, target, noise } => {
                let u = val(*logits);
                let gl = acc(&mut grads[*logits], u.len());
                gl[*target] = gl[*target] + g[0] * (sigmoid(u[*target]) - T::one());
                for &k in noise {
                    gl[k] = gl[k] + g[0] * sigmoid(u[k]);
                }
            }
            Op::SoftmaxXent { logits, mask, target } => {
                let u = val(*logits);
                let p = masked_softmax(u, mask).expect("support checked at forward");
                let gl = acc(&mut grads[*logits], u.len());
                for i in 0..u.len() {
                    let onehot = if i == *target { T::one() } else { T::zero() };
                    gl[i] = gl[i] + g[0] * (p[i] - onehot);
                }
            }
        }
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}
