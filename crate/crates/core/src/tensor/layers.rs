//! Layer-level building blocks on top of [`Graph`].

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::graph::{Graph, Var};
use crate::tensor::params::{ParamId, ParamStore};
use crate::tensor::tensor::Tensor;

/// Whether stochastic layers are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Narrow convolution of `w [n,d]` with a single kernel `k [c,d]` and scalar
/// bias: `f_j = tanh(sum(W[j..j+c] * K) + b)`, length `n - c + 1`.
pub fn conv1d_narrow<T: Scalar>(w: &Tensor<T>, k: &Tensor<T>, b: T) -> Result<Vec<T>> {
    let (n, d) = w.dims2();
    let (c, kd) = k.dims2();
    if kd != d {
        return Err(Error::Shape(format!("kernel width dim {kd} vs embedding dim {d}")));
    }
    if n < c {
        return Err(Error::KernelExceedsLength { width: c, len: n });
    }
    let mut g = Graph::new();
    let x = g.constant(w.clone());
    let kv = g.constant(Tensor::matrix(1, c * d, k.data().to_vec())?);
    let bv = g.constant(Tensor::scalar(b));
    let out = g.conv_narrow(x, kv, bv, c)?;
    Ok(g.value(out).to_vec())
}

/// `(max, argmax)` of a feature map; ties resolve to the lowest index.
pub fn max_over_time<T: Scalar>(f: &[T]) -> Result<(T, usize)> {
    let mut best: Option<(T, usize)> = None;
    for (i, &x) in f.iter().enumerate() {
        match best {
            Some((b, _)) if x <= b => {}
            _ => best = Some((x, i)),
        }
    }
    best.ok_or(Error::EmptyPool)
}

/// One LSTM step over rows of `x [B,in]` with state `h, c [B,H]`.
///
/// `w` is `[4H, in+H]` acting on `[x : h]`, `b` is `[4H]`; gate blocks are
/// ordered input, forget, output, candidate.
pub fn lstm_step<T: Scalar>(
    g: &mut Graph<'_, T>,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    w: Var,
    b: Var,
) -> Result<(Var, Var)> {
    let (bx, din) = g.dims(x);
    let (bh, hid) = g.dims(h_prev);
    let (rows, cols) = g.dims(w);
    if bx != bh || g.dims(c_prev) != (bh, hid) || rows != 4 * hid || cols != din + hid || g.value(b).len() != 4 * hid {
        return Err(Error::Shape(format!(
            "lstm_step: x {bx}x{din}, h {bh}x{hid}, c {:?}, W {rows}x{cols}",
            g.dims(c_prev)
        )));
    }
    let xh = g.concat_cols(&[x, h_prev])?;
    let pre = g.matmul_bt(xh, w)?;
    let pre = g.add_row(pre, b)?;
    let i = g.slice_cols(pre, 0, hid)?;
    let f = g.slice_cols(pre, hid, hid)?;
    let o = g.slice_cols(pre, 2 * hid, hid)?;
    let cand = g.slice_cols(pre, 3 * hid, hid)?;
    let i = g.sigmoid(i);
    let f = g.sigmoid(f);
    let o = g.sigmoid(o);
    let cand = g.tanh(cand);
    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok((h, c))
}

/// Inverted dropout: in training, entries are zeroed with probability `p` and
/// survivors scaled by `1/(1-p)`; evaluation is the identity.
pub fn dropout<T: Scalar, R: Rng + ?Sized>(
    g: &mut Graph<'_, T>,
    x: Var,
    p: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<Var> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidProbability(p));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok(x);
    }
    let scale = T::of(1.0 / (1.0 - p));
    let factors = (0..g.value(x).len()).map(|_| if rng.gen::<f64>() < p { T::zero() } else { scale }).collect();
    g.dropout_mask(x, factors)
}

/// Stacked LSTM weights registered in a store.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmCell {
    pub w: ParamId,
    pub b: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        input_dim: usize,
        hidden: usize,
        init_range: f64,
        rng: &mut R,
    ) -> Self {
        let w = store.add_uniform(format!("{name}.w"), &[4 * hidden, input_dim + hidden], init_range, rng);
        let b = store.add_uniform(format!("{name}.b"), &[4 * hidden], init_range, rng);
        Self { w, b, input_dim, hidden }
    }

    pub fn step<'p, T: Scalar>(
        &self,
        g: &mut Graph<'p, T>,
        store: &'p ParamStore<T>,
        x: Var,
        h: Var,
        c: Var,
    ) -> Result<(Var, Var)> {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        lstm_step(g, x, h, c, w, b)
    }
}

/// Dense layer `y = x W^T + b` with `W [out,in]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        input: usize,
        output: usize,
        bias: bool,
        init_range: f64,
        rng: &mut R,
    ) -> Self {
        let w = store.add_uniform(format!("{name}.w"), &[output, input], init_range, rng);
        let b = bias.then(|| store.add_uniform(format!("{name}.b"), &[output], init_range, rng));
        Self { w, b }
    }

    pub fn forward<'p, T: Scalar>(&self, g: &mut Graph<'p, T>, store: &'p ParamStore<T>, x: Var) -> Result<Var> {
        let w = g.param(store, self.w);
        let y = g.matmul_bt(x, w)?;
        match self.b {
            Some(b) => {
                let b = g.param(store, b);
                g.add_row(y, b)
            }
            None => Ok(y),
        }
    }
}
