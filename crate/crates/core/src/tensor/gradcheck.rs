//! Central-difference verification of backward passes in double precision.

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::tensor::graph::{Graph, Var};
use crate::tensor::params::{ParamId, ParamStore};
use crate::tensor::rng::RngStream;
use crate::tensor::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Check at most this many coordinates per tensor (sampled with `seed`).
    pub max_coords_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { eps: 1e-5, max_coords_per_param: None, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    /// Coordinates whose perturbation crossed a kink (max-pool argmax change).
    pub skipped_nonsmooth: usize,
}

impl GradCheckReport {
    pub fn non_smooth(&self) -> bool {
        self.skipped_nonsmooth > 0
    }
}

/// Relative error with a small absolute floor so vanishing gradients compare absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5)
}

/// Compares `backward()` of the scalar built by `f` against central differences
/// for every parameter in `store`.
pub fn grad_check<F>(store: &ParamStore<f64>, opts: &GradCheckOptions, mut f: F) -> Result<GradCheckReport>
where
    F: for<'a> FnMut(&mut Graph<'a, f64>, &'a ParamStore<f64>) -> Result<Var>,
{
    let (base, signature, analytic) = {
        let mut g = Graph::new();
        let loss = f(&mut g, store)?;
        let grads = g.backward(loss)?.params(store);
        (g.scalar(loss), g.branch_signature().to_vec(), grads)
    };
    let again = {
        let mut g = Graph::new();
        let loss = f(&mut g, store)?;
        g.scalar(loss)
    };
    if base.to_bits() != again.to_bits() {
        return Err(Error::NonDeterministic);
    }

    let mut work = store.clone();
    let mut pick = RngStream::new(opts.seed);
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, checked: 0, skipped_nonsmooth: 0 };
    for id in store.ids() {
        let n = store.get(id).len();
        let coords: Vec<usize> = match opts.max_coords_per_param {
            Some(k) if k < n => {
                let mut c = sample(&mut pick, n, k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        };
        for i in coords {
            let orig = store.get(id).data()[i];
            let mut eval = |x: f64, work: &mut ParamStore<f64>| -> Result<(f64, bool)> {
                work.get_mut(id).data_mut()[i] = x;
                let mut g = Graph::new();
                let loss = f(&mut g, work)?;
                Ok((g.scalar(loss), g.branch_signature() == signature.as_slice()))
            };
            let (plus, same_p) = eval(orig + opts.eps, &mut work)?;
            let (minus, same_m) = eval(orig - opts.eps, &mut work)?;
            work.get_mut(id).data_mut()[i] = orig;
            if !(same_p && same_m) {
                report.skipped_nonsmooth += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * opts.eps);
            let err = relative_error(analytic.get(id)[i], numeric);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((store.name(id).to_string(), i));
            }
        }
    }
    Ok(report)
}

/// [`grad_check`] over free input tensors instead of a parameter store.
pub fn grad_check_inputs<F>(points: &[Tensor<f64>], opts: &GradCheckOptions, mut f: F) -> Result<GradCheckReport>
where
    F: for<'a> FnMut(&mut Graph<'a, f64>, &[Var]) -> Result<Var>,
{
    let mut store = ParamStore::new();
    for (i, p) in points.iter().enumerate() {
        store.add(format!("input{i}"), p.clone());
    }
    grad_check(&store, opts, |g, s| {
        let vars: Vec<Var> = (0..s.len()).map(|i| g.param(s, ParamId(i))).collect();
        f(g, &vars)
    })
}
