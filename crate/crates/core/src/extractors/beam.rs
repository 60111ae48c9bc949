//! Length-bounded beam search over an abstract step model.

use std::cmp::Ordering;

use crate::error::Result;

/// A left-to-right model over symbols `0..num_symbols()`.
pub trait StepModel {
    type State: Clone;

    fn initial_state(&self) -> Result<Self::State>;

    fn num_symbols(&self) -> usize;

    fn end_symbol(&self) -> usize;

    /// Log-probabilities of the next symbol after feeding `prev` (`None` at
    /// the start), and the resulting state.
    fn step(&self, state: &Self::State, prev: Option<usize>) -> Result<(Vec<f64>, Self::State)>;
}

#[derive(Clone, Debug)]
pub struct Hypothesis<S> {
    /// Emitted symbols, including END when the hypothesis ended with it.
    pub tokens: Vec<usize>,
    /// Sum of per-step log-probabilities.
    pub logprob: f64,
    pub state: S,
    pub finished: bool,
}

impl<S> Hypothesis<S> {
    /// Log-probability per emitted symbol.
    pub fn normalized(&self) -> f64 {
        if self.tokens.is_empty() {
            self.logprob
        } else {
            self.logprob / self.tokens.len() as f64
        }
    }
}

fn by_score(a: (f64, &[usize]), b: (f64, &[usize])) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

struct Expansion {
    parent: usize,
    symbol: usize,
    score: f64,
    tokens: Vec<usize>,
}

/// Keeps the `width` best expansions per step (cumulative log-probability,
/// ties to the lexicographically smaller sequence). A hypothesis finishes on
/// END or at `max_len` symbols; finished hypotheses are ranked by
/// [`Hypothesis::normalized`].
pub fn beam_decode<M: StepModel>(model: &M, width: usize, max_len: usize) -> Result<Vec<Hypothesis<M::State>>> {
    let (width, max_len) = (width.max(1), max_len.max(1));
    let end = model.end_symbol();
    let mut active =
        vec![Hypothesis { tokens: Vec::new(), logprob: 0.0, state: model.initial_state()?, finished: false }];
    let mut finished = Vec::new();
    while !active.is_empty() {
        let mut expansions = Vec::new();
        let mut next_states = Vec::with_capacity(active.len());
        for (p, h) in active.iter().enumerate() {
            let (lps, st) = model.step(&h.state, h.tokens.last().copied())?;
            next_states.push(st);
            for (symbol, lp) in lps.into_iter().enumerate() {
                if lp.is_finite() {
                    let mut tokens = h.tokens.clone();
                    tokens.push(symbol);
                    expansions.push(Expansion { parent: p, symbol, score: h.logprob + lp, tokens });
                }
            }
        }
        expansions.sort_by(|a, b| by_score((a.score, &a.tokens), (b.score, &b.tokens)));
        expansions.truncate(width);
        let mut next = Vec::with_capacity(expansions.len());
        for e in expansions {
            let done = e.symbol == end || e.tokens.len() >= max_len;
            let h =
                Hypothesis { tokens: e.tokens, logprob: e.score, state: next_states[e.parent].clone(), finished: done };
            if done {
                finished.push(h);
            } else {
                next.push(h);
            }
        }
        active = next;
    }
    finished.sort_by(|a, b| by_score((a.normalized(), &a.tokens), (b.normalized(), &b.tokens)));
    Ok(finished)
}

/// Picks the best next symbol by the same cumulative sums the beam uses, so
/// it agrees exactly with `beam_decode(model, 1, max_len)`.
pub fn greedy_decode<M: StepModel>(model: &M, max_len: usize) -> Result<Hypothesis<M::State>> {
    let max_len = max_len.max(1);
    let end = model.end_symbol();
    let mut h = Hypothesis { tokens: Vec::new(), logprob: 0.0, state: model.initial_state()?, finished: false };
    loop {
        let (lps, st) = model.step(&h.state, h.tokens.last().copied())?;
        let best = lps.iter().enumerate().filter(|(_, lp)| lp.is_finite()).map(|(i, &lp)| (i, h.logprob + lp)).fold(
            None,
            |acc: Option<(usize, f64)>, (i, s)| match acc {
                Some((_, bs)) if bs >= s => acc,
                _ => Some((i, s)),
            },
        );
        let Some((symbol, score)) = best else {
            h.finished = true;
            return Ok(h);
        };
        h.tokens.push(symbol);
        h.logprob = score;
        h.state = st;
        if symbol == end || h.tokens.len() >= max_len {
            h.finished = true;
            return Ok(h);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::RngStream;
    use rand::Rng;

    /// A bigram table: `table[prev + 1][next]` log-probabilities.
    pub(crate) struct Table {
        pub logp: Vec<Vec<f64>>,
        pub end: usize,
    }

    impl StepModel for Table {
        type State = ();

        fn initial_state(&self) -> Result<()> {
            Ok(())
        }

        fn num_symbols(&self) -> usize {
            self.logp[0].len()
        }

        fn end_symbol(&self) -> usize {
            self.end
        }

        fn step(&self, _: &(), prev: Option<usize>) -> Result<(Vec<f64>, ())> {
            Ok((self.logp[prev.map_or(0, |p| p + 1)].clone(), ()))
        }
    }

    fn random_table(rng: &mut RngStream, v: usize) -> Table {
        let logp = (0..=v)
            .map(|_| {
                let w: Vec<f64> = (0..v).map(|_| rng.gen_range(0.05..1.0)).collect();
                let s: f64 = w.iter().sum();
                w.iter().map(|x| (x / s).ln()).collect()
            })
            .collect();
        Table { logp, end: v - 1 }
    }

    fn enumerate(t: &Table, prefix: &mut Vec<usize>, lp: f64, max_len: usize, out: &mut Vec<(f64, Vec<usize>)>) {
        let v = t.num_symbols();
        for s in 0..v {
            let score = lp + t.logp[prefix.last().map_or(0, |p| p + 1)][s];
            prefix.push(s);
            if s == t.end || prefix.len() == max_len {
                out.push((score / prefix.len() as f64, prefix.clone()));
            } else {
                enumerate(t, prefix, score, max_len, out);
            }
            prefix.pop();
        }
    }

    #[test]
    fn exhaustive_width_finds_enumeration_optimum() {
        let mut rng = RngStream::new(11);
        for _ in 0..20 {
            let v = rng.gen_range(2..=5);
            let max_len = rng.gen_range(1..=4);
            let t = random_table(&mut rng, v);
            let mut all = Vec::new();
            enumerate(&t, &mut Vec::new(), 0.0, max_len, &mut all);
            let best = all.iter().max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1))).unwrap();
            let hyps = beam_decode(&t, v.pow(max_len as u32), max_len).unwrap();
            assert_eq!(hyps.len(), all.len());
            assert_eq!(hyps[0].tokens, best.1);
            assert!((hyps[0].normalized() - best.0).abs() < 1e-12);
        }
    }

    #[test]
    fn width_one_is_greedy() {
        let mut rng = RngStream::new(12);
        for _ in 0..50 {
            let t = random_table(&mut rng, 5);
            let g = greedy_decode(&t, 6).unwrap();
            let b = beam_decode(&t, 1, 6).unwrap();
            assert_eq!(b.len(), 1);
            assert_eq!(b[0].tokens, g.tokens);
            assert_eq!(b[0].logprob.to_bits(), g.logprob.to_bits());
        }
    }

    #[test]
    fn ties_prefer_smaller_symbols() {
        let t = Table { logp: vec![vec![(0.5f64).ln(); 2]; 3], end: 1 };
        assert_eq!(greedy_decode(&t, 3).unwrap().tokens, vec![0, 0, 0]);
        assert_eq!(beam_decode(&t, 1, 3).unwrap()[0].tokens, vec![0, 0, 0]);
        let all = beam_decode(&t, 8, 3).unwrap();
        assert!(all.iter().all(|h| h.finished && h.tokens.len() <= 3));
    }
}
