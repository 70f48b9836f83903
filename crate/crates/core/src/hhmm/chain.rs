//! Fixed-lag scorer over exactly β consecutive symbols.
//!
//! Position 0 has its own distribution; every later position is
//! conditioned on the symbol before it, with a separate table per
//! position. Counts are kept sparse and smoothed on lookup: each position
//! has an add-κ marginal, and the conditional tables back off towards it
//! with a pseudo-count of κ.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawChain", into = "RawChain")]
pub struct ChainScorer {
    beta: usize,
    n_columns: usize,
    kappa: f64,
    windows: f64,
    initial: HashMap<usize, f64>,
    /// One map per position 1..β, keyed by (previous, next).
    pairs: Vec<HashMap<(usize, usize), f64>>,
    /// Outgoing totals per position 1..β, keyed by previous symbol.
    totals: Vec<HashMap<usize, f64>>,
    /// Symbol counts per position 1..β.
    marginals: Vec<HashMap<usize, f64>>,
}

impl ChainScorer {
    pub fn new(beta: usize, n_columns: usize, kappa: f64) -> Self {
        Self {
            beta,
            n_columns,
            kappa,
            windows: 0.0,
            initial: HashMap::new(),
            pairs: vec![HashMap::new(); beta.saturating_sub(1)],
            totals: vec![HashMap::new(); beta.saturating_sub(1)],
            marginals: vec![HashMap::new(); beta.saturating_sub(1)],
        }
    }

    /// Fits on a set of windows; each must have exactly β symbols.
    pub fn fit<'a, I>(beta: usize, n_columns: usize, kappa: f64, windows: I) -> Self
    where
        I: IntoIterator<Item = &'a [usize]>,
    {
        let mut c = Self::new(beta, n_columns, kappa);
        for w in windows {
            c.observe(w);
        }
        c
    }

    pub fn observe(&mut self, w: &[usize]) {
        debug_assert_eq!(w.len(), self.beta);
        self.windows += 1.0;
        *self.initial.entry(w[0]).or_default() += 1.0;
        for j in 1..self.beta {
            *self.pairs[j - 1].entry((w[j - 1], w[j])).or_default() += 1.0;
            *self.totals[j - 1].entry(w[j - 1]).or_default() += 1.0;
            *self.marginals[j - 1].entry(w[j]).or_default() += 1.0;
        }
    }

    /// Adds another scorer's counts to this one.
    pub fn merge(&mut self, other: &ChainScorer) {
        self.windows += other.windows;
        for (&y, &c) in &other.initial {
            *self.initial.entry(y).or_default() += c;
        }
        for j in 0..self.pairs.len().min(other.pairs.len()) {
            for (&k, &c) in &other.pairs[j] {
                *self.pairs[j].entry(k).or_default() += c;
            }
            for (&k, &c) in &other.totals[j] {
                *self.totals[j].entry(k).or_default() += c;
            }
            for (&k, &c) in &other.marginals[j] {
                *self.marginals[j].entry(k).or_default() += c;
            }
        }
    }

    pub fn beta(&self) -> usize {
        self.beta
    }

    /// Number of training windows.
    pub fn windows(&self) -> usize {
        self.windows as usize
    }

    /// Log-probability of a β-symbol window.
    pub fn score(&self, w: &[usize]) -> f64 {
        debug_assert_eq!(w.len(), self.beta);
        let k = self.kappa;
        let mut s = self.marginal(0, w[0]).ln();
        for j in 1..self.beta {
            let c = self.pairs[j - 1].get(&(w[j - 1], w[j])).copied().unwrap_or(0.0);
            let t = self.totals[j - 1].get(&w[j - 1]).copied().unwrap_or(0.0);
            s += ((c + k * self.marginal(j, w[j])) / (t + k)).ln();
        }
        s
    }

    /// Add-κ probability of `y` at `position`, ignoring the previous symbol.
    pub fn marginal(&self, position: usize, y: usize) -> f64 {
        let m = self.n_columns as f64;
        let c = if position == 0 {
            self.initial.get(&y)
        } else {
            self.marginals[position - 1].get(&y)
        };
        (c.copied().unwrap_or(0.0) + self.kappa) / (self.windows + self.kappa * m)
    }

    /// [`ChainScorer::marginal`] over every column.
    pub fn position_marginal(&self, position: usize) -> Vec<f64> {
        (0..self.n_columns).map(|y| self.marginal(position, y)).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct RawChain {
    beta: usize,
    n_columns: usize,
    kappa: f64,
    initial: Vec<(usize, f64)>,
    pairs: Vec<Vec<(usize, usize, f64)>>,
}

impl From<ChainScorer> for RawChain {
    fn from(c: ChainScorer) -> Self {
        let mut initial: Vec<(usize, f64)> = c.initial.into_iter().collect();
        initial.sort_by_key(|p| p.0);
        let pairs = c
            .pairs
            .into_iter()
            .map(|m| {
                let mut v: Vec<(usize, usize, f64)> = m.into_iter().map(|((a, b), n)| (a, b, n)).collect();
                v.sort_by_key(|t| (t.0, t.1));
                v
            })
            .collect();
        RawChain {
            beta: c.beta,
            n_columns: c.n_columns,
            kappa: c.kappa,
            initial,
            pairs,
        }
    }
}

impl From<RawChain> for ChainScorer {
    fn from(r: RawChain) -> Self {
        let mut c = ChainScorer::new(r.beta, r.n_columns, r.kappa);
        for (y, n) in r.initial {
            c.windows += n;
            *c.initial.entry(y).or_default() += n;
        }
        for (j, v) in r.pairs.into_iter().enumerate().take(r.beta.saturating_sub(1)) {
            for (a, b, n) in v {
                *c.pairs[j].entry((a, b)).or_default() += n;
                *c.totals[j].entry(a).or_default() += n;
                *c.marginals[j].entry(b).or_default() += n;
            }
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_windows(m: usize, beta: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..beta {
            out = out
                .into_iter()
                .flat_map(|w| {
                    (0..m).map(move |y| {
                        let mut v = w.clone();
                        v.push(y);
                        v
                    })
                })
                .collect();
        }
        out
    }

    #[test]
    fn deterministic_prefix_wins() {
        let train: Vec<Vec<usize>> = vec![vec![1, 2, 3]; 10];
        let c = ChainScorer::fit(3, 5, 1.0, train.iter().map(|v| v.as_slice()));
        let best = c.score(&[1, 2, 3]);
        for w in all_windows(5, 3) {
            if w != [1, 2, 3] {
                assert!(c.score(&w) < best);
            }
        }
    }

    #[test]
    fn scores_form_a_distribution() {
        let train = [vec![0, 1, 2], vec![0, 0, 1], vec![2, 1, 0]];
        let c = ChainScorer::fit(3, 3, 0.5, train.iter().map(|v| v.as_slice()));
        let total: f64 = all_windows(3, 3).iter().map(|w| c.score(w).exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_counts() {
        let train = [vec![0, 1], vec![0, 1], vec![0, 0]];
        let c = ChainScorer::fit(2, 2, 1.0, train.iter().map(|v| v.as_slice()));
        // initial: (3+1)/(3+2); marginal of 1 at position 1: (2+1)/(3+2);
        // 0→1: (2 + 3/5)/(3+1)
        let expected = 0.8f64 * (2.6 / 4.0);
        assert!((c.score(&[0, 1]) - expected.ln()).abs() < 1e-12);
        let marg = c.position_marginal(1);
        assert!((marg[1] - 3.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn serde_round_trip() {
        let train = [vec![0, 1, 2], vec![3, 1, 2]];
        let c = ChainScorer::fit(3, 4, 1.0, train.iter().map(|v| v.as_slice()));
        let back: ChainScorer = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
