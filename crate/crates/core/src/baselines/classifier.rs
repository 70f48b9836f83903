//! Smoothed generative classifier over weighted window counts.

use serde::{Deserialize, Serialize};

use super::windows::WindowFeatures;
use super::BaselineError;
use crate::logspace::log_sum_exp;

const TOD_BINS: usize = 24;

/// Multinomial count model plus a time-of-day bin and, optionally, a
/// categorical context feature (the previous window's predicted class).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountClassifier {
    pub n_classes: usize,
    pub kappa: f64,
    log_prior: Vec<f64>,
    /// `[class][column]`.
    log_symbol: Vec<Vec<f64>>,
    /// `[class][tod bin]`.
    log_tod: Vec<Vec<f64>>,
    /// `[class][context value]`, empty when unused.
    log_context: Vec<Vec<f64>>,
}

fn tod_bin(secs: f64) -> usize {
    ((secs.rem_euclid(86_400.0) / 86_400.0 * TOD_BINS as f64) as usize).min(TOD_BINS - 1)
}

fn log_normalize(row: &[f64], kappa: f64) -> Vec<f64> {
    let total: f64 = row.iter().map(|c| c + kappa).sum();
    row.iter().map(|c| ((c + kappa) / total).ln()).collect()
}

impl CountClassifier {
    /// Fits from labelled features. `context` gives each window's context
    /// value in `0..n_context`; pass `None` to skip that feature.
    pub fn fit(
        features: &[WindowFeatures],
        labels: &[usize],
        n_classes: usize,
        context: Option<(&[usize], usize)>,
        kappa: f64,
    ) -> Result<Self, BaselineError> {
        if features.is_empty() || n_classes == 0 {
            return Err(BaselineError::NotFitted);
        }
        if labels.len() != features.len() {
            return Err(BaselineError::BadParameter("one label per window required".into()));
        }
        let cols = features[0].counts.len();
        let mut prior = vec![0.0; n_classes];
        let mut sym = vec![vec![0.0; cols]; n_classes];
        let mut tod = vec![vec![0.0; TOD_BINS]; n_classes];
        let n_ctx = context.map_or(0, |(_, n)| n);
        let mut ctx = vec![vec![0.0; n_ctx]; n_classes];
        for (i, (f, &c)) in features.iter().zip(labels).enumerate() {
            if c >= n_classes {
                return Err(BaselineError::BadParameter(format!("label {c} out of range")));
            }
            prior[c] += 1.0;
            for (k, x) in f.counts.iter().enumerate() {
                sym[c][k] += x;
            }
            tod[c][tod_bin(f.time_of_day)] += 1.0;
            if let Some((values, _)) = context {
                ctx[c][values[i]] += 1.0;
            }
        }
        Ok(Self {
            n_classes,
            kappa,
            log_prior: log_normalize(&prior, kappa),
            log_symbol: sym.iter().map(|r| log_normalize(r, kappa)).collect(),
            log_tod: tod.iter().map(|r| log_normalize(r, kappa)).collect(),
            log_context: if n_ctx == 0 { Vec::new() } else { ctx.iter().map(|r| log_normalize(r, kappa)).collect() },
        })
    }

    pub fn uses_context(&self) -> bool {
        !self.log_context.is_empty()
    }

    /// Unnormalized log joint per class.
    pub fn log_scores(&self, f: &WindowFeatures, context: Option<usize>) -> Vec<f64> {
        let t = tod_bin(f.time_of_day);
        (0..self.n_classes)
            .map(|c| {
                let mut s = self.log_prior[c] + self.log_tod[c][t];
                for (k, &x) in f.counts.iter().enumerate() {
                    if x != 0.0 {
                        s += x * self.log_symbol[c][k];
                    }
                }
                if let (Some(v), true) = (context, self.uses_context()) {
                    s += self.log_context[c][v];
                }
                s
            })
            .collect()
    }

    /// Posterior class distribution.
    pub fn posterior(&self, f: &WindowFeatures, context: Option<usize>) -> Vec<f64> {
        let s = self.log_scores(f, context);
        let z = log_sum_exp(&s);
        s.iter().map(|x| (x - z).exp()).collect()
    }

    /// Argmax class; the lowest id wins ties.
    pub fn predict(&self, f: &WindowFeatures, context: Option<usize>) -> usize {
        let s = self.log_scores(f, context);
        let mut best = 0;
        for c in 1..s.len() {
            if s[c] > s[best] {
                best = c;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(counts: &[f64]) -> WindowFeatures {
        WindowFeatures {
            counts: counts.to_vec(),
            time_of_day: 3600.0,
            span: 10.0,
        }
    }

    #[test]
    fn one_class_predicts_it() {
        let xs = vec![f(&[1.0, 0.0]), f(&[0.0, 2.0])];
        let m = CountClassifier::fit(&xs, &[1, 1], 3, None, 1.0).unwrap();
        for x in [f(&[5.0, 0.0]), f(&[0.0, 5.0]), f(&[0.0, 0.0])] {
            assert_eq!(m.predict(&x, None), 1);
        }
    }

    #[test]
    fn separable_profiles_fit_perfectly() {
        let xs = vec![f(&[3.0, 0.0, 1.0]), f(&[4.0, 1.0, 0.0]), f(&[0.0, 4.0, 3.0]), f(&[1.0, 3.0, 4.0])];
        let ys = [0, 0, 1, 1];
        let m = CountClassifier::fit(&xs, &ys, 2, None, 0.5).unwrap();
        for (x, &y) in xs.iter().zip(&ys) {
            assert_eq!(m.predict(x, None), y);
        }
        let p = m.posterior(&xs[0], None);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_training_is_not_fitted() {
        assert_eq!(CountClassifier::fit(&[], &[], 2, None, 1.0), Err(BaselineError::NotFitted));
    }

    #[test]
    fn ties_go_low() {
        let xs = vec![f(&[1.0]), f(&[1.0])];
        let m = CountClassifier::fit(&xs, &[0, 1], 2, None, 1.0).unwrap();
        assert_eq!(m.predict(&f(&[1.0]), None), 0);
    }
}
