//! Discrete-observation HMM in log space.
//!
//! Filtering normalizes after every step and keeps the running evidence
//! `log P(y_1..y_t)` separately.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::ObservationAlphabet;
use crate::logspace::{argmax, log_sum_exp, normalize_in_place, smoothed_log_row};
use crate::model::{logmat, logval, logvec};
use crate::par;

/// Row sums must exponentiate to 1 within this tolerance.
pub const ROW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HmmError {
    #[error("symbol {symbol} out of range for {n_symbols} symbols")]
    SymbolOutOfRange { symbol: usize, n_symbols: usize },
    #[error("observation at step {t} has zero probability under the model")]
    DegenerateEvidence { t: usize },
    #[error("empty observation sequence")]
    EmptySequence,
    #[error("no training sequences")]
    EmptyTrainingSet,
    #[error("state label {label} out of range for {n_states} states")]
    LabelOutOfRange { label: usize, n_states: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("model document: {0}")]
    Document(String),
}

/// Prior, transition and emission tables of one HMM, all in log space.
/// Rows are indexed by the from-state; emission columns by symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct HmmParams {
    n_states: usize,
    n_symbols: usize,
    #[serde(with = "logvec")]
    prior: Vec<f64>,
    #[serde(with = "logmat")]
    transition: Vec<Vec<f64>>,
    #[serde(with = "logmat")]
    emission: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawParams {
    #[serde(default)]
    n_states: usize,
    #[serde(default)]
    n_symbols: usize,
    #[serde(with = "logvec")]
    prior: Vec<f64>,
    #[serde(with = "logmat")]
    transition: Vec<Vec<f64>>,
    #[serde(with = "logmat")]
    emission: Vec<Vec<f64>>,
}

impl TryFrom<RawParams> for HmmParams {
    type Error = HmmError;

    fn try_from(r: RawParams) -> Result<Self, HmmError> {
        let p = HmmParams::from_log(r.prior, r.transition, r.emission)?;
        if (r.n_states != 0 && r.n_states != p.n_states) || (r.n_symbols != 0 && r.n_symbols != p.n_symbols) {
            return Err(HmmError::InvalidParams("declared sizes disagree with the tables".into()));
        }
        Ok(p)
    }
}

fn check_row(row: &[f64], what: &str) -> Result<(), HmmError> {
    if row.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
        return Err(HmmError::InvalidParams(format!("{what} has NaN or +inf entries")));
    }
    let s: f64 = row.iter().map(|x| x.exp()).sum();
    if (s - 1.0).abs() > ROW_TOLERANCE {
        return Err(HmmError::InvalidParams(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

impl HmmParams {
    /// Builds parameters from log-probability tables, checking shapes and
    /// normalization.
    pub fn from_log(prior: Vec<f64>, transition: Vec<Vec<f64>>, emission: Vec<Vec<f64>>) -> Result<Self, HmmError> {
        let k = prior.len();
        if k == 0 {
            return Err(HmmError::InvalidParams("no states".into()));
        }
        if transition.len() != k || transition.iter().any(|r| r.len() != k) {
            return Err(HmmError::InvalidParams("transition must be K×K".into()));
        }
        if emission.len() != k {
            return Err(HmmError::InvalidParams("emission must have K rows".into()));
        }
        let m = emission[0].len();
        if m == 0 || emission.iter().any(|r| r.len() != m) {
            return Err(HmmError::InvalidParams("emission rows must share a non-zero width".into()));
        }
        check_row(&prior, "prior")?;
        for (i, r) in transition.iter().enumerate() {
            check_row(r, &format!("transition row {i}"))?;
        }
        for (i, r) in emission.iter().enumerate() {
            check_row(r, &format!("emission row {i}"))?;
        }
        Ok(Self {
            n_states: k,
            n_symbols: m,
            prior,
            transition,
            emission,
        })
    }

    /// Builds parameters from linear probabilities.
    pub fn from_probs(prior: &[f64], transition: &[Vec<f64>], emission: &[Vec<f64>]) -> Result<Self, HmmError> {
        let ln = |v: &[f64]| v.iter().map(|x| x.ln()).collect::<Vec<_>>();
        Self::from_log(
            ln(prior),
            transition.iter().map(|r| ln(r)).collect(),
            emission.iter().map(|r| ln(r)).collect(),
        )
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn emission(&self) -> &[Vec<f64>] {
        &self.emission
    }

    fn check_symbol(&self, y: usize) -> Result<(), HmmError> {
        if y >= self.n_symbols {
            return Err(HmmError::SymbolOutOfRange {
                symbol: y,
                n_symbols: self.n_symbols,
            });
        }
        Ok(())
    }

    /// Starts filtering with the first observation.
    pub fn filter_init(&self, y: usize) -> Result<FilterState, HmmError> {
        filter_init(self, y)
    }

    /// Samples a state path and observation sequence of length `len`.
    pub fn sample<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
        let mut states: Vec<usize> = Vec::with_capacity(len);
        let mut symbols = Vec::with_capacity(len);
        for t in 0..len {
            let x = if t == 0 {
                draw(&self.prior, rng)
            } else {
                draw(&self.transition[states[t - 1]], rng)
            };
            states.push(x);
            symbols.push(draw(&self.emission[x], rng));
        }
        (states, symbols)
    }

    /// Copy with states reordered: new state `i` is old state `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            n_states: self.n_states,
            n_symbols: self.n_symbols,
            prior: perm.iter().map(|&p| self.prior[p]).collect(),
            transition: perm
                .iter()
                .map(|&p| perm.iter().map(|&q| self.transition[p][q]).collect())
                .collect(),
            emission: perm.iter().map(|&p| self.emission[p].clone()).collect(),
        }
    }

    /// Versioned JSON document, optionally tied to an alphabet.
    pub fn to_json(&self, alphabet: Option<&ObservationAlphabet>) -> String {
        let doc = HmmDocument {
            format: HMM_FORMAT.into(),
            version: HMM_VERSION,
            alphabet_digest: alphabet.map(ObservationAlphabet::digest),
            params: self.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("serializable")
    }

    /// Parses a document written by [`HmmParams::to_json`]. When `alphabet`
    /// is given, its digest must match the stored one.
    pub fn from_json(json: &str, alphabet: Option<&ObservationAlphabet>) -> Result<Self, HmmError> {
        let doc: HmmDocument = serde_json::from_str(json).map_err(|e| HmmError::Document(e.to_string()))?;
        if doc.format != HMM_FORMAT || doc.version != HMM_VERSION {
            return Err(HmmError::Document(format!(
                "unsupported format {} v{}",
                doc.format, doc.version
            )));
        }
        if let (Some(a), Some(d)) = (alphabet, &doc.alphabet_digest) {
            if a.digest() != *d {
                return Err(HmmError::Document("alphabet digest mismatch".into()));
            }
        }
        Ok(doc.params)
    }
}

fn draw<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &lp) in row.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return i;
        }
    }
    row.len() - 1
}

const HMM_FORMAT: &str = "streamhar-hmm";
const HMM_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct HmmDocument {
    format: String,
    version: u32,
    #[serde(default)]
    alphabet_digest: Option<String>,
    #[serde(flatten)]
    params: HmmParams,
}

/// Filtered belief after `t` observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    /// `log P(X_t | y_1..y_t)`.
    #[serde(with = "logvec")]
    pub log_posterior: Vec<f64>,
    /// `log P(y_1..y_t)`.
    #[serde(with = "logval")]
    pub log_evidence: f64,
    pub t: usize,
}

impl FilterState {
    pub fn map_state(&self) -> usize {
        argmax(&self.log_posterior).unwrap_or(0)
    }

    /// In-place [`filter_step`]; `scratch` is reused between calls.
    pub fn advance(&mut self, params: &HmmParams, y: usize, scratch: &mut Vec<f64>) -> Result<(), HmmError> {
        params.check_symbol(y)?;
        let k = params.n_states;
        scratch.clear();
        scratch.resize(k, 0.0);
        for (j, out) in scratch.iter_mut().enumerate() {
            let mut max = f64::NEG_INFINITY;
            for i in 0..k {
                max = max.max(self.log_posterior[i] + params.transition[i][j]);
            }
            let pred = if max == f64::NEG_INFINITY {
                max
            } else {
                let s: f64 = (0..k)
                    .map(|i| (self.log_posterior[i] + params.transition[i][j] - max).exp())
                    .sum();
                max + s.ln()
            };
            *out = pred + params.emission[j][y];
        }
        let z = log_sum_exp(scratch);
        if z == f64::NEG_INFINITY {
            return Err(HmmError::DegenerateEvidence { t: self.t + 1 });
        }
        for (p, s) in self.log_posterior.iter_mut().zip(scratch.iter()) {
            *p = s - z;
        }
        self.log_evidence += z;
        self.t += 1;
        Ok(())
    }
}

/// First filtering step: the prior takes the place of the predicted
/// distribution.
pub fn filter_init(params: &HmmParams, y: usize) -> Result<FilterState, HmmError> {
    params.check_symbol(y)?;
    let mut post: Vec<f64> = params
        .prior
        .iter()
        .zip(&params.emission)
        .map(|(p, e)| p + e[y])
        .collect();
    let z = normalize_in_place(&mut post);
    if z == f64::NEG_INFINITY {
        return Err(HmmError::DegenerateEvidence { t: 1 });
    }
    Ok(FilterState {
        log_posterior: post,
        log_evidence: z,
        t: 1,
    })
}

/// One filtering step:
/// `P(X_t | y_1..t) ∝ P(y_t | X_t) Σ_x P(X_t | x) P(x | y_1..t-1)`.
pub fn filter_step(params: &HmmParams, state: &FilterState, y: usize) -> Result<FilterState, HmmError> {
    if state.t == 0 {
        return filter_init(params, y);
    }
    let mut next = state.clone();
    let mut scratch = Vec::with_capacity(params.n_states);
    next.advance(params, y, &mut scratch)?;
    Ok(next)
}

/// Filters the whole sequence and returns the final state.
pub fn filter_sequence(params: &HmmParams, ys: &[usize]) -> Result<FilterState, HmmError> {
    let (&first, rest) = ys.split_first().ok_or(HmmError::EmptySequence)?;
    let mut st = filter_init(params, first)?;
    let mut scratch = Vec::with_capacity(params.n_states);
    for &y in rest {
        st.advance(params, y, &mut scratch)?;
    }
    Ok(st)
}

/// `log P(y_1..y_T)`. A sequence the model cannot produce gives `-inf`.
pub fn sequence_log_likelihood(params: &HmmParams, ys: &[usize]) -> Result<f64, HmmError> {
    if ys.is_empty() {
        return Err(HmmError::EmptySequence);
    }
    for &y in ys {
        params.check_symbol(y)?;
    }
    match filter_sequence(params, ys) {
        Ok(st) => Ok(st.log_evidence),
        Err(HmmError::DegenerateEvidence { .. }) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}

/// Most probable state path. Ties go to the lower state index, both for the
/// final state and for every back-pointer.
pub fn viterbi(params: &HmmParams, ys: &[usize]) -> Result<Vec<usize>, HmmError> {
    if ys.is_empty() {
        return Err(HmmError::EmptySequence);
    }
    for &y in ys {
        params.check_symbol(y)?;
    }
    let k = params.n_states;
    let mut delta: Vec<f64> = (0..k).map(|i| params.prior[i] + params.emission[i][ys[0]]).collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(ys.len());
    for &y in &ys[1..] {
        let mut next = vec![0.0; k];
        let mut ptr = vec![0usize; k];
        for j in 0..k {
            let mut best = (0, delta[0] + params.transition[0][j]);
            for i in 1..k {
                let v = delta[i] + params.transition[i][j];
                if v > best.1 {
                    best = (i, v);
                }
            }
            ptr[j] = best.0;
            next[j] = best.1 + params.emission[j][y];
        }
        back.push(ptr);
        delta = next;
    }
    let mut x = argmax(&delta).unwrap_or(0);
    let mut path = vec![x; ys.len()];
    for (t, ptr) in back.iter().enumerate().rev() {
        x = ptr[x];
        path[t] = x;
    }
    Ok(path)
}

/// Observations with a hidden-state label per step.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub symbols: Vec<usize>,
    pub states: Vec<usize>,
}

struct Counts {
    prior: Vec<f64>,
    transition: Vec<Vec<f64>>,
    emission: Vec<Vec<f64>>,
}

impl Counts {
    fn zeros(k: usize, m: usize) -> Self {
        Self {
            prior: vec![0.0; k],
            transition: vec![vec![0.0; k]; k],
            emission: vec![vec![0.0; m]; k],
        }
    }

    fn add(&mut self, o: &Counts) {
        for (a, b) in self.prior.iter_mut().zip(&o.prior) {
            *a += b;
        }
        for (ra, rb) in self.transition.iter_mut().zip(&o.transition) {
            for (a, b) in ra.iter_mut().zip(rb) {
                *a += b;
            }
        }
        for (ra, rb) in self.emission.iter_mut().zip(&o.emission) {
            for (a, b) in ra.iter_mut().zip(rb) {
                *a += b;
            }
        }
    }
}

/// Add-κ smoothed maximum-likelihood estimate from state-labelled
/// sequences. Empty sequences are ignored.
pub fn fit_supervised(
    sequences: &[LabeledSequence],
    n_states: usize,
    n_symbols: usize,
    kappa: f64,
) -> Result<HmmParams, HmmError> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(HmmError::InvalidParams("smoothing must be positive".into()));
    }
    if n_states == 0 || n_symbols == 0 {
        return Err(HmmError::InvalidParams("need at least one state and symbol".into()));
    }
    if sequences.iter().all(|s| s.symbols.is_empty()) {
        return Err(HmmError::EmptyTrainingSet);
    }
    for s in sequences {
        if s.symbols.len() != s.states.len() {
            return Err(HmmError::InvalidParams("symbols and states differ in length".into()));
        }
        if let Some(&y) = s.symbols.iter().find(|&&y| y >= n_symbols) {
            return Err(HmmError::SymbolOutOfRange { symbol: y, n_symbols });
        }
        if let Some(&x) = s.states.iter().find(|&&x| x >= n_states) {
            return Err(HmmError::LabelOutOfRange { label: x, n_states });
        }
    }
    let partial = par::map(sequences, |s| {
        let mut c = Counts::zeros(n_states, n_symbols);
        if let Some(&x0) = s.states.first() {
            c.prior[x0] += 1.0;
        }
        for w in s.states.windows(2) {
            c.transition[w[0]][w[1]] += 1.0;
        }
        for (&x, &y) in s.states.iter().zip(&s.symbols) {
            c.emission[x][y] += 1.0;
        }
        c
    });
    let mut total = Counts::zeros(n_states, n_symbols);
    for c in &partial {
        total.add(c);
    }
    HmmParams::from_log(
        smoothed_log_row(&total.prior, kappa),
        total.transition.iter().map(|r| smoothed_log_row(r, kappa)).collect(),
        total.emission.iter().map(|r| smoothed_log_row(r, kappa)).collect(),
    )
}
