//! Segment matching, confusion matrices, accuracy and F1, and contiguous
//! k-fold cross-validation of the full pipeline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correction::{self, CorrectionConfig, CorrectionError};
use crate::events::{ClassRegistry, EventsError, LabeledStream, ObservationAlphabet, OTHER};
use crate::hhmm::{self, HhmmConfig, HhmmError, Segment};
use crate::par;
use crate::report::{num, to_csv_string};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no ground-truth episodes to score against")]
    EmptyTruth,
    #[error("need at least {needed} episodes for {folds} folds, found {found}")]
    TooFewEpisodes { needed: usize, found: usize, folds: usize },
    #[error("invalid evaluation setting: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Hhmm(#[from] HhmmError),
    #[error(transparent)]
    Correction(#[from] CorrectionError),
    #[error(transparent)]
    Events(#[from] EventsError),
}

/// Minimum overlap ratio for a prediction to hit a truth episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPolicy {
    pub rho: f64,
}

impl Default for MatchPolicy {
    fn default() -> Self {
        Self { rho: 0.5 }
    }
}

impl MatchPolicy {
    pub fn new(rho: f64) -> Result<Self, EvalError> {
        if rho > 0.0 && rho <= 1.0 {
            Ok(Self { rho })
        } else {
            Err(EvalError::InvalidConfig(format!("rho must lie in (0, 1], got {rho}")))
        }
    }
}

/// An inclusive event-index span with a class label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub begin: usize,
    pub end: usize,
    pub label: String,
}

impl Span {
    pub fn new(begin: usize, end: usize, label: impl Into<String>) -> Self {
        Self {
            begin,
            end,
            label: label.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.begin
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Shared events over the longer span's length.
    pub fn overlap_ratio(&self, other: &Span) -> f64 {
        let lo = self.begin.max(other.begin);
        let hi = self.end.min(other.end);
        if lo > hi {
            return 0.0;
        }
        (hi + 1 - lo) as f64 / self.len().max(other.len()) as f64
    }
}

impl From<&Segment> for Span {
    fn from(s: &Segment) -> Self {
        Span::new(s.begin_index, s.end_index, s.label.clone())
    }
}

/// Ground-truth spans of every episode, nested ones included.
pub fn truth_spans(stream: &LabeledStream) -> Vec<Span> {
    stream
        .episodes
        .iter()
        .map(|e| Span::new(e.begin, e.end, e.class.clone()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Matching {
    /// `(truth, predicted)` index pairs.
    pub pairs: Vec<(usize, usize)>,
    pub misses: Vec<usize>,
    pub false_alarms: Vec<usize>,
}

/// Greedy best-overlap matching: pairs are taken in decreasing overlap
/// ratio, each truth and each prediction used at most once.
pub fn match_segments(predicted: &[Span], truth: &[Span], policy: MatchPolicy) -> Matching {
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for (t, ts) in truth.iter().enumerate() {
        for (p, ps) in predicted.iter().enumerate() {
            if ps.begin > ts.end || ps.end < ts.begin {
                continue;
            }
            let r = ts.overlap_ratio(ps);
            if r >= policy.rho {
                cand.push((r, t, p));
            }
        }
    }
    cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut t_used = vec![false; truth.len()];
    let mut p_used = vec![false; predicted.len()];
    let mut pairs = Vec::new();
    for (_, t, p) in cand {
        if !t_used[t] && !p_used[p] {
            t_used[t] = true;
            p_used[p] = true;
            pairs.push((t, p));
        }
    }
    pairs.sort_unstable();
    Matching {
        pairs,
        misses: (0..truth.len()).filter(|&t| !t_used[t]).collect(),
        false_alarms: (0..predicted.len()).filter(|&p| !p_used[p]).collect(),
    }
}

/// Counts over classes plus `Other` (last row and column). Rows are truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(registry: &ClassRegistry) -> Self {
        let n = registry.len();
        Self {
            classes: registry.iter().map(|c| c.name.clone()).collect(),
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn row_total(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_total(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }

    /// Each row divided by its total; all-zero rows stay zero.
    pub fn normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|r| {
                let t: u64 = r.iter().sum();
                r.iter().map(|&c| if t == 0 { 0.0 } else { c as f64 / t as f64 }).collect()
            })
            .collect()
    }

    /// Row-normalized grid with class-name headers.
    pub fn to_csv(&self) -> String {
        let mut header = vec!["truth".to_owned()];
        header.extend(self.classes.iter().cloned());
        let rows: Vec<Vec<String>> = self
            .normalized()
            .iter()
            .zip(&self.classes)
            .map(|(r, name)| {
                let mut row = vec![name.clone()];
                row.extend(r.iter().map(|&x| num(x)));
                row
            })
            .collect();
        to_csv_string(&header, &rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassScore {
    pub class: String,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub confusion: ConfusionMatrix,
    pub truth_count: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub per_class: Vec<ClassScore>,
    pub macro_f1: f64,
    pub weighted_f1: f64,
}

/// Scores a matching.
///
/// Matched pairs land at (truth, predicted); misses at (truth, Other);
/// unmatched predictions at (Other, predicted) unless they are themselves
/// labelled Other, which is a correct rejection and is not counted.
pub fn score(predicted: &[Span], truth: &[Span], matching: &Matching, registry: &ClassRegistry) -> Result<ScoreReport, EvalError> {
    if truth.is_empty() {
        return Err(EvalError::EmptyTruth);
    }
    let other = registry.other_id();
    let mut cm = ConfusionMatrix::new(registry);
    let mut correct = 0;
    for &(t, p) in &matching.pairs {
        let (ti, pi) = (registry.id_or_other(&truth[t].label), registry.id_or_other(&predicted[p].label));
        cm.add(ti, pi);
        if ti == pi {
            correct += 1;
        }
    }
    for &t in &matching.misses {
        cm.add(registry.id_or_other(&truth[t].label), other);
    }
    for &p in &matching.false_alarms {
        let pi = registry.id_or_other(&predicted[p].label);
        if pi != other {
            cm.add(other, pi);
        }
    }
    let mut support = vec![0usize; registry.len()];
    for s in truth {
        support[registry.id_or_other(&s.label)] += 1;
    }
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let per_class: Vec<ClassScore> = registry
        .iter()
        .map(|c| {
            let tp = cm.counts[c.id][c.id];
            let precision = ratio(tp, cm.col_total(c.id));
            let recall = ratio(tp, cm.row_total(c.id));
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassScore {
                class: c.name.clone(),
                support: support[c.id],
                precision,
                recall,
                f1,
            }
        })
        .collect();
    let scored: Vec<&ClassScore> = per_class.iter().filter(|c| c.support > 0).collect();
    let macro_f1 = scored.iter().map(|c| c.f1).sum::<f64>() / scored.len() as f64;
    let weighted_f1 = scored.iter().map(|c| c.f1 * c.support as f64).sum::<f64>() / truth.len() as f64;
    Ok(ScoreReport {
        confusion: cm,
        truth_count: truth.len(),
        correct,
        accuracy: correct as f64 / truth.len() as f64,
        per_class,
        macro_f1,
        weighted_f1,
    })
}

/// Registry over every label seen in truth or predictions, sorted.
pub fn registry_for(predicted: &[Span], truth: &[Span]) -> ClassRegistry {
    let mut names: Vec<&str> = truth.iter().chain(predicted).map(|s| s.label.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    ClassRegistry::new(names)
}

/// Matches and scores spans against their truth.
pub fn score_spans(predicted: &[Span], truth: &[Span], policy: MatchPolicy) -> Result<ScoreReport, EvalError> {
    let m = match_segments(predicted, truth, policy);
    score(predicted, truth, &m, &registry_for(predicted, truth))
}

/// Matches and scores engine segments (by their corrected label).
pub fn score_segments(segments: &[Segment], test: &LabeledStream, policy: MatchPolicy) -> Result<ScoreReport, EvalError> {
    let predicted: Vec<Span> = segments.iter().map(Span::from).collect();
    score_spans(&predicted, &truth_spans(test), policy)
}

/// Settings of one train/test evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub hhmm: HhmmConfig,
    pub correction: CorrectionConfig,
    pub policy: MatchPolicy,
    /// Drop segments cut off by the end of the stream before scoring.
    pub exclude_truncated: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            hhmm: HhmmConfig::default(),
            correction: CorrectionConfig::default(),
            policy: MatchPolicy::default(),
            exclude_truncated: false,
        }
    }
}

/// Output of one fitted-and-run split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub segments: Vec<Segment>,
    pub report: ScoreReport,
}

/// Trains the engine and densities on `train`, runs and corrects on `test`.
pub fn evaluate_split(
    train: &LabeledStream,
    test: &LabeledStream,
    alphabet: &ObservationAlphabet,
    config: &EvalConfig,
) -> Result<SplitResult, EvalError> {
    let model = hhmm::fit_hhmm(train, alphabet, &config.hhmm)?;
    let classes: Vec<String> = model.classes.iter().map(|c| c.name.clone()).collect();
    let pdfs = correction::fit_pdfs(train, &classes, &config.correction)?;
    let (mut segments, _) = hhmm::run_stream(&model, &test.events)?;
    if config.exclude_truncated {
        segments.retain(|s| !s.truncated);
    }
    correction::correct_segments(&mut segments, &pdfs, &config.correction)?;
    let report = score_segments(&segments, test, config.policy)?;
    Ok(SplitResult { segments, report })
}

/// Event ranges of `k` contiguous folds, cut only where no episode is open,
/// each holding as close to `episodes / k` top-level episodes as the cut
/// points allow.
pub fn fold_ranges(stream: &LabeledStream, k: usize) -> Result<Vec<std::ops::Range<usize>>, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidConfig("need at least 2 folds".into()));
    }
    let tops: Vec<usize> = stream.episodes.iter().filter(|e| e.depth == 1).map(|e| e.begin).collect();
    if tops.len() < k {
        return Err(EvalError::TooFewEpisodes {
            needed: k,
            found: tops.len(),
            folds: k,
        });
    }
    let cuts = stream.cut_points();
    let mut bounds = vec![0];
    for f in 1..k {
        // first top-level episode of fold f, cut just before it
        let first = tops[f * tops.len() / k];
        let cut = cuts
            .iter()
            .copied()
            .filter(|&c| c <= first && c > *bounds.last().expect("non-empty"))
            .max()
            .unwrap_or(first);
        bounds.push(cut);
    }
    bounds.push(stream.len());
    Ok(bounds.windows(2).map(|w| w[0]..w[1]).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldScore {
    pub fold: usize,
    pub train_episodes: usize,
    pub test_episodes: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport {
    pub folds: Vec<FoldScore>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_macro_f1: f64,
    pub std_macro_f1: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// Contiguous k-fold cross-validation; folds run concurrently and are
/// reported in fold order.
pub fn cross_validate(
    stream: &LabeledStream,
    alphabet: &ObservationAlphabet,
    config: &EvalConfig,
    k: usize,
) -> Result<CvReport, EvalError> {
    let ranges = fold_ranges(stream, k)?;
    let results = par::map_range(k, |f| -> Result<FoldScore, EvalError> {
        let test = stream.slice(ranges[f].clone());
        let parts: Vec<LabeledStream> = (0..k).filter(|&g| g != f).map(|g| stream.slice(ranges[g].clone())).collect();
        let train = LabeledStream::concat(&parts)?;
        let r = evaluate_split(&train, &test, alphabet, config)?;
        Ok(FoldScore {
            fold: f,
            train_episodes: train.episodes.len(),
            test_episodes: test.episodes.len(),
            accuracy: r.report.accuracy,
            macro_f1: r.report.macro_f1,
            weighted_f1: r.report.weighted_f1,
        })
    });
    let folds: Vec<FoldScore> = results.into_iter().collect::<Result<_, _>>()?;
    let (mean_accuracy, std_accuracy) = mean_std(&folds.iter().map(|f| f.accuracy).collect::<Vec<_>>());
    let (mean_macro_f1, std_macro_f1) = mean_std(&folds.iter().map(|f| f.macro_f1).collect::<Vec<_>>());
    Ok(CvReport {
        folds,
        mean_accuracy,
        std_accuracy,
        mean_macro_f1,
        std_macro_f1,
    })
}

/// One line of a model comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub model: String,
    pub dataset: String,
    pub accuracy: f64,
    pub f1: f64,
}

/// `model,dataset,accuracy,f1` table.
pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let header: Vec<String> = ["model", "dataset", "accuracy", "f1"].iter().map(|s| s.to_string()).collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.model.clone(), r.dataset.clone(), num(r.accuracy), num(r.f1)])
        .collect();
    to_csv_string(&header, &body)
}

/// Turns per-event class predictions into spans: maximal runs of one named
/// class. `Other` runs are dropped.
pub fn runs_to_spans(predictions: &[String]) -> Vec<Span> {
    let mut out: Vec<Span> = Vec::new();
    for (i, p) in predictions.iter().enumerate() {
        match out.last_mut() {
            Some(s) if s.end + 1 == i && &s.label == p => s.end = i,
            _ if p == OTHER => {}
            _ => out.push(Span::new(i, i, p.clone())),
        }
    }
    out
}
