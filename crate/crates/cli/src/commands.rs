use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use streamhar::baselines::{Baseline, BaselineKind};
use streamhar::correction::{correct_label, fit_pdfs, sweep_alpha, CorrectionConfig, PdfSet, ALPHA_GRID};
use streamhar::eval::{
    cross_validate, evaluate_split, fold_ranges, score_spans, summary_csv, truth_spans, Span, SummaryRow,
};
use streamhar::events::{generate_synthetic, parse_event, parse_stream, presets};
use streamhar::hhmm::{fit_hhmm, run_outputs, run_stream, sweep_beta};
use streamhar::model::ModelDocument;
use streamhar::{EngineOutput, EngineState, HhmmModel, LabeledStream, ObservationAlphabet, Strictness};

use crate::config::RunConfig;
use crate::Failure;

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, Failure> {
    p.as_deref().ok_or_else(|| Failure::Config(format!("--{flag} is required")))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Failure::io(path, e))
}

/// Writes to `--out` when given, otherwise to standard output.
fn emit(cfg: &RunConfig, text: &str) -> Result<(), Failure> {
    match &cfg.paths.out {
        Some(p) => write_text(p, text),
        None => io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Io(format!("stdout: {e}"))),
    }
}

fn read_stream(path: &Path, strictness: Strictness) -> Result<LabeledStream, Failure> {
    let text = read_text(path)?;
    let s = parse_stream(text.lines(), strictness)?;
    if s.skipped_lines > 0 || s.dropped_annotations > 0 {
        log::warn!(
            "{}: skipped {} malformed lines and {} unpaired annotations",
            path.display(),
            s.skipped_lines,
            s.dropped_annotations
        );
    }
    Ok(s)
}

fn load_model(cfg: &RunConfig) -> Result<ModelDocument, Failure> {
    let path = required(&cfg.paths.model, "model")?;
    Ok(ModelDocument::from_json(&read_text(path)?)?)
}

/// Correction settings of a model, with α replaced when one was given.
fn correction_for(cfg: &RunConfig, doc: &ModelDocument) -> CorrectionConfig {
    let mut c = doc.correction.clone();
    if let Some(a) = cfg.correction.alpha {
        c.alpha = a;
    }
    c
}

fn dataset_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
}

/// Train and test streams; without `--test`, the training stream is split
/// at the cut point nearest 70 % of its length.
fn split(cfg: &RunConfig) -> Result<(LabeledStream, LabeledStream, String), Failure> {
    let train_path = required(&cfg.paths.train, "train")?;
    let train = read_stream(train_path, cfg.strictness())?;
    if let Some(p) = &cfg.paths.test {
        return Ok((train, read_stream(p, cfg.strictness())?, dataset_name(p)));
    }
    let target = train.len() * 7 / 10;
    let cut = train
        .cut_points()
        .into_iter()
        .filter(|&c| c > 0 && c < train.len())
        .min_by_key(|&c| c.abs_diff(target))
        .ok_or_else(|| Failure::Config("no --test given and the training stream cannot be split".into()))?;
    let name = dataset_name(train_path);
    Ok((train.slice(0..cut), train.slice(cut..train.len()), name))
}

pub fn synth(cfg: &RunConfig) -> Result<(), Failure> {
    let name = &cfg.synth.profile;
    let spec = presets::by_name(name).ok_or_else(|| {
        Failure::Config(format!("unknown profile '{name}', expected one of {}", presets::NAMES.join(", ")))
    })?;
    let stream = generate_synthetic(&spec, cfg.synth.episodes, cfg.seed)?;
    log::info!("{} events, {} episodes", stream.len(), stream.episodes.len());
    emit(cfg, &stream.to_text())
}

pub fn train(cfg: &RunConfig) -> Result<(), Failure> {
    let out = required(&cfg.paths.model, "model")?;
    let train = read_stream(required(&cfg.paths.train, "train")?, cfg.strictness())?;
    let alphabet = ObservationAlphabet::build([&train])?;
    let model = fit_hhmm(&train, &alphabet, &cfg.hhmm_config())?;
    let classes: Vec<String> = model.classes.iter().map(|c| c.name.clone()).collect();
    let correction = cfg.correction_config();
    let pdfs = fit_pdfs(&train, &classes, &correction)?;
    log::info!(
        "{} classes, margins {} / {}",
        classes.len(),
        model.begin_margin,
        model.end_margin
    );
    write_text(out, &ModelDocument::new(model, pdfs, correction).to_json())
}

fn corrected(mut o: EngineOutput, pdfs: &PdfSet, c: &CorrectionConfig) -> Result<EngineOutput, Failure> {
    if let EngineOutput::SegmentComplete { segment } = &mut o {
        segment.label = correct_label(segment, pdfs, c)?;
    }
    Ok(o)
}

fn json_line(o: &impl Serialize) -> String {
    let mut s = serde_json::to_string(o).expect("outputs serialize");
    s.push('\n');
    s
}

pub fn run(cfg: &RunConfig) -> Result<(), Failure> {
    let doc = load_model(cfg)?;
    let c = correction_for(cfg, &doc);
    let test = read_stream(required(&cfg.paths.test, "test")?, cfg.strictness())?;
    let mut text = String::new();
    for o in run_outputs(&doc.hhmm, &test.events)? {
        text.push_str(&json_line(&corrected(o, &doc.pdfs, &c)?));
    }
    emit(cfg, &text)
}

/// Reads events from standard input and writes every output of an event
/// before reading the next line.
pub fn run_live(cfg: &RunConfig) -> Result<(), Failure> {
    let doc = load_model(cfg)?;
    let c = correction_for(cfg, &doc);
    let model: &HhmmModel = &doc.hhmm;
    let stdout_err = |e: io::Error| Failure::Io(format!("stdout: {e}"));
    let mut out = io::stdout().lock();
    let mut state = EngineState::new();
    for (i, line) in io::stdin().lock().lines().enumerate() {
        let line = line.map_err(|e| Failure::Io(format!("stdin: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let event = match parse_event(&line, i + 1) {
            Ok(e) => e,
            Err(e) if !cfg.strict => {
                log::warn!("skipping: {e}");
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        for o in state.step(model, &event)? {
            out.write_all(json_line(&corrected(o, &doc.pdfs, &c)?).as_bytes()).map_err(stdout_err)?;
        }
        out.flush().map_err(stdout_err)?;
    }
    for o in state.finish(model)? {
        out.write_all(json_line(&corrected(o, &doc.pdfs, &c)?).as_bytes()).map_err(stdout_err)?;
    }
    out.flush().map_err(stdout_err)
}

pub fn correct(cfg: &RunConfig, input: Option<&Path>) -> Result<(), Failure> {
    let doc = load_model(cfg)?;
    let c = correction_for(cfg, &doc);
    let text = match input {
        Some(p) => read_text(p)?,
        None => io::read_to_string(io::stdin()).map_err(|e| Failure::Io(format!("stdin: {e}")))?,
    };
    let mut out = String::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let o: EngineOutput =
            serde_json::from_str(line).map_err(|e| Failure::domain("correct", format!("line {}: {e}", i + 1)))?;
        out.push_str(&json_line(&corrected(o, &doc.pdfs, &c)?));
    }
    emit(cfg, &out)
}

#[derive(Serialize)]
struct BaselineSegment<'a> {
    model: &'a str,
    begin_index: usize,
    end_index: usize,
    label: &'a str,
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum BaselineLine<'a> {
    SegmentComplete { segment: BaselineSegment<'a> },
}

fn baseline_jsonl(kind: BaselineKind, spans: &[Span]) -> String {
    spans
        .iter()
        .map(|s| {
            json_line(&BaselineLine::SegmentComplete {
                segment: BaselineSegment {
                    model: kind.name(),
                    begin_index: s.begin,
                    end_index: s.end,
                    label: &s.label,
                },
            })
        })
        .collect()
}

pub fn evaluate(cfg: &RunConfig) -> Result<(), Failure> {
    let kinds = cfg.baselines()?;
    let params = cfg.baseline_params();
    let train_path = required(&cfg.paths.train, "train")?;
    let train = read_stream(train_path, cfg.strictness())?;
    let mut rows = Vec::new();
    let mut files: Vec<(String, String)> = Vec::new();
    if let Some(test_path) = &cfg.paths.test {
        let test = read_stream(test_path, cfg.strictness())?;
        let dataset = dataset_name(test_path);
        let alphabet = ObservationAlphabet::build([&train])?;
        let r = evaluate_split(&train, &test, &alphabet, &cfg.eval_config())?;
        rows.push(SummaryRow {
            model: "HHMM".into(),
            dataset: dataset.clone(),
            accuracy: r.report.accuracy,
            f1: r.report.macro_f1,
        });
        files.push(("confusion.csv".into(), r.report.confusion.to_csv()));
        let truth = truth_spans(&test);
        for k in kinds {
            let b = Baseline::fit(k, &train, &alphabet, &params)?;
            let spans = b.predict_spans(&test.events)?;
            let rep = score_spans(&spans, &truth, cfg.policy())?;
            rows.push(SummaryRow {
                model: k.name().into(),
                dataset: dataset.clone(),
                accuracy: rep.accuracy,
                f1: rep.macro_f1,
            });
            files.push((format!("baseline_{}.jsonl", k.name().to_lowercase()), baseline_jsonl(k, &spans)));
        }
    } else {
        let dataset = dataset_name(train_path);
        let k = cfg.eval.folds;
        let alphabet = ObservationAlphabet::build([&train])?;
        let cv = cross_validate(&train, &alphabet, &cfg.eval_config(), k)?;
        rows.push(SummaryRow {
            model: "HHMM".into(),
            dataset: dataset.clone(),
            accuracy: cv.mean_accuracy,
            f1: cv.mean_macro_f1,
        });
        let mut folds_csv = String::from("model,fold,train_episodes,test_episodes,accuracy,macro_f1\n");
        for f in &cv.folds {
            folds_csv.push_str(&format!(
                "HHMM,{},{},{},{},{}\n",
                f.fold, f.train_episodes, f.test_episodes, f.accuracy, f.macro_f1
            ));
        }
        let ranges = fold_ranges(&train, k)?;
        for kind in kinds {
            let (mut acc, mut f1) = (0.0, 0.0);
            for (f, r) in ranges.iter().enumerate() {
                let test = train.slice(r.clone());
                let parts: Vec<LabeledStream> =
                    (0..k).filter(|&g| g != f).map(|g| train.slice(ranges[g].clone())).collect();
                let fold_train = LabeledStream::concat(&parts)?;
                let b = Baseline::fit(kind, &fold_train, &alphabet, &params)?;
                let rep = score_spans(&b.predict_spans(&test.events)?, &truth_spans(&test), cfg.policy())?;
                folds_csv.push_str(&format!(
                    "{},{f},{},{},{},{}\n",
                    kind.name(),
                    fold_train.episodes.len(),
                    test.episodes.len(),
                    rep.accuracy,
                    rep.macro_f1
                ));
                acc += rep.accuracy;
                f1 += rep.macro_f1;
            }
            rows.push(SummaryRow {
                model: kind.name().into(),
                dataset: dataset.clone(),
                accuracy: acc / k as f64,
                f1: f1 / k as f64,
            });
        }
        files.push(("folds.csv".into(), folds_csv));
    }
    let summary = summary_csv(&rows);
    if let Some(dir) = &cfg.paths.out {
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
        write_text(&dir.join("summary.csv"), &summary)?;
        for (name, text) in &files {
            write_text(&dir.join(name), text)?;
        }
    }
    io::stdout()
        .lock()
        .write_all(summary.as_bytes())
        .map_err(|e| Failure::Io(format!("stdout: {e}")))
}

fn parse_candidates<T: std::str::FromStr>(raw: &[String], default: Vec<T>) -> Result<Vec<T>, Failure> {
    if raw.is_empty() {
        return Ok(default);
    }
    raw.iter()
        .map(|s| s.trim().parse().map_err(|_| Failure::Config(format!("bad candidate '{s}'"))))
        .collect()
}

pub fn tune_beta(cfg: &RunConfig, raw: &[String]) -> Result<(), Failure> {
    let candidates: Vec<usize> = parse_candidates(raw, vec![2, 3, 4, 5])?;
    if candidates.iter().any(|&b| b < 2) {
        return Err(Failure::Config("beta candidates must be at least 2".into()));
    }
    let (train, test, dataset) = split(cfg)?;
    let alphabet = ObservationAlphabet::build([&train])?;
    let sweep = sweep_beta(&dataset, &train, &test, &alphabet, &candidates, &cfg.hhmm_config())?;
    emit(cfg, &sweep.to_csv())
}

pub fn tune_alpha(cfg: &RunConfig, raw: &[String]) -> Result<(), Failure> {
    let candidates: Vec<f64> = parse_candidates(raw, ALPHA_GRID.to_vec())?;
    if candidates.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
        return Err(Failure::Config("alpha candidates must be finite and >= 0".into()));
    }
    let (train, test, dataset) = split(cfg)?;
    let alphabet = ObservationAlphabet::build([&train])?;
    let model = fit_hhmm(&train, &alphabet, &cfg.hhmm_config())?;
    let (segments, _) = run_stream(&model, &test.events)?;
    let sweep = sweep_alpha(
        &dataset,
        &train,
        &segments,
        &test,
        &candidates,
        &cfg.correction_config(),
        cfg.policy(),
    )?;
    emit(cfg, &sweep.to_csv())
}
