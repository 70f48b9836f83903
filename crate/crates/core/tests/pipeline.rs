use proptest::prelude::*;
use streamhar::baselines::{Baseline, BaselineKind, BaselineParams};
use streamhar::correction::{fit_pdfs, sweep_alpha, CorrectionConfig};
use streamhar::eval::{
    cross_validate, evaluate_split, fold_ranges, match_segments, registry_for, score, EvalConfig, EvalError,
    MatchPolicy, Span,
};
use streamhar::events::{generate_synthetic, presets};
use streamhar::hhmm::{fit_hhmm, run_stream};
use streamhar::{HhmmConfig, ObservationAlphabet};

#[test]
fn two_folds_on_ten_episodes() {
    let s = generate_synthetic(&presets::home_a(), 10, 1).unwrap();
    let ranges = fold_ranges(&s, 2).unwrap();
    assert_eq!(ranges.len(), 2);
    assert_eq!((ranges[0].start, ranges[1].end), (0, s.len()));
    for r in &ranges {
        let n = s.slice(r.clone()).episodes.len();
        assert!((4..=6).contains(&n), "{n}");
    }
}

#[test]
fn fold_sizes_are_balanced() {
    let s = generate_synthetic(&presets::home_b(), 103, 2).unwrap();
    for k in [2, 3, 5, 7] {
        let counts: Vec<usize> = fold_ranges(&s, k)
            .unwrap()
            .into_iter()
            .map(|r| s.slice(r).episodes.len())
            .collect();
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(hi - lo <= 1, "k={k}: {counts:?}");
        assert_eq!(counts.iter().sum::<usize>(), s.episodes.len());
    }
}

#[test]
fn too_few_episodes() {
    let s = generate_synthetic(&presets::home_a(), 3, 3).unwrap();
    assert!(matches!(fold_ranges(&s, 4), Err(EvalError::TooFewEpisodes { .. })));
}

#[test]
fn cross_validation_on_a_separable_home() {
    let s = generate_synthetic(&presets::home_a(), 450, 4).unwrap();
    let alphabet = ObservationAlphabet::build([&s]).unwrap();
    let cv = cross_validate(&s, &alphabet, &EvalConfig::default(), 3).unwrap();
    assert_eq!(cv.folds.len(), 3);
    assert!(cv.mean_accuracy >= 0.9, "{cv:?}");
    let again = cross_validate(&s, &alphabet, &EvalConfig::default(), 3).unwrap();
    assert_eq!(again, cv);
}

#[test]
fn diagonal_accuracy_matches_direct_accuracy() {
    let train = generate_synthetic(&presets::home_b(), 300, 5).unwrap();
    let test = generate_synthetic(&presets::home_b(), 120, 6).unwrap();
    let alphabet = ObservationAlphabet::build([&train]).unwrap();
    let r = evaluate_split(&train, &test, &alphabet, &EvalConfig::default()).unwrap().report;
    let c = &r.confusion;
    let named = c.classes.len() - 1;
    let diagonal: u64 = (0..named).map(|i| c.counts[i][i]).sum();
    let rows: u64 = (0..named).map(|i| c.row_total(i)).sum();
    assert_eq!(rows as usize, test.episodes.len());
    assert!((diagonal as f64 / rows as f64 - r.accuracy).abs() < 1e-12);
}

#[test]
fn correction_helps_the_confusable_pair() {
    let spec = presets::confusable_pair();
    let train = generate_synthetic(&spec, 400, 7).unwrap();
    let test = generate_synthetic(&spec, 200, 8).unwrap();
    let alphabet = ObservationAlphabet::build([&train]).unwrap();
    let model = fit_hhmm(&train, &alphabet, &HhmmConfig::default()).unwrap();
    let (segs, _) = run_stream(&model, &test.events).unwrap();
    let grid = [0.0, 0.02, 0.05, 0.1, 0.5, 1.0, 3.0];
    let sweep = sweep_alpha("pair", &train, &segs, &test, &grid, &CorrectionConfig::default(), MatchPolicy::default()).unwrap();
    assert!(sweep.rows.windows(2).all(|w| w[0].other_count <= w[1].other_count));
    assert!(sweep.best().unwrap().accuracy >= sweep.rows[0].accuracy + 0.03);
    let csv = sweep.to_csv();
    assert_eq!(csv.lines().next().unwrap().split(',').count(), grid.len() + 1);
}

#[test]
fn pdfs_cover_every_model_class() {
    let train = generate_synthetic(&presets::home_a(), 200, 9).unwrap();
    let alphabet = ObservationAlphabet::build([&train]).unwrap();
    let model = fit_hhmm(&train, &alphabet, &HhmmConfig::default()).unwrap();
    let classes: Vec<String> = model.classes.iter().map(|c| c.name.clone()).collect();
    let pdfs = fit_pdfs(&train, &classes, &CorrectionConfig::default()).unwrap();
    for c in &classes {
        let p = pdfs.get(c).unwrap();
        let mass: f64 = p.masses().iter().sum();
        assert!((mass - 1.0).abs() < 1e-9);
    }
}

#[test]
fn baselines_score_on_the_same_scale() {
    let train = generate_synthetic(&presets::home_a(), 200, 10).unwrap();
    let test = generate_synthetic(&presets::home_a(), 80, 11).unwrap();
    let alphabet = ObservationAlphabet::build([&train]).unwrap();
    let truth = streamhar::eval::truth_spans(&test);
    for k in BaselineKind::ALL {
        let b = Baseline::fit(k, &train, &alphabet, &BaselineParams::default()).unwrap();
        let spans = b.predict_spans(&test.events).unwrap();
        assert!(spans.windows(2).all(|w| w[0].end < w[1].begin), "{k}");
        let rep = streamhar::eval::score_spans(&spans, &truth, MatchPolicy::default()).unwrap();
        assert!((0.0..=1.0).contains(&rep.accuracy));
    }
}

fn spans() -> impl Strategy<Value = Vec<Span>> {
    prop::collection::vec((0usize..60, 1usize..12, 0usize..3), 0..8).prop_map(|v| {
        v.into_iter()
            .map(|(b, len, c)| Span::new(b, b + len - 1, ["A", "B", "C"][c]))
            .collect()
    })
}

proptest! {
    #[test]
    fn higher_rho_never_matches_more(pred in spans(), truth in spans(), a in 0.05f64..1.0, b in 0.05f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let m_lo = match_segments(&pred, &truth, MatchPolicy::new(lo).unwrap());
        let m_hi = match_segments(&pred, &truth, MatchPolicy::new(hi).unwrap());
        prop_assert!(m_hi.pairs.len() <= m_lo.pairs.len());
    }

    #[test]
    fn score_ignores_match_order(pred in spans(), truth in spans(), seed in any::<u64>()) {
        prop_assume!(!truth.is_empty());
        let reg = registry_for(&pred, &truth);
        let m = match_segments(&pred, &truth, MatchPolicy::default());
        let a = score(&pred, &truth, &m, &reg).unwrap();
        let mut shuffled = m.clone();
        let n = shuffled.pairs.len();
        if n > 1 {
            shuffled.pairs.rotate_left((seed % n as u64) as usize);
            shuffled.pairs.reverse();
        }
        prop_assert_eq!(score(&pred, &truth, &shuffled, &reg).unwrap(), a);
    }
}
