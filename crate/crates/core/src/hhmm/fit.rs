use std::collections::BTreeMap;

use log::warn;

use super::chain::ChainScorer;
use super::engine::{run_with, Thresholds};
use super::sweep::boundary_f1;
use super::theta::{left_to_right, linear, ChildDynamics, HhmmNode, HhmmTheta, NodeKind};
use super::theta::{BEGIN_DETECTOR, END_DETECTOR, ONGOING_CLASSIFIER, ROOT};
use super::{ClassModel, HhmmConfig, HhmmError, HhmmModel, Margins, FALLBACK_MARGINS, MARGIN_GRID};
use crate::events::{ClassRegistry, LabeledStream, ObservationAlphabet, Symbol};
use crate::hmm::{fit_supervised, LabeledSequence};
use crate::par;

struct ClassData {
    episodes: Vec<Vec<usize>>,
    nested: bool,
}

/// Fits every detector and body model by smoothed maximum likelihood and
/// assembles the parameter set. With [`Margins::Auto`] the two margins are
/// chosen on the trailing `holdout` fraction of `train` and the model fitted
/// on the rest is returned.
pub fn fit_hhmm(train: &LabeledStream, alphabet: &ObservationAlphabet, config: &HhmmConfig) -> Result<HhmmModel, HhmmError> {
    config.validate()?;
    for e in &train.events {
        if alphabet.index_of(&Symbol::of(e)).is_none() {
            return Err(HhmmError::AlphabetMismatch {
                sensor: e.sensor_id.clone(),
                value: e.value.clone(),
            });
        }
    }
    match config.margins {
        Margins::Fixed { begin, end } => fit_fixed(train, alphabet, config, begin, end),
        Margins::Auto => match tune_margins(train, alphabet, config)? {
            Some(model) => Ok(model),
            None => fit_fixed(train, alphabet, config, FALLBACK_MARGINS.0, FALLBACK_MARGINS.1),
        },
    }
}

/// Fits on the leading part of `train` and picks margins on the rest. The
/// returned model is the held-in fit.
fn tune_margins(train: &LabeledStream, alphabet: &ObservationAlphabet, config: &HhmmConfig) -> Result<Option<HhmmModel>, HhmmError> {
    let n = train.len();
    let target = ((1.0 - config.holdout) * n as f64).round() as usize;
    let cut = train
        .cut_points()
        .into_iter()
        .filter(|&c| c > 0 && c < n)
        .min_by_key(|&c| c.abs_diff(target));
    let Some(cut) = cut else {
        warn!("no cut point for a held-out slice; using fallback margins");
        return Ok(None);
    };
    let head = train.slice(0..cut);
    let tail = train.slice(cut..n);
    if tail.episodes.is_empty() {
        warn!("held-out slice has no episodes; using fallback margins");
        return Ok(None);
    }
    let model = match fit_fixed(&head, alphabet, config, FALLBACK_MARGINS.0, FALLBACK_MARGINS.1) {
        Ok(m) => m,
        Err(HhmmError::InsufficientTraining { .. }) => {
            warn!("held-in slice too small; using fallback margins");
            return Ok(None);
        }
        Err(e) => return Err(e),
    };
    let truth: Vec<(usize, usize)> = tail.episodes.iter().map(|e| (e.begin, e.end)).collect();
    let grid: Vec<(f64, f64)> = MARGIN_GRID
        .iter()
        .flat_map(|&b| MARGIN_GRID.iter().map(move |&e| (b, e)))
        .collect();
    let scores = par::map(&grid, |&(b, e)| {
        let th = Thresholds { begin: b, end: e };
        match run_with(&model, th, &tail.events) {
            Ok((segments, _)) => {
                let spans: Vec<(usize, usize)> = segments.iter().map(|s| (s.begin_index, s.end_index)).collect();
                boundary_f1(&spans, &truth, config.beta)
            }
            Err(_) => 0.0,
        }
    });
    // mean over the 3×3 neighbourhood, off-grid cells count as zero
    let g = MARGIN_GRID.len() as isize;
    let neighbourhood = |i: usize| {
        let (r, c) = (i as isize / g, i as isize % g);
        let mut sum = 0.0;
        for dr in -1..=1 {
            for dc in -1..=1 {
                let (rr, cc) = (r + dr, c + dc);
                if (0..g).contains(&rr) && (0..g).contains(&cc) {
                    sum += scores[(rr * g + cc) as usize];
                }
            }
        }
        sum / 9.0
    };
    let mut best = (0, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (i, &s) in scores.iter().enumerate() {
        let nb = neighbourhood(i);
        if nb > best.2 || (nb == best.2 && s > best.1) {
            best = (i, s, nb);
        }
    }
    let (b, e) = grid[best.0];
    Ok(Some(model.with_margins(b, e)))
}

/// Fits with the given margins.
pub(crate) fn fit_fixed(
    train: &LabeledStream,
    alphabet: &ObservationAlphabet,
    config: &HhmmConfig,
    begin_margin: f64,
    end_margin: f64,
) -> Result<HhmmModel, HhmmError> {
    let beta = config.beta;
    let kappa = config.kappa;
    let m = alphabet.n_columns();
    let symbols = alphabet.encode_stream(train);

    let mut by_class: BTreeMap<String, ClassData> = BTreeMap::new();
    for (k, ep) in train.episodes.iter().enumerate() {
        let own: Vec<usize> = train.own_indices(k).into_iter().map(|i| symbols[i]).collect();
        if own.len() < beta + 1 {
            continue;
        }
        by_class
            .entry(ep.class.clone())
            .or_insert_with(|| ClassData {
                episodes: Vec::new(),
                nested: false,
            });
        let d = by_class.get_mut(&ep.class).expect("inserted above");
        d.episodes.push(own);
        d.nested |= ep.parent.is_some();
    }
    let mut dropped = Vec::new();
    for name in train.class_names() {
        if !by_class.contains_key(&name) {
            warn!("dropping class {name}: no training episode with at least {} events", beta + 1);
            dropped.push(name);
        }
    }
    if by_class.is_empty() {
        return Err(HhmmError::InsufficientTraining { min_len: beta + 1 });
    }

    let names: Vec<String> = by_class.keys().cloned().collect();
    let data: Vec<&ClassData> = by_class.values().collect();
    let classes: Vec<Result<ClassModel, HhmmError>> = par::map_range(names.len(), |c| {
        let eps = &data[c].episodes;
        let begin = ChainScorer::fit(beta, m, kappa, eps.iter().map(|e| &e[..beta]));
        let end = ChainScorer::fit(beta, m, kappa, eps.iter().map(|e| &e[e.len() - beta..]));
        let continuation = ChainScorer::fit(
            beta,
            m,
            kappa,
            eps.iter().flat_map(|e| (1..e.len() - beta).map(move |i| &e[i..i + beta])),
        );
        let seqs: Vec<LabeledSequence> = eps
            .iter()
            .map(|e| LabeledSequence {
                symbols: e.clone(),
                states: (0..e.len()).map(|i| config.body_states * i / e.len()).collect(),
            })
            .collect();
        let body = fit_supervised(&seqs, config.body_states, m, kappa)?;
        Ok(ClassModel {
            name: names[c].clone(),
            episodes: eps.len(),
            own_events: eps.iter().map(Vec::len).sum(),
            interrupts: data[c].nested,
            begin,
            end,
            continuation,
            body,
        })
    });
    let classes = classes.into_iter().collect::<Result<Vec<_>, _>>()?;

    // windows lying wholly outside every episode
    let mut inside = vec![false; symbols.len()];
    for ep in train.episodes.iter().filter(|e| e.depth == 1) {
        for f in &mut inside[ep.range()] {
            *f = true;
        }
    }
    let background = ChainScorer::fit(
        beta,
        m,
        kappa,
        (0..symbols.len().saturating_sub(beta - 1))
            .filter(|&i| inside[i..i + beta].iter().all(|f| !f))
            .map(|i| &symbols[i..i + beta]),
    );

    let registry = ClassRegistry::new(&names);
    let theta = assemble_theta(&classes, beta, m, kappa);
    theta.validate(1e-9)?;
    Ok(HhmmModel {
        beta,
        kappa,
        body_states: config.body_states,
        begin_margin,
        end_margin,
        alphabet: alphabet.clone(),
        registry,
        classes,
        background,
        dropped,
        theta,
    })
}

fn assemble_theta(classes: &[ClassModel], beta: usize, m: usize, kappa: f64) -> HhmmTheta {
    let mut pooled_begin = ChainScorer::new(beta, m, kappa);
    let mut pooled_end = ChainScorer::new(beta, m, kappa);
    for c in classes {
        pooled_begin.merge(&c.begin);
        pooled_end.merge(&c.end);
    }

    let mut nodes = vec![
        HhmmNode {
            name: "root".into(),
            level: 0,
            kind: NodeKind::Abstract {
                children: vec![BEGIN_DETECTOR, ONGOING_CLASSIFIER, END_DETECTOR],
            },
        },
        abstract_node("begin_detector"),
        abstract_node("ongoing_classifier"),
        abstract_node("end_detector"),
    ];
    let mut dynamics = vec![ChildDynamics {
        node: ROOT,
        prior: vec![1.0, 0.0, 0.0],
        transition: vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 0.0]],
        termination: vec![0.0, 0.0, 1.0],
    }];

    let mut add_positional = |nodes: &mut Vec<HhmmNode>, parent: usize, prefix: &str, chain: &ChainScorer| {
        let ids: Vec<usize> = (0..beta)
            .map(|j| {
                nodes.push(HhmmNode {
                    name: format!("{prefix}_{j}"),
                    level: 2,
                    kind: NodeKind::Production {
                        emission: chain.position_marginal(j),
                    },
                });
                nodes.len() - 1
            })
            .collect();
        set_children(nodes, parent, ids);
        dynamics.push(left_to_right(parent, beta));
    };
    add_positional(&mut nodes, BEGIN_DETECTOR, "begin", &pooled_begin);
    add_positional(&mut nodes, END_DETECTOR, "end", &pooled_end);

    let total_eps: usize = classes.iter().map(|c| c.episodes).sum();
    let width: usize = classes.iter().map(|c| c.body.n_states()).sum();
    let mut ids = Vec::with_capacity(width);
    let mut prior = Vec::with_capacity(width);
    let mut transition = vec![vec![0.0; width]; width];
    let mut termination = Vec::with_capacity(width);
    let mut offset = 0;
    for c in classes {
        let k = c.body.n_states();
        let freq = c.episodes as f64 / total_eps as f64;
        let stop = c.episodes as f64 / c.own_events as f64;
        let body_prior = linear(c.body.prior());
        for s in 0..k {
            nodes.push(HhmmNode {
                name: format!("{}_{s}", c.name),
                level: 2,
                kind: NodeKind::Production {
                    emission: linear(&c.body.emission()[s]),
                },
            });
            ids.push(nodes.len() - 1);
            prior.push(freq * body_prior[s]);
            let row = linear(&c.body.transition()[s]);
            for (t, p) in row.iter().enumerate() {
                transition[offset + s][offset + t] = (1.0 - stop) * p;
            }
            termination.push(stop);
        }
        offset += k;
    }
    set_children(&mut nodes, ONGOING_CLASSIFIER, ids);
    dynamics.push(ChildDynamics {
        node: ONGOING_CLASSIFIER,
        prior,
        transition,
        termination,
    });
    dynamics.sort_by_key(|d| d.node);

    HhmmTheta {
        depth: 2,
        nodes,
        dynamics,
    }
}

fn abstract_node(name: &str) -> HhmmNode {
    HhmmNode {
        name: name.into(),
        level: 1,
        kind: NodeKind::Abstract { children: Vec::new() },
    }
}

fn set_children(nodes: &mut [HhmmNode], parent: usize, ids: Vec<usize>) {
    nodes[parent].kind = NodeKind::Abstract { children: ids };
}
