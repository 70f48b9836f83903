//! Hierarchy and parameter set of the two-level model.
//!
//! The root has three abstract children: the begin detector, the ongoing
//! classifier and the end detector. Every abstract node owns a prior over
//! its children, horizontal transitions between them and a termination
//! probability per child. Production nodes carry an emission row over the
//! observation columns. All values here are linear probabilities.

use serde::{Deserialize, Serialize};

use super::HhmmError;

pub const ROOT: usize = 0;
pub const BEGIN_DETECTOR: usize = 1;
pub const ONGOING_CLASSIFIER: usize = 2;
pub const END_DETECTOR: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeKind {
    Abstract { children: Vec<usize> },
    Production { emission: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HhmmNode {
    pub name: String,
    pub level: usize,
    #[serde(flatten)]
    pub kind: NodeKind,
}

/// Vertical prior, horizontal transitions and termination for the children
/// of one abstract node, in child order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChildDynamics {
    pub node: usize,
    pub prior: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    pub termination: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HhmmTheta {
    /// Number of abstract levels below and including the root.
    pub depth: usize,
    pub nodes: Vec<HhmmNode>,
    pub dynamics: Vec<ChildDynamics>,
}

impl HhmmTheta {
    pub fn children(&self, node: usize) -> &[usize] {
        match &self.nodes[node].kind {
            NodeKind::Abstract { children } => children,
            NodeKind::Production { .. } => &[],
        }
    }

    /// Checks the structural invariants and that every distribution sums
    /// to one within `tol`.
    pub fn validate(&self, tol: f64) -> Result<(), HhmmError> {
        let bad = |m: String| Err(HhmmError::InvalidTheta(m));
        let root = self.children(ROOT);
        if root != [BEGIN_DETECTOR, ONGOING_CLASSIFIER, END_DETECTOR] {
            return bad("root must have exactly the three detector children".into());
        }
        let mut seen = vec![false; self.nodes.len()];
        for (id, n) in self.nodes.iter().enumerate() {
            match &n.kind {
                NodeKind::Abstract { children } => {
                    if children.is_empty() {
                        return bad(format!("{} has no children", n.name));
                    }
                    if id != ROOT && !children.iter().any(|&c| matches!(self.nodes[c].kind, NodeKind::Production { .. })) {
                        return bad(format!("{} has no production child", n.name));
                    }
                    for &c in children {
                        if c >= self.nodes.len() || seen[c] || c == ROOT {
                            return bad(format!("child sets overlap at node {c}"));
                        }
                        seen[c] = true;
                    }
                }
                NodeKind::Production { emission } => {
                    check_sum(emission, tol, &format!("emission of {}", n.name))?;
                }
            }
        }
        for (id, n) in self.nodes.iter().enumerate() {
            if let NodeKind::Abstract { children } = &n.kind {
                let d = self
                    .dynamics
                    .iter()
                    .find(|d| d.node == id)
                    .ok_or_else(|| HhmmError::InvalidTheta(format!("{} has no dynamics", n.name)))?;
                let k = children.len();
                if d.prior.len() != k || d.transition.len() != k || d.termination.len() != k {
                    return bad(format!("dynamics of {} have the wrong shape", n.name));
                }
                check_sum(&d.prior, tol, &format!("prior of {}", n.name))?;
                for (i, row) in d.transition.iter().enumerate() {
                    if row.len() != k {
                        return bad(format!("transition row {i} of {} has the wrong width", n.name));
                    }
                    let mut full = row.clone();
                    full.push(d.termination[i]);
                    check_sum(&full, tol, &format!("row {i} of {}", n.name))?;
                }
            }
        }
        Ok(())
    }
}

fn check_sum(v: &[f64], tol: f64, what: &str) -> Result<(), HhmmError> {
    if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(HhmmError::InvalidTheta(format!("{what} has a negative or non-finite entry")));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > tol {
        return Err(HhmmError::InvalidTheta(format!("{what} sums to {s}")));
    }
    Ok(())
}

/// One child chain of production states, entered at the first and left to
/// right, terminating after the last.
pub(crate) fn left_to_right(node: usize, k: usize) -> ChildDynamics {
    let mut prior = vec![0.0; k];
    prior[0] = 1.0;
    let mut transition = vec![vec![0.0; k]; k];
    let mut termination = vec![0.0; k];
    for i in 0..k {
        if i + 1 < k {
            transition[i][i + 1] = 1.0;
        } else {
            termination[i] = 1.0;
        }
    }
    ChildDynamics {
        node,
        prior,
        transition,
        termination,
    }
}

/// Exponentiates and renormalizes a log row so it sums to one in linear
/// space up to rounding.
pub(crate) fn linear(row: &[f64]) -> Vec<f64> {
    let v: Vec<f64> = row.iter().map(|x| x.exp()).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}
