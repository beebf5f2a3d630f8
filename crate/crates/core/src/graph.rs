//! Per-target family graphs: relative enumeration, kinship, edges, features.
//!
//! For each eligible target (both parents present in the population) we
//! enumerate relatives up to third degree, then assemble a graph whose node 0
//! is the target and whose edge set depends on the configured [`EdgeMode`].

use std::cell::RefCell;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pedigree::{Individual, LongitudinalData, Population};

/// Relation of a graph node to the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelationLabel {
    Mother,
    Father,
    Sibling,
    HalfSibling,
    Grandparent,
    AuntUncle,
    Cousin,
    Target,
}

pub const RELATION_LABELS: [RelationLabel; 8] = [
    RelationLabel::Mother,
    RelationLabel::Father,
    RelationLabel::Sibling,
    RelationLabel::HalfSibling,
    RelationLabel::Grandparent,
    RelationLabel::AuntUncle,
    RelationLabel::Cousin,
    RelationLabel::Target,
];

impl RelationLabel {
    /// Degree of relationship to the target (0 for the target itself).
    pub fn degree(&self) -> u8 {
        match self {
            RelationLabel::Target => 0,
            RelationLabel::Mother | RelationLabel::Father | RelationLabel::Sibling => 1,
            RelationLabel::HalfSibling
            | RelationLabel::Grandparent
            | RelationLabel::AuntUncle => 2,
            RelationLabel::Cousin => 3,
        }
    }

    /// Expected coefficient of relationship, 0.5^degree (1 for the target).
    pub fn r(&self) -> f64 {
        0.5f64.powi(self.degree() as i32)
    }

    pub fn one_hot_index(&self) -> usize {
        RELATION_LABELS.iter().position(|l| l == self).unwrap()
    }

    pub fn name(&self) -> &'static str {
        match self {
            RelationLabel::Mother => "mother",
            RelationLabel::Father => "father",
            RelationLabel::Sibling => "sibling",
            RelationLabel::HalfSibling => "half_sibling",
            RelationLabel::Grandparent => "grandparent",
            RelationLabel::AuntUncle => "aunt_uncle",
            RelationLabel::Cousin => "cousin",
            RelationLabel::Target => "target",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeMode {
    /// Only parent/child pairs among the graph's nodes.
    ParentChild,
    /// Parent/child pairs plus an edge from every node to the target.
    ParentChildPlusTarget,
    /// Every pair of nodes with nonzero pedigree kinship.
    AllRelated,
}

/// Memoizing pedigree kinship calculator. `r(a, b)` is twice the kinship
/// coefficient; parents and full siblings get 0.5, grandparents 0.25, etc.
pub struct Kinship<'a> {
    pop: &'a Population,
    memo: RefCell<HashMap<(u64, u64), f64>>,
}

impl<'a> Kinship<'a> {
    pub fn new(pop: &'a Population) -> Self {
        Kinship {
            pop,
            memo: RefCell::new(HashMap::new()),
        }
    }

    /// Kinship coefficient phi(a, b).
    pub fn phi(&self, a: u64, b: u64) -> f64 {
        let key = (a.min(b), a.max(b));
        if let Some(&v) = self.memo.borrow().get(&key) {
            return v;
        }
        let v = self.compute(a, b);
        self.memo.borrow_mut().insert(key, v);
        v
    }

    fn compute(&self, a: u64, b: u64) -> f64 {
        let (Some(ia), Some(ib)) = (self.pop.get(a), self.pop.get(b)) else {
            return 0.0;
        };
        if a == b {
            let inbreeding = match (ia.mother_id, ia.father_id) {
                (Some(m), Some(f)) => self.phi(m, f),
                _ => 0.0,
            };
            return 0.5 * (1.0 + inbreeding);
        }
        // recurse on the later-generation individual; parents always sit in
        // an earlier generation, so the other one can never be its descendant
        let (x, y) = if ia.generation >= ib.generation {
            (ia, b)
        } else {
            (ib, a)
        };
        match (x.mother_id, x.father_id) {
            (None, None) => 0.0,
            (m, f) => {
                0.5 * (m.map_or(0.0, |m| self.phi(m, y)) + f.map_or(0.0, |f| self.phi(f, y)))
            }
        }
    }

    /// Coefficient of relationship r = 2 phi (for distinct individuals).
    pub fn r(&self, a: u64, b: u64) -> f64 {
        2.0 * self.phi(a, b)
    }
}

fn full_siblings(a: &Individual, b: &Individual) -> bool {
    a.id != b.id
        && a.mother_id.is_some()
        && a.mother_id == b.mother_id
        && a.father_id.is_some()
        && a.father_id == b.father_id
}

fn half_siblings(a: &Individual, b: &Individual) -> bool {
    if a.id == b.id || full_siblings(a, b) {
        return false;
    }
    let shares_mother = a.mother_id.is_some() && a.mother_id == b.mother_id;
    let shares_father = a.father_id.is_some() && a.father_id == b.father_id;
    shares_mother != shares_father
}

/// Enumerate the target's relatives up to third degree: parents, full and
/// half siblings, grandparents, full aunts/uncles, and their children
/// (cousins). Requires both parents to be present (cohort rule); the list is
/// sorted by (degree, label, id) and excludes the target.
pub fn enumerate_relatives(
    pop: &Population,
    target_id: u64,
) -> Result<Vec<(u64, RelationLabel)>> {
    let target = pop
        .get(target_id)
        .ok_or_else(|| Error::Integrity(format!("unknown individual {target_id}")))?;
    let (Some(m_id), Some(f_id)) = (target.mother_id, target.father_id) else {
        return Err(Error::Cohort(format!(
            "target {target_id} is missing a recorded parent"
        )));
    };
    if pop.get(m_id).is_none() || pop.get(f_id).is_none() {
        return Err(Error::Cohort(format!(
            "target {target_id} has a parent not present in the population"
        )));
    }

    let mut labels: HashMap<u64, RelationLabel> = HashMap::new();
    let claim = |labels: &mut HashMap<u64, RelationLabel>, id: u64, label: RelationLabel| {
        if id == target_id {
            return;
        }
        let better = match labels.get(&id) {
            None => true,
            Some(old) => (label.degree(), label) < (old.degree(), *old),
        };
        if better {
            labels.insert(id, label);
        }
    };

    claim(&mut labels, m_id, RelationLabel::Mother);
    claim(&mut labels, f_id, RelationLabel::Father);
    for pid in [m_id, f_id] {
        for gp in pop.parent_ids(pid) {
            claim(&mut labels, gp, RelationLabel::Grandparent);
        }
    }

    let mother = pop.get(m_id).unwrap();
    let father = pop.get(f_id).unwrap();
    let mut aunts: Vec<u64> = Vec::new();
    for ind in &pop.individuals {
        if full_siblings(target, ind) {
            claim(&mut labels, ind.id, RelationLabel::Sibling);
        } else if half_siblings(target, ind) {
            claim(&mut labels, ind.id, RelationLabel::HalfSibling);
        }
        if full_siblings(mother, ind) || full_siblings(father, ind) {
            claim(&mut labels, ind.id, RelationLabel::AuntUncle);
            aunts.push(ind.id);
        }
    }
    for ind in &pop.individuals {
        let has_aunt_parent = [ind.mother_id, ind.father_id]
            .into_iter()
            .flatten()
            .any(|p| aunts.contains(&p));
        if has_aunt_parent {
            claim(&mut labels, ind.id, RelationLabel::Cousin);
        }
    }

    let mut out: Vec<(u64, RelationLabel)> = labels.into_iter().collect();
    out.sort_by_key(|&(id, label)| (label.degree(), label, id));
    Ok(out)
}

/// One per-target family graph. Node 0 is the target; edges are stored in
/// both directions with identical features; self-loops are not stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyGraph {
    pub target_id: u64,
    pub node_ids: Vec<u64>,
    pub labels: Vec<RelationLabel>,
    /// N x F_S, currently (age, sex).
    pub node_static: Vec<Vec<f64>>,
    /// N x (F_L * T), feature-major per node; empty when no longitudinal
    /// data was attached.
    pub node_long: Vec<Vec<f64>>,
    pub n_long_features: usize,
    pub n_years: usize,
    /// Directed edge list; every undirected pair appears twice.
    pub edges: Vec<(usize, usize)>,
    /// Aligned with `edges`: r followed by a one-hot relation label of the
    /// endpoint farther from the target.
    pub edge_features: Vec<Vec<f64>>,
    pub y: f64,
}

impl FamilyGraph {
    pub fn n_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub const EDGE_FEATURE_DIM: usize = 1 + RELATION_LABELS.len();

    /// Undirected edge count.
    pub fn n_undirected(&self) -> usize {
        self.edges.len() / 2
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes();
        if self.labels.len() != n || self.node_static.len() != n {
            return Err(Error::Integrity("node table length mismatch".into()));
        }
        if self.labels.first() != Some(&RelationLabel::Target) {
            return Err(Error::Integrity("node 0 must be the target".into()));
        }
        if self.edges.len() != self.edge_features.len() {
            return Err(Error::Integrity("edge feature table length mismatch".into()));
        }
        for &(u, v) in &self.edges {
            if u >= n || v >= n {
                return Err(Error::Integrity(format!(
                    "edge endpoint out of range: ({u},{v}) with {n} nodes"
                )));
            }
            if u == v {
                return Err(Error::Integrity(format!("self-edge stored at node {u}")));
            }
        }
        Ok(())
    }
}

fn is_parent_child(pop: &Population, a: u64, b: u64) -> bool {
    pop.parent_ids(a).contains(&b) || pop.parent_ids(b).contains(&a)
}

/// Assemble the family graph for `target_id` from an enumerated relative
/// list. Longitudinal tracks are attached when provided, restricted to
/// `feature_indices` when given; the target's own diagnosis channel (feature
/// 0) is always zeroed so the label never leaks into its node features.
pub fn build_graph(
    pop: &Population,
    target_id: u64,
    relatives: &[(u64, RelationLabel)],
    mode: EdgeMode,
    long: Option<&LongitudinalData>,
    feature_indices: Option<&[usize]>,
) -> Result<FamilyGraph> {
    let target = pop
        .get(target_id)
        .ok_or_else(|| Error::Integrity(format!("unknown individual {target_id}")))?;

    let mut node_ids = vec![target_id];
    let mut labels = vec![RelationLabel::Target];
    for &(id, label) in relatives {
        if pop.get(id).is_none() {
            return Err(Error::Integrity(format!("unknown relative {id}")));
        }
        node_ids.push(id);
        labels.push(label);
    }
    let n = node_ids.len();

    let kin = Kinship::new(pop);
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let keep = match mode {
                EdgeMode::ParentChild => is_parent_child(pop, node_ids[u], node_ids[v]),
                EdgeMode::ParentChildPlusTarget => {
                    u == 0 || is_parent_child(pop, node_ids[u], node_ids[v])
                }
                EdgeMode::AllRelated => kin.r(node_ids[u], node_ids[v]) > 1e-12,
            };
            if keep {
                pairs.push((u, v));
            }
        }
    }

    let mut edges = Vec::with_capacity(pairs.len() * 2);
    let mut edge_features = Vec::with_capacity(pairs.len() * 2);
    for (u, v) in pairs {
        let r = kin.r(node_ids[u], node_ids[v]);
        // endpoint farther from the target; ties resolved by node order
        let far = if labels[u].degree() == labels[v].degree() {
            u.max(v)
        } else if labels[u].degree() > labels[v].degree() {
            u
        } else {
            v
        };
        let mut feat = vec![0.0; FamilyGraph::EDGE_FEATURE_DIM];
        feat[0] = r;
        feat[1 + labels[far].one_hot_index()] = 1.0;
        edges.push((u, v));
        edge_features.push(feat.clone());
        edges.push((v, u));
        edge_features.push(feat);
    }

    let node_static = node_ids
        .iter()
        .map(|&id| {
            let ind = pop.get(id).unwrap();
            vec![ind.age, ind.sex as f64]
        })
        .collect();

    let (node_long, n_long_features, n_years) = match long {
        None => (Vec::new(), 0, 0),
        Some(data) => {
            let all: Vec<usize> = (0..data.n_features).collect();
            let kept = feature_indices.unwrap_or(&all);
            let t = data.n_years;
            let mut rows = Vec::with_capacity(n);
            for (pos, &id) in node_ids.iter().enumerate() {
                let idx = pop
                    .idx_of(id)
                    .ok_or_else(|| Error::Integrity(format!("unknown individual {id}")))?;
                let track = data.track(idx);
                let mut row = Vec::with_capacity(kept.len() * t);
                for &f in kept {
                    if f >= data.n_features {
                        return Err(Error::Integrity(format!(
                            "feature index {f} out of range ({} features)",
                            data.n_features
                        )));
                    }
                    // diagnosis channel of the target itself is the label
                    let masked = pos == 0 && f == 0;
                    for yv in &track[f * t..(f + 1) * t] {
                        row.push(if masked { 0.0 } else { *yv as f64 });
                    }
                }
                rows.push(row);
            }
            (rows, kept.len(), t)
        }
    };

    let g = FamilyGraph {
        target_id,
        node_ids,
        labels,
        node_static,
        node_long,
        n_long_features,
        n_years,
        edges,
        edge_features,
        y: target.case_status as u8 as f64,
    };
    g.validate()?;
    Ok(g)
}

/// Order of relative types in the family-history vector.
pub const HISTORY_TYPES: [RelationLabel; 7] = [
    RelationLabel::Mother,
    RelationLabel::Father,
    RelationLabel::Sibling,
    RelationLabel::HalfSibling,
    RelationLabel::Grandparent,
    RelationLabel::AuntUncle,
    RelationLabel::Cousin,
];

/// Relative types that get an availability indicator (parents are always
/// present under the cohort rule, so they get none).
pub const AVAILABILITY_TYPES: [RelationLabel; 5] = [
    RelationLabel::Sibling,
    RelationLabel::HalfSibling,
    RelationLabel::Grandparent,
    RelationLabel::AuntUncle,
    RelationLabel::Cousin,
];

pub const FAMILY_HISTORY_DIM: usize = HISTORY_TYPES.len() + AVAILABILITY_TYPES.len();

/// Flat per-target family-history vector for tabular baselines: per relative
/// type a binary "any relative of this type diagnosed before `cutoff_year`",
/// followed by availability indicators for the non-parent types. Absence is
/// encoded as zeros, never an error.
pub fn family_history_vector(
    pop: &Population,
    relatives: &[(u64, RelationLabel)],
    cutoff_year: u32,
) -> Vec<f64> {
    let mut history: HashMap<RelationLabel, f64> = HashMap::new();
    let mut present: HashMap<RelationLabel, f64> = HashMap::new();
    for &(id, label) in relatives {
        *present.entry(label).or_insert(0.0) = 1.0;
        if let Some(ind) = pop.get(id) {
            let diagnosed = matches!(ind.onset_year, Some(y) if y < cutoff_year);
            if diagnosed {
                *history.entry(label).or_insert(0.0) = 1.0;
            }
        }
    }
    let mut out = Vec::with_capacity(FAMILY_HISTORY_DIM);
    for label in HISTORY_TYPES {
        out.push(*history.get(&label).unwrap_or(&0.0));
    }
    for label in AVAILABILITY_TYPES {
        out.push(*present.get(&label).unwrap_or(&0.0));
    }
    out
}

/// Retain longitudinal features whose carrier count among the given targets
/// exceeds `threshold_fraction` times the cohort size. Ordering is stable.
pub fn feature_filter(
    long: &LongitudinalData,
    target_idxs: &[usize],
    threshold_fraction: f64,
) -> Result<Vec<usize>> {
    if target_idxs.is_empty() {
        return Err(Error::Param("feature filter needs a non-empty cohort".into()));
    }
    let cutoff = threshold_fraction * target_idxs.len() as f64;
    let t = long.n_years;
    let mut kept = Vec::new();
    for f in 0..long.n_features {
        let carriers = target_idxs
            .iter()
            .filter(|&&i| long.track(i)[f * t..(f + 1) * t].iter().any(|&v| v > 0))
            .count();
        if carriers as f64 > cutoff {
            kept.push(f);
        }
    }
    Ok(kept)
}
