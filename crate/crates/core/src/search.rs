//! Hypothesize-and-test recognition in order of truncated probability.
//!
//! Feature candidates are scored once; triples of candidates are then
//! enumerated best-first by their summed Φ, matched against the hash index,
//! and the resulting hypotheses are released in exact order of
//! `tp = ln γ + Φ₁ + Φ₂ + Φ₃` as soon as no unexplored triple can beat them.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Point3, Pose};
use crate::index::{EntryId, GeomHashIndex, QueryMatch};
use crate::likelihood::{explained_points, log_likelihood, normalization, LikelihoodParams};
use crate::model::{Feature, ObjectModel};
use crate::relation::{DensityModel, TetraSampler};
use crate::scan::RangeScan;

#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig {
    /// Candidate threshold on Φ; `None` keeps every feature value.
    pub xi: Option<f64>,
    /// Acceptance threshold on L.
    pub theta: f64,
    /// Cap on likelihood evaluations; `None` evaluates every hypothesis.
    pub max_hypotheses: Option<usize>,
    /// Hypotheses of one class closer than both limits are duplicates.
    pub dedup_rotation: f64,
    pub dedup_translation: f64,
    /// Widest candidate pair considered; `None` uses the index's widest
    /// model pair plus `2·q_d`.
    pub max_triple_distance: Option<f64>,
    /// Return the best evaluated hypothesis when none is accepted.
    pub best_effort: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            xi: Some(0.0),
            theta: 0.0,
            max_hypotheses: Some(2000),
            dedup_rotation: 1f64.to_radians(),
            dedup_translation: 2.0,
            max_triple_distance: None,
            best_effort: false,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_hypotheses == Some(0) {
            return Err(Error::InvalidParameter(
                "max_hypotheses must be >= 1".into(),
            ));
        }
        if !(self.dedup_rotation >= 0.0 && self.dedup_translation >= 0.0) {
            return Err(Error::InvalidParameter(
                "dedup thresholds must be >= 0".into(),
            ));
        }
        if self.theta.is_nan() || self.xi.is_some_and(f64::is_nan) {
            return Err(Error::InvalidParameter("thresholds must not be NaN".into()));
        }
        if let Some(d) = self.max_triple_distance {
            if !(d > 0.0) {
                return Err(Error::InvalidParameter(
                    "max_triple_distance must be > 0".into(),
                ));
            }
        }
        Ok(())
    }
}

/// A scored feature value `(s, f)` at scan point `point`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureCandidate {
    pub shape: u32,
    pub location: Point3,
    pub point: usize,
    pub phi: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hypothesis {
    pub class_id: u32,
    pub pose: Pose,
    pub tp: f64,
    /// Candidate indices of the drawing triple, ascending.
    pub triple: [usize; 3],
    pub entry: EntryId,
    pub gamma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub hypothesis: Hypothesis,
    pub l: f64,
    pub n_in: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Outcome {
    Accepted {
        class_id: u32,
        pose: Pose,
        l: f64,
        tp: f64,
    },
    BestEffort {
        class_id: u32,
        pose: Pose,
        l: f64,
        tp: f64,
    },
    NoneFound,
}

impl Outcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Outcome::Accepted { .. })
    }

    /// Class and pose of an accepted or best-effort result.
    pub fn found(&self) -> Option<(u32, Pose)> {
        match *self {
            Outcome::Accepted { class_id, pose, .. }
            | Outcome::BestEffort { class_id, pose, .. } => Some((class_id, pose)),
            Outcome::NoneFound => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecognitionResult {
    pub outcome: Outcome,
    pub evaluations: usize,
    pub candidates: usize,
    /// Evaluated hypotheses in evaluation order.
    pub log: Vec<Evaluation>,
}

/// Seed of the Δ draw at scan point `i`.
pub fn point_seed(seed: u64, i: usize) -> u64 {
    let mut z = seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Φ of every shape class at every scan point, one Δ draw per point.
/// `phi[i][s - 1]`.
pub fn score_points(scan: &RangeScan, dm: &DensityModel, seed: u64) -> Vec<Vec<f64>> {
    let sampler = TetraSampler::new(scan);
    let cfg = dm.config();
    scan.points()
        .par_iter()
        .enumerate()
        .map(|(i, p)| dm.phi_all(&sampler.sample(p, cfg, point_seed(seed, i))))
        .collect()
}

fn candidate_order(a: &FeatureCandidate, b: &FeatureCandidate) -> Ordering {
    b.phi
        .total_cmp(&a.phi)
        .then(a.point.cmp(&b.point))
        .then(a.shape.cmp(&b.shape))
}

/// Feature values with Φ above `xi` (all of them for `None`), best first.
pub fn select_candidates(
    scan: &RangeScan,
    dm: &DensityModel,
    xi: Option<f64>,
    seed: u64,
) -> Vec<FeatureCandidate> {
    let scores = score_points(scan, dm, seed);
    let mut out = Vec::new();
    for (i, phis) in scores.iter().enumerate() {
        for (k, &phi) in phis.iter().enumerate() {
            if xi.is_none_or(|x| phi > x) {
                out.push(FeatureCandidate {
                    shape: k as u32 + 1,
                    location: scan.points()[i],
                    point: i,
                    phi,
                });
            }
        }
    }
    out.sort_by(candidate_order);
    out
}

/// Sorts candidates into the order the search relies on.
pub fn sort_candidates(candidates: &mut [FeatureCandidate]) {
    candidates.sort_by(candidate_order);
}

/// Summed Φ of a candidate triple, `i < j < k`, in the association used
/// throughout the search.
pub fn triple_phi(c: &[FeatureCandidate], i: usize, j: usize, k: usize) -> f64 {
    (c[i].phi + c[j].phi) + c[k].phi
}

#[derive(Clone, Copy, Debug)]
enum Node {
    /// All triples whose first member is `i` or later.
    First(usize),
    /// Triples `(i, N(i)[a..], ·)`.
    Second { i: usize, a: usize },
    /// The triple `(i, j, K(i,j)[b])`.
    Third { i: usize, j: usize, b: usize },
}

struct Keyed<T> {
    key: f64,
    seq: u64,
    item: T,
}

impl<T> PartialEq for Keyed<T> {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl<T> Eq for Keyed<T> {}
impl<T> PartialOrd for Keyed<T> {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl<T> Ord for Keyed<T> {
    fn cmp(&self, o: &Self) -> Ordering {
        self.key.total_cmp(&o.key).then(o.seq.cmp(&self.seq))
    }
}

/// Candidate triples in non-increasing order of summed Φ, restricted to
/// triples whose three pairs are consistent with some indexed model pair.
struct TripleEnumerator<'a> {
    cands: &'a [FeatureCandidate],
    index: &'a GeomHashIndex,
    max_dist: f64,
    partners: HashMap<usize, Vec<usize>>,
    thirds: HashMap<(usize, usize), Vec<usize>>,
    heap: BinaryHeap<Keyed<Node>>,
    seq: u64,
}

impl<'a> TripleEnumerator<'a> {
    fn new(cands: &'a [FeatureCandidate], index: &'a GeomHashIndex, max_dist: f64) -> Self {
        let mut e = TripleEnumerator {
            cands,
            index,
            max_dist,
            partners: HashMap::new(),
            thirds: HashMap::new(),
            heap: BinaryHeap::new(),
            seq: 0,
        };
        if cands.len() >= 3 {
            e.push(triple_phi(cands, 0, 1, 2), Node::First(0));
        }
        e
    }

    fn push(&mut self, key: f64, item: Node) {
        if key == f64::NEG_INFINITY {
            return;
        }
        self.seq += 1;
        self.heap.push(Keyed {
            key,
            seq: self.seq,
            item,
        });
    }

    /// Upper bound on the summed Φ of every triple not yet returned.
    fn bound(&self) -> f64 {
        self.heap.peek().map_or(f64::NEG_INFINITY, |n| n.key)
    }

    fn pair_ok(&self, i: usize, j: usize) -> bool {
        let (a, b) = (&self.cands[i], &self.cands[j]);
        if a.point == b.point || a.location == b.location {
            return false;
        }
        let d = (a.location - b.location).norm();
        d <= self.max_dist && self.index.pair_consistent(a.shape, b.shape, d)
    }

    fn partners_of(&mut self, i: usize) -> &Vec<usize> {
        if !self.partners.contains_key(&i) {
            let list: Vec<usize> = (i + 1..self.cands.len())
                .filter(|&j| self.pair_ok(i, j))
                .collect();
            self.partners.insert(i, list);
        }
        &self.partners[&i]
    }

    fn thirds_of(&mut self, i: usize, j: usize) -> &Vec<usize> {
        if !self.thirds.contains_key(&(i, j)) {
            let ni = self.partners_of(i).clone();
            let list: Vec<usize> = ni
                .into_iter()
                .filter(|&k| k > j && self.pair_ok(j, k))
                .collect();
            self.thirds.insert((i, j), list);
        }
        &self.thirds[&(i, j)]
    }

    fn next_triple(&mut self) -> Option<([usize; 3], f64)> {
        let c = self.cands;
        let n = c.len();
        while let Some(Keyed { key, item, .. }) = self.heap.pop() {
            match item {
                Node::First(i) => {
                    if i + 3 < n {
                        self.push(triple_phi(c, i + 1, i + 2, i + 3), Node::First(i + 1));
                    }
                    if let Some(&j) = self.partners_of(i).first() {
                        if j + 1 < n {
                            self.push(triple_phi(c, i, j, j + 1), Node::Second { i, a: 0 });
                        }
                    }
                }
                Node::Second { i, a } => {
                    let ni = self.partners_of(i);
                    let j = ni[a];
                    if let Some(&j2) = ni.get(a + 1) {
                        if j2 + 1 < n {
                            self.push(triple_phi(c, i, j2, j2 + 1), Node::Second { i, a: a + 1 });
                        }
                    }
                    if let Some(&k) = self.thirds_of(i, j).first() {
                        self.push(triple_phi(c, i, j, k), Node::Third { i, j, b: 0 });
                    }
                }
                Node::Third { i, j, b } => {
                    let ks = self.thirds_of(i, j);
                    let k = ks[b];
                    if let Some(&k2) = ks.get(b + 1) {
                        self.push(triple_phi(c, i, j, k2), Node::Third { i, j, b: b + 1 });
                    }
                    return Some(([i, j, k], key));
                }
            }
        }
        None
    }
}

struct Pending {
    triple: [usize; 3],
    m: QueryMatch,
    gamma: f64,
}

/// Lazily yields deduplicated hypotheses in order of decreasing TP; ties
/// are broken by class id, then lexicographic pose.
pub struct HypothesisStream<'a> {
    cands: &'a [FeatureCandidate],
    index: &'a GeomHashIndex,
    triples: TripleEnumerator<'a>,
    pending: BinaryHeap<Keyed<Pending>>,
    seq: u64,
    ln_gamma_max: f64,
    ready: std::collections::VecDeque<Hypothesis>,
    emitted: HashMap<(u32, [i64; 3]), Vec<Pose>>,
    dedup_rotation: f64,
    dedup_translation: f64,
}

impl<'a> HypothesisStream<'a> {
    /// `cands` must be sorted with [`sort_candidates`].
    pub fn new(
        cands: &'a [FeatureCandidate],
        index: &'a GeomHashIndex,
        cfg: &SearchConfig,
    ) -> Self {
        let max_dist = cfg
            .max_triple_distance
            .unwrap_or(index.max_pair_distance() + 2.0 * index.qd());
        let gamma_max = index.entries().iter().map(|e| e.gamma).fold(0.0, f64::max);
        HypothesisStream {
            cands,
            index,
            triples: TripleEnumerator::new(cands, index, max_dist),
            pending: BinaryHeap::new(),
            seq: 0,
            ln_gamma_max: gamma_max.ln(),
            ready: Default::default(),
            emitted: HashMap::new(),
            dedup_rotation: cfg.dedup_rotation,
            dedup_translation: cfg.dedup_translation,
        }
    }

    fn cell(&self, p: &Pose) -> [i64; 3] {
        let w = self.dedup_translation.max(1e-9);
        [0, 1, 2].map(|k| (p.translation[k] / w).floor() as i64)
    }

    fn is_duplicate(&self, class_id: u32, pose: &Pose) -> bool {
        let c = self.cell(pose);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = self
                        .emitted
                        .get(&(class_id, [c[0] + dx, c[1] + dy, c[2] + dz]))
                    {
                        if list.iter().any(|q| {
                            q.translation_distance_to(pose) < self.dedup_translation
                                && q.rotation_angle_to(pose) < self.dedup_rotation
                        }) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }

    fn features(&self, t: [usize; 3]) -> [Feature; 3] {
        t.map(|i| Feature {
            shape: self.cands[i].shape,
            location: self.cands[i].location,
        })
    }

    /// Moves the next complete tie group of pending matches to `ready`.
    fn release_group(&mut self) {
        let top = self.pending.peek().expect("non-empty").key;
        let mut group = Vec::new();
        while self.pending.peek().is_some_and(|p| p.key == top) {
            group.push(self.pending.pop().unwrap().item);
        }
        let mut hyps: Vec<Hypothesis> = group
            .into_iter()
            .filter_map(|p| {
                let hit = self.index.solve(&self.features(p.triple), &p.m)?;
                Some(Hypothesis {
                    class_id: hit.class_id,
                    pose: hit.pose,
                    tp: top,
                    triple: p.triple,
                    entry: p.m.entry,
                    gamma: p.gamma,
                })
            })
            .collect();
        hyps.sort_by(|a, b| a.class_id.cmp(&b.class_id).then(a.pose.lex_cmp(&b.pose)));
        for h in hyps {
            if self.is_duplicate(h.class_id, &h.pose) {
                continue;
            }
            let c = self.cell(&h.pose);
            self.emitted
                .entry((h.class_id, c))
                .or_default()
                .push(h.pose);
            self.ready.push_back(h);
        }
    }
}

impl Iterator for HypothesisStream<'_> {
    type Item = Hypothesis;

    fn next(&mut self) -> Option<Hypothesis> {
        loop {
            if let Some(h) = self.ready.pop_front() {
                return Some(h);
            }
            let bound = self.ln_gamma_max + self.triples.bound();
            match self.pending.peek() {
                Some(top) if top.key > bound || bound == f64::NEG_INFINITY => {
                    self.release_group();
                    continue;
                }
                None if bound == f64::NEG_INFINITY => return None,
                _ => {}
            }
            let Some((t, phi)) = self.triples.next_triple() else {
                continue;
            };
            let g3 = self.features(t);
            let Ok(matches) = self.index.matches(&g3) else {
                continue;
            };
            for m in matches {
                let gamma = self.index.entries()[m.entry.0].gamma;
                let tp = gamma.ln() + phi;
                if tp == f64::NEG_INFINITY {
                    continue;
                }
                self.seq += 1;
                self.pending.push(Keyed {
                    key: tp,
                    seq: self.seq,
                    item: Pending {
                        triple: t,
                        m,
                        gamma,
                    },
                });
            }
        }
    }
}

/// Every hypothesis drawn by the candidates, in evaluation order.
pub fn generate_hypotheses(
    candidates: &[FeatureCandidate],
    index: &GeomHashIndex,
    cfg: &SearchConfig,
) -> Vec<Hypothesis> {
    let mut sorted = candidates.to_vec();
    sort_candidates(&mut sorted);
    let hyps: Vec<Hypothesis> = HypothesisStream::new(&sorted, index, cfg).collect();
    // Report triples in the caller's candidate numbering.
    let back: Vec<usize> = {
        let mut used = vec![false; candidates.len()];
        sorted
            .iter()
            .map(|c| {
                let pos = candidates
                    .iter()
                    .enumerate()
                    .position(|(k, o)| !used[k] && o == c)
                    .expect("same multiset");
                used[pos] = true;
                pos
            })
            .collect()
    };
    hyps.into_iter()
        .map(|mut h| {
            let mut t = h.triple.map(|i| back[i]);
            t.sort_unstable();
            h.triple = t;
            h
        })
        .collect()
}

/// Models by class id; `ln N` filled in for any model missing one.
fn prepare<'m>(
    scan: &RangeScan,
    models: &'m [ObjectModel],
    lp: &LikelihoodParams,
) -> Result<(BTreeMap<u32, &'m ObjectModel>, LikelihoodParams)> {
    let mut by_class = BTreeMap::new();
    let mut lp = lp.clone();
    for m in models {
        if by_class.insert(m.class_id(), m).is_some() {
            return Err(Error::InvalidModel(format!(
                "class id {} used twice",
                m.class_id()
            )));
        }
        if !lp.ln_n.contains_key(&m.class_id()) {
            let v = normalization(m, &lp, scan.gaze())?;
            lp.ln_n.insert(m.class_id(), v);
        }
    }
    lp.validate()?;
    Ok((by_class, lp))
}

/// Tests hypotheses in TP order until one has `L > Θ`.
pub fn recognize(
    scan: &RangeScan,
    models: &[ObjectModel],
    dm: &DensityModel,
    index: &GeomHashIndex,
    lp: &LikelihoodParams,
    cfg: &SearchConfig,
    seed: u64,
) -> Result<RecognitionResult> {
    cfg.validate()?;
    let candidates = select_candidates(scan, dm, cfg.xi, seed);
    recognize_with_candidates(scan, models, &candidates, index, lp, cfg)
}

/// Steps 2–5 of the search for precomputed, sorted candidates.
pub fn recognize_with_candidates(
    scan: &RangeScan,
    models: &[ObjectModel],
    candidates: &[FeatureCandidate],
    index: &GeomHashIndex,
    lp: &LikelihoodParams,
    cfg: &SearchConfig,
) -> Result<RecognitionResult> {
    let (by_class, lp) = prepare(scan, models, lp)?;
    let limit = cfg.max_hypotheses.unwrap_or(usize::MAX);
    let mut log = Vec::new();
    let stream = HypothesisStream::new(candidates, index, cfg)
        .filter(|h| by_class.contains_key(&h.class_id));
    for h in stream.take(limit) {
        let (l, n_in) = log_likelihood(scan, by_class[&h.class_id], &h.pose, &lp)?;
        log.push(Evaluation {
            hypothesis: h,
            l,
            n_in,
        });
        if l > cfg.theta {
            return Ok(RecognitionResult {
                outcome: Outcome::Accepted {
                    class_id: h.class_id,
                    pose: h.pose,
                    l,
                    tp: h.tp,
                },
                evaluations: log.len(),
                candidates: candidates.len(),
                log,
            });
        }
    }
    let outcome = match log.iter().max_by(|a, b| {
        a.l.total_cmp(&b.l)
            .then(b.hypothesis.tp.total_cmp(&a.hypothesis.tp))
    }) {
        Some(best) if cfg.best_effort => Outcome::BestEffort {
            class_id: best.hypothesis.class_id,
            pose: best.hypothesis.pose,
            l: best.l,
            tp: best.hypothesis.tp,
        },
        _ => Outcome::NoneFound,
    };
    Ok(RecognitionResult {
        outcome,
        evaluations: log.len(),
        candidates: candidates.len(),
        log,
    })
}

/// Recognises, removes the accepted object's points, and restarts.
#[allow(clippy::too_many_arguments)]
pub fn recognize_sequential(
    scan: &RangeScan,
    models: &[ObjectModel],
    dm: &DensityModel,
    index: &GeomHashIndex,
    lp: &LikelihoodParams,
    cfg: &SearchConfig,
    seed: u64,
    max_objects: usize,
) -> Result<Vec<RecognitionResult>> {
    if max_objects < 1 {
        return Err(Error::InvalidParameter("max_objects must be >= 1".into()));
    }
    let (by_class, lp) = prepare(scan, models, lp)?;
    let mut current = scan.clone();
    let mut results = Vec::new();
    for round in 0..max_objects {
        let r = recognize(
            &current,
            models,
            dm,
            index,
            &lp,
            cfg,
            seed.wrapping_add(round as u64),
        )?;
        let accepted = match r.outcome {
            Outcome::Accepted { class_id, pose, .. } => Some((class_id, pose)),
            _ => None,
        };
        results.push(r);
        let Some((class_id, pose)) = accepted else {
            break;
        };
        let explained = explained_points(&current, by_class[&class_id], &pose, &lp)?;
        current = current.retain(|i, _| !explained[i]);
        if current.len() < 3 {
            break;
        }
    }
    Ok(results)
}

/// Counts one draw for each evaluated hypothesis' entry, a success when
/// `correct` holds.
pub fn record_grouping_feedback(
    index: &mut GeomHashIndex,
    log: &[Evaluation],
    correct: impl Fn(&Hypothesis) -> bool,
) -> Result<()> {
    for e in log {
        index.update_weights(e.hypothesis.entry, correct(&e.hypothesis))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vector3;
    use crate::index::build_index;
    use crate::shapes;

    fn cand(shape: u32, p: [f64; 3], point: usize, phi: f64) -> FeatureCandidate {
        FeatureCandidate {
            shape,
            location: Point3::from(p),
            point,
            phi,
        }
    }

    fn single_triple_index(gamma: f64) -> GeomHashIndex {
        let mut idx = GeomHashIndex::new(5.0, gamma).unwrap();
        let g3 = [
            Feature {
                shape: 1,
                location: Point3::new(0.0, 0.0, 0.0),
            },
            Feature {
                shape: 1,
                location: Point3::new(60.0, 0.0, 0.0),
            },
            Feature {
                shape: 2,
                location: Point3::new(0.0, 45.0, 0.0),
            },
        ];
        idx.insert_triple(1, &g3).unwrap();
        idx
    }

    #[test]
    fn no_hits_no_hypotheses() {
        let idx = single_triple_index(0.5);
        let c = vec![
            cand(1, [0.0, 0.0, 0.0], 0, 1.0),
            cand(1, [300.0, 0.0, 0.0], 1, 1.0),
            cand(1, [0.0, 300.0, 0.0], 2, 1.0),
        ];
        assert!(generate_hypotheses(&c, &idx, &SearchConfig::default()).is_empty());
    }

    #[test]
    fn tp_is_log_gamma_plus_phis() {
        let idx = single_triple_index(0.5);
        let c = vec![
            cand(1, [10.0, 10.0, 0.0], 0, 3.0),
            cand(1, [70.0, 10.0, 0.0], 1, 2.0),
            cand(2, [10.0, 55.0, 0.0], 2, 1.0),
        ];
        let h = generate_hypotheses(&c, &idx, &SearchConfig::default());
        assert_eq!(h.len(), 1);
        assert!((h[0].tp - (0.5f64.ln() + 6.0)).abs() < 1e-12);
        assert_eq!(h[0].pose.translation, Vector3::new(10.0, 10.0, 0.0));
    }

    #[test]
    fn duplicate_poses_keep_the_higher_tp() {
        let idx = single_triple_index(0.5);
        // Two copies of the same scene triple (different scan points, a
        // fraction of a millimetre apart) draw the same pose.
        let c = vec![
            cand(1, [0.0, 0.0, 0.0], 0, 2.0),
            cand(1, [60.0, 0.0, 0.0], 1, 1.5),
            cand(2, [0.0, 45.0, 0.0], 2, 0.5 + 2f64.ln()),
            cand(2, [0.0, 45.2, 0.0], 3, -0.5 + 2f64.ln()),
        ];
        let h = generate_hypotheses(&c, &idx, &SearchConfig::default());
        assert_eq!(h.len(), 1);
        assert!((h[0].tp - 4.0).abs() < 1e-12);
    }

    #[test]
    fn sparser_keys_come_first() {
        let mut idx = GeomHashIndex::new(5.0, 0.9).unwrap();
        let tri = |a: f64, b: f64| {
            [
                Feature {
                    shape: 1,
                    location: Point3::new(0.0, 0.0, 0.0),
                },
                Feature {
                    shape: 1,
                    location: Point3::new(a, 0.0, 0.0),
                },
                Feature {
                    shape: 1,
                    location: Point3::new(0.0, b, 0.0),
                },
            ]
        };
        // One entry under the first key, three under the second.
        idx.insert_triple(1, &tri(50.0, 80.0)).unwrap();
        for c in 2..=4 {
            idx.insert_triple(c, &tri(120.0, 150.0)).unwrap();
        }
        let far = 1000.0;
        let c = vec![
            cand(1, [far, 0.0, 0.0], 0, 1.0),
            cand(1, [far + 120.0, 0.0, 0.0], 1, 1.0),
            cand(1, [far, 150.0, 0.0], 2, 1.0),
            cand(1, [0.0, 0.0, 0.0], 3, 1.0),
            cand(1, [50.0, 0.0, 0.0], 4, 1.0),
            cand(1, [0.0, 80.0, 0.0], 5, 1.0),
        ];
        let h = generate_hypotheses(&c, &idx, &SearchConfig::default());
        assert_eq!(h[0].class_id, 1);
        assert!(h[1..].iter().all(|x| x.tp < h[0].tp));
    }

    #[test]
    fn stream_matches_exhaustive_enumeration_on_a_model() {
        let m = ObjectModel::from_shape(1, shapes::box_shape(100.0, 70.0, 40.0)).unwrap();
        let idx = build_index(std::slice::from_ref(&m), 5.0, 0.9).unwrap();
        let feats = m.features();
        let mut c: Vec<FeatureCandidate> = feats
            .iter()
            .enumerate()
            .map(|(i, f)| {
                cand(
                    f.shape,
                    f.location.coords.into(),
                    i,
                    (i as f64 * 0.37).sin(),
                )
            })
            .collect();
        sort_candidates(&mut c);
        let cfg = SearchConfig::default();
        let got: Vec<(f64, u32)> = HypothesisStream::new(&c, &idx, &cfg)
            .map(|h| (h.tp, h.class_id))
            .collect();

        let mut all = Vec::new();
        for i in 0..c.len() {
            for j in i + 1..c.len() {
                for k in j + 1..c.len() {
                    let g3 = [i, j, k].map(|x| Feature {
                        shape: c[x].shape,
                        location: c[x].location,
                    });
                    for hit in idx.query(&g3).unwrap() {
                        all.push((
                            hit.gamma.ln() + triple_phi(&c, i, j, k),
                            hit.class_id,
                            hit.pose,
                        ));
                    }
                }
            }
        }
        all.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then(a.1.cmp(&b.1))
                .then(a.2.lex_cmp(&b.2))
        });
        let mut kept: Vec<(f64, u32, Pose)> = Vec::new();
        for h in all {
            if !kept.iter().any(|k| {
                k.1 == h.1
                    && k.2.translation_distance_to(&h.2) < cfg.dedup_translation
                    && k.2.rotation_angle_to(&h.2) < cfg.dedup_rotation
            }) {
                kept.push(h);
            }
        }
        let want: Vec<(f64, u32)> = kept.iter().map(|k| (k.0, k.1)).collect();
        assert_eq!(got, want);
        assert!(got.windows(2).all(|w| w[0].0 >= w[1].0));
    }

    #[test]
    fn point_seeds_differ() {
        assert_ne!(point_seed(1, 0), point_seed(1, 1));
        assert_ne!(point_seed(1, 0), point_seed(2, 0));
    }
}
