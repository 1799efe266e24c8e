//! Geometric hash table over model feature triples.
//!
//! A triple is keyed by its sorted shape labels and its quantised side
//! lengths. Within equal labels, members are ordered by the length of the
//! side opposite them (ascending), so bin `i` is the side opposite member
//! `i`. Entries keep the model triple in that canonical order; queries try
//! every label-preserving ordering of the scene triple, which covers both
//! noise-induced reordering and symmetric triples.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{
    solve_rigid_from_triple, triangle_area, triple_rms_residual, Point3, Pose, MIN_TRIPLE_AREA,
};
use crate::model::{Feature, ObjectModel};
use crate::textio::{content_lines, read_file, LineCursor};

/// Default quantisation of side lengths (mm).
pub const DEFAULT_QD: f64 = 5.0;
/// Default initial grouping weight. A key holding `h` entries starts at
/// `0.9/h` each once the overflow rescale applies.
pub const DEFAULT_GAMMA_INIT: f64 = 0.9;
/// Cap on the summed weights of one key.
pub const GAMMA_CAP: f64 = 0.9;
/// Beta prior of the grouping-weight estimator.
pub const PRIOR_SUCCESS: f64 = 1.0;
pub const PRIOR_FAILURE: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HashKey {
    pub labels: [u32; 3],
    pub bins: [i64; 3],
}

/// Handle of one stored entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntryId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct HashEntry {
    pub class_id: u32,
    pub key: HashKey,
    /// Model triple in canonical order (model coordinates).
    pub points: [Point3; 3],
    pub gamma: f64,
    pub draws: u64,
    pub successes: u64,
}

impl HashEntry {
    /// Side lengths opposite each member.
    pub fn sides(&self) -> [f64; 3] {
        opposite_sides(&self.points)
    }
}

/// Posterior-mean grouping weight after `draws` draws of which `successes`
/// were correct.
pub fn beta_mean(successes: u64, draws: u64) -> f64 {
    (successes as f64 + PRIOR_SUCCESS) / (draws as f64 + PRIOR_SUCCESS + PRIOR_FAILURE)
}

fn opposite_sides(p: &[Point3; 3]) -> [f64; 3] {
    [
        (p[1] - p[2]).norm(),
        (p[0] - p[2]).norm(),
        (p[0] - p[1]).norm(),
    ]
}

fn quantise(len: f64, qd: f64) -> i64 {
    (len / qd).floor() as i64
}

/// Canonical ordering of a triple: by label, then opposite side ascending,
/// then coordinates.
pub fn canonical_order(g3: &[Feature; 3]) -> Result<[usize; 3]> {
    let pts = [g3[0].location, g3[1].location, g3[2].location];
    if pts[0] == pts[1] || pts[0] == pts[2] || pts[1] == pts[2] {
        return Err(Error::DegenerateTriple("coincident feature locations"));
    }
    let sides = opposite_sides(&pts);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| {
        g3[i]
            .shape
            .cmp(&g3[j].shape)
            .then(sides[i].total_cmp(&sides[j]))
            .then_with(|| {
                let (a, b) = (pts[i], pts[j]);
                a.x.total_cmp(&b.x)
                    .then(a.y.total_cmp(&b.y))
                    .then(a.z.total_cmp(&b.z))
            })
    });
    Ok(order)
}

/// Key of a feature triple; identical for all orderings of the input.
pub fn make_key(g3: &[Feature; 3], qd: f64) -> Result<HashKey> {
    let order = canonical_order(g3)?;
    let pts = order.map(|i| g3[i].location);
    let sides = opposite_sides(&pts);
    Ok(HashKey {
        labels: order.map(|i| g3[i].shape),
        bins: sides.map(|l| quantise(l, qd)),
    })
}

/// One index hit for a scene triple.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QueryHit {
    pub class_id: u32,
    /// Pose mapping the model triple onto the scene triple.
    pub pose: Pose,
    pub gamma: f64,
    pub entry: EntryId,
    /// `scene[correspondence[i]]` matches the entry's model point `i`.
    pub correspondence: [usize; 3],
}

/// Match of a scene triple against an entry before the pose is solved.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QueryMatch {
    pub entry: EntryId,
    pub correspondence: [usize; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeomHashIndex {
    qd: f64,
    gamma_init: f64,
    entries: Vec<HashEntry>,
    table: BTreeMap<HashKey, Vec<EntryId>>,
    pairs: PairTable,
}

/// Distances between labelled model feature pairs, for pruning scene pairs
/// that cannot belong to any indexed triple.
#[derive(Clone, Debug, Default, PartialEq)]
struct PairTable {
    by_labels: BTreeMap<(u32, u32), Vec<f64>>,
    max_distance: f64,
}

impl PairTable {
    fn insert(&mut self, a: u32, b: u32, d: f64) {
        let key = (a.min(b), a.max(b));
        let v = self.by_labels.entry(key).or_default();
        let pos = v.partition_point(|&x| x < d);
        if v.get(pos) != Some(&d) {
            v.insert(pos, d);
        }
        self.max_distance = self.max_distance.max(d);
    }

    fn consistent(&self, a: u32, b: u32, d: f64, tol: f64) -> bool {
        let Some(v) = self.by_labels.get(&(a.min(b), a.max(b))) else {
            return false;
        };
        let pos = v.partition_point(|&x| x < d - tol);
        v.get(pos).is_some_and(|&x| x <= d + tol)
    }
}

impl GeomHashIndex {
    pub fn new(qd: f64, gamma_init: f64) -> Result<Self> {
        if !(qd > 0.0 && qd.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "q_d must be > 0, got {qd}"
            )));
        }
        if !(gamma_init > 0.0 && gamma_init < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma_init must lie in (0, 1), got {gamma_init}"
            )));
        }
        Ok(GeomHashIndex {
            qd,
            gamma_init,
            entries: Vec::new(),
            table: BTreeMap::new(),
            pairs: PairTable::default(),
        })
    }

    pub fn qd(&self) -> f64 {
        self.qd
    }

    pub fn gamma_init(&self) -> f64 {
        self.gamma_init
    }

    pub fn entries(&self) -> &[HashEntry] {
        &self.entries
    }

    pub fn entry(&self, id: EntryId) -> Result<&HashEntry> {
        self.entries.get(id.0).ok_or(Error::UnknownEntry)
    }

    pub fn key_count(&self) -> usize {
        self.table.len()
    }

    pub fn keys(&self) -> impl Iterator<Item = (&HashKey, &[EntryId])> {
        self.table.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn entries_for(&self, key: &HashKey) -> &[EntryId] {
        self.table.get(key).map_or(&[], |v| v.as_slice())
    }

    /// Largest distance between two features of any indexed triple.
    pub fn max_pair_distance(&self) -> f64 {
        self.pairs.max_distance
    }

    /// Whether some indexed triple has a pair with these labels whose
    /// length is within `q_d` of `d`.
    pub fn pair_consistent(&self, a: u32, b: u32, d: f64) -> bool {
        self.pairs.consistent(a, b, d, self.qd)
    }

    /// Inserts one model triple. Collinear triples fix no pose and are
    /// skipped (returns `Ok(None)`).
    pub fn insert_triple(&mut self, class_id: u32, g3: &[Feature; 3]) -> Result<Option<EntryId>> {
        let order = canonical_order(g3)?;
        let points = order.map(|i| g3[i].location);
        if triangle_area(&points[0], &points[1], &points[2]) <= MIN_TRIPLE_AREA {
            return Ok(None);
        }
        let key = make_key(g3, self.qd)?;
        let id = EntryId(self.entries.len());
        self.entries.push(HashEntry {
            class_id,
            key,
            points,
            gamma: self.gamma_init,
            draws: 0,
            successes: 0,
        });
        let sides = opposite_sides(&points);
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            self.pairs.insert(key.labels[j], key.labels[k], sides[i]);
        }
        self.table.entry(key).or_default().push(id);
        self.renormalise(&key);
        Ok(Some(id))
    }

    /// Recomputes the weights of one key from the entries' counters.
    fn renormalise(&mut self, key: &HashKey) {
        let ids = &self.table[key];
        let raw: Vec<f64> = ids
            .iter()
            .map(|id| {
                let e = &self.entries[id.0];
                if e.draws == 0 {
                    self.gamma_init
                } else {
                    beta_mean(e.successes, e.draws)
                }
            })
            .collect();
        let total: f64 = raw.iter().sum();
        let scale = if total > GAMMA_CAP {
            GAMMA_CAP / total
        } else {
            1.0
        };
        for (id, r) in ids.iter().zip(raw) {
            self.entries[id.0].gamma = r * scale;
        }
    }

    /// Records one draw of an entry and returns its new weight.
    pub fn update_weights(&mut self, id: EntryId, success: bool) -> Result<f64> {
        let e = self.entries.get_mut(id.0).ok_or(Error::UnknownEntry)?;
        e.draws += 1;
        if success {
            e.successes += 1;
        }
        let key = e.key;
        self.renormalise(&key);
        Ok(self.entries[id.0].gamma)
    }

    /// Entries whose model triple matches the scene triple under some
    /// label-preserving correspondence, every side within `q_d`.
    pub fn matches(&self, g3: &[Feature; 3]) -> Result<Vec<QueryMatch>> {
        let pts = [g3[0].location, g3[1].location, g3[2].location];
        if pts[0] == pts[1] || pts[0] == pts[2] || pts[1] == pts[2] {
            return Err(Error::DegenerateTriple("coincident feature locations"));
        }
        let sides = opposite_sides(&pts);
        let mut labels_sorted = [g3[0].shape, g3[1].shape, g3[2].shape];
        labels_sorted.sort_unstable();

        let mut out: Vec<QueryMatch> = Vec::new();
        for perm in PERMUTATIONS {
            if perm.map(|i| g3[i].shape) != labels_sorted {
                continue;
            }
            let s = perm.map(|i| sides[i]);
            let centre = s.map(|l| quantise(l, self.qd));
            for d0 in -1..=1 {
                for d1 in -1..=1 {
                    for d2 in -1..=1 {
                        let key = HashKey {
                            labels: labels_sorted,
                            bins: [centre[0] + d0, centre[1] + d1, centre[2] + d2],
                        };
                        for &id in self.entries_for(&key) {
                            let ms = self.entries[id.0].sides();
                            if (0..3).all(|i| (ms[i] - s[i]).abs() <= self.qd) {
                                out.push(QueryMatch {
                                    entry: id,
                                    correspondence: perm,
                                });
                            }
                        }
                    }
                }
            }
        }
        out.sort_by(|a, b| {
            a.entry
                .cmp(&b.entry)
                .then(a.correspondence.cmp(&b.correspondence))
        });
        out.dedup();
        Ok(out)
    }

    /// Pose of a match, or `None` if the fitted residual exceeds `q_d·√3`.
    pub fn solve(&self, g3: &[Feature; 3], m: &QueryMatch) -> Option<QueryHit> {
        let e = &self.entries[m.entry.0];
        let dst = m.correspondence.map(|i| g3[i].location);
        let pose = solve_rigid_from_triple(&e.points, &dst).ok()?;
        if triple_rms_residual(&pose, &e.points, &dst) > self.qd * 3f64.sqrt() {
            return None;
        }
        Some(QueryHit {
            class_id: e.class_id,
            pose,
            gamma: e.gamma,
            entry: m.entry,
            correspondence: m.correspondence,
        })
    }

    /// All object hypotheses drawn by a scene triple.
    pub fn query(&self, g3: &[Feature; 3]) -> Result<Vec<QueryHit>> {
        Ok(self
            .matches(g3)?
            .iter()
            .filter_map(|m| self.solve(g3, m))
            .collect())
    }

    /// One line per entry in id order, so entry ids survive a round trip.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "ghash qd={} gamma_init={}", self.qd, self.gamma_init).unwrap();
        for e in &self.entries {
            let [s1, s2, s3] = e.key.labels;
            let [b1, b2, b3] = e.key.bins;
            write!(
                out,
                "entry {} {s1} {s2} {s3} {b1} {b2} {b3} {} {} {}",
                e.class_id, e.gamma, e.draws, e.successes
            )
            .unwrap();
            for p in &e.points {
                write!(out, " {} {} {}", p.x, p.y, p.z).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = content_lines(text);
        let (line, header) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 1, "empty index file"))?;
        let cur = LineCursor { path, line };
        let mut toks = header.split_whitespace();
        if toks.next() != Some("ghash") {
            return Err(cur.err("expected header 'ghash qd=<mm> gamma_init=<g>'"));
        }
        let qd: f64 = cur.keyed(toks.next(), "qd")?;
        let gamma_init: f64 = cur.keyed(toks.next(), "gamma_init")?;
        cur.done(toks)?;
        let mut index = GeomHashIndex::new(qd, gamma_init).map_err(|e| cur.err(e.to_string()))?;

        for (line, l) in lines {
            let cur = LineCursor { path, line };
            let mut toks = l.split_whitespace();
            match toks.next() {
                Some("entry") => {
                    let class_id: u32 = cur.num(toks.next(), "class id")?;
                    let mut labels = [0u32; 3];
                    for v in &mut labels {
                        *v = cur.num(toks.next(), "label")?;
                    }
                    let mut bins = [0i64; 3];
                    for v in &mut bins {
                        *v = cur.num(toks.next(), "bin")?;
                    }
                    let key = HashKey { labels, bins };
                    let gamma = cur.finite(toks.next(), "gamma")?;
                    if !(gamma > 0.0 && gamma < 1.0) {
                        return Err(cur.err(format!("gamma must lie in (0, 1), got {gamma}")));
                    }
                    let draws: u64 = cur.num(toks.next(), "draws")?;
                    let successes: u64 = cur.num(toks.next(), "successes")?;
                    if successes > draws {
                        return Err(cur.err("successes exceed draws"));
                    }
                    let mut points = [Point3::origin(); 3];
                    for p in &mut points {
                        for k in 0..3 {
                            p[k] = cur.finite(toks.next(), "coordinate")?;
                        }
                    }
                    let feats = [0, 1, 2].map(|i| Feature {
                        shape: key.labels[i],
                        location: points[i],
                    });
                    if make_key(&feats, qd).map_err(|e| cur.err(e.to_string()))? != key {
                        return Err(cur.err("entry geometry does not match its key"));
                    }
                    if canonical_order(&feats).map_err(|e| cur.err(e.to_string()))? != [0, 1, 2] {
                        return Err(cur.err("entry points are not in canonical order"));
                    }
                    let id = EntryId(index.entries.len());
                    index.entries.push(HashEntry {
                        class_id,
                        key,
                        points,
                        gamma,
                        draws,
                        successes,
                    });
                    let sides = opposite_sides(&points);
                    for i in 0..3 {
                        index.pairs.insert(
                            key.labels[(i + 1) % 3],
                            key.labels[(i + 2) % 3],
                            sides[i],
                        );
                    }
                    index.table.entry(key).or_default().push(id);
                }
                Some(other) => return Err(cur.err(format!("unknown record '{other}'"))),
                None => unreachable!(),
            }
            cur.done(toks)?;
        }
        for (key, ids) in &index.table {
            let total: f64 = ids.iter().map(|id| index.entries[id.0].gamma).sum();
            if total >= 1.0 {
                return Err(Error::parse(
                    path,
                    0,
                    format!("weights of key {key:?} sum to {total} >= 1"),
                ));
            }
        }
        Ok(index)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_file(path)?, path)
    }
}

const PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// Indexes every 3-subset of each model's features, one per orbit under
/// the model's symmetries.
pub fn build_index(models: &[ObjectModel], qd: f64, gamma_init: f64) -> Result<GeomHashIndex> {
    let mut index = GeomHashIndex::new(qd, gamma_init)?;
    for m in models {
        let f = m.features();
        if f.len() < 3 {
            return Err(Error::InvalidModel(format!(
                "model {} has {} features; at least 3 are needed",
                m.class_id(),
                f.len()
            )));
        }
        // Triples related by a model symmetry draw equivalent poses; only
        // the first of each orbit is stored.
        let syms = m.symmetries();
        let image: Vec<Vec<usize>> = syms
            .iter()
            .map(|s| {
                f.iter()
                    .map(|x| {
                        let q = s.apply(&x.location);
                        f.iter()
                            .position(|y| y.shape == x.shape && (y.location - q).norm() < 1e-6)
                            .expect("symmetry maps features onto features")
                    })
                    .collect()
            })
            .collect();
        let mut covered = std::collections::HashSet::new();
        for i in 0..f.len() {
            for j in i + 1..f.len() {
                for k in j + 1..f.len() {
                    if covered.contains(&[i, j, k]) {
                        continue;
                    }
                    for map in &image {
                        let mut t = [map[i], map[j], map[k]];
                        t.sort_unstable();
                        covered.insert(t);
                    }
                    index.insert_triple(m.class_id(), &[f[i], f[j], f[k]])?;
                }
            }
        }
    }
    Ok(index)
}
