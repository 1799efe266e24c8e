//! Closed triangle meshes with inward normals, an AABB tree for
//! nearest-surface and ray queries, and point classification against the
//! visible-surface shell of a posed object.

use std::collections::{HashMap, VecDeque};
use std::sync::OnceLock;

use nalgebra::Unit;

use crate::error::{Error, Result};
use crate::geometry::{closest_point_on_triangle, ray_triangle, Point3, Pose, UnitVec3, Vector3};

/// Triangle mesh; triangles are counter-clockwise seen from outside, so the
/// inward normal is `-(b-a)×(c-a)` normalised.
#[derive(Clone, Debug)]
pub struct TriMesh {
    vertices: Vec<Point3>,
    triangles: Vec<[usize; 3]>,
    normals: Vec<UnitVec3>,
    watertight: bool,
    tree: AabbTree,
    voxels: OnceLock<VoxelMap>,
}

impl TriMesh {
    /// Validates indices and triangle areas and computes inward normals.
    /// Watertightness is recorded, not required; [`TriMesh::require_watertight`]
    /// enforces it.
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("mesh has no triangles".into()));
        }
        if let Some(v) = vertices
            .iter()
            .find(|v| !v.coords.iter().all(|c| c.is_finite()))
        {
            return Err(Error::InvalidMesh(format!("non-finite vertex {v:?}")));
        }
        let mut normals = Vec::with_capacity(triangles.len());
        for (i, t) in triangles.iter().enumerate() {
            if t.iter().any(|&k| k >= vertices.len()) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {i} references a vertex out of range"
                )));
            }
            let [a, b, c] = t.map(|k| vertices[k]);
            let outward = (b - a).cross(&(c - a));
            let len = outward.norm();
            if len < 1e-12 {
                return Err(Error::InvalidMesh(format!("triangle {i} is degenerate")));
            }
            normals.push(Unit::new_unchecked(-outward / len));
        }
        let watertight = edges_are_manifold(&triangles);
        let tree = AabbTree::build(&vertices, &triangles);
        let mesh = TriMesh {
            vertices,
            triangles,
            normals,
            watertight,
            tree,
            voxels: OnceLock::new(),
        };
        if mesh.watertight && mesh.signed_volume() <= 0.0 {
            return Err(Error::InvalidMesh(
                "triangles are oriented clockwise seen from outside (inward normals would point out)"
                    .into(),
            ));
        }
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn normals(&self) -> &[UnitVec3] {
        &self.normals
    }

    pub fn is_watertight(&self) -> bool {
        self.watertight
    }

    pub fn require_watertight(&self) -> Result<()> {
        if self.watertight {
            Ok(())
        } else {
            Err(Error::NotWatertight(
                "every edge must be shared by exactly two oppositely oriented triangles".into(),
            ))
        }
    }

    pub fn triangle(&self, i: usize) -> [Point3; 3] {
        self.triangles[i].map(|k| self.vertices[k])
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangle(i);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|i| self.triangle_area(i))
            .sum()
    }

    /// Enclosed volume (divergence theorem); positive for a correctly
    /// oriented closed mesh.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|k| self.vertices[k].coords);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn bounds(&self) -> (Point3, Point3) {
        (self.tree.nodes[0].min, self.tree.nodes[0].max)
    }

    /// Nearest point on any triangle accepted by `filter`, as
    /// `(distance, point, triangle index)`.
    pub fn nearest_where(
        &self,
        q: &Point3,
        filter: impl Fn(usize) -> bool,
    ) -> Option<(f64, Point3, usize)> {
        let mut best: Option<(f64, Point3, usize)> = None;
        let mut best_d2 = f64::INFINITY;
        let mut stack = NodeStack::new();
        while let Some(ni) = stack.pop() {
            let node = &self.tree.nodes[ni];
            if node.box_distance_sq(q) >= best_d2 {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, len } => {
                    for &ti in &self.tree.order[start..start + len] {
                        if !filter(ti) {
                            continue;
                        }
                        let [a, b, c] = self.triangle(ti);
                        let p = closest_point_on_triangle(q, &a, &b, &c);
                        let d2 = (p - q).norm_squared();
                        if d2 < best_d2 {
                            best_d2 = d2;
                            best = Some((0.0, p, ti));
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    let dl = self.tree.nodes[left].box_distance_sq(q);
                    let dr = self.tree.nodes[right].box_distance_sq(q);
                    // Visit the nearer child first.
                    if dl < dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        best.map(|(_, p, ti)| (best_d2.sqrt(), p, ti))
    }

    /// Nearest surface point over all triangles.
    pub fn nearest(&self, q: &Point3) -> Option<(f64, Point3, usize)> {
        self.nearest_where(q, |_| true)
    }

    /// Nearest point on a triangle whose inward normal satisfies `n·g > 0`.
    pub fn nearest_front_facing(&self, q: &Point3, gaze: &Vector3) -> Option<(f64, Point3, usize)> {
        self.nearest_where(q, |ti| self.normals[ti].dot(gaze) > 0.0)
    }

    /// First hit along the ray with parameter in `(t_min, t_max)`.
    pub fn ray_first_hit(
        &self,
        origin: &Point3,
        dir: &Vector3,
        t_min: f64,
        t_max: f64,
    ) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        let mut limit = t_max;
        let inv = dir.map(|d| 1.0 / d);
        let mut stack = NodeStack::new();
        while let Some(ni) = stack.pop() {
            let node = &self.tree.nodes[ni];
            if !node.ray_overlaps(origin, &inv, t_min, limit) {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, len } => {
                    for &ti in &self.tree.order[start..start + len] {
                        let [a, b, c] = self.triangle(ti);
                        if let Some(t) = ray_triangle(origin, dir, &a, &b, &c, t_min, limit) {
                            limit = t;
                            best = Some((t, ti));
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        best
    }

    fn ray_crossings(&self, origin: &Point3, dir: &Vector3) -> usize {
        let inv = dir.map(|d| 1.0 / d);
        let mut count = 0;
        let mut stack = NodeStack::new();
        while let Some(ni) = stack.pop() {
            let node = &self.tree.nodes[ni];
            if !node.ray_overlaps(origin, &inv, 0.0, f64::INFINITY) {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, len } => {
                    for &ti in &self.tree.order[start..start + len] {
                        let [a, b, c] = self.triangle(ti);
                        if ray_triangle(origin, dir, &a, &b, &c, 0.0, f64::INFINITY).is_some() {
                            count += 1;
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        count
    }

    /// Point-in-volume by ray parity, majority vote over three generic
    /// directions so that a ray grazing an edge cannot flip the answer.
    pub fn contains(&self, q: &Point3) -> bool {
        let (lo, hi) = self.bounds();
        if (0..3).any(|k| q[k] < lo[k] || q[k] > hi[k]) {
            return false;
        }
        #[allow(clippy::approx_constant)]
        const DIRS: [[f64; 3]; 3] = [
            [0.5773502691896258, 0.5773502691896258, 0.5773502691896258],
            [-0.3141592653589793, 0.7071067811865476, 0.6335772165074031],
            [0.8017837257372732, -0.2672612419124244, -0.5345224838248488],
        ];
        let votes = DIRS
            .iter()
            .filter(|d| {
                let dir = Vector3::new(d[0], d[1], d[2]).normalize();
                self.ray_crossings(q, &dir) % 2 == 1
            })
            .count();
        votes >= 2
    }
}

/// Depth-first traversal stack. A median-split tree over fewer than 2⁶⁰
/// triangles is shallower than the capacity.
struct NodeStack {
    items: [usize; 64],
    len: usize,
}

impl NodeStack {
    fn new() -> Self {
        NodeStack {
            items: [0; 64],
            len: 1,
        }
    }

    fn push(&mut self, v: usize) {
        self.items[self.len] = v;
        self.len += 1;
    }

    fn pop(&mut self) -> Option<usize> {
        self.len = self.len.checked_sub(1)?;
        Some(self.items[self.len])
    }
}

const OUTSIDE: u8 = 0;
const INSIDE: u8 = 1;
const BOUNDARY: u8 = 2;

/// Cells along the longest side of a voxel map.
const VOXEL_RESOLUTION: f64 = 48.0;

/// Coarse model-frame voxelisation. Cells touched by a triangle are
/// boundary cells; every other cell lies wholly inside or outside. Each cell
/// also stores its Chebyshev distance, in cells, to the nearest boundary
/// cell, so a point in a cell at distance `k` is at least `(k-1)·h` from the
/// surface.
#[derive(Clone, Debug)]
struct VoxelMap {
    lo: Point3,
    h: f64,
    dims: [usize; 3],
    state: Vec<u8>,
    dist: Vec<u8>,
}

impl VoxelMap {
    fn build(mesh: &TriMesh) -> Self {
        let (blo, bhi) = mesh.bounds();
        let extent = bhi - blo;
        let h = (extent.max() / VOXEL_RESOLUTION).max(1e-9);
        let lo = Point3::from(blo.coords - Vector3::repeat(h));
        let dims = [0, 1, 2].map(|k| (extent[k] / h).ceil() as usize + 3);
        let at = |i: usize, j: usize, k: usize| (i * dims[1] + j) * dims[2] + k;
        let mut state = vec![OUTSIDE; dims[0] * dims[1] * dims[2]];
        let pad = 1e-7 * h;
        for ti in 0..mesh.triangles.len() {
            let [a, b, c] = mesh.triangle(ti);
            let (mut r0, mut r1) = ([0usize; 3], [0usize; 3]);
            for k in 0..3 {
                let mn = a[k].min(b[k]).min(c[k]) - pad;
                let mx = a[k].max(b[k]).max(c[k]) + pad;
                r0[k] = (((mn - lo[k]) / h).floor().max(0.0) as usize).min(dims[k] - 1);
                r1[k] = (((mx - lo[k]) / h).floor().max(0.0) as usize).min(dims[k] - 1);
            }
            for i in r0[0]..=r1[0] {
                for j in r0[1]..=r1[1] {
                    for k in r0[2]..=r1[2] {
                        state[at(i, j, k)] = BOUNDARY;
                    }
                }
            }
        }
        // A run of non-boundary cells along a column meets no triangle, so
        // one containment test decides the whole run.
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                let mut k = 0;
                while k < dims[2] {
                    if state[at(i, j, k)] == BOUNDARY {
                        k += 1;
                        continue;
                    }
                    let centre = Point3::new(
                        lo.x + (i as f64 + 0.5) * h,
                        lo.y + (j as f64 + 0.5) * h,
                        lo.z + (k as f64 + 0.5) * h,
                    );
                    let s = if mesh.contains(&centre) {
                        INSIDE
                    } else {
                        OUTSIDE
                    };
                    while k < dims[2] && state[at(i, j, k)] != BOUNDARY {
                        state[at(i, j, k)] = s;
                        k += 1;
                    }
                }
            }
        }
        let mut dist = vec![u8::MAX; state.len()];
        let mut queue = VecDeque::new();
        for (c, &s) in state.iter().enumerate() {
            if s == BOUNDARY {
                dist[c] = 0;
                queue.push_back(c);
            }
        }
        while let Some(c) = queue.pop_front() {
            let (i, j, k) = (
                c / (dims[1] * dims[2]),
                (c / dims[2]) % dims[1],
                c % dims[2],
            );
            let next = dist[c].saturating_add(1);
            for ni in i.saturating_sub(1)..=(i + 1).min(dims[0] - 1) {
                for nj in j.saturating_sub(1)..=(j + 1).min(dims[1] - 1) {
                    for nk in k.saturating_sub(1)..=(k + 1).min(dims[2] - 1) {
                        let nc = at(ni, nj, nk);
                        if dist[nc] > next {
                            dist[nc] = next;
                            queue.push_back(nc);
                        }
                    }
                }
            }
        }
        VoxelMap {
            lo,
            h,
            dims,
            state,
            dist,
        }
    }

    /// Cell state and a lower bound on the distance to the surface; `None`
    /// outside the map, which encloses the mesh.
    fn lookup(&self, q: &Point3) -> Option<(u8, f64)> {
        let mut idx = [0usize; 3];
        for k in 0..3 {
            let f = ((q[k] - self.lo[k]) / self.h).floor();
            if !(f >= 0.0 && f < self.dims[k] as f64) {
                return None;
            }
            idx[k] = f as usize;
        }
        let c = (idx[0] * self.dims[1] + idx[1]) * self.dims[2] + idx[2];
        let d = self.dist[c] as f64;
        Some((self.state[c], ((d - 1.0) * self.h).max(0.0)))
    }
}

fn edges_are_manifold(triangles: &[[usize; 3]]) -> bool {
    let mut directed: HashMap<(usize, usize), u32> = HashMap::new();
    for t in triangles {
        for k in 0..3 {
            *directed.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
        }
    }
    directed
        .iter()
        .all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
}

#[derive(Clone, Debug)]
enum NodeKind {
    Leaf { start: usize, len: usize },
    Inner { left: usize, right: usize },
}

#[derive(Clone, Debug)]
struct Node {
    min: Point3,
    max: Point3,
    kind: NodeKind,
}

impl Node {
    fn box_distance_sq(&self, q: &Point3) -> f64 {
        let mut d2 = 0.0;
        for k in 0..3 {
            let v = if q[k] < self.min[k] {
                self.min[k] - q[k]
            } else if q[k] > self.max[k] {
                q[k] - self.max[k]
            } else {
                0.0
            };
            d2 += v * v;
        }
        d2
    }

    fn ray_overlaps(&self, origin: &Point3, inv: &Vector3, t_min: f64, t_max: f64) -> bool {
        let mut lo = t_min;
        let mut hi = t_max;
        for k in 0..3 {
            // Pad slightly so rays in the plane of a flat box are not culled.
            let pad = 1e-9 * (1.0 + self.max[k].abs().max(self.min[k].abs()));
            let t1 = (self.min[k] - pad - origin[k]) * inv[k];
            let t2 = (self.max[k] + pad - origin[k]) * inv[k];
            let (a, b) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            if a.is_nan() || b.is_nan() {
                // origin on a slab boundary with zero direction component
                if origin[k] < self.min[k] - pad || origin[k] > self.max[k] + pad {
                    return false;
                }
                continue;
            }
            lo = lo.max(a);
            hi = hi.min(b);
            if lo > hi {
                return false;
            }
        }
        true
    }
}

/// Median-split bounding-volume hierarchy over triangles.
#[derive(Clone, Debug)]
struct AabbTree {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

const LEAF_SIZE: usize = 4;

impl AabbTree {
    fn build(vertices: &[Point3], triangles: &[[usize; 3]]) -> Self {
        let centroids: Vec<Point3> = triangles
            .iter()
            .map(|t| {
                Point3::from(
                    (vertices[t[0]].coords + vertices[t[1]].coords + vertices[t[2]].coords) / 3.0,
                )
            })
            .collect();
        let mut tree = AabbTree {
            nodes: Vec::new(),
            order: (0..triangles.len()).collect(),
        };
        tree.build_node(vertices, triangles, &centroids, 0, triangles.len());
        tree
    }

    fn build_node(
        &mut self,
        vertices: &[Point3],
        triangles: &[[usize; 3]],
        centroids: &[Point3],
        start: usize,
        end: usize,
    ) -> usize {
        let mut min = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut max = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &ti in &self.order[start..end] {
            for &vi in &triangles[ti] {
                let v = vertices[vi];
                for k in 0..3 {
                    min[k] = min[k].min(v[k]);
                    max[k] = max[k].max(v[k]);
                }
            }
        }
        let idx = self.nodes.len();
        self.nodes.push(Node {
            min,
            max,
            kind: NodeKind::Leaf {
                start,
                len: end - start,
            },
        });
        if end - start <= LEAF_SIZE {
            return idx;
        }
        let extent = max - min;
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };
        let mid = (start + end) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centroids[a][axis]
                .total_cmp(&centroids[b][axis])
                .then(a.cmp(&b))
        });
        let left = self.build_node(vertices, triangles, centroids, start, mid);
        let right = self.build_node(vertices, triangles, centroids, mid, end);
        self.nodes[idx].kind = NodeKind::Inner { left, right };
        idx
    }
}

/// Membership of a point relative to a posed object.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PointClass {
    /// Within the shell around a sensor-facing surface; carries the inward
    /// normal (world frame) of the nearest such surface point.
    Surface {
        normal: UnitVec3,
    },
    Interior,
    Outside,
}

/// Classifies points against one posed mesh. Construct once per pose and
/// reuse for all data points.
pub struct ShellClassifier<'a> {
    mesh: &'a TriMesh,
    pose: Pose,
    inverse: Pose,
    local_gaze: Vector3,
    shell: f64,
    occlusion: bool,
    lo: Point3,
    hi: Point3,
}

impl<'a> ShellClassifier<'a> {
    pub fn new(
        mesh: &'a TriMesh,
        pose: &Pose,
        gaze: &UnitVec3,
        shell_halfwidth: f64,
        occlusion: bool,
    ) -> Result<Self> {
        mesh.require_watertight()?;
        if !(shell_halfwidth > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "shell half-width must be positive, got {shell_halfwidth}"
            )));
        }
        let inverse = pose.inverse();
        let (mut lo, mut hi) = mesh.bounds();
        for k in 0..3 {
            lo[k] -= shell_halfwidth;
            hi[k] += shell_halfwidth;
        }
        Ok(ShellClassifier {
            mesh,
            pose: *pose,
            inverse,
            local_gaze: inverse.apply_vector(gaze),
            shell: shell_halfwidth,
            occlusion,
            lo,
            hi,
        })
    }

    pub fn classify(&self, pt: &Point3) -> PointClass {
        let q = self.inverse.apply(pt);
        if (0..3).any(|k| q[k] < self.lo[k] || q[k] > self.hi[k]) {
            return PointClass::Outside;
        }
        let voxels = self.mesh.voxels.get_or_init(|| VoxelMap::build(self.mesh));
        // Beyond the map the point is outside the mesh but may still lie
        // within a wide shell.
        let (state, clearance) = voxels.lookup(&q).unwrap_or((OUTSIDE, 0.0));
        if clearance <= self.shell {
            if let Some((dist, foot, ti)) = self.mesh.nearest_front_facing(&q, &self.local_gaze) {
                if dist <= self.shell && (!self.occlusion || !self.occluded(&foot)) {
                    let n = self.pose.apply_vector(&self.mesh.normals[ti]);
                    return PointClass::Surface {
                        normal: Unit::new_normalize(n),
                    };
                }
            }
        }
        let inside = match state {
            INSIDE => true,
            OUTSIDE => false,
            _ => self.mesh.contains(&q),
        };
        if inside {
            PointClass::Interior
        } else {
            PointClass::Outside
        }
    }

    /// Whether the mesh blocks the line of sight from `foot` (model frame)
    /// back towards the sensor.
    fn occluded(&self, foot: &Point3) -> bool {
        let dir = -self.local_gaze;
        self.mesh
            .ray_first_hit(foot, &dir, 1e-6, f64::INFINITY)
            .is_some()
    }
}

/// One-shot classification of `pt` against `mesh` posed by `pose`.
pub fn classify_point(
    mesh: &TriMesh,
    pose: &Pose,
    pt: &Point3,
    gaze: &UnitVec3,
    shell_halfwidth: f64,
) -> Result<PointClass> {
    Ok(ShellClassifier::new(mesh, pose, gaze, shell_halfwidth, false)?.classify(pt))
}
