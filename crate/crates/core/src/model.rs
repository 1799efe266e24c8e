use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{solve_rigid_from_triple, triangle_area, Point3, Pose};
use crate::mesh::TriMesh;
use crate::shapes::Shape;
use crate::textio::{content_lines, read_file, LineCursor};

/// Tolerance for model features lying on the mesh surface (mm).
pub const FEATURE_SURFACE_TOL: f64 = 1e-6;

/// A point feature: shape class and location.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Feature {
    pub shape: u32,
    pub location: Point3,
}

/// Rigid object: watertight mesh plus labelled surface features, all in
/// model coordinates.
#[derive(Clone, Debug)]
pub struct ObjectModel {
    class_id: u32,
    mesh: TriMesh,
    features: Vec<Feature>,
}

impl ObjectModel {
    pub fn new(class_id: u32, mesh: TriMesh, features: Vec<Feature>) -> Result<Self> {
        if class_id < 1 {
            return Err(Error::InvalidModel("class id must be >= 1".into()));
        }
        mesh.require_watertight()?;
        for f in &features {
            if f.shape < 1 {
                return Err(Error::InvalidModel(format!(
                    "feature at {:?} has shape class 0 (reserved for non-features)",
                    f.location
                )));
            }
            let (d, _, _) = mesh.nearest(&f.location).expect("non-empty mesh");
            if d > FEATURE_SURFACE_TOL {
                return Err(Error::InvalidModel(format!(
                    "feature at {:?} is {d} mm off the surface",
                    f.location
                )));
            }
        }
        Ok(ObjectModel {
            class_id,
            mesh,
            features,
        })
    }

    pub fn from_shape(class_id: u32, shape: Shape) -> Result<Self> {
        let features = shape
            .features
            .into_iter()
            .map(|(shape, location)| Feature { shape, location })
            .collect();
        Self::new(class_id, shape.mesh, features)
    }

    pub fn class_id(&self) -> u32 {
        self.class_id
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    /// Rigid motions mapping both the feature set (with labels) and the
    /// mesh vertex set onto themselves, identity first.
    pub fn symmetries(&self) -> Vec<Pose> {
        const TOL: f64 = 1e-6;
        let f = &self.features;
        let mut out = vec![Pose::identity()];
        // Widest triangle of features as the reference frame.
        let mut base = None;
        let mut best = 0.0;
        for i in 0..f.len() {
            for j in i + 1..f.len() {
                for k in j + 1..f.len() {
                    let a = triangle_area(&f[i].location, &f[j].location, &f[k].location);
                    if a > best {
                        best = a;
                        base = Some([i, j, k]);
                    }
                }
            }
        }
        let Some(base) = base else {
            return out;
        };
        let src = base.map(|i| f[i].location);
        let dist = |a: usize, b: usize| (f[a].location - f[b].location).norm();
        let maps_onto = |pose: &Pose, set: &[(u32, Point3)]| {
            set.iter().all(|&(s, p)| {
                let q = pose.apply(&p);
                set.iter().any(|(t, r)| *t == s && (r - q).norm() < TOL)
            })
        };
        let fset: Vec<(u32, Point3)> = f.iter().map(|x| (x.shape, x.location)).collect();
        let vset: Vec<(u32, Point3)> = self.mesh.vertices().iter().map(|v| (0, *v)).collect();
        for a in 0..f.len() {
            for b in 0..f.len() {
                for c in 0..f.len() {
                    let img = [a, b, c];
                    if a == b
                        || b == c
                        || a == c
                        || (0..3).any(|x| f[img[x]].shape != f[base[x]].shape)
                        || [(0, 1), (1, 2), (0, 2)].iter().any(|&(x, y)| {
                            (dist(img[x], img[y]) - dist(base[x], base[y])).abs() > TOL
                        })
                    {
                        continue;
                    }
                    let Ok(pose) = solve_rigid_from_triple(&src, &img.map(|i| f[i].location))
                    else {
                        continue;
                    };
                    if out.iter().any(|q| {
                        q.rotation_angle_to(&pose) < 1e-9 && q.translation_distance_to(&pose) < TOL
                    }) {
                        continue;
                    }
                    if maps_onto(&pose, &fset) && maps_onto(&pose, &vset) {
                        out.push(pose);
                    }
                }
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "model {}", self.class_id).unwrap();
        for v in self.mesh.vertices() {
            writeln!(out, "v {} {} {}", v.x, v.y, v.z).unwrap();
        }
        for t in self.mesh.triangles() {
            writeln!(out, "t {} {} {}", t[0], t[1], t[2]).unwrap();
        }
        for f in &self.features {
            let p = f.location;
            writeln!(out, "f {} {} {} {}", f.shape, p.x, p.y, p.z).unwrap();
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = content_lines(text);
        let (line, header) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 1, "empty model file"))?;
        let cur = LineCursor { path, line };
        let mut toks = header.split_whitespace();
        if toks.next() != Some("model") {
            return Err(cur.err("expected header 'model <class_id>'"));
        }
        let class_id: u32 = cur.num(toks.next(), "class id")?;
        cur.done(toks)?;

        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        let mut features = Vec::new();
        for (line, l) in lines {
            let cur = LineCursor { path, line };
            let mut toks = l.split_whitespace();
            match toks.next() {
                Some("v") => {
                    let x = cur.finite(toks.next(), "x")?;
                    let y = cur.finite(toks.next(), "y")?;
                    let z = cur.finite(toks.next(), "z")?;
                    vertices.push(Point3::new(x, y, z));
                }
                Some("t") => {
                    let i: usize = cur.num(toks.next(), "vertex index")?;
                    let j: usize = cur.num(toks.next(), "vertex index")?;
                    let k: usize = cur.num(toks.next(), "vertex index")?;
                    triangles.push([i, j, k]);
                }
                Some("f") => {
                    let shape: u32 = cur.num(toks.next(), "shape class")?;
                    let x = cur.finite(toks.next(), "x")?;
                    let y = cur.finite(toks.next(), "y")?;
                    let z = cur.finite(toks.next(), "z")?;
                    features.push(Feature {
                        shape,
                        location: Point3::new(x, y, z),
                    });
                }
                Some(other) => return Err(cur.err(format!("unknown record '{other}'"))),
                None => unreachable!(),
            }
            cur.done(toks)?;
        }
        let mesh =
            TriMesh::new(vertices, triangles).map_err(|e| Error::parse(path, 0, e.to_string()))?;
        ObjectModel::new(class_id, mesh, features).map_err(|e| Error::parse(path, 0, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_file(path)?, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    #[test]
    fn text_round_trip() {
        let m = ObjectModel::from_shape(3, shapes::notched_cube(130.0, 40.0)).unwrap();
        let text = m.to_text();
        let back = ObjectModel::parse(&text, Path::new("mem")).unwrap();
        assert_eq!(back.class_id(), 3);
        assert_eq!(back.features(), m.features());
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn open_mesh_is_rejected_at_load() {
        let text = "model 1\nv 0 0 0\nv 1 0 0\nv 0 1 0\nt 0 1 2\n";
        let err = ObjectModel::parse(text, Path::new("open.txt")).unwrap_err();
        assert!(err.to_string().contains("watertight"), "{err}");
    }

    #[test]
    fn feature_off_surface_is_rejected() {
        let mut text = ObjectModel::from_shape(1, shapes::box_shape(10.0, 10.0, 10.0))
            .unwrap()
            .to_text();
        text.push_str("f 1 0 0 0\n");
        assert!(ObjectModel::parse(&text, Path::new("m")).is_err());
    }

    #[test]
    fn bad_token_reports_line() {
        let text = "model 1\nv 0 0 zero\n";
        let err = ObjectModel::parse(text, Path::new("m.txt")).unwrap_err();
        assert!(err.to_string().starts_with("m.txt:2:"), "{err}");
    }

    #[test]
    fn symmetry_groups() {
        let count = |shape| {
            ObjectModel::from_shape(1, shape)
                .unwrap()
                .symmetries()
                .len()
        };
        assert_eq!(count(shapes::notched_cube(130.0, 40.0)), 24);
        assert_eq!(count(shapes::cross_slab(130.0, 40.0)), 8);
        assert_eq!(count(shapes::box_shape(100.0, 60.0, 40.0)), 4);
        assert_eq!(count(shapes::box_shape(50.0, 50.0, 50.0)), 24);
    }
}
