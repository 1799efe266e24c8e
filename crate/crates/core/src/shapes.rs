//! Procedural test objects: boxes, voxel solids (the notched cube and its
//! cross-shaped slab) and UV spheres. All are centred on the origin.

use std::collections::HashMap;

use crate::geometry::Point3;
use crate::mesh::TriMesh;

/// Shape class of a convex rectangular corner (one filled octant).
pub const CONVEX_CORNER: u32 = 1;
/// Shape class of a concave rectangular corner (seven filled octants).
pub const CONCAVE_CORNER: u32 = 2;

/// Mesh plus labelled point features in model coordinates.
#[derive(Clone, Debug)]
pub struct Shape {
    pub mesh: TriMesh,
    pub features: Vec<(u32, Point3)>,
}

pub fn box_mesh(sx: f64, sy: f64, sz: f64) -> TriMesh {
    box_shape(sx, sy, sz).mesh
}

/// Axis-aligned box; its eight vertices are convex corners.
pub fn box_shape(sx: f64, sy: f64, sz: f64) -> Shape {
    voxel_solid(
        &[-sx / 2.0, sx / 2.0],
        &[-sy / 2.0, sy / 2.0],
        &[-sz / 2.0, sz / 2.0],
        |_, _, _| true,
    )
}

/// Cube of edge `size` with a cube of edge `notch` removed at each of its
/// eight corners.
pub fn notched_cube(size: f64, notch: f64) -> Shape {
    let h = size / 2.0;
    let s = [-h, -h + notch, h - notch, h];
    voxel_solid(&s, &s, &s, |i, j, k| {
        let corner = |x| x != 1;
        !(corner(i) && corner(j) && corner(k))
    })
}

/// The bottom layer (thickness `notch`) of [`notched_cube`]: a cross-shaped
/// slab, centred on the origin.
pub fn cross_slab(size: f64, notch: f64) -> Shape {
    let h = size / 2.0;
    let s = [-h, -h + notch, h - notch, h];
    let z = [-notch / 2.0, notch / 2.0];
    voxel_solid(&s, &s, &z, |i, j, _| !(i != 1 && j != 1))
}

type Offset = (isize, isize, isize);
type Corner = (usize, usize, usize);

/// Union of the filled cells of a rectilinear grid. `xs`, `ys`, `zs` are the
/// cell boundaries; `filled(i, j, k)` selects cells. Grid vertices with one
/// filled adjacent cell become convex corners, with seven concave corners.
pub fn voxel_solid(
    xs: &[f64],
    ys: &[f64],
    zs: &[f64],
    filled: impl Fn(usize, usize, usize) -> bool,
) -> Shape {
    let (nx, ny, nz) = (xs.len() - 1, ys.len() - 1, zs.len() - 1);
    let occ = |i: isize, j: isize, k: isize| -> bool {
        i >= 0
            && j >= 0
            && k >= 0
            && (i as usize) < nx
            && (j as usize) < ny
            && (k as usize) < nz
            && filled(i as usize, j as usize, k as usize)
    };

    let mut vertex_ids: HashMap<(usize, usize, usize), usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut vid = |i: usize, j: usize, k: usize, vertices: &mut Vec<Point3>| -> usize {
        *vertex_ids.entry((i, j, k)).or_insert_with(|| {
            vertices.push(Point3::new(xs[i], ys[j], zs[k]));
            vertices.len() - 1
        })
    };

    let mut triangles = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if !filled(i, j, k) {
                    continue;
                }
                let (ii, jj, kk) = (i as isize, j as isize, k as isize);
                // Each face as four grid corners ordered counter-clockwise
                // when seen from outside the cell.
                let faces: [(Offset, [Corner; 4]); 6] = [
                    (
                        (-1, 0, 0),
                        [(i, j, k), (i, j, k + 1), (i, j + 1, k + 1), (i, j + 1, k)],
                    ),
                    (
                        (1, 0, 0),
                        [
                            (i + 1, j, k),
                            (i + 1, j + 1, k),
                            (i + 1, j + 1, k + 1),
                            (i + 1, j, k + 1),
                        ],
                    ),
                    (
                        (0, -1, 0),
                        [(i, j, k), (i + 1, j, k), (i + 1, j, k + 1), (i, j, k + 1)],
                    ),
                    (
                        (0, 1, 0),
                        [
                            (i, j + 1, k),
                            (i, j + 1, k + 1),
                            (i + 1, j + 1, k + 1),
                            (i + 1, j + 1, k),
                        ],
                    ),
                    (
                        (0, 0, -1),
                        [(i, j, k), (i, j + 1, k), (i + 1, j + 1, k), (i + 1, j, k)],
                    ),
                    (
                        (0, 0, 1),
                        [
                            (i, j, k + 1),
                            (i + 1, j, k + 1),
                            (i + 1, j + 1, k + 1),
                            (i, j + 1, k + 1),
                        ],
                    ),
                ];
                for ((di, dj, dk), quad) in faces {
                    if occ(ii + di, jj + dj, kk + dk) {
                        continue;
                    }
                    let q = quad.map(|(a, b, c)| vid(a, b, c, &mut vertices));
                    triangles.push([q[0], q[1], q[2]]);
                    triangles.push([q[0], q[2], q[3]]);
                }
            }
        }
    }

    let mut features = Vec::new();
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                let (ii, jj, kk) = (i as isize, j as isize, k as isize);
                let mut n = 0;
                for dk in [-1, 0] {
                    for dj in [-1, 0] {
                        for di in [-1, 0] {
                            n += occ(ii + di, jj + dj, kk + dk) as usize;
                        }
                    }
                }
                let class = match n {
                    1 => CONVEX_CORNER,
                    7 => CONCAVE_CORNER,
                    _ => continue,
                };
                features.push((class, Point3::new(xs[i], ys[j], zs[k])));
            }
        }
    }

    let mesh = TriMesh::new(vertices, triangles).expect("voxel solid produces a valid mesh");
    Shape { mesh, features }
}

/// UV sphere with `rings` latitude bands and `segments` longitude sectors.
/// The poles lie on the z axis.
pub fn uv_sphere(radius: f64, rings: usize, segments: usize) -> TriMesh {
    assert!(rings >= 2 && segments >= 3);
    let mut vertices = vec![Point3::new(0.0, 0.0, radius)];
    for r in 1..rings {
        let theta = std::f64::consts::PI * r as f64 / rings as f64;
        for s in 0..segments {
            let phi = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
            vertices.push(Point3::new(
                radius * theta.sin() * phi.cos(),
                radius * theta.sin() * phi.sin(),
                radius * theta.cos(),
            ));
        }
    }
    vertices.push(Point3::new(0.0, 0.0, -radius));
    let south = vertices.len() - 1;
    let ring = |r: usize, s: usize| 1 + (r - 1) * segments + (s % segments);

    let mut triangles = Vec::new();
    for s in 0..segments {
        triangles.push([0, ring(1, s), ring(1, s + 1)]);
    }
    for r in 1..rings - 1 {
        for s in 0..segments {
            let (a, b) = (ring(r, s), ring(r, s + 1));
            let (c, d) = (ring(r + 1, s), ring(r + 1, s + 1));
            triangles.push([a, c, d]);
            triangles.push([a, d, b]);
        }
    }
    for s in 0..segments {
        triangles.push([south, ring(rings - 1, s + 1), ring(rings - 1, s)]);
    }
    TriMesh::new(vertices, triangles).expect("uv sphere is a valid mesh")
}
