use kiddo::{ImmutableKdTree, SquaredEuclidean};

use crate::geometry::Point3;

/// Static k-d tree over a point set for radius and nearest-point queries.
pub struct PointIndex {
    tree: Option<ImmutableKdTree<f64, 3>>,
    len: usize,
}

impl PointIndex {
    pub fn new(points: &[Point3]) -> Self {
        let coords: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let tree = if coords.is_empty() {
            None
        } else {
            Some(ImmutableKdTree::new_from_slice(&coords).expect("finite coordinates"))
        };
        PointIndex {
            tree,
            len: points.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// All points at distance strictly below `radius`, as
    /// `(distance, index)` in ascending distance, ties by index.
    pub fn within(&self, center: &Point3, radius: f64) -> Vec<(f64, usize)> {
        let Some(tree) = &self.tree else {
            return Vec::new();
        };
        let q = [center.x, center.y, center.z];
        let mut out: Vec<(f64, usize)> = tree
            .query(&q)
            .within::<SquaredEuclidean<f64>>(radius * radius)
            .exclusive_boundaries()
            .unsorted()
            .execute()
            .into_iter()
            .map(|r| (r.distance.sqrt(), r.item as usize))
            .collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out
    }

    /// Nearest point as `(distance, index)`.
    pub fn nearest(&self, center: &Point3) -> Option<(f64, usize)> {
        let tree = self.tree.as_ref()?;
        let r = tree
            .query(&[center.x, center.y, center.z])
            .nearest_one::<SquaredEuclidean<f64>>()
            .execute();
        Some((r.distance.sqrt(), r.item as usize))
    }
}
