use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::delta::{delta_map, DeltaSample};
use super::RelationConfig;
use crate::geometry::{Point3, UnitVec3};
use crate::neighbors::PointIndex;
use crate::scan::RangeScan;

/// Draws unbiased sub-samples of tetrahedron representations from one scan.
///
/// Neighbours of the centre are sorted by distance. A qualifying triple is
/// identified by its nearest member `i` and two further members within
/// `eps` of it, so the triples are counted per `i` and a uniform draw over
/// all of them is a uniform draw over ranks in `0..total`.
pub struct TetraSampler<'a> {
    points: &'a [Point3],
    gaze: UnitVec3,
    index: PointIndex,
}

impl<'a> TetraSampler<'a> {
    pub fn new(scan: &'a RangeScan) -> Self {
        TetraSampler {
            points: scan.points(),
            gaze: *scan.gaze(),
            index: PointIndex::new(scan.points()),
        }
    }

    pub fn index(&self) -> &PointIndex {
        &self.index
    }

    /// Up to `cfg.sample_len` samples from distinct qualifying triples.
    pub fn sample(&self, center: &Point3, cfg: &RelationConfig, seed: u64) -> Vec<DeltaSample> {
        let nbrs: Vec<(f64, usize)> = self
            .index
            .within(center, cfg.radius)
            .into_iter()
            .filter(|n| n.0 > 0.0)
            .collect();
        let n = nbrs.len();
        if n < 3 {
            return Vec::new();
        }

        // prefix[i] = number of qualifying triples whose nearest member has
        // rank < i
        let mut prefix = Vec::with_capacity(n + 1);
        let mut partners = Vec::with_capacity(n);
        prefix.push(0u64);
        let mut end = 0;
        for i in 0..n {
            end = end.max(i + 1);
            while end < n && nbrs[end].0 - nbrs[i].0 < cfg.eps {
                end += 1;
            }
            let m = (end - i - 1) as u64;
            partners.push(m);
            prefix.push(prefix[i] + m * m.saturating_sub(1) / 2);
        }
        let total = prefix[n];
        if total == 0 {
            return Vec::new();
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amount = (cfg.sample_len as u64).min(total) as usize;
        let ranks = rand::seq::index::sample(&mut rng, total as usize, amount);
        let mut out = Vec::with_capacity(amount);
        for rank in ranks {
            let rank = rank as u64;
            let i = prefix.partition_point(|&p| p <= rank) - 1;
            let (j, k) = unrank_pair(rank - prefix[i], partners[i]);
            let (a, b, c) = (nbrs[i].1, nbrs[i + 1 + j].1, nbrs[i + 1 + k].1);
            if let Ok(s) = delta_map(
                center,
                &self.points[a],
                &self.points[b],
                &self.points[c],
                cfg.radius,
                &self.gaze,
            ) {
                out.push(s);
            }
        }
        out
    }
}

/// Lexicographic unranking of `rank` among the pairs `j < k` of `0..m`.
fn unrank_pair(mut rank: u64, m: u64) -> (usize, usize) {
    for j in 0..m {
        let row = m - 1 - j;
        if rank < row {
            return (j as usize, (j + 1 + rank) as usize);
        }
        rank -= row;
    }
    unreachable!("rank out of range")
}

/// Convenience wrapper building a [`TetraSampler`] for a single draw.
pub fn sample_tetra(
    scan: &RangeScan,
    center: &Point3,
    cfg: &RelationConfig,
    seed: u64,
) -> Vec<DeltaSample> {
    TetraSampler::new(scan).sample(center, cfg, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vector3;
    use rand::Rng;
    use std::collections::HashMap;

    fn cfg(radius: f64, eps: f64, l: usize) -> RelationConfig {
        RelationConfig {
            radius,
            eps,
            sample_len: l,
            ..RelationConfig::default()
        }
    }

    #[test]
    fn unranking_enumerates_all_pairs() {
        let m = 6;
        let pairs: Vec<_> = (0..15).map(|r| unrank_pair(r, m)).collect();
        let mut want = Vec::new();
        for j in 0..6 {
            for k in j + 1..6 {
                want.push((j, k));
            }
        }
        assert_eq!(pairs, want);
    }

    #[test]
    fn forced_single_triple() {
        let pts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(5.0, 0.0, 0.0),
            Point3::new(0.0, 5.0, 0.1),
            Point3::new(-5.0, 0.0, 0.2),
            Point3::new(50.0, 0.0, 0.0),
        ];
        let scan = RangeScan::new(pts.clone(), Vector3::z_axis()).unwrap();
        let got = sample_tetra(&scan, &pts[0], &cfg(15.0, 1.0, 50), 1);
        assert_eq!(got.len(), 1);
        let want = delta_map(&pts[0], &pts[1], &pts[2], &pts[3], 15.0, scan.gaze()).unwrap();
        assert!((got[0].u1 - want.u1).abs() < 1e-15);
        assert!((got[0].u2 - want.u2).abs() < 1e-15);
        assert!((got[0].u3 - want.u3).abs() < 1e-15);
    }

    fn random_plane(n: usize, seed: u64) -> Vec<Point3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = vec![Point3::origin()];
        while pts.len() < n {
            pts.push(Point3::new(
                rng.random_range(-14.0..14.0),
                rng.random_range(-14.0..14.0),
                0.0,
            ));
        }
        pts
    }

    #[test]
    fn coplanar_points_give_flat_samples() {
        let pts = random_plane(200, 4);
        let scan = RangeScan::new(pts, Vector3::z_axis()).unwrap();
        let got = sample_tetra(&scan, &Point3::origin(), &cfg(15.0, 1.0, 50), 7);
        assert_eq!(got.len(), 50);
        assert!(got.iter().all(|s| s.u2.abs() < 1e-9));
        assert_eq!(
            got,
            sample_tetra(&scan, &Point3::origin(), &cfg(15.0, 1.0, 50), 7)
        );
    }

    #[test]
    fn every_sample_satisfies_the_ring_constraint() {
        let pts = random_plane(150, 8);
        let scan = RangeScan::new(pts.clone(), Vector3::z_axis()).unwrap();
        let sampler = TetraSampler::new(&scan);
        let c = cfg(10.0, 0.5, 1000);
        // Enumerate qualifying triples by brute force and compare the count
        // of distinct samples once the budget exceeds it.
        let dist: Vec<f64> = pts.iter().map(|p| p.coords.norm()).collect();
        let mut brute = 0;
        for i in 1..pts.len() {
            for j in i + 1..pts.len() {
                for k in j + 1..pts.len() {
                    let ds = [dist[i], dist[j], dist[k]];
                    let hi = ds.iter().cloned().fold(f64::MIN, f64::max);
                    let lo = ds.iter().cloned().fold(f64::MAX, f64::min);
                    if hi < 10.0 && hi - lo < 0.5 {
                        brute += 1;
                    }
                }
            }
        }
        let got = sampler.sample(
            &Point3::origin(),
            &RelationConfig {
                sample_len: 100_000,
                ..c
            },
            3,
        );
        assert_eq!(got.len(), brute);
    }

    #[test]
    fn draws_are_uniform_over_triples() {
        // Two rings: the inner one has 4 points (4 triples), the outer one 5
        // (10 triples). Inner triples have u1 = 0.2, outer ones u1 = 0.6.
        let mut pts = vec![Point3::origin()];
        for k in 0..4 {
            let t = k as f64 * 1.3;
            pts.push(Point3::new(2.0 * t.cos(), 2.0 * t.sin(), 0.0));
        }
        for k in 0..5 {
            let t = k as f64 * 1.1;
            pts.push(Point3::new(6.0 * t.cos(), 6.0 * t.sin(), 0.0));
        }
        let scan = RangeScan::new(pts, Vector3::z_axis()).unwrap();
        let sampler = TetraSampler::new(&scan);
        let c = cfg(10.0, 0.5, 1);
        let mut counts: HashMap<bool, usize> = HashMap::new();
        let trials = 14_000;
        for seed in 0..trials {
            let s = sampler.sample(&Point3::origin(), &c, seed);
            *counts.entry(s[0].u1 < 0.4).or_default() += 1;
        }
        let inner = counts[&true] as f64;
        let expect = trials as f64 * 4.0 / 14.0;
        let sd = (trials as f64 * (4.0 / 14.0) * (10.0 / 14.0)).sqrt();
        assert!((inner - expect).abs() < 4.0 * sd, "{inner} vs {expect}");
    }

    #[test]
    fn too_few_neighbours() {
        let pts = vec![
            Point3::origin(),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ];
        let scan = RangeScan::new(pts, Vector3::z_axis()).unwrap();
        assert!(sample_tetra(&scan, &Point3::origin(), &cfg(15.0, 1.0, 50), 0).is_empty());
    }
}
