//! Uniform-grid point index for radius and nearest-neighbor queries.

use std::collections::HashMap;

#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<[f64; 3]>,
    cell: f64,
    buckets: HashMap<[i64; 3], Vec<usize>>,
}

impl SpatialIndex {
    /// `cell` is the bucket edge length; queries are fastest when it is
    /// close to the typical search radius.
    pub fn new(points: &[[f64; 3]], cell: f64) -> Self {
        assert!(cell > 0.0, "cell size must be positive");
        let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(key(p, cell)).or_default().push(i);
        }
        Self {
            points: points.to_vec(),
            cell,
            buckets,
        }
    }

    /// Indices within `radius` of `center`, ascending.
    pub fn within(&self, center: [f64; 3], radius: f64) -> Vec<usize> {
        let lo = key(&center.map(|c| c - radius), self.cell);
        let hi = key(&center.map(|c| c + radius), self.cell);
        let r2 = radius * radius;
        let mut out = Vec::new();
        for x in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                for z in lo[2]..=hi[2] {
                    if let Some(list) = self.buckets.get(&[x, y, z]) {
                        out.extend(list.iter().copied().filter(|&i| dist2(&self.points[i], &center) <= r2));
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// The `k` nearest points to `center` (including a coincident one),
    /// nearest first; ties broken by index.
    pub fn nearest(&self, center: [f64; 3], k: usize) -> Vec<usize> {
        let k = k.min(self.points.len());
        if k == 0 {
            return Vec::new();
        }
        let c = key(&center, self.cell);
        let mut ring = 0i64;
        let mut found: Vec<(f64, usize)> = Vec::new();
        loop {
            for x in c[0] - ring..=c[0] + ring {
                for y in c[1] - ring..=c[1] + ring {
                    for z in c[2] - ring..=c[2] + ring {
                        let shell = (x - c[0]).abs().max((y - c[1]).abs()).max((z - c[2]).abs());
                        if shell != ring {
                            continue;
                        }
                        if let Some(list) = self.buckets.get(&[x, y, z]) {
                            found.extend(list.iter().map(|&i| (dist2(&self.points[i], &center), i)));
                        }
                    }
                }
            }
            if found.len() >= k {
                found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                // everything within `ring * cell` has been seen
                let safe = ring as f64 * self.cell;
                if found[k - 1].0 <= safe * safe || found.len() == self.points.len() {
                    return found[..k].iter().map(|f| f.1).collect();
                }
            }
            ring += 1;
        }
    }
}

fn key(p: &[f64; 3], cell: f64) -> [i64; 3] {
    p.map(|c| (c / cell).floor() as i64)
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<[f64; 3]> = (0..500).map(|_| [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-1.0..1.0)]).collect();
        let index = SpatialIndex::new(&pts, 0.7);
        for q in pts.iter().take(20) {
            let mut brute: Vec<usize> = (0..pts.len()).filter(|&i| dist2(&pts[i], q) <= 1.5 * 1.5).collect();
            brute.sort_unstable();
            assert_eq!(index.within(*q, 1.5), brute);

            let mut order: Vec<usize> = (0..pts.len()).collect();
            order.sort_by(|&a, &b| dist2(&pts[a], q).total_cmp(&dist2(&pts[b], q)).then(a.cmp(&b)));
            assert_eq!(index.nearest(*q, 12), order[..12].to_vec());
        }
    }
}
