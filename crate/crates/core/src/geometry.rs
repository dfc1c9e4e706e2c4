//! Torus coordinate system: the macrobox [-h, h]^d with opposite faces
//! identified, the ℓ¹ metric with wraparound, and ball enumeration.
//!
//! Sites carry integer coordinates in [-(side-1)/2, (side-1)/2] per axis and
//! map to a dense linear index by lexicographic (mixed-radix) order, which is
//! the tie order used everywhere in the crate.

use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};

/// A lattice site of the torus, addressed by its coordinate vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    pub coords: Vec<i64>,
}

impl Site {
    pub fn new(coords: Vec<i64>) -> Self {
        Site { coords }
    }

    pub fn origin(d: usize) -> Self {
        Site { coords: vec![0; d] }
    }

    pub fn is_origin(&self) -> bool {
        self.coords.iter().all(|&c| c == 0)
    }
}

impl std::fmt::Display for Site {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Geometry of the d-dimensional torus with an odd number of sites per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusGeometry {
    d: usize,
    side: i64,
    half: i64,
    count: usize,
}

impl TorusGeometry {
    /// `side` must be odd and at least 3 so the coordinate box is symmetric
    /// about the origin; total site count is side^d.
    pub fn new(d: usize, side: i64) -> Result<Self> {
        if d == 0 {
            return Err(CoreError::Param("dimension must be positive".into()));
        }
        if side < 3 || side % 2 == 0 {
            return Err(CoreError::Param(format!(
                "side must be odd and >= 3, got {side}"
            )));
        }
        let mut count: usize = 1;
        for _ in 0..d {
            count = count
                .checked_mul(side as usize)
                .filter(|&c| c <= 1 << 34)
                .ok_or_else(|| {
                    CoreError::Param(format!("torus side^d too large: side={side}, d={d}"))
                })?;
        }
        Ok(TorusGeometry {
            d,
            side,
            half: (side - 1) / 2,
            count,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn side(&self) -> i64 {
        self.side
    }

    pub fn half(&self) -> i64 {
        self.half
    }

    pub fn site_count(&self) -> usize {
        self.count
    }

    pub fn contains(&self, s: &Site) -> bool {
        s.coords.len() == self.d && s.coords.iter().all(|&c| c.abs() <= self.half)
    }

    fn check(&self, s: &Site) -> Result<()> {
        if self.contains(s) {
            Ok(())
        } else {
            Err(CoreError::InvalidSite {
                site: s.coords.clone(),
                reason: format!("coordinates out of [-{h}, {h}]^{d}", h = self.half, d = self.d),
            })
        }
    }

    /// Linear index, lexicographic in the coordinate vector.
    pub fn index_of(&self, s: &Site) -> Result<usize> {
        self.check(s)?;
        let mut idx: usize = 0;
        for &c in &s.coords {
            idx = idx * self.side as usize + (c + self.half) as usize;
        }
        Ok(idx)
    }

    pub fn site_at(&self, mut idx: usize) -> Site {
        debug_assert!(idx < self.count);
        let mut coords = vec![0i64; self.d];
        for k in (0..self.d).rev() {
            coords[k] = (idx % self.side as usize) as i64 - self.half;
            idx /= self.side as usize;
        }
        Site { coords }
    }

    /// Per-axis displacement reduced to the representative of minimal
    /// absolute value modulo `side`.
    fn axis_delta(&self, a: i64, b: i64) -> i64 {
        let d = (a - b).rem_euclid(self.side);
        d.min(self.side - d)
    }

    /// ℓ¹ distance on the torus.
    pub fn torus_distance(&self, a: &Site, b: &Site) -> Result<u64> {
        self.check(a)?;
        self.check(b)?;
        Ok(a.coords
            .iter()
            .zip(&b.coords)
            .map(|(&x, &y)| self.axis_delta(x, y) as u64)
            .sum())
    }

    pub fn origin_distance(&self, z: &Site) -> Result<u64> {
        self.check(z)?;
        Ok(z.coords.iter().map(|&c| c.unsigned_abs().min((self.side - c.abs()) as u64)).sum())
    }

    /// Origin distance by linear index; coordinates never wrap past half, so
    /// this is just the ℓ¹ norm of the coordinate vector.
    pub fn origin_distance_idx(&self, idx: usize) -> u64 {
        let mut i = idx;
        let mut dist = 0u64;
        for _ in 0..self.d {
            let c = (i % self.side as usize) as i64 - self.half;
            dist += c.unsigned_abs();
            i /= self.side as usize;
        }
        dist
    }

    /// All sites within torus distance `n` of `z`, in lexicographic order.
    pub fn ball(&self, z: &Site, n: u64) -> Result<Vec<Site>> {
        let idx = self.index_of(z)?;
        Ok(self
            .ball_indices(idx, n)
            .into_iter()
            .map(|i| self.site_at(i))
            .collect())
    }

    /// Ball as sorted (lexicographic) linear indices. Handles wrap collisions
    /// when 2n exceeds the side by deduplicating.
    pub fn ball_indices(&self, center: usize, n: u64) -> Vec<usize> {
        let c = self.site_at(center);
        let mut out = Vec::new();
        let mut offset = vec![0i64; self.d];
        self.ball_rec(&c, n as i64, 0, &mut offset, &mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn ball_rec(&self, c: &Site, budget: i64, axis: usize, offset: &mut Vec<i64>, out: &mut Vec<usize>) {
        if axis == self.d {
            let site = Site {
                coords: c
                    .coords
                    .iter()
                    .zip(offset.iter())
                    .map(|(&x, &o)| {
                        let mut v = (x + o + self.half).rem_euclid(self.side) - self.half;
                        if v > self.half {
                            v -= self.side;
                        }
                        v
                    })
                    .collect(),
            };
            out.push(self.index_of(&site).expect("wrapped site is valid"));
            return;
        }
        let reach = budget.min(self.half.max(self.side / 2 + 1));
        for o in -reach..=reach {
            offset[axis] = o;
            self.ball_rec(c, budget - o.abs(), axis + 1, offset, out);
        }
        offset[axis] = 0;
    }

    /// The 2d nearest neighbours of a site, as linear indices.
    pub fn neighbors_idx(&self, idx: usize) -> Vec<usize> {
        let s = self.site_at(idx);
        let mut out = Vec::with_capacity(2 * self.d);
        for axis in 0..self.d {
            for step in [-1i64, 1] {
                let mut coords = s.coords.clone();
                let mut v = coords[axis] + step;
                if v > self.half {
                    v -= self.side;
                } else if v < -self.half {
                    v += self.side;
                }
                coords[axis] = v;
                out.push(self.index_of(&Site { coords }).expect("neighbor is valid"));
            }
        }
        out
    }

    /// Index of `site + offset` with wraparound (used by translation tests).
    pub fn shifted_index(&self, idx: usize, offset: &[i64]) -> usize {
        let s = self.site_at(idx);
        let coords = s
            .coords
            .iter()
            .zip(offset)
            .map(|(&x, &o)| {
                let mut v = (x + o + self.half).rem_euclid(self.side) - self.half;
                if v > self.half {
                    v -= self.side;
                }
                v
            })
            .collect();
        self.index_of(&Site { coords }).expect("shifted site is valid")
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.count).map(|i| self.site_at(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wraparound_distance() {
        let g = TorusGeometry::new(2, 5).unwrap();
        let a = Site::new(vec![2, 0]);
        let b = Site::new(vec![-2, 0]);
        assert_eq!(g.torus_distance(&a, &b).unwrap(), 1);
        assert_eq!(g.torus_distance(&a, &a).unwrap(), 0);

        let g1 = TorusGeometry::new(1, 7).unwrap();
        assert_eq!(
            g1.torus_distance(&Site::new(vec![3]), &Site::new(vec![-3])).unwrap(),
            1
        );
    }

    #[test]
    fn origin_distance_matches_definition() {
        let g = TorusGeometry::new(1, 9).unwrap();
        assert_eq!(g.origin_distance(&Site::new(vec![0])).unwrap(), 0);
        assert_eq!(g.origin_distance(&Site::new(vec![4])).unwrap(), 4);
        assert_eq!(g.origin_distance(&Site::new(vec![-4])).unwrap(), 4);
    }

    #[test]
    fn ball_sizes() {
        let g = TorusGeometry::new(2, 5).unwrap();
        let z = Site::new(vec![0, 0]);
        assert_eq!(g.ball(&z, 0).unwrap(), vec![z.clone()]);
        assert_eq!(g.ball(&z, 1).unwrap().len(), 2 * g.d() + 1);

        // Radius exceeding the diameter returns every site exactly once.
        let g1 = TorusGeometry::new(1, 3).unwrap();
        assert_eq!(g1.ball(&Site::new(vec![0]), 5).unwrap().len(), 3);
    }

    #[test]
    fn ball_is_lexicographic_and_translation_invariant() {
        let g = TorusGeometry::new(2, 7).unwrap();
        let b0 = g.ball(&Site::new(vec![0, 0]), 2).unwrap();
        let mut sorted = b0.clone();
        sorted.sort();
        assert_eq!(b0, sorted);
        for z in [Site::new(vec![3, -3]), Site::new(vec![-1, 2])] {
            assert_eq!(g.ball(&z, 2).unwrap().len(), b0.len());
        }
    }

    #[test]
    fn invalid_site_rejected() {
        let g = TorusGeometry::new(1, 5).unwrap();
        assert!(g.index_of(&Site::new(vec![3])).is_err());
        assert!(g.torus_distance(&Site::new(vec![3]), &Site::new(vec![0])).is_err());
    }

    #[test]
    fn even_or_tiny_side_rejected() {
        assert!(TorusGeometry::new(1, 4).is_err());
        assert!(TorusGeometry::new(1, 1).is_err());
        assert!(TorusGeometry::new(0, 5).is_err());
    }

    proptest! {
        #[test]
        fn distance_symmetric_and_bounded(d in 1usize..=3, side in 0u8..5, seed in 0u64..1000) {
            let side = 3 + 2 * side as i64;
            let g = TorusGeometry::new(d, side).unwrap();
            let n = g.site_count();
            let a = g.site_at((seed as usize * 7919) % n);
            let b = g.site_at((seed as usize * 104729) % n);
            let ab = g.torus_distance(&a, &b).unwrap();
            prop_assert_eq!(ab, g.torus_distance(&b, &a).unwrap());
            prop_assert!(ab <= d as u64 * ((side - 1) / 2) as u64);
        }

        #[test]
        fn triangle_inequality(side in 0u8..4, sa in 0usize..10000, sb in 0usize..10000, sc in 0usize..10000) {
            let side = 3 + 2 * side as i64;
            let g = TorusGeometry::new(2, side).unwrap();
            let n = g.site_count();
            let (a, b, c) = (g.site_at(sa % n), g.site_at(sb % n), g.site_at(sc % n));
            let ab = g.torus_distance(&a, &b).unwrap();
            let bc = g.torus_distance(&b, &c).unwrap();
            let ac = g.torus_distance(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc);
        }

        #[test]
        fn balls_nest(side in 0u8..4, n in 0u64..6, center in 0usize..10000) {
            let side = 3 + 2 * side as i64;
            let g = TorusGeometry::new(2, side).unwrap();
            let c = center % g.site_count();
            let inner = g.ball_indices(c, n);
            let outer = g.ball_indices(c, n + 1);
            prop_assert!(inner.iter().all(|i| outer.binary_search(i).is_ok()));
        }
    }
}
