//! Finite regions of Z^d with their oriented nearest-neighbour edges.
//!
//! Sites are stored in lexicographic order of their coordinates. Since
//! `x + e_k` is lexicographically larger than `x`, every oriented edge
//! `(x, x + e_k)` lists the lower-ordinal site first.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{PvbsError, Result};

/// A point of Z^d.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticePoint(pub Vec<i64>);

impl LatticePoint {
    pub fn new(coords: impl Into<Vec<i64>>) -> Self {
        LatticePoint(coords.into())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    /// `self + delta * e_k`
    pub fn shifted(&self, k: usize, delta: i64) -> LatticePoint {
        let mut c = self.0.clone();
        c[k] += delta;
        LatticePoint(c)
    }

    pub fn l1_distance(&self, other: &LatticePoint) -> i64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Oriented edge `(site, site + e_direction)`; `direction` is zero-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub site: usize,
    pub neighbor: usize,
    pub direction: usize,
}

/// An immutable finite subset of Z^d.
#[derive(Clone, Debug)]
pub struct LatticeRegion {
    dim: usize,
    sites: Vec<LatticePoint>,
    index_of: HashMap<LatticePoint, usize>,
    edges: Vec<Edge>,
    connected: bool,
}

impl LatticeRegion {
    /// Builds a region from an arbitrary collection of points. Duplicates and
    /// mixed dimensions are rejected.
    pub fn from_sites<I>(dim: usize, points: I) -> Result<Self>
    where
        I: IntoIterator<Item = LatticePoint>,
    {
        if dim == 0 {
            return Err(PvbsError::InvalidRegion("dimension must be at least 1".into()));
        }
        let mut sites: Vec<LatticePoint> = points.into_iter().collect();
        if let Some(bad) = sites.iter().find(|p| p.dim() != dim) {
            return Err(PvbsError::InvalidRegion(format!(
                "site {bad} has dimension {} but the region has dimension {dim}",
                bad.dim()
            )));
        }
        sites.sort();
        if let Some(w) = sites.windows(2).find(|w| w[0] == w[1]) {
            return Err(PvbsError::InvalidRegion(format!("duplicate site {}", w[0])));
        }
        if sites.is_empty() {
            return Err(PvbsError::InvalidRegion("region has no sites".into()));
        }

        let index_of: HashMap<LatticePoint, usize> = sites
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();

        let mut edges = Vec::new();
        for (i, p) in sites.iter().enumerate() {
            for k in 0..dim {
                if let Some(&j) = index_of.get(&p.shifted(k, 1)) {
                    edges.push(Edge {
                        site: i,
                        neighbor: j,
                        direction: k,
                    });
                }
            }
        }

        let mut region = LatticeRegion {
            dim,
            sites,
            index_of,
            edges,
            connected: false,
        };
        region.connected = region.bfs_connected();
        Ok(region)
    }

    /// The box `[0, N_1] x ... x [0, N_d]`.
    pub fn make_box(extent: &[usize]) -> Result<Self> {
        let ranges: Vec<(i64, i64)> = extent.iter().map(|&n| (0, n as i64)).collect();
        Self::from_ranges(&ranges)
    }

    /// The box `[-N_1, N_1] x ... x [-N_d, N_d]`.
    pub fn make_centered_box(half_extent: &[usize]) -> Result<Self> {
        let ranges: Vec<(i64, i64)> = half_extent
            .iter()
            .map(|&n| (-(n as i64), n as i64))
            .collect();
        Self::from_ranges(&ranges)
    }

    /// Product of closed integer intervals.
    pub fn from_ranges(ranges: &[(i64, i64)]) -> Result<Self> {
        if ranges.is_empty() {
            return Err(PvbsError::InvalidRegion("dimension must be at least 1".into()));
        }
        if let Some((lo, hi)) = ranges.iter().find(|(lo, hi)| lo > hi) {
            return Err(PvbsError::InvalidRegion(format!("empty range [{lo}, {hi}]")));
        }
        let mut points = vec![Vec::with_capacity(ranges.len())];
        for &(lo, hi) in ranges {
            let mut next = Vec::with_capacity(points.len() * (hi - lo + 1) as usize);
            for p in &points {
                for c in lo..=hi {
                    let mut q = p.clone();
                    q.push(c);
                    next.push(q);
                }
            }
            points = next;
        }
        Self::from_sites(ranges.len(), points.into_iter().map(LatticePoint))
    }

    /// All points of a bounding box satisfying `keep`.
    pub fn from_predicate<F>(ranges: &[(i64, i64)], keep: F) -> Result<Self>
    where
        F: Fn(&[i64]) -> bool,
    {
        let full = Self::from_ranges(ranges)?;
        let pts: Vec<LatticePoint> = full
            .sites
            .into_iter()
            .filter(|p| keep(p.coords()))
            .collect();
        Self::from_sites(ranges.len(), pts)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[LatticePoint] {
        &self.sites
    }

    pub fn site(&self, i: usize) -> &LatticePoint {
        &self.sites[i]
    }

    pub fn index_of(&self, p: &LatticePoint) -> Option<usize> {
        self.index_of.get(p).copied()
    }

    pub fn contains(&self, p: &LatticePoint) -> bool {
        self.index_of.contains_key(p)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Cached result of a breadth-first search over nearest neighbours.
    pub fn is_connected(&self) -> bool {
        self.connected
    }

    pub fn require_connected(&self) -> Result<()> {
        if self.connected {
            Ok(())
        } else {
            Err(PvbsError::Disconnected)
        }
    }

    fn bfs_connected(&self) -> bool {
        let n = self.sites.len();
        let mut adj = vec![Vec::new(); n];
        for e in &self.edges {
            adj[e.site].push(e.neighbor);
            adj[e.neighbor].push(e.site);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == n
    }

    /// Per-axis bounds `(min, max)` if the region is exactly a rectangular box.
    pub fn box_bounds(&self) -> Option<Vec<(i64, i64)>> {
        let mut bounds: Vec<(i64, i64)> = self.sites[0].0.iter().map(|&c| (c, c)).collect();
        for p in &self.sites {
            for (b, &c) in bounds.iter_mut().zip(&p.0) {
                b.0 = b.0.min(c);
                b.1 = b.1.max(c);
            }
        }
        let volume: i128 = bounds.iter().map(|(lo, hi)| (hi - lo + 1) as i128).product();
        (volume == self.sites.len() as i128).then_some(bounds)
    }

    /// The region induced on a subset of its own sites.
    pub fn subregion(&self, points: &[LatticePoint]) -> Result<LatticeRegion> {
        for p in points {
            if !self.contains(p) {
                return Err(PvbsError::InvalidRegion(format!("site {p} is not in the region")));
            }
        }
        LatticeRegion::from_sites(self.dim, points.iter().cloned())
    }

    /// `X^(l) ∩ self`, where `X^(l)` collects every point within ℓ¹ distance
    /// `l` of `X`. `X` must lie inside `self`.
    pub fn enlarge(&self, x: &[LatticePoint], l: usize) -> Result<Vec<LatticePoint>> {
        for p in x {
            if !self.contains(p) {
                return Err(PvbsError::InvalidRegion(format!(
                    "site {p} of X is not contained in the ambient region"
                )));
            }
        }
        let l = l as i64;
        Ok(self
            .sites
            .iter()
            .filter(|s| x.iter().any(|p| p.l1_distance(s) <= l))
            .cloned()
            .collect())
    }

    /// Parses the site-list text format: one site per line, whitespace-separated
    /// integer coordinates, `#` comments, dimension taken from the first site.
    pub fn parse_site_list(text: &str) -> Result<Self> {
        let mut dim = None;
        let mut seen = HashSet::new();
        let mut points = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let coords = line
                .split_whitespace()
                .map(|t| t.parse::<i64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| PvbsError::Parse {
                    line: lineno + 1,
                    msg: e.to_string(),
                })?;
            let d = *dim.get_or_insert(coords.len());
            if coords.len() != d {
                return Err(PvbsError::Parse {
                    line: lineno + 1,
                    msg: format!("expected {d} coordinates, found {}", coords.len()),
                });
            }
            let p = LatticePoint(coords);
            if !seen.insert(p.clone()) {
                return Err(PvbsError::Parse {
                    line: lineno + 1,
                    msg: format!("duplicate site {p}"),
                });
            }
            points.push(p);
        }
        let dim = dim.ok_or_else(|| PvbsError::InvalidRegion("site list is empty".into()))?;
        Self::from_sites(dim, points)
    }

    pub fn read_site_list(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_site_list(&text)
    }

    pub fn to_site_list(&self) -> String {
        let mut out = String::new();
        for p in &self.sites {
            let line: Vec<String> = p.0.iter().map(|c| c.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

/// All points of Z^d within ℓ¹ distance `l` of `x`, without clipping.
pub fn enlarge_unbounded(x: &[LatticePoint], l: usize) -> Vec<LatticePoint> {
    let Some(first) = x.first() else {
        return Vec::new();
    };
    let d = first.dim();
    let l = l as i64;
    let mut out = HashSet::new();
    for p in x {
        let ranges: Vec<(i64, i64)> = p.0.iter().map(|&c| (c - l, c + l)).collect();
        let cube = LatticeRegion::from_ranges(&ranges).expect("non-empty cube");
        for q in cube.sites {
            if q.l1_distance(p) <= l {
                out.insert(q);
            }
        }
    }
    debug_assert!(out.iter().all(|q| q.dim() == d));
    let mut v: Vec<_> = out.into_iter().collect();
    v.sort();
    v
}

/// Membership of a diamond site in one of the five boundary classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiamondClass {
    /// `0 < x+y < L`, `|x-y| < L/2`
    Interior,
    /// `x + y = 0`, the slanted edge of the half-plane
    Edge,
    /// `x + y = L`
    Opposite,
    /// `x - y = -L/2`
    UpperSide,
    /// `x - y = L/2`
    LowerSide,
}

/// `D_L = {(x,y) : 0 <= x+y <= L, |x-y| <= L/2}` with its site classification.
#[derive(Clone, Debug)]
pub struct DiamondRegion {
    size: i64,
    region: LatticeRegion,
    classes: Vec<DiamondClass>,
}

impl DiamondRegion {
    /// `size` is `L`. With `require_odd_half` set, `L/2` must be odd; then the
    /// four bounding lines carry no common lattice point and the classes
    /// partition the region. Otherwise corner sites are assigned with
    /// priority edge, opposite, upper side, lower side.
    pub fn new(size: i64, require_odd_half: bool) -> Result<Self> {
        if size < 2 || size % 2 != 0 {
            return Err(PvbsError::OutOfRange {
                what: "diamond size L",
                value: size,
                allowed: "even L >= 2".into(),
            });
        }
        let half = size / 2;
        if require_odd_half && half % 2 == 0 {
            return Err(PvbsError::OutOfRange {
                what: "diamond size L",
                value: size,
                allowed: "L = 2k with k odd".into(),
            });
        }
        let region = LatticeRegion::from_predicate(&[(-size, size), (-size, size)], |c| {
            let (s, t) = (c[0] + c[1], c[0] - c[1]);
            (0..=size).contains(&s) && t.abs() <= half
        })?;
        let classes = region
            .sites()
            .iter()
            .map(|p| {
                let (s, t) = (p.0[0] + p.0[1], p.0[0] - p.0[1]);
                if s == 0 {
                    DiamondClass::Edge
                } else if s == size {
                    DiamondClass::Opposite
                } else if t == -half {
                    DiamondClass::UpperSide
                } else if t == half {
                    DiamondClass::LowerSide
                } else {
                    DiamondClass::Interior
                }
            })
            .collect();
        Ok(DiamondRegion {
            size,
            region,
            classes,
        })
    }

    pub fn size(&self) -> i64 {
        self.size
    }

    pub fn region(&self) -> &LatticeRegion {
        &self.region
    }

    pub fn classes(&self) -> &[DiamondClass] {
        &self.classes
    }

    pub fn class_of(&self, p: &LatticePoint) -> Option<DiamondClass> {
        self.region.index_of(p).map(|i| self.classes[i])
    }

    pub fn sites_in(&self, class: DiamondClass) -> impl Iterator<Item = &LatticePoint> + '_ {
        self.region
            .sites()
            .iter()
            .zip(&self.classes)
            .filter(move |(_, c)| **c == class)
            .map(|(p, _)| p)
    }

    /// `{(x,y) : 0 <= x+y <= L+1, |x-y| <= L/2+1}`: every bond touching `D_L`
    /// inside the half-plane `x + y >= 0`.
    pub fn closure(&self) -> Result<LatticeRegion> {
        let size = self.size;
        let half = size / 2;
        LatticeRegion::from_predicate(&[(-size - 2, size + 2), (-size - 2, size + 2)], |c| {
            let (s, t) = (c[0] + c[1], c[0] - c[1]);
            (0..=size + 1).contains(&s) && t.abs() <= half + 1
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[&[i64]]) -> Vec<LatticePoint> {
        v.iter().map(|c| LatticePoint::new(c.to_vec())).collect()
    }

    /// Independent edge count: double loop over site pairs.
    fn brute_edges(r: &LatticeRegion) -> usize {
        let mut n = 0;
        for a in r.sites() {
            for b in r.sites() {
                let diff: Vec<i64> = b.0.iter().zip(&a.0).map(|(x, y)| x - y).collect();
                if diff.iter().filter(|&&c| c == 1).count() == 1
                    && diff.iter().filter(|&&c| c == 0).count() == diff.len() - 1
                {
                    n += 1;
                }
            }
        }
        n
    }

    #[test]
    fn box_sizes() {
        let b = LatticeRegion::make_box(&[0]).unwrap();
        assert_eq!((b.len(), b.edges().len()), (1, 0));
        let b = LatticeRegion::make_box(&[1, 1]).unwrap();
        assert_eq!((b.len(), b.edges().len()), (4, 4));
        let b = LatticeRegion::make_box(&[2, 1]).unwrap();
        assert_eq!((b.len(), b.edges().len()), (6, 7));
        assert!(b.is_connected());
        assert!(LatticeRegion::make_box(&[]).is_err());
    }

    #[test]
    fn centered_boxes() {
        let b = LatticeRegion::make_centered_box(&[1]).unwrap();
        assert_eq!(b.sites(), &pts(&[&[-1], &[0], &[1]])[..]);
        assert_eq!(LatticeRegion::make_centered_box(&[1, 1]).unwrap().len(), 9);
        let b = LatticeRegion::make_centered_box(&[2, 2]).unwrap();
        assert_eq!((b.len(), b.edges().len()), (25, 40));
    }

    #[test]
    fn edge_count_matches_double_loop() {
        let regions = [
            LatticeRegion::make_box(&[3, 2]).unwrap(),
            LatticeRegion::make_box(&[1, 2, 1]).unwrap(),
            DiamondRegion::new(6, true).unwrap().region().clone(),
            LatticeRegion::from_sites(2, pts(&[&[0, 0], &[1, 0], &[2, 0], &[0, 1], &[0, 2]]))
                .unwrap(),
        ];
        for r in &regions {
            assert_eq!(r.edges().len(), brute_edges(r));
            for e in r.edges() {
                assert_eq!(r.site(e.neighbor), &r.site(e.site).shifted(e.direction, 1));
                assert!(e.site < e.neighbor);
            }
        }
    }

    #[test]
    fn ordering_is_lexicographic_and_input_order_independent() {
        let a = LatticeRegion::from_sites(2, pts(&[&[1, 0], &[0, 1], &[0, 0]])).unwrap();
        let b = LatticeRegion::from_sites(2, pts(&[&[0, 0], &[1, 0], &[0, 1]])).unwrap();
        assert_eq!(a.sites(), b.sites());
        assert_eq!(a.sites(), &pts(&[&[0, 0], &[0, 1], &[1, 0]])[..]);
    }

    #[test]
    fn rejects_duplicates_and_mixed_dims() {
        assert!(LatticeRegion::from_sites(1, pts(&[&[0], &[0]])).is_err());
        assert!(LatticeRegion::from_sites(2, pts(&[&[0, 0], &[1]])).is_err());
    }

    #[test]
    fn diamond_counts() {
        let d6 = DiamondRegion::new(6, true).unwrap();
        assert_eq!(d6.region().len(), 24);
        assert!(d6.region().is_connected());
        assert_eq!(d6.sites_in(DiamondClass::Edge).count(), 3);
        assert_eq!(d6.sites_in(DiamondClass::Opposite).count(), 3);

        // Brute-force enumeration of D_2: only (0,0), (0,1), (1,0), (1,1).
        let d2 = DiamondRegion::new(2, true).unwrap();
        assert_eq!(d2.region().sites(), &pts(&[&[0, 0], &[0, 1], &[1, 0], &[1, 1]])[..]);
    }

    #[test]
    fn diamond_parity_checks() {
        assert!(DiamondRegion::new(7, false).is_err());
        assert!(DiamondRegion::new(0, false).is_err());
        assert!(DiamondRegion::new(4, true).is_err());
        assert!(DiamondRegion::new(4, false).is_ok());
    }

    #[test]
    fn diamond_classes_partition_for_odd_half() {
        for l in [2, 6, 10, 14] {
            let d = DiamondRegion::new(l, true).unwrap();
            let half = l / 2;
            for p in d.region().sites() {
                let (s, t) = (p.0[0] + p.0[1], p.0[0] - p.0[1]);
                let on_lines = [s == 0, s == l, t == -half, t == half];
                // with L/2 odd no site lies on two bounding lines
                assert!(on_lines.iter().filter(|&&b| b).count() <= 1);
                let expected = match on_lines {
                    [true, ..] => DiamondClass::Edge,
                    [_, true, ..] => DiamondClass::Opposite,
                    [_, _, true, _] => DiamondClass::UpperSide,
                    [_, _, _, true] => DiamondClass::LowerSide,
                    _ => DiamondClass::Interior,
                };
                assert_eq!(d.class_of(p), Some(expected));
            }
        }
    }

    #[test]
    fn connectivity() {
        assert!(LatticeRegion::from_sites(1, pts(&[&[0]])).unwrap().is_connected());
        let split = LatticeRegion::from_sites(1, pts(&[&[0], &[2]])).unwrap();
        assert!(!split.is_connected());
        assert!(split.require_connected().is_err());
    }

    #[test]
    fn enlarge_examples() {
        let amb = LatticeRegion::make_centered_box(&[1, 1]).unwrap();
        let x = pts(&[&[0, 0]]);
        assert_eq!(amb.enlarge(&x, 0).unwrap(), x);
        assert_eq!(amb.enlarge(&x, 1).unwrap().len(), 5);

        // 2x2 block at the origin of an 8x8 box, compared with a direct scan.
        let amb = LatticeRegion::make_box(&[7, 7]).unwrap();
        let x = pts(&[&[0, 0], &[0, 1], &[1, 0], &[1, 1]]);
        let e = amb.enlarge(&x, 2).unwrap();
        let mut count = 0;
        for i in 0..8 {
            for j in 0..8 {
                let dist = [(0, 0), (0, 1), (1, 0), (1, 1)]
                    .iter()
                    .map(|(a, b)| (i - *a as i64).abs() + (j - *b as i64).abs())
                    .min()
                    .unwrap();
                if dist <= 2 {
                    count += 1;
                }
            }
        }
        assert_eq!(e.len(), count);
        assert_eq!(count, 13);

        assert!(amb.enlarge(&pts(&[&[9, 9]]), 1).is_err());
    }

    #[test]
    fn enlarge_unbounded_plus_shape() {
        let e = enlarge_unbounded(&pts(&[&[0, 0]]), 1);
        assert_eq!(e.len(), 5);
        let e = enlarge_unbounded(&pts(&[&[0, 0]]), 2);
        assert_eq!(e.len(), 13);
    }

    #[test]
    fn site_list_round_trip_and_errors() {
        let text = "# L shape\n0 0\n1 0\n2 0\n\n0 1\n0 2\n";
        let r = LatticeRegion::parse_site_list(text).unwrap();
        assert_eq!(r.len(), 5);
        assert!(r.is_connected());
        let again = LatticeRegion::parse_site_list(&r.to_site_list()).unwrap();
        assert_eq!(again.sites(), r.sites());

        assert!(matches!(
            LatticeRegion::parse_site_list("0 0\n0 0\n"),
            Err(PvbsError::Parse { line: 2, .. })
        ));
        assert!(LatticeRegion::parse_site_list("0 0\n1\n").is_err());
        assert!(LatticeRegion::parse_site_list("0 x\n").is_err());
        assert!(LatticeRegion::parse_site_list("# nothing\n").is_err());
    }

    #[test]
    fn box_bounds_detects_boxes() {
        let b = LatticeRegion::make_centered_box(&[2, 1]).unwrap();
        assert_eq!(b.box_bounds(), Some(vec![(-2, 2), (-1, 1)]));
        let d = DiamondRegion::new(6, true).unwrap();
        assert_eq!(d.region().box_bounds(), None);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn enlarge_is_monotone_and_idempotent(
                cx in 0i64..6, cy in 0i64..6, l in 0usize..4
            ) {
                let amb = LatticeRegion::make_box(&[5, 5]).unwrap();
                let x = vec![LatticePoint::new(vec![cx, cy])];
                let a = amb.enlarge(&x, l).unwrap();
                let b = amb.enlarge(&x, l + 1).unwrap();
                prop_assert!(a.iter().all(|p| b.contains(p)));
                let unclipped = enlarge_unbounded(&x, l);
                let big = LatticeRegion::from_sites(2, unclipped.clone()).unwrap();
                prop_assert_eq!(big.enlarge(&x, l).unwrap(), unclipped);
            }
        }
    }
}
