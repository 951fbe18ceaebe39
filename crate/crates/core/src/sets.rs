//! Closed subsets of the line: finitely many intervals plus isolated points.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    /// Disjoint closed intervals sorted by left end; ends may be infinite.
    pub intervals: Vec<(f64, f64)>,
    /// Sorted isolated points not inside any interval.
    pub points: Vec<f64>,
}

impl PointSet {
    pub fn empty() -> PointSet {
        PointSet::default()
    }

    pub fn everything() -> PointSet {
        PointSet {
            intervals: vec![(f64::NEG_INFINITY, f64::INFINITY)],
            points: Vec::new(),
        }
    }

    pub fn new(mut intervals: Vec<(f64, f64)>, mut points: Vec<f64>) -> PointSet {
        intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
        for (a, b) in intervals {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        points.sort_by(f64::total_cmp);
        points.dedup();
        let mut set = PointSet {
            intervals: merged,
            points: Vec::new(),
        };
        let kept: Vec<f64> = points.into_iter().filter(|&p| !set.in_interval(p)).collect();
        set.points = kept;
        set
    }

    /// Builds the set from grid membership. Runs of two or more flagged nodes
    /// become intervals whose ends are taken from `refine(i, i + 1)` when that
    /// returns a finite location; runs touching the grid ends
    /// extend to infinity. Single flagged nodes become isolated points.
    pub fn from_mask(grid: &[f64], mask: &[bool], refine: impl Fn(usize, usize) -> Option<f64>) -> PointSet {
        let n = grid.len();
        let mut intervals = Vec::new();
        let mut points = Vec::new();
        let mut i = 0;
        while i < n {
            if !mask[i] {
                i += 1;
                continue;
            }
            let start = i;
            while i + 1 < n && mask[i + 1] {
                i += 1;
            }
            let end = i;
            i += 1;
            if start == end && start != 0 && end != n - 1 {
                points.push(grid[start]);
                continue;
            }
            let lo = if start == 0 {
                f64::NEG_INFINITY
            } else {
                refine(start - 1, start)
                    .filter(|x| x.is_finite())
                    .unwrap_or(grid[start])
            };
            let hi = if end == n - 1 {
                f64::INFINITY
            } else {
                refine(end, end + 1)
                    .filter(|x| x.is_finite())
                    .unwrap_or(grid[end])
            };
            if lo < hi {
                intervals.push((lo, hi));
            } else {
                intervals.push((grid[start], grid[end]));
            }
        }
        PointSet::new(intervals, points)
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty() && self.points.is_empty()
    }

    fn in_interval(&self, x: f64) -> bool {
        let idx = self.intervals.partition_point(|iv| iv.1 < x);
        idx < self.intervals.len() && self.intervals[idx].0 <= x
    }

    pub fn contains(&self, x: f64) -> bool {
        self.in_interval(x) || self.points.binary_search_by(|p| p.total_cmp(&x)).is_ok()
    }

    /// Is `x` in the interior of one of the intervals?
    pub fn contains_interior(&self, x: f64) -> bool {
        let idx = self.intervals.partition_point(|iv| iv.1 <= x);
        idx < self.intervals.len() && self.intervals[idx].0 < x
    }

    /// First point of the set met when moving from `a` straight to `b`.
    pub fn first_hit(&self, a: f64, b: f64) -> Option<f64> {
        if self.contains(a) {
            return Some(a);
        }
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let mut best: Option<f64> = None;
        let mut consider = |y: f64| {
            if y >= lo && y <= hi && best.map_or(true, |cur| (y - a).abs() < (cur - a).abs()) {
                best = Some(y);
            }
        };
        for &(l, u) in &self.intervals {
            if a < l {
                consider(l);
            } else if a > u {
                consider(u);
            }
        }
        for &p in &self.points {
            consider(p);
        }
        best
    }

    /// Complement within `[lo, hi]`, returned as open gaps.
    pub fn gaps(&self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        let mut cuts: Vec<(f64, f64)> = self.intervals.clone();
        cuts.extend(self.points.iter().map(|&p| (p, p)));
        cuts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out = Vec::new();
        let mut cur = lo;
        for (a, b) in cuts {
            if a > cur {
                out.push((cur, a.min(hi)));
            }
            cur = cur.max(b);
            if cur >= hi {
                break;
            }
        }
        if cur < hi {
            out.push((cur, hi));
        }
        out.retain(|(a, b)| b > a);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_runs_become_intervals_and_points() {
        let grid: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let mask = [true, true, false, false, true, false, true, true, false, false];
        let s = PointSet::from_mask(&grid, &mask, |_, _| None);
        assert_eq!(s.intervals, vec![(f64::NEG_INFINITY, 1.0), (6.0, 7.0)]);
        assert_eq!(s.points, vec![4.0]);
        let s = PointSet::from_mask(&grid, &mask, |a, b| Some(0.5 * (grid[a] + grid[b])));
        assert_eq!(s.intervals, vec![(f64::NEG_INFINITY, 1.5), (5.5, 7.5)]);
    }

    #[test]
    fn membership_and_crossing() {
        let s = PointSet::new(vec![(2.0, 3.0), (-1.0, 0.0)], vec![5.0, 2.5]);
        assert_eq!(s.points, vec![5.0]);
        assert!(s.contains(-1.0) && s.contains(2.5) && s.contains(5.0));
        assert!(!s.contains(1.0) && !s.contains(4.0));
        assert!(s.contains_interior(2.5) && !s.contains_interior(3.0));
        assert_eq!(s.first_hit(1.0, 4.0), Some(2.0));
        assert_eq!(s.first_hit(4.0, 1.0), Some(3.0));
        assert_eq!(s.first_hit(4.9, 5.1), Some(5.0));
        assert_eq!(s.first_hit(0.5, 1.5), None);
        assert_eq!(s.first_hit(2.2, 9.0), Some(2.2));
    }

    #[test]
    fn gaps_complement() {
        let s = PointSet::new(vec![(f64::NEG_INFINITY, -1.0), (1.0, f64::INFINITY)], vec![0.0]);
        assert_eq!(s.gaps(-5.0, 5.0), vec![(-1.0, 0.0), (0.0, 1.0)]);
        assert_eq!(PointSet::empty().gaps(0.0, 1.0), vec![(0.0, 1.0)]);
    }
}
