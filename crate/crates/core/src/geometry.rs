//! Interval and axis-aligned box algebra.
//!
//! Boxes are half-open. Under [`Comparator::Le`] an interval is `(lo, hi]`,
//! under [`Comparator::Lt`] it is `[lo, hi)`. Emptiness, intersection and
//! distances do not depend on the convention; only membership and the
//! epsilon nudge used to materialize a concrete point do.
//!
//! Distances are measured to the closure of a box (the infimum). An empty
//! box is never built: constructors and intersections return `None`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::fixed::Fixed;

/// Split convention of a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparator {
    /// `x <= threshold` goes left; leaf intervals are `(lo, hi]`.
    Le,
    /// `x < threshold` goes left; leaf intervals are `[lo, hi)`.
    Lt,
}

impl Comparator {
    #[inline]
    pub fn goes_left(self, x: f64, threshold: f64) -> bool {
        match self {
            Comparator::Le => x <= threshold,
            Comparator::Lt => x < threshold,
        }
    }

    #[inline]
    pub fn contains(self, iv: Interval, x: f64) -> bool {
        match self {
            Comparator::Le => iv.lo < x && x <= iv.hi,
            Comparator::Lt => iv.lo <= x && x < iv.hi,
        }
    }
}

/// One side of a box. Infinite ends mean unbounded.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const FULL: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Option<Interval> {
        (lo < hi).then_some(Interval { lo, hi })
    }

    pub fn is_full(self) -> bool {
        self.lo == f64::NEG_INFINITY && self.hi == f64::INFINITY
    }

    #[inline]
    pub fn intersect(self, other: Interval) -> Option<Interval> {
        Interval::new(self.lo.max(other.lo), self.hi.min(other.hi))
    }

    /// Closest point of the closure to `x`.
    #[inline]
    pub fn clamp(self, x: f64) -> f64 {
        x.max(self.lo).min(self.hi)
    }

    /// Distance from `x` to the closure.
    #[inline]
    pub fn gap(self, x: f64) -> f64 {
        if x < self.lo {
            self.lo - x
        } else if x > self.hi {
            x - self.hi
        } else {
            0.0
        }
    }

    /// Point of the half-open interval closest to `x`, moved at most `eps`
    /// inward when the closest point of the closure is an excluded end.
    pub fn materialize(self, x: f64, eps: f64, cmp: Comparator) -> f64 {
        let c = self.clamp(x);
        match cmp {
            Comparator::Le if c <= self.lo => {
                let mut v = self.lo + eps;
                if v <= self.lo {
                    v = self.lo.next_up();
                }
                v.min(self.hi)
            }
            Comparator::Lt if c >= self.hi => {
                let mut v = self.hi - eps;
                if v >= self.hi {
                    v = self.hi.next_down();
                }
                v.max(self.lo)
            }
            _ => c,
        }
    }
}

/// Perturbation norm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
    Linf,
}

impl Norm {
    pub const ALL: [Norm; 3] = [Norm::L1, Norm::L2, Norm::Linf];

    /// Per-dimension contribution to the primary key component. For `L2` this
    /// is the squared gap; the key compares sums of squares.
    #[inline]
    pub fn contribution(self, gap: f64) -> Fixed {
        match self {
            Norm::L1 | Norm::Linf => Fixed::from_f64(gap),
            Norm::L2 => Fixed::from_f64(gap * gap),
        }
    }

    #[inline]
    pub fn combine(self, acc: Fixed, c: Fixed) -> Fixed {
        match self {
            Norm::Linf => acc.max(c),
            Norm::L1 | Norm::L2 => acc + c,
        }
    }

    /// Norm of a difference vector, in plain floating point.
    pub fn of<I: IntoIterator<Item = f64>>(self, diff: I) -> f64 {
        let it = diff.into_iter().map(f64::abs);
        match self {
            Norm::L1 => it.sum(),
            Norm::L2 => it.map(|v| v * v).sum::<f64>().sqrt(),
            Norm::Linf => it.fold(0.0, f64::max),
        }
    }

    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        self.of(a.iter().zip(b).map(|(x, y)| x - y))
    }

    pub fn name(self) -> &'static str {
        match self {
            Norm::L1 => "l1",
            Norm::L2 => "l2",
            Norm::Linf => "linf",
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Norm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "l1" | "1" => Ok(Norm::L1),
            "l2" | "2" => Ok(Norm::L2),
            "linf" | "inf" | "l-inf" => Ok(Norm::Linf),
            other => Err(format!("unknown norm `{other}` (expected l1, l2 or linf)")),
        }
    }
}

/// Lexicographic perturbation key: the primary norm, then squared l2.
///
/// For `L2` the primary component is the squared distance, which orders the
/// same way as the distance itself.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct DistKey {
    pub primary: Fixed,
    pub secondary: Fixed,
}

impl DistKey {
    pub const ZERO: DistKey = DistKey {
        primary: Fixed::ZERO,
        secondary: Fixed::ZERO,
    };

    /// Key of a set of per-dimension gaps.
    pub fn from_gaps<I: IntoIterator<Item = f64>>(norm: Norm, gaps: I) -> DistKey {
        let mut key = DistKey::ZERO;
        for g in gaps {
            key.primary = norm.combine(key.primary, norm.contribution(g));
            key.secondary += Fixed::from_f64(g * g);
        }
        key
    }

    /// The primary norm value (square root taken for `L2`).
    pub fn value(&self, norm: Norm) -> f64 {
        match norm {
            Norm::L2 => self.primary.to_f64().sqrt(),
            _ => self.primary.to_f64(),
        }
    }

    pub fn l2(&self) -> f64 {
        self.secondary.to_f64().sqrt()
    }
}

/// Non-empty axis-aligned box, stored sparsely: only dimensions with at
/// least one finite side are kept, sorted by dimension.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    dims: Vec<(usize, Interval)>,
}

impl AxisBox {
    /// The unbounded box.
    pub fn full() -> AxisBox {
        AxisBox { dims: Vec::new() }
    }

    /// Builds a box from per-dimension constraints, intersecting repeated
    /// dimensions. Returns `None` when the result is empty.
    pub fn from_constraints<I>(constraints: I) -> Option<AxisBox>
    where
        I: IntoIterator<Item = (usize, Interval)>,
    {
        let mut dims: Vec<(usize, Interval)> = constraints.into_iter().collect();
        dims.sort_by_key(|&(j, _)| j);
        let mut out: Vec<(usize, Interval)> = Vec::with_capacity(dims.len());
        for (j, iv) in dims {
            match out.last_mut() {
                Some((k, cur)) if *k == j => *cur = cur.intersect(iv)?,
                _ => {
                    if iv.lo >= iv.hi {
                        return None;
                    }
                    out.push((j, iv));
                }
            }
        }
        out.retain(|(_, iv)| !iv.is_full());
        Some(AxisBox { dims: out })
    }

    pub fn dims(&self) -> &[(usize, Interval)] {
        &self.dims
    }

    /// Number of dimensions with a finite side.
    pub fn finite_dims(&self) -> usize {
        self.dims.len()
    }

    pub fn interval(&self, j: usize) -> Interval {
        match self.dims.binary_search_by_key(&j, |&(k, _)| k) {
            Ok(i) => self.dims[i].1,
            Err(_) => Interval::FULL,
        }
    }

    /// Intersection; `None` if empty.
    pub fn intersect(&self, other: &AxisBox) -> Option<AxisBox> {
        let (a, b) = (&self.dims, &other.dims);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut k) = (0, 0);
        while i < a.len() || k < b.len() {
            if k == b.len() || (i < a.len() && a[i].0 < b[k].0) {
                out.push(a[i]);
                i += 1;
            } else if i == a.len() || b[k].0 < a[i].0 {
                out.push(b[k]);
                k += 1;
            } else {
                out.push((a[i].0, a[i].1.intersect(b[k].1)?));
                i += 1;
                k += 1;
            }
        }
        Some(AxisBox { dims: out })
    }

    pub fn intersects(&self, other: &AxisBox) -> bool {
        let (a, b) = (&self.dims, &other.dims);
        let (mut i, mut k) = (0, 0);
        while i < a.len() && k < b.len() {
            match a[i].0.cmp(&b[k].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => k += 1,
                std::cmp::Ordering::Equal => {
                    if a[i].1.intersect(b[k].1).is_none() {
                        return false;
                    }
                    i += 1;
                    k += 1;
                }
            }
        }
        true
    }

    pub fn contains(&self, x: &[f64], cmp: Comparator) -> bool {
        self.dims.iter().all(|&(j, iv)| cmp.contains(iv, x[j]))
    }

    /// Closest point of the closure to `x0`, for every lp norm at once.
    pub fn closest_point(&self, x0: &[f64]) -> Vec<f64> {
        let mut p = x0.to_vec();
        for &(j, iv) in &self.dims {
            p[j] = iv.clamp(x0[j]);
        }
        p
    }

    /// A point inside the half-open box near [`AxisBox::closest_point`].
    pub fn materialize(&self, x0: &[f64], eps: f64, cmp: Comparator) -> Vec<f64> {
        let mut p = x0.to_vec();
        for &(j, iv) in &self.dims {
            p[j] = iv.materialize(x0[j], eps, cmp);
        }
        p
    }

    pub fn key(&self, x0: &[f64], norm: Norm) -> DistKey {
        DistKey::from_gaps(norm, self.dims.iter().map(|&(j, iv)| iv.gap(x0[j])))
    }

    /// Infimum lp distance from `x0` to the box.
    pub fn distance(&self, x0: &[f64], norm: Norm) -> f64 {
        norm.of(self.dims.iter().map(|&(j, iv)| iv.gap(x0[j])))
    }
}

/// Intersection of two boxes; `None` is the empty box.
pub fn intersect(a: &AxisBox, b: &AxisBox) -> Option<AxisBox> {
    a.intersect(b)
}

/// Intersection of many boxes.
pub fn intersect_all<'a, I>(boxes: I) -> Option<AxisBox>
where
    I: IntoIterator<Item = &'a AxisBox>,
{
    let mut acc = AxisBox::full();
    for b in boxes {
        acc = acc.intersect(b)?;
    }
    Some(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    const INF: f64 = f64::INFINITY;

    #[test]
    fn disjoint_leaf_boxes_are_empty() {
        let leaf1 = AxisBox::from_constraints([(0, iv(-INF, 3.0)), (1, iv(-INF, 2.0))]).unwrap();
        let leaf6 = AxisBox::from_constraints([(1, iv(-INF, 10.0)), (0, iv(15.0, INF))]).unwrap();
        assert!(intersect(&leaf1, &leaf6).is_none());
        assert!(!leaf1.intersects(&leaf6));
    }

    #[test]
    fn full_box_is_identity() {
        let b = AxisBox::from_constraints([(0, iv(3.0, 10.0)), (1, iv(5.0, 10.0))]).unwrap();
        assert_eq!(intersect(&b, &AxisBox::full()).unwrap(), b);
        assert_eq!(intersect(&AxisBox::full(), &b).unwrap(), b);
    }

    #[test]
    fn touching_half_open_intervals_do_not_intersect() {
        assert!(iv(0.0, 1.0).intersect(iv(1.0, 2.0)).is_none());
        assert!(Interval::new(1.0, 1.0).is_none());
    }

    #[test]
    fn closest_point_clamps_each_dimension() {
        let b = AxisBox::from_constraints([(0, iv(3.0, 10.0)), (1, iv(5.0, 10.0))]).unwrap();
        let x0 = [23.0, 23.0];
        assert_eq!(b.closest_point(&x0), vec![10.0, 10.0]);
        assert_eq!(b.distance(&x0, Norm::Linf), 13.0);
        assert_eq!(b.distance(&x0, Norm::L1), 26.0);
        let inside = [4.0, 6.0];
        assert_eq!(b.closest_point(&inside), inside.to_vec());
        assert_eq!(b.key(&inside, Norm::L2), DistKey::ZERO);
    }

    #[test]
    fn materialize_moves_off_excluded_ends() {
        let i = iv(3.0, 10.0);
        assert_eq!(i.materialize(0.0, 1e-6, Comparator::Le), 3.0 + 1e-6);
        assert_eq!(i.materialize(20.0, 1e-6, Comparator::Le), 10.0);
        assert_eq!(i.materialize(20.0, 1e-6, Comparator::Lt), 10.0 - 1e-6);
        assert_eq!(i.materialize(0.0, 1e-6, Comparator::Lt), 3.0);
        // narrower than eps
        let narrow = iv(1.0, 1.0 + 1e-9);
        let v = narrow.materialize(0.0, 1e-6, Comparator::Le);
        assert!(Comparator::Le.contains(narrow, v));
        // eps too small to move a large value
        let big = iv(1e17, 2e17);
        let v = big.materialize(0.0, 1e-6, Comparator::Le);
        assert!(Comparator::Le.contains(big, v));
    }

    #[test]
    fn key_orders_lexicographically() {
        // (10,10) and (10,20) from (23,23) tie in linf but differ in l2
        let a = DistKey::from_gaps(Norm::Linf, [13.0, 13.0]);
        let b = DistKey::from_gaps(Norm::Linf, [13.0, 3.0]);
        assert_eq!(a.primary, b.primary);
        assert!(b < a);
        assert_eq!(a.value(Norm::Linf), 13.0);
        assert_eq!(a.l2(), 338f64.sqrt());
    }

    #[test]
    fn norm_parsing() {
        assert_eq!("linf".parse::<Norm>().unwrap(), Norm::Linf);
        assert_eq!("L2".parse::<Norm>().unwrap(), Norm::L2);
        assert!("l3".parse::<Norm>().is_err());
    }
}
