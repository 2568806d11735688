//! Hyperrectangles, their `ℓ∞` neighborhoods and boundary layers, and finite
//! rectangle families standing in for the full class of rectangles.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Product of intervals `∏ [a_j, b_j]` with per-endpoint closedness.
///
/// Infinite endpoints are always open. The empty set is not representable;
/// operations that can produce it return `Option`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Hyperrectangle {
    lower: Vec<f64>,
    upper: Vec<f64>,
    lower_closed: Vec<bool>,
    upper_closed: Vec<bool>,
}

/// `ℓ∞` distances from a point to the faces of a rectangle, split by
/// closedness so that neighborhood membership reduces to comparisons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceDistances {
    /// `max_j` distance outside the closure along coordinate `j` (0 inside).
    pub outside: f64,
    /// Smallest signed margin to a closed finite face (`+∞` if none).
    pub inner_closed: f64,
    /// Smallest signed margin to an open finite face (`+∞` if none).
    pub inner_open: f64,
}

impl FaceDistances {
    /// Membership in `A^t`.
    #[inline]
    pub fn in_enlarged(&self, t: f64) -> bool {
        self.outside <= t
    }

    /// Membership in `A^{-t}`.
    #[inline]
    pub fn in_shrunk(&self, t: f64) -> bool {
        self.inner_closed >= t && self.inner_open > t
    }

    /// Membership in `∂A(t) = A^t \ A^{-t}`.
    #[inline]
    pub fn in_boundary(&self, t: f64) -> bool {
        self.in_enlarged(t) && !self.in_shrunk(t)
    }
}

impl Hyperrectangle {
    /// Rectangle with all finite endpoints closed.
    pub fn closed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let lc = lower.iter().map(|v| v.is_finite()).collect();
        let uc = upper.iter().map(|v| v.is_finite()).collect();
        Self::with_closedness(lower, upper, lc, uc)
    }

    pub fn with_closedness(
        lower: Vec<f64>,
        upper: Vec<f64>,
        lower_closed: Vec<bool>,
        upper_closed: Vec<bool>,
    ) -> Result<Self> {
        let p = lower.len();
        for len in [upper.len(), lower_closed.len(), upper_closed.len()] {
            if len != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: len,
                });
            }
        }
        if p == 0 {
            return Err(Error::invalid(
                "lower",
                "rectangle needs at least one coordinate",
            ));
        }
        let mut lower_closed = lower_closed;
        let mut upper_closed = upper_closed;
        for j in 0..p {
            let (a, b) = (lower[j], upper[j]);
            if a.is_nan() || b.is_nan() || a == f64::INFINITY || b == f64::NEG_INFINITY {
                return Err(Error::invalid(
                    "endpoint",
                    format!("bad interval [{a}, {b}] at {j}"),
                ));
            }
            if a > b {
                return Err(Error::invalid(
                    "endpoint",
                    format!("lower {a} > upper {b} at {j}"),
                ));
            }
            if a.is_infinite() {
                lower_closed[j] = false;
            }
            if b.is_infinite() {
                upper_closed[j] = false;
            }
            if a == b && !(lower_closed[j] && upper_closed[j]) {
                return Err(Error::invalid("endpoint", format!("empty interval at {j}")));
            }
        }
        Ok(Self {
            lower,
            upper,
            lower_closed,
            upper_closed,
        })
    }

    /// The whole space `ℝ^p`.
    pub fn full(p: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; p],
            upper: vec![f64::INFINITY; p],
            lower_closed: vec![false; p],
            upper_closed: vec![false; p],
        }
    }

    /// Symmetric cube `[-t, t]^p`.
    pub fn cube(p: usize, t: f64) -> Result<Self> {
        Self::closed(vec![-t; p], vec![t; p])
    }

    /// Corner set `{x : x_j <= b_j}`.
    pub fn corner(b: &[f64]) -> Result<Self> {
        Self::closed(vec![f64::NEG_INFINITY; b.len()], b.to_vec())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn lower_closed(&self) -> &[bool] {
        &self.lower_closed
    }

    pub fn upper_closed(&self) -> &[bool] {
        &self.upper_closed
    }

    pub fn is_full(&self) -> bool {
        self.lower.iter().all(|v| v.is_infinite()) && self.upper.iter().all(|v| v.is_infinite())
    }

    /// Membership, respecting closedness. Errors on dimension mismatch.
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(self.holds(x))
    }

    /// Membership without the dimension check (hot loops). `x` must have
    /// length `dim()`.
    #[inline]
    pub fn holds(&self, x: &[f64]) -> bool {
        debug_assert_eq!(x.len(), self.dim());
        for j in 0..self.lower.len() {
            let v = x[j];
            let (a, b) = (self.lower[j], self.upper[j]);
            let lo_ok = if self.lower_closed[j] { v >= a } else { v > a };
            let hi_ok = if self.upper_closed[j] { v <= b } else { v < b };
            if !(lo_ok && hi_ok) {
                return false;
            }
        }
        true
    }

    /// Outer neighborhood `A^t = {x : d∞(x, A) <= t}`; finite endpoints become closed.
    pub fn enlarge(&self, t: f64) -> Result<Self> {
        check_width(t)?;
        let p = self.dim();
        let mut out = self.clone();
        for j in 0..p {
            if self.lower[j].is_finite() {
                out.lower[j] = self.lower[j] - t;
                out.lower_closed[j] = true;
            }
            if self.upper[j].is_finite() {
                out.upper[j] = self.upper[j] + t;
                out.upper_closed[j] = true;
            }
        }
        Ok(out)
    }

    /// Inner neighborhood `A^{-t} = {x ∈ A : B∞(x, t) ⊂ A}`, or `None` when empty.
    ///
    /// The closed ball fits inside an interval exactly when the point sits
    /// `t` inside each endpoint, with the endpoint's own closedness, so flags
    /// carry over unchanged.
    pub fn shrink(&self, t: f64) -> Result<Option<Self>> {
        check_width(t)?;
        let mut out = self.clone();
        for j in 0..self.dim() {
            if self.lower[j].is_finite() {
                out.lower[j] = self.lower[j] + t;
            }
            if self.upper[j].is_finite() {
                out.upper[j] = self.upper[j] - t;
            }
            let (a, b) = (out.lower[j], out.upper[j]);
            if a > b || (a == b && !(out.lower_closed[j] && out.upper_closed[j])) {
                return Ok(None);
            }
        }
        Ok(Some(out))
    }

    /// Membership in the boundary layer `∂A(t) = A^t \ A^{-t}`.
    pub fn in_boundary(&self, x: &[f64], t: f64) -> Result<bool> {
        let outer = self.enlarge(t)?.contains(x)?;
        let inner = match self.shrink(t)? {
            Some(s) => s.contains(x)?,
            None => false,
        };
        Ok(outer && !inner)
    }

    /// Face distances of `x`; one pass answers membership for every `t`.
    #[inline]
    pub fn face_distances(&self, x: &[f64]) -> FaceDistances {
        let mut outside: f64 = 0.0;
        let mut inner_closed = f64::INFINITY;
        let mut inner_open = f64::INFINITY;
        for j in 0..self.lower.len() {
            let v = x[j];
            let (a, b) = (self.lower[j], self.upper[j]);
            if a.is_finite() {
                outside = outside.max(a - v);
                let m = v - a;
                if self.lower_closed[j] {
                    inner_closed = inner_closed.min(m);
                } else {
                    inner_open = inner_open.min(m);
                }
            }
            if b.is_finite() {
                outside = outside.max(v - b);
                let m = b - v;
                if self.upper_closed[j] {
                    inner_closed = inner_closed.min(m);
                } else {
                    inner_open = inner_open.min(m);
                }
            }
        }
        FaceDistances {
            outside,
            inner_closed,
            inner_open,
        }
    }

    /// `ℓ∞` distance from `x` to the closure of the rectangle.
    pub fn distance(&self, x: &[f64]) -> f64 {
        self.face_distances(x).outside
    }

    /// Image under `x ↦ x / c` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.lower.iter_mut().for_each(|v| *v /= c);
        out.upper.iter_mut().for_each(|v| *v /= c);
        out
    }

    /// Image under `x ↦ x - shift`.
    pub fn translated(&self, shift: &[f64]) -> Self {
        let mut out = self.clone();
        for j in 0..self.dim() {
            out.lower[j] -= shift[j];
            out.upper[j] -= shift[j];
        }
        out
    }
}

fn check_width(t: f64) -> Result<()> {
    if t >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            "t",
            format!("neighborhood width {t} is negative"),
        ))
    }
}

/// Recipe for a finite rectangle family.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FamilyKind {
    /// `{[-t, t]^p}` over a grid of `t`.
    MaxSymmetric(Vec<f64>),
    /// `{x : x ≤ b}` over explicit threshold vectors.
    CornerSets(Vec<Vec<f64>>),
    /// Random rectangles with endpoints uniform in `range`; each endpoint is
    /// replaced by `∓∞` with probability `infinite_fraction`.
    Random {
        count: usize,
        seed: u64,
        range: (f64, f64),
        infinite_fraction: f64,
    },
    Union(Vec<FamilyKind>),
}

impl FamilyKind {
    /// Random family with the default 10% infinite endpoints.
    pub fn random(count: usize, seed: u64, range: (f64, f64)) -> Self {
        FamilyKind::Random {
            count,
            seed,
            range,
            infinite_fraction: 0.1,
        }
    }

    /// Full Cartesian corner grid over `axis` values (`axis.len()^p` members).
    pub fn corner_grid(axis: &[f64], p: usize) -> Self {
        let mut out: Vec<Vec<f64>> = vec![Vec::new()];
        for _ in 0..p {
            let mut next = Vec::with_capacity(out.len() * axis.len());
            for prefix in &out {
                for &v in axis {
                    let mut b = prefix.clone();
                    b.push(v);
                    next.push(b);
                }
            }
            out = next;
        }
        FamilyKind::CornerSets(out)
    }

    /// Diagonal corner sets `{x : x_j ≤ c ∀j}` over `axis`.
    pub fn corner_diagonal(axis: &[f64], p: usize) -> Self {
        FamilyKind::CornerSets(axis.iter().map(|&c| vec![c; p]).collect())
    }
}

/// Evenly spaced grid of `count` points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// The finite family used by default at dimension `p`: a 41-per-axis corner
/// grid on `[-3, 3]` for `p ≤ 2`; otherwise 512 random rectangles on
/// `[-3, 3]` plus 41 symmetric cubes on `[0.05, 4]`.
pub fn default_family_kind(p: usize, seed: u64) -> FamilyKind {
    if p <= 2 {
        FamilyKind::corner_grid(&linspace(-3.0, 3.0, 41), p)
    } else {
        FamilyKind::Union(vec![
            FamilyKind::random(512, seed, (-3.0, 3.0)),
            FamilyKind::MaxSymmetric(linspace(0.05, 4.0, 41)),
        ])
    }
}

/// A materialized finite family of rectangles of dimension `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct RectangleFamily {
    pub kind: FamilyKind,
    pub p: usize,
    pub members: Vec<Hyperrectangle>,
}

impl RectangleFamily {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Concatenation of two families of the same dimension.
    pub fn union(self, other: RectangleFamily) -> Result<RectangleFamily> {
        if self.p != other.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                found: other.p,
            });
        }
        let mut members = self.members;
        members.extend(other.members);
        Ok(RectangleFamily {
            kind: FamilyKind::Union(vec![self.kind, other.kind]),
            p: self.p,
            members,
        })
    }
}

/// Materializes a rectangle family.
pub fn make_family(kind: FamilyKind, p: usize) -> Result<RectangleFamily> {
    if p == 0 {
        return Err(Error::invalid("p", "must be positive"));
    }
    let members = materialize(&kind, p)?;
    if members.is_empty() {
        return Err(Error::EmptyFamily);
    }
    Ok(RectangleFamily { kind, p, members })
}

fn materialize(kind: &FamilyKind, p: usize) -> Result<Vec<Hyperrectangle>> {
    match kind {
        FamilyKind::MaxSymmetric(ts) => ts
            .iter()
            .map(|&t| {
                if t < 0.0 {
                    Err(Error::invalid("t", format!("negative half-width {t}")))
                } else {
                    Hyperrectangle::cube(p, t)
                }
            })
            .collect(),
        FamilyKind::CornerSets(bs) => bs
            .iter()
            .map(|b| {
                if b.len() != p {
                    Err(Error::DimensionMismatch {
                        expected: p,
                        found: b.len(),
                    })
                } else {
                    Hyperrectangle::corner(b)
                }
            })
            .collect(),
        FamilyKind::Random {
            count,
            seed,
            range,
            infinite_fraction,
        } => {
            let (lo, hi) = *range;
            if !(lo < hi) || !(0.0..=1.0).contains(infinite_fraction) {
                return Err(Error::invalid("range", format!("bad range ({lo}, {hi})")));
            }
            let mut rng = rng_from_seed(*seed);
            let mut out = Vec::with_capacity(*count);
            for _ in 0..*count {
                let mut lower = vec![0.0; p];
                let mut upper = vec![0.0; p];
                for j in 0..p {
                    let u: f64 = rng.random_range(lo..hi);
                    let v: f64 = rng.random_range(lo..hi);
                    let (mut a, mut b) = if u <= v { (u, v) } else { (v, u) };
                    if rng.random::<f64>() < *infinite_fraction {
                        a = f64::NEG_INFINITY;
                    }
                    if rng.random::<f64>() < *infinite_fraction {
                        b = f64::INFINITY;
                    }
                    lower[j] = a;
                    upper[j] = b;
                }
                out.push(Hyperrectangle::closed(lower, upper)?);
            }
            Ok(out)
        }
        FamilyKind::Union(parts) => {
            let mut out = Vec::new();
            for part in parts {
                out.extend(materialize(part, p)?);
            }
            Ok(out)
        }
    }
}
