//! Frequency-side geometry of the truncated paraboloid `xi_n = |xi'|^2`,
//! `|xi_i| <= 1`: its vertical `1/R` neighborhood, the small-cap and
//! canonical-cap tilings, unit normals, transversality and the dual slabs.
//!
//! Caps tile the base square `[-1, 1]^(n-1)` (not the unit cube), so a
//! family with `R^{alpha_i}` cells per unit length holds
//! `prod_i 2 R^{alpha_i}` caps: `2^(n-1)` times the nominal `R^{|alpha|}`.

use crate::{Error, Result};

const SNAP: f64 = 1e-9;

/// Small-cap exponents `alpha_i in [1/2, 1]`, one per horizontal axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaVector {
    entries: Vec<f64>,
}

impl AlphaVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Dimension(entries.len() + 1));
        }
        for (index, &value) in entries.iter().enumerate() {
            if !(0.5..=1.0).contains(&value) {
                return Err(Error::AlphaRange { index, value });
            }
        }
        Ok(Self { entries })
    }

    /// All `n - 1` entries equal to `value`.
    pub fn uniform(n: usize, value: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Dimension(n));
        }
        Self::new(vec![value; n - 1])
    }

    /// The canonical exponent `(1/2, ..., 1/2)`.
    pub fn canonical(n: usize) -> Result<Self> {
        Self::uniform(n, 0.5)
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Ambient dimension `n`.
    pub fn dimension(&self) -> usize {
        self.entries.len() + 1
    }

    /// `|alpha| = sum_i alpha_i`.
    pub fn weight(&self) -> f64 {
        self.entries.iter().sum()
    }

    pub fn max_entry(&self) -> f64 {
        self.entries.iter().copied().fold(f64::MIN, f64::max)
    }

    /// Whether `|alpha| <= n/2`, the range where the decoupling bound is claimed.
    pub fn is_admissible(&self) -> bool {
        self.weight() <= self.dimension() as f64 / 2.0 + 1e-12
    }

    pub fn is_canonical(&self) -> bool {
        self.entries.iter().all(|&a| a == 0.5)
    }
}

/// A dyadic scale `R = 2^k`, `k >= 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Scale(u64);

impl Scale {
    pub fn new(r: u64) -> Result<Self> {
        if r < 4 || !r.is_power_of_two() {
            return Err(Error::Scale(r));
        }
        Ok(Self(r))
    }

    pub fn from_log2(k: u32) -> Result<Self> {
        if k >= 63 {
            return Err(Error::Scale(u64::MAX));
        }
        Self::new(1u64 << k)
    }

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }

    pub fn log2(self) -> u32 {
        self.0.trailing_zeros()
    }

    /// `R^e`.
    pub fn pow(self, e: f64) -> f64 {
        self.as_f64().powf(e)
    }
}

/// Number of cells per unit length for exponent `a`: `R^a` when integral,
/// otherwise its ceiling (flagged by the second component).
pub fn cells_per_unit(scale: Scale, a: f64) -> (usize, bool) {
    let v = scale.pow(a);
    let r = v.round();
    if (v - r).abs() <= SNAP * v.max(1.0) {
        (r as usize, true)
    } else {
        (v.ceil() as usize, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CapKind {
    Small,
    Canonical,
}

impl CapKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CapKind::Small => "small",
            CapKind::Canonical => "canonical",
        }
    }
}

/// One cap: the half-open base box `prod_i [c_i/m_i, (c_i+1)/m_i)` crossed
/// with the neighborhood.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Cap {
    pub corner: Vec<i64>,
    pub cells: Vec<usize>,
    pub kind: CapKind,
}

impl Cap {
    pub fn horizontal_dim(&self) -> usize {
        self.corner.len()
    }

    pub fn width(&self, axis: usize) -> f64 {
        1.0 / self.cells[axis] as f64
    }

    pub fn lower(&self, axis: usize) -> f64 {
        self.corner[axis] as f64 / self.cells[axis] as f64
    }

    pub fn upper(&self, axis: usize) -> f64 {
        (self.corner[axis] + 1) as f64 / self.cells[axis] as f64
    }

    /// Horizontal center of the base box.
    pub fn center(&self) -> Vec<f64> {
        (0..self.horizontal_dim()).map(|i| (self.corner[i] as f64 + 0.5) / self.cells[i] as f64).collect()
    }

    /// The base-box center lifted to the paraboloid.
    pub fn lifted_center(&self) -> Vec<f64> {
        lift(&self.center())
    }

    /// Half-open containment of a horizontal point, with the top edge of
    /// the square assigned to the last cell.
    pub fn contains_horizontal(&self, xi: &[f64]) -> bool {
        xi.len() == self.horizontal_dim()
            && (0..self.horizontal_dim()).all(|i| cell_index(xi[i], self.cells[i]) == self.corner[i])
    }

    /// Whether this cap's base box lies inside `outer`'s base box.
    pub fn within(&self, outer: &Cap) -> bool {
        (0..self.horizontal_dim()).all(|i| {
            let tol = SNAP * self.width(i);
            self.lower(i) >= outer.lower(i) - tol && self.upper(i) <= outer.upper(i) + tol
        })
    }
}

/// Cell index of coordinate `x` on a grid with `m` cells per unit, clamped
/// to `[-m, m - 1]`. Coordinates within rounding of a grid line are snapped
/// onto it so lattice corners land in the cap they name.
pub fn cell_index(x: f64, m: usize) -> i64 {
    let q = x * m as f64;
    let r = q.round();
    let k = if (q - r).abs() <= SNAP * q.abs().max(1.0) { r as i64 } else { q.floor() as i64 };
    k.clamp(-(m as i64), m as i64 - 1)
}

/// The tiling `Gamma_alpha(1/R)` (or `Theta(1/R)` for the canonical kind).
#[derive(Debug, Clone, PartialEq)]
pub struct CapFamily {
    alpha: AlphaVector,
    scale: Scale,
    kind: CapKind,
    cells: Vec<usize>,
    nondyadic: bool,
}

impl CapFamily {
    pub fn new(alpha: AlphaVector, scale: Scale, kind: CapKind) -> Result<Self> {
        if kind == CapKind::Canonical && !alpha.is_canonical() {
            return Err(Error::NotCanonical);
        }
        let mut nondyadic = false;
        let cells = alpha
            .entries()
            .iter()
            .map(|&a| {
                let (m, exact) = cells_per_unit(scale, a);
                nondyadic |= !exact;
                m
            })
            .collect();
        Ok(Self { alpha, scale, kind, cells, nondyadic })
    }

    pub fn small(alpha: AlphaVector, scale: Scale) -> Result<Self> {
        Self::new(alpha, scale, CapKind::Small)
    }

    pub fn canonical(n: usize, scale: Scale) -> Result<Self> {
        Self::new(AlphaVector::canonical(n)?, scale, CapKind::Canonical)
    }

    pub fn alpha(&self) -> &AlphaVector {
        &self.alpha
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn kind(&self) -> CapKind {
        self.kind
    }

    pub fn dimension(&self) -> usize {
        self.alpha.dimension()
    }

    /// Cells per unit length along each horizontal axis.
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    /// Set when some `R^{alpha_i}` is not an integer and the grid was
    /// rounded up.
    pub fn nondyadic(&self) -> bool {
        self.nondyadic
    }

    pub fn len(&self) -> usize {
        self.cells.iter().map(|m| 2 * m).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Ratio between the cap count and `R^{|alpha|}` caused by tiling
    /// `[-1, 1]^(n-1)`: `2^(n-1)` on dyadic grids.
    pub fn count_factor(&self) -> f64 {
        self.len() as f64 / self.scale.pow(self.alpha.weight())
    }

    pub fn cap(&self, corner: Vec<i64>) -> Cap {
        Cap { corner, cells: self.cells.clone(), kind: self.kind }
    }

    /// Row-major position of a cap corner; inverse of [`CapFamily::corner_at`].
    pub fn linear_index(&self, corner: &[i64]) -> usize {
        corner.iter().zip(&self.cells).fold(0usize, |acc, (&c, &m)| acc * 2 * m + (c + m as i64) as usize)
    }

    pub fn corner_at(&self, mut index: usize) -> Vec<i64> {
        let mut corner = vec![0i64; self.cells.len()];
        for (slot, &m) in corner.iter_mut().zip(&self.cells).rev() {
            *slot = (index % (2 * m)) as i64 - m as i64;
            index /= 2 * m;
        }
        corner
    }

    /// All caps in row-major corner order.
    pub fn caps(&self) -> Vec<Cap> {
        (0..self.len()).map(|i| self.cap(self.corner_at(i))).collect()
    }

    /// Corner of the cap whose half-open base box holds the horizontal point.
    pub fn locate(&self, horizontal: &[f64]) -> Vec<i64> {
        horizontal.iter().zip(&self.cells).map(|(&x, &m)| cell_index(x, m)).collect()
    }
}

/// Enumerates every cap of the family; see [`CapFamily::nondyadic`] for
/// the ceiling-rounding flag.
pub fn enumerate_caps(alpha: &AlphaVector, scale: Scale, kind: CapKind) -> Result<CapFamily> {
    CapFamily::new(alpha.clone(), scale, kind)
}

/// Paraboloid lift `(xi', |xi'|^2)`.
pub fn lift(horizontal: &[f64]) -> Vec<f64> {
    let mut p = horizontal.to_vec();
    p.push(horizontal.iter().map(|x| x * x).sum());
    p
}

/// Vertical-distance membership in the `1/r` neighborhood over `|xi_i| <= 1`.
/// `r` may be any positive real, so rescaled neighborhoods can be tested too.
pub fn in_neighborhood(xi: &[f64], r: f64) -> bool {
    let Some((&last, horizontal)) = xi.split_last() else {
        return false;
    };
    if horizontal.is_empty() || horizontal.iter().any(|x| x.abs() > 1.0 + 1e-15) {
        return false;
    }
    let height: f64 = horizontal.iter().map(|x| x * x).sum();
    (last - height).abs() <= (1.0 / r) * (1.0 + 1e-12)
}

/// The cap of `family` holding `xi`.
pub fn cap_of(xi: &[f64], family: &CapFamily) -> Result<Cap> {
    if xi.len() != family.dimension() {
        return Err(Error::DimensionMismatch { expected: family.dimension(), got: xi.len() });
    }
    if !in_neighborhood(xi, family.scale().as_f64()) {
        return Err(Error::OutsideNeighborhood(xi.to_vec()));
    }
    Ok(family.cap(family.locate(&xi[..xi.len() - 1])))
}

/// Unit normal `(-2 xi', 1) / sqrt(1 + 4|xi'|^2)` of the paraboloid.
pub fn normal_at(horizontal: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = horizontal.iter().map(|x| -2.0 * x).collect();
    v.push(1.0);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Absolute determinant by Gaussian elimination with partial pivoting.
pub fn abs_determinant(mut rows: Vec<Vec<f64>>) -> f64 {
    let n = rows.len();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n).max_by(|&a, &b| rows[a][col].abs().total_cmp(&rows[b][col].abs())).unwrap_or(col);
        if rows[pivot][col] == 0.0 {
            return 0.0;
        }
        rows.swap(col, pivot);
        det *= rows[col][col];
        for r in col + 1..n {
            let f = rows[r][col] / rows[col][col];
            for c in col..n {
                rows[r][c] -= f * rows[col][c];
            }
        }
    }
    det.abs()
}

/// `|det|` of the unit normals at `n` points of the paraboloid.
pub fn transversality_measure(points: &[Vec<f64>]) -> Result<f64> {
    let n = points.first().map_or(0, Vec::len);
    if n < 2 || points.len() != n {
        return Err(Error::PointCount { expected: n.max(2), got: points.len() });
    }
    let mut normals = Vec::with_capacity(n);
    for p in points {
        if p.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: p.len() });
        }
        let horizontal = &p[..n - 1];
        let height: f64 = horizontal.iter().map(|x| x * x).sum();
        if (p[n - 1] - height).abs() > 1e-9 {
            return Err(Error::NotOnParaboloid(p.clone()));
        }
        normals.push(normal_at(horizontal));
    }
    Ok(abs_determinant(normals))
}

/// Small caps of `small` whose base boxes lie in the canonical cap `theta`.
pub fn caps_in_theta(theta: &Cap, small: &CapFamily) -> Result<Vec<Cap>> {
    if theta.kind != CapKind::Canonical {
        return Err(Error::NotCanonical);
    }
    let (expected, _) = cells_per_unit(small.scale(), 0.5);
    if theta.cells.iter().any(|&m| m != expected) || theta.horizontal_dim() != small.cells().len() {
        return Err(Error::NotCanonical);
    }
    let ranges: Vec<(i64, i64)> = (0..theta.horizontal_dim())
        .map(|i| {
            let m = small.cells()[i] as f64;
            let lo = (theta.lower(i) * m - SNAP).ceil() as i64;
            let hi = (theta.upper(i) * m + SNAP).floor() as i64 - 1;
            (lo.max(-(m as i64)), hi.min(m as i64 - 1))
        })
        .collect();
    let mut out = Vec::new();
    let mut corner: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    if ranges.iter().any(|r| r.0 > r.1) {
        return Ok(out);
    }
    loop {
        out.push(small.cap(corner.clone()));
        let mut axis = corner.len();
        loop {
            if axis == 0 {
                return Ok(out);
            }
            axis -= 1;
            if corner[axis] < ranges[axis].1 {
                corner[axis] += 1;
                break;
            }
            corner[axis] = ranges[axis].0;
        }
    }
}

/// The affine map taking a cap of side `w` centred (horizontally) at `c`
/// onto the unit-side cube around the origin while fixing the paraboloid:
/// `eta' = (xi' - c)/w`, `eta_n = (xi_n - 2 c.xi' + |c|^2)/w^2`.
pub fn rescale_point(xi: &[f64], center: &[f64], width: f64) -> Vec<f64> {
    let n = xi.len();
    let mut out: Vec<f64> = (0..n - 1).map(|i| (xi[i] - center[i]) / width).collect();
    let dot: f64 = (0..n - 1).map(|i| center[i] * xi[i]).sum();
    let c2: f64 = center.iter().map(|c| c * c).sum();
    out.push((xi[n - 1] - 2.0 * dot + c2) / (width * width));
    out
}

/// Parabolic rescaling of points inside a canonical cap of side `K^{-1/2}`.
/// Points in the `1/R` neighborhood land in the `K/R` neighborhood of the
/// full paraboloid; the cap base becomes `[-1/2, 1/2]^(n-1)`.
pub fn parabolic_rescale(theta: &Cap, points: &[Vec<f64>], k: f64, r: f64) -> Result<Vec<Vec<f64>>> {
    let side = k.powf(-0.5);
    let width = theta.width(0);
    if theta.kind != CapKind::Canonical
        || (0..theta.horizontal_dim()).any(|i| (theta.width(i) - width).abs() > SNAP)
        || ((1.0 / width).ceil() - (1.0 / side).ceil()).abs() > 0.5
    {
        return Err(Error::NotCanonical);
    }
    let center = theta.center();
    points
        .iter()
        .map(|p| {
            if p.len() != theta.horizontal_dim() + 1 {
                return Err(Error::DimensionMismatch { expected: theta.horizontal_dim() + 1, got: p.len() });
            }
            let h = &p[..p.len() - 1];
            let inside = (0..h.len()).all(|i| {
                let tol = SNAP * width;
                h[i] >= theta.lower(i) - tol && h[i] <= theta.upper(i) + tol
            });
            if !inside || !in_neighborhood(p, r) {
                return Err(Error::AtomOutsideCap(p.clone()));
            }
            Ok(rescale_point(p, &center, width))
        })
        .collect()
}

/// Orthonormal frame at the lift of `horizontal`: Gram-Schmidt tangents
/// `(e_i, 2 xi_i)` followed by the unit normal.
pub fn tangent_frame(horizontal: &[f64]) -> Vec<Vec<f64>> {
    let d = horizontal.len();
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    for i in 0..d {
        let mut v = vec![0.0; d + 1];
        v[i] = 1.0;
        v[d] = 2.0 * horizontal[i];
        for e in &frame {
            let dot: f64 = v.iter().zip(e).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(e).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        frame.push(v);
    }
    frame.push(normal_at(horizontal));
    frame
}

/// An `(R^alpha, R)`-slab: the cell `k_i <= <x, e_i>/d_i < k_i + 1` of the
/// lattice of boxes with sides `d = (R^{alpha_1}, ..., R^{alpha_{n-1}}, R)`
/// in the cap's tangent frame `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct Slab {
    pub cap: Cap,
    pub translate: Vec<i64>,
    pub frame: Vec<Vec<f64>>,
    pub sides: Vec<f64>,
}

impl Slab {
    pub fn center(&self) -> Vec<f64> {
        let n = self.sides.len();
        let mut c = vec![0.0; n];
        for (axis, e) in self.frame.iter().enumerate() {
            let t = (self.translate[axis] as f64 + 0.5) * self.sides[axis];
            c.iter_mut().zip(e).for_each(|(ci, ei)| *ci += t * ei);
        }
        c
    }

    /// Frame coordinates of `x`.
    pub fn local(&self, x: &[f64]) -> Vec<f64> {
        self.frame.iter().map(|e| e.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    /// Whether `x` lies in the slab dilated by `factor` about its center.
    pub fn contains_dilated(&self, x: &[f64], factor: f64) -> bool {
        let local = self.local(x);
        local.iter().enumerate().all(|(i, &y)| {
            let mid = (self.translate[i] as f64 + 0.5) * self.sides[i];
            (y - mid).abs() <= 0.5 * factor * self.sides[i] * (1.0 + 1e-12)
        })
    }

    /// Translate of the slab (same cap and frame) containing `x`.
    pub fn translate_of(frame: &[Vec<f64>], sides: &[f64], x: &[f64]) -> Vec<i64> {
        frame
            .iter()
            .zip(sides)
            .map(|(e, &d)| {
                let y: f64 = e.iter().zip(x).map(|(a, b)| a * b).sum();
                (y / d).floor() as i64
            })
            .collect()
    }
}

/// Slab dual to `cap` (from `family`) with the given lattice translate.
pub fn dual_slab(family: &CapFamily, cap: &Cap, translate: Vec<i64>) -> Slab {
    let scale = family.scale();
    let mut sides: Vec<f64> = family.alpha().entries().iter().map(|&a| scale.pow(a)).collect();
    sides.push(scale.as_f64());
    Slab { cap: cap.clone(), translate, frame: tangent_frame(&cap.center()), sides }
}
