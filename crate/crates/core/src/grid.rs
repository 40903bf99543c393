//! Uniform 2D grids, masked fields and domain geometry.
//!
//! Storage is row-major with `y` as the outer index: node `(i, j)` lives at
//! `j * nx + i`. The EIKF1 file format uses the same order, so a field can be
//! written out without any reshuffling.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use rayon::prelude::*;

use crate::error::{Error, Result};

/// A point or vector in the plane.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };
    pub const E1: Vec2 = Vec2 { x: 1.0, y: 0.0 };
    pub const E2: Vec2 = Vec2 { x: 0.0, y: 1.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    /// Unit vector `e^{iθ}`.
    pub fn from_angle(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Vec2 { x: c, y: s }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// `self ∧ other`, the signed area of the parallelogram.
    pub fn wedge(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    /// Multiplication by the imaginary unit: rotation by π/2.
    pub fn rot90(self) -> Self {
        Vec2 {
            x: -self.y,
            y: self.x,
        }
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Values that can live on a grid node and take part in linear operations
/// (convolution, finite differences, interpolation).
pub trait Sample:
    Copy + Default + Send + Sync + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
    fn magnitude(self) -> f64;
    fn finite(self) -> bool;
}

impl Sample for f64 {
    fn magnitude(self) -> f64 {
        self.abs()
    }
    fn finite(self) -> bool {
        self.is_finite()
    }
}

impl Sample for Vec2 {
    fn magnitude(self) -> f64 {
        self.norm()
    }
    fn finite(self) -> bool {
        self.is_finite()
    }
}

/// A uniform grid with square cells.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid2 {
    nx: usize,
    ny: usize,
    origin: Vec2,
    dx: f64,
}

impl Grid2 {
    pub fn new(nx: usize, ny: usize, origin: Vec2, dx: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::config(format!(
                "grid needs at least 2 nodes per axis, got {nx}x{ny}"
            )));
        }
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(Error::config(format!("grid spacing must be positive, got {dx}")));
        }
        if !origin.is_finite() {
            return Err(Error::config("grid origin must be finite"));
        }
        Ok(Grid2 { nx, ny, origin, dx })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn origin(&self) -> Vec2 {
        self.origin
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dx
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    pub fn ij(&self, index: usize) -> (usize, usize) {
        (index % self.nx, index / self.nx)
    }

    pub fn node(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(
            self.origin.x + i as f64 * self.dx,
            self.origin.y + j as f64 * self.dx,
        )
    }

    pub fn node_at(&self, index: usize) -> Vec2 {
        let (i, j) = self.ij(index);
        self.node(i, j)
    }

    /// Upper-right corner of the grid.
    pub fn extent(&self) -> Vec2 {
        self.node(self.nx - 1, self.ny - 1)
    }

    /// Node `(i + di, j + dj)` if it exists.
    pub fn offset(&self, i: usize, j: usize, di: isize, dj: isize) -> Option<usize> {
        let ii = i as isize + di;
        let jj = j as isize + dj;
        if ii < 0 || jj < 0 || ii >= self.nx as isize || jj >= self.ny as isize {
            None
        } else {
            Some(jj as usize * self.nx + ii as usize)
        }
    }

    /// Index of the node closest to `p`, if `p` lies within half a cell of the grid.
    pub fn nearest(&self, p: Vec2) -> Option<(usize, usize)> {
        let fi = ((p.x - self.origin.x) / self.dx).round();
        let fj = ((p.y - self.origin.y) / self.dx).round();
        if fi < 0.0 || fj < 0.0 || fi >= self.nx as f64 || fj >= self.ny as f64 {
            None
        } else {
            Some((fi as usize, fj as usize))
        }
    }

    /// Whether the axis-aligned box `[lo, hi]` lies inside the grid's bounding box.
    pub fn covers_box(&self, lo: Vec2, hi: Vec2) -> bool {
        let tol = 1e-9 * self.dx;
        let top = self.extent();
        self.origin.x <= lo.x + tol
            && self.origin.y <= lo.y + tol
            && top.x >= hi.x - tol
            && top.y >= hi.y - tol
    }

    /// Lattice offset `(di, dj)` equivalent to `h`, if `h` is a lattice vector.
    pub fn lattice_offset(&self, h: Vec2) -> Option<(isize, isize)> {
        let fx = h.x / self.dx;
        let fy = h.y / self.dx;
        let (rx, ry) = (fx.round(), fy.round());
        if (fx - rx).abs() < 1e-9 && (fy - ry).abs() < 1e-9 {
            Some((rx as isize, ry as isize))
        } else {
            None
        }
    }

    /// Lattice offsets `(di, dj)` with `|(di, dj)|·dx < radius`, in row-major order.
    pub fn disk_offsets(&self, radius: f64, closed: bool) -> Vec<(isize, isize)> {
        let r = (radius / self.dx).ceil() as isize;
        let lim = radius / self.dx;
        let mut out = Vec::new();
        for dj in -r..=r {
            for di in -r..=r {
                let d = ((di * di + dj * dj) as f64).sqrt();
                let inside = if closed { d <= lim + 1e-12 } else { d < lim - 1e-12 };
                if inside {
                    out.push((di, dj));
                }
            }
        }
        out
    }
}

/// The open set Ω on which a field is studied.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Domain {
    Disk { center: Vec2, radius: f64 },
    Rectangle { corner: Vec2, extents: Vec2 },
    Annulus { center: Vec2, inner: f64, outer: f64 },
}

impl Domain {
    pub fn disk(center: Vec2, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::config(format!("disk radius must be positive, got {radius}")));
        }
        Ok(Domain::Disk { center, radius })
    }

    pub fn rectangle(corner: Vec2, extents: Vec2) -> Result<Self> {
        if !(extents.x > 0.0 && extents.y > 0.0) {
            return Err(Error::config("rectangle extents must be positive"));
        }
        Ok(Domain::Rectangle { corner, extents })
    }

    pub fn annulus(center: Vec2, inner: f64, outer: f64) -> Result<Self> {
        if !(inner > 0.0 && outer > inner) {
            return Err(Error::config(format!(
                "annulus needs 0 < r_in < r_out, got r_in={inner}, r_out={outer}"
            )));
        }
        Ok(Domain::Annulus {
            center,
            inner,
            outer,
        })
    }

    /// Membership with a relative tolerance so that boundary nodes of exactly
    /// representable geometries are counted in.
    pub fn contains(&self, p: Vec2) -> bool {
        const TOL: f64 = 1e-12;
        match *self {
            Domain::Disk { center, radius } => (p - center).norm() <= radius * (1.0 + TOL),
            Domain::Rectangle { corner, extents } => {
                let q = p - corner;
                let tx = TOL * extents.x.max(1.0);
                let ty = TOL * extents.y.max(1.0);
                q.x >= -tx && q.y >= -ty && q.x <= extents.x + tx && q.y <= extents.y + ty
            }
            Domain::Annulus {
                center,
                inner,
                outer,
            } => {
                let r = (p - center).norm();
                r >= inner * (1.0 - TOL) && r <= outer * (1.0 + TOL)
            }
        }
    }

    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        match *self {
            Domain::Disk { center, radius } => (
                center - Vec2::new(radius, radius),
                center + Vec2::new(radius, radius),
            ),
            Domain::Rectangle { corner, extents } => (corner, corner + extents),
            Domain::Annulus { center, outer, .. } => (
                center - Vec2::new(outer, outer),
                center + Vec2::new(outer, outer),
            ),
        }
    }

    pub fn mask(&self, grid: &Grid2) -> Vec<bool> {
        (0..grid.len()).map(|k| self.contains(grid.node_at(k))).collect()
    }
}

/// Builds a square-cell grid over the bounding box of `domain` enlarged by
/// `padding`. `n` is the node count along the longer side; the shorter side
/// gets as many nodes as needed to cover its extent.
pub fn make_grid(domain: &Domain, n: usize, padding: f64) -> Result<Grid2> {
    if n < 2 {
        return Err(Error::config(format!("n must be at least 2, got {n}")));
    }
    if !(padding >= 0.0) {
        return Err(Error::config(format!("padding must be non-negative, got {padding}")));
    }
    let (lo, hi) = domain.bounding_box();
    let lo = lo - Vec2::new(padding, padding);
    let hi = hi + Vec2::new(padding, padding);
    let w = hi.x - lo.x;
    let h = hi.y - lo.y;
    let long = w.max(h);
    let dx = long / (n - 1) as f64;
    let count = |len: f64| ((len / dx - 1e-9).ceil() as usize + 1).max(2);
    let (nx, ny) = if w >= h { (n, count(h)) } else { (count(w), n) };
    Grid2::new(nx, ny, lo, dx)
}

/// Values on the nodes of a grid with an inside/outside mask.
///
/// Masked-out nodes carry `T::default()` and are ignored by every operator.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    grid: Grid2,
    values: Vec<T>,
    mask: Vec<bool>,
}

pub type ScalarField = Field<f64>;
pub type VectorField = Field<Vec2>;

impl<T: Copy + Default> Field<T> {
    pub fn from_parts(grid: Grid2, values: Vec<T>, mask: Vec<bool>) -> Result<Self> {
        if values.len() != grid.len() || mask.len() != grid.len() {
            return Err(Error::config(format!(
                "field storage has {} values and {} mask entries for {} nodes",
                values.len(),
                mask.len(),
                grid.len()
            )));
        }
        let mut values = values;
        for (v, &m) in values.iter_mut().zip(&mask) {
            if !m {
                *v = T::default();
            }
        }
        Ok(Field { grid, values, mask })
    }

    /// Evaluates `f` at every node; `None` masks the node out.
    pub fn from_fn(grid: Grid2, f: impl Fn(Vec2) -> Option<T> + Sync) -> Self
    where
        T: Send,
    {
        let pairs: Vec<(T, bool)> = (0..grid.len())
            .into_par_iter()
            .map(|k| match f(grid.node_at(k)) {
                Some(v) => (v, true),
                None => (T::default(), false),
            })
            .collect();
        let (values, mask) = pairs.into_iter().unzip();
        Field { grid, values, mask }
    }

    pub fn filled(grid: Grid2, value: T) -> Self {
        Field {
            grid,
            values: vec![value; grid.len()],
            mask: vec![true; grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid2 {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_valid(&self, k: usize) -> bool {
        self.mask[k]
    }

    pub fn get(&self, k: usize) -> Option<T> {
        if self.mask[k] {
            Some(self.values[k])
        } else {
            None
        }
    }

    pub fn at(&self, i: usize, j: usize) -> Option<T> {
        self.get(self.grid.index(i, j))
    }

    pub fn count_valid(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Masks out every node outside `domain`.
    pub fn restrict(mut self, domain: &Domain) -> Self {
        for k in 0..self.grid.len() {
            if self.mask[k] && !domain.contains(self.grid.node_at(k)) {
                self.mask[k] = false;
                self.values[k] = T::default();
            }
        }
        self
    }

    /// Masks out every node for which `keep` is false.
    pub fn retain(mut self, keep: impl Fn(Vec2) -> bool) -> Self {
        for k in 0..self.grid.len() {
            if self.mask[k] && !keep(self.grid.node_at(k)) {
                self.mask[k] = false;
                self.values[k] = T::default();
            }
        }
        self
    }

    pub fn map<U: Copy + Default + Send>(&self, f: impl Fn(T) -> U + Sync) -> Field<U>
    where
        T: Sync,
    {
        let values = self
            .values
            .par_iter()
            .zip(self.mask.par_iter())
            .map(|(&v, &m)| if m { f(v) } else { U::default() })
            .collect();
        Field {
            grid: self.grid,
            values,
            mask: self.mask.clone(),
        }
    }
}

impl<T: Sample> Field<T> {
    /// Bilinear interpolation at `p`; `None` unless all four surrounding
    /// nodes are masked in.
    pub fn sample(&self, p: Vec2) -> Option<T> {
        let fx = (p.x - self.grid.origin.x) / self.grid.dx;
        let fy = (p.y - self.grid.origin.y) / self.grid.dx;
        if !(fx >= 0.0 && fy >= 0.0) {
            return None;
        }
        let mut i = fx.floor() as usize;
        let mut j = fy.floor() as usize;
        if i >= self.grid.nx || j >= self.grid.ny {
            return None;
        }
        // Points on the last row/column interpolate inside the final cell.
        if i == self.grid.nx - 1 {
            if fx - i as f64 > 1e-12 {
                return None;
            }
            i -= 1;
        }
        if j == self.grid.ny - 1 {
            if fy - j as f64 > 1e-12 {
                return None;
            }
            j -= 1;
        }
        let tx = fx - i as f64;
        let ty = fy - j as f64;
        let g = &self.grid;
        let k00 = g.index(i, j);
        let k10 = g.index(i + 1, j);
        let k01 = g.index(i, j + 1);
        let k11 = g.index(i + 1, j + 1);
        if !(self.mask[k00] && self.mask[k10] && self.mask[k01] && self.mask[k11]) {
            return None;
        }
        let v = &self.values;
        Some(
            v[k00] * ((1.0 - tx) * (1.0 - ty))
                + v[k10] * (tx * (1.0 - ty))
                + v[k01] * ((1.0 - tx) * ty)
                + v[k11] * (tx * ty),
        )
    }

    /// Largest magnitude over masked-in nodes (0 for an empty mask).
    pub fn max_magnitude(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .map(|(v, _)| v.magnitude())
            .fold(0.0, f64::max)
    }

    pub fn check_finite(&self) -> Result<()> {
        for (k, (v, &m)) in self.values.iter().zip(&self.mask).enumerate() {
            if m && !v.finite() {
                let (i, j) = self.grid.ij(k);
                return Err(Error::numerical(format!("non-finite value at node ({i}, {j})")));
            }
        }
        Ok(())
    }
}

impl VectorField {
    /// Pointwise modulus `|m|`.
    pub fn modulus(&self) -> ScalarField {
        self.map(|v| v.norm())
    }

    /// Pointwise rotation by π/2.
    pub fn rotated(&self) -> VectorField {
        self.map(|v| v.rot90())
    }
}

/// A vector field with `|m| = 1` at every masked-in node.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitVectorField(VectorField);

/// Largest deviation from unit modulus accepted by [`UnitVectorField::new`].
pub const UNIT_TOLERANCE: f64 = 1e-12;

impl UnitVectorField {
    pub fn new(field: VectorField) -> Result<Self> {
        for (k, (v, &m)) in field.values.iter().zip(&field.mask).enumerate() {
            if m && (v.norm() - 1.0).abs() > UNIT_TOLERANCE {
                let (i, j) = field.grid.ij(k);
                return Err(Error::config(format!(
                    "node ({i}, {j}) has modulus {} (not a unit field)",
                    v.norm()
                )));
            }
        }
        Ok(UnitVectorField(field))
    }

    /// Renormalizes a field whose modulus is within `tolerance` of 1, which
    /// is the case for fields read back from text with limited precision.
    pub fn normalized(field: VectorField, tolerance: f64) -> Result<Self> {
        for (k, (v, &m)) in field.values.iter().zip(&field.mask).enumerate() {
            if m && (v.norm() - 1.0).abs() > tolerance {
                let (i, j) = field.grid.ij(k);
                return Err(Error::config(format!(
                    "node ({i}, {j}) has modulus {} (tolerance {tolerance})",
                    v.norm()
                )));
            }
        }
        let normed = field.map(|v| v * (1.0 / v.norm()));
        Ok(UnitVectorField(normed))
    }

    pub(crate) fn new_unchecked(field: VectorField) -> Self {
        debug_assert!(UnitVectorField::new(field.clone()).is_ok());
        UnitVectorField(field)
    }

    pub fn as_field(&self) -> &VectorField {
        &self.0
    }

    pub fn into_field(self) -> VectorField {
        self.0
    }

    pub fn grid(&self) -> &Grid2 {
        self.0.grid()
    }

    pub fn restrict(self, domain: &Domain) -> Self {
        UnitVectorField(self.0.restrict(domain))
    }

    pub fn retain(self, keep: impl Fn(Vec2) -> bool) -> Self {
        UnitVectorField(self.0.retain(keep))
    }
}

impl std::ops::Deref for UnitVectorField {
    type Target = VectorField;
    fn deref(&self) -> &VectorField {
        &self.0
    }
}

/// Trapezoidal cell weights for integrating over the masked-in nodes.
///
/// Along each axis a node whose neighbour on one side is masked out (or off
/// the grid) gets half weight, which reproduces the composite trapezoid rule
/// on rectangles.
pub fn trapezoid_weights(grid: &Grid2, mask: &[bool]) -> Vec<f64> {
    let area = grid.cell_area();
    (0..grid.len())
        .map(|k| {
            if !mask[k] {
                return 0.0;
            }
            let (i, j) = grid.ij(k);
            let inside = |di: isize, dj: isize| grid.offset(i, j, di, dj).is_some_and(|q| mask[q]);
            let wx = if inside(-1, 0) && inside(1, 0) { 1.0 } else { 0.5 };
            let wy = if inside(0, -1) && inside(0, 1) { 1.0 } else { 0.5 };
            area * wx * wy
        })
        .collect()
}

/// A weighted set of lattice offsets, used for convolutions.
#[derive(Clone, Debug)]
pub struct Stencil {
    pub offsets: Vec<(isize, isize)>,
    pub weights: Vec<f64>,
}

impl Stencil {
    pub fn radius_cells(&self) -> isize {
        self.offsets
            .iter()
            .map(|&(a, b)| a.abs().max(b.abs()))
            .max()
            .unwrap_or(0)
    }

    /// Convolution `Σ w_z f(x + z)` at every node whose whole stencil is
    /// masked in; other nodes are masked out. Sums run in a fixed order so
    /// the result does not depend on thread scheduling.
    pub fn apply<T: Sample>(&self, f: &Field<T>) -> Field<T> {
        let grid = *f.grid();
        let nx = grid.nx();
        let mut values = vec![T::default(); grid.len()];
        let mut mask = vec![false; grid.len()];
        values
            .par_chunks_mut(nx)
            .zip(mask.par_chunks_mut(nx))
            .enumerate()
            .for_each(|(j, (vrow, mrow))| {
                for i in 0..nx {
                    let mut acc = T::default();
                    let mut ok = true;
                    for (&(di, dj), &w) in self.offsets.iter().zip(&self.weights) {
                        match grid.offset(i, j, di, dj) {
                            Some(q) if f.mask[q] => acc = acc + f.values[q] * w,
                            _ => {
                                ok = false;
                                break;
                            }
                        }
                    }
                    if ok {
                        vrow[i] = acc;
                        mrow[i] = true;
                    }
                }
            });
        Field { grid, values, mask }
    }
}

/// Centered-difference divergence; nodes without both neighbours on each
/// axis are masked out.
pub fn divergence(f: &VectorField) -> ScalarField {
    let grid = *f.grid();
    let inv = 1.0 / (2.0 * grid.dx());
    let pairs: Vec<(f64, bool)> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let (i, j) = grid.ij(k);
            let get = |di, dj| grid.offset(i, j, di, dj).and_then(|q| f.get(q));
            match (get(1, 0), get(-1, 0), get(0, 1), get(0, -1)) {
                (Some(e), Some(w), Some(n), Some(s)) if f.mask[k] => {
                    ((e.x - w.x + n.y - s.y) * inv, true)
                }
                _ => (0.0, false),
            }
        })
        .collect();
    let (values, mask) = pairs.into_iter().unzip();
    Field { grid, values, mask }
}

/// Centered-difference gradient of a scalar field.
pub fn gradient(f: &ScalarField) -> VectorField {
    let grid = *f.grid();
    let inv = 1.0 / (2.0 * grid.dx());
    let pairs: Vec<(Vec2, bool)> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let (i, j) = grid.ij(k);
            let get = |di, dj| grid.offset(i, j, di, dj).and_then(|q| f.get(q));
            match (get(1, 0), get(-1, 0), get(0, 1), get(0, -1)) {
                (Some(e), Some(w), Some(n), Some(s)) if f.mask[k] => {
                    (Vec2::new((e - w) * inv, (n - s) * inv), true)
                }
                _ => (Vec2::ZERO, false),
            }
        })
        .collect();
    let (values, mask) = pairs.into_iter().unzip();
    Field { grid, values, mask }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn disk_grid_three_nodes() {
        let d = Domain::disk(Vec2::ZERO, 1.0).unwrap();
        let g = make_grid(&d, 3, 0.0).unwrap();
        assert_eq!((g.nx(), g.ny()), (3, 3));
        assert_eq!(g.origin(), Vec2::new(-1.0, -1.0));
        assert_eq!(g.dx(), 1.0);
        assert_eq!(g.node(2, 1), Vec2::new(1.0, 0.0));
        let mask = d.mask(&g);
        // corners are outside the unit disk
        assert!(!mask[0]);
        assert!(mask[g.index(1, 1)] && mask[g.index(2, 1)]);
    }

    #[test]
    fn rectangle_aspect_ratio() {
        let d = Domain::rectangle(Vec2::ZERO, Vec2::new(2.0, 1.0)).unwrap();
        let g = make_grid(&d, 5, 0.0).unwrap();
        assert_eq!(g.dx(), 0.5);
        assert_eq!((g.nx(), g.ny()), (5, 3));
    }

    #[test]
    fn padding_enlarges_box() {
        let d = Domain::disk(Vec2::ZERO, 1.0).unwrap();
        let g = make_grid(&d, 2, 1.0).unwrap();
        assert_eq!(g.origin(), Vec2::new(-2.0, -2.0));
        assert_eq!(g.extent(), Vec2::new(2.0, 2.0));
    }

    #[test]
    fn bad_grid_requests() {
        let d = Domain::disk(Vec2::ZERO, 1.0).unwrap();
        assert!(matches!(make_grid(&d, 1, 0.0), Err(Error::Config(_))));
        assert!(matches!(make_grid(&d, 8, -0.1), Err(Error::Config(_))));
        assert!(Domain::annulus(Vec2::ZERO, 0.5, 0.4).is_err());
        assert!(Domain::disk(Vec2::ZERO, 0.0).is_err());
    }

    #[test]
    fn trapezoid_weights_integrate_unit_square() {
        let d = Domain::rectangle(Vec2::ZERO, Vec2::new(1.0, 1.0)).unwrap();
        let g = make_grid(&d, 11, 0.0).unwrap();
        let w = trapezoid_weights(&g, &d.mask(&g));
        let total: f64 = w.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bilinear_reproduces_affine() {
        let g = Grid2::new(5, 4, Vec2::new(-1.0, 0.5), 0.25).unwrap();
        let f = ScalarField::from_fn(g, |p| Some(2.0 * p.x - 3.0 * p.y + 0.5));
        for p in [Vec2::new(-0.9, 0.6), Vec2::new(0.0, 1.0), g.extent()] {
            let v = f.sample(p).unwrap();
            assert!((v - (2.0 * p.x - 3.0 * p.y + 0.5)).abs() < 1e-12);
        }
        assert!(f.sample(Vec2::new(-1.1, 0.6)).is_none());
    }

    #[test]
    fn unit_field_rejects_non_unit() {
        let g = Grid2::new(3, 3, Vec2::ZERO, 1.0).unwrap();
        let f = VectorField::filled(g, Vec2::new(1.0, 1.0));
        assert!(UnitVectorField::new(f.clone()).is_err());
        assert!(UnitVectorField::normalized(f, 0.5).is_ok());
    }

    proptest! {
        #[test]
        fn index_node_bijection(nx in 2usize..40, ny in 2usize..40, seed in 0usize..10_000) {
            let g = Grid2::new(nx, ny, Vec2::new(-0.3, 1.7), 0.125).unwrap();
            let k = seed % g.len();
            let (i, j) = g.ij(k);
            prop_assert_eq!(g.index(i, j), k);
            let p = g.node(i, j);
            prop_assert_eq!(g.nearest(p), Some((i, j)));
        }
    }
}
