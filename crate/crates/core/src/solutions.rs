//! Canonical weak solutions and recovery of the potential `u` with `∇u = i·m`.

use std::collections::VecDeque;

use log::warn;

use crate::error::{Error, Result};
use crate::grid::{Grid2, ScalarField, Stencil, UnitVectorField, Vec2, VectorField};

const UNIT_TOL: f64 = 1e-12;

fn check_unit(v: Vec2, what: &str) -> Result<()> {
    if !v.is_finite() || (v.norm() - 1.0).abs() > UNIT_TOL {
        return Err(Error::config(format!(
            "{what} ({}, {}) is not a unit vector",
            v.x, v.y
        )));
    }
    Ok(())
}

/// `m ≡ direction`.
pub fn constant_field(grid: Grid2, direction: Vec2) -> Result<UnitVectorField> {
    check_unit(direction, "direction")?;
    Ok(UnitVectorField::new_unchecked(VectorField::filled(grid, direction)))
}

fn vortex_value(x: Vec2, center: Vec2) -> Option<Vec2> {
    let d = x - center;
    let r = d.norm();
    if r == 0.0 {
        None
    } else {
        Some(d.rot90() * (1.0 / r))
    }
}

/// The vortex `m(x) = i·x/|x|`; a node sitting exactly on the origin is masked out.
pub fn vortex_field(grid: Grid2) -> UnitVectorField {
    vortex_field_at(grid, Vec2::ZERO)
}

/// Vortex centred at `center`. With the centre outside the window this is a
/// smooth unit field with curved characteristics.
pub fn vortex_field_at(grid: Grid2, center: Vec2) -> UnitVectorField {
    let f = VectorField::from_fn(grid, |x| vortex_value(x, center));
    UnitVectorField::new_unchecked(f)
}

/// Two constant states separated by the line through the origin orthogonal
/// to `normal`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpSpec {
    m_plus: Vec2,
    m_minus: Vec2,
    normal: Vec2,
}

impl JumpSpec {
    /// Jump across `{x₁ = 0}`: `m⁺` on `x₁ > 0`, `m⁻` on `x₁ < 0`.
    pub fn new(m_plus: Vec2, m_minus: Vec2) -> Result<Self> {
        Self::with_normal(m_plus, m_minus, Vec2::E1)
    }

    /// Jump across `{x·n = 0}`; `m⁺` lives on the side `x·n > 0`.
    pub fn with_normal(m_plus: Vec2, m_minus: Vec2, normal: Vec2) -> Result<Self> {
        check_unit(m_plus, "m_plus")?;
        check_unit(m_minus, "m_minus")?;
        check_unit(normal, "normal")?;
        if (m_plus.dot(normal) - m_minus.dot(normal)).abs() > UNIT_TOL {
            return Err(Error::config(format!(
                "jump is not divergence-free: normal components {} and {} differ",
                m_plus.dot(normal),
                m_minus.dot(normal)
            )));
        }
        Ok(JumpSpec {
            m_plus,
            m_minus,
            normal,
        })
    }

    /// `m± = (1/2, ±√3/2)` across `{x₁ = 0}`.
    pub fn standard() -> Self {
        let s = 3f64.sqrt() / 2.0;
        JumpSpec {
            m_plus: Vec2::new(0.5, s),
            m_minus: Vec2::new(0.5, -s),
            normal: Vec2::E1,
        }
    }

    /// The standard jump turned so that the interface is `{x₂ = 0}`.
    pub fn standard_horizontal() -> Self {
        let s = 3f64.sqrt() / 2.0;
        JumpSpec {
            m_plus: Vec2::new(-s, 0.5),
            m_minus: Vec2::new(s, 0.5),
            normal: Vec2::E2,
        }
    }

    pub fn m_plus(&self) -> Vec2 {
        self.m_plus
    }

    pub fn m_minus(&self) -> Vec2 {
        self.m_minus
    }

    pub fn normal(&self) -> Vec2 {
        self.normal
    }

    /// `|m⁺ − m⁻|`.
    pub fn jump_size(&self) -> f64 {
        (self.m_plus - self.m_minus).norm()
    }

    /// Value at `x`; points on the interface take `m⁺`.
    pub fn value(&self, x: Vec2) -> Vec2 {
        if x.dot(self.normal) >= 0.0 {
            self.m_plus
        } else {
            self.m_minus
        }
    }
}

pub fn jump_field(grid: Grid2, spec: &JumpSpec) -> UnitVectorField {
    let f = VectorField::from_fn(grid, |x| Some(spec.value(x)));
    UnitVectorField::new_unchecked(f)
}

/// Builds a field equal to the vortex outside `B₁` and to `inner` (or the
/// vortex) inside. `inner` must live on the same grid.
pub fn bc_extended_field(grid: Grid2, inner: Option<&UnitVectorField>) -> Result<UnitVectorField> {
    if !grid.covers_box(Vec2::new(-4.0, -4.0), Vec2::new(4.0, 4.0)) {
        return Err(Error::config("grid must cover the ball of radius 4"));
    }
    if let Some(f) = inner {
        if *f.grid() != grid {
            return Err(Error::config("inner field must be sampled on the same grid"));
        }
    }
    let f = VectorField::from_fn(grid, |x| {
        if x.norm() >= 1.0 {
            return vortex_value(x, Vec2::ZERO);
        }
        match inner {
            Some(f) => {
                let (i, j) = grid.nearest(x)?;
                f.at(i, j)
            }
            None => vortex_value(x, Vec2::ZERO),
        }
    });
    Ok(UnitVectorField::new_unchecked(f))
}

/// A scalar potential recovered from its gradient by line integration.
#[derive(Clone, Debug)]
pub struct Potential {
    pub u: ScalarField,
    pub lipschitz_tolerance: f64,
    /// Largest `|u(a) − u(b)| − |a − b|` over neighbouring node pairs.
    pub lipschitz_excess: f64,
    /// Largest loop integral of the gradient around a grid cell.
    pub max_loop_residual: f64,
    pub max_loop_location: Option<Vec2>,
    /// Nodes reached by the breadth-first fallback instead of L-shaped paths.
    pub fallback_nodes: usize,
    pub warning: Option<String>,
}

/// Integrates `∇u = i·m` from `anchor` with `u(anchor) = anchor_value`.
pub fn reconstruct_potential(
    m: &UnitVectorField,
    anchor: (usize, usize),
    anchor_value: f64,
) -> Result<Potential> {
    integrate_gradient(&m.rotated(), anchor, anchor_value)
}

/// Trapezoidal line integral of `g` over the edge from node `a` to node `b`.
fn edge(g: &VectorField, a: usize, b: usize) -> f64 {
    let grid = g.grid();
    let d = grid.node_at(b) - grid.node_at(a);
    (g.values()[a] + g.values()[b]).dot(d) * 0.5
}

/// Recovers `u` from a gradient field `g`.
///
/// Each node gets the average of the two L-shaped paths from the anchor
/// (row first, column first) where these stay inside the mask. Nodes that
/// neither path reaches are filled breadth-first from already assigned
/// neighbours.
pub fn integrate_gradient(
    g: &VectorField,
    anchor: (usize, usize),
    anchor_value: f64,
) -> Result<Potential> {
    let grid = *g.grid();
    let (nx, ny) = (grid.nx(), grid.ny());
    let (ia, ja) = anchor;
    if ia >= nx || ja >= ny || !g.is_valid(grid.index(ia, ja)) {
        return Err(Error::config(format!("anchor ({ia}, {ja}) is not a masked-in node")));
    }
    let mask = g.mask();

    // Walk outward along a line of nodes from `start`, accumulating edge integrals.
    let walk = |out: &mut Vec<Option<f64>>, idx: &dyn Fn(usize) -> usize, len: usize, s: usize, v0: f64| {
        out[s] = Some(v0);
        let mut acc = v0;
        for k in s + 1..len {
            if !mask[idx(k)] {
                break;
            }
            acc += edge(g, idx(k - 1), idx(k));
            out[k] = Some(acc);
        }
        acc = v0;
        for k in (0..s).rev() {
            if !mask[idx(k)] {
                break;
            }
            acc += edge(g, idx(k + 1), idx(k));
            out[k] = Some(acc);
        }
    };

    let mut row_first = vec![None; grid.len()];
    let mut col_first = vec![None; grid.len()];

    // Row then column.
    let mut line = vec![None; nx];
    walk(&mut line, &|i| grid.index(i, ja), nx, ia, anchor_value);
    for i in 0..nx {
        if let Some(v) = line[i] {
            let mut col = vec![None; ny];
            walk(&mut col, &|j| grid.index(i, j), ny, ja, v);
            for j in 0..ny {
                row_first[grid.index(i, j)] = col[j];
            }
        }
    }
    // Column then row.
    let mut line = vec![None; ny];
    walk(&mut line, &|j| grid.index(ia, j), ny, ja, anchor_value);
    for j in 0..ny {
        if let Some(v) = line[j] {
            let mut row = vec![None; nx];
            walk(&mut row, &|i| grid.index(i, j), nx, ia, v);
            for i in 0..nx {
                col_first[grid.index(i, j)] = row[i];
            }
        }
    }

    let mut u: Vec<Option<f64>> = row_first
        .iter()
        .zip(&col_first)
        .map(|(a, b)| match (a, b) {
            (Some(a), Some(b)) => Some(0.5 * (a + b)),
            (Some(a), None) | (None, Some(a)) => Some(*a),
            (None, None) => None,
        })
        .collect();

    let missing = (0..grid.len()).filter(|&k| mask[k] && u[k].is_none()).count();
    let mut fallback = 0;
    if missing > 0 {
        let mut queue: VecDeque<usize> = (0..grid.len()).filter(|&k| u[k].is_some()).collect();
        while let Some(k) = queue.pop_front() {
            let (i, j) = grid.ij(k);
            for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                if let Some(q) = grid.offset(i, j, di, dj) {
                    if mask[q] && u[q].is_none() {
                        u[q] = Some(u[k].unwrap() + edge(g, k, q));
                        fallback += 1;
                        queue.push_back(q);
                    }
                }
            }
        }
        if let Some(k) = (0..grid.len()).find(|&k| mask[k] && u[k].is_none()) {
            let (i, j) = grid.ij(k);
            return Err(Error::precondition(format!(
                "masked region is disconnected: node ({i}, {j}) is unreachable from the anchor"
            )));
        }
    }

    let values: Vec<f64> = u.iter().map(|v| v.unwrap_or(0.0)).collect();
    let field = ScalarField::from_parts(grid, values, mask.to_vec())?;

    // Loop residual around every fully masked-in cell.
    let mut max_res = 0.0f64;
    let mut max_loc = None;
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let k00 = grid.index(i, j);
            let k10 = grid.index(i + 1, j);
            let k11 = grid.index(i + 1, j + 1);
            let k01 = grid.index(i, j + 1);
            if !(mask[k00] && mask[k10] && mask[k11] && mask[k01]) {
                continue;
            }
            let r = (edge(g, k00, k10) + edge(g, k10, k11) + edge(g, k11, k01) + edge(g, k01, k00))
                .abs();
            if r > max_res {
                max_res = r;
                max_loc = Some(grid.node(i, j) + Vec2::new(0.5, 0.5) * grid.dx());
            }
        }
    }

    let tol = 2.0 * grid.dx();
    let mut excess = f64::NEG_INFINITY;
    for k in 0..grid.len() {
        if !mask[k] {
            continue;
        }
        let (i, j) = grid.ij(k);
        for (di, dj) in [(1, 0), (0, 1)] {
            if let Some(q) = grid.offset(i, j, di, dj) {
                if mask[q] {
                    let d = (field.values()[q] - field.values()[k]).abs() - grid.dx();
                    excess = excess.max(d);
                }
            }
        }
    }
    if excess > tol {
        return Err(Error::numerical(format!(
            "reconstructed potential is not 1-Lipschitz: excess {excess:.3e} > {tol:.3e}"
        )));
    }

    let warn_level = grid.dx() * grid.dx();
    let warning = if max_res > warn_level {
        let loc = max_loc.unwrap_or_default();
        let msg = format!(
            "path-independence residual {max_res:.3e} exceeds dx² = {warn_level:.3e} near ({:.4}, {:.4})",
            loc.x, loc.y
        );
        warn!("{msg}");
        Some(msg)
    } else {
        None
    };

    Ok(Potential {
        u: field,
        lipschitz_tolerance: tol,
        lipschitz_excess: excess.max(0.0),
        max_loop_residual: max_res,
        max_loop_location: max_loc,
        fallback_nodes: fallback,
        warning,
    })
}

/// Lattice stencils for `∂₁φ` and `∂₂φ` of the cone bump of radius `scale`
/// (same profile as the mollifier), with cell-area weights.
pub(crate) fn cone_gradient_stencils(grid: &Grid2, scale: f64) -> (Stencil, Stencil) {
    let dx = grid.dx();
    let offsets = grid.disk_offsets(scale, false);
    let c = 3.0 / (std::f64::consts::PI * scale.powi(3));
    let area = grid.cell_area();
    let mut wx = Vec::with_capacity(offsets.len());
    let mut wy = Vec::with_capacity(offsets.len());
    for &(di, dj) in &offsets {
        let z = Vec2::new(di as f64 * dx, dj as f64 * dx);
        let r = z.norm();
        if r == 0.0 {
            wx.push(0.0);
            wy.push(0.0);
        } else {
            wx.push(-c * z.x / r * area);
            wy.push(-c * z.y / r * area);
        }
    }
    (
        Stencil {
            offsets: offsets.clone(),
            weights: wx,
        },
        Stencil {
            offsets,
            weights: wy,
        },
    )
}

/// Pairing `x ↦ −∫ m·∇φ_x` with the cone bump `φ_x` of radius `scale`
/// centred at each node. Nodes whose bump leaves the mask are masked out.
pub fn weak_divergence(m: &VectorField, scale: f64) -> Result<ScalarField> {
    let dx = m.grid().dx();
    if !(scale >= 2.0 * dx * (1.0 - 1e-12)) {
        return Err(Error::resolution(format!(
            "test scale {scale} is below 2·dx = {}",
            2.0 * dx
        )));
    }
    let (sx, sy) = cone_gradient_stencils(m.grid(), scale);
    let px = sx.apply(&m.map(|v| v.x));
    let py = sy.apply(&m.map(|v| v.y));
    let values: Vec<f64> = px
        .values()
        .iter()
        .zip(py.values())
        .map(|(a, b)| -(a + b))
        .collect();
    ScalarField::from_parts(*m.grid(), values, px.mask().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, Domain};

    fn square(n: usize, half: f64) -> Grid2 {
        make_grid(&Domain::rectangle(Vec2::new(-half, -half), Vec2::new(2.0 * half, 2.0 * half)).unwrap(), n, 0.0)
            .unwrap()
    }

    #[test]
    fn constant_fields() {
        let g = square(5, 1.0);
        let f = constant_field(g, Vec2::new(0.6, 0.8)).unwrap();
        assert!(f.values().iter().all(|&v| v == Vec2::new(0.6, 0.8)));
        assert!(matches!(constant_field(g, Vec2::new(1.0, 1.0)), Err(Error::Config(_))));
    }

    #[test]
    fn vortex_values_and_origin_mask() {
        let g = square(5, 2.0);
        let f = vortex_field(g);
        let at = |x: f64, y: f64| {
            let (i, j) = g.nearest(Vec2::new(x, y)).unwrap();
            f.at(i, j)
        };
        assert_eq!(at(1.0, 0.0), Some(Vec2::new(0.0, 1.0)));
        assert_eq!(at(0.0, 2.0), Some(Vec2::new(-1.0, 0.0)));
        let d = at(1.0, 1.0).unwrap() - Vec2::new(-0.5f64.sqrt(), 0.5f64.sqrt());
        assert!(d.norm() < 1e-15);
        assert_eq!(at(0.0, 0.0), None);
        assert_eq!(f.count_valid(), 24);
    }

    #[test]
    fn jump_values() {
        let spec = JumpSpec::standard();
        let s = 3f64.sqrt() / 2.0;
        assert_eq!(spec.value(Vec2::new(0.3, 0.0)), Vec2::new(0.5, s));
        assert_eq!(spec.value(Vec2::new(-0.3, 5.0)), Vec2::new(0.5, -s));
        assert_eq!(spec.value(Vec2::new(0.0, -1.0)), Vec2::new(0.5, s));
        let err = JumpSpec::new(Vec2::E1, Vec2::E2).unwrap_err();
        assert!(err.to_string().contains("not divergence-free"));
        let h = JumpSpec::standard_horizontal();
        assert_eq!(JumpSpec::with_normal(h.m_plus(), h.m_minus(), Vec2::E2).unwrap(), h);
    }

    #[test]
    fn bc_extension() {
        let g = square(33, 4.0);
        let f = bc_extended_field(g, None).unwrap();
        let at = |f: &UnitVectorField, x: f64, y: f64| {
            let (i, j) = g.nearest(Vec2::new(x, y)).unwrap();
            f.at(i, j).unwrap()
        };
        assert!((at(&f, 2.0, 0.0) - Vec2::E2).norm() < 1e-15);
        assert!((at(&f, 0.5, 0.0) - Vec2::E2).norm() < 1e-15);
        let inner = constant_field(g, Vec2::E2).unwrap();
        let f = bc_extended_field(g, Some(&inner)).unwrap();
        assert_eq!(at(&f, 0.5, 0.0), Vec2::E2);
        assert_eq!(at(&f, 0.0, 0.5), Vec2::E2);
        assert_eq!(at(&f, 0.0, 2.0), Vec2::new(-1.0, 0.0));
        assert!(bc_extended_field(square(9, 3.0), None).is_err());
    }

    #[test]
    fn potential_of_constant_field() {
        let g = square(41, 1.0);
        let m = constant_field(g, Vec2::E1).unwrap();
        let anchor = g.nearest(Vec2::ZERO).unwrap();
        let p = reconstruct_potential(&m, anchor, 0.0).unwrap();
        for k in 0..g.len() {
            assert!((p.u.values()[k] - g.node_at(k).y).abs() < 1e-12);
        }
        assert!(p.max_loop_residual < 1e-14);
        assert!(p.warning.is_none());
    }

    #[test]
    fn potential_of_jump() {
        let g = square(81, 1.0);
        let m = jump_field(g, &JumpSpec::standard());
        let anchor = g.nearest(Vec2::ZERO).unwrap();
        let p = reconstruct_potential(&m, anchor, 0.0).unwrap();
        let s = 3f64.sqrt() / 2.0;
        for k in (0..g.len()).step_by(997) {
            let x = g.node_at(k);
            let exact = -s * x.x.abs() + x.y / 2.0;
            assert!((p.u.values()[k] - exact).abs() <= g.dx(), "at {x:?}");
        }
    }

    #[test]
    fn disconnected_region_is_rejected() {
        let g = square(21, 1.0);
        let m = constant_field(g, Vec2::E1).unwrap().retain(|x| x.x.abs() > 0.3);
        let anchor = g.nearest(Vec2::new(-0.5, 0.0)).unwrap();
        assert!(matches!(reconstruct_potential(&m, anchor, 0.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn weak_divergence_of_constant_and_jump() {
        let g = square(81, 1.0);
        let c = constant_field(g, Vec2::new(0.6, 0.8)).unwrap();
        let d = weak_divergence(&c, 0.2).unwrap();
        assert!(d.max_magnitude() < 1e-12);
        let j = jump_field(g, &JumpSpec::standard());
        assert!(weak_divergence(&j, 0.2).unwrap().max_magnitude() < 1e-12);
        assert!(matches!(weak_divergence(&j, g.dx()), Err(Error::Resolution(_))));
    }

    #[test]
    fn weak_divergence_detects_broken_jump() {
        let g = square(161, 1.0);
        let scale = 0.2;
        let broken = VectorField::from_fn(g, |x| Some(if x.x >= 0.0 { Vec2::E1 } else { Vec2::E2 }));
        let d = weak_divergence(&broken, scale).unwrap();
        let (i, j) = g.nearest(Vec2::ZERO).unwrap();
        // Pairing of a unit jump in m₁ with the cone bump: 3/(π·scale).
        let expected = 3.0 / (std::f64::consts::PI * scale);
        let got = d.at(i, j).unwrap();
        assert!((got - expected).abs() < 0.05 * expected, "{got} vs {expected}");
    }
}
