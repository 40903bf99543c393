//! Mollification with the cone kernel `ρ(z) = (3/π)(1 − |z|)₊`.

use std::f64::consts::PI;

use crate::besov::{self, Shift};
use crate::error::{Error, Result};
use crate::grid::{
    gradient, trapezoid_weights, Domain, Field, Grid2, Sample, ScalarField, Stencil,
    UnitVectorField, Vec2, VectorField,
};

/// Radial cone kernel scaled to radius `epsilon`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kernel {
    epsilon: f64,
}

/// Outcome of [`Kernel::verify`].
#[derive(Clone, Copy, Debug)]
pub struct KernelCheck {
    pub sup: f64,
    pub sup_grad: f64,
    pub integral: f64,
    pub support_ok: bool,
}

impl KernelCheck {
    pub fn ok(&self) -> bool {
        self.support_ok
            && self.sup <= 1.0
            && self.sup_grad <= 1.0
            && (self.integral - 1.0).abs() <= 1e-6
    }
}

pub fn cone_kernel(epsilon: f64) -> Result<Kernel> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::config(format!("kernel radius must be positive, got {epsilon}")));
    }
    Ok(Kernel { epsilon })
}

impl Kernel {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Unscaled profile `ρ` as a function of `|z|`.
    pub fn profile(r: f64) -> f64 {
        if r < 1.0 {
            3.0 / PI * (1.0 - r)
        } else {
            0.0
        }
    }

    /// `ρ_ε(z) = ε⁻² ρ(z/ε)`.
    pub fn value(&self, z: Vec2) -> f64 {
        Self::profile(z.norm() / self.epsilon) / (self.epsilon * self.epsilon)
    }

    /// Checks the unscaled profile on a fine radial sample.
    pub fn verify(&self) -> KernelCheck {
        let n = 200_000;
        let dr = 1.0 / n as f64;
        let mut sup = 0.0f64;
        let mut sup_grad = 0.0f64;
        let mut integral = 0.0;
        for k in 0..n {
            let r0 = k as f64 * dr;
            let r1 = r0 + dr;
            let (f0, f1) = (Self::profile(r0), Self::profile(r1));
            sup = sup.max(f0);
            sup_grad = sup_grad.max((f1 - f0).abs() / dr);
            // midpoint rule in polar coordinates; exact for the linear profile up to O(dr²)
            let rm = 0.5 * (r0 + r1);
            integral += 2.0 * PI * Self::profile(rm) * rm * dr;
        }
        let support_ok = [1.0, 1.0 + 1e-9, 1.5, 10.0].iter().all(|&r| Self::profile(r) == 0.0);
        KernelCheck {
            sup,
            sup_grad,
            integral,
            support_ok,
        }
    }

    /// Lattice weights `ρ_ε(z)·dx²` over `|z| < ε`, renormalized to sum to one.
    pub fn stencil(&self, grid: &Grid2) -> Result<Stencil> {
        let dx = grid.dx();
        if self.epsilon < 2.0 * dx * (1.0 - 1e-12) {
            return Err(Error::resolution(format!(
                "ε = {} is below 2·dx = {}",
                self.epsilon,
                2.0 * dx
            )));
        }
        let offsets = grid.disk_offsets(self.epsilon, false);
        let raw: Vec<f64> = offsets
            .iter()
            .map(|&(a, b)| self.value(Vec2::new(a as f64 * dx, b as f64 * dx)))
            .collect();
        let total: f64 = raw.iter().sum();
        Ok(Stencil {
            offsets,
            weights: raw.iter().map(|w| w / total).collect(),
        })
    }
}

/// Generic convolution with the kernel; nodes whose ε-ball leaves the mask
/// are masked out.
pub fn convolve<T: Sample>(f: &Field<T>, kernel: &Kernel) -> Result<Field<T>> {
    let stencil = kernel.stencil(f.grid())?;
    Ok(stencil.apply(f))
}

/// `m_ε = m ∗ ρ_ε` together with the radius used.
#[derive(Clone, Debug)]
pub struct MollifiedField {
    pub field: VectorField,
    pub epsilon: f64,
    pub source: String,
}

impl MollifiedField {
    pub fn modulus(&self) -> ScalarField {
        self.field.modulus()
    }
}

pub fn mollify(m: &UnitVectorField, kernel: &Kernel) -> Result<MollifiedField> {
    mollify_named(m, kernel, "field")
}

pub fn mollify_named(m: &UnitVectorField, kernel: &Kernel, source: &str) -> Result<MollifiedField> {
    let field = convolve(m.as_field(), kernel)?;
    Ok(MollifiedField {
        field,
        epsilon: kernel.epsilon(),
        source: source.to_string(),
    })
}

/// `∇u_ε = i·m_ε`.
pub fn grad_potential(m_eps: &MollifiedField) -> VectorField {
    m_eps.field.rotated()
}

/// Pointwise Frobenius norm of the centered-difference Jacobian of `m_ε`.
pub fn jacobian_norm(m_eps: &VectorField) -> ScalarField {
    let gx = gradient(&m_eps.map(|v| v.x));
    let gy = gradient(&m_eps.map(|v| v.y));
    let values: Vec<f64> = gx
        .values()
        .iter()
        .zip(gy.values())
        .map(|(a, b)| (a.norm_sq() + b.norm_sq()).sqrt())
        .collect();
    let mask: Vec<bool> = gx.mask().iter().zip(gy.mask()).map(|(a, b)| *a && *b).collect();
    ScalarField::from_parts(*m_eps.grid(), values, mask).expect("same grid")
}

/// Moments of the modulus defect `1 − |m_ε|` on a ball.
#[derive(Clone, Copy, Debug)]
pub struct DefectMoments {
    /// `∫(1 − |m_ε|)^{3/2}`
    pub lhs32: f64,
    /// `∫|∇m_ε|³`
    pub lhs_grad3: f64,
    /// `max_h (1/|h|)∫|D^h m|³`
    pub rhs: f64,
    /// `lhs32 / (ε·rhs)`
    pub ratio32: f64,
    /// `lhs_grad3·ε² / rhs`
    pub ratio_grad3: f64,
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else if a == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Integrates `f` with trapezoid weights over the nodes of `region` where `f` is valid.
pub(crate) fn integrate(f: &ScalarField, region: Option<&Domain>) -> f64 {
    let grid = f.grid();
    let mask: Vec<bool> = (0..grid.len())
        .map(|k| f.is_valid(k) && region.map_or(true, |d| d.contains(grid.node_at(k))))
        .collect();
    let w = trapezoid_weights(grid, &mask);
    f.values().iter().zip(&w).map(|(v, w)| v * w).sum()
}

/// Defect moments over `B_{2r}(center)`, with the supremum over shifts
/// taken on `h_samples` (each `|h| ≤ ε`).
pub fn defect_moments(
    m: &UnitVectorField,
    epsilon: f64,
    r: f64,
    center: Vec2,
    h_samples: &[Vec2],
) -> Result<DefectMoments> {
    if epsilon > r {
        return Err(Error::config(format!("ε = {epsilon} exceeds r = {r}")));
    }
    if h_samples.is_empty() {
        return Err(Error::config("defect moments need at least one shift"));
    }
    for h in h_samples {
        if h.norm() > epsilon * (1.0 + 1e-12) {
            return Err(Error::config(format!("shift |h| = {} exceeds ε = {epsilon}", h.norm())));
        }
    }
    let ball = Domain::disk(center, 2.0 * r)?;
    let m_eps = mollify(m, &cone_kernel(epsilon)?)?;
    let modulus = m_eps.modulus();
    let lhs32 = integrate(&modulus.map(|a| (1.0 - a).max(0.0).powf(1.5)), Some(&ball));
    let lhs_grad3 = integrate(&jacobian_norm(&m_eps.field).map(|a| a.powi(3)), Some(&ball));
    let mut rhs = 0.0f64;
    for &h in h_samples {
        rhs = rhs.max(besov::third_moment_rate(m, Shift::new(h)?, Some(&ball))?);
    }
    Ok(DefectMoments {
        lhs32,
        lhs_grad3,
        rhs,
        ratio32: ratio(lhs32, epsilon * rhs),
        ratio_grad3: ratio(lhs_grad3 * epsilon * epsilon, rhs),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::solutions::{constant_field, jump_field, vortex_field, JumpSpec};

    fn square(n: usize, half: f64) -> Grid2 {
        let d = Domain::rectangle(Vec2::new(-half, -half), Vec2::new(2.0 * half, 2.0 * half)).unwrap();
        make_grid(&d, n, 0.0).unwrap()
    }

    #[test]
    fn cone_invariants() {
        let k = cone_kernel(0.1).unwrap();
        let c = k.verify();
        assert!(c.ok(), "{c:?}");
        assert!((c.sup - 3.0 / PI).abs() < 1e-12);
        assert!((c.sup_grad - 3.0 / PI).abs() < 1e-6);
        assert!((c.integral - 1.0).abs() < 1e-6);
        assert!(cone_kernel(0.0).is_err());
        assert!(cone_kernel(-1.0).is_err());
    }

    #[test]
    fn resolution_guard() {
        let g = square(11, 1.0);
        let k = cone_kernel(0.3).unwrap();
        assert!(matches!(k.stencil(&g), Err(Error::Resolution(_))));
        assert!(cone_kernel(0.4).unwrap().stencil(&g).is_ok());
    }

    #[test]
    fn partition_of_unity() {
        let g = square(41, 1.0);
        let one = ScalarField::filled(g, 1.0);
        let out = convolve(&one, &cone_kernel(0.2).unwrap()).unwrap();
        for k in 0..g.len() {
            if out.is_valid(k) {
                assert!((out.values()[k] - 1.0).abs() < 1e-14);
            }
        }
        // interior nodes survive, the ε-boundary layer is dropped
        let (i, j) = g.nearest(Vec2::ZERO).unwrap();
        assert!(out.at(i, j).is_some());
        assert!(out.at(0, 0).is_none());
    }

    #[test]
    fn constant_field_unchanged() {
        let g = square(41, 1.0);
        let m = constant_field(g, Vec2::new(0.6, 0.8)).unwrap();
        let me = mollify(&m, &cone_kernel(0.2).unwrap()).unwrap();
        for k in 0..g.len() {
            if let Some(v) = me.field.get(k) {
                assert!((v - Vec2::new(0.6, 0.8)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn jump_on_and_off_the_line() {
        let g = square(161, 1.0);
        let m = jump_field(g, &JumpSpec::standard());
        let eps = 0.1;
        let me = mollify(&m, &cone_kernel(eps).unwrap()).unwrap();
        let at = |x: f64, y: f64| {
            let (i, j) = g.nearest(Vec2::new(x, y)).unwrap();
            me.field.at(i, j).unwrap()
        };
        assert!((at(0.3, 0.2) - JumpSpec::standard().m_plus()).norm() < 1e-14);
        assert!((at(-0.3, 0.2) - JumpSpec::standard().m_minus()).norm() < 1e-14);
        // On the line: first component stays 1/2; the tie column carries a
        // small O(dx/ε) excess of m⁺.
        let v = at(0.0, 0.0);
        assert!((v.x - 0.5).abs() < 1e-14);
        assert!(v.y.abs() < 3.0 * g.dx() / eps, "{v:?}");
    }

    #[test]
    fn linearity() {
        let g = square(41, 1.0);
        let f = ScalarField::from_fn(g, |p| Some(p.x.sin() + p.y * p.y));
        let h = ScalarField::from_fn(g, |p| Some((3.0 * p.y).cos()));
        let k = cone_kernel(0.15).unwrap();
        let combo = ScalarField::from_fn(g, |p| Some(2.0 * (p.x.sin() + p.y * p.y) - 0.5 * (3.0 * p.y).cos()));
        let lhs = convolve(&combo, &k).unwrap();
        let a = convolve(&f, &k).unwrap();
        let b = convolve(&h, &k).unwrap();
        for q in 0..g.len() {
            if lhs.is_valid(q) {
                let rhs = 2.0 * a.values()[q] - 0.5 * b.values()[q];
                assert!((lhs.values()[q] - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn vortex_gradient_direction() {
        let g = square(400, 1.0);
        let m = vortex_field(g);
        let me = mollify(&m, &cone_kernel(0.05).unwrap()).unwrap();
        let grad = grad_potential(&me);
        let v = grad.sample(Vec2::new(0.5, 0.0)).unwrap();
        assert!((v - Vec2::new(-1.0, 0.0)).norm() < 1e-3, "{v:?}");
        assert!(me.field.max_magnitude() <= 1.0 + 1e-9);
    }

    #[test]
    fn centered_jacobian_matches_kernel_derivative() {
        // For a smooth field, differences of m_ε agree with the exact Jacobian to O(dx²).
        let g = square(201, 1.0);
        let m = crate::solutions::vortex_field_at(g, Vec2::new(3.0, 0.0));
        let me = mollify(&m, &cone_kernel(0.05).unwrap()).unwrap();
        let jac = jacobian_norm(&me.field);
        let (i, j) = g.nearest(Vec2::ZERO).unwrap();
        // |∇(i(x−c)/|x−c|)| = 1/|x−c| for a vortex
        let exact = 1.0 / 3.0;
        assert!((jac.at(i, j).unwrap() - exact).abs() < 5e-3);
    }
}
