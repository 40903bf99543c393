//! Localized third-moment bound against the kinetic measure.
//!
//! For a test bump `φ`, shift `h` and scale `η ≥ |h|` this compares
//!
//! * `lhs = ∫|D^h m|³ φ²`,
//! * `rhs1 = η · sup_{|h′| ≤ η} ∫ φ²(· + h′) dν`,
//! * `rhs2 = η^{3/2} ∫ |φ|^{1/2} |∇φ|^{3/2}`,
//!
//! and evaluates the angular quadratic form
//! `Δ(h, x) = ∬ φ_δ(s − t) D^hχ_ε(x, t) D^hχ_ε(x, s) e^{it}∧e^{is} ds dt`
//! with `φ(t) = sign(cos t sin t)` smoothed by a 1D cone kernel of width `δ`.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::besov::{finite_difference, Shift};
use crate::error::{Error, Result};
use crate::grid::{trapezoid_weights, ScalarField, UnitVectorField, Vec2};
use crate::kinetic::measure::{kinetic_density, kinetic_measure, mollify_chi, AngularGrid, KineticDensity, KineticMeasure};
use crate::mollify::cone_kernel;

/// `φ(x) = (1 − |x − c|/R)₊`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestBump {
    pub center: Vec2,
    pub radius: f64,
}

impl TestBump {
    pub fn new(center: Vec2, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::config(format!("bump radius must be positive, got {radius}")));
        }
        Ok(TestBump { center, radius })
    }

    pub fn value(&self, x: Vec2) -> f64 {
        (1.0 - (x - self.center).norm() / self.radius).max(0.0)
    }

    pub fn grad_norm(&self, x: Vec2) -> f64 {
        if (x - self.center).norm() < self.radius {
            1.0 / self.radius
        } else {
            0.0
        }
    }
}

/// `sign(sin 2t)`.
pub fn sign_sin2(t: f64) -> f64 {
    let v = (2.0 * t).sin();
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `(φ ∗ γ_δ)(t)` with `γ_δ(τ) = (1 − |τ|/δ)₊/δ`, by midpoint quadrature.
pub fn smoothed_sign(t: f64, delta: f64) -> f64 {
    let n = 4000;
    let h = 2.0 * delta / n as f64;
    let mut acc = 0.0;
    for k in 0..n {
        let tau = -delta + (k as f64 + 0.5) * h;
        acc += sign_sin2(t - tau) * (1.0 - tau.abs() / delta) / delta * h;
    }
    acc
}

/// Precomputed χ_ε, ν and angular weights shared by several checks.
#[derive(Clone, Debug)]
pub struct RefinedSetup {
    pub m: UnitVectorField,
    pub epsilon: f64,
    pub delta_ang: f64,
    pub chi: KineticDensity,
    pub measure: KineticMeasure,
    /// `K[l] = φ_δ(lΔs)·sin(lΔs)`.
    pub weights: Vec<f64>,
}

impl RefinedSetup {
    pub fn new(m: &UnitVectorField, angular: AngularGrid, epsilon: f64, delta_ang: f64) -> Result<Self> {
        if delta_ang < 2.0 * angular.ds() * (1.0 - 1e-12) || delta_ang >= PI / 4.0 {
            return Err(Error::config(format!(
                "angular smoothing δ = {delta_ang} must lie in [2Δs, π/4) with Δs = {}",
                angular.ds()
            )));
        }
        let kernel = cone_kernel(epsilon)?;
        let chi = mollify_chi(&kinetic_density(m, angular), &kernel)?;
        let measure = kinetic_measure(m, angular, &kernel)?;
        let weights = (0..angular.len())
            .map(|l| {
                let d = angular.angle(l);
                smoothed_sign(d, delta_ang) * d.sin()
            })
            .collect();
        Ok(RefinedSetup {
            m: m.clone(),
            epsilon,
            delta_ang,
            chi,
            measure,
            weights,
        })
    }

    /// `Δ(h, x)` on the nodes of `region` (all valid nodes when `None`).
    pub fn delta_field(&self, h: Shift, keep: impl Fn(Vec2) -> bool + Sync) -> Result<ScalarField> {
        let grid = *self.m.grid();
        let n = self.chi.angular.len();
        let ds = self.chi.angular.ds();
        let diffs: Vec<ScalarField> = self
            .chi
            .slices
            .par_iter()
            .map(|f| finite_difference(f, h))
            .collect::<Result<_>>()?;
        let pairs: Vec<(f64, bool)> = (0..grid.len())
            .into_par_iter()
            .map(|q| {
                if !keep(grid.node_at(q)) || !diffs.iter().all(|d| d.is_valid(q)) {
                    return (0.0, false);
                }
                let a: Vec<f64> = diffs.iter().map(|d| d.values()[q]).collect();
                let mut total = 0.0;
                for k in 0..n {
                    if a[k] == 0.0 {
                        continue;
                    }
                    let mut inner = 0.0;
                    for j in 0..n {
                        inner += self.weights[(k + n - j) % n] * a[j];
                    }
                    total += a[k] * inner;
                }
                (total * ds * ds, true)
            })
            .collect();
        let (values, mask) = pairs.into_iter().unzip();
        ScalarField::from_parts(grid, values, mask)
    }
}

#[derive(Clone, Debug)]
pub struct RefinedReport {
    pub h: Vec2,
    pub eta: f64,
    /// `∫|D^h m|³ φ²`
    pub lhs: f64,
    /// `∫Δ(h, ·) φ²`
    pub lhs_delta: f64,
    pub rhs1: f64,
    pub rhs2: f64,
    pub ratio: f64,
    /// `Δ(h, ·)` on the support of the bump.
    pub delta_field: ScalarField,
    /// `min Δ/|D^h m|³` over support nodes with `|D^h m| ≥ C_FIT_MIN_JUMP`.
    pub c_fit: Option<f64>,
}

/// Nodes where `|D^h m|` is smaller than this are left out of `c_fit`; there
/// the ratio is dominated by the mollification error of `χ_ε`.
pub const C_FIT_MIN_JUMP: f64 = 0.5;

/// Shifts used for the supremum in `rhs1`: zero and eight directions at
/// lengths `η/2` and `η`.
fn sup_shifts(eta: f64) -> Vec<Vec2> {
    let mut out = vec![Vec2::ZERO];
    for len in [0.5 * eta, eta] {
        for k in 0..8 {
            out.push(Vec2::from_angle(k as f64 * PI / 4.0) * len);
        }
    }
    out
}

pub fn refined_besov_check(setup: &RefinedSetup, bump: &TestBump, eta: f64, h: Vec2) -> Result<RefinedReport> {
    let hn = h.norm();
    if !(hn > 0.0 && hn <= eta * (1.0 + 1e-12)) {
        return Err(Error::config(format!("need 0 < |h| ≤ η, got |h| = {hn}, η = {eta}")));
    }
    let grid = *setup.m.grid();
    let nu = &setup.measure.nu;
    // The bump enlarged by η must sit where ν (hence χ_ε) is defined.
    for q in 0..grid.len() {
        let x = grid.node_at(q);
        if (x - bump.center).norm() <= bump.radius + eta && !nu.is_valid(q) {
            return Err(Error::config(format!(
                "η = {eta} is not below the distance from the bump support to the domain boundary"
            )));
        }
    }
    let shift = Shift::new(h)?;
    let in_support = |x: Vec2| (x - bump.center).norm() < bump.radius;
    let dm = finite_difference(setup.m.as_field(), shift)?;
    let delta = setup.delta_field(shift, in_support)?;

    let w = trapezoid_weights(&grid, nu.mask());
    let mut lhs = 0.0;
    let mut lhs_delta = 0.0;
    let mut rhs2 = 0.0;
    let mut c_fit: Option<f64> = None;
    for q in 0..grid.len() {
        let x = grid.node_at(q);
        if !in_support(x) {
            continue;
        }
        let phi2 = bump.value(x).powi(2);
        let d3 = dm.get(q).map_or(0.0, |v| v.norm().powi(3));
        let dl = delta.get(q).unwrap_or(0.0);
        lhs += d3 * phi2 * w[q];
        lhs_delta += dl * phi2 * w[q];
        rhs2 += bump.value(x).sqrt() * bump.grad_norm(x).powf(1.5) * w[q];
        if d3 >= C_FIT_MIN_JUMP.powi(3) {
            let c = dl / d3;
            c_fit = Some(c_fit.map_or(c, |b| b.min(c)));
        }
    }
    rhs2 *= eta.powf(1.5);
    let mut sup = 0.0f64;
    for hp in sup_shifts(eta) {
        let mut acc = 0.0;
        for q in 0..grid.len() {
            if let Some(v) = nu.get(q) {
                let b = bump.value(grid.node_at(q) + hp);
                acc += b * b * v * w[q];
            }
        }
        sup = sup.max(acc);
    }
    let rhs1 = eta * sup;
    let ratio = lhs / (rhs1 + rhs2);
    Ok(RefinedReport {
        h,
        eta,
        lhs,
        lhs_delta,
        rhs1,
        rhs2,
        ratio,
        delta_field: delta,
        c_fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothed_sign_is_odd_and_bounded() {
        for k in 0..50 {
            let t = 0.13 * k as f64;
            let v = smoothed_sign(t, 0.2);
            assert!(v.abs() <= 1.0 + 1e-12);
            assert!((v + smoothed_sign(-t, 0.2)).abs() < 1e-9);
        }
        // far from the sign changes the smoothing does nothing
        assert!((smoothed_sign(PI / 4.0, 0.2) - 1.0).abs() < 1e-12);
        assert!((smoothed_sign(3.0 * PI / 4.0, 0.2) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn bump_profile() {
        let b = TestBump::new(Vec2::ZERO, 0.5).unwrap();
        assert_eq!(b.value(Vec2::ZERO), 1.0);
        assert_eq!(b.value(Vec2::new(0.25, 0.0)), 0.5);
        assert_eq!(b.value(Vec2::new(0.6, 0.0)), 0.0);
        assert_eq!(b.grad_norm(Vec2::new(0.1, 0.1)), 2.0);
        assert!(TestBump::new(Vec2::ZERO, 0.0).is_err());
    }
}
