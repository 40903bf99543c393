//! Kinetic function `χ(x, s) = 1_{m(x)·e^{is} > 0}` and the measure `σ` with
//! `e^{is}·∇_x χ = ∂_s σ`.

use std::f64::consts::PI;

use log::warn;
use rayon::prelude::*;

use crate::besov::lp_norm;
use crate::error::{Error, Result};
use crate::grid::{gradient, Domain, Grid2, ScalarField, UnitVectorField, Vec2, VectorField};
use crate::mollify::{convolve, Kernel};

/// Below this value `m·e^{is}` counts as zero and `χ` takes the value 1/2.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Equally spaced angles `s_k = 2πk/n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngularGrid {
    n: usize,
}

impl AngularGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 16 || n % 2 != 0 {
            return Err(Error::config(format!("angular grid needs an even n ≥ 16, got {n}")));
        }
        Ok(AngularGrid { n })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn ds(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    pub fn angle(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.n as f64
    }

    pub fn direction(&self, k: usize) -> Vec2 {
        Vec2::from_angle(self.angle(k))
    }
}

/// `χ` or `χ_ε` sampled on a spatial grid times an angular grid.
#[derive(Clone, Debug)]
pub struct KineticDensity {
    pub angular: AngularGrid,
    /// One scalar field per angle.
    pub slices: Vec<ScalarField>,
    /// Mollification radius, `None` for the raw indicator.
    pub epsilon: Option<f64>,
}

pub fn chi_value(m: Vec2, e: Vec2) -> f64 {
    let d = m.dot(e);
    if d > TIE_TOLERANCE {
        1.0
    } else if d < -TIE_TOLERANCE {
        0.0
    } else {
        0.5
    }
}

pub fn kinetic_density(m: &UnitVectorField, angular: AngularGrid) -> KineticDensity {
    let slices = (0..angular.len())
        .into_par_iter()
        .map(|k| {
            let e = angular.direction(k);
            m.map(|v| chi_value(v, e))
        })
        .collect();
    KineticDensity {
        angular,
        slices,
        epsilon: None,
    }
}

pub fn mollify_chi(chi: &KineticDensity, kernel: &Kernel) -> Result<KineticDensity> {
    let slices = chi
        .slices
        .par_iter()
        .map(|f| convolve(f, kernel))
        .collect::<Result<_>>()?;
    Ok(KineticDensity {
        angular: chi.angular,
        slices,
        epsilon: Some(kernel.epsilon()),
    })
}

impl KineticDensity {
    pub fn grid(&self) -> &Grid2 {
        self.slices[0].grid()
    }

    /// `Σ_k e^{is_k} χ(x, s_k) Δs`.
    pub fn angular_moment(&self) -> VectorField {
        let grid = *self.grid();
        let ds = self.angular.ds();
        let pairs: Vec<(Vec2, bool)> = (0..grid.len())
            .into_par_iter()
            .map(|q| {
                let mut acc = Vec2::ZERO;
                for (a, s) in self.slices.iter().enumerate() {
                    match s.get(q) {
                        Some(v) => acc += self.angular.direction(a) * (v * ds),
                        None => return (Vec2::ZERO, false),
                    }
                }
                (acc, true)
            })
            .collect();
        let (values, mask) = pairs.into_iter().unzip();
        VectorField::from_parts(grid, values, mask).expect("same grid")
    }
}

/// Discretized `σ`, its angular total variation `ν` and the compatibility defect.
#[derive(Clone, Debug)]
pub struct KineticMeasure {
    pub angular: AngularGrid,
    pub epsilon: f64,
    /// `σ(·, s_k)` for each angle.
    pub sigma: Vec<ScalarField>,
    /// `ν(x) = Σ_k |σ(x, s_k)| Δs`.
    pub nu: ScalarField,
    /// `Σ_k e^{is_k}·∇_x χ_ε(x, s_k) Δs`, which vanishes for divergence-free `m`.
    pub defect: ScalarField,
    pub max_defect: f64,
    pub warning: Option<String>,
}

impl KineticMeasure {
    pub fn nu_norm(&self, p: f64, region: Option<&Domain>) -> Result<f64> {
        lp_norm(&self.nu, p, region)
    }
}

/// Tolerance on the compatibility defect above which a warning is raised.
pub fn defect_tolerance(grid: &Grid2) -> f64 {
    10.0 * grid.dx()
}

/// Solves `∂_s σ = e^{is}·∇_x χ_ε` per node. The defect `D = Σ R Δs` is
/// spread evenly over the circle before integrating so that `σ` is periodic,
/// and the angular mean is removed. `base` selects the angle where the
/// cumulative integral starts; the result does not depend on it.
pub fn kinetic_measure_from(
    m: &UnitVectorField,
    angular: AngularGrid,
    kernel: &Kernel,
    base: usize,
) -> Result<KineticMeasure> {
    let grid = *m.grid();
    let n = angular.len();
    let ds = angular.ds();
    let chi = mollify_chi(&kinetic_density(m, angular), kernel)?;
    let rates: Vec<ScalarField> = chi
        .slices
        .par_iter()
        .enumerate()
        .map(|(k, f)| {
            let e = angular.direction(k);
            gradient(f).map(|g| g.dot(e))
        })
        .collect();
    let mask: Vec<bool> = (0..grid.len())
        .map(|q| rates.iter().all(|r| r.is_valid(q)))
        .collect();

    let per_node: Vec<(Vec<f64>, f64, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|q| {
            if !mask[q] {
                return (vec![0.0; n], 0.0, 0.0);
            }
            let r: Vec<f64> = rates.iter().map(|f| f.values()[q]).collect();
            let d: f64 = r.iter().sum::<f64>() * ds;
            let shift = d / (2.0 * PI);
            let mut sigma = vec![0.0; n];
            let mut acc = 0.0;
            for step in 0..n {
                let k = (base + step) % n;
                sigma[k] = acc;
                acc += (r[k] - shift) * ds;
            }
            let mean = sigma.iter().sum::<f64>() / n as f64;
            for s in &mut sigma {
                *s -= mean;
            }
            let nu = sigma.iter().map(|s| s.abs()).sum::<f64>() * ds;
            (sigma, nu, d)
        })
        .collect();

    let mut sigma_vals = vec![vec![0.0; grid.len()]; n];
    let mut nu = vec![0.0; grid.len()];
    let mut defect = vec![0.0; grid.len()];
    for (q, (s, v, d)) in per_node.into_iter().enumerate() {
        for k in 0..n {
            sigma_vals[k][q] = s[k];
        }
        nu[q] = v;
        defect[q] = d;
    }
    let sigma = sigma_vals
        .into_iter()
        .map(|v| ScalarField::from_parts(grid, v, mask.clone()))
        .collect::<Result<_>>()?;
    let nu = ScalarField::from_parts(grid, nu, mask.clone())?;
    let defect = ScalarField::from_parts(grid, defect, mask)?;
    let max_defect = defect.max_magnitude();
    let tol = defect_tolerance(&grid);
    let warning = (max_defect > tol).then(|| {
        let msg = format!(
            "field not weakly divergence-free at this resolution: defect {max_defect:.3e} > {tol:.3e}"
        );
        warn!("{msg}");
        msg
    });
    Ok(KineticMeasure {
        angular,
        epsilon: kernel.epsilon(),
        sigma,
        nu,
        defect,
        max_defect,
        warning,
    })
}

pub fn kinetic_measure(m: &UnitVectorField, angular: AngularGrid, kernel: &Kernel) -> Result<KineticMeasure> {
    kinetic_measure_from(m, angular, kernel, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::mollify::cone_kernel;
    use crate::solutions::{constant_field, JumpSpec, jump_field};

    fn square(n: usize) -> Grid2 {
        make_grid(&Domain::rectangle(Vec2::new(-1.0, -1.0), Vec2::new(2.0, 2.0)).unwrap(), n, 0.0)
            .unwrap()
    }

    #[test]
    fn angular_grid_validation() {
        assert!(AngularGrid::new(8).is_err());
        assert!(AngularGrid::new(17).is_err());
        assert!(AngularGrid::new(16).is_ok());
    }

    #[test]
    fn chi_of_e1() {
        let e1 = Vec2::E1;
        assert_eq!(chi_value(e1, Vec2::from_angle(0.0)), 1.0);
        assert_eq!(chi_value(e1, Vec2::from_angle(PI)), 0.0);
        assert_eq!(chi_value(e1, Vec2::from_angle(PI / 2.0)), 0.5);
    }

    #[test]
    fn moment_of_constant() {
        let g = square(9);
        let a = AngularGrid::new(64).unwrap();
        let m = constant_field(g, Vec2::new(0.6, 0.8)).unwrap();
        let mom = kinetic_density(&m, a).angular_moment();
        for k in 0..g.len() {
            let v = mom.values()[k];
            assert!((v - Vec2::new(1.2, 1.6)).norm() <= a.ds());
        }
    }

    #[test]
    fn constant_has_zero_measure() {
        let g = square(41);
        let m = constant_field(g, Vec2::new(0.6, 0.8)).unwrap();
        let km = kinetic_measure(&m, AngularGrid::new(32).unwrap(), &cone_kernel(0.2).unwrap()).unwrap();
        assert!(km.nu.max_magnitude() < 1e-12);
        assert!(km.max_defect < 1e-12);
    }

    #[test]
    fn gauge_invariance() {
        let g = square(61);
        let m = jump_field(g, &JumpSpec::standard());
        let a = AngularGrid::new(32).unwrap();
        let k = cone_kernel(0.1).unwrap();
        let base = kinetic_measure_from(&m, a, &k, 0).unwrap();
        let other = kinetic_measure_from(&m, a, &k, 11).unwrap();
        for q in 0..g.len() {
            assert!((base.nu.values()[q] - other.nu.values()[q]).abs() < 1e-12);
        }
    }
}
