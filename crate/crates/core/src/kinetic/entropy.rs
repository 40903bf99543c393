//! Entropies `Φ: S¹ → ℝ²` with `Φ′(θ) = α(θ)·i e^{iθ}` and their productions.

use num_complex::Complex64;

use crate::besov::lp_norm;
use crate::error::{Error, Result};
use crate::grid::{divergence, Domain, ScalarField, UnitVectorField, Vec2, VectorField};
use crate::io::{fmt_num, Csv};
use crate::mollify::{cone_kernel, convolve};

/// One Fourier mode `a cos kθ + b sin kθ` of the generator `α`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mode {
    pub k: u32,
    pub cos: f64,
    pub sin: f64,
}

/// An entropy given by a trigonometric generator without the `k = 1` mode.
#[derive(Clone, Debug, PartialEq)]
pub struct Entropy {
    id: String,
    modes: Vec<Mode>,
}

fn c(v: Complex64) -> Vec2 {
    Vec2::new(v.re, v.im)
}

impl Entropy {
    pub fn from_generator(id: impl Into<String>, modes: &[Mode]) -> Result<Self> {
        for m in modes {
            if m.k == 1 {
                return Err(Error::config(
                    "non-periodic entropy: the generator may not contain the k = 1 mode",
                ));
            }
            if !(m.cos.is_finite() && m.sin.is_finite()) {
                return Err(Error::config("generator coefficients must be finite"));
            }
        }
        Ok(Entropy {
            id: id.into(),
            modes: modes.to_vec(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    /// Generator `α(θ)`.
    pub fn generator(&self, theta: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                let k = m.k as f64;
                m.cos * (k * theta).cos() + m.sin * (k * theta).sin()
            })
            .sum()
    }

    /// `Φ(θ)`, using the antiderivatives of `i e^{iθ} e^{±ikθ}` term by term.
    pub fn eval(&self, theta: f64) -> Vec2 {
        let mut acc = Complex64::new(0.0, 0.0);
        for m in &self.modes {
            let k = m.k as f64;
            let up = Complex64::from_polar(1.0 / (k + 1.0), (k + 1.0) * theta);
            let down = Complex64::from_polar(1.0 / (1.0 - k), (1.0 - k) * theta);
            acc += (up + down) * (0.5 * m.cos);
            if m.k != 0 {
                acc += (up - down) * Complex64::new(0.0, -0.5 * m.sin);
            }
        }
        c(acc)
    }

    /// `dΦ/dθ`, from differentiating the closed form of [`Entropy::eval`].
    pub fn derivative(&self, theta: f64) -> Vec2 {
        let i = Complex64::new(0.0, 1.0);
        let mut acc = Complex64::new(0.0, 0.0);
        for m in &self.modes {
            let k = m.k as f64;
            let up = i * Complex64::from_polar(1.0, (k + 1.0) * theta);
            let down = i * Complex64::from_polar(1.0, (1.0 - k) * theta);
            acc += (up + down) * (0.5 * m.cos);
            if m.k != 0 {
                acc += (up - down) * Complex64::new(0.0, -0.5 * m.sin);
            }
        }
        c(acc)
    }

    /// `Φ(m)` for a unit vector.
    pub fn apply(&self, m: Vec2) -> Vec2 {
        self.eval(m.angle())
    }
}

/// The default battery: `α ∈ {1} ∪ {cos kθ, sin kθ : 2 ≤ k ≤ max_mode}`.
pub fn default_basis(max_mode: u32) -> Vec<Entropy> {
    let mut out = vec![Entropy {
        id: "one".into(),
        modes: vec![Mode { k: 0, cos: 1.0, sin: 0.0 }],
    }];
    for k in 2..=max_mode {
        out.push(Entropy {
            id: format!("cos{k}"),
            modes: vec![Mode { k, cos: 1.0, sin: 0.0 }],
        });
        out.push(Entropy {
            id: format!("sin{k}"),
            modes: vec![Mode { k, cos: 0.0, sin: 1.0 }],
        });
    }
    out
}

/// `div(Φ(m) ∗ ρ_ε)` by centered differences.
pub fn entropy_production(m: &UnitVectorField, phi: &Entropy, epsilon_test: f64) -> Result<ScalarField> {
    let composite: VectorField = m.map(|v| phi.apply(v));
    let smooth = convolve(&composite, &cone_kernel(epsilon_test)?)?;
    Ok(divergence(&smooth))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProductionRow {
    pub entropy_id: String,
    pub l1: f64,
    pub l2: f64,
}

#[derive(Clone, Debug)]
pub struct ProductionReport {
    pub epsilon_test: f64,
    pub rows: Vec<ProductionRow>,
}

impl ProductionReport {
    pub fn total_l1(&self) -> f64 {
        self.rows.iter().map(|r| r.l1).sum()
    }

    pub fn max_l1(&self) -> f64 {
        self.rows.iter().map(|r| r.l1).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> Csv {
        let mut csv = Csv::new(&["entropy_id", "l1_production", "l2_production"]);
        for r in &self.rows {
            csv.row(&[r.entropy_id.clone(), fmt_num(r.l1), fmt_num(r.l2)]);
        }
        csv
    }
}

/// L¹ and L² norms of the production of every entropy in `basis`, over
/// `region` (the whole valid set when `None`).
pub fn production_battery(
    m: &UnitVectorField,
    basis: &[Entropy],
    epsilon_test: f64,
    region: Option<&Domain>,
) -> Result<ProductionReport> {
    let mut rows = Vec::with_capacity(basis.len());
    for phi in basis {
        let prod = entropy_production(m, phi, epsilon_test)?;
        rows.push(ProductionRow {
            entropy_id: phi.id().to_string(),
            l1: lp_norm(&prod, 1.0, region)?,
            l2: lp_norm(&prod, 2.0, region)?,
        });
    }
    Ok(ProductionReport { epsilon_test, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn angles() -> impl Iterator<Item = f64> {
        (0..64).map(|k| 2.0 * PI * k as f64 / 64.0 + 0.1)
    }

    #[test]
    fn ent_identity_for_basis() {
        for phi in default_basis(6) {
            for t in angles() {
                let d = phi.derivative(t);
                assert!(d.dot(Vec2::from_angle(t)).abs() < 1e-12, "{} at {t}", phi.id());
            }
        }
    }

    #[test]
    fn derivative_matches_generator() {
        // Φ′(θ) = α(θ)·i e^{iθ}
        for phi in default_basis(6) {
            for t in angles() {
                let expect = Vec2::from_angle(t).rot90() * phi.generator(t);
                assert!((phi.derivative(t) - expect).norm() < 1e-12);
                let fd = (phi.eval(t + 1e-6) - phi.eval(t - 1e-6)) * (0.5e6);
                assert!((fd - expect).norm() < 1e-7);
            }
        }
    }

    #[test]
    fn periodic() {
        for phi in default_basis(6) {
            assert!((phi.eval(0.3) - phi.eval(0.3 + 2.0 * PI)).norm() < 1e-12);
        }
    }

    #[test]
    fn unit_generator_is_identity() {
        let phi = &default_basis(2)[0];
        for t in angles() {
            assert!((phi.eval(t) - Vec2::from_angle(t)).norm() < 1e-15);
        }
    }

    #[test]
    fn mode_one_rejected() {
        let err = Entropy::from_generator("bad", &[Mode { k: 1, cos: 1.0, sin: 0.0 }]).unwrap_err();
        assert!(err.to_string().contains("non-periodic"));
        let zero = Entropy::from_generator("zero", &[]).unwrap();
        assert_eq!(zero.eval(1.0), Vec2::ZERO);
    }

    #[test]
    fn basis_size() {
        assert_eq!(default_basis(6).len(), 11);
    }
}
