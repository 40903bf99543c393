//! Finite differences `D^h f = f(· + h) − f`, L^p norms and Besov rates.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fit::loglog_slope;
use crate::grid::{trapezoid_weights, Domain, Field, Sample, UnitVectorField, Vec2, VectorField};
use crate::io::{fmt_num, Csv};
use crate::mollify::{cone_kernel, mollify};

/// A nonzero shift vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Shift(Vec2);

impl Shift {
    pub fn new(h: Vec2) -> Result<Self> {
        if !(h.norm() > 0.0) || !h.is_finite() {
            return Err(Error::config("shift must be a finite nonzero vector"));
        }
        Ok(Shift(h))
    }

    pub fn vector(&self) -> Vec2 {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

/// `D^h f` on `Ω ∩ (Ω − h)`. Lattice shifts index directly, other shifts
/// interpolate bilinearly.
pub fn finite_difference<T: Sample>(f: &Field<T>, h: Shift) -> Result<Field<T>> {
    let grid = *f.grid();
    let lattice = grid.lattice_offset(h.vector());
    let pairs: Vec<(T, bool)> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let Some(v) = f.get(k) else {
                return (T::default(), false);
            };
            let shifted = match lattice {
                Some((di, dj)) => {
                    let (i, j) = grid.ij(k);
                    grid.offset(i, j, di, dj).and_then(|q| f.get(q))
                }
                None => f.sample(grid.node_at(k) + h.vector()),
            };
            match shifted {
                Some(w) => (w - v, true),
                None => (T::default(), false),
            }
        })
        .collect();
    let (values, mask): (Vec<T>, Vec<bool>) = pairs.into_iter().unzip();
    if !mask.iter().any(|&m| m) {
        return Err(Error::config(format!(
            "shift ({}, {}) leaves no node in the intersection of the domain with its translate",
            h.vector().x,
            h.vector().y
        )));
    }
    Field::from_parts(grid, values, mask)
}

/// `∫_region |f|^p` with trapezoid weights on the valid nodes.
pub fn lp_integral<T: Sample>(f: &Field<T>, p: f64, region: Option<&Domain>) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::config(format!("p must be at least 1, got {p}")));
    }
    let grid = f.grid();
    let mask: Vec<bool> = (0..grid.len())
        .map(|k| f.is_valid(k) && region.map_or(true, |d| d.contains(grid.node_at(k))))
        .collect();
    if !mask.iter().any(|&m| m) {
        return Err(Error::config("integration region does not meet the field's mask"));
    }
    let w = trapezoid_weights(grid, &mask);
    Ok(f.values()
        .iter()
        .zip(&w)
        .filter(|(_, &w)| w > 0.0)
        .map(|(v, w)| v.magnitude().powf(p) * w)
        .sum())
}

pub fn lp_norm<T: Sample>(f: &Field<T>, p: f64, region: Option<&Domain>) -> Result<f64> {
    Ok(lp_integral(f, p, region)?.powf(1.0 / p))
}

/// `(1/|h|)∫_region |D^h m|³`.
pub fn third_moment_rate(m: &VectorField, h: Shift, region: Option<&Domain>) -> Result<f64> {
    let d = finite_difference(m, h)?;
    Ok(lp_integral(&d, 3.0, region)? / h.norm())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BesovSample {
    pub h: Vec2,
    pub lp_norm: f64,
    /// `‖D^h m‖_p / |h|^s`
    pub rate: f64,
}

#[derive(Clone, Debug)]
pub struct BesovReport {
    pub s: f64,
    pub p: f64,
    pub samples: Vec<BesovSample>,
    /// Largest sampled rate: a lower bound for the seminorm.
    pub seminorm_estimate: f64,
    /// Log-log slope of `‖D^h m‖_p` against `|h|` over the nonzero norms;
    /// `None` when fewer than two magnitudes have a nonzero norm.
    pub fit_slope: Option<f64>,
}

impl BesovReport {
    pub fn to_csv(&self) -> Csv {
        let mut csv = Csv::new(&["hx", "hy", "h_norm", "p", "lp_norm", "rate"]);
        for s in &self.samples {
            csv.row(&[
                fmt_num(s.h.x),
                fmt_num(s.h.y),
                fmt_num(s.h.norm()),
                fmt_num(self.p),
                fmt_num(s.lp_norm),
                fmt_num(s.rate),
            ]);
        }
        csv
    }
}

fn distinct_count(mut xs: Vec<f64>, tol: f64) -> usize {
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() <= tol * b.abs().max(1.0));
    xs.len()
}

fn check_h_set(h_set: &[Vec2]) -> Result<()> {
    let mags = distinct_count(h_set.iter().map(|h| h.norm()).collect(), 1e-9);
    let dirs = distinct_count(h_set.iter().map(|h| h.angle()).collect(), 1e-9);
    if mags < 3 || dirs < 4 {
        return Err(Error::config(format!(
            "shift set spans {mags} magnitudes and {dirs} directions (need ≥ 3 and ≥ 4)"
        )));
    }
    Ok(())
}

/// Samples `‖D^h m‖_{L^p}/|h|^s` over `h_set`.
pub fn besov_seminorm<T: Sample>(
    m: &Field<T>,
    s: f64,
    p: f64,
    h_set: &[Vec2],
    region: Option<&Domain>,
) -> Result<BesovReport> {
    if !(p >= 1.0) {
        return Err(Error::config(format!("p must be at least 1, got {p}")));
    }
    check_h_set(h_set)?;
    let samples: Vec<BesovSample> = h_set
        .par_iter()
        .map(|&h| {
            let d = finite_difference(m, Shift::new(h)?)?;
            let norm = lp_norm(&d, p, region)?;
            Ok(BesovSample {
                h,
                lp_norm: norm,
                rate: norm / h.norm().powf(s),
            })
        })
        .collect::<Result<_>>()?;
    let seminorm_estimate = samples.iter().map(|s| s.rate).fold(0.0, f64::max);
    let hs: Vec<f64> = samples.iter().map(|s| s.h.norm()).collect();
    let ns: Vec<f64> = samples.iter().map(|s| s.lp_norm).collect();
    let nonzero_mags = distinct_count(
        samples.iter().filter(|s| s.lp_norm > 0.0).map(|s| s.h.norm()).collect(),
        1e-9,
    );
    let fit_slope = if nonzero_mags >= 2 {
        Some(loglog_slope(&hs, &ns)?.slope)
    } else {
        None
    };
    Ok(BesovReport {
        s,
        p,
        samples,
        seminorm_estimate,
        fit_slope,
    })
}

/// The eight lattice directions.
pub const LATTICE_DIRECTIONS: [(isize, isize); 8] =
    [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

/// Lattice shifts `2^k·base·d·dx` for the eight lattice directions `d` and
/// `k = 0..levels`.
pub fn default_h_set(dx: f64, base_cells: usize, levels: usize) -> Vec<Vec2> {
    let mut out = Vec::with_capacity(8 * levels);
    for k in 0..levels {
        let c = (base_cells << k) as f64 * dx;
        for (a, b) in LATTICE_DIRECTIONS {
            out.push(Vec2::new(a as f64 * c, b as f64 * c));
        }
    }
    out
}

/// Lattice shifts along the given directions with integer multiples
/// `cells` of `dx`.
pub fn lattice_shifts(dx: f64, directions: &[(isize, isize)], cells: &[usize]) -> Vec<Vec2> {
    let mut out = Vec::new();
    for &c in cells {
        for &(a, b) in directions {
            out.push(Vec2::new((a * c as isize) as f64 * dx, (b * c as isize) as f64 * dx));
        }
    }
    out
}

/// Lattice shifts with `|h| ≤ radius`: the eight lattice directions at
/// dyadic cell counts.
pub fn shifts_up_to(dx: f64, radius: f64) -> Vec<Vec2> {
    let mut out = Vec::new();
    let mut c = 1usize;
    loop {
        let mut any = false;
        for (a, b) in LATTICE_DIRECTIONS {
            let h = Vec2::new((a * c as isize) as f64 * dx, (b * c as isize) as f64 * dx);
            if h.norm() <= radius * (1.0 + 1e-12) {
                out.push(h);
                any = true;
            }
        }
        if !any {
            break;
        }
        c *= 2;
    }
    out
}

#[derive(Clone, Copy, Debug)]
pub struct ColumnSup {
    /// `Σ_columns max_column (1 − |m_ε|)² · dx`
    pub lhs: f64,
    /// `max_h (1/|h|)∫_{B_{2r}}|D^h m|³` over lattice `|h| ≤ ε`
    pub rhs: f64,
    pub ratio: f64,
}

/// Column-maximum defect over the window `center + (−r, r)²`, against the
/// third-moment rate on `B_{2r}(center)`.
pub fn column_sup_estimate(m: &UnitVectorField, epsilon: f64, r: f64, center: Vec2) -> Result<ColumnSup> {
    if !(epsilon > 0.0 && epsilon <= r) {
        return Err(Error::config(format!("need 0 < ε ≤ r, got ε = {epsilon}, r = {r}")));
    }
    let grid = *m.grid();
    let m_eps = mollify(m, &cone_kernel(epsilon)?)?;
    let modulus = m_eps.modulus();
    let dx = grid.dx();
    let mut lhs = 0.0;
    for i in 0..grid.nx() {
        let x1 = grid.node(i, 0).x - center.x;
        if x1.abs() >= r {
            continue;
        }
        let mut col_max = 0.0f64;
        for j in 0..grid.ny() {
            let x2 = grid.node(i, j).y - center.y;
            if x2.abs() >= r {
                continue;
            }
            match modulus.at(i, j) {
                Some(a) => col_max = col_max.max((1.0 - a).powi(2)),
                None => {
                    return Err(Error::precondition(format!(
                        "mollified field undefined in the window at node ({i}, {j})"
                    )))
                }
            }
        }
        lhs += col_max * dx;
    }
    let ball = Domain::disk(center, 2.0 * r)?;
    let shifts = shifts_up_to(dx, epsilon);
    let rates: Vec<f64> = shifts
        .par_iter()
        .map(|&h| third_moment_rate(m, Shift::new(h)?, Some(&ball)))
        .collect::<Result<_>>()?;
    let rhs = rates.into_iter().fold(0.0, f64::max);
    let ratio = if rhs > 0.0 { lhs / rhs } else if lhs == 0.0 { 0.0 } else { f64::INFINITY };
    Ok(ColumnSup { lhs, rhs, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, Grid2, ScalarField};
    use crate::solutions::{constant_field, jump_field, JumpSpec};

    fn unit_square(n: usize) -> Grid2 {
        make_grid(&Domain::rectangle(Vec2::new(-1.0, -1.0), Vec2::new(2.0, 2.0)).unwrap(), n, 0.0)
            .unwrap()
    }

    #[test]
    fn constant_norms() {
        let d = Domain::rectangle(Vec2::ZERO, Vec2::new(1.0, 1.0)).unwrap();
        let g = make_grid(&d, 21, 0.0).unwrap();
        let one = ScalarField::filled(g, 1.0);
        assert!((lp_norm(&one, 2.0, None).unwrap() - 1.0).abs() < 1e-12);
        let two = ScalarField::filled(g, 2.0);
        assert!((lp_norm(&two, 3.0, None).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(lp_norm(&two, 0.5, None), Err(Error::Config(_))));
    }

    #[test]
    fn jump_differences() {
        let g = unit_square(201);
        let m = jump_field(g, &JumpSpec::standard());
        let d = finite_difference(&*m, Shift::new(Vec2::new(0.1, 0.0)).unwrap()).unwrap();
        let (i, j) = g.nearest(Vec2::new(-0.05, 0.0)).unwrap();
        let v = d.at(i, j).unwrap();
        assert!((v - Vec2::new(0.0, 3f64.sqrt())).norm() < 1e-15);
        let d = finite_difference(&*m, Shift::new(Vec2::new(0.0, 0.1)).unwrap()).unwrap();
        assert_eq!(d.max_magnitude(), 0.0);
        let c = constant_field(g, Vec2::E1).unwrap();
        let d = finite_difference(&*c, Shift::new(Vec2::new(0.013, 0.007)).unwrap()).unwrap();
        assert!(d.max_magnitude() < 1e-15);
        assert!(finite_difference(&*c, Shift::new(Vec2::new(3.0, 0.0)).unwrap()).is_err());
        assert!(Shift::new(Vec2::ZERO).is_err());
    }

    #[test]
    fn jump_strip_integral() {
        let g = unit_square(401);
        let m = jump_field(g, &JumpSpec::standard());
        for cells in [4usize, 20, 80] {
            let h = Vec2::new(cells as f64 * g.dx(), 0.0);
            let d = finite_difference(&*m, Shift::new(h).unwrap()).unwrap();
            let got = lp_norm(&d, 3.0, None).unwrap();
            let exact = (3.0 * 3f64.sqrt() * 2.0 * h.x).powf(1.0 / 3.0);
            assert!((got - exact).abs() < 0.03 * exact, "{got} vs {exact}");
        }
    }

    #[test]
    fn h_set_validation() {
        let g = unit_square(65);
        let m = constant_field(g, Vec2::E1).unwrap();
        let few = lattice_shifts(g.dx(), &[(1, 0), (0, 1)], &[1, 2, 4]);
        assert!(matches!(besov_seminorm(&*m, 1.0 / 3.0, 3.0, &few, None), Err(Error::Config(_))));
        let r = besov_seminorm(&*m, 1.0 / 3.0, 3.0, &default_h_set(g.dx(), 1, 3), None).unwrap();
        assert_eq!(r.seminorm_estimate, 0.0);
        assert!(r.fit_slope.is_none());
        assert_eq!(r.samples.len(), 24);
    }

    #[test]
    fn shifts_up_to_radius() {
        let hs = shifts_up_to(0.01, 0.045);
        assert!(hs.iter().all(|h| h.norm() <= 0.045));
        // axis shifts 1,2,4 cells and diagonals 1,2 cells
        assert_eq!(hs.len(), 4 * 3 + 4 * 2);
    }
}
