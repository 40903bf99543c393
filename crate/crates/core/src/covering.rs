//! Oscillation sets, greedy disjoint-ball selection and degenerate points.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fit::loglog_slope;
use crate::grid::{Domain, Field, ScalarField, UnitVectorField, Vec2, VectorField};
use crate::io::{fmt_num, Csv};
use crate::mollify::{cone_kernel, mollify};

/// Default oscillation threshold `2^{−q}`.
pub fn default_alpha(q: f64) -> f64 {
    2f64.powf(-q)
}

/// `⨍_{B_ε}⨍_{B_ε}|m(x+y) − m(x+z)|^q dy dz` over the lattice points of the
/// closed ε-ball. Nodes whose ball is not fully masked in are masked out.
pub fn local_oscillation(m: &VectorField, epsilon: f64, q: f64) -> Result<ScalarField> {
    local_oscillation_where(m, epsilon, q, |_| true)
}

/// As [`local_oscillation`], evaluated only at nodes where `keep` holds.
pub fn local_oscillation_where(
    m: &VectorField,
    epsilon: f64,
    q: f64,
    keep: impl Fn(Vec2) -> bool + Sync,
) -> Result<ScalarField> {
    let grid = *m.grid();
    if epsilon < 2.0 * grid.dx() * (1.0 - 1e-12) {
        return Err(Error::resolution(format!(
            "ε = {epsilon} is below 2·dx = {}",
            2.0 * grid.dx()
        )));
    }
    if !(q >= 1.0) {
        return Err(Error::config(format!("q must be at least 1, got {q}")));
    }
    let offsets = grid.disk_offsets(epsilon, true);
    let pairs = if q.fract() == 0.0 && q as i64 % 2 == 0 && q <= 16.0 {
        even_power_oscillation(m, &offsets, q as u32 / 2, &keep)
    } else {
        pairwise_oscillation(m, &offsets, q, &keep)
    };
    let (values, mask) = pairs.into_iter().unzip();
    ScalarField::from_parts(grid, values, mask)
}

/// Direct double sum, with equal values grouped so that piecewise constant
/// balls cost little.
fn pairwise_oscillation(
    m: &VectorField,
    offsets: &[(isize, isize)],
    q: f64,
    keep: &(impl Fn(Vec2) -> bool + Sync),
) -> Vec<(f64, bool)> {
    let grid = *m.grid();
    let n = offsets.len() as f64;
    let integer_q = (q.fract() == 0.0 && q <= 16.0).then_some(q as i32);
    let pow = |d: f64| match integer_q {
        Some(p) => d.powi(p),
        None => d.powf(q),
    };
    (0..grid.len())
        .into_par_iter()
        .map_init(Vec::new, |ball: &mut Vec<(Vec2, f64)>, k| {
            if !keep(grid.node_at(k)) {
                return (0.0, false);
            }
            let (i, j) = grid.ij(k);
            ball.clear();
            for &(di, dj) in offsets {
                let Some(v) = grid.offset(i, j, di, dj).and_then(|q| m.get(q)) else {
                    return (0.0, false);
                };
                match ball.iter_mut().find(|(w, _)| *w == v) {
                    Some(slot) => slot.1 += 1.0,
                    None => ball.push((v, 1.0)),
                }
            }
            let mut acc = 0.0;
            for (a, (va, ca)) in ball.iter().enumerate() {
                for (vb, cb) in &ball[a + 1..] {
                    acc += ca * cb * pow((*va - *vb).norm());
                }
            }
            (2.0 * acc / (n * n), true)
        })
        .collect()
}

/// Coefficients of `((a₁−b₁)² + (a₂−b₂)²)^k` as
/// `(a₁ power, a₂ power, b₁ power, b₂ power, coefficient)`.
fn difference_power_terms(k: u32) -> Vec<([usize; 4], f64)> {
    let square = |i: usize, j: usize| -> Vec<([usize; 4], f64)> {
        // (x − y)² with x the i-th and y the j-th variable
        let mut xx = [0; 4];
        xx[i] = 2;
        let mut yy = [0; 4];
        yy[j] = 2;
        let mut xy = [0; 4];
        xy[i] = 1;
        xy[j] = 1;
        vec![(xx, 1.0), (yy, 1.0), (xy, -2.0)]
    };
    let mut base = square(0, 2);
    base.extend(square(1, 3));
    let mut poly: Vec<([usize; 4], f64)> = vec![([0; 4], 1.0)];
    for _ in 0..k {
        let mut next: Vec<([usize; 4], f64)> = Vec::new();
        for (e, c) in &poly {
            for (f, d) in &base {
                let g = [e[0] + f[0], e[1] + f[1], e[2] + f[2], e[3] + f[3]];
                match next.iter_mut().find(|(h, _)| *h == g) {
                    Some(slot) => slot.1 += c * d,
                    None => next.push((g, c * d)),
                }
            }
        }
        poly = next;
    }
    poly.retain(|(_, c)| *c != 0.0);
    poly
}

/// Exact expansion for `q = 2k`: the double average factorizes into ball
/// means of the monomials `m₁^a m₂^b`, which are box-summed row by row.
fn even_power_oscillation(
    m: &VectorField,
    offsets: &[(isize, isize)],
    k: u32,
    keep: &(impl Fn(Vec2) -> bool + Sync),
) -> Vec<(f64, bool)> {
    let grid = *m.grid();
    let (nx, ny) = (grid.nx(), grid.ny());
    let deg = 2 * k as usize;
    let monomials: Vec<(usize, usize)> = (0..=deg)
        .flat_map(|a| (0..=deg - a).map(move |b| (a, b)))
        .collect();
    let slot = |a: usize, b: usize| monomials.iter().position(|&m| m == (a, b)).unwrap();
    let terms: Vec<(usize, usize, f64)> = difference_power_terms(k)
        .into_iter()
        .map(|(e, c)| (slot(e[0], e[1]), slot(e[2], e[3]), c))
        .collect();
    // Row spans of the ball: for each dj the range of di.
    let mut spans: Vec<(isize, isize, isize)> = Vec::new();
    for &(di, dj) in offsets {
        match spans.iter_mut().find(|s| s.0 == dj) {
            Some(s) => {
                s.1 = s.1.min(di);
                s.2 = s.2.max(di);
            }
            None => spans.push((dj, di, di)),
        }
    }
    let n = offsets.len() as f64;
    // Per-row prefix sums of each monomial and of the invalid indicator.
    let nm = monomials.len();
    let prefix: Vec<Vec<f64>> = (0..ny)
        .into_par_iter()
        .map(|j| {
            let mut row = vec![0.0; (nx + 1) * (nm + 1)];
            for i in 0..nx {
                let (cur, next) = row.split_at_mut((i + 1) * (nm + 1));
                let prev = &cur[i * (nm + 1)..];
                let dst = &mut next[..nm + 1];
                dst.copy_from_slice(prev);
                match m.at(i, j) {
                    Some(v) => {
                        for (s, &(a, b)) in monomials.iter().enumerate() {
                            dst[s] += v.x.powi(a as i32) * v.y.powi(b as i32);
                        }
                    }
                    None => dst[nm] += 1.0,
                }
            }
            row
        })
        .collect();
    (0..grid.len())
        .into_par_iter()
        .map_init(
            || vec![0.0; nm + 1],
            |sums: &mut Vec<f64>, q| {
                if !keep(grid.node_at(q)) {
                    return (0.0, false);
                }
                let (i, j) = grid.ij(q);
                sums.iter_mut().for_each(|s| *s = 0.0);
                for &(dj, lo, hi) in &spans {
                    let jj = j as isize + dj;
                    let (a, b) = (i as isize + lo, i as isize + hi);
                    if jj < 0 || jj >= ny as isize || a < 0 || b >= nx as isize {
                        return (0.0, false);
                    }
                    let row = &prefix[jj as usize];
                    let (a, b) = (a as usize * (nm + 1), (b as usize + 1) * (nm + 1));
                    for s in 0..=nm {
                        sums[s] += row[b + s] - row[a + s];
                    }
                }
                if sums[nm] > 0.0 {
                    return (0.0, false);
                }
                let v: f64 = terms.iter().map(|&(x, y, c)| c * sums[x] * sums[y]).sum::<f64>() / (n * n);
                (v.max(0.0), true)
            },
        )
        .collect()
}

/// Nodes (inside `region`) whose oscillation exceeds `alpha`.
pub fn bad_set(
    m: &VectorField,
    epsilon: f64,
    q: f64,
    alpha: f64,
    region: Option<&Domain>,
) -> Result<Field<bool>> {
    if !(alpha > 0.0) {
        return Err(Error::config(format!("α must be positive, got {alpha}")));
    }
    let osc = local_oscillation_where(m, epsilon, q, |x| region.map_or(true, |d| d.contains(x)))?;
    let grid = *m.grid();
    let values: Vec<bool> = (0..grid.len())
        .map(|k| {
            osc.get(k).is_some_and(|v| v > alpha)
                && region.map_or(true, |d| d.contains(grid.node_at(k)))
        })
        .collect();
    Field::from_parts(grid, values, osc.mask().to_vec())
}

#[derive(Clone, Debug)]
pub struct CoveringResult {
    pub epsilon: f64,
    pub alpha: f64,
    pub q: f64,
    pub centers: Vec<Vec2>,
    /// Fraction of valid nodes that are bad.
    pub bad_fraction: f64,
    /// Filled in by [`modulus_floor`].
    pub modulus_floor_ok: Option<bool>,
}

impl CoveringResult {
    pub fn count(&self) -> usize {
        self.centers.len()
    }

    /// Whether `x` lies in one of the enlarged balls `B_{5ε}(center)`.
    pub fn covers(&self, x: Vec2) -> bool {
        self.centers.iter().any(|c| (x - *c).norm() < 5.0 * self.epsilon)
    }
}

struct SpatialHash {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<Vec2>>,
}

impl SpatialHash {
    fn new(cell: f64) -> Self {
        SpatialHash {
            cell,
            buckets: HashMap::new(),
        }
    }

    fn key(&self, p: Vec2) -> (i64, i64) {
        ((p.x / self.cell).floor() as i64, (p.y / self.cell).floor() as i64)
    }

    fn insert(&mut self, p: Vec2) {
        self.buckets.entry(self.key(p)).or_default().push(p);
    }

    /// Whether some stored point lies within `radius ≤ cell` of `p`.
    fn any_within(&self, p: Vec2, radius: f64) -> bool {
        let (a, b) = self.key(p);
        for da in -1..=1 {
            for db in -1..=1 {
                if let Some(v) = self.buckets.get(&(a + da, b + db)) {
                    if v.iter().any(|c| (p - *c).norm() <= radius) {
                        return true;
                    }
                }
            }
        }
        false
    }
}

/// Greedy row-major selection of bad nodes with pairwise disjoint ε-balls.
pub fn vitali_select(bad: &Field<bool>, epsilon: f64, alpha: f64, q: f64) -> Result<CoveringResult> {
    let grid = *bad.grid();
    let mut hash = SpatialHash::new(2.0 * epsilon);
    let mut centers = Vec::new();
    let mut n_bad = 0usize;
    for k in 0..grid.len() {
        if bad.get(k) != Some(true) {
            continue;
        }
        n_bad += 1;
        let x = grid.node_at(k);
        if !hash.any_within(x, 2.0 * epsilon) {
            hash.insert(x);
            centers.push(x);
        }
    }
    // Invariants: disjoint ε-balls and a 5ε-cover of the bad set.
    let mut check = SpatialHash::new(2.0 * epsilon);
    for &c in &centers {
        if check.any_within(c, 2.0 * epsilon) {
            return Err(Error::numerical("selected balls are not pairwise disjoint"));
        }
        check.insert(c);
    }
    for k in 0..grid.len() {
        if bad.get(k) == Some(true) && !check.any_within(grid.node_at(k), 2.0 * epsilon) {
            return Err(Error::numerical("bad node left outside the enlarged balls"));
        }
    }
    let valid = bad.count_valid().max(1);
    Ok(CoveringResult {
        epsilon,
        alpha,
        q,
        centers,
        bad_fraction: n_bad as f64 / valid as f64,
        modulus_floor_ok: None,
    })
}

/// `|m_ε| ≥ 1/2` at every valid node of `region` outside the `5ε`-balls.
pub fn modulus_floor(
    m: &UnitVectorField,
    covering: &mut CoveringResult,
    region: Option<&Domain>,
) -> Result<bool> {
    let m_eps = mollify(m, &cone_kernel(covering.epsilon)?)?;
    let grid = *m.grid();
    let modulus = m_eps.modulus();
    let ok = (0..grid.len()).into_par_iter().all(|k| {
        let x = grid.node_at(k);
        match modulus.get(k) {
            Some(a) if region.map_or(true, |d| d.contains(x)) && !covering.covers(x) => a >= 0.5,
            _ => true,
        }
    });
    covering.modulus_floor_ok = Some(ok);
    Ok(ok)
}

#[derive(Clone, Debug)]
pub struct ScalingReport {
    pub q: f64,
    pub s: f64,
    pub rows: Vec<CoveringResult>,
    /// Log-log slope of the count against ε over nonzero counts.
    pub fitted_slope: Option<f64>,
    /// `s·q − 2`.
    pub expected_slope: f64,
    /// Set when some counts were zero and left out of the fit.
    pub zero_counts: bool,
}

impl ScalingReport {
    pub fn to_csv(&self) -> Csv {
        let mut csv = Csv::new(&["epsilon", "alpha", "q", "count", "bad_fraction", "modulus_floor_ok"]);
        for r in &self.rows {
            csv.row(&[
                fmt_num(r.epsilon),
                fmt_num(r.alpha),
                fmt_num(r.q),
                r.count().to_string(),
                fmt_num(r.bad_fraction),
                match r.modulus_floor_ok {
                    Some(true) => "true".into(),
                    Some(false) => "false".into(),
                    None => "na".into(),
                },
            ]);
        }
        csv
    }
}

/// Counts of selected centers for each ε, fitted against `ε^{sq−2}`.
pub fn covering_scaling(
    m: &UnitVectorField,
    q: f64,
    s: f64,
    eps_list: &[f64],
    alpha: f64,
    region: Option<&Domain>,
) -> Result<ScalingReport> {
    if eps_list.len() < 3 {
        return Err(Error::config("covering scaling needs at least three values of ε"));
    }
    let (lo, hi) = eps_list
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &e| (a.min(e), b.max(e)));
    if hi < 4.0 * lo * (1.0 - 1e-9) {
        return Err(Error::config("ε list must span at least two dyadic steps"));
    }
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let bad = bad_set(m, eps, q, alpha, region)?;
        let mut cov = vitali_select(&bad, eps, alpha, q)?;
        modulus_floor(m, &mut cov, region)?;
        rows.push(cov);
    }
    let eps: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
    let counts: Vec<f64> = rows.iter().map(|r| r.count() as f64).collect();
    let nonzero = counts.iter().filter(|&&c| c > 0.0).count();
    let fitted_slope = if nonzero >= 2 {
        Some(loglog_slope(&eps, &counts)?.slope)
    } else {
        None
    };
    Ok(ScalingReport {
        q,
        s,
        rows,
        fitted_slope,
        expected_slope: s * q - 2.0,
        zero_counts: nonzero < counts.len(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    pub centroid: Vec2,
    pub size: usize,
}

#[derive(Clone, Debug)]
pub struct DegenerateReport {
    pub points: Vec<Vec2>,
    pub clusters: Vec<Cluster>,
}

/// Threshold on `max_ε inf_{B_r}|m_ε|` below which a node is flagged.
pub const DEGENERATE_THRESHOLD: f64 = 0.25;

/// Nodes where `max_ε inf_{B_r(x)} |m_ε| < 1/4`, grouped into 8-connected clusters.
pub fn degenerate_points(m: &UnitVectorField, eps_list: &[f64], r: f64) -> Result<DegenerateReport> {
    if eps_list.len() < 3 {
        return Err(Error::config("degenerate point detection needs at least three values of ε"));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::config("ε list must be strictly decreasing"));
    }
    let grid = *m.grid();
    let offsets = grid.disk_offsets(r, true);
    let mut best: Vec<Option<f64>> = vec![Some(f64::NEG_INFINITY); grid.len()];
    for &eps in eps_list {
        let modulus = mollify(m, &cone_kernel(eps)?)?.modulus();
        let inf: Vec<Option<f64>> = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                modulus.get(k)?;
                let (i, j) = grid.ij(k);
                let mut lo = f64::INFINITY;
                for &(di, dj) in &offsets {
                    if let Some(v) = grid.offset(i, j, di, dj).and_then(|q| modulus.get(q)) {
                        lo = lo.min(v);
                    }
                }
                Some(lo)
            })
            .collect();
        for (b, v) in best.iter_mut().zip(inf) {
            *b = match (*b, v) {
                (Some(a), Some(v)) => Some(a.max(v)),
                _ => None,
            };
        }
    }
    let flagged: Vec<bool> = best
        .iter()
        .map(|b| b.is_some_and(|v| v < DEGENERATE_THRESHOLD))
        .collect();
    let points: Vec<Vec2> = (0..grid.len())
        .filter(|&k| flagged[k])
        .map(|k| grid.node_at(k))
        .collect();

    let mut seen = vec![false; grid.len()];
    let mut clusters = Vec::new();
    for start in 0..grid.len() {
        if !flagged[start] || seen[start] {
            continue;
        }
        let mut stack = vec![start];
        seen[start] = true;
        let mut sum = Vec2::ZERO;
        let mut size = 0;
        while let Some(k) = stack.pop() {
            sum += grid.node_at(k);
            size += 1;
            let (i, j) = grid.ij(k);
            for dj in -1..=1 {
                for di in -1..=1 {
                    if let Some(q) = grid.offset(i, j, di, dj) {
                        if flagged[q] && !seen[q] {
                            seen[q] = true;
                            stack.push(q);
                        }
                    }
                }
            }
        }
        clusters.push(Cluster {
            centroid: sum * (1.0 / size as f64),
            size,
        });
    }
    Ok(DegenerateReport { points, clusters })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moment_expansion_matches_direct_sum() {
        let g = Grid2::new(41, 41, Vec2::new(-1.0, -1.0), 0.05).unwrap();
        let v = crate::solutions::vortex_field_at(g, Vec2::new(0.013, -0.021));
        let offsets = g.disk_offsets(0.15, true);
        let all = |_: Vec2| true;
        for k in [1u32, 2, 3] {
            let fast = even_power_oscillation(&v, &offsets, k, &all);
            let slow = pairwise_oscillation(&v, &offsets, 2.0 * k as f64, &all);
            for (a, b) in fast.iter().zip(&slow) {
                assert_eq!(a.1, b.1);
                assert!((a.0 - b.0).abs() < 1e-11, "{} vs {}", a.0, b.0);
            }
        }
    }
    use crate::grid::{make_grid, Grid2};
    use crate::solutions::{constant_field, jump_field, JumpSpec};

    fn square(n: usize) -> Grid2 {
        make_grid(&Domain::rectangle(Vec2::new(-1.0, -1.0), Vec2::new(2.0, 2.0)).unwrap(), n, 0.0)
            .unwrap()
    }

    #[test]
    fn oscillation_of_constant_and_jump() {
        let g = square(161);
        let c = constant_field(g, Vec2::new(0.6, 0.8)).unwrap();
        assert_eq!(local_oscillation(&c, 0.05, 3.0).unwrap().max_magnitude(), 0.0);
        let j = jump_field(g, &JumpSpec::standard());
        let osc = local_oscillation(&j, 0.1, 3.0).unwrap();
        let at = |x: f64| {
            let (i, k) = g.nearest(Vec2::new(x, 0.0)).unwrap();
            osc.at(i, k).unwrap()
        };
        let on_line = 0.5 * 3.0 * 3f64.sqrt();
        assert!((at(0.0) - on_line).abs() < 0.02 * on_line, "{}", at(0.0));
        assert_eq!(at(0.25), 0.0);
        assert_eq!(at(-0.25), 0.0);
    }

    fn bool_field(g: Grid2, pts: &[Vec2]) -> Field<bool> {
        let mut v = vec![false; g.len()];
        for p in pts {
            let (i, j) = g.nearest(*p).unwrap();
            v[g.index(i, j)] = true;
        }
        Field::from_parts(g, v, vec![true; g.len()]).unwrap()
    }

    #[test]
    fn greedy_selection_examples() {
        let g = square(201);
        let eps = 0.1;
        let one = vitali_select(&bool_field(g, &[Vec2::ZERO]), eps, 0.1, 3.0).unwrap();
        assert_eq!(one.count(), 1);
        let far = vitali_select(&bool_field(g, &[Vec2::ZERO, Vec2::new(0.3, 0.0)]), eps, 0.1, 3.0).unwrap();
        assert_eq!(far.count(), 2);
        let near = vitali_select(&bool_field(g, &[Vec2::ZERO, Vec2::new(0.15, 0.0)]), eps, 0.1, 3.0).unwrap();
        assert_eq!(near.count(), 1);
        assert!(near.covers(Vec2::new(0.15, 0.0)));
    }

    #[test]
    fn constant_has_no_bad_set() {
        let g = square(81);
        let c = constant_field(g, Vec2::E2).unwrap();
        let bad = bad_set(&c, 0.05, 3.0, 0.01, None).unwrap();
        let mut cov = vitali_select(&bad, 0.05, 0.01, 3.0).unwrap();
        assert_eq!(cov.count(), 0);
        assert!(modulus_floor(&c, &mut cov, None).unwrap());
        let d = degenerate_points(&c, &[0.2, 0.1, 0.05], 0.1).unwrap();
        assert!(d.points.is_empty());
    }

    #[test]
    fn degenerate_list_validation() {
        let g = square(41);
        let c = constant_field(g, Vec2::E2).unwrap();
        assert!(degenerate_points(&c, &[0.1, 0.2, 0.3], 0.1).is_err());
        assert!(degenerate_points(&c, &[0.2, 0.1], 0.1).is_err());
    }
}
