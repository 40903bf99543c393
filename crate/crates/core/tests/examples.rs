//! Worked examples checked against closed forms and independent quadrature.

use eikonal_lab::besov::{finite_difference, lp_integral, Shift};
use eikonal_lab::flow::{maximal_curve_endpoints, trace_mollified, Direction, StopReason, TraceOptions};
use eikonal_lab::grid::make_grid;
use eikonal_lab::mollify::{cone_kernel, mollify};
use eikonal_lab::solutions::{jump_field, vortex_field, JumpSpec};
use eikonal_lab::{Domain, Grid2, Vec2};

fn square(n: usize) -> Grid2 {
    make_grid(&Domain::rectangle(Vec2::new(-1.0, -1.0), Vec2::new(2.0, 2.0)).unwrap(), n, 0.0).unwrap()
}

fn vortex(x: Vec2) -> Vec2 {
    Vec2::new(-x.y, x.x) * (1.0 / x.norm())
}

/// `∫_{r0<|x|<r1} |m(x+h) − m(x)|^p` by a polar midpoint rule on the exact field.
fn polar_oracle(h: Vec2, p: f64, r0: f64, r1: f64) -> f64 {
    let (nr, nt) = (2000, 2000);
    let dr = (r1 - r0) / nr as f64;
    let dt = std::f64::consts::TAU / nt as f64;
    let mut acc = 0.0;
    for i in 0..nr {
        let r = r0 + (i as f64 + 0.5) * dr;
        for j in 0..nt {
            let x = Vec2::from_angle((j as f64 + 0.5) * dt) * r;
            acc += (vortex(x + h) - vortex(x)).norm().powf(p) * r * dr * dt;
        }
    }
    acc
}

/// Masked trapezoid weights cut the curved annulus boundary to first order,
/// so the gap to the oracle must be `O(dx)` and halve with the grid step.
#[test]
fn vortex_difference_integral_matches_polar_quadrature() {
    let region = Domain::annulus(Vec2::ZERO, 0.25, 0.75).unwrap();
    for p in [2.0, 3.0, 6.0] {
        let h = Vec2::new(0.025, 0.0);
        let oracle = polar_oracle(h, p, 0.25, 0.75);
        let errs: Vec<f64> = [401, 801]
            .iter()
            .map(|&n| {
                let m = vortex_field(square(n));
                let d = finite_difference(m.as_field(), Shift::new(h).unwrap()).unwrap();
                (lp_integral(&d, p, Some(&region)).unwrap() - oracle).abs() / oracle
            })
            .collect();
        assert!(errs[0] < 8.0 * 0.005, "p = {p}: relative error {errs:?}");
        let ratio = errs[0] / errs[1];
        assert!((1.4..2.6).contains(&ratio), "p = {p}: refinement ratio {ratio}");
    }
}

#[test]
fn jump_curve_on_the_interface_stops_at_once() {
    let g = square(161);
    let m = jump_field(g, &JumpSpec::standard());
    let m_eps = mollify(&m, &cone_kernel(0.1).unwrap()).unwrap();
    let opts = TraceOptions {
        c0: 0.6,
        max_t: 1.0,
        dt: 0.01,
        direction: Direction::Forward,
    };
    let c = trace_mollified(&m_eps, Vec2::new(0.0, 0.1), &opts).unwrap();
    assert_eq!(c.stop, StopReason::ModulusBelowC0);
    assert_eq!(c.samples.len(), 1);
}

#[test]
fn vortex_maximal_curve_is_a_radial_segment() {
    let g = square(201);
    // ∇u = i·m = −x/|x| for the vortex
    let grad = vortex_field(g).as_field().rotated();
    let center = Vec2::new(0.75, 0.0);
    let mc = maximal_curve_endpoints(&grad, center, 0.2, 0.5, 0.005).unwrap();
    assert!(mc.x.distance(Vec2::new(0.95, 0.0)) < 1e-3, "{:?}", mc.x);
    assert!(mc.y.distance(Vec2::new(0.55, 0.0)) < 1e-3, "{:?}", mc.y);
    assert!((mc.increase - 0.4).abs() < 1e-3);
    assert!((mc.duration - 0.4).abs() < 1e-3);
}

