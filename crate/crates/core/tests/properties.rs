use eikonal_lab::besov::{finite_difference, Shift};
use eikonal_lab::covering::local_oscillation;
use eikonal_lab::flow::{trace_mollified, Direction, TraceOptions};
use eikonal_lab::grid::make_grid;
use eikonal_lab::kinetic::{kinetic_density, AngularGrid};
use eikonal_lab::mollify::{cone_kernel, mollify};
use eikonal_lab::solutions::{constant_field, jump_field, vortex_field_at, JumpSpec};
use eikonal_lab::{Domain, Grid2, Vec2};
use proptest::prelude::*;

fn square(n: usize) -> Grid2 {
    make_grid(&Domain::rectangle(Vec2::new(-1.0, -1.0), Vec2::new(2.0, 2.0)).unwrap(), n, 0.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mollified_fields_stay_in_the_unit_disk(cx in -0.8f64..0.8, cy in -0.8f64..0.8, eps in 0.08f64..0.3) {
        let m = vortex_field_at(square(65), Vec2::new(cx, cy));
        let m_eps = mollify(&m, &cone_kernel(eps).unwrap()).unwrap();
        for v in m_eps.field.values().iter().zip(m_eps.field.mask()).filter(|(_, &k)| k).map(|(v, _)| v) {
            prop_assert!(v.norm() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn constant_fields_have_no_differences_or_oscillation(theta in 0.0f64..std::f64::consts::TAU, i in 1isize..6, j in -5isize..6) {
        let g = square(41);
        let m = constant_field(g, Vec2::from_angle(theta)).unwrap();
        let h = Vec2::new(i as f64, j as f64) * g.dx();
        let d = finite_difference(m.as_field(), Shift::new(h).unwrap()).unwrap();
        prop_assert!(d.values().iter().all(|v| v.norm() == 0.0));
        let osc = local_oscillation(m.as_field(), 0.1, 3.0).unwrap();
        prop_assert!(osc.values().iter().all(|&v| v.abs() < 1e-14));
    }

    #[test]
    fn oscillation_is_nonnegative(q in 1.0f64..7.0, shift in -0.3f64..0.3) {
        let g = square(41);
        let jump = jump_field(g, &JumpSpec::standard());
        let vortex = vortex_field_at(g, Vec2::new(shift, 0.2));
        for m in [jump.as_field(), vortex.as_field()] {
            let osc = local_oscillation(m, 0.15, q).unwrap();
            prop_assert!(osc.values().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn angular_moment_recovers_twice_the_field(theta in 0.0f64..std::f64::consts::TAU) {
        let angular = AngularGrid::new(64).unwrap();
        let m = constant_field(square(9), Vec2::from_angle(theta)).unwrap();
        let mom = kinetic_density(&m, angular).angular_moment();
        let err = (mom.values()[0] - m.values()[0] * 2.0).norm();
        prop_assert!(err <= angular.ds() * (1.0 + angular.ds() / 12.0), "err = {}", err);
    }

    #[test]
    fn curves_are_unit_speed_bounded_and_monotone(r in 0.3f64..0.7, phi in 0.0f64..std::f64::consts::TAU) {
        let eps = 0.1;
        let m = vortex_field_at(square(97), Vec2::ZERO);
        let m_eps = mollify(&m, &cone_kernel(eps).unwrap()).unwrap();
        let opts = TraceOptions { c0: 0.5, max_t: 0.5, dt: eps / 4.0, direction: Direction::Forward };
        let c = trace_mollified(&m_eps, Vec2::from_angle(phi) * r, &opts).unwrap();
        let inv = c.invariants(0.5);
        prop_assert!(inv.speed_ok && inv.monotone_ok, "{:?}", inv);
        prop_assert!(c.polyline_length() <= c.duration() * (1.0 + 1e-6));
    }
}
